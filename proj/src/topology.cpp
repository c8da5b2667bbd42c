#include "topocov/topology.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace topocov {

// ---------------------------------------------------------------- boxes and events

int StratifiedBox::stratum_dim(int k) const {
  if (k == 0) return 2;
  if (k <= 4) return 1;
  return 0;
}

Stratum StratifiedBox::stratum(int k) const {
  switch (k) {
    case 0: return Stratum::interior();
    case 1:
    case 2: return Stratum::edge({0.0, 1.0});
    case 3:
    case 4: return Stratum::edge({1.0, 0.0});
    default: return Stratum::corner();
  }
}

double StratifiedBox::stratum_measure(int k) const {
  if (k == 0) return rect.area();
  if (k == 1 || k == 2) return rect.height();
  if (k == 3 || k == 4) return rect.width();
  return 1.0;
}

Vec2 StratifiedBox::stratum_point(int k, double u, double v) const {
  const double w = rect.width(), h = rect.height();
  switch (k) {
    case 0: return {rect.x0 + u * w, rect.y0 + v * h};
    case 1: return {rect.x0, rect.y0 + u * h};
    case 2: return {rect.x1, rect.y0 + u * h};
    case 3: return {rect.x0 + u * w, rect.y0};
    case 4: return {rect.x0 + u * w, rect.y1};
    case 5: return {rect.x0, rect.y0};
    case 6: return {rect.x1, rect.y0};
    case 7: return {rect.x0, rect.y1};
    case 8: return {rect.x1, rect.y1};
    default: fail(ErrorKind::Validation, "stratified box: stratum index out of range");
  }
}

std::string StratifiedBox::stratum_name(int k) {
  static const char* names[kStrata] = {"interior", "left",         "right",       "bottom",     "top",
                                       "corner_ll", "corner_lr", "corner_ul", "corner_ur"};
  require(k >= 0 && k < kStrata, ErrorKind::Validation, "stratified box: stratum index out of range");
  return names[k];
}

int EventSpec::monotone() const {
  if (kind != EventKind::Crossing) return 0;
  return sign == EventSign::Geq ? 1 : -1;
}

EventSpec EventSpec::crossing(const Rect& r, Direction d, EventSign s, double level) {
  EventSpec e;
  e.kind = EventKind::Crossing;
  e.box.rect = r;
  e.box.marked = d;
  e.sign = s;
  e.level = level;
  return e;
}

EventSpec EventSpec::count_at_least(const Rect& r, int threshold, EventSign s, double level) {
  EventSpec e;
  e.kind = EventKind::CountThreshold;
  e.box.rect = r;
  e.sign = s;
  e.level = level;
  e.threshold = threshold;
  return e;
}

// ---------------------------------------------------------------- labeling

namespace {

int find(std::vector<int>& parent, int a) {
  while (parent[a] != a) {
    parent[a] = parent[parent[a]];
    a = parent[a];
  }
  return a;
}

// Union keeping the smaller index as root, so roots are canonical.
void unite(std::vector<int>& parent, int a, int b) {
  a = find(parent, a);
  b = find(parent, b);
  if (a == b) return;
  if (a < b) parent[b] = a;
  else parent[a] = b;
}

unsigned side_bits(int i, int j, int nx, int ny) {
  unsigned s = 0;
  if (i == 0) s |= kLeft;
  if (i == nx - 1) s |= kRight;
  if (j == 0) s |= kBottom;
  if (j == ny - 1) s |= kTop;
  return s;
}

void label_set(const std::vector<signed char>& in, signed char member, bool eight, int nx, int ny,
               std::vector<int>& label, std::vector<unsigned>& touch) {
  const int n = nx * ny;
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      int p = j * nx + i;
      if (in[p] != member) continue;
      if (i + 1 < nx && in[p + 1] == member) unite(parent, p, p + 1);
      if (j + 1 < ny && in[p + nx] == member) unite(parent, p, p + nx);
      if (eight && j + 1 < ny) {
        if (i + 1 < nx && in[p + nx + 1] == member) unite(parent, p, p + nx + 1);
        if (i > 0 && in[p + nx - 1] == member) unite(parent, p, p + nx - 1);
      }
    }
  label.assign(n, -1);
  touch.assign(n, 0u);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      int p = j * nx + i;
      if (in[p] != member) continue;
      int r = find(parent, p);
      label[p] = r;
      touch[r] |= side_bits(i, j, nx, ny);
    }
}

int count_roots(const std::vector<int>& label) {
  int c = 0;
  for (std::size_t p = 0; p < label.size(); ++p) c += label[p] == static_cast<int>(p);
  return c;
}

unsigned marked_sides(Direction d) { return d == Direction::LeftRight ? (kLeft | kRight) : (kBottom | kTop); }
unsigned other_sides(Direction d) { return d == Direction::LeftRight ? (kBottom | kTop) : (kLeft | kRight); }

bool any_touches(const std::vector<int>& label, const std::vector<unsigned>& touch, unsigned need) {
  for (std::size_t p = 0; p < label.size(); ++p)
    if (label[p] == static_cast<int>(p) && (touch[p] & need) == need) return true;
  return false;
}

}  // namespace

int LabeledExcursion::closed_components() const { return count_roots(closed_label); }
int LabeledExcursion::open_components() const { return count_roots(open_label); }

LabeledExcursion label_mask(std::vector<signed char> closed, int nx, int ny, bool negated) {
  require(nx > 0 && ny > 0 && static_cast<int>(closed.size()) == nx * ny, ErrorKind::Validation,
          "label_mask: mask size does not match the grid");
  LabeledExcursion e;
  e.nx = nx;
  e.ny = ny;
  e.negated = negated;
  for (auto& c : closed) c = c ? 1 : 0;
  e.closed = std::move(closed);
  label_set(e.closed, 1, true, nx, ny, e.closed_label, e.closed_touch);
  label_set(e.closed, 0, false, nx, ny, e.open_label, e.open_touch);
  return e;
}

SubGrid locate_box(const FieldSample& sample, const Rect& box) {
  const double tol = 1e-9 * std::max({1.0, std::abs(box.x1), std::abs(box.y1)});
  SubGrid g{axis_index(sample.xs, box.x0, tol), axis_index(sample.xs, box.x1, tol), axis_index(sample.ys, box.y0, tol),
            axis_index(sample.ys, box.y1, tol)};
  require(g.i0 >= 0 && g.i1 >= 0 && g.j0 >= 0 && g.j1 >= 0, ErrorKind::Validation,
          "box edges do not lie on the sample grid");
  return g;
}

LabeledExcursion label_excursion(const FieldSample& sample, const Rect& box, double level, bool negated) {
  SubGrid g = locate_box(sample, box);
  std::vector<signed char> mask(static_cast<std::size_t>(g.nx()) * g.ny());
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      double v = sample.at(g.i0 + i, g.j0 + j);
      mask[j * g.nx() + i] = negated ? (v <= level) : (v >= level);
    }
  return label_mask(std::move(mask), g.nx(), g.ny(), negated);
}

bool crossing_occurs(const LabeledExcursion& exc, const EventSpec& event) {
  require(event.kind == EventKind::Crossing, ErrorKind::Validation, "crossing_occurs: event is not a crossing");
  unsigned need = marked_sides(event.direction());
  if (exc.negated == (event.sign == EventSign::Leq)) return any_touches(exc.closed_label, exc.closed_touch, need);
  return any_touches(exc.open_label, exc.open_touch, need);
}

bool open_crossing_occurs(const LabeledExcursion& exc, Direction d) {
  return any_touches(exc.open_label, exc.open_touch, marked_sides(d));
}

int count_components(const LabeledExcursion& exc, bool open_set) {
  const auto& label = open_set ? exc.open_label : exc.closed_label;
  const auto& touch = open_set ? exc.open_touch : exc.closed_touch;
  int c = 0;
  for (std::size_t p = 0; p < label.size(); ++p)
    if (label[p] == static_cast<int>(p) && touch[p] == 0u) ++c;
  return c;
}

namespace {

bool evaluate(const LabeledExcursion& exc, const EventSpec& event) {
  if (event.kind == EventKind::Crossing) return crossing_occurs(exc, event);
  return count_components(exc) >= event.threshold;
}

}  // namespace

bool event_holds(const LabeledExcursion& exc, const EventSpec& event) {
  require(exc.negated == (event.sign == EventSign::Leq), ErrorKind::Contract,
          "event_holds: labeling orientation does not match the event sign");
  return evaluate(exc, event);
}

bool event_occurs(const FieldSample& sample, const EventSpec& event) {
  return evaluate(label_excursion(sample, event.box.rect, event.level, event.sign == EventSign::Leq), event);
}

int count_zero_sign_changes(const double* values, int n) {
  int c = 0;
  for (int i = 0; i < n; ++i) c += (values[i] >= 0.0) != (values[(i + 1) % n] >= 0.0);
  return c;
}

int count_zero_sign_changes(const FieldSample& sample) {
  require(sample.ny() == 1 || sample.nx() == 1, ErrorKind::Validation, "count_zero_sign_changes: sample is not 1D");
  return count_zero_sign_changes(sample.values.data(), static_cast<int>(sample.values.size()));
}

// ---------------------------------------------------------------- pivotal events

namespace {

std::vector<int> stencil_nodes(int nx, int ny, int mi, int mj, PivotStencil stencil) {
  std::vector<int> out;
  for (int dj = -1; dj <= 1; ++dj)
    for (int di = -1; di <= 1; ++di) {
      if (stencil == PivotStencil::Node && (di || dj)) continue;
      if (stencil == PivotStencil::Plus && di && dj) continue;
      int i = mi + di, j = mj + dj;
      if (i >= 0 && i < nx && j >= 0 && j < ny) out.push_back(j * nx + i);
    }
  return out;
}

struct PivotSetup {
  SubGrid grid;
  int mi, mj;
  std::vector<signed char> closed;  // without the stencil
  std::vector<int> stencil;
};

PivotSetup pivot_setup(const FieldSample& sample, const EventSpec& event, Vec2 x, PivotStencil stencil) {
  PivotSetup s;
  s.grid = locate_box(sample, event.box.rect);
  const MarkedJet* jet = nullptr;
  for (const auto& j : sample.jets)
    if (j.zero_constrained && std::abs(j.point.x - x.x) <= 1e-9 && std::abs(j.point.y - x.y) <= 1e-9) jet = &j;
  if (!jet) fail(ErrorKind::Contract, "pivotal test: the sample carries no zero-jet at the requested point");
  int gi = axis_index(sample.xs, x.x), gj = axis_index(sample.ys, x.y);
  if (gi < 0 || gj < 0 || std::abs(sample.at(gi, gj) - event.level) > 1e-10)
    fail(ErrorKind::Contract, "pivotal test: the constrained node is not at the event level");
  s.mi = gi - s.grid.i0;
  s.mj = gj - s.grid.j0;
  require(s.mi >= 0 && s.mi < s.grid.nx() && s.mj >= 0 && s.mj < s.grid.ny(), ErrorKind::Contract,
          "pivotal test: the constrained point lies outside the event box");
  const bool neg = event.sign == EventSign::Leq;
  s.closed.resize(static_cast<std::size_t>(s.grid.nx()) * s.grid.ny());
  for (int j = 0; j < s.grid.ny(); ++j)
    for (int i = 0; i < s.grid.nx(); ++i) {
      double v = sample.at(s.grid.i0 + i, s.grid.j0 + j);
      s.closed[j * s.grid.nx() + i] = neg ? (v <= event.level) : (v >= event.level);
    }
  s.stencil = stencil_nodes(s.grid.nx(), s.grid.ny(), s.mi, s.mj, stencil);
  return s;
}

LabeledExcursion with_stencil(const PivotSetup& s, bool in_closed, bool negated) {
  auto mask = s.closed;
  for (int p : s.stencil) mask[p] = in_closed;
  return label_mask(std::move(mask), s.grid.nx(), s.grid.ny(), negated);
}

}  // namespace

int pivotal_sign(const FieldSample& sample, const EventSpec& event, Vec2 x, PivotStencil stencil) {
  PivotSetup s = pivot_setup(sample, event, x, stencil);
  const bool neg = event.sign == EventSign::Leq;
  // Raising the field puts the stencil in {f >= level}, or out of {f <= level}.
  bool up = evaluate(with_stencil(s, !neg, neg), event);
  bool down = evaluate(with_stencil(s, neg, neg), event);
  return static_cast<int>(up) - static_cast<int>(down);
}

bool pivotal_indicator(const FieldSample& sample, const EventSpec& event, Vec2 x, const Stratum& F,
                       PivotStencil stencil) {
  (void)F;
  require(event.kind == EventKind::Crossing, ErrorKind::Unsupported,
          "four-arm pivotal test applies to crossing events only");
  PivotSetup s = pivot_setup(sample, event, x, stencil);
  const bool neg = event.sign == EventSign::Leq;
  const int centre = s.mj * s.grid.nx() + s.mi;
  LabeledExcursion both_closed = with_stencil(s, true, neg);
  LabeledExcursion both_open = with_stencil(s, false, neg);
  unsigned arms_closed = both_closed.closed_touch[both_closed.closed_label[centre]];
  unsigned arms_open = both_open.open_touch[both_open.open_label[centre]];
  unsigned need_closed = marked_sides(event.direction()), need_open = other_sides(event.direction());
  return (arms_closed & need_closed) == need_closed && (arms_open & need_open) == need_open;
}

PivotalTester::PivotalTester(const EventSpec& event, int nx, int ny, int mark_i, int mark_j, PivotStencil stencil)
    : event_(event), nx_(nx), ny_(ny) {
  require(mark_i >= 0 && mark_i < nx && mark_j >= 0 && mark_j < ny, ErrorKind::Validation,
          "pivotal tester: marked node outside the grid");
  stencil_ = stencil_nodes(nx, ny, mark_i, mark_j, stencil);
  state_.resize(static_cast<std::size_t>(nx) * ny);
  queue_.resize(state_.size());
  seen_.assign(state_.size(), 0);
}

bool PivotalTester::reaches(bool closed_set, unsigned sides) {
  ++stamp_;
  int head = 0, tail = 0;
  for (int p : stencil_) {
    seen_[p] = stamp_;
    queue_[tail++] = p;
  }
  unsigned got = 0;
  while (head < tail) {
    int p = queue_[head++];
    int i = p % nx_, j = p / nx_;
    got |= side_bits(i, j, nx_, ny_);
    if ((got & sides) == sides) return true;
    for (int dj = -1; dj <= 1; ++dj)
      for (int di = -1; di <= 1; ++di) {
        if (!di && !dj) continue;
        if (!closed_set && di && dj) continue;
        int a = i + di, b = j + dj;
        if (a < 0 || a >= nx_ || b < 0 || b >= ny_) continue;
        int q = b * nx_ + a;
        if (seen_[q] == stamp_) continue;
        signed char st = state_[q];
        if (closed_set ? st == 0 : st == 1) continue;
        seen_[q] = stamp_;
        queue_[tail++] = q;
      }
  }
  return false;
}

int PivotalTester::contained() {
  ++stamp_;
  int count = 0;
  for (int start = 0; start < nx_ * ny_; ++start) {
    if (state_[start] != 1 || seen_[start] == stamp_) continue;
    int head = 0, tail = 0;
    seen_[start] = stamp_;
    queue_[tail++] = start;
    bool touches = false;
    while (head < tail) {
      int p = queue_[head++];
      int i = p % nx_, j = p / nx_;
      if (side_bits(i, j, nx_, ny_)) touches = true;
      for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di) {
          int a = i + di, b = j + dj;
          if ((!di && !dj) || a < 0 || a >= nx_ || b < 0 || b >= ny_) continue;
          int q = b * nx_ + a;
          if (state_[q] != 1 || seen_[q] == stamp_) continue;
          seen_[q] = stamp_;
          queue_[tail++] = q;
        }
    }
    count += !touches;
  }
  return count;
}

int PivotalTester::sign(const double* values) {
  const bool neg = event_.sign == EventSign::Leq;
  const double level = event_.level;
  for (int p = 0; p < nx_ * ny_; ++p) state_[p] = neg ? (values[p] <= level) : (values[p] >= level);
  if (event_.kind == EventKind::Crossing) {
    for (int p : stencil_) state_[p] = 2;
    if (!reaches(true, marked_sides(event_.direction()))) return 0;
    if (!reaches(false, other_sides(event_.direction()))) return 0;
    return neg ? -1 : 1;
  }
  for (int p : stencil_) state_[p] = !neg;
  bool up = contained() >= event_.threshold;
  for (int p : stencil_) state_[p] = neg;
  bool down = contained() >= event_.threshold;
  return static_cast<int>(up) - static_cast<int>(down);
}

}  // namespace topocov
