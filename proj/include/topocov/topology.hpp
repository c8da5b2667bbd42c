#pragma once

#include <string>
#include <vector>

#include "topocov/core.hpp"
#include "topocov/kernels.hpp"
#include "topocov/sampler.hpp"

namespace topocov {

enum class Direction { LeftRight, BottomTop };
enum class EventKind { Crossing, CountThreshold };
enum class EventSign { Geq, Leq };

// Side bits used in touch masks.
enum SideBit : unsigned { kLeft = 1u, kRight = 2u, kBottom = 4u, kTop = 8u };

// A box with its nine strata: 0 interior, 1 left, 2 right, 3 bottom, 4 top
// edges, then corners 5 (x0,y0), 6 (x1,y0), 7 (x0,y1), 8 (x1,y1).
struct StratifiedBox {
  Rect rect;
  Direction marked = Direction::LeftRight;

  static constexpr int kStrata = 9;

  int stratum_dim(int k) const;
  Stratum stratum(int k) const;
  // Lebesgue measure of the stratum (area, length, or 1 for a corner).
  double stratum_measure(int k) const;
  // Point of stratum k at local coordinates (u, v) in [0, 1]^dim.
  Vec2 stratum_point(int k, double u, double v = 0.0) const;
  static std::string stratum_name(int k);
};

struct EventSpec {
  EventKind kind = EventKind::Crossing;
  StratifiedBox box;
  EventSign sign = EventSign::Geq;
  double level = 0.0;
  int threshold = 1;  // count events hold when the count is >= threshold

  Direction direction() const { return box.marked; }
  // +1 increasing in f, -1 decreasing, 0 neither.
  int monotone() const;

  static EventSpec crossing(const Rect& r, Direction d, EventSign s = EventSign::Geq, double level = 0.0);
  static EventSpec count_at_least(const Rect& r, int threshold, EventSign s = EventSign::Geq, double level = 0.0);
};

// Component labels of the closed set C = {f >= level} (8-connected) and of
// its complement {f < level} (4-connected) on a box sub-grid. When negated,
// C = {f <= level} and the complement is {f > level}. Labels are the
// smallest linear node index of the component; -1 marks nodes outside.
struct LabeledExcursion {
  int nx = 0, ny = 0;
  bool negated = false;
  std::vector<signed char> closed;  // 1 for nodes of C
  std::vector<int> closed_label;
  std::vector<int> open_label;
  std::vector<unsigned> closed_touch;  // per label, side bits
  std::vector<unsigned> open_touch;

  int closed_components() const;
  int open_components() const;
};

// Labels a membership mask (row-major, x fastest) directly.
LabeledExcursion label_mask(std::vector<signed char> closed, int nx, int ny, bool negated = false);
LabeledExcursion label_excursion(const FieldSample& sample, const Rect& box, double level, bool negated = false);

// Node index range of a box inside a sample: [i0, i1] x [j0, j1].
struct SubGrid {
  int i0, i1, j0, j1;
  int nx() const { return i1 - i0 + 1; }
  int ny() const { return j1 - j0 + 1; }
};
SubGrid locate_box(const FieldSample& sample, const Rect& box);

// Some closed-set component touches both marked sides.
bool crossing_occurs(const LabeledExcursion& exc, const EventSpec& event);
// Same for the 4-connected complement.
bool open_crossing_occurs(const LabeledExcursion& exc, Direction d);
// Closed-set components (or complement components) that avoid the box boundary.
int count_components(const LabeledExcursion& exc, bool open_set = false);
bool event_occurs(const FieldSample& sample, const EventSpec& event);
// Event on an existing labeling of its box; exc.negated must match the event sign.
bool event_holds(const LabeledExcursion& exc, const EventSpec& event);

// Sign changes around the closed loop of a 1D sample (zero counts as positive).
int count_zero_sign_changes(const FieldSample& sample);
int count_zero_sign_changes(const double* values, int n);

// Nodes forced to be ambivalent around the constrained point.
enum class PivotStencil { Node, Plus, Block };

// Toggle route: with the stencil around the zero-constrained node set above
// and then below the level, +1 if the event switches on, -1 if it switches
// off, 0 if unchanged.
int pivotal_sign(const FieldSample& sample, const EventSpec& event, Vec2 x,
                 PivotStencil stencil = PivotStencil::Node);

// Four-arm route for crossing events: the component of (closed set + stencil)
// through x joins the marked sides, and the component of (complement + stencil)
// through x joins the other two sides. Raises a Contract error when the
// sample carries no zero-jet at x.
bool pivotal_indicator(const FieldSample& sample, const EventSpec& event, Vec2 x, const Stratum& F,
                       PivotStencil stencil = PivotStencil::Node);

// Reusable breadth-first tester on a fixed box grid with a fixed marked node;
// one instance per worker.
class PivotalTester {
 public:
  PivotalTester(const EventSpec& event, int nx, int ny, int mark_i, int mark_j,
                PivotStencil stencil = PivotStencil::Node);
  // Pivotal sign of the event for the box values (row-major).
  int sign(const double* values);

 private:
  bool reaches(bool closed_set, unsigned sides);
  int contained();

  EventSpec event_;
  int nx_, ny_;
  std::vector<int> stencil_;
  std::vector<signed char> state_;  // 1 closed, 0 open, 2 both
  std::vector<int> queue_;
  std::vector<int> seen_;
  int stamp_ = 0;
};

}  // namespace topocov
