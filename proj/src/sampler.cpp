#include "topocov/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <istream>
#include <mutex>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include <fftw3.h>

namespace topocov {

namespace {

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

int next_pow2(int n) {
  int m = 1;
  while (m < n) m <<= 1;
  return m;
}

int steps_of(double a, double b, double h, const char* what) {
  require(h > 0.0, ErrorKind::Validation, std::string(what) + ": grid spacing must be positive");
  require(b >= a, ErrorKind::Validation, std::string(what) + ": empty interval");
  double q = (b - a) / h;
  int n = static_cast<int>(std::lround(q));
  require(std::abs(q - n) <= 1e-9 * std::max(1.0, q), ErrorKind::Validation,
          std::string(what) + ": box side is not a multiple of the grid spacing");
  return n;
}

bool uniform_axis(const std::vector<double>& a, double& h) {
  if (a.size() < 2) {
    h = 0.0;
    return true;
  }
  h = a[1] - a[0];
  for (std::size_t i = 1; i < a.size(); ++i)
    if (std::abs(a[i] - a[i - 1] - h) > 1e-12 * std::max(1.0, std::abs(h))) return false;
  return true;
}

double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// sqrt(C(m, k)) c^k s^(m-k) for k = 0..m, computed in logs.
void binomial_monomials(int m, double c, double s, double* out) {
  double lc = std::log(std::abs(c)), ls = std::log(std::abs(s));
  for (int k = 0; k <= m; ++k) {
    int sign = 1;
    double lg = 0.5 * log_binomial(m, k);
    if (k > 0) {
      if (c == 0.0) {
        out[k] = 0.0;
        continue;
      }
      lg += k * lc;
      if (c < 0 && (k % 2)) sign = -sign;
    }
    if (m - k > 0) {
      if (s == 0.0) {
        out[k] = 0.0;
        continue;
      }
      lg += (m - k) * ls;
      if (s < 0 && ((m - k) % 2)) sign = -sign;
    }
    out[k] = sign * std::exp(lg);
  }
}

}  // namespace

// ---------------------------------------------------------------- grid and samples

Grid2D Grid2D::covering(const Rect& box, double h) {
  Grid2D g;
  g.origin = {box.x0, box.y0};
  g.h = h;
  g.nx = steps_of(box.x0, box.x1, h, "grid") + 1;
  g.ny = steps_of(box.y0, box.y1, h, "grid") + 1;
  return g;
}

double MarkedJet::hessian_det() const {
  if (stratum.dim == 0) return 1.0;
  if (stratum.dim == 1) return hess[0];
  return hess[0] * hess[2] - hess[1] * hess[1];
}

FieldSample FieldSample::on_grid(const Grid2D& g) {
  FieldSample s;
  s.xs.resize(g.nx);
  s.ys.resize(g.ny);
  for (int i = 0; i < g.nx; ++i) s.xs[i] = g.origin.x + i * g.h;
  for (int j = 0; j < g.ny; ++j) s.ys[j] = g.origin.y + j * g.h;
  s.values.assign(static_cast<std::size_t>(g.size()), 0.0);
  s.grid = g;
  return s;
}

FieldSample FieldSample::on_axes(std::vector<double> xs, std::vector<double> ys) {
  FieldSample s;
  s.xs = std::move(xs);
  s.ys = std::move(ys);
  s.values.assign(s.xs.size() * s.ys.size(), 0.0);
  double hx, hy;
  if (!s.xs.empty() && !s.ys.empty() && uniform_axis(s.xs, hx) && uniform_axis(s.ys, hy) &&
      (hx == 0.0 || hy == 0.0 || std::abs(hx - hy) <= 1e-12 * hx)) {
    Grid2D g;
    g.origin = {s.xs[0], s.ys[0]};
    g.h = hx > 0 ? hx : (hy > 0 ? hy : 1.0);
    g.nx = s.nx();
    g.ny = s.ny();
    s.grid = g;
  }
  return s;
}

int axis_index(const std::vector<double>& axis, double v, double tol) {
  auto it = std::lower_bound(axis.begin(), axis.end(), v - tol);
  if (it != axis.end() && std::abs(*it - v) <= tol) return static_cast<int>(it - axis.begin());
  return -1;
}

// ---------------------------------------------------------------- export

void write_field_csv(const FieldSample& s, std::ostream& out) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  double h = s.grid ? s.grid->h : 0.0;
  out << "# topocov-field v1\n";
  out << "nx,ny,h,origin_x,origin_y\n";
  out << s.nx() << ',' << s.ny() << ',' << num(h) << ',' << num(s.xs.empty() ? 0.0 : s.xs[0]) << ','
      << num(s.ys.empty() ? 0.0 : s.ys[0]) << '\n';
  out << "xs";
  for (double x : s.xs) out << ',' << num(x);
  out << "\nys";
  for (double y : s.ys) out << ',' << num(y);
  out << '\n';
  for (int j = 0; j < s.ny(); ++j) {
    for (int i = 0; i < s.nx(); ++i) out << (i ? "," : "") << num(s.at(i, j));
    out << '\n';
  }
}

FieldSample read_field_csv(std::istream& in) {
  std::string line;
  auto next = [&](const char* what) {
    if (!std::getline(in, line)) fail(ErrorKind::Io, std::string("field csv: missing ") + what);
    return line;
  };
  if (next("header") != "# topocov-field v1") fail(ErrorKind::Io, "field csv: unknown header");
  next("column names");
  next("shape");
  int nx = 0, ny = 0;
  if (std::sscanf(line.c_str(), "%d,%d", &nx, &ny) != 2 || nx < 0 || ny < 0)
    fail(ErrorKind::Io, "field csv: bad shape line");
  auto parse_row = [&](const std::string& l, bool labelled, int expect) {
    std::vector<double> v;
    std::stringstream ss(l);
    std::string cell;
    bool first = true;
    while (std::getline(ss, cell, ',')) {
      if (first && labelled) {
        first = false;
        continue;
      }
      first = false;
      v.push_back(std::stod(cell));
    }
    if (static_cast<int>(v.size()) != expect) fail(ErrorKind::Io, "field csv: row length mismatch");
    return v;
  };
  auto xs = parse_row(next("xs"), true, nx);
  auto ys = parse_row(next("ys"), true, ny);
  FieldSample s = FieldSample::on_axes(std::move(xs), std::move(ys));
  for (int j = 0; j < ny; ++j) {
    auto row = parse_row(next("values"), false, nx);
    for (int i = 0; i < nx; ++i) s.at(i, j) = row[i];
  }
  return s;
}

void write_field_binary(const FieldSample& s, std::ostream& out) {
  const char magic[4] = {'T', 'C', 'F', 'S'};
  std::uint32_t version = 1;
  std::int32_t nx = s.nx(), ny = s.ny();
  double head[3] = {s.grid ? s.grid->h : 0.0, s.xs.empty() ? 0.0 : s.xs[0], s.ys.empty() ? 0.0 : s.ys[0]};
  out.write(magic, 4);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&nx), sizeof nx);
  out.write(reinterpret_cast<const char*>(&ny), sizeof ny);
  out.write(reinterpret_cast<const char*>(head), sizeof head);
  out.write(reinterpret_cast<const char*>(s.xs.data()), sizeof(double) * s.xs.size());
  out.write(reinterpret_cast<const char*>(s.ys.data()), sizeof(double) * s.ys.size());
  out.write(reinterpret_cast<const char*>(s.values.data()), sizeof(double) * s.values.size());
}

FieldSample read_field_binary(std::istream& in) {
  char magic[4];
  std::uint32_t version = 0;
  std::int32_t nx = 0, ny = 0;
  double head[3];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&nx), sizeof nx);
  in.read(reinterpret_cast<char*>(&ny), sizeof ny);
  in.read(reinterpret_cast<char*>(head), sizeof head);
  if (!in || std::memcmp(magic, "TCFS", 4) != 0 || version != 1 || nx < 0 || ny < 0)
    fail(ErrorKind::Io, "field binary: bad header");
  std::vector<double> xs(nx), ys(ny);
  in.read(reinterpret_cast<char*>(xs.data()), sizeof(double) * nx);
  in.read(reinterpret_cast<char*>(ys.data()), sizeof(double) * ny);
  FieldSample s = FieldSample::on_axes(std::move(xs), std::move(ys));
  in.read(reinterpret_cast<char*>(s.values.data()), sizeof(double) * s.values.size());
  if (!in) fail(ErrorKind::Io, "field binary: truncated data");
  return s;
}

// ---------------------------------------------------------------- factorization

Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& cov, double rel_tol) {
  const int n = static_cast<int>(cov.rows());
  if (n == 0) return Eigen::MatrixXd(0, 0);
  Eigen::VectorXd d = cov.diagonal();
  const double scale = std::max(d.maxCoeff(), 0.0);
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  std::vector<char> used(n, 0);
  int k = 0;
  for (; k < n; ++k) {
    int p = -1;
    double best = -1.0;
    for (int i = 0; i < n; ++i)
      if (!used[i] && d[i] > best) {
        best = d[i];
        p = i;
      }
    if (p < 0 || best <= rel_tol * scale || best <= 0.0) break;
    used[p] = 1;
    double pivot = std::sqrt(best);
    Eigen::VectorXd col = cov.col(p);
    if (k > 0) col.noalias() -= L.leftCols(k) * L.row(p).transpose();
    for (int i = 0; i < n; ++i) {
      if (used[i] && i != p) continue;
      L(i, k) = i == p ? pivot : col[i] / pivot;
      if (i != p) d[i] -= L(i, k) * L(i, k);
    }
  }
  return L.leftCols(k);
}

// ---------------------------------------------------------------- circulant embedding

CirculantEmbedding::CirculantEmbedding(const StationaryKernel& kernel, const Grid2D& grid, double padding)
    : grid_(grid) {
  require(grid.h > 0.0 && grid.nx > 0 && grid.ny > 0, ErrorKind::Validation, "fft sampler: invalid grid");
  int extra = static_cast<int>(std::ceil(std::max(padding, 0.0) / grid.h));
  m1_ = next_pow2(std::max({2 * (grid.nx - 1), grid.nx - 1 + extra, 1}));
  m2_ = next_pow2(std::max({2 * (grid.ny - 1), grid.ny - 1 + extra, 1}));
  for (int attempt = 0;; ++attempt) {
    const long M = static_cast<long>(m1_) * m2_;
    std::vector<std::complex<double>> c(M);
    for (int j = 0; j < m2_; ++j) {
      int dj = j <= m2_ / 2 ? j : j - m2_;
      for (int i = 0; i < m1_; ++i) {
        int di = i <= m1_ / 2 ? i : i - m1_;
        c[static_cast<long>(j) * m1_ + i] = kernel.value({di * grid.h, dj * grid.h});
      }
    }
    fftw_plan plan;
    {
      std::lock_guard<std::mutex> lock(fftw_planner_mutex());
      auto* buf = reinterpret_cast<fftw_complex*>(c.data());
      plan = fftw_plan_dft_2d(m2_, m1_, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
    fftw_execute(plan);
    double max_eig = 0.0, min_eig = 0.0;
    for (const auto& v : c) {
      max_eig = std::max(max_eig, v.real());
      min_eig = std::min(min_eig, v.real());
    }
    if (min_eig < -1e-8 * max_eig) {
      {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        fftw_destroy_plan(plan);
      }
      if (attempt < 2 && M < (1L << 22)) {
        m1_ *= 2;
        m2_ *= 2;
        continue;
      }
      fail(ErrorKind::Embedding,
           "circulant embedding has negative eigenvalues (min " + std::to_string(min_eig / max_eig) +
               " relative); use the exact sampling path or a larger embedding");
    }
    min_eig_ = min_eig;
    sqrt_eig_.resize(M);
    for (long k = 0; k < M; ++k) sqrt_eig_[k] = std::sqrt(std::max(c[k].real(), 0.0) / M);
    plan_ = plan;
    break;
  }
}

CirculantEmbedding::~CirculantEmbedding() {
  if (plan_) {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(static_cast<fftw_plan>(plan_));
  }
}

void CirculantEmbedding::draw_pair(Rng& rng, double* out1, double* out2) const {
  const long M = static_cast<long>(m1_) * m2_;
  std::vector<std::complex<double>> w(M);
  for (long k = 0; k < M; ++k) {
    double re = rng.normal();
    double im = rng.normal();
    w[k] = {sqrt_eig_[k] * re, sqrt_eig_[k] * im};
  }
  auto* buf = reinterpret_cast<fftw_complex*>(w.data());
  fftw_execute_dft(static_cast<fftw_plan>(plan_), buf, buf);
  for (int j = 0; j < grid_.ny; ++j)
    for (int i = 0; i < grid_.nx; ++i) {
      const auto& v = w[static_cast<long>(j) * m1_ + i];
      out1[j * grid_.nx + i] = v.real();
      if (out2) out2[j * grid_.nx + i] = v.imag();
    }
}

// ---------------------------------------------------------------- grid sampler

namespace {

// Bounding lattice of grids sharing the spacing h, or nullopt.
std::optional<Grid2D> common_lattice(const std::vector<Grid2D>& grids) {
  const Grid2D& g0 = grids.front();
  double x0 = g0.origin.x, y0 = g0.origin.y, x1 = x0, y1 = y0;
  for (const auto& g : grids) {
    if (std::abs(g.h - g0.h) > 1e-12 * g0.h) return std::nullopt;
    double qx = (g.origin.x - g0.origin.x) / g0.h, qy = (g.origin.y - g0.origin.y) / g0.h;
    if (std::abs(qx - std::round(qx)) > 1e-9 || std::abs(qy - std::round(qy)) > 1e-9) return std::nullopt;
    x0 = std::min(x0, g.origin.x);
    y0 = std::min(y0, g.origin.y);
    x1 = std::max(x1, g.origin.x + (g.nx - 1) * g.h);
    y1 = std::max(y1, g.origin.y + (g.ny - 1) * g.h);
  }
  Grid2D out;
  out.origin = {x0, y0};
  out.h = g0.h;
  out.nx = static_cast<int>(std::lround((x1 - x0) / g0.h)) + 1;
  out.ny = static_cast<int>(std::lround((y1 - y0) / g0.h)) + 1;
  return out;
}

}  // namespace

GridSampler::GridSampler(KernelPtr kernel, std::vector<Grid2D> grids, MeanFunction mean, SamplingMethod method)
    : kernel_(std::move(kernel)), grids_(std::move(grids)), mean_(mean), method_(method) {
  require(kernel_ != nullptr, ErrorKind::Validation, "sampler: missing kernel");
  require(!grids_.empty(), ErrorKind::Validation, "sampler: no grids");
  for (const auto& g : grids_) {
    require(g.h > 0.0, ErrorKind::Validation, "sampler: grid spacing must be positive");
    require(g.nx > 0 && g.ny > 0, ErrorKind::Validation, "sampler: grid must have nodes");
    total_ += g.size();
  }
  std::optional<Grid2D> lattice = common_lattice(grids_);
  if (method_ == SamplingMethod::Auto)
    method_ = (total_ > 1600 && lattice) ? SamplingMethod::Fft : SamplingMethod::Exact;
  if (method_ == SamplingMethod::Fft) {
    require(lattice.has_value(), ErrorKind::Unsupported, "fft sampler: grids do not share one lattice");
    double extent = std::max(lattice->nx, lattice->ny) * lattice->h;
    double padding = std::min(kernel_->envelope_cutoff(), 4.0 * extent);
    fft_ = std::make_unique<CirculantEmbedding>(*kernel_, *lattice, padding);
    // Grid indices are stored relative to the lattice for extraction.
    factor_.resize(0, 0);
    return;
  }
  require(total_ <= 10000, ErrorKind::Validation, "exact sampler: at most 10^4 nodes");
  std::vector<Functional> pts;
  pts.reserve(total_);
  for (const auto& g : grids_)
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) pts.push_back(Functional::value(g.node(i, j)));
  factor_ = psd_factor(functional_cov_matrix(*kernel_, pts, pts));
}

GridSampler::~GridSampler() = default;

void GridSampler::draw_values_pair(Rng& rng, double* out1, double* out2) const {
  if (fft_) {
    Grid2D lattice = *common_lattice(grids_);
    std::vector<double> a(lattice.size()), b(out2 ? lattice.size() : 0);
    fft_->draw_pair(rng, a.data(), out2 ? b.data() : nullptr);
    long off = 0;
    for (const auto& g : grids_) {
      int ox = static_cast<int>(std::lround((g.origin.x - lattice.origin.x) / lattice.h));
      int oy = static_cast<int>(std::lround((g.origin.y - lattice.origin.y) / lattice.h));
      for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
          long src = static_cast<long>(oy + j) * lattice.nx + ox + i;
          out1[off + j * g.nx + i] = a[src] + mean_.level;
          if (out2) out2[off + j * g.nx + i] = b[src] + mean_.level;
        }
      off += g.size();
    }
    return;
  }
  Eigen::VectorXd z(factor_.cols());
  for (double* out : {out1, out2}) {
    if (!out) continue;
    rng.fill_normal(z.data(), z.size());
    Eigen::Map<Eigen::VectorXd> v(out, total_);
    v.noalias() = factor_ * z;
    v.array() += mean_.level;
  }
}

void GridSampler::draw_values(Rng& rng, double* out) const { draw_values_pair(rng, out, nullptr); }

std::vector<FieldSample> GridSampler::draw(Rng& rng) const {
  std::vector<double> all(total_);
  draw_values(rng, all.data());
  std::vector<FieldSample> out;
  long off = 0;
  for (const auto& g : grids_) {
    FieldSample s = FieldSample::on_grid(g);
    std::copy(all.begin() + off, all.begin() + off + g.size(), s.values.begin());
    s.seed = rng.seed();
    off += g.size();
    out.push_back(std::move(s));
  }
  return out;
}

FieldSample sample_stationary(KernelPtr kernel, const Grid2D& grid, MeanFunction mean, Rng& rng,
                              SamplingMethod method) {
  GridSampler sampler(std::move(kernel), {grid}, mean, method);
  return std::move(sampler.draw(rng).front());
}

std::pair<FieldSample, FieldSample> interpolate_pair(const FieldSample& f, const FieldSample& ftilde, double t,
                                                     MeanFunction mean) {
  require(t >= 0.0 && t <= 1.0, ErrorKind::Validation, "interpolation parameter t must lie in [0, 1]");
  require(f.values.size() == ftilde.values.size(), ErrorKind::Validation, "interpolate_pair: shape mismatch");
  FieldSample second = f;
  if (t < 1.0) {
    double s = std::sqrt(1.0 - t * t);
    for (std::size_t k = 0; k < f.values.size(); ++k)
      second.values[k] = t * (f.values[k] - mean.level) + s * (ftilde.values[k] - mean.level) + mean.level;
  }
  return {f, std::move(second)};
}

std::pair<FieldSample, FieldSample> sample_interpolated_pair(KernelPtr kernel, const Grid2D& grid, double t,
                                                             MeanFunction mean, Rng& rng) {
  require(t >= 0.0 && t <= 1.0, ErrorKind::Validation, "interpolation parameter t must lie in [0, 1]");
  GridSampler sampler(std::move(kernel), {grid}, mean);
  FieldSample f = FieldSample::on_grid(grid), ft = FieldSample::on_grid(grid);
  sampler.draw_values_pair(rng, f.values.data(), ft.values.data());
  f.seed = ft.seed = rng.seed();
  return interpolate_pair(f, ft, t, mean);
}

// ---------------------------------------------------------------- conditional pair

std::vector<double> snapped_axis(double a, double b, double h, std::optional<double> c) {
  int n = steps_of(a, b, h, "snapped axis");
  std::vector<double> axis(n + 1);
  for (int i = 0; i <= n; ++i) axis[i] = a + i * h;
  axis[n] = b;
  if (!c) return axis;
  require(*c >= a - 1e-12 && *c <= b + 1e-12, ErrorKind::Validation, "snapped axis: point outside the interval");
  int k = static_cast<int>(std::lround((*c - a) / h));
  k = std::clamp(k, 0, n);
  if (std::abs(axis[k] - *c) <= 1e-12 * std::max(1.0, std::abs(*c))) {
    axis[k] = *c;
    return axis;
  }
  if (k > 0 && k < n) {
    axis[k] = *c;
  } else {
    axis.insert(std::upper_bound(axis.begin(), axis.end(), *c), *c);
  }
  return axis;
}

ConditionalPairSampler::ConditionalPairSampler(KernelPtr kernel, std::vector<double> t_values, const Rect& box1,
                                               ConstraintPoint c1, const Rect& box2, ConstraintPoint c2, double h,
                                               MeanFunction mean)
    : kernel_(std::move(kernel)), t_values_(std::move(t_values)), c1_(c1), c2_(c2), mean_(mean) {
  require(kernel_ != nullptr, ErrorKind::Validation, "conditional sampler: missing kernel");
  require(!t_values_.empty(), ErrorKind::Validation, "conditional sampler: no t values");
  for (double t : t_values_)
    require(t >= 0.0 && t <= 1.0, ErrorKind::Validation, "interpolation parameter t must lie in [0, 1]");
  require(box1.contains(c1.x) && box2.contains(c2.x), ErrorKind::Validation,
          "conditional sampler: constraint point outside its box");
  if (c1.x.x == c2.x.x && c1.x.y == c2.x.y)
    fail(ErrorKind::Degenerate, "conditional sampler: x1 = x2 makes the constraint vector degenerate");

  xs1_ = snapped_axis(box1.x0, box1.x1, h, c1.x.x);
  ys1_ = snapped_axis(box1.y0, box1.y1, h, c1.x.y);
  xs2_ = snapped_axis(box2.x0, box2.x1, h, c2.x.x);
  ys2_ = snapped_axis(box2.y0, box2.y1, h, c2.x.y);
  node1_ = {axis_index(xs1_, c1.x.x, 0.0), axis_index(ys1_, c1.x.y, 0.0)};
  node2_ = {axis_index(xs2_, c2.x.x, 0.0), axis_index(ys2_, c2.x.y, 0.0)};

  auto grid_functionals = [](const std::vector<double>& xs, const std::vector<double>& ys, std::pair<int, int> skip,
                             int copy) {
    std::vector<Functional> out;
    for (std::size_t j = 0; j < ys.size(); ++j)
      for (std::size_t i = 0; i < xs.size(); ++i)
        if (!(static_cast<int>(i) == skip.first && static_cast<int>(j) == skip.second))
          out.push_back(Functional::value({xs[i], ys[j]}, copy));
    return out;
  };

  // Unconditioned vectors of one field: f on [G1 | G2 | J1c | J1h | J2c | J2h], f~ on [G2 | J2c | J2h].
  auto g1 = grid_functionals(xs1_, ys1_, node1_, 0);
  auto g2 = grid_functionals(xs2_, ys2_, node2_, 0);
  auto j1c = constraint_functionals(c1.x, c1.stratum, 0);
  auto j1h = hessian_functionals(c1.x, c1.stratum, 0);
  auto j2c = constraint_functionals(c2.x, c2.stratum, 0);
  auto j2h = hessian_functionals(c2.x, c2.stratum, 0);
  n_g1_ = static_cast<int>(g1.size());
  n_g2_ = static_cast<int>(g2.size());
  nc1_ = static_cast<int>(j1c.size());
  nh1_ = static_cast<int>(j1h.size());
  nc2_ = static_cast<int>(j2c.size());
  nh2_ = static_cast<int>(j2h.size());
  nc_ = nc1_ + nc2_;
  off_c1_ = n_g1_ + n_g2_;
  off_h1_ = off_c1_ + nc1_;
  off_c2_ = off_h1_ + nh1_;
  off_h2_ = off_c2_ + nc2_;
  offt_c2_ = n_g2_;
  offt_h2_ = n_g2_ + nc2_;

  std::vector<Functional> f;
  for (auto* part : {&g1, &g2, &j1c, &j1h, &j2c, &j2h}) f.insert(f.end(), part->begin(), part->end());
  std::vector<Functional> ft;
  for (auto* part : {&g2, &j2c, &j2h}) ft.insert(ft.end(), part->begin(), part->end());
  factor_f_ = psd_factor(functional_cov_matrix(*kernel_, f, f));
  factor_ft_ = psd_factor(functional_cov_matrix(*kernel_, ft, ft));

  // Interpolated pair: copy 0 is f_t^1 on box1, copy 1 is f_t^2 on box2.
  auto retag = [](std::vector<Functional> v, int copy) {
    for (auto& x : v) x.copy = copy;
    return v;
  };
  std::vector<Functional> z;
  for (const auto& part : {g1, retag(g2, 1), j1h, retag(j2h, 1)}) z.insert(z.end(), part.begin(), part.end());
  std::vector<Functional> c = j1c;
  auto c2f = retag(j2c, 1);
  c.insert(c.end(), c2f.begin(), c2f.end());

  target_.assign(nc_, 0.0);
  target_[0] = -mean_.level;
  target_[nc1_] = -mean_.level;
  Eigen::VectorXd target = Eigen::Map<const Eigen::VectorXd>(target_.data(), nc_);

  for (double t : t_values_) {
    Eigen::MatrixXd cc = functional_cov_matrix(*kernel_, c, c, t);
    cc = 0.5 * (cc + cc.transpose());
    SymmetricInverse inv = symmetric_inverse(cc, "constraint vector");
    Eigen::MatrixXd zc = functional_cov_matrix(*kernel_, z, c, t);
    regression_.push_back(zc * inv.inverse);
    GaussianSpec law(Eigen::VectorXd::Zero(nc_), cc);
    gamma_.push_back(std::exp(log_density_at(law, target)));
    GaussianSpec raw(Eigen::VectorXd::Constant(nc_, 0.0) - target, cc);
    constraint_law_.push_back(raw);
  }
}

void ConditionalPairSampler::draw_base(Rng& rng, BaseDraw& out, Eigen::VectorXd& scratch1,
                                       Eigen::VectorXd& scratch2) const {
  scratch1.resize(factor_f_.cols());
  rng.fill_normal(scratch1.data(), scratch1.size());
  out.f.noalias() = factor_f_ * scratch1;
  bool need_tilde = std::any_of(t_values_.begin(), t_values_.end(), [](double t) { return t < 1.0; });
  if (need_tilde) {
    scratch2.resize(factor_ft_.cols());
    rng.fill_normal(scratch2.data(), scratch2.size());
    out.ftilde.noalias() = factor_ft_ * scratch2;
  } else {
    out.ftilde = Eigen::VectorXd::Zero(factor_ft_.rows());
  }
}

ConditionalPairSampler::BaseDraw ConditionalPairSampler::draw_base(Rng& rng) const {
  BaseDraw out;
  Eigen::VectorXd a, b;
  draw_base(rng, out, a, b);
  return out;
}

void ConditionalPairSampler::residual(const BaseDraw& base, int k, double* r) const {
  const double t = t_values_[k], s = std::sqrt(std::max(0.0, 1.0 - t * t));
  for (int i = 0; i < nc1_; ++i) r[i] = base.f[off_c1_ + i] - target_[i];
  for (int i = 0; i < nc2_; ++i)
    r[nc1_ + i] = t * base.f[off_c2_ + i] + s * base.ftilde[offt_c2_ + i] - target_[nc1_ + i];
}

void ConditionalPairSampler::realize_grid(const BaseDraw& base, int k, int which, const double* r,
                                          double* values) const {
  const double t = t_values_[k], s = std::sqrt(std::max(0.0, 1.0 - t * t));
  const Eigen::MatrixXd& R = regression_[k];
  Eigen::Map<const Eigen::VectorXd> rv(r, nc_);
  const auto& xs = which == 0 ? xs1_ : xs2_;
  const auto& ys = which == 0 ? ys1_ : ys2_;
  const auto node = which == 0 ? node1_ : node2_;
  const int n = which == 0 ? n_g1_ : n_g2_;
  const int row0 = which == 0 ? 0 : n_g1_;
  Eigen::VectorXd adj = R.middleRows(row0, n) * rv;
  const int nx = static_cast<int>(xs.size());
  const int marked = node.second * nx + node.first;
  const int total = nx * static_cast<int>(ys.size());
  for (int q = 0, g = 0; q < total; ++q) {
    if (q == marked) {
      values[q] = 0.0;
      continue;
    }
    double centred = which == 0 ? base.f[g] : t * base.f[n_g1_ + g] + s * base.ftilde[g];
    values[q] = centred - adj[g] + mean_.level;
    ++g;
  }
}

void ConditionalPairSampler::realize_hessian(const BaseDraw& base, int k, int which, const double* r,
                                             double* hess) const {
  const double t = t_values_[k], s = std::sqrt(std::max(0.0, 1.0 - t * t));
  const Eigen::MatrixXd& R = regression_[k];
  Eigen::Map<const Eigen::VectorXd> rv(r, nc_);
  const int n = which == 0 ? nh1_ : nh2_;
  const int row0 = n_g1_ + n_g2_ + (which == 0 ? 0 : nh1_);
  for (int i = 0; i < n; ++i) {
    double centred = which == 0 ? base.f[off_h1_ + i] : t * base.f[off_h2_ + i] + s * base.ftilde[offt_h2_ + i];
    hess[i] = centred - R.row(row0 + i).dot(rv);
  }
}

std::pair<FieldSample, FieldSample> ConditionalPairSampler::realize(const BaseDraw& base, int k) const {
  std::vector<double> r(nc_);
  residual(base, k, r.data());
  FieldSample out[2];
  for (int which = 0; which < 2; ++which) {
    out[which] = FieldSample::on_axes(xs(which), ys(which));
    realize_grid(base, k, which, r.data(), out[which].values.data());
    MarkedJet jet;
    const ConstraintPoint& c = constraint(which);
    jet.point = c.x;
    jet.stratum = c.stratum;
    jet.i = marked_node(which).first;
    jet.j = marked_node(which).second;
    jet.zero_constrained = true;
    realize_hessian(base, k, which, r.data(), jet.hess);
    out[which].jets.push_back(jet);
  }
  return {std::move(out[0]), std::move(out[1])};
}

std::pair<FieldSample, FieldSample> ConditionalPairSampler::draw(Rng& rng, int t_index) const {
  auto pair = realize(draw_base(rng), t_index);
  pair.first.seed = pair.second.seed = rng.seed();
  return pair;
}

std::pair<FieldSample, FieldSample> sample_conditional_pair(const ConditionalPairSampler& sampler, Rng& rng,
                                                            int t_index) {
  require(t_index >= 0 && t_index < sampler.t_count(), ErrorKind::Validation, "conditional sampler: bad t index");
  return sampler.draw(rng, t_index);
}

// ---------------------------------------------------------------- Kostlan

KostlanSampler::KostlanSampler(int degree, KostlanDomain domain, int resolution)
    : degree_(degree), domain_(domain) {
  require(degree >= 0, ErrorKind::Validation, "kostlan: degree must be >= 0");
  require(resolution >= 2, ErrorKind::Validation, "kostlan: resolution must be >= 2");
  const double pi = std::numbers::pi;
  if (domain == KostlanDomain::Circle) {
    require(degree <= 500, ErrorKind::Validation, "kostlan circle: degree must be <= 500");
    xs_.resize(resolution);
    for (int i = 0; i < resolution; ++i) xs_[i] = 2.0 * pi * i / resolution;
    ys_ = {0.0};
  } else {
    require(degree <= 100, ErrorKind::Validation, "kostlan sphere: degree must be <= 100");
    xs_.resize(2 * resolution);
    for (int i = 0; i < 2 * resolution; ++i) xs_[i] = pi * i / resolution;
    ys_.resize(resolution);
    for (int j = 0; j < resolution; ++j) ys_[j] = pi * (j + 0.5) / resolution;
  }
  int lo = domain == KostlanDomain::Circle ? degree : 0;
  azimuthal_.resize(degree + 1);
  std::vector<double> row(degree + 1);
  for (int m = lo; m <= degree; ++m) {
    azimuthal_[m].resize(xs_.size(), m + 1);
    for (std::size_t i = 0; i < xs_.size(); ++i) {
      binomial_monomials(m, std::cos(xs_[i]), std::sin(xs_[i]), row.data());
      for (int k = 0; k <= m; ++k) azimuthal_[m](i, k) = row[k];
    }
  }
  if (domain == KostlanDomain::Sphere) {
    polar_.resize(ys_.size(), degree + 1);
    for (std::size_t j = 0; j < ys_.size(); ++j) {
      binomial_monomials(degree, std::cos(ys_[j]), std::sin(ys_[j]), row.data());
      for (int k = 0; k <= degree; ++k) polar_(j, k) = row[k];
    }
  }
}

void KostlanSampler::draw_values(Rng& rng, double* out) const {
  const int n = degree_;
  if (domain_ == KostlanDomain::Circle) {
    Eigen::VectorXd a(n + 1);
    rng.fill_normal(a.data(), n + 1);
    Eigen::Map<Eigen::VectorXd>(out, xs_.size()).noalias() = azimuthal_[n] * a;
    return;
  }
  // f = sum_k sqrt(C(n,k)) cos^k(phi) sin^(n-k)(phi) P_{n-k}(theta), with
  // P_m(theta) = sum_i sqrt(C(m,i)) a_{i,m-i,k} cos^i sin^(m-i) of theta.
  const int na = static_cast<int>(xs_.size());
  Eigen::MatrixXd P(na, n + 1);
  for (int k = 0; k <= n; ++k) {
    int m = n - k;
    Eigen::VectorXd a(m + 1);
    rng.fill_normal(a.data(), m + 1);
    P.col(k).noalias() = azimuthal_[m] * a;
  }
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> V(out, ys_.size(), na);
  V.noalias() = polar_ * P.transpose();
}

FieldSample KostlanSampler::draw(Rng& rng) const {
  FieldSample s = FieldSample::on_axes(xs_, ys_);
  draw_values(rng, s.values.data());
  s.seed = rng.seed();
  return s;
}

FieldSample sample_kostlan(int degree, KostlanDomain domain, int resolution, Rng& rng) {
  return KostlanSampler(degree, domain, resolution).draw(rng);
}

}  // namespace topocov
