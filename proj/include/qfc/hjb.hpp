#pragma once

// Finite-difference HJB solver on the Bloch ball, feedback policy extraction
// and co-states read off the value grid.
//
// The lattice has spacing h = 2/(N-1) with N points across [-1, 1] and is
// extended by `band` cells past the cube so that every point with
// |p| <= 1 + band*h is stepped. Coefficients are the polynomial extensions of
// the ball coefficients; the ball is invariant, so the band only feeds the
// stencils of points on the sphere.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "qfc/integrators.hpp"
#include "qfc/parallel.hpp"
#include "qfc/qubit.hpp"
#include "qfc/serialize.hpp"

namespace qfc {

enum class HjbMode { Stochastic, Deterministic };

inline std::string to_string(HjbMode m) { return m == HjbMode::Stochastic ? "stochastic" : "deterministic"; }

inline HjbMode hjb_mode_from_string(const std::string& s) {
  if (s == "stochastic") return HjbMode::Stochastic;
  if (s == "deterministic") return HjbMode::Deterministic;
  throw ValidationError("grid.mode: expected \"stochastic\" or \"deterministic\", got \"" + s + "\"");
}

struct HjbOptions {
  int N = 41;
  double t0 = 0.0;
  double T = 1.0;
  double dt = 0.0;          // 0 selects the largest stable step
  double store_dt = 0.01;   // spacing of retained time slices
  HjbMode mode = HjbMode::Stochastic;
  int band = 3;
  bool keep_slices = true;  // false keeps only t0 and T
  int threads = 0;
};

/// Stability limit of the explicit sweep for the given lattice.
struct CflBound {
  double dt_max;
  double max_noise_sq;
  double max_drift;
};

class ValueGrid {
 public:
  static constexpr int kPad = 2;

  int N() const { return n_; }
  int band() const { return band_; }
  double h() const { return h_; }
  double t0() const { return t0_; }
  double T() const { return t1_; }
  double dt() const { return dt_; }
  std::size_t steps() const { return steps_; }
  HjbMode mode() const { return mode_; }
  CouplingConvention convention() const { return convention_; }
  const std::string& model_fingerprint() const { return model_fp_; }
  const std::string& cost_fingerprint() const { return cost_fp_; }
  const BlochReduction& reduction() const { return red_; }
  const std::vector<double>& slice_times() const { return slice_times_; }
  const std::vector<std::size_t>& slice_steps() const { return slice_steps_; }
  std::size_t num_points() const { return active_.size(); }
  std::size_t num_slices() const { return slices_.size(); }

  /// Fingerprint of the grid itself (header plus a digest of every value).
  std::string fingerprint() const {
    Json j = header_json();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& s : slices_)
      for (double v : s) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        for (int b = 0; b < 8; ++b) {
          h ^= (bits >> (8 * b)) & 0xffU;
          h *= 0x100000001b3ULL;
        }
      }
    j["values_digest"] = h;
    return qfc::fingerprint(j);
  }

  /// Lattice coordinate of nominal index i (i = 0 is -1, i = N-1 is +1).
  double coord(int i) const { return -1.0 + i * h_; }
  Vec3 point(int i, int j, int l) const { return {coord(i), coord(j), coord(l)}; }

  /// Index of the stored slice used at time t: the latest slice not after t.
  std::size_t slice_index(double t) const {
    const double eps = 1e-9 * std::max(1.0, std::abs(t1_ - t0_));
    auto it = std::upper_bound(slice_times_.begin(), slice_times_.end(), t + eps);
    if (it == slice_times_.begin()) return 0;
    return static_cast<std::size_t>(it - slice_times_.begin()) - 1;
  }

  bool is_active(int i, int j, int l) const { return index_at(cube(i, j, l)) >= 0; }

  double value_at_lattice(std::size_t slice, int i, int j, int l) const {
    const long a = index_at(cube(i, j, l));
    if (a < 0) throw ValidationError("value_at_lattice: point outside the stepped region");
    return slices_.at(slice)[static_cast<std::size_t>(a)];
  }

  /// Trilinear interpolation of the value at (t, p).
  double value(double t, const Vec3& p) const {
    const auto& s = slices_[slice_index(t)];
    return interpolate(p, [&](long c) { return s[static_cast<std::size_t>(index_of_[static_cast<std::size_t>(c)])]; });
  }

  /// Trilinear interpolation of the lattice gradient (central differences,
  /// one-sided at the edge of the stepped region).
  Vec3 gradient(double t, const Vec3& p) const {
    const auto& s = slices_[slice_index(t)];
    Vec3 g = Vec3::Zero();
    for (int a = 0; a < 3; ++a)
      g(a) = interpolate(p, [&](long c) { return first_derivative(s, c, a); });
    return g;
  }

  Json header_json() const {
    return Json{{"format", "qfc-value-grid"},
                {"version", kToolkitVersion},
                {"N", n_},
                {"band", band_},
                {"h", h_},
                {"t0", t0_},
                {"T", t1_},
                {"dt", dt_},
                {"steps", steps_},
                {"mode", to_string(mode_)},
                {"convention", to_string(convention_)},
                {"model_fingerprint", model_fp_},
                {"cost_fingerprint", cost_fp_},
                {"slice_times", slice_times_},
                {"slice_steps", slice_steps_},
                {"points", active_.size()}};
  }

 private:
  friend class HjbSolver;
  friend ValueGrid read_value_grid(std::istream&, const ModelSpec&, const CostSpec&);
  friend void write_value_grid(std::ostream&, const ValueGrid&);

  int n_ = 0;
  int band_ = 0;
  int m_ = 0;  // cube side including band and padding
  double h_ = 0.0;
  double t0_ = 0.0, t1_ = 0.0, dt_ = 0.0;
  std::size_t steps_ = 0;
  HjbMode mode_ = HjbMode::Stochastic;
  CouplingConvention convention_ = CouplingConvention::Operator;
  std::string model_fp_, cost_fp_;
  BlochReduction red_;
  std::vector<long> index_of_;  // cube index -> active index or -1
  std::vector<long> active_;    // active index -> cube index
  std::vector<double> slice_times_;
  std::vector<std::size_t> slice_steps_;
  std::vector<std::vector<double>> slices_;

  long stride(int axis) const {
    return axis == 0 ? static_cast<long>(m_) * m_ : axis == 1 ? static_cast<long>(m_) : 1L;
  }
  long cube(int i, int j, int l) const {
    const int o = band_ + kPad;
    if (i + o < 0 || j + o < 0 || l + o < 0 || i + o >= m_ || j + o >= m_ || l + o >= m_) return -1;
    return (static_cast<long>(i + o) * m_ + (j + o)) * m_ + (l + o);
  }
  long index_at(long c) const { return c < 0 ? -1 : index_of_[static_cast<std::size_t>(c)]; }
  bool active(long c) const { return index_of_[static_cast<std::size_t>(c)] >= 0; }

  void build_lattice(int n, int band) {
    if (n < 3 || n % 2 == 0) throw ValidationError("grid.N: must be odd and at least 3");
    if (band < 1) throw ValidationError("grid.band: must be at least 1");
    n_ = n;
    band_ = band;
    h_ = 2.0 / (n - 1);
    m_ = n + 2 * (band + kPad);
    index_of_.assign(static_cast<std::size_t>(m_) * m_ * m_, -1);
    active_.clear();
    const double radius = 1.0 + band * h_ + 1e-12;
    for (int i = -band; i < n + band; ++i)
      for (int j = -band; j < n + band; ++j)
        for (int l = -band; l < n + band; ++l) {
          if (point(i, j, l).norm() > radius) continue;
          const long c = cube(i, j, l);
          index_of_[static_cast<std::size_t>(c)] = static_cast<long>(active_.size());
          active_.push_back(c);
        }
  }

  /// Nominal (i, j, l) of a cube index.
  std::array<int, 3> nominal(long c) const {
    const int o = band_ + kPad;
    const int l = static_cast<int>(c % m_);
    const int j = static_cast<int>((c / m_) % m_);
    const int i = static_cast<int>(c / (static_cast<long>(m_) * m_));
    return {i - o, j - o, l - o};
  }

  double first_derivative(const std::vector<double>& s, long c, int axis) const {
    const long st = stride(axis);
    auto at = [&](long cc) { return s[static_cast<std::size_t>(index_of_[static_cast<std::size_t>(cc)])]; };
    const bool fp = active(c + st), fm = active(c - st);
    if (fp && fm) return (at(c + st) - at(c - st)) / (2.0 * h_);
    if (fp) {
      if (active(c + 2 * st)) return (-3.0 * at(c) + 4.0 * at(c + st) - at(c + 2 * st)) / (2.0 * h_);
      return (at(c + st) - at(c)) / h_;
    }
    if (fm) {
      if (active(c - 2 * st)) return (3.0 * at(c) - 4.0 * at(c - st) + at(c - 2 * st)) / (2.0 * h_);
      return (at(c) - at(c - st)) / h_;
    }
    return 0.0;
  }

  template <typename Sample>
  double interpolate(const Vec3& p, const Sample& sample) const {
    if (!p.allFinite()) throw ValidationError("value grid query: non-finite point");
    const double lim = 1.0 + band_ * h_ + 1e-12;
    if (p.cwiseAbs().maxCoeff() > lim) throw ValidationError("value grid query: point outside the lattice");
    int base[3];
    double frac[3];
    for (int a = 0; a < 3; ++a) {
      const double x = (p(a) + 1.0) / h_;
      int i = static_cast<int>(std::floor(x));
      i = std::clamp(i, -band_, n_ + band_ - 2);
      base[a] = i;
      frac[a] = std::clamp(x - i, 0.0, 1.0);
    }
    double acc = 0.0, wsum = 0.0;
    for (int corner = 0; corner < 8; ++corner) {
      const int di = (corner >> 2) & 1, dj = (corner >> 1) & 1, dl = corner & 1;
      const double w = (di ? frac[0] : 1.0 - frac[0]) * (dj ? frac[1] : 1.0 - frac[1]) * (dl ? frac[2] : 1.0 - frac[2]);
      if (w == 0.0) continue;
      const long c = cube(base[0] + di, base[1] + dj, base[2] + dl);
      if (c < 0 || !active(c)) continue;
      acc += w * sample(c);
      wsum += w;
    }
    if (wsum <= 0.0) throw ValidationError("value grid query: no stepped lattice point near the query");
    return acc / wsum;
  }
};

/// Largest stable explicit step on the lattice of `opts` (before any solve).
inline CflBound hjb_cfl_bound(const BlochReduction& red, int n, int band, HjbMode mode) {
  const double h = 2.0 / (n - 1);
  const double radius = 1.0 + band * h + 1e-12;
  double noise_sq = 0.0, drift = 0.0;
  for (int i = -band; i < n + band; ++i)
    for (int j = -band; j < n + band; ++j)
      for (int l = -band; l < n + band; ++l) {
        const Vec3 p(-1.0 + i * h, -1.0 + j * h, -1.0 + l * h);
        if (p.norm() > radius) continue;
        if (mode == HjbMode::Stochastic) noise_sq = std::max(noise_sq, red.noise(p).squaredNorm());
        double b = (red.drift_matrix * p + red.drift_offset).norm();
        for (std::size_t a = 0; a < red.num_controls(); ++a) b += red.u_max[a] * (red.control_generators[a] * p).norm();
        drift = std::max(drift, b);
      }
  double dt = std::numeric_limits<double>::infinity();
  if (noise_sq > 0.0) dt = std::min(dt, 0.25 * h * h / noise_sq);
  if (drift > 0.0) dt = std::min(dt, 0.25 * h / drift);
  return {dt, noise_sq, drift};
}

class HjbSolver {
 public:
  static ValueGrid solve(const ModelSpec& model, const CostSpec& cost, const HjbOptions& opts) {
    ValueGrid g;
    g.red_ = BlochReduction::build(model, cost);
    if (!(opts.T > opts.t0)) throw ValidationError("grid: T must exceed t0");
    if (!(opts.store_dt > 0.0)) throw ValidationError("grid.store_dt: must be positive");
    g.build_lattice(opts.N, opts.band);
    g.t0_ = opts.t0;
    g.t1_ = opts.T;
    g.mode_ = opts.mode;
    g.convention_ = model.convention();
    g.model_fp_ = qfc::model_fingerprint(model);
    g.cost_fp_ = qfc::cost_fingerprint(cost);

    const CflBound cfl = hjb_cfl_bound(g.red_, opts.N, opts.band, opts.mode);
    const double span = opts.T - opts.t0;
    std::size_t stride = 1;
    if (opts.dt > 0.0) {
      if (opts.dt > cfl.dt_max * (1.0 + 1e-9)) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "grid.dt_pde=%.6g violates the CFL bound; use dt <= %.6g", opts.dt, cfl.dt_max);
        throw NumericalError(buf);
      }
      g.steps_ = step_count(opts.t0, opts.T, opts.dt);
      g.dt_ = opts.dt;
      stride = static_cast<std::size_t>(std::max(1.0, std::round(opts.store_dt / opts.dt)));
    } else {
      const auto n_store = static_cast<std::size_t>(std::max(1.0, std::round(span / opts.store_dt)));
      const double per_store = span / static_cast<double>(n_store);
      const auto per = std::isfinite(cfl.dt_max)
                           ? static_cast<std::size_t>(std::ceil(per_store / cfl.dt_max - 1e-9))
                           : std::size_t{1};
      stride = std::max<std::size_t>(1, per);
      g.steps_ = n_store * stride;
      g.dt_ = span / static_cast<double>(g.steps_);
    }
    sweep(g, opts, stride);
    return g;
  }

 private:
  struct PointData {
    std::vector<Vec3> p, drift0, noise;
    std::vector<double> cost0;
    std::vector<double> bp;   // per point, per control: B_a p (3 values)
    std::vector<double> f0p;  // per point, per control: f0_a + f_a.p
    std::vector<unsigned char> interior;
  };

  static PointData precompute(const ValueGrid& g) {
    const BlochReduction& r = g.red_;
    const std::size_t np = g.active_.size(), nu = r.num_controls();
    PointData d;
    d.p.resize(np);
    d.drift0.resize(np);
    d.noise.resize(np);
    d.cost0.resize(np);
    d.bp.resize(np * nu * 3);
    d.f0p.resize(np * nu);
    d.interior.resize(np);
    for (std::size_t k = 0; k < np; ++k) {
      const long c = g.active_[k];
      const auto idx = g.nominal(c);
      const Vec3 p = g.point(idx[0], idx[1], idx[2]);
      d.p[k] = p;
      d.drift0[k] = r.drift_matrix * p + r.drift_offset;
      d.noise[k] = r.noise(p);
      d.cost0[k] = r.c00 + r.c0.dot(p);
      for (std::size_t a = 0; a < nu; ++a) {
        const Vec3 b = r.control_generators[a] * p;
        for (int x = 0; x < 3; ++x) d.bp[(k * nu + a) * 3 + static_cast<std::size_t>(x)] = b(x);
        d.f0p[k * nu + a] = r.f0(static_cast<Eigen::Index>(a)) + r.f.row(static_cast<Eigen::Index>(a)).dot(p);
      }
      bool inner = true;
      for (int di = -1; di <= 1 && inner; ++di)
        for (int dj = -1; dj <= 1 && inner; ++dj)
          for (int dl = -1; dl <= 1 && inner; ++dl)
            inner = g.active(c + di * g.stride(0) + dj * g.stride(1) + dl);
      d.interior[k] = inner ? 1 : 0;
    }
    return d;
  }

  static void sweep(ValueGrid& g, const HjbOptions& opts, std::size_t stride) {
    const BlochReduction& r = g.red_;
    const std::size_t np = g.active_.size(), nu = r.num_controls();
    const PointData d = precompute(g);
    const int threads = resolve_threads(opts.threads);
    const bool stochastic = opts.mode == HjbMode::Stochastic;
    const double h = g.h_, dt = g.dt_;
    const long sx = g.stride(0), sy = g.stride(1), sz = g.stride(2);
    const long strides[3] = {sx, sy, sz};
    const std::vector<double> ginv(r.g_inv.data(), r.g_inv.data() + r.g_inv.size());
    const std::vector<double> gm(r.g.data(), r.g.data() + r.g.size());
    const std::vector<long>& idx = g.index_of_;

    // Working values live on the full cube so stencils index directly.
    std::vector<double> cur(idx.size(), 0.0), next(idx.size(), 0.0);
    std::vector<double> grad_field(stochastic ? 3 * idx.size() : 0, 0.0);
    for (std::size_t k = 0; k < np; ++k) cur[static_cast<std::size_t>(g.active_[k])] = r.terminal(d.p[k]);

    auto keep = [&](std::size_t step) { return step == 0 || step == g.steps_ || (opts.keep_slices && step % stride == 0); };
    auto store = [&](std::size_t step) {
      std::vector<double> s(np);
      for (std::size_t k = 0; k < np; ++k) s[k] = cur[static_cast<std::size_t>(g.active_[k])];
      g.slices_.push_back(std::move(s));
      g.slice_steps_.push_back(step);
      g.slice_times_.push_back(step == g.steps_ ? g.t1_ : g.t0_ + static_cast<double>(step) * dt);
    };
    store(g.steps_);

    auto act = [&](long c) { return idx[static_cast<std::size_t>(c)] >= 0; };
    // First derivative with second-order one-sided fallback.
    auto d1 = [&](const double* f, long c, long st) {
      const bool fp = act(c + st), fm = act(c - st);
      if (fp && fm) return (f[c + st] - f[c - st]) / (2.0 * h);
      if (fp) return act(c + 2 * st) ? (-3.0 * f[c] + 4.0 * f[c + st] - f[c + 2 * st]) / (2.0 * h) : (f[c + st] - f[c]) / h;
      if (fm) return act(c - 2 * st) ? (3.0 * f[c] - 4.0 * f[c - st] + f[c - 2 * st]) / (2.0 * h) : (f[c] - f[c - st]) / h;
      return 0.0;
    };
    auto d2 = [&](const double* f, long c, long st) {
      const bool fp = act(c + st), fm = act(c - st);
      if (fp && fm) return (f[c + st] - 2.0 * f[c] + f[c - st]) / (h * h);
      return 0.0;
    };
    auto upwind = [&](const double* f, long c, long st, double b) {
      const bool fp = act(c + st), fm = act(c - st);
      if (b > 0.0) return fp ? (f[c + st] - f[c]) / h : fm ? (f[c] - f[c - st]) / h : 0.0;
      return fm ? (f[c] - f[c - st]) / h : fp ? (f[c + st] - f[c]) / h : 0.0;
    };

    for (std::size_t step = g.steps_; step-- > 0;) {
      const double* S = cur.data();
      if (stochastic) {
        parallel_for(np, threads, [&](std::size_t b, std::size_t e) {
          for (std::size_t k = b; k < e; ++k) {
            const long c = g.active_[k];
            for (int a = 0; a < 3; ++a) grad_field[3 * static_cast<std::size_t>(c) + static_cast<std::size_t>(a)] = d1(S, c, strides[a]);
          }
        });
      }
      std::atomic<bool> bad{false};
      parallel_for(np, threads, [&](std::size_t b, std::size_t e) {
        std::vector<double> a_vec(nu), u(nu);
        for (std::size_t k = b; k < e; ++k) {
          const long c = g.active_[k];
          const bool inner = d.interior[k] != 0;
          Vec3 q;
          if (inner) {
            q << (S[c + sx] - S[c - sx]) / (2.0 * h), (S[c + sy] - S[c - sy]) / (2.0 * h), (S[c + sz] - S[c - sz]) / (2.0 * h);
          } else {
            for (int a = 0; a < 3; ++a) q(a) = d1(S, c, strides[a]);
          }
          // closed-form minimizer of C + b.q, clipped to the box
          const double* bp = &d.bp[k * nu * 3];
          for (std::size_t a = 0; a < nu; ++a)
            a_vec[a] = d.f0p[k * nu + a] + bp[3 * a] * q(0) + bp[3 * a + 1] * q(1) + bp[3 * a + 2] * q(2);
          for (std::size_t a = 0; a < nu; ++a) {
            double v = 0.0;
            for (std::size_t j = 0; j < nu; ++j) v -= ginv[a + j * nu] * a_vec[j];
            u[a] = std::clamp(v, -r.u_max[a], r.u_max[a]);
          }
          Vec3 drift = d.drift0[k];
          double run = d.cost0[k];
          for (std::size_t a = 0; a < nu; ++a) {
            drift(0) += u[a] * bp[3 * a];
            drift(1) += u[a] * bp[3 * a + 1];
            drift(2) += u[a] * bp[3 * a + 2];
            double gu = 0.0;
            for (std::size_t j = 0; j < nu; ++j) gu += gm[a + j * nu] * u[j];
            run += 0.5 * u[a] * gu + u[a] * d.f0p[k * nu + a];
          }
          double rate = run;
          if (inner) {
            for (int a = 0; a < 3; ++a) {
              const long st = strides[a];
              rate += drift(a) * (drift(a) > 0.0 ? (S[c + st] - S[c]) / h : (S[c] - S[c - st]) / h);
            }
          } else {
            for (int a = 0; a < 3; ++a) rate += drift(a) * upwind(S, c, strides[a], drift(a));
          }
          if (stochastic) {
            const Vec3& s = d.noise[k];
            double hess[3][3];
            if (inner) {
              const double ih2 = 1.0 / (h * h);
              for (int a = 0; a < 3; ++a) {
                const long st = strides[a];
                hess[a][a] = (S[c + st] - 2.0 * S[c] + S[c - st]) * ih2;
                for (int bb = a + 1; bb < 3; ++bb) {
                  const long su = strides[bb];
                  hess[a][bb] = (S[c + st + su] - S[c + st - su] - S[c - st + su] + S[c - st - su]) * 0.25 * ih2;
                }
              }
            } else {
              const double* G = grad_field.data();
              auto dg = [&](int comp, long st) {
                // derivative of gradient component `comp` along stride st
                const bool fp = act(c + st), fm = act(c - st);
                auto gv = [&](long cc) { return G[3 * cc + comp]; };
                if (fp && fm) return (gv(c + st) - gv(c - st)) / (2.0 * h);
                return 0.0;
              };
              for (int a = 0; a < 3; ++a) {
                hess[a][a] = d2(S, c, strides[a]);
                for (int bb = a + 1; bb < 3; ++bb) hess[a][bb] = 0.5 * (dg(bb, strides[a]) + dg(a, strides[bb]));
              }
            }
            double quad = 0.0;
            for (int a = 0; a < 3; ++a) {
              quad += s(a) * s(a) * hess[a][a];
              for (int bb = a + 1; bb < 3; ++bb) quad += 2.0 * s(a) * s(bb) * hess[a][bb];
            }
            rate += 0.5 * quad;
          }
          const double v = S[c] + dt * rate;
          if (!std::isfinite(v)) bad.store(true, std::memory_order_relaxed);
          next[static_cast<std::size_t>(c)] = v;
        }
      });
      if (bad.load()) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "HJB sweep produced non-finite values at time index %zu (t=%.6g)", step,
                      g.t0_ + static_cast<double>(step) * dt);
        throw NumericalError(buf);
      }
      std::swap(cur, next);
      if (keep(step)) store(step);
    }
    std::reverse(g.slices_.begin(), g.slices_.end());
    std::reverse(g.slice_steps_.begin(), g.slice_steps_.end());
    std::reverse(g.slice_times_.begin(), g.slice_times_.end());
  }
};

inline ValueGrid hjb_solve_qubit(const ModelSpec& model, const CostSpec& cost, const HjbOptions& opts = {}) {
  return HjbSolver::solve(model, cost, opts);
}

/// Feedback law u(t, p) = argmin_u {C + b(u,p).grad S}, clipped to the box.
class GridPolicy {
 public:
  explicit GridPolicy(std::shared_ptr<const ValueGrid> grid) : grid_(std::move(grid)) {
    if (!grid_) throw ValidationError("GridPolicy: null grid");
  }

  Control at(double t, const Vec3& p) const {
    const Vec3 pp = project_to_ball(p);
    return grid_->reduction().optimal_control(pp, grid_->gradient(t, pp));
  }

  Control operator()(double t, const DensityMatrix& rho) const { return at(t, bloch_from_state(rho).p); }

  FeedbackPolicy as_feedback() const {
    auto self = *this;
    return [self](double t, const DensityMatrix& rho) { return self(t, rho); };
  }

  const ValueGrid& grid() const { return *grid_; }

 private:
  std::shared_ptr<const ValueGrid> grid_;
};

inline GridPolicy extract_policy(std::shared_ptr<const ValueGrid> grid) { return GridPolicy(std::move(grid)); }
inline GridPolicy extract_policy(const ValueGrid& grid) {
  return GridPolicy(std::make_shared<const ValueGrid>(grid));
}

/// Co-states Q_k = grad S(t_k, p_k) . sigma in the traceless gauge; at the
/// final time the traceless part of the terminal operator.
inline CostateRecord costate_from_value(const ValueGrid& grid, const std::vector<double>& times,
                                        const std::vector<Vec3>& points) {
  if (times.size() != points.size()) throw ValidationError("costate_from_value: times and points differ in length");
  CostateRecord rec;
  const double eps = 1e-9 * std::max(1.0, grid.T() - grid.t0());
  for (std::size_t k = 0; k < times.size(); ++k) {
    const Vec3 p = project_to_ball(points[k]);
    rec.times.push_back(times[k]);
    rec.states.push_back(state_from_bloch(BlochPoint{p}));
    const Vec3 q = times[k] >= grid.T() - eps ? grid.reduction().s : grid.gradient(times[k], p);
    rec.costates.push_back(bloch_observable(0.0, q));
  }
  return rec;
}

inline CostateRecord costate_from_value(const ValueGrid& grid, const Trajectory& tr) {
  std::vector<Vec3> pts;
  pts.reserve(tr.size());
  for (const auto& s : tr.states) pts.push_back(bloch_from_state(s).p);
  return costate_from_value(grid, tr.times, pts);
}

inline void write_value_grid(std::ostream& os, const ValueGrid& g) {
  os << g.header_json().dump() << '\n';
  os << "k,i,j,l,t,x,y,z,S\n";
  char buf[256];
  for (std::size_t s = 0; s < g.slices_.size(); ++s) {
    for (std::size_t k = 0; k < g.active_.size(); ++k) {
      const auto n = g.nominal(g.active_[k]);
      const Vec3 p = g.point(n[0], n[1], n[2]);
      std::snprintf(buf, sizeof buf, "%zu,%d,%d,%d,%.17g,%.9g,%.9g,%.9g,%.17g\n", g.slice_steps_[s], n[0], n[1], n[2],
                    g.slice_times_[s], p(0), p(1), p(2), g.slices_[s][k]);
      os << buf;
    }
  }
}

/// Reads a grid file and checks it against the model and cost it will be used with.
inline ValueGrid read_value_grid(std::istream& is, const ModelSpec& model, const CostSpec& cost) {
  std::string line;
  if (!std::getline(is, line)) throw ValidationError("value grid file: empty");
  Json hdr;
  try {
    hdr = Json::parse(line);
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("value grid file: bad header: ") + e.what());
  }
  if (hdr.value("format", "") != "qfc-value-grid") throw ValidationError("value grid file: unknown format");
  const std::string mfp = qfc::model_fingerprint(model), cfp = qfc::cost_fingerprint(cost);
  if (hdr.at("model_fingerprint").get<std::string>() != mfp)
    throw ValidationError("value grid fingerprint mismatch: grid model " + hdr.at("model_fingerprint").get<std::string>() +
                          " (convention " + hdr.value("convention", "?") + "), config model " + mfp + " (convention " +
                          to_string(model.convention()) + ")");
  if (hdr.at("cost_fingerprint").get<std::string>() != cfp)
    throw ValidationError("value grid fingerprint mismatch: grid cost " + hdr.at("cost_fingerprint").get<std::string>() +
                          ", config cost " + cfp);
  ValueGrid g;
  g.red_ = BlochReduction::build(model, cost);
  g.build_lattice(hdr.at("N").get<int>(), hdr.at("band").get<int>());
  g.t0_ = hdr.at("t0").get<double>();
  g.t1_ = hdr.at("T").get<double>();
  g.dt_ = hdr.at("dt").get<double>();
  g.steps_ = hdr.at("steps").get<std::size_t>();
  g.mode_ = hjb_mode_from_string(hdr.at("mode").get<std::string>());
  g.convention_ = convention_from_string(hdr.at("convention").get<std::string>());
  g.model_fp_ = mfp;
  g.cost_fp_ = cfp;
  g.slice_times_ = hdr.at("slice_times").get<std::vector<double>>();
  g.slice_steps_ = hdr.at("slice_steps").get<std::vector<std::size_t>>();
  const std::size_t ns = g.slice_times_.size();
  if (ns == 0 || g.slice_steps_.size() != ns) throw ValidationError("value grid file: inconsistent slice list");
  g.slices_.assign(ns, std::vector<double>(g.active_.size(), std::numeric_limits<double>::quiet_NaN()));
  if (!std::getline(is, line)) throw ValidationError("value grid file: missing column header");
  std::size_t rows = 0, slice = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::size_t step;
    int i, j, l;
    double t, x, y, z, s;
    if (std::sscanf(line.c_str(), "%zu,%d,%d,%d,%lf,%lf,%lf,%lf,%lf", &step, &i, &j, &l, &t, &x, &y, &z, &s) != 9)
      throw ValidationError("value grid file: malformed row " + std::to_string(rows + 3));
    while (slice < ns && g.slice_steps_[slice] != step) ++slice;
    if (slice == ns) throw ValidationError("value grid file: rows out of slice order");
    const long a = g.index_at(g.cube(i, j, l));
    if (a < 0) throw ValidationError("value grid file: row outside the lattice");
    g.slices_[slice][static_cast<std::size_t>(a)] = s;
    ++rows;
  }
  if (rows != ns * g.active_.size()) throw ValidationError("value grid file: wrong number of rows");
  return g;
}

}  // namespace qfc
