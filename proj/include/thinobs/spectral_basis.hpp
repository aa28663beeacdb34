#ifndef THINOBS_SPECTRAL_BASIS_HPP
#define THINOBS_SPECTRAL_BASIS_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "thinobs/quadrature.hpp"

namespace thinobs {

/// Raised when a trace violates the even symmetry or admissibility assumptions.
struct InvalidTrace : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double eigenvalue_of_homogeneity(double mu, int d) {
  if (d < 2) throw std::invalid_argument("eigenvalue_of_homogeneity: d < 2");
  if (mu < 0.0) throw std::invalid_argument("eigenvalue_of_homogeneity: mu < 0");
  return mu * (mu + d - 2.0);
}

inline double homogeneity_of_eigenvalue(double lambda, int d) {
  if (d < 2) throw std::invalid_argument("homogeneity_of_eigenvalue: d < 2");
  if (lambda < 0.0) throw std::invalid_argument("homogeneity_of_eigenvalue: lambda < 0");
  double b = d - 2.0;
  // Stable form of (-b + sqrt(b^2 + 4 lambda)) / 2.
  double s = std::sqrt(b * b + 4.0 * lambda);
  return s + b > 0.0 ? 2.0 * lambda / (s + b) : 0.5 * s;
}

struct Mode {
  int index = 0;
  double alpha = 0.0;
  double lambda = 0.0;
  int degree = 0;  ///< l for d = 3, k for d = 2, 2*alpha for slit modes
  int order = 0;   ///< signed azimuthal order in d = 3 (negative: sine); 0 otherwise
  std::string label;
};

/// Sample grid of a mode table: nodes, their angles, and the index of the
/// mirror node under x_d -> -x_d.
struct TraceGrid {
  SphereRule nodes;
  std::vector<std::vector<double>> angles;
  std::vector<std::size_t> mirror;
};

class ModeTable {
 public:
  int d = 2;
  int K = 0;
  bool slit = false;
  std::vector<Mode> entries;

  std::size_t size() const { return entries.size(); }

  /// Values and tangential gradients of all modes at a unit vector x.
  /// Either output pointer may be null.
  void evaluate(const Point& x, double* values, Point* grads) const {
    if (d == 2 && slit) return eval_slit(x, values, grads);
    if (d == 2) return eval_circle(x, values, grads);
    return eval_sphere(x, values, grads);
  }

  std::vector<double> values_at(const Point& x) const {
    std::vector<double> v(size());
    evaluate(x, v.data(), nullptr);
    return v;
  }

  /// Quadrature grid used by expand/synthesize.
  const TraceGrid& grid() const { return grid_; }

  /// Mode values at n equally spaced equator points (d = 3), row-major
  /// n x size(). Computed once per table.
  const std::vector<double>& equator_samples(int n) const {
    std::call_once(equator_->once, [&] {
      equator_->n = n;
      equator_->values.resize(static_cast<std::size_t>(n) * size());
      for (int i = 0; i < n; ++i) {
        double t = 2.0 * std::numbers::pi * i / n;
        evaluate({std::cos(t), std::sin(t), 0.0}, equator_->values.data() + static_cast<std::size_t>(i) * size(), nullptr);
      }
    });
    if (equator_->n != n) throw std::invalid_argument("equator_samples: cached for a different n");
    return equator_->values;
  }

  /// Index of the mode with the given homogeneity and order, or -1.
  int find(double alpha, int order) const {
    for (const auto& m : entries)
      if (std::abs(m.alpha - alpha) < 1e-9 && m.order == order) return m.index;
    return -1;
  }

  friend ModeTable build_mode_table(int d, int K, bool slit);

 private:
  struct SphPoly {
    int l = 0, k = 0;
    bool sine = false;
    double norm = 1.0;
    std::vector<double> b;  ///< coefficient of z^{l-k-2i} r^{2i}
  };
  std::vector<SphPoly> poly_;
  TraceGrid grid_;
  struct EquatorCache {
    std::once_flag once;
    int n = 0;
    std::vector<double> values;
  };
  std::shared_ptr<EquatorCache> equator_ = std::make_shared<EquatorCache>();

  void eval_circle(const Point& x, double* v, Point* g) const {
    std::complex<double> w(x[0], x[1]);
    int kmax = entries.empty() ? 0 : entries.back().degree;
    std::vector<std::complex<double>> pw(kmax + 1);
    pw[0] = 1.0;
    for (int k = 1; k <= kmax; ++k) pw[k] = pw[k - 1] * w;
    for (std::size_t j = 0; j < entries.size(); ++j) {
      int k = entries[j].degree;
      double nk = k == 0 ? 1.0 / std::sqrt(2.0 * std::numbers::pi) : 1.0 / std::sqrt(std::numbers::pi);
      if (v) v[j] = nk * pw[k].real();
      if (g) {
        if (k == 0) {
          g[j] = {0.0, 0.0, 0.0};
        } else {
          std::complex<double> dk = double(k) * pw[k - 1];
          g[j] = tangential(nk * Point{dk.real(), -dk.imag(), 0.0}, x);
        }
      }
    }
  }

  void eval_slit(const Point& x, double* v, Point* g) const {
    double th = std::atan2(x[1], x[0]);
    if (th < 0.0) th += 2.0 * std::numbers::pi;
    const double n = 1.0 / std::sqrt(std::numbers::pi);
    Point t{-std::sin(th), std::cos(th), 0.0};
    for (std::size_t j = 0; j < entries.size(); ++j) {
      double a = entries[j].alpha;
      if (v) v[j] = n * std::sin(a * th);
      if (g) g[j] = (n * a * std::cos(a * th)) * t;
    }
  }

  void eval_sphere(const Point& x, double* v, Point* g) const {
    int L = K;
    std::complex<double> w(x[0], x[1]);
    std::vector<std::complex<double>> pw(L + 1);
    pw[0] = 1.0;
    for (int k = 1; k <= L; ++k) pw[k] = pw[k - 1] * w;
    std::vector<double> zp(L + 2, 1.0);
    for (int i = 1; i <= L + 1; ++i) zp[i] = zp[i - 1] * x[2];
    double r2 = dot(x, x);
    std::vector<double> rp(L + 2, 1.0);
    for (int i = 1; i <= L + 1; ++i) rp[i] = rp[i - 1] * r2;
    for (std::size_t j = 0; j < poly_.size(); ++j) {
      const SphPoly& P = poly_[j];
      double q = 0.0;
      Point gq{0.0, 0.0, 0.0};
      for (std::size_t i = 0; i < P.b.size(); ++i) {
        int p = P.l - P.k - 2 * static_cast<int>(i);
        q += P.b[i] * zp[p] * rp[i];
        if (g) {
          if (p > 0) gq[2] += P.b[i] * p * zp[p - 1] * rp[i];
          if (i > 0) {
            double c = P.b[i] * zp[p] * 2.0 * double(i) * rp[i - 1];
            gq = gq + c * x;
          }
        }
      }
      double a;
      Point ga{0.0, 0.0, 0.0};
      if (P.k == 0) {
        a = 1.0;
      } else {
        std::complex<double> dk = double(P.k) * pw[P.k - 1];
        if (!P.sine) {
          a = pw[P.k].real();
          ga = {dk.real(), -dk.imag(), 0.0};
        } else {
          a = pw[P.k].imag();
          ga = {dk.imag(), dk.real(), 0.0};
        }
      }
      if (v) v[j] = P.norm * a * q;
      if (g) g[j] = tangential(P.norm * (q * ga + a * gq), x);
    }
  }
};

inline ModeTable build_mode_table(int d, int K, bool slit = false) {
  if (d != 2 && d != 3) throw std::invalid_argument("build_mode_table: only d in {2,3} has a sampled basis");
  if (K < 0) throw std::invalid_argument("build_mode_table: K must be nonnegative");
  if (slit && d != 2) throw std::invalid_argument("build_mode_table: slit tables exist only for d = 2");
  ModeTable t;
  t.d = d;
  t.K = K;
  t.slit = slit;
  if (d == 2 && !slit) {
    for (int k = 0; k <= K; ++k) {
      Mode m;
      m.index = k;
      m.alpha = k;
      m.lambda = eigenvalue_of_homogeneity(k, 2);
      m.degree = k;
      m.label = k == 0 ? "1" : "cos(" + std::to_string(k) + "t)";
      t.entries.push_back(m);
    }
  } else if (slit) {
    for (int j = 0; j <= K; ++j) {
      Mode m;
      m.index = j;
      m.alpha = j + 0.5;
      m.lambda = m.alpha * m.alpha;
      m.degree = 2 * j + 1;
      m.label = "sin(" + std::to_string(2 * j + 1) + "t/2)";
      t.entries.push_back(m);
    }
  } else {
    for (int l = 0; l <= K; ++l) {
      for (int k = 0; k <= l; ++k) {
        if ((l + k) % 2 != 0) continue;
        for (int s = 0; s < (k == 0 ? 1 : 2); ++s) {
          ModeTable::SphPoly P;
          P.l = l;
          P.k = k;
          P.sine = s == 1;
          double nrm = (2.0 * l + 1.0) / (4.0 * std::numbers::pi) * std::tgamma(l - k + 1.0) / std::tgamma(l + k + 1.0);
          P.norm = std::sqrt(nrm * (k == 0 ? 1.0 : 2.0));
          for (int i = 0; 2 * i <= l - k; ++i) {
            int p = l - 2 * i;
            double a = (i % 2 ? -1.0 : 1.0) * std::tgamma(2.0 * l - 2.0 * i + 1.0) /
                       (std::pow(2.0, l) * std::tgamma(i + 1.0) * std::tgamma(l - i + 1.0) * std::tgamma(p + 1.0));
            P.b.push_back(a * std::tgamma(p + 1.0) / std::tgamma(p - k + 1.0));
          }
          Mode m;
          m.index = static_cast<int>(t.entries.size());
          m.alpha = l;
          m.lambda = eigenvalue_of_homogeneity(l, 3);
          m.degree = l;
          m.order = P.sine ? -k : k;
          m.label = "Y(" + std::to_string(l) + "," + std::to_string(m.order) + ")";
          t.entries.push_back(m);
          t.poly_.push_back(P);
        }
      }
    }
  }
  // Sample grid.
  TraceGrid& G = t.grid_;
  if (d == 2) {
    int N = 4 * K + 16;
    Rule1D th = trapezoid_circle(N);
    for (int i = 0; i < N; ++i) {
      G.nodes.push_back({circle_point(th.x[i]), th.w[i]});
      G.angles.push_back({th.x[i]});
      G.mirror.push_back(static_cast<std::size_t>((N - i) % N));
    }
  } else {
    int nz = 2 * K + 8, nphi = 4 * K + 16;
    Rule1D g = gauss_legendre(nz);
    for (int i = 0; i < nz; ++i) {
      double z = g.x[i], s = std::sqrt(std::max(0.0, 1.0 - z * z));
      for (int k = 0; k < nphi; ++k) {
        double ph = 2.0 * std::numbers::pi * k / nphi;
        G.nodes.push_back({{s * std::cos(ph), s * std::sin(ph), z}, g.w[i] * 2.0 * std::numbers::pi / nphi});
        G.angles.push_back({std::acos(z), ph});
        G.mirror.push_back(static_cast<std::size_t>((nz - 1 - i) * nphi + k));
      }
    }
  }
  return t;
}

/// Shared immutable table for (d, K, slit); built on first use.
inline std::shared_ptr<const ModeTable> make_table(int d, int K, bool slit = false) {
  static std::mutex mutex;
  static std::map<std::tuple<int, int, bool>, std::shared_ptr<const ModeTable>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& t = cache[{d, K, slit}];
  if (!t) t = std::make_shared<const ModeTable>(build_mode_table(d, K, slit));
  return t;
}

/// A boundary trace as coefficients over an orthonormal mode table.
struct TraceExpansion {
  std::shared_ptr<const ModeTable> table;
  std::vector<double> coef;
  double residual = 0.0;  ///< sampled energy not captured by the table

  int d() const { return table->d; }

  double norm_sq() const {
    double s = 0.0;
    for (double c : coef) s += c * c;
    return s;
  }

  /// sum_j lambda_j c_j^2, the squared L2 norm of the angular gradient.
  double grad_norm_sq() const {
    double s = 0.0;
    for (std::size_t j = 0; j < coef.size(); ++j) s += table->entries[j].lambda * coef[j] * coef[j];
    return s;
  }

  double value(const Point& x) const {
    std::vector<double> v(coef.size());
    table->evaluate(x, v.data(), nullptr);
    double s = 0.0;
    for (std::size_t j = 0; j < coef.size(); ++j) s += coef[j] * v[j];
    return s;
  }

  void value_grad(const Point& x, double& val, Point& grad) const {
    std::vector<double> v(coef.size());
    std::vector<Point> g(coef.size());
    table->evaluate(x, v.data(), g.data());
    val = 0.0;
    grad = {0.0, 0.0, 0.0};
    for (std::size_t j = 0; j < coef.size(); ++j) {
      val += coef[j] * v[j];
      grad = grad + coef[j] * g[j];
    }
  }

  TraceExpansion operator+(const TraceExpansion& o) const {
    if (table.get() != o.table.get() && (table->d != o.table->d || table->K != o.table->K || table->slit != o.table->slit))
      throw std::invalid_argument("TraceExpansion: table mismatch");
    TraceExpansion r = *this;
    for (std::size_t j = 0; j < coef.size(); ++j) r.coef[j] += o.coef[j];
    r.residual = 0.0;
    return r;
  }

  TraceExpansion scaled(double s) const {
    TraceExpansion r = *this;
    for (double& c : r.coef) c *= s;
    r.residual *= s * s;
    return r;
  }
};

inline TraceExpansion zero_trace(std::shared_ptr<const ModeTable> table) {
  TraceExpansion e;
  e.table = std::move(table);
  e.coef.assign(e.table->size(), 0.0);
  return e;
}

/// Projects samples taken on the table's grid onto the modes.
inline TraceExpansion expand_trace(const std::vector<double>& samples, std::shared_ptr<const ModeTable> table,
                                   double even_tol = 1e-9) {
  const TraceGrid& G = table->grid();
  if (samples.size() != G.nodes.size()) throw std::invalid_argument("expand_trace: sample count does not match grid");
  double smax = 0.0, asym = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    smax = std::max(smax, std::abs(samples[i]));
    asym = std::max(asym, std::abs(samples[i] - samples[G.mirror[i]]));
  }
  if (asym > even_tol * (1.0 + smax)) throw InvalidTrace("expand_trace: trace is not even in x_d");
  TraceExpansion e = zero_trace(table);
  std::vector<double> v(table->size());
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    table->evaluate(G.nodes[i].x, v.data(), nullptr);
    double ws = G.nodes[i].w * samples[i];
    total += ws * samples[i];
    for (std::size_t j = 0; j < v.size(); ++j) e.coef[j] += ws * v[j];
  }
  e.residual = std::max(0.0, total - e.norm_sq());
  return e;
}

/// Evaluates sum_j c_j phi_j on the table's grid.
inline std::vector<double> synthesize_trace(const TraceExpansion& e) {
  const TraceGrid& G = e.table->grid();
  std::vector<double> out(G.nodes.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = e.value(G.nodes[i].x);
  return out;
}

/// Samples an arbitrary function on the table's grid.
template <class F>
std::vector<double> sample_on_grid(const ModeTable& t, F&& f) {
  const TraceGrid& G = t.grid();
  std::vector<double> out(G.nodes.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(G.nodes[i].x);
  return out;
}

inline nlohmann::json mode_table_to_json(const ModeTable& t) {
  nlohmann::json j;
  j["d"] = t.d;
  j["K"] = t.K;
  j["slit"] = t.slit;
  j["modes"] = nlohmann::json::array();
  for (const auto& m : t.entries)
    j["modes"].push_back({{"j", m.index}, {"alpha", m.alpha}, {"lambda", m.lambda}, {"order", m.order}, {"label", m.label}});
  return j;
}

inline nlohmann::json trace_to_json(const TraceExpansion& e, bool with_samples = false) {
  nlohmann::json j;
  j["d"] = e.table->d;
  j["slit"] = e.table->slit;
  j["form"] = with_samples ? "sampled" : "fourier";
  j["modes"] = nlohmann::json::array();
  for (std::size_t k = 0; k < e.coef.size(); ++k) {
    const Mode& m = e.table->entries[k];
    j["modes"].push_back({{"alpha", m.alpha}, {"order", m.order}, {"coef", e.coef[k]}});
  }
  j["samples"] = nlohmann::json::array();
  if (with_samples) {
    std::vector<double> s = synthesize_trace(e);
    const TraceGrid& G = e.table->grid();
    for (std::size_t i = 0; i < s.size(); ++i) j["samples"].push_back({G.angles[i], s[i]});
  }
  return j;
}

/// Reads a trace file. Fourier traces size the table to their highest mode
/// unless a larger K is requested; sampled traces must lie on the grid of
/// the table of order K.
inline TraceExpansion trace_from_json(const nlohmann::json& j, int K = -1) {
  int d = j.at("d").get<int>();
  bool slit = j.value("slit", false);
  std::string form = j.at("form").get<std::string>();
  if (form == "fourier") {
    double amax = 0.0;
    for (const auto& m : j.at("modes")) amax = std::max(amax, m.at("alpha").get<double>());
    int need = slit ? static_cast<int>(std::ceil(amax - 0.5 - 1e-9)) : static_cast<int>(std::ceil(amax - 1e-9));
    auto table = make_table(d, std::max(K, need), slit);
    TraceExpansion e = zero_trace(table);
    for (const auto& m : j.at("modes")) {
      int idx = table->find(m.at("alpha").get<double>(), m.value("order", 0));
      if (idx < 0) throw InvalidTrace("trace_from_json: mode not in the even basis");
      e.coef[idx] += m.at("coef").get<double>();
    }
    return e;
  }
  if (form == "sampled") {
    if (K < 0) throw std::invalid_argument("trace_from_json: sampled traces need an explicit K");
    auto table = make_table(d, K, slit);
    std::vector<double> s;
    for (const auto& item : j.at("samples")) s.push_back(item.at(1).get<double>());
    return expand_trace(s, table);
  }
  throw std::invalid_argument("trace_from_json: form must be fourier or sampled");
}

}  // namespace thinobs

#endif
