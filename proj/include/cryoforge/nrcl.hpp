#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "cryoforge/core/error.hpp"
#include "cryoforge/core/grid.hpp"
#include "cryoforge/core/rng.hpp"
#include "cryoforge/geometry.hpp"

namespace cryoforge::nrcl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// B x d embeddings, one per row.
struct EmbeddingBatch {
  Matrix vectors;
  bool normalized = false;

  std::size_t batch() const noexcept { return static_cast<std::size_t>(vectors.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(vectors.cols()); }
};

inline EmbeddingBatch normalized(const Matrix& m) {
  EmbeddingBatch b{m, true};
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (!(n > 0.0)) throw DegenerateInputError("cannot normalize a zero embedding (row " + std::to_string(i) + ")");
    b.vectors.row(i) /= n;
  }
  return b;
}

inline void require_normalized(const EmbeddingBatch& b, const char* who) {
  if (!b.normalized) throw ContractError(std::string(who) + ": embeddings must be L2-normalized");
  for (Eigen::Index i = 0; i < b.vectors.rows(); ++i)
    if (std::abs(b.vectors.row(i).norm() - 1.0) > 1e-6)
      throw ContractError(std::string(who) + ": row " + std::to_string(i) + " does not have unit norm");
}

inline void require_same_shape(const EmbeddingBatch& a, const EmbeddingBatch& b, const char* who) {
  if (a.vectors.rows() != b.vectors.rows() || a.vectors.cols() != b.vectors.cols())
    throw ShapeError(std::string(who) + ": embedding batches differ in shape");
}

struct LossConfig {
  double temperature = 0.1;
  double rince_c = 0.5;
  double lambda_w = 0.1;
  double sinkhorn_epsilon = 0.1;
  std::size_t sinkhorn_max_iter = 200;
  double sinkhorn_tol = 1e-6;
};

inline void validate(const LossConfig& c) {
  if (!(c.temperature > 0.0)) throw ConfigError("loss: temperature must be > 0");
  if (!(c.rince_c > 0.0 && c.rince_c <= 1.0)) throw ConfigError("loss: rince_c must be in (0, 1]");
  if (!(c.lambda_w >= 0.0)) throw ConfigError("loss: lambda_w must be >= 0");
  if (!(c.sinkhorn_epsilon > 0.0)) throw ConfigError("loss: sinkhorn_epsilon must be > 0");
  if (c.sinkhorn_max_iter < 1) throw ConfigError("loss: sinkhorn_max_iter must be >= 1");
  if (!(c.sinkhorn_tol > 0.0)) throw ConfigError("loss: sinkhorn_tol must be > 0");
}

namespace detail {

inline double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// log(1 + e^x) without overflow.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace detail

/// Symmetric exponential loss. Per anchor i with s⁺ = zᵢ·z⁺ᵢ/τ and in-batch
/// cross-view negatives s_ij = zᵢ·z⁺ⱼ/τ (j ≠ i):
///   lossᵢ = -exp(c s⁺)/c + (1/c) log(exp(c s⁺) + Σ_{j≠i} exp(c s_ij))
/// averaged over the batch.
inline double sym_loss(const EmbeddingBatch& z, const EmbeddingBatch& zp, const LossConfig& cfg) {
  validate(cfg);
  require_same_shape(z, zp, "sym_loss");
  require_normalized(z, "sym_loss");
  require_normalized(zp, "sym_loss");
  const std::size_t B = z.batch();
  if (B < 2) throw PreconditionError("sym_loss: at least 2 samples are needed for in-batch negatives");
  const double c = cfg.rince_c, tau = cfg.temperature;
  const Matrix sim = z.vectors * zp.vectors.transpose() / tau;
  double total = 0.0;
  std::vector<double> terms(B);
  for (std::size_t i = 0; i < B; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < B; ++j) terms[j] = c * sim(ii, static_cast<Eigen::Index>(j));
    const double pos = c * sim(ii, ii);
    total += -std::exp(pos) / c + detail::log_sum_exp(terms) / c;
  }
  return total / static_cast<double>(B);
}

struct TransportPlan {
  Matrix P;
  bool converged = false;
  std::size_t iterations_used = 0;
};

struct SinkhornResult {
  double cost = 0.0;
  TransportPlan plan;
};

/// Entropic OT between the two batches with cost Cᵢⱼ = |zᵢ - z⁺ⱼ|² and
/// uniform marginals, by log-domain Sinkhorn on dual potentials (f, g).
/// Each iteration fits the rows then the columns exactly; it stops when the
/// row marginals are within tol of 1/B. Returns <C, P>.
inline SinkhornResult sinkhorn_wasserstein(const EmbeddingBatch& z, const EmbeddingBatch& zp, const LossConfig& cfg) {
  validate(cfg);
  require_same_shape(z, zp, "sinkhorn_wasserstein");
  const std::size_t B = z.batch();
  if (B < 1) throw PreconditionError("sinkhorn_wasserstein: empty batch");
  const auto n = static_cast<Eigen::Index>(B);
  Matrix C(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) C(i, j) = (z.vectors.row(i) - zp.vectors.row(j)).squaredNorm();

  const double eps = cfg.sinkhorn_epsilon;
  const double log_marg = -std::log(static_cast<double>(B));
  Vector f = Vector::Zero(n), g = Vector::Zero(n);
  std::vector<double> buf(B);
  SinkhornResult res;
  auto plan = [&] {
    Matrix P(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) P(i, j) = std::exp((f(i) + g(j) - C(i, j)) / eps);
    return P;
  };
  for (std::size_t it = 1; it <= cfg.sinkhorn_max_iter; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) buf[static_cast<std::size_t>(j)] = (g(j) - C(i, j)) / eps;
      f(i) = eps * (log_marg - detail::log_sum_exp(buf));
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) buf[static_cast<std::size_t>(i)] = (f(i) - C(i, j)) / eps;
      g(j) = eps * (log_marg - detail::log_sum_exp(buf));
    }
    res.plan.iterations_used = it;
    const Matrix P = plan();
    const double violation = (P.rowwise().sum().array() - 1.0 / static_cast<double>(B)).abs().maxCoeff();
    if (violation < cfg.sinkhorn_tol) {
      res.plan.converged = true;
      break;
    }
  }
  res.plan.P = plan();
  res.cost = (C.array() * res.plan.P.array()).sum();
  return res;
}

/// Noise-aware InfoNCE with one clean positive and one noisy negative per
/// anchor: -log(e^{a}/(e^{a} + e^{b})), a = zᵢ·cleanᵢ/τ, b = zᵢ·noisyᵢ/τ.
inline double infonce_loss(const EmbeddingBatch& z, const EmbeddingBatch& z_clean, const EmbeddingBatch& z_noisy,
                           const LossConfig& cfg) {
  validate(cfg);
  require_same_shape(z, z_clean, "infonce_loss");
  require_same_shape(z, z_noisy, "infonce_loss");
  require_normalized(z, "infonce_loss");
  require_normalized(z_clean, "infonce_loss");
  require_normalized(z_noisy, "infonce_loss");
  const std::size_t B = z.batch();
  if (B < 1) throw PreconditionError("infonce_loss: empty batch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(B); ++i) {
    const double a = z.vectors.row(i).dot(z_clean.vectors.row(i)) / cfg.temperature;
    const double b = z.vectors.row(i).dot(z_noisy.vectors.row(i)) / cfg.temperature;
    total += detail::softplus(b - a);
  }
  return total / static_cast<double>(B);
}

/// Maps a (view, reference) pair of volumes to an embedding.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual Vector encode(const DensityVolume& view, const DensityVolume& reference) const = 0;
};

/// Deterministic fixture: a seeded Gaussian random projection of the view,
/// L2-normalized. The reference volume is ignored.
class LinearProjectionEncoder : public Encoder {
 public:
  LinearProjectionEncoder(std::size_t output_dim, std::uint64_t seed) : dim_(output_dim), seed_(seed) {
    if (dim_ < 1) throw ConfigError("encoder: output dimension must be >= 1");
  }

  Vector encode(const DensityVolume& view, const DensityVolume&) const override {
    Vector out = Vector::Zero(static_cast<Eigen::Index>(dim_));
    for (std::size_t r = 0; r < dim_; ++r) {
      CounterRng rng(derive_key(seed_, {r}));
      double acc = 0.0;
      for (float v : view.data) acc += rng.normal() * static_cast<double>(v);
      out(static_cast<Eigen::Index>(r)) = acc;
    }
    const double n = out.norm();
    if (n > 0.0) out /= n;
    return out;
  }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

struct NrclBreakdown {
  double sym_12 = 0.0;   // sym(q1, k2)
  double wass_12 = 0.0;  // wass(q1, k2), unweighted
  double sym_21 = 0.0;   // sym(q2, k1)
  double wass_21 = 0.0;
  double instance = 0.0;  // sym_12 + λ wass_12 + sym_21 + λ wass_21
  double noise = 0.0;     // infonce(q1, k_clean, k_noisy)
  double total = 0.0;     // instance + noise
};

/// Combined loss from already-encoded batches.
inline NrclBreakdown nrcl_losses(const EmbeddingBatch& q1, const EmbeddingBatch& q2, const EmbeddingBatch& k1,
                                 const EmbeddingBatch& k2, const EmbeddingBatch& k_clean,
                                 const EmbeddingBatch& k_noisy, const LossConfig& cfg) {
  NrclBreakdown b;
  b.sym_12 = sym_loss(q1, k2, cfg);
  b.wass_12 = sinkhorn_wasserstein(q1, k2, cfg).cost;
  b.sym_21 = sym_loss(q2, k1, cfg);
  b.wass_21 = sinkhorn_wasserstein(q2, k1, cfg).cost;
  b.instance = b.sym_12 + cfg.lambda_w * b.wass_12 + b.sym_21 + cfg.lambda_w * b.wass_21;
  b.noise = infonce_loss(q1, k_clean, k_noisy, cfg);
  b.total = b.instance + b.noise;
  return b;
}

namespace detail {

inline EmbeddingBatch encode_batch(const Encoder& enc, const std::vector<DensityVolume>& views,
                                   const std::vector<DensityVolume>& refs, const char* what) {
  if (views.empty()) throw PreconditionError("nrcl_step: empty batch");
  Matrix m;
  for (std::size_t i = 0; i < views.size(); ++i) {
    const Vector v = enc.encode(views[i], refs[i]);
    if (i == 0) m.resize(static_cast<Eigen::Index>(views.size()), v.size());
    if (v.size() != m.cols()) throw ContractError(std::string("nrcl_step: ") + what + " embedding size varies");
    if (std::abs(v.norm() - 1.0) > 1e-6)
      throw ContractError(std::string("nrcl_step: ") + what + " embedding " + std::to_string(i) +
                          " is not L2-normalized");
    m.row(static_cast<Eigen::Index>(i)) = v.transpose();
  }
  return {m, true};
}

}  // namespace detail

/// One evaluation of the contrastive workflow (no parameter updates):
///   X1 = T X, X2 = T' X, X1_clean = T X_clean, X1_noisy = T X_noisy
///   q1, q2 = f_q(X1, X), f_q(X2, X)
///   k1, k2 = f_k(X1, X), f_k(X2, X)
///   k_clean, k_noisy = f_k(X1_clean, X), f_k(X1_noisy, X)
inline NrclBreakdown nrcl_step(const std::vector<DensityVolume>& x, const std::vector<DensityVolume>& x_clean,
                               const std::vector<DensityVolume>& x_noisy,
                               const std::vector<geometry::RigidTransform>& t,
                               const std::vector<geometry::RigidTransform>& t_prime, const Encoder& encoder_q,
                               const Encoder& encoder_k, const LossConfig& cfg) {
  const std::size_t B = x.size();
  if (x_clean.size() != B || x_noisy.size() != B || t.size() != B || t_prime.size() != B)
    throw ShapeError("nrcl_step: batch components differ in length");
  std::vector<DensityVolume> x1, x2, x1c, x1n;
  for (std::size_t i = 0; i < B; ++i) {
    x1.push_back(geometry::apply_rigid(x[i], t[i]));
    x2.push_back(geometry::apply_rigid(x[i], t_prime[i]));
    x1c.push_back(geometry::apply_rigid(x_clean[i], t[i]));
    x1n.push_back(geometry::apply_rigid(x_noisy[i], t[i]));
  }
  const auto q1 = detail::encode_batch(encoder_q, x1, x, "query");
  const auto q2 = detail::encode_batch(encoder_q, x2, x, "query");
  const auto k1 = detail::encode_batch(encoder_k, x1, x, "key");
  const auto k2 = detail::encode_batch(encoder_k, x2, x, "key");
  const auto kc = detail::encode_batch(encoder_k, x1c, x, "key");
  const auto kn = detail::encode_batch(encoder_k, x1n, x, "key");
  return nrcl_losses(q1, q2, k1, k2, kc, kn, cfg);
}

/// k <- m k + (1 - m) q, elementwise.
inline Vector momentum_update(const Vector& params_q, const Vector& params_k, double m) {
  if (params_q.size() != params_k.size()) throw ShapeError("momentum_update: parameter vectors differ in length");
  if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("momentum_update: m must be in [0, 1]");
  return m * params_k + (1.0 - m) * params_q;
}

}  // namespace cryoforge::nrcl
