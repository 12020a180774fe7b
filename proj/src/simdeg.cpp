#include "conjlab/simdeg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <thread>

namespace conjlab {

namespace {

void check_pair(const Trajectory& X, const Trajectory& Y) {
  if (X.size() != Y.size()) throw InvalidArgument("trajectories differ in length");
  if (X.size() < 2) throw InvalidArgument("trajectories need at least two samples");
  if (X.dt() != Y.dt()) throw InvalidArgument("trajectories differ in dt");
}

void check_square_pair(const Trajectory& X, const Trajectory& Y) {
  check_pair(X, Y);
  if (X.dim() != Y.dim()) throw InvalidArgument("trajectories differ in dimension");
}

double squared_error(const ConjugacyMap& map, const Trajectory& X, const Trajectory& Y, std::size_t i) {
  return (apply_map(map, i, X.time(i), X.state(i)) - Y.state(i)).squaredNorm();
}

}  // namespace

double discrete_cost(const ConjugacyMap& map, const Trajectory& X, const Trajectory& Y) {
  check_pair(X, Y);
  const std::size_t n = X.steps();
  double sum = 0.0;
  for (std::size_t i = 1; i <= n; ++i) sum += squared_error(map, X, Y, i);
  return sum / static_cast<double>(n);
}

double similarity_degree(double J) {
  if (std::isnan(J) || J < 0.0) throw InvalidArgument("similarity_degree needs J >= 0");
  if (J == 0.0) return 1.0;
  if (std::isinf(J)) return 0.0;
  return std::log1p(J) / J;
}

std::vector<std::pair<double, double>> evaluate_similarity_over_time(const ConjugacyMap& map,
                                                                     const Trajectory& X,
                                                                     const Trajectory& Y) {
  check_pair(X, Y);
  std::vector<std::pair<double, double>> curve;
  curve.reserve(X.steps());
  double sum = 0.0;
  for (std::size_t k = 1; k <= X.steps(); ++k) {
    sum += squared_error(map, X, Y, k);
    curve.emplace_back(X.time(k), similarity_degree(sum / static_cast<double>(k)));
  }
  return curve;
}

SimilarityReport make_report(std::string pair, const ConjugacyMap& map, const Trajectory& X,
                             const Trajectory& Y, bool with_curve) {
  SimilarityReport r;
  r.pair = std::move(pair);
  r.map_kind = map_kind(map);
  if (const auto* k = std::get_if<Matrix>(&map)) {
    r.K = *k;
    if (k->isIdentity(0.0)) r.map_kind = "identity";
  }
  if (with_curve) r.curve = evaluate_similarity_over_time(map, X, Y);
  r.J_N = discrete_cost(map, X, Y);
  r.rho = similarity_degree(r.J_N);
  return r;
}

Matrix solve_block(const Trajectory& X, const Trajectory& Y, std::size_t i, bool* well_conditioned) {
  const int n = X.dim();
  if (i + static_cast<std::size_t>(n) > X.size()) throw InvalidArgument("solve_block: block runs past the data");
  const Matrix xb = X.states().middleCols(static_cast<Eigen::Index>(i), n);
  const Matrix yb = Y.states().middleCols(static_cast<Eigen::Index>(i), n);
  const double cond = condition_number(xb);
  const bool ok = std::isfinite(cond) && cond <= kBlockConditionLimit;
  if (well_conditioned) *well_conditioned = ok;
  // K xb = yb  <=>  xb^T K^T = yb^T
  if (ok) return Eigen::PartialPivLU<Matrix>(xb.transpose()).solve(yb.transpose()).transpose();
  return Eigen::CompleteOrthogonalDecomposition<Matrix>(xb.transpose()).solve(yb.transpose()).transpose();
}

MapSequence algorithm1_solve_Kt(const Trajectory& X, const Trajectory& Y) {
  check_square_pair(X, Y);
  const auto n = static_cast<std::size_t>(X.dim());
  if (X.size() < n) throw InvalidArgument("algorithm1 needs at least n samples");
  const std::size_t last_anchor = X.size() - n;
  MapSequence seq;
  seq.matrices.reserve(last_anchor + 1);
  seq.invertible.reserve(last_anchor + 1);
  for (std::size_t i = 0; i <= last_anchor; ++i) {
    bool ok = false;
    seq.matrices.push_back(solve_block(X, Y, i, &ok));
    seq.invertible.push_back(ok);
  }
  return seq;
}

unsigned worker_threads() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CONJLAB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) hw = static_cast<unsigned>(std::min<long>(v, 1024));
  }
  return hw;
}

namespace {

struct Moments {
  Matrix sxx;
  Matrix sxy;
  double syy = 0.0;
  double n = 1.0;
};

Moments moments(const Trajectory& X, const Trajectory& Y) {
  const auto cols = static_cast<Eigen::Index>(X.steps());
  const auto xs = X.states().rightCols(cols);
  const auto ys = Y.states().rightCols(cols);
  Moments m;
  m.sxx = xs * xs.transpose();
  m.sxy = xs * ys.transpose();
  m.syy = ys.squaredNorm();
  m.n = static_cast<double>(cols);
  return m;
}

double moment_cost(const Moments& m, const Matrix& k) {
  const double quad = (k * m.sxx * k.transpose()).trace();
  const double cross = (k * m.sxy).trace();
  return std::max(0.0, (quad - 2.0 * cross + m.syy) / m.n);
}

}  // namespace

Algorithm2Result algorithm2_best_constant_K(const Trajectory& X, const Trajectory& Y, unsigned threads) {
  check_square_pair(X, Y);
  const auto n = static_cast<std::size_t>(X.dim());
  if (X.steps() < n) throw InvalidArgument("algorithm2 needs more than n samples");
  const std::size_t count = X.steps() - n + 1;  // i = 0..N-n
  const Moments mom = moments(X, Y);

  std::vector<double> rho(count, std::numeric_limits<double>::quiet_NaN());
  std::vector<Matrix> cand(count);
  auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      bool ok = false;
      Matrix k = solve_block(X, Y, i, &ok);
      if (!ok || !k.allFinite()) continue;
      rho[i] = similarity_degree(moment_cost(mom, k));
      cand[i] = std::move(k);
    }
  };
  if (threads == 0) threads = worker_threads();
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  if (threads <= 1) {
    work(0, count);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (count + threads - 1) / threads;
    for (unsigned w = 0; w < threads; ++w) {
      const std::size_t lo = w * chunk, hi = std::min(count, lo + chunk);
      if (lo < hi) pool.emplace_back(work, lo, hi);
    }
    for (auto& th : pool) th.join();
  }

  Algorithm2Result out;
  out.candidate_rho = rho;
  out.best_so_far.resize(count);
  double best = -1.0;
  std::size_t best_i = count;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::isnan(rho[i]) && rho[i] > best) {
      best = rho[i];
      best_i = i;
    }
    out.best_so_far[i] = std::max(best, 0.0);
  }
  const std::string pair = (X.system() ? X.system()->name : std::string("x")) + "&" +
                           (Y.system() ? Y.system()->name : std::string("y"));
  const Matrix identity = Matrix::Identity(X.dim(), X.dim());
  out.initial_rho = similarity_degree(discrete_cost(identity, X, Y));
  if (best_i == count) {
    out.all_flagged = true;
    out.K = identity;
    out.index = 0;
  } else {
    out.K = cand[best_i];
    out.index = best_i;
  }
  out.report = make_report(pair, out.K, X, Y);
  return out;
}

Matrix best_constant_K_least_squares(const Trajectory& X, const Trajectory& Y) {
  check_pair(X, Y);
  const Moments mom = moments(X, Y);
  const double cond = condition_number(mom.sxx);
  if (!std::isfinite(cond) || cond > kIllConditioned) {
    throw SingularMatrixError("least squares: Gram matrix is singular (condition " + std::to_string(cond) + ")");
  }
  // K S_xx = S_yx  <=>  S_xx K^T = S_xy
  return Eigen::LDLT<Matrix>(mom.sxx).solve(mom.sxy).transpose();
}

PolynomialMap fit_polynomial_map(const Trajectory& X, const Trajectory& Y, int m) {
  check_pair(X, Y);
  if (m < 0) throw InvalidArgument("polynomial degree must be >= 0");
  PolynomialMap p;
  p.dim = X.dim();
  p.degree = m;
  p.exponents = monomial_exponents(X.dim(), m);
  const auto terms = static_cast<Eigen::Index>(p.exponents.size());
  const auto rows = static_cast<Eigen::Index>(X.steps());
  if (rows < terms) {
    throw InvalidArgument("polyfit: " + std::to_string(rows) + " samples for " + std::to_string(terms) + " monomials");
  }
  p.coefficients = Matrix::Zero(Y.dim(), terms);
  Matrix phi(rows, terms);
  Matrix target(rows, Y.dim());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto i = static_cast<std::size_t>(r + 1);
    phi.row(r) = p.features(X.state(i)).transpose();
    target.row(r) = Y.state(i).transpose();
  }
  // Column scaling keeps high-degree monomials from dominating the rank decision.
  Vector scale = phi.colwise().norm().transpose();
  for (Eigen::Index c = 0; c < terms; ++c) scale(c) = scale(c) > 0.0 ? scale(c) : 1.0;
  const Matrix scaled = phi * scale.cwiseInverse().asDiagonal();
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(scaled);
  p.rank_deficient = cod.rank() < terms;
  const Matrix sol = cod.solve(target);  // terms x dim
  p.coefficients = (scale.cwiseInverse().asDiagonal() * sol).transpose();
  return p;
}

}  // namespace conjlab
