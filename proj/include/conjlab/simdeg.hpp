#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "conjlab/dynsys.hpp"
#include "conjlab/maps.hpp"

namespace conjlab {

/// J_N = (1/N) sum_{i=1..N} |K(i) x(i) - y(i)|^2.
double discrete_cost(const ConjugacyMap& map, const Trajectory& X, const Trajectory& Y);

/// rho(J) = log(1 + J) / J, with rho(0) = 1 and rho(+inf) = 0.
double similarity_degree(double J);

/// (t_k, rho(J_k)) for k = 1..N where J_k averages the first k squared errors.
std::vector<std::pair<double, double>> evaluate_similarity_over_time(const ConjugacyMap& map,
                                                                     const Trajectory& X,
                                                                     const Trajectory& Y);

struct SimilarityReport {
  std::string pair;
  std::string map_kind;
  double J_N = 0.0;
  double rho = 1.0;
  std::optional<Matrix> K;
  std::vector<std::pair<double, double>> curve;
};

SimilarityReport make_report(std::string pair, const ConjugacyMap& map, const Trajectory& X,
                             const Trajectory& Y, bool with_curve = true);

/// Condition number above which a block solve is flagged and replaced by least squares.
inline constexpr double kBlockConditionLimit = 1e12;

/// Solve K(i) [x(i) .. x(i+n-1)] = [y(i) .. y(i+n-1)]. Sets `well_conditioned`.
Matrix solve_block(const Trajectory& X, const Trajectory& Y, std::size_t i, bool* well_conditioned = nullptr);

/// One matrix per sample; samples past the last full block reuse it.
MapSequence algorithm1_solve_Kt(const Trajectory& X, const Trajectory& Y);

struct Algorithm2Result {
  Matrix K;
  std::size_t index = 0;
  double initial_rho = 0.0;
  SimilarityReport report;
  std::vector<double> candidate_rho;  // NaN for flagged blocks
  std::vector<double> best_so_far;
  bool all_flagged = false;
};

/// Threads used for candidate evaluation: CONJLAB_THREADS if set, else the hardware count.
unsigned worker_threads();

/// Best constant K among the block solutions K(i), i = 0..N-n, ranked by rho.
Algorithm2Result algorithm2_best_constant_K(const Trajectory& X, const Trajectory& Y, unsigned threads = 0);

/// Global minimizer (sum y x^T)(sum x x^T)^{-1} over i = 1..N.
Matrix best_constant_K_least_squares(const Trajectory& X, const Trajectory& Y);

/// Least-squares polynomial map of total degree m over samples i = 1..N.
PolynomialMap fit_polynomial_map(const Trajectory& X, const Trajectory& Y, int m);

}  // namespace conjlab
