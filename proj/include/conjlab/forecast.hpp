#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "conjlab/dynsys.hpp"
#include "conjlab/maps.hpp"

namespace conjlab {

/// Consecutive trajectory windows of equal length, earliest first; each window
/// starts where the previous one ends.
class SegmentSeries {
 public:
  SegmentSeries() = default;
  explicit SegmentSeries(std::vector<Trajectory> segments);

  /// Cuts `traj` into n windows of `steps_per_segment` steps each.
  static SegmentSeries split(const Trajectory& traj, std::size_t n, std::size_t steps_per_segment);

  std::size_t size() const { return segments_.size(); }
  const Trajectory& operator[](std::size_t i) const { return segments_[i]; }
  const std::vector<Trajectory>& segments() const { return segments_; }
  double window() const { return segments_.front().t_end() - segments_.front().t0(); }

 private:
  std::vector<Trajectory> segments_;
};

/// Relative endpoint mismatch tolerated between consecutive windows.
inline constexpr double kStitchTolerance = 1e-9;

struct PerturbationSpec {
  double epsilon = 0.0;
  std::uint64_t seed = 0;
};

struct PredictionResult {
  Vector state;               // predicted (or inferred) state
  Trajectory segment;         // K^{-1} applied to the window next to the target
  Matrix K;
  double fit_residual = 0.0;  // RMS of K c - y over the shared samples
  double condition = 0.0;     // condition number of K
};

/// Re-integrates each window from its start with f + eps, eps a seeded constant
/// drift of relative size epsilon; outside its own window the companion holds
/// its end value.
std::vector<Trajectory> companion_segments(const SegmentSeries& series, const SystemSpec& f,
                                           const PerturbationSpec& eps, const IntegratorConfig& cfg);

/// History y_1..y_n covering [-nT, 0]. K is fitted by least squares on
/// K c_{k+1}(tau) = y_k(tau), where c_{k+1} is the companion of window k + 1,
/// and the prediction is x(T) = K^{-1} y_n(0).
PredictionResult predict_future(const SegmentSeries& history, const SystemSpec* f = nullptr,
                                const PerturbationSpec& eps = {}, const IntegratorConfig& cfg = {});

/// Mirror of predict_future: future y_1..y_n covering [0, nT]; K c_k = y_{k+1}
/// and the inferred state is x(-T) = K^{-1} y_1(0).
PredictionResult infer_past(const SegmentSeries& future, const SystemSpec* f = nullptr,
                            const PerturbationSpec& eps = {}, const IntegratorConfig& cfg = {});

/// Per-sample K(t) with K(t)[x, c_1, .., c_{n-1}] = [y, y_1, .., y_{n-1}].
MapSequence exact_prediction_map(const Trajectory& x, const std::vector<Trajectory>& companions,
                                 const Trajectory& y, const std::vector<Trajectory>& y_companions);

/// Largest residual |K(t) X(t) - Y(t)|_F over non-flagged samples.
double stacked_residual(const MapSequence& K, const Trajectory& x, const std::vector<Trajectory>& companions,
                        const Trajectory& y, const std::vector<Trajectory>& y_companions);

/// Embedding dimension 2 ceil(d) + 1.
int takens_dimension(double d_attractor);

}  // namespace conjlab
