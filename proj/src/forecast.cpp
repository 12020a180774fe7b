#include "conjlab/forecast.hpp"

#include <cmath>
#include <random>

namespace conjlab {

SegmentSeries::SegmentSeries(std::vector<Trajectory> segments) : segments_(std::move(segments)) {
  if (segments_.empty()) throw InvalidArgument("segment series is empty");
  const auto& first = segments_.front();
  if (first.size() < 2) throw InvalidArgument("segments need at least two samples");
  for (std::size_t k = 0; k < segments_.size(); ++k) {
    const auto& s = segments_[k];
    if (s.size() != first.size() || s.dt() != first.dt() || s.dim() != first.dim()) {
      throw InvalidArgument("segments differ in length, dt or dimension");
    }
    if (k == 0) continue;
    const auto& prev = segments_[k - 1];
    const Vector end = prev.back();
    const double gap = (end - s.front()).norm();
    if (gap > kStitchTolerance * (1.0 + end.norm())) {
      throw InvalidArgument("segments " + std::to_string(k - 1) + " and " + std::to_string(k) + " do not join");
    }
    if (std::abs(prev.t_end() - s.t0()) > 1e-9 * (1.0 + std::abs(s.t0()))) {
      throw InvalidArgument("segment " + std::to_string(k) + " does not start where the previous one ends");
    }
  }
}

SegmentSeries SegmentSeries::split(const Trajectory& traj, std::size_t n, std::size_t steps_per_segment) {
  if (n == 0 || steps_per_segment == 0) throw InvalidArgument("split needs n >= 1 and at least one step per segment");
  if (n * steps_per_segment > traj.steps()) throw InvalidArgument("trajectory is too short to split");
  std::vector<Trajectory> segs;
  segs.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t first = k * steps_per_segment;
    Matrix states = traj.states().middleCols(static_cast<Eigen::Index>(first),
                                             static_cast<Eigen::Index>(steps_per_segment + 1));
    segs.emplace_back(traj.time(first), traj.dt(), std::move(states), traj.system());
  }
  return SegmentSeries(std::move(segs));
}

std::vector<Trajectory> companion_segments(const SegmentSeries& series, const SystemSpec& f,
                                           const PerturbationSpec& eps, const IntegratorConfig& cfg) {
  if (eps.epsilon < 0.0) throw InvalidArgument("perturbation epsilon must be >= 0");
  std::mt19937_64 rng(eps.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Trajectory> out;
  out.reserve(series.size());
  for (const auto& seg : series.segments()) {
    Vector drift = Vector::Zero(seg.dim());
    if (eps.epsilon > 0.0) {
      for (Eigen::Index i = 0; i < drift.size(); ++i) drift(i) = normal(rng);
      drift *= eps.epsilon * (1.0 + seg.front().norm()) / std::max(drift.norm(), 1e-300);
    }
    SystemSpec perturbed = SystemSpec::make_custom(
        f.name + "+eps", f.dim,
        [&f, drift](double t, const Vector& x) -> Vector { return eval_field(f, t, x) + drift; });
    IntegratorConfig c = cfg;
    c.dt = seg.dt();
    Trajectory comp = integrate(perturbed, seg.front(), seg.t0(), seg.t_end() - seg.t0(), c);
    if (comp.size() != seg.size()) throw NumericalError("companion grid does not match its window");
    out.push_back(Trajectory(seg.t0(), seg.dt(), comp.states(), seg.system()));
  }
  return out;
}

namespace {

// Least-squares K = I + D with minimum-norm D for K * source = target.
PredictionResult fit_shift(const std::vector<const Trajectory*>& source, const std::vector<const Trajectory*>& target) {
  const int n = source.front()->dim();
  const auto per = static_cast<Eigen::Index>(source.front()->size());
  const auto cols = per * static_cast<Eigen::Index>(source.size());
  Matrix C(n, cols), Y(n, cols);
  for (std::size_t k = 0; k < source.size(); ++k) {
    C.middleCols(static_cast<Eigen::Index>(k) * per, per) = source[k]->states();
    Y.middleCols(static_cast<Eigen::Index>(k) * per, per) = target[k]->states();
  }
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(C.transpose());
  const Matrix delta = cod.solve((Y - C).transpose()).transpose();
  PredictionResult r;
  r.K = Matrix::Identity(n, n) + delta;
  r.fit_residual = std::sqrt((r.K * C - Y).squaredNorm() / static_cast<double>(cols));
  r.condition = condition_number(r.K);
  if (!std::isfinite(r.condition) || r.condition > kIllConditioned) {
    throw SingularMatrixError("prediction: fitted K is singular (condition " + std::to_string(r.condition) + ")");
  }
  return r;
}

std::vector<Trajectory> companions_or_data(const SegmentSeries& s, const SystemSpec* f,
                                           const PerturbationSpec& eps, const IntegratorConfig& cfg) {
  if (f) return companion_segments(s, *f, eps, cfg);
  return s.segments();
}

Trajectory map_segment(const Matrix& Kinv, const Trajectory& seg, double shift) {
  return Trajectory(seg.t0() + shift, seg.dt(), Kinv * seg.states(), seg.system());
}

}  // namespace

PredictionResult predict_future(const SegmentSeries& history, const SystemSpec* f,
                                const PerturbationSpec& eps, const IntegratorConfig& cfg) {
  if (history.size() < 2) throw InvalidArgument("predict_future needs at least two segments");
  const auto comps = companions_or_data(history, f, eps, cfg);
  std::vector<const Trajectory*> src, dst;
  for (std::size_t k = 0; k + 1 < history.size(); ++k) {
    src.push_back(&comps[k + 1]);
    dst.push_back(&history[k]);
  }
  PredictionResult r = fit_shift(src, dst);
  const Eigen::PartialPivLU<Matrix> lu(r.K);
  const Matrix kinv = lu.inverse();
  const Trajectory& last = history[history.size() - 1];
  r.segment = map_segment(kinv, last, history.window());
  r.state = kinv * last.back();
  return r;
}

PredictionResult infer_past(const SegmentSeries& future, const SystemSpec* f,
                            const PerturbationSpec& eps, const IntegratorConfig& cfg) {
  if (future.size() < 2) throw InvalidArgument("infer_past needs at least two segments");
  const auto comps = companions_or_data(future, f, eps, cfg);
  std::vector<const Trajectory*> src, dst;
  for (std::size_t k = 0; k + 1 < future.size(); ++k) {
    src.push_back(&comps[k]);
    dst.push_back(&future[k + 1]);
  }
  PredictionResult r = fit_shift(src, dst);
  const Eigen::PartialPivLU<Matrix> lu(r.K);
  const Matrix kinv = lu.inverse();
  const Trajectory& first = future[0];
  r.segment = map_segment(kinv, first, -future.window());
  r.state = kinv * first.front();
  return r;
}

namespace {

void check_stack(const Trajectory& x, const std::vector<Trajectory>& companions, const Trajectory& y,
                 const std::vector<Trajectory>& y_companions) {
  const auto n = static_cast<std::size_t>(x.dim());
  if (companions.size() + 1 != n || y_companions.size() + 1 != n) {
    throw InvalidArgument("exact prediction needs n - 1 companions on each side");
  }
  auto same = [&](const Trajectory& t) {
    if (t.size() != x.size() || t.dt() != x.dt() || static_cast<std::size_t>(t.dim()) != n) {
      throw InvalidArgument("exact prediction: trajectories must share sampling and dimension");
    }
  };
  same(y);
  for (const auto& c : companions) same(c);
  for (const auto& c : y_companions) same(c);
}

Matrix stack(const Trajectory& head, const std::vector<Trajectory>& rest, std::size_t k) {
  Matrix m(head.dim(), static_cast<Eigen::Index>(rest.size() + 1));
  m.col(0) = head.state(k);
  for (std::size_t j = 0; j < rest.size(); ++j) m.col(static_cast<Eigen::Index>(j + 1)) = rest[j].state(k);
  return m;
}

}  // namespace

MapSequence exact_prediction_map(const Trajectory& x, const std::vector<Trajectory>& companions,
                                 const Trajectory& y, const std::vector<Trajectory>& y_companions) {
  check_stack(x, companions, y, y_companions);
  MapSequence seq;
  seq.matrices.reserve(x.size());
  seq.invertible.reserve(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const Matrix xs = stack(x, companions, k);
    const Matrix ys = stack(y, y_companions, k);
    const double cond = condition_number(xs);
    const bool ok = std::isfinite(cond) && cond <= kIllConditioned;
    if (ok) {
      seq.matrices.push_back(Eigen::PartialPivLU<Matrix>(xs.transpose()).solve(ys.transpose()).transpose());
    } else {
      seq.matrices.push_back(
          Eigen::CompleteOrthogonalDecomposition<Matrix>(xs.transpose()).solve(ys.transpose()).transpose());
    }
    seq.invertible.push_back(ok);
  }
  if (seq.flagged() == seq.size()) {
    throw SingularMatrixError("exact prediction: every stacked matrix is singular (companions coincide with x)");
  }
  return seq;
}

double stacked_residual(const MapSequence& K, const Trajectory& x, const std::vector<Trajectory>& companions,
                        const Trajectory& y, const std::vector<Trajectory>& y_companions) {
  check_stack(x, companions, y, y_companions);
  double worst = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (k < K.invertible.size() && !K.invertible[k]) continue;
    worst = std::max(worst, (K.at(k) * stack(x, companions, k) - stack(y, y_companions, k)).norm());
  }
  return worst;
}

int takens_dimension(double d_attractor) {
  if (!(d_attractor > 0.0) || !std::isfinite(d_attractor)) throw InvalidArgument("takens_dimension needs d > 0");
  return 2 * static_cast<int>(std::ceil(d_attractor)) + 1;
}

}  // namespace conjlab
