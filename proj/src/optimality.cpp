#include "conjlab/optimality.hpp"

#include <algorithm>
#include <cmath>
#include <variant>

namespace conjlab {

double AdjointPath::lambda_sup() const {
  double s = 0.0;
  for (const auto& v : lambda) s = std::max(s, v.lpNorm<Eigen::Infinity>());
  return s;
}

double AdjointPath::mu_sup() const {
  double s = 0.0;
  for (const auto& v : mu) s = std::max(s, v.lpNorm<Eigen::Infinity>());
  return s;
}

double hamiltonian(double t, const Vector& x, const Vector& y, const ConjugacyMap& K, std::size_t index,
                   const Vector& lambda, const Vector& mu, double T, const SystemSpec& f,
                   const SystemSpec& g) {
  if (!(T > 0.0)) throw InvalidArgument("hamiltonian needs T > 0");
  if (lambda.size() != x.size() || mu.size() != y.size()) throw InvalidArgument("hamiltonian: dimension mismatch");
  const Vector mismatch = apply_map(K, index, t, x) - y;
  return -mismatch.squaredNorm() / T + lambda.dot(eval_field(f, t, x)) + mu.dot(eval_field(g, t, y));
}

namespace {

void check_aligned(const Trajectory& X, const Trajectory& Y) {
  if (X.size() != Y.size() || X.dt() != Y.dt() || X.t0() != Y.t0()) {
    throw InvalidArgument("trajectories must share their sampling");
  }
  if (X.size() < 2) throw InvalidArgument("trajectories need at least two samples");
}

}  // namespace

AdjointPath integrate_adjoints(const Trajectory& X, const Trajectory& Y, const ConjugacyMap& K,
                               const SystemSpec& f, const SystemSpec& g) {
  check_aligned(X, Y);
  const int nx = X.dim(), ny = Y.dim();
  const double T = X.t_end() - X.t0();
  const double h = X.dt();
  const std::size_t N = X.steps();

  // A map sequence only exists on the samples, so its source term is the
  // linear interpolant of the sample sources; other maps are evaluated at the
  // Hermite midpoint state.
  const bool sampled = std::holds_alternative<MapSequence>(K);
  auto src = [&](std::size_t idx, double t, const Vector& x, const Vector& y, Vector& sl, Vector& sm) {
    const Vector mismatch = apply_map(K, idx, t, x) - y;
    sl = (2.0 / T) * map_jacobian(K, idx, t, x).transpose() * mismatch;
    sm = -(2.0 / T) * mismatch;
  };
  auto rhs = [&](const Vector& sl, const Vector& sm, double t, const Vector& x, const Vector& y,
                 const Vector& lam, const Vector& mu, Vector& dlam, Vector& dmu) {
    dlam = sl - eval_jacobian(f, t, x).transpose() * lam;
    dmu = sm - eval_jacobian(g, t, y).transpose() * mu;
  };

  AdjointPath path;
  path.times.resize(N + 1);
  path.lambda.assign(N + 1, Vector::Zero(nx));
  path.mu.assign(N + 1, Vector::Zero(ny));
  for (std::size_t k = 0; k <= N; ++k) path.times[k] = X.time(k);

  Vector lam = Vector::Zero(nx), mu = Vector::Zero(ny);
  Vector l1, l2, l3, l4, m1, m2, m3, m4;
  Vector sk_l, sk_m, sm_l, sm_m, sp_l, sp_m;
  src(N, X.time(N), X.state(N), Y.state(N), sk_l, sk_m);
  for (std::size_t k = N; k > 0; --k) {
    const double tk = X.time(k), tm = tk - 0.5 * h, tp = X.time(k - 1);
    const Vector xk = X.state(k), yk = Y.state(k);
    const Vector xm = hermite_midpoint(X, f, k - 1), ym = hermite_midpoint(Y, g, k - 1);
    const Vector xp = X.state(k - 1), yp = Y.state(k - 1);
    src(k - 1, tp, xp, yp, sp_l, sp_m);
    if (sampled) {
      sm_l = 0.5 * (sk_l + sp_l);
      sm_m = 0.5 * (sk_m + sp_m);
    } else {
      src(k - 1, tm, xm, ym, sm_l, sm_m);
    }
    rhs(sk_l, sk_m, tk, xk, yk, lam, mu, l1, m1);
    rhs(sm_l, sm_m, tm, xm, ym, lam - 0.5 * h * l1, mu - 0.5 * h * m1, l2, m2);
    rhs(sm_l, sm_m, tm, xm, ym, lam - 0.5 * h * l2, mu - 0.5 * h * m2, l3, m3);
    rhs(sp_l, sp_m, tp, xp, yp, lam - h * l3, mu - h * m3, l4, m4);
    sk_l = sp_l;
    sk_m = sp_m;
    lam -= (h / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
    mu -= (h / 6.0) * (m1 + 2.0 * m2 + 2.0 * m3 + m4);
    if (!lam.allFinite() || !mu.allFinite() ||
        lam.lpNorm<Eigen::Infinity>() > kBlowUpThreshold || mu.lpNorm<Eigen::Infinity>() > kBlowUpThreshold) {
      throw BlowUpError("adjoint integration diverged at step " + std::to_string(k - 1), k - 1);
    }
    path.lambda[k - 1] = lam;
    path.mu[k - 1] = mu;
  }
  return path;
}

Matrix stationarity_gradient(const Matrix& K, const Trajectory& X, const Trajectory& Y) {
  if (X.size() != Y.size() || X.size() < 2) throw InvalidArgument("trajectories differ in length");
  if (K.rows() != Y.dim() || K.cols() != X.dim()) throw InvalidArgument("K has the wrong shape");
  const auto cols = static_cast<Eigen::Index>(X.steps());
  const auto xs = X.states().rightCols(cols);
  const auto ys = Y.states().rightCols(cols);
  return (2.0 / static_cast<double>(cols)) * (K * xs - ys) * xs.transpose();
}

double stationarity_residual(const Matrix& K, const Trajectory& X, const Trajectory& Y) {
  return stationarity_gradient(K, X, Y).norm();
}

double curvature_check(const Trajectory& X) {
  const auto cols = static_cast<Eigen::Index>(X.steps());
  if (cols < 1) throw InvalidArgument("curvature_check needs at least two samples");
  const auto xs = X.states().rightCols(cols);
  const Matrix hess = -(2.0 / static_cast<double>(cols)) * (xs * xs.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(hess, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

SensitivityPath variational_matrix(const SystemSpec& spec, const Trajectory& Y) {
  if (Y.dim() != spec.dim) throw InvalidArgument("variational_matrix: dimension mismatch");
  if (Y.size() < 1) throw InvalidArgument("variational_matrix: empty trajectory");
  const int n = spec.dim;
  const double h = Y.dt();
  SensitivityPath out;
  out.times.reserve(Y.size());
  out.Phi.reserve(Y.size());
  Matrix phi = Matrix::Identity(n, n);
  out.times.push_back(Y.time(0));
  out.Phi.push_back(phi);
  for (std::size_t k = 0; k + 1 < Y.size(); ++k) {
    const double t = Y.time(k);
    const Matrix j0 = eval_jacobian(spec, t, Y.state(k));
    const Matrix jm = eval_jacobian(spec, t + 0.5 * h, hermite_midpoint(Y, spec, k));
    const Matrix j1 = eval_jacobian(spec, t + h, Y.state(k + 1));
    const Matrix k1 = j0 * phi;
    const Matrix k2 = jm * (phi + 0.5 * h * k1);
    const Matrix k3 = jm * (phi + 0.5 * h * k2);
    const Matrix k4 = j1 * (phi + h * k3);
    phi += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!phi.allFinite() || phi.lpNorm<Eigen::Infinity>() > kBlowUpThreshold) {
      throw BlowUpError("variational equation diverged at step " + std::to_string(k + 1), k + 1);
    }
    out.times.push_back(Y.time(k + 1));
    out.Phi.push_back(phi);
  }
  return out;
}

namespace {

Matrix kkt_at(const Matrix& K, const Vector& x, const Vector& y, const Vector& x0, const Matrix& phi) {
  const auto n = x.size();
  if (K.rows() != n || K.cols() != n || y.size() != n || phi.rows() != n || phi.cols() != n) {
    throw InvalidArgument("kkt: dimension mismatch");
  }
  const Vector local = 2.0 * x.cwiseProduct(K * x) - 2.0 * x.cwiseProduct(y);  // indexed by j
  const Vector transported = phi.transpose() * (y - K.transpose() * x);        // indexed by i
  return Vector::Ones(n) * local.transpose() + 2.0 * transported * x0.transpose();
}

}  // namespace

std::vector<Matrix> kkt_residual(const MapSequence& Kseq, const Trajectory& X, const Trajectory& Y,
                                 const SensitivityPath& Phi) {
  check_aligned(X, Y);
  if (Phi.Phi.size() != X.size()) throw InvalidArgument("kkt: sensitivity path has the wrong length");
  std::vector<Matrix> out;
  out.reserve(X.size());
  const Vector x0 = X.state(0);
  for (std::size_t k = 0; k < X.size(); ++k) out.push_back(kkt_at(Kseq.at(k), X.state(k), Y.state(k), x0, Phi.Phi[k]));
  return out;
}

std::vector<Matrix> kkt2_residual(const MapSequence& Kseq, const Trajectory& X, const Trajectory& Y,
                                  const Matrix& A) {
  check_aligned(X, Y);
  std::vector<Matrix> out;
  out.reserve(X.size());
  const Vector x0 = X.state(0);
  for (std::size_t k = 0; k < X.size(); ++k) {
    const Matrix phi = expm(A * (X.time(k) - X.t0()));
    out.push_back(kkt_at(Kseq.at(k), X.state(k), Y.state(k), x0, phi));
  }
  return out;
}

AffineMap example1_map(const Matrix& C, const Vector& x0, const Vector& y0) {
  if (C.rows() != C.cols() || C.rows() != x0.size() || y0.size() != x0.size()) {
    throw InvalidArgument("example1_map: dimension mismatch");
  }
  return AffineMap{C, y0 - C * x0};
}

SystemSpec example1_target(const Matrix& A, const Vector& B, const Matrix& C, const Vector& x0,
                           const Vector& y0) {
  const auto n = A.rows();
  if (A.cols() != n || B.size() != n || C.rows() != n || C.cols() != n || x0.size() != n || y0.size() != n) {
    throw InvalidArgument("example1_target: dimension mismatch");
  }
  const Eigen::FullPivLU<Matrix> lu(C);
  if (!lu.isInvertible()) throw SingularMatrixError("example1_target: C is singular");
  const Matrix CAinv = C * A * lu.inverse();
  const Vector D = y0 - C * x0;
  return SystemSpec::linear_affine("example1-y", CAinv, C * B - CAinv * D);
}

}  // namespace conjlab
