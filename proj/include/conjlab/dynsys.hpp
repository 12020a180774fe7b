#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>

#include "conjlab/types.hpp"

namespace conjlab {

enum class SystemKind { lorenz, chua, chen, linear_affine, custom };

std::string to_string(SystemKind kind);
SystemKind system_kind_from_string(const std::string& name);

/// Callbacks backing a `SystemKind::custom` system. The Jacobian is optional;
/// operations that need it throw when it is missing.
struct CustomField {
  std::function<Vector(double, const Vector&)> field;
  std::function<Matrix(double, const Vector&)> jacobian;
};

/// Description of an autonomous (or custom, possibly time-dependent) vector
/// field. Built-in kinds read their parameters from `params`:
///   lorenz: sigma, rho, beta
///   chua:   alpha, beta, m0, m1
///   chen:   a, b, c
///   linear_affine: A (dim x dim), B (dim)
struct SystemSpec {
  std::string name;
  int dim = 0;
  SystemKind kind = SystemKind::custom;
  std::map<std::string, double> params;
  Matrix A;
  Vector B;
  std::shared_ptr<const CustomField> custom;

  static SystemSpec lorenz(std::string name, double sigma, double rho, double beta);
  static SystemSpec chua(std::string name, double alpha, double beta, double m0, double m1);
  static SystemSpec chen(std::string name, double a, double b, double c);
  static SystemSpec linear_affine(std::string name, Matrix A, Vector B);
  static SystemSpec make_custom(std::string name, int dim,
                                std::function<Vector(double, const Vector&)> field,
                                std::function<Matrix(double, const Vector&)> jacobian = {});

  double param(const std::string& key) const;

  /// Throws InvalidArgument when the invariants of the kind do not hold.
  void validate() const;
};

/// f(t, x) for the given system.
Vector eval_field(const SystemSpec& spec, double t, const Vector& x);

/// Df(t, x), analytic for the built-in kinds.
Matrix eval_jacobian(const SystemSpec& spec, double t, const Vector& x);

enum class Method { rk4, euler };

struct IntegratorConfig {
  Method method = Method::rk4;
  double dt = 0.01;
};

/// Components with magnitude above this abort integration.
inline constexpr double kBlowUpThreshold = 1e12;

/// Uniformly sampled trajectory: column k of `states` is the state at t0 + k*dt.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(double t0, double dt, Matrix states,
             std::shared_ptr<const SystemSpec> system = nullptr);

  double t0() const { return t0_; }
  double dt() const { return dt_; }
  int dim() const { return static_cast<int>(states_.rows()); }
  /// Number of samples, N + 1.
  std::size_t size() const { return static_cast<std::size_t>(states_.cols()); }
  /// Number of steps N.
  std::size_t steps() const { return size() == 0 ? 0 : size() - 1; }
  double time(std::size_t k) const { return t0_ + static_cast<double>(k) * dt_; }
  double t_end() const { return time(steps()); }

  Eigen::Ref<const Vector> state(std::size_t k) const { return states_.col(static_cast<Eigen::Index>(k)); }
  Vector front() const { return states_.col(0); }
  Vector back() const { return states_.col(states_.cols() - 1); }
  const Matrix& states() const { return states_; }
  const std::shared_ptr<const SystemSpec>& system() const { return system_; }

 private:
  double t0_ = 0.0;
  double dt_ = 1.0;
  Matrix states_;
  std::shared_ptr<const SystemSpec> system_;
};

/// Fixed-step integration over [t0, t0 + horizon] with N = round(horizon/dt) steps.
Trajectory integrate(const SystemSpec& spec, const State& x0, double t0, double horizon,
                     const IntegratorConfig& cfg = {});

/// Nodes of the m-segment explicit Euler polyline on [0, horizon].
Trajectory euler_polyline(const SystemSpec& spec, const State& x0, double horizon, int m);

/// Appends the time stamp as an extra coordinate: (x, t).
Trajectory augment_time(const Trajectory& traj);

/// Matrix exponential (scaling and squaring with Pade approximants).
Matrix expm(const Matrix& a);

/// Exact solution of x' = A x + B at time t, via the exponential of the
/// augmented matrix [[A, B], [0, 0]], so singular A needs no special case.
State linear_solution(const Matrix& A, const Vector& B, const State& x0, double t);

/// State halfway between samples k and k+1, by cubic Hermite interpolation
/// using the field values of `spec` at both samples (fourth-order accurate).
Vector hermite_midpoint(const Trajectory& traj, const SystemSpec& spec, std::size_t k);

/// CSV format: header `t,x1,...,xn`, one row per sample, 17 significant digits.
void write_csv(std::ostream& out, const Trajectory& traj);
Trajectory read_csv(std::istream& in);

/// The systems and initial states of the chaotic-pair experiments.
namespace presets {
SystemSpec lorenz1();
SystemSpec lorenz2();
SystemSpec chua();
SystemSpec chen();
State lorenz_x0();
State chua_y0();
State chen_z0();
}  // namespace presets

}  // namespace conjlab
