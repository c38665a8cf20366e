#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>

namespace mfg {

/// Upwind numerical Hamiltonian g(x, q [, m]) on the 2*dim one-sided stencil.
///
/// Built-in kinds are separable Godunov schemes: nonincreasing in the D+
/// components (q1, q3), nondecreasing in the D- components (q2, q4),
/// consistent with the represented H, and convex in q. The clamps
/// min(.,0)/max(.,0) can be replaced by softplus-smoothed versions for
/// Jacobian-based solvers (see smoothed()).
class NumericalHamiltonian {
public:
    enum class Kind { GodunovQuadratic, ShiftedQuadratic, CongestionPower, Custom };

    using CustomValueFn = std::function<double(double x, double y, const double* q)>;
    using CustomGradFn = std::function<void(double x, double y, const double* q, double* out)>;

    NumericalHamiltonian() = default;

    /// Godunov scheme for H(p) = |p|^2 / 2.
    static NumericalHamiltonian godunov_quadratic(int dim);
    /// Godunov scheme for H(p) = |P + p|^2 / 2 with a constant shift P.
    static NumericalHamiltonian shifted_quadratic(int dim, const Eigen::Vector2d& shift);
    /// Congestion Hamiltonian H(p, m) = sum_axis |Q_a + p_a|^b / (b m^a_exp),
    /// with density floor max(m, 1e-10). For b = 2 this is |Q+p|^2/(2 m^a).
    static NumericalHamiltonian congestion_power(int dim, double a_exp, double b_exp,
                                                 const Eigen::Vector2d& shift);
    /// User-supplied g; gradient falls back to central differences when no
    /// gradient callback is given (and such Hamiltonians report no analytic
    /// Hessian, which routes Newton solvers to finite-difference Jacobians).
    static NumericalHamiltonian custom(int dim, CustomValueFn value, CustomGradFn grad = nullptr);

    /// Same scheme with softplus-smoothed clamps (smoothing width eps).
    NumericalHamiltonian smoothed(double eps) const;

    Kind kind() const { return kind_; }
    int dim() const { return dim_; }
    int stencil_width() const { return 2 * dim_; }
    double smoothing() const { return eps_; }
    bool depends_on_density() const { return kind_ == Kind::CongestionPower; }
    bool has_analytic_hessian() const { return kind_ != Kind::Custom; }

    /// g(x, q, m). x = (x, y) node position (y ignored for dim 1); m is the
    /// local density (ignored unless depends_on_density()).
    double value(double x, double y, const double* q, double m) const;
    void grad_q(double x, double y, const double* q, double m, double* out) const;
    /// Diagonal of the q-Hessian (built-ins are separable so the Hessian is
    /// diagonal). Requires has_analytic_hessian().
    void hess_q_diag(double x, double y, const double* q, double m, double* out) const;
    double dvalue_dm(double x, double y, const double* q, double m) const;
    void dgrad_q_dm(double x, double y, const double* q, double m, double* out) const;

private:
    Kind kind_ = Kind::GodunovQuadratic;
    int dim_ = 2;
    double eps_ = 0.0;  // 0 = exact clamps with one-sided derivative 0 at kinks
    Eigen::Vector2d shift_ = Eigen::Vector2d::Zero();
    double cong_a_ = 0.0;
    double cong_b_ = 2.0;
    CustomValueFn custom_value_;
    CustomGradFn custom_grad_;
};

}  // namespace mfg
