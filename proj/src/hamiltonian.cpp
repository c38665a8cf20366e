#include "hamiltonian.hpp"

#include <cmath>
#include <stdexcept>

namespace mfg {

namespace {

constexpr double kDensityFloor = 1e-10;

double softplus(double t) {
    // log(1 + e^t), overflow-safe.
    return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

double sigmoid(double t) {
    return t > 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
}

// clamp_neg ~ min(v, 0); clamp_pos ~ max(v, 0). eps = 0 gives the exact
// clamps with one-sided derivative 0 at the kink.
double clamp_neg(double v, double eps) {
    if (eps <= 0.0) return v < 0.0 ? v : 0.0;
    return -eps * softplus(-v / eps);
}
double clamp_neg_d(double v, double eps) {
    if (eps <= 0.0) return v < 0.0 ? 1.0 : 0.0;
    return sigmoid(-v / eps);
}
double clamp_neg_dd(double v, double eps) {
    if (eps <= 0.0) return 0.0;
    const double s = sigmoid(-v / eps);
    return -s * (1.0 - s) / eps;
}
double clamp_pos(double v, double eps) {
    if (eps <= 0.0) return v > 0.0 ? v : 0.0;
    return eps * softplus(v / eps);
}
double clamp_pos_d(double v, double eps) {
    if (eps <= 0.0) return v > 0.0 ? 1.0 : 0.0;
    return sigmoid(v / eps);
}
double clamp_pos_dd(double v, double eps) {
    if (eps <= 0.0) return 0.0;
    const double s = sigmoid(v / eps);
    return s * (1.0 - s) / eps;
}

// |c|^(b-1) * sign(c) and derivatives, for the power-b congestion flux.
double pow_signed(double c, double p) {
    if (c == 0.0) return 0.0;
    return std::copysign(std::pow(std::abs(c), p), c);
}

}  // namespace

NumericalHamiltonian NumericalHamiltonian::godunov_quadratic(int dim) {
    NumericalHamiltonian h;
    h.kind_ = Kind::GodunovQuadratic;
    h.dim_ = dim;
    return h;
}

NumericalHamiltonian NumericalHamiltonian::shifted_quadratic(int dim, const Eigen::Vector2d& shift) {
    NumericalHamiltonian h;
    h.kind_ = Kind::ShiftedQuadratic;
    h.dim_ = dim;
    h.shift_ = shift;
    return h;
}

NumericalHamiltonian NumericalHamiltonian::congestion_power(int dim, double a_exp, double b_exp,
                                                            const Eigen::Vector2d& shift) {
    if (b_exp <= 1.0) throw std::invalid_argument("congestion_power: b must exceed 1");
    NumericalHamiltonian h;
    h.kind_ = Kind::CongestionPower;
    h.dim_ = dim;
    h.shift_ = shift;
    h.cong_a_ = a_exp;
    h.cong_b_ = b_exp;
    return h;
}

NumericalHamiltonian NumericalHamiltonian::custom(int dim, CustomValueFn value, CustomGradFn grad) {
    NumericalHamiltonian h;
    h.kind_ = Kind::Custom;
    h.dim_ = dim;
    h.custom_value_ = std::move(value);
    h.custom_grad_ = std::move(grad);
    return h;
}

NumericalHamiltonian NumericalHamiltonian::smoothed(double eps) const {
    NumericalHamiltonian h = *this;
    h.eps_ = eps;
    return h;
}

double NumericalHamiltonian::value(double x, double y, const double* q, double m) const {
    switch (kind_) {
        case Kind::GodunovQuadratic:
        case Kind::ShiftedQuadratic: {
            double g = 0.0;
            for (int a = 0; a < dim_; ++a) {
                const double cn = clamp_neg(shift_[a] + q[2 * a], eps_);
                const double cp = clamp_pos(shift_[a] + q[2 * a + 1], eps_);
                g += 0.5 * (cn * cn + cp * cp);
            }
            return g;
        }
        case Kind::CongestionPower: {
            const double mf = std::max(m, kDensityFloor);
            double g = 0.0;
            for (int a = 0; a < dim_; ++a) {
                const double cn = clamp_neg(shift_[a] + q[2 * a], eps_);
                const double cp = clamp_pos(shift_[a] + q[2 * a + 1], eps_);
                g += std::pow(std::abs(cn), cong_b_) + std::pow(cp, cong_b_);
            }
            return g / (cong_b_ * std::pow(mf, cong_a_));
        }
        case Kind::Custom:
            return custom_value_(x, y, q);
    }
    return 0.0;
}

void NumericalHamiltonian::grad_q(double x, double y, const double* q, double m, double* out) const {
    switch (kind_) {
        case Kind::GodunovQuadratic:
        case Kind::ShiftedQuadratic: {
            for (int a = 0; a < dim_; ++a) {
                const double vn = shift_[a] + q[2 * a];
                const double vp = shift_[a] + q[2 * a + 1];
                out[2 * a] = clamp_neg(vn, eps_) * clamp_neg_d(vn, eps_);
                out[2 * a + 1] = clamp_pos(vp, eps_) * clamp_pos_d(vp, eps_);
            }
            return;
        }
        case Kind::CongestionPower: {
            const double mf = std::max(m, kDensityFloor);
            const double w = 1.0 / std::pow(mf, cong_a_);
            for (int a = 0; a < dim_; ++a) {
                const double vn = shift_[a] + q[2 * a];
                const double vp = shift_[a] + q[2 * a + 1];
                const double cn = clamp_neg(vn, eps_);
                const double cp = clamp_pos(vp, eps_);
                out[2 * a] = w * pow_signed(cn, cong_b_ - 1.0) * clamp_neg_d(vn, eps_);
                out[2 * a + 1] = w * pow_signed(cp, cong_b_ - 1.0) * clamp_pos_d(vp, eps_);
            }
            return;
        }
        case Kind::Custom: {
            if (custom_grad_) {
                custom_grad_(x, y, q, out);
                return;
            }
            // Central differences with a fixed relative step.
            double qp[4], qm[4];
            const int w = stencil_width();
            for (int l = 0; l < w; ++l) {
                for (int j = 0; j < w; ++j) { qp[j] = q[j]; qm[j] = q[j]; }
                const double step = 1e-6 * (1.0 + std::abs(q[l]));
                qp[l] += step;
                qm[l] -= step;
                out[l] = (custom_value_(x, y, qp) - custom_value_(x, y, qm)) / (2.0 * step);
            }
            return;
        }
    }
}

void NumericalHamiltonian::hess_q_diag(double x, double y, const double* q, double m, double* out) const {
    (void)x;
    (void)y;
    switch (kind_) {
        case Kind::GodunovQuadratic:
        case Kind::ShiftedQuadratic: {
            for (int a = 0; a < dim_; ++a) {
                const double vn = shift_[a] + q[2 * a];
                const double vp = shift_[a] + q[2 * a + 1];
                const double cn = clamp_neg(vn, eps_), dn = clamp_neg_d(vn, eps_);
                const double cp = clamp_pos(vp, eps_), dp = clamp_pos_d(vp, eps_);
                out[2 * a] = dn * dn + cn * clamp_neg_dd(vn, eps_);
                out[2 * a + 1] = dp * dp + cp * clamp_pos_dd(vp, eps_);
            }
            return;
        }
        case Kind::CongestionPower: {
            const double mf = std::max(m, kDensityFloor);
            const double w = 1.0 / std::pow(mf, cong_a_);
            const double bm1 = cong_b_ - 1.0;
            for (int a = 0; a < dim_; ++a) {
                const double vn = shift_[a] + q[2 * a];
                const double vp = shift_[a] + q[2 * a + 1];
                const double cn = clamp_neg(vn, eps_), dn = clamp_neg_d(vn, eps_);
                const double cp = clamp_pos(vp, eps_), dp = clamp_pos_d(vp, eps_);
                const double an = cn == 0.0 ? 0.0 : std::pow(std::abs(cn), cong_b_ - 2.0);
                const double ap = cp == 0.0 ? 0.0 : std::pow(cp, cong_b_ - 2.0);
                out[2 * a] = w * (bm1 * an * dn * dn + pow_signed(cn, bm1) * clamp_neg_dd(vn, eps_));
                out[2 * a + 1] = w * (bm1 * ap * dp * dp + pow_signed(cp, bm1) * clamp_pos_dd(vp, eps_));
            }
            return;
        }
        case Kind::Custom:
            throw std::logic_error("hess_q_diag: not available for custom Hamiltonians");
    }
}

double NumericalHamiltonian::dvalue_dm(double x, double y, const double* q, double m) const {
    if (kind_ != Kind::CongestionPower) return 0.0;
    if (m <= kDensityFloor) return 0.0;  // floor active
    return -cong_a_ * value(x, y, q, m) / m;
}

void NumericalHamiltonian::dgrad_q_dm(double x, double y, const double* q, double m, double* out) const {
    const int w = stencil_width();
    if (kind_ != Kind::CongestionPower || m <= kDensityFloor) {
        for (int l = 0; l < w; ++l) out[l] = 0.0;
        return;
    }
    grad_q(x, y, q, m, out);
    for (int l = 0; l < w; ++l) out[l] *= -cong_a_ / m;
}

}  // namespace mfg
