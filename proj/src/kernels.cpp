#include "kernels.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mfg {

namespace {

// Periodized kernels: the torus kernel is the sum of the base kernel over
// integer shifts of the displacement. (Evaluating the base kernel at the
// wrapped distance alone is NOT positive semidefinite on the circle; the
// periodization is, since its Fourier coefficients sample the positive
// spectrum of the base kernel.) Shifts beyond +-3 are negligible for the
// lengthscales in use.
constexpr int kShiftRange = 3;

double matern_radial(double r, double ell, double nu) {
    if (nu == 0.5) return std::exp(-r / ell);
    if (nu == 1.5) {
        const double t = std::sqrt(3.0) * r / ell;
        return (1.0 + t) * std::exp(-t);
    }
    if (nu == 2.5) {
        const double t = std::sqrt(5.0) * r / ell;
        return (1.0 + t + t * t / 3.0) * std::exp(-t);
    }
    throw std::invalid_argument("torus_matern: smoothness must be 0.5, 1.5 or 2.5");
}

double periodized_gaussian_1d(double diff, double ell) {
    double s = 0.0;
    for (int n = -kShiftRange; n <= kShiftRange; ++n) {
        const double v = diff + n;
        s += std::exp(-v * v / (2.0 * ell * ell));
    }
    return s;
}

}  // namespace

double KernelSpec::eval(const double* a, const double* b, int dim) const {
    switch (kind) {
        case Kind::PeriodicGaussian: {
            // the Gaussian factorizes over axes, so the torus periodization is
            // the product of per-axis periodized factors
            double prod = 1.0;
            for (int c = 0; c < dim; ++c) prod *= periodized_gaussian_1d(a[c] - b[c], lengthscale);
            return prod;
        }
        case Kind::TorusMatern: {
            if (dim == 1) {
                double s = 0.0;
                for (int n = -kShiftRange; n <= kShiftRange; ++n)
                    s += matern_radial(std::abs(a[0] - b[0] + n), lengthscale, matern_nu);
                return s;
            }
            double s = 0.0;
            for (int n1 = -kShiftRange; n1 <= kShiftRange; ++n1) {
                for (int n2 = -kShiftRange; n2 <= kShiftRange; ++n2) {
                    const double v1 = a[0] - b[0] + n1;
                    const double v2 = a[1] - b[1] + n2;
                    s += matern_radial(std::sqrt(v1 * v1 + v2 * v2), lengthscale, matern_nu);
                }
            }
            return s;
        }
        case Kind::Gaussian: {
            double s = 0.0;
            for (int c = 0; c < dim; ++c) {
                const double d = a[c] - b[c];
                s += d * d;
            }
            return std::exp(-s / (2.0 * lengthscale * lengthscale));
        }
    }
    return 0.0;
}

GramModel GramModel::build(const KernelSpec& spec, Eigen::MatrixXd nodes, double jitter) {
    GramModel g;
    g.spec_ = spec;
    g.nodes_ = std::move(nodes);
    g.jitter_ = jitter;
    const int p = g.size();
    const int d = g.coord_dim();
    if (d > 2) throw std::invalid_argument("GramModel: at most 2 coordinates per node");
    g.gram_.resize(p, p);
    double a[2], b[2];
    for (int i = 0; i < p; ++i) {
        for (int c = 0; c < d; ++c) a[c] = g.nodes_(i, c);
        for (int j = 0; j <= i; ++j) {
            for (int c = 0; c < d; ++c) b[c] = g.nodes_(j, c);
            const double v = spec.eval(a, b, d);
            g.gram_(i, j) = v;
            g.gram_(j, i) = v;
        }
    }
    Eigen::MatrixXd reg = g.gram_;
    reg.diagonal().array() += jitter;
    g.llt_.compute(reg);
    if (g.llt_.info() != Eigen::Success)
        throw std::runtime_error("GramModel: kernel matrix is not positive definite (even with jitter)");
    return g;
}

GramModel GramModel::on_grid(const KernelSpec& spec, const TorusGrid& grid, double jitter) {
    Eigen::MatrixXd nodes(grid.node_count(), grid.dim);
    for (int i = 0; i < grid.node_count(); ++i) {
        nodes(i, 0) = grid.coord(i, 1);
        if (grid.dim == 2) nodes(i, 1) = grid.coord(i, 2);
    }
    return build(spec, std::move(nodes), jitter);
}

GramModel GramModel::on_time_grid(const KernelSpec& spec, double horizon, int slices,
                                  double jitter) {
    Eigen::MatrixXd nodes(slices + 1, 1);
    for (int k = 0; k <= slices; ++k) nodes(k, 0) = horizon * k / slices;
    return build(spec, std::move(nodes), jitter);
}

Eigen::VectorXd GramModel::recovery_row(const double* target) const {
    const int p = size();
    const int d = coord_dim();
    Eigen::VectorXd k(p);
    double b[2];
    for (int i = 0; i < p; ++i) {
        for (int c = 0; c < d; ++c) b[c] = nodes_(i, c);
        k[i] = spec_.eval(target, b, d);
    }
    return llt_.solve(k);
}

double GramModel::reconstruct(const Eigen::VectorXd& samples, const double* target) const {
    return recovery_row(target).dot(samples);
}

double GramModel::norm_sq(const Eigen::VectorXd& v) const {
    return v.dot(llt_.solve(v));
}

Eigen::VectorXd GramModel::inv_apply(const Eigen::VectorXd& v) const { return llt_.solve(v); }

Eigen::VectorXd GramModel::j_apply(const Eigen::VectorXd& v) const {
    return llt_.matrixL().solve(v);
}

Eigen::VectorXd GramModel::j_apply_transpose(const Eigen::VectorXd& v) const {
    return llt_.matrixU().solve(v);
}

Eigen::VectorXd GramModel::gram_apply(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out = gram_ * v;
    out += jitter_ * v;
    return out;
}

void ObservationSet::to_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open observation file " + path);
    const int d = static_cast<int>(targets.cols());
    for (int c = 0; c < d; ++c) out << "coord" << c << ",";
    out << "value,sigma\n";
    char buf[64];
    for (int i = 0; i < count(); ++i) {
        for (int c = 0; c < d; ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g,", targets(i, c));
            out << buf;
        }
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", values[i], noise_sigma);
        out << buf;
    }
}

ObservationSet ObservationSet::from_csv(const std::string& path, Observes observes,
                                        bool spacetime) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open observation file " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty observation file " + path);
    int cols = 1;
    for (char ch : line) cols += ch == ',';
    const int d = cols - 2;
    if (d < 1) throw std::runtime_error("malformed observation header in " + path);
    std::vector<std::array<double, 4>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::array<double, 4> row{};
        std::string tok;
        for (int c = 0; c < cols; ++c) {
            if (!std::getline(ss, tok, ',')) throw std::runtime_error("short row in " + path);
            row[static_cast<size_t>(c)] = std::stod(tok);
        }
        rows.push_back(row);
    }
    ObservationSet obs;
    obs.observes = observes;
    obs.spacetime = spacetime;
    obs.targets.resize(static_cast<int>(rows.size()), d);
    obs.values.resize(static_cast<int>(rows.size()));
    for (size_t i = 0; i < rows.size(); ++i) {
        for (int c = 0; c < d; ++c) obs.targets(static_cast<int>(i), c) = rows[i][static_cast<size_t>(c)];
        obs.values[static_cast<int>(i)] = rows[i][static_cast<size_t>(d)];
        obs.noise_sigma = rows[i][static_cast<size_t>(d + 1)];
    }
    return obs;
}

SegmentObservation::SegmentObservation(Eigen::MatrixXd rows, int state_dim, int segment_offset)
    : rows_(std::move(rows)), state_dim_(state_dim), offset_(segment_offset) {
    if (offset_ + rows_.cols() > state_dim_)
        throw std::invalid_argument("SegmentObservation: segment exceeds state size");
}

Eigen::VectorXd SegmentObservation::apply(const Eigen::VectorXd& z) const {
    return rows_ * z.segment(offset_, rows_.cols());
}

Eigen::VectorXd SegmentObservation::apply_transpose(const Eigen::VectorXd& w) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(state_dim_);
    out.segment(offset_, rows_.cols()) = rows_.transpose() * w;
    return out;
}

SpacetimeDensityObservation::SpacetimeDensityObservation(Eigen::MatrixXd time_rows,
                                                         Eigen::MatrixXd space_rows,
                                                         const Eigen::VectorXd& frozen_initial,
                                                         int slices)
    : time_rows_(std::move(time_rows)),
      space_rows_(std::move(space_rows)),
      slices_(slices),
      nx_(static_cast<int>(space_rows_.cols())) {
    if (time_rows_.cols() != slices_ + 1)
        throw std::invalid_argument("SpacetimeDensityObservation: time row length mismatch");
    offset_ = time_rows_.col(0).cwiseProduct(space_rows_ * frozen_initial);
}

Eigen::VectorXd SpacetimeDensityObservation::apply(const Eigen::VectorXd& z) const {
    Eigen::VectorXd out = offset_;
    for (int k = 1; k <= slices_; ++k) {
        Eigen::VectorXd sx = space_rows_ * z.segment((k - 1) * nx_, nx_);
        out += time_rows_.col(k).cwiseProduct(sx);
    }
    return out;
}

Eigen::VectorXd SpacetimeDensityObservation::apply_transpose(const Eigen::VectorXd& w) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(state_dim());
    for (int k = 1; k <= slices_; ++k) {
        Eigen::VectorXd coeff = time_rows_.col(k).cwiseProduct(w);
        out.segment((k - 1) * nx_, nx_) = space_rows_.transpose() * coeff;
    }
    return out;
}

Eigen::VectorXd SpacetimeDensityObservation::apply_full_stack(const Eigen::MatrixXd& slices) const {
    if (slices.rows() != slices_ + 1 || slices.cols() != nx_)
        throw std::invalid_argument("apply_full_stack: expected (NT+1) x nx slice matrix");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(count());
    for (int k = 0; k <= slices_; ++k) {
        Eigen::VectorXd sx = space_rows_ * slices.row(k).transpose();
        out += time_rows_.col(k).cwiseProduct(sx);
    }
    return out;
}

Eigen::MatrixXd build_observation_rows(const ObservationSet& obs, const GramModel& gram) {
    const int d = gram.coord_dim();
    if (obs.targets.cols() < d)
        throw std::invalid_argument("build_observation_rows: target dimension mismatch");
    const int count = static_cast<int>(obs.targets.rows());
    Eigen::MatrixXd rows(count, gram.size());
    double target[2];
    for (int i = 0; i < count; ++i) {
        for (int c = 0; c < d; ++c) {
            double v = obs.targets(i, c);
            target[c] = v - std::floor(v);  // torus coordinates mod 1
        }
        rows.row(i) = gram.recovery_row(target).transpose();
    }
    return rows;
}

std::shared_ptr<SpacetimeDensityObservation> build_spacetime_observation(
    const ObservationSet& obs, const GramModel& spatial, const GramModel& temporal,
    const Eigen::VectorXd& frozen_initial, int slices, double horizon) {
    if (!obs.spacetime)
        throw std::invalid_argument("build_spacetime_observation: expected space-time targets");
    const int d = spatial.coord_dim();
    if (obs.targets.cols() != d + 1)
        throw std::invalid_argument("build_spacetime_observation: target dimension mismatch");
    const int count = static_cast<int>(obs.targets.rows());
    Eigen::MatrixXd trows(count, slices + 1);
    Eigen::MatrixXd srows(count, spatial.size());
    double target[2];
    for (int i = 0; i < count; ++i) {
        for (int c = 0; c < d; ++c) {
            double v = obs.targets(i, c);
            target[c] = v - std::floor(v);
        }
        srows.row(i) = spatial.recovery_row(target).transpose();
        double t = std::clamp(obs.targets(i, d), 0.0, horizon);
        trows.row(i) = temporal.recovery_row(&t).transpose();
    }
    return std::make_shared<SpacetimeDensityObservation>(std::move(trows), std::move(srows),
                                                         frozen_initial, slices);
}

}  // namespace mfg
