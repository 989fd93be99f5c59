#include "fpl/spline_kernel.hpp"

#include "fpl/error.hpp"
#include "fpl/io.hpp"

#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <array>
#include <cmath>
#include <mutex>
#include <numbers>
#include <sstream>

namespace fpl::spline {

namespace {

Matrix affine_basis(const Matrix& points, int poly_order) {
    const Eigen::Index n = points.rows();
    if (poly_order == 1)
        return Matrix::Ones(n, 1);
    Matrix P(n, points.cols() + 1);
    P.col(0).setOnes();
    P.rightCols(points.cols()) = points;
    return P;
}

// Orthonormal directions of the affine hull of the points (columns), around their mean.
Matrix hull_directions(const Matrix& points, const Vector& mean) {
    const Matrix centered = points.rowwise() - mean.transpose();
    if (points.rows() < 2)
        return Matrix(points.cols(), 0);
    Eigen::JacobiSVD<Matrix> svd(centered, Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    const double scale = std::max(sv.size() ? sv[0] : 0.0, 1e-300);
    Eigen::Index rank = 0;
    while (rank < sv.size() && sv[rank] > 1e-10 * scale)
        ++rank;
    if (sv.size() == 0 || sv[0] == 0.0)
        rank = 0;
    return svd.matrixV().leftCols(rank);
}

std::string describe_subspace(const Vector& mean, const Matrix& dirs) {
    std::ostringstream ss;
    ss << dirs.cols() << "-dimensional affine subspace through (";
    for (Eigen::Index a = 0; a < mean.size(); ++a)
        ss << (a ? ", " : "") << format_double(mean[a]);
    ss << ")";
    for (Eigen::Index c = 0; c < dirs.cols(); ++c) {
        ss << (c ? ", " : " spanned by ") << "(";
        for (Eigen::Index a = 0; a < dirs.rows(); ++a)
            ss << (a ? ", " : "") << format_double(dirs(a, c));
        ss << ")";
    }
    return ss.str();
}

}  // namespace

CpdKernelSpec CpdKernelSpec::make(int d, double cubic, double linear, std::optional<int> poly_order) {
    CpdKernelSpec spec{d, cubic, linear, poly_order.value_or(cubic > 0.0 ? 2 : 1)};
    spec.validate();
    return spec;
}

void CpdKernelSpec::validate() const {
    if (d < 1)
        throw ConfigError("kernel dimension must be positive");
    if (!(cubic >= 0.0) || !(linear >= 0.0) || !(cubic + linear > 0.0))
        throw ConfigError("kernel weights must be nonnegative with a positive sum");
    if (poly_order != 1 && poly_order != 2)
        throw ConfigError("polynomial order must be 1 (constants) or 2 (affine)");
    if (cubic > 0.0 && poly_order != 2)
        throw ConfigError("the cubic term is conditionally positive definite of order 2 and needs an affine tail");
}

bool riesz_constants_verified(int d) {
    if (d < 1)
        return false;
    if (d > 3)
        return true;
    static std::array<std::once_flag, 4> once;
    static std::array<bool, 4> ok{};
    std::call_once(once[static_cast<std::size_t>(d)], [d] {
        bool good = true;
        for (int power : {1, 3}) {
            const double numeric = fourier::radial_inverse_coefficient(d, power);
            const double closed = 1.0 / fourier::riesz_constant(d, power);
            good = good && std::abs(numeric / closed - 1.0) < 1e-4;
        }
        if (d == 1)
            good = good && fourier::verify_power_pairs().passed;
        ok[static_cast<std::size_t>(d)] = good;
    });
    return ok[static_cast<std::size_t>(d)];
}

CpdKernelSpec kernel_weights_from_stats(double A, double B, int d) {
    if (!(A >= 0.0) || !(B >= 0.0) || !(A + B > 0.0))
        throw ConfigError("kernel_weights_from_stats: need A >= 0, B >= 0 and A + B > 0");
    if (!riesz_constants_verified(d))
        throw NumericalError("Riesz constants for d = " + std::to_string(d) + " failed numerical verification");
    const double cubic = A / fourier::riesz_constant(d, 3);
    const double linear = B / std::abs(fourier::riesz_constant(d, 1));
    return CpdKernelSpec::make(d, cubic, linear);
}

KernelInterpolant::KernelInterpolant(CpdKernelSpec kernel, Matrix centers, Vector alpha, Vector poly)
    : kernel_(kernel), centers_(std::move(centers)), alpha_(std::move(alpha)), poly_(std::move(poly)) {
    kernel_.validate();
    if (centers_.rows() != alpha_.size() || centers_.cols() != kernel_.d)
        throw DomainError("KernelInterpolant: centers and coefficients disagree");
    const Eigen::Index expected = kernel_.poly_order == 1 ? 1 : kernel_.d + 1;
    if (poly_.size() != expected)
        throw DomainError("KernelInterpolant: polynomial tail has the wrong length");
}

double KernelInterpolant::operator()(const Vector& x) const {
    if (x.size() != kernel_.d)
        throw DomainError("KernelInterpolant: query dimension mismatch");
    double h = poly_[0];
    if (kernel_.poly_order == 2)
        h += poly_.tail(kernel_.d).dot(x);
    for (Eigen::Index i = 0; i < centers_.rows(); ++i)
        h += alpha_[i] * kernel_.phi((centers_.row(i).transpose() - x).norm());
    return h;
}

Vector KernelInterpolant::evaluate_rows(const Matrix& xs) const {
    Vector out(xs.rows());
    for (Eigen::Index r = 0; r < xs.rows(); ++r)
        out[r] = (*this)(xs.row(r).transpose());
    return out;
}

nlohmann::json KernelInterpolant::to_json() const {
    nlohmann::json j;
    j["kernel"] = {{"d", kernel_.d}, {"cubic", kernel_.cubic}, {"linear", kernel_.linear},
                   {"poly_order", kernel_.poly_order}};
    auto rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < centers_.rows(); ++i) {
        std::vector<double> row(static_cast<std::size_t>(centers_.cols()));
        for (Eigen::Index a = 0; a < centers_.cols(); ++a)
            row[static_cast<std::size_t>(a)] = centers_(i, a);
        rows.push_back(row);
    }
    j["centers"] = rows;
    j["alpha"] = std::vector<double>(alpha_.data(), alpha_.data() + alpha_.size());
    j["poly"] = std::vector<double>(poly_.data(), poly_.data() + poly_.size());
    return j;
}

KernelInterpolant KernelInterpolant::from_json(const nlohmann::json& j) {
    try {
        const auto& k = j.at("kernel");
        CpdKernelSpec spec{k.at("d").get<int>(), k.at("cubic").get<double>(), k.at("linear").get<double>(),
                           k.at("poly_order").get<int>()};
        const auto rows = j.at("centers").get<std::vector<std::vector<double>>>();
        Matrix centers(static_cast<Eigen::Index>(rows.size()), spec.d);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (static_cast<int>(rows[i].size()) != spec.d)
                throw ConfigError("interpolant JSON: center " + std::to_string(i) + " has the wrong dimension");
            for (int a = 0; a < spec.d; ++a)
                centers(static_cast<Eigen::Index>(i), a) = rows[i][static_cast<std::size_t>(a)];
        }
        auto alpha = j.at("alpha").get<std::vector<double>>();
        auto poly = j.at("poly").get<std::vector<double>>();
        return KernelInterpolant(spec, std::move(centers), Eigen::Map<Vector>(alpha.data(), alpha.size()),
                                 Eigen::Map<Vector>(poly.data(), poly.size()));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("interpolant JSON: ") + e.what());
    }
}

KernelInterpolant steady_state(const Dataset& dataset, const CpdKernelSpec& kernel) {
    kernel.validate();
    if (dataset.dimension() != kernel.d)
        throw DomainError("steady_state: dataset dimension differs from the kernel dimension");
    const Matrix& X = dataset.points();
    const int n = dataset.size();
    const int d = dataset.dimension();

    // Tail basis: constants, full affine, or affine restricted to the hull when n <= d.
    Matrix P = affine_basis(X, kernel.poly_order);
    Vector mean = X.colwise().mean().transpose();
    Matrix dirs;
    bool reduced = false;
    if (kernel.poly_order == 2) {
        dirs = hull_directions(X, mean);
        if (dirs.cols() < d) {
            if (n > d)
                throw DegenerateGeometryError("steady_state: the " + std::to_string(n) +
                                              " points lie in a " + describe_subspace(mean, dirs) +
                                              "; the affine tail is not determined");
            reduced = true;
            P.resize(n, 1 + dirs.cols());
            P.col(0).setOnes();
            P.rightCols(dirs.cols()) = (X.rowwise() - mean.transpose()) * dirs;
        }
    }
    const Eigen::Index q = P.cols();

    Matrix M = Matrix::Zero(n + q, n + q);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j)
            M(i, j) = M(j, i) = kernel.phi((X.row(i) - X.row(j)).norm());
    M.topRightCorner(n, q) = P;
    M.bottomLeftCorner(q, n) = P.transpose();
    Vector rhs = Vector::Zero(n + q);
    rhs.head(n) = dataset.values();

    Eigen::FullPivLU<Matrix> lu(M);
    if (!lu.isInvertible())
        throw DegenerateGeometryError("steady_state: saddle system is singular for the " + std::to_string(n) +
                                      " points spanning a " + describe_subspace(mean, dirs));
    Vector sol = lu.solve(rhs);
    // One step of iterative refinement.
    sol += lu.solve(rhs - M * sol);
    if (!sol.allFinite())
        throw NumericalError("steady_state: saddle solve produced non-finite coefficients");

    Vector alpha = sol.head(n);
    Vector tail = sol.tail(q);
    Vector poly;
    if (kernel.poly_order == 1) {
        poly = tail;
    } else if (!reduced) {
        poly = tail;
    } else {
        const Vector grad = dirs * tail.tail(dirs.cols());
        poly.resize(d + 1);
        poly[0] = tail[0] - grad.dot(mean);
        poly.tail(d) = grad;
    }
    return KernelInterpolant(kernel, X, std::move(alpha), std::move(poly));
}

double evaluate(const KernelInterpolant& interpolant, const Vector& x) { return interpolant(x); }

double saddle_residual(const KernelInterpolant& interpolant, const Vector& values) {
    const Matrix& X = interpolant.centers();
    const Vector fit = interpolant.evaluate_rows(X);
    const double scale = std::max(values.norm(), 1e-300);
    const Matrix P = affine_basis(X, interpolant.kernel().poly_order);
    const double ortho = (P.transpose() * interpolant.alpha()).norm() /
                         std::max(interpolant.alpha().norm() * P.norm(), 1e-300);
    return std::max((fit - values).norm() / scale, ortho);
}

EnergyResult fp_energy_of_function(const Function1d& h, const GammaSpec& spec, const FrequencyLattice& lattice,
                                   const fourier::TaperWindow& window, int samples) {
    if (lattice.dimension() != 1)
        throw DomainError("fp_energy_of_function: one-dimensional lattices only");
    const auto grid = fourier::sample_windowed(h, window, samples);
    const int half = lattice.size() / 2;
    const double tail_start = 0.9 * lattice.xi_max();
    double total = 0.0;
    double tail = 0.0;
    for (int k = 0; k < half; ++k) {
        const double xi = lattice.nodes()(k, 0);
        const double contrib = 2.0 * lattice.dxi() * std::norm(fourier::grid_transform(grid.x0, grid.dx, grid.values, xi)) /
                               spec.radial(std::abs(xi));
        total += contrib;
        if (std::abs(xi) > tail_start)
            tail += contrib;
    }
    EnergyResult result;
    result.energy = total;
    result.tail_fraction = total > 0.0 ? tail / total : 0.0;
    if (result.tail_fraction > 0.05)
        result.warning = "FP-energy truncated: " + format_double(100.0 * result.tail_fraction) +
                         "% of the energy lies in the outer 10% of the lattice band";
    return result;
}

EnergyResult fp_energy_of_interpolant(const KernelInterpolant& interpolant, const GammaSpec& spec,
                                      const FrequencyLattice& lattice, std::optional<fourier::TaperWindow> window,
                                      int samples) {
    if (interpolant.kernel().d != 1)
        throw DomainError("fp_energy_of_interpolant: one-dimensional interpolants only");
    const auto& c = interpolant.centers();
    const auto win = window.value_or(fourier::TaperWindow::around(c.minCoeff(), c.maxCoeff()));
    Vector x(1);
    return fp_energy_of_function(
        [&](double t) {
            x[0] = t;
            return interpolant(x);
        },
        spec, lattice, win, samples);
}

EnergyComparison energy_comparison(const Dataset& dataset, const CpdKernelSpec& kernel,
                                   const std::vector<Candidate>& candidates, const GammaSpec& spec,
                                   const FrequencyLattice& lattice, int samples) {
    if (dataset.dimension() != 1)
        throw DomainError("energy_comparison: one-dimensional data only");
    for (const auto& cand : candidates) {
        double worst = 0.0;
        for (int i = 0; i < dataset.size(); ++i) {
            const double y = dataset.values()[i];
            worst = std::max(worst, std::abs(cand.f(dataset.points()(i, 0)) - y) / std::max(1.0, std::abs(y)));
        }
        if (worst > 1e-6)
            throw ConfigError("candidate '" + cand.name + "' does not interpolate the data (max violation " +
                              format_double(worst) + ")");
    }
    const auto minimizer = steady_state(dataset, kernel);
    // The taper must sit far from the data: the cross term between the minimizer and a perturbation
    // vanishes only where the window is flat. For the mixed power law 1/gamma has a nonlocal part
    // (A/B)^2 / (A + B xi^2) whose reach is sqrt(B/A), so the flat margin covers 25 of those lengths.
    const double lo = dataset.points().minCoeff(), hi = dataset.points().maxCoeff();
    const double ext = std::max(hi - lo, 1.0);
    double reach = 0.0;
    if (spec.is_power_law() && spec.as_power_law().A > 0.0 && spec.as_power_law().B > 0.0)
        reach = std::sqrt(spec.as_power_law().B / spec.as_power_law().A);
    const double margin = 5.0 * ext + 25.0 * reach;
    const fourier::TaperWindow window{lo - margin, hi + margin, 2.5 * ext};
    // grid Nyquist at least twice the lattice band
    const double dx_max = std::numbers::pi / (2.0 * lattice.xi_max());
    samples = std::max(samples, static_cast<int>(std::ceil((window.hi() - window.lo()) / dx_max)) + 1);

    EnergyComparison report;
    auto add = [&](const std::string& name, const EnergyResult& r) {
        report.names.push_back(name);
        report.energies.push_back(r.energy);
        if (r.warning)
            report.warnings.push_back(name + ": " + *r.warning);
    };
    add("steady_state", fp_energy_of_interpolant(minimizer, spec, lattice, window, samples));
    for (const auto& cand : candidates)
        add(cand.name, fp_energy_of_function(cand.f, spec, lattice, window, samples));

    const double e0 = report.energies.front();
    report.minimizer_is_minimal = true;
    report.worst_margin = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < report.energies.size(); ++i) {
        report.worst_margin = std::max(report.worst_margin, e0 - report.energies[i]);
        if (report.energies[i] < e0 * (1.0 - 1e-9))
            report.minimizer_is_minimal = false;
    }
    if (report.energies.size() == 1)
        report.worst_margin = 0.0;
    return report;
}

}  // namespace fpl::spline
