#include "fpl/core.hpp"

#include "fpl/error.hpp"
#include "fpl/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace fpl {

namespace {

void check_distinct(const Matrix& points) {
    const Eigen::Index n = points.rows();
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            if ((points.row(i) - points.row(j)).cwiseAbs().maxCoeff() == 0.0)
                throw ConfigError("dataset points " + std::to_string(i) + " and " + std::to_string(j) +
                                  " coincide");
}

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

}  // namespace

Dataset::Dataset(Matrix points, Vector values) : points_(std::move(points)), values_(std::move(values)) {
    if (values_.size() < 1)
        throw ConfigError("dataset must contain at least one point");
    if (points_.rows() != values_.size())
        throw ConfigError("dataset has " + std::to_string(points_.rows()) + " points but " +
                          std::to_string(values_.size()) + " values");
    if (points_.cols() < 1)
        throw ConfigError("dataset dimension must be positive");
    if (!points_.allFinite() || !values_.allFinite())
        throw ConfigError("dataset contains non-finite entries");
    check_distinct(points_);
}

Dataset::Dataset(Matrix points, Vector values, Matrix eval_points, Vector eval_values)
    : Dataset(std::move(points), std::move(values)) {
    if (eval_points.cols() != points_.cols() || eval_points.rows() != eval_values.size())
        throw ConfigError("evaluation set shape does not match the training set");
    eval_points_ = std::move(eval_points);
    eval_values_ = std::move(eval_values);
}

const Matrix& Dataset::eval_points() const {
    if (!eval_points_)
        throw ConfigError("dataset has no evaluation set");
    return *eval_points_;
}

const Vector& Dataset::eval_values() const {
    if (!eval_values_)
        throw ConfigError("dataset has no evaluation set");
    return *eval_values_;
}

Dataset Dataset::with_values(Vector values) const {
    if (values.size() != values_.size())
        throw DomainError("with_values: size mismatch");
    Dataset copy = *this;
    copy.values_ = std::move(values);
    return copy;
}

GammaSpec GammaSpec::power_law(double A, double B, int d) {
    if (!(A >= 0.0) || !(B >= 0.0) || !(A + B > 0.0))
        throw ConfigError("power-law gamma needs A >= 0, B >= 0 and A + B > 0");
    if (d < 1)
        throw ConfigError("power-law gamma needs d >= 1");
    return GammaSpec(PowerLaw{A, B, d});
}

GammaSpec GammaSpec::tabulated(std::vector<double> freqs, std::vector<double> rates) {
    if (freqs.size() != rates.size() || freqs.size() < 2)
        throw ConfigError("tabulated gamma needs at least two (freq, rate) pairs of equal length");
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        if (!(rates[i] > 0.0) || !std::isfinite(rates[i]))
            throw ConfigError("tabulated gamma rates must be strictly positive");
        if (i > 0 && !(freqs[i] > freqs[i - 1]))
            throw ConfigError("tabulated gamma frequencies must be strictly increasing");
    }
    if (freqs.front() < 0.0)
        throw ConfigError("tabulated gamma frequencies are norms and must be nonnegative");
    return GammaSpec(Tabulated{std::move(freqs), std::move(rates)});
}

double GammaSpec::radial(double norm) const {
    if (const auto* p = std::get_if<PowerLaw>(&variant_)) {
        if (!(norm > 0.0))
            throw DomainError("power-law gamma is singular at xi = 0");
        const double d = p->d;
        return p->A * std::pow(norm, -(d + 3.0)) + p->B * std::pow(norm, -(d + 1.0));
    }
    const auto& t = std::get<Tabulated>(variant_);
    if (norm < t.freqs.front() || norm > t.freqs.back())
        throw DomainError("|xi| = " + std::to_string(norm) + " lies outside the tabulated range [" +
                          std::to_string(t.freqs.front()) + ", " + std::to_string(t.freqs.back()) + "]");
    auto hi = std::upper_bound(t.freqs.begin(), t.freqs.end(), norm);
    if (hi == t.freqs.end())
        return t.rates.back();
    const auto k = static_cast<std::size_t>(hi - t.freqs.begin());
    const double s = (norm - t.freqs[k - 1]) / (t.freqs[k] - t.freqs[k - 1]);
    return (1.0 - s) * t.rates[k - 1] + s * t.rates[k];
}

std::optional<std::string> GammaSpec::fprinciple_warning() const {
    const auto* t = std::get_if<Tabulated>(&variant_);
    if (!t)
        return std::nullopt;
    for (std::size_t i = 1; i < t->rates.size(); ++i)
        if (t->rates[i] > t->rates[i - 1])
            return "tabulated gamma increases between |xi| = " + std::to_string(t->freqs[i - 1]) + " and " +
                   std::to_string(t->freqs[i]) + "; low frequencies are not learned first";
    return std::nullopt;
}

double gamma_eval(const GammaSpec& spec, const Vector& xi) {
    if (spec.is_power_law() && xi.size() != spec.as_power_law().d)
        throw DomainError("gamma_eval: frequency has dimension " + std::to_string(xi.size()) +
                          ", rate was built for d = " + std::to_string(spec.as_power_law().d));
    return spec.radial(xi.norm());
}

FrequencyLattice::FrequencyLattice(int d, double xi_max, double dxi, double eps_zero, Matrix nodes)
    : d_(d), xi_max_(xi_max), dxi_(dxi), eps_zero_(eps_zero), nodes_(std::move(nodes)) {}

double FrequencyLattice::cell_volume() const { return std::pow(dxi_, d_); }

FrequencyLattice build_lattice(int d, double xi_max, double dxi, std::optional<double> eps_zero,
                               std::size_t max_nodes) {
    const double eps = eps_zero.value_or(dxi / 2.0);
    if (d < 1 || !(dxi > 0.0) || !(xi_max >= dxi) || !(eps > 0.0))
        throw ConfigError("build_lattice: need d >= 1, dxi > 0, xi_max >= dxi, eps_zero > 0");
    if (!(eps < dxi))
        throw ConfigError("build_lattice: eps_zero must be smaller than dxi");

    const auto K = static_cast<long long>(std::floor(xi_max / dxi + 1e-9));
    const long long side = 2 * K + 1;
    long double total = 1.0L;
    for (int a = 0; a < d; ++a)
        total *= static_cast<long double>(side);
    if (total > static_cast<long double>(max_nodes))
        throw ResourceError("frequency lattice would hold " + std::to_string(static_cast<double>(total)) +
                            " nodes, budget is " + std::to_string(max_nodes));

    const auto full = static_cast<long long>(total);
    std::vector<double> coords;
    coords.reserve(static_cast<std::size_t>(full * d));
    std::vector<long long> k(static_cast<std::size_t>(d), -K);
    long long kept = 0;
    std::vector<double> xi(static_cast<std::size_t>(d));
    for (long long idx = 0; idx < full; ++idx) {
        double norm2 = 0.0;
        for (int a = 0; a < d; ++a) {
            xi[a] = static_cast<double>(k[a]) * dxi;
            norm2 += xi[a] * xi[a];
        }
        if (std::sqrt(norm2) >= eps) {
            coords.insert(coords.end(), xi.begin(), xi.end());
            ++kept;
        }
        // Lexicographic odometer, last axis fastest.
        for (int a = d - 1; a >= 0; --a) {
            if (++k[a] <= K)
                break;
            k[a] = -K;
        }
    }
    Matrix nodes(kept, d);
    for (long long i = 0; i < kept; ++i)
        for (int a = 0; a < d; ++a)
            nodes(i, a) = coords[static_cast<std::size_t>(i * d + a)];
    return FrequencyLattice(d, xi_max, dxi, eps, std::move(nodes));
}

Complex empirical_transform(const Vector& values, const Dataset& dataset, const Vector& xi) {
    if (values.size() != dataset.size())
        throw DomainError("empirical_transform: " + std::to_string(values.size()) + " values for " +
                          std::to_string(dataset.size()) + " points");
    if (xi.size() != dataset.dimension())
        throw DomainError("empirical_transform: frequency dimension mismatch");
    const Vector phase = dataset.points() * xi;
    Complex acc{0.0, 0.0};
    for (int i = 0; i < dataset.size(); ++i)
        acc += values[i] * std::polar(1.0, -phase[i]);
    return acc / static_cast<double>(dataset.size());
}

RandomSource::RandomSource(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), key_(mix64(mix64(seed + kGolden) ^ (stream * 0xd1342543de82ef95ULL + 1))) {}

RandomSource RandomSource::split(std::uint64_t stream) const {
    RandomSource child(seed_, 0);
    child.key_ = mix64(key_ ^ mix64(stream + kGolden));
    return child;
}

std::uint64_t RandomSource::next_u64() { return mix64(key_ + kGolden * ++counter_); }

double RandomSource::uniform() {
    // 53 random mantissa bits, shifted off zero.
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RandomSource::normal() {
    // Box-Muller, one variate per pair of uniforms so the stream stays stateless.
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open dataset " + path.string());
    std::string line;
    if (!std::getline(in, line))
        throw ConfigError("dataset " + path.string() + " is empty");
    const auto header = split_csv_line(line);
    const int d = static_cast<int>(header.size()) - 1;
    if (d < 1 || header.back() != "y")
        throw ConfigError("dataset header must be x0,...,x{d-1},y");
    for (int a = 0; a < d; ++a)
        if (header[a] != "x" + std::to_string(a))
            throw ConfigError("dataset header column " + std::to_string(a) + " must be x" + std::to_string(a));

    std::vector<double> xs;
    std::vector<double> ys;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r")
            continue;
        const auto cells = split_csv_line(line);
        if (static_cast<int>(cells.size()) != d + 1)
            throw ConfigError("dataset row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                              " columns, expected " + std::to_string(d + 1));
        for (int a = 0; a < d; ++a)
            xs.push_back(parse_double(cells[a]));
        ys.push_back(parse_double(cells[d]));
    }
    const auto n = static_cast<Eigen::Index>(ys.size());
    if (n == 0)
        throw ConfigError("dataset " + path.string() + " has no rows");
    Matrix points(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (int a = 0; a < d; ++a)
            points(i, a) = xs[static_cast<std::size_t>(i * d + a)];
    return Dataset(std::move(points), Eigen::Map<Vector>(ys.data(), n));
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& dataset) {
    std::vector<std::string> header;
    for (int a = 0; a < dataset.dimension(); ++a)
        header.push_back("x" + std::to_string(a));
    header.emplace_back("y");
    CsvWriter csv(path, header);
    for (int i = 0; i < dataset.size(); ++i) {
        std::vector<double> row;
        for (int a = 0; a < dataset.dimension(); ++a)
            row.push_back(dataset.points()(i, a));
        row.push_back(dataset.values()[i]);
        csv.row(row);
    }
}

}  // namespace fpl
