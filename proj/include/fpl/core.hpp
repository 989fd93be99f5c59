#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace fpl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using CVector = Eigen::VectorXcd;
using Complex = std::complex<double>;

// Training pairs (x_i, y_i) stored row-wise: points is n x d.
class Dataset {
public:
    Dataset(Matrix points, Vector values);
    Dataset(Matrix points, Vector values, Matrix eval_points, Vector eval_values);

    int size() const { return static_cast<int>(values_.size()); }
    int dimension() const { return static_cast<int>(points_.cols()); }

    const Matrix& points() const { return points_; }
    const Vector& values() const { return values_; }
    Vector point(int i) const { return points_.row(i).transpose(); }

    bool has_eval() const { return eval_points_.has_value(); }
    const Matrix& eval_points() const;
    const Vector& eval_values() const;

    // Same points, different values (no re-validation of geometry).
    Dataset with_values(Vector values) const;

private:
    Matrix points_;
    Vector values_;
    std::optional<Matrix> eval_points_;
    std::optional<Vector> eval_values_;
};

// gamma(xi) = A |xi|^-(d+3) + B |xi|^-(d+1).
struct PowerLaw {
    double A = 0.0;
    double B = 0.0;
    int d = 1;
};

// gamma tabulated against |xi|, interpolated piecewise-linearly.
struct Tabulated {
    std::vector<double> freqs;
    std::vector<double> rates;
};

class GammaSpec {
public:
    static GammaSpec power_law(double A, double B, int d);
    static GammaSpec tabulated(std::vector<double> freqs, std::vector<double> rates);

    bool is_power_law() const { return std::holds_alternative<PowerLaw>(variant_); }
    const PowerLaw& as_power_law() const { return std::get<PowerLaw>(variant_); }
    const Tabulated& as_tabulated() const { return std::get<Tabulated>(variant_); }

    // Rate as a function of |xi| only; both variants are radial.
    double radial(double norm) const;

    // Non-empty when tabulated rates increase somewhere (F-Principle violation).
    std::optional<std::string> fprinciple_warning() const;

private:
    explicit GammaSpec(std::variant<PowerLaw, Tabulated> v) : variant_(std::move(v)) {}
    std::variant<PowerLaw, Tabulated> variant_;
};

double gamma_eval(const GammaSpec& spec, const Vector& xi);

// Uniform grid {k * dxi : |k * dxi| <= xi_max per axis} minus the ball |xi| < eps_zero.
// Nodes are stored in lexicographic order so node i and node size()-1-i are negatives.
class FrequencyLattice {
public:
    FrequencyLattice(int d, double xi_max, double dxi, double eps_zero, Matrix nodes);

    int dimension() const { return d_; }
    double xi_max() const { return xi_max_; }
    double dxi() const { return dxi_; }
    double eps_zero() const { return eps_zero_; }
    int size() const { return static_cast<int>(nodes_.rows()); }
    const Matrix& nodes() const { return nodes_; }
    Vector node(int i) const { return nodes_.row(i).transpose(); }
    int negated(int i) const { return size() - 1 - i; }
    // dxi^d, the quadrature weight of every node.
    double cell_volume() const;

private:
    int d_;
    double xi_max_;
    double dxi_;
    double eps_zero_;
    Matrix nodes_;
};

inline constexpr std::size_t kDefaultLatticeBudget = 8'000'000;

// eps_zero defaults to dxi / 2.
FrequencyLattice build_lattice(int d, double xi_max, double dxi,
                               std::optional<double> eps_zero = std::nullopt,
                               std::size_t max_nodes = kDefaultLatticeBudget);

// (1/n) sum_i values_i exp(-i xi . x_i)
Complex empirical_transform(const Vector& values, const Dataset& dataset, const Vector& xi);

// Counter-based generator: the k-th draw of a stream is a pure function of
// (seed, stream, k), so split streams can be consumed in any order.
class RandomSource {
public:
    explicit RandomSource(std::uint64_t seed, std::uint64_t stream = 0);

    RandomSource split(std::uint64_t stream) const;

    std::uint64_t next_u64();
    // Uniform on the open interval (0, 1).
    double uniform();
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// Dataset CSV: header x0,...,x{d-1},y; full double precision, row order preserved.
Dataset read_dataset_csv(const std::filesystem::path& path);
void write_dataset_csv(const std::filesystem::path& path, const Dataset& dataset);

}  // namespace fpl
