#include "specmargin/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>

#include "specmargin/errors.hpp"

namespace specmargin {

RngSeed derive_seed(RngSeed master, std::uint64_t index) noexcept {
    // splitmix64 finalizer over (master, index)
    std::uint64_t z = master.value + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return RngSeed{z ^ (z >> 31)};
}

Matrix::Matrix(std::size_t rows, std::size_t cols) : Matrix(rows, cols, std::vector<double>(rows * cols, 0.0)) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), entries_(std::move(entries)) {
    if (rows_ == 0 || cols_ == 0) {
        throw InvalidInput("matrix dimensions must be positive, got " + std::to_string(rows_) + "x" +
                           std::to_string(cols_));
    }
    if (entries_.size() != rows_ * cols_) {
        throw InvalidInput("matrix " + std::to_string(rows_) + "x" + std::to_string(cols_) + " needs " +
                           std::to_string(rows_ * cols_) + " entries, got " + std::to_string(entries_.size()));
    }
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (!std::isfinite(entries_[i])) {
            throw InvalidInput("matrix entry " + std::to_string(i) + " is not finite");
        }
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.entries_[i * n + i] = 1.0;
    return m;
}

Matrix Matrix::constant(std::size_t rows, std::size_t cols, double value) {
    return Matrix(rows, cols, std::vector<double>(rows * cols, value));
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw InvalidInput("matrix needs at least one row");
    const std::size_t cols = rows.front().size();
    std::vector<double> entries;
    entries.reserve(rows.size() * cols);
    for (const auto& r : rows) {
        if (r.size() != cols) throw InvalidInput("ragged matrix rows");
        entries.insert(entries.end(), r.begin(), r.end());
    }
    return Matrix(rows.size(), cols, std::move(entries));
}

bool Matrix::is_zero() const noexcept {
    return std::all_of(entries_.begin(), entries_.end(), [](double x) { return x == 0.0; });
}

Matrix Matrix::scaled(double factor) const {
    std::vector<double> out(entries_.size());
    std::transform(entries_.begin(), entries_.end(), out.begin(), [factor](double x) { return factor * x; });
    return Matrix(rows_, cols_, std::move(out));
}

Matrix Matrix::plus(const Matrix& other) const {
    if (!same_shape(other)) throw InvalidInput("matrix shape mismatch in addition");
    std::vector<double> out(entries_.size());
    std::transform(entries_.begin(), entries_.end(), other.entries_.begin(), out.begin(), std::plus<>{});
    return Matrix(rows_, cols_, std::move(out));
}

Matrix Matrix::minus(const Matrix& other) const {
    if (!same_shape(other)) throw InvalidInput("matrix shape mismatch in subtraction");
    std::vector<double> out(entries_.size());
    std::transform(entries_.begin(), entries_.end(), other.entries_.begin(), out.begin(), std::minus<>{});
    return Matrix(rows_, cols_, std::move(out));
}

Vector mat_vec(const Matrix& m, std::span<const double> v) {
    if (v.size() != m.cols()) {
        throw InvalidInput("mat_vec: vector length " + std::to_string(v.size()) + " does not match " +
                           std::to_string(m.cols()) + " columns");
    }
    Vector out(m.rows(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * v[c];
        out[r] = acc;
    }
    return out;
}

Vector transpose_mat_vec(const Matrix& m, std::span<const double> v) {
    if (v.size() != m.rows()) {
        throw InvalidInput("transpose_mat_vec: vector length " + std::to_string(v.size()) + " does not match " +
                           std::to_string(m.rows()) + " rows");
    }
    Vector out(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        const double vr = v[r];
        for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c] * vr;
    }
    return out;
}

double l2_norm(std::span<const double> v) noexcept {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

double linf_norm(std::span<const double> v) noexcept {
    double best = 0.0;
    for (double x : v) best = std::max(best, std::abs(x));
    return best;
}

namespace {

struct PowerResult {
    double lambda;  // Rayleigh quotient of M^T M
    bool converged;
    int iterations;
};

// Dense n x n Gram power, row-major, rescaled to unit max entry.
struct GramPower {
    std::size_t n = 0;
    std::vector<double> a;

    static GramPower of(const Matrix& m) {
        GramPower g{m.cols(), std::vector<double>(m.cols() * m.cols(), 0.0)};
        for (std::size_t r = 0; r < m.rows(); ++r) {
            for (std::size_t i = 0; i < g.n; ++i) {
                const double mi = m(r, i);
                if (mi == 0.0) continue;
                for (std::size_t j = 0; j < g.n; ++j) g.a[i * g.n + j] += mi * m(r, j);
            }
        }
        g.rescale();
        return g;
    }

    void square() {
        std::vector<double> out(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < n; ++k) {
                const double aik = a[i * n + k];
                if (aik == 0.0) continue;
                for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aik * a[k * n + j];
            }
        a = std::move(out);
        rescale();
    }

    void rescale() {
        double top = 0.0;
        for (double x : a) top = std::max(top, std::abs(x));
        if (top > 0.0)
            for (double& x : a) x /= top;
    }

    Vector apply(const Vector& v) const {
        Vector out(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += a[i * n + j] * v[j];
            out[i] = acc;
        }
        return out;
    }
};

// Iterations between squarings of the Gram operator once plain steps stall.
constexpr int kSquareEvery = 64;

PowerResult power_iterate(const Matrix& m, const PowerIterationOptions& opts, RngSeed seed) {
    std::mt19937_64 rng(seed.value);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector v(m.cols());
    for (double& x : v) x = normal(rng);

    auto normalize = [](Vector& x) {
        const double n = l2_norm(x);
        if (n == 0.0) return false;
        for (double& e : x) e /= n;
        return true;
    };
    auto rayleigh = [&m](const Vector& x) {
        double acc = 0.0;
        for (double y : mat_vec(m, x)) acc += y * y;
        return acc;
    };
    if (!normalize(v)) return {0.0, false, 0};

    // Plain steps apply M^T M. A nearly tied top pair makes them crawl, so every
    // kSquareEvery unconverged steps the operator is squared, squaring the
    // convergence ratio. The Rayleigh quotient is always that of M^T M.
    std::optional<GramPower> power;
    double lambda = 0.0;
    int stable_steps = 0;
    for (int it = 1; it <= opts.max_iter; ++it) {
        if (it % kSquareEvery == 0) {
            if (!power) {
                power = GramPower::of(m);
            }
            power->square();
        }
        const Vector mv = mat_vec(m, v);
        double next = 0.0;
        for (double y : mv) next += y * y;
        Vector next_v = power ? power->apply(v) : transpose_mat_vec(m, mv);
        if (!normalize(next_v)) {
            // start landed in the null space; a fresh seed is needed
            return {next, false, it};
        }
        const double change = std::abs(next - lambda);
        lambda = next;
        v = std::move(next_v);
        // two consecutive small steps guard against a momentary plateau
        stable_steps = (change <= opts.tol * lambda) ? stable_steps + 1 : 0;
        if (stable_steps >= 2) {
            // v is one step ahead of lambda; its quotient is never smaller
            return {std::max(lambda, rayleigh(v)), true, it};
        }
    }
    return {lambda, false, opts.max_iter};
}

}  // namespace

double spectral_norm(const Matrix& m, const PowerIterationOptions& opts) {
    if (!(opts.tol > 0.0)) throw InvalidInput("spectral_norm: tol must be positive");
    if (opts.max_iter < 1) throw InvalidInput("spectral_norm: max_iter must be >= 1");
    if (m.is_zero()) return 0.0;

    PowerResult result = power_iterate(m, opts, opts.seed);
    if (!result.converged) {
        const PowerResult retry = power_iterate(m, opts, derive_seed(opts.seed, 1));
        if (!retry.converged) {
            throw NotConverged("spectral_norm: power iteration did not converge in " +
                                   std::to_string(opts.max_iter) + " iterations (after one restart)",
                               std::sqrt(std::max(retry.lambda, result.lambda)), retry.iterations);
        }
        result = retry;
    }
    return std::sqrt(result.lambda);
}

double frobenius_norm(const Matrix& m) noexcept { return l2_norm(m.entries()); }

double l1_elementwise_norm(const Matrix& m) noexcept {
    double acc = 0.0;
    for (double x : m.entries()) acc += std::abs(x);
    return acc;
}

double l21_norm(const Matrix& m) noexcept {
    double acc = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) acc += l2_norm(m.row(r));
    return acc;
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double sigma, RngSeed seed) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidInput("gaussian_matrix: sigma must be >= 0");
    std::vector<double> entries(rows * cols, 0.0);
    if (sigma > 0.0) {
        std::mt19937_64 rng(seed.value);
        std::normal_distribution<double> normal(0.0, sigma);
        for (double& x : entries) x = normal(rng);
    }
    return Matrix(rows, cols, std::move(entries));
}

}  // namespace specmargin
