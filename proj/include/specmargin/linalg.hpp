#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace specmargin {

using Vector = std::vector<double>;

/// Seed for every random stream in the library. Equal seeds give equal streams.
struct RngSeed {
    std::uint64_t value = 0;

    friend bool operator==(RngSeed, RngSeed) = default;
};

/// Derives an independent seed for sub-stream `index` of `master`.
/// Counter-based, so the i-th trial gets the same stream whatever the thread schedule.
RngSeed derive_seed(RngSeed master, std::uint64_t index) noexcept;

/// Dense row-major matrix of finite doubles.
class Matrix {
public:
    Matrix(std::size_t rows, std::size_t cols);  // zero-filled
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries);

    static Matrix identity(std::size_t n);
    static Matrix constant(std::size_t rows, std::size_t cols, double value);
    static Matrix from_rows(const std::vector<std::vector<double>>& rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::span<const double> entries() const noexcept { return entries_; }

    double operator()(std::size_t r, std::size_t c) const noexcept { return entries_[r * cols_ + c]; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {entries_.data() + r * cols_, cols_};
    }

    bool is_zero() const noexcept;
    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    Matrix scaled(double factor) const;
    Matrix plus(const Matrix& other) const;
    Matrix minus(const Matrix& other) const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> entries_;
};

Vector mat_vec(const Matrix& m, std::span<const double> v);
Vector transpose_mat_vec(const Matrix& m, std::span<const double> v);

double l2_norm(std::span<const double> v) noexcept;
double linf_norm(std::span<const double> v) noexcept;

struct PowerIterationOptions {
    double tol = 1e-10;
    int max_iter = 10'000;
    RngSeed seed{0x5eed'0f'5bec'7a1ULL};
};

/// Largest singular value via power iteration on v -> M^T(Mv).
///
/// Stops once the Rayleigh quotient changes by less than `tol` (relative) between
/// two consecutive iterations. On failure it restarts once from a second seed and
/// then throws NotConverged with the last estimate. The zero matrix returns 0.
double spectral_norm(const Matrix& m, const PowerIterationOptions& opts = {});

double frobenius_norm(const Matrix& m) noexcept;
double l1_elementwise_norm(const Matrix& m) noexcept;
/// Sum over rows of each row's l2 norm. Rows are output units.
double l21_norm(const Matrix& m) noexcept;

/// i.i.d. N(0, sigma^2) entries drawn from the stream seeded by `seed`.
Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double sigma, RngSeed seed);

}  // namespace specmargin
