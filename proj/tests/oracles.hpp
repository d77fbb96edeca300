#pragma once

// Test-only reference computations. Nothing here calls into the code paths it checks.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "specmargin/linalg.hpp"
#include "specmargin/network.hpp"

namespace oracle {

using Dense = std::vector<std::vector<double>>;

inline Dense to_dense(const specmargin::Matrix& m) {
    Dense out(m.rows(), std::vector<double>(m.cols()));
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
    return out;
}

/// M^T M
inline Dense gram(const specmargin::Matrix& m) {
    const std::size_t n = m.cols();
    Dense g(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t r = 0; r < m.rows(); ++r) g[i][j] += m(r, i) * m(r, j);
    return g;
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
inline std::vector<double> jacobi_eigenvalues(Dense a) {
    const std::size_t n = a.size();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                total += a[i][j] * a[i][j];
                if (i != j) off += a[i][j] * a[i][j];
            }
        if (off <= 1e-30 * total || off == 0.0) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a[p][q] == 0.0) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p];
                    const double akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k];
                    const double aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a[i][i];
    return eig;
}

/// Largest singular value as sqrt of the top eigenvalue of M^T M.
inline double spectral_norm(const specmargin::Matrix& m) {
    const auto eig = jacobi_eigenvalues(gram(m));
    return std::sqrt(std::max(0.0, *std::max_element(eig.begin(), eig.end())));
}

/// Straight-line forward pass over dense copies.
inline std::vector<double> forward(const specmargin::ReluNetwork& net, const std::vector<double>& x) {
    std::vector<double> h = x;
    for (std::size_t layer = 0; layer < net.depth(); ++layer) {
        const Dense w = to_dense(net.layer(layer));
        std::vector<double> next(w.size(), 0.0);
        for (std::size_t r = 0; r < w.size(); ++r) {
            for (std::size_t c = 0; c < h.size(); ++c) {
                const double in = layer == 0 ? h[c] : std::max(0.0, h[c]);
                next[r] += w[r][c] * in;
            }
        }
        h = next;
    }
    return h;
}

inline specmargin::Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    std::vector<double> e(rows * cols);
    for (double& x : e) x = normal(rng);
    return specmargin::Matrix(rows, cols, std::move(e));
}

/// Network with the given layer sizes and Gaussian weights.
inline specmargin::ReluNetwork random_net(std::mt19937_64& rng, const std::vector<std::size_t>& sizes,
                                          double scale = 1.0) {
    std::vector<specmargin::Matrix> layers;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
        layers.push_back(random_matrix(rng, sizes[i + 1], sizes[i], scale / std::sqrt(double(sizes[i]))));
    }
    return specmargin::ReluNetwork(std::move(layers));
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    std::vector<double> v(n);
    for (double& x : v) x = normal(rng);
    return v;
}

inline specmargin::LabeledDataset random_dataset(std::mt19937_64& rng, std::size_t m, std::size_t n, int k) {
    std::vector<std::vector<double>> xs;
    std::vector<int> ys;
    std::uniform_int_distribution<int> pick(0, k - 1);
    for (std::size_t i = 0; i < m; ++i) {
        xs.push_back(random_vector(rng, n));
        ys.push_back(pick(rng));
    }
    return specmargin::LabeledDataset(std::move(xs), std::move(ys), k);
}

inline bool rel_close(double a, double b, double tol) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
    return std::abs(a - b) <= tol * scale;
}

}  // namespace oracle
