#pragma once

#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

namespace ttmc {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Square linear map given by an apply callback. Implementations must be
/// immutable after construction and safe for concurrent apply calls.
class LinearMap {
public:
    LinearMap() = default;
    LinearMap(Index dim, std::function<Vector(const Vector&)> apply)
        : dim_(dim), apply_(std::move(apply)) {}

    static LinearMap from_matrix(const Matrix& a) {
        if (a.rows() != a.cols()) throw std::invalid_argument("LinearMap: matrix not square");
        return LinearMap(a.rows(), [a](const Vector& v) { return Vector(a * v); });
    }

    Index dim() const { return dim_; }
    Vector operator()(const Vector& v) const {
        if (v.size() != dim_) throw std::invalid_argument("LinearMap: size mismatch");
        return apply_(v);
    }

private:
    Index dim_ = 0;
    std::function<Vector(const Vector&)> apply_;
};

/// Spot check that a map is symmetric: <u, Av> == <Au, v> on random probes.
inline bool probe_symmetric(const LinearMap& map, double tol = 1e-8, int probes = 3,
                            std::uint64_t seed = 13) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist;
    for (int p = 0; p < probes; ++p) {
        Vector u(map.dim()), v(map.dim());
        for (Index i = 0; i < map.dim(); ++i) {
            u(i) = dist(rng);
            v(i) = dist(rng);
        }
        const double lhs = u.dot(map(v)), rhs = map(u).dot(v);
        const double scale = std::max({1.0, std::abs(lhs), std::abs(rhs)});
        if (std::abs(lhs - rhs) > tol * scale) return false;
    }
    return true;
}

/// Rough condition estimate from the pivoted-LU diagonal; telemetry only.
inline double lu_cond_estimate(const Eigen::PartialPivLU<Matrix>& lu) {
    const Vector diag = lu.matrixLU().diagonal().cwiseAbs();
    const double mx = diag.maxCoeff();
    const double mn = diag.minCoeff();
    return mn > 0.0 ? mx / mn : std::numeric_limits<double>::infinity();
}

/// Direct solve with pivoted LU; falls back to a QR least-squares solve when a
/// pivot drops below 1e-12 relative.
inline Vector dense_solve(const Matrix& a, const Vector& b) {
    if (a.rows() != a.cols() || a.rows() != b.size())
        throw std::invalid_argument("dense_solve: dimension mismatch");
    Eigen::PartialPivLU<Matrix> lu(a);
    const Vector diag = lu.matrixLU().diagonal().cwiseAbs();
    if (diag.minCoeff() > 1e-12 * std::max(1e-300, diag.maxCoeff())) return lu.solve(b);
    return a.colPivHouseholderQr().solve(b);
}

struct KrylovResult {
    Vector x;
    double residual = 0.0;  // absolute ||b - A x||
    int iterations = 0;
    bool converged = false;
};

/**
 * Unpreconditioned MINRES for symmetric (possibly indefinite or singular)
 * systems. Stops when ||b - A x|| <= tol * ||b||. NaN breakdown returns the
 * best iterate with converged=false instead of throwing.
 */
inline KrylovResult minres(const LinearMap& map, const Vector& b, double tol, int maxit,
                           const Vector* x0 = nullptr) {
    const Index n = map.dim();
    if (b.size() != n) throw std::invalid_argument("minres: dimension mismatch");
    KrylovResult out;
    const double bnorm = b.norm();
    if (bnorm == 0.0) {
        // Minimal-norm solution of the homogeneous system.
        out.x = Vector::Zero(n);
        out.converged = true;
        return out;
    }
    out.x = x0 ? *x0 : Vector::Zero(n);

    Vector r = b - map(out.x);
    double beta = r.norm();
    if (beta <= tol * bnorm) {
        out.residual = beta;
        out.converged = true;
        return out;
    }

    Vector v_prev = Vector::Zero(n);
    Vector v = r / beta;
    Vector d_prev = Vector::Zero(n), d_prev2 = Vector::Zero(n);
    double eta = beta;
    double gamma = 1.0, gamma_old = 1.0, sigma = 0.0, sigma_old = 0.0;

    for (int it = 1; it <= maxit; ++it) {
        Vector w = map(v);
        const double alpha = v.dot(w);
        w.noalias() -= alpha * v + beta * v_prev;
        const double beta_next = w.norm();

        // Two previous Givens rotations, then a new one.
        const double delta = gamma * alpha - gamma_old * sigma * beta;
        const double rho1 = std::sqrt(delta * delta + beta_next * beta_next);
        const double rho2 = sigma * alpha + gamma_old * gamma * beta;
        const double rho3 = sigma_old * beta;

        if (!(rho1 > 0.0) || !std::isfinite(rho1)) {
            out.iterations = it - 1;
            out.residual = (b - map(out.x)).norm();
            out.converged = out.residual <= tol * bnorm;
            return out;
        }

        const double gamma_next = delta / rho1;
        const double sigma_next = beta_next / rho1;

        Vector d = (v - rho3 * d_prev2 - rho2 * d_prev) / rho1;
        out.x.noalias() += gamma_next * eta * d;
        eta = -sigma_next * eta;

        d_prev2 = std::move(d_prev);
        d_prev = std::move(d);
        v_prev = v;
        if (beta_next > 0.0) v = w / beta_next;
        gamma_old = gamma;
        gamma = gamma_next;
        sigma_old = sigma;
        sigma = sigma_next;
        beta = beta_next;

        out.iterations = it;
        if (!out.x.allFinite()) {
            out.x = x0 ? *x0 : Vector::Zero(n);
            out.residual = (b - map(out.x)).norm();
            out.converged = false;
            return out;
        }
        if (std::abs(eta) <= tol * bnorm || beta_next == 0.0) break;
    }
    out.residual = (b - map(out.x)).norm();
    out.converged = out.residual <= tol * bnorm;
    return out;
}

/// Full (non-restarted) GMRES run for a fixed number of steps. The returned
/// iterate minimizes the residual over the Krylov space, so it never exceeds
/// the initial residual. Lucky breakdown returns early.
inline KrylovResult gmres_dense(const LinearMap& map, const Vector& b, const Vector& x0,
                                int steps) {
    if (steps < 1) throw std::invalid_argument("gmres_dense: steps < 1");
    const Index n = map.dim();
    KrylovResult out;
    out.x = x0;
    Vector r = b - map(x0);
    const double beta = r.norm();
    out.residual = beta;
    if (beta == 0.0) {
        out.converged = true;
        return out;
    }

    std::vector<Vector> basis;
    basis.push_back(r / beta);
    Matrix h = Matrix::Zero(steps + 1, steps);
    int m = 0;
    for (int j = 0; j < steps; ++j) {
        Vector w = map(basis[static_cast<std::size_t>(j)]);
        for (int i = 0; i <= j; ++i) {
            h(i, j) = basis[static_cast<std::size_t>(i)].dot(w);
            w.noalias() -= h(i, j) * basis[static_cast<std::size_t>(i)];
        }
        h(j + 1, j) = w.norm();
        m = j + 1;
        if (h(j + 1, j) <= 1e-14 * beta) break;
        basis.push_back(w / h(j + 1, j));
    }

    Vector rhs = Vector::Zero(m + 1);
    rhs(0) = beta;
    Vector y = h.topLeftCorner(m + 1, m).colPivHouseholderQr().solve(rhs);
    for (int i = 0; i < m; ++i) out.x.noalias() += y(i) * basis[static_cast<std::size_t>(i)];
    out.iterations = m;
    out.residual = (b - map(out.x)).norm();
    out.converged = out.residual <= 1e-12 * beta;
    return out;
}

/**
 * Stationary vector of a transposed generator A (columns sum to zero,
 * off-diagonal of A^T nonnegative): solves Ax = 0, sum(x) = 1 by replacing the
 * first row with all-ones. A numerically singular replaced system signals a
 * non-irreducible chain and throws.
 */
inline Vector dense_stationary(const Matrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("dense_stationary: not square");
    const Index n = a.rows();
    Matrix m = a;
    m.row(0).setOnes();
    Vector rhs = Vector::Zero(n);
    rhs(0) = 1.0;
    Eigen::PartialPivLU<Matrix> lu(m);
    const Vector diag = lu.matrixLU().diagonal().cwiseAbs();
    if (diag.minCoeff() <= 1e-12 * std::max(1e-300, diag.maxCoeff()))
        throw std::runtime_error("dense_stationary: replaced system singular (chain not irreducible?)");
    Vector x = lu.solve(rhs);
    x /= x.sum();
    return x;
}

/// True iff the directed graph of off-diagonal nonzeros is one strongly
/// connected component (iterative Kosaraju).
inline bool strongly_connected(const std::vector<std::vector<Index>>& adj) {
    const Index n = static_cast<Index>(adj.size());
    if (n == 0) return false;
    if (n == 1) return true;

    std::vector<std::vector<Index>> radj(static_cast<std::size_t>(n));
    for (Index u = 0; u < n; ++u)
        for (Index v : adj[static_cast<std::size_t>(u)]) radj[static_cast<std::size_t>(v)].push_back(u);

    auto reaches_all = [n](const std::vector<std::vector<Index>>& g) {
        std::vector<bool> seen(static_cast<std::size_t>(n), false);
        std::vector<Index> stack{0};
        seen[0] = true;
        Index count = 1;
        while (!stack.empty()) {
            const Index u = stack.back();
            stack.pop_back();
            for (Index v : g[static_cast<std::size_t>(u)])
                if (!seen[static_cast<std::size_t>(v)]) {
                    seen[static_cast<std::size_t>(v)] = true;
                    ++count;
                    stack.push_back(v);
                }
        }
        return count == n;
    };
    return reaches_all(adj) && reaches_all(radj);
}

/// Adjacency pattern of off-diagonal entries above a magnitude threshold.
inline std::vector<std::vector<Index>> offdiagonal_pattern(const Matrix& a, double tol = 0.0) {
    const Index n = a.rows();
    std::vector<std::vector<Index>> adj(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
            if (i != j && std::abs(a(i, j)) > tol) adj[static_cast<std::size_t>(i)].push_back(j);
    return adj;
}

}  // namespace ttmc
