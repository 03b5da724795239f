#pragma once

#include <Eigen/Core>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

namespace ttmc {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Truncation parameters: absolute tolerance on the Euclidean norm of the
/// discarded part plus a hard cap on every TT rank. The cap wins when both bind.
struct TruncationPolicy {
    double abs_tol = 0.0;
    Index max_rank = std::numeric_limits<Index>::max();

    TruncationPolicy() = default;
    TruncationPolicy(double tol, Index cap) : abs_tol(tol), max_rank(cap) {
        if (abs_tol < 0.0) throw std::invalid_argument("TruncationPolicy: abs_tol < 0");
        if (max_rank < 1) throw std::invalid_argument("TruncationPolicy: max_rank < 1");
    }
};

/**
 * Tensor in TT format: a chain of 3-way cores, core k of shape
 * (r_{k-1}, n_k, r_k) with r_0 = r_d = 1. Core k is stored as n_k matrix
 * slices of size r_{k-1} x r_k; entry (i_1,...,i_d) is the product
 * G_1(i_1) G_2(i_2) ... G_d(i_d).
 *
 * The linearization convention throughout is i_1 fastest:
 *   vec index = i_1 + i_2*n_1 + i_3*n_1*n_2 + ...   (0-based).
 *
 * Orthogonality bookkeeping: cores [0, left_ortho) are left-orthonormal
 * (vertical unfoldings have orthonormal columns) and cores [right_ortho, d)
 * are right-orthonormal (horizontal unfoldings have orthonormal rows).
 * The invariant left_ortho < right_ortho always holds; the cores in between
 * carry the weight.
 */
class TensorTrain {
public:
    TensorTrain() = default;

    /// Zero tensor with the given modes and ranks.
    TensorTrain(std::vector<Index> modes, std::vector<Index> ranks)
        : modes_(std::move(modes)), ranks_(std::move(ranks)) {
        check_shape();
        cores_.resize(static_cast<std::size_t>(d()));
        for (Index k = 0; k < d(); ++k)
            cores_[su(k)].assign(su(modes_[k]), Matrix::Zero(ranks_[k], ranks_[k + 1]));
        left_ortho_ = 0;
        right_ortho_ = d();
    }

    /// Builds a train from explicit core slices; modes and ranks are derived.
    static TensorTrain from_cores(std::vector<std::vector<Matrix>> cores) {
        if (cores.empty()) throw std::invalid_argument("from_cores: no cores");
        TensorTrain x;
        const Index d = static_cast<Index>(cores.size());
        x.modes_.resize(su(d));
        x.ranks_.assign(su(d) + 1, 1);
        for (Index k = 0; k < d; ++k) {
            const auto& c = cores[su(k)];
            if (c.empty()) throw std::invalid_argument("from_cores: empty core");
            x.modes_[su(k)] = static_cast<Index>(c.size());
            x.ranks_[su(k)] = c.front().rows();
            x.ranks_[su(k) + 1] = c.front().cols();
            for (const Matrix& s : c)
                if (s.rows() != c.front().rows() || s.cols() != c.front().cols())
                    throw std::invalid_argument("from_cores: ragged slices");
        }
        for (Index k = 0; k + 1 < d; ++k)
            if (cores[su(k)].front().cols() != cores[su(k) + 1].front().rows())
                throw std::invalid_argument("from_cores: bond rank mismatch");
        x.cores_ = std::move(cores);
        x.check_shape();
        x.left_ortho_ = 0;
        x.right_ortho_ = d;
        return x;
    }

    Index d() const { return static_cast<Index>(modes_.size()); }
    const std::vector<Index>& modes() const { return modes_; }
    Index mode(Index k) const { return modes_[su(k)]; }
    const std::vector<Index>& ranks() const { return ranks_; }
    Index rank(Index k) const { return ranks_[su(k)]; }
    Index max_rank() const {
        Index r = 1;
        for (Index v : ranks_) r = std::max(r, v);
        return r;
    }
    Index total_size() const {
        Index n = 1;
        for (Index m : modes_) {
            if (n > std::numeric_limits<Index>::max() / m) return std::numeric_limits<Index>::max();
            n *= m;
        }
        return n;
    }

    const std::vector<Matrix>& core(Index k) const { return cores_[su(k)]; }

    /// Replaces core k with slices of identical shape.
    void set_core(Index k, std::vector<Matrix> slices) {
        if (static_cast<Index>(slices.size()) != modes_[su(k)])
            throw std::invalid_argument("set_core: slice count != mode size");
        for (const Matrix& s : slices)
            if (s.rows() != ranks_[su(k)] || s.cols() != ranks_[su(k) + 1])
                throw std::invalid_argument("set_core: shape change requires replace_bond");
        cores_[su(k)] = std::move(slices);
        left_ortho_ = std::min(left_ortho_, k);
        right_ortho_ = std::max(right_ortho_, k + 1);
    }

    /// Replaces cores k and k+1 together; the bond rank r_{k+1} may change.
    void replace_bond(Index k, std::vector<Matrix> left, std::vector<Matrix> right) {
        if (k < 0 || k + 1 >= d()) throw std::invalid_argument("replace_bond: bad bond");
        if (static_cast<Index>(left.size()) != modes_[su(k)] ||
            static_cast<Index>(right.size()) != modes_[su(k) + 1])
            throw std::invalid_argument("replace_bond: slice count mismatch");
        const Index rb = left.front().cols();
        for (const Matrix& s : left)
            if (s.rows() != ranks_[su(k)] || s.cols() != rb)
                throw std::invalid_argument("replace_bond: left slices inconsistent");
        for (const Matrix& s : right)
            if (s.rows() != rb || s.cols() != ranks_[su(k) + 2])
                throw std::invalid_argument("replace_bond: right slices inconsistent");
        cores_[su(k)] = std::move(left);
        cores_[su(k) + 1] = std::move(right);
        ranks_[su(k) + 1] = rb;
        left_ortho_ = std::min(left_ortho_, k);
        right_ortho_ = std::max(right_ortho_, k + 2);
    }

    Index left_ortho() const { return left_ortho_; }
    Index right_ortho() const { return right_ortho_; }

    /// Trusted tag assertion for algorithms that maintain orthogonality manually.
    void set_ortho_tags(Index left, Index right) {
        if (left < 0 || right <= left || right > d())
            throw std::invalid_argument("set_ortho_tags: invalid window");
        left_ortho_ = left;
        right_ortho_ = right;
    }

    /// Entry evaluation by the core-product formula; O(d*r^2) per entry.
    double entry(const std::vector<Index>& idx) const {
        Matrix v = Matrix::Ones(1, 1);
        for (Index k = 0; k < d(); ++k) v = v * cores_[su(k)][su(idx[su(k)])];
        return v(0, 0);
    }

    /// Vertical unfolding of core k: (r_{k-1}*n_k) x r_k, row index a + i*r_{k-1}.
    Matrix vertical_unfold(Index k) const {
        const Index rl = ranks_[su(k)], n = modes_[su(k)];
        Matrix V(rl * n, ranks_[su(k) + 1]);
        for (Index i = 0; i < n; ++i) V.middleRows(i * rl, rl) = cores_[su(k)][su(i)];
        return V;
    }

    /// Horizontal unfolding of core k: r_{k-1} x (n_k*r_k), column index b + i*r_k.
    Matrix horizontal_unfold(Index k) const {
        const Index n = modes_[su(k)], rr = ranks_[su(k) + 1];
        Matrix H(ranks_[su(k)], n * rr);
        for (Index i = 0; i < n; ++i) H.middleCols(i * rr, rr) = cores_[su(k)][su(i)];
        return H;
    }

    /// QR of core k's vertical unfolding, triangular factor pushed into core k+1.
    /// Core k becomes left-orthonormal; bond rank shrinks to min(r_{k-1}*n_k, r_k).
    void shift_pivot_right(Index k) {
        if (k < 0 || k + 1 >= d()) throw std::invalid_argument("shift_pivot_right: bad core");
        const Index rl = ranks_[su(k)], n = modes_[su(k)];
        Matrix V = vertical_unfold(k);
        Eigen::HouseholderQR<Matrix> qr(V);
        const Index m = std::min(V.rows(), V.cols());
        Matrix Q = qr.householderQ() * Matrix::Identity(V.rows(), m);
        Matrix R = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
        for (Index i = 0; i < n; ++i) cores_[su(k)][su(i)] = Q.middleRows(i * rl, rl);
        for (Matrix& s : cores_[su(k) + 1]) s = R * s;
        ranks_[su(k) + 1] = m;
        left_ortho_ = (left_ortho_ >= k) ? k + 1 : left_ortho_;
        right_ortho_ = std::max(right_ortho_, k + 2);
    }

    /// LQ of core k's horizontal unfolding, triangular factor pushed into core k-1.
    /// Core k becomes right-orthonormal.
    void shift_pivot_left(Index k) {
        if (k < 1 || k >= d()) throw std::invalid_argument("shift_pivot_left: bad core");
        const Index n = modes_[su(k)], rr = ranks_[su(k) + 1];
        Matrix Ht = horizontal_unfold(k).transpose();  // (n*rr) x r_{k-1}
        Eigen::HouseholderQR<Matrix> qr(Ht);
        const Index m = std::min(Ht.rows(), Ht.cols());
        Matrix Q = qr.householderQ() * Matrix::Identity(Ht.rows(), m);
        Matrix R = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
        Matrix Qt = Q.transpose();  // m x (n*rr)
        for (Index i = 0; i < n; ++i) cores_[su(k)][su(i)] = Qt.middleCols(i * rr, rr);
        Matrix Rt = R.transpose();  // r_{k-1} x m
        for (Matrix& s : cores_[su(k) - 1]) s = s * Rt;
        ranks_[su(k)] = m;
        right_ortho_ = (right_ortho_ <= k + 1) ? k : right_ortho_;
        left_ortho_ = std::min(left_ortho_, k - 1);
        if (left_ortho_ >= right_ortho_) left_ortho_ = right_ortho_ - 1;
    }

    /// Canonical form with pivot at core k: cores left of k left-orthonormal,
    /// cores right of k right-orthonormal. Skips work the tags already cover.
    void canonicalize(Index k) {
        if (k < 0 || k >= d()) throw std::invalid_argument("canonicalize: pivot out of range");
        const Index l0 = left_ortho_;
        for (Index j = l0; j < k; ++j) shift_pivot_right(j);
        const Index r0 = std::min(right_ortho_, d());
        for (Index j = r0 - 1; j > k; --j) shift_pivot_left(j);
        left_ortho_ = k;
        right_ortho_ = k + 1;
    }

    /// Euclidean norm via orthogonalization.
    double norm() const {
        TensorTrain tmp = *this;
        const Index pivot = std::min(tmp.left_ortho_, tmp.d() - 1);
        tmp.canonicalize(pivot);
        double s = 0.0;
        for (const Matrix& m : tmp.cores_[su(pivot)]) s += m.squaredNorm();
        return std::sqrt(s);
    }

    /// In-place scalar multiply; applied to a core inside the non-orthonormal
    /// window, so the tags remain valid.
    void scale_in_place(double alpha) {
        const Index k = std::min(left_ortho_, d() - 1);
        for (Matrix& s : cores_[su(k)]) s *= alpha;
    }

private:
    static std::size_t su(Index i) { return static_cast<std::size_t>(i); }

    void check_shape() const {
        if (modes_.empty()) throw std::invalid_argument("TensorTrain: empty mode list");
        if (static_cast<Index>(ranks_.size()) != d() + 1)
            throw std::invalid_argument("TensorTrain: rank list must have d+1 entries");
        if (ranks_.front() != 1 || ranks_.back() != 1)
            throw std::invalid_argument("TensorTrain: boundary ranks must be 1");
        for (Index m : modes_)
            if (m < 1) throw std::invalid_argument("TensorTrain: modes must be >= 1");
        for (Index r : ranks_)
            if (r < 1) throw std::invalid_argument("TensorTrain: ranks must be >= 1");
    }

    std::vector<Index> modes_;
    std::vector<Index> ranks_;                // r_0..r_d
    std::vector<std::vector<Matrix>> cores_;  // cores_[k][i]: r_{k-1} x r_k
    Index left_ortho_ = 0;
    Index right_ortho_ = 0;
};

/// Rank-1 tensor of all ones.
inline TensorTrain tt_ones(const std::vector<Index>& modes) {
    if (modes.empty()) throw std::invalid_argument("tt_ones: empty mode list");
    std::vector<std::vector<Matrix>> cores(modes.size());
    for (std::size_t k = 0; k < modes.size(); ++k)
        cores[k].assign(static_cast<std::size_t>(modes[k]), Matrix::Ones(1, 1));
    return TensorTrain::from_cores(std::move(cores));
}

/// Random tensor with i.i.d. N(0,1) core entries; requested bond ranks are
/// clipped to the maximal representable ranks for the given modes.
inline TensorTrain tt_random(const std::vector<Index>& modes, Index target_rank,
                             std::mt19937_64& rng) {
    const Index d = static_cast<Index>(modes.size());
    std::vector<Index> ranks(static_cast<std::size_t>(d) + 1, 1);
    for (Index k = 1; k < d; ++k) {
        Index left = 1, right = 1;
        for (Index j = 0; j < k; ++j) left = std::min<Index>(left * modes[static_cast<std::size_t>(j)], 1 << 24);
        for (Index j = k; j < d; ++j) right = std::min<Index>(right * modes[static_cast<std::size_t>(j)], 1 << 24);
        ranks[static_cast<std::size_t>(k)] = std::min({target_rank, left, right});
    }
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<std::vector<Matrix>> cores(static_cast<std::size_t>(d));
    for (Index k = 0; k < d; ++k) {
        cores[static_cast<std::size_t>(k)].resize(static_cast<std::size_t>(modes[static_cast<std::size_t>(k)]));
        for (Matrix& s : cores[static_cast<std::size_t>(k)]) {
            s.resize(ranks[static_cast<std::size_t>(k)], ranks[static_cast<std::size_t>(k) + 1]);
            for (Index c = 0; c < s.cols(); ++c)
                for (Index r = 0; r < s.rows(); ++r) s(r, c) = dist(rng);
        }
    }
    return TensorTrain::from_cores(std::move(cores));
}

/// Entrywise sum; interior result ranks are r_k(X) + r_k(Y).
inline TensorTrain tt_add(const TensorTrain& x, const TensorTrain& y) {
    if (x.modes() != y.modes()) throw std::invalid_argument("tt_add: mode mismatch");
    const Index d = x.d();
    std::vector<std::vector<Matrix>> cores(static_cast<std::size_t>(d));
    for (Index k = 0; k < d; ++k) {
        const Index rl = (k == 0) ? 1 : x.rank(k) + y.rank(k);
        const Index rr = (k == d - 1) ? 1 : x.rank(k + 1) + y.rank(k + 1);
        cores[static_cast<std::size_t>(k)].resize(static_cast<std::size_t>(x.mode(k)));
        for (Index i = 0; i < x.mode(k); ++i) {
            const Matrix& xs = x.core(k)[static_cast<std::size_t>(i)];
            const Matrix& ys = y.core(k)[static_cast<std::size_t>(i)];
            Matrix z = Matrix::Zero(rl, rr);
            if (d == 1) {
                z = xs + ys;
            } else if (k == 0) {
                z.leftCols(xs.cols()) = xs;
                z.rightCols(ys.cols()) = ys;
            } else if (k == d - 1) {
                z.topRows(xs.rows()) = xs;
                z.bottomRows(ys.rows()) = ys;
            } else {
                z.topLeftCorner(xs.rows(), xs.cols()) = xs;
                z.bottomRightCorner(ys.rows(), ys.cols()) = ys;
            }
            cores[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] = std::move(z);
        }
    }
    return TensorTrain::from_cores(std::move(cores));
}

/// Scalar multiple; ranks unchanged.
inline TensorTrain tt_scale(double alpha, const TensorTrain& x) {
    TensorTrain z = x;
    z.scale_in_place(alpha);
    return z;
}

/// Euclidean inner product of the dense expansions, by core contraction.
inline double tt_inner(const TensorTrain& x, const TensorTrain& y) {
    if (x.modes() != y.modes()) throw std::invalid_argument("tt_inner: mode mismatch");
    Matrix w = Matrix::Ones(1, 1);
    for (Index k = 0; k < x.d(); ++k) {
        Matrix next = Matrix::Zero(x.rank(k + 1), y.rank(k + 1));
        for (Index i = 0; i < x.mode(k); ++i)
            next.noalias() += x.core(k)[static_cast<std::size_t>(i)].transpose() * w *
                              y.core(k)[static_cast<std::size_t>(i)];
        w = std::move(next);
    }
    return w(0, 0);
}

inline double tt_norm(const TensorTrain& x) { return x.norm(); }

/// Canonical form with pivot k: interfaces on both sides of the pivot have
/// orthonormal columns; dense entries are unchanged.
inline TensorTrain tt_orthogonalize(const TensorTrain& x, Index pivot) {
    TensorTrain z = x;
    z.canonicalize(pivot);
    return z;
}

namespace detail {

/// Smallest kept rank m with sqrt(sum_{i>=m} s_i^2) <= tol, clipped to [1, cap].
inline Index choose_rank(const Vector& s, double tol, Index cap) {
    const Index n = s.size();
    double tail = 0.0;
    Index m = n;
    for (Index i = n - 1; i >= 0; --i) {
        tail += s(i) * s(i);
        if (std::sqrt(tail) > tol) break;
        m = i;
    }
    return std::max<Index>(1, std::min(m, cap));
}

}  // namespace detail

/**
 * TT-SVD truncation. The budget abs_tol is split as delta = abs_tol/sqrt(d-1)
 * per SVD step, which guarantees ||X - result|| <= abs_tol whenever the rank
 * cap is not active. The result is canonical with pivot at core 0.
 */
inline TensorTrain tt_truncate(const TensorTrain& x, const TruncationPolicy& policy) {
    TensorTrain z = x;
    const Index d = z.d();
    if (d == 1) return z;
    z.canonicalize(d - 1);
    const double delta = policy.abs_tol / std::sqrt(static_cast<double>(d - 1));
    for (Index k = d - 1; k >= 1; --k) {
        Matrix H = z.horizontal_unfold(k);
        Eigen::BDCSVD<Matrix> svd(H, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Index r = detail::choose_rank(svd.singularValues(), delta, policy.max_rank);
        Matrix carry = svd.matrixU().leftCols(r) * svd.singularValues().head(r).asDiagonal();
        Matrix Vt = svd.matrixV().leftCols(r).transpose();  // r x (n*rr)
        const Index n = z.mode(k), rr = z.rank(k + 1);
        std::vector<Matrix> right(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) right[static_cast<std::size_t>(i)] = Vt.middleCols(i * rr, rr);
        std::vector<Matrix> left = z.core(k - 1);
        for (Matrix& s : left) s = s * carry;
        z.replace_bond(k - 1, std::move(left), std::move(right));
    }
    z.set_ortho_tags(0, 1);
    return z;
}

/// Truncation at a tolerance relative to ||x||.
inline TensorTrain tt_truncate_rel(const TensorTrain& x, double rel_tol, Index max_rank) {
    TensorTrain z = x;
    if (z.d() == 1) return z;
    z.canonicalize(z.d() - 1);
    double nrm = 0.0;
    for (const Matrix& m : z.core(z.d() - 1)) nrm += m.squaredNorm();
    TruncationPolicy p;
    p.abs_tol = rel_tol * std::sqrt(nrm);
    p.max_rank = max_rank;
    return tt_truncate(z, p);
}

/// Dense expansion under the i_1-fastest linearization. Guarded to 1e6 entries;
/// meant for oracles, the coarsest-grid solver and file-sized tensors only.
inline Vector tt_to_dense(const TensorTrain& x) {
    if (x.total_size() > 1000000)
        throw std::invalid_argument("tt_to_dense: tensor larger than 1e6 entries");
    Matrix acc = Matrix::Ones(1, 1);
    Index sz = 1;
    for (Index k = 0; k < x.d(); ++k) {
        const Index n = x.mode(k);
        Matrix next(sz * n, x.rank(k + 1));
        for (Index i = 0; i < n; ++i)
            next.middleRows(i * sz, sz).noalias() = acc * x.core(k)[static_cast<std::size_t>(i)];
        acc = std::move(next);
        sz *= n;
    }
    return Vector(acc.col(0));
}

/// TT-SVD decomposition of a dense vector (i_1 fastest). Exact up to the policy.
inline TensorTrain tt_from_dense(const Vector& v, const std::vector<Index>& modes,
                                 const TruncationPolicy& policy = TruncationPolicy()) {
    const Index d = static_cast<Index>(modes.size());
    if (d == 0) throw std::invalid_argument("tt_from_dense: empty mode list");
    Index total = 1;
    for (Index m : modes) total *= m;
    if (total != v.size()) throw std::invalid_argument("tt_from_dense: size mismatch");
    if (total > 1000000) throw std::invalid_argument("tt_from_dense: tensor larger than 1e6 entries");

    const double delta = d > 1 ? policy.abs_tol / std::sqrt(static_cast<double>(d - 1)) : 0.0;
    std::vector<std::vector<Matrix>> cores(static_cast<std::size_t>(d));
    Matrix carry = Eigen::Map<const Matrix>(v.data(), 1, total);
    Index rl = 1;
    for (Index k = 0; k < d - 1; ++k) {
        const Index n = modes[static_cast<std::size_t>(k)];
        // Column-major storage regroups (rl, n, rest) to (rl*n, rest) in place.
        Eigen::Map<const Matrix> M(carry.data(), rl * n, carry.size() / (rl * n));
        Eigen::BDCSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Index r = detail::choose_rank(svd.singularValues(), delta, policy.max_rank);
        Matrix U = svd.matrixU().leftCols(r);
        auto& core = cores[static_cast<std::size_t>(k)];
        core.resize(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) core[static_cast<std::size_t>(i)] = U.middleRows(i * rl, rl);
        carry = svd.singularValues().head(r).asDiagonal() * svd.matrixV().leftCols(r).transpose();
        rl = r;
    }
    const Index nd = modes[static_cast<std::size_t>(d - 1)];
    auto& last = cores[static_cast<std::size_t>(d - 1)];
    last.resize(static_cast<std::size_t>(nd));
    for (Index i = 0; i < nd; ++i) last[static_cast<std::size_t>(i)] = carry.col(i);

    TensorTrain z = TensorTrain::from_cores(std::move(cores));
    if (d > 1) z.set_ortho_tags(d - 1, d);  // left-orthonormal up to the last core
    return z;
}

}  // namespace ttmc
