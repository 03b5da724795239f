#pragma once

#include "ttmc/tt.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace ttmc {

/// One nonzero (row, col) slot of an operator core, holding the
/// r_{k-1} x r_k parameter matrix M_k(row, col).
struct OpEntry {
    Index row = 0;
    Index col = 0;
    Matrix m;
};

/**
 * Linear operator in operator-TT form. Core k depends on a row and a column
 * index; entries are kept sparsely over (row, col) because the Markov models
 * have banded per-mode factors. All operators in this artifact are square per
 * mode. The row/column linearization matches TensorTrain (i_1 fastest).
 */
class TensorTrainOperator {
public:
    TensorTrainOperator() = default;

    TensorTrainOperator(std::vector<Index> modes, std::vector<Index> ranks,
                        std::vector<std::vector<OpEntry>> cores)
        : modes_(std::move(modes)), ranks_(std::move(ranks)), cores_(std::move(cores)) {
        if (modes_.empty()) throw std::invalid_argument("TensorTrainOperator: empty mode list");
        if (static_cast<Index>(ranks_.size()) != d() + 1 ||
            static_cast<Index>(cores_.size()) != d())
            throw std::invalid_argument("TensorTrainOperator: inconsistent core/rank count");
        if (ranks_.front() != 1 || ranks_.back() != 1)
            throw std::invalid_argument("TensorTrainOperator: boundary ranks must be 1");
        for (Index k = 0; k < d(); ++k)
            for (const OpEntry& e : cores_[static_cast<std::size_t>(k)]) {
                if (e.row < 0 || e.row >= modes_[static_cast<std::size_t>(k)] || e.col < 0 ||
                    e.col >= modes_[static_cast<std::size_t>(k)])
                    throw std::invalid_argument("TensorTrainOperator: entry index out of range");
                if (e.m.rows() != ranks_[static_cast<std::size_t>(k)] ||
                    e.m.cols() != ranks_[static_cast<std::size_t>(k) + 1])
                    throw std::invalid_argument("TensorTrainOperator: entry shape mismatch");
            }
    }

    Index d() const { return static_cast<Index>(modes_.size()); }
    const std::vector<Index>& modes() const { return modes_; }
    Index mode(Index k) const { return modes_[static_cast<std::size_t>(k)]; }
    const std::vector<Index>& ranks() const { return ranks_; }
    Index rank(Index k) const { return ranks_[static_cast<std::size_t>(k)]; }
    Index max_rank() const {
        Index r = 1;
        for (Index v : ranks_) r = std::max(r, v);
        return r;
    }
    const std::vector<OpEntry>& core(Index k) const { return cores_[static_cast<std::size_t>(k)]; }

    /// Transposed operator: every core swaps its row and column index.
    TensorTrainOperator transpose() const {
        std::vector<std::vector<OpEntry>> cores(cores_.size());
        for (std::size_t k = 0; k < cores_.size(); ++k) {
            cores[k].reserve(cores_[k].size());
            for (const OpEntry& e : cores_[k]) cores[k].push_back({e.col, e.row, e.m});
        }
        return TensorTrainOperator(modes_, ranks_, std::move(cores));
    }

private:
    std::vector<Index> modes_;
    std::vector<Index> ranks_;
    std::vector<std::vector<OpEntry>> cores_;
};

/// Matrix-vector product in TT arithmetic; result ranks are r_A(k)*r_X(k),
/// no compression is applied.
inline TensorTrain tt_apply(const TensorTrainOperator& a, const TensorTrain& x) {
    if (a.modes() != x.modes()) throw std::invalid_argument("tt_apply: mode mismatch");
    const Index d = x.d();
    std::vector<std::vector<Matrix>> cores(static_cast<std::size_t>(d));
    for (Index k = 0; k < d; ++k) {
        const Index rl = a.rank(k) * x.rank(k);
        const Index rr = a.rank(k + 1) * x.rank(k + 1);
        auto& wk = cores[static_cast<std::size_t>(k)];
        wk.assign(static_cast<std::size_t>(x.mode(k)), Matrix::Zero(rl, rr));
        for (const OpEntry& e : a.core(k)) {
            const Matrix& g = x.core(k)[static_cast<std::size_t>(e.col)];
            Matrix& w = wk[static_cast<std::size_t>(e.row)];
            for (Index am = 0; am < e.m.rows(); ++am)
                for (Index an = 0; an < e.m.cols(); ++an) {
                    const double v = e.m(am, an);
                    if (v != 0.0)
                        w.block(am * x.rank(k), an * x.rank(k + 1), x.rank(k), x.rank(k + 1)) +=
                            v * g;
                }
        }
    }
    return TensorTrain::from_cores(std::move(cores));
}

namespace detail {

/// Folds an operator into a plain TT tensor with merged (row, col) mode index
/// row + col*n, so the TT-SVD machinery can compress it.
inline TensorTrain operator_to_merged_tensor(const TensorTrainOperator& a) {
    std::vector<std::vector<Matrix>> cores(static_cast<std::size_t>(a.d()));
    for (Index k = 0; k < a.d(); ++k) {
        const Index n = a.mode(k);
        cores[static_cast<std::size_t>(k)].assign(static_cast<std::size_t>(n * n),
                                                  Matrix::Zero(a.rank(k), a.rank(k + 1)));
        for (const OpEntry& e : a.core(k))
            cores[static_cast<std::size_t>(k)][static_cast<std::size_t>(e.row + e.col * n)] = e.m;
    }
    return TensorTrain::from_cores(std::move(cores));
}

inline TensorTrainOperator merged_tensor_to_operator(const TensorTrain& t,
                                                     const std::vector<Index>& modes) {
    std::vector<std::vector<OpEntry>> cores(static_cast<std::size_t>(t.d()));
    for (Index k = 0; k < t.d(); ++k) {
        const Index n = modes[static_cast<std::size_t>(k)];
        for (Index j = 0; j < n; ++j)
            for (Index i = 0; i < n; ++i) {
                const Matrix& s = t.core(k)[static_cast<std::size_t>(i + j * n)];
                if (!s.isZero(0.0)) cores[static_cast<std::size_t>(k)].push_back({i, j, s});
            }
    }
    return TensorTrainOperator(modes, t.ranks(), std::move(cores));
}

}  // namespace detail

/// Rounds an operator in its merged-tensor form. rel_tol is relative to the
/// operator's Frobenius norm; rank_cap bounds the operator TT ranks.
inline TensorTrainOperator tt_operator_round(const TensorTrainOperator& a, double rel_tol,
                                             Index rank_cap) {
    TensorTrain merged = detail::operator_to_merged_tensor(a);
    const double nrm = merged.norm();
    TruncationPolicy p;
    p.abs_tol = rel_tol * nrm;
    p.max_rank = rank_cap;
    merged = tt_truncate(merged, p);
    return detail::merged_tensor_to_operator(merged, a.modes());
}

/**
 * Converts a sum of T Kronecker terms (term t = factors[t][0] x ... x
 * factors[t][d-1], matching the i_1-fastest linearization) into operator-TT
 * form. The raw construction has all interior ranks equal to T; a rounding
 * pass at working precision then removes redundancy, so the returned ranks
 * are <= T and often smaller.
 */
inline TensorTrainOperator tt_operator_from_terms(
    const std::vector<std::vector<Matrix>>& terms, bool compress = true) {
    if (terms.empty()) throw std::invalid_argument("tt_operator_from_terms: no terms");
    const Index d = static_cast<Index>(terms.front().size());
    if (d == 0) throw std::invalid_argument("tt_operator_from_terms: empty term");
    const Index nterms = static_cast<Index>(terms.size());
    std::vector<Index> modes(static_cast<std::size_t>(d));
    for (Index k = 0; k < d; ++k) {
        const Matrix& f = terms.front()[static_cast<std::size_t>(k)];
        if (f.rows() != f.cols())
            throw std::invalid_argument("tt_operator_from_terms: factors must be square");
        modes[static_cast<std::size_t>(k)] = f.rows();
    }
    for (const auto& term : terms) {
        if (static_cast<Index>(term.size()) != d)
            throw std::invalid_argument("tt_operator_from_terms: ragged term list");
        for (Index k = 0; k < d; ++k)
            if (term[static_cast<std::size_t>(k)].rows() != modes[static_cast<std::size_t>(k)] ||
                term[static_cast<std::size_t>(k)].cols() != modes[static_cast<std::size_t>(k)])
                throw std::invalid_argument("tt_operator_from_terms: factor dimension mismatch");
    }

    std::vector<Index> ranks(static_cast<std::size_t>(d) + 1, nterms);
    ranks.front() = ranks.back() = 1;
    if (d == 1) {
        // Single mode: the sum collapses into one slot list.
        Matrix sum = Matrix::Zero(modes[0], modes[0]);
        for (const auto& term : terms) sum += term[0];
        std::vector<std::vector<OpEntry>> cores(1);
        for (Index j = 0; j < modes[0]; ++j)
            for (Index i = 0; i < modes[0]; ++i)
                if (sum(i, j) != 0.0) cores[0].push_back({i, j, Matrix::Constant(1, 1, sum(i, j))});
        return TensorTrainOperator(modes, {1, 1}, std::move(cores));
    }

    std::vector<std::vector<OpEntry>> cores(static_cast<std::size_t>(d));
    for (Index k = 0; k < d; ++k) {
        const Index rl = ranks[static_cast<std::size_t>(k)];
        const Index rr = ranks[static_cast<std::size_t>(k) + 1];
        const Index n = modes[static_cast<std::size_t>(k)];
        for (Index j = 0; j < n; ++j)
            for (Index i = 0; i < n; ++i) {
                Matrix slot = Matrix::Zero(rl, rr);
                bool nonzero = false;
                for (Index t = 0; t < nterms; ++t) {
                    const double v = terms[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)](i, j);
                    if (v == 0.0) continue;
                    nonzero = true;
                    if (k == 0)
                        slot(0, t) = v;
                    else if (k == d - 1)
                        slot(t, 0) = v;
                    else
                        slot(t, t) = v;
                }
                if (nonzero) cores[static_cast<std::size_t>(k)].push_back({i, j, std::move(slot)});
            }
    }
    TensorTrainOperator raw(modes, ranks, std::move(cores));
    if (!compress) return raw;
    return tt_operator_round(raw, 1e-14, nterms);
}

/// Operator product C = A*B with core slots C_k(i,j) = sum_l A_k(i,l) (x) B_k(l,j).
/// Ranks multiply; callers usually round afterwards.
inline TensorTrainOperator tt_operator_multiply(const TensorTrainOperator& a,
                                                const TensorTrainOperator& b) {
    if (a.modes() != b.modes()) throw std::invalid_argument("tt_operator_multiply: mode mismatch");
    const Index d = a.d();
    std::vector<Index> ranks(static_cast<std::size_t>(d) + 1);
    for (Index k = 0; k <= d; ++k)
        ranks[static_cast<std::size_t>(k)] = a.rank(k) * b.rank(k);
    std::vector<std::vector<OpEntry>> cores(static_cast<std::size_t>(d));
    for (Index k = 0; k < d; ++k) {
        const Index n = a.mode(k);
        // Dense accumulation over (i, j), then sparsified.
        std::vector<Matrix> slots(static_cast<std::size_t>(n * n));
        std::vector<bool> used(static_cast<std::size_t>(n * n), false);
        for (const OpEntry& ea : a.core(k))
            for (const OpEntry& eb : b.core(k)) {
                if (ea.col != eb.row) continue;
                const Index slot = ea.row + eb.col * n;
                if (!used[static_cast<std::size_t>(slot)]) {
                    slots[static_cast<std::size_t>(slot)] =
                        Matrix::Zero(ranks[static_cast<std::size_t>(k)],
                                     ranks[static_cast<std::size_t>(k) + 1]);
                    used[static_cast<std::size_t>(slot)] = true;
                }
                Matrix& m = slots[static_cast<std::size_t>(slot)];
                for (Index ar = 0; ar < ea.m.rows(); ++ar)
                    for (Index ac = 0; ac < ea.m.cols(); ++ac) {
                        const double v = ea.m(ar, ac);
                        if (v != 0.0)
                            m.block(ar * b.rank(k), ac * b.rank(k + 1), b.rank(k), b.rank(k + 1)) +=
                                v * eb.m;
                    }
            }
        for (Index j = 0; j < n; ++j)
            for (Index i = 0; i < n; ++i)
                if (used[static_cast<std::size_t>(i + j * n)])
                    cores[static_cast<std::size_t>(k)].push_back(
                        {i, j, std::move(slots[static_cast<std::size_t>(i + j * n)])});
    }
    return TensorTrainOperator(a.modes(), std::move(ranks), std::move(cores));
}

/// Gram operator A^T A, rounded at working precision. This is the operator
/// behind every reduced normal-equations problem.
inline TensorTrainOperator tt_gram_operator(const TensorTrainOperator& a) {
    TensorTrainOperator ata = tt_operator_multiply(a.transpose(), a);
    Index cap = 1;
    for (Index r : ata.ranks()) cap = std::max(cap, r);
    return tt_operator_round(ata, 1e-14, cap);
}

/// Dense expansion of the operator, for tests and small cross-checks.
inline Matrix tt_operator_to_dense(const TensorTrainOperator& a) {
    Index total = 1;
    for (Index m : a.modes()) total *= m;
    if (total > 1000) throw std::invalid_argument("tt_operator_to_dense: operator too large");
    const Vector v = tt_to_dense(detail::operator_to_merged_tensor(a));
    Matrix dense(total, total);
    for (Index col = 0; col < total; ++col)
        for (Index row = 0; row < total; ++row) {
            // Decompose (row, col) into per-mode digits and rebuild the merged
            // linear index with digit i_k + j_k*n_k per mode.
            Index ri = row, ci = col, midx = 0, stride = 1;
            for (Index k = 0; k < a.d(); ++k) {
                const Index n = a.mode(k);
                midx += (ri % n + (ci % n) * n) * stride;
                stride *= n * n;
                ri /= n;
                ci /= n;
            }
            dense(row, col) = v(midx);
        }
    return dense;
}

}  // namespace ttmc
