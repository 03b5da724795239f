#pragma once

#include "ttmc/tt.hpp"
#include "ttmc/tt_operator.hpp"

#include <map>
#include <random>
#include <vector>

namespace ttmc::testing {

/// Iterates all multi-indices for the given modes, i_1 fastest.
class MultiIndex {
public:
    explicit MultiIndex(std::vector<Index> modes) : modes_(std::move(modes)), idx_(modes_.size(), 0) {}

    const std::vector<Index>& operator*() const { return idx_; }
    bool done() const { return done_; }
    void next() {
        for (std::size_t k = 0; k < modes_.size(); ++k) {
            if (++idx_[k] < modes_[k]) return;
            idx_[k] = 0;
        }
        done_ = true;
    }
    Index linear() const {
        Index lin = 0, stride = 1;
        for (std::size_t k = 0; k < modes_.size(); ++k) {
            lin += idx_[k] * stride;
            stride *= modes_[k];
        }
        return lin;
    }

private:
    std::vector<Index> modes_;
    std::vector<Index> idx_;
    bool done_ = false;
};

/// Brute-force dense expansion: evaluates every entry by multiplying the core
/// slices directly. Independent of the library's accumulation code path.
inline Vector dense_oracle(const TensorTrain& x) {
    Index total = 1;
    for (Index m : x.modes()) total *= m;
    Vector v(total);
    for (MultiIndex mi(x.modes()); !mi.done(); mi.next()) {
        Matrix p = Matrix::Ones(1, 1);
        for (Index k = 0; k < x.d(); ++k)
            p = p * x.core(k)[static_cast<std::size_t>((*mi)[static_cast<std::size_t>(k)])];
        v(mi.linear()) = p(0, 0);
    }
    return v;
}

/// Brute-force dense expansion of an operator in TT form.
inline Matrix dense_oracle_op(const TensorTrainOperator& a) {
    Index total = 1;
    for (Index m : a.modes()) total *= m;
    std::vector<std::map<std::pair<Index, Index>, Matrix>> slots(static_cast<std::size_t>(a.d()));
    for (Index k = 0; k < a.d(); ++k)
        for (const OpEntry& e : a.core(k)) slots[static_cast<std::size_t>(k)][{e.row, e.col}] = e.m;

    Matrix dense = Matrix::Zero(total, total);
    for (MultiIndex row(a.modes()); !row.done(); row.next())
        for (MultiIndex col(a.modes()); !col.done(); col.next()) {
            Matrix p = Matrix::Ones(1, 1);
            bool zero = false;
            for (Index k = 0; k < a.d() && !zero; ++k) {
                auto it = slots[static_cast<std::size_t>(k)].find(
                    {(*row)[static_cast<std::size_t>(k)], (*col)[static_cast<std::size_t>(k)]});
                if (it == slots[static_cast<std::size_t>(k)].end())
                    zero = true;
                else
                    p = p * it->second;
            }
            if (!zero) dense(row.linear(), col.linear()) = p(0, 0);
        }
    return dense;
}

/// Independent dense Kronecker assembly with the i_1-fastest convention,
/// written with explicit index loops. Factors may be rectangular.
inline Matrix kron_oracle(const std::vector<Matrix>& factors) {
    std::vector<Index> row_modes, col_modes;
    Index rows = 1, cols = 1;
    for (const Matrix& f : factors) {
        row_modes.push_back(f.rows());
        col_modes.push_back(f.cols());
        rows *= f.rows();
        cols *= f.cols();
    }
    Matrix a(rows, cols);
    for (MultiIndex row(row_modes); !row.done(); row.next())
        for (MultiIndex col(col_modes); !col.done(); col.next()) {
            double v = 1.0;
            for (std::size_t k = 0; k < factors.size(); ++k)
                v *= factors[k]((*row)[k], (*col)[k]);
            a(row.linear(), col.linear()) = v;
        }
    return a;
}

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> dist;
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
    return m;
}

/// Left interface matrix G_{<=k}: (n_1*...*n_k) x r_k, rows linearized i_1 fastest.
inline Matrix left_interface(const TensorTrain& x, Index k) {
    Matrix acc = Matrix::Ones(1, 1);
    Index sz = 1;
    for (Index j = 0; j <= k; ++j) {
        Matrix next(sz * x.mode(j), x.rank(j + 1));
        for (Index i = 0; i < x.mode(j); ++i)
            next.middleRows(i * sz, sz) = acc * x.core(j)[static_cast<std::size_t>(i)];
        acc = std::move(next);
        sz *= x.mode(j);
    }
    return acc;
}

/// Right interface matrix G_{>=k}: (n_k*...*n_d) x r_{k-1}, rows linearized
/// with i_k fastest.
inline Matrix right_interface(const TensorTrain& x, Index k) {
    Matrix acc = Matrix::Ones(1, 1);
    for (Index j = x.d() - 1; j >= k; --j) {
        const Index n = x.mode(j), rows = acc.rows();
        Matrix next(n * rows, x.rank(j));
        for (Index i = 0; i < n; ++i) {
            const Matrix g = acc * x.core(j)[static_cast<std::size_t>(i)].transpose();
            for (Index r = 0; r < rows; ++r) next.row(i + n * r) = g.row(r);
        }
        acc = std::move(next);
    }
    return acc;
}

}  // namespace ttmc::testing
