#pragma once

#include "ttmc/linalg.hpp"
#include "ttmc/tt_operator.hpp"

#include <string>
#include <vector>

namespace ttmc {

/// One Kronecker term: a factor per mode plus flags marking which modes carry
/// a non-identity factor (used to recover each mode's local 1D dynamics).
struct KroneckerTerm {
    std::vector<Matrix> factors;
    std::vector<bool> active;
};

/**
 * Transposed generator of a structured Markov chain as a sum of T Kronecker
 * terms of per-mode factors: A = sum_t E_1^t (x) ... (x) E_d^t under the
 * i_1-fastest linearization. Column sums of the assembled A are zero and the
 * off-diagonal of A^T is nonnegative; both are checked by validate_model.
 */
struct KroneckerModel {
    std::string kind;
    Index d = 0;
    std::vector<Index> modes;
    std::vector<KroneckerTerm> terms;
    /// Per-mode interpolation choice for the multigrid hierarchy
    /// (true: direct interpolation from the local operator; false: linear).
    std::vector<bool> direct_interp;

    Index total_size() const {
        Index n = 1;
        for (Index m : modes) n *= m;
        return n;
    }

    /// Sum of the factors of all terms that act on mode k alone. This is the
    /// mode's purely local 1D operator (tridiagonal for all bundled models).
    Matrix local_operator(Index k) const {
        Matrix l = Matrix::Zero(modes[static_cast<std::size_t>(k)], modes[static_cast<std::size_t>(k)]);
        for (const KroneckerTerm& t : terms) {
            bool only_k = t.active[static_cast<std::size_t>(k)];
            for (Index j = 0; only_k && j < d; ++j)
                if (j != k && t.active[static_cast<std::size_t>(j)]) only_k = false;
            if (only_k) l += t.factors[static_cast<std::size_t>(k)];
        }
        return l;
    }
};

/// Standard Kronecker product, first factor slowest.
inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix k(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < a.cols(); ++j)
            k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return k;
}

/// Kronecker product of per-mode factors under the i_1-fastest linearization:
/// mode 1 is the fastest index, so the fold runs kron(E_d, ..., kron(E_2, E_1)).
inline Matrix kron_modes(const std::vector<Matrix>& factors) {
    Matrix acc = Matrix::Ones(1, 1);
    for (const Matrix& f : factors) acc = kron(f, acc);
    return acc;
}

/// Exact dense assembly of the model. Guarded to 1e4 states.
inline Matrix assemble_dense(const KroneckerModel& model) {
    if (model.total_size() > 10000)
        throw std::invalid_argument("assemble_dense: model exceeds 1e4 states");
    const Index n = model.total_size();
    Matrix a = Matrix::Zero(n, n);
    for (const KroneckerTerm& t : model.terms) a += kron_modes(t.factors);
    return a;
}

/// Operator-TT form of the model; ranks are bounded by the term count and the
/// conversion compresses below it where redundancy allows.
inline TensorTrainOperator kron_to_tt_operator(const KroneckerModel& model) {
    if (model.terms.empty()) throw std::invalid_argument("kron_to_tt_operator: model has no terms");
    std::vector<std::vector<Matrix>> terms;
    terms.reserve(model.terms.size());
    for (const KroneckerTerm& t : model.terms) terms.push_back(t.factors);
    return tt_operator_from_terms(terms);
}

struct ModelValidation {
    Index total_states = 0;
    double col_sum_defect = 0.0;        // max |column sum| of assembled A
    double offdiag_negativity = 0.0;    // max(0, -min off-diagonal rate)
    bool strongly_connected = false;
    bool ok(double tol = 1e-12) const {
        return col_sum_defect <= tol && offdiag_negativity <= tol && strongly_connected;
    }
};

/// Checks the generator properties and irreducibility on a dense assembly.
inline ModelValidation validate_model(const KroneckerModel& model) {
    ModelValidation v;
    v.total_states = model.total_size();
    const Matrix a = assemble_dense(model);
    v.col_sum_defect = a.colwise().sum().cwiseAbs().maxCoeff();
    double worst = 0.0;
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < a.cols(); ++j)
            if (i != j) worst = std::min(worst, a(i, j));
    v.offdiag_negativity = -worst;
    v.strongly_connected = strongly_connected(offdiagonal_pattern(a, 0.0));
    return v;
}

}  // namespace ttmc
