#pragma once

#include "ttmc/linalg.hpp"
#include "ttmc/report.hpp"
#include "ttmc/tt.hpp"
#include "ttmc/tt_operator.hpp"

#include <chrono>
#include <cmath>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

namespace ttmc {

/// Parameters of the alternating solver. residual_target is absolute;
/// budget_ms = 0 means no wall-clock limit.
struct AmenConfig {
    Index enrichment_rank = 3;
    int max_sweeps = 50;
    double residual_target = 0.0;
    Index local_direct_threshold = 1000;
    double local_iter_tol = 1e-8;
    int local_iter_maxit = 400;
    TruncationPolicy trunc{0.0, 1 << 20};
    std::uint64_t seed = 1;
    double budget_ms = 0.0;
};

namespace detail {

/// Environment slice of a three-chain contraction <bra-frame | Op | ket>:
/// one (r_bra x r_ket) matrix per operator rank index at the bond.
using EnvSlice = std::vector<Matrix>;

inline EnvSlice trivial_env() { return EnvSlice(1, Matrix::Ones(1, 1)); }

/// Absorbs core k from the left: out[b'] = sum_{(i,j,m)} sum_b m(b,b') *
/// bra[i]^T * env[b] * ket[j].
inline EnvSlice env_absorb_left(const EnvSlice& env, const std::vector<Matrix>& bra,
                                const std::vector<OpEntry>& op, const std::vector<Matrix>& ket,
                                Index rop_out) {
    const Index n = static_cast<Index>(bra.size());
    const Index rxl = bra.front().rows(), rxr = bra.front().cols();
    const Index ryr = ket.front().cols();
    // Lazy cache of env[b] * ket[j].
    std::vector<Matrix> cache(env.size() * static_cast<std::size_t>(n));
    std::vector<char> have(cache.size(), 0);
    auto lk = [&](Index b, Index j) -> const Matrix& {
        const std::size_t slot = static_cast<std::size_t>(b) * static_cast<std::size_t>(n) +
                                 static_cast<std::size_t>(j);
        if (!have[slot]) {
            cache[slot].noalias() = env[static_cast<std::size_t>(b)] * ket[static_cast<std::size_t>(j)];
            have[slot] = 1;
        }
        return cache[slot];
    };
    // S[i][b'] accumulates the op-weighted ket contractions.
    std::vector<std::vector<Matrix>> s(static_cast<std::size_t>(n));
    std::vector<std::vector<char>> s_have(static_cast<std::size_t>(n),
                                          std::vector<char>(static_cast<std::size_t>(rop_out), 0));
    for (auto& row : s) row.resize(static_cast<std::size_t>(rop_out));
    for (const OpEntry& e : op)
        for (Index b = 0; b < e.m.rows(); ++b)
            for (Index bp = 0; bp < e.m.cols(); ++bp) {
                const double w = e.m(b, bp);
                if (w == 0.0) continue;
                Matrix& acc = s[static_cast<std::size_t>(e.row)][static_cast<std::size_t>(bp)];
                if (!s_have[static_cast<std::size_t>(e.row)][static_cast<std::size_t>(bp)]) {
                    acc = Matrix::Zero(rxl, ryr);
                    s_have[static_cast<std::size_t>(e.row)][static_cast<std::size_t>(bp)] = 1;
                }
                acc.noalias() += w * lk(b, e.col);
            }
    EnvSlice out(static_cast<std::size_t>(rop_out));
    for (Index bp = 0; bp < rop_out; ++bp) {
        out[static_cast<std::size_t>(bp)] = Matrix::Zero(rxr, ryr);
        for (Index i = 0; i < n; ++i)
            if (s_have[static_cast<std::size_t>(i)][static_cast<std::size_t>(bp)])
                out[static_cast<std::size_t>(bp)].noalias() +=
                    bra[static_cast<std::size_t>(i)].transpose() *
                    s[static_cast<std::size_t>(i)][static_cast<std::size_t>(bp)];
    }
    return out;
}

/// Absorbs core k from the right: out[b] = sum_{(i,j,m)} sum_{b'} m(b,b') *
/// bra[i] * env[b'] * ket[j]^T.
inline EnvSlice env_absorb_right(const EnvSlice& env, const std::vector<Matrix>& bra,
                                 const std::vector<OpEntry>& op, const std::vector<Matrix>& ket,
                                 Index rop_out) {
    const Index n = static_cast<Index>(bra.size());
    const Index rxl = bra.front().rows();
    const Index ryl = ket.front().rows();
    std::vector<Matrix> cache(env.size() * static_cast<std::size_t>(n));
    std::vector<char> have(cache.size(), 0);
    auto rk = [&](Index bp, Index j) -> const Matrix& {
        const std::size_t slot = static_cast<std::size_t>(bp) * static_cast<std::size_t>(n) +
                                 static_cast<std::size_t>(j);
        if (!have[slot]) {
            cache[slot].noalias() =
                env[static_cast<std::size_t>(bp)] * ket[static_cast<std::size_t>(j)].transpose();
            have[slot] = 1;
        }
        return cache[slot];
    };
    std::vector<std::vector<Matrix>> s(static_cast<std::size_t>(n));
    std::vector<std::vector<char>> s_have(static_cast<std::size_t>(n),
                                          std::vector<char>(static_cast<std::size_t>(rop_out), 0));
    for (auto& row : s) row.resize(static_cast<std::size_t>(rop_out));
    for (const OpEntry& e : op)
        for (Index b = 0; b < e.m.rows(); ++b)
            for (Index bp = 0; bp < e.m.cols(); ++bp) {
                const double w = e.m(b, bp);
                if (w == 0.0) continue;
                Matrix& acc = s[static_cast<std::size_t>(e.row)][static_cast<std::size_t>(b)];
                if (!s_have[static_cast<std::size_t>(e.row)][static_cast<std::size_t>(b)]) {
                    acc = Matrix::Zero(env.front().rows(), ryl);
                    s_have[static_cast<std::size_t>(e.row)][static_cast<std::size_t>(b)] = 1;
                }
                acc.noalias() += w * rk(bp, e.col);
            }
    EnvSlice out(static_cast<std::size_t>(rop_out));
    for (Index b = 0; b < rop_out; ++b) {
        out[static_cast<std::size_t>(b)] = Matrix::Zero(rxl, ryl);
        for (Index i = 0; i < n; ++i)
            if (s_have[static_cast<std::size_t>(i)][static_cast<std::size_t>(b)])
                out[static_cast<std::size_t>(b)].noalias() +=
                    bra[static_cast<std::size_t>(i)] *
                    s[static_cast<std::size_t>(i)][static_cast<std::size_t>(b)];
    }
    return out;
}

/// Local projection of (Op (x) ket) onto the bra frame at one core:
/// out[i] = sum_{(i,j,m)} sum_{c,c'} m(c,c') * L[c] * ket[j] * R[c']^T.
inline std::vector<Matrix> project_local(const EnvSlice& left, const std::vector<OpEntry>& op,
                                         const std::vector<Matrix>& ket, const EnvSlice& right,
                                         Index n) {
    const Index rxl = left.front().rows(), rxr = right.front().rows();
    std::vector<Matrix> cache(right.size() * static_cast<std::size_t>(n));
    std::vector<char> have(cache.size(), 0);
    auto kr = [&](Index cp, Index j) -> const Matrix& {
        const std::size_t slot = static_cast<std::size_t>(cp) * static_cast<std::size_t>(n) +
                                 static_cast<std::size_t>(j);
        if (!have[slot]) {
            cache[slot].noalias() =
                ket[static_cast<std::size_t>(j)] * right[static_cast<std::size_t>(cp)].transpose();
            have[slot] = 1;
        }
        return cache[slot];
    };
    // U[i][c] = sum m(c,c') ket[j] R[c']^T, then out[i] = sum_c L[c] U[i][c].
    std::vector<std::vector<Matrix>> u(static_cast<std::size_t>(n));
    std::vector<std::vector<char>> u_have(static_cast<std::size_t>(n),
                                          std::vector<char>(left.size(), 0));
    for (auto& row : u) row.resize(left.size());
    for (const OpEntry& e : op)
        for (Index c = 0; c < e.m.rows(); ++c)
            for (Index cp = 0; cp < e.m.cols(); ++cp) {
                const double w = e.m(c, cp);
                if (w == 0.0) continue;
                Matrix& acc = u[static_cast<std::size_t>(e.row)][static_cast<std::size_t>(c)];
                if (!u_have[static_cast<std::size_t>(e.row)][static_cast<std::size_t>(c)]) {
                    acc = Matrix::Zero(ket.front().rows(), rxr);
                    u_have[static_cast<std::size_t>(e.row)][static_cast<std::size_t>(c)] = 1;
                }
                acc.noalias() += w * kr(cp, e.col);
            }
    std::vector<Matrix> out(static_cast<std::size_t>(n), Matrix::Zero(rxl, rxr));
    for (Index i = 0; i < n; ++i)
        for (std::size_t c = 0; c < left.size(); ++c)
            if (u_have[static_cast<std::size_t>(i)][c])
                out[static_cast<std::size_t>(i)].noalias() +=
                    left[c] * u[static_cast<std::size_t>(i)][c];
    return out;
}

/// Core slice <-> flat vector with index a + i*rl + b*rl*n.
inline Vector core_to_vec(const std::vector<Matrix>& slices) {
    const Index rl = slices.front().rows(), rr = slices.front().cols();
    const Index n = static_cast<Index>(slices.size());
    Vector g(rl * n * rr);
    for (Index b = 0; b < rr; ++b)
        for (Index i = 0; i < n; ++i)
            for (Index a = 0; a < rl; ++a)
                g(a + i * rl + b * rl * n) = slices[static_cast<std::size_t>(i)](a, b);
    return g;
}

inline std::vector<Matrix> vec_to_core(const Vector& g, Index rl, Index n, Index rr) {
    std::vector<Matrix> slices(static_cast<std::size_t>(n), Matrix(rl, rr));
    for (Index b = 0; b < rr; ++b)
        for (Index i = 0; i < n; ++i)
            for (Index a = 0; a < rl; ++a)
                slices[static_cast<std::size_t>(i)](a, b) = g(a + i * rl + b * rl * n);
    return slices;
}

/// Dense assembly of the reduced matrix via two matrix products.
inline Matrix assemble_reduced_dense(const EnvSlice& left, const std::vector<OpEntry>& op,
                                     const EnvSlice& right, Index rl, Index n, Index rr) {
    const Index rbl = static_cast<Index>(left.size());
    const Index rbr = static_cast<Index>(right.size());
    Matrix lmat(rl * rl, rbl);
    for (Index b = 0; b < rbl; ++b)
        lmat.col(b) = Eigen::Map<const Vector>(left[static_cast<std::size_t>(b)].data(), rl * rl);
    Matrix bflat = Matrix::Zero(rbl, n * n * rbr);
    for (const OpEntry& e : op)
        for (Index br = 0; br < rbr; ++br)
            for (Index bl = 0; bl < rbl; ++bl)
                bflat(bl, (e.row + e.col * n) * rbr + br) = e.m(bl, br);
    Matrix lb = lmat * bflat;  // (rl^2) x (n^2 * rbr)
    Matrix lb2(rl * rl * n * n, rbr);
    for (Index ij = 0; ij < n * n; ++ij)
        for (Index br = 0; br < rbr; ++br)
            lb2.block(ij * rl * rl, br, rl * rl, 1) = lb.block(0, ij * rbr + br, rl * rl, 1);
    Matrix rmat(rbr, rr * rr);
    for (Index b = 0; b < rbr; ++b)
        rmat.row(b) = Eigen::Map<const Vector>(right[static_cast<std::size_t>(b)].data(), rr * rr).transpose();
    Matrix t = lb2 * rmat;  // (rl^2 * n^2) x (rr^2)
    const Index dim = rl * n * rr;
    Matrix h(dim, dim);
    for (Index bp = 0; bp < rr; ++bp)
        for (Index b = 0; b < rr; ++b)
            for (Index j = 0; j < n; ++j)
                for (Index i = 0; i < n; ++i)
                    for (Index ap = 0; ap < rl; ++ap)
                        for (Index a = 0; a < rl; ++a)
                            h(a + i * rl + b * rl * n, ap + j * rl + bp * rl * n) =
                                t((a + ap * rl) + (i + j * n) * rl * rl, b + bp * rr);
    return h;
}

}  // namespace detail

/**
 * Reduced problem at core k for an iterate whose interfaces around k are
 * orthonormal. The map realizes g -> G^T A^T A G g through environment
 * contractions without materializing full-length vectors; ones_proj carries
 * the projected normalization constraint and rhs_proj the projected right-hand
 * side of the normal-equations variant.
 */
struct ReducedProblem {
    Index k = 0;
    Index rl = 0, n = 0, rr = 0;
    Index dim = 0;
    LinearMap map;
    Vector ones_proj;
    Vector rhs_proj;
    bool has_rhs = false;
    std::optional<Matrix> dense;
};

namespace detail {

inline ReducedProblem make_reduced(Index k, Index rl, Index n, Index rr,
                                   std::shared_ptr<const EnvSlice> left,
                                   std::shared_ptr<const std::vector<OpEntry>> opcore,
                                   std::shared_ptr<const EnvSlice> right, Index dense_threshold) {
    ReducedProblem rp;
    rp.k = k;
    rp.rl = rl;
    rp.n = n;
    rp.rr = rr;
    rp.dim = rl * n * rr;
    rp.map = LinearMap(rp.dim, [left, opcore, right, rl, n, rr](const Vector& g) {
        const EnvSlice& L = *left;
        const EnvSlice& R = *right;
        std::vector<Matrix> gs = vec_to_core(g, rl, n, rr);
        // t1[br][j] = g[j] * R[br]^T
        const Index rbr = static_cast<Index>(R.size());
        std::vector<Matrix> t1(static_cast<std::size_t>(rbr) * static_cast<std::size_t>(n));
        std::vector<char> have(t1.size(), 0);
        auto get_t1 = [&](Index br, Index j) -> const Matrix& {
            const std::size_t slot = static_cast<std::size_t>(br) * static_cast<std::size_t>(n) +
                                     static_cast<std::size_t>(j);
            if (!have[slot]) {
                t1[slot].noalias() = gs[static_cast<std::size_t>(j)] *
                                     R[static_cast<std::size_t>(br)].transpose();
                have[slot] = 1;
            }
            return t1[slot];
        };
        std::vector<std::vector<Matrix>> s(static_cast<std::size_t>(n));
        std::vector<std::vector<char>> s_have(static_cast<std::size_t>(n),
                                              std::vector<char>(L.size(), 0));
        for (auto& row : s) row.resize(L.size());
        for (const OpEntry& e : *opcore)
            for (Index bl = 0; bl < e.m.rows(); ++bl)
                for (Index br = 0; br < e.m.cols(); ++br) {
                    const double w = e.m(bl, br);
                    if (w == 0.0) continue;
                    Matrix& acc = s[static_cast<std::size_t>(e.row)][static_cast<std::size_t>(bl)];
                    if (!s_have[static_cast<std::size_t>(e.row)][static_cast<std::size_t>(bl)]) {
                        acc = Matrix::Zero(rl, rr);
                        s_have[static_cast<std::size_t>(e.row)][static_cast<std::size_t>(bl)] = 1;
                    }
                    acc.noalias() += w * get_t1(br, e.col);
                }
        std::vector<Matrix> ys(static_cast<std::size_t>(n), Matrix::Zero(rl, rr));
        for (Index i = 0; i < n; ++i)
            for (std::size_t bl = 0; bl < L.size(); ++bl)
                if (s_have[static_cast<std::size_t>(i)][bl])
                    ys[static_cast<std::size_t>(i)].noalias() += L[bl] * s[static_cast<std::size_t>(i)][bl];
        return core_to_vec(ys);
    });
    if (rp.dim <= dense_threshold)
        rp.dense = assemble_reduced_dense(*left, *opcore, *right, rl, n, rr);
    return rp;
}

}  // namespace detail

/**
 * Builds the reduced problem at core k from scratch. The iterate must be in
 * canonical form with pivot k. When rhs is given, the projected right-hand
 * side G^T A^T rhs is attached for the normal-equations variant; otherwise the
 * projected all-ones vector for the constrained variant is attached.
 */
inline ReducedProblem build_reduced(const TensorTrainOperator& a, const TensorTrain& x, Index k,
                                    const TensorTrain* rhs = nullptr,
                                    Index dense_threshold = 1000) {
    using namespace detail;
    if (a.modes() != x.modes()) throw std::invalid_argument("build_reduced: mode mismatch");
    if (x.left_ortho() < k || x.right_ortho() > k + 1)
        throw std::invalid_argument("build_reduced: iterate must be canonical at core k");

    TensorTrainOperator b = tt_gram_operator(a);
    auto left = std::make_shared<EnvSlice>(trivial_env());
    for (Index j = 0; j < k; ++j)
        *left = env_absorb_left(*left, x.core(j), b.core(j), x.core(j), b.rank(j + 1));
    auto right = std::make_shared<EnvSlice>(trivial_env());
    for (Index j = x.d() - 1; j > k; --j)
        *right = env_absorb_right(*right, x.core(j), b.core(j), x.core(j), b.rank(j));
    auto opcore = std::make_shared<const std::vector<OpEntry>>(b.core(k));

    ReducedProblem rp = make_reduced(k, x.rank(k), x.mode(k), x.rank(k + 1), left, opcore, right,
                                     dense_threshold);

    if (rhs) {
        TensorTrainOperator at = a.transpose();
        EnvSlice lr = trivial_env(), rr_env = trivial_env();
        for (Index j = 0; j < k; ++j)
            lr = env_absorb_left(lr, x.core(j), at.core(j), rhs->core(j), at.rank(j + 1));
        for (Index j = x.d() - 1; j > k; --j)
            rr_env = env_absorb_right(rr_env, x.core(j), at.core(j), rhs->core(j), at.rank(j));
        rp.rhs_proj = core_to_vec(project_local(lr, at.core(k), rhs->core(k), rr_env, x.mode(k)));
        rp.has_rhs = true;
    } else {
        Vector p = Vector::Ones(1), q = Vector::Ones(1);
        for (Index j = 0; j < k; ++j) {
            Vector next = Vector::Zero(x.rank(j + 1));
            for (Index i = 0; i < x.mode(j); ++i)
                next.noalias() += x.core(j)[static_cast<std::size_t>(i)].transpose() * p;
            p = std::move(next);
        }
        for (Index j = x.d() - 1; j > k; --j) {
            Vector next = Vector::Zero(x.rank(j));
            for (Index i = 0; i < x.mode(j); ++i)
                next.noalias() += x.core(j)[static_cast<std::size_t>(i)] * q;
            q = std::move(next);
        }
        rp.ones_proj.resize(rp.dim);
        for (Index bb = 0; bb < rp.rr; ++bb)
            for (Index i = 0; i < rp.n; ++i)
                for (Index aa = 0; aa < rp.rl; ++aa)
                    rp.ones_proj(aa + i * rp.rl + bb * rp.rl * rp.n) = p(aa) * q(bb);
    }
    return rp;
}

struct LocalSolveOutcome {
    Vector g;
    double lambda = 0.0;
    LocalSolveInfo info;
};

/**
 * Solves the constrained saddle system [H, e; e^T, 0][g; lambda] = [0; 1].
 * Direct when dim+1 fits the threshold, MINRES on the symmetric indefinite
 * saddle map otherwise.
 */
inline LocalSolveOutcome solve_local_constrained(const ReducedProblem& rp, const AmenConfig& cfg,
                                                 const Vector* warm = nullptr) {
    if (rp.has_rhs) throw std::invalid_argument("solve_local_constrained: problem carries a rhs");
    if (rp.ones_proj.norm() == 0.0)
        throw std::runtime_error("solve_local_constrained: projected constraint vanished");
    LocalSolveOutcome out;
    out.info.core = static_cast<int>(rp.k);
    out.info.dim = rp.dim;

    if (rp.dim + 1 <= cfg.local_direct_threshold && rp.dense) {
        Matrix s = Matrix::Zero(rp.dim + 1, rp.dim + 1);
        s.topLeftCorner(rp.dim, rp.dim) = *rp.dense;
        s.topRightCorner(rp.dim, 1) = rp.ones_proj;
        s.bottomLeftCorner(1, rp.dim) = rp.ones_proj.transpose();
        Vector rhs = Vector::Zero(rp.dim + 1);
        rhs(rp.dim) = 1.0;
        Eigen::PartialPivLU<Matrix> lu(s);
        out.info.cond_estimate = lu_cond_estimate(lu);
        Vector sol = lu.solve(rhs);
        const Vector diag = lu.matrixLU().diagonal().cwiseAbs();
        if (diag.minCoeff() <= 1e-12 * std::max(1e-300, diag.maxCoeff()))
            sol = s.colPivHouseholderQr().solve(rhs);
        if (!sol.allFinite())
            throw std::runtime_error("solve_local_constrained: singular saddle system");
        out.g = sol.head(rp.dim);
        out.lambda = sol(rp.dim);
        out.info.direct = true;
        return out;
    }

    const Vector e = rp.ones_proj;
    LinearMap saddle(rp.dim + 1, [&rp, e](const Vector& v) {
        Vector y(rp.dim + 1);
        y.head(rp.dim) = rp.map(v.head(rp.dim)) + v(rp.dim) * e;
        y(rp.dim) = e.dot(v.head(rp.dim));
        return y;
    });
    Vector rhs = Vector::Zero(rp.dim + 1);
    rhs(rp.dim) = 1.0;
    Vector x0 = Vector::Zero(rp.dim + 1);
    if (warm) x0.head(rp.dim) = *warm;
    KrylovResult kr = minres(saddle, rhs, cfg.local_iter_tol, cfg.local_iter_maxit, &x0);
    if (!kr.x.allFinite()) throw std::runtime_error("solve_local_constrained: MINRES breakdown");
    out.g = kr.x.head(rp.dim);
    out.lambda = kr.x(rp.dim);
    out.info.direct = false;
    out.info.iterations = kr.iterations;
    out.info.residual = kr.residual;
    return out;
}

/// Solves the normal-equations reduced system H g = G^T A^T b; direct when the
/// size fits, MINRES otherwise (least-squares iterate on semidefinite systems).
inline LocalSolveOutcome solve_local_normal(const ReducedProblem& rp, const AmenConfig& cfg,
                                            const Vector* warm = nullptr) {
    if (!rp.has_rhs) throw std::invalid_argument("solve_local_normal: rhs projection missing");
    LocalSolveOutcome out;
    out.info.core = static_cast<int>(rp.k);
    out.info.dim = rp.dim;
    if (rp.rhs_proj.norm() == 0.0) {
        out.g = Vector::Zero(rp.dim);
        out.info.direct = true;
        return out;
    }
    if (rp.dim <= cfg.local_direct_threshold && rp.dense) {
        Eigen::PartialPivLU<Matrix> lu(*rp.dense);
        out.info.cond_estimate = lu_cond_estimate(lu);
        const Vector diag = lu.matrixLU().diagonal().cwiseAbs();
        if (diag.minCoeff() > 1e-12 * std::max(1e-300, diag.maxCoeff())) {
            out.g = lu.solve(rp.rhs_proj);
        } else {
            out.g = rp.dense->colPivHouseholderQr().solve(rp.rhs_proj);
        }
        if (!out.g.allFinite()) throw std::runtime_error("solve_local_normal: singular system");
        out.info.direct = true;
        return out;
    }
    KrylovResult kr = minres(rp.map, rp.rhs_proj, cfg.local_iter_tol, cfg.local_iter_maxit, warm);
    if (!kr.x.allFinite()) throw std::runtime_error("solve_local_normal: MINRES breakdown");
    out.g = kr.x;
    out.info.direct = false;
    out.info.iterations = kr.iterations;
    out.info.residual = kr.residual;
    return out;
}

namespace detail {

/// Plain two-chain frame/tensor environments used by the enrichment step.
inline Matrix frame_env_left(const TensorTrain& x, const TensorTrain& z, Index k) {
    Matrix g = Matrix::Ones(1, 1);
    for (Index j = 0; j < k; ++j) {
        Matrix next = Matrix::Zero(x.rank(j + 1), z.rank(j + 1));
        for (Index i = 0; i < x.mode(j); ++i)
            next.noalias() += x.core(j)[static_cast<std::size_t>(i)].transpose() * g *
                              z.core(j)[static_cast<std::size_t>(i)];
        g = std::move(next);
    }
    return g;
}

inline Matrix frame_env_right(const TensorTrain& x, const TensorTrain& z, Index k) {
    Matrix g = Matrix::Ones(1, 1);
    for (Index j = x.d() - 1; j >= k; --j) {
        Matrix next = Matrix::Zero(x.rank(j), z.rank(j));
        for (Index i = 0; i < x.mode(j); ++i)
            next.noalias() += x.core(j)[static_cast<std::size_t>(i)] * g *
                              z.core(j)[static_cast<std::size_t>(i)].transpose();
        g = std::move(next);
    }
    return g;
}

/// Augments bond k with the frame-projected residual block and re-orthonormalizes.
/// gamma is the left frame/residual environment at bond k (r_{k-1} x rho_{k-1}).
inline void enrich_bond_forward(TensorTrain& x, Index k, const TensorTrain& z, Index max_rank,
                                const Matrix& gamma) {
    const Index rl = x.rank(k), n = x.mode(k), rr = x.rank(k + 1);
    Index rho = std::min(z.rank(k + 1), max_rank);
    if (rho < 1) return;
    std::vector<Matrix> aug(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        Matrix block = gamma * z.core(k)[static_cast<std::size_t>(i)];  // rl x rho_k
        aug[static_cast<std::size_t>(i)] = Matrix(rl, rr + rho);
        aug[static_cast<std::size_t>(i)].leftCols(rr) = x.core(k)[static_cast<std::size_t>(i)];
        aug[static_cast<std::size_t>(i)].rightCols(rho) = block.leftCols(rho);
    }
    std::vector<Matrix> pad(static_cast<std::size_t>(x.mode(k + 1)));
    for (Index i = 0; i < x.mode(k + 1); ++i) {
        pad[static_cast<std::size_t>(i)] = Matrix::Zero(rr + rho, x.rank(k + 2));
        pad[static_cast<std::size_t>(i)].topRows(rr) = x.core(k + 1)[static_cast<std::size_t>(i)];
    }
    x.replace_bond(k, std::move(aug), std::move(pad));
    x.shift_pivot_right(k);
}

/// Mirror of enrich_bond_forward for the backward sweep: augments core k's left
/// rank, zero-pads core k-1, and re-orthonormalizes with an LQ shift.
/// delta is the right frame/residual environment at bond k+1 (r_k x rho_k).
inline void enrich_bond_backward(TensorTrain& x, Index k, const TensorTrain& z, Index max_rank,
                                 const Matrix& delta) {
    const Index rl = x.rank(k), n = x.mode(k), rr = x.rank(k + 1);
    Index rho = std::min(z.rank(k), max_rank);
    if (rho < 1) return;
    std::vector<Matrix> aug(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        Matrix block = z.core(k)[static_cast<std::size_t>(i)] * delta.transpose();  // rho_{k-1} x rr
        aug[static_cast<std::size_t>(i)] = Matrix(rl + rho, rr);
        aug[static_cast<std::size_t>(i)].topRows(rl) = x.core(k)[static_cast<std::size_t>(i)];
        aug[static_cast<std::size_t>(i)].bottomRows(rho) = block.topRows(rho);
    }
    std::vector<Matrix> pad(static_cast<std::size_t>(x.mode(k - 1)));
    for (Index i = 0; i < x.mode(k - 1); ++i) {
        pad[static_cast<std::size_t>(i)] = Matrix::Zero(x.rank(k - 1), rl + rho);
        pad[static_cast<std::size_t>(i)].leftCols(rl) = x.core(k - 1)[static_cast<std::size_t>(i)];
    }
    x.replace_bond(k - 1, std::move(pad), std::move(aug));
    x.shift_pivot_left(k);
}

/// SVD truncation of bond k during a forward sweep; keeps the left factor
/// orthonormal and pushes the weight into core k+1.
inline void truncate_bond_forward(TensorTrain& x, Index k, double tol, Index cap) {
    Matrix v = x.vertical_unfold(k);
    Eigen::BDCSVD<Matrix> svd(v, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Index r = choose_rank(svd.singularValues(), tol, cap);
    if (r == x.rank(k + 1) && r == svd.singularValues().size()) return;
    const Index rl = x.rank(k), n = x.mode(k);
    Matrix u = svd.matrixU().leftCols(r);
    Matrix carry = svd.singularValues().head(r).asDiagonal() * svd.matrixV().leftCols(r).transpose();
    std::vector<Matrix> left(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) left[static_cast<std::size_t>(i)] = u.middleRows(i * rl, rl);
    std::vector<Matrix> right = x.core(k + 1);
    for (Matrix& s : right) s = carry * s;
    x.replace_bond(k, std::move(left), std::move(right));
}

/// SVD truncation of bond k-1 during a backward sweep; keeps the right factor
/// orthonormal and pushes the weight into core k-1.
inline void truncate_bond_backward(TensorTrain& x, Index k, double tol, Index cap) {
    Matrix h = x.horizontal_unfold(k);
    Eigen::BDCSVD<Matrix> svd(h, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Index r = choose_rank(svd.singularValues(), tol, cap);
    if (r == x.rank(k) && r == svd.singularValues().size()) return;
    const Index n = x.mode(k), rr = x.rank(k + 1);
    Matrix carry = svd.matrixU().leftCols(r) * svd.singularValues().head(r).asDiagonal();
    Matrix vt = svd.matrixV().leftCols(r).transpose();
    std::vector<Matrix> right(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) right[static_cast<std::size_t>(i)] = vt.middleCols(i * rr, rr);
    std::vector<Matrix> left = x.core(k - 1);
    for (Matrix& s : left) s = s * carry;
    x.replace_bond(k - 1, std::move(left), std::move(right));
}

}  // namespace detail

/// Rank enrichment at bond (k, k+1): core k gains the frame-projected factor
/// of the residual direction, core k+1 is zero-padded so the dense entries are
/// unchanged, and the bond is re-orthonormalized.
inline TensorTrain enrich(const TensorTrain& x, Index k, const TensorTrain& z, Index rank) {
    if (k < 0 || k + 1 >= x.d()) throw std::invalid_argument("enrich: bond out of range");
    if (x.modes() != z.modes()) throw std::invalid_argument("enrich: mode mismatch");
    TensorTrain out = x;
    detail::enrich_bond_forward(out, k, z, rank, detail::frame_env_left(x, z, k));
    return out;
}

/**
 * Low-rank TT approximation of the residual direction by alternating
 * projections: target -A x for the constrained variant, A^T(b - A x) for the
 * normal-equations variant (rhs given). Two full fitting sweeps from a random
 * seeded start; the result ranks never exceed `rank`.
 */
inline TensorTrain approx_residual(const TensorTrainOperator& a, const TensorTrain& x,
                                   const TensorTrain* rhs, Index rank, std::mt19937_64& rng,
                                   const TensorTrainOperator* gram = nullptr) {
    using namespace detail;
    const Index d = x.d();
    TensorTrain z = tt_random(x.modes(), rank, rng);
    z.canonicalize(0);

    std::optional<TensorTrainOperator> gram_local;
    const TensorTrainOperator* b_op = gram;
    if (rhs && !b_op) {
        gram_local = tt_gram_operator(a);
        b_op = &*gram_local;
    }
    std::optional<TensorTrainOperator> at;
    if (rhs) at = a.transpose();

    // Chains to project: constrained: -(A x); normal: A^T rhs - (A^T A) x.
    struct Chain {
        const TensorTrainOperator* op;
        const TensorTrain* ket;
        double sign;
    };
    std::vector<Chain> chains;
    if (rhs) {
        chains.push_back({&*at, rhs, +1.0});
        chains.push_back({b_op, &x, -1.0});
    } else {
        chains.push_back({&a, &x, -1.0});
    }

    for (int pass = 0; pass < 2; ++pass) {
        // Forward half sweep.
        std::vector<std::vector<EnvSlice>> right(chains.size());
        for (std::size_t c = 0; c < chains.size(); ++c) {
            right[c].assign(static_cast<std::size_t>(d) + 1, trivial_env());
            for (Index j = d - 1; j >= 1; --j)
                right[c][static_cast<std::size_t>(j)] = env_absorb_right(
                    right[c][static_cast<std::size_t>(j) + 1], z.core(j), chains[c].op->core(j),
                    chains[c].ket->core(j), chains[c].op->rank(j));
        }
        std::vector<EnvSlice> left(chains.size(), trivial_env());
        for (Index k = 0; k < d; ++k) {
            std::vector<Matrix> t(static_cast<std::size_t>(z.mode(k)),
                                  Matrix::Zero(z.rank(k), z.rank(k + 1)));
            for (std::size_t c = 0; c < chains.size(); ++c) {
                auto part = project_local(left[c], chains[c].op->core(k), chains[c].ket->core(k),
                                          right[c][static_cast<std::size_t>(k) + 1], z.mode(k));
                for (Index i = 0; i < z.mode(k); ++i)
                    t[static_cast<std::size_t>(i)] += chains[c].sign * part[static_cast<std::size_t>(i)];
            }
            z.set_core(k, std::move(t));
            if (k + 1 < d) {
                z.shift_pivot_right(k);
                for (std::size_t c = 0; c < chains.size(); ++c)
                    left[c] = env_absorb_left(left[c], z.core(k), chains[c].op->core(k),
                                              chains[c].ket->core(k), chains[c].op->rank(k + 1));
            }
        }
        // Backward half sweep.
        std::vector<std::vector<EnvSlice>> lefts(chains.size());
        for (std::size_t c = 0; c < chains.size(); ++c) {
            lefts[c].assign(static_cast<std::size_t>(d) + 1, trivial_env());
            for (Index j = 0; j < d; ++j)
                lefts[c][static_cast<std::size_t>(j) + 1] = env_absorb_left(
                    lefts[c][static_cast<std::size_t>(j)], z.core(j), chains[c].op->core(j),
                    chains[c].ket->core(j), chains[c].op->rank(j + 1));
        }
        std::vector<EnvSlice> rightenv(chains.size(), trivial_env());
        for (Index k = d - 1; k >= 0; --k) {
            std::vector<Matrix> t(static_cast<std::size_t>(z.mode(k)),
                                  Matrix::Zero(z.rank(k), z.rank(k + 1)));
            for (std::size_t c = 0; c < chains.size(); ++c) {
                auto part = project_local(lefts[c][static_cast<std::size_t>(k)], chains[c].op->core(k),
                                          chains[c].ket->core(k), rightenv[c], z.mode(k));
                for (Index i = 0; i < z.mode(k); ++i)
                    t[static_cast<std::size_t>(i)] += chains[c].sign * part[static_cast<std::size_t>(i)];
            }
            z.set_core(k, std::move(t));
            if (k > 0) {
                z.shift_pivot_left(k);
                for (std::size_t c = 0; c < chains.size(); ++c)
                    rightenv[c] = env_absorb_right(rightenv[c], z.core(k), chains[c].op->core(k),
                                                   chains[c].ket->core(k), chains[c].op->rank(k));
            }
        }
    }
    return z;
}

enum class AmenVariant { Constrained, NormalEquations };

struct AmenResult {
    TensorTrain x;
    SolveReport report;
};

/**
 * Alternating rank-adaptive solver for min ||A x|| with the normalization
 * constraint <x, 1> = 1 (Constrained) or for the normal equations
 * A^T A x = A^T b without the constraint (NormalEquations). One iteration is
 * a forward plus a backward half sweep with bond truncation and gradient
 * enrichment after every core update.
 */
inline AmenResult amen_solve(const TensorTrainOperator& a, AmenVariant variant,
                             const AmenConfig& cfg, const TensorTrain& x0,
                             const TensorTrain* rhs = nullptr) {
    using namespace detail;
    using Clock = std::chrono::steady_clock;
    const auto t_start = Clock::now();
    const Index d = x0.d();
    const bool constrained = variant == AmenVariant::Constrained;
    if (!constrained && !rhs)
        throw std::invalid_argument("amen_solve: normal-equations variant needs a rhs");
    if (constrained && rhs)
        throw std::invalid_argument("amen_solve: constrained variant takes no rhs");

    std::mt19937_64 rng(cfg.seed);
    AmenResult res;
    res.report.method = constrained ? "amen-constrained" : "amen-normal";
    res.report.residual_target = cfg.residual_target;

    TensorTrainOperator b = tt_gram_operator(a);
    std::optional<TensorTrainOperator> at;
    if (!constrained) at = a.transpose();

    TensorTrain x = x0;
    x.canonicalize(0);
    if (constrained) {
        const double mass = tt_inner(x, tt_ones(x.modes()));
        if (mass != 0.0) x.scale_in_place(1.0 / mass);
    }

    auto residual_norm = [&](const TensorTrain& v) {
        TensorTrain av = tt_apply(a, v);
        if (!rhs) return av.norm();
        return tt_add(*rhs, tt_scale(-1.0, av)).norm();
    };

    const double bond_tol =
        d > 1 ? cfg.trunc.abs_tol / std::sqrt(static_cast<double>(d - 1)) : 0.0;

    double best_res = residual_norm(x);
    TensorTrain best_x = x;
    res.report.status = "max-iterations";

    for (int sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
        if (cfg.budget_ms > 0.0) {
            const double spent =
                std::chrono::duration<double, std::milli>(Clock::now() - t_start).count();
            if (spent > cfg.budget_ms) {
                res.report.status = "timeout";
                break;
            }
        }

        TensorTrain zfit = approx_residual(a, x, rhs, cfg.enrichment_rank, rng, &b);

        // Right environments at every bond on the sweep-start iterate.
        std::vector<EnvSlice> right_b(static_cast<std::size_t>(d) + 1, trivial_env());
        std::vector<EnvSlice> right_rhs;
        std::vector<Vector> right_ones;
        for (Index j = d - 1; j >= 1; --j)
            right_b[static_cast<std::size_t>(j)] =
                env_absorb_right(right_b[static_cast<std::size_t>(j) + 1], x.core(j), b.core(j),
                                 x.core(j), b.rank(j));
        if (!constrained) {
            right_rhs.assign(static_cast<std::size_t>(d) + 1, trivial_env());
            for (Index j = d - 1; j >= 1; --j)
                right_rhs[static_cast<std::size_t>(j)] =
                    env_absorb_right(right_rhs[static_cast<std::size_t>(j) + 1], x.core(j),
                                     at->core(j), rhs->core(j), at->rank(j));
        } else {
            right_ones.assign(static_cast<std::size_t>(d) + 1, Vector::Ones(1));
            for (Index j = d - 1; j >= 1; --j) {
                Vector next = Vector::Zero(x.rank(j));
                for (Index i = 0; i < x.mode(j); ++i)
                    next.noalias() += x.core(j)[static_cast<std::size_t>(i)] *
                                      right_ones[static_cast<std::size_t>(j) + 1];
                right_ones[static_cast<std::size_t>(j)] = std::move(next);
            }
        }

        EnvSlice left_b = trivial_env(), left_rhs = trivial_env();
        Vector left_ones = Vector::Ones(1);
        Matrix gamma = Matrix::Ones(1, 1);  // frame/residual left environment

        auto make_rp = [&](Index k, const EnvSlice& lb, const EnvSlice& rb) {
            auto lp = std::make_shared<EnvSlice>(lb);
            auto rp_ = std::make_shared<EnvSlice>(rb);
            auto oc = std::make_shared<const std::vector<OpEntry>>(b.core(k));
            return make_reduced(k, x.rank(k), x.mode(k), x.rank(k + 1), lp, oc, rp_,
                                cfg.local_direct_threshold);
        };

        // Forward half sweep.
        for (Index k = 0; k < d; ++k) {
            ReducedProblem rp = make_rp(k, left_b, right_b[static_cast<std::size_t>(k) + 1]);
            Vector warm = core_to_vec(x.core(k));
            LocalSolveOutcome ls;
            if (constrained) {
                rp.ones_proj.resize(rp.dim);
                const Vector& q = right_ones[static_cast<std::size_t>(k) + 1];
                for (Index bb = 0; bb < rp.rr; ++bb)
                    for (Index i = 0; i < rp.n; ++i)
                        for (Index aa = 0; aa < rp.rl; ++aa)
                            rp.ones_proj(aa + i * rp.rl + bb * rp.rl * rp.n) =
                                left_ones(aa) * q(bb);
                ls = solve_local_constrained(rp, cfg, &warm);
            } else {
                rp.rhs_proj = core_to_vec(
                    project_local(left_rhs, at->core(k), rhs->core(k),
                                  right_rhs[static_cast<std::size_t>(k) + 1], x.mode(k)));
                rp.has_rhs = true;
                ls = solve_local_normal(rp, cfg, &warm);
            }
            ls.info.sweep = sweep;
            res.report.local_solves.push_back(ls.info);
            x.set_core(k, vec_to_core(ls.g, rp.rl, rp.n, rp.rr));

            if (k + 1 < d) {
                truncate_bond_forward(x, k, bond_tol, cfg.trunc.max_rank);
                enrich_bond_forward(x, k, zfit, cfg.enrichment_rank, gamma);
                left_b = env_absorb_left(left_b, x.core(k), b.core(k), x.core(k), b.rank(k + 1));
                if (!constrained)
                    left_rhs = env_absorb_left(left_rhs, x.core(k), at->core(k), rhs->core(k),
                                               at->rank(k + 1));
                else {
                    Vector next = Vector::Zero(x.rank(k + 1));
                    for (Index i = 0; i < x.mode(k); ++i)
                        next.noalias() +=
                            x.core(k)[static_cast<std::size_t>(i)].transpose() * left_ones;
                    left_ones = std::move(next);
                }
                Matrix gnext = Matrix::Zero(x.rank(k + 1), zfit.rank(k + 1));
                for (Index i = 0; i < x.mode(k); ++i)
                    gnext.noalias() += x.core(k)[static_cast<std::size_t>(i)].transpose() * gamma *
                                       zfit.core(k)[static_cast<std::size_t>(i)];
                gamma = std::move(gnext);
            }
        }

        // Left environments at every bond (cores finalized by the forward pass).
        zfit = approx_residual(a, x, rhs, cfg.enrichment_rank, rng, &b);
        std::vector<EnvSlice> lefts_b(static_cast<std::size_t>(d) + 1, trivial_env());
        std::vector<EnvSlice> lefts_rhs;
        std::vector<Vector> lefts_ones;
        for (Index j = 0; j + 1 < d; ++j)
            lefts_b[static_cast<std::size_t>(j) + 1] = env_absorb_left(
                lefts_b[static_cast<std::size_t>(j)], x.core(j), b.core(j), x.core(j), b.rank(j + 1));
        if (!constrained) {
            lefts_rhs.assign(static_cast<std::size_t>(d) + 1, trivial_env());
            for (Index j = 0; j + 1 < d; ++j)
                lefts_rhs[static_cast<std::size_t>(j) + 1] =
                    env_absorb_left(lefts_rhs[static_cast<std::size_t>(j)], x.core(j), at->core(j),
                                    rhs->core(j), at->rank(j + 1));
        } else {
            lefts_ones.assign(static_cast<std::size_t>(d) + 1, Vector::Ones(1));
            for (Index j = 0; j + 1 < d; ++j) {
                Vector next = Vector::Zero(x.rank(j + 1));
                for (Index i = 0; i < x.mode(j); ++i)
                    next.noalias() += x.core(j)[static_cast<std::size_t>(i)].transpose() *
                                      lefts_ones[static_cast<std::size_t>(j)];
                lefts_ones[static_cast<std::size_t>(j) + 1] = std::move(next);
            }
        }
        EnvSlice r_b = trivial_env(), r_rhs = trivial_env();
        Vector r_ones = Vector::Ones(1);
        Matrix delta = Matrix::Ones(1, 1);  // frame/residual right environment

        // Backward half sweep.
        for (Index k = d - 1; k >= 0; --k) {
            ReducedProblem rp = make_rp(k, lefts_b[static_cast<std::size_t>(k)], r_b);
            Vector warm = core_to_vec(x.core(k));
            LocalSolveOutcome ls;
            if (constrained) {
                rp.ones_proj.resize(rp.dim);
                const Vector& p = lefts_ones[static_cast<std::size_t>(k)];
                for (Index bb = 0; bb < rp.rr; ++bb)
                    for (Index i = 0; i < rp.n; ++i)
                        for (Index aa = 0; aa < rp.rl; ++aa)
                            rp.ones_proj(aa + i * rp.rl + bb * rp.rl * rp.n) = p(aa) * r_ones(bb);
                ls = solve_local_constrained(rp, cfg, &warm);
            } else {
                rp.rhs_proj = core_to_vec(project_local(lefts_rhs[static_cast<std::size_t>(k)],
                                                        at->core(k), rhs->core(k), r_rhs,
                                                        x.mode(k)));
                rp.has_rhs = true;
                ls = solve_local_normal(rp, cfg, &warm);
            }
            ls.info.sweep = sweep;
            res.report.local_solves.push_back(ls.info);
            x.set_core(k, vec_to_core(ls.g, rp.rl, rp.n, rp.rr));

            if (k > 0) {
                truncate_bond_backward(x, k, bond_tol, cfg.trunc.max_rank);
                enrich_bond_backward(x, k, zfit, cfg.enrichment_rank, delta);
                r_b = env_absorb_right(r_b, x.core(k), b.core(k), x.core(k), b.rank(k));
                if (!constrained)
                    r_rhs = env_absorb_right(r_rhs, x.core(k), at->core(k), rhs->core(k), at->rank(k));
                else {
                    Vector next = Vector::Zero(x.rank(k));
                    for (Index i = 0; i < x.mode(k); ++i)
                        next.noalias() += x.core(k)[static_cast<std::size_t>(i)] * r_ones;
                    r_ones = std::move(next);
                }
                Matrix dnext = Matrix::Zero(x.rank(k), zfit.rank(k));
                for (Index i = 0; i < x.mode(k); ++i)
                    dnext.noalias() += x.core(k)[static_cast<std::size_t>(i)] * delta *
                                       zfit.core(k)[static_cast<std::size_t>(i)].transpose();
                delta = std::move(dnext);
            }
        }

        if (constrained) {
            const double mass = tt_inner(x, tt_ones(x.modes()));
            if (mass != 0.0) x.scale_in_place(1.0 / mass);
        }

        const double rn = residual_norm(x);
        res.report.residuals.push_back(rn);
        res.report.max_ranks.push_back(static_cast<int>(x.max_rank()));
        res.report.iteration_ms.push_back(
            std::chrono::duration<double, std::milli>(Clock::now() - t_start).count());
        res.report.iterations = sweep;
        if (rn < best_res) {
            best_res = rn;
            best_x = x;
        }
        if (cfg.residual_target > 0.0 && rn <= cfg.residual_target) {
            res.report.converged = true;
            res.report.status = "converged";
            break;
        }
    }

    res.x = best_x;
    res.report.final_residual = best_res;
    res.report.final_max_rank = static_cast<int>(best_x.max_rank());
    res.report.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t_start).count();
    return res;
}

}  // namespace ttmc
