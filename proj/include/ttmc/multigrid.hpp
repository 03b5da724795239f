#pragma once

#include "ttmc/amen.hpp"
#include "ttmc/kronecker.hpp"
#include "ttmc/linalg.hpp"
#include "ttmc/report.hpp"
#include "ttmc/tt.hpp"
#include "ttmc/tt_operator.hpp"

#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

namespace ttmc {

enum class CoarseSolver { Direct, Amen };

/// Tensorized multigrid parameters. The defaults follow the experiment
/// protocol: three pre-/post-smoothing steps, restricted residuals truncated
/// at 1e-1 relative, level tolerances 10 * (previous residual) * norm ratio,
/// rank cap starting at 15 and growing by sqrt(2) on stagnation (reduction
/// factor above 9/10), and coarsening down to mode size 3.
struct MgConfig {
    int nu1 = 3;
    int nu2 = 3;
    double restricted_residual_tol = 0.1;
    double trunc_default_factor = 10.0;
    Index initial_max_rank = 15;
    double rank_growth = std::sqrt(2.0);
    double stagnation_threshold = 0.9;
    int max_cycles = 100;
    double tol_orders = 2.0;           // target = 10^{-tol_orders} * ||A u||
    double residual_target_abs = 0.0;  // overrides tol_orders when positive
    CoarseSolver coarse = CoarseSolver::Direct;
    int coarse_max_sweeps = 5;
    Index coarse_enrichment_rank = 3;
    std::uint64_t seed = 1;
    double budget_ms = 0.0;
};

/// Per-mode interpolation/restriction factors between two consecutive levels.
/// The global operators are Kronecker products of these and are never
/// assembled densely; restriction is the transpose of interpolation.
struct TransferFactors {
    std::vector<Matrix> p;  // n_k x n_k^c
    std::vector<Matrix> q;  // n_k^c x n_k
};

struct MgLevel {
    KroneckerModel model;
    TensorTrainOperator op;
    std::vector<Matrix> local_ops;  // per-mode local 1D operators
};

struct Hierarchy {
    std::vector<MgLevel> levels;
    std::vector<TransferFactors> transfers;  // transfers[l]: level l <-> l+1
    Index depth() const { return static_cast<Index>(levels.size()); }
};

/// Full-coarsening size rule: odd n -> (n+1)/2, even n -> n/2 + 1.
inline Index coarsen_size(Index n) {
    if (n <= 3) throw std::invalid_argument("coarsen_size: mode already at its minimum");
    return (n % 2 == 1) ? (n + 1) / 2 : n / 2 + 1;
}

namespace detail {

/// Geometric full coarsening: odd points (1-based) are coarse; for even n the
/// last point joins the coarse set so every fine point keeps coarse neighbors.
inline std::vector<Index> coarse_points(Index n) {
    std::vector<Index> c;
    for (Index i = 0; i < n; i += 2) c.push_back(i);
    if (n % 2 == 0) c.push_back(n - 1);
    return c;
}

}  // namespace detail

/**
 * Direct interpolation from the mode's local 1D operator: coarse rows are
 * unit vectors and each fine row i carries the weights
 * w_ij = -(a_ij/a_ii) * (sum_{k in N_i} a_ik / sum_{k in C_i} a_ik) over its
 * coarse neighbors. Rows whose coarse-neighbor sum vanishes fall back to the
 * linear stencil.
 */
inline Matrix direct_interpolation(const Matrix& local_op, Index* fallback_rows = nullptr) {
    const Index n = local_op.rows();
    if (n < 4) throw std::invalid_argument("direct_interpolation: mode size below 4");
    const std::vector<Index> coarse = detail::coarse_points(n);
    std::vector<Index> cidx(static_cast<std::size_t>(n), -1);
    for (std::size_t c = 0; c < coarse.size(); ++c)
        cidx[static_cast<std::size_t>(coarse[c])] = static_cast<Index>(c);

    Matrix p = Matrix::Zero(n, static_cast<Index>(coarse.size()));
    Index fallbacks = 0;
    for (Index i = 0; i < n; ++i) {
        if (cidx[static_cast<std::size_t>(i)] >= 0) {
            p(i, cidx[static_cast<std::size_t>(i)]) = 1.0;
            continue;
        }
        const double aii = local_op(i, i);
        if (aii == 0.0) throw std::invalid_argument("direct_interpolation: zero diagonal entry");
        double sum_n = 0.0, sum_c = 0.0;
        for (Index j = 0; j < n; ++j) {
            if (j == i || local_op(i, j) == 0.0) continue;
            sum_n += local_op(i, j);
            if (cidx[static_cast<std::size_t>(j)] >= 0) sum_c += local_op(i, j);
        }
        if (sum_c != 0.0) {
            const double ratio = sum_n / sum_c;
            for (Index j = 0; j < n; ++j) {
                if (j == i || local_op(i, j) == 0.0 || cidx[static_cast<std::size_t>(j)] < 0) continue;
                p(i, cidx[static_cast<std::size_t>(j)]) = -(local_op(i, j) / aii) * ratio;
            }
        } else {
            // Fine points sit between coarse neighbors by construction.
            ++fallbacks;
            p(i, cidx[static_cast<std::size_t>(i - 1)]) = 0.5;
            p(i, cidx[static_cast<std::size_t>(i + 1)]) = 0.5;
        }
    }
    if (fallback_rows) *fallback_rows = fallbacks;
    return p;
}

/// Classical 1D linear interpolation stencil for odd n: coarse rows are unit
/// vectors, fine rows average their two coarse neighbors.
inline Matrix linear_interpolation(Index n) {
    if (n < 5 || n % 2 == 0)
        throw std::invalid_argument("linear_interpolation: requires odd n >= 5");
    const Index nc = (n + 1) / 2;
    Matrix p = Matrix::Zero(n, nc);
    for (Index i = 0; i < n; ++i) {
        if (i % 2 == 0) {
            p(i, i / 2) = 1.0;
        } else {
            p(i, (i - 1) / 2) = 0.5;
            p(i, (i + 1) / 2) = 0.5;
        }
    }
    return p;
}

/// Applies a Kronecker transfer operator (one factor per mode, operator TT
/// rank one) to a TT tensor; ranks are unchanged.
inline TensorTrain apply_transfer(const std::vector<Matrix>& factors, const TensorTrain& x) {
    if (static_cast<Index>(factors.size()) != x.d())
        throw std::invalid_argument("apply_transfer: factor count mismatch");
    std::vector<std::vector<Matrix>> cores(static_cast<std::size_t>(x.d()));
    for (Index k = 0; k < x.d(); ++k) {
        const Matrix& f = factors[static_cast<std::size_t>(k)];
        if (f.cols() != x.mode(k)) throw std::invalid_argument("apply_transfer: mode mismatch");
        auto& ck = cores[static_cast<std::size_t>(k)];
        ck.assign(static_cast<std::size_t>(f.rows()),
                  Matrix::Zero(x.rank(k), x.rank(k + 1)));
        for (Index c = 0; c < f.rows(); ++c)
            for (Index i = 0; i < f.cols(); ++i) {
                const double w = f(c, i);
                if (w != 0.0) ck[static_cast<std::size_t>(c)] += w * x.core(k)[static_cast<std::size_t>(i)];
            }
    }
    return TensorTrain::from_cores(std::move(cores));
}

/**
 * Builds the multigrid hierarchy: levels are added until every mode size has
 * reached 3 (modes that cannot shrink further keep identity transfers). The
 * coarse operators follow the factor-wise Petrov-Galerkin rule
 * A_{l+1} = sum_t (x)_k Q_k E_k^t P_k with Q_k = P_k^T; the overflow family
 * uses direct interpolation on every mode, the other models on mode 1 only
 * and the linear stencil elsewhere. Per-mode local operators are coarsened
 * alongside so direct interpolation stays available on every level.
 */
inline Hierarchy build_hierarchy(const KroneckerModel& model) {
    Hierarchy h;
    MgLevel fine;
    fine.model = model;
    fine.op = kron_to_tt_operator(model);
    for (Index k = 0; k < model.d; ++k) fine.local_ops.push_back(model.local_operator(k));
    h.levels.push_back(std::move(fine));

    for (;;) {
        const MgLevel& cur = h.levels.back();
        bool any = false;
        for (Index m : cur.model.modes)
            if (m > 3) any = true;
        if (!any) break;

        TransferFactors tf;
        KroneckerModel coarse;
        coarse.kind = cur.model.kind;
        coarse.d = cur.model.d;
        coarse.direct_interp = cur.model.direct_interp;
        MgLevel next;
        for (Index k = 0; k < cur.model.d; ++k) {
            const Index n = cur.model.modes[static_cast<std::size_t>(k)];
            Matrix p;
            if (n <= 3) {
                p = Matrix::Identity(n, n);
            } else if (cur.model.direct_interp[static_cast<std::size_t>(k)]) {
                p = direct_interpolation(cur.local_ops[static_cast<std::size_t>(k)]);
            } else {
                p = linear_interpolation(n);
            }
            tf.p.push_back(p);
            tf.q.push_back(p.transpose());
            coarse.modes.push_back(p.cols());
            next.local_ops.push_back(p.transpose() * cur.local_ops[static_cast<std::size_t>(k)] * p);
        }
        coarse.terms.reserve(cur.model.terms.size());
        for (const KroneckerTerm& t : cur.model.terms) {
            KroneckerTerm ct;
            ct.active = t.active;
            ct.factors.reserve(t.factors.size());
            for (Index k = 0; k < cur.model.d; ++k)
                ct.factors.push_back(tf.q[static_cast<std::size_t>(k)] *
                                     t.factors[static_cast<std::size_t>(k)] *
                                     tf.p[static_cast<std::size_t>(k)]);
            coarse.terms.push_back(std::move(ct));
        }
        next.model = std::move(coarse);
        next.op = kron_to_tt_operator(next.model);
        h.transfers.push_back(std::move(tf));
        h.levels.push_back(std::move(next));
    }
    return h;
}

/**
 * TT-GMRES smoothing run: `steps` non-restarted Arnoldi steps in TT
 * arithmetic. Every Krylov vector and the final update are truncated under
 * the given policy; inner products are exact. Breakdown returns the current
 * iterate.
 */
inline TensorTrain tt_gmres_smooth(const TensorTrainOperator& a, const TensorTrain& b,
                                   const TensorTrain& x0, int steps,
                                   const TruncationPolicy& trunc) {
    if (steps < 1) throw std::invalid_argument("tt_gmres_smooth: steps < 1");
    TensorTrain r0 = tt_truncate(tt_add(b, tt_scale(-1.0, tt_apply(a, x0))), trunc);
    const double beta = r0.norm();
    if (beta == 0.0 || !std::isfinite(beta)) return x0;

    std::vector<TensorTrain> basis;
    r0.scale_in_place(1.0 / beta);
    basis.push_back(std::move(r0));
    Matrix h = Matrix::Zero(steps + 1, steps);
    int m = 0;
    for (int j = 0; j < steps; ++j) {
        TensorTrain w = tt_truncate(tt_apply(a, basis[static_cast<std::size_t>(j)]), trunc);
        for (int i = 0; i <= j; ++i)
            h(i, j) = tt_inner(basis[static_cast<std::size_t>(i)], w);
        for (int i = 0; i <= j; ++i)
            w = tt_add(w, tt_scale(-h(i, j), basis[static_cast<std::size_t>(i)]));
        w = tt_truncate(w, trunc);
        h(j + 1, j) = w.norm();
        m = j + 1;
        if (!(h(j + 1, j) > 1e-12 * beta)) break;
        w.scale_in_place(1.0 / h(j + 1, j));
        basis.push_back(std::move(w));
    }

    Vector rhs = Vector::Zero(m + 1);
    rhs(0) = beta;
    Vector y = h.topLeftCorner(m + 1, m).colPivHouseholderQr().solve(rhs);
    TensorTrain x = x0;
    for (int i = 0; i < m; ++i)
        x = tt_add(x, tt_scale(y(i), basis[static_cast<std::size_t>(i)]));
    return tt_truncate(x, trunc);
}

/// Coarsest-grid correction solve by dense assembly and a minimal-norm
/// least-squares solve; the result is re-tensorized under the given policy.
inline TensorTrain coarse_solve_direct(const KroneckerModel& model, const TensorTrain& b,
                                       const TruncationPolicy& policy) {
    const Index total = model.total_size();
    if (total > 200000)
        throw std::invalid_argument(
            "coarse_solve_direct: coarsest grid exceeds 2e5 states; use the AMEn coarse solver");
    Matrix ad = Matrix::Zero(total, total);
    for (const KroneckerTerm& t : model.terms) ad += kron_modes(t.factors);
    const Vector bd = tt_to_dense(b);
    if (bd.norm() == 0.0) return TensorTrain(b.modes(), std::vector<Index>(b.modes().size() + 1, 1));
    const Vector x = ad.completeOrthogonalDecomposition().solve(bd);
    return tt_from_dense(x, b.modes(), policy);
}

/// Coarsest-grid correction solve with the rank-adaptive alternating solver on
/// the normal equations, ignoring the linear constraint. Accuracy targets the
/// previous cycle's outer residual; at most coarse_max_sweeps sweeps.
inline AmenResult coarse_solve_amen(const TensorTrainOperator& op, const TensorTrain& b,
                                    double outer_residual, const MgConfig& cfg, Index rank_cap,
                                    std::uint64_t seed) {
    AmenConfig ac;
    ac.enrichment_rank = cfg.coarse_enrichment_rank;
    ac.max_sweeps = cfg.coarse_max_sweeps;
    ac.residual_target = outer_residual;
    ac.trunc = TruncationPolicy(0.1 * outer_residual, rank_cap);
    ac.seed = seed;
    TensorTrain x0 = tt_truncate(tt_apply(op.transpose(), b),
                                 TruncationPolicy(0.0, cfg.coarse_enrichment_rank));
    return amen_solve(op, AmenVariant::NormalEquations, ac, x0, &b);
}

namespace detail {

struct CycleState {
    double rho_prev = 0.0;   // outer residual after the previous cycle
    double v1_norm = 1.0;    // finest iterate norm at cycle entry
    Index rank_cap = 15;
    std::uint64_t seed = 1;
    std::vector<int>* coarse_sweeps = nullptr;
};

}  // namespace detail

/**
 * One multigrid V-cycle on level `level` of the hierarchy: nu1 smoothing
 * steps, restriction of the residual (truncated at 1e-1 relative), recursion
 * with zero initial guess, interpolated correction, truncation of the iterate
 * under the level- and progress-adaptive tolerance, nu2 smoothing steps. The
 * coarsest level dispatches to the configured coarse solver.
 */
inline TensorTrain v_cycle(const Hierarchy& h, Index level, const TensorTrain& b, TensorTrain v,
                           const MgConfig& cfg, detail::CycleState& st) {
    const MgLevel& lvl = h.levels[static_cast<std::size_t>(level)];
    if (level == h.depth() - 1) {
        if (cfg.coarse == CoarseSolver::Direct) {
            TruncationPolicy p(st.rho_prev > 0 ? 0.1 * st.rho_prev : 0.0, st.rank_cap);
            return coarse_solve_direct(lvl.model, b, p);
        }
        AmenResult res = coarse_solve_amen(lvl.op, b, st.rho_prev, cfg, st.rank_cap, st.seed);
        if (st.coarse_sweeps) st.coarse_sweeps->push_back(res.report.iterations);
        return res.x;
    }

    // Level- and progress-adaptive absolute tolerance.
    const double scale = std::max(v.norm(), b.norm());
    const double eps = cfg.trunc_default_factor * st.rho_prev * scale /
                       std::max(st.v1_norm, 1e-300);
    const TruncationPolicy smooth_policy(eps, st.rank_cap);

    if (cfg.nu1 > 0) v = tt_gmres_smooth(lvl.op, b, v, cfg.nu1, smooth_policy);

    TensorTrain r = tt_add(b, tt_scale(-1.0, tt_apply(lvl.op, v)));
    TensorTrain br = apply_transfer(h.transfers[static_cast<std::size_t>(level)].q, r);
    br = tt_truncate_rel(br, cfg.restricted_residual_tol, st.rank_cap);

    const auto& cmodes = h.levels[static_cast<std::size_t>(level) + 1].model.modes;
    TensorTrain zero(cmodes, std::vector<Index>(cmodes.size() + 1, 1));
    TensorTrain e = v_cycle(h, level + 1, br, std::move(zero), cfg, st);

    v = tt_add(v, apply_transfer(h.transfers[static_cast<std::size_t>(level)].p, e));
    const double vnorm = v.norm();
    v = tt_truncate(v, TruncationPolicy(cfg.trunc_default_factor * st.rho_prev * vnorm /
                                            std::max(st.v1_norm, 1e-300),
                                        st.rank_cap));

    if (cfg.nu2 > 0) v = tt_gmres_smooth(lvl.op, b, v, cfg.nu2, smooth_policy);
    return v;
}

struct MgResult {
    TensorTrain x;
    SolveReport report;
};

/**
 * Stationary-distribution solver: repeated V-cycles on the homogeneous
 * equation A x = 0 with explicit renormalization after each cycle. The
 * initial guess solves the coarsest-grid problem with the constrained
 * alternating solver and interpolates it up to the finest level. A hierarchy
 * that cannot be coarsened (all mode sizes <= 3) degenerates to solving the
 * constrained problem at the only level directly.
 */
inline MgResult multigrid_solve(const KroneckerModel& model, const MgConfig& cfg) {
    using Clock = std::chrono::steady_clock;
    const auto t_start = Clock::now();

    MgResult res;
    res.report.method = cfg.coarse == CoarseSolver::Direct ? "multigrid" : "multigrid-amen";

    Hierarchy h = build_hierarchy(model);
    const TensorTrainOperator& a = h.levels.front().op;
    const double total = static_cast<double>(model.total_size());

    TensorTrain u = tt_ones(model.modes);
    u.scale_in_place(1.0 / total);
    const double scale = tt_apply(a, u).norm();
    const double target =
        cfg.residual_target_abs > 0.0 ? cfg.residual_target_abs : std::pow(10.0, -cfg.tol_orders) * scale;
    res.report.residual_scale = scale;
    res.report.residual_target = target;
    res.report.status = "max-iterations";

    auto elapsed_ms = [&] {
        return std::chrono::duration<double, std::milli>(Clock::now() - t_start).count();
    };

    if (h.depth() == 1) {
        // Degenerate hierarchy: solve the constrained problem at this level.
        if (cfg.coarse == CoarseSolver::Direct) {
            if (model.total_size() > 10000)
                throw std::invalid_argument(
                    "multigrid_solve: un-coarsenable model too large for the direct path; "
                    "use the AMEn coarse solver");
            Vector x = dense_stationary(assemble_dense(model));
            res.x = tt_from_dense(x, model.modes, TruncationPolicy(1e-14 * x.norm(), 1 << 20));
            const double rho = tt_apply(a, res.x).norm();
            res.report.residuals.push_back(rho);
            res.report.max_ranks.push_back(static_cast<int>(res.x.max_rank()));
            res.report.iteration_ms.push_back(elapsed_ms());
            res.report.iterations = 1;
            res.report.converged = rho <= target;
            res.report.status = res.report.converged ? "converged" : "max-iterations";
        } else {
            AmenConfig ac;
            ac.enrichment_rank = cfg.coarse_enrichment_rank;
            ac.max_sweeps = cfg.max_cycles;
            ac.residual_target = target;
            ac.trunc = TruncationPolicy(0.1 * target, cfg.initial_max_rank);
            ac.seed = cfg.seed;
            ac.budget_ms = cfg.budget_ms;
            TensorTrain u0 = tt_ones(model.modes);
            u0.scale_in_place(1.0 / total);
            AmenResult ar = amen_solve(a, AmenVariant::Constrained, ac, u0);
            res.x = ar.x;
            res.report.residuals = ar.report.residuals;
            res.report.max_ranks = ar.report.max_ranks;
            res.report.iteration_ms = ar.report.iteration_ms;
            res.report.iterations = ar.report.iterations;
            res.report.converged = ar.report.converged;
            res.report.status = ar.report.status;
            res.report.local_solves = ar.report.local_solves;
        }
        res.report.final_residual = res.report.residuals.empty() ? 0.0 : res.report.residuals.back();
        res.report.final_max_rank = static_cast<int>(res.x.max_rank());
        res.report.wall_ms = elapsed_ms();
        return res;
    }

    // Initial guess: constrained solve on the coarsest grid, interpolated up.
    const MgLevel& coarsest = h.levels.back();
    {
        TensorTrain uc = tt_ones(coarsest.model.modes);
        uc.scale_in_place(1.0 / static_cast<double>(coarsest.model.total_size()));
        const double cscale = tt_apply(coarsest.op, uc).norm();
        AmenConfig ac;
        ac.enrichment_rank = cfg.coarse_enrichment_rank;
        ac.max_sweeps = 10;
        ac.residual_target = 1e-2 * cscale;
        ac.trunc = TruncationPolicy(1e-3 * cscale, cfg.initial_max_rank);
        ac.seed = cfg.seed;
        AmenResult ar = amen_solve(coarsest.op, AmenVariant::Constrained, ac, uc);
        res.x = ar.x;
    }
    for (Index l = h.depth() - 2; l >= 0; --l)
        res.x = apply_transfer(h.transfers[static_cast<std::size_t>(l)].p, res.x);
    {
        const double mass = tt_inner(res.x, tt_ones(model.modes));
        if (mass != 0.0) res.x.scale_in_place(1.0 / mass);
    }

    double rho = tt_apply(a, res.x).norm();
    Index cap = cfg.initial_max_rank;
    std::vector<int> coarse_sweeps;
    TensorTrain zero_fine(model.modes, std::vector<Index>(model.modes.size() + 1, 1));

    for (int cycle = 1; cycle <= cfg.max_cycles; ++cycle) {
        if (cfg.budget_ms > 0.0 && elapsed_ms() > cfg.budget_ms) {
            res.report.status = "timeout";
            break;
        }
        detail::CycleState st;
        st.rho_prev = rho;
        st.v1_norm = res.x.norm();
        st.rank_cap = cap;
        st.seed = cfg.seed + static_cast<std::uint64_t>(cycle);
        st.coarse_sweeps = &coarse_sweeps;

        res.x = v_cycle(h, 0, zero_fine, std::move(res.x), cfg, st);
        const double mass = tt_inner(res.x, tt_ones(model.modes));
        if (mass != 0.0) res.x.scale_in_place(1.0 / mass);

        const double rho_new = tt_apply(a, res.x).norm();
        res.report.residuals.push_back(rho_new);
        res.report.max_ranks.push_back(static_cast<int>(res.x.max_rank()));
        res.report.iteration_ms.push_back(elapsed_ms());
        res.report.iterations = cycle;

        if (rho_new <= target) {
            res.report.converged = true;
            res.report.status = "converged";
            break;
        }
        if (rho_new > cfg.stagnation_threshold * rho)
            cap = static_cast<Index>(std::ceil(static_cast<double>(cap) * cfg.rank_growth));
        rho = rho_new;
    }

    res.report.final_residual = res.report.residuals.empty() ? rho : res.report.residuals.back();
    res.report.final_max_rank = static_cast<int>(res.x.max_rank());
    res.report.config_echo["coarse_sweeps"] = coarse_sweeps;
    res.report.wall_ms = elapsed_ms();
    return res;
}

}  // namespace ttmc
