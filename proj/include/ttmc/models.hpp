#pragma once

#include "ttmc/kronecker.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ttmc {

enum class ModelKind {
    Overflow,
    OverflowSim,
    OverflowPerSim,
    KanbanAlt2,
    DirectedMetab,
    DivergingMetab,
};

inline const char* to_string(ModelKind k) {
    switch (k) {
        case ModelKind::Overflow: return "overflow";
        case ModelKind::OverflowSim: return "overflowsim";
        case ModelKind::OverflowPerSim: return "overflowpersim";
        case ModelKind::KanbanAlt2: return "kanbanalt2";
        case ModelKind::DirectedMetab: return "directedmetab";
        case ModelKind::DivergingMetab: return "divergingmetab";
    }
    return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "overflow") return ModelKind::Overflow;
    if (s == "overflowsim") return ModelKind::OverflowSim;
    if (s == "overflowpersim") return ModelKind::OverflowPerSim;
    if (s == "kanbanalt2") return ModelKind::KanbanAlt2;
    if (s == "directedmetab") return ModelKind::DirectedMetab;
    if (s == "divergingmetab") return ModelKind::DivergingMetab;
    throw std::invalid_argument("unknown model kind: " + s);
}

/**
 * Benchmark model selection: d subsystems with per-mode capacity cap (mode
 * size cap+1) and optional rate overrides. Defaults follow the standard
 * parameterization: arrival rates lambda_k = 1.2 - (k-1)*0.1, service rates
 * mu_k = 1, departure rates dep_k = 1, and the saturating reaction rate
 * v*m/(m+K-1) with v = 0.1, K = 1000 for the metabolic models.
 */
struct ModelSpec {
    ModelKind kind = ModelKind::Overflow;
    Index d = 2;
    Index cap = 1;
    std::optional<Index> branch_node;     // divergingmetab only
    std::vector<double> lambda;           // arrival rates, per queue
    std::vector<double> mu;               // service rates, per queue
    std::vector<double> dep;              // departure rates, per queue
    double v = 0.1;
    double K = 1000.0;
    std::optional<double> inflow;         // metabolic inflow rate, defaults to v

    double lambda_at(Index k) const {     // 0-based queue index
        if (!lambda.empty()) return lambda.at(static_cast<std::size_t>(k));
        return 1.2 - static_cast<double>(k) * 0.1;
    }
    double mu_at(Index k) const {
        if (!mu.empty()) return mu.at(static_cast<std::size_t>(k));
        return 1.0;
    }
    double dep_at(Index k) const {
        if (!dep.empty()) return dep.at(static_cast<std::size_t>(k));
        return 1.0;
    }
    double inflow_rate() const { return inflow.value_or(v); }
};

namespace detail {

/// Birth factor in transposed orientation: rate(m) moves m -> m+1, entry (m+1, m).
inline Matrix birth_factor(Index n, const std::vector<double>& rate) {
    Matrix b = Matrix::Zero(n, n);
    for (Index m = 0; m + 1 < n; ++m) b(m + 1, m) = rate[static_cast<std::size_t>(m)];
    return b;
}

/// Death factor in transposed orientation: rate(m) moves m -> m-1, entry (m-1, m).
inline Matrix death_factor(Index n, const std::vector<double>& rate) {
    Matrix d = Matrix::Zero(n, n);
    for (Index m = 1; m < n; ++m) d(m - 1, m) = rate[static_cast<std::size_t>(m)];
    return d;
}

/// Column-sum diagonal of a nonnegative movement factor; the compensation
/// term is built from these with a single minus sign.
inline Matrix colsum_diag(const Matrix& movement) {
    return Matrix(movement.colwise().sum().asDiagonal());
}

inline std::vector<double> constant_rates(Index n, double value) {
    return std::vector<double>(static_cast<std::size_t>(n), value);
}

/// Saturating reaction rates v*m/(m+K-1) at occupancy m.
inline std::vector<double> metab_rates(Index n, double v, double K) {
    std::vector<double> r(static_cast<std::size_t>(n), 0.0);
    for (Index m = 1; m < n; ++m)
        r[static_cast<std::size_t>(m)] = v * static_cast<double>(m) / (static_cast<double>(m) + K - 1.0);
    return r;
}

/// Model under construction: identity-filled terms with explicit active slots.
class TermBuilder {
public:
    TermBuilder(Index d, Index n) : d_(d), n_(n) {}

    /// Adds the (off-diagonal, diagonal-compensation) pair for one physical
    /// transition. `parts` lists (mode, movement factor); every other mode is
    /// the identity. The compensation term carries the column-sum diagonals of
    /// all movement factors.
    void add_transition(const std::vector<std::pair<Index, Matrix>>& parts) {
        KroneckerTerm move = identity_term();
        KroneckerTerm comp = identity_term();
        for (const auto& [mode, factor] : parts) {
            move.factors[static_cast<std::size_t>(mode)] = factor;
            move.active[static_cast<std::size_t>(mode)] = true;
            comp.factors[static_cast<std::size_t>(mode)] = colsum_diag(factor);
            comp.active[static_cast<std::size_t>(mode)] = true;
        }
        // A single minus sign makes the compensation term negative while each
        // factor stays elementwise nonnegative inside the product.
        comp.factors[static_cast<std::size_t>(parts.front().first)] *= -1.0;
        terms_.push_back(std::move(move));
        terms_.push_back(std::move(comp));
    }

    std::vector<KroneckerTerm> take() { return std::move(terms_); }

private:
    KroneckerTerm identity_term() const {
        KroneckerTerm t;
        t.factors.assign(static_cast<std::size_t>(d_), Matrix::Identity(n_, n_));
        t.active.assign(static_cast<std::size_t>(d_), false);
        return t;
    }

    Index d_;
    Index n_;
    std::vector<KroneckerTerm> terms_;
};

/// Diagonal indicator of the full state.
inline Matrix full_indicator(Index n) {
    Matrix f = Matrix::Zero(n, n);
    f(n - 1, n - 1) = 1.0;
    return f;
}

}  // namespace detail

/**
 * Builds the transposed generator of the requested benchmark model as a list
 * of Kronecker terms. Each physical transition contributes a movement term
 * and a paired diagonal compensation term, so the assembled matrix keeps zero
 * column sums exactly.
 */
inline KroneckerModel build_model(const ModelSpec& spec) {
    using namespace detail;
    if (spec.d < 2) throw std::invalid_argument("build_model: d must be >= 2");
    if (spec.cap < 1) throw std::invalid_argument("build_model: cap must be >= 1");
    const Index d = spec.d;
    const Index n = spec.cap + 1;
    TermBuilder tb(d, n);

    KroneckerModel model;
    model.kind = to_string(spec.kind);
    model.d = d;
    model.modes.assign(static_cast<std::size_t>(d), n);

    const bool overflow_family = spec.kind == ModelKind::Overflow ||
                                 spec.kind == ModelKind::OverflowSim ||
                                 spec.kind == ModelKind::OverflowPerSim;

    if (overflow_family) {
        for (Index k = 0; k < d; ++k) {
            tb.add_transition({{k, birth_factor(n, constant_rates(n, spec.lambda_at(k)))}});
            tb.add_transition({{k, death_factor(n, constant_rates(n, spec.mu_at(k)))}});
        }
        // Overflow routing: an arrival at full queue j tries subsequent queues
        // until one accepts (overflow) or just the next one (overflowsim).
        const Index max_hop = spec.kind == ModelKind::Overflow ? d - 1 : 1;
        for (Index j = 0; j < d; ++j) {
            for (Index hop = 1; hop <= max_hop; ++hop) {
                const Index m = j + hop;
                if (m >= d) break;  // overflow past the last queue is a pure loss
                std::vector<std::pair<Index, Matrix>> parts;
                for (Index f = j; f < m; ++f) parts.push_back({f, full_indicator(n)});
                parts.push_back({m, birth_factor(n, constant_rates(n, spec.lambda_at(j)))});
                tb.add_transition(parts);
            }
        }
        if (spec.kind == ModelKind::OverflowPerSim) {
            // Arrival at the full last queue wraps around to queue 1.
            std::vector<std::pair<Index, Matrix>> parts;
            parts.push_back({d - 1, full_indicator(n)});
            parts.push_back({0, birth_factor(n, constant_rates(n, spec.lambda_at(d - 1)))});
            tb.add_transition(parts);
        }
        model.direct_interp.assign(static_cast<std::size_t>(d), true);
    } else if (spec.kind == ModelKind::KanbanAlt2) {
        tb.add_transition({{0, birth_factor(n, constant_rates(n, spec.lambda_at(0)))}});
        for (Index k = 0; k + 1 < d; ++k) {
            // Synchronized service: departure from queue k enters queue k+1;
            // the unit birth factor vanishes from the full state, which blocks
            // the service exactly when queue k+1 is full.
            tb.add_transition({{k, death_factor(n, constant_rates(n, spec.dep_at(k)))},
                               {k + 1, birth_factor(n, constant_rates(n, 1.0))}});
        }
        tb.add_transition({{d - 1, death_factor(n, constant_rates(n, spec.dep_at(d - 1)))}});
        model.direct_interp.assign(static_cast<std::size_t>(d), false);
        model.direct_interp[0] = true;
    } else {
        // Metabolic models: saturating conversion rates, constant inflow at
        // substrate 1 that is blocked when the substrate is full.
        const auto rates = metab_rates(n, spec.v, spec.K);
        std::vector<std::pair<Index, std::vector<Index>>> conversions;  // (source, sinks)
        Index outflow_a = -1, outflow_b = -1;

        if (spec.kind == ModelKind::DirectedMetab) {
            if (spec.branch_node)
                throw std::invalid_argument("build_model: branch_node is only for divergingmetab");
            for (Index k = 0; k + 1 < d; ++k) conversions.push_back({k, {k + 1}});
            outflow_a = d - 1;
        } else {
            // Trunk modes 1..b; for d < 4 the default branch node makes one or
            // both branches empty, which degrades to extra outflow reactions.
            const Index b = spec.branch_node.value_or(2);
            if (spec.branch_node && (b < 2 || b > d - 2))
                throw std::invalid_argument("build_model: branch_node must lie in [2, d-2]");
            const Index rem = d - b;
            const Index len1 = (rem + 1) / 2;  // longer branch first
            const Index len2 = rem - len1;
            // Mode layout: trunk 0..b-1, branch 1 at b..b+len1-1, branch 2 after.
            for (Index k = 0; k + 1 < b; ++k) conversions.push_back({k, {k + 1}});
            std::vector<Index> sinks;
            if (len1 > 0) sinks.push_back(b);
            if (len2 > 0) sinks.push_back(b + len1);
            if (!sinks.empty()) conversions.push_back({b - 1, sinks});
            for (Index k = 0; k + 1 < len1; ++k) conversions.push_back({b + k, {b + k + 1}});
            for (Index k = 0; k + 1 < len2; ++k)
                conversions.push_back({b + len1 + k, {b + len1 + k + 1}});
            // Each path ends in an outflow; empty branches degrade to an
            // outflow from the branch node itself.
            outflow_a = len1 > 0 ? b + len1 - 1 : b - 1;
            outflow_b = len2 > 0 ? b + len1 + len2 - 1 : b - 1;
        }

        tb.add_transition({{0, birth_factor(n, constant_rates(n, spec.inflow_rate()))}});
        for (const auto& [src, sinks] : conversions)
            for (Index sink : sinks)
                tb.add_transition({{src, death_factor(n, rates)},
                                   {sink, birth_factor(n, constant_rates(n, 1.0))}});
        tb.add_transition({{outflow_a, death_factor(n, rates)}});
        if (outflow_b >= 0) tb.add_transition({{outflow_b, death_factor(n, rates)}});

        model.direct_interp.assign(static_cast<std::size_t>(d), false);
        model.direct_interp[0] = true;
    }

    model.terms = tb.take();
    return model;
}

}  // namespace ttmc
