#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace ttmc {

using json = nlohmann::json;

/// Telemetry for one reduced local solve inside a sweep.
struct LocalSolveInfo {
    int sweep = 0;
    int core = 0;
    long dim = 0;
    bool direct = false;
    int iterations = 0;       // MINRES iterations (0 on the direct path)
    double residual = 0.0;    // achieved local residual (MINRES path)
    double cond_estimate = 0.0;  // rough LU-based estimate (direct path)
};

/// Solver run record: per-iteration residual norms and max TT ranks, timings,
/// and the termination status. An iteration is a sweep for the alternating
/// solver and a cycle for the multigrid methods.
struct SolveReport {
    std::string method;
    std::vector<double> residuals;
    std::vector<int> max_ranks;
    std::vector<double> iteration_ms;
    int iterations = 0;
    double wall_ms = 0.0;
    bool converged = false;
    std::string status;             // "converged" | "max-iterations" | "timeout" | error text
    double residual_target = 0.0;   // absolute stopping threshold
    double residual_scale = 0.0;    // ||A u|| with u the normalized all-ones tensor
    double final_residual = 0.0;
    int final_max_rank = 0;
    std::uint64_t solution_checksum = 0;
    json config_echo;
    std::vector<LocalSolveInfo> local_solves;
};

inline void to_json(json& j, const LocalSolveInfo& s) {
    j = json{{"sweep", s.sweep},          {"core", s.core},
             {"dim", s.dim},              {"direct", s.direct},
             {"iterations", s.iterations}, {"residual", s.residual},
             {"cond_estimate", s.cond_estimate}};
}

inline void to_json(json& j, const SolveReport& r) {
    j = json{{"method", r.method},
             {"residuals", r.residuals},
             {"max_ranks", r.max_ranks},
             {"iteration_ms", r.iteration_ms},
             {"iterations", r.iterations},
             {"wall_ms", r.wall_ms},
             {"converged", r.converged},
             {"status", r.status},
             {"residual_target", r.residual_target},
             {"residual_scale", r.residual_scale},
             {"final_residual", r.final_residual},
             {"final_max_rank", r.final_max_rank},
             {"solution_checksum", r.solution_checksum},
             {"config", r.config_echo},
             {"local_solves", r.local_solves}};
}

}  // namespace ttmc
