#pragma once

// One entry point per decision type for all five designs, so the simulator,
// the CLI and the HTTP service share a single code path.

#include <cstdint>
#include <optional>

#include "dualdose/boindc.hpp"
#include "dualdose/design_config.hpp"
#include "dualdose/titedc.hpp"
#include "dualdose/trial_core.hpp"

namespace dualdose {

/// True when enrollment must wait at this decision point. Time-to-event
/// designs use the pending-ratio rule; complete-data designs wait until
/// every patient at the current dose is fully observed.
inline bool enrollment_blocked(const TrialState& s, const DesignConfig& cfg, nlohmann::json* report = nullptr) {
    const auto w = cfg.windows();
    const auto counts = pending_counts(s, w, cfg.scope());
    if (counts.pending + counts.resolved == 0) return false;
    bool blocked = false;
    if (cfg.time_to_event()) {
        blocked = suspension_check(s, w, cfg.suspension_threshold, cfg.scope());
    } else {
        blocked = counts.pending > 0;
    }
    if (report) {
        const double ratio = pending_ratio(counts);
        (*report)["pending"] = counts.pending;
        (*report)["resolved"] = counts.resolved;
        if (std::isfinite(ratio)) (*report)["pending_ratio"] = ratio;
        else (*report)["pending_ratio"] = nullptr;
        (*report)["threshold"] = cfg.time_to_event() ? cfg.suspension_threshold : 0.0;
    }
    return blocked;
}

/// Interim recommendation for the next cohort given the state at its clock.
/// Model-based designs draw from the posterior with `cfg.mcmc`.
inline Decision recommend(const TrialState& s, const DesignConfig& cfg) {
    cfg.validate();
    if (s.status == TrialStatus::terminated || (!s.eliminated.empty() && s.eliminated.front())) {
        Decision d;
        d.action = Action::terminate;
        d.eliminated = s.eliminated;
        d.rationale = {{"rule", "all doses eliminated"}};
        return d;
    }
    nlohmann::json suspension = nlohmann::json::object();
    if (s.count_at(s.current_level) == 0) {
        Decision d;
        d.action = Action::stay;
        d.next_level = s.current_level;
        d.eliminated = s.eliminated.size() == s.levels() ? s.eliminated : std::vector<bool>(s.levels(), false);
        d.rationale = {{"design", std::string(to_string(cfg.kind))},
                       {"rule", s.patients.empty() ? "starting dose" : "awaiting cohort at current dose"},
                       {"current_level", s.current_level + 1}};
        return d;
    }
    if (enrollment_blocked(s, cfg, &suspension)) {
        Decision d;
        d.action = Action::suspend;
        d.next_level = s.current_level;
        d.eliminated = s.eliminated;
        d.rationale = {{"design", std::string(to_string(cfg.kind))},
                       {"rule", cfg.time_to_event() ? "pending ratio at or above threshold"
                                                    : "waiting for complete data at current dose"},
                       {"current_level", s.current_level + 1},
                       {"suspension", suspension}};
        return d;
    }

    Decision d;
    if (cfg.model_based()) {
        const auto draws = fit_posterior(s, cfg.windows(), cfg.prior, cfg.mcmc);
        d = decide_titedc(s, draws, cfg);
    } else {
        const auto tallies = tally_doses(s, cfg.windows());
        d = decide_boindc(tallies, boin_boundaries(cfg, Endpoint::dlt), boin_boundaries(cfg, Endpoint::intolerance),
                          s, cfg);
    }
    d.rationale["suspension"] = suspension;
    return d;
}

struct FinalAnalysis {
    std::optional<std::size_t> mtd;
    std::vector<bool> eliminated;
    nlohmann::json report = nlohmann::json::object();
};

/// MTD selection on the final data. The overdose rule is applied once more
/// to the final data before selecting.
inline FinalAnalysis final_analysis(const TrialState& s, const DesignConfig& cfg) {
    cfg.validate();
    FinalAnalysis out;
    out.eliminated = s.eliminated.size() == s.levels() ? s.eliminated : std::vector<bool>(s.levels(), false);
    if (s.patients.empty() || out.eliminated.front()) {
        out.eliminated = apply_elimination(s, out.eliminated).eliminated;
        return out;
    }
    if (cfg.model_based()) {
        const auto draws = fit_posterior(s, cfg.windows(), cfg.prior, cfg.mcmc);
        nlohmann::json overdose;
        out.eliminated = apply_elimination(s, titedc_overdose_verdicts(draws, cfg, &overdose)).eliminated;
        out.mtd = select_mtd_titedc(draws, cfg, out.eliminated);
        out.report = {{"pi_hat", {{"dlt", draws.pi_hat(Endpoint::dlt)}, {"intolerance", draws.pi_hat(Endpoint::intolerance)}}},
                      {"overdose_probability", overdose}};
    } else {
        const auto tallies = tally_doses(s, cfg.windows());
        std::vector<bool> verdicts(s.levels(), false);
        for (std::size_t j = 0; j < s.levels(); ++j)
            verdicts[j] = tallies[j].n > 0 && boin_overdose_verdict(tallies[j], cfg, nullptr);
        TrialState tmp = s;
        tmp.eliminated = out.eliminated;
        out.eliminated = apply_elimination(std::move(tmp), verdicts).eliminated;
        nlohmann::json iso = nlohmann::json::object();
        out.mtd = select_mtd_boindc(tallies, cfg, out.eliminated, &iso);
        out.report = {{"isotonic", iso}};
    }
    if (out.mtd) out.report["mtd_level"] = *out.mtd + 1;
    else out.report["mtd_level"] = nullptr;
    return out;
}

}  // namespace dualdose
