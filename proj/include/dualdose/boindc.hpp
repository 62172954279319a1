#pragma once

// Model-assisted dual-criterion design: BOIN interval boundaries applied to
// DLT and intolerance rates estimated from local data, with single
// imputation of pending outcomes, beta-binomial overdose control, and
// isotonic final selection. The DLT-only comparator (plain BOIN) is the same
// machinery restricted to one endpoint.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "dualdose/design_config.hpp"
#include "dualdose/isotonic.hpp"
#include "dualdose/trial_core.hpp"

namespace dualdose {

struct BoinBoundaries {
    double escalate = 0.0;    ///< lambda_e
    double deescalate = 0.0;  ///< lambda_d
    double target = 0.0;      ///< phi
    double lower = 0.0;       ///< phi1
    double upper = 0.0;       ///< phi2
};

inline BoinBoundaries boin_boundaries(double phi, double phi1, double phi2) {
    if (!(0.0 < phi1 && phi1 < phi && phi < phi2 && phi2 < 1.0))
        throw DesignError("boin_boundaries: require 0 < phi1 < phi < phi2 < 1");
    BoinBoundaries b;
    b.target = phi;
    b.lower = phi1;
    b.upper = phi2;
    b.escalate = std::log((1.0 - phi1) / (1.0 - phi)) / std::log(phi * (1.0 - phi1) / (phi1 * (1.0 - phi)));
    b.deescalate = std::log((1.0 - phi) / (1.0 - phi2)) / std::log(phi2 * (1.0 - phi) / (phi * (1.0 - phi2)));
    return b;
}

inline BoinBoundaries boin_boundaries(const DesignConfig& cfg, Endpoint e) {
    const auto iv = cfg.interval(e);
    return boin_boundaries(cfg.endpoint(e).target, iv.lower, iv.upper);
}

/// Beta(a0, b0) prior, m events in n: posterior mean (m + a0) / (n + a0 + b0).
inline double posterior_mean_pi(double m, double n, double a0, double b0) {
    if (m < 0.0 || m > n) throw DesignError("posterior_mean_pi: require 0 <= m <= n");
    if (!(a0 > 0.0) || !(b0 > 0.0)) throw DesignError("posterior_mean_pi: prior parameters must be positive");
    return (m + a0) / (n + a0 + b0);
}

/// Pr(Y = 1 | no event by follow-up t) when event times are uniform over the
/// window: pi (1 - t/T) / (pi (1 - t/T) + 1 - pi).
inline double impute_pending_exact(double pi, double t, double window) {
    if (!(t >= 0.0) || !(t < window)) throw DesignError("imputation requires 0 <= t < window");
    if (!(pi > 0.0 && pi < 1.0)) throw DesignError("imputation requires pi in (0, 1)");
    const double u = t / window;
    return pi * (1.0 - u) / (1.0 - pi * u);
}

inline double impute_pending_R(double pi, double t, double window) {
    return impute_pending_exact(pi, t, window);
}

/// Pending-DLT imputation. The approximate form pi (1 - t/T) / (1 - pi) drops
/// the survival term from the denominator; it is never smaller than the
/// exact form. Values are capped at 1.
inline double impute_pending_T(double pi, double t, double window, bool approximate = true) {
    const double exact = impute_pending_exact(pi, t, window);
    if (!approximate) return exact;
    return std::min(1.0, pi * (1.0 - t / window) / (1.0 - pi));
}

//---------------------------------------------------------------------------//
// Per-dose tallies
//---------------------------------------------------------------------------//
struct EndpointTally {
    std::size_t events = 0;              ///< observed events m
    std::size_t resolved = 0;            ///< patients with this endpoint observed
    std::vector<double> pending_follow_up;  ///< follow-up t of each pending patient
};

struct DoseTally {
    std::size_t n = 0;
    EndpointTally dlt;
    EndpointTally intolerance;

    const EndpointTally& endpoint(Endpoint e) const { return e == Endpoint::dlt ? dlt : intolerance; }
    EndpointTally& endpoint(Endpoint e) { return e == Endpoint::dlt ? dlt : intolerance; }
};

inline std::vector<DoseTally> tally_doses(const TrialState& s, const EndpointWindows& w) {
    std::vector<DoseTally> out(s.levels());
    for (const auto& p : s.patients) {
        if (p.level >= out.size()) throw InvalidRecord("level", "dose level outside the grid");
        auto& d = out[p.level];
        ++d.n;
        const double t = follow_up(p, s.clock, w);
        for (Endpoint e : {Endpoint::dlt, Endpoint::intolerance}) {
            auto& et = d.endpoint(e);
            switch (observed_status(p.endpoint(e), t, w[e])) {
                case Outcome::yes: ++et.events; ++et.resolved; break;
                case Outcome::no: ++et.resolved; break;
                case Outcome::pending: et.pending_follow_up.push_back(t); break;
            }
        }
    }
    return out;
}

/// pi_hat = (m + sum of imputed pending outcomes) / n. Pending outcomes are
/// imputed from the beta-binomial posterior mean of the observed data, with
/// a Beta(phi/2, 1 - phi/2) prior.
inline double estimate_pi_hat(const DoseTally& tally, Endpoint e, const EndpointSpec& spec,
                              bool approximate_dlt = true) {
    if (tally.n == 0) throw DesignError("estimate_pi_hat: no patients at this dose");
    const auto& et = tally.endpoint(e);
    double total = static_cast<double>(et.events);
    if (!et.pending_follow_up.empty()) {
        const double a0 = 0.5 * spec.target;
        const double plug_in = posterior_mean_pi(static_cast<double>(et.events),
                                                 static_cast<double>(et.resolved), a0, 1.0 - a0);
        for (double t : et.pending_follow_up) {
            total += e == Endpoint::dlt ? impute_pending_T(plug_in, t, spec.window, approximate_dlt)
                                        : impute_pending_R(plug_in, t, spec.window);
        }
    }
    return total / static_cast<double>(tally.n);
}

/// Pr(pi > phi) under the Beta(1 + m, 1 + n - m) posterior of a Beta(1, 1)
/// prior.
inline double overdose_prob_beta(std::size_t m, std::size_t n, double phi) {
    if (m > n) throw DesignError("overdose_prob_beta: require m <= n");
    if (n == 0) throw DesignError("overdose_prob_beta: require n >= 1");
    if (phi >= 1.0) return 0.0;
    if (phi <= 0.0) return 1.0;
    return boost::math::ibetac(1.0 + static_cast<double>(m), 1.0 + static_cast<double>(n - m), phi);
}

/// Recommended level for one endpoint from the boundary comparison.
inline std::size_t boin_endpoint_target(double pi_hat, const BoinBoundaries& b, std::size_t current,
                                        std::size_t levels) {
    if (pi_hat <= b.escalate && current + 1 < levels) return current + 1;
    if (pi_hat >= b.deescalate && current > 0) return current - 1;
    return current;
}

namespace detail {

inline const char* endpoint_name(Endpoint e) { return e == Endpoint::dlt ? "dlt" : "intolerance"; }

inline std::vector<Endpoint> design_endpoints(const DesignConfig& cfg) {
    if (cfg.uses_intolerance()) return {Endpoint::dlt, Endpoint::intolerance};
    return {Endpoint::dlt};
}

}  // namespace detail

/// Overdose verdict for one dose from its observed events. The sample size
/// is set by `cfg.overdose_basis`. Fills `report` with the exceedance probability per endpoint.
inline bool boin_overdose_verdict(const DoseTally& tally, const DesignConfig& cfg, nlohmann::json* report) {
    bool verdict = false;
    for (Endpoint e : detail::design_endpoints(cfg)) {
        const auto& et = tally.endpoint(e);
        const std::size_t n = cfg.overdose_basis == OverdoseBasis::resolved ? et.resolved : tally.n;
        if (n == 0) continue;
        const double pr = overdose_prob_beta(et.events, n, cfg.endpoint(e).target);
        if (report) (*report)[detail::endpoint_name(e)] = pr;
        if (n >= cfg.elimination_min_n && pr > cfg.elimination_cutoff) verdict = true;
    }
    return verdict;
}

/// Interim dose assignment for the BOIN family (TITE-BOIN_DC, BOIN_DC, BOIN).
/// The overdose rule is evaluated at the current dose before moving.
inline Decision decide_boindc(const std::vector<DoseTally>& tallies, const BoinBoundaries& bounds_t,
                              const BoinBoundaries& bounds_r, const TrialState& state, const DesignConfig& cfg) {
    const std::size_t levels = state.levels();
    const std::size_t jc = state.current_level;
    const DoseTally& here = tallies.at(jc);
    if (here.n == 0) throw DesignError("decide_boindc: no patients at the current dose");

    Decision d;
    d.eliminated = state.eliminated;
    if (d.eliminated.size() != levels) d.eliminated.assign(levels, false);

    nlohmann::json overdose = nlohmann::json::object();
    if (boin_overdose_verdict(here, cfg, &overdose))
        for (std::size_t j = jc; j < levels; ++j) d.eliminated[j] = true;

    nlohmann::json estimates = nlohmann::json::object();
    nlohmann::json targets = nlohmann::json::object();
    std::size_t target = levels;  // min over endpoints
    std::string binding;
    for (Endpoint e : detail::design_endpoints(cfg)) {
        const auto& b = e == Endpoint::dlt ? bounds_t : bounds_r;
        const double pi_hat = estimate_pi_hat(here, e, cfg.endpoint(e), cfg.approximate_dlt_imputation);
        const std::size_t jk = boin_endpoint_target(pi_hat, b, jc, levels);
        estimates[detail::endpoint_name(e)] = {{"pi_hat", pi_hat},
                                               {"lambda_e", b.escalate},
                                               {"lambda_d", b.deescalate},
                                               {"events", here.endpoint(e).events},
                                               {"pending", here.endpoint(e).pending_follow_up.size()}};
        targets[detail::endpoint_name(e)] = jk + 1;
        if (jk < target) {
            target = jk;
            binding = detail::endpoint_name(e);
        }
    }

    auto [action, next] = move_toward(jc, target, d.eliminated);
    d.action = action;
    d.next_level = next;
    d.rationale = {{"design", std::string(to_string(cfg.kind))},
                   {"rule", "boin-boundaries"},
                   {"current_level", jc + 1},
                   {"n", here.n},
                   {"estimates", estimates},
                   {"endpoint_targets", targets},
                   {"binding_endpoint", binding},
                   {"overdose_probability", overdose}};
    return d;
}

/// Final selection: isotonic estimates per endpoint over tried, non-eliminated
/// doses, j*_k = argmin |pi_tilde - phi_k| (ties to the lower dose), and the
/// MTD is the lower of the per-endpoint picks.
inline std::optional<std::size_t> select_mtd_boindc(const std::vector<DoseTally>& tallies, const DesignConfig& cfg,
                                                    const std::vector<bool>& eliminated,
                                                    nlohmann::json* report = nullptr) {
    std::vector<std::size_t> candidates;
    for (std::size_t j = 0; j < tallies.size(); ++j) {
        const bool elim = j < eliminated.size() && eliminated[j];
        if (!elim && tallies[j].n > 0) candidates.push_back(j);
    }
    if (candidates.empty()) return std::nullopt;

    std::optional<std::size_t> mtd;
    for (Endpoint e : detail::design_endpoints(cfg)) {
        std::vector<double> raw;
        std::vector<double> weights;
        for (std::size_t j : candidates) {
            const auto& t = tallies[j];
            const double pi = estimate_pi_hat(t, e, cfg.endpoint(e), cfg.approximate_dlt_imputation);
            weights.push_back(static_cast<double>(t.n));
            raw.push_back(pi);
        }
        auto iso = pava_isotonic(raw, weights);
        if (cfg.tie_break == TieBreak::boin)
            for (std::size_t i = 0; i < iso.size(); ++i) iso[i] += 1e-10 * static_cast<double>(i + 1);
        const double phi = cfg.endpoint(e).target;
        // Distances equal up to rounding count as tied and keep the lower dose.
        std::size_t best = 0;
        for (std::size_t i = 1; i < iso.size(); ++i)
            if (std::abs(iso[i] - phi) < std::abs(iso[best] - phi) - 1e-12) best = i;
        const std::size_t pick = candidates[best];
        if (report) {
            nlohmann::json levels = nlohmann::json::array();
            for (std::size_t j : candidates) levels.push_back(j + 1);
            (*report)[detail::endpoint_name(e)] = {{"levels", levels}, {"isotonic", iso}, {"selected", pick + 1}};
        }
        if (!mtd || pick < *mtd) mtd = pick;
    }
    return mtd;
}

//---------------------------------------------------------------------------//
// Protocol decision table
//---------------------------------------------------------------------------//
struct DecisionTableRow {
    std::size_t n = 0;
    int escalate_max = -1;    ///< escalate if events <= this (-1: never)
    int deescalate_min = -1;  ///< de-escalate if events >= this (-1: never)
    int eliminate_min = -1;   ///< eliminate if events >= this (-1: never)
};

inline std::vector<DecisionTableRow> boin_decision_table(const BoinBoundaries& b, std::size_t max_n,
                                                         double cutoff = 0.95, std::size_t min_n = 3) {
    std::vector<DecisionTableRow> rows;
    for (std::size_t n = 1; n <= max_n; ++n) {
        DecisionTableRow r;
        r.n = n;
        for (std::size_t m = 0; m <= n; ++m) {
            const double rate = static_cast<double>(m) / static_cast<double>(n);
            if (rate <= b.escalate) r.escalate_max = static_cast<int>(m);
            if (rate >= b.deescalate && r.deescalate_min < 0) r.deescalate_min = static_cast<int>(m);
            if (n >= min_n && r.eliminate_min < 0 && overdose_prob_beta(m, n, b.target) > cutoff)
                r.eliminate_min = static_cast<int>(m);
        }
        rows.push_back(r);
    }
    return rows;
}

}  // namespace dualdose
