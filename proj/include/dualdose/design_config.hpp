#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "dualdose/trial_core.hpp"

namespace dualdose {

enum class DesignKind { tite_dc, tite_boin_dc, dc, boin_dc, boin };

inline std::string_view to_string(DesignKind k) {
    switch (k) {
        case DesignKind::tite_dc: return "tite-dc";
        case DesignKind::tite_boin_dc: return "tite-boin-dc";
        case DesignKind::dc: return "dc";
        case DesignKind::boin_dc: return "boin-dc";
        case DesignKind::boin: return "boin";
    }
    return "unknown";
}

inline DesignKind parse_design(std::string_view name) {
    if (name == "tite-dc") return DesignKind::tite_dc;
    if (name == "tite-boin-dc") return DesignKind::tite_boin_dc;
    if (name == "dc") return DesignKind::dc;
    if (name == "boin-dc") return DesignKind::boin_dc;
    if (name == "boin") return DesignKind::boin;
    throw DesignError("unknown design '" + std::string(name) +
                      "' (expected tite-dc, tite-boin-dc, dc, boin-dc or boin)");
}

/// Resolution of exact ties in the final |estimate - target| comparison of
/// the model-assisted designs. `lowest` takes the lowest tied dose; `boin`
/// adds j * 1e-10 to the isotonic estimates, which favours the higher dose
/// when the tied estimates are below target and the lower dose otherwise.
enum class TieBreak { lowest, boin };

inline std::string_view to_string(TieBreak t) { return t == TieBreak::lowest ? "lowest" : "boin"; }

inline TieBreak parse_tie_break(std::string_view name) {
    if (name == "lowest") return TieBreak::lowest;
    if (name == "boin") return TieBreak::boin;
    throw DesignError("unknown tie break '" + std::string(name) + "' (expected lowest or boin)");
}

/// Sample size behind the beta-binomial overdose probability: only patients
/// with a resolved endpoint, or every patient dosed (pending counted as no
/// event so far).
enum class OverdoseBasis { resolved, enrolled };

inline std::string_view to_string(OverdoseBasis b) { return b == OverdoseBasis::resolved ? "resolved" : "enrolled"; }

inline OverdoseBasis parse_overdose_basis(std::string_view name) {
    if (name == "resolved") return OverdoseBasis::resolved;
    if (name == "enrolled") return OverdoseBasis::enrolled;
    throw DesignError("unknown overdose basis '" + std::string(name) + "' (expected resolved or enrolled)");
}

/// BOIN interval bounds phi1 < phi < phi2 around a target.
struct BoinInterval {
    double lower = 0.0;
    double upper = 0.0;
    friend bool operator==(const BoinInterval&, const BoinInterval&) = default;
};

/// Priors of the probit model: alpha ~ N(mean, sd^2), beta ~ N(slope_mean,
/// sd^2) truncated to beta >= 0, rho ~ U(0, 1).
struct PriorConfig {
    double intercept_mean = 0.0;
    double intercept_sd = 1.25;
    double slope_mean = 1.0;
    double slope_sd = 1.24;

    void validate() const {
        if (!(intercept_sd > 0.0) || !(slope_sd > 0.0)) throw DesignError("prior sds must be positive");
    }
    friend bool operator==(const PriorConfig&, const PriorConfig&) = default;
};

struct McmcConfig {
    int burn_in = 1000;
    int retained = 2000;
    int thinning = 1;
    int warm_start = 200;   ///< observed-data sweeps before imputation starts
    int da_cycles = 1;      ///< Gibbs sweeps per imputation step
    double rho_proposal_sd = 0.1;
    std::uint64_t seed = 20240601;

    void validate() const {
        if (burn_in < 0 || retained <= 0 || thinning <= 0 || warm_start < 0 || da_cycles <= 0)
            throw DesignError("MCMC counts must be positive");
        if (!(rho_proposal_sd > 0.0)) throw DesignError("rho proposal sd must be positive");
    }
    friend bool operator==(const McmcConfig&, const McmcConfig&) = default;
};

struct DesignConfig {
    DesignKind kind = DesignKind::tite_boin_dc;
    EndpointSpec dlt{0.25, 21.0};
    EndpointSpec intolerance{0.50, 63.0};
    std::optional<BoinInterval> dlt_interval;          ///< defaults to (0.6 phi, 1.4 phi)
    std::optional<BoinInterval> intolerance_interval;  ///< defaults to (0.6 phi, 1.4 phi)
    double elimination_cutoff = 0.95;
    std::size_t elimination_min_n = 3;
    OverdoseBasis overdose_basis = OverdoseBasis::enrolled;
    double suspension_threshold = 0.5;
    /// Time-to-event designs only; defaults to patients pending on both
    /// endpoints. Complete-data designs always wait for every endpoint.
    std::optional<EndpointScope> suspension_scope;
    bool approximate_dlt_imputation = true;
    TieBreak tie_break = TieBreak::boin;
    bool allow_long_dlt_window = false;
    std::size_t cohort_size = 3;
    std::size_t max_n = 30;
    PriorConfig prior;
    McmcConfig mcmc;

    EndpointWindows windows() const { return {dlt.window, intolerance.window}; }

    const EndpointSpec& endpoint(Endpoint e) const { return e == Endpoint::dlt ? dlt : intolerance; }

    BoinInterval interval(Endpoint e) const {
        const auto& given = e == Endpoint::dlt ? dlt_interval : intolerance_interval;
        if (given) return *given;
        const double phi = endpoint(e).target;
        return {0.6 * phi, 1.4 * phi};
    }

    bool time_to_event() const { return kind == DesignKind::tite_dc || kind == DesignKind::tite_boin_dc; }
    bool model_based() const { return kind == DesignKind::tite_dc || kind == DesignKind::dc; }
    bool uses_intolerance() const { return kind != DesignKind::boin; }
    EndpointScope scope() const {
        if (!uses_intolerance()) return EndpointScope::dlt_only;
        if (!time_to_event()) return EndpointScope::both;
        return suspension_scope.value_or(EndpointScope::all_pending);
    }

    void validate() const {
        dlt.validate("dlt");
        intolerance.validate("intolerance");
        if (!allow_long_dlt_window && dlt.window > intolerance.window)
            throw DesignError("DLT window exceeds the intolerance window (set allow_long_dlt_window to override)");
        for (Endpoint e : {Endpoint::dlt, Endpoint::intolerance}) {
            const auto iv = interval(e);
            const double phi = endpoint(e).target;
            if (!(0.0 < iv.lower && iv.lower < phi && phi < iv.upper && iv.upper < 1.0))
                throw DesignError("BOIN interval must satisfy 0 < phi1 < phi < phi2 < 1");
        }
        if (!(elimination_cutoff > 0.0 && elimination_cutoff < 1.0))
            throw DesignError("elimination cutoff must lie in (0, 1)");
        if (!(suspension_threshold > 0.0)) throw DesignError("suspension threshold must be positive");
        if (cohort_size == 0 || max_n == 0) throw DesignError("cohort size and sample size must be positive");
        prior.validate();
        mcmc.validate();
    }

    friend bool operator==(const DesignConfig&, const DesignConfig&) = default;
};

}  // namespace dualdose
