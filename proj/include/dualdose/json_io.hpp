#pragma once

// JSON documents for every public type. Dose levels are 1-based in JSON and
// 0-based in memory. Readers reject unknown keys so typos surface early.

#include <cstddef>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualdose/design.hpp"
#include "dualdose/design_config.hpp"
#include "dualdose/simulator.hpp"
#include "dualdose/trial_core.hpp"

namespace dualdose {

inline constexpr int kStateSchemaVersion = 1;

/// Malformed JSON input. `path` is a JSON pointer to the offending member;
/// line and column are 1-based and 0 when unknown.
class JsonInputError : public DesignError {
  public:
    JsonInputError(std::string path, const std::string& what, std::size_t line = 0, std::size_t column = 0)
        : DesignError(format(path, what, line, column)), path_(std::move(path)), detail_(what), line_(line),
          column_(column) {}

    const std::string& path() const noexcept { return path_; }
    const std::string& detail() const noexcept { return detail_; }
    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

  private:
    static std::string format(const std::string& path, const std::string& what, std::size_t line, std::size_t column) {
        std::string out;
        if (line) out += std::to_string(line) + ":" + std::to_string(column) + ": ";
        if (!path.empty()) out += path + ": ";
        return out + what;
    }
    std::string path_;
    std::string detail_;
    std::size_t line_;
    std::size_t column_;
};

namespace detail {

using nlohmann::json;

inline std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t offset) {
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            column = 1;
        } else {
            ++column;
        }
    }
    return {line, column};
}

// Position of the first occurrence of `"key"` followed by a colon.
inline std::optional<std::size_t> key_offset(std::string_view text, std::string_view key) {
    const std::string quoted = "\"" + std::string(key) + "\"";
    for (std::size_t pos = text.find(quoted); pos != std::string_view::npos; pos = text.find(quoted, pos + 1)) {
        std::size_t k = pos + quoted.size();
        while (k < text.size() && (text[k] == ' ' || text[k] == '\t' || text[k] == '\r' || text[k] == '\n')) ++k;
        if (k < text.size() && text[k] == ':') return pos;
    }
    return std::nullopt;
}

inline json require(const json& j, const char* key, const std::string& path) {
    if (!j.is_object()) throw JsonInputError(path, "expected an object");
    auto it = j.find(key);
    if (it == j.end()) throw JsonInputError(path + "/" + key, "required member missing");
    return *it;
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& path) {
    if (!j.is_object()) throw JsonInputError(path, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw JsonInputError(path + "/" + it.key(), "unknown member");
    }
}

template <class T>
T get_as(const json& j, const std::string& path) {
    try {
        return j.get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw JsonInputError(path, std::string("wrong type: ") + e.what());
    }
}

inline double get_number(const json& j, const std::string& path) {
    if (!j.is_number()) throw JsonInputError(path, "expected a number");
    return j.get<double>();
}

inline std::size_t get_count(const json& j, const std::string& path) {
    if (!j.is_number_integer() || j.get<long long>() < 0) throw JsonInputError(path, "expected a nonnegative integer");
    return j.get<std::size_t>();
}

inline std::size_t get_level(const json& j, const std::string& path) {
    if (!j.is_number_integer() || j.get<long long>() < 1) throw JsonInputError(path, "expected a dose level >= 1");
    return j.get<std::size_t>() - 1;
}

inline std::vector<double> get_numbers(const json& j, const std::string& path) {
    if (!j.is_array()) throw JsonInputError(path, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_number(j[i], path + "/" + std::to_string(i)));
    return out;
}

template <class F>
auto rethrow_at(const std::string& path, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const JsonInputError&) {
        throw;
    } catch (const InvalidRecord& e) {
        throw JsonInputError(path + "/" + e.field(), e.what());
    } catch (const DesignError& e) {
        throw JsonInputError(path, e.what());
    }
}

}  // namespace detail

//---------------------------------------------------------------------------//
// Enumerations
//---------------------------------------------------------------------------//
inline std::string_view to_string(Outcome o) {
    switch (o) {
        case Outcome::pending: return "pending";
        case Outcome::no: return "no";
        case Outcome::yes: return "yes";
    }
    return "pending";
}

inline std::string_view to_string(TrialStatus s) {
    switch (s) {
        case TrialStatus::enrolling: return "enrolling";
        case TrialStatus::suspended: return "suspended";
        case TrialStatus::completed: return "completed";
        case TrialStatus::terminated: return "terminated";
    }
    return "enrolling";
}

inline std::string_view to_string(Action a) {
    switch (a) {
        case Action::escalate: return "escalate";
        case Action::stay: return "stay";
        case Action::deescalate: return "deescalate";
        case Action::suspend: return "suspend";
        case Action::terminate: return "terminate";
    }
    return "stay";
}

inline std::string_view to_string(EndpointScope s) {
    switch (s) {
        case EndpointScope::both: return "either";
        case EndpointScope::all_pending: return "both";
        case EndpointScope::dlt_only: return "dlt";
    }
    return "either";
}

inline std::string_view to_string(MissingPattern p) {
    switch (p) {
        case MissingPattern::both_observed: return "both_observed";
        case MissingPattern::dlt_observed_intolerance_pending: return "dlt_observed_intolerance_pending";
        case MissingPattern::dlt_pending_intolerance_observed: return "dlt_pending_intolerance_observed";
        case MissingPattern::both_pending: return "both_pending";
    }
    return "both_observed";
}

inline Outcome parse_outcome(std::string_view s) {
    if (s == "pending") return Outcome::pending;
    if (s == "no") return Outcome::no;
    if (s == "yes") return Outcome::yes;
    throw DesignError("unknown outcome status '" + std::string(s) + "' (expected pending, no or yes)");
}

inline TrialStatus parse_trial_status(std::string_view s) {
    if (s == "enrolling") return TrialStatus::enrolling;
    if (s == "suspended") return TrialStatus::suspended;
    if (s == "completed") return TrialStatus::completed;
    if (s == "terminated") return TrialStatus::terminated;
    throw DesignError("unknown trial status '" + std::string(s) + "'");
}

inline Action parse_action(std::string_view s) {
    if (s == "escalate") return Action::escalate;
    if (s == "stay") return Action::stay;
    if (s == "deescalate") return Action::deescalate;
    if (s == "suspend") return Action::suspend;
    if (s == "terminate") return Action::terminate;
    throw DesignError("unknown action '" + std::string(s) + "'");
}

inline EndpointScope parse_scope(std::string_view s) {
    if (s == "either") return EndpointScope::both;
    if (s == "both") return EndpointScope::all_pending;
    if (s == "dlt") return EndpointScope::dlt_only;
    throw DesignError("unknown suspension scope '" + std::string(s) + "' (expected either, both or dlt)");
}

//---------------------------------------------------------------------------//
// Patients and state
//---------------------------------------------------------------------------//
inline nlohmann::json to_json(const EndpointRecord& r) {
    nlohmann::json j = {{"status", to_string(r.status)}};
    if (r.status == Outcome::yes) j["time"] = r.event_time;
    return j;
}

inline EndpointRecord endpoint_record_from_json(const nlohmann::json& j, const std::string& path) {
    using namespace detail;
    reject_unknown(j, {"status", "time"}, path);
    EndpointRecord r;
    r.status = rethrow_at(path + "/status", [&] { return parse_outcome(get_as<std::string>(require(j, "status", path), path + "/status")); });
    if (r.status == Outcome::yes) r.event_time = get_number(require(j, "time", path), path + "/time");
    else if (j.contains("time")) throw JsonInputError(path + "/time", "event time given without an event");
    return r;
}

inline nlohmann::json to_json(const PatientRecord& p) {
    return {{"id", p.id},
            {"level", p.level + 1},
            {"enroll_time", p.enroll_time},
            {"dlt", to_json(p.dlt)},
            {"intolerance", to_json(p.intolerance)}};
}

inline PatientRecord patient_from_json(const nlohmann::json& j, const std::string& path = "") {
    using namespace detail;
    reject_unknown(j, {"id", "level", "enroll_time", "dlt", "intolerance"}, path);
    PatientRecord p;
    if (j.contains("id")) p.id = get_as<std::string>(j["id"], path + "/id");
    p.level = get_level(require(j, "level", path), path + "/level");
    p.enroll_time = get_number(require(j, "enroll_time", path), path + "/enroll_time");
    p.dlt = j.contains("dlt") ? endpoint_record_from_json(j["dlt"], path + "/dlt") : EndpointRecord::pending();
    p.intolerance = j.contains("intolerance") ? endpoint_record_from_json(j["intolerance"], path + "/intolerance")
                                              : EndpointRecord::pending();
    return p;
}

inline nlohmann::json to_json(const TrialState& s) {
    nlohmann::json patients = nlohmann::json::array();
    for (const auto& p : s.patients) patients.push_back(to_json(p));
    nlohmann::json eliminated = nlohmann::json::array();
    for (bool b : s.eliminated) eliminated.push_back(b);
    return {{"schema", "dualdose/trial-state"},
            {"version", kStateSchemaVersion},
            {"doses", std::vector<double>(s.grid.raw().begin(), s.grid.raw().end())},
            {"clock", s.clock},
            {"current_level", s.current_level + 1},
            {"status", to_string(s.status)},
            {"eliminated", eliminated},
            {"patients", patients}};
}

/// Reads and validates a trial state against `windows`.
inline TrialState state_from_json(const nlohmann::json& j, const EndpointWindows& windows, const std::string& path = "") {
    using namespace detail;
    reject_unknown(j, {"schema", "version", "doses", "clock", "current_level", "status", "eliminated", "patients"}, path);
    if (j.contains("version") && get_count(j["version"], path + "/version") != kStateSchemaVersion)
        throw JsonInputError(path + "/version", "unsupported schema version");
    TrialState s(rethrow_at(path + "/doses", [&] { return DoseGrid(get_numbers(require(j, "doses", path), path + "/doses")); }));
    if (j.contains("clock")) s.clock = get_number(j["clock"], path + "/clock");
    if (!(s.clock >= 0.0)) throw JsonInputError(path + "/clock", "clock must be nonnegative");
    if (j.contains("current_level")) s.current_level = get_level(j["current_level"], path + "/current_level");
    if (s.current_level >= s.levels()) throw JsonInputError(path + "/current_level", "dose level outside the grid");
    if (j.contains("status"))
        s.status = rethrow_at(path + "/status", [&] { return parse_trial_status(get_as<std::string>(j["status"], path + "/status")); });
    if (j.contains("eliminated")) {
        const auto& e = j["eliminated"];
        if (!e.is_array() || e.size() != s.levels())
            throw JsonInputError(path + "/eliminated", "expected one boolean per dose");
        for (std::size_t k = 0; k < e.size(); ++k) {
            if (!e[k].is_boolean()) throw JsonInputError(path + "/eliminated/" + std::to_string(k), "expected a boolean");
            s.eliminated[k] = e[k].get<bool>();
        }
    }
    if (j.contains("patients")) {
        const auto& ps = j["patients"];
        if (!ps.is_array()) throw JsonInputError(path + "/patients", "expected an array");
        for (std::size_t k = 0; k < ps.size(); ++k) {
            const std::string at = path + "/patients/" + std::to_string(k);
            PatientRecord p = patient_from_json(ps[k], at);
            rethrow_at(at, [&] {
                validate_record(p, s.clock, windows, s.levels());
                return 0;
            });
            s.patients.push_back(std::move(p));
        }
    }
    return s;
}

//---------------------------------------------------------------------------//
// Design configuration
//---------------------------------------------------------------------------//
inline nlohmann::json to_json(const DesignConfig& c) {
    const auto endpoint = [&](Endpoint e) {
        const auto& spec = c.endpoint(e);
        const auto iv = c.interval(e);
        return nlohmann::json{{"target", spec.target}, {"window", spec.window}, {"interval", {iv.lower, iv.upper}}};
    };
    return {{"design", to_string(c.kind)},
            {"dlt", endpoint(Endpoint::dlt)},
            {"intolerance", endpoint(Endpoint::intolerance)},
            {"elimination", {{"cutoff", c.elimination_cutoff}, {"min_n", c.elimination_min_n},
                             {"basis", to_string(c.overdose_basis)}}},
            {"suspension", {{"threshold", c.suspension_threshold}, {"scope", to_string(c.scope())}}},
            {"approximate_dlt_imputation", c.approximate_dlt_imputation},
            {"tie_break", to_string(c.tie_break)},
            {"allow_long_dlt_window", c.allow_long_dlt_window},
            {"cohort_size", c.cohort_size},
            {"max_n", c.max_n},
            {"prior", {{"intercept_mean", c.prior.intercept_mean}, {"intercept_sd", c.prior.intercept_sd},
                       {"slope_mean", c.prior.slope_mean}, {"slope_sd", c.prior.slope_sd}}},
            {"mcmc", {{"burn_in", c.mcmc.burn_in}, {"retained", c.mcmc.retained}, {"thinning", c.mcmc.thinning},
                      {"warm_start", c.mcmc.warm_start}, {"da_cycles", c.mcmc.da_cycles},
                      {"rho_proposal_sd", c.mcmc.rho_proposal_sd}, {"seed", c.mcmc.seed}}}};
}

/// Reads a design configuration; every member is optional and defaults as
/// in DesignConfig. The result is validated.
inline DesignConfig design_from_json(const nlohmann::json& j, const std::string& path = "") {
    using namespace detail;
    reject_unknown(j, {"design", "dlt", "intolerance", "elimination", "suspension", "approximate_dlt_imputation",
                       "tie_break", "allow_long_dlt_window", "cohort_size", "max_n", "prior", "mcmc"},
                   path);
    DesignConfig c;
    if (j.contains("design"))
        c.kind = rethrow_at(path + "/design", [&] { return parse_design(get_as<std::string>(j["design"], path + "/design")); });
    const auto endpoint = [&](const char* key, EndpointSpec& spec, std::optional<BoinInterval>& iv) {
        if (!j.contains(key)) return;
        const std::string at = path + "/" + key;
        const auto& e = j[key];
        reject_unknown(e, {"target", "window", "interval"}, at);
        if (e.contains("target")) spec.target = get_number(e["target"], at + "/target");
        if (e.contains("window")) spec.window = get_number(e["window"], at + "/window");
        if (e.contains("interval")) {
            const auto v = get_numbers(e["interval"], at + "/interval");
            if (v.size() != 2) throw JsonInputError(at + "/interval", "expected [lower, upper]");
            iv = BoinInterval{v[0], v[1]};
        }
    };
    endpoint("dlt", c.dlt, c.dlt_interval);
    endpoint("intolerance", c.intolerance, c.intolerance_interval);
    if (j.contains("elimination")) {
        const std::string at = path + "/elimination";
        const auto& e = j["elimination"];
        reject_unknown(e, {"cutoff", "min_n", "basis"}, at);
        if (e.contains("cutoff")) c.elimination_cutoff = get_number(e["cutoff"], at + "/cutoff");
        if (e.contains("min_n")) c.elimination_min_n = get_count(e["min_n"], at + "/min_n");
        if (e.contains("basis"))
            c.overdose_basis = rethrow_at(at + "/basis", [&] { return parse_overdose_basis(get_as<std::string>(e["basis"], at + "/basis")); });
    }
    if (j.contains("suspension")) {
        const std::string at = path + "/suspension";
        const auto& e = j["suspension"];
        reject_unknown(e, {"threshold", "scope"}, at);
        if (e.contains("threshold")) c.suspension_threshold = get_number(e["threshold"], at + "/threshold");
        if (e.contains("scope"))
            c.suspension_scope = rethrow_at(at + "/scope", [&] { return parse_scope(get_as<std::string>(e["scope"], at + "/scope")); });
    }
    if (j.contains("approximate_dlt_imputation"))
        c.approximate_dlt_imputation = get_as<bool>(j["approximate_dlt_imputation"], path + "/approximate_dlt_imputation");
    if (j.contains("tie_break"))
        c.tie_break = rethrow_at(path + "/tie_break", [&] { return parse_tie_break(get_as<std::string>(j["tie_break"], path + "/tie_break")); });
    if (j.contains("allow_long_dlt_window"))
        c.allow_long_dlt_window = get_as<bool>(j["allow_long_dlt_window"], path + "/allow_long_dlt_window");
    if (j.contains("cohort_size")) c.cohort_size = get_count(j["cohort_size"], path + "/cohort_size");
    if (j.contains("max_n")) c.max_n = get_count(j["max_n"], path + "/max_n");
    if (j.contains("prior")) {
        const std::string at = path + "/prior";
        const auto& e = j["prior"];
        reject_unknown(e, {"intercept_mean", "intercept_sd", "slope_mean", "slope_sd"}, at);
        if (e.contains("intercept_mean")) c.prior.intercept_mean = get_number(e["intercept_mean"], at + "/intercept_mean");
        if (e.contains("intercept_sd")) c.prior.intercept_sd = get_number(e["intercept_sd"], at + "/intercept_sd");
        if (e.contains("slope_mean")) c.prior.slope_mean = get_number(e["slope_mean"], at + "/slope_mean");
        if (e.contains("slope_sd")) c.prior.slope_sd = get_number(e["slope_sd"], at + "/slope_sd");
    }
    if (j.contains("mcmc")) {
        const std::string at = path + "/mcmc";
        const auto& e = j["mcmc"];
        reject_unknown(e, {"burn_in", "retained", "thinning", "warm_start", "da_cycles", "rho_proposal_sd", "seed"}, at);
        const auto count = [&](const char* key, int& out) {
            if (e.contains(key)) out = static_cast<int>(get_count(e[key], at + "/" + key));
        };
        count("burn_in", c.mcmc.burn_in);
        count("retained", c.mcmc.retained);
        count("thinning", c.mcmc.thinning);
        count("warm_start", c.mcmc.warm_start);
        count("da_cycles", c.mcmc.da_cycles);
        if (e.contains("rho_proposal_sd")) c.mcmc.rho_proposal_sd = get_number(e["rho_proposal_sd"], at + "/rho_proposal_sd");
        if (e.contains("seed")) c.mcmc.seed = get_as<std::uint64_t>(e["seed"], at + "/seed");
    }
    rethrow_at(path, [&] {
        c.validate();
        return 0;
    });
    return c;
}

//---------------------------------------------------------------------------//
// Decisions
//---------------------------------------------------------------------------//
inline nlohmann::json to_json(const Decision& d) {
    nlohmann::json eliminated = nlohmann::json::array();
    for (bool b : d.eliminated) eliminated.push_back(b);
    nlohmann::json j = {{"action", to_string(d.action)}, {"eliminated", eliminated}, {"rationale", d.rationale}};
    if (d.next_level) j["next_level"] = *d.next_level + 1;
    else j["next_level"] = nullptr;
    return j;
}

inline Decision decision_from_json(const nlohmann::json& j, const std::string& path = "") {
    using namespace detail;
    reject_unknown(j, {"action", "next_level", "eliminated", "rationale"}, path);
    Decision d;
    d.action = rethrow_at(path + "/action", [&] { return parse_action(get_as<std::string>(require(j, "action", path), path + "/action")); });
    if (j.contains("next_level") && !j["next_level"].is_null()) d.next_level = get_level(j["next_level"], path + "/next_level");
    if (j.contains("eliminated")) d.eliminated = get_as<std::vector<bool>>(j["eliminated"], path + "/eliminated");
    if (j.contains("rationale")) d.rationale = j["rationale"];
    return d;
}

inline nlohmann::json to_json(const FinalAnalysis& f) {
    nlohmann::json j = {{"eliminated", f.eliminated}, {"report", f.report}};
    if (f.mtd) j["mtd_level"] = *f.mtd + 1;
    else j["mtd_level"] = nullptr;
    return j;
}

//---------------------------------------------------------------------------//
// Scenarios and operating characteristics
//---------------------------------------------------------------------------//
inline nlohmann::json to_json(const Scenario& s) {
    nlohmann::json j = {{"name", s.name},
                        {"dlt", s.dlt_probs},
                        {"intolerance", s.intolerance_probs},
                        {"intolerance_time_weights", s.intolerance_time_weights},
                        {"dlt_time_weights", s.dlt_time_weights},
                        {"copula_rho", s.copula_rho}};
    if (s.true_mtd) j["true_mtd"] = *s.true_mtd + 1;
    else j["true_mtd"] = nullptr;
    return j;
}

inline Scenario scenario_from_json(const nlohmann::json& j, const std::string& path = "") {
    using namespace detail;
    reject_unknown(j, {"name", "dlt", "intolerance", "true_mtd", "intolerance_time_weights", "dlt_time_weights",
                       "copula_rho"},
                   path);
    Scenario s;
    s.name = get_as<std::string>(require(j, "name", path), path + "/name");
    s.dlt_probs = get_numbers(require(j, "dlt", path), path + "/dlt");
    s.intolerance_probs = get_numbers(require(j, "intolerance", path), path + "/intolerance");
    if (j.contains("true_mtd") && !j["true_mtd"].is_null()) s.true_mtd = get_level(j["true_mtd"], path + "/true_mtd");
    if (j.contains("intolerance_time_weights"))
        s.intolerance_time_weights = get_numbers(j["intolerance_time_weights"], path + "/intolerance_time_weights");
    if (j.contains("dlt_time_weights")) s.dlt_time_weights = get_numbers(j["dlt_time_weights"], path + "/dlt_time_weights");
    if (j.contains("copula_rho")) s.copula_rho = get_number(j["copula_rho"], path + "/copula_rho");
    for (const auto& [key, v] : {std::pair{"dlt", &s.dlt_probs}, std::pair{"intolerance", &s.intolerance_probs}}) {
        for (std::size_t k = 0; k < v->size(); ++k) {
            const std::string at = path + "/" + key + "/" + std::to_string(k);
            if (!((*v)[k] >= 0.0 && (*v)[k] <= 1.0)) throw JsonInputError(at, "probability must lie in [0, 1]");
            if (k > 0 && (*v)[k] < (*v)[k - 1]) throw JsonInputError(at, "probabilities must be nondecreasing in dose");
        }
    }
    if (s.dlt_probs.size() != s.intolerance_probs.size())
        throw JsonInputError(path + "/intolerance", "must have one probability per dose, like dlt");
    if (s.true_mtd && *s.true_mtd >= s.levels()) throw JsonInputError(path + "/true_mtd", "dose level outside the grid");
    for (const char* key : {"intolerance_time_weights", "dlt_time_weights"}) {
        if (!j.contains(key)) continue;
        rethrow_at(path + "/" + key, [&] {
            Scenario probe;
            probe.dlt_probs = {0.0};
            probe.intolerance_probs = {0.0};
            (std::string_view(key) == "dlt_time_weights" ? probe.dlt_time_weights : probe.intolerance_time_weights) =
                std::string_view(key) == "dlt_time_weights" ? s.dlt_time_weights : s.intolerance_time_weights;
            probe.validate();
            return 0;
        });
    }
    rethrow_at(path, [&] {
        s.validate();
        return 0;
    });
    return s;
}

inline nlohmann::json to_json(const OperatingCharacteristics& oc) {
    return {{"scenario", oc.scenario},
            {"design", oc.design},
            {"replicates", oc.replicates},
            {"selection_pct", oc.selection_pct},
            {"none_pct", oc.none_pct},
            {"mean_patients", oc.mean_patients},
            {"mean_duration_months", oc.mean_duration_months},
            {"overdose_pct", oc.overdose_pct},
            {"pcs", oc.pcs},
            {"termination_pct", oc.termination_pct}};
}

namespace detail {
inline std::string fixed(double x, int digits = 1) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}
}  // namespace detail

/// CSV in the layout of the published table: one selection row and one
/// patients row per design, dose columns, then duration and overdose.
inline std::string oc_csv(const std::vector<OperatingCharacteristics>& rows) {
    std::size_t levels = 0;
    for (const auto& r : rows) levels = std::max(levels, r.selection_pct.size());
    std::ostringstream out;
    out << "scenario,design,quantity";
    for (std::size_t j = 0; j < levels; ++j) out << ",d" << j + 1;
    out << ",none,duration_months,overdose_pct\n";
    for (const auto& r : rows) {
        out << r.scenario << ',' << r.design << ",selection_pct";
        for (std::size_t j = 0; j < levels; ++j)
            out << ',' << (j < r.selection_pct.size() ? detail::fixed(r.selection_pct[j]) : "");
        out << ',' << detail::fixed(r.none_pct) << ",,\n";
        out << r.scenario << ',' << r.design << ",patients";
        for (std::size_t j = 0; j < levels; ++j)
            out << ',' << (j < r.mean_patients.size() ? detail::fixed(r.mean_patients[j]) : "");
        out << ",," << detail::fixed(r.mean_duration_months) << ',' << detail::fixed(r.overdose_pct) << '\n';
    }
    return out.str();
}

//---------------------------------------------------------------------------//
// Text and file entry points
//---------------------------------------------------------------------------//

/// Parses JSON text; syntax errors carry line and column.
inline nlohmann::json parse_json_text(std::string_view text) {
    try {
        return nlohmann::json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::parse_error& e) {
        const std::size_t offset = e.byte > 0 ? e.byte - 1 : 0;
        const auto [line, column] = detail::line_column(text, offset);
        std::string what = e.what();
        if (auto pos = what.find("syntax error"); pos != std::string::npos) what = what.substr(pos);
        throw JsonInputError("", what, line, column);
    }
}

/// Runs `read` on the parsed text and anchors any schema error to the line
/// of the offending member where it can be located.
template <class F>
auto read_document(std::string_view text, F&& read) -> decltype(read(nlohmann::json{})) {
    const auto j = parse_json_text(text);
    try {
        return read(j);
    } catch (const JsonInputError& e) {
        if (e.line() || e.path().empty()) throw;
        std::string key = e.path();
        // Walk back to the deepest named (non-index) member.
        for (;;) {
            const auto slash = key.find_last_of('/');
            const std::string last = key.substr(slash + 1);
            const bool index = !last.empty() && last.find_first_not_of("0123456789") == std::string::npos;
            if (!index || slash == 0 || slash == std::string::npos) {
                key = last;
                break;
            }
            key = key.substr(0, slash);
        }
        if (auto off = detail::key_offset(text, key)) {
            const auto [line, column] = detail::line_column(text, *off);
            throw JsonInputError(e.path(), e.detail(), line, column);
        }
        throw;
    }
}

inline std::string read_text_file(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DesignError("cannot open " + file);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline Scenario load_scenario(const std::string& file) {
    const std::string text = read_text_file(file);
    try {
        return read_document(text, [](const nlohmann::json& j) { return scenario_from_json(j); });
    } catch (const JsonInputError& e) {
        throw DesignError(file + (e.line() ? ":" : ": ") + e.what());
    }
}

}  // namespace dualdose
