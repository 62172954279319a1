#pragma once

// Domain types shared by every design: dose grid, endpoint windows, patient
// timelines, and the design-agnostic conduct rules (missing-data patterns,
// accrual suspension, overdose elimination bookkeeping).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace dualdose {

/// Raised for inputs that violate a documented precondition.
class DesignError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// A patient record that violates a timeline invariant. `field` names the
/// offending member so callers can report it back (HTTP 422, CLI messages).
class InvalidRecord : public DesignError {
  public:
    InvalidRecord(std::string field, const std::string& what)
        : DesignError(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

  private:
    std::string field_;
};

inline constexpr double kDaysPerMonth = 30.4375;

enum class Endpoint { dlt, intolerance };

//---------------------------------------------------------------------------//
// Dose grid
//---------------------------------------------------------------------------//
class DoseGrid {
  public:
    DoseGrid() = default;

    explicit DoseGrid(std::vector<double> raw) : raw_(std::move(raw)) {
        if (raw_.empty()) throw DesignError("dose grid must contain at least one dose");
        for (std::size_t j = 0; j < raw_.size(); ++j) {
            if (!(raw_[j] > 0.0) || !std::isfinite(raw_[j]))
                throw DesignError("dose amounts must be positive and finite");
            if (j > 0 && !(raw_[j] > raw_[j - 1]))
                throw DesignError("dose amounts must be strictly increasing");
        }
        standardized_.reserve(raw_.size());
        for (double d : raw_) standardized_.push_back(d / raw_.back());
        standardized_.back() = 1.0;
    }

    /// Grid of `levels` doses 1, 2, ..., levels.
    static DoseGrid equally_spaced(std::size_t levels) {
        std::vector<double> raw(levels);
        for (std::size_t j = 0; j < levels; ++j) raw[j] = static_cast<double>(j + 1);
        return DoseGrid(std::move(raw));
    }

    std::size_t size() const noexcept { return raw_.size(); }
    std::span<const double> raw() const noexcept { return raw_; }
    std::span<const double> standardized() const noexcept { return standardized_; }
    double standardized(std::size_t j) const { return standardized_.at(j); }

    friend bool operator==(const DoseGrid&, const DoseGrid&) = default;

  private:
    std::vector<double> raw_;
    std::vector<double> standardized_;
};

//---------------------------------------------------------------------------//
// Endpoints
//---------------------------------------------------------------------------//
struct EndpointSpec {
    double target = 0.25;  ///< target event probability
    double window = 21.0;  ///< assessment window, days

    void validate(const char* name) const {
        if (!(target > 0.0 && target < 1.0))
            throw DesignError(std::string(name) + " target must lie in (0, 1)");
        // A zero window means the endpoint is observed at enrollment.
        if (!(window >= 0.0) || !std::isfinite(window))
            throw DesignError(std::string(name) + " window must be nonnegative");
    }

    friend bool operator==(const EndpointSpec&, const EndpointSpec&) = default;
};

struct EndpointWindows {
    double dlt = 21.0;
    double intolerance = 63.0;

    double operator[](Endpoint e) const { return e == Endpoint::dlt ? dlt : intolerance; }
    friend bool operator==(const EndpointWindows&, const EndpointWindows&) = default;
};

enum class Outcome { pending, no, yes };

/// Recorded status of one endpoint. `event_time` (days since enrollment) is
/// meaningful only when the status is `yes`.
struct EndpointRecord {
    Outcome status = Outcome::pending;
    double event_time = 0.0;

    static EndpointRecord pending() { return {}; }
    static EndpointRecord none() { return {Outcome::no, 0.0}; }
    static EndpointRecord event(double at) { return {Outcome::yes, at}; }

    friend bool operator==(const EndpointRecord&, const EndpointRecord&) = default;
};

struct PatientRecord {
    std::string id;
    std::size_t level = 0;  ///< zero-based dose index
    double enroll_time = 0.0;
    EndpointRecord dlt;
    EndpointRecord intolerance;

    const EndpointRecord& endpoint(Endpoint e) const {
        return e == Endpoint::dlt ? dlt : intolerance;
    }
    EndpointRecord& endpoint(Endpoint e) { return e == Endpoint::dlt ? dlt : intolerance; }

    friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

/// Follow-up time t = min(now - enroll_time, longest window), floored at 0.
inline double follow_up(const PatientRecord& p, double now, const EndpointWindows& w) {
    return std::clamp(now - p.enroll_time, 0.0, std::max(w.dlt, w.intolerance));
}

/// Status of one endpoint as of follow-up time `t`. A pending endpoint whose
/// window has fully elapsed is observed as "no event".
inline Outcome observed_status(const EndpointRecord& r, double t, double window) {
    if (r.status != Outcome::pending) return r.status;
    return t >= window ? Outcome::no : Outcome::pending;
}

inline bool is_pending(const PatientRecord& p, Endpoint e, double now, const EndpointWindows& w) {
    return observed_status(p.endpoint(e), follow_up(p, now, w), w[e]) == Outcome::pending;
}

/// Throws InvalidRecord unless the record is consistent with its windows as
/// of time `now`.
inline void validate_record(const PatientRecord& p, double now, const EndpointWindows& w,
                            std::size_t levels) {
    if (p.level >= levels) throw InvalidRecord("level", "dose level outside the grid");
    if (!std::isfinite(p.enroll_time) || p.enroll_time < 0.0)
        throw InvalidRecord("enroll_time", "must be a nonnegative day offset");
    if (p.enroll_time > now) throw InvalidRecord("enroll_time", "patient enrolled after the trial clock");
    const double elapsed = now - p.enroll_time;
    for (Endpoint e : {Endpoint::dlt, Endpoint::intolerance}) {
        const char* name = e == Endpoint::dlt ? "dlt" : "intolerance";
        const EndpointRecord& r = p.endpoint(e);
        if (r.status == Outcome::yes) {
            if (!std::isfinite(r.event_time) || r.event_time < 0.0)
                throw InvalidRecord(std::string(name) + ".time", "event time must be nonnegative");
            if (r.event_time > w[e])
                throw InvalidRecord(std::string(name) + ".time", "event time beyond the assessment window");
            if (r.event_time > elapsed)
                throw InvalidRecord(std::string(name) + ".time", "event time is after the trial clock");
        } else if (r.status == Outcome::no && elapsed < w[e]) {
            throw InvalidRecord(std::string(name) + ".status",
                                "cannot be observed without event before the window elapses");
        }
    }
}

//---------------------------------------------------------------------------//
// Missing-data patterns
//---------------------------------------------------------------------------//
enum class MissingPattern { both_observed, dlt_observed_intolerance_pending,
                            dlt_pending_intolerance_observed, both_pending };

inline MissingPattern classify_pattern(const PatientRecord& p, double now, const EndpointWindows& w) {
    const bool t_pending = is_pending(p, Endpoint::dlt, now, w);
    const bool r_pending = is_pending(p, Endpoint::intolerance, now, w);
    if (t_pending && r_pending) return MissingPattern::both_pending;
    if (t_pending) return MissingPattern::dlt_pending_intolerance_observed;
    if (r_pending) return MissingPattern::dlt_observed_intolerance_pending;
    return MissingPattern::both_observed;
}

/// Observed value of an endpoint, or nullopt while pending.
inline std::optional<bool> observed_value(const PatientRecord& p, Endpoint e, double now,
                                          const EndpointWindows& w) {
    switch (observed_status(p.endpoint(e), follow_up(p, now, w), w[e])) {
        case Outcome::yes: return true;
        case Outcome::no: return false;
        case Outcome::pending: break;
    }
    return std::nullopt;
}

//---------------------------------------------------------------------------//
// Trial state
//---------------------------------------------------------------------------//
enum class TrialStatus { enrolling, suspended, completed, terminated };

struct TrialState {
    DoseGrid grid;
    std::vector<PatientRecord> patients;
    std::size_t current_level = 0;
    std::vector<bool> eliminated;
    double clock = 0.0;
    TrialStatus status = TrialStatus::enrolling;

    TrialState() = default;
    explicit TrialState(DoseGrid g) : grid(std::move(g)), eliminated(grid.size(), false) {}

    std::size_t levels() const noexcept { return grid.size(); }

    std::size_t count_at(std::size_t level) const {
        return static_cast<std::size_t>(std::count_if(
            patients.begin(), patients.end(), [&](const PatientRecord& p) { return p.level == level; }));
    }

    /// Lowest eliminated dose, if any.
    std::optional<std::size_t> elimination_floor() const {
        for (std::size_t j = 0; j < eliminated.size(); ++j)
            if (eliminated[j]) return j;
        return std::nullopt;
    }

    friend bool operator==(const TrialState&, const TrialState&) = default;
};

enum class Action { escalate, stay, deescalate, suspend, terminate };

struct Decision {
    Action action = Action::stay;
    std::optional<std::size_t> next_level;
    std::vector<bool> eliminated;  ///< elimination flags after this decision
    nlohmann::json rationale = nlohmann::json::object();
};

//---------------------------------------------------------------------------//
// Conduct rules
//---------------------------------------------------------------------------//

/// Which pending endpoints make a patient count as pending for suspension:
/// either endpoint, both endpoints at once, or DLT alone.
enum class EndpointScope { both, all_pending, dlt_only };

struct PendingCounts {
    std::size_t pending = 0;
    std::size_t resolved = 0;
};

inline PendingCounts pending_counts(const TrialState& s, const EndpointWindows& w,
                                    EndpointScope scope = EndpointScope::both) {
    PendingCounts c;
    for (const auto& p : s.patients) {
        if (p.level != s.current_level) continue;
        bool pending = is_pending(p, Endpoint::dlt, s.clock, w);
        if (scope == EndpointScope::both) pending = pending || is_pending(p, Endpoint::intolerance, s.clock, w);
        if (scope == EndpointScope::all_pending) pending = pending && is_pending(p, Endpoint::intolerance, s.clock, w);
        ++(pending ? c.pending : c.resolved);
    }
    return c;
}

/// pending / resolved at the current dose; +inf when nothing is resolved.
inline double pending_ratio(const PendingCounts& c) {
    if (c.resolved == 0) return std::numeric_limits<double>::infinity();
    return static_cast<double>(c.pending) / static_cast<double>(c.resolved);
}

/// True when enrollment must pause: the ratio of patients with any pending
/// endpoint to fully resolved patients at the current dose is >= threshold.
inline bool suspension_check(const TrialState& s, const EndpointWindows& w, double threshold = 0.5,
                             EndpointScope scope = EndpointScope::both) {
    const auto c = pending_counts(s, w, scope);
    if (c.pending + c.resolved == 0)
        throw DesignError("no patients at the current dose; not a valid decision point");
    if (c.resolved == 0) return true;
    return pending_ratio(c) >= threshold;
}

/// Applies overdose verdicts: a verdict on dose j eliminates j and every
/// higher dose. Flags are never cleared. Eliminating dose 1 terminates the
/// trial.
inline TrialState apply_elimination(TrialState s, const std::vector<bool>& verdicts) {
    if (s.eliminated.size() != s.levels()) s.eliminated.assign(s.levels(), false);
    std::optional<std::size_t> lowest;
    for (std::size_t j = 0; j < std::min(verdicts.size(), s.levels()); ++j)
        if (verdicts[j]) { lowest = j; break; }
    if (lowest)
        for (std::size_t j = *lowest; j < s.levels(); ++j) s.eliminated[j] = true;
    if (!s.eliminated.empty() && s.eliminated.front()) s.status = TrialStatus::terminated;
    return s;
}

/// Clamps a one-level move toward `target` against the boundaries and the
/// elimination flags. Returns the action and the resulting level.
inline std::pair<Action, std::optional<std::size_t>>
move_toward(std::size_t current, std::size_t target, const std::vector<bool>& eliminated) {
    const std::size_t levels = eliminated.size();
    if (!eliminated.empty() && eliminated.front()) return {Action::terminate, std::nullopt};
    if (current < levels && eliminated[current]) {
        // Current dose just became unsafe; drop to the highest admissible
        // dose (dose 1 is admissible here).
        std::size_t next = current - 1;
        while (eliminated[next]) --next;
        return {Action::deescalate, next};
    }
    if (target > current && current + 1 < levels && !eliminated[current + 1])
        return {Action::escalate, current + 1};
    if (target < current && current > 0) return {Action::deescalate, current - 1};
    return {Action::stay, current};
}

/// Commits a decision: records eliminations and moves the current dose.
inline TrialState commit_decision(TrialState s, const Decision& d) {
    if (!d.eliminated.empty()) s = apply_elimination(std::move(s), d.eliminated);
    switch (d.action) {
        case Action::terminate: s.status = TrialStatus::terminated; break;
        case Action::suspend: s.status = TrialStatus::suspended; break;
        default:
            if (d.next_level) s.current_level = *d.next_level;
            if (s.status == TrialStatus::suspended) s.status = TrialStatus::enrolling;
            break;
    }
    return s;
}

}  // namespace dualdose
