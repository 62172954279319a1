#pragma once

// Monte Carlo trial simulator: Poisson accrual in cohorts, scenario-driven
// outcome generation, any of the five designs run to completion, and
// aggregation into operating characteristics.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "dualdose/design.hpp"
#include "dualdose/normal.hpp"
#include "dualdose/trial_core.hpp"

namespace dualdose {

//---------------------------------------------------------------------------//
// Seeding
//---------------------------------------------------------------------------//
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent stream seed for (master, a, b).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
    return splitmix64(splitmix64(splitmix64(master) ^ (a + 0x5851f42d4c957f2dULL)) ^ (b + 0x14057b7ef767814fULL));
}

//---------------------------------------------------------------------------//
// Scenarios
//---------------------------------------------------------------------------//
struct Scenario {
    std::string name;
    std::vector<double> dlt_probs;
    std::vector<double> intolerance_probs;
    std::optional<std::size_t> true_mtd;             ///< zero-based; none when no dose is acceptable
    std::vector<double> intolerance_time_weights{1.0};  ///< per-cycle mass for X_R
    std::vector<double> dlt_time_weights{1.0};          ///< per-cycle mass for X_T
    double copula_rho = 0.0;

    std::size_t levels() const { return dlt_probs.size(); }

    void validate() const {
        if (dlt_probs.empty()) throw DesignError("scenario needs at least one dose");
        if (dlt_probs.size() != intolerance_probs.size())
            throw DesignError("scenario DLT and intolerance vectors differ in length");
        for (const auto* v : {&dlt_probs, &intolerance_probs}) {
            for (std::size_t j = 0; j < v->size(); ++j) {
                if (!((*v)[j] >= 0.0 && (*v)[j] <= 1.0)) throw DesignError("scenario probabilities must lie in [0, 1]");
                if (j > 0 && (*v)[j] < (*v)[j - 1]) throw DesignError("scenario probabilities must be nondecreasing");
            }
        }
        if (true_mtd && *true_mtd >= levels()) throw DesignError("scenario true MTD outside the grid");
        for (const auto* w : {&intolerance_time_weights, &dlt_time_weights}) {
            if (w->empty()) throw DesignError("event-time weights must not be empty");
            double s = 0.0;
            for (double x : *w) {
                if (!(x >= 0.0)) throw DesignError("event-time weights must be nonnegative");
                s += x;
            }
            if (std::abs(s - 1.0) > 1e-9) throw DesignError("event-time weights must sum to 1");
        }
        if (!(copula_rho > -1.0 && copula_rho < 1.0)) throw DesignError("copula rho must lie in (-1, 1)");
    }
};

/// The eleven dose-DLT / dose-intolerance scenarios of the reference study.
inline std::vector<Scenario> table1_scenarios() {
    struct Row {
        std::vector<double> t, r;
        std::size_t mtd;
    };
    const std::vector<Row> rows = {
        {{0.05, 0.10, 0.15, 0.20, 0.25}, {0.10, 0.30, 0.50, 0.70, 0.90}, 2},
        {{0.05, 0.10, 0.15, 0.20, 0.25}, {0.05, 0.10, 0.30, 0.50, 0.70}, 3},
        {{0.05, 0.10, 0.15, 0.20, 0.25}, {0.30, 0.50, 0.70, 0.90, 0.95}, 1},
        {{0.05, 0.10, 0.15, 0.20, 0.25}, {0.50, 0.70, 0.90, 0.95, 0.99}, 0},
        {{0.10, 0.15, 0.20, 0.25, 0.30}, {0.10, 0.30, 0.50, 0.70, 0.90}, 2},
        {{0.10, 0.15, 0.20, 0.25, 0.30}, {0.30, 0.50, 0.70, 0.90, 0.95}, 1},
        {{0.05, 0.15, 0.25, 0.35, 0.45}, {0.30, 0.50, 0.70, 0.90, 0.95}, 1},
        {{0.05, 0.15, 0.25, 0.35, 0.45}, {0.10, 0.20, 0.30, 0.40, 0.50}, 2},
        {{0.15, 0.25, 0.35, 0.45, 0.55}, {0.10, 0.20, 0.30, 0.40, 0.50}, 1},
        {{0.01, 0.05, 0.12, 0.25, 0.37}, {0.05, 0.10, 0.20, 0.50, 0.70}, 3},
        {{0.05, 0.12, 0.25, 0.37, 0.50}, {0.08, 0.20, 0.50, 0.67, 0.90}, 2},
    };
    std::vector<Scenario> out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        Scenario s;
        s.name = "scenario-" + std::to_string(i + 1);
        s.dlt_probs = rows[i].t;
        s.intolerance_probs = rows[i].r;
        s.true_mtd = rows[i].mtd;
        out.push_back(std::move(s));
    }
    return out;
}

/// Time-to-intolerance weight vectors of the robustness study.
inline std::vector<std::vector<double>> sensitivity_weight_vectors() {
    return {{1.0 / 3, 1.0 / 3, 1.0 / 3}, {1.0 / 7, 2.0 / 7, 4.0 / 7}, {0.1, 0.1, 0.8}, {0.8, 0.1, 0.1}};
}

//---------------------------------------------------------------------------//
// Patient generation
//---------------------------------------------------------------------------//
struct PatientTruth {
    bool dlt = false;
    bool intolerance = false;
    double dlt_time = 0.0;          ///< days after enrollment, valid when dlt
    double intolerance_time = 0.0;  ///< days after enrollment, valid when intolerance
};

namespace detail {

// Piecewise-uniform time over (0, window]: cycle c with probability w_c,
// uniform within the cycle.
inline double piecewise_time(const std::vector<double>& weights, double window, double u_cycle, double u_within) {
    const std::size_t cycles = weights.size();
    std::size_t c = 0;
    double acc = weights[0];
    while (c + 1 < cycles && u_cycle >= acc) acc += weights[++c];
    const double length = window / static_cast<double>(cycles);
    return length * (static_cast<double>(c) + (1.0 - u_within));
}

}  // namespace detail

/// Draws one patient's outcomes at `level`. Every call consumes the same
/// number of variates so paired runs stay aligned across designs.
template <class Rng>
PatientTruth generate_patient(const Scenario& sc, std::size_t level, const EndpointWindows& w, Rng& rng) {
    std::normal_distribution<double> std_normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double z1 = std_normal(rng);
    const double z2 = sc.copula_rho * z1 + std::sqrt(1.0 - sc.copula_rho * sc.copula_rho) * std_normal(rng);
    const double pt = sc.dlt_probs.at(level);
    const double pr = sc.intolerance_probs.at(level);
    PatientTruth p;
    p.dlt = pt >= 1.0 || normal_cdf(z1) < pt;
    p.intolerance = pr >= 1.0 || normal_cdf(z2) < pr;
    const double ut_c = unif(rng), ut_w = unif(rng), ur_c = unif(rng), ur_w = unif(rng);
    p.dlt_time = detail::piecewise_time(sc.dlt_time_weights, w.dlt, ut_c, ut_w);
    p.intolerance_time = detail::piecewise_time(sc.intolerance_time_weights, w.intolerance, ur_c, ur_w);
    return p;
}

/// What is known about a simulated patient at time `now`.
inline PatientRecord observe(const PatientTruth& truth, std::size_t level, double enroll, double now,
                             const EndpointWindows& w, std::string id = {}) {
    PatientRecord r;
    r.id = std::move(id);
    r.level = level;
    r.enroll_time = enroll;
    const auto one = [&](bool event, double at, double window) {
        if (event && enroll + at <= now) return EndpointRecord::event(at);
        if (now >= enroll + window) return EndpointRecord::none();
        return EndpointRecord::pending();
    };
    r.dlt = one(truth.dlt, truth.dlt_time, w.dlt);
    r.intolerance = one(truth.intolerance, truth.intolerance_time, w.intolerance);
    return r;
}

/// Calendar time at which an endpoint of a simulated patient resolves.
inline double resolution_time(const PatientTruth& truth, double enroll, Endpoint e, const EndpointWindows& w) {
    if (e == Endpoint::dlt) return enroll + (truth.dlt ? truth.dlt_time : w.dlt);
    return enroll + (truth.intolerance ? truth.intolerance_time : w.intolerance);
}

//---------------------------------------------------------------------------//
// Single trial
//---------------------------------------------------------------------------//
struct SimConfig {
    DesignConfig design;
    std::vector<double> doses;     ///< raw dose amounts; empty means 1..J
    double accrual_rate = 0.1;     ///< patients per day
    std::size_t n_replicates = 1000;
    std::uint64_t seed = 1;
    unsigned threads = 0;          ///< 0: hardware concurrency
    /// Decide when the first patient of the next cohort arrives (that
    /// patient is then treated at the new dose) instead of when the current
    /// cohort is complete. A patient arriving while enrollment is suspended
    /// is not enrolled.
    bool decide_at_next_arrival = false;

    void validate() const {
        design.validate();
        if (!(accrual_rate > 0.0) || !std::isfinite(accrual_rate)) throw DesignError("accrual rate must be positive");
        if (n_replicates == 0) throw DesignError("replicate count must be positive");
    }
};

struct CohortRecord {
    std::size_t level = 0;     ///< dose given to the cohort
    double start_time = 0.0;   ///< enrollment reopened
    double decision_time = 0.0;  ///< decision made after this cohort (or end)
    Action action = Action::stay;  ///< decision made after the cohort
};

struct TrialResult {
    std::optional<std::size_t> selected;
    std::vector<std::size_t> patients_per_dose;
    double duration_days = 0.0;
    std::size_t overdosed = 0;
    bool terminated = false;
    std::vector<CohortRecord> cohorts;

    std::size_t total_patients() const {
        std::size_t s = 0;
        for (auto n : patients_per_dose) s += n;
        return s;
    }
};

class TrialSimulation {
  public:
    TrialSimulation(const Scenario& sc, const SimConfig& cfg, std::uint64_t seed)
        : sc_(sc), cfg_(cfg), seed_(seed), w_(cfg.design.windows()), arrivals_(derive_seed(seed, 1)),
          outcomes_(derive_seed(seed, 2)) {
        grid_ = cfg.doses.empty() ? DoseGrid::equally_spaced(sc.levels()) : DoseGrid(cfg.doses);
        if (grid_.size() != sc.levels()) throw DesignError("dose grid and scenario differ in length");
    }

    TrialResult run() {
        const auto& design = cfg_.design;
        std::exponential_distribution<double> gap(cfg_.accrual_rate);
        std::size_t level = 0;
        std::vector<bool> eliminated(sc_.levels(), false);
        double open = 0.0;
        double last_enroll = 0.0;
        std::size_t decision_index = 0;
        double held = -1.0;  // arrival that triggered the last decision; negative when none
        TrialResult res;
        res.patients_per_dose.assign(sc_.levels(), 0);

        while (truths_.size() < design.max_n) {
            CohortRecord cohort{level, open, 0.0, Action::stay};
            double t = open;
            for (std::size_t k = 0; k < design.cohort_size && truths_.size() < design.max_n; ++k) {
                if (k == 0 && held >= 0.0) t = held;
                else t += gap(arrivals_);
                truths_.push_back(generate_patient(sc_, level, w_, outcomes_));
                levels_.push_back(level);
                enroll_.push_back(t);
                ++res.patients_per_dose[level];
            }
            last_enroll = t;
            if (truths_.size() >= design.max_n) {
                cohort.decision_time = t;
                res.cohorts.push_back(cohort);
                break;
            }

            // Wait until the enrollment rule clears.
            double now = t;
            held = -1.0;
            if (cfg_.decide_at_next_arrival) {
                now = t + gap(arrivals_);
                held = now;
            }
            for (;;) {
                const TrialState s = state_at(now, level, eliminated);
                if (!enrollment_blocked(s, design)) break;
                held = -1.0;
                const auto next = next_resolution(now, level);
                if (!next) break;
                now = *next;
            }

            DesignConfig dc = design;
            dc.mcmc.seed = derive_seed(seed_, 3, decision_index++);
            const TrialState s = state_at(now, level, eliminated);
            const Decision d = recommend(s, dc);
            eliminated = commit_decision(s, d).eliminated;
            cohort.decision_time = now;
            cohort.action = d.action;
            res.cohorts.push_back(cohort);
            if (d.action == Action::terminate || !d.next_level) {
                res.terminated = true;
                res.duration_days = now;
                break;
            }
            level = *d.next_level;
            open = now;
        }

        if (!res.terminated) {
            const double longest = design.uses_intolerance() ? std::max(w_.dlt, w_.intolerance) : w_.dlt;
            const double end = last_enroll + longest;
            DesignConfig dc = design;
            dc.mcmc.seed = derive_seed(seed_, 3, decision_index++);
            const auto fa = final_analysis(state_at(end, level, eliminated), dc);
            res.selected = fa.mtd;
            res.terminated = fa.eliminated.front();
            res.duration_days = end;
        }
        for (std::size_t i = 0; i < levels_.size(); ++i) {
            if (!sc_.true_mtd || levels_[i] > *sc_.true_mtd) ++res.overdosed;
        }
        return res;
    }

  private:
    TrialState state_at(double now, std::size_t level, const std::vector<bool>& eliminated) const {
        TrialState s(grid_);
        s.clock = now;
        s.current_level = level;
        s.eliminated = eliminated;
        s.patients.reserve(truths_.size());
        for (std::size_t i = 0; i < truths_.size(); ++i)
            s.patients.push_back(observe(truths_[i], levels_[i], enroll_[i], now, w_));
        return s;
    }

    // Earliest time after `now` at which a relevant endpoint of a patient at
    // `level` resolves.
    std::optional<double> next_resolution(double now, std::size_t level) const {
        std::optional<double> best;
        for (std::size_t i = 0; i < truths_.size(); ++i) {
            if (levels_[i] != level) continue;
            for (Endpoint e : {Endpoint::dlt, Endpoint::intolerance}) {
                if (e == Endpoint::intolerance && !cfg_.design.uses_intolerance()) continue;
                const double r = resolution_time(truths_[i], enroll_[i], e, w_);
                if (r > now && (!best || r < *best)) best = r;
            }
        }
        return best;
    }

    const Scenario& sc_;
    const SimConfig& cfg_;
    std::uint64_t seed_;
    EndpointWindows w_;
    DoseGrid grid_;
    std::mt19937_64 arrivals_;
    std::mt19937_64 outcomes_;
    std::vector<PatientTruth> truths_;
    std::vector<std::size_t> levels_;
    std::vector<double> enroll_;
};

inline TrialResult run_trial(const Scenario& sc, const SimConfig& cfg, std::uint64_t seed) {
    sc.validate();
    cfg.validate();
    return TrialSimulation(sc, cfg, seed).run();
}

//---------------------------------------------------------------------------//
// Batches
//---------------------------------------------------------------------------//
struct OperatingCharacteristics {
    std::string scenario;
    std::string design;
    std::size_t replicates = 0;
    std::vector<double> selection_pct;   ///< per dose
    double none_pct = 0.0;               ///< no dose selected
    std::vector<double> mean_patients;   ///< per dose
    double mean_duration_months = 0.0;
    double overdose_pct = 0.0;
    double pcs = 0.0;                    ///< percent selecting the true MTD
    double termination_pct = 0.0;
};

/// Aggregates replicate results; the result does not depend on their order.
inline OperatingCharacteristics aggregate(const std::vector<TrialResult>& results, const Scenario& sc,
                                          DesignKind kind) {
    OperatingCharacteristics oc;
    const std::size_t J = sc.levels();
    oc.scenario = sc.name;
    oc.design = std::string(to_string(kind));
    oc.replicates = results.size();
    oc.selection_pct.assign(J, 0.0);
    oc.mean_patients.assign(J, 0.0);
    if (results.empty()) return oc;
    std::vector<std::size_t> selected(J, 0), patients(J, 0);
    std::size_t none = 0, terminated = 0, overdosed = 0, total = 0;
    double duration = 0.0;
    for (const auto& r : results) {
        if (r.selected) ++selected[*r.selected];
        else ++none;
        if (r.terminated) ++terminated;
        for (std::size_t j = 0; j < J; ++j) patients[j] += r.patients_per_dose[j];
        overdosed += r.overdosed;
        total += r.total_patients();
        duration += r.duration_days;
    }
    const double R = static_cast<double>(results.size());
    for (std::size_t j = 0; j < J; ++j) {
        oc.selection_pct[j] = 100.0 * static_cast<double>(selected[j]) / R;
        oc.mean_patients[j] = static_cast<double>(patients[j]) / R;
    }
    oc.none_pct = 100.0 * static_cast<double>(none) / R;
    oc.termination_pct = 100.0 * static_cast<double>(terminated) / R;
    oc.mean_duration_months = duration / R / kDaysPerMonth;
    oc.overdose_pct = total ? 100.0 * static_cast<double>(overdosed) / static_cast<double>(total) : 0.0;
    oc.pcs = sc.true_mtd ? oc.selection_pct[*sc.true_mtd] : oc.none_pct;
    return oc;
}

/// Runs every replicate; replicate r uses seed derive_seed(master, r), so the
/// output is identical for any thread count.
inline std::vector<TrialResult> run_replicates(const Scenario& sc, const SimConfig& cfg) {
    sc.validate();
    cfg.validate();
    std::vector<TrialResult> results(cfg.n_replicates);
    unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, cfg.n_replicates));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const auto worker = [&] {
        for (;;) {
            const std::size_t r = next.fetch_add(1);
            if (r >= cfg.n_replicates) return;
            try {
                results[r] = TrialSimulation(sc, cfg, derive_seed(cfg.seed, r)).run();
            } catch (const std::exception& e) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    try {
                        throw std::runtime_error("replicate " + std::to_string(r) + " of " + sc.name + ": " + e.what());
                    } catch (...) {
                        failure = std::current_exception();
                    }
                }
                next = cfg.n_replicates;
                return;
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
    return results;
}

inline OperatingCharacteristics run_batch(const Scenario& sc, const SimConfig& cfg) {
    return aggregate(run_replicates(sc, cfg), sc, cfg.design.kind);
}

//---------------------------------------------------------------------------//
// Sensitivity studies
//---------------------------------------------------------------------------//
struct SensitivityVariant {
    std::string label;
    std::optional<std::vector<double>> intolerance_time_weights;
    std::optional<double> accrual_rate;  ///< patients per day
};

struct SensitivityRow {
    SensitivityVariant variant;
    OperatingCharacteristics oc;
};

inline std::vector<SensitivityVariant> weight_variants() {
    const char* labels[] = {"uniform", "later-cycles", "cycle-3", "cycle-1"};
    std::vector<SensitivityVariant> out;
    const auto vectors = sensitivity_weight_vectors();
    for (std::size_t i = 0; i < vectors.size(); ++i) out.push_back({labels[i], vectors[i], std::nullopt});
    return out;
}

/// Accrual from 6 down to 1 patient per month.
inline std::vector<SensitivityVariant> accrual_variants() {
    std::vector<SensitivityVariant> out;
    for (int per_month = 6; per_month >= 1; --per_month)
        out.push_back({std::to_string(per_month) + "/month", std::nullopt, per_month / kDaysPerMonth});
    return out;
}

/// One OC row per variant, all with the same master seed (paired replicates).
inline std::vector<SensitivityRow> sensitivity_suite(const Scenario& base, const SimConfig& cfg,
                                                     const std::vector<SensitivityVariant>& variants) {
    std::vector<SensitivityRow> rows;
    for (const auto& v : variants) {
        Scenario sc = base;
        SimConfig c = cfg;
        if (v.intolerance_time_weights) sc.intolerance_time_weights = *v.intolerance_time_weights;
        if (v.accrual_rate) c.accrual_rate = *v.accrual_rate;
        rows.push_back({v, run_batch(sc, c)});
    }
    return rows;
}

}  // namespace dualdose
