#pragma once

// Trial-conduct service logic, independent of the HTTP transport. Every
// handler takes and returns JSON and reports failures as ServiceError with
// an HTTP status.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "dualdose/boindc.hpp"
#include "dualdose/document.hpp"
#include "dualdose/json_io.hpp"

namespace dualdose {

class ServiceError : public std::runtime_error {
  public:
    ServiceError(int status, std::string code, const std::string& message, nlohmann::json details = nullptr)
        : std::runtime_error(message), status_(status), code_(std::move(code)), details_(std::move(details)) {}

    int status() const noexcept { return status_; }

    nlohmann::json body() const {
        nlohmann::json j = {{"error", code_}, {"message", what()}};
        if (!details_.is_null()) j["details"] = details_;
        return j;
    }

  private:
    int status_;
    std::string code_;
    nlohmann::json details_;
};

struct ServiceConfig {
    std::filesystem::path data_dir = "dualdose-data";
    std::uint64_t default_seed = 20240601;
    std::size_t max_table_n = 30;
};

/// Boundary table for both endpoints as JSON, shared by the CLI and the API.
inline nlohmann::json boundary_table_json(const DesignConfig& cfg, std::size_t max_n) {
    nlohmann::json out = nlohmann::json::object();
    for (Endpoint e : {Endpoint::dlt, Endpoint::intolerance}) {
        const auto b = boin_boundaries(cfg, e);
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& r : boin_decision_table(b, max_n, cfg.elimination_cutoff, cfg.elimination_min_n)) {
            const auto opt = [](int v) { return v < 0 ? nlohmann::json(nullptr) : nlohmann::json(v); };
            rows.push_back({{"n", r.n},
                            {"escalate_if_at_most", opt(r.escalate_max)},
                            {"deescalate_if_at_least", opt(r.deescalate_min)},
                            {"eliminate_if_at_least", opt(r.eliminate_min)}});
        }
        out[e == Endpoint::dlt ? "dlt" : "intolerance"] = {{"target", b.target},
                                                           {"interval", {b.lower, b.upper}},
                                                           {"lambda_e", b.escalate},
                                                           {"lambda_d", b.deescalate},
                                                           {"rows", rows}};
    }
    return out;
}

class TrialService {
  public:
    explicit TrialService(ServiceConfig cfg) : cfg_(std::move(cfg)), store_(cfg_.data_dir) {}

    const ServiceConfig& config() const noexcept { return cfg_; }
    DocumentStore& store() noexcept { return store_; }

    /// POST /trials. Body: {"id"?, "doses"?, "design"?}.
    nlohmann::json create(const nlohmann::json& body) {
        const auto fields = guard([&] {
            detail::reject_unknown(body, {"id", "doses", "design"}, "");
            TrialDocument doc;
            doc.design = body.contains("design") ? design_from_json(body["design"], "/design") : default_design();
            if (!body.contains("design") || !body["design"].contains("mcmc") || !body["design"]["mcmc"].contains("seed"))
                doc.design.mcmc.seed = cfg_.default_seed;
            std::vector<double> doses = body.contains("doses") ? detail::get_numbers(body["doses"], "/doses")
                                                               : std::vector<double>{1, 2, 3, 4, 5};
            doc.state = TrialState(detail::rethrow_at("/doses", [&] { return DoseGrid(doses); }));
            if (body.contains("id")) {
                doc.id = detail::get_as<std::string>(body["id"], "/id");
                if (!DocumentStore::valid_id(doc.id))
                    throw JsonInputError("/id", "ids use letters, digits, '-' and '_' (at most 64)");
            }
            return doc;
        });
        TrialDocument doc = fields;
        std::lock_guard create_lock(create_mutex_);
        if (doc.id.empty()) doc.id = fresh_id();
        else if (store_.exists(doc.id))
            throw ServiceError(409, "conflict", "trial '" + doc.id + "' already exists");
        doc.version = 1;
        store_.save(doc);
        return to_json(doc);
    }

    /// GET /trials/{id}.
    nlohmann::json get(const std::string& id) const { return to_json(load(id)); }

    /// POST /trials/{id}/patients. Body: {"version", "clock"?, "patients": [...]}.
    nlohmann::json add_patients(const std::string& id, const nlohmann::json& body) {
        return mutate(id, body, [&](TrialDocument& doc) {
            detail::reject_unknown(body, {"version", "clock", "patients"}, "");
            const auto& list = detail::require(body, "patients", "");
            if (!list.is_array() || list.empty()) throw JsonInputError("/patients", "expected a non-empty array");
            std::set<std::string> ids;
            for (const auto& p : doc.state.patients) ids.insert(p.id);
            for (std::size_t k = 0; k < list.size(); ++k) {
                const std::string at = "/patients/" + std::to_string(k);
                PatientRecord p = patient_from_json(list[k], at);
                if (p.id.empty()) p.id = "p" + std::to_string(doc.state.patients.size() + 1);
                if (!ids.insert(p.id).second) throw JsonInputError(at + "/id", "duplicate patient id '" + p.id + "'");
                if (p.level >= doc.state.levels()) throw JsonInputError(at + "/level", "dose level outside the grid");
                doc.state.patients.push_back(std::move(p));
            }
            if (doc.state.patients.size() > doc.design.max_n)
                throw JsonInputError("/patients", "exceeds the maximum sample size of " + std::to_string(doc.design.max_n));
            advance_clock(doc, body);
        });
    }

    /// PATCH /trials/{id}/patients/{pid}. Body: {"version", "clock"?, "dlt"?, "intolerance"?}.
    nlohmann::json patch_patient(const std::string& id, const std::string& pid, const nlohmann::json& body) {
        return mutate(id, body, [&](TrialDocument& doc) {
            detail::reject_unknown(body, {"version", "clock", "dlt", "intolerance"}, "");
            auto it = std::find_if(doc.state.patients.begin(), doc.state.patients.end(),
                                   [&](const PatientRecord& p) { return p.id == pid; });
            if (it == doc.state.patients.end())
                throw ServiceError(404, "not_found", "no patient '" + pid + "' in trial '" + id + "'");
            if (body.contains("dlt")) it->dlt = endpoint_record_from_json(body["dlt"], "/dlt");
            if (body.contains("intolerance")) it->intolerance = endpoint_record_from_json(body["intolerance"], "/intolerance");
            advance_clock(doc, body, &*it);
        });
    }

    /// GET /trials/{id}/recommendation. Never writes.
    nlohmann::json recommendation(const std::string& id) const {
        const TrialDocument doc = load(id);
        return recommendation_for(doc.design, doc.state);
    }

    /// POST /trials/{id}/decisions. Commits the current recommendation to the
    /// decision log and moves the trial. Body: {"version"}.
    nlohmann::json commit(const std::string& id, const nlohmann::json& body) {
        return mutate(id, body, [&](TrialDocument& doc) {
            detail::reject_unknown(body, {"version"}, "");
            if (doc.state.status == TrialStatus::terminated)
                throw ServiceError(409, "conflict", "trial '" + id + "' is terminated");
            DecisionEntry e;
            e.sequence = doc.decisions.size() + 1;
            e.clock = doc.state.clock;
            e.recorded_at = utc_timestamp();
            e.patients = doc.state.patients.size();
            e.decision = recommend(doc.state, doc.design);
            doc.decisions.push_back(std::move(e));
        });
    }

    /// GET /trials/{id}/final. MTD selection on the current data.
    nlohmann::json final_selection(const std::string& id) const {
        const TrialDocument doc = load(id);
        return guard([&] { return to_json(final_analysis(doc.state, doc.design)); });
    }

    /// POST /trials/{id}/whatif. Body: {"clock"?, "patients"?: [...], "updates"?: [{"id", "dlt"?, "intolerance"?}]}.
    /// Applies hypothetical changes to a copy; the stored document is untouched.
    nlohmann::json whatif(const std::string& id, const nlohmann::json& body) const {
        TrialDocument doc = load(id);
        guard([&] {
            detail::reject_unknown(body, {"clock", "patients", "updates"}, "");
            if (body.contains("patients")) {
                const auto& list = body["patients"];
                if (!list.is_array()) throw JsonInputError("/patients", "expected an array");
                for (std::size_t k = 0; k < list.size(); ++k) {
                    PatientRecord p = patient_from_json(list[k], "/patients/" + std::to_string(k));
                    if (p.id.empty()) p.id = "whatif-" + std::to_string(k + 1);
                    doc.state.patients.push_back(std::move(p));
                }
                if (doc.state.patients.size() > doc.design.max_n)
                    throw JsonInputError("/patients", "exceeds the maximum sample size of " + std::to_string(doc.design.max_n));
            }
            if (body.contains("updates")) {
                const auto& list = body["updates"];
                if (!list.is_array()) throw JsonInputError("/updates", "expected an array");
                for (std::size_t k = 0; k < list.size(); ++k) {
                    const std::string at = "/updates/" + std::to_string(k);
                    detail::reject_unknown(list[k], {"id", "dlt", "intolerance"}, at);
                    const auto pid = detail::get_as<std::string>(detail::require(list[k], "id", at), at + "/id");
                    auto it = std::find_if(doc.state.patients.begin(), doc.state.patients.end(),
                                           [&](const PatientRecord& p) { return p.id == pid; });
                    if (it == doc.state.patients.end()) throw JsonInputError(at + "/id", "no patient '" + pid + "'");
                    if (list[k].contains("dlt")) it->dlt = endpoint_record_from_json(list[k]["dlt"], at + "/dlt");
                    if (list[k].contains("intolerance"))
                        it->intolerance = endpoint_record_from_json(list[k]["intolerance"], at + "/intolerance");
                }
            }
            advance_clock(doc, body);
            return 0;
        });
        nlohmann::json out = recommendation_for(doc.design, doc.state);
        out["hypothetical"] = true;
        return out;
    }

    /// GET /designs/boin-dc/table?phiT=&phiR=&n=.
    nlohmann::json boundary_table(std::optional<double> phi_t, std::optional<double> phi_r,
                                  std::optional<std::size_t> max_n) const {
        return guard([&] {
            DesignConfig c = default_design();
            c.kind = DesignKind::boin_dc;
            if (phi_t) c.dlt.target = *phi_t;
            if (phi_r) c.intolerance.target = *phi_r;
            detail::rethrow_at("", [&] {
                c.validate();
                return 0;
            });
            const std::size_t n = max_n.value_or(cfg_.max_table_n);
            if (n == 0 || n > 1000) throw JsonInputError("/n", "table size must lie in 1..1000");
            return boundary_table_json(c, n);
        });
    }

    /// Interim recommendation plus the context a dashboard needs.
    static nlohmann::json recommendation_for(const DesignConfig& design, const TrialState& state) {
        return guard([&] {
            for (std::size_t k = 0; k < state.patients.size(); ++k)
                detail::rethrow_at("/state/patients/" + std::to_string(k), [&] {
                    validate_record(state.patients[k], state.clock, design.windows(), state.levels());
                    return 0;
                });
            nlohmann::json out = to_json(recommend(state, design));
            out["clock"] = state.clock;
            out["patients"] = state.patients.size();
            out["complete"] = state.patients.size() >= design.max_n;
            return out;
        });
    }

  private:
    static DesignConfig default_design() { return DesignConfig{}; }

    template <class F>
    static auto guard(F&& f) -> decltype(f()) {
        try {
            return f();
        } catch (const ServiceError&) {
            throw;
        } catch (const JsonInputError& e) {
            throw ServiceError(422, "invalid", e.what(), {{"field", e.path()}, {"reason", e.detail()}});
        } catch (const InvalidRecord& e) {
            throw ServiceError(422, "invalid", e.what(), {{"field", e.field()}, {"reason", e.what()}});
        } catch (const McmcError& e) {
            throw ServiceError(500, "mcmc_failure", e.what());
        } catch (const DesignError& e) {
            throw ServiceError(422, "invalid", e.what());
        }
    }

    TrialDocument load(const std::string& id) const {
        if (!DocumentStore::valid_id(id) || !store_.exists(id))
            throw ServiceError(404, "not_found", "no trial '" + id + "'");
        auto doc = store_.load(id);
        if (!doc) throw ServiceError(404, "not_found", "no trial '" + id + "'");
        return *doc;
    }

    // Sets the clock from the request or from the latest recorded time; the
    // clock never runs backwards. Validates every record at the new clock.
    static void advance_clock(TrialDocument& doc, const nlohmann::json& body, const PatientRecord* touched = nullptr) {
        double clock = doc.state.clock;
        if (body.contains("clock")) {
            const double c = detail::get_number(body["clock"], "/clock");
            if (c < doc.state.clock) throw JsonInputError("/clock", "clock cannot move backwards");
            clock = c;
        } else {
            for (const auto& p : doc.state.patients) {
                clock = std::max(clock, p.enroll_time);
                for (Endpoint e : {Endpoint::dlt, Endpoint::intolerance})
                    if (p.endpoint(e).status == Outcome::yes)
                        clock = std::max(clock, p.enroll_time + p.endpoint(e).event_time);
            }
        }
        doc.state.clock = clock;
        const auto w = doc.design.windows();
        for (std::size_t k = 0; k < doc.state.patients.size(); ++k) {
            const auto& p = doc.state.patients[k];
            const std::string at = touched ? "" : "/patients/" + std::to_string(k);
            try {
                validate_record(p, clock, w, doc.state.levels());
            } catch (const InvalidRecord& e) {
                if (touched && &p != touched) throw JsonInputError("/clock", "patient '" + p.id + "': " + e.what());
                throw JsonInputError(at + "/" + e.field(), e.what());
            }
        }
    }

    template <class F>
    nlohmann::json mutate(const std::string& id, const nlohmann::json& body, F&& change) {
        if (!DocumentStore::valid_id(id)) throw ServiceError(404, "not_found", "no trial '" + id + "'");
        auto lock = store_.lock_for(id);
        std::lock_guard guard_lock(*lock);
        TrialDocument doc = load(id);
        if (!body.is_object() || !body.contains("version"))
            throw ServiceError(422, "invalid", "version: required for updates", {{"field", "/version"}});
        const auto expected = guard([&] { return detail::get_count(body["version"], "/version"); });
        if (expected != doc.version)
            throw ServiceError(409, "conflict", "document version is " + std::to_string(doc.version) + ", request has " +
                                                    std::to_string(expected),
                               {{"current_version", doc.version}});
        guard([&] {
            change(doc);
            return 0;
        });
        doc.state = replay(doc);
        ++doc.version;
        store_.save(doc);
        return to_json(doc);
    }

    std::string fresh_id() {
        std::random_device rd;
        for (;;) {
            char buf[16];
            std::snprintf(buf, sizeof buf, "trial-%06x", static_cast<unsigned>(rd() & 0xffffffu));
            if (!store_.exists(buf)) return buf;
        }
    }

    ServiceConfig cfg_;
    mutable DocumentStore store_;
    std::mutex create_mutex_;
};

}  // namespace dualdose
