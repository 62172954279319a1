#pragma once

// Persistent trial documents: design, current state snapshot and an
// append-only decision log, stored one JSON file per trial.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualdose/json_io.hpp"

namespace dualdose {

inline constexpr int kDocumentSchemaVersion = 1;

struct DecisionEntry {
    std::size_t sequence = 0;   ///< 1-based position in the log
    double clock = 0.0;         ///< trial clock (days) when committed
    std::string recorded_at;    ///< wall-clock UTC, informational
    std::size_t patients = 0;   ///< patients on record when committed
    Decision decision;
};

struct TrialDocument {
    std::string id;
    std::uint64_t version = 1;  ///< bumped on every write
    DesignConfig design;
    TrialState state;
    std::vector<DecisionEntry> decisions;
};

/// Rebuilds the state from the grid, the patient records and the decision
/// log. Equals `doc.state` for every document written by TrialService.
inline TrialState replay(const TrialDocument& doc) {
    TrialState s(doc.state.grid);
    s.patients = doc.state.patients;
    s.clock = doc.state.clock;
    for (const auto& e : doc.decisions) s = commit_decision(std::move(s), e.decision);
    if (s.status == TrialStatus::enrolling && s.patients.size() >= doc.design.max_n) s.status = TrialStatus::completed;
    return s;
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline nlohmann::json to_json(const DecisionEntry& e) {
    return {{"sequence", e.sequence},
            {"clock", e.clock},
            {"recorded_at", e.recorded_at},
            {"patients", e.patients},
            {"decision", to_json(e.decision)}};
}

inline nlohmann::json to_json(const TrialDocument& d) {
    nlohmann::json log = nlohmann::json::array();
    for (const auto& e : d.decisions) log.push_back(to_json(e));
    return {{"schema", "dualdose/trial-document"},
            {"schema_version", kDocumentSchemaVersion},
            {"id", d.id},
            {"version", d.version},
            {"design", to_json(d.design)},
            {"state", to_json(d.state)},
            {"decisions", log}};
}

inline TrialDocument document_from_json(const nlohmann::json& j) {
    using namespace detail;
    reject_unknown(j, {"schema", "schema_version", "id", "version", "design", "state", "decisions"}, "");
    if (j.contains("schema_version") && get_count(j["schema_version"], "/schema_version") != kDocumentSchemaVersion)
        throw JsonInputError("/schema_version", "unsupported schema version");
    TrialDocument d;
    d.id = get_as<std::string>(require(j, "id", ""), "/id");
    d.version = get_count(require(j, "version", ""), "/version");
    d.design = design_from_json(require(j, "design", ""), "/design");
    d.state = state_from_json(require(j, "state", ""), d.design.windows(), "/state");
    if (j.contains("decisions")) {
        const auto& log = j["decisions"];
        if (!log.is_array()) throw JsonInputError("/decisions", "expected an array");
        for (std::size_t k = 0; k < log.size(); ++k) {
            const std::string at = "/decisions/" + std::to_string(k);
            const auto& e = log[k];
            reject_unknown(e, {"sequence", "clock", "recorded_at", "patients", "decision"}, at);
            DecisionEntry entry;
            entry.sequence = get_count(require(e, "sequence", at), at + "/sequence");
            entry.clock = get_number(require(e, "clock", at), at + "/clock");
            if (e.contains("recorded_at")) entry.recorded_at = get_as<std::string>(e["recorded_at"], at + "/recorded_at");
            if (e.contains("patients")) entry.patients = get_count(e["patients"], at + "/patients");
            entry.decision = decision_from_json(require(e, "decision", at), at + "/decision");
            d.decisions.push_back(std::move(entry));
        }
    }
    return d;
}

/// Accepts either a full trial document or a bare trial state (with the
/// given design). Used by `decide` and the what-if endpoint.
inline std::pair<DesignConfig, TrialState> state_or_document(const nlohmann::json& j, const DesignConfig& fallback) {
    if (j.is_object() && j.contains("state") && j.contains("design")) {
        auto doc = document_from_json(j);
        return {doc.design, doc.state};
    }
    return {fallback, state_from_json(j, fallback.windows())};
}

//---------------------------------------------------------------------------//
// File store
//---------------------------------------------------------------------------//

/// One `<id>.json` file per trial. Writes go to a temporary file that is
/// renamed over the target, so readers always see a complete document.
class DocumentStore {
  public:
    explicit DocumentStore(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    const std::filesystem::path& directory() const noexcept { return dir_; }

    static bool valid_id(const std::string& id) {
        if (id.empty() || id.size() > 64) return false;
        for (char c : id)
            if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')) return false;
        return true;
    }

    bool exists(const std::string& id) const { return valid_id(id) && std::filesystem::exists(path_of(id)); }

    std::optional<TrialDocument> load(const std::string& id) const {
        if (!exists(id)) return std::nullopt;
        const std::string text = read_text_file(path_of(id).string());
        return read_document(text, [](const nlohmann::json& j) { return document_from_json(j); });
    }

    std::optional<std::string> load_text(const std::string& id) const {
        if (!exists(id)) return std::nullopt;
        return read_text_file(path_of(id).string());
    }

    void save(const TrialDocument& doc) const {
        if (!valid_id(doc.id)) throw DesignError("invalid trial id '" + doc.id + "'");
        const auto target = path_of(doc.id);
        auto tmp = target;
        tmp += ".tmp-" + std::to_string(std::random_device{}());
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw std::runtime_error("cannot write " + tmp.string());
            out << to_json(doc).dump(2) << '\n';
            out.flush();
            if (!out) throw std::runtime_error("write failed for " + tmp.string());
        }
        std::filesystem::rename(tmp, target);
    }

    /// Mutex serializing writes to one document.
    std::shared_ptr<std::mutex> lock_for(const std::string& id) {
        std::lock_guard guard(locks_mutex_);
        auto& slot = locks_[id];
        if (!slot) slot = std::make_shared<std::mutex>();
        return slot;
    }

  private:
    std::filesystem::path path_of(const std::string& id) const { return dir_ / (id + ".json"); }

    std::filesystem::path dir_;
    std::mutex locks_mutex_;
    std::map<std::string, std::shared_ptr<std::mutex>> locks_;
};

}  // namespace dualdose
