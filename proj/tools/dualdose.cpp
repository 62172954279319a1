// dualdose: simulate, decide, boundaries, sensitivity, serve.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>

#include "dualdose/boindc.hpp"
#include "dualdose/document.hpp"
#include "dualdose/http.hpp"
#include "dualdose/json_io.hpp"
#include "dualdose/service.hpp"
#include "dualdose/simulator.hpp"

using namespace dualdose;

namespace {

std::uint64_t env_seed(std::uint64_t fallback) {
    if (const char* s = std::getenv("DUALDOSE_SEED")) {
        try {
            return std::stoull(s);
        } catch (const std::exception&) {
            throw DesignError(std::string("DUALDOSE_SEED is not an unsigned integer: ") + s);
        }
    }
    return fallback;
}

std::string env_data_dir() {
    const char* d = std::getenv("DUALDOSE_DATA_DIR");
    return d ? d : "dualdose-data";
}

// Design options shared by several subcommands.
struct DesignFlags {
    std::string design = "tite-boin-dc";
    std::string config_file;
    std::optional<double> phi_t, phi_r, window_t, window_r, threshold;
    std::optional<int> burn_in, retained;
    std::optional<std::uint64_t> mcmc_seed;
    bool full_budget = false;

    void add(CLI::App& app, bool reduced_budget_default) {
        app.add_option("--design", design, "tite-dc, tite-boin-dc, dc, boin-dc or boin")
            ->check(CLI::IsMember({"tite-dc", "tite-boin-dc", "dc", "boin-dc", "boin"}));
        app.add_option("--config", config_file, "design configuration JSON (flags override it)")->check(CLI::ExistingFile);
        app.add_option("--phiT", phi_t, "DLT target")->check(CLI::Range(0.0, 1.0));
        app.add_option("--phiR", phi_r, "intolerance target")->check(CLI::Range(0.0, 1.0));
        app.add_option("--dlt-window", window_t, "DLT window, days")->check(CLI::NonNegativeNumber);
        app.add_option("--intolerance-window", window_r, "intolerance window, days")->check(CLI::NonNegativeNumber);
        app.add_option("--suspension-threshold", threshold, "pending/resolved ratio that suspends accrual")
            ->check(CLI::PositiveNumber);
        app.add_option("--burn-in", burn_in, "MCMC burn-in iterations")->check(CLI::NonNegativeNumber);
        app.add_option("--retained", retained, "MCMC retained draws")->check(CLI::PositiveNumber);
        app.add_option("--mcmc-seed", mcmc_seed, "MCMC seed for single decisions");
        if (reduced_budget_default)
            app.add_flag("--full-budget", full_budget, "use the full MCMC budget (1000 burn-in / 2000 retained)");
        reduced_ = reduced_budget_default;
    }

    DesignConfig build() const {
        DesignConfig c;
        if (!config_file.empty()) {
            const std::string text = read_text_file(config_file);
            c = read_document(text, [](const nlohmann::json& j) { return design_from_json(j); });
        } else {
            c = DesignConfig{};
        }
        c.kind = parse_design(design);
        if (reduced_ && !full_budget && config_file.empty()) {
            c.mcmc.burn_in = 500;
            c.mcmc.retained = 1000;
        }
        if (phi_t) c.dlt.target = *phi_t;
        if (phi_r) c.intolerance.target = *phi_r;
        if (window_t) c.dlt.window = *window_t;
        if (window_r) c.intolerance.window = *window_r;
        if (threshold) c.suspension_threshold = *threshold;
        if (burn_in) c.mcmc.burn_in = *burn_in;
        if (retained) c.mcmc.retained = *retained;
        if (mcmc_seed) c.mcmc.seed = *mcmc_seed;
        c.validate();
        return c;
    }

  private:
    bool reduced_ = false;
};

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DesignError("cannot write " + path);
    out << text;
    if (!out) throw DesignError("write failed for " + path);
}

Scenario scenario_arg(const std::string& file, int builtin) {
    if (!file.empty()) return load_scenario(file);
    const auto all = table1_scenarios();
    if (builtin < 1 || builtin > static_cast<int>(all.size()))
        throw DesignError("--table1 must lie in 1.." + std::to_string(all.size()));
    return all[static_cast<std::size_t>(builtin - 1)];
}

std::string markdown_table(const nlohmann::json& table, const char* endpoint) {
    const auto& t = table[endpoint];
    std::ostringstream out;
    out << "### " << endpoint << " (target " << t["target"].get<double>() << ", lambda_e "
        << detail::fixed(t["lambda_e"].get<double>(), 3) << ", lambda_d " << detail::fixed(t["lambda_d"].get<double>(), 3)
        << ")\n\n";
    out << "| n treated | escalate if events <= | de-escalate if events >= | eliminate if events >= |\n";
    out << "|---|---|---|---|\n";
    const auto cell = [](const nlohmann::json& v) { return v.is_null() ? std::string("-") : std::to_string(v.get<int>()); };
    for (const auto& r : t["rows"])
        out << "| " << r["n"].get<int>() << " | " << cell(r["escalate_if_at_most"]) << " | "
            << cell(r["deescalate_if_at_least"]) << " | " << cell(r["eliminate_if_at_least"]) << " |\n";
    return out.str();
}

std::string csv_table(const nlohmann::json& table) {
    std::ostringstream out;
    out << "endpoint,n,escalate_if_at_most,deescalate_if_at_least,eliminate_if_at_least\n";
    const auto cell = [](const nlohmann::json& v) { return v.is_null() ? std::string() : std::to_string(v.get<int>()); };
    for (const char* e : {"dlt", "intolerance"})
        for (const auto& r : table[e]["rows"])
            out << e << ',' << r["n"].get<int>() << ',' << cell(r["escalate_if_at_most"]) << ','
                << cell(r["deescalate_if_at_least"]) << ',' << cell(r["eliminate_if_at_least"]) << '\n';
    return out.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dual-criterion dose finding: simulation, interim decisions and a trial-conduct service"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "operating characteristics of one design under one scenario");
    DesignFlags sim_design;
    sim_design.add(*sim, true);
    std::string sim_scenario, sim_out;
    int sim_builtin = 0;
    std::size_t sim_reps = 1000;
    std::uint64_t sim_seed = 0;
    unsigned sim_threads = 0;
    double sim_accrual = SimConfig{}.accrual_rate;
    auto* scen_opt = sim->add_option("--scenario", sim_scenario, "scenario JSON file")->check(CLI::ExistingFile);
    sim->add_option("--table1", sim_builtin, "built-in scenario 1..11 instead of a file")->excludes(scen_opt);
    sim->add_option("--reps", sim_reps, "replicates")->check(CLI::PositiveNumber);
    auto* seed_opt = sim->add_option("--seed", sim_seed, "master seed (default: DUALDOSE_SEED or 1)");
    sim->add_option("--threads", sim_threads, "worker threads (0: all cores)");
    sim->add_option("--accrual", sim_accrual, "patients per day")->check(CLI::PositiveNumber);
    sim->add_option("--out", sim_out, "write <out>.json and <out>.csv instead of printing JSON");

    // decide
    auto* dec = app.add_subcommand("decide", "one interim decision from a trial document or state");
    DesignFlags dec_design;
    dec_design.add(*dec, false);
    std::string dec_input;
    bool dec_final = false;
    dec->add_option("input", dec_input, "trial document or trial state JSON ('-' for stdin)")->required();
    dec->add_flag("--final", dec_final, "final MTD selection instead of an interim decision");

    // boundaries
    auto* bnd = app.add_subcommand("boundaries", "BOIN decision table for both endpoints");
    double bnd_phi_t = 0.25, bnd_phi_r = 0.5;
    std::size_t bnd_n = 30;
    std::string bnd_format = "markdown";
    bnd->add_option("--phiT", bnd_phi_t, "DLT target")->check(CLI::Range(0.0, 1.0));
    bnd->add_option("--phiR", bnd_phi_r, "intolerance target")->check(CLI::Range(0.0, 1.0));
    bnd->add_option("--n", bnd_n, "largest number treated in the table")->check(CLI::PositiveNumber);
    bnd->add_option("--format", bnd_format, "markdown, csv or json")->check(CLI::IsMember({"markdown", "csv", "json"}));

    // sensitivity
    auto* sen = app.add_subcommand("sensitivity", "event-time weight and accrual-rate robustness studies");
    DesignFlags sen_design;
    sen_design.add(*sen, true);
    std::string sen_scenario, sen_out, sen_study = "both";
    int sen_builtin = 2;
    std::size_t sen_reps = 1000;
    std::uint64_t sen_seed = 0;
    unsigned sen_threads = 0;
    auto* sen_scen_opt = sen->add_option("--scenario", sen_scenario, "scenario JSON file")->check(CLI::ExistingFile);
    sen->add_option("--table1", sen_builtin, "built-in scenario 1..11 (default 2)")->excludes(sen_scen_opt);
    sen->add_option("--study", sen_study, "weights, accrual or both")->check(CLI::IsMember({"weights", "accrual", "both"}));
    sen->add_option("--reps", sen_reps, "replicates per variant")->check(CLI::PositiveNumber);
    auto* sen_seed_opt = sen->add_option("--seed", sen_seed, "master seed (default: DUALDOSE_SEED or 1)");
    sen->add_option("--threads", sen_threads, "worker threads (0: all cores)");
    sen->add_option("--out", sen_out, "write <out>.json and <out>.csv instead of printing JSON");

    // serve
    auto* srv = app.add_subcommand("serve", "HTTP trial-conduct API");
    std::string srv_host = "127.0.0.1", srv_dir;
    int srv_port = 8080;
    srv->add_option("--host", srv_host, "bind address");
    srv->add_option("--port", srv_port, "port")->check(CLI::Range(1, 65535));
    srv->add_option("--data-dir", srv_dir, "document directory (default: DUALDOSE_DATA_DIR or ./dualdose-data)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) {
            SimConfig cfg;
            cfg.design = sim_design.build();
            cfg.n_replicates = sim_reps;
            cfg.seed = seed_opt->count() ? sim_seed : env_seed(1);
            cfg.threads = sim_threads;
            cfg.accrual_rate = sim_accrual;
            const Scenario sc = scenario_arg(sim_scenario, sim_builtin ? sim_builtin : (sim_scenario.empty() ? 1 : 0));
            const auto oc = run_batch(sc, cfg);
            nlohmann::json report = {{"scenario", to_json(sc)},
                                     {"design", to_json(cfg.design)},
                                     {"simulation", {{"replicates", cfg.n_replicates}, {"seed", cfg.seed},
                                                     {"accrual_rate", cfg.accrual_rate}}},
                                     {"operating_characteristics", to_json(oc)}};
            if (sim_out.empty()) {
                std::cout << report.dump(2) << '\n';
            } else {
                write_file(sim_out + ".json", report.dump(2) + "\n");
                write_file(sim_out + ".csv", oc_csv({oc}));
            }
        } else if (*dec) {
            std::string text;
            if (dec_input == "-") {
                std::ostringstream ss;
                ss << std::cin.rdbuf();
                text = ss.str();
            } else {
                text = read_text_file(dec_input);
            }
            const DesignConfig fallback = dec_design.build();
            auto [design, state] = read_document(text, [&](const nlohmann::json& j) { return state_or_document(j, fallback); });
            if (dec_final) {
                std::cout << to_json(final_analysis(state, design)).dump(2) << '\n';
            } else {
                std::cout << TrialService::recommendation_for(design, state).dump(2) << '\n';
            }
        } else if (*bnd) {
            DesignConfig c = DesignConfig{};
            c.kind = DesignKind::boin_dc;
            c.dlt.target = bnd_phi_t;
            c.intolerance.target = bnd_phi_r;
            c.validate();
            const auto table = boundary_table_json(c, bnd_n);
            if (bnd_format == "json") std::cout << table.dump(2) << '\n';
            else if (bnd_format == "csv") std::cout << csv_table(table);
            else std::cout << markdown_table(table, "dlt") << '\n' << markdown_table(table, "intolerance");
        } else if (*sen) {
            SimConfig cfg;
            cfg.design = sen_design.build();
            cfg.n_replicates = sen_reps;
            cfg.seed = sen_seed_opt->count() ? sen_seed : env_seed(1);
            cfg.threads = sen_threads;
            const Scenario sc = scenario_arg(sen_scenario, sen_scenario.empty() ? sen_builtin : 0);
            std::vector<SensitivityVariant> variants;
            if (sen_study != "accrual")
                for (auto& v : weight_variants()) variants.push_back(v);
            if (sen_study != "weights")
                for (auto& v : accrual_variants()) variants.push_back(v);
            const auto rows = sensitivity_suite(sc, cfg, variants);
            nlohmann::json series = nlohmann::json::array();
            std::vector<OperatingCharacteristics> ocs;
            for (const auto& r : rows) {
                nlohmann::json v = {{"label", r.variant.label}, {"operating_characteristics", to_json(r.oc)}};
                if (r.variant.intolerance_time_weights) v["intolerance_time_weights"] = *r.variant.intolerance_time_weights;
                if (r.variant.accrual_rate) v["accrual_rate"] = *r.variant.accrual_rate;
                series.push_back(v);
                auto oc = r.oc;
                oc.scenario = sc.name + " [" + r.variant.label + "]";
                ocs.push_back(oc);
            }
            nlohmann::json report = {{"scenario", to_json(sc)},
                                     {"design", to_json(cfg.design)},
                                     {"simulation", {{"replicates", cfg.n_replicates}, {"seed", cfg.seed}}},
                                     {"variants", series}};
            if (sen_out.empty()) {
                std::cout << report.dump(2) << '\n';
            } else {
                write_file(sen_out + ".json", report.dump(2) + "\n");
                write_file(sen_out + ".csv", oc_csv(ocs));
            }
        } else if (*srv) {
            ServiceConfig sc;
            sc.data_dir = srv_dir.empty() ? env_data_dir() : srv_dir;
            sc.default_seed = env_seed(sc.default_seed);
            TrialService service(sc);
            httplib::Server server;
            register_routes(server, service);
            std::cerr << "serving on http://" << srv_host << ':' << srv_port << " (data: " << sc.data_dir.string() << ")\n";
            if (!server.listen(srv_host, srv_port)) {
                std::cerr << "error: cannot listen on " << srv_host << ':' << srv_port << '\n';
                return 1;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
