#include <random>

#include <gtest/gtest.h>

#include "dualdose/json_io.hpp"

using namespace dualdose;
using nlohmann::json;

namespace {

const EndpointWindows kWindows{21.0, 63.0};

TrialState sample_state() {
    TrialState s(DoseGrid({10, 20, 40, 80}));
    s.clock = 50.0;
    s.current_level = 1;
    s.eliminated = {false, false, false, true};
    PatientRecord a;
    a.id = "p1";
    a.level = 0;
    a.enroll_time = 0.0;
    a.dlt = EndpointRecord::none();
    a.intolerance = EndpointRecord::event(30.5);
    PatientRecord b;
    b.id = "p2";
    b.level = 1;
    b.enroll_time = 40.0;
    s.patients = {a, b};
    return s;
}

std::string expect_error(const std::string& text) {
    try {
        read_document(text, [](const json& j) { return state_from_json(j, kWindows); });
    } catch (const JsonInputError& e) {
        return e.what();
    }
    ADD_FAILURE() << "no error for " << text;
    return {};
}

}  // namespace

TEST(StateJson, RoundTrip) {
    const auto s = sample_state();
    const json j = to_json(s);
    EXPECT_EQ(j["current_level"], 2);
    EXPECT_EQ(j["patients"][0]["level"], 1);
    EXPECT_EQ(state_from_json(j, kWindows), s);
    EXPECT_EQ(state_from_json(json::parse(j.dump(2)), kWindows), s);
}

TEST(StateJson, RandomStatesRoundTrip) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 300; ++rep) {
        TrialState s(DoseGrid::equally_spaced(5));
        s.clock = 100.0 * u(rng);
        s.current_level = rep % 5;
        for (int k = 0; k < rep % 9; ++k) {
            PatientRecord p;
            p.id = "x" + std::to_string(k);
            p.level = static_cast<std::size_t>(5 * u(rng));
            p.enroll_time = s.clock * u(rng);
            const double follow = s.clock - p.enroll_time;
            if (follow >= kWindows.dlt) p.dlt = EndpointRecord::none();
            else if (u(rng) < 0.3) p.dlt = EndpointRecord::event(follow * u(rng));
            if (follow >= kWindows.intolerance) p.intolerance = EndpointRecord::none();
            else if (u(rng) < 0.3) p.intolerance = EndpointRecord::event(follow * u(rng));
            s.patients.push_back(p);
        }
        ASSERT_EQ(state_from_json(json::parse(to_json(s).dump()), kWindows), s) << "state " << rep;
    }
}

TEST(StateJson, SyntaxErrorCarriesLineAndColumn) {
    const std::string text = "{\n  \"doses\": [1, 2, 3],\n  \"clock\": 4,,\n}";
    try {
        parse_json_text(text);
        FAIL();
    } catch (const JsonInputError& e) {
        EXPECT_EQ(e.line(), 3u);
        EXPECT_GT(e.column(), 0u);
        EXPECT_EQ(std::string(e.what()).rfind("3:", 0), 0u) << e.what();
    }
}

TEST(StateJson, SchemaErrorAnchoredToMember) {
    const std::string what = expect_error("{\n  \"doses\": [1, 2, 3],\n  \"clock\": -4\n}");
    EXPECT_EQ(what.rfind("3:3: /clock:", 0), 0u) << what;
}

TEST(StateJson, UnknownMemberRejected) {
    const std::string what = expect_error("{\"doses\": [1, 2], \"colck\": 3}");
    EXPECT_NE(what.find("/colck: unknown member"), std::string::npos) << what;
}

TEST(StateJson, InvalidPatientNamesField) {
    const std::string text = R"({"doses": [1, 2], "clock": 10,
 "patients": [{"level": 1, "enroll_time": 0, "dlt": {"status": "yes", "time": 12}}]})";
    try {
        read_document(text, [](const json& j) { return state_from_json(j, kWindows); });
        FAIL();
    } catch (const JsonInputError& e) {
        EXPECT_EQ(e.path(), "/patients/0/dlt.time");
    }
}

TEST(StateJson, LevelsAreOneBased) {
    EXPECT_THROW(state_from_json(json::parse(R"({"doses": [1, 2], "current_level": 0})"), kWindows), JsonInputError);
    EXPECT_THROW(state_from_json(json::parse(R"({"doses": [1, 2], "current_level": 3})"), kWindows), JsonInputError);
    EXPECT_EQ(state_from_json(json::parse(R"({"doses": [1, 2], "current_level": 2})"), kWindows).current_level, 1u);
}

TEST(StateJson, EventTimeWithoutEventRejected) {
    EXPECT_THROW(endpoint_record_from_json(json::parse(R"({"status": "no", "time": 3})"), "/x"), JsonInputError);
    EXPECT_THROW(endpoint_record_from_json(json::parse(R"({"status": "maybe"})"), "/x"), JsonInputError);
}

TEST(DesignJson, EmptyObjectGivesDefaults) { EXPECT_EQ(design_from_json(json::object()), DesignConfig{}); }

TEST(DesignJson, RoundTripIsStable) {
    DesignConfig c;
    c.kind = DesignKind::tite_dc;
    c.dlt = {0.3, 28.0};
    c.suspension_scope = EndpointScope::dlt_only;
    c.tie_break = TieBreak::lowest;
    c.prior.slope_mean = 1.0;
    c.mcmc.seed = 9;
    const json once = to_json(c);
    const DesignConfig back = design_from_json(once);
    EXPECT_EQ(to_json(back), once);
    EXPECT_EQ(back.kind, DesignKind::tite_dc);
    EXPECT_EQ(back.interval(Endpoint::dlt), c.interval(Endpoint::dlt));
    EXPECT_EQ(back.prior, c.prior);
    EXPECT_EQ(back.mcmc, c.mcmc);
}

TEST(DesignJson, RejectsUnknownAndInvalid) {
    EXPECT_THROW(design_from_json(json::parse(R"({"mcmc": {"burnin": 3}})")), JsonInputError);
    EXPECT_THROW(design_from_json(json::parse(R"({"design": "crm"})")), JsonInputError);
    EXPECT_THROW(design_from_json(json::parse(R"({"dlt": {"window": 90}})")), JsonInputError);
    EXPECT_THROW(design_from_json(json::parse(R"({"dlt": {"interval": [0.1]}})")), JsonInputError);
    EXPECT_THROW(design_from_json(json::parse(R"({"cohort_size": -1})")), JsonInputError);
    EXPECT_NO_THROW(design_from_json(json::parse(R"({"dlt": {"window": 90}, "allow_long_dlt_window": true})")));
}

TEST(DecisionJson, RoundTrip) {
    Decision d;
    d.action = Action::deescalate;
    d.next_level = 0;
    d.eliminated = {false, true};
    d.rationale = {{"binding", "dlt"}};
    const Decision back = decision_from_json(to_json(d));
    EXPECT_EQ(back.action, d.action);
    EXPECT_EQ(back.next_level, d.next_level);
    EXPECT_EQ(back.eliminated, d.eliminated);
    EXPECT_EQ(back.rationale, d.rationale);
    EXPECT_EQ(to_json(d)["next_level"], 1);
}

TEST(ScenarioJson, RoundTripEveryBuiltIn) {
    for (const auto& s : table1_scenarios()) {
        const Scenario back = scenario_from_json(json::parse(to_json(s).dump()));
        EXPECT_EQ(back.dlt_probs, s.dlt_probs);
        EXPECT_EQ(back.intolerance_probs, s.intolerance_probs);
        EXPECT_EQ(back.true_mtd, s.true_mtd);
        EXPECT_EQ(back.name, s.name);
    }
}

TEST(ScenarioJson, ErrorsPointAtOffendingEntry) {
    const std::string text = "{\n \"name\": \"x\",\n \"dlt\": [0.1, 0.05],\n \"intolerance\": [0.1, 0.2]\n}";
    try {
        read_document(text, [](const json& j) { return scenario_from_json(j); });
        FAIL();
    } catch (const JsonInputError& e) {
        EXPECT_EQ(e.path(), "/dlt/1");
        EXPECT_EQ(e.line(), 3u);
    }
    EXPECT_THROW(scenario_from_json(json::parse(R"({"name": "x", "dlt": [0.1], "intolerance": [0.1, 0.2]})")),
                 JsonInputError);
    EXPECT_THROW(scenario_from_json(json::parse(
                     R"({"name": "x", "dlt": [0.1], "intolerance": [0.1], "intolerance_time_weights": [0.5, 0.4]})")),
                 JsonInputError);
}

TEST(OcCsv, LayoutHasTwoRowsPerDesign) {
    OperatingCharacteristics oc;
    oc.scenario = "s";
    oc.design = "boin";
    oc.selection_pct = {10, 90};
    oc.mean_patients = {12, 18};
    oc.mean_duration_months = 14.25;
    oc.overdose_pct = 3.04;
    EXPECT_EQ(oc_csv({oc}),
              "scenario,design,quantity,d1,d2,none,duration_months,overdose_pct\n"
              "s,boin,selection_pct,10.0,90.0,0.0,,\n"
              "s,boin,patients,12.0,18.0,,14.2,3.0\n");
}
