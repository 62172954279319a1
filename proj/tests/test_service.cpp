#include <filesystem>
#include <random>
#include <thread>

#include <gtest/gtest.h>

#include "dualdose/http.hpp"

using namespace dualdose;
using nlohmann::json;

namespace {

class ServiceTest : public ::testing::Test {
  protected:
    void SetUp() override {
        dir_ = std::filesystem::temp_directory_path() /
               ("dualdose-test-" + std::to_string(std::random_device{}()) + "-" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        ServiceConfig cfg;
        cfg.data_dir = dir_;
        service_ = std::make_unique<TrialService>(cfg);
    }
    void TearDown() override {
        service_.reset();
        std::filesystem::remove_all(dir_);
    }

    int status_of(const std::function<void()>& f) {
        try {
            f();
        } catch (const ServiceError& e) {
            return e.status();
        }
        return 200;
    }

    json cohort(std::size_t level, double t0) {
        json list = json::array();
        for (int k = 0; k < 3; ++k) list.push_back({{"level", level}, {"enroll_time", t0 + k}});
        return list;
    }

    std::string file_text(const std::string& id) { return *service_->store().load_text(id); }

    std::filesystem::path dir_;
    std::unique_ptr<TrialService> service_;
};

}  // namespace

TEST_F(ServiceTest, EmptyTrialStartsAtLowestDose) {
    const json doc = service_->create({{"id", "t1"}});
    EXPECT_EQ(doc["version"], 1);
    EXPECT_EQ(doc["state"]["current_level"], 1);
    const json rec = service_->recommendation("t1");
    EXPECT_EQ(rec["action"], "stay");
    EXPECT_EQ(rec["next_level"], 1);
    EXPECT_EQ(rec["rationale"]["rule"], "starting dose");
}

TEST_F(ServiceTest, GeneratedIdsAreUnique) {
    const auto a = service_->create(json::object())["id"].get<std::string>();
    const auto b = service_->create(json::object())["id"].get<std::string>();
    EXPECT_NE(a, b);
    EXPECT_TRUE(service_->store().exists(a));
}

TEST_F(ServiceTest, ErrorStatuses) {
    service_->create({{"id", "t1"}});
    EXPECT_EQ(status_of([&] { service_->get("missing"); }), 404);
    EXPECT_EQ(status_of([&] { service_->get("../etc"); }), 404);
    EXPECT_EQ(status_of([&] { service_->create({{"id", "t1"}}); }), 409);
    EXPECT_EQ(status_of([&] { service_->create({{"id", "bad id"}}); }), 422);
    EXPECT_EQ(status_of([&] { service_->create({{"doses", {3, 2}}}); }), 422);
    EXPECT_EQ(status_of([&] { service_->add_patients("t1", {{"version", 7}, {"patients", cohort(1, 0)}}); }), 409);
    EXPECT_EQ(status_of([&] { service_->add_patients("t1", {{"patients", cohort(1, 0)}}); }), 422);
    EXPECT_EQ(status_of([&] { service_->add_patients("t1", {{"version", 1}, {"patients", cohort(9, 0)}}); }), 422);
    EXPECT_EQ(status_of([&] { service_->patch_patient("t1", "nobody", {{"version", 1}}); }), 404);
}

TEST_F(ServiceTest, PatchBeyondWindowIsRejected) {
    service_->create({{"id", "t1"}});
    service_->add_patients("t1", {{"version", 1}, {"clock", 30}, {"patients", cohort(1, 0)}});
    const std::string before = file_text("t1");
    try {
        service_->patch_patient("t1", "p1", {{"version", 2}, {"dlt", {{"status", "yes"}, {"time", 25}}}});
        FAIL();
    } catch (const ServiceError& e) {
        EXPECT_EQ(e.status(), 422);
        EXPECT_EQ(e.body()["details"]["field"], "/dlt.time");
    }
    EXPECT_EQ(file_text("t1"), before);
}

TEST_F(ServiceTest, PatchRecordsEventAndBumpsVersion) {
    service_->create({{"id", "t1"}});
    service_->add_patients("t1", {{"version", 1}, {"clock", 5}, {"patients", cohort(1, 0)}});
    const json doc = service_->patch_patient("t1", "p2", {{"version", 2}, {"dlt", {{"status", "yes"}, {"time", 6}}}});
    EXPECT_EQ(doc["version"], 3);
    EXPECT_EQ(doc["state"]["patients"][1]["dlt"]["status"], "yes");
    EXPECT_DOUBLE_EQ(doc["state"]["clock"].get<double>(), 7.0);
}

TEST_F(ServiceTest, ClockNeverRunsBackwards) {
    service_->create({{"id", "t1"}});
    service_->add_patients("t1", {{"version", 1}, {"clock", 40}, {"patients", cohort(1, 0)}});
    EXPECT_EQ(status_of([&] { service_->add_patients("t1", {{"version", 2}, {"clock", 10}, {"patients", cohort(1, 5)}}); }),
              422);
}

TEST_F(ServiceTest, CommitFollowsRecommendationAndReplayMatches) {
    service_->create({{"id", "t1"}, {"design", {{"design", "boin-dc"}}}});
    json patients = cohort(1, 0);
    for (auto& p : patients) {
        p["dlt"] = {{"status", "no"}};
        p["intolerance"] = {{"status", "no"}};
    }
    service_->add_patients("t1", {{"version", 1}, {"clock", 70}, {"patients", patients}});
    const json rec = service_->recommendation("t1");
    EXPECT_EQ(rec["action"], "escalate");
    const json doc = service_->commit("t1", {{"version", 2}});
    EXPECT_EQ(doc["decisions"].size(), 1u);
    EXPECT_EQ(doc["decisions"][0]["decision"]["action"], "escalate");
    EXPECT_EQ(doc["state"]["current_level"], 2);

    const auto stored = service_->store().load("t1");
    ASSERT_TRUE(stored.has_value());
    EXPECT_EQ(replay(*stored), stored->state);
}

TEST_F(ServiceTest, ReplayInvariantOverRandomOperationSequences) {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    service_->create({{"id", "t1"}, {"design", {{"design", "tite-boin-dc"}}}});
    std::uint64_t version = 1;
    double clock = 0.0;
    std::size_t enrolled = 0;
    for (int step = 0; step < 25 && enrolled < 30; ++step) {
        const json doc = service_->get("t1");
        const std::size_t level = doc["state"]["current_level"];
        try {
            if (u(rng) < 0.5) {
                clock += 10.0 * u(rng);
                json p = {{"level", level}, {"enroll_time", clock}};
                service_->add_patients("t1", {{"version", version}, {"clock", clock}, {"patients", {p}}});
                ++enrolled;
            } else {
                service_->commit("t1", {{"version", version}});
            }
            ++version;
        } catch (const ServiceError& e) {
            ASSERT_EQ(e.status(), 409) << e.what();
            break;
        }
        const auto stored = service_->store().load("t1");
        ASSERT_EQ(stored->version, version);
        ASSERT_EQ(replay(*stored), stored->state);
    }
}

TEST_F(ServiceTest, WhatIfLeavesStoredDocumentUntouched) {
    service_->create({{"id", "t1"}, {"design", {{"design", "boin-dc"}}}});
    service_->add_patients("t1", {{"version", 1}, {"clock", 10}, {"patients", cohort(1, 0)}});
    const std::string before = file_text("t1");
    const json out = service_->whatif(
        "t1", {{"clock", 70},
               {"updates",
                {{{"id", "p1"}, {"dlt", {{"status", "yes"}, {"time", 5}}}},
                 {{"id", "p2"}, {"dlt", {{"status", "yes"}, {"time", 6}}}},
                 {{"id", "p3"}, {"dlt", {{"status", "yes"}, {"time", 7}}}}}}});
    EXPECT_EQ(out["hypothetical"], true);
    EXPECT_EQ(out["action"], "terminate");
    EXPECT_EQ(file_text("t1"), before);
    EXPECT_EQ(service_->get("t1")["version"], 2);
}

TEST_F(ServiceTest, FinalSelectionOnEmptyTrialIsNone) {
    service_->create({{"id", "t1"}});
    EXPECT_TRUE(service_->final_selection("t1")["mtd_level"].is_null());
}

TEST_F(ServiceTest, BoundaryTableMatchesDefaults) {
    const json t = service_->boundary_table(std::nullopt, std::nullopt, 6);
    EXPECT_NEAR(t["dlt"]["lambda_e"].get<double>(), 0.197, 5e-4);
    EXPECT_NEAR(t["dlt"]["lambda_d"].get<double>(), 0.298, 5e-4);
    EXPECT_NEAR(t["intolerance"]["lambda_e"].get<double>(), 0.397, 5e-4);
    EXPECT_EQ(t["dlt"]["rows"].size(), 6u);
    EXPECT_EQ(status_of([&] { service_->boundary_table(0.0, std::nullopt, 6); }), 422);
    EXPECT_EQ(status_of([&] { service_->boundary_table(std::nullopt, std::nullopt, 0); }), 422);
}

TEST_F(ServiceTest, HttpRoundTrip) {
    httplib::Server server;
    register_routes(server, *service_);
    const int port = server.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    httplib::Client client("127.0.0.1", port);
    auto created = client.Post("/trials", R"({"id": "h1"})", "application/json");
    ASSERT_TRUE(created);
    EXPECT_EQ(created->status, 201);

    auto rec = client.Get("/trials/h1/recommendation");
    ASSERT_TRUE(rec);
    EXPECT_EQ(rec->status, 200);
    EXPECT_EQ(json::parse(rec->body)["action"], "stay");

    auto missing = client.Get("/trials/nope");
    ASSERT_TRUE(missing);
    EXPECT_EQ(missing->status, 404);
    EXPECT_EQ(json::parse(missing->body)["error"], "not_found");

    auto bad = client.Post("/trials/h1/patients", "{not json", "application/json");
    ASSERT_TRUE(bad);
    EXPECT_EQ(bad->status, 400);

    auto conflict = client.Post("/trials/h1/decisions", R"({"version": 5})", "application/json");
    ASSERT_TRUE(conflict);
    EXPECT_EQ(conflict->status, 409);

    auto table = client.Get("/designs/boin-dc/table?n=4&phiT=0.3");
    ASSERT_TRUE(table);
    EXPECT_EQ(table->status, 200);
    EXPECT_EQ(json::parse(table->body)["dlt"]["rows"].size(), 4u);

    auto bad_n = client.Get("/designs/boin-dc/table?n=abc");
    ASSERT_TRUE(bad_n);
    EXPECT_EQ(bad_n->status, 422);

    server.stop();
    worker.join();
}
