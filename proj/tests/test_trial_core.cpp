#include <random>

#include <gtest/gtest.h>

#include "dualdose/trial_core.hpp"

using namespace dualdose;

namespace {

const EndpointWindows kWindows{21.0, 63.0};

PatientRecord patient(std::size_t level, double enroll, EndpointRecord dlt = {}, EndpointRecord intol = {}) {
    PatientRecord p;
    p.level = level;
    p.enroll_time = enroll;
    p.dlt = dlt;
    p.intolerance = intol;
    return p;
}

// State with `pending` patients enrolled at `now` and `resolved` patients
// whose windows have both elapsed, all at dose 1.
TrialState ratio_state(std::size_t pending, std::size_t resolved) {
    TrialState s(DoseGrid::equally_spaced(5));
    s.clock = 100.0;
    for (std::size_t i = 0; i < resolved; ++i) s.patients.push_back(patient(0, 0.0));
    for (std::size_t i = 0; i < pending; ++i) s.patients.push_back(patient(0, 95.0));
    return s;
}

}  // namespace

TEST(DoseGrid, StandardizesByLargestDose) {
    DoseGrid g({10, 20, 40});
    EXPECT_DOUBLE_EQ(g.standardized(0), 0.25);
    EXPECT_DOUBLE_EQ(g.standardized(2), 1.0);
    EXPECT_THROW(DoseGrid({1, 1, 2}), DesignError);
    EXPECT_THROW(DoseGrid({-1, 2}), DesignError);
    EXPECT_THROW(DoseGrid(std::vector<double>{}), DesignError);
}

TEST(ClassifyPattern, EarlyFollowUpIsBothPending) {
    EXPECT_EQ(classify_pattern(patient(0, 0.0), 5.0, kWindows), MissingPattern::both_pending);
}

TEST(ClassifyPattern, ElapsedDltWindowForcesObservation) {
    const auto p = patient(0, 0.0);
    EXPECT_EQ(classify_pattern(p, 30.0, kWindows), MissingPattern::dlt_observed_intolerance_pending);
    EXPECT_EQ(observed_value(p, Endpoint::dlt, 30.0, kWindows), false);
}

TEST(ClassifyPattern, IntoleranceEventBeforeDltResolves) {
    const auto p = patient(0, 0.0, EndpointRecord::pending(), EndpointRecord::event(8.0));
    EXPECT_EQ(classify_pattern(p, 10.0, kWindows), MissingPattern::dlt_pending_intolerance_observed);
}

TEST(ClassifyPattern, BothWindowsElapsed) {
    EXPECT_EQ(classify_pattern(patient(0, 0.0), 63.0, kWindows), MissingPattern::both_observed);
}

TEST(ClassifyPattern, RandomTimelinesAreConsistentWithWindows) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 20000; ++i) {
        const double t = 80.0 * u(rng);
        EndpointRecord d, r;
        if (u(rng) < 0.3) {
            const double x = kWindows.dlt * u(rng);
            if (x <= t) d = EndpointRecord::event(x);
        }
        if (u(rng) < 0.4) {
            const double x = kWindows.intolerance * u(rng);
            if (x <= t) r = EndpointRecord::event(x);
        }
        const auto p = patient(0, 0.0, d, r);
        ASSERT_NO_THROW(validate_record(p, t, kWindows, 5));
        const auto m = classify_pattern(p, t, kWindows);
        ASSERT_EQ(m, classify_pattern(p, t, kWindows));
        const bool tp = m == MissingPattern::both_pending || m == MissingPattern::dlt_pending_intolerance_observed;
        const bool rp = m == MissingPattern::both_pending || m == MissingPattern::dlt_observed_intolerance_pending;
        if (tp) { ASSERT_LT(t, kWindows.dlt); }
        if (rp) { ASSERT_LT(t, kWindows.intolerance); }
        if (d.status == Outcome::yes) { ASSERT_FALSE(tp); }
        if (t >= kWindows.dlt) { ASSERT_FALSE(tp); }
        if (t >= kWindows.intolerance) { ASSERT_FALSE(rp); }
    }
}

TEST(ValidateRecord, RejectsInconsistentRecords) {
    EXPECT_THROW(validate_record(patient(0, 0.0, EndpointRecord::event(25.0)), 30.0, kWindows, 5), InvalidRecord);
    EXPECT_THROW(validate_record(patient(0, 0.0, EndpointRecord::none()), 10.0, kWindows, 5), InvalidRecord);
    EXPECT_THROW(validate_record(patient(0, 0.0, EndpointRecord::event(12.0)), 10.0, kWindows, 5), InvalidRecord);
    EXPECT_THROW(validate_record(patient(7, 0.0), 10.0, kWindows, 5), InvalidRecord);
    EXPECT_THROW(validate_record(patient(0, 20.0), 10.0, kWindows, 5), InvalidRecord);
    try {
        validate_record(patient(0, 0.0, {}, EndpointRecord::event(70.0)), 80.0, kWindows, 5);
        FAIL();
    } catch (const InvalidRecord& e) {
        EXPECT_EQ(e.field(), "intolerance.time");
    }
}

TEST(SuspensionCheck, RatioAtHalfSuspends) { EXPECT_TRUE(suspension_check(ratio_state(2, 4), kWindows)); }

TEST(SuspensionCheck, RatioBelowHalfContinues) { EXPECT_FALSE(suspension_check(ratio_state(1, 3), kWindows)); }

TEST(SuspensionCheck, NothingResolvedSuspends) { EXPECT_TRUE(suspension_check(ratio_state(3, 0), kWindows)); }

TEST(SuspensionCheck, NoPatientsAtCurrentDoseIsAnError) {
    auto s = ratio_state(2, 2);
    s.current_level = 3;
    EXPECT_THROW(suspension_check(s, kWindows), DesignError);
}

TEST(SuspensionCheck, ScopeSelectsPendingEndpoints) {
    // One patient past the DLT window but inside the intolerance window,
    // two fully resolved.
    TrialState s(DoseGrid::equally_spaced(3));
    s.clock = 100.0;
    s.patients = {patient(0, 0.0), patient(0, 0.0), patient(0, 60.0)};
    EXPECT_TRUE(suspension_check(s, kWindows, 0.5, EndpointScope::both));
    EXPECT_FALSE(suspension_check(s, kWindows, 0.5, EndpointScope::dlt_only));
    EXPECT_FALSE(suspension_check(s, kWindows, 0.5, EndpointScope::all_pending));
    EXPECT_FALSE(suspension_check(s, kWindows, 1.0, EndpointScope::both));
}

TEST(ApplyElimination, EliminatesDoseAndAllHigher) {
    TrialState s(DoseGrid::equally_spaced(5));
    s = apply_elimination(s, {false, false, true, false, false});
    EXPECT_EQ(s.eliminated, (std::vector<bool>{false, false, true, true, true}));
    EXPECT_EQ(s.status, TrialStatus::enrolling);
}

TEST(ApplyElimination, LowestDoseTerminates) {
    TrialState s(DoseGrid::equally_spaced(5));
    s = apply_elimination(s, {true, false, false, false, false});
    EXPECT_EQ(s.status, TrialStatus::terminated);
    EXPECT_EQ(s.eliminated, std::vector<bool>(5, true));
}

TEST(ApplyElimination, NoVerdictsIsIdentity) {
    TrialState s(DoseGrid::equally_spaced(5));
    s.current_level = 2;
    s.clock = 12.0;
    EXPECT_EQ(apply_elimination(s, std::vector<bool>(5, false)), s);
}

TEST(ApplyElimination, UpwardClosedAndMonotoneOverRandomSequences) {
    std::mt19937_64 rng(4);
    std::bernoulli_distribution flip(0.15);
    for (int rep = 0; rep < 2000; ++rep) {
        TrialState s(DoseGrid::equally_spaced(6));
        for (int step = 0; step < 5; ++step) {
            std::vector<bool> v(6);
            for (std::size_t j = 0; j < 6; ++j) v[j] = flip(rng);
            const auto before = s.eliminated;
            s = apply_elimination(s, v);
            for (std::size_t j = 0; j + 1 < 6; ++j)
                if (s.eliminated[j]) { ASSERT_TRUE(s.eliminated[j + 1]); }
            for (std::size_t j = 0; j < 6; ++j)
                if (before[j]) { ASSERT_TRUE(s.eliminated[j]); }
        }
    }
}

TEST(MoveToward, MovesOneLevelAndRespectsFlags) {
    const std::vector<bool> none(5, false);
    EXPECT_EQ(move_toward(1, 4, none), std::make_pair(Action::escalate, std::optional<std::size_t>(2)));
    EXPECT_EQ(move_toward(3, 0, none), std::make_pair(Action::deescalate, std::optional<std::size_t>(2)));
    EXPECT_EQ(move_toward(2, 2, none).first, Action::stay);
    EXPECT_EQ(move_toward(0, 0, none).first, Action::stay);
    EXPECT_EQ(move_toward(4, 4, none).first, Action::stay);
    const std::vector<bool> top{false, false, true, true, true};
    EXPECT_EQ(move_toward(1, 4, top).first, Action::stay);
    EXPECT_EQ(move_toward(2, 4, top), std::make_pair(Action::deescalate, std::optional<std::size_t>(1)));
    EXPECT_EQ(move_toward(0, 3, std::vector<bool>(5, true)).first, Action::terminate);
}

TEST(MoveToward, RandomMovesStayAdmissible) {
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<std::size_t> lvl(0, 5), floor(1, 6);
    for (int rep = 0; rep < 5000; ++rep) {
        const std::size_t f = floor(rng);
        std::vector<bool> elim(6, false);
        for (std::size_t j = f; j < 6; ++j) elim[j] = true;
        const std::size_t cur = lvl(rng);
        const auto [action, next] = move_toward(cur, lvl(rng), elim);
        ASSERT_TRUE(next.has_value());
        ASSERT_FALSE(elim[*next]);
        if (cur < f) {
            ASSERT_LE(*next > cur ? *next - cur : cur - *next, 1u);
        } else {
            ASSERT_EQ(action, Action::deescalate);
            ASSERT_EQ(*next, f - 1);
        }
    }
}

TEST(CommitDecision, SuspendThenResume) {
    TrialState s(DoseGrid::equally_spaced(3));
    Decision d;
    d.action = Action::suspend;
    d.next_level = 0;
    s = commit_decision(s, d);
    EXPECT_EQ(s.status, TrialStatus::suspended);
    d.action = Action::escalate;
    d.next_level = 1;
    s = commit_decision(s, d);
    EXPECT_EQ(s.status, TrialStatus::enrolling);
    EXPECT_EQ(s.current_level, 1u);
}
