#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "fingerpose/evalkit.hpp"
#include "fingerpose/pose.hpp"
#include "fingerpose/rng.hpp"

using namespace fingerpose;

namespace {

EvalRecord rec(double gt_yaw, double u_err = 0.0, double yaw_err = 0.0) {
    EvalRecord r;
    r.gt.yaw = gt_yaw;
    r.pred.yaw = normalize_angle(gt_yaw + yaw_err);
    r.pred.u = u_err;
    return r;
}

} // namespace

TEST_CASE("angular_errors wraps through the cut") {
    const std::vector<double> pred{179.0, 0.0, 30.0, -90.0};
    const std::vector<double> gt{-179.0, 0.0, -30.0, 90.0};
    const std::vector<double> errs = angular_errors(pred, gt);
    REQUIRE(errs.size() == 4);
    CHECK(errs[0] == doctest::Approx(2.0));
    CHECK(errs[1] == 0.0);
    CHECK(errs[2] == doctest::Approx(60.0));
    CHECK(errs[3] == doctest::Approx(180.0));
    for (double e : errs) {
        CHECK(e >= 0.0);
        CHECK(e <= 180.0);
    }
    CHECK_THROWS_AS(angular_errors({1.0}, {}), std::invalid_argument);
}

TEST_CASE("partition_by_yaw filters on the ground-truth yaw") {
    std::vector<EvalRecord> records;
    for (double y : {-170.0, -100.0, -45.0, -10.0, 0.0, 30.0, 45.0, 120.0, 179.0}) {
        records.push_back(rec(y));
    }
    CHECK(partition_by_yaw(records, 45.0).size() == 5);  // boundary included
    CHECK(partition_by_yaw(records, 90.0).size() == 5);
    CHECK(partition_by_yaw(records, 135.0).size() == 7);
    CHECK(partition_by_yaw(records, 180.0).size() == 9);
    CHECK_THROWS_AS(partition_by_yaw(records, 60.0), std::invalid_argument);

    // nesting: each regime contains the tighter ones
    const auto r45 = partition_by_yaw(records, 45.0);
    for (const EvalRecord& r : r45) {
        CHECK(std::fabs(r.gt.yaw) <= 45.0);
    }
}

TEST_CASE("make_report frozen two-record regime") {
    // u errors {+3, -1}: mae 2, rmse sqrt(5), mean 1, sd 2
    std::vector<EvalRecord> records;
    records.push_back(rec(10.0, 3.0));
    records.push_back(rec(-20.0, -1.0));
    const EvalReport rep = make_report(records, {180.0});
    REQUIRE(rep.regimes.size() == 1);
    const RegimeReport& reg = rep.regimes[0];
    CHECK(reg.bound == 180.0);
    CHECK(reg.n == 2);
    const MetricCell& u = reg.cells[0];
    REQUIRE(u.present);
    CHECK(u.mae == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(u.rmse == doctest::Approx(std::sqrt(5.0)).epsilon(1e-12));
    CHECK(u.sd == doctest::Approx(2.0).epsilon(1e-12));
    // all-zero targets collapse to zero cells
    for (int t = 1; t < 5; ++t) {
        CHECK(reg.cells[t].mae == 0.0);
        CHECK(reg.cells[t].rmse == 0.0);
    }
}

TEST_CASE("make_report measures yaw circularly") {
    std::vector<EvalRecord> records;
    records.push_back(rec(179.0, 0.0, 2.0));    // pred -179: signed error +2
    records.push_back(rec(-179.0, 0.0, -2.0));  // pred 179: signed error -2
    const EvalReport rep = make_report(records, {180.0});
    const MetricCell& yaw = rep.regimes[0].cells[2];
    CHECK(yaw.mae == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(yaw.rmse == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(yaw.sd == doctest::Approx(2.0).epsilon(1e-12));  // mean signed error 0
}

TEST_CASE("rmse decomposes into bias and spread") {
    Rng rng(71);
    std::vector<EvalRecord> records;
    for (int i = 0; i < 400; ++i) {
        EvalRecord r;
        r.gt.u = rng.uniform(-100.0, 100.0);
        r.gt.v = rng.uniform(-100.0, 100.0);
        r.gt.yaw = rng.uniform(-180.0, 180.0);
        r.gt.pitch = rng.uniform(-60.0, 60.0);
        r.gt.roll = rng.uniform(-60.0, 60.0);
        r.pred = r.gt;
        r.pred.u += rng.normal(1.0, 3.0);  // deliberate bias on u
        r.pred.v += rng.normal(0.0, 2.0);
        r.pred.yaw = normalize_angle(r.pred.yaw + rng.normal(0.0, 5.0));
        r.pred.pitch += rng.normal(-0.5, 1.0);
        r.pred.roll += rng.normal(0.0, 1.0);
        records.push_back(r);
    }
    const EvalReport rep = make_report(records, {45.0, 90.0, 135.0, 180.0});
    REQUIRE(rep.regimes.size() == 4);
    std::size_t prev_n = 0;
    for (const RegimeReport& reg : rep.regimes) {
        CHECK(reg.n >= prev_n);  // nested regimes grow
        prev_n = reg.n;
        // recompute the mean signed error per target independently
        const std::vector<EvalRecord> subset =
            partition_by_yaw(records, reg.bound);
        REQUIRE(subset.size() == reg.n);
        for (int t = 0; t < 5; ++t) {
            const MetricCell& c = reg.cells[t];
            REQUIRE(c.present);
            double bias = 0.0;
            for (const EvalRecord& r : subset) {
                switch (t) {
                    case 0: bias += r.pred.u - r.gt.u; break;
                    case 1: bias += r.pred.v - r.gt.v; break;
                    case 2: bias += circular_diff(r.pred.yaw, r.gt.yaw); break;
                    case 3: bias += r.pred.pitch - r.gt.pitch; break;
                    default: bias += r.pred.roll - r.gt.roll; break;
                }
            }
            bias /= double(subset.size());
            CHECK(c.rmse * c.rmse ==
                  doctest::Approx(bias * bias + c.sd * c.sd).epsilon(1e-9));
            CHECK(c.mae <= c.rmse + 1e-12);
            CHECK(c.sd <= c.rmse + 1e-12);
        }
    }
    // the u bias shows up in the wide regime
    const MetricCell& u_cell = rep.regimes[3].cells[0];
    CHECK(u_cell.rmse > u_cell.sd);
}

TEST_CASE("empty regimes stay absent") {
    std::vector<EvalRecord> records;
    records.push_back(rec(170.0));
    records.push_back(rec(-150.0));
    const EvalReport rep = make_report(records, {45.0, 180.0});
    CHECK(rep.regimes[0].n == 0);
    for (int t = 0; t < 5; ++t) {
        CHECK(!rep.regimes[0].cells[t].present);
    }
    CHECK(rep.regimes[1].n == 2);
    CHECK(rep.regimes[1].cells[0].present);
}

TEST_CASE("report_csv layout") {
    std::vector<EvalRecord> records;
    records.push_back(rec(10.0, 3.0));
    records.push_back(rec(20.0, -1.0));
    const EvalReport rep = make_report(records, {45.0});
    const std::string csv = report_csv(rep);
    CHECK(csv.rfind("regime,target,mae,rmse,sd\n", 0) == 0);
    CHECK(csv.find("45,u,2,") != std::string::npos);
    CHECK(csv.find("45,yaw,0,0,0\n") != std::string::npos);

    // absent cells keep the row with empty metrics
    const EvalReport none = make_report({}, {45.0});
    const std::string empty_csv = report_csv(none);
    CHECK(empty_csv.find("45,u,,,\n") != std::string::npos);
    CHECK(empty_csv.find("45,roll,,,\n") != std::string::npos);
}

TEST_CASE("report_table renders one block per regime") {
    std::vector<EvalRecord> records;
    records.push_back(rec(10.0, 3.0));
    const EvalReport rep = make_report(records, {45.0, 90.0});
    const std::string table = report_table(rep);
    CHECK(table.find("regime |yaw| <= 45  (n=1)") != std::string::npos);
    CHECK(table.find("regime |yaw| <= 90  (n=1)") != std::string::npos);
    CHECK(table.find("mae") != std::string::npos);
    CHECK(table.find("rmse") != std::string::npos);
    CHECK(table.find("3.0000") != std::string::npos);

    const std::string empty_table = report_table(make_report({}, {45.0}));
    CHECK(empty_table.find("(n=0)") != std::string::npos);
    CHECK(empty_table.find("-") != std::string::npos);
}
