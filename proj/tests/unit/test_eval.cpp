#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mvdet/eval.hpp"
#include "mvdet/rng.hpp"

using namespace mvdet;

namespace {

// O(n^2) pairwise oracle, same integer numerator construction
double auroc_pairwise(const std::vector<double>& benign, const std::vector<double>& adv) {
    double num = 0.0;
    for (double a : adv)
        for (double b : benign) {
            if (a > b) num += 2.0;
            else if (a == b) num += 1.0;
        }
    return num / (2.0 * benign.size() * adv.size());
}

}  // namespace

TEST_CASE("auroc fixtures") {
    // benign {1,3}, adversarial {2,4}, larger = more anomalous -> 0.75
    CHECK(auroc({1, 3}, {2, 4}) == 0.75);
    CHECK(auroc({0, 0, 0}, {1, 1, 1}) == 1.0);     // perfect separation
    CHECK(auroc({5, 5, 5}, {5, 5, 5}) == 0.5);     // all ties
}

TEST_CASE("auroc equals the pairwise oracle exactly, ties included") {
    Rng rng(3);
    for (int t = 0; t < 40; ++t) {
        const int nb = 1 + static_cast<int>(rng.uniform_int(200));
        const int na = 1 + static_cast<int>(rng.uniform_int(200));
        std::vector<double> b(nb), a(na);
        // small integer grid forces plenty of ties
        for (auto& v : b) v = static_cast<double>(rng.uniform_int(12));
        for (auto& v : a) v = static_cast<double>(rng.uniform_int(12)) + rng.uniform_int(2);
        CHECK(auroc(b, a) == auroc_pairwise(b, a));  // bitwise: same numerator/denominator
    }
}

TEST_CASE("roc curve endpoints, monotonicity and area identity") {
    Rng rng(5);
    for (int t = 0; t < 20; ++t) {
        const int nb = 5 + static_cast<int>(rng.uniform_int(80));
        const int na = 5 + static_cast<int>(rng.uniform_int(80));
        std::vector<double> b(nb), a(na);
        for (auto& v : b) v = rng.normal();
        for (auto& v : a) v = rng.normal() + rng.uniform() * 2.0;
        auto pts = roc_curve(b, a);
        CHECK(pts.front() == std::pair<double, double>{0.0, 0.0});
        CHECK(pts.back() == std::pair<double, double>{1.0, 1.0});
        for (std::size_t i = 1; i < pts.size(); ++i) {
            CHECK(pts[i].first >= pts[i - 1].first);
            CHECK(pts[i].second >= pts[i - 1].second);
        }
        CHECK(std::abs(area_under_polyline(pts) - auroc(b, a)) <= 1e-9);
    }
}

TEST_CASE("roc curve 4-point staircase fixture") {
    // benign {1,3}, adv {2,4}: thresholds 4,3,2,1
    auto pts = roc_curve({1, 3}, {2, 4});
    const std::vector<std::pair<double, double>> expect = {
        {0.0, 0.0}, {0.0, 0.5}, {0.5, 0.5}, {0.5, 1.0}, {1.0, 1.0}};
    CHECK(pts == expect);
}

TEST_CASE("adr fixtures") {
    SUBCASE("perfect separation detects everything") {
        std::vector<double> benign(200, 1.0), adv(50, 0.0);
        CHECK(adr_at_tnr(benign, adv, 0.95) == 1.0);
    }
    SUBCASE("identical distributions detect about 1-tnr") {
        Rng rng(7);
        std::vector<double> benign(4000), adv(4000);
        for (auto& v : benign) v = rng.uniform();
        for (auto& v : adv) v = rng.uniform();
        CHECK(adr_at_tnr(benign, adv, 0.95) == doctest::Approx(0.05).epsilon(0.35));
        CHECK(std::abs(adr_at_tnr(benign, adv, 0.95) - 0.05) <= 0.02);
    }
    SUBCASE("achieved TNR within 1/N of target") {
        Rng rng(9);
        std::vector<double> benign(777);
        for (auto& v : benign) v = rng.normal();
        std::vector<double> sorted = benign;
        std::sort(sorted.begin(), sorted.end());
        // recompute the threshold the same way adr does, via public behaviour:
        // adversarial copy of benign -> ADR equals 1 - achieved TNR
        const double adr = adr_at_tnr(benign, benign, 0.95);
        CHECK(std::abs((1.0 - adr) - 0.95) <= 1.0 / 777 + 1e-12);
    }
    SUBCASE("empty sets rejected") {
        CHECK_THROWS_AS(adr_at_tnr({}, {1.0}, 0.95), std::runtime_error);
        CHECK_THROWS_AS(adr_at_tnr({1.0}, {}, 0.95), std::runtime_error);
    }
}

TEST_CASE("mutual information fixtures") {
    Rng rng(11);
    SUBCASE("independence gives near zero") {
        std::vector<double> vals(10000);
        std::vector<int> labels(10000);
        for (int i = 0; i < 10000; ++i) {
            vals[i] = rng.normal();
            labels[i] = static_cast<int>(rng.uniform_int(2));
        }
        CHECK(mutual_information(vals, labels, 20) <= 0.02);
    }
    SUBCASE("predictor equal to a balanced label gives ln 2") {
        std::vector<double> vals;
        std::vector<int> labels;
        for (int i = 0; i < 5000; ++i) {
            labels.push_back(i % 2);
            vals.push_back(static_cast<double>(i % 2));
        }
        CHECK(mutual_information(vals, labels, 20) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    }
    SUBCASE("nonnegative and monotone-transform invariant") {
        std::vector<double> vals(4000);
        std::vector<int> labels(4000);
        for (int i = 0; i < 4000; ++i) {
            labels[i] = static_cast<int>(rng.uniform_int(2));
            vals[i] = rng.normal() + 1.5 * labels[i];
        }
        const double mi = mutual_information(vals, labels, 20);
        CHECK(mi >= 0.0);
        std::vector<double> transformed = vals;
        for (auto& v : transformed) v = std::exp(0.7 * v) + 3.0;  // strictly monotone
        CHECK(std::abs(mutual_information(transformed, labels, 20) - mi) <= 0.05);
    }
}

TEST_CASE("overall system accuracy fixtures") {
    SUBCASE("all succeed, all detected") {
        std::vector<SystemOutcome> o(40, {false, true});
        auto [dnn, sys] = overall_system_accuracy(o);
        CHECK(dnn == 0.0);
        CHECK(sys == 1.0);
    }
    SUBCASE("detector catching nothing leaves the DNN accuracy") {
        std::vector<SystemOutcome> o;
        for (int i = 0; i < 10; ++i) o.push_back({i < 3, false});
        auto [dnn, sys] = overall_system_accuracy(o);
        CHECK(dnn == doctest::Approx(0.3));
        CHECK(sys == doctest::Approx(0.3));
    }
    SUBCASE("detected-or-correct combines") {
        std::vector<SystemOutcome> o = {{true, false}, {false, true}, {false, false}, {true, true}};
        auto [dnn, sys] = overall_system_accuracy(o);
        CHECK(dnn == doctest::Approx(0.5));
        CHECK(sys == doctest::Approx(0.75));
    }
}

TEST_CASE("bootstrap CI brackets the point estimate and excludes 0.5 for separated sets") {
    Rng rng(13);
    std::vector<double> b(300), a(300);
    for (auto& v : b) v = rng.normal();
    for (auto& v : a) v = rng.normal() + 1.5;
    auto res = auc_with_bootstrap_ci(b, a, 17, 500);
    CHECK(res.auc > 0.8);
    CHECK(res.lo <= res.auc);
    CHECK(res.auc <= res.hi);
    CHECK(res.lo > 0.5);  // CI excludes chance
    SUBCASE("deterministic given seed") {
        auto res2 = auc_with_bootstrap_ci(b, a, 17, 500);
        CHECK(res2.lo == res.lo);
        CHECK(res2.hi == res.hi);
    }
}
