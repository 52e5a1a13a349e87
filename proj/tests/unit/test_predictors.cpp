#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "mvdet/predictors.hpp"

using namespace mvdet;

namespace {

VectorXd vec(std::initializer_list<double> xs) {
    VectorXd v(static_cast<int>(xs.size()));
    int i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

VectorXd random_simplex(int n, Rng& rng) {
    VectorXd v(n);
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        v(i) = -std::log(1.0 - rng.uniform());
        s += v(i);
    }
    return v / s;
}

}  // namespace

TEST_CASE("kl divergence fixtures") {
    CHECK(kl_divergence(vec({0.3, 0.7}), vec({0.3, 0.7})) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(kl_divergence(vec({1.0, 0.0}), vec({0.5, 0.5})) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(kl_divergence(vec({0.5, 0.5}), vec({0.75, 0.25})) ==
          doctest::Approx(0.5 * std::log(2.0 / 3.0) + 0.5 * std::log(2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(kl_divergence(vec({1.0}), vec({0.5, 0.5})), std::runtime_error);
}

TEST_CASE("kl matches a direct-summation oracle and is nonnegative") {
    Rng rng(11);
    for (int t = 0; t < 50; ++t) {
        const int n = 2 + static_cast<int>(rng.uniform_int(9));
        VectorXd p = random_simplex(n, rng), q = random_simplex(n, rng);
        double direct = 0.0;
        for (int i = 0; i < n; ++i) direct += p(i) * std::log(p(i) / q(i));
        CHECK(std::abs(kl_divergence(p, q) - direct) <= 1e-10);
        CHECK(kl_divergence(p, q) >= 0.0);
    }
}

TEST_CASE("d1 arithmetic oracle and symmetry") {
    CHECK(euclidean_distance(vec({1, 2}), vec({4, 6})) == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(euclidean_distance(vec({4, 6}), vec({1, 2})) == doctest::Approx(5.0).epsilon(1e-15));
    SUBCASE("triangle inequality spot-check") {
        Rng rng(13);
        for (int t = 0; t < 30; ++t) {
            VectorXd a(3), b(3), c(3);
            for (int i = 0; i < 3; ++i) {
                a(i) = rng.normal();
                b(i) = rng.normal();
                c(i) = rng.normal();
            }
            CHECK(euclidean_distance(a, c) <=
                  euclidean_distance(a, b) + euclidean_distance(b, c) + 1e-12);
        }
    }
}

TEST_CASE("d2 four-term fixture equals 4 ln 2") {
    const VectorXd fz = vec({1.0, 0.0});
    const VectorXd half = vec({0.5, 0.5});
    const double d2 = d2_from_probs(fz, half, half, half, half);
    CHECK(std::abs(d2 - 4.0 * std::log(2.0)) <= 1e-9);
    SUBCASE("identical views give zero and d2 is never negative") {
        CHECK(d2_from_probs(fz, fz, fz, fz, fz) == doctest::Approx(0.0).epsilon(1e-15));
        Rng rng(17);
        for (int t = 0; t < 20; ++t) {
            VectorXd p = random_simplex(3, rng);
            CHECK(d2_from_probs(p, random_simplex(3, rng), random_simplex(3, rng),
                                random_simplex(3, rng), random_simplex(3, rng)) >= 0.0);
        }
    }
}

TEST_CASE("single-component 1-D gmm recovers the Gaussian MLE") {
    std::vector<std::vector<VectorXd>> data(1);
    data[0].push_back(vec({-1.0}));
    data[0].push_back(vec({1.0}));
    auto gmm = fit_gmm(data, 1, 5);
    REQUIRE(gmm.per_class.size() == 1);
    REQUIRE(gmm.per_class[0].comps.size() == 1);
    CHECK(gmm.per_class[0].comps[0].weight == doctest::Approx(1.0));
    CHECK(gmm.per_class[0].comps[0].mean(0) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(gmm.per_class[0].comps[0].var(0) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("gmm log-density: unit Gaussian at its mean") {
    ClassMixture mix;
    GaussComponent c;
    c.weight = 1.0;
    c.mean = vec({0.0});
    c.var = vec({1.0});
    mix.comps.push_back(c);
    CHECK(mix.log_density(vec({0.0})) ==
          doctest::Approx(-0.5 * std::log(2.0 * 3.141592653589793)).epsilon(1e-12));
}

TEST_CASE("gmm log-density matches a brute-force mixture sum") {
    Rng rng(19);
    for (int t = 0; t < 25; ++t) {
        ClassMixture mix;
        const int J = 1 + static_cast<int>(rng.uniform_int(4));
        const int dim = 1 + static_cast<int>(rng.uniform_int(3));
        double wsum = 0.0;
        for (int j = 0; j < J; ++j) {
            GaussComponent c;
            c.weight = 0.2 + rng.uniform();
            wsum += c.weight;
            c.mean = VectorXd(dim);
            c.var = VectorXd(dim);
            for (int d = 0; d < dim; ++d) {
                c.mean(d) = rng.normal();
                c.var(d) = 0.3 + rng.uniform();
            }
            mix.comps.push_back(c);
        }
        for (auto& c : mix.comps) c.weight /= wsum;

        VectorXd x(dim);
        for (int d = 0; d < dim; ++d) x(d) = rng.normal();
        double direct = 0.0;
        for (const auto& c : mix.comps) {
            double dens = c.weight;
            for (int d = 0; d < dim; ++d)
                dens *= std::exp(-0.5 * (x(d) - c.mean(d)) * (x(d) - c.mean(d)) / c.var(d)) /
                        std::sqrt(2.0 * 3.141592653589793 * c.var(d));
            direct += dens;
        }
        CHECK(std::abs(mix.log_density(x) - std::log(direct)) <= 1e-8);
    }
}

TEST_CASE("gmm gradient matches finite differences") {
    Rng rng(23);
    ClassMixture mix;
    for (int j = 0; j < 3; ++j) {
        GaussComponent c;
        c.weight = 1.0 / 3.0;
        c.mean = vec({rng.normal(), rng.normal()});
        c.var = vec({0.5 + rng.uniform(), 0.5 + rng.uniform()});
        mix.comps.push_back(c);
    }
    VectorXd x = vec({0.3, -0.4});
    VectorXd g;
    mix.log_density_grad(x, &g);
    const double h = 1e-6;
    for (int d = 0; d < 2; ++d) {
        VectorXd xp = x, xm = x;
        xp(d) += h;
        xm(d) -= h;
        const double fd = (mix.log_density(xp) - mix.log_density(xm)) / (2 * h);
        CHECK(g(d) == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("fitted per-class weights sum to one and EM log-likelihood is monotone") {
    Rng rng(29);
    std::vector<std::vector<VectorXd>> data(2);
    for (int cls = 0; cls < 2; ++cls)
        for (int i = 0; i < 60; ++i) {
            VectorXd x(2);
            const double cx = cls == 0 ? -2.0 : 2.0;
            x(0) = cx + rng.normal() * (i % 2 ? 0.4 : 1.2);
            x(1) = -cx + rng.normal();
            data[cls].push_back(x);
        }
    auto gmm = fit_gmm(data, 3, 7);
    for (const auto& mix : gmm.per_class) {
        double w = 0.0;
        for (const auto& c : mix.comps) w += c.weight;
        CHECK(w == doctest::Approx(1.0).epsilon(1e-9));
    }
    REQUIRE(gmm.meta.contains("ll_trace"));
    for (const auto& trace : gmm.meta["ll_trace"]) {
        for (std::size_t i = 1; i < trace.size(); ++i)
            CHECK(trace[i].get<double>() >= trace[i - 1].get<double>() - 1e-9);
    }
}

TEST_CASE("fit_gmm rejects a class with too few samples") {
    std::vector<std::vector<VectorXd>> data(1);
    data[0].push_back(vec({1.0}));
    CHECK_THROWS_WITH_AS(fit_gmm(data, 8, 1), doctest::Contains("needs >= 8"), std::runtime_error);
}

TEST_CASE("gmm save/load round-trip") {
    Rng rng(31);
    std::vector<std::vector<VectorXd>> data(2);
    for (int cls = 0; cls < 2; ++cls)
        for (int i = 0; i < 20; ++i)
            data[cls].push_back(vec({rng.normal() + cls * 3.0, rng.normal()}));
    auto gmm = fit_gmm(data, 2, 3);
    save_gmm(gmm, "/tmp/mvdet_test_gmm.json");
    auto loaded = load_gmm("/tmp/mvdet_test_gmm.json");
    VectorXd x = vec({0.5, -0.5});
    CHECK(loaded.per_class[0].log_density(x) ==
          doctest::Approx(gmm.per_class[0].log_density(x)).epsilon(1e-12));
    CHECK(loaded.per_class[1].log_density(x) ==
          doctest::Approx(gmm.per_class[1].log_density(x)).epsilon(1e-12));
}

TEST_CASE("feature store round-trips rows exactly") {
    std::vector<FeatureVector> rows;
    Rng rng(37);
    for (int i = 0; i < 10; ++i) {
        FeatureVector fv;
        fv.d1 = rng.normal() * 10;
        fv.d2 = rng.uniform();
        fv.d3 = -5000.0 * rng.uniform();
        fv.d4 = rng.normal() * 100;
        fv.label_used = static_cast<int>(rng.uniform_int(10));
        fv.true_label = static_cast<int>(rng.uniform_int(10));
        fv.image_id = "cls/" + std::to_string(i) + ".png";
        fv.attack_tag = i % 2 ? "pgd-8" : "benign";
        fv.split = "test";
        fv.seed = rng.u64();
        rows.push_back(fv);
    }
    save_feature_store(rows, "/tmp/mvdet_test_features.tsv");
    auto loaded = load_feature_store("/tmp/mvdet_test_features.tsv");
    REQUIRE(loaded.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(loaded[i].d1 == rows[i].d1);  // %.17g survives the round trip bitwise
        CHECK(loaded[i].d2 == rows[i].d2);
        CHECK(loaded[i].d3 == rows[i].d3);
        CHECK(loaded[i].d4 == rows[i].d4);
        CHECK(loaded[i].image_id == rows[i].image_id);
        CHECK(loaded[i].seed == rows[i].seed);
    }
}
