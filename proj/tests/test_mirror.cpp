#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "mta/errors.hpp"
#include "mta/mirror.hpp"
#include "testutil.hpp"

using mta::Index;
using mta::Matrix;
using mta::Vector;

namespace {

mta::CoefficientMatrix wrap(const Matrix& B) {
    mta::CoefficientMatrix c;
    c.B = B;
    c.H = static_cast<int>(B.cols());
    c.n_used = 0;
    return c;
}

Vector random_mirror_vector(std::mt19937_64& eng, Index p) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> scale(0.2, 3.0);
    Vector m(p);
    for (Index j = 0; j < p; ++j) m(j) = g(eng) * scale(eng);
    return m;
}

}  // namespace

TEST_CASE("split_data produces a balanced disjoint cover", "[mirror]") {
    SECTION("sizes and disjointness") {
        auto plan = mta::split_data(101, 7);
        REQUIRE(plan.indices_half1.size() == 50);
        REQUIRE(plan.indices_half2.size() == 51);
        std::set<Index> all(plan.indices_half1.begin(), plan.indices_half1.end());
        all.insert(plan.indices_half2.begin(), plan.indices_half2.end());
        REQUIRE(all.size() == 101);
        REQUIRE(*all.begin() == 0);
        REQUIRE(*all.rbegin() == 100);
    }
    SECTION("n=1001 splits 500/501") {
        auto plan = mta::split_data(1001, 3);
        REQUIRE(plan.indices_half1.size() == 500);
        REQUIRE(plan.indices_half2.size() == 501);
    }
    SECTION("n=4 gives two disjoint pairs") {
        auto plan = mta::split_data(4, 11);
        REQUIRE(plan.indices_half1.size() == 2);
        REQUIRE(plan.indices_half2.size() == 2);
    }
    SECTION("deterministic in the seed") {
        auto a = mta::split_data(50, 99);
        auto b = mta::split_data(50, 99);
        REQUIRE(a.indices_half1 == b.indices_half1);
        REQUIRE(a.indices_half2 == b.indices_half2);
        auto c = mta::split_data(50, 100);
        REQUIRE(a.indices_half1 != c.indices_half1);
    }
    SECTION("rejects tiny n") {
        REQUIRE_THROWS_AS(mta::split_data(1, 0), mta::InsufficientSamplesError);
    }
}

TEST_CASE("mirror_statistics is the rowwise inner product", "[mirror]") {
    Matrix B1(1, 2), B2(1, 2);
    B1 << 1, 2;
    B2 << 3, 4;
    REQUIRE(mta::mirror_statistics(wrap(B1), wrap(B2))(0) == 11.0);

    std::mt19937_64 eng(31);
    Matrix B = testutil::gaussian_matrix(5, 4, eng);
    Vector self = mta::mirror_statistics(wrap(B), wrap(B));
    for (Index j = 0; j < 5; ++j)
        REQUIRE(self(j) == Catch::Approx(B.row(j).squaredNorm()).margin(1e-14));

    Vector negated = mta::mirror_statistics(wrap(B), wrap(Matrix(-B)));
    REQUIRE((negated + self).cwiseAbs().maxCoeff() == 0.0);

    Matrix B3 = testutil::gaussian_matrix(5, 3, eng);
    REQUIRE_THROWS_AS(mta::mirror_statistics(wrap(B), wrap(B3)), mta::ShapeError);
}

TEST_CASE("fdp_hat counts both tails with the documented conventions", "[mirror]") {
    Vector m(4);
    m << 3, -2, 1, -4;
    REQUIRE(mta::fdp_hat(m, 1.5) == 2.0);
    REQUIRE(mta::fdp_hat(m, 0.5) == 1.0);

    Vector pos(3);
    pos << 3, 2, 1;
    REQUIRE(mta::fdp_hat(pos, 0.5) == 0.0);

    Vector neg(3);
    neg << -3, -2, -1;
    REQUIRE(std::isinf(mta::fdp_hat(neg, 0.5)));

    // Boundary: a statistic equal to -t counts in the numerator, one equal to
    // +t stays out of the denominator.
    Vector edge(2);
    edge << 2.0, -2.0;
    REQUIRE(std::isinf(mta::fdp_hat(edge, 2.0)));
    Vector edge2(3);
    edge2 << 2.0, -2.0, 3.0;
    REQUIRE(mta::fdp_hat(edge2, 2.0) == 1.0);

    REQUIRE_THROWS_AS(mta::fdp_hat(m, 0.0), mta::ConfigError);
    REQUIRE_THROWS_AS(mta::fdp_hat(m, -1.0), mta::ConfigError);

    REQUIRE(mta::fdp_hat(edge2, 2.0, 1.0) == 2.0);  // numerator offset variant
}

TEST_CASE("fdp_curve evaluates the candidate grid in ascending order", "[mirror]") {
    std::mt19937_64 eng(32);
    Vector m = random_mirror_vector(eng, 40);
    m(5) = 0.0;  // zeros are not candidates
    auto curve = mta::fdp_curve(m);
    REQUIRE(curve.size() == 39);
    for (std::size_t i = 1; i < curve.size(); ++i)
        REQUIRE(curve[i].first > curve[i - 1].first);
    for (const auto& [t, fdp] : curve) REQUIRE(fdp == mta::fdp_hat(m, t));
}

TEST_CASE("select_threshold picks the smallest qualifying candidate", "[mirror]") {
    SECTION("worked example") {
        Vector m(4);
        m << 5, 4, 3, -0.5;
        auto tau = mta::select_threshold(m, 0.5);
        REQUIRE(tau.has_value());
        REQUIRE(*tau == 0.5);
        auto d = mta::decide(m, tau);
        REQUIRE(d.rejected == std::vector<Index>{0, 1, 2});
    }
    SECTION("no positives means no threshold") {
        Vector m(3);
        m << -1, -2, -3;
        REQUIRE(!mta::select_threshold(m, 0.3).has_value());
        REQUIRE(mta::decide(m, std::nullopt).rejected.empty());
    }
    SECTION("q domain") {
        Vector m(3);
        m << 1, 2, 3;
        REQUIRE_THROWS_AS(mta::select_threshold(m, 0.0), mta::ConfigError);
        REQUIRE_THROWS_AS(mta::select_threshold(m, 1.0), mta::ConfigError);
    }
}

TEST_CASE("select_threshold is self-consistent and nested on random vectors",
          "[mirror]") {
    std::mt19937_64 eng(33);
    for (int rep = 0; rep < 300; ++rep) {
        Vector m = random_mirror_vector(eng, 30 + (rep % 60));
        const double q1 = 0.05 + 0.3 * (rep % 7) / 7.0;
        const double q2 = std::min(q1 * 2.0, 0.9);
        auto tau1 = mta::select_threshold(m, q1);
        auto tau2 = mta::select_threshold(m, q2);
        if (tau1) {
            REQUIRE(mta::fdp_hat(m, *tau1) <= q1);
            REQUIRE(tau2.has_value());
            REQUIRE(*tau2 <= *tau1);
            auto r1 = mta::decide(m, tau1).rejected;
            auto r2 = mta::decide(m, tau2).rejected;
            REQUIRE(std::includes(r2.begin(), r2.end(), r1.begin(), r1.end()));
        }
    }
}

TEST_CASE("decide uses a strict threshold and fills theta_hat", "[mirror]") {
    Vector m(4);
    m << 2.0, 1.0, -1.0, 3.0;
    auto d = mta::decide(m, 2.0);
    REQUIRE(d.rejected == std::vector<Index>{3});  // M == tau is not rejected
    REQUIRE(d.theta_hat == std::vector<int>{0, 0, 0, 1});
}

TEST_CASE("mta_procedure is deterministic and finds strong signals", "[mirror]") {
    std::mt19937_64 eng(34);
    const Index n = 240, p = 12;
    Matrix X = testutil::gaussian_matrix(n, p, eng);
    std::normal_distribution<double> g(0.0, 1.0);
    Vector y(n);
    for (Index i = 0; i < n; ++i)
        y(i) = 2.0 * X(i, 0) + 2.0 * X(i, 3) + 0.3 * g(eng);
    mta::Dataset data{y, X, {}};

    auto r1 = mta::mta_procedure(data, 4, 0.25, 777);
    auto r2 = mta::mta_procedure(data, 4, 0.25, 777);
    REQUIRE(r1.mirror.m == r2.mirror.m);
    REQUIRE(r1.decisions.rejected == r2.decisions.rejected);
    REQUIRE(r1.mirror.tau_q == r2.mirror.tau_q);

    REQUIRE(r1.mirror.m.allFinite());
    REQUIRE(r1.mirror.tau_q.has_value());
    const auto& rej = r1.decisions.rejected;
    REQUIRE(std::find(rej.begin(), rej.end(), Index{0}) != rej.end());
    REQUIRE(std::find(rej.begin(), rej.end(), Index{3}) != rej.end());

    auto r3 = mta::mta_procedure(data, 4, 0.25, 778);
    REQUIRE(r1.mirror.m != r3.mirror.m);
}

TEST_CASE("mta_procedure validates its inputs", "[mirror]") {
    std::mt19937_64 eng(35);
    Matrix X = testutil::gaussian_matrix(30, 4, eng);
    Vector y = testutil::gaussian_matrix(30, 1, eng).col(0);
    mta::Dataset data{y, X, {}};
    REQUIRE_THROWS_AS(mta::mta_procedure(data, 10, 0.1, 1),
                      mta::InsufficientSamplesError);
    REQUIRE_THROWS_AS(mta::mta_procedure(data, 4, 1.5, 1), mta::ConfigError);
}

TEST_CASE("mirror statistics of null features are sign-balanced", "[mirror]") {
    // Pure-noise response: every feature is null, so pooled M values should
    // be nearly sign-symmetric across replications.
    std::mt19937_64 eng(36);
    std::normal_distribution<double> g(0.0, 1.0);
    const Index n = 400, p = 16;
    int positive = 0, total = 0;
    for (int rep = 0; rep < 60; ++rep) {
        Matrix X = testutil::gaussian_matrix(n, p, eng);
        Vector y(n);
        for (Index i = 0; i < n; ++i) y(i) = g(eng);
        mta::Dataset data{y, X, {}};
        auto res = mta::mta_procedure(data, 5, 0.1, 1000 + rep);
        for (Index j = 0; j < p; ++j) {
            if (res.mirror.m(j) > 0.0) ++positive;
            ++total;
        }
    }
    const double frac = static_cast<double>(positive) / total;
    REQUIRE(frac > 0.42);
    REQUIRE(frac < 0.58);
}

TEST_CASE("global-null rejections are rare in the median, conservative with offset",
          "[mirror]") {
    std::mt19937_64 eng(37);
    std::normal_distribution<double> g(0.0, 1.0);
    const Index n = 400, p = 20;
    const int reps = 80;
    std::vector<int> counts;
    double fdp_sum_offset = 0.0;
    for (int rep = 0; rep < reps; ++rep) {
        Matrix X = testutil::gaussian_matrix(n, p, eng);
        Vector y(n);
        for (Index i = 0; i < n; ++i) y(i) = g(eng);
        mta::Dataset data{y, X, {}};
        auto plain = mta::mta_procedure(data, 5, 0.1, 5000 + rep);
        counts.push_back(static_cast<int>(plain.decisions.rejected.size()));
        auto conservative =
            mta::mta_procedure(data, 5, 0.1, 5000 + rep, mta::LambdaRule{}, 1.0);
        fdp_sum_offset += conservative.decisions.rejected.empty() ? 0.0 : 1.0;
    }
    std::sort(counts.begin(), counts.end());
    REQUIRE(counts[reps / 2] == 0);  // median rejection count
    // The offset-free variant rejects in roughly a quarter of pure-null runs
    // (two positives beating every negative); the +1 offset removes that.
    REQUIRE(fdp_sum_offset / reps <= 0.05);
}
