#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "sgne/cournot.hpp"
#include "sgne/errors.hpp"
#include "sgne/sampling.hpp"
#include "support.hpp"

using namespace sgne;

TEST_CASE("batch sizes follow the power rule") {
    const BatchSchedule s{};
    CHECK(batch_size(s, 0) == 1);
    CHECK(batch_size(s, 3) == 16);
    CHECK(batch_size(s, 2999) == 9000000);
    for (std::size_t k = 0; k < 10000; ++k)
        REQUIRE(batch_size(s, k + 1) >= batch_size(s, k));

    // No round-off creep above an exact integer.
    const BatchSchedule cubic{1.0, 1.0, 2.0};
    CHECK(batch_size(cubic, 9) == 1000);
    const BatchSchedule scaled{0.5, 2.0, 1.0};
    CHECK(batch_size(scaled, 1) == 5);  // ceil(0.5 * 9)
}

TEST_CASE("batch schedule validation") {
    CHECK_THROWS_AS(BatchSchedule({0.0, 1.0, 1.0}).validate(), ConfigError);
    CHECK_THROWS_AS(BatchSchedule({1.0, 1.0, 0.0}).validate(), ConfigError);
    CHECK_NOTHROW(BatchSchedule{}.validate());
}

TEST_CASE("vanishing steps") {
    StepSchedule s{1.0, 1.0};
    CHECK(step_at(s, 9) == doctest::Approx(0.1).epsilon(1e-15));
    s.cap = 0.5;
    CHECK(step_at(s, 0) == 0.5);
    CHECK(step_at(s, 1) == 0.5);
    CHECK(step_at(s, 3) == doctest::Approx(0.25));

    // Partial sums of squares stay under gamma0^2 * zeta(2 eta).
    const StepSchedule slow{1.0, 0.6};
    double sum = 0.0;
    for (std::size_t k = 0; k < 1000000; ++k)
        sum += step_at(slow, k) * step_at(slow, k);
    constexpr double zeta_1_2 = 5.59158244117775;
    CHECK(sum < zeta_1_2);
    CHECK(sum > 4.0);

    CHECK_THROWS_AS(StepSchedule({1.0, 0.5}).validate(), ConfigError);
    CHECK_THROWS_AS(StepSchedule({1.0, 1.2}).validate(), ConfigError);
    CHECK_THROWS_AS(StepSchedule({0.0, 0.7}).validate(), ConfigError);
    CHECK_NOTHROW(StepSchedule({1.0, 1.0}).validate());
}

TEST_CASE("streams are pure functions of their keys") {
    const SampleStream a(7, SampleDistribution::normal(7, 0.8, 0.1));
    const SampleStream b(7, SampleDistribution::normal(7, 0.8, 0.1));
    const auto x = a.draw_batch(3, 11, 5);
    const auto y = b.draw_batch(3, 11, 5);
    REQUIRE(x.size() == 5);
    for (std::size_t t = 0; t < 5; ++t)
        CHECK(x[t] == y[t]);
    CHECK(a.draw(3, 11, 2) == x[2]);
    CHECK(a.draw(3, 11, 2, Channel::extra) != x[2]);
    CHECK(a.draw(4, 11, 2) != x[2]);
    CHECK(a.draw(3, 12, 2) != x[2]);
    const SampleStream c(8, SampleDistribution::normal(7, 0.8, 0.1));
    CHECK(c.draw(3, 11, 2) != x[2]);
}

TEST_CASE("different agents are uncorrelated") {
    const SampleStream s(1, SampleDistribution::normal(1, 0.8, 0.1));
    constexpr std::size_t n = 10000;
    std::vector<double> u(n), v(n);
    for (std::size_t t = 0; t < n; ++t) {
        u[t] = s.draw(0, t, 0)[0];
        v[t] = s.draw(1, t, 0)[0];
    }
    const double mu = std::accumulate(u.begin(), u.end(), 0.0) / n;
    const double mv = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double suv = 0, suu = 0, svv = 0;
    for (std::size_t t = 0; t < n; ++t) {
        suv += (u[t] - mu) * (v[t] - mv);
        suu += (u[t] - mu) * (u[t] - mu);
        svv += (v[t] - mv) * (v[t] - mv);
    }
    CHECK(std::abs(suv / std::sqrt(suu * svv)) < 0.05);
}

TEST_CASE("sample mean of demand slopes") {
    const SampleStream s(2024, SampleDistribution::normal(1, 0.8, 0.1));
    constexpr std::size_t n = 100000;
    const auto draws = s.draw_batch(0, 0, n);
    double sum = 0.0;
    for (const auto& d : draws)
        sum += d[0];
    CHECK(std::abs(sum / n - 0.8) < 3.0 * std::sqrt(0.1 / n));
}

TEST_CASE("one-shot batch means have the law of the mean") {
    const SampleStream s(5, SampleDistribution::normal(2, 0.8, 0.1));
    REQUIRE(s.exact_batch_mean());
    constexpr std::size_t trials = 4000, batch = 100;
    double sum = 0, sq = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        const double v = s.draw_batch_mean(0, t, batch)[0];
        sum += v;
        sq += v * v;
    }
    const double mean = sum / trials;
    const double var = sq / trials - mean * mean;
    const double sd_of_mean = std::sqrt(0.1 / batch);
    CHECK(std::abs(mean - 0.8) < 3.0 * sd_of_mean / std::sqrt(trials));
    // Sample variance of 4000 normals is within ~7% (3 sigma) of the truth.
    CHECK(var == doctest::Approx(0.1 / batch).epsilon(0.07));
    // Batch size 1 is a single draw on its own channel.
    CHECK(s.draw_batch_mean(0, 0, 1).size() == 2);
}

TEST_CASE("clamped slopes") {
    const auto d = SampleDistribution::normal(1, 0.8, 0.1, true);
    // Closed form mu Phi(mu/s) + s phi(mu/s), checked by quadrature.
    CHECK(d.mean()[0] == doctest::Approx(0.8005776075719511).epsilon(1e-12));
    const auto wide = SampleDistribution::normal(1, 0.1, 1.0, true);
    CHECK(wide.mean()[0] == doctest::Approx(0.45093533120471474).epsilon(1e-12));

    const SampleStream s(3, wide);
    CHECK_FALSE(s.exact_batch_mean());
    for (const auto& v : s.draw_batch(0, 0, 1000))
        REQUIRE(v[0] >= 0.0);
    // Fallback batch mean equals the average of the explicit draws.
    const auto draws = s.draw_batch(2, 9, 50);
    double sum = 0.0;
    for (const auto& v : draws)
        sum += v[0];
    CHECK(s.draw_batch_mean(2, 9, 50)[0] == doctest::Approx(sum / 50).epsilon(1e-14));
}

TEST_CASE("distribution validation") {
    CHECK_THROWS_AS(SampleDistribution::normal(2, 0.8, -0.1).validate(), ConfigError);
    CHECK(SampleDistribution::normal(2, 0.8, 0.0).degenerate());
    CHECK_FALSE(SampleDistribution::normal(2, 0.8, 0.1).degenerate());
}

TEST_CASE("stochastic error moments") {
    const auto inst = cournot::generate_instance(3, testing::small_params(4, 3));
    const auto game = cournot::make_game(inst);
    std::mt19937_64 rng(1);
    const Eigen::VectorXd x = testing::random_in_box(game, rng);

    SUBCASE("zero variance gives zero error") {
        auto p = testing::small_params(4, 3);
        p.demand_variance = 0.0;
        const auto flat = cournot::make_game(cournot::generate_instance(3, p));
        const SampleStream s(0, flat.distribution());
        CHECK(error_second_moment(flat, x, s, 10, 20) < 1e-24);  // round-off only
    }

    SUBCASE("second moment decays like 1/S") {
        const SampleStream s(11, game.distribution());
        const double m1 = error_second_moment(game, x, s, 1, 1000);
        const double m100 = error_second_moment(game, x, s, 100, 1000);
        CHECK(m100 / m1 >= 1.0 / 300.0);
        CHECK(m100 / m1 <= 3.0 / 100.0);
    }

    SUBCASE("error has zero mean") {
        const SampleStream s(12, game.distribution());
        const auto mom = error_moments(game, x, s, 1, 10000);
        for (Eigen::Index j = 0; j < mom.mean_error.size(); ++j)
            CHECK(std::abs(mom.mean_error[j]) <= 3.0 * mom.error_stddev[j] / std::sqrt(10000.0) + 1e-15);
    }

    SUBCASE("needs an exact oracle") {
        GameDefinition::Oracles o;
        o.sampled = [&](std::size_t i, const Eigen::VectorXd& y, const SamplePoint& xi) {
            return cournot::sampled_gradient(inst, i, y, xi);
        };
        const GameDefinition blind(game.data(), game.distribution(), o);
        const SampleStream s(0, game.distribution());
        CHECK_THROWS_AS(error_second_moment(blind, x, s, 1, 5), UnsupportedOperation);
    }
}
