#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "pointprop/label_propagation.hpp"
#include "synthetic.hpp"

using namespace pointprop;
using namespace pointprop::propagation;

namespace {

EmaState seeded(const ProbMap& p, double decay) {
    EmaState s;
    s.average = p;
    s.step = 1;
    s.decay = decay;
    return s;
}

}  // namespace

TEST_CASE("ema update") {
    SUBCASE("half way") {
        const auto s = ema_update(seeded(ProbMap({1, 1}, 0.0), 0.5), ProbMap({1, 1}, 1.0));
        CHECK((*s.average)[0] == 0.5);
        CHECK(s.step == 2);
    }
    SUBCASE("first update adopts the prediction") {
        EmaState s;
        s.decay = 0.3;
        const auto next = ema_update(s, ProbMap({2, 2}, 0.8));
        CHECK(*next.average == ProbMap({2, 2}, 0.8));
        CHECK(next.step == 1);
    }
    SUBCASE("decay one copies the prediction") {
        testkit::Rng rng(1);
        const auto pred = testkit::random_probmap(rng, {5, 4});
        CHECK(*ema_update(seeded(testkit::random_probmap(rng, {5, 4}), 1.0), pred).average == pred);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(ema_update(seeded(ProbMap({2, 2}, 0.1), 0.5), ProbMap({3, 2}, 0.1)), DimensionMismatch);
        CHECK_THROWS_AS(ema_update(seeded(ProbMap({2, 2}, 0.1), 0.0), ProbMap({2, 2}, 0.1)), InvalidArgument);
        CHECK_THROWS_AS(ema_update(seeded(ProbMap({2, 2}, 0.1), 1.5), ProbMap({2, 2}, 0.1)), InvalidArgument);
    }
}

TEST_CASE("ema contracts toward the prediction") {
    testkit::Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const Dims d = testkit::random_dims(rng, 1, 8);
        const double lambda = rng.uniform(0.01, 1.0);
        const auto p = testkit::random_probmap(rng, d);
        const auto pred = testkit::random_probmap(rng, d);
        const auto next = ema_update(seeded(p, lambda), pred);
        CHECK_FALSE(validate(*next.average).has_value());
        for (std::size_t i = 0; i < p.size(); ++i)
            CHECK(std::abs((*next.average)[i] - pred[i]) <= (1 - lambda) * std::abs(p[i] - pred[i]) + 1e-15);
    }
}

TEST_CASE("merge rule") {
    CHECK(merge_pseudo(ProbMap({1, 1}, 0.3), TriLabelMap({1, 1}, 1))[0] == 1.0);
    CHECK(merge_pseudo(ProbMap({1, 1}, 0.3), TriLabelMap({1, 1}, 0))[0] == 0.0);
    CHECK(merge_pseudo(ProbMap({1, 1}, 0.3), TriLabelMap({1, 1}, 2))[0] == 0.3);
    testkit::Rng rng(3);
    const auto ema = testkit::random_probmap(rng, {6, 6});
    CHECK(merge_pseudo(ema, TriLabelMap({6, 6}, label::kIgnored)) == ema);
    CHECK_THROWS_AS(merge_pseudo(ema, TriLabelMap({5, 6}, 0)), DimensionMismatch);

    const auto c = testkit::random_trilabel(rng, {6, 6});
    const auto out = merge_pseudo(ema, c);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (c[i] != label::kIgnored) CHECK(out[i] == static_cast<double>(c[i]));
        else CHECK(out[i] == ema[i]);
    }
}

TEST_CASE("partial cross entropy") {
    testkit::Rng rng(4);
    SUBCASE("uniform prediction gives ln 2") {
        const auto labels = testkit::random_trilabel(rng, {4, 4});
        TriLabelMap sure({4, 4}, 1);
        CHECK(partial_ce_loss(ProbMap({4, 4}, 0.5), sure) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
        if (std::any_of(labels.values().begin(), labels.values().end(), [](auto v) { return v != 2; }))
            CHECK(partial_ce_loss(ProbMap({4, 4}, 0.5), labels) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    }
    SUBCASE("perfect prediction is at the clamp floor") {
        const std::vector<std::uint8_t> l{0, 1, 2, 1};
        const ProbMap pred({2, 2}, std::vector<double>{0.0, 1.0, 0.7, 1.0});
        CHECK(partial_ce_loss(pred, TriLabelMap({2, 2}, l)) <= 1e-6);
    }
    SUBCASE("all ignored") { CHECK_THROWS_AS(partial_ce_loss(ProbMap({2, 2}, 0.5), TriLabelMap({2, 2}, 2)), InvalidArgument); }
    SUBCASE("random 4x4 against the reference sum") {
        for (int trial = 0; trial < 100; ++trial) {
            auto labels = testkit::random_trilabel(rng, {4, 4});
            std::vector<std::uint8_t> v(labels.values().begin(), labels.values().end());
            v[0] = 1;
            labels = TriLabelMap({4, 4}, v);
            const auto pred = testkit::random_probmap(rng, {4, 4});
            CHECK(std::abs(partial_ce_loss(pred, labels) - oracle::partial_ce(pred, labels)) <= 1e-9);
        }
    }
}

TEST_CASE("binary KL") {
    SUBCASE("identical maps give zero") {
        testkit::Rng rng(5);
        const auto p = testkit::random_probmap(rng, {5, 5});
        CHECK(kl_cot_loss(p, p) == 0.0);
    }
    SUBCASE("certain pseudo label against 0.5") {
        // ln 2 per pixel, less the clamp: p = 1 - 1e-7.
        const double p = 1 - kProbClamp;
        const double expected = p * std::log(2 * p) + (1 - p) * std::log(2 * (1 - p));
        CHECK(kl_cot_loss(ProbMap({3, 3}, 1.0), ProbMap({3, 3}, 0.5)) == doctest::Approx(expected).epsilon(1e-12));
        CHECK(std::abs(expected - std::log(2.0)) < 2e-6);
    }
    SUBCASE("values equal after clamping give zero") {
        CHECK(kl_cot_loss(ProbMap({1, 1}, 0.0), ProbMap({1, 1}, 1e-8)) == 0.0);
    }
    SUBCASE("positive-only variant keeps one term") {
        const double p = 0.7, y = 0.4;
        CHECK(kl_cot_loss(ProbMap({1, 1}, p), ProbMap({1, 1}, y), KlVariant::PositiveOnly) ==
              doctest::Approx(p * std::log(p / y)));
    }
    SUBCASE("random maps: non-negative and equal to the reference sum") {
        testkit::Rng rng(6);
        for (int trial = 0; trial < 200; ++trial) {
            const Dims d = testkit::random_dims(rng, 1, 8);
            const auto a = testkit::random_probmap(rng, d), b = testkit::random_probmap(rng, d);
            const double kl = kl_cot_loss(a, b);
            CHECK(kl >= 0.0);
            CHECK(std::abs(kl - oracle::binary_kl(a, b)) <= 1e-9);
        }
    }
    CHECK_THROWS_AS(kl_cot_loss(ProbMap({2, 2}, 0.5), ProbMap({2, 3}, 0.5)), DimensionMismatch);
}

TEST_CASE("colorization loss") {
    testkit::Rng rng(7);
    const auto a = testkit::random_rgb(rng, {4, 3});
    CHECK(colorization_loss(a, a) == 0.0);
    std::vector<double> shifted(a.samples().begin(), a.samples().end());
    for (auto& v : shifted) v = std::clamp(v, 0.0, 0.9);
    std::vector<double> plus = shifted;
    for (auto& v : plus) v += 0.1;
    CHECK(colorization_loss(RgbImage({4, 3}, plus), RgbImage({4, 3}, shifted)) == doctest::Approx(3 * 0.01).epsilon(1e-12));
    for (int trial = 0; trial < 100; ++trial) {
        const Dims d = testkit::random_dims(rng, 1, 8);
        const auto x = testkit::random_rgb(rng, d), y = testkit::random_rgb(rng, d);
        CHECK(colorization_loss(x, y) == doctest::Approx(oracle::colorization(x, y)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(colorization_loss(a, testkit::random_rgb(rng, {3, 4})), DimensionMismatch);
}

TEST_CASE("losses do not depend on pixel order") {
    testkit::Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const Dims d{16, 1};
        const auto pred = testkit::random_probmap(rng, d);
        const auto other = testkit::random_probmap(rng, d);
        std::vector<std::uint8_t> lv(16);
        for (auto& v : lv) v = static_cast<std::uint8_t>(rng.uniform_int(0, 2));
        lv[3] = 0;
        std::vector<std::size_t> perm(16);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng.engine());
        std::vector<double> pp(16), op(16);
        std::vector<std::uint8_t> lp(16);
        for (std::size_t i = 0; i < 16; ++i) {
            pp[i] = pred[perm[i]];
            op[i] = other[perm[i]];
            lp[i] = lv[perm[i]];
        }
        CHECK(partial_ce_loss(ProbMap(d, pp), TriLabelMap(d, lp)) ==
              doctest::Approx(partial_ce_loss(pred, TriLabelMap(d, lv))).epsilon(1e-12));
        CHECK(kl_cot_loss(ProbMap(d, op), ProbMap(d, pp)) == doctest::Approx(kl_cot_loss(other, pred)).epsilon(1e-12));
    }
}

TEST_CASE("schedules") {
    const ScheduleConfig cfg{1.0, 0.1, 100};
    CHECK(schedule_alpha(0, cfg) == 0.0);
    CHECK(schedule_alpha(100, cfg) == 1.0);
    CHECK(schedule_alpha(50, cfg) == 0.25);
    CHECK(schedule_beta(0, cfg) == 0.1);
    CHECK(schedule_beta(100, cfg) == 0.0);
    CHECK_THROWS_AS(schedule_alpha(-1, cfg), InvalidArgument);
    CHECK_THROWS_AS(schedule_beta(100.5, cfg), InvalidArgument);
    CHECK_THROWS_AS(schedule_alpha(0, ScheduleConfig{1.0, 0.1, 0.5}), InvalidArgument);
    double prev_a = -1, prev_b = 2;
    for (int i = 0; i <= 1000; ++i) {
        const double n = 100.0 * i / 1000.0;
        const double a = schedule_alpha(n, cfg), b = schedule_beta(n, cfg);
        CHECK(a >= prev_a);
        CHECK(b <= prev_b);
        prev_a = a;
        prev_b = b;
    }
}

TEST_CASE("total loss") {
    const LossTerms ones{1, 1, 1, 1};
    CHECK(total_loss(ones, ones, 1, 1) == 8.0);
    const LossTerms a{0.3, 0.4, 5, 7}, b{0.1, 0.2, 11, 13};
    CHECK(total_loss(a, b, 0, 0) == doctest::Approx(1.0));
    CHECK(total_loss(a, b, 0.5, 0.25) == doctest::Approx(0.3 + 0.4 + 2.5 + 1.75 + 0.1 + 0.2 + 5.5 + 3.25));
}
