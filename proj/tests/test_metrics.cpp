#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <json.hpp>

#include "oracles.hpp"
#include "stagematte/metrics.hpp"

using namespace stagematte;
using namespace stagematte::metrics;
using namespace stagematte::test;

namespace {

AlphaMask mask(int w, int h, std::vector<float> v) { return AlphaMask(w, h, std::move(v)); }

}  // namespace

TEST(Metrics, IdenticalMasksScoreZero)
{
    std::mt19937_64 rng(1);
    const AlphaMask m = random_mask(8, 8, rng);
    EXPECT_EQ(mse(m, m), 0.0);
    EXPECT_EQ(sad(m, m), 0.0);
    EXPECT_EQ(grad(m, m), 0.0);
}

TEST(Metrics, OnesVersusZeros)
{
    const AlphaMask one(4, 4, 1.f), zero(4, 4, 0.f);
    EXPECT_EQ(mse(one, zero), 1.0);
    EXPECT_EQ(sad(one, zero), 1.0);
}

TEST(Metrics, TwoByTwoHandCase)
{
    const AlphaMask m = mask(2, 2, {0, 0, 1, 1});
    const AlphaMask g = mask(2, 2, {0, 0.5f, 1, 0.5f});
    EXPECT_DOUBLE_EQ(mse(m, g), (0 + 0.25 + 0 + 0.25) / 4);
    EXPECT_DOUBLE_EQ(sad(m, g), (0 + 0.5 + 0 + 0.5) / 4);
}

TEST(Metrics, GradOfConstantsVanishes)
{
    EXPECT_NEAR(grad(AlphaMask(10, 10, 0.2f), AlphaMask(10, 10, 0.9f)), 0.0, 1e-24);
}

TEST(Metrics, GradStepEdgeMatchesDirectConvolution)
{
    const AlphaMask a = step_edge(16, 7);
    EXPECT_EQ(grad(a, step_edge(16, 7)), 0.0);

    const AlphaMask b = step_edge(16, 9);
    const auto ga = direct_gradient_magnitude(a, 1.4);
    const auto gb = direct_gradient_magnitude(b, 1.4);
    double expected = 0;
    for (std::size_t i = 0; i < ga.size(); ++i) expected += (ga[i] - gb[i]) * (ga[i] - gb[i]);
    expected /= static_cast<double>(ga.size());
    EXPECT_GT(expected, 0.0);
    EXPECT_NEAR(grad(a, b), expected, 1e-12 * expected + 1e-15);
}

TEST(Metrics, GradRandomMasksMatchDirectConvolution)
{
    std::mt19937_64 rng(4);
    const AlphaMask a = random_mask(11, 9, rng), b = random_mask(11, 9, rng);
    const auto ga = direct_gradient_magnitude(a, 1.4), gb = direct_gradient_magnitude(b, 1.4);
    double expected = 0;
    for (std::size_t i = 0; i < ga.size(); ++i) expected += (ga[i] - gb[i]) * (ga[i] - gb[i]);
    expected /= static_cast<double>(ga.size());
    EXPECT_NEAR(grad(a, b), expected, 1e-12);
}

TEST(Metrics, EmptyRegionRejected)
{
    const AlphaMask m(3, 3);
    const Region empty(3, 3, false);
    EXPECT_THROW(mse(m, m, empty), DataError);
    EXPECT_THROW(sad(m, m, empty), DataError);
    EXPECT_THROW(grad(m, m, empty), DataError);
}

TEST(Metrics, SizeMismatchRejected) { EXPECT_THROW(mse(AlphaMask(2, 2), AlphaMask(3, 2)), DimensionError); }

TEST(Metrics, RegionRestrictsToInsidePixels)
{
    const AlphaMask m = mask(2, 1, {1, 0});
    const AlphaMask g = mask(2, 1, {0, 0});
    Region r(2, 1);
    r.inside[1] = 1;
    EXPECT_EQ(mse(m, g, r), 0.0);
    r.inside[0] = 1;
    EXPECT_EQ(mse(m, g, r), 0.5);
}

// Property: mutating M anywhere outside the region never changes any metric.
TEST(MetricsProperty, OutOfRegionMutationInvariance)
{
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> dim(3, 20);
    std::bernoulli_distribution coin(0.4);
    std::uniform_real_distribution<float> u(0.f, 1.f);
    int cases = 0;
    for (int trial = 0; trial < 150; ++trial) {
        const int w = dim(rng), h = dim(rng);
        const AlphaMask m = random_mask(w, h, rng), g = random_mask(w, h, rng);
        Region r(w, h);
        for (auto& v : r.inside) v = coin(rng);
        if (r.count() == 0) r.inside[0] = 1;
        AlphaMask m2 = m;
        for (std::size_t i = 0; i < m2.pixel_count(); ++i)
            if (!r.contains(i)) m2.set_flat(i, u(rng));
        ASSERT_EQ(mse(m, g, r), mse(m2, g, r)) << "trial " << trial;
        ASSERT_EQ(sad(m, g, r), sad(m2, g, r)) << "trial " << trial;
        ASSERT_EQ(grad(m, g, r), grad(m2, g, r)) << "trial " << trial;
        ++cases;
    }
    EXPECT_GE(cases, 100);
}

TEST(MetricsProperty, SymmetricNonNegativeAndMseBelowSad)
{
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        const AlphaMask a = random_mask(7, 6, rng), b = random_mask(7, 6, rng);
        EXPECT_EQ(mse(a, b), mse(b, a));
        EXPECT_EQ(sad(a, b), sad(b, a));
        EXPECT_NEAR(grad(a, b), grad(b, a), 1e-15);
        EXPECT_GE(grad(a, b), 0.0);
        EXPECT_LE(mse(a, b), sad(a, b));
    }
}

TEST(EvaluateDataset, AggregateIsMeanOfSamples)
{
    std::map<std::string, AlphaMask> pred, gt;
    // Per-sample MSE 0.1 and 0.3 from a 10-pixel mask with 1 or 3 wrong pixels.
    AlphaMask a(10, 1, 0.f), b(10, 1, 0.f);
    a.set(0, 0, 1.f);
    for (int i = 0; i < 3; ++i) b.set(i, 0, 1.f);
    pred.emplace("a", a);
    pred.emplace("b", b);
    gt.emplace("a", AlphaMask(10, 1, 0.f));
    gt.emplace("b", AlphaMask(10, 1, 0.f));
    const auto rep = evaluate_dataset(pred, gt);
    ASSERT_EQ(rep.per_sample.size(), 2u);
    EXPECT_NEAR(rep.per_sample[0].mse, 0.1, 1e-12);
    EXPECT_NEAR(rep.per_sample[1].mse, 0.3, 1e-12);
    EXPECT_NEAR(rep.mse, 0.2, 1e-12);
}

TEST(EvaluateDataset, IdMismatchListsMissingIds)
{
    std::map<std::string, AlphaMask> pred{{"x", AlphaMask(2, 2)}}, gt{{"y", AlphaMask(2, 2)}};
    try {
        evaluate_dataset(pred, gt);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("x"), std::string::npos);
        EXPECT_NE(msg.find("y"), std::string::npos);
    }
    EXPECT_THROW(evaluate_dataset({}, {}), DataError);
}

TEST(Display, ScaledConventions)
{
    EXPECT_EQ(format_scaled(0.0004978, kMseScale), "4.978");
    EXPECT_EQ(format_scaled(0.0, kSadScale), "0.000");
}

TEST(Display, TableAndJsonCarryAggregates)
{
    std::map<std::string, AlphaMask> pred{{"s", AlphaMask(2, 2, 1.f)}}, gt{{"s", AlphaMask(2, 2, 0.f)}};
    const auto rep = evaluate_dataset(pred, gt);
    const std::string table = render_table(rep, "t");
    EXPECT_NE(table.find("10000.000"), std::string::npos);
    const auto j = nlohmann::json::parse(render_json(rep));
    EXPECT_EQ(j["mse"].get<double>(), 1.0);
    EXPECT_EQ(j["per_sample"].size(), 1u);
}
