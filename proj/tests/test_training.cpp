#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "stagematte/filters.hpp"
#include "stagematte/metrics.hpp"
#include "stagematte/png_io.hpp"
#include "stagematte/stage_sim.hpp"
#include "stagematte/training.hpp"
#include "test_util.hpp"

using namespace stagematte;
using namespace stagematte::train;

namespace {

AlphaMask random_mask(int w, int h, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.f, 1.f);
    std::vector<float> v(static_cast<std::size_t>(w) * h);
    for (float& x : v) x = u(rng);
    return AlphaMask(w, h, std::move(v));
}

// Small 32x32 workspace shared by the loop tests.
const DatasetManifest& tiny_dataset()
{
    static test::TempDir dir;
    static const DatasetManifest m = [] {
        sim::GeneratorConfig g;
        g.width = g.height = 32;
        g.figure.width = g.figure.height = 32;
        g.background.width = g.background.height = 32;
        g.count_base = 6;
        g.count_capture_stage = 3;
        g.count_unlabeled = 3;
        g.count_validation = 2;
        sim::gen_dataset(g, 21, dir.path);
        return DatasetManifest::load(dir.path / "manifest.jsonl");
    }();
    return m;
}

TrainConfig quick_config(int iterations)
{
    TrainConfig c = base_defaults();
    c.batch_size = 4;
    c.iterations = iterations;
    c.lr_initial = 1e-3;
    c.lr_drop_iteration = 3;
    c.lr_after = 5e-4;
    c.seed = 4;
    return c;
}

nn::Checkpoint fresh(const nn::Model& m) { return nn::Checkpoint{m, {}, 0}; }

}  // namespace

TEST(BaseLoss, TrivialCases)
{
    const AlphaMask m = random_mask(9, 7, 1);
    EXPECT_EQ(base_loss(m, m), 0.0);
    EXPECT_NEAR(base_loss(AlphaMask(6, 6, 1.f), AlphaMask(6, 6, 0.f)), 1.0, 1e-12);
}

TEST(BaseLoss, MatchesDirectEvaluation)
{
    const AlphaMask m = random_mask(2, 2, 2), g = random_mask(2, 2, 3);
    Plane d(2, 2);
    double l1 = 0;
    for (int i = 0; i < 4; ++i) {
        d.v[i] = static_cast<double>(m[i]) - g[i];
        l1 += std::fabs(d.v[i]);
    }
    // Clamped correlation at 2x2 collapses every tap onto the two columns.
    const auto gk = gaussian_kernel(kGradientSigma), dk = gaussian_derivative_kernel(kGradientSigma);
    const int r = static_cast<int>(gk.size() / 2);
    double grad_term = 0;
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) {
            double gx = 0, gy = 0;
            for (int j = -r; j <= r; ++j)
                for (int i = -r; i <= r; ++i) {
                    const double v = d.at(std::clamp(x + i, 0, 1), std::clamp(y + j, 0, 1));
                    gx += dk[i + r] * gk[j + r] * v;
                    gy += gk[i + r] * dk[j + r] * v;
                }
            grad_term += std::fabs(gx) + std::fabs(gy);
        }
    EXPECT_NEAR(base_loss(m, g), l1 / 4 + 0.5 * grad_term / 4, 1e-7);
}

TEST(BaseLoss, GradientMatchesFiniteDifferences)
{
    const AlphaMask m = random_mask(6, 5, 4), g = random_mask(6, 5, 5);
    std::vector<float> grad(m.pixel_count(), 0.f);
    base_loss(m.values(), g.values(), 6, 5, grad);
    for (std::size_t i = 0; i < m.pixel_count(); ++i) {
        std::vector<float> p(m.values().begin(), m.values().end()), q = p;
        p[i] += 1e-3f;
        q[i] -= 1e-3f;
        const double num = (base_loss(p, g.values(), 6, 5) - base_loss(q, g.values(), 6, 5)) / 2e-3;
        EXPECT_NEAR(grad[i], num, 2e-3) << i;
    }
}

TEST(ScribbleLoss, HandCaseAndEmptyRejected)
{
    ScribbleMap y(5, 1, Scribble::Unlabeled);
    y.set(0, 0, Scribble::Foreground);
    y.set(2, 0, Scribble::Background);
    y.set(4, 0, Scribble::Foreground);
    const AlphaMask m(5, 1, std::vector<float>{0.8f, 0.3f, 0.f, 0.9f, 0.5f});
    const ScribbleLoss l = scribble_loss(m, y);
    EXPECT_NEAR(l.sum, 0.7, 1e-6);
    EXPECT_EQ(l.count, 3u);
    EXPECT_THROW(scribble_loss(m, ScribbleMap(5, 1, Scribble::Unlabeled)), DataError);
}

TEST(ScribbleLoss, GradientZeroOnUnlabeled)
{
    ScribbleMap y(4, 4, Scribble::Unlabeled);
    y.set(1, 1, Scribble::Foreground);
    y.set(2, 3, Scribble::Background);
    const AlphaMask m = random_mask(4, 4, 6);
    std::vector<float> grad(16, 0.f);
    scribble_loss(m.values(), y, grad);
    for (std::size_t i = 0; i < 16; ++i) {
        if (y[i] == Scribble::Unlabeled) EXPECT_EQ(grad[i], 0.f) << i;
        else EXPECT_NE(grad[i], 0.f) << i;
    }
    AlphaMask m2 = m;
    m2.set(0, 0, 0.123f);
    EXPECT_EQ(scribble_loss(m, y).sum, scribble_loss(m2, y).sum);
}

TEST(ScribbleDownsample, MajorityWithTiesUnlabeled)
{
    ScribbleMap y(4, 2, Scribble::Unlabeled);
    // Left cell: 2 Foreground, 1 Background -> Foreground.
    y.set(0, 0, Scribble::Foreground);
    y.set(1, 0, Scribble::Foreground);
    y.set(0, 1, Scribble::Background);
    // Right cell: 1 each -> tie.
    y.set(2, 0, Scribble::Foreground);
    y.set(3, 1, Scribble::Background);
    const ScribbleMap d = downsample_scribbles(y, 2);
    EXPECT_EQ(d.at(0, 0), Scribble::Foreground);
    EXPECT_EQ(d.at(1, 0), Scribble::Unlabeled);
}

TEST(NoiseAugment, ZeroSigmaIsIdentityAndSigmaBounded)
{
    const Image i(16, 16, 0.5f), b(16, 16, 0.4f);
    const NoisyInput same = augment_noise(i, b, 0.0, 1);
    EXPECT_EQ(same.image, i);
    EXPECT_EQ(same.background, b);
    double max_sigma = 0, sum_sigma = 0;
    const int draws = 2000;
    for (int k = 0; k < draws; ++k) {
        const NoisyInput n = augment_noise(i, b, 0.1, static_cast<std::uint64_t>(k));
        max_sigma = std::max(max_sigma, n.sigma);
        sum_sigma += n.sigma;
    }
    EXPECT_LE(max_sigma, 0.1);
    EXPECT_NEAR(sum_sigma / draws, 0.05, 0.003);
}

TEST(NoiseAugment, EmpiricalStdMatchesDrawnSigma)
{
    const Image i(128, 128, 0.5f), b(128, 128, 0.5f);
    const NoisyInput n = add_noise(i, b, 0.04, 9);
    double sq = 0;
    for (std::size_t k = 0; k < n.image.values().size(); ++k) sq += std::pow(n.image[k] - 0.5, 2);
    EXPECT_NEAR(std::sqrt(sq / static_cast<double>(n.image.values().size())), 0.04, 0.002);
    EXPECT_NE(n.image, n.background);
}

TEST(HybridBatch, ExactCompositionEveryIteration)
{
    TrainConfig c;
    c.batch_size = 16;
    c.base_fraction = 0.8;
    EXPECT_EQ(base_count(16, 0.8), 13);
    EXPECT_EQ(base_count(8, 0.8), 6);
    EXPECT_EQ(base_count(2, 0.25), 1);
    for (std::int64_t t = 0; t < 50; ++t) {
        const auto b = sample_hybrid_batch(10, 4, c, t);
        ASSERT_EQ(b.size(), 16u);
        int scribble = 0;
        for (std::size_t k = 0; k < b.size(); ++k) {
            scribble += b[k].scribble;
            EXPECT_EQ(b[k].scribble, k >= 13);
            EXPECT_LT(b[k].index, b[k].scribble ? 4u : 10u);
        }
        EXPECT_EQ(scribble, 3);
        EXPECT_EQ(b.size(), sample_hybrid_batch(10, 4, c, t).size());
    }
}

TEST(HybridBatch, DegenerateFractions)
{
    TrainConfig c;
    c.batch_size = 8;
    c.base_fraction = 1.0;
    for (const auto& item : sample_hybrid_batch(3, 0, c, 0)) EXPECT_FALSE(item.scribble);
    c.base_fraction = 0.0;
    for (const auto& item : sample_hybrid_batch(0, 3, c, 0)) EXPECT_TRUE(item.scribble);
    EXPECT_THROW(sample_hybrid_batch(3, 0, c, 0), DataError);
}

TEST(HybridBatch, DeterministicPerSeedAndIteration)
{
    TrainConfig c;
    c.seed = 5;
    const auto a = sample_hybrid_batch(20, 5, c, 7), b = sample_hybrid_batch(20, 5, c, 7);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k].index, b[k].index);
}

TEST(Config, ValidationAndJson)
{
    TrainConfig c;
    c.base_fraction = 1.5;
    EXPECT_THROW(c.validate(), UsageError);
    c = finetune_defaults();
    EXPECT_EQ(c.batch_size, 16);
    EXPECT_EQ(c.iterations, 2000);
    EXPECT_EQ(c.lr_initial, 5e-5);
    EXPECT_EQ(c.lr_drop_iteration, 600);
    EXPECT_EQ(c.lr_after, 2.5e-5);
    EXPECT_EQ(c.epochs_coarse, 5);
    EXPECT_EQ(c.epochs_joint, 10);
    const TrainConfig back = train_config_from_json(to_json(c), base_defaults());
    EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Loops, TeacherScheduleLoggedAndReproducible)
{
    const auto base = load_ground_truth_samples(tiny_dataset(), Role::Base);
    const auto scribbled = load_scribble_samples(tiny_dataset());
    ASSERT_EQ(scribbled.size(), 3u);
    TrainConfig c = quick_config(6);
    c.base_fraction = 0.5;
    const auto a = finetune_teacher(fresh(nn::make_teacher(1)), base, scribbled, c);
    const auto b = finetune_teacher(fresh(nn::make_teacher(1)), base, scribbled, c);
    EXPECT_EQ(nn::serialize_checkpoint(a.checkpoint), nn::serialize_checkpoint(b.checkpoint));
    ASSERT_EQ(a.curve.size(), 6u);
    for (const auto& r : a.curve) {
        EXPECT_EQ(r.lr, r.iteration < 3 ? 1e-3 : 5e-4);
        EXPECT_EQ(r.n_base, 2);
        EXPECT_EQ(r.n_scribble, 2);
    }
    EXPECT_EQ(a.checkpoint.iteration, 6);

    test::TempDir dir;
    write_loss_curve(a.curve, dir.path / "loss.tsv");
    std::ifstream in(dir.path / "loss.tsv");
    std::string header, line;
    std::getline(in, header);
    EXPECT_EQ(header.rfind("iteration\tlr", 0), 0u);
    int lines = 0;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::int64_t it;
        double lr;
        ss >> it >> lr;
        EXPECT_EQ(lr, it < 3 ? 1e-3 : 5e-4);
        ++lines;
    }
    EXPECT_EQ(lines, 6);
}

TEST(Loops, ValidationSamplesRejected)
{
    auto base = load_ground_truth_samples(tiny_dataset(), Role::Base);
    EXPECT_THROW(load_ground_truth_samples(tiny_dataset(), Role::Validation), DataError);
    base[0].role = Role::Validation;
    EXPECT_THROW(train_teacher_base(fresh(nn::make_teacher(1)), base, quick_config(1)), DataError);
}

TEST(Loops, WrongCheckpointKindRejected)
{
    const auto base = load_ground_truth_samples(tiny_dataset(), Role::Base);
    EXPECT_THROW(train_student_base(fresh(nn::make_teacher(1)), base, quick_config(1)), UsageError);
}

TEST(Loops, DirectStudentKeepsFrozenRefiner)
{
    const auto base = load_ground_truth_samples(tiny_dataset(), Role::Base);
    const auto scribbled = load_scribble_samples(tiny_dataset());
    const nn::Model s = nn::make_student(3);
    const auto r = finetune_student_direct(fresh(s), base, scribbled, quick_config(3));
    for (const auto& t : r.checkpoint.model.params.tensors) {
        const auto& before = s.params.get(t.name);
        if (t.name.starts_with(nn::kRefinerPrefix)) {
            EXPECT_EQ(t.value, before.value) << t.name;
        } else if (t.name.ends_with("weight")) {
            EXPECT_NE(t.value, before.value) << t.name;
        }
    }
}

TEST(Loops, StudentPhaseAFreezesRefinerThenPhaseBTrainsIt)
{
    const auto base = load_ground_truth_samples(tiny_dataset(), Role::Base);
    std::vector<TrainSample> pseudo(base.begin(), base.begin() + 4);
    const nn::Model s = nn::make_student(3);
    TrainConfig c = quick_config(0);
    c.epochs_coarse = 1;
    c.epochs_joint = 0;
    const auto a = finetune_student(fresh(s), pseudo, c);
    EXPECT_EQ(a.curve.size(), 1u);  // 4 samples, batch 4
    for (const auto& t : a.checkpoint.model.params.tensors)
        if (t.name.starts_with(nn::kRefinerPrefix)) { EXPECT_EQ(t.value, s.params.get(t.name).value) << t.name; }
    c.epochs_joint = 1;
    const auto b = finetune_student(fresh(s), pseudo, c);
    EXPECT_EQ(b.curve.size(), 2u);
    EXPECT_NE(b.checkpoint.model.params.get("refiner.r1.weight").value, s.params.get("refiner.r1.weight").value);
}

TEST(Loops, DistillLabelsOnePerSampleInRange)
{
    std::vector<TrainSample> unl;
    for (const auto& r : tiny_dataset().by_role(Role::Unlabeled))
        unl.push_back({r.id, r.role, load_image(tiny_dataset().resolve(r.image)),
                       load_image(tiny_dataset().resolve(r.background)), {}, {}});
    const auto labels = distill_labels(nn::make_teacher(2), unl);
    ASSERT_EQ(labels.size(), unl.size());
    for (const auto& l : labels)
        for (float v : l.values()) EXPECT_TRUE(v >= 0.f && v <= 1.f);
    EXPECT_THROW(distill_labels(nn::make_student(2), unl), UsageError);
}
