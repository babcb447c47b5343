#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "grad_check.hpp"
#include "stagematte/nn/optim.hpp"
#include "test_util.hpp"

using namespace stagematte;
using namespace stagematte::nn;

namespace {

Image random_image(int w, int h, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.f, 1.f);
    std::vector<float> v(static_cast<std::size_t>(w) * h * 3);
    for (float& x : v) x = u(rng);
    return Image(w, h, std::move(v));
}

template <typename T>
Tensor<T> random_tensor(int c, int h, int w, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    Tensor<T> t(c, h, w);
    for (T& v : t.data) v = static_cast<T>(n(rng));
    return t;
}

void zero_prefix(ParamSet<float>& p, const std::string& prefix)
{
    for (auto& t : p.tensors)
        if (t.name.starts_with(prefix + ".")) std::fill(t.value.begin(), t.value.end(), 0.f);
}

}  // namespace

TEST(Init, DeterministicWithZeroBiasesAndHeScale)
{
    const auto a = init_params(default_teacher_arch(), "t", 5);
    EXPECT_EQ(a, init_params(default_teacher_arch(), "t", 5));
    EXPECT_NE(a, init_params(default_teacher_arch(), "t", 6));
    for (const auto& t : a.tensors) {
        if (t.name.ends_with("bias")) {
            for (float v : t.value) EXPECT_EQ(v, 0.f) << t.name;
            continue;
        }
        const double fan_in = static_cast<double>(t.shape[1]) * t.shape[2] * t.shape[3];
        double sq = 0;
        for (float v : t.value) sq += static_cast<double>(v) * v;
        const double var = sq / static_cast<double>(t.value.size());
        // Only large tensors give a tight estimate.
        if (t.value.size() >= 4000) { EXPECT_NEAR(var / (2.0 / fan_in), 1.0, 0.1) << t.name; }
    }
}

TEST(Forward, ZeroWeightsGiveHalf)
{
    Model m = make_teacher(1);
    zero_prefix(m.params, kTeacherPrefix);
    const AlphaMask out = predict(m, random_image(16, 16, 1), random_image(16, 16, 2));
    for (float v : out.values()) EXPECT_EQ(v, 0.5f);
}

TEST(Forward, OutputShapesAndRange)
{
    const Image i = random_image(32, 24, 3), b = random_image(32, 24, 4);
    const AlphaMask t = predict(make_teacher(2), i, b);
    EXPECT_EQ(t.width(), 32);
    EXPECT_EQ(t.height(), 24);
    const StudentOutput s = forward_student(StudentArch{}, make_student(3).params, i, b);
    EXPECT_EQ(s.coarse.width(), 8);
    EXPECT_EQ(s.coarse.height(), 6);
    EXPECT_EQ(s.refined.width(), 32);
    for (float v : s.refined.values()) {
        EXPECT_GE(v, 0.f);
        EXPECT_LE(v, 1.f);
    }
}

TEST(Forward, NonDivisibleSizeRejected)
{
    EXPECT_THROW(predict(make_teacher(1), random_image(20, 16, 1), random_image(20, 16, 2)), DimensionError);
    EXPECT_THROW(predict(make_teacher(1), random_image(16, 16, 1), random_image(24, 16, 2)), DimensionError);
}

TEST(Forward, ConstantInputGivesConstantOutput)
{
    const Image i(16, 16, 0.3f), b(16, 16, 0.7f);
    const AlphaMask t = predict(make_teacher(4), i, b);
    for (float v : t.values()) EXPECT_FLOAT_EQ(v, t[0]);
    const AlphaMask s = predict(make_student(4), i, b);
    for (float v : s.values()) EXPECT_FLOAT_EQ(v, s[0]);
}

TEST(Student, ParameterCountBelowFifthOfTeacher)
{
    const std::size_t teacher = make_teacher(1).params.scalar_count();
    const std::size_t student = make_student(1).params.scalar_count();
    EXPECT_LT(student * 5, teacher);
}

TEST(Student, ZeroRefinerPassesUpsampledCoarse)
{
    Model m = make_student(9);
    zero_prefix(m.params, kRefinerPrefix);
    const Image i = random_image(16, 16, 5), b = random_image(16, 16, 6);
    const StudentOutput s = forward_student(m.student, m.params, i, b);
    const AlphaMask up = resample(s.coarse, 16, 16, ResampleMode::Bilinear);
    for (std::size_t k = 0; k < up.pixel_count(); ++k) EXPECT_NEAR(s.refined[k], up[k], 1e-6) << k;
}

TEST(Gradients, TwoLayerNetMatchesCentralDifferences)
{
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto r = test::check_two_layer_gradients(seed);
        EXPECT_GT(r.checked, 100u);
        EXPECT_LT(r.max_rel_error, 1e-3) << "worst " << r.worst;
    }
}

TEST(Gradients, StudentMatchesCentralDifferences)
{
    const Model m = make_student(11);
    ParamSet<double> p = m.params.cast<double>();
    // A small refiner residual keeps every pixel away from the output clamp.
    for (auto& w : p.get("refiner.r3.weight").value) w *= 0.1;
    const Image i = random_image(8, 8, 7), b = random_image(8, 8, 8);
    const auto rc = random_tensor<double>(1, 2, 2, 1), rr = random_tensor<double>(1, 8, 8, 2);
    const auto loss = [&](const ParamSet<double>& q) {
        const auto pass = student_forward<double>(m.student, q, i, b, false);
        double s = 0;
        for (std::size_t k = 0; k < rc.size(); ++k) s += rc.data[k] * pass.coarse.data[k];
        for (std::size_t k = 0; k < rr.size(); ++k) s += rr.data[k] * pass.refined.data[k];
        return s;
    };
    const auto pass = student_forward<double>(m.student, p, i, b, true);
    for (double v : pass.unclamped.data) ASSERT_TRUE(v > 0.0 && v < 1.0) << "clamp kink inside the probe";
    ParamSet<double> g = p.zeros_like();
    student_backward<double>(pass, p, &rc, &rr, g, true);
    double worst = 0;
    std::mt19937_64 rng(3);
    for (std::size_t k = 0; k < p.tensors.size(); ++k)
        for (int probe = 0; probe < 6; ++probe) {
            const std::size_t idx = std::uniform_int_distribution<std::size_t>(0, p.tensors[k].value.size() - 1)(rng);
            ParamSet<double> plus = p, minus = p;
            plus.tensors[k].value[idx] += 1e-5;
            minus.tensors[k].value[idx] -= 1e-5;
            const double num = (loss(plus) - loss(minus)) / 2e-5;
            const double ana = g.tensors[k].value[idx];
            worst = std::max(worst, std::fabs(num - ana) / std::max({std::fabs(num), std::fabs(ana), 1e-6}));
        }
    EXPECT_LT(worst, 1e-3);
}

TEST(Gradients, FrozenRefinerLeftUntouched)
{
    const Model m = make_student(12);
    const Image i = random_image(16, 16, 1), b = random_image(16, 16, 2);
    const auto pass = student_forward<float>(m.student, m.params, i, b, true);
    const auto gr = random_tensor<float>(1, 16, 16, 3);
    ParamSet<float> g = m.params.zeros_like();
    student_backward<float>(pass, m.params, nullptr, &gr, g, false);
    bool coarse_nonzero = false;
    for (const auto& t : g.tensors)
        for (float v : t.value) {
            if (t.name.starts_with(kRefinerPrefix)) { ASSERT_EQ(v, 0.f) << t.name; }
            if (t.name.starts_with(kCoarsePrefix) && v != 0.f) coarse_nonzero = true;
        }
    EXPECT_TRUE(coarse_nonzero);
}

TEST(Gradients, BackwardIsLinearInUpstreamGradient)
{
    const Model m = make_teacher(13);
    const Image i = random_image(16, 16, 4), b = random_image(16, 16, 5);
    const auto pass = teacher_forward<double>(m.teacher, m.params.cast<double>(), i, b, true);
    const auto p = m.params.cast<double>();
    const auto u = random_tensor<double>(1, 16, 16, 6), v = random_tensor<double>(1, 16, 16, 7);
    Tensor<double> w(1, 16, 16);
    for (std::size_t k = 0; k < w.size(); ++k) w.data[k] = 2.0 * u.data[k] - 3.0 * v.data[k];
    ParamSet<double> gu = p.zeros_like(), gv = p.zeros_like(), gw = p.zeros_like();
    teacher_backward<double>(pass, p, u, gu);
    teacher_backward<double>(pass, p, v, gv);
    teacher_backward<double>(pass, p, w, gw);
    for (std::size_t k = 0; k < p.tensors.size(); ++k)
        for (std::size_t j = 0; j < p.tensors[k].value.size(); ++j) {
            const double e = 2.0 * gu.tensors[k].value[j] - 3.0 * gv.tensors[k].value[j];
            ASSERT_NEAR(gw.tensors[k].value[j], e, 1e-9 * (1.0 + std::fabs(e))) << p.tensors[k].name;
        }
}

TEST(Kernels, ParallelMatchesSerialReference)
{
    for (int stride : {1, 2}) {
        const ConvShape s{5, 6, 3, stride};
        const auto in = random_tensor<float>(5, 9, 11, 1);
        const auto w = random_tensor<float>(1, 1, static_cast<int>(s.weight_count()), 2);
        const auto bias = random_tensor<float>(1, 1, 6, 3);
        Tensor<float> a(6, s.out_extent(9), s.out_extent(11)), b = a;
        kernels::conv2d_forward<float>(in, w.data, bias.data, s, a);
        reference::conv2d_forward<float>(in, w.data, bias.data, s, b);
        for (std::size_t k = 0; k < a.size(); ++k) ASSERT_NEAR(a.data[k], b.data[k], 1e-5f) << k;

        const auto go = random_tensor<float>(6, a.height, a.width, 4);
        Tensor<float> gi(5, 9, 11), gi_ref(5, 9, 11);
        kernels::conv2d_backward_input<float>(go, w.data, s, gi);
        reference::conv2d_backward_input<float>(go, w.data, s, gi_ref);
        for (std::size_t k = 0; k < gi.size(); ++k) ASSERT_NEAR(gi.data[k], gi_ref.data[k], 1e-4f) << k;

        std::vector<float> gw(s.weight_count()), gw_ref(s.weight_count()), gb(6), gb_ref(6);
        kernels::conv2d_backward_params<float>(go, in, s, gw, gb);
        reference::conv2d_backward_params<float>(go, in, s, gw_ref, gb_ref);
        for (std::size_t k = 0; k < gw.size(); ++k) ASSERT_NEAR(gw[k], gw_ref[k], 1e-4f) << k;
        for (std::size_t k = 0; k < gb.size(); ++k) ASSERT_NEAR(gb[k], gb_ref[k], 1e-4f) << k;
    }
}

TEST(Kernels, ConvolutionAdjointIdentity)
{
    const ConvShape s{3, 4, 3, 2};
    const auto x = random_tensor<double>(3, 8, 8, 1);
    const auto w = random_tensor<double>(1, 1, static_cast<int>(s.weight_count()), 2);
    const std::vector<double> zero_bias(4, 0.0);
    Tensor<double> ax(4, 4, 4);
    kernels::conv2d_forward<double>(x, w.data, zero_bias, s, ax);
    const auto y = random_tensor<double>(4, 4, 4, 3);
    Tensor<double> aty(3, 8, 8);
    kernels::conv2d_backward_input<double>(y, w.data, s, aty);
    double lhs = 0, rhs = 0;
    for (std::size_t k = 0; k < ax.size(); ++k) lhs += ax.data[k] * y.data[k];
    for (std::size_t k = 0; k < x.size(); ++k) rhs += x.data[k] * aty.data[k];
    EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(Kernels, ResizeAdjointIdentity)
{
    const auto x = random_tensor<double>(2, 4, 5, 1), y = random_tensor<double>(2, 16, 20, 2);
    const auto ax = resize_bilinear(x, 16, 20);
    const auto aty = resize_bilinear_adjoint(y, 4, 5);
    double lhs = 0, rhs = 0;
    for (std::size_t k = 0; k < ax.size(); ++k) lhs += ax.data[k] * y.data[k];
    for (std::size_t k = 0; k < x.size(); ++k) rhs += x.data[k] * aty.data[k];
    EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(Adam, FirstStepMovesBySignTimesLr)
{
    ParamSet<float> p;
    p.tensors.push_back({"w", {3}, {1.f, 2.f, 3.f}});
    ParamSet<float> g = p.zeros_like();
    g.tensors[0].value = {0.5f, -2.f, 0.f};
    AdamState st;
    adam_step(p, g, AdamHyper{0.01}, st);
    EXPECT_EQ(st.step, 1);
    EXPECT_NEAR(p.tensors[0].value[0], 0.99f, 1e-6);
    EXPECT_NEAR(p.tensors[0].value[1], 2.01f, 1e-6);
    EXPECT_EQ(p.tensors[0].value[2], 3.f);
    EXPECT_NEAR(st.m[0][0], 0.05f, 1e-7);
    EXPECT_NEAR(st.v[0][1], 0.004f, 1e-8);
}

TEST(Adam, FrozenTensorsSkippedAndNonFiniteRejected)
{
    ParamSet<float> p;
    p.tensors.push_back({"a", {1}, {1.f}});
    p.tensors.push_back({"b", {1}, {1.f}});
    ParamSet<float> g = p.zeros_like();
    g.tensors[0].value[0] = 1.f;
    g.tensors[1].value[0] = 1.f;
    AdamState st;
    adam_step(p, g, AdamHyper{}, st, {"b"});
    EXPECT_NE(p.tensors[0].value[0], 1.f);
    EXPECT_EQ(p.tensors[1].value[0], 1.f);
    EXPECT_EQ(st.m[1][0], 0.f);

    const ParamSet<float> before = p;
    g.tensors[1].value[0] = std::nanf("");
    EXPECT_THROW(adam_step(p, g, AdamHyper{}, st), NumericalError);
    EXPECT_EQ(p, before);
}

TEST(Checkpoint, RoundTripIsExact)
{
    test::TempDir dir;
    for (const Model& m : {make_teacher(3), make_student(4)}) {
        Checkpoint ck{m, AdamState::zeros_for(m.params), 17};
        ck.adam.step = 17;
        ck.adam.m[0][0] = 0.25f;
        save_checkpoint(ck, dir.path / "c.ckpt");
        EXPECT_EQ(load_checkpoint(dir.path / "c.ckpt"), ck);
        EXPECT_EQ(serialize_checkpoint(load_checkpoint(dir.path / "c.ckpt")), serialize_checkpoint(ck));
    }
}

TEST(Checkpoint, CorruptBytesRejected)
{
    const Model m = make_teacher(3);
    auto bytes = serialize_checkpoint(Checkpoint{m, AdamState::zeros_for(m.params), 0});
    auto truncated = bytes;
    truncated.resize(truncated.size() - 3);
    EXPECT_THROW(deserialize_checkpoint(truncated), FormatError);
    bytes[0] = 'X';
    EXPECT_THROW(deserialize_checkpoint(bytes), FormatError);
}

TEST(Checkpoint, TensorsMustMatchArchitecture)
{
    Model m = make_student(3);
    m.params.tensors.pop_back();
    EXPECT_THROW(deserialize_checkpoint(serialize_checkpoint(Checkpoint{m, AdamState::zeros_for(m.params), 0})),
                 FormatError);
    Model t = make_teacher(3);
    t.params.tensors[0].shape[0] += 1;
    t.params.tensors[0].value.resize(t.params.tensors[0].value.size() / (t.params.tensors[0].shape[0] - 1) *
                                     t.params.tensors[0].shape[0]);
    EXPECT_THROW(deserialize_checkpoint(serialize_checkpoint(Checkpoint{t, AdamState::zeros_for(t.params), 0})),
                 FormatError);
}

TEST(Arch, JsonRoundTripAndValidation)
{
    nlohmann::json j = default_teacher_arch();
    EXPECT_EQ(j.get<ArchSpec>(), default_teacher_arch());
    ArchSpec bad = default_student_coarse_arch();
    bad.layers.back().activation = Activation::Tanh;
    EXPECT_THROW(bad.validate(), DimensionError);
    EXPECT_EQ(default_teacher_arch().required_divisor(), 8);
}
