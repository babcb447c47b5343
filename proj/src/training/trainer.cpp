#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "stagematte/nn/network.hpp"
#include "stagematte/rng.hpp"
#include "stagematte/training.hpp"

namespace stagematte::train {

using nn::Checkpoint;
using nn::ParamSet;
using nn::Tensor;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct StepStats {
    double base_sum = 0.0;
    int n_base = 0;
    double scribble_sum = 0.0;
    int n_scribble = 0;
    const std::vector<std::string>* frozen = nullptr;
};

using Compute = std::function<StepStats(std::int64_t t, ParamSet<float>& grads)>;

void check_finite(double loss, std::int64_t t, const std::string& id)
{
    if (!std::isfinite(loss))
        throw NumericalError("non-finite loss at iteration " + std::to_string(t) + " (sample " + id + ")");
}

void reject_validation(const std::vector<TrainSample>& samples)
{
    for (const auto& s : samples)
        if (s.role == Role::Validation)
            throw DataError("record " + s.id + " has role validation; validation data is never used for training");
}

void require_kind(const Checkpoint& ck, nn::ModelKind kind)
{
    if (ck.model.kind != kind)
        throw UsageError("expected a " + nn::to_string(kind) + " checkpoint, got " + nn::to_string(ck.model.kind));
}

// Trains `ck` in place; `compute` reads the live parameters through it.
TrainResult optimize(Checkpoint& ck, const TrainConfig& cfg, std::int64_t steps, const Compute& compute)
{
    TrainResult res;
    ck.adam = nn::AdamState::zeros_for(ck.model.params);
    for (std::int64_t t = 0; t < steps; ++t) {
        ParamSet<float> grads = ck.model.params.zeros_like();
        const StepStats s = compute(t, grads);
        nn::AdamHyper hyper;
        hyper.lr = cfg.lr_at(t);
        try {
            nn::adam_step(ck.model.params, grads, hyper, ck.adam, s.frozen ? *s.frozen : std::vector<std::string>{});
        } catch (const NumericalError& e) {
            throw NumericalError("iteration " + std::to_string(t) + ": " + e.what());
        }
        res.curve.push_back({t, hyper.lr, s.n_base ? s.base_sum / s.n_base : kNaN,
                             s.n_scribble ? s.scribble_sum / s.n_scribble : kNaN, s.n_base, s.n_scribble});
    }
    ck.iteration += steps;
    res.checkpoint = ck;
    return res;
}

std::uint64_t augment_seed(const TrainConfig& cfg, std::int64_t t, std::size_t slot)
{
    return derive_seed(derive_seed(cfg.seed, "augment"), static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(slot));
}

NoisyInput training_input(const TrainSample& s, const TrainConfig& cfg, bool scribble, std::int64_t t, std::size_t slot)
{
    const double sigma = scribble && !cfg.noise_scribble_samples ? 0.0 : cfg.noise_sigma_max;
    return augment_noise(s.image, s.background, sigma, augment_seed(cfg, t, slot));
}

Tensor<float> as_tensor(std::vector<float> g, int h, int w)
{
    Tensor<float> out(1, h, w);
    out.data = std::move(g);
    return out;
}

std::vector<std::string> refiner_names(const ParamSet<float>& params)
{
    std::vector<std::string> out;
    for (const auto& p : params.tensors)
        if (p.name.rfind(nn::kRefinerPrefix + ".", 0) == 0) out.push_back(p.name);
    return out;
}

// Gradient of one teacher sample; returns the loss value.
double teacher_sample(const nn::Model& model, const TrainSample& s, const NoisyInput& in, bool scribble,
                      double batch_weight, ParamSet<float>& grads)
{
    const auto pass = nn::teacher_forward<float>(model.teacher, model.params, in.image, in.background, true);
    std::vector<float> g(pass.output.size(), 0.f);
    double loss;
    if (scribble) {
        const double count = static_cast<double>(annotated_count(s.scribbles));
        loss = scribble_loss(pass.output.data, s.scribbles, g, batch_weight / count).sum / count;
    } else {
        loss = base_loss(pass.output.data, s.target.values(), pass.output.width, pass.output.height, g, batch_weight);
    }
    nn::teacher_backward<float>(pass, model.params, as_tensor(std::move(g), pass.output.height, pass.output.width),
                                grads);
    return loss;
}

TrainResult run_teacher_hybrid(Checkpoint ck, const std::vector<TrainSample>& base,
                               const std::vector<TrainSample>& scribbled, const TrainConfig& cfg)
{
    require_kind(ck, nn::ModelKind::Teacher);
    reject_validation(base);
    reject_validation(scribbled);
    for (const auto& s : base)
        if (s.target.empty()) throw DataError("base sample " + s.id + " has no ground truth");
    const Compute compute = [&](std::int64_t t, ParamSet<float>& grads) {
        StepStats st;
        const auto batch = sample_hybrid_batch(base.size(), scribbled.size(), cfg, t);
        const double w = 1.0 / static_cast<double>(batch.size());
        for (std::size_t slot = 0; slot < batch.size(); ++slot) {
            const auto& item = batch[slot];
            const TrainSample& s = item.scribble ? scribbled[item.index] : base[item.index];
            const NoisyInput in = training_input(s, cfg, item.scribble, t, slot);
            const double loss = teacher_sample(ck.model, s, in, item.scribble, w, grads);
            check_finite(loss, t, s.id);
            if (item.scribble) {
                st.scribble_sum += loss;
                ++st.n_scribble;
            } else {
                st.base_sum += loss;
                ++st.n_base;
            }
        }
        return st;
    };
    return optimize(ck, cfg, cfg.iterations, compute);
}

}  // namespace

TrainResult train_teacher_base(Checkpoint init, const std::vector<TrainSample>& base, const TrainConfig& config)
{
    config.validate();
    if (base.empty()) throw DataError("train_teacher_base: the base split is empty");
    TrainConfig cfg = config;
    cfg.base_fraction = 1.0;
    return run_teacher_hybrid(std::move(init), base, {}, cfg);
}

TrainResult finetune_teacher(Checkpoint teacher, const std::vector<TrainSample>& base,
                             const std::vector<TrainSample>& scribbled, const TrainConfig& config)
{
    config.validate();
    return run_teacher_hybrid(std::move(teacher), base, scribbled, config);
}

std::vector<AlphaMask> distill_labels(const nn::Model& teacher, const std::vector<TrainSample>& unlabeled)
{
    if (teacher.kind != nn::ModelKind::Teacher) throw UsageError("distill_labels needs a teacher checkpoint");
    std::vector<AlphaMask> out;
    out.reserve(unlabeled.size());
    for (const auto& s : unlabeled) out.push_back(nn::predict(teacher, s.image, s.background));
    return out;
}

namespace {

enum class StudentLoss { CoarseOnly, Full };

// Base loss of a student against a full-resolution target: refined output
// against `target` plus coarse output against its area-downsampled copy.
double student_sample(const nn::Model& model, const AlphaMask& target, const NoisyInput& in, StudentLoss mode,
                      double batch_weight, ParamSet<float>& grads)
{
    const auto pass = nn::student_forward<float>(model.student, model.params, in.image, in.background, true);
    const AlphaMask small = downsample_area(target, nn::kCoarseFactor);
    std::vector<float> gc(pass.coarse.size(), 0.f);
    double loss = base_loss(pass.coarse.data, small.values(), pass.coarse.width, pass.coarse.height, gc, batch_weight);
    const Tensor<float> tc = as_tensor(std::move(gc), pass.coarse.height, pass.coarse.width);
    if (mode == StudentLoss::CoarseOnly) {
        nn::student_backward<float>(pass, model.params, &tc, nullptr, grads, false);
        return loss;
    }
    std::vector<float> gr(pass.refined.size(), 0.f);
    loss += base_loss(pass.refined.data, target.values(), pass.refined.width, pass.refined.height, gr, batch_weight);
    const Tensor<float> tr = as_tensor(std::move(gr), pass.refined.height, pass.refined.width);
    nn::student_backward<float>(pass, model.params, &tc, &tr, grads, true);
    return loss;
}

}  // namespace

TrainResult train_student_base(Checkpoint init, const std::vector<TrainSample>& base, const TrainConfig& config)
{
    config.validate();
    require_kind(init, nn::ModelKind::Student);
    reject_validation(base);
    if (base.empty()) throw DataError("train_student_base: the base split is empty");
    TrainConfig cfg = config;
    cfg.base_fraction = 1.0;
    Checkpoint ck = std::move(init);
    const nn::Model& model = ck.model;
    const Compute compute = [&](std::int64_t t, ParamSet<float>& grads) {
        StepStats st;
        const auto batch = sample_hybrid_batch(base.size(), 0, cfg, t);
        const double w = 1.0 / static_cast<double>(batch.size());
        for (std::size_t slot = 0; slot < batch.size(); ++slot) {
            const TrainSample& s = base[batch[slot].index];
            const double loss = student_sample(model, s.target, training_input(s, cfg, false, t, slot),
                                               StudentLoss::Full, w, grads);
            check_finite(loss, t, s.id);
            st.base_sum += loss;
            ++st.n_base;
        }
        return st;
    };
    return optimize(ck, cfg, cfg.iterations, compute);
}

TrainResult finetune_student(Checkpoint student, const std::vector<TrainSample>& pseudo, const TrainConfig& config)
{
    config.validate();
    require_kind(student, nn::ModelKind::Student);
    reject_validation(pseudo);
    if (pseudo.empty()) throw DataError("finetune_student: the pseudo-label set is empty");

    struct Step {
        std::vector<std::size_t> indices;
        bool joint = false;
    };
    std::vector<Step> steps;
    const int epochs = config.epochs_coarse + config.epochs_joint;
    for (int e = 0; e < epochs; ++e) {
        std::vector<std::size_t> order(pseudo.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(derive_seed(config.seed, "epoch"), static_cast<std::uint64_t>(e)));
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(config.batch_size)) {
            const auto end = std::min(order.size(), i + static_cast<std::size_t>(config.batch_size));
            steps.push_back({std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(i),
                                                      order.begin() + static_cast<std::ptrdiff_t>(end)),
                             e >= config.epochs_coarse});
        }
    }

    const std::vector<std::string> frozen = refiner_names(student.model.params);
    Checkpoint ck = std::move(student);
    const nn::Model& model = ck.model;
    const Compute compute = [&](std::int64_t t, ParamSet<float>& grads) {
        const Step& step = steps[static_cast<std::size_t>(t)];
        StepStats st;
        st.frozen = step.joint ? nullptr : &frozen;
        const double w = 1.0 / static_cast<double>(step.indices.size());
        for (std::size_t slot = 0; slot < step.indices.size(); ++slot) {
            const TrainSample& s = pseudo[step.indices[slot]];
            const double loss =
                student_sample(model, s.target, training_input(s, config, false, t, slot),
                               step.joint ? StudentLoss::Full : StudentLoss::CoarseOnly, w, grads);
            check_finite(loss, t, s.id);
            st.base_sum += loss;
            ++st.n_base;
        }
        return st;
    };
    return optimize(ck, config, static_cast<std::int64_t>(steps.size()), compute);
}

TrainResult finetune_student_direct(Checkpoint student, const std::vector<TrainSample>& base,
                                    const std::vector<TrainSample>& scribbled, const TrainConfig& config)
{
    config.validate();
    require_kind(student, nn::ModelKind::Student);
    reject_validation(base);
    reject_validation(scribbled);

    std::vector<ScribbleMap> coarse_scribbles;
    for (const auto& s : scribbled) {
        coarse_scribbles.push_back(downsample_scribbles(s.scribbles, nn::kCoarseFactor));
        if (annotated_count(coarse_scribbles.back()) == 0)
            throw DataError("scribbles of " + s.id + " vanish at coarse resolution");
    }
    const std::vector<std::string> frozen = config.freeze_refiner ? refiner_names(student.model.params)
                                                                  : std::vector<std::string>{};
    Checkpoint ck = std::move(student);
    const nn::Model& model = ck.model;
    const Compute compute = [&](std::int64_t t, ParamSet<float>& grads) {
        StepStats st;
        st.frozen = &frozen;
        const auto batch = sample_hybrid_batch(base.size(), scribbled.size(), config, t);
        const double w = 1.0 / static_cast<double>(batch.size());
        for (std::size_t slot = 0; slot < batch.size(); ++slot) {
            const auto& item = batch[slot];
            const TrainSample& s = item.scribble ? scribbled[item.index] : base[item.index];
            const NoisyInput in = training_input(s, config, item.scribble, t, slot);
            double loss;
            if (item.scribble) {
                const auto pass = nn::student_forward<float>(model.student, model.params, in.image, in.background, true);
                const ScribbleMap& y = coarse_scribbles[item.index];
                const double count = static_cast<double>(annotated_count(y));
                std::vector<float> g(pass.coarse.size(), 0.f);
                loss = scribble_loss(pass.coarse.data, y, g, w / count).sum / count;
                const Tensor<float> tc = as_tensor(std::move(g), pass.coarse.height, pass.coarse.width);
                nn::student_backward<float>(pass, model.params, &tc, nullptr, grads, !config.freeze_refiner);
            } else {
                loss = student_sample(model, s.target, in,
                                      config.freeze_refiner ? StudentLoss::CoarseOnly : StudentLoss::Full, w, grads);
            }
            check_finite(loss, t, s.id);
            if (item.scribble) {
                st.scribble_sum += loss;
                ++st.n_scribble;
            } else {
                st.base_sum += loss;
                ++st.n_base;
            }
        }
        return st;
    };
    return optimize(ck, config, config.iterations, compute);
}

}  // namespace stagematte::train
