#include <cmath>
#include <cstdio>
#include <random>

#include "stagematte/png_io.hpp"
#include "stagematte/rng.hpp"
#include "stagematte/training.hpp"

namespace stagematte::train {

void TrainConfig::validate() const
{
    if (batch_size < 1) throw UsageError("batch_size must be >= 1");
    if (iterations < 0) throw UsageError("iterations must be >= 0");
    if (!(base_fraction >= 0.0 && base_fraction <= 1.0)) throw UsageError("base_fraction must lie in [0,1]");
    if (!(lr_initial > 0.0) || !(lr_after > 0.0)) throw UsageError("learning rates must be > 0");
    if (!(noise_sigma_max >= 0.0)) throw UsageError("noise_sigma_max must be >= 0");
    if (epochs_coarse < 0 || epochs_joint < 0) throw UsageError("epoch counts must be >= 0");
}

TrainConfig finetune_defaults() { return TrainConfig{}; }

TrainConfig base_defaults()
{
    TrainConfig c;
    c.iterations = 1000;
    c.lr_initial = 1e-3;
    c.lr_after = 1e-3;
    c.lr_drop_iteration = c.iterations;
    c.base_fraction = 1.0;
    return c;
}

TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& d)
{
    TrainConfig c = d;
    try {
        c.batch_size = j.value("batch_size", d.batch_size);
        c.iterations = j.value("iterations", d.iterations);
        c.lr_initial = j.value("lr_initial", d.lr_initial);
        c.lr_drop_iteration = j.value("lr_drop_iteration", d.lr_drop_iteration);
        c.lr_after = j.value("lr_after", d.lr_after);
        c.base_fraction = j.value("base_fraction", d.base_fraction);
        c.noise_sigma_max = j.value("noise_sigma_max", d.noise_sigma_max);
        c.noise_scribble_samples = j.value("noise_scribble_samples", d.noise_scribble_samples);
        c.epochs_coarse = j.value("epochs_coarse", d.epochs_coarse);
        c.epochs_joint = j.value("epochs_joint", d.epochs_joint);
        c.freeze_refiner = j.value("freeze_refiner", d.freeze_refiner);
        c.seed = j.value("seed", d.seed);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::ordered_json to_json(const TrainConfig& c)
{
    return {{"batch_size", c.batch_size},
            {"iterations", c.iterations},
            {"lr_initial", c.lr_initial},
            {"lr_drop_iteration", c.lr_drop_iteration},
            {"lr_after", c.lr_after},
            {"base_fraction", c.base_fraction},
            {"noise_sigma_max", c.noise_sigma_max},
            {"noise_scribble_samples", c.noise_scribble_samples},
            {"epochs_coarse", c.epochs_coarse},
            {"epochs_joint", c.epochs_joint},
            {"freeze_refiner", c.freeze_refiner},
            {"seed", c.seed}};
}

namespace {

TrainSample load_inputs(const DatasetManifest& m, const ManifestRecord& r)
{
    TrainSample s;
    s.id = r.id;
    s.role = r.role;
    s.image = load_image(m.resolve(r.image));
    s.background = load_image(m.resolve(r.background));
    require_same_size(("record " + r.id + " (image, background)").c_str(), s.image.width(), s.image.height(),
                      s.background.width(), s.background.height());
    return s;
}

void reject_validation(const ManifestRecord& r)
{
    if (r.role == Role::Validation)
        throw DataError("record " + r.id + " has role validation; validation data is never used for training");
}

}  // namespace

std::vector<TrainSample> load_ground_truth_samples(const DatasetManifest& manifest, Role role)
{
    if (role == Role::Validation)
        throw DataError("validation records are never used for training");
    std::vector<TrainSample> out;
    for (const auto& r : manifest.records()) {
        if (r.role != role) continue;
        if (!r.alpha_gt) throw DataError("record " + r.id + " has no alpha_gt");
        TrainSample s = load_inputs(manifest, r);
        s.target = load_mask(manifest.resolve(*r.alpha_gt));
        require_same_size(("record " + r.id + " (image, alpha)").c_str(), s.image.width(), s.image.height(),
                          s.target.width(), s.target.height());
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<TrainSample> load_scribble_samples(const DatasetManifest& manifest)
{
    std::vector<TrainSample> out;
    for (const auto& r : manifest.records()) {
        if (!r.scribbles) continue;
        reject_validation(r);
        TrainSample s = load_inputs(manifest, r);
        s.scribbles = load_scribbles(manifest.resolve(*r.scribbles));
        if (!s.scribbles.same_size(s.image))
            throw DimensionError("record " + r.id + ": scribble size does not match the image");
        if (annotated_count(s.scribbles) == 0) continue;
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<TrainSample> load_pseudo_samples(const DatasetManifest& manifest)
{
    std::vector<TrainSample> out;
    for (const auto& r : manifest.records()) {
        if (!r.pseudo_label) continue;
        reject_validation(r);
        TrainSample s = load_inputs(manifest, r);
        s.target = load_mask(manifest.resolve(*r.pseudo_label));
        if (!s.target.same_size(s.image)) throw DimensionError("record " + r.id + ": pseudo-label size mismatch");
        out.push_back(std::move(s));
    }
    return out;
}

NoisyInput add_noise(const Image& image, const Image& background, double sigma, std::uint64_t seed)
{
    if (!(sigma > 0.0)) return {image, background, 0.0};
    Rng rng(seed);
    std::normal_distribution<double> n(0.0, sigma);
    auto perturb = [&](const Image& src) {
        std::vector<float> v(src.values().begin(), src.values().end());
        for (float& x : v) x = static_cast<float>(x + n(rng));
        return Image(src.width(), src.height(), std::move(v));
    };
    Image i = perturb(image);
    Image b = perturb(background);
    return {std::move(i), std::move(b), sigma};
}

NoisyInput augment_noise(const Image& image, const Image& background, double sigma_max, std::uint64_t seed)
{
    if (sigma_max < 0.0) throw UsageError("augment_noise: sigma_max must be >= 0");
    if (sigma_max == 0.0) return {image, background, 0.0};
    Rng rng(seed);
    const double sigma = std::uniform_real_distribution<double>(0.0, sigma_max)(rng);
    return add_noise(image, background, sigma, rng());
}

int base_count(int batch_size, double base_fraction)
{
    return static_cast<int>(std::floor(batch_size * base_fraction + 0.5));
}

std::vector<BatchItem> sample_hybrid_batch(std::size_t n_base, std::size_t n_scribble, const TrainConfig& config,
                                           std::int64_t iteration)
{
    const int nb = base_count(config.batch_size, config.base_fraction);
    const int ns = config.batch_size - nb;
    if (nb > 0 && n_base == 0) throw DataError("hybrid batch needs base samples but the base pool is empty");
    if (ns > 0 && n_scribble == 0)
        throw DataError("hybrid batch needs scribble samples but the scribble pool is empty");
    Rng rng(derive_seed(derive_seed(config.seed, "batch"), static_cast<std::uint64_t>(iteration)));
    std::vector<BatchItem> out;
    out.reserve(static_cast<std::size_t>(config.batch_size));
    for (int i = 0; i < nb; ++i) out.push_back({std::uniform_int_distribution<std::size_t>(0, n_base - 1)(rng), false});
    for (int i = 0; i < ns; ++i)
        out.push_back({std::uniform_int_distribution<std::size_t>(0, n_scribble - 1)(rng), true});
    return out;
}

std::string render_loss_curve(const std::vector<LossRecord>& curve)
{
    std::string out = "iteration\tlr\tbase_loss\tscribble_loss\tn_base\tn_scribble\n";
    char buf[256];
    auto num = [](double v) {
        if (std::isnan(v)) return std::string("-");
        char b[64];
        std::snprintf(b, sizeof b, "%.9g", v);
        return std::string(b);
    };
    for (const auto& r : curve) {
        std::snprintf(buf, sizeof buf, "%lld\t%.9g\t%s\t%s\t%d\t%d\n", static_cast<long long>(r.iteration), r.lr,
                      num(r.base_loss).c_str(), num(r.scribble_loss).c_str(), r.n_base, r.n_scribble);
        out += buf;
    }
    return out;
}

void write_loss_curve(const std::vector<LossRecord>& curve, const std::filesystem::path& path)
{
    const std::string text = render_loss_curve(curve);
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace stagematte::train
