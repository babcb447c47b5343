#include "stagematte/stage_sim.hpp"

#include <algorithm>
#include <bitset>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "stagematte/filters.hpp"
#include "stagematte/png_io.hpp"
#include "stagematte/rng.hpp"

namespace stagematte::sim {

namespace fs = std::filesystem;

namespace {

double uniform(Rng& rng, const Range& r)
{
    if (r.hi <= r.lo) return r.lo;
    return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

int uniform_count(Rng& rng, const Range& r)
{
    return static_cast<int>(std::lround(uniform(rng, r)));
}

struct Vec2 {
    double x;
    double y;
};

double segment_distance(Vec2 p, Vec2 a, Vec2 b)
{
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(p.x - (a.x + t * vx), p.y - (a.y + t * vy));
}

struct Capsule {
    Vec2 a;
    Vec2 b;
    double radius;
};

using SampleBits = std::bitset<256>;

// Marks the sub-samples of every pixel inside the bounding box that satisfy
// `inside(point)`.
template <typename Inside>
void rasterize(std::vector<SampleBits>& bits, int w, int h, int ss, double x0, double y0, double x1, double y1,
               Inside&& inside)
{
    const int px0 = std::max(0, static_cast<int>(std::floor(x0)));
    const int py0 = std::max(0, static_cast<int>(std::floor(y0)));
    const int px1 = std::min(w - 1, static_cast<int>(std::floor(x1)));
    const int py1 = std::min(h - 1, static_cast<int>(std::floor(y1)));
    for (int py = py0; py <= py1; ++py)
        for (int px = px0; px <= px1; ++px) {
            SampleBits& b = bits[static_cast<std::size_t>(py) * w + px];
            for (int sy = 0; sy < ss; ++sy)
                for (int sx = 0; sx < ss; ++sx)
                    if (inside(Vec2{px + (sx + 0.5) / ss, py + (sy + 0.5) / ss})) b.set(static_cast<std::size_t>(sy * ss + sx));
        }
}

std::array<double, 3> random_color(Rng& rng, double lo, double hi)
{
    return {uniform(rng, {lo, hi}), uniform(rng, {lo, hi}), uniform(rng, {lo, hi})};
}

}  // namespace

void StageEffects::validate() const
{
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(shadow_strength) || !unit(reflection_strength))
        throw DataError("stage effect strengths must lie in [0,1]");
    if (noise_sigma < 0.0 || shadow_blur_sigma < 0.0) throw DataError("noise and blur sigma must be >= 0");
}

nlohmann::ordered_json to_json(const StageEffects& e)
{
    nlohmann::ordered_json strips = nlohmann::ordered_json::array();
    for (const auto& s : e.reflective_strips) strips.push_back({s.x0, s.x1});
    return {{"shadow_strength", e.shadow_strength}, {"shadow_offset", {e.shadow_dx, e.shadow_dy}},
            {"shadow_blur_sigma", e.shadow_blur_sigma}, {"reflection_strength", e.reflection_strength},
            {"reflective_strips", strips}, {"noise_sigma", e.noise_sigma}};
}

Foreground gen_foreground(std::uint64_t seed, const FigureConfig& cfg)
{
    const int w = cfg.width, h = cfg.height, ss = cfg.supersample;
    if (w < 4 || h < 4) throw DimensionError("gen_foreground: canvas must be at least 4x4");
    if (ss < 1 || ss > 16) throw DataError("gen_foreground: supersample must be in [1,16]");
    Rng rng(seed);

    const Vec2 c{uniform(rng, cfg.body_cx) * w, uniform(rng, cfg.body_cy) * h};
    const double rx = uniform(rng, cfg.body_rx) * w;
    const double ry = uniform(rng, cfg.body_ry) * h;
    if (rx <= 0 || ry <= 0) throw DataError("gen_foreground: body radii must be positive");
    auto on_ellipse = [&](double theta, double scale) {
        return Vec2{c.x + scale * rx * std::cos(theta), c.y + scale * ry * std::sin(theta)};
    };

    std::vector<Capsule> limbs;
    const int n_limbs = uniform_count(rng, cfg.limb_count);
    for (int i = 0; i < n_limbs; ++i) {
        // The first two limbs are legs pointing down towards the floor.
        const double theta = i < 2 ? uniform(rng, {0.3 * std::numbers::pi, 0.7 * std::numbers::pi})
                                   : uniform(rng, {0.0, 2.0 * std::numbers::pi});
        const Vec2 a = on_ellipse(theta, 0.7);
        const double len = uniform(rng, cfg.limb_length) * h;
        limbs.push_back({a, {a.x + len * std::cos(theta), a.y + len * std::sin(theta)}, uniform(rng, cfg.limb_radius_px)});
    }

    std::vector<SampleBits> solid(static_cast<std::size_t>(w) * h);
    std::vector<SampleBits> hair(static_cast<std::size_t>(w) * h);
    rasterize(solid, w, h, ss, c.x - rx, c.y - ry, c.x + rx, c.y + ry, [&](Vec2 p) {
        const double u = (p.x - c.x) / rx, v = (p.y - c.y) / ry;
        return u * u + v * v <= 1.0;
    });
    for (const auto& l : limbs)
        rasterize(solid, w, h, ss, std::min(l.a.x, l.b.x) - l.radius, std::min(l.a.y, l.b.y) - l.radius,
                  std::max(l.a.x, l.b.x) + l.radius, std::max(l.a.y, l.b.y) + l.radius,
                  [&](Vec2 p) { return segment_distance(p, l.a, l.b) <= l.radius; });

    const int n_strands = uniform_count(rng, cfg.strand_count);
    for (int i = 0; i < n_strands; ++i) {
        // Strands grow from the upper half of the body outline.
        const double theta = uniform(rng, {1.1 * std::numbers::pi, 1.9 * std::numbers::pi});
        Vec2 p = on_ellipse(theta, 1.0);
        double heading = theta + uniform(rng, {-0.4, 0.4});
        const double half_width = 0.5 * uniform(rng, cfg.strand_width_px);
        const int steps = uniform_count(rng, cfg.strand_steps);
        for (int s = 0; s < steps; ++s) {
            heading += uniform(rng, {-0.35, 0.35});
            const Vec2 q{p.x + cfg.strand_step_px * std::cos(heading), p.y + cfg.strand_step_px * std::sin(heading)};
            rasterize(hair, w, h, ss, std::min(p.x, q.x) - half_width, std::min(p.y, q.y) - half_width,
                      std::max(p.x, q.x) + half_width, std::max(p.y, q.y) + half_width,
                      [&](Vec2 x) { return segment_distance(x, p, q) <= half_width; });
            p = q;
        }
    }

    const auto body_col = random_color(rng, 0.08, 0.92);
    const auto hair_col = random_color(rng, 0.02, 0.6);
    const double total = static_cast<double>(ss * ss);
    Foreground out{Image(w, h), AlphaMask(w, h)};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const SampleBits covered = solid[i] | hair[i];
            const std::size_t n = covered.count();
            const std::size_t n_hair = (hair[i] & ~solid[i]).count();
            out.alpha.set(x, y, static_cast<float>(n / total));
            const double shade = 1.0 - 0.15 * std::clamp((y - c.y) / ry, -1.5, 1.5);
            const double share = n > 0 ? static_cast<double>(n_hair) / n : 0.0;
            for (int ch = 0; ch < 3; ++ch)
                out.color.set(x, y, ch,
                              static_cast<float>((1.0 - share) * body_col[ch] * shade + share * hair_col[ch]));
        }
    return out;
}

Background gen_background(std::uint64_t seed, const BackgroundConfig& cfg)
{
    const int w = cfg.width, h = cfg.height;
    if (w < 1 || h < 1) throw DimensionError("gen_background: degenerate canvas");
    for (const auto& s : cfg.strips)
        if (s.x0 < 0 || s.x1 > w || s.x0 >= s.x1)
            throw DataError("gen_background: strip [" + std::to_string(s.x0) + "," + std::to_string(s.x1) +
                            ") lies outside the " + std::to_string(w) + "-pixel canvas");
    Rng rng(seed);
    const double gray = uniform(rng, cfg.base_gray);
    Background out{Image(w, h, static_cast<float>(gray)), cfg.strips};

    const int n_discs = uniform_count(rng, cfg.disc_count);
    constexpr int ss = 4;
    for (int d = 0; d < n_discs; ++d) {
        const double cx = uniform(rng, {0.0, static_cast<double>(w)});
        const double cy = uniform(rng, {0.0, static_cast<double>(h)});
        const double r = uniform(rng, cfg.disc_radius_px);
        const double b = uniform(rng, cfg.disc_brightness);
        for (int y = std::max(0, static_cast<int>(cy - r) - 1); y <= std::min(h - 1, static_cast<int>(cy + r) + 1); ++y)
            for (int x = std::max(0, static_cast<int>(cx - r) - 1); x <= std::min(w - 1, static_cast<int>(cx + r) + 1); ++x) {
                int hits = 0;
                for (int sy = 0; sy < ss; ++sy)
                    for (int sx = 0; sx < ss; ++sx)
                        hits += std::hypot(x + (sx + 0.5) / ss - cx, y + (sy + 0.5) / ss - cy) <= r;
                if (hits == 0) continue;
                const float cov = static_cast<float>(hits) / (ss * ss);
                for (int c = 0; c < 3; ++c)
                    out.image.set(x, y, c, (1.f - cov) * out.image.at(x, y, c) + cov * static_cast<float>(b));
            }
    }
    for (const auto& s : cfg.strips)
        for (int y = 0; y < h; ++y)
            for (int x = s.x0; x < s.x1; ++x)
                for (int c = 0; c < 3; ++c) out.image.set(x, y, c, out.image.at(x, y, c) + static_cast<float>(cfg.strip_lift));
    return out;
}

std::vector<float> background_alteration(const Image& fg, const AlphaMask& alpha, const Image& bg,
                                         const StageEffects& e)
{
    require_same_size("stage effects (F,B)", fg.width(), fg.height(), bg.width(), bg.height());
    require_same_size("stage effects (F,alpha)", fg.width(), fg.height(), alpha.width(), alpha.height());
    e.validate();
    const int w = bg.width(), h = bg.height();
    std::vector<float> delta(bg.values().size(), 0.f);

    if (e.shadow_strength > 0.0) {
        const int dx = static_cast<int>(std::lround(e.shadow_dx));
        const int dy = static_cast<int>(std::lround(e.shadow_dy));
        Plane sil(w, h);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const int sx = x - dx, sy = y - dy;
                if (sx >= 0 && sx < w && sy >= 0 && sy < h) sil.at(x, y) = alpha.at(sx, sy);
            }
        const Plane m = gaussian_blur(sil, e.shadow_blur_sigma, Boundary::Zero);
        const float s = static_cast<float>(e.shadow_strength);
        for (std::size_t i = 0; i < m.v.size(); ++i) {
            const float mi = static_cast<float>(std::min(1.0, m.v[i]));
            for (int c = 0; c < 3; ++c) delta[i * 3 + c] -= s * mi * bg[i * 3 + c];
        }
    }
    if (e.reflection_strength > 0.0) {
        const float r = static_cast<float>(e.reflection_strength);
        for (const auto& strip : e.reflective_strips) {
            if (strip.x0 < 0 || strip.x1 > w || strip.x0 >= strip.x1)
                throw DataError("reflective strip outside the canvas");
            for (int y = 0; y < h; ++y)
                for (int x = strip.x0; x < strip.x1; ++x) {
                    const int xm = w - 1 - x;
                    const float a = alpha.at(xm, y);
                    for (int c = 0; c < 3; ++c)
                        delta[(static_cast<std::size_t>(y) * w + x) * 3 + c] += r * fg.at(xm, y, c) * a;
                }
        }
    }
    return delta;
}

Image apply_stage_effects(const Image& fg, const AlphaMask& alpha, const Image& bg, const StageEffects& e,
                          std::uint64_t seed)
{
    const std::vector<float> delta = background_alteration(fg, alpha, bg, e);
    const int w = bg.width(), h = bg.height();
    std::vector<float> out(delta.size());
    for (std::size_t i = 0; i < alpha.pixel_count(); ++i) {
        const float a = alpha[i];
        for (int c = 0; c < 3; ++c) {
            const std::size_t k = i * 3 + c;
            out[k] = a * fg[k] + (1.f - a) * (bg[k] + delta[k]);
        }
    }
    if (e.noise_sigma > 0.0) {
        Rng rng(derive_seed(seed, "sensor-noise"));
        std::normal_distribution<double> noise(0.0, e.noise_sigma);
        for (float& v : out) v = static_cast<float>(v + noise(rng));
    }
    return Image(w, h, std::move(out));
}

int GeneratorConfig::count(Role r) const
{
    switch (r) {
    case Role::Base: return count_base;
    case Role::CaptureStage: return count_capture_stage;
    case Role::Unlabeled: return count_unlabeled;
    case Role::Validation: return count_validation;
    }
    return 0;
}

namespace {

std::string id_prefix(Role r)
{
    switch (r) {
    case Role::Base: return "base";
    case Role::CaptureStage: return "stage";
    case Role::Unlabeled: return "unl";
    case Role::Validation: return "val";
    }
    return "x";
}

}  // namespace

SceneSample gen_scene(Role role, int index, const GeneratorConfig& cfg, std::uint64_t dataset_seed)
{
    SceneSample s;
    char id[32];
    std::snprintf(id, sizeof id, "%s_%04d", id_prefix(role).c_str(), index);
    s.id = id;
    s.role = role;
    s.seed = derive_seed(dataset_seed, static_cast<std::uint64_t>(role), static_cast<std::uint64_t>(index));
    Rng rng(derive_seed(s.seed, "effects"));

    FigureConfig fig = cfg.figure;
    fig.width = cfg.width;
    fig.height = cfg.height;
    Foreground f = gen_foreground(derive_seed(s.seed, "figure"), fig);

    BackgroundConfig bcfg = cfg.background;
    bcfg.width = cfg.width;
    bcfg.height = cfg.height;
    bcfg.strips.clear();
    if (role != Role::Base) {
        const int n = uniform_count(rng, cfg.effects.strip_count);
        for (int i = 0; i < n; ++i) {
            const int sw = std::clamp(uniform_count(rng, cfg.effects.strip_width_px), 1, cfg.width);
            const int x0 = std::uniform_int_distribution<int>(0, cfg.width - sw)(rng);
            bcfg.strips.push_back({x0, x0 + sw});
        }
    }
    Background b = gen_background(derive_seed(s.seed, "background"), bcfg);

    if (role != Role::Base) {
        const auto& r = cfg.effects;
        s.effects.shadow_strength = uniform(rng, r.shadow_strength);
        s.effects.shadow_dx = uniform(rng, r.shadow_dx);
        s.effects.shadow_dy = uniform(rng, r.shadow_dy);
        s.effects.shadow_blur_sigma = uniform(rng, r.shadow_blur_sigma);
        s.effects.reflection_strength = uniform(rng, r.reflection_strength);
        s.effects.reflective_strips = b.strips;
        s.effects.noise_sigma = uniform(rng, r.noise_sigma);
    }
    s.image = apply_stage_effects(f.color, f.alpha, b.image, s.effects, s.seed);
    s.background = std::move(b.image);
    s.foreground = std::move(f.color);
    s.alpha_gt = std::move(f.alpha);
    return s;
}

ScribbleMap simulate_scribbles(const SceneSample& sample, const ScribbleConfig& cfg, std::uint64_t seed)
{
    const AlphaMask& a = sample.alpha_gt;
    const int w = a.width(), h = a.height();
    const std::vector<float> delta = background_alteration(sample.foreground, a, sample.background, sample.effects);
    Rng rng(seed);

    std::vector<int> altered, background, core;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (a[i] == 0.f) {
                background.push_back(static_cast<int>(i));
                const float mag = (std::fabs(delta[3 * i]) + std::fabs(delta[3 * i + 1]) + std::fabs(delta[3 * i + 2])) / 3.f;
                if (mag > cfg.alteration_threshold) altered.push_back(static_cast<int>(i));
            }
            bool solid = true;
            for (int dy = -2; dy <= 2 && solid; ++dy)
                for (int dx = -2; dx <= 2 && solid; ++dx) {
                    const int xx = x + dx, yy = y + dy;
                    solid = xx >= 0 && yy >= 0 && xx < w && yy < h && a.at(xx, yy) == 1.f;
                }
            if (solid) core.push_back(static_cast<int>(i));
        }

    ScribbleMap out(w, h, Scribble::Unlabeled);
    auto stroke = [&](const std::vector<int>& starts, float required, Scribble label) {
        if (starts.empty()) return;
        const int start = starts[std::uniform_int_distribution<std::size_t>(0, starts.size() - 1)(rng)];
        double px = start % w, py = start / w;
        double heading = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
        for (int step = 0; step < cfg.stroke_steps; ++step) {
            for (int dy = -cfg.brush_radius; dy <= cfg.brush_radius; ++dy)
                for (int dx = -cfg.brush_radius; dx <= cfg.brush_radius; ++dx) {
                    if (dx * dx + dy * dy > cfg.brush_radius * cfg.brush_radius) continue;
                    const int x = static_cast<int>(std::lround(px)) + dx, y = static_cast<int>(std::lround(py)) + dy;
                    if (x >= 0 && y >= 0 && x < w && y < h && a.at(x, y) == required) out.set(x, y, label);
                }
            heading += std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
            double nx = px + std::cos(heading), ny = py + std::sin(heading);
            const int ix = static_cast<int>(std::lround(nx)), iy = static_cast<int>(std::lround(ny));
            if (ix < 0 || iy < 0 || ix >= w || iy >= h || a.at(ix, iy) != required) {
                heading += std::numbers::pi;
                nx = px;
                ny = py;
            }
            px = nx;
            py = ny;
        }
    };

    const int n_bg = uniform_count(rng, cfg.background_strokes);
    for (int i = 0; i < n_bg; ++i) stroke(altered.empty() ? background : altered, 0.f, Scribble::Background);
    const int n_fg = uniform_count(rng, cfg.foreground_strokes);
    for (int i = 0; i < n_fg; ++i) stroke(core, 1.f, Scribble::Foreground);

    if (annotated_count(out) == 0) {
        if (!background.empty())
            out.set_flat(static_cast<std::size_t>(background.front()), Scribble::Background);
        else
            out.set_flat(0, a[0] >= 0.5f ? Scribble::Foreground : Scribble::Background);
    }
    return out;
}

namespace {

Range range_from(const nlohmann::json& j, const char* key, Range fallback)
{
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (v.is_number()) return {v.get<double>(), v.get<double>()};
    if (!v.is_array() || v.size() != 2) throw FormatError(std::string("config range '") + key + "' must be [lo, hi]");
    Range r{v[0].get<double>(), v[1].get<double>()};
    if (r.hi < r.lo) throw FormatError(std::string("config range '") + key + "' has hi < lo");
    return r;
}

nlohmann::ordered_json range_json(const Range& r) { return nlohmann::ordered_json::array({r.lo, r.hi}); }

}  // namespace

GeneratorConfig generator_config_from_json(const nlohmann::json& j)
{
    GeneratorConfig c;
    try {
        c.width = j.value("width", c.width);
        c.height = j.value("height", c.height);
        if (j.contains("counts")) {
            const auto& n = j["counts"];
            c.count_base = n.value("base", c.count_base);
            c.count_capture_stage = n.value("capture_stage", c.count_capture_stage);
            c.count_unlabeled = n.value("unlabeled", c.count_unlabeled);
            c.count_validation = n.value("validation", c.count_validation);
        }
        const nlohmann::json empty = nlohmann::json::object();
        const auto& f = j.contains("figure") ? j["figure"] : empty;
        c.figure.body_cx = range_from(f, "body_cx", c.figure.body_cx);
        c.figure.body_cy = range_from(f, "body_cy", c.figure.body_cy);
        c.figure.body_rx = range_from(f, "body_rx", c.figure.body_rx);
        c.figure.body_ry = range_from(f, "body_ry", c.figure.body_ry);
        c.figure.limb_count = range_from(f, "limb_count", c.figure.limb_count);
        c.figure.limb_length = range_from(f, "limb_length", c.figure.limb_length);
        c.figure.limb_radius_px = range_from(f, "limb_radius_px", c.figure.limb_radius_px);
        c.figure.strand_count = range_from(f, "strand_count", c.figure.strand_count);
        c.figure.strand_steps = range_from(f, "strand_steps", c.figure.strand_steps);
        c.figure.strand_width_px = range_from(f, "strand_width_px", c.figure.strand_width_px);
        c.figure.strand_step_px = f.value("strand_step_px", c.figure.strand_step_px);
        c.figure.supersample = f.value("supersample", c.figure.supersample);

        const auto& b = j.contains("background") ? j["background"] : empty;
        c.background.base_gray = range_from(b, "base_gray", c.background.base_gray);
        c.background.disc_count = range_from(b, "disc_count", c.background.disc_count);
        c.background.disc_radius_px = range_from(b, "disc_radius_px", c.background.disc_radius_px);
        c.background.disc_brightness = range_from(b, "disc_brightness", c.background.disc_brightness);
        c.background.strip_lift = b.value("strip_lift", c.background.strip_lift);

        const auto& e = j.contains("effects") ? j["effects"] : empty;
        c.effects.shadow_strength = range_from(e, "shadow_strength", c.effects.shadow_strength);
        c.effects.shadow_dx = range_from(e, "shadow_dx", c.effects.shadow_dx);
        c.effects.shadow_dy = range_from(e, "shadow_dy", c.effects.shadow_dy);
        c.effects.shadow_blur_sigma = range_from(e, "shadow_blur_sigma", c.effects.shadow_blur_sigma);
        c.effects.reflection_strength = range_from(e, "reflection_strength", c.effects.reflection_strength);
        c.effects.strip_count = range_from(e, "strip_count", c.effects.strip_count);
        c.effects.strip_width_px = range_from(e, "strip_width_px", c.effects.strip_width_px);
        c.effects.noise_sigma = range_from(e, "noise_sigma", c.effects.noise_sigma);

        const auto& s = j.contains("scribbles") ? j["scribbles"] : empty;
        c.scribbles.background_strokes = range_from(s, "background_strokes", c.scribbles.background_strokes);
        c.scribbles.foreground_strokes = range_from(s, "foreground_strokes", c.scribbles.foreground_strokes);
        c.scribbles.stroke_steps = s.value("stroke_steps", c.scribbles.stroke_steps);
        c.scribbles.brush_radius = s.value("brush_radius", c.scribbles.brush_radius);
        c.scribbles.alteration_threshold = s.value("alteration_threshold", c.scribbles.alteration_threshold);
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(std::string("generator config: ") + ex.what());
    }
    if (c.width < 4 || c.height < 4) throw DataError("generator config: canvas must be at least 4x4");
    return c;
}

nlohmann::ordered_json to_json(const GeneratorConfig& c)
{
    nlohmann::ordered_json j;
    j["width"] = c.width;
    j["height"] = c.height;
    j["counts"] = {{"base", c.count_base},
                   {"capture_stage", c.count_capture_stage},
                   {"unlabeled", c.count_unlabeled},
                   {"validation", c.count_validation}};
    const auto& f = c.figure;
    j["figure"] = {{"body_cx", range_json(f.body_cx)},           {"body_cy", range_json(f.body_cy)},
                   {"body_rx", range_json(f.body_rx)},           {"body_ry", range_json(f.body_ry)},
                   {"limb_count", range_json(f.limb_count)},     {"limb_length", range_json(f.limb_length)},
                   {"limb_radius_px", range_json(f.limb_radius_px)}, {"strand_count", range_json(f.strand_count)},
                   {"strand_steps", range_json(f.strand_steps)}, {"strand_width_px", range_json(f.strand_width_px)},
                   {"strand_step_px", f.strand_step_px},         {"supersample", f.supersample}};
    const auto& b = c.background;
    j["background"] = {{"base_gray", range_json(b.base_gray)},
                       {"disc_count", range_json(b.disc_count)},
                       {"disc_radius_px", range_json(b.disc_radius_px)},
                       {"disc_brightness", range_json(b.disc_brightness)},
                       {"strip_lift", b.strip_lift}};
    const auto& e = c.effects;
    j["effects"] = {{"shadow_strength", range_json(e.shadow_strength)},
                    {"shadow_dx", range_json(e.shadow_dx)},
                    {"shadow_dy", range_json(e.shadow_dy)},
                    {"shadow_blur_sigma", range_json(e.shadow_blur_sigma)},
                    {"reflection_strength", range_json(e.reflection_strength)},
                    {"strip_count", range_json(e.strip_count)},
                    {"strip_width_px", range_json(e.strip_width_px)},
                    {"noise_sigma", range_json(e.noise_sigma)}};
    const auto& s = c.scribbles;
    j["scribbles"] = {{"background_strokes", range_json(s.background_strokes)},
                      {"foreground_strokes", range_json(s.foreground_strokes)},
                      {"stroke_steps", s.stroke_steps},
                      {"brush_radius", s.brush_radius},
                      {"alteration_threshold", s.alteration_threshold}};
    return j;
}

DatasetManifest gen_dataset(const GeneratorConfig& cfg, std::uint64_t seed, const fs::path& out_dir)
{
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory " + out_dir.string());

    struct Job {
        Role role;
        int index;
    };
    std::vector<Job> jobs;
    for (Role r : {Role::Base, Role::CaptureStage, Role::Unlabeled, Role::Validation}) {
        const int n = cfg.count(r);
        if (n < 0) throw DataError("negative sample count for role " + to_string(r));
        if (n > 0) fs::create_directories(out_dir / to_string(r), ec);
        if (ec) throw IoError("cannot create " + (out_dir / to_string(r)).string());
        for (int i = 0; i < n; ++i) jobs.push_back({r, i});
    }

    std::vector<ManifestRecord> records(jobs.size());
    std::vector<std::string> errors(jobs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t k = 0; k < jobs.size(); ++k) {
        try {
            const SceneSample s = gen_scene(jobs[k].role, jobs[k].index, cfg, seed);
            const std::string dir = to_string(s.role) + "/";
            ManifestRecord r;
            r.id = s.id;
            r.role = s.role;
            r.seed = s.seed;
            r.image = dir + s.id + "_image.png";
            r.background = dir + s.id + "_background.png";
            save_png(s.image, out_dir / r.image);
            save_png(s.background, out_dir / r.background);
            if (s.role == Role::Base || s.role == Role::Validation) {
                r.alpha_gt = dir + s.id + "_alpha.png";
                save_png(s.alpha_gt, out_dir / *r.alpha_gt);
            }
            if (s.role == Role::CaptureStage) {
                r.scribbles = dir + s.id + "_scribbles.png";
                save_png(simulate_scribbles(s, cfg.scribbles, derive_seed(s.seed, "annotator")), out_dir / *r.scribbles);
            }
            if (s.role != Role::Base) r.effects = to_json(s.effects);
            records[k] = std::move(r);
        } catch (const std::exception& e) {
            errors[k] = e.what();
        }
    }
    for (const auto& e : errors)
        if (!e.empty()) throw IoError("gen_dataset: " + e);

    DatasetManifest manifest(out_dir, std::move(records));
    manifest.save(out_dir / "manifest.jsonl");
    return manifest;
}

}  // namespace stagematte::sim
