#include "stagematte/qc.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include <json.hpp>

namespace stagematte::qc {

Trimap trimap_from_alpha(const AlphaMask& g, int band_radius)
{
    if (band_radius < 1) throw DataError("trimap band radius must be >= 1, got " + std::to_string(band_radius));
    const int w = g.width(), h = g.height();
    std::vector<std::uint8_t> seed(g.pixel_count(), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const float v = g.at(x, y);
            bool s = v > 0.001f && v < 0.999f;
            if (!s && v >= 0.5f) {
                const int nx[4] = {x - 1, x + 1, x, x};
                const int ny[4] = {y, y, y - 1, y + 1};
                for (int k = 0; k < 4 && !s; ++k)
                    s = nx[k] >= 0 && nx[k] < w && ny[k] >= 0 && ny[k] < h && g.at(nx[k], ny[k]) < 0.5f;
            }
            seed[static_cast<std::size_t>(y) * w + x] = s;
        }

    // Separable square dilation with half-width band_radius - 1.
    const int r = band_radius - 1;
    std::vector<std::uint8_t> rows(seed.size(), 0), band(seed.size(), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            std::uint8_t any = 0;
            for (int k = std::max(0, x - r); k <= std::min(w - 1, x + r) && !any; ++k)
                any = seed[static_cast<std::size_t>(y) * w + k];
            rows[static_cast<std::size_t>(y) * w + x] = any;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            std::uint8_t any = 0;
            for (int k = std::max(0, y - r); k <= std::min(h - 1, y + r) && !any; ++k)
                any = rows[static_cast<std::size_t>(k) * w + x];
            band[static_cast<std::size_t>(y) * w + x] = any;
        }

    Trimap out(w, h, TrimapLabel::Background);
    for (std::size_t i = 0; i < band.size(); ++i)
        out.set_flat(i, band[i] ? TrimapLabel::Unknown : (g[i] >= 0.5f ? TrimapLabel::Foreground : TrimapLabel::Background));
    return out;
}

SolveResult supervise_solve(const Image& image, const Trimap& trimap, const SolveOptions& opt)
{
    if (!trimap.same_size(image))
        throw DimensionError("supervise_solve: trimap " + std::to_string(trimap.width()) + "x" +
                             std::to_string(trimap.height()) + " does not match image " +
                             std::to_string(image.width()) + "x" + std::to_string(image.height()));
    if (!(opt.h > 0.0)) throw DataError("supervise_solve: h must be > 0");
    const int w = image.width(), h = image.height();
    const std::size_t n = trimap.pixel_count();

    std::vector<double> a(n, 0.5);
    std::vector<std::size_t> unknown;
    for (std::size_t i = 0; i < n; ++i) {
        if (trimap[i] == TrimapLabel::Foreground) a[i] = 1.0;
        else if (trimap[i] == TrimapLabel::Background) a[i] = 0.0;
        else unknown.push_back(i);
    }

    // Unknown pixels connected to some label through the band.
    std::vector<std::uint8_t> reached(n, 0);
    std::deque<std::size_t> queue;
    for (std::size_t i = 0; i < n; ++i)
        if (trimap[i] != TrimapLabel::Unknown) {
            reached[i] = 1;
            queue.push_back(i);
        }
    auto neighbours = [&](std::size_t i, auto&& fn) {
        const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
        if (x > 0) fn(i - 1);
        if (x + 1 < w) fn(i + 1);
        if (y > 0) fn(i - w);
        if (y + 1 < h) fn(i + w);
    };
    while (!queue.empty()) {
        const std::size_t i = queue.front();
        queue.pop_front();
        neighbours(i, [&](std::size_t j) {
            if (!reached[j]) {
                reached[j] = 1;
                queue.push_back(j);
            }
        });
    }

    SolveResult res;
    std::vector<std::size_t> active;
    for (std::size_t i : unknown) {
        if (reached[i]) active.push_back(i);
        else ++res.unreachable;
    }

    const double inv_h2 = 1.0 / (opt.h * opt.h);
    struct Edge {
        std::size_t j;
        double w;
    };
    std::vector<std::vector<Edge>> edges(active.size());
    for (std::size_t k = 0; k < active.size(); ++k) {
        const std::size_t i = active[k];
        neighbours(i, [&](std::size_t j) {
            double d2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double d = static_cast<double>(image[i * 3 + c]) - image[j * 3 + c];
                d2 += d * d;
            }
            edges[k].push_back({j, std::exp(-d2 * inv_h2)});
        });
    }

    std::vector<double> next(active.size());
    for (int it = 0; it < opt.max_iterations && !active.empty(); ++it) {
        double max_update = 0.0;
        for (std::size_t k = 0; k < active.size(); ++k) {
            double num = 0.0, den = 0.0;
            for (const Edge& e : edges[k]) {
                num += e.w * a[e.j];
                den += e.w;
            }
            next[k] = den > 0.0 ? num / den : a[active[k]];
            max_update = std::max(max_update, std::fabs(next[k] - a[active[k]]));
        }
        for (std::size_t k = 0; k < active.size(); ++k) a[active[k]] = next[k];
        res.updates.push_back(max_update);
        if (max_update < opt.tol) break;
    }

    std::vector<float> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = static_cast<float>(std::clamp(a[i], 0.0, 1.0));
    res.alpha = AlphaMask(w, h, std::move(values));
    return res;
}

QCReport qc_validate(const std::map<std::string, AlphaMask>& candidates,
                     const std::map<std::string, AlphaMask>& supervisors, const std::map<std::string, Trimap>& trimaps,
                     const Thresholds& thresholds, int band_radius)
{
    std::map<std::string, metrics::Region> regions;
    for (const auto& [id, t] : trimaps) {
        regions.emplace(id, metrics::unknown_region(t));
        if (regions.at(id).count() == 0) throw DataError("qc: sample " + id + " has an empty unknown band");
    }
    for (const auto& [id, _] : candidates)
        if (!trimaps.contains(id)) throw DataError("qc: id mismatch, missing trimap:" + id);

    QCReport rep;
    rep.band_radius = band_radius;
    rep.thresholds = thresholds;
    rep.summary = metrics::evaluate_dataset(candidates, supervisors, &regions);
    for (const auto& s : rep.summary.per_sample) {
        QCSample q{s.id, s, true};
        if (thresholds.mse && !(s.mse <= *thresholds.mse)) q.pass = false;
        if (thresholds.sad && !(s.sad <= *thresholds.sad)) q.pass = false;
        if (thresholds.grad && !(s.grad <= *thresholds.grad)) q.pass = false;
        rep.passed += q.pass;
        rep.samples.push_back(std::move(q));
    }
    return rep;
}

std::string render_json(const QCReport& r)
{
    nlohmann::ordered_json j;
    j["band_radius"] = r.band_radius;
    nlohmann::ordered_json th = nlohmann::ordered_json::object();
    if (r.thresholds.mse) th["mse"] = *r.thresholds.mse;
    if (r.thresholds.sad) th["sad"] = *r.thresholds.sad;
    if (r.thresholds.grad) th["grad"] = *r.thresholds.grad;
    j["thresholds"] = th;
    j["passed"] = r.passed;
    j["total"] = r.samples.size();
    j["mean"] = {{"mse", r.summary.mse}, {"sad", r.summary.sad}, {"grad", r.summary.grad}};
    auto& arr = j["samples"] = nlohmann::ordered_json::array();
    for (const auto& s : r.samples)
        arr.push_back({{"id", s.id},
                       {"mse", s.band.mse},
                       {"sad", s.band.sad},
                       {"grad", s.band.grad},
                       {"band_pixels", s.band.pixel_count},
                       {"pass", s.pass}});
    return j.dump(2) + "\n";
}

std::string render_table(const QCReport& r)
{
    std::string out = metrics::render_table(r.summary, "band r=" + std::to_string(r.band_radius));
    out += "failed:";
    bool any = false;
    for (const auto& s : r.samples)
        if (!s.pass) {
            out += " " + s.id;
            any = true;
        }
    if (!any) out += " none";
    out += "\npassed " + std::to_string(r.passed) + "/" + std::to_string(r.samples.size()) + "\n";
    return out;
}

}  // namespace stagematte::qc
