#include "stagematte/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "stagematte/filters.hpp"

namespace stagematte::metrics {

std::size_t Region::count() const
{
    return static_cast<std::size_t>(std::count(inside.begin(), inside.end(), std::uint8_t{1}));
}

Region unknown_region(const Trimap& trimap)
{
    Region r(trimap.width(), trimap.height());
    for (std::size_t i = 0; i < trimap.pixel_count(); ++i) r.inside[i] = trimap[i] == TrimapLabel::Unknown;
    return r;
}

Region annotated_region(const ScribbleMap& s)
{
    Region r(s.width(), s.height());
    for (std::size_t i = 0; i < s.pixel_count(); ++i) r.inside[i] = s[i] != Scribble::Unlabeled;
    return r;
}

namespace {

void check_pair(const AlphaMask& m, const AlphaMask& g, const Region* region)
{
    require_same_size("metric(M,G)", m.width(), m.height(), g.width(), g.height());
    if (region) {
        require_same_size("metric region", m.width(), m.height(), region->width, region->height);
        if (region->count() == 0) throw DataError("metric over an empty region");
    }
}

template <typename PixelFn>
double region_mean(const AlphaMask& m, const AlphaMask& g, const Region* region, PixelFn&& fn)
{
    check_pair(m, g, region);
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < m.pixel_count(); ++i) {
        if (region && !region->contains(i)) continue;
        acc += fn(i);
        ++n;
    }
    return acc / static_cast<double>(n);
}

double mse_impl(const AlphaMask& m, const AlphaMask& g, const Region* region)
{
    return region_mean(m, g, region, [&](std::size_t i) {
        const double d = static_cast<double>(m[i]) - g[i];
        return d * d;
    });
}

double sad_impl(const AlphaMask& m, const AlphaMask& g, const Region* region)
{
    return region_mean(m, g, region, [&](std::size_t i) { return std::fabs(static_cast<double>(m[i]) - g[i]); });
}

Plane masked_plane(const AlphaMask& a, const Region* region)
{
    Plane p(a.width(), a.height());
    for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] = (region && !region->contains(i)) ? 0.0 : a[i];
    return p;
}

double grad_impl(const AlphaMask& m, const AlphaMask& g, const Region* region)
{
    check_pair(m, g, region);
    const GradientField gm = gaussian_gradient(masked_plane(m, region), kGradientSigma);
    const GradientField gg = gaussian_gradient(masked_plane(g, region), kGradientSigma);
    return region_mean(m, g, region, [&](std::size_t i) {
        const double a = std::hypot(gm.dx.v[i], gm.dy.v[i]);
        const double b = std::hypot(gg.dx.v[i], gg.dy.v[i]);
        return (a - b) * (a - b);
    });
}

}  // namespace

double mse(const AlphaMask& m, const AlphaMask& g) { return mse_impl(m, g, nullptr); }
double mse(const AlphaMask& m, const AlphaMask& g, const Region& r) { return mse_impl(m, g, &r); }
double sad(const AlphaMask& m, const AlphaMask& g) { return sad_impl(m, g, nullptr); }
double sad(const AlphaMask& m, const AlphaMask& g, const Region& r) { return sad_impl(m, g, &r); }
double grad(const AlphaMask& m, const AlphaMask& g) { return grad_impl(m, g, nullptr); }
double grad(const AlphaMask& m, const AlphaMask& g, const Region& r) { return grad_impl(m, g, &r); }

MetricReport evaluate_dataset(const std::map<std::string, AlphaMask>& predictions,
                              const std::map<std::string, AlphaMask>& ground_truths,
                              const std::map<std::string, Region>* regions)
{
    if (predictions.empty()) throw DataError("evaluate_dataset: empty prediction set");
    std::vector<std::string> missing;
    for (const auto& [id, _] : ground_truths)
        if (!predictions.contains(id)) missing.push_back("prediction:" + id);
    for (const auto& [id, _] : predictions) {
        if (!ground_truths.contains(id)) missing.push_back("ground_truth:" + id);
        if (regions && !regions->contains(id)) missing.push_back("region:" + id);
    }
    if (!missing.empty()) {
        std::string msg = "evaluate_dataset: id mismatch, missing";
        for (const auto& m : missing) msg += " " + m;
        throw DataError(msg);
    }

    MetricReport report;
    for (const auto& [id, pred] : predictions) {
        const AlphaMask& gt = ground_truths.at(id);
        SampleMetrics s;
        s.id = id;
        if (regions) {
            const Region& r = regions->at(id);
            s.mse = mse(pred, gt, r);
            s.sad = sad(pred, gt, r);
            s.grad = grad(pred, gt, r);
            s.pixel_count = r.count();
        } else {
            s.mse = mse(pred, gt);
            s.sad = sad(pred, gt);
            s.grad = grad(pred, gt);
            s.pixel_count = pred.pixel_count();
        }
        report.mse += s.mse;
        report.sad += s.sad;
        report.grad += s.grad;
        report.pixel_count += s.pixel_count;
        report.per_sample.push_back(std::move(s));
    }
    const double n = static_cast<double>(report.per_sample.size());
    report.mse /= n;
    report.sad /= n;
    report.grad /= n;
    return report;
}

std::string format_scaled(double value, double scale)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", value * scale);
    return buf;
}

std::string render_table(const MetricReport& report, const std::string& title)
{
    std::size_t name_w = std::max<std::size_t>(title.size(), 9);
    for (const auto& s : report.per_sample) name_w = std::max(name_w, s.id.size());
    auto row = [&](const std::string& name, const std::string& a, const std::string& b, const std::string& c) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%-*s %10s %10s %10s\n", static_cast<int>(name_w), name.c_str(), a.c_str(),
                      b.c_str(), c.c_str());
        return std::string(buf);
    };
    std::string out = row(title, "MSE", "SAD", "Grad");
    out += row("", "x1e-4", "x1e-3", "x1e-5");
    out += std::string(name_w + 33, '-') + "\n";
    for (const auto& s : report.per_sample)
        out += row(s.id, format_scaled(s.mse, kMseScale), format_scaled(s.sad, kSadScale),
                   format_scaled(s.grad, kGradScale));
    out += std::string(name_w + 33, '-') + "\n";
    out += row("mean", format_scaled(report.mse, kMseScale), format_scaled(report.sad, kSadScale),
               format_scaled(report.grad, kGradScale));
    return out;
}

std::string render_json(const MetricReport& report)
{
    nlohmann::ordered_json j;
    j["mse"] = report.mse;
    j["sad"] = report.sad;
    j["grad"] = report.grad;
    j["pixel_count"] = report.pixel_count;
    j["display"] = {{"mse_x1e4", format_scaled(report.mse, kMseScale)},
                    {"sad_x1e3", format_scaled(report.sad, kSadScale)},
                    {"grad_x1e5", format_scaled(report.grad, kGradScale)}};
    auto& arr = j["per_sample"] = nlohmann::ordered_json::array();
    for (const auto& s : report.per_sample)
        arr.push_back({{"id", s.id}, {"mse", s.mse}, {"sad", s.sad}, {"grad", s.grad}, {"pixel_count", s.pixel_count}});
    return j.dump(2) + "\n";
}

}  // namespace stagematte::metrics
