#include "stagematte/review.hpp"

#include <algorithm>

namespace stagematte {

AlphaMask diff_layer(const Image& image, const Image& background)
{
    AlphaMask d = mean_abs_diff(image, background);
    float peak = 0.f;
    for (float v : d.values()) peak = std::max(peak, v);
    if (peak > 0.f)
        for (std::size_t i = 0; i < d.pixel_count(); ++i) d.set_flat(i, d[i] / peak);
    return d;
}

Image review_sheet(const Image& image, const Image& background, const AlphaMask& prediction)
{
    require_same_size("review (image, background)", image.width(), image.height(), background.width(),
                      background.height());
    require_same_size("review (image, prediction)", image.width(), image.height(), prediction.width(),
                      prediction.height());
    const int w = image.width(), h = image.height();
    const AlphaMask diff = diff_layer(image, background);
    Image out(4 * w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                out.set(x, y, c, image.at(x, y, c));
                out.set(w + x, y, c, background.at(x, y, c));
                out.set(2 * w + x, y, c, prediction.at(x, y));
                out.set(3 * w + x, y, c, diff.at(x, y));
            }
    return out;
}

}  // namespace stagematte
