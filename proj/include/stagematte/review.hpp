#pragma once

#include "stagematte/image.hpp"

namespace stagematte {

/// Channel-mean |I - B|, divided by its maximum (all zero if I == B).
AlphaMask diff_layer(const Image& image, const Image& background);

/// Side-by-side triage sheet: image | background | prediction | diff.
Image review_sheet(const Image& image, const Image& background, const AlphaMask& prediction);

}  // namespace stagematte
