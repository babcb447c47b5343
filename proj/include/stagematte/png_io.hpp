#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "stagematte/image.hpp"

namespace stagematte {

// 8-bit PNG codec. Values quantize as floor(v*255 + 0.5) and decode as v/255.
// AlphaMask and ScribbleMap use grayscale files, Image uses RGB. Scribble
// files must contain only 0 (background), 128 (unlabeled) and 255
// (foreground); any other sample is rejected.

std::uint8_t quantize(float v) noexcept;

Image load_image(const std::filesystem::path& path);
AlphaMask load_mask(const std::filesystem::path& path);
ScribbleMap load_scribbles(const std::filesystem::path& path);
Trimap load_trimap(const std::filesystem::path& path);

void save_png(const Image& img, const std::filesystem::path& path);
void save_png(const AlphaMask& mask, const std::filesystem::path& path);
void save_png(const ScribbleMap& scribbles, const std::filesystem::path& path);
void save_png(const Trimap& trimap, const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const Image& img);
std::vector<std::uint8_t> encode_png(const AlphaMask& mask);
std::vector<std::uint8_t> encode_png(const ScribbleMap& scribbles);

AlphaMask decode_mask(std::span<const std::uint8_t> bytes);
ScribbleMap decode_scribbles(std::span<const std::uint8_t> bytes);

/// Write `bytes` to a sibling temp file, then rename over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace stagematte
