#include "stagematte/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace stagematte {

namespace fs = std::filesystem;

std::uint8_t quantize(float v) noexcept
{
    return static_cast<std::uint8_t>(std::floor(clamp_unit(v) * 255.f + 0.5f));
}

namespace {

struct Decoded {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> samples;
};

// libpng's simplified API; `format` is PNG_FORMAT_GRAY or PNG_FORMAT_RGB.
Decoded decode(std::span<const std::uint8_t> bytes, png_uint_32 format, const std::string& what)
{
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
        throw IoError("malformed PNG " + what + ": " + image.message);
    const bool is_8bit = (image.format & PNG_FORMAT_FLAG_LINEAR) == 0;
    if (!is_8bit) {
        png_image_free(&image);
        throw IoError("unsupported PNG " + what + ": only 8-bit files are supported");
    }
    image.format = format;
    Decoded out;
    out.width = static_cast<int>(image.width);
    out.height = static_cast<int>(image.height);
    out.samples.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, out.samples.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw IoError("malformed PNG " + what + ": " + msg);
    }
    return out;
}

std::vector<std::uint8_t> encode(int width, int height, png_uint_32 format, const std::vector<std::uint8_t>& samples)
{
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width);
    image.height = static_cast<png_uint_32>(height);
    image.format = format;
    png_alloc_size_t size = 0;
    if (!png_image_write_get_memory_size(image, size, 0, samples.data(), 0, nullptr))
        throw IoError(std::string("PNG encode failed: ") + image.message);
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, samples.data(), 0, nullptr))
        throw IoError(std::string("PNG encode failed: ") + image.message);
    out.resize(size);
    return out;
}

template <int C>
std::vector<std::uint8_t> quantize_all(const Raster<C>& r)
{
    std::vector<std::uint8_t> q(r.values().size());
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = quantize(r[i]);
    return q;
}

template <int C>
Raster<C> to_raster(const Decoded& d)
{
    std::vector<float> v(d.samples.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(d.samples[i]) / 255.f;
    return Raster<C>(d.width, d.height, std::move(v));
}

template <typename Enum>
LabelGrid<Enum> to_labels(const Decoded& d, const std::string& what)
{
    LabelGrid<Enum> out(d.width, d.height, Enum{128});
    for (std::size_t i = 0; i < d.samples.size(); ++i) {
        const std::uint8_t s = d.samples[i];
        if (s != 0 && s != 128 && s != 255)
            throw FormatError("invalid " + what + " value " + std::to_string(s) + " at pixel (" +
                              std::to_string(i % d.width) + "," + std::to_string(i / d.width) +
                              "); allowed values are 0, 128, 255");
        out.set_flat(i, static_cast<Enum>(s));
    }
    return out;
}

template <typename Enum>
std::vector<std::uint8_t> label_samples(const LabelGrid<Enum>& g)
{
    std::vector<std::uint8_t> q(g.pixel_count());
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = static_cast<std::uint8_t>(g[i]);
    return q;
}

}  // namespace

std::vector<std::uint8_t> read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes)
{
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::vector<std::uint8_t> encode_png(const Image& img)
{
    return encode(img.width(), img.height(), PNG_FORMAT_RGB, quantize_all(img));
}

std::vector<std::uint8_t> encode_png(const AlphaMask& mask)
{
    return encode(mask.width(), mask.height(), PNG_FORMAT_GRAY, quantize_all(mask));
}

std::vector<std::uint8_t> encode_png(const ScribbleMap& s)
{
    return encode(s.width(), s.height(), PNG_FORMAT_GRAY, label_samples(s));
}

AlphaMask decode_mask(std::span<const std::uint8_t> bytes)
{
    return to_raster<1>(decode(bytes, PNG_FORMAT_GRAY, "mask"));
}

ScribbleMap decode_scribbles(std::span<const std::uint8_t> bytes)
{
    return to_labels<Scribble>(decode(bytes, PNG_FORMAT_GRAY, "scribble map"), "scribble");
}

Image load_image(const fs::path& path)
{
    return to_raster<3>(decode(read_file(path), PNG_FORMAT_RGB, path.string()));
}

AlphaMask load_mask(const fs::path& path)
{
    return to_raster<1>(decode(read_file(path), PNG_FORMAT_GRAY, path.string()));
}

ScribbleMap load_scribbles(const fs::path& path)
{
    return to_labels<Scribble>(decode(read_file(path), PNG_FORMAT_GRAY, path.string()), "scribble");
}

Trimap load_trimap(const fs::path& path)
{
    return to_labels<TrimapLabel>(decode(read_file(path), PNG_FORMAT_GRAY, path.string()), "trimap");
}

void save_png(const Image& img, const fs::path& path) { write_file_atomic(path, encode_png(img)); }
void save_png(const AlphaMask& mask, const fs::path& path) { write_file_atomic(path, encode_png(mask)); }
void save_png(const ScribbleMap& s, const fs::path& path) { write_file_atomic(path, encode_png(s)); }

void save_png(const Trimap& t, const fs::path& path)
{
    write_file_atomic(path, encode(t.width(), t.height(), PNG_FORMAT_GRAY, label_samples(t)));
}

}  // namespace stagematte
