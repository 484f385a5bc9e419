#pragma once

// Image and grid files.
//
//   8-bit grayscale: binary PGM (P5) or PNG, chosen by extension. Values are scaled from
//   [min, max] to 0..255 and the range is stored in a JSON sidecar (<file>.json) so a
//   reader can map back. Without a sidecar, 0..255 maps to [0, 1].
//   Float grid (.f32): 16-byte little-endian header {magic "GFAO", width, height, reserved 0}
//   followed by width * height float32 samples, row-major, little-endian.
//   Phase renders: RGB PNG through a cyclic hue wheel over [-pi, pi); pixels outside the
//   aperture are black.

#include <png.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "gfao/aperture.hpp"
#include "gfao/grid.hpp"
#include "gfao/phase_map.hpp"

namespace gfao::io {

namespace fs = std::filesystem;

struct Range {
    double min = 0.0;
    double max = 1.0;
};

inline std::vector<unsigned char> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed on '" + path.string() + "'");
    return bytes;
}

inline void write_bytes(const fs::path& path, const void* data, std::size_t size) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) throw IoError("write failed on '" + path.string() + "'");
}

inline void write_text(const fs::path& path, const std::string& text) { write_bytes(path, text.data(), text.size()); }

// ---- float grid

inline constexpr std::array<unsigned char, 4> kGridMagic{'G', 'F', 'A', 'O'};

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

}  // namespace detail

/// Samples are narrowed to float32.
inline void write_float_grid(const fs::path& path, const RealGrid& g) {
    std::vector<unsigned char> out(kGridMagic.begin(), kGridMagic.end());
    out.reserve(16 + 4 * g.size());
    detail::put_u32(out, static_cast<std::uint32_t>(g.cols()));
    detail::put_u32(out, static_cast<std::uint32_t>(g.rows()));
    detail::put_u32(out, 0);
    for (double v : g) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    write_bytes(path, out.data(), out.size());
}

[[nodiscard]] inline RealGrid read_float_grid(const fs::path& path) {
    const auto bytes = read_bytes(path);
    const std::string name = path.string();
    if (bytes.size() < 16) throw FormatError("'" + name + "': truncated header");
    if (!std::equal(kGridMagic.begin(), kGridMagic.end(), bytes.begin())) throw FormatError("'" + name + "': bad magic");
    const std::uint64_t w = detail::get_u32(bytes.data() + 4);
    const std::uint64_t h = detail::get_u32(bytes.data() + 8);
    if (w == 0 || h == 0) throw FormatError("'" + name + "': empty grid");
    if (bytes.size() - 16 != 4 * w * h)
        throw FormatError("'" + name + "': payload size does not match " + std::to_string(w) + "x" + std::to_string(h));
    RealGrid g(static_cast<std::size_t>(h), static_cast<std::size_t>(w));
    for (std::size_t i = 0; i < g.size(); ++i)
        g[i] = static_cast<double>(std::bit_cast<float>(detail::get_u32(bytes.data() + 16 + 4 * i)));
    return g;
}

// ---- 8-bit

inline fs::path sidecar_path(const fs::path& image) { return fs::path(image.string() + ".json"); }

[[nodiscard]] inline std::vector<unsigned char> to_gray8(const RealGrid& g, Range r) {
    const double span = r.max > r.min ? r.max - r.min : 1.0;
    std::vector<unsigned char> px(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = std::isfinite(g[i]) ? (g[i] - r.min) / span : 0.0;
        px[i] = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
    return px;
}

namespace detail {

inline bool has_extension(const fs::path& p, const char* ext) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return e == ext;
}

inline void write_pgm(const fs::path& path, const std::vector<unsigned char>& px, std::size_t w, std::size_t h) {
    std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    std::vector<unsigned char> out(header.begin(), header.end());
    out.insert(out.end(), px.begin(), px.end());
    write_bytes(path, out.data(), out.size());
}

inline std::vector<unsigned char> read_pgm(const fs::path& path, std::size_t& w, std::size_t& h) {
    const auto bytes = read_bytes(path);
    const std::string name = path.string();
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto number = [&] {
        skip_space();
        std::size_t v = 0;
        std::size_t digits = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos]) && digits < 9) {
            v = v * 10 + static_cast<std::size_t>(bytes[pos++] - '0');
            ++digits;
        }
        if (digits == 0) throw FormatError("'" + name + "': malformed PGM header");
        return v;
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw FormatError("'" + name + "': not a binary PGM");
    pos = 2;
    w = number();
    h = number();
    const std::size_t maxval = number();
    if (w == 0 || h == 0 || maxval == 0 || maxval > 255) throw FormatError("'" + name + "': unsupported PGM geometry");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("'" + name + "': malformed PGM header");
    ++pos;
    if (bytes.size() - pos < w * h) throw FormatError("'" + name + "': truncated PGM data");
    std::vector<unsigned char> px(bytes.begin() + static_cast<long>(pos), bytes.begin() + static_cast<long>(pos + w * h));
    if (maxval != 255)
        for (auto& v : px) v = static_cast<unsigned char>(std::lround(255.0 * std::min<double>(v, maxval) / maxval));
    return px;
}

struct PngBuffer {
    const std::vector<unsigned char>* bytes;
    std::size_t pos;
};

inline void png_read_mem(png_structp png, png_bytep out, png_size_t n) {
    auto* buf = static_cast<PngBuffer*>(png_get_io_ptr(png));
    if (buf->bytes->size() - buf->pos < n) png_error(png, "truncated data");
    std::memcpy(out, buf->bytes->data() + buf->pos, n);
    buf->pos += n;
}

inline void png_write_mem(png_structp png, png_bytep data, png_size_t n) {
    auto* out = static_cast<std::vector<unsigned char>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + n);
}

inline void png_flush_mem(png_structp) {}

inline void png_silent_warning(png_structp, png_const_charp) {}

/// channels 1 (gray) or 3 (RGB), 8 bits.
inline void write_png(const fs::path& path, const std::vector<unsigned char>& px, std::size_t w, std::size_t h,
                      int channels) {
    std::vector<unsigned char> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_silent_warning);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG encoding failed for '" + path.string() + "'");
    }
    png_set_write_fn(png, &out, png_write_mem, png_flush_mem);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = w * static_cast<std::size_t>(channels);
    for (std::size_t r = 0; r < h; ++r) png_write_row(png, const_cast<png_bytep>(px.data() + r * stride));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    write_bytes(path, out.data(), out.size());
}

/// Any PNG, converted to 8-bit gray.
inline std::vector<unsigned char> read_png(const fs::path& path, std::size_t& w, std::size_t& h) {
    const auto bytes = read_bytes(path);
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw FormatError("'" + path.string() + "': not a PNG");
    PngBuffer buf{&bytes, 0};
    std::vector<unsigned char> px;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_silent_warning);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("'" + path.string() + "': corrupt or truncated PNG");
    }
    png_set_read_fn(png, &buf, png_read_mem);
    png_read_info(png, info);
    const png_byte color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE)
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    png_read_update_info(png, info);
    w = png_get_image_width(png, info);
    h = png_get_image_height(png, info);
    if (png_get_rowbytes(png, info) != w) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("'" + path.string() + "': unsupported PNG layout");
    }
    px.resize(w * h);
    for (std::size_t r = 0; r < h; ++r) png_read_row(png, px.data() + r * w, nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return px;
}

}  // namespace detail

/// Writes an 8-bit image (.pgm or .png) plus its range sidecar. The range defaults to the
/// grid's own min/max.
inline void write_gray8(const fs::path& path, const RealGrid& g, std::optional<Range> range = std::nullopt) {
    if (g.empty()) throw ArgumentError("write_gray8: empty grid");
    Range r = range.value_or(Range{*std::min_element(g.begin(), g.end()), *std::max_element(g.begin(), g.end())});
    const auto px = to_gray8(g, r);
    if (detail::has_extension(path, ".pgm"))
        detail::write_pgm(path, px, g.cols(), g.rows());
    else if (detail::has_extension(path, ".png"))
        detail::write_png(path, px, g.cols(), g.rows(), 1);
    else
        throw ArgumentError("write_gray8: use a .pgm or .png extension");
    nlohmann::ordered_json side;
    side["schema"] = "gfao.image8/1";
    side["min"] = r.min;
    side["max"] = r.max;
    write_text(sidecar_path(path), side.dump(2) + "\n");
}

/// Reads an 8-bit .pgm or .png; applies the sidecar range when present.
[[nodiscard]] inline RealGrid read_gray8(const fs::path& path) {
    std::size_t w = 0, h = 0;
    std::vector<unsigned char> px;
    if (detail::has_extension(path, ".pgm"))
        px = detail::read_pgm(path, w, h);
    else if (detail::has_extension(path, ".png"))
        px = detail::read_png(path, w, h);
    else
        throw ArgumentError("read_gray8: use a .pgm or .png extension");
    Range r;
    if (fs::exists(sidecar_path(path))) {
        const auto text = read_bytes(sidecar_path(path));
        try {
            const auto side = nlohmann::json::parse(text.begin(), text.end());
            r = {side.at("min").get<double>(), side.at("max").get<double>()};
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("'" + sidecar_path(path).string() + "': " + e.what());
        }
    }
    RealGrid g(h, w);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = r.min + (r.max - r.min) * (px[i] / 255.0);
    return g;
}

/// .f32 grids load exactly; 8-bit images go through read_gray8.
[[nodiscard]] inline RealGrid read_grid_any(const fs::path& path) {
    if (detail::has_extension(path, ".f32")) return read_float_grid(path);
    return read_gray8(path);
}

// ---- phase colormap

/// Hue wheel with fixed saturation/value; hue 0 (red) at -pi, continuous across the wrap.
[[nodiscard]] inline std::array<unsigned char, 3> cyclic_color(double phase) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double t = std::fmod(phase + std::numbers::pi, two_pi);
    if (t < 0.0) t += two_pi;
    const double h = 6.0 * t / two_pi;
    const double s = 0.8, v = 0.95;
    const int sector = std::min(static_cast<int>(h), 5);
    const double f = h - sector;
    const double p = v * (1 - s), q = v * (1 - s * f), u = v * (1 - s * (1 - f));
    double rgb[3];
    switch (sector) {
        case 0: rgb[0] = v, rgb[1] = u, rgb[2] = p; break;
        case 1: rgb[0] = q, rgb[1] = v, rgb[2] = p; break;
        case 2: rgb[0] = p, rgb[1] = v, rgb[2] = u; break;
        case 3: rgb[0] = p, rgb[1] = q, rgb[2] = v; break;
        case 4: rgb[0] = u, rgb[1] = p, rgb[2] = v; break;
        default: rgb[0] = v, rgb[1] = p, rgb[2] = q; break;
    }
    return {static_cast<unsigned char>(std::lround(255 * rgb[0])), static_cast<unsigned char>(std::lround(255 * rgb[1])),
            static_cast<unsigned char>(std::lround(255 * rgb[2]))};
}

inline void write_phase_png(const fs::path& path, const PhaseMap& phase, const Aperture* mask = nullptr) {
    const std::size_t n = phase.n();
    std::vector<unsigned char> px(3 * n * n, 0);
    for (std::size_t i = 0; i < n * n; ++i) {
        if (mask && mask->amplitude()[i] <= 0.0) continue;
        const auto c = cyclic_color(phase.values()[i]);
        std::copy(c.begin(), c.end(), px.begin() + static_cast<long>(3 * i));
    }
    detail::write_png(path, px, n, n, 3);
}

/// Bitmap aperture from an image: amplitude = normalised pixel value.
[[nodiscard]] inline Aperture load_bitmap_aperture(const fs::path& path) {
    RealGrid g = read_grid_any(path);
    for (double& v : g) v = std::clamp(v, 0.0, 1.0);
    return Aperture(std::move(g), ApertureShape::bitmap);
}

}  // namespace gfao::io
