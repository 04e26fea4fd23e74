#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <vector>

#include "setforge/common.hpp"
#include "setforge/expr.hpp"

namespace setforge {

// ----------------------------------------------------------------------------
// Range boxes and images
// ----------------------------------------------------------------------------

struct RangeBox {
    double x_lo{};
    double x_hi{};
    double y_lo{};
    double y_hi{};
};

/// The three range breakpoints that define the four channel boxes.
struct ImageRanges {
    double l = 0.1;
    double m = 1.0;
    double h = 7.0;

    std::array<RangeBox, 4> boxes() const {
        return {{
            {l, m, l, m},
            {l, m, m, h},
            {m, h, l, m},
            {m, h, m, h},
        }};
    }
};

/// A digitized multi-channel function image. Data is channel-major: channel c,
/// then row i (the x axis), then column j (the y axis).
struct FunctionImage {
    std::uint16_t height = 0;
    std::uint16_t width = 0;
    std::uint8_t channels = 0;
    bool clean = true;
    std::vector<std::uint8_t> data;

    std::size_t pixel_count() const {
        return static_cast<std::size_t>(channels) * height * width;
    }

    std::uint8_t at(int c, int i, int j) const {
        return data[(static_cast<std::size_t>(c) * height + static_cast<std::size_t>(i)) * width +
                    static_cast<std::size_t>(j)];
    }

    bool operator==(const FunctionImage&) const = default;
};

/// A dense real-valued grid, row-major.
struct GridMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    GridMatrix() = default;
    GridMatrix(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c) {}

    double& at(int i, int j) { return v[static_cast<std::size_t>(i) * cols + j]; }
    double at(int i, int j) const { return v[static_cast<std::size_t>(i) * cols + j]; }
};

// ----------------------------------------------------------------------------
// Sampling, noise, digitization
// ----------------------------------------------------------------------------

namespace detail {

/// Inclusive linear spacing; the last point is pinned to `hi` exactly so that
/// shared box edges land on the same coordinate.
inline double lin_point(double lo, double hi, int i, int n) {
    if (i == n - 1) {
        return hi;
    }
    return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
}

}  // namespace detail

/// Samples f over an n-by-n inclusive grid; element (i, j) = f(x_i, y_j) with
/// the row index walking x. Returns nullopt if any grid point hits a domain
/// error, which rejects the whole expression upstream.
inline std::optional<GridMatrix> sample_grid(const Expr& tree, const RangeBox& box, int n) {
    GridMatrix z(n, n);
    for (int i = 0; i < n; ++i) {
        const double x = detail::lin_point(box.x_lo, box.x_hi, i, n);
        for (int j = 0; j < n; ++j) {
            const double y = detail::lin_point(box.y_lo, box.y_hi, j, n);
            const auto value = evaluate(tree, x, y);
            if (!value) {
                return std::nullopt;
            }
            z.at(i, j) = *value;
        }
    }
    return z;
}

/// In-place relative noise: z <- (1 + 0.01 * eps) * z with eps ~ N(0, 1) drawn
/// per element in row-major order.
inline void apply_relative_noise(GridMatrix& z, Rng& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double& value : z.v) {
        value *= 1.0 + 0.01 * gauss(rng);
    }
}

/// Linear map to [0, 255] with half-away-from-zero rounding. A constant grid
/// maps to all zeros.
inline void digitize(const GridMatrix& z, std::uint8_t* out) {
    const auto [lo_it, hi_it] = std::minmax_element(z.v.begin(), z.v.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (hi == lo) {
        std::fill_n(out, z.v.size(), std::uint8_t{0});
        return;
    }
    const double scale = 255.0 / (hi - lo);
    for (std::size_t i = 0; i < z.v.size(); ++i) {
        out[i] = static_cast<std::uint8_t>(std::lround((z.v[i] - lo) * scale));
    }
}

// ----------------------------------------------------------------------------
// Rendering
// ----------------------------------------------------------------------------

struct RenderConfig {
    int resolution = 32;
    bool noisy = false;
    ImageRanges ranges{};
};

/// Renders all four channels. Noise, when enabled, uses a per-channel
/// substream derived from (noise_seed, channel) so channels are independent
/// and the result does not depend on evaluation order.
inline std::optional<FunctionImage> render(const Expr& tree, const RenderConfig& cfg,
                                           std::uint64_t noise_seed = 0) {
    const int n = cfg.resolution;
    const auto boxes = cfg.ranges.boxes();

    FunctionImage img;
    img.height = static_cast<std::uint16_t>(n);
    img.width = static_cast<std::uint16_t>(n);
    img.channels = static_cast<std::uint8_t>(boxes.size());
    img.clean = !cfg.noisy;
    img.data.resize(img.pixel_count());

    for (std::size_t c = 0; c < boxes.size(); ++c) {
        auto grid = sample_grid(tree, boxes[c], n);
        if (!grid) {
            return std::nullopt;
        }
        if (cfg.noisy) {
            Rng rng = make_rng(derive_seed(noise_seed, c));
            apply_relative_noise(*grid, rng);
        }
        digitize(*grid, img.data.data() + c * static_cast<std::size_t>(n) * n);
    }
    return img;
}

struct RenderedPair {
    FunctionImage clean;
    FunctionImage noisy;
};

/// Renders the clean and noisy variants while sampling each grid only once.
inline std::optional<RenderedPair> render_pair(const Expr& tree, int resolution,
                                               const ImageRanges& ranges,
                                               std::uint64_t noise_seed) {
    const int n = resolution;
    const auto boxes = ranges.boxes();

    RenderedPair out;
    for (FunctionImage* img : {&out.clean, &out.noisy}) {
        img->height = static_cast<std::uint16_t>(n);
        img->width = static_cast<std::uint16_t>(n);
        img->channels = static_cast<std::uint8_t>(boxes.size());
        img->data.resize(img->pixel_count());
    }
    out.clean.clean = true;
    out.noisy.clean = false;

    for (std::size_t c = 0; c < boxes.size(); ++c) {
        auto grid = sample_grid(tree, boxes[c], n);
        if (!grid) {
            return std::nullopt;
        }
        const std::size_t offset = c * static_cast<std::size_t>(n) * n;
        digitize(*grid, out.clean.data.data() + offset);
        Rng rng = make_rng(derive_seed(noise_seed, c));
        apply_relative_noise(*grid, rng);
        digitize(*grid, out.noisy.data.data() + offset);
    }
    return out;
}

// ----------------------------------------------------------------------------
// Binary image format
//
// Little-endian. Header: magic "SETI", version u8 = 1, H u16, W u16, C u8,
// clean flag u8 (1 = clean). Payload: C*H*W raw bytes, channel-major.
// ----------------------------------------------------------------------------

inline constexpr std::array<char, 4> image_magic{'S', 'E', 'T', 'I'};
inline constexpr std::uint8_t image_format_version = 1;

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline std::uint16_t get_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

inline std::string serialize_image(const FunctionImage& img) {
    std::string out;
    out.reserve(11 + img.data.size());
    out.append(image_magic.data(), image_magic.size());
    out.push_back(static_cast<char>(image_format_version));
    detail::put_u16(out, img.height);
    detail::put_u16(out, img.width);
    out.push_back(static_cast<char>(img.channels));
    out.push_back(static_cast<char>(img.clean ? 1 : 0));
    out.append(reinterpret_cast<const char*>(img.data.data()), img.data.size());
    return out;
}

inline FunctionImage deserialize_image(const unsigned char* bytes, std::size_t size) {
    if (size < 11) {
        throw FormatError("truncated image header");
    }
    if (std::memcmp(bytes, image_magic.data(), image_magic.size()) != 0) {
        throw FormatError("bad image magic");
    }
    if (bytes[4] != image_format_version) {
        throw FormatError("unsupported image format version");
    }
    FunctionImage img;
    img.height = detail::get_u16(bytes + 5);
    img.width = detail::get_u16(bytes + 7);
    img.channels = bytes[9];
    img.clean = bytes[10] != 0;
    const std::size_t payload = img.pixel_count();
    if (size != 11 + payload) {
        throw FormatError("image payload size mismatch");
    }
    img.data.assign(bytes + 11, bytes + 11 + payload);
    return img;
}

inline void save_image(const FunctionImage& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    const std::string bytes = serialize_image(img);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

inline FunctionImage load_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open for reading: " + path.string());
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_image(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
}

// ----------------------------------------------------------------------------
// RGB visualization (first three channels)
// ----------------------------------------------------------------------------

/// Plain RGB raster used for visualization exports.
struct RgbImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> rgb;  // 3 bytes per pixel, row-major

    RgbImage() = default;
    RgbImage(int h, int w) : height(h), width(w), rgb(static_cast<std::size_t>(h) * w * 3, 0) {}

    std::uint8_t* pixel(int i, int j) {
        return rgb.data() + (static_cast<std::size_t>(i) * width + j) * 3;
    }
};

/// Maps the first three channels of a function image onto R, G and B.
inline RgbImage to_rgb(const FunctionImage& img) {
    RgbImage out(img.height, img.width);
    for (int i = 0; i < img.height; ++i) {
        for (int j = 0; j < img.width; ++j) {
            std::uint8_t* px = out.pixel(i, j);
            for (int c = 0; c < 3; ++c) {
                px[c] = c < img.channels ? img.at(c, i, j) : 0;
            }
        }
    }
    return out;
}

inline void save_ppm(const RgbImage& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.rgb.data()),
              static_cast<std::streamsize>(img.rgb.size()));
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

}  // namespace setforge
