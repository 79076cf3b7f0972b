#pragma once

// Slice extraction and binary PGM (P5) output.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "msmorph/msmorph.hpp"

namespace msmorph::cli {

struct Gray8 {
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> pixels; ///< row-major, row 0 first

    Gray8(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h, fill) {}
    std::uint8_t& at(std::size_t u, std::size_t v) { return pixels[v * width + u]; }
};

/// In-plane axes (u, v) of a slice normal to `axis`.
inline std::array<int, 2> plane_axes(int axis)
{
    if (axis == 0)
        return {1, 2};
    if (axis == 1)
        return {0, 2};
    return {0, 1};
}

inline int parse_axis(const std::string& s)
{
    if (s == "x")
        return 0;
    if (s == "y")
        return 1;
    if (s == "z")
        return 2;
    throw InvalidArgument("axis must be x, y or z");
}

inline std::array<std::size_t, 3> voxel_of(int axis, std::size_t slice, std::size_t u, std::size_t v)
{
    const auto pa = plane_axes(axis);
    std::array<std::size_t, 3> p{};
    p[static_cast<std::size_t>(axis)] = slice;
    p[static_cast<std::size_t>(pa[0])] = u;
    p[static_cast<std::size_t>(pa[1])] = v;
    return p;
}

inline std::uint8_t to_byte(double x) { return static_cast<std::uint8_t>(std::lround(std::clamp(x, 0.0, 255.0))); }

/// Intensities mapped linearly from [lo, hi] onto [0, 255].
template <typename T>
Gray8 slice_image(const Volume<T>& v, int axis, std::size_t slice, double lo, double hi)
{
    const auto pa = plane_axes(axis);
    const Dims& d = v.dims();
    Gray8 img(d[pa[0]], d[pa[1]]);
    const double range = hi - lo;
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) {
            const auto p = voxel_of(axis, slice, x, y);
            const double val = static_cast<double>(v.at(p[0], p[1], p[2]));
            img.at(x, y) = range > 0.0 ? to_byte(255.0 * (val - lo) / range) : 0;
        }
    return img;
}

/// Weights in (0, 1) mapped to [0, 255].
template <typename T>
Gray8 weight_image(const DirectionalWeights<T>& w, int axis, std::size_t slice)
{
    const auto pa = plane_axes(axis);
    const Dims& d = w.wx().dims();
    Gray8 img(d[pa[0]], d[pa[1]]);
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) {
            const auto p = voxel_of(axis, slice, x, y);
            const std::size_t i = d.index(p[0], p[1], p[2]);
            const double mean = (double(w.wx()[i]) + double(w.wy()[i]) + double(w.wz()[i])) / 3.0;
            img.at(x, y) = to_byte(255.0 * mean);
        }
    return img;
}

/// Gridlines every `stride` voxels, each point moved to p + u(p) in the slice plane.
template <typename T>
Gray8 grid_image(const DisplacementFieldT<T>& f, int axis, std::size_t slice, std::size_t stride = 4)
{
    const auto pa = plane_axes(axis);
    const Dims& d = f.dims();
    Gray8 img(d[pa[0]], d[pa[1]]);
    auto plot = [&](double u, double v) {
        const long iu = std::lround(u), iv = std::lround(v);
        if (iu >= 0 && iv >= 0 && iu < long(img.width) && iv < long(img.height))
            img.at(std::size_t(iu), std::size_t(iv)) = 255;
    };
    auto displaced = [&](std::size_t u, std::size_t v) {
        const auto p = voxel_of(axis, slice, u, v);
        const auto& disp = f.at(p[0], p[1], p[2]);
        return std::array<double, 2>{double(u) + double(disp[pa[0]]), double(v) + double(disp[pa[1]])};
    };
    constexpr int substeps = 8;
    auto segment = [&](std::array<double, 2> a, std::array<double, 2> b) {
        for (int s = 0; s <= substeps; ++s) {
            const double t = double(s) / substeps;
            plot(a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]));
        }
    };
    for (std::size_t v = 0; v < img.height; v += stride)
        for (std::size_t u = 0; u + 1 < img.width; ++u)
            segment(displaced(u, v), displaced(u + 1, v));
    for (std::size_t u = 0; u < img.width; u += stride)
        for (std::size_t v = 0; v + 1 < img.height; ++v)
            segment(displaced(u, v), displaced(u, v + 1));
    return img;
}

inline std::vector<char> encode_pgm(const Gray8& img)
{
    const std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<char> bytes(header.begin(), header.end());
    bytes.insert(bytes.end(), img.pixels.begin(), img.pixels.end());
    return bytes;
}

inline void write_pgm(const std::filesystem::path& path, const Gray8& img)
{
    detail::write_file_bytes(path, encode_pgm(img));
}

} // namespace msmorph::cli
