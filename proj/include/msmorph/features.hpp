#pragma once

// Feature pyramid and differential-neighbourhood weights.
//
// The pyramid is plain intensity average pooling; the same operator applied to both images plays the
// role of a weight-shared encoder. Directional weights mark where the two images' gradients disagree,
// spread over a 3x3x3 neighbourhood and squashed through a sigmoid.

#include <array>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "msmorph/stencil.hpp"
#include "msmorph/volume.hpp"
#include "msmorph/warp.hpp"

namespace msmorph {

/// levels[0] is full resolution; each further level halves every extent (rounding up).
template <typename T>
struct FeaturePyramid {
    std::vector<Volume<T>> levels;

    std::size_t depth() const { return levels.size(); }
    /// 1-based access matching level numbering (1 = finest).
    const Volume<T>& level(std::size_t l) const { return levels.at(l - 1); }
};

/// True when every axis has at least 2^(depth-1) voxels.
inline bool depth_fits(const Dims& d, std::size_t depth)
{
    if (depth < 1 || depth > 30)
        return false;
    const std::size_t need = std::size_t{1} << (depth - 1);
    return d.min_extent() >= need;
}

template <typename T>
FeaturePyramid<T> build_pyramid(const Volume<T>& image, std::size_t depth)
{
    if (depth < 1)
        throw InvalidArgument("build_pyramid: depth must be >= 1");
    if (!depth_fits(image.dims(), depth))
        throw InvalidArgument("build_pyramid: depth " + std::to_string(depth) + " too large for dims " +
                              image.dims().str());
    FeaturePyramid<T> p;
    p.levels.reserve(depth);
    p.levels.push_back(image);
    for (std::size_t l = 1; l < depth; ++l)
        p.levels.push_back(downsample_avg(p.levels.back()));
    return p;
}

template <typename T>
struct Gradient3 {
    Volume<T> gx, gy, gz;

    const Volume<T>& operator[](int axis) const { return axis == 0 ? gx : axis == 1 ? gy : gz; }
};

/// Central differences inside, one-sided at the borders.
template <typename T>
Gradient3<T> spatial_gradient(const Volume<T>& v)
{
    const Dims& d = v.dims();
    if (d.min_extent() < 3)
        throw InvalidArgument("spatial_gradient: dims must be >= 3 per axis, got " + d.str());
    Gradient3<T> g{Volume<T>(d, v.spacing()), Volume<T>(d, v.spacing()), Volume<T>(d, v.spacing())};
    Volume<T>* outs[3] = {&g.gx, &g.gy, &g.gz};
    for (std::size_t z = 0, i = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x, ++i) {
                const std::size_t pos[3] = {x, y, z};
                for (int axis = 0; axis < 3; ++axis) {
                    const auto s = DifferenceStencil::at(pos[axis], d[axis]);
                    const std::size_t stride = axis_stride(axis, d.nx, d.ny);
                    const std::size_t base = i - pos[axis] * stride;
                    (*outs[axis])[i] = static_cast<T>(
                        (static_cast<double>(v[base + s.hi * stride]) - static_cast<double>(v[base + s.lo * stride])) *
                        s.scale);
                }
            }
    return g;
}

/// 3x3x3 mean filter with border replication.
template <typename T>
Volume<T> box3(const Volume<T>& v)
{
    const Dims& d = v.dims();
    Volume<double> a(d, v.spacing()), b(d, v.spacing());
    for (std::size_t i = 0; i < v.size(); ++i)
        a[i] = static_cast<double>(v[i]);
    // Separable: three passes of a clamped [1 1 1] / 3 filter.
    for (int axis = 0; axis < 3; ++axis) {
        const std::size_t n = d[axis];
        const std::size_t stride = axis_stride(axis, d.nx, d.ny);
        for (std::size_t z = 0, i = 0; z < d.nz; ++z)
            for (std::size_t y = 0; y < d.ny; ++y)
                for (std::size_t x = 0; x < d.nx; ++x, ++i) {
                    const std::size_t pos = axis == 0 ? x : axis == 1 ? y : z;
                    const std::size_t base = i - pos * stride;
                    const std::size_t lo = pos == 0 ? 0 : pos - 1;
                    const std::size_t hi = pos + 1 >= n ? n - 1 : pos + 1;
                    b[i] = (a[base + lo * stride] + a[i] + a[base + hi * stride]) / 3.0;
                }
        std::swap(a, b);
    }
    Volume<T> out(d, v.spacing());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<T>(a[i]);
    return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Which cues drive the directional weights.
///   full      - per-direction gradient difference (D and G on)
///   intensity - raw intensity difference shared by all directions (G off)
///   gradient  - per-direction gradient magnitude of both images (D off)
///   none      - constant sigmoid(bias)
enum class WeightingMode { full, intensity, gradient, none };

inline std::string_view to_string(WeightingMode m)
{
    switch (m) {
    case WeightingMode::full: return "full";
    case WeightingMode::intensity: return "intensity";
    case WeightingMode::gradient: return "gradient";
    case WeightingMode::none: return "none";
    }
    return "?";
}

inline WeightingMode parse_weighting_mode(std::string_view s)
{
    for (auto m : {WeightingMode::full, WeightingMode::intensity, WeightingMode::gradient, WeightingMode::none})
        if (to_string(m) == s)
            return m;
    throw InvalidArgument("unknown weighting mode '" + std::string(s) + "'");
}

inline constexpr double default_weight_gain = 10.0;
inline constexpr double default_weight_bias = 0.0;

/// Per-direction weights, every value strictly inside (0, 1).
template <typename T>
struct DirectionalWeights {
    std::array<Volume<T>, 3> w;

    const Volume<T>& operator[](int axis) const { return w[axis]; }
    const Volume<T>& wx() const { return w[0]; }
    const Volume<T>& wy() const { return w[1]; }
    const Volume<T>& wz() const { return w[2]; }
};

template <typename T>
DirectionalWeights<T> diff_weights(const Volume<T>& fixed, const Volume<T>& moving, WeightingMode mode,
                                   double gain = default_weight_gain, double bias = default_weight_bias)
{
    require_same_dims(fixed.dims(), moving.dims(), "diff_weights");
    const Dims& d = fixed.dims();
    const Spacing& sp = fixed.spacing();

    // Saturated sigmoids are pulled back inside the open interval.
    constexpr double eps = std::numeric_limits<T>::epsilon();
    auto open_unit = [=](double s) { return static_cast<T>(std::clamp(s, eps, 1.0 - eps)); };
    auto squash = [&](const Volume<T>& response) {
        Volume<T> w(d, sp);
        for (std::size_t i = 0; i < w.size(); ++i)
            w[i] = open_unit(sigmoid(gain * static_cast<double>(response[i]) + bias));
        return w;
    };

    switch (mode) {
    case WeightingMode::none: {
        Volume<T> w(d, sp, open_unit(sigmoid(bias)));
        return {{w, w, w}};
    }
    case WeightingMode::intensity: {
        Volume<T> diff(d, sp);
        for (std::size_t i = 0; i < diff.size(); ++i)
            diff[i] = static_cast<T>(static_cast<double>(fixed[i]) - static_cast<double>(moving[i]));
        auto w = squash(box3(diff));
        return {{w, w, w}};
    }
    case WeightingMode::full:
    case WeightingMode::gradient: {
        const auto fg = spatial_gradient(fixed);
        const auto mg = spatial_gradient(moving);
        DirectionalWeights<T> out;
        for (int axis = 0; axis < 3; ++axis) {
            Volume<T> r(d, sp);
            for (std::size_t i = 0; i < r.size(); ++i) {
                const double f = fg[axis][i], m = mg[axis][i];
                r[i] = static_cast<T>(mode == WeightingMode::full ? f - m : std::abs(f) + std::abs(m));
            }
            out.w[axis] = squash(box3(r));
        }
        return out;
    }
    }
    throw InvalidArgument("diff_weights: unknown mode");
}

} // namespace msmorph
