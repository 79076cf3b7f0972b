#pragma once

// Deterministic synthetic data: labelled phantoms and smooth ground-truth displacement fields.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "msmorph/volume.hpp"
#include "msmorph/warp.hpp"

namespace msmorph {

enum class PhantomKind { spheres, blobs, checker };

inline std::string_view to_string(PhantomKind k)
{
    switch (k) {
    case PhantomKind::spheres: return "spheres";
    case PhantomKind::blobs: return "blobs";
    case PhantomKind::checker: return "checker";
    }
    return "?";
}

inline PhantomKind parse_phantom_kind(std::string_view s)
{
    for (auto k : {PhantomKind::spheres, PhantomKind::blobs, PhantomKind::checker})
        if (to_string(k) == s)
            return k;
    throw InvalidArgument("unknown phantom kind '" + std::string(s) + "'");
}

/// Separable Gaussian filter, kernel truncated at 3 sigma, border replicate.
template <typename T>
Volume<T> gaussian_smooth(const Volume<T>& v, double sigma)
{
    if (!(sigma > 0.0))
        throw InvalidArgument("gaussian_smooth: sigma must be > 0");
    const Dims& d = v.dims();
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double norm = 0.0;
    for (std::ptrdiff_t k = -radius; k <= radius; ++k)
        norm += kernel[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * double(k * k) / (sigma * sigma));
    for (double& k : kernel)
        k /= norm;

    std::vector<double> a(v.data().begin(), v.data().end()), b(a.size());
    for (int axis = 0; axis < 3; ++axis) {
        const auto n = static_cast<std::ptrdiff_t>(d[axis]);
        const std::size_t stride = axis == 0 ? 1 : axis == 1 ? d.nx : d.nx * d.ny;
        for (std::size_t z = 0, i = 0; z < d.nz; ++z)
            for (std::size_t y = 0; y < d.ny; ++y)
                for (std::size_t x = 0; x < d.nx; ++x, ++i) {
                    const auto pos = static_cast<std::ptrdiff_t>(axis == 0 ? x : axis == 1 ? y : z);
                    const std::size_t base = i - static_cast<std::size_t>(pos) * stride;
                    double acc = 0.0;
                    for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
                        const auto q = std::clamp<std::ptrdiff_t>(pos + k, 0, n - 1);
                        acc += kernel[static_cast<std::size_t>(k + radius)] * a[base + static_cast<std::size_t>(q) * stride];
                    }
                    b[i] = acc;
                }
        std::swap(a, b);
    }
    Volume<T> out(d, v.spacing());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<T>(a[i]);
    return out;
}

struct Phantom {
    ScalarVolume image;
    LabelVolume labels;
};

namespace detail {

inline void require_phantom_dims(const Dims& d)
{
    if (d.min_extent() < 8)
        throw InvalidArgument("phantom dims must be >= 8 per axis, got " + d.str());
}

/// Intensity from per-label values, lightly blurred and clamped to [0, 1].
inline ScalarVolume render_labels(const LabelVolume& labels, const std::vector<double>& intensity_of_label, double blur)
{
    ScalarVolume img(labels.dims(), labels.spacing());
    for (std::size_t i = 0; i < img.size(); ++i)
        img[i] = static_cast<float>(intensity_of_label.at(static_cast<std::size_t>(labels[i])));
    if (blur > 0.0)
        img = gaussian_smooth(img, blur);
    for (auto& v : img.data())
        v = std::clamp(v, 0.0f, 1.0f);
    return img;
}

/// Low-amplitude smooth intensity variation inside the foreground.
inline void add_texture(ScalarVolume& image, const LabelVolume& labels, std::mt19937_64& rng, double amplitude)
{
    if (amplitude <= 0.0)
        return;
    std::normal_distribution<double> normal(0.0, 1.0);
    Volume<double> noise(image.dims());
    for (auto& v : noise.data())
        v = normal(rng);
    noise = gaussian_smooth(noise, 2.0);
    double peak = 0.0;
    for (double v : noise.data())
        peak = std::max(peak, std::abs(v));
    for (std::size_t i = 0; i < image.size(); ++i)
        if (labels[i] != 0)
            image[i] = static_cast<float>(std::clamp(image[i] + amplitude * noise[i] / peak, 0.0, 1.0));
}

inline Phantom spheres_phantom(const Dims& d, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double c[3] = {(double(d.nx) - 1) / 2, (double(d.ny) - 1) / 2, (double(d.nz) - 1) / 2};
    const double semi[3] = {0.42 * double(d.nx), 0.40 * double(d.ny), 0.38 * double(d.nz)};
    const double span = double(d.min_extent());

    struct Ball {
        double p[3];
        double r;
    };
    std::vector<Ball> balls;
    const int wanted = 4 + static_cast<int>(unit(rng) * 3.0); // 4..6
    const double margin = 2.0, gap = 2.0;
    for (int attempt = 0; attempt < 400 && static_cast<int>(balls.size()) < wanted; ++attempt) {
        Ball b;
        b.r = std::max(1.5, (0.07 + 0.07 * unit(rng)) * span);
        for (int a = 0; a < 3; ++a)
            b.p[a] = c[a] + (2.0 * unit(rng) - 1.0) * semi[a];
        // Inside the outer ellipsoid shrunk by r + margin along every axis.
        double e = 0.0;
        for (int a = 0; a < 3; ++a) {
            const double s = semi[a] - b.r - margin;
            if (s <= 0.0) {
                e = 2.0;
                break;
            }
            e += (b.p[a] - c[a]) * (b.p[a] - c[a]) / (s * s);
        }
        if (e > 1.0)
            continue;
        bool clear = true;
        for (const auto& o : balls) {
            double dd = 0.0;
            for (int a = 0; a < 3; ++a)
                dd += (b.p[a] - o.p[a]) * (b.p[a] - o.p[a]);
            if (std::sqrt(dd) < b.r + o.r + gap)
                clear = false;
        }
        if (clear)
            balls.push_back(b);
    }
    if (balls.empty()) {
        // Small grids: one centred ball.
        Ball b{{c[0], c[1], c[2]}, std::max(1.0, 0.15 * span)};
        balls.push_back(b);
    }

    LabelVolume labels(d);
    for (std::size_t z = 0, i = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x, ++i) {
                const double p[3] = {double(x), double(y), double(z)};
                double e = 0.0;
                for (int a = 0; a < 3; ++a)
                    e += (p[a] - c[a]) * (p[a] - c[a]) / (semi[a] * semi[a]);
                if (e > 1.0)
                    continue;
                labels[i] = 1;
                for (std::size_t k = 0; k < balls.size(); ++k) {
                    double dd = 0.0;
                    for (int a = 0; a < 3; ++a)
                        dd += (p[a] - balls[k].p[a]) * (p[a] - balls[k].p[a]);
                    if (dd <= balls[k].r * balls[k].r)
                        labels[i] = static_cast<std::int16_t>(k + 2);
                }
            }

    std::vector<double> intensity(balls.size() + 2);
    intensity[0] = 0.0;
    intensity[1] = 0.35;
    for (std::size_t k = 0; k < balls.size(); ++k)
        intensity[k + 2] = 0.55 + 0.45 * (double(k) + unit(rng)) / double(balls.size());
    auto image = render_labels(labels, intensity, 0.8);
    add_texture(image, labels, rng, 0.1);
    return {std::move(image), std::move(labels)};
}

inline Phantom blobs_phantom(const Dims& d, std::mt19937_64& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    Volume<double> noise(d);
    for (auto& v : noise.data())
        v = normal(rng);
    noise = gaussian_smooth(noise, std::max(1.0, double(d.min_extent()) / 8.0));

    const double c[3] = {(double(d.nx) - 1) / 2, (double(d.ny) - 1) / 2, (double(d.nz) - 1) / 2};
    const double semi[3] = {0.42 * double(d.nx), 0.42 * double(d.ny), 0.42 * double(d.nz)};
    std::vector<double> inside;
    std::vector<std::size_t> idx;
    for (std::size_t z = 0, i = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x, ++i) {
                const double p[3] = {double(x), double(y), double(z)};
                double e = 0.0;
                for (int a = 0; a < 3; ++a)
                    e += (p[a] - c[a]) * (p[a] - c[a]) / (semi[a] * semi[a]);
                if (e <= 1.0) {
                    inside.push_back(noise[i]);
                    idx.push_back(i);
                }
            }
    // Tertiles of the noise inside the mask give three similarly sized structures.
    auto sorted = inside;
    std::sort(sorted.begin(), sorted.end());
    const double t1 = sorted[sorted.size() / 3], t2 = sorted[2 * sorted.size() / 3];
    LabelVolume labels(d);
    for (std::size_t k = 0; k < idx.size(); ++k)
        labels[idx[k]] = inside[k] < t1 ? 1 : inside[k] < t2 ? 2 : 3;
    auto image = render_labels(labels, {0.0, 0.3, 0.6, 0.9}, 0.8);
    return {std::move(image), std::move(labels)};
}

inline Phantom checker_phantom(const Dims& d, std::mt19937_64& rng)
{
    std::uniform_int_distribution<std::size_t> offset(0, 3);
    const std::size_t block = std::max<std::size_t>(2, d.min_extent() / 4);
    const std::size_t o[3] = {offset(rng), offset(rng), offset(rng)};
    LabelVolume labels(d);
    for (std::size_t z = 0, i = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x, ++i) {
                const std::size_t parity = ((x + o[0]) / block + (y + o[1]) / block + (z + o[2]) / block) % 2;
                labels[i] = static_cast<std::int16_t>(parity + 1);
            }
    auto image = render_labels(labels, {0.0, 0.25, 0.75}, 0.0);
    return {std::move(image), std::move(labels)};
}

} // namespace detail

/// Labelled phantom with intensities in [0, 1] and at least two foreground labels. Pure in its arguments.
inline Phantom make_phantom(const Dims& dims, PhantomKind kind, std::uint64_t seed)
{
    detail::require_phantom_dims(dims);
    std::mt19937_64 rng(seed);
    switch (kind) {
    case PhantomKind::spheres: return detail::spheres_phantom(dims, rng);
    case PhantomKind::blobs: return detail::blobs_phantom(dims, rng);
    case PhantomKind::checker: return detail::checker_phantom(dims, rng);
    }
    throw InvalidArgument("make_phantom: unknown kind");
}

/// Gaussian-smoothed white noise (sigma in voxels), rescaled so the largest |component| equals `amplitude`.
inline DisplacementField make_smooth_field(const Dims& dims, double amplitude, double sigma, std::uint64_t seed)
{
    if (!(sigma > 0.0))
        throw InvalidArgument("make_smooth_field: sigma must be > 0");
    if (!(amplitude >= 0.0) || !std::isfinite(amplitude))
        throw InvalidArgument("make_smooth_field: amplitude must be >= 0");
    DisplacementField out(dims);
    if (amplitude == 0.0)
        return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    // Noise lives on a grid padded by the kernel radius so the cropped field is stationary up to the border.
    const auto pad = static_cast<std::size_t>(std::ceil(3.0 * sigma));
    const Dims padded{dims.nx + 2 * pad, dims.ny + 2 * pad, dims.nz + 2 * pad};
    std::vector<Volume<double>> comps;
    for (int c = 0; c < 3; ++c) {
        Volume<double> n(padded);
        for (auto& v : n.data())
            v = normal(rng);
        const auto smooth = gaussian_smooth(n, sigma);
        Volume<double> crop(dims);
        for (std::size_t z = 0; z < dims.nz; ++z)
            for (std::size_t y = 0; y < dims.ny; ++y)
                for (std::size_t x = 0; x < dims.nx; ++x)
                    crop.at(x, y, z) = smooth.at(x + pad, y + pad, z + pad);
        comps.push_back(std::move(crop));
    }
    double peak = 0.0;
    for (const auto& v : comps)
        for (double x : v.data())
            peak = std::max(peak, std::abs(x));
    if (peak == 0.0)
        return out;
    const double k = amplitude / peak;
    for (std::size_t i = 0; i < out.size(); ++i)
        for (int c = 0; c < 3; ++c) {
            // Rounding to float must not push a component past the bound.
            float v = static_cast<float>(comps[c][i] * k);
            if (std::abs(double(v)) > amplitude)
                v = std::nextafter(v, 0.0f);
            out[i][c] = v;
        }
    return out;
}

struct SyntheticPair {
    ScalarVolume fixed;
    ScalarVolume moving;
    LabelVolume fixed_labels;
    LabelVolume moving_labels;
    DisplacementField truth;
};

/// fixed = phantom, moving = phantom pulled back through a known smooth field.
inline SyntheticPair make_synthetic_pair(const Dims& dims, PhantomKind kind, double amplitude, double sigma,
                                         std::uint64_t seed)
{
    auto ph = make_phantom(dims, kind, seed);
    auto truth = make_smooth_field(dims, amplitude, sigma, seed ^ 0x9E3779B97F4A7C15ull);
    SyntheticPair p;
    p.moving = warp_scalar(ph.image, truth);
    p.moving_labels = warp_labels(ph.labels, truth);
    p.fixed = std::move(ph.image);
    p.fixed_labels = std::move(ph.labels);
    p.truth = std::move(truth);
    return p;
}

} // namespace msmorph
