#pragma once

// Spatial-transformer warping and displacement-field algebra.
//
// Convention (pull-back): warped(p) = moving(p + u(p)), u in voxel units of the grid it lives on.
// Sample coordinates are clamped to [0, n-1] per axis (border replicate), so no operation here
// ever reads outside the grid. All reductions run in plain x-fastest index order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "msmorph/stencil.hpp"
#include "msmorph/volume.hpp"

namespace msmorph {

namespace detail {

struct AxisSample {
    std::size_t i0;
    std::size_t i1;
    double t;     // weight of i1
    bool clamped; // coordinate was outside [0, n-1]; derivative along this axis is zero
};

inline AxisSample axis_sample(double x, std::size_t n)
{
    bool clamped = false;
    const double hi = static_cast<double>(n - 1);
    if (x < 0.0) {
        x = 0.0;
        clamped = true;
    }
    else if (x > hi) {
        x = hi;
        clamped = true;
    }
    if (n == 1)
        return {0, 0, 0.0, true};
    auto i0 = std::min(static_cast<std::size_t>(x), n - 2);
    return {i0, i0 + 1, x - static_cast<double>(i0), clamped};
}

template <typename Get>
double trilinear(const Dims& d, double x, double y, double z, Get&& get)
{
    const auto ax = axis_sample(x, d.nx), ay = axis_sample(y, d.ny), az = axis_sample(z, d.nz);
    auto lerp = [](double a, double b, double t) { return a * (1.0 - t) + b * t; };
    const double c00 = lerp(get(d.index(ax.i0, ay.i0, az.i0)), get(d.index(ax.i1, ay.i0, az.i0)), ax.t);
    const double c10 = lerp(get(d.index(ax.i0, ay.i1, az.i0)), get(d.index(ax.i1, ay.i1, az.i0)), ax.t);
    const double c01 = lerp(get(d.index(ax.i0, ay.i0, az.i1)), get(d.index(ax.i1, ay.i0, az.i1)), ax.t);
    const double c11 = lerp(get(d.index(ax.i0, ay.i1, az.i1)), get(d.index(ax.i1, ay.i1, az.i1)), ax.t);
    return lerp(lerp(c00, c10, ay.t), lerp(c01, c11, ay.t), az.t);
}

} // namespace detail

/// Trilinear sample of `v` at continuous voxel coordinate (x, y, z), clamped to the grid.
template <typename T>
double sample_trilinear(const Volume<T>& v, double x, double y, double z)
{
    const auto data = v.data();
    return detail::trilinear(v.dims(), x, y, z, [&](std::size_t i) { return static_cast<double>(data[i]); });
}

/// Value and partial derivatives of the trilinear interpolant with respect to the sample position.
/// Derivatives along clamped axes are zero (the clamped interpolant is flat there).
struct InterpolantJet {
    double value;
    Vec3<double> grad;
};

template <typename T>
InterpolantJet sample_trilinear_jet(const Volume<T>& v, double x, double y, double z)
{
    const Dims& d = v.dims();
    const auto data = v.data();
    const auto ax = detail::axis_sample(x, d.nx), ay = detail::axis_sample(y, d.ny),
               az = detail::axis_sample(z, d.nz);
    auto at = [&](std::size_t i, std::size_t j, std::size_t k) { return static_cast<double>(data[d.index(i, j, k)]); };
    const double v000 = at(ax.i0, ay.i0, az.i0), v100 = at(ax.i1, ay.i0, az.i0);
    const double v010 = at(ax.i0, ay.i1, az.i0), v110 = at(ax.i1, ay.i1, az.i0);
    const double v001 = at(ax.i0, ay.i0, az.i1), v101 = at(ax.i1, ay.i0, az.i1);
    const double v011 = at(ax.i0, ay.i1, az.i1), v111 = at(ax.i1, ay.i1, az.i1);
    const double tx = ax.t, ty = ay.t, tz = az.t;
    const double sx = 1.0 - tx, sy = 1.0 - ty, sz = 1.0 - tz;

    InterpolantJet j{};
    j.value = sz * (sy * (sx * v000 + tx * v100) + ty * (sx * v010 + tx * v110)) +
              tz * (sy * (sx * v001 + tx * v101) + ty * (sx * v011 + tx * v111));
    j.grad[0] = ax.clamped ? 0.0
                           : sz * (sy * (v100 - v000) + ty * (v110 - v010)) +
                                 tz * (sy * (v101 - v001) + ty * (v111 - v011));
    j.grad[1] = ay.clamped ? 0.0
                           : sz * (sx * (v010 - v000) + tx * (v110 - v100)) +
                                 tz * (sx * (v011 - v001) + tx * (v111 - v101));
    j.grad[2] = az.clamped ? 0.0
                           : sy * (sx * (v001 - v000) + tx * (v101 - v100)) +
                                 ty * (sx * (v011 - v010) + tx * (v111 - v110));
    return j;
}

/// output(p) = trilinear(moving, p + u(p)).
template <typename T, typename U>
Volume<T> warp_scalar(const Volume<T>& moving, const DisplacementFieldT<U>& field)
{
    require_same_dims(moving.dims(), field.dims(), "warp_scalar");
    const Dims& d = moving.dims();
    Volume<T> out(d, moving.spacing());
    for (std::size_t z = 0, i = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x, ++i) {
                const auto& u = field[i];
                out[i] = static_cast<T>(sample_trilinear(moving, double(x) + u[0], double(y) + u[1], double(z) + u[2]));
            }
    return out;
}

/// Nearest-neighbour pull-back of a label map; labels are never blended.
template <typename U>
LabelVolume warp_labels(const LabelVolume& moving, const DisplacementFieldT<U>& field)
{
    require_same_dims(moving.dims(), field.dims(), "warp_labels");
    const Dims& d = moving.dims();
    LabelVolume out(d, moving.spacing(), moving.dtype());
    auto nearest = [](double c, std::size_t n) {
        c = std::clamp(c, 0.0, static_cast<double>(n - 1));
        return static_cast<std::size_t>(std::floor(c + 0.5));
    };
    for (std::size_t z = 0, i = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x, ++i) {
                const auto& u = field[i];
                out[i] = moving.at(nearest(double(x) + u[0], d.nx), nearest(double(y) + u[1], d.ny),
                                   nearest(double(z) + u[2], d.nz));
            }
    return out;
}

/// Residual fusion: out(p) = prev(p + inc(p)) + inc(p), each component of prev resampled trilinearly.
/// Warping M by the result equals warping M by prev and then by inc.
template <typename T, typename Tag>
VectorField<T, Tag> compose_fields(const VectorField<T, Tag>& prev, const VectorField<T, Tag>& inc)
{
    require_same_dims(prev.dims(), inc.dims(), "compose_fields");
    const Dims& d = prev.dims();
    const auto src = prev.data();
    VectorField<T, Tag> out(d, prev.spacing());
    for (std::size_t z = 0, i = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x, ++i) {
                const auto& v = inc[i];
                const double px = double(x) + v[0], py = double(y) + v[1], pz = double(z) + v[2];
                for (int c = 0; c < 3; ++c) {
                    const double r =
                        detail::trilinear(d, px, py, pz, [&](std::size_t k) { return static_cast<double>(src[k][c]); });
                    out[i][c] = static_cast<T>(r + static_cast<double>(v[c]));
                }
            }
    return out;
}

/// True when `fine` is a valid 2x refinement of `coarse` (halving `fine` with rounding up gives `coarse`).
inline bool is_refinement_of(const Dims& fine, const Dims& coarse) { return halved(fine) == coarse; }

/// Trilinear 2x upsampling of every component followed by multiplication by 2, converting coarse-voxel
/// displacements to fine-voxel units. Fine voxel i sits at coarse coordinate (i - 0.5) / 2, the geometry
/// of 2x2x2 average pooling.
template <typename T, typename Tag>
VectorField<T, Tag> upsample_field(const VectorField<T, Tag>& field, const Dims& target)
{
    if (!is_refinement_of(target, field.dims()))
        throw InvalidArgument("upsample_field: " + target.str() + " is not a 2x refinement of " + field.dims().str());
    const Dims& src_d = field.dims();
    const auto src = field.data();
    Spacing sp = field.spacing();
    for (double& s : sp)
        s *= 0.5;
    VectorField<T, Tag> out(target, sp);
    for (std::size_t z = 0, i = 0; z < target.nz; ++z)
        for (std::size_t y = 0; y < target.ny; ++y)
            for (std::size_t x = 0; x < target.nx; ++x, ++i) {
                const double cx = (double(x) - 0.5) * 0.5, cy = (double(y) - 0.5) * 0.5, cz = (double(z) - 0.5) * 0.5;
                for (int c = 0; c < 3; ++c) {
                    const double r = detail::trilinear(src_d, cx, cy, cz,
                                                       [&](std::size_t k) { return static_cast<double>(src[k][c]); });
                    out[i][c] = static_cast<T>(2.0 * r);
                }
            }
    return out;
}

/// 2x2x2 mean pooling. Odd extents are padded by replicating the last slab. Spacing doubles.
template <typename T>
Volume<T> downsample_avg(const Volume<T>& v)
{
    const Dims& d = v.dims();
    const Dims h = halved(d);
    Spacing sp = v.spacing();
    for (double& s : sp)
        s *= 2.0;
    Volume<T> out(h, sp);
    for (std::size_t z = 0; z < h.nz; ++z)
        for (std::size_t y = 0; y < h.ny; ++y)
            for (std::size_t x = 0; x < h.nx; ++x) {
                double acc = 0.0;
                for (std::size_t dz = 0; dz < 2; ++dz)
                    for (std::size_t dy = 0; dy < 2; ++dy)
                        for (std::size_t dx = 0; dx < 2; ++dx)
                            acc += static_cast<double>(v.at(std::min(2 * x + dx, d.nx - 1),
                                                            std::min(2 * y + dy, d.ny - 1),
                                                            std::min(2 * z + dz, d.nz - 1)));
                out.at(x, y, z) = static_cast<T>(acc / 8.0);
            }
    return out;
}

inline constexpr int default_squaring_steps = 7;

/// Scaling and squaring: u = v / 2^K, then K times u <- compose(u, u). Returns the unit-time flow.
template <typename T>
DisplacementFieldT<T> integrate_velocity(const VelocityFieldT<T>& v, int steps = default_squaring_steps)
{
    if (steps < 1)
        throw InvalidArgument("integrate_velocity: step count must be >= 1");
    auto u = retag<DisplacementTag>(v);
    u *= static_cast<T>(std::ldexp(1.0, -steps));
    for (int k = 0; k < steps; ++k)
        u = compose_fields(u, u);
    return u;
}

struct JacobianStats {
    double min_det = 0.0;
    double max_det = 0.0;
    double fraction_nonpositive = 0.0;
    std::size_t count_nonpositive = 0;
    std::size_t voxels = 0;
    /// Optional determinant histogram over [hist_lo, hist_hi); out-of-range values go to the end bins.
    std::vector<std::size_t> histogram;
    double hist_lo = 0.0;
    double hist_hi = 0.0;
};

/// det(I + grad u) at one voxel, using the shared difference stencil.
template <typename T, typename Tag>
double jacobian_determinant_at(const VectorField<T, Tag>& f, std::size_t x, std::size_t y, std::size_t z)
{
    const Dims& d = f.dims();
    const std::size_t pos[3] = {x, y, z};
    double j[3][3];
    for (int axis = 0; axis < 3; ++axis) {
        const auto s = DifferenceStencil::at(pos[axis], d[axis]);
        std::size_t lo[3] = {x, y, z}, hi[3] = {x, y, z};
        lo[axis] = s.lo;
        hi[axis] = s.hi;
        const auto& a = f.at(lo[0], lo[1], lo[2]);
        const auto& b = f.at(hi[0], hi[1], hi[2]);
        for (int c = 0; c < 3; ++c)
            j[c][axis] = (static_cast<double>(b[c]) - static_cast<double>(a[c])) * s.scale + (c == axis ? 1.0 : 0.0);
    }
    return j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0]) +
           j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
}

template <typename T, typename Tag>
Volume<double> jacobian_determinants(const VectorField<T, Tag>& f)
{
    const Dims& d = f.dims();
    if (d.min_extent() < 3)
        throw InvalidArgument("jacobian: dims must be >= 3 per axis, got " + d.str());
    Volume<double> out(d, f.spacing());
    for (std::size_t z = 0, i = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x, ++i)
                out[i] = jacobian_determinant_at(f, x, y, z);
    return out;
}

/// Folding statistics. Border voxels are included in the denominator.
template <typename T, typename Tag>
JacobianStats jacobian_det_stats(const VectorField<T, Tag>& f, std::size_t histogram_bins = 0, double hist_lo = -1.0,
                                 double hist_hi = 3.0)
{
    const auto dets = jacobian_determinants(f);
    JacobianStats s;
    s.voxels = dets.size();
    s.min_det = std::numeric_limits<double>::infinity();
    s.max_det = -std::numeric_limits<double>::infinity();
    if (histogram_bins > 0) {
        s.histogram.assign(histogram_bins, 0);
        s.hist_lo = hist_lo;
        s.hist_hi = hist_hi;
    }
    for (double det : dets.data()) {
        s.min_det = std::min(s.min_det, det);
        s.max_det = std::max(s.max_det, det);
        if (det <= 0.0)
            ++s.count_nonpositive;
        if (histogram_bins > 0) {
            const double t = (det - hist_lo) / (hist_hi - hist_lo) * static_cast<double>(histogram_bins);
            const auto bin = static_cast<std::size_t>(std::clamp(t, 0.0, static_cast<double>(histogram_bins - 1)));
            ++s.histogram[bin];
        }
    }
    s.fraction_nonpositive = static_cast<double>(s.count_nonpositive) / static_cast<double>(s.voxels);
    return s;
}

} // namespace msmorph
