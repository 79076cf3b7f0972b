#pragma once

// Segmentation overlap and surface-distance metrics.
//
// Surface voxels are foreground voxels with at least one 6-neighbour in the background; voxels on the
// volume border count as touching background. Distances are Euclidean, in millimetres between voxel
// centres, and computed exactly with a separable squared distance transform of the target surface.
// HD95 is the larger of the two directed nearest-rank 95th percentiles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "msmorph/volume.hpp"
#include "msmorph/warp.hpp"

namespace msmorph {

using Mask = Volume<std::uint8_t>;

inline Mask mask_of(const LabelVolume& labels, std::int16_t label)
{
    Mask m(labels.dims(), labels.spacing());
    for (std::size_t i = 0; i < labels.size(); ++i)
        m[i] = labels[i] == label ? 1 : 0;
    return m;
}

/// Sorted non-zero labels present in the volume.
inline std::vector<std::int16_t> foreground_labels(const LabelVolume& v)
{
    std::set<std::int16_t> s;
    for (auto x : v.data())
        if (x != 0)
            s.insert(x);
    return {s.begin(), s.end()};
}

inline double dice(const LabelVolume& a, const LabelVolume& b, std::int16_t label)
{
    require_same_dims(a.dims(), b.dims(), "dice");
    std::size_t na = 0, nb = 0, both = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool in_a = a[i] == label, in_b = b[i] == label;
        na += in_a;
        nb += in_b;
        both += in_a && in_b;
    }
    if (na + nb == 0)
        throw InvalidArgument("dice: label " + std::to_string(label) + " absent from both volumes");
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

/// Unweighted mean of dice() over the foreground labels of `reference`.
inline double mean_dice(const LabelVolume& reference, const LabelVolume& other)
{
    const auto labels = foreground_labels(reference);
    if (labels.empty())
        throw InvalidArgument("mean_dice: reference has no foreground labels");
    double acc = 0.0;
    for (auto l : labels)
        acc += dice(reference, other, l);
    return acc / static_cast<double>(labels.size());
}

/// Foreground voxels with a background 6-neighbour (or on the volume border).
inline Mask surface_of(const Mask& m)
{
    const Dims& d = m.dims();
    Mask s(d, m.spacing());
    for (std::size_t z = 0, i = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x, ++i) {
                if (!m[i])
                    continue;
                const bool border = x == 0 || y == 0 || z == 0 || x + 1 == d.nx || y + 1 == d.ny || z + 1 == d.nz;
                s[i] = border || !m.at(x - 1, y, z) || !m.at(x + 1, y, z) || !m.at(x, y - 1, z) ||
                       !m.at(x, y + 1, z) || !m.at(x, y, z - 1) || !m.at(x, y, z + 1);
            }
    return s;
}

namespace detail {

/// 1D lower envelope of parabolas: out[p] = min_q f[q] + w (p - q)^2 (Felzenszwalb-Huttenlocher).
inline void edt_1d(const std::vector<double>& f, double w, std::vector<double>& out, std::vector<std::size_t>& v,
                   std::vector<double>& zb)
{
    const std::size_t n = f.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    v.assign(n, 0);
    zb.assign(n + 1, 0.0);
    std::size_t k = 0;
    bool any = false;
    auto height = [&](std::size_t q) { return f[q] + w * double(q) * double(q); };
    for (std::size_t q = 0; q < n; ++q) {
        if (f[q] == inf)
            continue;
        if (!any) {
            v[0] = q;
            zb[0] = -inf;
            zb[1] = inf;
            any = true;
            continue;
        }
        double s = (height(q) - height(v[k])) / (2.0 * w * (double(q) - double(v[k])));
        while (s <= zb[k]) {
            --k;
            s = (height(q) - height(v[k])) / (2.0 * w * (double(q) - double(v[k])));
        }
        ++k;
        v[k] = q;
        zb[k] = s;
        zb[k + 1] = inf;
    }
    out.assign(n, inf);
    if (!any)
        return;
    k = 0;
    for (std::size_t p = 0; p < n; ++p) {
        while (zb[k + 1] < double(p))
            ++k;
        const double dp = double(p) - double(v[k]);
        out[p] = f[v[k]] + w * dp * dp;
    }
}

} // namespace detail

/// Squared Euclidean distance (mm^2) from every voxel to the nearest voxel set in `targets`.
inline Volume<double> squared_distance_transform(const Mask& targets, const Spacing& spacing)
{
    const Dims& d = targets.dims();
    Volume<double> dist(d, targets.spacing(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < targets.size(); ++i)
        if (targets[i])
            dist[i] = 0.0;
    std::vector<double> line, out, zb;
    std::vector<std::size_t> v;
    for (int axis = 0; axis < 3; ++axis) {
        const std::size_t n = d[axis];
        const std::size_t stride = axis == 0 ? 1 : axis == 1 ? d.nx : d.nx * d.ny;
        const double w = spacing[axis] * spacing[axis];
        line.resize(n);
        const std::size_t lines = d.size() / n;
        for (std::size_t l = 0; l < lines; ++l) {
            const std::size_t base = axis == 0 ? l * d.nx : axis == 1 ? (l % d.nx) + (l / d.nx) * d.nx * d.ny : l;
            for (std::size_t k = 0; k < n; ++k)
                line[k] = dist[base + k * stride];
            detail::edt_1d(line, w, out, v, zb);
            for (std::size_t k = 0; k < n; ++k)
                dist[base + k * stride] = out[k];
        }
    }
    return dist;
}

struct SurfaceDistances {
    std::vector<double> a_to_b; ///< one entry per surface voxel of a, x-fastest order
    std::vector<double> b_to_a;
};

inline SurfaceDistances surface_distances(const Mask& a, const Mask& b, const Spacing& spacing)
{
    require_same_dims(a.dims(), b.dims(), "surface_distances");
    const auto sa = surface_of(a), sb = surface_of(b);
    auto any = [](const Mask& m) { return std::any_of(m.data().begin(), m.data().end(), [](auto x) { return x != 0; }); };
    if (!any(sa) || !any(sb))
        throw InvalidArgument("surface_distances: empty mask");
    const auto da = squared_distance_transform(sa, spacing);
    const auto db = squared_distance_transform(sb, spacing);
    SurfaceDistances r;
    for (std::size_t i = 0; i < sa.size(); ++i) {
        if (sa[i])
            r.a_to_b.push_back(std::sqrt(db[i]));
        if (sb[i])
            r.b_to_a.push_back(std::sqrt(da[i]));
    }
    return r;
}

/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value (1-based), p an integer percent.
inline double nearest_rank_percentile(std::vector<double> values, unsigned percent)
{
    if (values.empty())
        throw InvalidArgument("percentile of an empty set");
    const std::size_t n = values.size();
    std::size_t rank = (percent * n + 99) / 100;
    rank = std::clamp<std::size_t>(rank, 1, n);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1), values.end());
    return values[rank - 1];
}

inline double hd95(const SurfaceDistances& s)
{
    return std::max(nearest_rank_percentile(s.a_to_b, 95), nearest_rank_percentile(s.b_to_a, 95));
}

inline double assd(const SurfaceDistances& s)
{
    double acc = 0.0;
    for (double x : s.a_to_b)
        acc += x;
    for (double x : s.b_to_a)
        acc += x;
    return acc / static_cast<double>(s.a_to_b.size() + s.b_to_a.size());
}

inline double hd95(const Mask& a, const Mask& b, const Spacing& spacing) { return hd95(surface_distances(a, b, spacing)); }
inline double assd(const Mask& a, const Mask& b, const Spacing& spacing) { return assd(surface_distances(a, b, spacing)); }

struct LabelMetrics {
    double dsc = 0.0;
    bool present_in_warped = true;
    std::optional<double> hd95; ///< mm; absent when the label is missing from the warped volume
    std::optional<double> assd;
};

struct MetricReport {
    std::map<std::int16_t, LabelMetrics> per_label;
    double mean_dsc = 0.0;
    double mean_hd95 = 0.0;
    double mean_assd = 0.0;
    std::vector<std::int16_t> missing_labels; ///< in fixed, absent from warped; excluded from distance means
    JacobianStats jacobian;
    double nonpositive_jacobian_fraction = 0.0;
};

template <typename T>
MetricReport evaluate_all(const LabelVolume& fixed, const LabelVolume& warped, const DisplacementFieldT<T>& field)
{
    require_same_dims(fixed.dims(), warped.dims(), "evaluate_all");
    require_same_dims(fixed.dims(), field.dims(), "evaluate_all");
    const auto labels = foreground_labels(fixed);
    if (labels.empty())
        throw InvalidArgument("evaluate_all: fixed labels have no foreground");

    MetricReport r;
    std::size_t n_dist = 0;
    for (auto l : labels) {
        LabelMetrics m;
        const auto ma = mask_of(fixed, l), mb = mask_of(warped, l);
        m.dsc = dice(fixed, warped, l);
        m.present_in_warped = std::any_of(mb.data().begin(), mb.data().end(), [](auto x) { return x != 0; });
        if (m.present_in_warped) {
            const auto sd = surface_distances(ma, mb, fixed.spacing());
            m.hd95 = hd95(sd);
            m.assd = assd(sd);
            r.mean_hd95 += *m.hd95;
            r.mean_assd += *m.assd;
            ++n_dist;
        }
        else {
            r.missing_labels.push_back(l);
        }
        r.mean_dsc += m.dsc;
        r.per_label.emplace(l, m);
    }
    r.mean_dsc /= static_cast<double>(labels.size());
    if (n_dist > 0) {
        r.mean_hd95 /= static_cast<double>(n_dist);
        r.mean_assd /= static_cast<double>(n_dist);
    }
    r.jacobian = jacobian_det_stats(field);
    r.nonpositive_jacobian_fraction = r.jacobian.fraction_nonpositive;
    return r;
}

} // namespace msmorph
