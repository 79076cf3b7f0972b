#pragma once

// Registration energy: -NCC(fixed, moving o u) + lambda * sum_p |grad u(p)|^2, with its analytic
// gradient with respect to every displacement component.
//
// NCC uses un-normalized window sums: cc = cross / sqrt(var_a * var_b + eps), where
// cross = S_ab - S_a S_b / n and var = S_xx - S_x^2 / n. Windows are cubes truncated at the border.
// A window that is flat in either image has cross = 0 and so contributes 0. Reductions accumulate
// in double in x-fastest order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "msmorph/stencil.hpp"
#include "msmorph/volume.hpp"
#include "msmorph/warp.hpp"

namespace msmorph {

inline constexpr double ncc_epsilon = 1e-5;

/// 0 selects the global (whole-volume) correlation; an odd value selects a local cubic window.
using NccWindow = std::size_t;

namespace detail {

/// In-place sum over the truncated cube of radius r around each voxel.
inline void box_sum(std::vector<double>& v, const Dims& d, std::size_t r)
{
    std::vector<double> line, prefix;
    for (int axis = 0; axis < 3; ++axis) {
        const std::size_t n = d[axis];
        const std::size_t stride = axis_stride(axis, d.nx, d.ny);
        const std::size_t lines = d.size() / n;
        line.resize(n);
        prefix.resize(n + 1);
        for (std::size_t l = 0; l < lines; ++l) {
            // Decompose the line index into the start offset of this line.
            std::size_t base;
            if (axis == 0)
                base = l * d.nx;
            else if (axis == 1)
                base = (l % d.nx) + (l / d.nx) * d.nx * d.ny;
            else
                base = l;
            prefix[0] = 0.0;
            for (std::size_t k = 0; k < n; ++k)
                prefix[k + 1] = prefix[k] + v[base + k * stride];
            for (std::size_t k = 0; k < n; ++k) {
                const std::size_t lo = k >= r ? k - r : 0;
                const std::size_t hi = std::min(n - 1, k + r);
                line[k] = prefix[hi + 1] - prefix[lo];
            }
            for (std::size_t k = 0; k < n; ++k)
                v[base + k * stride] = line[k];
        }
    }
}

/// Number of voxels in each truncated window.
inline std::vector<double> window_counts(const Dims& d, std::size_t r)
{
    auto span = [r](std::size_t k, std::size_t n) {
        const std::size_t lo = k >= r ? k - r : 0;
        const std::size_t hi = std::min(n - 1, k + r);
        return static_cast<double>(hi - lo + 1);
    };
    std::vector<double> c(d.size());
    for (std::size_t z = 0, i = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x, ++i)
                c[i] = span(x, d.nx) * span(y, d.ny) * span(z, d.nz);
    return c;
}

struct NccEvaluation {
    double value = 0.0;
    /// d value / d b_q for every voxel q; empty unless requested.
    std::vector<double> d_b;
};

template <typename A, typename B>
NccEvaluation ncc_eval(std::span<const A> a, std::span<const B> b, const Dims& d, NccWindow window, bool want_grad)
{
    const std::size_t n = d.size();
    NccEvaluation out;

    if (window == 0) {
        double sa = 0, sb = 0;
        for (std::size_t i = 0; i < n; ++i) {
            sa += a[i];
            sb += b[i];
        }
        const double ma = sa / double(n), mb = sb / double(n);
        double cross = 0, va = 0, vb = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double da = a[i] - ma, db = b[i] - mb;
            cross += da * db;
            va += da * da;
            vb += db * db;
        }
        const double den = std::sqrt(va * vb + ncc_epsilon);
        out.value = cross / den;
        if (want_grad) {
            out.d_b.resize(n);
            const double k = cross * va / (den * den * den);
            for (std::size_t i = 0; i < n; ++i)
                out.d_b[i] = (a[i] - ma) / den - k * (b[i] - mb);
        }
        return out;
    }

    if (window % 2 == 0)
        throw InvalidArgument("ncc: local window must be odd, got " + std::to_string(window));
    const std::size_t r = window / 2;
    std::vector<double> sa(n), sb(n), saa(n), sbb(n), sab(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a[i], y = b[i];
        sa[i] = x;
        sb[i] = y;
        saa[i] = x * x;
        sbb[i] = y * y;
        sab[i] = x * y;
    }
    for (auto* v : {&sa, &sb, &saa, &sbb, &sab})
        box_sum(*v, d, r);
    const auto cnt = window_counts(d, r);

    double acc = 0.0;
    // Per-window coefficients of the adjoint, reused as scratch for the gradient box sums.
    std::vector<double> g_a, g_am, g_b, g_bm;
    if (want_grad) {
        g_a.resize(n);
        g_am.resize(n);
        g_b.resize(n);
        g_bm.resize(n);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double c = cnt[i];
        const double ma = sa[i] / c, mb = sb[i] / c;
        const double cross = sab[i] - sa[i] * mb;
        const double va = std::max(0.0, saa[i] - sa[i] * ma);
        const double vb = std::max(0.0, sbb[i] - sb[i] * mb);
        const double den = std::sqrt(va * vb + ncc_epsilon);
        acc += cross / den;
        if (want_grad) {
            const double ka = 1.0 / (double(n) * den);
            const double kb = cross * va / (double(n) * den * den * den);
            g_a[i] = ka;
            g_am[i] = ka * ma;
            g_b[i] = kb;
            g_bm[i] = kb * mb;
        }
    }
    out.value = acc / double(n);
    if (want_grad) {
        // Windows are symmetric, so the set of windows containing q is the window around q.
        for (auto* v : {&g_a, &g_am, &g_b, &g_bm})
            box_sum(*v, d, r);
        out.d_b.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            out.d_b[i] = double(a[i]) * g_a[i] - g_am[i] - double(b[i]) * g_b[i] + g_bm[i];
    }
    return out;
}

} // namespace detail

/// Normalized cross-correlation; global Pearson correlation for window 0, otherwise the mean over
/// voxels of the windowed correlation.
template <typename A, typename B>
double ncc(const Volume<A>& a, const Volume<B>& b, NccWindow window = 0)
{
    require_same_dims(a.dims(), b.dims(), "ncc");
    return detail::ncc_eval(a.data(), b.data(), a.dims(), window, false).value;
}

/// Sum over voxels, components and axes of the squared difference-stencil derivative.
template <typename T, typename Tag>
double smoothness(const VectorField<T, Tag>& f)
{
    const Dims& d = f.dims();
    if (d.min_extent() < 3)
        throw InvalidArgument("smoothness: dims must be >= 3 per axis, got " + d.str());
    double acc = 0.0;
    for (std::size_t z = 0, i = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x, ++i) {
                const std::size_t pos[3] = {x, y, z};
                for (int axis = 0; axis < 3; ++axis) {
                    const auto s = DifferenceStencil::at(pos[axis], d[axis]);
                    const std::size_t stride = axis_stride(axis, d.nx, d.ny);
                    const std::size_t base = i - pos[axis] * stride;
                    const auto& lo = f[base + s.lo * stride];
                    const auto& hi = f[base + s.hi * stride];
                    for (int c = 0; c < 3; ++c) {
                        const double g = (double(hi[c]) - double(lo[c])) * s.scale;
                        acc += g * g;
                    }
                }
            }
    return acc;
}

/// Gradient of smoothness(): 2 * sum_axis D_axis^T D_axis u, computed by scattering the stencil adjoint.
template <typename T, typename Tag>
std::vector<Vec3<double>> smoothness_gradient(const VectorField<T, Tag>& f)
{
    const Dims& d = f.dims();
    if (d.min_extent() < 3)
        throw InvalidArgument("smoothness: dims must be >= 3 per axis, got " + d.str());
    std::vector<Vec3<double>> g(d.size(), Vec3<double>{0.0, 0.0, 0.0});
    for (std::size_t z = 0, i = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x, ++i) {
                const std::size_t pos[3] = {x, y, z};
                for (int axis = 0; axis < 3; ++axis) {
                    const auto s = DifferenceStencil::at(pos[axis], d[axis]);
                    const std::size_t stride = axis_stride(axis, d.nx, d.ny);
                    const std::size_t base = i - pos[axis] * stride;
                    const std::size_t lo = base + s.lo * stride, hi = base + s.hi * stride;
                    for (int c = 0; c < 3; ++c) {
                        const double diff = (double(f[hi][c]) - double(f[lo][c])) * s.scale;
                        g[hi][c] += 2.0 * diff * s.scale;
                        g[lo][c] -= 2.0 * diff * s.scale;
                    }
                }
            }
    return g;
}

struct LossBreakdown {
    double sim = 0.0; ///< -NCC
    double reg = 0.0;
    double total = 0.0;
    double lambda = 0.0;
};

template <typename T, typename U>
LossBreakdown total_loss(const Volume<T>& fixed, const Volume<T>& moving, const DisplacementFieldT<U>& field,
                         double lambda, NccWindow window = 0)
{
    require_same_dims(fixed.dims(), moving.dims(), "total_loss");
    require_same_dims(fixed.dims(), field.dims(), "total_loss");
    LossBreakdown l;
    l.lambda = lambda;
    l.sim = -ncc(fixed, warp_scalar(moving, field), window);
    l.reg = smoothness(field);
    l.total = l.sim + lambda * l.reg;
    return l;
}

/// Loss and its gradient in one pass. The similarity part chains d(-NCC)/d(warped value) with the
/// derivative of the trilinear interpolant at p + u(p).
template <typename T, typename U>
std::pair<LossBreakdown, DisplacementFieldT<U>> loss_and_gradient(const Volume<T>& fixed, const Volume<T>& moving,
                                                                  const DisplacementFieldT<U>& field, double lambda,
                                                                  NccWindow window = 0)
{
    require_same_dims(fixed.dims(), moving.dims(), "loss_gradient");
    require_same_dims(fixed.dims(), field.dims(), "loss_gradient");
    const Dims& d = fixed.dims();
    const std::size_t n = d.size();

    std::vector<double> warped(n);
    std::vector<Vec3<double>> dwarp(n);
    for (std::size_t z = 0, i = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x, ++i) {
                const auto& u = field[i];
                const auto jet = sample_trilinear_jet(moving, double(x) + u[0], double(y) + u[1], double(z) + u[2]);
                warped[i] = jet.value;
                dwarp[i] = jet.grad;
            }
    // Cast through the storage type so the energy matches warp_scalar() exactly.
    for (double& w : warped)
        w = static_cast<double>(static_cast<T>(w));

    const auto e = detail::ncc_eval(fixed.data(), std::span<const double>(warped), d, window, true);
    LossBreakdown l;
    l.lambda = lambda;
    l.sim = -e.value;
    l.reg = smoothness(field);
    l.total = l.sim + lambda * l.reg;

    DisplacementFieldT<U> g(d, field.spacing());
    std::vector<Vec3<double>> greg;
    if (lambda != 0.0)
        greg = smoothness_gradient(field);
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) {
            double v = -e.d_b[i] * dwarp[i][c];
            if (lambda != 0.0)
                v += lambda * greg[i][c];
            g[i][c] = static_cast<U>(v);
        }
    return {l, std::move(g)};
}

template <typename T, typename U>
DisplacementFieldT<U> loss_gradient(const Volume<T>& fixed, const Volume<T>& moving,
                                    const DisplacementFieldT<U>& field, double lambda, NccWindow window = 0)
{
    return loss_and_gradient(fixed, moving, field, lambda, window).second;
}

} // namespace msmorph
