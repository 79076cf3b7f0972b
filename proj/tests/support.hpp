#pragma once

// Shared generators and reference implementations for the tests.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "msmorph/msmorph.hpp"

namespace msmorph::testing {

template <typename T = float>
Volume<T> random_volume(const Dims& d, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> u(lo, hi);
    Volume<T> v(d);
    for (auto& x : v.data())
        x = static_cast<T>(u(rng));
    return v;
}

template <typename T = float>
DisplacementFieldT<T> random_field(const Dims& d, std::mt19937_64& rng, double amplitude)
{
    std::uniform_real_distribution<double> u(-amplitude, amplitude);
    DisplacementFieldT<T> f(d);
    for (auto& v : f.data())
        for (auto& c : v)
            c = static_cast<T>(u(rng));
    return f;
}

/// u(p) = A p + b in voxel units.
template <typename T = float>
DisplacementFieldT<T> affine_field(const Dims& d, const double (&a)[3][3], const double (&b)[3] = {0, 0, 0})
{
    DisplacementFieldT<T> f(d);
    for (std::size_t z = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x) {
                const double p[3] = {double(x), double(y), double(z)};
                for (int c = 0; c < 3; ++c)
                    f.at(x, y, z)[c] = static_cast<T>(a[c][0] * p[0] + a[c][1] * p[1] + a[c][2] * p[2] + b[c]);
            }
    return f;
}

inline bool interior(const Dims& d, std::size_t x, std::size_t y, std::size_t z, std::size_t margin)
{
    return x >= margin && y >= margin && z >= margin && x + margin < d.nx && y + margin < d.ny && z + margin < d.nz;
}

/// Random blob mask: union of a few balls, so surfaces stay small.
inline Mask random_blob_mask(const Dims& d, std::mt19937_64& rng, int balls, double rmin, double rmax)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Mask m(d);
    for (int b = 0; b < balls; ++b) {
        const double cx = u(rng) * double(d.nx - 1), cy = u(rng) * double(d.ny - 1), cz = u(rng) * double(d.nz - 1);
        const double r = rmin + (rmax - rmin) * u(rng);
        for (std::size_t z = 0; z < d.nz; ++z)
            for (std::size_t y = 0; y < d.ny; ++y)
                for (std::size_t x = 0; x < d.nx; ++x) {
                    const double dx = double(x) - cx, dy = double(y) - cy, dz = double(z) - cz;
                    if (dx * dx + dy * dy + dz * dz <= r * r)
                        m.at(x, y, z) = 1;
                }
    }
    return m;
}

struct BruteDistances {
    std::vector<double> a_to_b, b_to_a;
};

/// Surface distances by checking every pair of surface voxels.
inline BruteDistances brute_surface_distances(const Mask& a, const Mask& b, const Spacing& sp)
{
    struct P {
        double x, y, z;
    };
    auto points = [&](const Mask& m) {
        std::vector<P> pts;
        const auto s = surface_of(m);
        const Dims& d = m.dims();
        for (std::size_t z = 0; z < d.nz; ++z)
            for (std::size_t y = 0; y < d.ny; ++y)
                for (std::size_t x = 0; x < d.nx; ++x)
                    if (s.at(x, y, z))
                        pts.push_back({double(x) * sp[0], double(y) * sp[1], double(z) * sp[2]});
        return pts;
    };
    const auto pa = points(a), pb = points(b);
    auto directed = [](const std::vector<P>& from, const std::vector<P>& to) {
        std::vector<double> out;
        for (const auto& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : to)
                best = std::min(best, (p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y) + (p.z - q.z) * (p.z - q.z));
            out.push_back(std::sqrt(best));
        }
        return out;
    };
    return {directed(pa, pb), directed(pb, pa)};
}

/// Percentile by sorting, rank ceil(p n / 100).
inline double sorted_percentile(std::vector<double> v, double p)
{
    std::sort(v.begin(), v.end());
    const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * double(v.size())));
    return v[std::max<std::size_t>(rank, 1) - 1];
}

/// Brute-force 6-connected component count over voxels with the given label.
inline int count_components(const LabelVolume& v, std::int16_t label)
{
    const Dims& d = v.dims();
    std::vector<int> seen(d.size(), 0);
    int comps = 0;
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < d.size(); ++s) {
        if (v[s] != label || seen[s])
            continue;
        ++comps;
        stack.push_back(s);
        seen[s] = 1;
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            const std::size_t x = i % d.nx, y = (i / d.nx) % d.ny, z = i / (d.nx * d.ny);
            const long nb[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
            for (const auto& o : nb) {
                const long nx = long(x) + o[0], ny = long(y) + o[1], nz = long(z) + o[2];
                if (nx < 0 || ny < 0 || nz < 0 || nx >= long(d.nx) || ny >= long(d.ny) || nz >= long(d.nz))
                    continue;
                const std::size_t j = d.index(std::size_t(nx), std::size_t(ny), std::size_t(nz));
                if (v[j] == label && !seen[j]) {
                    seen[j] = 1;
                    stack.push_back(j);
                }
            }
        }
    }
    return comps;
}

/// Displacements whose sample points stay inside the grid and away from integer coordinates, where the
/// trilinear interpolant has kinks and one-sided derivatives disagree.
inline DisplacementFieldT<double> kink_free_field(const Dims& d, std::mt19937_64& rng, double amplitude)
{
    std::uniform_real_distribution<double> u(-amplitude, amplitude);
    DisplacementFieldT<double> f(d);
    for (std::size_t z = 0, i = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x, ++i) {
                const double p[3] = {double(x), double(y), double(z)};
                for (int c = 0; c < 3; ++c) {
                    double v, q;
                    do {
                        v = u(rng);
                        q = p[c] + v;
                    } while (q < 0.05 || q > double(d[c] - 1) - 0.05 || std::abs(q - std::round(q)) < 0.01);
                    f[i][c] = v;
                }
            }
    return f;
}

inline double relative_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-7}); }

inline std::filesystem::path scratch_dir(const std::string& name)
{
    auto p = std::filesystem::temp_directory_path() / ("msmorph_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace msmorph::testing
