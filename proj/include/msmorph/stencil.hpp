#pragma once

#include <cstddef>

namespace msmorph {

/// First-derivative stencil shared by spatial gradients, the Jacobian and the smoothness energy:
/// central difference (f[i+1] - f[i-1]) / 2 inside, one-sided difference at the two ends.
/// Returns 0 when the axis has a single sample.
struct DifferenceStencil {
    std::size_t lo;
    std::size_t hi;
    double scale;

    static constexpr DifferenceStencil at(std::size_t i, std::size_t n)
    {
        if (n < 2)
            return {i, i, 0.0};
        if (i == 0)
            return {0, 1, 1.0};
        if (i == n - 1)
            return {n - 2, n - 1, 1.0};
        return {i - 1, i + 1, 0.5};
    }
};

/// Stride between neighbours along `axis` for an x-fastest layout.
constexpr std::size_t axis_stride(int axis, std::size_t nx, std::size_t ny)
{
    return axis == 0 ? 1 : axis == 1 ? nx : nx * ny;
}

} // namespace msmorph
