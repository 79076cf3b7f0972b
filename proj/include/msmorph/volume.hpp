#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "msmorph/error.hpp"

namespace msmorph {

/// Voxel counts along x, y, z. Storage is x-fastest.
struct Dims {
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::size_t nz = 0;

    constexpr std::size_t size() const { return nx * ny * nz; }
    constexpr std::size_t operator[](int axis) const { return axis == 0 ? nx : axis == 1 ? ny : nz; }
    constexpr std::size_t index(std::size_t x, std::size_t y, std::size_t z) const { return x + nx * (y + ny * z); }
    constexpr std::size_t min_extent() const { return std::min(nx, std::min(ny, nz)); }

    friend constexpr bool operator==(const Dims&, const Dims&) = default;

    std::string str() const
    {
        return std::to_string(nx) + "x" + std::to_string(ny) + "x" + std::to_string(nz);
    }
};

/// Half the extent per axis, rounding up.
constexpr Dims halved(const Dims& d) { return {(d.nx + 1) / 2, (d.ny + 1) / 2, (d.nz + 1) / 2}; }

/// Millimetres per voxel.
using Spacing = std::array<double, 3>;

inline constexpr Spacing unit_spacing{1.0, 1.0, 1.0};

template <typename T>
using Vec3 = std::array<T, 3>;

inline void require_same_dims(const Dims& a, const Dims& b, const char* context)
{
    if (a != b)
        throw DimsMismatch(std::string(context) + ": " + a.str() + " vs " + b.str());
}

/// Dense 3D grid of one value per voxel. Used for intensities, feature maps, weights and labels.
template <typename T>
class Volume {
public:
    using value_type = T;

    Volume() = default;

    explicit Volume(Dims dims, Spacing spacing = unit_spacing, T fill = T{})
        : dims_(dims), spacing_(spacing), data_(dims.size(), fill)
    {
        check_shape();
    }

    Volume(Dims dims, Spacing spacing, std::vector<T> data)
        : dims_(dims), spacing_(spacing), data_(std::move(data))
    {
        check_shape();
        if (data_.size() != dims_.size())
            throw InvalidData("volume data length " + std::to_string(data_.size()) + " does not match dims " +
                              dims_.str());
    }

    const Dims& dims() const { return dims_; }
    const Spacing& spacing() const { return spacing_; }
    void set_spacing(const Spacing& s) { spacing_ = s; }
    std::size_t size() const { return data_.size(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    const std::vector<T>& values() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }
    T& at(std::size_t x, std::size_t y, std::size_t z) { return data_[dims_.index(x, y, z)]; }
    const T& at(std::size_t x, std::size_t y, std::size_t z) const { return data_[dims_.index(x, y, z)]; }

    bool all_finite() const
    {
        if constexpr (std::is_floating_point_v<T>) {
            for (const T& v : data_)
                if (!std::isfinite(v))
                    return false;
        }
        return true;
    }

    friend bool operator==(const Volume& a, const Volume& b)
    {
        return a.dims_ == b.dims_ && a.spacing_ == b.spacing_ && a.data_ == b.data_;
    }

private:
    void check_shape() const
    {
        if (dims_.nx == 0 || dims_.ny == 0 || dims_.nz == 0)
            throw InvalidArgument("volume dims must be positive, got " + dims_.str());
        for (double s : spacing_)
            if (!(s > 0.0) || !std::isfinite(s))
                throw InvalidArgument("voxel spacing must be positive and finite");
    }

    Dims dims_{};
    Spacing spacing_ = unit_spacing;
    std::vector<T> data_;
};

template <typename T = float>
using ScalarVolumeT = Volume<T>;
using ScalarVolume = Volume<float>;

enum class LabelDtype : std::uint8_t { u8, i16 };

/// Integer segmentation. Label 0 is background. Remembers its on-disk width so files round-trip unchanged.
class LabelVolume : public Volume<std::int16_t> {
public:
    LabelVolume() = default;

    explicit LabelVolume(Dims dims, Spacing spacing = unit_spacing, LabelDtype dtype = LabelDtype::u8)
        : Volume<std::int16_t>(dims, spacing, 0), dtype_(dtype)
    {
    }

    LabelVolume(Dims dims, Spacing spacing, std::vector<std::int16_t> data, LabelDtype dtype = LabelDtype::u8)
        : Volume<std::int16_t>(dims, spacing, std::move(data)), dtype_(dtype)
    {
        for (auto v : values())
            if (v < 0)
                throw InvalidData("negative label value " + std::to_string(v));
    }

    LabelDtype dtype() const { return dtype_; }
    void set_dtype(LabelDtype d) { dtype_ = d; }

    friend bool operator==(const LabelVolume& a, const LabelVolume& b)
    {
        return a.dtype_ == b.dtype_ && static_cast<const Volume<std::int16_t>&>(a) ==
                                           static_cast<const Volume<std::int16_t>&>(b);
    }

private:
    LabelDtype dtype_ = LabelDtype::u8;
};

struct DisplacementTag {};
struct VelocityTag {};

/// Three components per voxel, interleaved (ux, uy, uz), in voxel units of its own grid.
template <typename T, typename Tag>
class VectorField {
public:
    using value_type = T;

    VectorField() = default;

    explicit VectorField(Dims dims, Spacing spacing = unit_spacing)
        : dims_(dims), spacing_(spacing), data_(dims.size(), Vec3<T>{T{}, T{}, T{}})
    {
        if (dims.size() == 0)
            throw InvalidArgument("field dims must be positive, got " + dims.str());
    }

    VectorField(Dims dims, Spacing spacing, std::vector<Vec3<T>> data)
        : dims_(dims), spacing_(spacing), data_(std::move(data))
    {
        if (dims.size() == 0)
            throw InvalidArgument("field dims must be positive, got " + dims.str());
        if (data_.size() != dims_.size())
            throw InvalidData("field data length does not match dims " + dims_.str());
    }

    /// Constant field.
    VectorField(Dims dims, Spacing spacing, Vec3<T> value) : VectorField(dims, spacing)
    {
        for (auto& v : data_)
            v = value;
    }

    const Dims& dims() const { return dims_; }
    const Spacing& spacing() const { return spacing_; }
    std::size_t size() const { return data_.size(); }

    std::span<Vec3<T>> data() { return data_; }
    std::span<const Vec3<T>> data() const { return data_; }

    Vec3<T>& operator[](std::size_t i) { return data_[i]; }
    const Vec3<T>& operator[](std::size_t i) const { return data_[i]; }
    Vec3<T>& at(std::size_t x, std::size_t y, std::size_t z) { return data_[dims_.index(x, y, z)]; }
    const Vec3<T>& at(std::size_t x, std::size_t y, std::size_t z) const { return data_[dims_.index(x, y, z)]; }

    /// One component extracted as a scalar volume.
    Volume<T> component(int c) const
    {
        Volume<T> out(dims_, spacing_);
        for (std::size_t i = 0; i < data_.size(); ++i)
            out[i] = data_[i][c];
        return out;
    }

    bool all_finite() const
    {
        for (const auto& v : data_)
            for (T c : v)
                if (!std::isfinite(c))
                    return false;
        return true;
    }

    VectorField& operator*=(T s)
    {
        for (auto& v : data_)
            for (T& c : v)
                c *= s;
        return *this;
    }

    VectorField& operator+=(const VectorField& o)
    {
        require_same_dims(dims_, o.dims_, "field addition");
        for (std::size_t i = 0; i < data_.size(); ++i)
            for (int c = 0; c < 3; ++c)
                data_[i][c] += o.data_[i][c];
        return *this;
    }

    friend bool operator==(const VectorField& a, const VectorField& b)
    {
        return a.dims_ == b.dims_ && a.spacing_ == b.spacing_ && a.data_ == b.data_;
    }

private:
    Dims dims_{};
    Spacing spacing_ = unit_spacing;
    std::vector<Vec3<T>> data_;
};

template <typename T = float>
using DisplacementFieldT = VectorField<T, DisplacementTag>;
using DisplacementField = DisplacementFieldT<float>;

template <typename T = float>
using VelocityFieldT = VectorField<T, VelocityTag>;
using VelocityField = VelocityFieldT<float>;

/// Reinterpret a stored vector field under a different tag (velocity <-> displacement).
template <typename ToTag, typename T, typename FromTag>
VectorField<T, ToTag> retag(VectorField<T, FromTag> f)
{
    std::vector<Vec3<T>> data(f.data().begin(), f.data().end());
    return VectorField<T, ToTag>(f.dims(), f.spacing(), std::move(data));
}

/// Element type conversion (e.g. float storage to double for analysis).
template <typename To, typename From>
Volume<To> cast_volume(const Volume<From>& v)
{
    Volume<To> out(v.dims(), v.spacing());
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = static_cast<To>(v[i]);
    return out;
}

template <typename To, typename From, typename Tag>
VectorField<To, Tag> cast_field(const VectorField<From, Tag>& f)
{
    VectorField<To, Tag> out(f.dims(), f.spacing());
    for (std::size_t i = 0; i < f.size(); ++i)
        for (int c = 0; c < 3; ++c)
            out[i][c] = static_cast<To>(f[i][c]);
    return out;
}

/// Mean Euclidean length of the displacement vectors.
template <typename T, typename Tag>
double mean_magnitude(const VectorField<T, Tag>& f)
{
    double acc = 0.0;
    for (const auto& v : f.data())
        acc += std::sqrt(double(v[0]) * v[0] + double(v[1]) * v[1] + double(v[2]) * v[2]);
    return acc / static_cast<double>(f.size());
}

/// Mean of |component| over all voxels and components.
template <typename T, typename Tag>
double mean_abs_component(const VectorField<T, Tag>& f)
{
    double acc = 0.0;
    for (const auto& v : f.data())
        acc += std::abs(double(v[0])) + std::abs(double(v[1])) + std::abs(double(v[2]));
    return acc / (3.0 * static_cast<double>(f.size()));
}

template <typename T, typename Tag>
double max_abs_component(const VectorField<T, Tag>& f)
{
    double m = 0.0;
    for (const auto& v : f.data())
        for (T c : v)
            m = std::max(m, std::abs(double(c)));
    return m;
}

} // namespace msmorph
