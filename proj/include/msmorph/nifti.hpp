#pragma once

// Read-only support for uncompressed single-file NIfTI-1 (.nii) volumes.
// Orientation (qform/sform) is ignored; inputs are assumed pre-aligned.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "msmorph/mvol.hpp"
#include "msmorph/volume.hpp"

namespace msmorph {

enum class NiftiDatatype : std::int16_t { u8 = 2, i16 = 4, f32 = 16 };

struct NiftiHeader {
    Dims dims;
    Spacing spacing = unit_spacing;
    NiftiDatatype datatype = NiftiDatatype::f32;
    float vox_offset = 352.0f;
    float scl_slope = 0.0f;
    float scl_inter = 0.0f;
    bool swapped = false;

    /// Intensity scaling applies whenever the slope is non-zero.
    bool has_scaling() const { return scl_slope != 0.0f && !(scl_slope == 1.0f && scl_inter == 0.0f); }
};

namespace detail {

class NiftiCursor {
public:
    NiftiCursor(const std::vector<char>& b, bool swapped) : b_(b), swapped_(swapped) {}

    std::uint16_t u16(std::size_t off) const
    {
        std::uint16_t v;
        std::memcpy(&v, b_.data() + off, 2);
        if constexpr (std::endian::native == std::endian::big)
            v = swap16(v);
        return swapped_ ? swap16(v) : v;
    }
    std::uint32_t u32(std::size_t off) const
    {
        std::uint32_t v;
        std::memcpy(&v, b_.data() + off, 4);
        if constexpr (std::endian::native == std::endian::big)
            v = swap32(v);
        return swapped_ ? swap32(v) : v;
    }
    std::int16_t i16(std::size_t off) const { return static_cast<std::int16_t>(u16(off)); }
    std::int32_t i32(std::size_t off) const { return static_cast<std::int32_t>(u32(off)); }
    float f32(std::size_t off) const { return std::bit_cast<float>(u32(off)); }

    static std::uint16_t swap16(std::uint16_t v) { return static_cast<std::uint16_t>((v >> 8) | (v << 8)); }
    static std::uint32_t swap32(std::uint32_t v)
    {
        return (v >> 24) | ((v >> 8) & 0xFF00u) | ((v << 8) & 0xFF0000u) | (v << 24);
    }

private:
    const std::vector<char>& b_;
    bool swapped_;
};

inline NiftiHeader parse_nifti1_header(const std::vector<char>& bytes, const std::string& source)
{
    constexpr std::int32_t header_size = 348;
    if (bytes.size() < static_cast<std::size_t>(header_size))
        throw TruncatedFile(source + ": shorter than a NIfTI-1 header");

    NiftiHeader h;
    if (NiftiCursor(bytes, false).i32(0) != header_size) {
        if (NiftiCursor(bytes, true).i32(0) != header_size)
            throw BadHeader(source + ": sizeof_hdr is not 348");
        h.swapped = true;
    }
    const NiftiCursor c(bytes, h.swapped);

    if (std::memcmp(bytes.data() + 344, "n+1\0", 4) != 0)
        throw BadHeader(source + ": only single-file NIfTI-1 (magic n+1) is supported");

    const std::int16_t ndim = c.i16(40);
    if (ndim != 3)
        throw BadHeader(source + ": dim[0] is " + std::to_string(ndim) + ", expected 3");
    const std::int16_t nx = c.i16(42), ny = c.i16(44), nz = c.i16(46);
    if (nx <= 0 || ny <= 0 || nz <= 0)
        throw BadHeader(source + ": non-positive dimension");
    h.dims = {static_cast<std::size_t>(nx), static_cast<std::size_t>(ny), static_cast<std::size_t>(nz)};

    const std::int16_t dt = c.i16(70);
    if (dt != 2 && dt != 4 && dt != 16)
        throw UnsupportedDatatype(source + ": NIfTI datatype " + std::to_string(dt));
    h.datatype = static_cast<NiftiDatatype>(dt);

    for (int a = 0; a < 3; ++a) {
        const float p = std::abs(c.f32(80 + 4 * a));
        h.spacing[a] = (p > 0.0f && std::isfinite(p)) ? p : 1.0;
    }
    h.vox_offset = c.f32(108);
    h.scl_slope = c.f32(112);
    h.scl_inter = c.f32(116);
    if (!std::isfinite(h.scl_slope) || !std::isfinite(h.scl_inter)) {
        h.scl_slope = 0.0f;
        h.scl_inter = 0.0f;
    }
    if (!(h.vox_offset >= 348.0f))
        h.vox_offset = 352.0f;
    return h;
}

inline std::vector<double> nifti_raw_values(const std::vector<char>& bytes, const NiftiHeader& h,
                                            const std::string& source)
{
    const std::size_t n = h.dims.size();
    const std::size_t elem = h.datatype == NiftiDatatype::u8 ? 1 : h.datatype == NiftiDatatype::i16 ? 2 : 4;
    const auto offset = static_cast<std::size_t>(h.vox_offset);
    if (bytes.size() < offset + n * elem)
        throw TruncatedFile(source + ": voxel data truncated");

    const NiftiCursor c(bytes, h.swapped);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t off = offset + i * elem;
        switch (h.datatype) {
        case NiftiDatatype::u8: out[i] = static_cast<std::uint8_t>(bytes[off]); break;
        case NiftiDatatype::i16: out[i] = c.i16(off); break;
        case NiftiDatatype::f32: out[i] = c.f32(off); break;
        }
    }
    return out;
}

} // namespace detail

inline NiftiHeader read_nifti1_header(const std::filesystem::path& path)
{
    return detail::parse_nifti1_header(detail::read_file_bytes(path), path.string());
}

/// Intensity image. Applies value * scl_slope + scl_inter when scl_slope is non-zero.
inline ScalarVolume read_nifti1_image(const std::filesystem::path& path)
{
    const auto bytes = detail::read_file_bytes(path);
    const auto h = detail::parse_nifti1_header(bytes, path.string());
    const auto raw = detail::nifti_raw_values(bytes, h, path.string());
    std::vector<float> data(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double v = h.scl_slope != 0.0f ? raw[i] * h.scl_slope + h.scl_inter : raw[i];
        data[i] = static_cast<float>(v);
    }
    ScalarVolume v(h.dims, h.spacing, std::move(data));
    if (!v.all_finite())
        throw InvalidData(path.string() + ": non-finite voxel values");
    return v;
}

/// Segmentation. Requires an integer datatype and no intensity scaling.
inline LabelVolume read_nifti1_labels(const std::filesystem::path& path)
{
    const auto bytes = detail::read_file_bytes(path);
    const auto h = detail::parse_nifti1_header(bytes, path.string());
    if (h.datatype == NiftiDatatype::f32 || h.has_scaling())
        throw UnsupportedDatatype(path.string() + ": label maps must be unscaled u8 or i16");
    const auto raw = detail::nifti_raw_values(bytes, h, path.string());
    std::vector<std::int16_t> data(raw.begin(), raw.end());
    return LabelVolume(h.dims, h.spacing, std::move(data),
                       h.datatype == NiftiDatatype::u8 ? LabelDtype::u8 : LabelDtype::i16);
}

/// Float or scaled data reads as an image; unscaled integer data as labels.
inline std::variant<ScalarVolume, LabelVolume> read_nifti1(const std::filesystem::path& path)
{
    const auto h = read_nifti1_header(path);
    if (h.datatype == NiftiDatatype::f32 || h.has_scaling())
        return read_nifti1_image(path);
    return read_nifti1_labels(path);
}

} // namespace msmorph
