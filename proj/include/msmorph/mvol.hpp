#pragma once

// MVOL: little-endian container for volumes, label maps and vector fields.
//
//   offset  size  field
//   0       4     magic "MVOL"
//   4       4     version (u32, = 1)
//   8       4     dtype (u32): 0 f32 scalar, 1 u8 label, 2 i16 label, 3 f32 vector3
//   12      12    nx, ny, nz (u32)
//   24      12    spacing x, y, z (f32, mm)
//   36      ...   payload, x-fastest; vectors interleaved ux,uy,uz per voxel

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "msmorph/volume.hpp"

namespace msmorph {

enum class MvolDtype : std::uint32_t { f32_scalar = 0, u8_label = 1, i16_label = 2, f32_vector3 = 3 };

inline constexpr std::uint32_t mvol_version = 1;
inline constexpr std::size_t mvol_header_bytes = 36;

using MvolObject = std::variant<ScalarVolume, LabelVolume, DisplacementField>;

namespace detail {

class ByteWriter {
public:
    void u32(std::uint32_t v)
    {
        for (int i = 0; i < 4; ++i)
            bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }
    void u16(std::uint16_t v)
    {
        bytes_.push_back(static_cast<char>(v & 0xFFu));
        bytes_.push_back(static_cast<char>((v >> 8) & 0xFFu));
    }
    void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }

    const std::vector<char>& bytes() const { return bytes_; }

private:
    std::vector<char> bytes_;
};

class ByteReader {
public:
    ByteReader(const std::vector<char>& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

    bool has(std::size_t n) const { return pos_ + n <= bytes_.size(); }
    std::size_t remaining() const { return bytes_.size() - pos_; }
    std::size_t pos() const { return pos_; }
    void seek(std::size_t p) { pos_ = p; }

    std::uint8_t u8()
    {
        need(1);
        return static_cast<std::uint8_t>(bytes_[pos_++]);
    }
    std::uint16_t u16()
    {
        need(2);
        std::uint16_t v = static_cast<std::uint8_t>(bytes_[pos_]) |
                          static_cast<std::uint16_t>(static_cast<std::uint8_t>(bytes_[pos_ + 1]) << 8);
        pos_ += 2;
        return v;
    }
    std::uint32_t u32()
    {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }

private:
    void need(std::size_t n) const
    {
        if (!has(n))
            throw TruncatedFile(source_ + ": unexpected end of file at byte " + std::to_string(pos_));
    }

    const std::vector<char>& bytes_;
    std::string source_;
    std::size_t pos_ = 0;
};

inline std::vector<char> read_file_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad())
        throw IoError("read failed: " + path.string());
    return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<char>& bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open for writing: " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw IoError("write failed: " + path.string());
}

inline void mvol_header(ByteWriter& w, MvolDtype dtype, const Dims& d, const Spacing& s)
{
    constexpr auto u32_max = std::numeric_limits<std::uint32_t>::max();
    if (d.nx > u32_max || d.ny > u32_max || d.nz > u32_max)
        throw InvalidArgument("dims too large for MVOL: " + d.str());
    w.raw("MVOL", 4);
    w.u32(mvol_version);
    w.u32(static_cast<std::uint32_t>(dtype));
    w.u32(static_cast<std::uint32_t>(d.nx));
    w.u32(static_cast<std::uint32_t>(d.ny));
    w.u32(static_cast<std::uint32_t>(d.nz));
    for (double v : s)
        w.f32(static_cast<float>(v));
}

} // namespace detail

/// Serializes to the MVOL byte layout. Refuses non-finite data.
inline std::vector<char> encode_mvol(const ScalarVolume& v)
{
    if (!v.all_finite())
        throw InvalidData("refusing to write non-finite volume data");
    detail::ByteWriter w;
    detail::mvol_header(w, MvolDtype::f32_scalar, v.dims(), v.spacing());
    for (float x : v.data())
        w.f32(x);
    return w.bytes();
}

inline std::vector<char> encode_mvol(const LabelVolume& v)
{
    detail::ByteWriter w;
    const bool narrow = v.dtype() == LabelDtype::u8;
    detail::mvol_header(w, narrow ? MvolDtype::u8_label : MvolDtype::i16_label, v.dims(), v.spacing());
    for (std::int16_t x : v.data()) {
        if (x < 0 || (narrow && x > 255))
            throw InvalidData("label " + std::to_string(x) + " does not fit the label dtype");
        if (narrow)
            w.u8(static_cast<std::uint8_t>(x));
        else
            w.u16(static_cast<std::uint16_t>(x));
    }
    return w.bytes();
}

inline std::vector<char> encode_mvol(const DisplacementField& f)
{
    if (!f.all_finite())
        throw InvalidData("refusing to write non-finite field data");
    detail::ByteWriter w;
    detail::mvol_header(w, MvolDtype::f32_vector3, f.dims(), f.spacing());
    for (const auto& v : f.data())
        for (float c : v)
            w.f32(c);
    return w.bytes();
}

inline MvolObject decode_mvol(const std::vector<char>& bytes, const std::string& source = "<memory>")
{
    detail::ByteReader r(bytes, source);
    if (bytes.size() < 4)
        throw TruncatedFile(source + ": shorter than the MVOL magic");
    if (std::memcmp(bytes.data(), "MVOL", 4) != 0)
        throw BadMagic(source + ": not an MVOL file");
    r.seek(4);
    const std::uint32_t version = r.u32();
    if (version != mvol_version)
        throw UnsupportedVersion(source + ": MVOL version " + std::to_string(version));
    const std::uint32_t code = r.u32();
    if (code > 3)
        throw UnsupportedDatatype(source + ": MVOL dtype " + std::to_string(code));
    Dims d;
    d.nx = r.u32();
    d.ny = r.u32();
    d.nz = r.u32();
    Spacing s;
    for (double& x : s)
        x = r.f32();
    if (d.size() == 0)
        throw BadHeader(source + ": zero dimension " + d.str());

    const auto dtype = static_cast<MvolDtype>(code);
    const std::size_t n = d.size();
    const std::size_t elem = dtype == MvolDtype::u8_label ? 1 : dtype == MvolDtype::i16_label ? 2 : 4;
    const std::size_t comps = dtype == MvolDtype::f32_vector3 ? 3 : 1;
    const std::size_t payload = n * elem * comps;
    if (r.remaining() < payload)
        throw TruncatedFile(source + ": payload has " + std::to_string(r.remaining()) + " bytes, expected " +
                            std::to_string(payload));
    if (r.remaining() > payload)
        throw FormatError(source + ": " + std::to_string(r.remaining() - payload) + " trailing bytes");

    switch (dtype) {
    case MvolDtype::f32_scalar: {
        std::vector<float> data(n);
        for (auto& x : data)
            x = r.f32();
        ScalarVolume v(d, s, std::move(data));
        if (!v.all_finite())
            throw InvalidData(source + ": non-finite voxel values");
        return v;
    }
    case MvolDtype::u8_label:
    case MvolDtype::i16_label: {
        const bool narrow = dtype == MvolDtype::u8_label;
        std::vector<std::int16_t> data(n);
        for (auto& x : data)
            x = narrow ? static_cast<std::int16_t>(r.u8()) : static_cast<std::int16_t>(r.u16());
        return LabelVolume(d, s, std::move(data), narrow ? LabelDtype::u8 : LabelDtype::i16);
    }
    case MvolDtype::f32_vector3: {
        std::vector<Vec3<float>> data(n);
        for (auto& v : data)
            for (float& c : v)
                c = r.f32();
        DisplacementField f(d, s, std::move(data));
        if (!f.all_finite())
            throw InvalidData(source + ": non-finite field values");
        return f;
    }
    }
    throw UnsupportedDatatype(source + ": MVOL dtype " + std::to_string(code));
}

template <typename Object>
void write_mvol(const std::filesystem::path& path, const Object& obj)
{
    detail::write_file_bytes(path, encode_mvol(obj));
}

inline MvolObject read_mvol(const std::filesystem::path& path)
{
    return decode_mvol(detail::read_file_bytes(path), path.string());
}

/// Reads and requires a specific object kind.
template <typename Object>
Object read_mvol_as(const std::filesystem::path& path)
{
    auto obj = read_mvol(path);
    if (auto* p = std::get_if<Object>(&obj))
        return std::move(*p);
    throw FormatError(path.string() + ": MVOL file holds a different object kind");
}

} // namespace msmorph
