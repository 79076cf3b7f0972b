#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace msmorph;
using namespace msmorph::testing;
namespace fs = std::filesystem;

TEST(Containers, ShapeChecks)
{
    EXPECT_THROW(ScalarVolume(Dims{0, 2, 2}), InvalidArgument);
    EXPECT_THROW(ScalarVolume(Dims{2, 2, 2}, unit_spacing, std::vector<float>(7)), InvalidData);
    EXPECT_THROW(ScalarVolume(Dims{2, 2, 2}, Spacing{1.0, 0.0, 1.0}), InvalidArgument);
    EXPECT_THROW(LabelVolume(Dims{1, 1, 2}, unit_spacing, std::vector<std::int16_t>{0, -1}), InvalidData);
    EXPECT_EQ(halved(Dims{5, 4, 1}), (Dims{3, 2, 1}));
}

TEST(Mvol, ScalarFileSize)
{
    const auto dir = scratch_dir("mvol_size");
    ScalarVolume v(Dims{2, 2, 2}, Spacing{1.0, 1.5, 2.0});
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = float(i) * 0.25f;
    write_mvol(dir / "v.mvol", v);
    // 9 header fields of 4 bytes, then 8 floats.
    EXPECT_EQ(fs::file_size(dir / "v.mvol"), 36u + 32u);

    const auto bytes = encode_mvol(v);
    EXPECT_EQ(std::string(bytes.data(), 4), "MVOL");
    EXPECT_EQ(bytes[4], 1);
    EXPECT_EQ(bytes[8], 0);
    EXPECT_EQ(bytes[12], 2);
}

TEST(Mvol, RoundTripAllKinds)
{
    const auto dir = scratch_dir("mvol_rt");
    std::mt19937_64 rng(5);
    const Dims d{5, 4, 3};
    ScalarVolume s = random_volume(d, rng, -3.0, 3.0);
    s.set_spacing({0.5, 1.0, 2.5});
    write_mvol(dir / "s.mvol", s);
    EXPECT_EQ(read_mvol_as<ScalarVolume>(dir / "s.mvol"), s);

    for (auto dtype : {LabelDtype::u8, LabelDtype::i16}) {
        LabelVolume l(d, unit_spacing, dtype);
        for (std::size_t i = 0; i < l.size(); ++i)
            l[i] = static_cast<std::int16_t>(dtype == LabelDtype::u8 ? i % 7 : 300 + i);
        write_mvol(dir / "l.mvol", l);
        EXPECT_EQ(read_mvol_as<LabelVolume>(dir / "l.mvol"), l);
    }

    auto f = random_field(d, rng, 2.0);
    write_mvol(dir / "f.mvol", f);
    EXPECT_EQ(read_mvol_as<DisplacementField>(dir / "f.mvol"), f);
    EXPECT_THROW(read_mvol_as<ScalarVolume>(dir / "f.mvol"), FormatError);
}

TEST(Mvol, RefusesNonFinite)
{
    const auto dir = scratch_dir("mvol_nan");
    ScalarVolume v(Dims{2, 2, 2});
    v[3] = std::nanf("");
    EXPECT_THROW(write_mvol(dir / "v.mvol", v), InvalidData);
    DisplacementField f(Dims{2, 2, 2});
    f[1][2] = INFINITY;
    EXPECT_THROW(write_mvol(dir / "f.mvol", f), InvalidData);
    EXPECT_FALSE(fs::exists(dir / "v.mvol"));
}

TEST(Mvol, DistinctReadErrors)
{
    ScalarVolume v(Dims{2, 2, 2}, unit_spacing, 1.0f);
    const auto good = encode_mvol(v);

    auto magic = good;
    std::memcpy(magic.data(), "XXXX", 4);
    EXPECT_THROW(decode_mvol(magic), BadMagic);

    auto version = good;
    version[4] = 2;
    EXPECT_THROW(decode_mvol(version), UnsupportedVersion);

    auto dtype = good;
    dtype[8] = 9;
    EXPECT_THROW(decode_mvol(dtype), UnsupportedDatatype);

    auto shorter = good;
    shorter.pop_back();
    EXPECT_THROW(decode_mvol(shorter), TruncatedFile);

    EXPECT_THROW(decode_mvol(std::vector<char>(good.begin(), good.begin() + 20)), TruncatedFile);

    auto nan_payload = good;
    const float nan = std::nanf("");
    std::memcpy(nan_payload.data() + 36, &nan, 4);
    EXPECT_THROW(decode_mvol(nan_payload), InvalidData);

    EXPECT_THROW(read_mvol("/nonexistent/dir/file.mvol"), IoError);
}

namespace {

/// Minimal single-file NIfTI-1: 348-byte header, 4 extension bytes, then data.
std::vector<char> nifti_bytes(Dims d, std::int16_t datatype, std::int16_t bitpix, const std::vector<char>& payload,
                              float slope = 0.0f, float inter = 0.0f, std::int16_t ndim = 3)
{
    std::vector<char> b(352, 0);
    auto put_i32 = [&](std::size_t off, std::int32_t v) { std::memcpy(b.data() + off, &v, 4); };
    auto put_i16 = [&](std::size_t off, std::int16_t v) { std::memcpy(b.data() + off, &v, 2); };
    auto put_f32 = [&](std::size_t off, float v) { std::memcpy(b.data() + off, &v, 4); };
    put_i32(0, 348);
    put_i16(40, ndim);
    put_i16(42, std::int16_t(d.nx));
    put_i16(44, std::int16_t(d.ny));
    put_i16(46, std::int16_t(d.nz));
    for (int k = 4; k < 8; ++k)
        put_i16(40 + 2 * k, 1);
    put_i16(70, datatype);
    put_i16(72, bitpix);
    put_f32(76, 1.0f);
    put_f32(80, 1.25f);
    put_f32(84, 1.5f);
    put_f32(88, 2.0f);
    put_f32(108, 352.0f);
    put_f32(112, slope);
    put_f32(116, inter);
    std::memcpy(b.data() + 344, "n+1", 4);
    b.resize(352 + payload.size());
    std::copy(payload.begin(), payload.end(), b.begin() + 352);
    return b;
}

template <typename T>
std::vector<char> raw_payload(const std::vector<T>& v)
{
    std::vector<char> out(v.size() * sizeof(T));
    std::memcpy(out.data(), v.data(), out.size());
    return out;
}

} // namespace

TEST(Nifti, HandBuiltFloatImage)
{
    const auto dir = scratch_dir("nifti_f32");
    std::vector<float> values(64);
    for (std::size_t i = 0; i < values.size(); ++i)
        values[i] = float(i) - 10.0f;
    detail::write_file_bytes(dir / "a.nii", nifti_bytes({4, 4, 4}, 16, 32, raw_payload(values)));
    const auto v = read_nifti1_image(dir / "a.nii");
    EXPECT_EQ(v.dims(), (Dims{4, 4, 4}));
    EXPECT_EQ(v.spacing(), (Spacing{1.25, 1.5, 2.0}));
    EXPECT_EQ(std::vector<float>(v.data().begin(), v.data().end()), values);
    EXPECT_TRUE(std::holds_alternative<ScalarVolume>(read_nifti1(dir / "a.nii")));
}

TEST(Nifti, SlopeAndIntercept)
{
    const auto dir = scratch_dir("nifti_scale");
    std::vector<std::int16_t> values(8, 3);
    detail::write_file_bytes(dir / "s.nii", nifti_bytes({2, 2, 2}, 4, 16, raw_payload(values), 2.0f, 1.0f));
    const auto v = read_nifti1_image(dir / "s.nii");
    for (float x : v.data())
        EXPECT_EQ(x, 7.0f);
}

TEST(Nifti, LabelsAndErrors)
{
    const auto dir = scratch_dir("nifti_err");
    std::vector<std::uint8_t> labels{0, 1, 2, 0, 1, 1, 0, 3};
    detail::write_file_bytes(dir / "l.nii", nifti_bytes({2, 2, 2}, 2, 8, raw_payload(labels)));
    const auto l = read_nifti1_labels(dir / "l.nii");
    EXPECT_EQ(l.dtype(), LabelDtype::u8);
    EXPECT_EQ(l.at(1, 1, 1), 3);
    EXPECT_TRUE(std::holds_alternative<LabelVolume>(read_nifti1(dir / "l.nii")));

    std::vector<double> f64(8, 1.0);
    detail::write_file_bytes(dir / "d.nii", nifti_bytes({2, 2, 2}, 64, 64, raw_payload(f64)));
    EXPECT_THROW(read_nifti1(dir / "d.nii"), UnsupportedDatatype);

    detail::write_file_bytes(dir / "4d.nii", nifti_bytes({2, 2, 2}, 2, 8, raw_payload(labels), 0, 0, 4));
    EXPECT_THROW(read_nifti1(dir / "4d.nii"), BadHeader);

    auto bad_size = nifti_bytes({2, 2, 2}, 2, 8, raw_payload(labels));
    const std::int32_t wrong = 540;
    std::memcpy(bad_size.data(), &wrong, 4);
    detail::write_file_bytes(dir / "h.nii", bad_size);
    EXPECT_THROW(read_nifti1(dir / "h.nii"), FormatError);

    auto short_data = nifti_bytes({2, 2, 2}, 2, 8, raw_payload(labels));
    short_data.pop_back();
    detail::write_file_bytes(dir / "t.nii", short_data);
    EXPECT_THROW(read_nifti1(dir / "t.nii"), TruncatedFile);
}

TEST(Phantom, Deterministic)
{
    for (auto kind : {PhantomKind::spheres, PhantomKind::blobs, PhantomKind::checker}) {
        const auto a = make_phantom({20, 18, 16}, kind, 11);
        const auto b = make_phantom({20, 18, 16}, kind, 11);
        EXPECT_EQ(encode_mvol(a.image), encode_mvol(b.image));
        EXPECT_EQ(encode_mvol(a.labels), encode_mvol(b.labels));
        for (float x : a.image.data()) {
            EXPECT_GE(x, 0.0f);
            EXPECT_LE(x, 1.0f);
        }
        EXPECT_GE(foreground_labels(a.labels).size(), 2u) << to_string(kind);
    }
    EXPECT_NE(encode_mvol(make_phantom({16, 16, 16}, PhantomKind::spheres, 1).labels),
              encode_mvol(make_phantom({16, 16, 16}, PhantomKind::spheres, 2).labels));
}

TEST(Phantom, SphereRegionsAreConnected)
{
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const auto p = make_phantom({32, 32, 32}, PhantomKind::spheres, seed);
        for (auto l : foreground_labels(p.labels))
            EXPECT_EQ(count_components(p.labels, l), 1) << "seed " << seed << " label " << l;
    }
}

TEST(Phantom, RejectsSmallDims)
{
    EXPECT_THROW(make_phantom({4, 4, 4}, PhantomKind::spheres, 1), InvalidArgument);
    EXPECT_THROW(make_phantom({8, 8, 7}, PhantomKind::checker, 1), InvalidArgument);
    EXPECT_THROW(parse_phantom_kind("cubes"), InvalidArgument);
}

TEST(SmoothField, ZeroAmplitude)
{
    const auto f = make_smooth_field({10, 10, 10}, 0.0, 3.0, 1);
    EXPECT_EQ(max_abs_component(f), 0.0);
    EXPECT_THROW(make_smooth_field({10, 10, 10}, 1.0, 0.0, 1), InvalidArgument);
    EXPECT_THROW(make_smooth_field({10, 10, 10}, -1.0, 2.0, 1), InvalidArgument);
}

TEST(SmoothField, BoundAndDeterminism)
{
    const auto f = make_smooth_field({24, 20, 16}, 2.0, 4.0, 9);
    EXPECT_LE(max_abs_component(f), 2.0);
    EXPECT_GT(max_abs_component(f), 1.99);
    EXPECT_EQ(f, make_smooth_field({24, 20, 16}, 2.0, 4.0, 9));
    EXPECT_NE(f, make_smooth_field({24, 20, 16}, 2.0, 4.0, 10));
}

TEST(SmoothField, SmallFieldsDoNotFold)
{
    for (double sigma : {3.0, 5.0, 8.0})
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            const auto f = make_smooth_field({32, 32, 32}, 0.4 * sigma, sigma, seed);
            EXPECT_EQ(jacobian_det_stats(f).fraction_nonpositive, 0.0) << "sigma " << sigma << " seed " << seed;
        }
}
