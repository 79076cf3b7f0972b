// msmorph: synthetic data, registration, field application, evaluation and slice rendering.
//
// Exit codes: 0 success, 1 data or I/O error, 2 usage error.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <variant>

#include "CLI11.hpp"
#include "msmorph/msmorph.hpp"
#include "report.hpp"
#include "viz.hpp"

namespace fs = std::filesystem;
using namespace msmorph;
using namespace msmorph::cli;

namespace {

constexpr int exit_data = 1;
constexpr int exit_usage = 2;

/// Bad flag values found after parsing.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

bool is_nifti(const fs::path& p)
{
    const auto s = p.string();
    return s.ends_with(".nii");
}

/// NIfTI intensities are rescaled to [0, 1]; MVOL volumes are taken as stored.
ScalarVolume load_image(const fs::path& p)
{
    if (is_nifti(p)) {
        auto v = read_nifti1_image(p);
        const auto [lo, hi] = std::minmax_element(v.data().begin(), v.data().end());
        const float a = *lo, range = *hi - *lo;
        for (auto& x : v.data())
            x = range > 0.0f ? (x - a) / range : 0.0f;
        return v;
    }
    return read_mvol_as<ScalarVolume>(p);
}

LabelVolume load_labels(const fs::path& p)
{
    return is_nifti(p) ? read_nifti1_labels(p) : read_mvol_as<LabelVolume>(p);
}

Dims parse_size(const std::string& s)
{
    std::size_t v[3];
    char tail = 0;
    if (std::sscanf(s.c_str(), "%zu,%zu,%zu%c", &v[0], &v[1], &v[2], &tail) != 3)
        throw UsageError("--size expects NX,NY,NZ");
    return {v[0], v[1], v[2]};
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------------------------------------------
struct SynthArgs {
    std::string size = "48,48,48";
    std::string kind = "spheres";
    double amplitude = 3.0;
    double sigma = 6.0;
    std::uint64_t seed = 1;
    fs::path out_dir;
};

int run_synth(const SynthArgs& a)
{
    Dims dims;
    PhantomKind kind;
    try {
        dims = parse_size(a.size);
        kind = parse_phantom_kind(a.kind);
        detail::require_phantom_dims(dims);
    }
    catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    if (!(a.sigma > 0.0) || !(a.amplitude >= 0.0))
        throw UsageError("--deform-sigma must be > 0 and --deform-amplitude >= 0");
    std::error_code ec;
    fs::create_directories(a.out_dir, ec);
    if (ec || !fs::is_directory(a.out_dir))
        throw IoError("cannot create output directory " + a.out_dir.string());

    const auto p = make_synthetic_pair(dims, kind, a.amplitude, a.sigma, a.seed);
    write_mvol(a.out_dir / "fixed.mvol", p.fixed);
    write_mvol(a.out_dir / "moving.mvol", p.moving);
    write_mvol(a.out_dir / "fixed_labels.mvol", p.fixed_labels);
    write_mvol(a.out_dir / "moving_labels.mvol", p.moving_labels);
    write_mvol(a.out_dir / "truth_field.mvol", p.truth);
    return 0;
}

// ---------------------------------------------------------------------------------------------------------------
struct RegisterArgs {
    fs::path fixed, moving, fixed_labels, moving_labels;
    fs::path out_field, out_warped, report;
    RegistrationConfig config;
    std::string weighting = "full";
    std::string reg_scale = "mean";
    std::vector<std::size_t> windows;
    bool timings = false;
};

int run_register(RegisterArgs& a)
{
    const auto t0 = std::chrono::steady_clock::now();
    auto& c = a.config;
    try {
        c.weighting = parse_weighting_mode(a.weighting);
        c.reg_scale = parse_regularizer_scale(a.reg_scale);
        c.ncc_windows = a.windows;
        c.validate();
    }
    catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    if (a.fixed_labels.empty() != a.moving_labels.empty())
        throw UsageError("--fixed-labels and --moving-labels go together");

    const auto fixed = load_image(a.fixed);
    const auto moving = load_image(a.moving);
    require_same_dims(fixed.dims(), moving.dims(), "register");
    if (!depth_fits(fixed.dims(), c.depth))
        throw InvalidArgument("--levels " + std::to_string(c.depth) + " too deep for dims " + fixed.dims().str());

    RunManifest m;
    m.command = "register";
    m.config = to_json(c);
    m.add_input("fixed", a.fixed);
    m.add_input("moving", a.moving);

    std::optional<LabelVolume> fl, ml;
    if (!a.fixed_labels.empty()) {
        fl = load_labels(a.fixed_labels);
        ml = load_labels(a.moving_labels);
        m.add_input("fixed_labels", a.fixed_labels);
        m.add_input("moving_labels", a.moving_labels);
    }
    const auto rep = fl ? register_pair(fixed, moving, c, LabelPair{*fl, *ml}) : register_pair(fixed, moving, c);

    if (!a.out_field.empty())
        write_mvol(a.out_field, rep.final_field);
    if (!a.out_warped.empty())
        write_mvol(a.out_warped, warp_scalar(moving, rep.final_field));
    if (!a.report.empty()) {
        if (a.timings)
            m.wall_seconds = seconds_since(t0);
        ordered_json j;
        j["manifest"] = to_json(m);
        j["registration"] = to_json(rep, a.timings);
        write_json(a.report, j);
    }
    return 0;
}

// ---------------------------------------------------------------------------------------------------------------
struct ApplyArgs {
    fs::path field, in, out;
    bool labels = false;
};

int run_apply(const ApplyArgs& a)
{
    const auto field = read_mvol_as<DisplacementField>(a.field);
    if (is_nifti(a.in)) {
        if (a.labels)
            write_mvol(a.out, warp_labels(read_nifti1_labels(a.in), field));
        else
            write_mvol(a.out, warp_scalar(load_image(a.in), field));
        return 0;
    }
    auto obj = read_mvol(a.in);
    if (a.labels) {
        auto* lv = std::get_if<LabelVolume>(&obj);
        if (!lv)
            throw FormatError(a.in.string() + ": --labels needs a label volume");
        write_mvol(a.out, warp_labels(*lv, field));
    }
    else {
        auto* sv = std::get_if<ScalarVolume>(&obj);
        if (!sv)
            throw FormatError(a.in.string() + ": not a scalar volume (use --labels for label maps)");
        write_mvol(a.out, warp_scalar(*sv, field));
    }
    return 0;
}

// ---------------------------------------------------------------------------------------------------------------
struct EvaluateArgs {
    fs::path fixed_labels, warped_labels, field, report;
    bool timings = false;
};

int run_evaluate(const EvaluateArgs& a)
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto fixed = load_labels(a.fixed_labels);
    const auto warped = load_labels(a.warped_labels);
    const auto field = read_mvol_as<DisplacementField>(a.field);
    const auto r = evaluate_all(fixed, warped, field);

    RunManifest m;
    m.command = "evaluate";
    m.add_input("fixed_labels", a.fixed_labels);
    m.add_input("warped_labels", a.warped_labels);
    m.add_input("field", a.field);
    if (a.timings)
        m.wall_seconds = seconds_since(t0);
    ordered_json j;
    j["manifest"] = to_json(m);
    j["metrics"] = to_json(r);
    write_json(a.report, j);
    return 0;
}

// ---------------------------------------------------------------------------------------------------------------
struct VizArgs {
    fs::path fixed, moving, field;
    std::string axis = "z";
    std::size_t slice = 0;
    std::string out;
    std::string weighting = "full";
    double gain = default_weight_gain;
    double bias = default_weight_bias;
};

int run_viz(const VizArgs& a)
{
    int axis;
    WeightingMode mode;
    try {
        axis = parse_axis(a.axis);
        mode = parse_weighting_mode(a.weighting);
    }
    catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    const auto fixed = load_image(a.fixed);
    const auto moving = load_image(a.moving);
    require_same_dims(fixed.dims(), moving.dims(), "viz");
    if (a.slice >= fixed.dims()[axis])
        throw InvalidArgument("--slice " + std::to_string(a.slice) + " out of range for axis " + a.axis +
                              " (extent " + std::to_string(fixed.dims()[axis]) + ")");

    // One intensity window for all slices so they compare directly.
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto* v : {&fixed, &moving})
        for (float x : v->data()) {
            lo = std::min(lo, double(x));
            hi = std::max(hi, double(x));
        }
    write_pgm(a.out + "_fixed.pgm", slice_image(fixed, axis, a.slice, lo, hi));
    write_pgm(a.out + "_moving.pgm", slice_image(moving, axis, a.slice, lo, hi));

    ScalarVolume against = moving;
    if (!a.field.empty()) {
        const auto field = read_mvol_as<DisplacementField>(a.field);
        require_same_dims(fixed.dims(), field.dims(), "viz");
        against = warp_scalar(moving, field);
        write_pgm(a.out + "_warped.pgm", slice_image(against, axis, a.slice, lo, hi));
        write_pgm(a.out + "_grid.pgm", grid_image(field, axis, a.slice));
    }
    write_pgm(a.out + "_weights.pgm", weight_image(diff_weights(fixed, against, mode, a.gain, a.bias), axis, a.slice));
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"msmorph - multiscale deformable registration"};
    app.require_subcommand(1);
    app.set_version_flag("--version", MSMORPH_VERSION);

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "Generate a phantom pair with a known deformation");
    synth->add_option("--size", sa.size, "NX,NY,NZ")->capture_default_str();
    synth->add_option("--kind", sa.kind, "spheres | blobs | checker")->capture_default_str();
    synth->add_option("--deform-amplitude", sa.amplitude, "Largest displacement component, voxels")
        ->capture_default_str();
    synth->add_option("--deform-sigma", sa.sigma, "Smoothing of the deformation, voxels")->capture_default_str();
    synth->add_option("--seed", sa.seed)->capture_default_str();
    synth->add_option("--out-dir", sa.out_dir)->required();

    RegisterArgs ra;
    auto* reg = app.add_subcommand("register", "Register moving onto fixed");
    reg->add_option("--fixed", ra.fixed)->required()->check(CLI::ExistingFile);
    reg->add_option("--moving", ra.moving)->required()->check(CLI::ExistingFile);
    reg->add_option("--fixed-labels", ra.fixed_labels)->check(CLI::ExistingFile);
    reg->add_option("--moving-labels", ra.moving_labels)->check(CLI::ExistingFile);
    reg->add_option("--levels", ra.config.depth, "Pyramid depth L")->capture_default_str();
    reg->add_option("--iters", ra.config.iters_per_level, "Descent iterations per stage")->capture_default_str();
    reg->add_option("--lambda", ra.config.lambda, "Smoothness weight")->capture_default_str();
    reg->add_option("--reg-scale", ra.reg_scale, "mean | sum")->capture_default_str();
    reg->add_option("--step", ra.config.step_init, "Initial step, voxels")->capture_default_str();
    reg->add_option("--weighting", ra.weighting, "full | intensity | gradient | none")->capture_default_str();
    reg->add_option("--gain", ra.config.gain)->capture_default_str();
    reg->add_option("--bias", ra.config.bias)->capture_default_str();
    reg->add_flag("--diff", ra.config.diff, "Integrate each increment as a stationary velocity");
    reg->add_option("--squaring-steps", ra.config.squaring_steps)->capture_default_str();
    reg->add_option("--max-halvings", ra.config.max_halvings)->capture_default_str();
    reg->add_option("--direction-sigma", ra.config.direction_sigma)->capture_default_str();
    reg->add_option("--ncc-windows", ra.windows, "Per-level NCC window, finest first; 0 = global")->delimiter(',');
    reg->add_option("--out-field", ra.out_field);
    reg->add_option("--out-warped", ra.out_warped);
    reg->add_option("--report", ra.report);
    reg->add_flag("--timings", ra.timings, "Record wall times in the report");

    ApplyArgs aa;
    auto* apply = app.add_subcommand("apply", "Warp a volume or label map with a field");
    apply->add_option("--field", aa.field)->required()->check(CLI::ExistingFile);
    apply->add_option("--in", aa.in)->required()->check(CLI::ExistingFile);
    apply->add_option("--out", aa.out)->required();
    apply->add_flag("--labels", aa.labels, "Nearest-neighbour resampling of a label map");

    EvaluateArgs ea;
    auto* eval = app.add_subcommand("evaluate", "Overlap, surface distance and folding metrics");
    eval->add_option("--fixed-labels", ea.fixed_labels)->required()->check(CLI::ExistingFile);
    eval->add_option("--warped-labels", ea.warped_labels)->required()->check(CLI::ExistingFile);
    eval->add_option("--field", ea.field)->required()->check(CLI::ExistingFile);
    eval->add_option("--report", ea.report)->required();
    eval->add_flag("--timings", ea.timings, "Record wall time in the report");

    VizArgs va;
    auto* viz = app.add_subcommand("viz", "Write P5 slice images");
    viz->add_option("--fixed", va.fixed)->required()->check(CLI::ExistingFile);
    viz->add_option("--moving", va.moving)->required()->check(CLI::ExistingFile);
    viz->add_option("--field", va.field)->check(CLI::ExistingFile);
    viz->add_option("--axis", va.axis)->capture_default_str();
    viz->add_option("--slice", va.slice)->required();
    viz->add_option("--out", va.out, "Output prefix")->required();
    viz->add_option("--weighting", va.weighting)->capture_default_str();
    viz->add_option("--gain", va.gain)->capture_default_str();
    viz->add_option("--bias", va.bias)->capture_default_str();

    try {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    }
    catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    }
    catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_usage;
    }

    try {
        if (*synth)
            return run_synth(sa);
        if (*reg)
            return run_register(ra);
        if (*apply)
            return run_apply(aa);
        if (*eval)
            return run_evaluate(ea);
        if (*viz)
            return run_viz(va);
    }
    catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return exit_usage;
    }
    catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_data;
    }
    return exit_usage;
}
