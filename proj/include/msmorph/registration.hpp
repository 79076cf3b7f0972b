#pragma once

// Coarse-to-fine registration driver.
//
// Stage 1 estimates an increment at the coarsest level from the raw pair. Stage 2 re-estimates at the
// same level against the moving features pre-warped by stage 1 and fuses the two. Every finer level then
// upsamples the running field, pre-warps the moving features with it, estimates an increment and fuses.
// A depth-L run therefore has L + 1 stages.
//
// Each increment is found by descent on -NCC + lambda * smoothness, starting from zero. Component d of
// the descent direction is the d-component of the loss gradient computed on the pair modulated by the
// direction-d weight map. A step is accepted only if the unweighted level loss does not increase;
// otherwise the step is halved (at most max_halvings times) and, failing that, the level stops early.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "msmorph/features.hpp"
#include "msmorph/metrics.hpp"
#include "msmorph/phantom.hpp"
#include "msmorph/similarity.hpp"
#include "msmorph/volume.hpp"
#include "msmorph/warp.hpp"

namespace msmorph {

/// How lambda scales the smoothness sum inside the optimizer.
///   mean - lambda multiplies the average squared derivative (9 entries per voxel), so it trades off
///          against NCC, itself an average, independently of the grid size
///   sum  - lambda multiplies the raw sum
enum class RegularizerScale { mean, sum };

inline std::string_view to_string(RegularizerScale s) { return s == RegularizerScale::mean ? "mean" : "sum"; }

inline RegularizerScale parse_regularizer_scale(std::string_view s)
{
    if (s == "mean")
        return RegularizerScale::mean;
    if (s == "sum")
        return RegularizerScale::sum;
    throw InvalidArgument("unknown regularizer scale '" + std::string(s) + "'");
}

struct RegistrationConfig {
    std::size_t depth = 4;
    std::size_t iters_per_level = 60;
    double step_init = 0.1; ///< voxels; largest component change of the first step at every level
    double lambda = 1.0;
    RegularizerScale reg_scale = RegularizerScale::mean;
    WeightingMode weighting = WeightingMode::full;
    double gain = default_weight_gain;
    double bias = default_weight_bias;
    bool diff = false;
    int squaring_steps = default_squaring_steps;
    int max_halvings = 5;
    double direction_sigma = 1.0; ///< Gaussian smoothing of the descent direction, voxels; 0 disables
    /// NCC window per level, index 0 = finest. Missing entries fall back to the defaults below.
    std::vector<NccWindow> ncc_windows;
    NccWindow finest_window = 9;
    NccWindow coarse_window = 0;

    NccWindow window_for_level(std::size_t level) const
    {
        if (level - 1 < ncc_windows.size())
            return ncc_windows[level - 1];
        return level == 1 ? finest_window : coarse_window;
    }

    void validate() const
    {
        if (depth < 1)
            throw InvalidArgument("config: depth must be >= 1");
        if (iters_per_level < 1)
            throw InvalidArgument("config: iters_per_level must be >= 1");
        if (!(step_init > 0.0) || !std::isfinite(step_init))
            throw InvalidArgument("config: step_init must be > 0");
        if (!(lambda >= 0.0) || !std::isfinite(lambda))
            throw InvalidArgument("config: lambda must be >= 0");
        if (!std::isfinite(gain) || !std::isfinite(bias))
            throw InvalidArgument("config: gain and bias must be finite");
        if (squaring_steps < 1)
            throw InvalidArgument("config: squaring_steps must be >= 1");
        if (max_halvings < 0)
            throw InvalidArgument("config: max_halvings must be >= 0");
        for (std::size_t l = 1; l <= depth; ++l) {
            const auto w = window_for_level(l);
            if (w != 0 && w % 2 == 0)
                throw InvalidArgument("config: NCC windows must be 0 or odd");
        }
    }
};

/// Polynomial decay: step_init * ((N - e) / N)^0.9 for iteration e of N.
inline double step_schedule(double step_init, std::size_t iter, std::size_t total)
{
    if (total == 0 || iter >= total)
        throw InvalidArgument("step_schedule: iteration " + std::to_string(iter) + " outside [0, " +
                              std::to_string(total) + ")");
    return step_init * std::pow(static_cast<double>(total - iter) / static_cast<double>(total), 0.9);
}

template <typename T>
struct IncrementResult {
    DisplacementFieldT<T> field;
    std::vector<double> loss_trace; ///< level loss before the first step and after every accepted step
    LossBreakdown final_loss;
    std::size_t accepted_steps = 0;
    std::size_t rejected_trials = 0;
};

namespace detail {

inline double effective_lambda(const RegistrationConfig& c, const Dims& d)
{
    return c.reg_scale == RegularizerScale::mean ? c.lambda / (9.0 * static_cast<double>(d.size())) : c.lambda;
}

template <typename T>
Volume<T> modulate(const Volume<T>& v, const Volume<T>& w)
{
    Volume<T> out(v.dims(), v.spacing());
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = static_cast<T>(static_cast<double>(v[i]) * static_cast<double>(w[i]));
    return out;
}

inline void smooth_direction(std::vector<Vec3<double>>& dir, const Dims& d, double sigma)
{
    for (int c = 0; c < 3; ++c) {
        Volume<double> comp(d);
        for (std::size_t i = 0; i < dir.size(); ++i)
            comp[i] = dir[i][c];
        comp = gaussian_smooth(comp, sigma);
        for (std::size_t i = 0; i < dir.size(); ++i)
            dir[i][c] = comp[i];
    }
}

} // namespace detail

/// One increment at one pyramid level. `moving` is already pre-warped by the running field.
template <typename T>
IncrementResult<T> estimate_increment(const Volume<T>& fixed, const Volume<T>& moving, const RegistrationConfig& config,
                                      std::size_t level)
{
    require_same_dims(fixed.dims(), moving.dims(), "estimate_increment");
    config.validate();
    const Dims& d = fixed.dims();
    const double lambda = detail::effective_lambda(config, d);
    const NccWindow window = config.window_for_level(level);

    const auto weights = diff_weights(fixed, moving, config.weighting, config.gain, config.bias);
    // intensity and none modes share one map across directions.
    const bool shared = config.weighting == WeightingMode::none || config.weighting == WeightingMode::intensity;
    std::vector<Volume<T>> fw, mw;
    for (int axis = 0; axis < (shared ? 1 : 3); ++axis) {
        fw.push_back(detail::modulate(fixed, weights[axis]));
        mw.push_back(detail::modulate(moving, weights[axis]));
    }

    IncrementResult<T> r;
    r.field = DisplacementFieldT<T>(d, fixed.spacing());
    auto current = total_loss(fixed, moving, r.field, lambda, window);
    r.loss_trace.push_back(current.total);

    std::vector<Vec3<double>> dir(d.size());
    for (std::size_t e = 0; e < config.iters_per_level; ++e) {
        double scale = 0.0;
        for (int axis = 0; axis < (shared ? 1 : 3); ++axis) {
            const auto g = loss_gradient(fw[axis], mw[axis], r.field, lambda, window);
            for (std::size_t i = 0; i < d.size(); ++i)
                for (int c = 0; c < 3; ++c)
                    if (shared || c == axis)
                        dir[i][c] = static_cast<double>(g[i][c]);
        }
        if (config.direction_sigma > 0.0)
            detail::smooth_direction(dir, d, config.direction_sigma);
        for (const auto& v : dir)
            for (double c : v)
                scale = std::max(scale, std::abs(c));
        if (!(scale > 0.0) || !std::isfinite(scale))
            break;

        double step = step_schedule(config.step_init, e, config.iters_per_level);
        bool accepted = false;
        for (int h = 0; h <= config.max_halvings; ++h, step *= 0.5) {
            DisplacementFieldT<T> trial(d, fixed.spacing());
            const double k = step / scale;
            for (std::size_t i = 0; i < d.size(); ++i)
                for (int c = 0; c < 3; ++c)
                    trial[i][c] = static_cast<T>(static_cast<double>(r.field[i][c]) - k * dir[i][c]);
            const auto l = total_loss(fixed, moving, trial, lambda, window);
            if (l.total <= current.total) {
                r.field = std::move(trial);
                current = l;
                accepted = true;
                break;
            }
            ++r.rejected_trials;
        }
        if (!accepted)
            break;
        ++r.accepted_steps;
        r.loss_trace.push_back(current.total);
    }

    if (config.diff)
        r.field = integrate_velocity(retag<VelocityTag>(std::move(r.field)), config.squaring_steps);
    r.final_loss = config.diff ? total_loss(fixed, moving, r.field, lambda, window) : current;
    return r;
}

struct StageRecord {
    std::size_t stage = 0; ///< 1-based
    std::size_t level = 0; ///< 1 = finest
    Dims dims;
    NccWindow ncc_window = 0;
    std::vector<double> loss_trace;
    LossBreakdown final_loss;
    std::size_t accepted_steps = 0;
    std::size_t rejected_trials = 0;
    std::optional<double> mean_dsc; ///< labels warped by the running field brought to full resolution
    JacobianStats jacobian;         ///< of the running field after this stage
    double wall_seconds = 0.0;
};

template <typename T>
struct RegistrationReportT {
    RegistrationConfig config;
    std::vector<StageRecord> stages;
    DisplacementFieldT<T> final_field;
    std::optional<double> initial_dsc;
    JacobianStats final_jacobian;
    LossBreakdown initial_loss; ///< full-resolution loss of the zero field
    LossBreakdown final_loss;   ///< full-resolution loss of the final field
    double wall_seconds = 0.0;
};
using RegistrationReport = RegistrationReportT<float>;

struct LabelPair {
    const LabelVolume& fixed;
    const LabelVolume& moving;
};

namespace detail {

/// Bring a level-l field to full resolution through successive 2x refinements.
template <typename T>
DisplacementFieldT<T> to_full_resolution(DisplacementFieldT<T> f, const std::vector<Dims>& level_dims, std::size_t level)
{
    for (std::size_t l = level; l > 1; --l)
        f = upsample_field(f, level_dims[l - 2]);
    return f;
}

} // namespace detail

template <typename T>
RegistrationReportT<T> register_pair(const Volume<T>& fixed, const Volume<T>& moving, const RegistrationConfig& config,
                                     std::optional<LabelPair> labels = std::nullopt)
{
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    require_same_dims(fixed.dims(), moving.dims(), "register_pair");
    config.validate();
    if (labels) {
        require_same_dims(labels->fixed.dims(), fixed.dims(), "register_pair labels");
        require_same_dims(labels->moving.dims(), fixed.dims(), "register_pair labels");
    }
    const std::size_t depth = config.depth;
    const auto fp = build_pyramid(fixed, depth);
    const auto mp = build_pyramid(moving, depth);
    std::vector<Dims> level_dims;
    for (const auto& v : fp.levels)
        level_dims.push_back(v.dims());

    RegistrationReportT<T> rep;
    rep.config = config;
    if (labels)
        rep.initial_dsc = mean_dice(labels->fixed, labels->moving);

    DisplacementFieldT<T> running;
    std::size_t stage = 0;
    auto run_stage = [&](std::size_t level) {
        const auto ts = clock::now();
        const auto& f = fp.level(level);
        const auto& m = mp.level(level);
        ++stage;
        IncrementResult<T> inc;
        if (stage == 1) {
            inc = estimate_increment(f, m, config, level);
            running = inc.field;
        }
        else {
            if (running.dims() != f.dims())
                running = upsample_field(running, f.dims());
            inc = estimate_increment(f, warp_scalar(m, running), config, level);
            running = compose_fields(running, inc.field);
        }
        StageRecord s;
        s.stage = stage;
        s.level = level;
        s.dims = f.dims();
        s.ncc_window = config.window_for_level(level);
        s.loss_trace = std::move(inc.loss_trace);
        s.final_loss = inc.final_loss;
        s.accepted_steps = inc.accepted_steps;
        s.rejected_trials = inc.rejected_trials;
        if (running.dims().min_extent() >= 3)
            s.jacobian = jacobian_det_stats(running);
        if (labels) {
            const auto full = detail::to_full_resolution(running, level_dims, level);
            s.mean_dsc = mean_dice(labels->fixed, warp_labels(labels->moving, full));
        }
        s.wall_seconds = std::chrono::duration<double>(clock::now() - ts).count();
        rep.stages.push_back(std::move(s));
    };

    run_stage(depth);
    run_stage(depth);
    for (std::size_t l = depth - 1; l >= 1; --l)
        run_stage(l);

    rep.final_field = std::move(running);
    rep.final_field = DisplacementFieldT<T>(rep.final_field.dims(), fixed.spacing(),
                                            std::vector<Vec3<T>>(rep.final_field.data().begin(),
                                                                 rep.final_field.data().end()));
    if (fixed.dims().min_extent() >= 3) {
        rep.final_jacobian = jacobian_det_stats(rep.final_field);
        const double lam = detail::effective_lambda(config, fixed.dims());
        const auto window = config.window_for_level(1);
        rep.initial_loss = total_loss(fixed, moving, DisplacementFieldT<T>(fixed.dims(), fixed.spacing()), lam, window);
        rep.final_loss = total_loss(fixed, moving, rep.final_field, lam, window);
    }
    rep.wall_seconds = std::chrono::duration<double>(clock::now() - t0).count();
    return rep;
}

} // namespace msmorph
