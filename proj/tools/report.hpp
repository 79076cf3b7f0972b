#pragma once

// JSON serialization of reports and the run manifest shared by every subcommand.

#include <array>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "json.hpp"
#include "msmorph/msmorph.hpp"

#ifndef MSMORPH_VERSION
#define MSMORPH_VERSION "0.0.0"
#endif

namespace msmorph::cli {

using nlohmann::ordered_json;

inline std::string sha256_hex(const std::vector<char>& bytes)
{
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 failed");
    std::string hex;
    char buf[3];
    for (unsigned i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        hex += buf;
    }
    return hex;
}

/// Inputs are keyed by role, not path, so reruns from another directory produce identical reports.
struct RunManifest {
    std::string command;
    ordered_json config = ordered_json::object();
    std::map<std::string, std::string> input_digests;
    std::optional<double> wall_seconds; ///< only when timings are requested

    void add_input(const std::string& role, const std::filesystem::path& path)
    {
        input_digests[role] = sha256_hex(detail::read_file_bytes(path));
    }
};

inline ordered_json to_json(const RunManifest& m)
{
    ordered_json j;
    j["command"] = m.command;
    j["tool_version"] = MSMORPH_VERSION;
    j["config"] = m.config;
    j["input_sha256"] = m.input_digests;
    j["wall_seconds"] = m.wall_seconds ? ordered_json(*m.wall_seconds) : ordered_json(nullptr);
    return j;
}

inline ordered_json to_json(const Dims& d) { return {d.nx, d.ny, d.nz}; }

inline ordered_json to_json(const RegistrationConfig& c)
{
    ordered_json j;
    j["levels"] = c.depth;
    j["iters"] = c.iters_per_level;
    j["step"] = c.step_init;
    j["lambda"] = c.lambda;
    j["reg_scale"] = to_string(c.reg_scale);
    j["weighting"] = to_string(c.weighting);
    j["gain"] = c.gain;
    j["bias"] = c.bias;
    j["diff"] = c.diff;
    j["squaring_steps"] = c.squaring_steps;
    j["max_halvings"] = c.max_halvings;
    j["direction_sigma"] = c.direction_sigma;
    ordered_json w = ordered_json::array();
    for (std::size_t l = 1; l <= c.depth; ++l)
        w.push_back(c.window_for_level(l));
    j["ncc_windows"] = w;
    return j;
}

inline ordered_json to_json(const LossBreakdown& l)
{
    return {{"similarity", l.sim}, {"regularizer", l.reg}, {"lambda", l.lambda}, {"total", l.total}};
}

inline ordered_json to_json(const JacobianStats& s)
{
    return {{"min_det", s.min_det},
            {"max_det", s.max_det},
            {"count_nonpositive", s.count_nonpositive},
            {"voxels", s.voxels},
            {"fraction_nonpositive", s.fraction_nonpositive}};
}

template <typename T>
ordered_json optional_json(const std::optional<T>& v)
{
    return v ? ordered_json(*v) : ordered_json(nullptr);
}

inline ordered_json to_json(const RegistrationReport& r, bool timings)
{
    ordered_json j;
    ordered_json stages = ordered_json::array();
    for (const auto& s : r.stages) {
        ordered_json st;
        st["stage"] = s.stage;
        st["level"] = s.level;
        st["dims"] = to_json(s.dims);
        st["ncc_window"] = s.ncc_window;
        st["accepted_steps"] = s.accepted_steps;
        st["rejected_trials"] = s.rejected_trials;
        st["loss_trace"] = s.loss_trace;
        st["final_loss"] = to_json(s.final_loss);
        st["mean_dsc"] = optional_json(s.mean_dsc);
        st["jacobian"] = to_json(s.jacobian);
        if (timings)
            st["wall_seconds"] = s.wall_seconds;
        stages.push_back(std::move(st));
    }
    j["stages"] = std::move(stages);
    j["initial_dsc"] = optional_json(r.initial_dsc);
    j["final_dsc"] = r.stages.empty() ? ordered_json(nullptr) : optional_json(r.stages.back().mean_dsc);
    j["initial_loss"] = to_json(r.initial_loss);
    j["final_loss"] = to_json(r.final_loss);
    j["final_mean_abs_displacement"] = mean_abs_component(r.final_field);
    j["final_max_abs_displacement"] = max_abs_component(r.final_field);
    j["final_jacobian"] = to_json(r.final_jacobian);
    return j;
}

inline ordered_json to_json(const MetricReport& r)
{
    ordered_json j;
    ordered_json labels = ordered_json::object();
    for (const auto& [label, m] : r.per_label)
        labels[std::to_string(label)] = {{"dsc", m.dsc},
                                         {"present_in_warped", m.present_in_warped},
                                         {"hd95_mm", optional_json(m.hd95)},
                                         {"assd_mm", optional_json(m.assd)}};
    j["per_label"] = std::move(labels);
    j["mean_dsc"] = r.mean_dsc;
    j["mean_hd95_mm"] = r.mean_hd95;
    j["mean_assd_mm"] = r.mean_assd;
    j["missing_labels"] = r.missing_labels;
    j["nonpositive_jacobian_fraction"] = r.nonpositive_jacobian_fraction;
    j["jacobian"] = to_json(r.jacobian);
    return j;
}

inline void write_json(const std::filesystem::path& path, const ordered_json& j)
{
    const std::string text = j.dump(2) + "\n";
    detail::write_file_bytes(path, std::vector<char>(text.begin(), text.end()));
}

} // namespace msmorph::cli
