#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "modgrok/network.hpp"
#include "modgrok/task.hpp"
#include "modgrok/training.hpp"

namespace modgrok::config {

/// A full experiment description. The original task spec JSON is retained so
/// that serialize -> parse -> serialize is the identity.
struct ExperimentConfig {
    nlohmann::json task_spec;
    tasks::ModularTask task;
    int N = 500;
    net::Activation activation = net::Activation::Quadratic;
    net::Scaling scaling = net::Scaling::MeanField;
    train::OptimizerConfig optimizer;
    double alpha = 0.5;
    std::uint64_t split_seed = 0;
    std::uint64_t init_seed = 1;
    train::Schedule schedule;
    std::string out_dir; // optional; CLI --out or the output-root env var win
};

/// Univariate map spec: "identity" | "square" | "cube" |
/// {"affine": {"a": ..., "b": ...}} | explicit length-p integer array.
tasks::Table parse_table(const nlohmann::json& spec, int p, const std::string& path);

/// Task spec: {"task": "add"|"sub"|"mul"|"mixed_quadratic"|"mixed_cubic", "p": ...}
/// or {"task": "general_sum", "p": ..., "f1": ..., "f2": ...}
/// or {"task": "composed_sum", "p": ..., "F": ..., "f1": ..., "f2": ...}.
tasks::ModularTask parse_task(const nlohmann::json& spec);

ExperimentConfig parse_config(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);

ExperimentConfig load_config_file(const std::filesystem::path& path);

/// Applies one `--set key=value` override onto raw config JSON; dots in the
/// key select nested fields, the value is parsed as JSON with a string
/// fallback.
void apply_override(nlohmann::json& j, const std::string& assignment);

} // namespace modgrok::config
