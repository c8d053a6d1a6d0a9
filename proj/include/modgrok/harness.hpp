#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "modgrok/config.hpp"
#include "modgrok/training.hpp"

namespace modgrok::harness {

/// Artifact layout inside a run directory:
///   config.json            resolved config snapshot
///   record.csv             metrics stream
///   checkpoint_final.ckpt  weights the summary describes
///   optstate_final.bin     optimizer state for resuming/extending
///   checkpoint_epoch_NNNNNNNN.ckpt / optstate_epoch_NNNNNNNN.bin  periodic
///   summary.json           final metrics, grokking epoch, wall time
///   DIVERGED               failure marker (reason text), only on divergence
struct RunOutcome {
    std::filesystem::path dir;
    train::TrainRecord record;
    net::NetworkParams params;
    nlohmann::json summary;
};

RunOutcome run(const config::ExperimentConfig& cfg, const std::filesystem::path& dir);

/// Continues a run directory from its newest checkpoint at an epoch below the
/// target, recomputing the metrics rows from that epoch on. `extend_epochs`
/// raises the schedule budget; by default the stored schedule is used.
RunOutcome resume_run(const std::filesystem::path& dir,
                      std::optional<long> extend_epochs = std::nullopt);

/// Output root fallback when no directory is given on the CLI.
extern const char* const kOutputRootEnvVar; // MODGROK_OUT

std::filesystem::path resolve_out_dir(const std::string& cli_out,
                                      const config::ExperimentConfig& cfg,
                                      const std::string& default_leaf);

/// Grokking-time curve over the data fraction, per optimizer. Each point
/// trains n_seeds fresh runs under an epoch budget; a point groks when a
/// majority of its seeds have a sustained crossing. Reports a bracket
/// {below, at} per optimizer around the smallest grokked alpha.
nlohmann::json sweep_alpha(const config::ExperimentConfig& base,
                           const std::vector<double>& alphas,
                           const std::vector<train::OptimizerConfig>& optimizers,
                           long budget_epochs, int n_seeds, int parallelism,
                           const std::filesystem::path& out_dir);

/// Accuracy versus width for constructed weights (full dataset, median over
/// 5 phase seeds) and/or trained runs at alpha = 0.5.
nlohmann::json sweep_width(const config::ExperimentConfig& base, const std::vector<int>& widths,
                           const std::vector<std::string>& sources, int parallelism,
                           const std::filesystem::path& out_dir);

/// Constructed-weight accuracy per (activation, width): Quadratic under
/// MeanField scaling, ReLU/GELU under SqrtWidth. Also reports, per
/// activation, the smallest width whose median accuracy reaches 1.0.
nlohmann::json eval_analytic_activations(int p, const std::vector<int>& widths,
                                         const std::vector<net::Activation>& activations,
                                         int n_seeds, const std::filesystem::path& out_dir);

} // namespace modgrok::harness
