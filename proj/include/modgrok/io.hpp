#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "modgrok/analysis.hpp"
#include "modgrok/analytic.hpp"
#include "modgrok/network.hpp"
#include "modgrok/training.hpp"

namespace modgrok::io {

/// Checkpoint container: one line of JSON metadata, then W1 and W2 as
/// little-endian float64 in row-major order, then the three phase vectors
/// when present. Round-trips bit-exactly.
struct CheckpointMeta {
    int p = 0;
    int N = 0;
    net::Activation activation = net::Activation::Quadratic;
    net::Scaling scaling = net::Scaling::MeanField;
    std::uint64_t seed = 0;
    long epoch = 0;
    std::string origin = "trained"; // "trained" or "analytic"
};

void save_checkpoint(const std::filesystem::path& path, const net::NetworkParams& params,
                     const CheckpointMeta& meta,
                     const analytic::PhaseAssignment* phases = nullptr);

struct LoadedCheckpoint {
    net::NetworkParams params;
    CheckpointMeta meta;
    std::optional<analytic::PhaseAssignment> phases;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Optimizer state container, same layout idea: JSON line, then any
/// first-moment buffers (mW1, mW2), then any velocity/second-moment
/// buffers (vW1, vW2).
void save_optimizer_state(const std::filesystem::path& path, const train::OptimizerState& state);
train::OptimizerState load_optimizer_state(const std::filesystem::path& path);

/// Metrics CSV: a `# schema_version=1` comment, the fixed column header
/// epoch,train_loss,test_loss,train_acc,test_acc,w1_norm,w2_norm,g1_norm,g2_norm,avg_ipr2
/// and one row per logged epoch. Doubles at full precision; nan spelled out.
void write_record_csv(const std::filesystem::path& path, const train::TrainRecord& record);

/// Reads rows back; record flags (diverged etc.) are not stored in the CSV
/// and come back default.
train::TrainRecord read_record_csv(const std::filesystem::path& path);

void write_spectra_csv(const std::filesystem::path& path, const net::NetworkParams& params);
void write_phase_csv(const std::filesystem::path& path, const analysis::PhaseReport& report);
void write_phase_summary_json(const std::filesystem::path& path, const analysis::PhaseReport& report);

/// p x p matrix as CSV preceded by a one-line JSON header describing it.
void write_map_csv(const std::filesystem::path& path, const Eigen::MatrixXd& matrix,
                   int p, int layer, int index, const std::string& kind);

} // namespace modgrok::io
