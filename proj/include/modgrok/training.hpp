#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "modgrok/network.hpp"
#include "modgrok/task.hpp"

namespace modgrok::train {

struct Gradients {
    Eigen::MatrixXd gW1; // N x 2p
    Eigen::MatrixXd gW2; // p x N
};

enum class OptimizerKind { GD, GDMomentumWD, AdamW };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct OptimizerConfig;

/// Per-kind starting hyperparameters, shared by the config layer and sweeps.
OptimizerConfig default_optimizer(OptimizerKind kind);

// Plain GD needs a large step size here: the loss averages over both the batch
// and the p output slots, and mean-field layer scales shrink per-entry
// gradients further with D and N. Calibrated on the p=97 half-split reference
// task by a learning-rate sweep: 1e5 keeps the train loss monotone through
// grokking (~12k epochs) and smaller rates just grok proportionally later.
struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::GD;
    double learning_rate = 1e5;
    double momentum = 0.0;     // GDMomentumWD
    double weight_decay = 0.0; // GDMomentumWD, AdamW
    double beta1 = 0.9;        // AdamW
    double beta2 = 0.999;      // AdamW
    double epsilon = 1e-8;     // AdamW

    void validate() const;
};

/// Buffers are sized lazily on first step; step counts AdamW updates.
struct OptimizerState {
    long step = 0;
    Eigen::MatrixXd vW1, vW2; // momentum / second moment (AdamW)
    Eigen::MatrixXd mW1, mW2; // first moment (AdamW)
};

struct Schedule {
    long epochs = 1;
    long log_every = 10;
    long ipr_every = 100;       // 0 disables; logged rows only
    long checkpoint_every = 0;  // 0 = final only
    double stop_at_test_acc = 0.99;
    long patience = 1000;       // sustained epochs before early stop; 0 disables
};

struct RecordRow {
    long epoch = 0;
    double train_loss = 0, test_loss = 0;
    double train_acc = 0, test_acc = 0;
    double w1_norm = 0, w2_norm = 0;
    double g1_norm = 0, g2_norm = 0; // nan on the terminal row (no step taken from it)
    double avg_ipr2 = 0;             // nan when not computed at this row
};

struct TrainRecord {
    std::vector<RecordRow> rows;
    long epochs_run = 0;
    bool early_stopped = false;
    bool diverged = false;
    std::string abort_reason;
    long train_loss_increase_rows = 0; // logged rows whose train loss exceeds the previous row's
};

struct NetConfig {
    int N = 0;
    net::Activation activation = net::Activation::Quadratic;
    std::uint64_t init_seed = 0;
};

struct TrainResult {
    TrainRecord record;
    net::NetworkParams params;
    OptimizerState final_state;
};

struct TrainHooks {
    // called with the state at the *start* of `epoch` (before that epoch's step)
    std::function<void(long epoch, const net::NetworkParams&, const OptimizerState&)> on_checkpoint;
};

struct ResumePoint {
    net::NetworkParams params;
    OptimizerState state;
    long next_epoch = 0;
    long sustained_since = -1; // earliest epoch of the current >=threshold streak, -1 if none
};

/// Exact MSE gradients for the one-hot batch, including the parametrization
/// scales. Throws NumericError on non-finite intermediates.
Gradients backward(const net::NetworkParams& params, const net::Batch& batch);

void optimizer_step(net::NetworkParams& params, const Gradients& grads,
                    OptimizerState& state, const OptimizerConfig& config);

/// Full-batch loop. Metrics rows are measured on the weights at the start of
/// each logged epoch; after the last step a terminal row at epoch==epochs is
/// appended (gradient norms nan) so the final row always describes the
/// returned params. Early stop returns the params the triggering row measured.
TrainResult train(const tasks::ModularTask& task, const tasks::Split& split,
                  const NetConfig& net_cfg, const OptimizerConfig& opt_cfg,
                  const Schedule& sched, const TrainHooks* hooks = nullptr,
                  const ResumePoint* resume = nullptr);

/// First logged epoch with test accuracy >= threshold in this and all later
/// logged rows.
std::optional<long> detect_grokking_time(const TrainRecord& record, double threshold);

} // namespace modgrok::train
