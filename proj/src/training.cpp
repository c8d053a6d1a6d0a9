#include "modgrok/training.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "modgrok/analysis.hpp"
#include "modgrok/errors.hpp"

namespace modgrok::train {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

void activation_grad_inplace(net::Activation a, const Eigen::MatrixXd& H, Eigen::MatrixXd& out) {
    switch (a) {
        case net::Activation::Quadratic:
            out.array() *= 2.0 * H.array();
            return;
        case net::Activation::ReLU:
            out.array() *= (H.array() > 0.0).cast<double>();
            return;
        case net::Activation::GELU: {
            constexpr double inv_sqrt2 = 0.7071067811865475244;
            constexpr double inv_sqrt2pi = 0.3989422804014326779;
            out.array() *= H.array().unaryExpr([](double h) {
                return 0.5 * (1.0 + std::erf(h * inv_sqrt2)) +
                       h * inv_sqrt2pi * std::exp(-0.5 * h * h);
            });
            return;
        }
    }
    throw std::logic_error("unreachable");
}

// gradients from an already-computed forward pass; H2T is consumed as the
// residual workspace
void backward_from_forward(const net::NetworkParams& params, const net::Batch& batch,
                           const Eigen::MatrixXd& H1T, const Eigen::MatrixXd& Z1T,
                           Eigen::MatrixXd& H2T, Gradients& g) {
    const int p = params.p;
    const auto B = static_cast<Eigen::Index>(batch.size());
    const double s1 = net::layer1_scale(params);
    const double s2 = net::layer2_scale(params);

    const double coeff = 2.0 / (static_cast<double>(B) * static_cast<double>(p));
    for (Eigen::Index b = 0; b < B; ++b) H2T(batch.target[static_cast<std::size_t>(b)], b) -= 1.0;
    H2T *= coeff; // now dL/dh2, p x B

    g.gW2.noalias() = s2 * (H2T * Z1T.transpose());

    Eigen::MatrixXd dH1T;
    dH1T.noalias() = params.W2.transpose() * H2T;
    dH1T *= s2;
    activation_grad_inplace(params.activation, H1T, dH1T);

    g.gW1.setZero(params.N, 2 * p);
    for (Eigen::Index b = 0; b < B; ++b) {
        const auto bb = static_cast<std::size_t>(b);
        g.gW1.col(batch.n[bb]) += s1 * dH1T.col(b);
        g.gW1.col(p + batch.m[bb]) += s1 * dH1T.col(b);
    }

    if (!g.gW1.allFinite() || !g.gW2.allFinite())
        throw NumericError("backward: non-finite gradient");
}

double batch_loss_from_outputs(const Eigen::MatrixXd& H2T, const net::Batch& batch) {
    double sq = 0.0;
    for (Eigen::Index b = 0; b < H2T.cols(); ++b) {
        int t = batch.target[static_cast<std::size_t>(b)];
        double ht = H2T(t, b);
        sq += H2T.col(b).squaredNorm() - ht * ht + (ht - 1.0) * (ht - 1.0);
    }
    return sq / (static_cast<double>(H2T.cols()) * static_cast<double>(H2T.rows()));
}

double batch_acc_from_outputs(const Eigen::MatrixXd& H2T, const net::Batch& batch) {
    std::size_t correct = 0;
    for (Eigen::Index b = 0; b < H2T.cols(); ++b) {
        int best = 0;
        for (Eigen::Index q = 1; q < H2T.rows(); ++q)
            if (H2T(q, b) > H2T(best, b)) best = static_cast<int>(q);
        if (best == batch.target[static_cast<std::size_t>(b)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(H2T.cols());
}

} // namespace

std::string to_string(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::GD: return "gd";
        case OptimizerKind::GDMomentumWD: return "gd_momentum_wd";
        case OptimizerKind::AdamW: return "adamw";
    }
    throw std::logic_error("unreachable");
}

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "gd") return OptimizerKind::GD;
    if (s == "gd_momentum_wd") return OptimizerKind::GDMomentumWD;
    if (s == "adamw") return OptimizerKind::AdamW;
    throw ConfigError("unknown optimizer '" + s + "' (gd|gd_momentum_wd|adamw)");
}

OptimizerConfig default_optimizer(OptimizerKind kind) {
    OptimizerConfig cfg;
    cfg.kind = kind;
    switch (kind) {
        case OptimizerKind::GD:
            break;
        case OptimizerKind::GDMomentumWD:
            // With momentum 0.9 the effective step is ~10x the raw rate, so the
            // plain-GD default is too hot; 3e4 stays stable on the reference task.
            cfg.learning_rate = 3e4;
            cfg.momentum = 0.9;
            break;
        case OptimizerKind::AdamW:
            cfg.learning_rate = 1e-3;
            cfg.weight_decay = 1.0;
            break;
    }
    return cfg;
}

void OptimizerConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("optimizer: learning_rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optimizer: momentum must be in [0,1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("optimizer: weight_decay must be >= 0");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("optimizer: beta1 must be in (0,1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("optimizer: beta2 must be in (0,1)");
    if (!(epsilon > 0.0)) throw ConfigError("optimizer: epsilon must be > 0");
}

Gradients backward(const net::NetworkParams& params, const net::Batch& batch) {
    if (batch.size() == 0) throw ConfigError("backward: empty batch");
    Eigen::MatrixXd H1T, Z1T, H2T;
    net::onehot_forward(params, batch, 0, batch.size(), H1T, Z1T, H2T);
    Gradients g;
    backward_from_forward(params, batch, H1T, Z1T, H2T, g);
    return g;
}

void optimizer_step(net::NetworkParams& params, const Gradients& grads,
                    OptimizerState& state, const OptimizerConfig& config) {
    config.validate();
    if (grads.gW1.rows() != params.W1.rows() || grads.gW1.cols() != params.W1.cols() ||
        grads.gW2.rows() != params.W2.rows() || grads.gW2.cols() != params.W2.cols())
        throw ShapeError("optimizer_step: gradient shapes do not match parameters");

    const double eta = config.learning_rate;
    switch (config.kind) {
        case OptimizerKind::GD:
            params.W1 -= eta * grads.gW1;
            params.W2 -= eta * grads.gW2;
            break;
        case OptimizerKind::GDMomentumWD: {
            if (state.vW1.size() == 0) {
                state.vW1.setZero(params.W1.rows(), params.W1.cols());
                state.vW2.setZero(params.W2.rows(), params.W2.cols());
            }
            state.vW1 = config.momentum * state.vW1 + grads.gW1 + config.weight_decay * params.W1;
            state.vW2 = config.momentum * state.vW2 + grads.gW2 + config.weight_decay * params.W2;
            params.W1 -= eta * state.vW1;
            params.W2 -= eta * state.vW2;
            break;
        }
        case OptimizerKind::AdamW: {
            if (state.mW1.size() == 0) {
                state.mW1.setZero(params.W1.rows(), params.W1.cols());
                state.mW2.setZero(params.W2.rows(), params.W2.cols());
                state.vW1.setZero(params.W1.rows(), params.W1.cols());
                state.vW2.setZero(params.W2.rows(), params.W2.cols());
            }
            state.step += 1;
            const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
            const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
            auto adam_update = [&](Eigen::MatrixXd& W, const Eigen::MatrixXd& g,
                                   Eigen::MatrixXd& m, Eigen::MatrixXd& v) {
                m = config.beta1 * m + (1.0 - config.beta1) * g;
                v = config.beta2 * v + (1.0 - config.beta2) * g.array().square().matrix();
                W.array() -= eta * ((m.array() / bc1) / ((v.array() / bc2).sqrt() + config.epsilon) +
                                    config.weight_decay * W.array());
            };
            adam_update(params.W1, grads.gW1, state.mW1, state.vW1);
            adam_update(params.W2, grads.gW2, state.mW2, state.vW2);
            break;
        }
    }
    if (!params.W1.allFinite() || !params.W2.allFinite())
        throw NumericError("optimizer_step: non-finite parameter update");
}

TrainResult train(const tasks::ModularTask& task, const tasks::Split& split,
                  const NetConfig& net_cfg, const OptimizerConfig& opt_cfg,
                  const Schedule& sched, const TrainHooks* hooks,
                  const ResumePoint* resume) {
    if (sched.epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (sched.log_every < 1) throw ConfigError("train: log_every must be >= 1");
    opt_cfg.validate();

    const tasks::Dataset ds = tasks::build_dataset(task);
    const net::Batch train_batch = net::make_batch(ds, split.train);
    const net::Batch test_batch = net::make_batch(ds, split.test);
    if (train_batch.size() == 0 || test_batch.size() == 0)
        throw ConfigError("train: split leaves an empty train or test set");

    TrainResult out;
    net::NetworkParams& params = out.params;
    OptimizerState state;
    long start = 0;
    long sustained_since = -1;
    if (resume) {
        params = resume->params;
        state = resume->state;
        start = resume->next_epoch;
        sustained_since = resume->sustained_since;
        if (start < 0 || start >= sched.epochs)
            throw ConfigError("train: resume epoch outside schedule");
    } else {
        params = net::init_params(task.p, net_cfg.N, net_cfg.activation, net_cfg.init_seed);
    }
    if (params.p != task.p) throw ShapeError("train: params modulus does not match task");

    TrainRecord& rec = out.record;
    Eigen::MatrixXd H1T, Z1T, H2T;
    Gradients grads;
    double prev_logged_loss = kNan;
    long epoch = start;

    auto push_terminal_row = [&](long at_epoch) {
        RecordRow row;
        row.epoch = at_epoch;
        net::Metrics tr = net::evaluate(params, train_batch);
        net::Metrics te = net::evaluate(params, test_batch);
        row.train_loss = tr.loss;
        row.test_loss = te.loss;
        row.train_acc = tr.acc;
        row.test_acc = te.acc;
        row.w1_norm = params.W1.norm();
        row.w2_norm = params.W2.norm();
        row.g1_norm = kNan;
        row.g2_norm = kNan;
        row.avg_ipr2 = sched.ipr_every > 0 ? analysis::avg_ipr(params, 2.0) : kNan;
        rec.rows.push_back(row);
    };

    for (; epoch < sched.epochs; ++epoch) {
        if (hooks && hooks->on_checkpoint && sched.checkpoint_every > 0 && epoch > 0 &&
            epoch % sched.checkpoint_every == 0)
            hooks->on_checkpoint(epoch, params, state);

        net::onehot_forward(params, train_batch, 0, train_batch.size(), H1T, Z1T, H2T);
        const double train_loss = batch_loss_from_outputs(H2T, train_batch);
        if (!std::isfinite(train_loss)) {
            rec.diverged = true;
            rec.abort_reason = "train loss non-finite at epoch " + std::to_string(epoch);
            break;
        }

        const bool is_log = (epoch % sched.log_every == 0);
        bool stop_now = false;
        if (is_log) {
            RecordRow row;
            row.epoch = epoch;
            row.train_loss = train_loss;
            row.train_acc = batch_acc_from_outputs(H2T, train_batch);
            net::Metrics te = net::evaluate(params, test_batch);
            row.test_loss = te.loss;
            row.test_acc = te.acc;
            row.w1_norm = params.W1.norm();
            row.w2_norm = params.W2.norm();
            row.avg_ipr2 = (sched.ipr_every > 0 && epoch % sched.ipr_every == 0)
                               ? analysis::avg_ipr(params, 2.0)
                               : kNan;

            if (std::isfinite(prev_logged_loss) && train_loss > prev_logged_loss * (1.0 + 1e-12))
                rec.train_loss_increase_rows += 1;
            prev_logged_loss = train_loss;

            if (te.acc >= sched.stop_at_test_acc) {
                if (sustained_since < 0) sustained_since = epoch;
                if (sched.patience > 0 && epoch - sustained_since >= sched.patience) stop_now = true;
            } else {
                sustained_since = -1;
            }

            try {
                backward_from_forward(params, train_batch, H1T, Z1T, H2T, grads);
            } catch (const NumericError& e) {
                row.g1_norm = kNan;
                row.g2_norm = kNan;
                rec.rows.push_back(row);
                rec.diverged = true;
                rec.abort_reason = std::string(e.what()) + " at epoch " + std::to_string(epoch);
                break;
            }
            row.g1_norm = grads.gW1.norm();
            row.g2_norm = grads.gW2.norm();
            rec.rows.push_back(row);
            if (stop_now) {
                rec.early_stopped = true;
                break;
            }
        } else {
            try {
                backward_from_forward(params, train_batch, H1T, Z1T, H2T, grads);
            } catch (const NumericError& e) {
                rec.diverged = true;
                rec.abort_reason = std::string(e.what()) + " at epoch " + std::to_string(epoch);
                break;
            }
        }

        try {
            optimizer_step(params, grads, state, opt_cfg);
        } catch (const NumericError& e) {
            rec.diverged = true;
            rec.abort_reason = std::string(e.what()) + " at epoch " + std::to_string(epoch);
            break;
        }
    }

    rec.epochs_run = epoch;
    if (!rec.diverged && !rec.early_stopped && epoch == sched.epochs)
        push_terminal_row(sched.epochs);
    out.final_state = std::move(state);
    return out;
}

std::optional<long> detect_grokking_time(const TrainRecord& record, double threshold) {
    if (record.rows.empty()) throw ConfigError("detect_grokking_time: empty record");
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw ConfigError("detect_grokking_time: threshold must be in (0,1]");
    std::size_t i = record.rows.size();
    while (i > 0 && record.rows[i - 1].test_acc >= threshold) --i;
    if (i == record.rows.size()) return std::nullopt;
    return record.rows[i].epoch;
}

} // namespace modgrok::train
