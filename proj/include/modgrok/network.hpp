#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "modgrok/task.hpp"

namespace modgrok::net {

enum class Activation { Quadratic, ReLU, GELU };
enum class Scaling { MeanField, SqrtWidth };

std::string to_string(Activation a);
std::string to_string(Scaling s);
Activation activation_from_string(const std::string& s);
Scaling scaling_from_string(const std::string& s);

/// Two-layer bias-free MLP. W1 is N x 2p, W2 is p x N.
///
/// MeanField:  h1 = (1/sqrt(D)) W1 x,  h2 = (1/N) W2 phi(h1),  D = 2p
/// SqrtWidth:  h1 = W1 x,              h2 = (1/(D sqrt(N))) W2 phi(h1)
///
/// Training always uses MeanField. SqrtWidth exists for evaluating
/// constructed cosine weights under ReLU/GELU, where the 1/N readout
/// would crush the signal.
struct NetworkParams {
    int p = 0;
    int N = 0;
    Activation activation = Activation::Quadratic;
    Scaling scaling = Scaling::MeanField;
    Eigen::MatrixXd W1;
    Eigen::MatrixXd W2;

    int input_dim() const { return 2 * p; }
};

double layer1_scale(const NetworkParams& params);
double layer2_scale(const NetworkParams& params);

double activate(Activation a, double h);
double activate_grad(Activation a, double h);

/// i.i.d. standard-normal weights, drawn row-major W1 first then W2.
NetworkParams init_params(int p, int N, Activation activation, std::uint64_t seed,
                          Scaling scaling = Scaling::MeanField);

struct ForwardTrace {
    Eigen::VectorXd h1; // N
    Eigen::VectorXd z1; // N
    Eigen::VectorXd h2; // p
};

ForwardTrace forward(const NetworkParams& params, const Eigen::VectorXd& x);

/// One-hot example batch held as index triples.
struct Batch {
    std::vector<int> n, m, target;

    std::size_t size() const { return n.size(); }
};

Batch make_batch(const tasks::Dataset& ds, const std::vector<int>& indices);
Batch full_batch(const tasks::Dataset& ds);

/// Batched forward over batch rows [lo, hi), stored transposed: columns are
/// examples, so H1T/Z1T are N x (hi-lo) and H2T is p x (hi-lo).
void onehot_forward(const NetworkParams& params, const Batch& batch,
                    std::size_t lo, std::size_t hi,
                    Eigen::MatrixXd& H1T, Eigen::MatrixXd& Z1T, Eigen::MatrixXd& H2T);

/// Mean over batch and over the p output coordinates of the squared
/// difference from the one-hot target.
double mse_loss(const NetworkParams& params, const Batch& batch);
double mse_loss(const NetworkParams& params, const Eigen::MatrixXd& X,
                const std::vector<int>& targets);

/// Fraction of examples whose argmax output equals the target; ties go to the
/// lowest class index.
double accuracy(const NetworkParams& params, const Batch& batch);
double accuracy(const NetworkParams& params, const Eigen::MatrixXd& X,
                const std::vector<int>& targets);

struct Metrics {
    double loss = 0.0;
    double acc = 0.0;
};

/// Fused loss + accuracy; evaluates block-wise so memory stays bounded at
/// large width.
Metrics evaluate(const NetworkParams& params, const Batch& batch);

} // namespace modgrok::net
