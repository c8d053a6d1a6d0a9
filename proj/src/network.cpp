#include "modgrok/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "modgrok/errors.hpp"
#include "modgrok/rng.hpp"

namespace modgrok::net {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

void require_params(const NetworkParams& params) {
    if (params.p < 2) throw ConfigError("network: modulus p must be >= 2");
    if (params.N < 1) throw ConfigError("network: width N must be >= 1");
    if (params.W1.rows() != params.N || params.W1.cols() != 2 * params.p)
        throw ShapeError("network: W1 must be N x 2p");
    if (params.W2.rows() != params.p || params.W2.cols() != params.N)
        throw ShapeError("network: W2 must be p x N");
}

std::size_t eval_block_rows(int N, std::size_t batch) {
    // keep each N x block workspace around 8 MB
    std::size_t rows = (std::size_t{8} << 20) / (sizeof(double) * static_cast<std::size_t>(std::max(N, 1)));
    rows = std::max<std::size_t>(rows, 16);
    return std::min(rows, batch);
}

int argmax_lowest(const Eigen::Ref<const Eigen::VectorXd>& v) {
    int best = 0;
    for (int q = 1; q < v.size(); ++q)
        if (v[q] > v[best]) best = q;
    return best;
}

} // namespace

std::string to_string(Activation a) {
    switch (a) {
        case Activation::Quadratic: return "quadratic";
        case Activation::ReLU: return "relu";
        case Activation::GELU: return "gelu";
    }
    throw std::logic_error("unreachable");
}

std::string to_string(Scaling s) {
    switch (s) {
        case Scaling::MeanField: return "mean_field";
        case Scaling::SqrtWidth: return "sqrt_width";
    }
    throw std::logic_error("unreachable");
}

Activation activation_from_string(const std::string& s) {
    if (s == "quadratic") return Activation::Quadratic;
    if (s == "relu") return Activation::ReLU;
    if (s == "gelu") return Activation::GELU;
    throw ConfigError("unknown activation '" + s + "' (quadratic|relu|gelu)");
}

Scaling scaling_from_string(const std::string& s) {
    if (s == "mean_field") return Scaling::MeanField;
    if (s == "sqrt_width") return Scaling::SqrtWidth;
    throw ConfigError("unknown scaling '" + s + "' (mean_field|sqrt_width)");
}

double layer1_scale(const NetworkParams& params) {
    return params.scaling == Scaling::MeanField
               ? 1.0 / std::sqrt(static_cast<double>(params.input_dim()))
               : 1.0;
}

double layer2_scale(const NetworkParams& params) {
    return params.scaling == Scaling::MeanField
               ? 1.0 / static_cast<double>(params.N)
               : 1.0 / (static_cast<double>(params.input_dim()) * std::sqrt(static_cast<double>(params.N)));
}

double activate(Activation a, double h) {
    switch (a) {
        case Activation::Quadratic: return h * h;
        case Activation::ReLU: return h > 0.0 ? h : 0.0;
        case Activation::GELU: return 0.5 * h * (1.0 + std::erf(h * kInvSqrt2));
    }
    throw std::logic_error("unreachable");
}

double activate_grad(Activation a, double h) {
    switch (a) {
        case Activation::Quadratic: return 2.0 * h;
        case Activation::ReLU: return h > 0.0 ? 1.0 : 0.0;
        case Activation::GELU: {
            double cdf = 0.5 * (1.0 + std::erf(h * kInvSqrt2));
            return cdf + h * kInvSqrt2Pi * std::exp(-0.5 * h * h);
        }
    }
    throw std::logic_error("unreachable");
}

NetworkParams init_params(int p, int N, Activation activation, std::uint64_t seed, Scaling scaling) {
    if (p < 2) throw ConfigError("init_params: modulus p must be >= 2");
    if (N < 1) throw ConfigError("init_params: width N must be >= 1");
    NetworkParams params;
    params.p = p;
    params.N = N;
    params.activation = activation;
    params.scaling = scaling;
    params.W1.resize(N, 2 * p);
    params.W2.resize(p, N);
    Xoshiro256pp rng(seed);
    for (int k = 0; k < N; ++k)
        for (int j = 0; j < 2 * p; ++j) params.W1(k, j) = rng.normal();
    for (int q = 0; q < p; ++q)
        for (int k = 0; k < N; ++k) params.W2(q, k) = rng.normal();
    return params;
}

ForwardTrace forward(const NetworkParams& params, const Eigen::VectorXd& x) {
    require_params(params);
    if (x.size() != params.input_dim())
        throw ShapeError("forward: input must have length 2p");
    ForwardTrace t;
    t.h1 = layer1_scale(params) * (params.W1 * x);
    t.z1.resize(params.N);
    for (int k = 0; k < params.N; ++k) t.z1[k] = activate(params.activation, t.h1[k]);
    t.h2 = layer2_scale(params) * (params.W2 * t.z1);
    return t;
}

Batch make_batch(const tasks::Dataset& ds, const std::vector<int>& indices) {
    Batch b;
    b.n.reserve(indices.size());
    b.m.reserve(indices.size());
    b.target.reserve(indices.size());
    for (int idx : indices) {
        if (idx < 0 || static_cast<std::size_t>(idx) >= ds.examples.size())
            throw ShapeError("make_batch: example index out of range");
        const auto& ex = ds.examples[static_cast<std::size_t>(idx)];
        b.n.push_back(ex.n);
        b.m.push_back(ex.m);
        b.target.push_back(ex.q);
    }
    return b;
}

Batch full_batch(const tasks::Dataset& ds) {
    Batch b;
    b.n.reserve(ds.examples.size());
    b.m.reserve(ds.examples.size());
    b.target.reserve(ds.examples.size());
    for (const auto& ex : ds.examples) {
        b.n.push_back(ex.n);
        b.m.push_back(ex.m);
        b.target.push_back(ex.q);
    }
    return b;
}

void onehot_forward(const NetworkParams& params, const Batch& batch,
                    std::size_t lo, std::size_t hi,
                    Eigen::MatrixXd& H1T, Eigen::MatrixXd& Z1T, Eigen::MatrixXd& H2T) {
    require_params(params);
    if (lo > hi || hi > batch.size())
        throw ShapeError("onehot_forward: block range out of bounds");
    const int p = params.p;
    const int N = params.N;
    const auto cols = static_cast<Eigen::Index>(hi - lo);
    const double s1 = layer1_scale(params);
    const double s2 = layer2_scale(params);

    H1T.resize(N, cols);
    for (std::size_t b = lo; b < hi; ++b) {
        int n = batch.n[b];
        int m = batch.m[b];
        if (n < 0 || n >= p || m < 0 || m >= p)
            throw ShapeError("onehot_forward: input index out of range for modulus");
        H1T.col(static_cast<Eigen::Index>(b - lo)) =
            s1 * (params.W1.col(n) + params.W1.col(p + m));
    }

    Z1T.resize(N, cols);
    switch (params.activation) {
        case Activation::Quadratic:
            Z1T.array() = H1T.array().square();
            break;
        case Activation::ReLU:
            Z1T.array() = H1T.array().max(0.0);
            break;
        case Activation::GELU:
            Z1T.array() =
                0.5 * H1T.array() *
                (1.0 + H1T.array().unaryExpr([](double h) { return std::erf(h * kInvSqrt2); }));
            break;
    }

    H2T.noalias() = params.W2 * Z1T;
    H2T *= s2;
}

Metrics evaluate(const NetworkParams& params, const Batch& batch) {
    require_params(params);
    const std::size_t B = batch.size();
    if (B == 0) throw ConfigError("evaluate: empty batch");
    const int p = params.p;
    const std::size_t block = eval_block_rows(params.N, B);

    Eigen::MatrixXd H1T, Z1T, H2T;
    double sq_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t lo = 0; lo < B; lo += block) {
        std::size_t hi = std::min(lo + block, B);
        onehot_forward(params, batch, lo, hi, H1T, Z1T, H2T);
        for (std::size_t b = lo; b < hi; ++b) {
            const auto c = static_cast<Eigen::Index>(b - lo);
            int t = batch.target[b];
            if (t < 0 || t >= p) throw ShapeError("evaluate: target out of range");
            double ht = H2T(t, c);
            sq_sum += H2T.col(c).squaredNorm() - ht * ht + (ht - 1.0) * (ht - 1.0);
            if (argmax_lowest(H2T.col(c)) == t) ++correct;
        }
    }
    Metrics out;
    out.loss = sq_sum / (static_cast<double>(B) * static_cast<double>(p));
    out.acc = static_cast<double>(correct) / static_cast<double>(B);
    return out;
}

double mse_loss(const NetworkParams& params, const Batch& batch) {
    return evaluate(params, batch).loss;
}

double accuracy(const NetworkParams& params, const Batch& batch) {
    return evaluate(params, batch).acc;
}

double mse_loss(const NetworkParams& params, const Eigen::MatrixXd& X,
                const std::vector<int>& targets) {
    require_params(params);
    if (static_cast<std::size_t>(X.rows()) != targets.size())
        throw ShapeError("mse_loss: one target per input row required");
    if (X.cols() != params.input_dim())
        throw ShapeError("mse_loss: inputs must have 2p columns");
    if (targets.empty()) throw ConfigError("mse_loss: empty batch");
    double sq_sum = 0.0;
    for (Eigen::Index b = 0; b < X.rows(); ++b) {
        ForwardTrace t = forward(params, X.row(b).transpose());
        int tgt = targets[static_cast<std::size_t>(b)];
        if (tgt < 0 || tgt >= params.p) throw ShapeError("mse_loss: target out of range");
        for (int q = 0; q < params.p; ++q) {
            double r = t.h2[q] - (q == tgt ? 1.0 : 0.0);
            sq_sum += r * r;
        }
    }
    return sq_sum / (static_cast<double>(X.rows()) * static_cast<double>(params.p));
}

double accuracy(const NetworkParams& params, const Eigen::MatrixXd& X,
                const std::vector<int>& targets) {
    require_params(params);
    if (static_cast<std::size_t>(X.rows()) != targets.size())
        throw ShapeError("accuracy: one target per input row required");
    if (X.cols() != params.input_dim())
        throw ShapeError("accuracy: inputs must have 2p columns");
    if (targets.empty()) throw ConfigError("accuracy: empty batch");
    std::size_t correct = 0;
    for (Eigen::Index b = 0; b < X.rows(); ++b) {
        ForwardTrace t = forward(params, X.row(b).transpose());
        if (argmax_lowest(t.h2) == targets[static_cast<std::size_t>(b)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(X.rows());
}

} // namespace modgrok::net
