#include "modgrok/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

#include "modgrok/errors.hpp"
#include "modgrok/rng.hpp"

namespace modgrok::analytic {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require_dims(int p, int N) {
    if (p < 2) throw ConfigError("analytic: modulus p must be >= 2");
    if (N < 1) throw ConfigError("analytic: width N must be >= 1");
}

void require_table(const tasks::Table& t, int p, const char* name) {
    if (static_cast<int>(t.size()) != p)
        throw ConfigError(std::string("analytic: table ") + name + " must have length p");
    for (int v : t)
        if (v < 0 || v >= p)
            throw ConfigError(std::string("analytic: table ") + name + " has entries outside [0,p)");
}

PhaseAssignment draw_phases(int N, std::uint64_t seed) {
    PhaseAssignment ph;
    ph.phi1.resize(N);
    ph.phi2.resize(N);
    ph.phi3.resize(N);
    Xoshiro256pp rng(seed);
    for (int k = 0; k < N; ++k) ph.phi1[k] = kTwoPi * rng.uniform();
    for (int k = 0; k < N; ++k) ph.phi2[k] = kTwoPi * rng.uniform();
    for (int k = 0; k < N; ++k) {
        double s = ph.phi1[k] + ph.phi2[k];
        // the subtraction is exact here (s in [2pi, 4pi)), so the constraint
        // residual recomputed the same way is exactly 0 mod 2pi
        ph.phi3[k] = s >= kTwoPi ? s - kTwoPi : s;
    }
    return ph;
}

// cos(2 pi (k*v mod p)/p + phi); the reduction keeps arguments small so
// repeated frequencies k >= p evaluate identically to k mod p
double cos_freq(int k, int v, int p, double phi) {
    auto r = static_cast<double>((static_cast<long long>(k) * v) % p);
    return std::cos(kTwoPi * (r / p) + phi);
}

double readout_entry(int k, int q, int p, double phi3) {
    auto r = static_cast<double>((static_cast<long long>(k) * q) % p);
    return std::cos(-kTwoPi * (r / p) - phi3);
}

} // namespace

AnalyticSolution build_general_weights(int p, int N, const tasks::Table& f1,
                                       const tasks::Table& f2, std::uint64_t seed) {
    require_dims(p, N);
    require_table(f1, p, "f1");
    require_table(f2, p, "f2");

    AnalyticSolution sol;
    sol.phases = draw_phases(N, seed);
    net::NetworkParams& params = sol.params;
    params.p = p;
    params.N = N;
    params.activation = net::Activation::Quadratic;
    params.scaling = net::Scaling::MeanField;
    params.W1.resize(N, 2 * p);
    params.W2.resize(p, N);
    for (int row = 0; row < N; ++row) {
        const int k = row + 1;
        for (int n = 0; n < p; ++n) params.W1(row, n) = cos_freq(k, f1[n], p, sol.phases.phi1[row]);
        for (int m = 0; m < p; ++m) params.W1(row, p + m) = cos_freq(k, f2[m], p, sol.phases.phi2[row]);
    }
    for (int q = 0; q < p; ++q)
        for (int row = 0; row < N; ++row)
            params.W2(q, row) = readout_entry(row + 1, q, p, sol.phases.phi3[row]);
    return sol;
}

AnalyticSolution build_addition_weights(int p, int N, std::uint64_t seed) {
    require_dims(p, N);
    return build_general_weights(p, N, tasks::identity_table(p), tasks::identity_table(p), seed);
}

std::vector<std::vector<int>> invert_table(const tasks::Table& F, int p) {
    if (p < 2) throw ConfigError("invert_table: modulus p must be >= 2");
    require_table(F, p, "F");
    std::vector<std::vector<int>> inv(static_cast<std::size_t>(p));
    for (int x = 0; x < p; ++x) inv[static_cast<std::size_t>(F[x])].push_back(x);
    return inv;
}

ComposedReadout build_composed_readout(int p, int N,
                                       const std::vector<std::vector<int>>& F_inverse,
                                       const PhaseAssignment& phases) {
    require_dims(p, N);
    if (static_cast<int>(F_inverse.size()) != p)
        throw ConfigError("build_composed_readout: F_inverse must have one entry per class");
    if (phases.phi3.size() != N)
        throw ConfigError("build_composed_readout: phase vectors must have length N");

    ComposedReadout out;
    out.W2.resize(p, N);
    out.branch.resize(static_cast<std::size_t>(p));
    out.branch_count.resize(static_cast<std::size_t>(p));
    out.unreachable.resize(static_cast<std::size_t>(p));
    for (int q = 0; q < p; ++q) {
        const auto& pre = F_inverse[static_cast<std::size_t>(q)];
        for (int v : pre)
            if (v < 0 || v >= p)
                throw ConfigError("build_composed_readout: preimage residue outside [0,p)");
        const bool empty = pre.empty();
        const int branch = empty ? 0 : *std::min_element(pre.begin(), pre.end());
        out.branch[static_cast<std::size_t>(q)] = branch;
        out.branch_count[static_cast<std::size_t>(q)] = static_cast<int>(pre.size());
        out.unreachable[static_cast<std::size_t>(q)] = empty;
        for (int row = 0; row < N; ++row)
            out.W2(q, row) = readout_entry(row + 1, branch, p, phases.phi3[row]);
    }
    return out;
}

ComposedSolution build_composed_weights(int p, int N, const tasks::Table& F,
                                        const tasks::Table& f1, const tasks::Table& f2,
                                        std::uint64_t seed) {
    AnalyticSolution base = build_general_weights(p, N, f1, f2, seed);
    ComposedReadout readout = build_composed_readout(p, N, invert_table(F, p), base.phases);
    ComposedSolution sol;
    sol.params = std::move(base.params);
    sol.params.W2 = std::move(readout.W2);
    sol.phases = std::move(base.phases);
    sol.branch = std::move(readout.branch);
    sol.branch_count = std::move(readout.branch_count);
    sol.unreachable = std::move(readout.unreachable);
    return sol;
}

ComplexSolution build_complex_weights(int p, int N, std::uint64_t seed) {
    require_dims(p, N);
    ComplexSolution sol;
    sol.p = p;
    sol.N = N;
    sol.phases = draw_phases(N, seed);
    sol.W1.resize(N, 2 * p);
    sol.W2.resize(p, N);
    for (int row = 0; row < N; ++row) {
        const int k = row + 1;
        for (int n = 0; n < p; ++n) {
            auto r = static_cast<double>((static_cast<long long>(k) * n) % p);
            sol.W1(row, n) = std::polar(1.0, kTwoPi * (r / p) + sol.phases.phi1[row]);
            sol.W1(row, p + n) = std::polar(1.0, kTwoPi * (r / p) + sol.phases.phi2[row]);
        }
    }
    for (int q = 0; q < p; ++q)
        for (int row = 0; row < N; ++row) {
            auto r = static_cast<double>((static_cast<long long>(row + 1) * q) % p);
            sol.W2(q, row) = std::polar(1.0, -(kTwoPi * (r / p) + sol.phases.phi3[row]));
        }
    return sol;
}

Eigen::VectorXcd ComplexSolution::output(int n, int m) const {
    if (n < 0 || n >= p || m < 0 || m >= p)
        throw std::invalid_argument("ComplexSolution::output: residue out of range");
    Eigen::VectorXcd z(N);
    for (int row = 0; row < N; ++row) {
        std::complex<double> t = W1(row, n) + W1(row, p + m);
        z[row] = t * t;
    }
    return W2 * z;
}

int ComplexSolution::predict(int n, int m) const {
    Eigen::VectorXcd out = output(n, m);
    int best = 0;
    for (int q = 1; q < p; ++q)
        if (out[q].real() > out[best].real()) best = q;
    return best;
}

double predict_delta(int p, int n, int m, int q) {
    if (p < 2) throw ConfigError("predict_delta: modulus p must be >= 2");
    if (n < 0 || n >= p || m < 0 || m >= p || q < 0 || q >= p)
        throw std::invalid_argument("predict_delta: residue out of range");
    return (n + m - q) % p == 0 ? 1.0 / (4.0 * p) : 0.0;
}

} // namespace modgrok::analytic
