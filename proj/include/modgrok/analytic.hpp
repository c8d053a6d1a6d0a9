#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "modgrok/network.hpp"
#include "modgrok/task.hpp"

namespace modgrok::analytic {

/// Per-neuron cosine phases, each in [0, 2pi). Constructors impose
/// phi3 = phi1 + phi2 reduced into [0, 2pi), so the constraint residual
/// (phi1 + phi2 - phi3) mod 2pi is exactly 0.
struct PhaseAssignment {
    Eigen::VectorXd phi1, phi2, phi3;
};

struct AnalyticSolution {
    net::NetworkParams params;
    PhaseAssignment phases;
};

/// Cosine weights that solve n + m mod p by interference. Neuron at row
/// index k-1 uses frequency 2*pi*k/p, k = 1..N; frequencies repeat with
/// period p and rows with k divisible by p become constants (retained).
/// Quadratic activation, MeanField scaling.
AnalyticSolution build_addition_weights(int p, int N, std::uint64_t seed);

/// Same construction for f1(n) + f2(m) mod p: the cosine arguments use
/// f1/f2 of the inputs; the readout layer is unchanged. Identity tables
/// reproduce build_addition_weights bit for bit.
AnalyticSolution build_general_weights(int p, int N, const tasks::Table& f1,
                                       const tasks::Table& f2, std::uint64_t seed);

/// Readout for F(f1(n)+f2(m)) mod p built from preimages of F: row q uses
/// the lowest residue in F^{-1}(q). Empty preimages fall back to residue 0
/// and are flagged unreachable.
struct ComposedReadout {
    Eigen::MatrixXd W2;             // p x N
    std::vector<int> branch;        // designated preimage residue per class
    std::vector<int> branch_count;  // |F^{-1}(q)|
    std::vector<bool> unreachable;  // branch_count == 0
};

std::vector<std::vector<int>> invert_table(const tasks::Table& F, int p);

ComposedReadout build_composed_readout(int p, int N,
                                       const std::vector<std::vector<int>>& F_inverse,
                                       const PhaseAssignment& phases);

/// General-sum first layer plus composed readout, drawn from one seed so the
/// phases match build_general_weights(p, N, f1, f2, seed).
struct ComposedSolution {
    net::NetworkParams params;
    PhaseAssignment phases;
    std::vector<int> branch;
    std::vector<int> branch_count;
    std::vector<bool> unreachable;
};

ComposedSolution build_composed_weights(int p, int N, const tasks::Table& F,
                                        const tasks::Table& f1, const tasks::Table& f2,
                                        std::uint64_t seed);

/// Complex-exponential variant: W1 rows e^{i(2pi k n/p + phi1)} (+)
/// e^{i(2pi k m/p + phi2)}, W2 entries e^{-i(2pi k q/p + phi3)}. The
/// evaluator squares the complex preactivations and contracts with W2;
/// the target component is real 2N, off-target components are O(sqrt(N))
/// random-phase sums. Phases match build_addition_weights for equal seeds.
struct ComplexSolution {
    int p = 0;
    int N = 0;
    PhaseAssignment phases;
    Eigen::MatrixXcd W1; // N x 2p
    Eigen::MatrixXcd W2; // p x N

    Eigen::VectorXcd output(int n, int m) const; // unnormalized, length p
    int predict(int n, int m) const;             // argmax of the real part
};

ComplexSolution build_complex_weights(int p, int N, std::uint64_t seed);

/// Idealized network output: 1/(2D) = 1/(4p) when n+m=q mod p, else 0.
double predict_delta(int p, int n, int m, int q);

} // namespace modgrok::analytic
