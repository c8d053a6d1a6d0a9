#pragma once

#include <array>
#include <vector>

#include <Eigen/Core>

#include "modgrok/network.hpp"
#include "modgrok/task.hpp"

namespace modgrok::analysis {

/// Dense DFT with kernel K(nu, x) = e^{-2 pi i nu x / p}. Under this kernel
/// the coefficient of cos(2 pi k0 x / p + phi) at bin k0 is (p/2) e^{i phi},
/// so the phase is the argument of the coefficient at the dominant bin.
class DftPlan {
  public:
    explicit DftPlan(int p);

    int p() const { return static_cast<int>(kernel_.rows()); }
    const Eigen::MatrixXcd& kernel() const { return kernel_; }

    Eigen::VectorXcd forward(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  private:
    Eigen::MatrixXcd kernel_;
};

/// Per-neuron spectrum of row k of W1: a length-p DFT per input slot,
/// magnitudes concatenated (length 2p) and jointly normalized to unit
/// sum of squares. The dominant frequency per slot is the positive bin
/// whose conjugate-pair energy is largest; a slot is degenerate when the
/// runner-up pair is within the relative margin or the slot carries no
/// positive-frequency energy. Identically-zero rows are reported as fully
/// localized (ipr = 1) by convention.
struct SpectralProfile {
    int neuron = 0;
    Eigen::VectorXd magnitudes; // 2p, sum of squares = 1
    double raw_power = 0.0;     // sum of squared coefficient magnitudes before normalization
    std::array<int, 2> dominant_freq{-1, -1};
    std::array<double, 2> extracted_phase{0.0, 0.0};
    std::array<bool, 2> degenerate{false, false};
    double fit_residual = 1.0; // 1 - dominant-pair energy share (both slots)

    double ipr(double r) const;
};

SpectralProfile weight_spectrum(const net::NetworkParams& params, int k);
SpectralProfile weight_spectrum(const net::NetworkParams& params, int k, const DftPlan& plan);

/// Mean over neurons of IPR_r = sum over the 2p bins of (energy share)^r.
double avg_ipr(const net::NetworkParams& params, double r);

struct PhaseTriple {
    int neuron = 0;
    int freq = 0; // shared dominant bin
    double phi1 = 0, phi2 = 0, phi3 = 0;
    double residual = 0; // phi1 + phi2 - phi3 wrapped to (-pi, pi]
};

struct PhaseReport {
    std::vector<PhaseTriple> neurons;
    int excluded = 0; // degenerate or slot/readout frequency mismatch
    std::vector<long> histogram;
    int bins = 64;
    double margin = 0.1;
};

/// Phases from the dominant DFT bins of the two W1 slots and the W2 column;
/// neurons whose three spectra disagree on the bin or fail the dominance
/// margin are excluded and counted.
PhaseReport extract_phases(const net::NetworkParams& params, int bins = 64, double margin = 0.1);

/// Fraction of included residuals with |residual| < radius.
double residual_mass_within(const PhaseReport& report, double radius);

struct PreactMap {
    Eigen::MatrixXd values;  // p x p, entry (n, m)
    Eigen::MatrixXd dft_mag; // p x p, |2D DFT| of values
};

/// Evaluates h1_k (layer 1) or h2_q (layer 2) on the full (n, m) grid.
PreactMap preactivation_map(const net::NetworkParams& params, int layer, int index);

/// Max |off-target output| over all inputs divided by the mean on-target
/// output. Requires a sum-form task (Add, Sub, GeneralSum).
double interference_ratio(const net::NetworkParams& params, const tasks::ModularTask& task);

} // namespace modgrok::analysis
