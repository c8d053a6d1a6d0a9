#include "modgrok/analysis.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

#include "modgrok/errors.hpp"

namespace modgrok::analysis {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// relative floor below which a slot's positive-frequency content counts as
// absent (constant rows leave only rounding dust off DC)
constexpr double kEnergyFloor = 1e-18;

struct SlotStats {
    int dom = -1;          // dominant positive bin
    double dom_energy = 0; // conjugate-pair energy at dom
    double phase = 0;      // arg of the coefficient at dom
    bool degenerate = true;
    double power = 0; // total energy across all bins
};

// pair energies over positive bins 1..p/2; self-paired Nyquist bin for even p
SlotStats analyze_slot(const Eigen::VectorXcd& coef, double margin) {
    const int p = static_cast<int>(coef.size());
    SlotStats s;
    s.power = coef.squaredNorm();
    const int top_bin = p / 2;
    double best = 0, second = 0;
    int best_bin = -1;
    for (int nu = 1; nu <= top_bin; ++nu) {
        double e = std::norm(coef[nu]);
        if (nu != p - nu) e += std::norm(coef[p - nu]);
        if (e > best) {
            second = best;
            best = e;
            best_bin = nu;
        } else if (e > second) {
            second = e;
        }
    }
    if (best_bin < 0 || best <= kEnergyFloor * s.power || s.power == 0.0) return s;
    if (second > (1.0 - margin) * best) return s; // ambiguous dominance
    s.dom = best_bin;
    s.dom_energy = best;
    s.phase = std::arg(coef[best_bin]);
    s.degenerate = false;
    return s;
}

double wrap_pi(double x) {
    double r = std::remainder(x, kTwoPi);
    if (r <= -std::numbers::pi) r += kTwoPi;
    return r;
}

void require_neuron(const net::NetworkParams& params, int k) {
    if (k < 0 || k >= params.N) throw ShapeError("weight_spectrum: neuron index out of range");
    if (params.W1.rows() != params.N || params.W1.cols() != 2 * params.p)
        throw ShapeError("weight_spectrum: W1 must be N x 2p");
}

SpectralProfile profile_from_coefs(int k, const Eigen::VectorXcd& c1, const Eigen::VectorXcd& c2,
                                   double margin) {
    const int p = static_cast<int>(c1.size());
    SpectralProfile prof;
    prof.neuron = k;
    prof.magnitudes.resize(2 * p);
    for (int nu = 0; nu < p; ++nu) {
        prof.magnitudes[nu] = std::abs(c1[nu]);
        prof.magnitudes[p + nu] = std::abs(c2[nu]);
    }
    prof.raw_power = prof.magnitudes.squaredNorm();
    SlotStats s1 = analyze_slot(c1, margin);
    SlotStats s2 = analyze_slot(c2, margin);
    prof.dominant_freq = {s1.dom, s2.dom};
    prof.extracted_phase = {s1.phase, s2.phase};
    prof.degenerate = {s1.degenerate, s2.degenerate};
    if (prof.raw_power == 0.0) {
        prof.magnitudes.setZero();
        prof.fit_residual = 1.0;
        return prof;
    }
    prof.magnitudes /= std::sqrt(prof.raw_power);
    prof.fit_residual = 1.0 - (s1.dom_energy + s2.dom_energy) / prof.raw_power;
    return prof;
}

} // namespace

DftPlan::DftPlan(int p) {
    if (p < 2) throw ConfigError("DftPlan: modulus p must be >= 2");
    kernel_.resize(p, p);
    for (int nu = 0; nu < p; ++nu)
        for (int x = 0; x < p; ++x) {
            auto r = static_cast<double>((static_cast<long long>(nu) * x) % p);
            kernel_(nu, x) = std::polar(1.0, -kTwoPi * (r / p));
        }
}

Eigen::VectorXcd DftPlan::forward(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (x.size() != kernel_.rows()) throw ShapeError("DftPlan: signal length must equal p");
    return kernel_ * x.cast<std::complex<double>>();
}

double SpectralProfile::ipr(double r) const {
    if (raw_power == 0.0) return 1.0;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < magnitudes.size(); ++i) {
        double share = magnitudes[i] * magnitudes[i];
        acc += std::pow(share, r);
    }
    return acc;
}

SpectralProfile weight_spectrum(const net::NetworkParams& params, int k, const DftPlan& plan) {
    require_neuron(params, k);
    if (plan.p() != params.p) throw ShapeError("weight_spectrum: plan modulus mismatch");
    const int p = params.p;
    Eigen::VectorXd slot1 = params.W1.row(k).head(p).transpose();
    Eigen::VectorXd slot2 = params.W1.row(k).tail(p).transpose();
    return profile_from_coefs(k, plan.forward(slot1), plan.forward(slot2), 0.1);
}

SpectralProfile weight_spectrum(const net::NetworkParams& params, int k) {
    return weight_spectrum(params, k, DftPlan(params.p));
}

double avg_ipr(const net::NetworkParams& params, double r) {
    if (params.N < 1) throw ConfigError("avg_ipr: width N must be >= 1");
    const int p = params.p;
    const int N = params.N;
    DftPlan plan(p);
    // all neurons at once: column k of C1/C2 is the slot spectrum of neuron k
    Eigen::MatrixXcd C1 = plan.kernel() * params.W1.leftCols(p).transpose().cast<std::complex<double>>();
    Eigen::MatrixXcd C2 = plan.kernel() * params.W1.rightCols(p).transpose().cast<std::complex<double>>();
    double acc = 0.0;
    Eigen::VectorXd energy(2 * p);
    for (int k = 0; k < N; ++k) {
        for (int nu = 0; nu < p; ++nu) {
            energy[nu] = std::norm(C1(nu, k));
            energy[p + nu] = std::norm(C2(nu, k));
        }
        double total = energy.sum();
        if (total == 0.0) {
            acc += 1.0;
            continue;
        }
        double ipr = 0.0;
        if (r == 2.0) {
            for (Eigen::Index i = 0; i < energy.size(); ++i) {
                double share = energy[i] / total;
                ipr += share * share;
            }
        } else {
            for (Eigen::Index i = 0; i < energy.size(); ++i)
                ipr += std::pow(energy[i] / total, r);
        }
        acc += ipr;
    }
    return acc / static_cast<double>(N);
}

PhaseReport extract_phases(const net::NetworkParams& params, int bins, double margin) {
    if (bins < 1) throw ConfigError("extract_phases: bins must be >= 1");
    if (!(margin > 0.0 && margin < 1.0)) throw ConfigError("extract_phases: margin must be in (0,1)");
    if (params.W2.rows() != params.p || params.W2.cols() != params.N)
        throw ShapeError("extract_phases: W2 must be p x N");
    const int p = params.p;
    DftPlan plan(p);
    PhaseReport report;
    report.bins = bins;
    report.margin = margin;
    report.histogram.assign(static_cast<std::size_t>(bins), 0);
    const double bin_width = kTwoPi / bins;
    for (int k = 0; k < params.N; ++k) {
        Eigen::VectorXd slot1 = params.W1.row(k).head(p).transpose();
        Eigen::VectorXd slot2 = params.W1.row(k).tail(p).transpose();
        SlotStats s1 = analyze_slot(plan.forward(slot1), margin);
        SlotStats s2 = analyze_slot(plan.forward(slot2), margin);
        SlotStats s3 = analyze_slot(plan.forward(params.W2.col(k)), margin);
        if (s1.degenerate || s2.degenerate || s3.degenerate || s1.dom != s2.dom || s1.dom != s3.dom) {
            report.excluded += 1;
            continue;
        }
        PhaseTriple t;
        t.neuron = k;
        t.freq = s1.dom;
        t.phi1 = s1.phase;
        t.phi2 = s2.phase;
        // W2 columns follow cos(-2 pi k q/p - phi3) = cos(2 pi k q/p + phi3),
        // so the coefficient argument is phi3 directly
        t.phi3 = s3.phase;
        t.residual = wrap_pi(t.phi1 + t.phi2 - t.phi3);
        auto idx = static_cast<long>(std::floor((t.residual + std::numbers::pi) / bin_width));
        if (idx < 0) idx = 0;
        if (idx >= bins) idx = bins - 1;
        report.histogram[static_cast<std::size_t>(idx)] += 1;
        report.neurons.push_back(t);
    }
    return report;
}

double residual_mass_within(const PhaseReport& report, double radius) {
    if (report.neurons.empty()) return 0.0;
    std::size_t inside = 0;
    for (const auto& t : report.neurons)
        if (std::abs(t.residual) < radius) ++inside;
    return static_cast<double>(inside) / static_cast<double>(report.neurons.size());
}

PreactMap preactivation_map(const net::NetworkParams& params, int layer, int index) {
    const int p = params.p;
    const int N = params.N;
    if (layer != 1 && layer != 2) throw ConfigError("preactivation_map: layer must be 1 or 2");
    if (layer == 1 && (index < 0 || index >= N))
        throw ShapeError("preactivation_map: neuron index out of range");
    if (layer == 2 && (index < 0 || index >= p))
        throw ShapeError("preactivation_map: class index out of range");

    PreactMap map;
    map.values.resize(p, p);
    const double s1 = net::layer1_scale(params);
    if (layer == 1) {
        for (int n = 0; n < p; ++n)
            for (int m = 0; m < p; ++m)
                map.values(n, m) = s1 * (params.W1(index, n) + params.W1(index, p + m));
    } else {
        const double s2 = net::layer2_scale(params);
        const Eigen::VectorXd w2row = params.W2.row(index).transpose();
        Eigen::VectorXd h1(N), z1(N);
        for (int n = 0; n < p; ++n) {
            for (int m = 0; m < p; ++m) {
                h1 = s1 * (params.W1.col(n) + params.W1.col(p + m));
                for (int k = 0; k < N; ++k) z1[k] = net::activate(params.activation, h1[k]);
                map.values(n, m) = s2 * w2row.dot(z1);
            }
        }
    }
    DftPlan plan(p);
    Eigen::MatrixXcd F = plan.kernel() * map.values.cast<std::complex<double>>() *
                         plan.kernel().transpose();
    map.dft_mag = F.cwiseAbs();
    return map;
}

double interference_ratio(const net::NetworkParams& params, const tasks::ModularTask& task) {
    using tasks::TaskKind;
    if (task.kind != TaskKind::Add && task.kind != TaskKind::Sub && task.kind != TaskKind::GeneralSum)
        throw ConfigError("interference_ratio: task must be a sum of per-input maps");
    if (task.p != params.p) throw ShapeError("interference_ratio: task and params modulus differ");
    const tasks::Dataset ds = tasks::build_dataset(task);
    const net::Batch batch = net::full_batch(ds);
    const int p = params.p;

    double on_sum = 0.0;
    double off_max = 0.0;
    Eigen::MatrixXd H1T, Z1T, H2T;
    const std::size_t block = 1024;
    for (std::size_t lo = 0; lo < batch.size(); lo += block) {
        std::size_t hi = std::min(lo + block, batch.size());
        net::onehot_forward(params, batch, lo, hi, H1T, Z1T, H2T);
        for (std::size_t b = lo; b < hi; ++b) {
            const auto c = static_cast<Eigen::Index>(b - lo);
            const int t = batch.target[b];
            on_sum += H2T(t, c);
            for (int q = 0; q < p; ++q) {
                if (q == t) continue;
                off_max = std::max(off_max, std::abs(H2T(q, c)));
            }
        }
    }
    const double on_mean = on_sum / static_cast<double>(batch.size());
    return off_max / on_mean;
}

} // namespace modgrok::analysis
