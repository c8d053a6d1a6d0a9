#include "doctest.h"

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "modgrok/analysis.hpp"
#include "modgrok/analytic.hpp"
#include "modgrok/errors.hpp"
#include "modgrok/network.hpp"
#include "modgrok/task.hpp"

using namespace modgrok;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_pi(double x) {
    double r = std::remainder(x, kTwoPi);
    if (r <= -kPi) r += kTwoPi;
    return r;
}

net::NetworkParams blank_params(int p, int N) {
    net::NetworkParams params;
    params.p = p;
    params.N = N;
    params.activation = net::Activation::Quadratic;
    params.scaling = net::Scaling::MeanField;
    params.W1 = Eigen::MatrixXd::Zero(N, 2 * p);
    params.W2 = Eigen::MatrixXd::Zero(p, N);
    return params;
}

void fill_cos_slot(net::NetworkParams& params, int row, int slot, int freq, double phase) {
    const int p = params.p;
    for (int v = 0; v < p; ++v)
        params.W1(row, slot * p + v) = std::cos(kTwoPi * freq * v / p + phase);
}

} // namespace

TEST_SUITE("analysis") {

TEST_CASE("transform preserves energy") {
    for (int p : {5, 8, 13, 97}) {
        analysis::DftPlan plan(p);
        std::mt19937_64 gen(p);
        std::normal_distribution<double> dist;
        for (int rep = 0; rep < 5; ++rep) {
            Eigen::VectorXd x(p);
            for (int i = 0; i < p; ++i) x[i] = dist(gen);
            Eigen::VectorXcd X = plan.forward(x);
            const double lhs = X.squaredNorm();
            const double rhs = p * x.squaredNorm();
            CHECK(std::abs(lhs - rhs) <= 1e-10 * rhs);
        }
    }
}

TEST_CASE("transform error paths") {
    CHECK_THROWS_AS(analysis::DftPlan(1), ConfigError);
    analysis::DftPlan plan(7);
    Eigen::VectorXd wrong(6);
    wrong.setZero();
    CHECK_THROWS_AS(plan.forward(wrong), ShapeError);
}

TEST_CASE("pure cosine rows localize to a conjugate pair") {
    const int p = 11, N = 4;
    auto params = blank_params(p, N);
    fill_cos_slot(params, 0, 0, 3, 0.7);
    // row 1: the same tone through the high-frequency alias
    fill_cos_slot(params, 1, 0, p - 3, 0.4);
    // row 2: both slots carry a tone
    fill_cos_slot(params, 2, 0, 2, 1.1);
    fill_cos_slot(params, 2, 1, 2, 2.3);
    // row 3 left identically zero

    auto prof0 = analysis::weight_spectrum(params, 0);
    CHECK(prof0.dominant_freq[0] == 3);
    CHECK(prof0.dominant_freq[1] == -1);
    CHECK(prof0.degenerate[1]);
    CHECK(prof0.extracted_phase[0] == doctest::Approx(0.7).epsilon(1e-9));
    CHECK(prof0.ipr(2.0) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(prof0.ipr(1.0) == doctest::Approx(1.0).epsilon(1e-12));

    // a frequency above p/2 reports the mirrored bin with negated phase
    auto prof1 = analysis::weight_spectrum(params, 1);
    CHECK(prof1.dominant_freq[0] == 3);
    CHECK(prof1.extracted_phase[0] == doctest::Approx(-0.4).epsilon(1e-9));

    auto prof2 = analysis::weight_spectrum(params, 2);
    CHECK(prof2.dominant_freq[0] == 2);
    CHECK(prof2.dominant_freq[1] == 2);
    CHECK(prof2.ipr(2.0) == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(prof2.fit_residual < 1e-12);

    auto prof3 = analysis::weight_spectrum(params, 3);
    CHECK(prof3.raw_power == 0.0);
    CHECK(prof3.ipr(2.0) == 1.0);
    CHECK(prof3.degenerate[0]);
}

TEST_CASE("localization index stays within its algebraic range") {
    const int p = 97, N = 500;
    auto init = net::init_params(p, N, net::Activation::Quadratic, 41);
    const double lo = 1.0 / (2.0 * p);
    analysis::DftPlan plan(p);
    for (int k = 0; k < N; k += 25) {
        double v = analysis::weight_spectrum(init, k, plan).ipr(2.0);
        CHECK(v >= lo);
        CHECK(v <= 1.0);
    }
    CHECK(analysis::avg_ipr(init, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
    // random rows spread energy over the whole spectrum
    CHECK(analysis::avg_ipr(init, 2.0) < 0.02);
    CHECK(analysis::avg_ipr(init, 2.0) > lo);
}

TEST_CASE("cosine construction localizes to four bins") {
    const int p = 97, N = 500;
    auto sol = analytic::build_addition_weights(p, N, 8);
    analysis::DftPlan plan(p);
    int constant_rows = 0;
    double mean = 0.0;
    double expected_sum = 0.0;
    for (int k = 0; k < N; ++k) {
        auto prof = analysis::weight_spectrum(sol.params, k, plan);
        const bool constant = (k + 1) % p == 0;
        if (constant) {
            ++constant_rows;
            // all energy at DC: no positive-frequency content in either slot,
            // split between the slots by the squared phase cosines
            CHECK(prof.degenerate[0]);
            CHECK(prof.degenerate[1]);
            const double c1 = std::cos(sol.phases.phi1[k]);
            const double c2 = std::cos(sol.phases.phi2[k]);
            const double a = c1 * c1 / (c1 * c1 + c2 * c2);
            const double want = a * a + (1.0 - a) * (1.0 - a);
            CHECK(prof.ipr(2.0) == doctest::Approx(want).epsilon(1e-9));
            expected_sum += want;
        } else {
            CHECK(prof.ipr(2.0) == doctest::Approx(0.25).epsilon(1e-9));
            CHECK(prof.fit_residual < 1e-12);
            const int freq = (k + 1) % p;
            CHECK(prof.dominant_freq[0] == std::min(freq, p - freq));
            expected_sum += 0.25;
        }
        mean += prof.ipr(2.0);
    }
    mean /= N;
    CHECK(constant_rows == N / p);
    CHECK(mean == doctest::Approx(expected_sum / N).epsilon(1e-9));
    // the batched path agrees with the per-neuron loop
    CHECK(analysis::avg_ipr(sol.params, 2.0) == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("phases survive a spectral round trip") {
    const int p = 97, N = 500;
    auto sol = analytic::build_addition_weights(p, N, 17);
    auto report = analysis::extract_phases(sol.params);
    CHECK(report.excluded == N / p);
    REQUIRE(static_cast<int>(report.neurons.size()) == N - N / p);

    for (const auto& t : report.neurons) {
        CHECK(t.freq >= 1);
        CHECK(t.freq <= (p - 1) / 2);
        const int raw_freq = (t.neuron + 1) % p;
        CHECK(t.freq == std::min(raw_freq, p - raw_freq));
        // mirrored bins report negated phases; the constraint wraps to zero
        const double sign = raw_freq <= (p - 1) / 2 ? 1.0 : -1.0;
        CHECK(std::abs(wrap_pi(t.phi1 - sign * sol.phases.phi1[t.neuron])) < 1e-9);
        CHECK(std::abs(wrap_pi(t.phi2 - sign * sol.phases.phi2[t.neuron])) < 1e-9);
        CHECK(std::abs(wrap_pi(t.phi3 - sign * sol.phases.phi3[t.neuron])) < 1e-9);
        CHECK(t.residual > -kPi);
        CHECK(t.residual <= kPi);
        CHECK(std::abs(t.residual) < 1e-9);
    }

    CHECK(analysis::residual_mass_within(report, kPi / 8) == 1.0);
    long hist_total = 0;
    for (long c : report.histogram) hist_total += c;
    CHECK(hist_total == static_cast<long>(report.neurons.size()));
    // everything lands in the two bins around zero
    const int mid = report.bins / 2;
    CHECK(report.histogram[static_cast<std::size_t>(mid)] +
              report.histogram[static_cast<std::size_t>(mid - 1)] ==
          hist_total);
}

TEST_CASE("ambiguous or mismatched neurons are excluded") {
    const int p = 11, N = 3;
    auto params = blank_params(p, N);
    // row 0: two equal tones in slot 1 fail the dominance margin
    for (int v = 0; v < p; ++v)
        params.W1(0, v) = std::cos(kTwoPi * v / p) + std::cos(kTwoPi * 2 * v / p);
    fill_cos_slot(params, 0, 1, 1, 0.0);
    for (int q = 0; q < p; ++q) params.W2(q, 0) = std::cos(kTwoPi * q / p);
    // row 1: slots disagree on the frequency
    fill_cos_slot(params, 1, 0, 2, 0.0);
    fill_cos_slot(params, 1, 1, 3, 0.0);
    for (int q = 0; q < p; ++q) params.W2(q, 1) = std::cos(kTwoPi * 2 * q / p);
    // row 2: readout disagrees with the slots
    fill_cos_slot(params, 2, 0, 4, 0.2);
    fill_cos_slot(params, 2, 1, 4, 0.3);
    for (int q = 0; q < p; ++q) params.W2(q, 2) = std::cos(kTwoPi * 5 * q / p);

    auto prof = analysis::weight_spectrum(params, 0);
    CHECK(prof.degenerate[0]);
    CHECK_FALSE(prof.degenerate[1]);

    auto report = analysis::extract_phases(params);
    CHECK(report.excluded == 3);
    CHECK(report.neurons.empty());
    CHECK(analysis::residual_mass_within(report, kPi) == 0.0);
}

TEST_CASE("preactivation maps match direct evaluation") {
    const int p = 7, N = 20;
    auto params = net::init_params(p, N, net::Activation::GELU, 3);
    params.W2 = Eigen::MatrixXd::Random(p, N);

    auto m1 = analysis::preactivation_map(params, 1, 4);
    const double s1 = net::layer1_scale(params);
    for (int n = 0; n < p; ++n)
        for (int m = 0; m < p; ++m)
            CHECK(m1.values(n, m) ==
                  doctest::Approx(s1 * (params.W1(4, n) + params.W1(4, p + m))).epsilon(1e-12));

    // layer-2 map equals the network output for the matching one-hot pair
    auto ds = tasks::build_dataset(tasks::make_add(p));
    auto batch = net::full_batch(ds);
    Eigen::MatrixXd H1T, Z1T, H2T;
    net::onehot_forward(params, batch, 0, batch.size(), H1T, Z1T, H2T);
    auto m2 = analysis::preactivation_map(params, 2, 2);
    for (int n = 0; n < p; ++n)
        for (int m = 0; m < p; ++m)
            CHECK(m2.values(n, m) == doctest::Approx(H2T(2, n * p + m)).epsilon(1e-12));

    // dense transform against the O(p^4) definition
    for (int nu1 = 0; nu1 < p; ++nu1)
        for (int nu2 = 0; nu2 < p; ++nu2) {
            std::complex<double> acc = 0.0;
            for (int n = 0; n < p; ++n)
                for (int m = 0; m < p; ++m)
                    acc += m2.values(n, m) *
                           std::polar(1.0, -kTwoPi * (static_cast<double>(nu1) * n +
                                                      static_cast<double>(nu2) * m) /
                                               p);
            CHECK(m2.dft_mag(nu1, nu2) == doctest::Approx(std::abs(acc)).epsilon(1e-8));
        }

    CHECK_THROWS_AS(analysis::preactivation_map(params, 3, 0), ConfigError);
    CHECK_THROWS_AS(analysis::preactivation_map(params, 1, N), ShapeError);
    CHECK_THROWS_AS(analysis::preactivation_map(params, 2, p), ShapeError);
}

TEST_CASE("crosstalk ratio matches a direct recount") {
    const int p = 5, N = 12;
    auto params = net::init_params(p, N, net::Activation::Quadratic, 6);
    params.W2 = Eigen::MatrixXd::Random(p, N) * 40.0;
    auto task = tasks::make_add(p);

    auto ds = tasks::build_dataset(task);
    auto batch = net::full_batch(ds);
    Eigen::MatrixXd H1T, Z1T, H2T;
    net::onehot_forward(params, batch, 0, batch.size(), H1T, Z1T, H2T);
    double on_sum = 0.0, off_max = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        for (int q = 0; q < p; ++q) {
            if (q == batch.target[b])
                on_sum += H2T(q, static_cast<Eigen::Index>(b));
            else
                off_max = std::max(off_max, std::abs(H2T(q, static_cast<Eigen::Index>(b))));
        }
    }
    const double expect = off_max / (on_sum / static_cast<double>(batch.size()));
    CHECK(analysis::interference_ratio(params, task) == doctest::Approx(expect).epsilon(1e-12));

    CHECK_THROWS_AS(analysis::interference_ratio(params, tasks::make_mul(p)), ConfigError);
    CHECK_THROWS_AS(analysis::interference_ratio(params, tasks::make_add(7)), ShapeError);
}

TEST_CASE("spectral analysis rejects invalid inputs") {
    auto params = net::init_params(7, 5, net::Activation::Quadratic, 0);
    CHECK_THROWS_AS(analysis::weight_spectrum(params, -1), ShapeError);
    CHECK_THROWS_AS(analysis::weight_spectrum(params, 5), ShapeError);
    CHECK_THROWS_AS(analysis::extract_phases(params, 0), ConfigError);
    CHECK_THROWS_AS(analysis::extract_phases(params, 64, 0.0), ConfigError);
    CHECK_THROWS_AS(analysis::extract_phases(params, 64, 1.0), ConfigError);
}

} // TEST_SUITE
