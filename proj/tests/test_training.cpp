#include "doctest.h"

#include <cmath>
#include <vector>

#include "modgrok/errors.hpp"
#include "modgrok/network.hpp"
#include "modgrok/task.hpp"
#include "modgrok/training.hpp"

using namespace modgrok;

namespace {

double rel_err(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-10});
    return std::abs(a - b) / denom;
}

// central finite differences on the batch loss, one parameter entry at a time
train::Gradients fd_gradients(net::NetworkParams params, const net::Batch& batch, double h) {
    train::Gradients g;
    g.gW1.resize(params.W1.rows(), params.W1.cols());
    g.gW2.resize(params.W2.rows(), params.W2.cols());
    auto probe = [&](Eigen::MatrixXd& W, Eigen::Index r, Eigen::Index c) {
        const double orig = W(r, c);
        W(r, c) = orig + h;
        const double up = net::mse_loss(params, batch);
        W(r, c) = orig - h;
        const double down = net::mse_loss(params, batch);
        W(r, c) = orig;
        return (up - down) / (2.0 * h);
    };
    for (Eigen::Index r = 0; r < params.W1.rows(); ++r)
        for (Eigen::Index c = 0; c < params.W1.cols(); ++c) g.gW1(r, c) = probe(params.W1, r, c);
    for (Eigen::Index r = 0; r < params.W2.rows(); ++r)
        for (Eigen::Index c = 0; c < params.W2.cols(); ++c) g.gW2(r, c) = probe(params.W2, r, c);
    return g;
}

// preactivations that a +-delta nudge of W1(k, j) could push across the ReLU kink
bool near_relu_kink(const net::NetworkParams& params, const net::Batch& batch, Eigen::Index k,
                    Eigen::Index j, double delta) {
    const int p = params.p;
    const double s1 = net::layer1_scale(params);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const bool touched = j == batch.n[b] || j == p + batch.m[b];
        if (!touched) continue;
        const double h1 =
            s1 * (params.W1(k, batch.n[b]) + params.W1(k, p + batch.m[b]));
        if (std::abs(h1) < delta) return true;
    }
    return false;
}

} // namespace

TEST_SUITE("training") {

TEST_CASE("backward matches central finite differences") {
    const double step = 1e-5;
    for (int p : {5, 7})
        for (int N : {8, 16})
            for (auto act :
                 {net::Activation::Quadratic, net::Activation::ReLU, net::Activation::GELU}) {
                auto params = net::init_params(p, N, act,
                                               static_cast<std::uint64_t>(p * 100 + N));
                auto ds = tasks::build_dataset(tasks::make_add(p));
                auto split = tasks::split_dataset(ds, 0.6, 3);
                auto batch = net::make_batch(ds, split.train);

                auto analytic = train::backward(params, batch);
                auto fd = fd_gradients(params, batch, step);

                // entries much smaller than loss*eps/step drown in rounding, so
                // accept either a relative match or a tiny absolute gap
                auto close = [&](double a, double b) {
                    return std::abs(a - b) < 1e-11 || rel_err(a, b) < 1e-5;
                };
                // a W1 nudge of h moves the preactivation by at most 2*s1*h
                const double kink_delta = 1e-3;
                for (Eigen::Index r = 0; r < params.W1.rows(); ++r)
                    for (Eigen::Index c = 0; c < params.W1.cols(); ++c) {
                        if (act == net::Activation::ReLU &&
                            near_relu_kink(params, batch, r, c, kink_delta))
                            continue;
                        CHECK(close(analytic.gW1(r, c), fd.gW1(r, c)));
                    }
                for (Eigen::Index r = 0; r < params.W2.rows(); ++r)
                    for (Eigen::Index c = 0; c < params.W2.cols(); ++c)
                        CHECK(close(analytic.gW2(r, c), fd.gW2(r, c)));
            }
}

TEST_CASE("zero readout still propagates a gradient to W2 but not W1") {
    const int p = 5, N = 8;
    auto params = net::init_params(p, N, net::Activation::Quadratic, 2);
    params.W2.setZero();
    auto ds = tasks::build_dataset(tasks::make_add(p));
    auto batch = net::full_batch(ds);
    auto g = train::backward(params, batch);
    CHECK(g.gW1.norm() == 0.0);
    CHECK(g.gW2.norm() > 0.0);
}

TEST_CASE("gd step is plain descent") {
    net::NetworkParams params;
    params.p = 1;
    params.N = 1;
    params.W1 = Eigen::MatrixXd::Constant(1, 2, 1.0);
    params.W2 = Eigen::MatrixXd::Constant(1, 1, 1.0);
    train::Gradients g;
    g.gW1 = Eigen::MatrixXd::Constant(1, 2, 2.0);
    g.gW2 = Eigen::MatrixXd::Constant(1, 1, 2.0);
    train::OptimizerConfig cfg;
    cfg.kind = train::OptimizerKind::GD;
    cfg.learning_rate = 0.1;
    train::OptimizerState state;
    train::optimizer_step(params, g, state, cfg);
    CHECK(params.W1(0, 0) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(params.W2(0, 0) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(state.step == 0);
    CHECK(state.vW1.size() == 0);
}

TEST_CASE("momentum with weight decay follows the velocity recurrence") {
    net::NetworkParams params;
    params.p = 1;
    params.N = 1;
    params.W1 = Eigen::MatrixXd::Constant(1, 2, 1.0);
    params.W2 = Eigen::MatrixXd::Constant(1, 1, -2.0);
    train::OptimizerConfig cfg;
    cfg.kind = train::OptimizerKind::GDMomentumWD;
    cfg.learning_rate = 0.5;
    cfg.momentum = 0.9;
    cfg.weight_decay = 0.1;
    train::OptimizerState state;

    double w = -2.0, v = 0.0;
    const double gs[] = {1.0, -0.5, 0.25};
    for (double gval : gs) {
        train::Gradients g;
        g.gW1 = Eigen::MatrixXd::Constant(1, 2, gval);
        g.gW2 = Eigen::MatrixXd::Constant(1, 1, gval);
        train::optimizer_step(params, g, state, cfg);
        v = 0.9 * v + gval + 0.1 * w;
        w -= 0.5 * v;
        CHECK(params.W2(0, 0) == doctest::Approx(w).epsilon(1e-14));
    }
}

TEST_CASE("adamw first step moves by approximately eta in the gradient direction") {
    net::NetworkParams params;
    params.p = 1;
    params.N = 1;
    params.W1 = Eigen::MatrixXd::Constant(1, 2, 0.0);
    params.W2 = Eigen::MatrixXd::Constant(1, 1, 0.0);
    train::Gradients g;
    g.gW1 = Eigen::MatrixXd::Constant(1, 2, 3.0);
    g.gW2 = Eigen::MatrixXd::Constant(1, 1, -3.0);
    train::OptimizerConfig cfg = train::default_optimizer(train::OptimizerKind::AdamW);
    cfg.weight_decay = 0.0;
    train::OptimizerState state;
    train::optimizer_step(params, g, state, cfg);
    // m-hat = g, v-hat = g^2 at t=1 -> update = eta * sign(g) / (1 + eps/|g|)
    CHECK(params.W1(0, 0) ==
          doctest::Approx(-cfg.learning_rate).epsilon(1e-6));
    CHECK(params.W2(0, 0) == doctest::Approx(cfg.learning_rate).epsilon(1e-6));
    CHECK(state.step == 1);
}

TEST_CASE("adamw with zero decay reproduces a reference adam implementation") {
    const int p = 5, N = 6;
    auto params = net::init_params(p, N, net::Activation::Quadratic, 4);
    auto reference = params;
    auto ds = tasks::build_dataset(tasks::make_add(p));
    auto batch = net::full_batch(ds);

    train::OptimizerConfig cfg;
    cfg.kind = train::OptimizerKind::AdamW;
    cfg.learning_rate = 0.01;
    cfg.weight_decay = 0.0;
    train::OptimizerState state;

    Eigen::MatrixXd m1 = Eigen::MatrixXd::Zero(N, 2 * p), v1 = m1;
    Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(p, N), v2 = m2;

    for (int t = 1; t <= 20; ++t) {
        auto g = train::backward(params, batch);

        // textbook Adam on the same gradient stream
        auto gr = train::backward(reference, batch);
        auto adam = [&](Eigen::MatrixXd& W, const Eigen::MatrixXd& grad, Eigen::MatrixXd& m,
                        Eigen::MatrixXd& v) {
            m = cfg.beta1 * m + (1 - cfg.beta1) * grad;
            v = cfg.beta2 * v + (1 - cfg.beta2) * grad.cwiseProduct(grad);
            const double bc1 = 1 - std::pow(cfg.beta1, t);
            const double bc2 = 1 - std::pow(cfg.beta2, t);
            for (Eigen::Index i = 0; i < W.rows(); ++i)
                for (Eigen::Index j = 0; j < W.cols(); ++j)
                    W(i, j) -= cfg.learning_rate * (m(i, j) / bc1) /
                               (std::sqrt(v(i, j) / bc2) + cfg.epsilon);
        };
        adam(reference.W1, gr.gW1, m1, v1);
        adam(reference.W2, gr.gW2, m2, v2);

        train::optimizer_step(params, g, state, cfg);
        CHECK((params.W1 - reference.W1).cwiseAbs().maxCoeff() < 1e-13);
        CHECK((params.W2 - reference.W2).cwiseAbs().maxCoeff() < 1e-13);
    }
}

TEST_CASE("optimizer config validation") {
    train::OptimizerConfig cfg;
    cfg.learning_rate = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = train::default_optimizer(train::OptimizerKind::AdamW);
    cfg.beta1 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = train::default_optimizer(train::OptimizerKind::GDMomentumWD);
    CHECK(cfg.momentum == doctest::Approx(0.9));
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("train records measure the params at the start of each logged epoch") {
    auto task = tasks::make_add(7);
    auto ds = tasks::build_dataset(task);
    auto split = tasks::split_dataset(ds, 0.6, 1);
    train::NetConfig ncfg{8, net::Activation::Quadratic, 5};
    auto opt = train::default_optimizer(train::OptimizerKind::GD);
    opt.learning_rate = 10.0;
    train::Schedule sched;
    sched.epochs = 20;
    sched.log_every = 5;
    sched.ipr_every = 10;
    sched.stop_at_test_acc = 2.0;

    auto res = train::train(task, split, ncfg, opt, sched);
    REQUIRE(res.record.rows.size() == 5); // epochs 0,5,10,15,20
    CHECK(res.record.rows.front().epoch == 0);
    CHECK(res.record.rows.back().epoch == 20);
    CHECK(res.record.epochs_run == 20);

    // row 0 must equal metrics of the untouched init
    auto params0 = net::init_params(7, 8, net::Activation::Quadratic, 5);
    auto train_batch = net::make_batch(ds, split.train);
    auto m0 = net::evaluate(params0, train_batch);
    CHECK(res.record.rows[0].train_loss == doctest::Approx(m0.loss).epsilon(1e-14));
    CHECK(res.record.rows[0].w1_norm == doctest::Approx(params0.W1.norm()).epsilon(1e-14));

    // terminal row describes the returned params and carries no gradient norms
    auto mf = net::evaluate(res.params, train_batch);
    CHECK(res.record.rows.back().train_loss == doctest::Approx(mf.loss).epsilon(1e-14));
    CHECK(std::isnan(res.record.rows.back().g1_norm));
    CHECK(std::isnan(res.record.rows.back().g2_norm));
    for (std::size_t i = 0; i + 1 < res.record.rows.size(); ++i)
        CHECK_FALSE(std::isnan(res.record.rows[i].g1_norm));

    // ipr logged on multiples of ipr_every, nan elsewhere
    CHECK_FALSE(std::isnan(res.record.rows[0].avg_ipr2));
    CHECK(std::isnan(res.record.rows[1].avg_ipr2));
    CHECK_FALSE(std::isnan(res.record.rows[2].avg_ipr2));
    CHECK_FALSE(std::isnan(res.record.rows.back().avg_ipr2));
}

TEST_CASE("training is bit-deterministic") {
    auto task = tasks::make_mul(5);
    auto ds = tasks::build_dataset(task);
    auto split = tasks::split_dataset(ds, 0.5, 9);
    train::NetConfig ncfg{10, net::Activation::GELU, 3};
    auto opt = train::default_optimizer(train::OptimizerKind::AdamW);
    train::Schedule sched;
    sched.epochs = 30;
    sched.log_every = 10;
    sched.stop_at_test_acc = 2.0;
    auto a = train::train(task, split, ncfg, opt, sched);
    auto b = train::train(task, split, ncfg, opt, sched);
    CHECK(a.params.W1 == b.params.W1);
    CHECK(a.params.W2 == b.params.W2);
    REQUIRE(a.record.rows.size() == b.record.rows.size());
    auto same = [](double x, double y) {
        return (std::isnan(x) && std::isnan(y)) || x == y;
    };
    for (std::size_t i = 0; i < a.record.rows.size(); ++i) {
        CHECK(a.record.rows[i].train_loss == b.record.rows[i].train_loss);
        CHECK(same(a.record.rows[i].g1_norm, b.record.rows[i].g1_norm));
    }
}

TEST_CASE("resume from a mid-run snapshot is bit-exact") {
    auto task = tasks::make_add(7);
    auto ds = tasks::build_dataset(task);
    auto split = tasks::split_dataset(ds, 0.7, 2);
    train::NetConfig ncfg{12, net::Activation::Quadratic, 8};
    auto opt = train::default_optimizer(train::OptimizerKind::AdamW);
    train::Schedule sched;
    sched.epochs = 40;
    sched.log_every = 4;
    sched.stop_at_test_acc = 2.0;

    auto full = train::train(task, split, ncfg, opt, sched);

    // capture the state at epoch 20 via the checkpoint hook
    net::NetworkParams snap_params;
    train::OptimizerState snap_state;
    train::TrainHooks hooks;
    hooks.on_checkpoint = [&](long epoch, const net::NetworkParams& p,
                              const train::OptimizerState& s) {
        if (epoch == 20) {
            snap_params = p;
            snap_state = s;
        }
    };
    train::Schedule sched_ckpt = sched;
    sched_ckpt.checkpoint_every = 20;
    train::train(task, split, ncfg, opt, sched_ckpt, &hooks);

    train::ResumePoint rp;
    rp.params = snap_params;
    rp.state = snap_state;
    rp.next_epoch = 20;
    auto resumed = train::train(task, split, ncfg, opt, sched, nullptr, &rp);

    CHECK(resumed.params.W1 == full.params.W1);
    CHECK(resumed.params.W2 == full.params.W2);
    // resumed record covers epochs 20..40; compare overlapping rows
    REQUIRE(!resumed.record.rows.empty());
    CHECK(resumed.record.rows.front().epoch == 20);
    for (const auto& row : resumed.record.rows) {
        bool found = false;
        for (const auto& ref : full.record.rows)
            if (ref.epoch == row.epoch) {
                found = true;
                CHECK(row.train_loss == ref.train_loss);
                CHECK(row.test_loss == ref.test_loss);
                CHECK(row.w1_norm == ref.w1_norm);
            }
        CHECK(found);
    }
}

TEST_CASE("early stopping waits for a sustained crossing") {
    train::TrainRecord rec;
    auto add_row = [&](long epoch, double test_acc) {
        train::RecordRow r;
        r.epoch = epoch;
        r.test_acc = test_acc;
        rec.rows.push_back(r);
    };
    add_row(0, 0.1);
    add_row(10, 0.995);
    add_row(20, 0.9); // dip resets the streak
    add_row(30, 0.992);
    add_row(40, 0.999);
    add_row(50, 1.0);
    auto t = train::detect_grokking_time(rec, 0.99);
    REQUIRE(t.has_value());
    CHECK(*t == 30);
    // only the final row reaches 1.0
    CHECK(train::detect_grokking_time(rec, 1.0).value() == 50);

    train::TrainRecord low;
    train::RecordRow lr;
    lr.epoch = 0;
    lr.test_acc = 0.5;
    low.rows.push_back(lr);
    CHECK_FALSE(train::detect_grokking_time(low, 0.99).has_value());

    CHECK_THROWS_AS(train::detect_grokking_time(rec, 1.1), ConfigError);
    train::TrainRecord none;
    CHECK_THROWS_AS(train::detect_grokking_time(none, 0.99), ConfigError);
}

TEST_CASE("early stop halts the loop and keeps the triggering measurement") {
    // trivially easy split so test accuracy saturates fast
    auto task = tasks::make_add(5);
    auto ds = tasks::build_dataset(task);
    auto split = tasks::split_dataset(ds, 0.9, 4);
    train::NetConfig ncfg{64, net::Activation::Quadratic, 6};
    auto opt = train::default_optimizer(train::OptimizerKind::AdamW);
    opt.learning_rate = 0.05;
    opt.weight_decay = 0.0;
    train::Schedule sched;
    sched.epochs = 20000;
    sched.log_every = 25;
    sched.stop_at_test_acc = 0.99;
    sched.patience = 100;
    auto res = train::train(task, split, ncfg, opt, sched);
    if (res.record.early_stopped) {
        CHECK(res.record.epochs_run < sched.epochs);
        CHECK(res.record.rows.back().test_acc >= 0.99);
        CHECK(res.record.epochs_run % sched.log_every == 0);
        // returned params are the ones the final row measured
        auto m = net::evaluate(res.params, net::make_batch(ds, split.test));
        CHECK(m.acc == res.record.rows.back().test_acc);
        auto t = train::detect_grokking_time(res.record, 0.99);
        REQUIRE(t.has_value());
        CHECK(res.record.epochs_run - *t >= sched.patience);
    } else {
        CHECK(res.record.rows.back().test_acc < 0.99);
    }
}

TEST_CASE("divergence aborts with a partial record") {
    auto task = tasks::make_add(5);
    auto ds = tasks::build_dataset(task);
    auto split = tasks::split_dataset(ds, 0.5, 1);
    train::NetConfig ncfg{8, net::Activation::Quadratic, 1};
    train::OptimizerConfig opt;
    opt.kind = train::OptimizerKind::GD;
    opt.learning_rate = 1e18;
    train::Schedule sched;
    sched.epochs = 5000;
    sched.log_every = 1;
    sched.stop_at_test_acc = 2.0;
    auto res = train::train(task, split, ncfg, opt, sched);
    CHECK(res.record.diverged);
    CHECK(!res.record.abort_reason.empty());
    CHECK(res.record.epochs_run < sched.epochs);
    CHECK(res.params.W1.allFinite());
}

TEST_CASE("train loss increase counter matches a recount of the logged rows") {
    auto task = tasks::make_add(5);
    auto ds = tasks::build_dataset(task);
    auto split = tasks::split_dataset(ds, 0.5, 1);
    train::NetConfig ncfg{8, net::Activation::Quadratic, 3};
    auto opt = train::default_optimizer(train::OptimizerKind::AdamW);
    opt.learning_rate = 0.3; // deliberately jumpy
    train::Schedule sched;
    sched.epochs = 200;
    sched.log_every = 5;
    sched.stop_at_test_acc = 2.0;
    auto res = train::train(task, split, ncfg, opt, sched);
    long recount = 0;
    for (std::size_t i = 1; i < res.record.rows.size(); ++i)
        if (res.record.rows[i].train_loss >
            res.record.rows[i - 1].train_loss * (1.0 + 1e-12))
            ++recount;
    CHECK(res.record.train_loss_increase_rows == recount);
    CHECK(recount > 0);
}

} // TEST_SUITE
