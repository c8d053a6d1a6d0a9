#include "modgrok/task.hpp"

#include <algorithm>
#include <numeric>

#include "modgrok/errors.hpp"
#include "modgrok/rng.hpp"

namespace modgrok::tasks {

namespace {

void require_modulus(int p) {
    if (p < 2) throw ConfigError("modulus must be >= 2, got " + std::to_string(p));
}

void require_table(const Table& t, int p, const char* name) {
    if (static_cast<int>(t.size()) != p)
        throw ConfigError(std::string(name) + ": table length " + std::to_string(t.size()) +
                          " does not match modulus " + std::to_string(p));
    for (int v : t)
        if (v < 0 || v >= p)
            throw ConfigError(std::string(name) + ": entry " + std::to_string(v) +
                              " outside [0," + std::to_string(p - 1) + "]");
}

void require_residue(int v, int p, const char* name) {
    if (v < 0 || v >= p)
        throw std::invalid_argument(std::string(name) + "=" + std::to_string(v) +
                                    " outside [0," + std::to_string(p - 1) + "]");
}

} // namespace

std::string to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::Add: return "add";
        case TaskKind::Sub: return "sub";
        case TaskKind::GeneralSum: return "general_sum";
        case TaskKind::ComposedSum: return "composed_sum";
        case TaskKind::Mul: return "mul";
        case TaskKind::MixedQuadratic: return "mixed_quadratic";
        case TaskKind::MixedCubic: return "mixed_cubic";
    }
    return "unknown";
}

Table identity_table(int p) {
    require_modulus(p);
    Table t(p);
    std::iota(t.begin(), t.end(), 0);
    return t;
}

Table square_table(int p) {
    require_modulus(p);
    Table t(p);
    for (int n = 0; n < p; ++n) t[n] = static_cast<int>((std::int64_t(n) * n) % p);
    return t;
}

Table cube_table(int p) {
    require_modulus(p);
    Table t(p);
    for (int n = 0; n < p; ++n) t[n] = static_cast<int>((std::int64_t(n) * n % p) * n % p);
    return t;
}

Table affine_table(int p, int a, int b) {
    require_modulus(p);
    Table t(p);
    for (int n = 0; n < p; ++n) {
        std::int64_t v = (std::int64_t(a) * n + b) % p;
        if (v < 0) v += p;
        t[n] = static_cast<int>(v);
    }
    return t;
}

int ModularTask::eval(int n, int m) const {
    require_residue(n, p, "n");
    require_residue(m, p, "m");
    const std::int64_t a = n;
    const std::int64_t b = m;
    switch (kind) {
        case TaskKind::Add: return static_cast<int>((a + b) % p);
        case TaskKind::Sub: return static_cast<int>(((a - b) % p + p) % p);
        case TaskKind::GeneralSum: return static_cast<int>((f1[n] + std::int64_t(f2[m])) % p);
        case TaskKind::ComposedSum: return F[(f1[n] + std::int64_t(f2[m])) % p];
        case TaskKind::Mul: return static_cast<int>((a * b) % p);
        case TaskKind::MixedQuadratic: return static_cast<int>((a * a + b * b + a * b) % p);
        case TaskKind::MixedCubic: return static_cast<int>((a * a % p * a + a * b % p * b + b) % p);
    }
    throw ConfigError("unhandled task kind");
}

ModularTask make_add(int p) {
    require_modulus(p);
    return {p, TaskKind::Add, {}, {}, {}};
}

ModularTask make_sub(int p) {
    require_modulus(p);
    return {p, TaskKind::Sub, {}, {}, {}};
}

ModularTask make_mul(int p) {
    require_modulus(p);
    return {p, TaskKind::Mul, {}, {}, {}};
}

ModularTask make_general_sum(int p, Table f1, Table f2) {
    require_modulus(p);
    require_table(f1, p, "f1");
    require_table(f2, p, "f2");
    return {p, TaskKind::GeneralSum, std::move(f1), std::move(f2), {}};
}

ModularTask make_composed_sum(int p, Table F, Table f1, Table f2) {
    require_modulus(p);
    require_table(F, p, "F");
    require_table(f1, p, "f1");
    require_table(f2, p, "f2");
    return {p, TaskKind::ComposedSum, std::move(f1), std::move(f2), std::move(F)};
}

ModularTask make_mixed_quadratic(int p) {
    require_modulus(p);
    return {p, TaskKind::MixedQuadratic, {}, {}, {}};
}

ModularTask make_mixed_cubic(int p) {
    require_modulus(p);
    return {p, TaskKind::MixedCubic, {}, {}, {}};
}

Dataset build_dataset(const ModularTask& task) {
    Dataset ds;
    ds.p = task.p;
    ds.examples.reserve(static_cast<std::size_t>(task.p) * task.p);
    for (int n = 0; n < task.p; ++n)
        for (int m = 0; m < task.p; ++m)
            ds.examples.push_back({n, m, task.eval(n, m)});
    return ds;
}

Split split_dataset(const Dataset& ds, double alpha, std::uint64_t seed) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ConfigError("alpha must lie in (0,1), got " + std::to_string(alpha));
    const std::size_t total = ds.size();
    // round half to even, matching the documented split contract
    const auto n_train = static_cast<std::size_t>(std::nearbyint(alpha * static_cast<double>(total)));
    if (n_train == 0 || n_train >= total)
        throw ConfigError("alpha=" + std::to_string(alpha) + " yields an empty train or test set");

    std::vector<int> order(total);
    std::iota(order.begin(), order.end(), 0);
    Xoshiro256pp rng(seed);
    for (std::size_t i = total - 1; i > 0; --i) {
        const auto j = rng.uniform_below(i + 1);
        std::swap(order[i], order[j]);
    }

    Split split;
    split.alpha = alpha;
    split.seed = seed;
    split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

Eigen::VectorXd one_hot_encode(int n, int m, int p) {
    require_modulus(p);
    require_residue(n, p, "n");
    require_residue(m, p, "m");
    Eigen::VectorXd x = Eigen::VectorXd::Zero(2 * p);
    x[n] = 1.0;
    x[p + m] = 1.0;
    return x;
}

std::vector<int> mod_roots(int q, int p) {
    require_modulus(p);
    require_residue(q, p, "q");
    std::vector<int> roots;
    for (int r = 0; r < p; ++r)
        if (static_cast<int>((std::int64_t(r) * r) % p) == q) roots.push_back(r);
    return roots;
}

} // namespace modgrok::tasks
