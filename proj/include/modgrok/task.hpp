#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace modgrok::tasks {

enum class TaskKind {
    Add,
    Sub,
    GeneralSum,     // f1(n) + f2(m) mod p
    ComposedSum,    // F(f1(n) + f2(m)) mod p
    Mul,
    MixedQuadratic, // n^2 + m^2 + nm mod p
    MixedCubic,     // n^3 + n m^2 + m mod p
};

std::string to_string(TaskKind kind);

// univariate map Z_p -> Z_p as an explicit lookup table of length p
using Table = std::vector<int>;

Table identity_table(int p);
Table square_table(int p);
Table cube_table(int p);
Table affine_table(int p, int a, int b); // n -> a*n + b mod p

/// A bivariate function over Z_p x Z_p presented as a p-way classification task.
/// GeneralSum and ComposedSum carry their univariate maps as lookup tables so
/// arbitrary f1, f2, F are representable.
struct ModularTask {
    int p = 0;
    TaskKind kind = TaskKind::Add;
    Table f1, f2; // GeneralSum, ComposedSum
    Table F;      // ComposedSum

    int eval(int n, int m) const;
};

ModularTask make_add(int p);
ModularTask make_sub(int p);
ModularTask make_mul(int p);
ModularTask make_general_sum(int p, Table f1, Table f2);
ModularTask make_composed_sum(int p, Table F, Table f1, Table f2);
ModularTask make_mixed_quadratic(int p);
ModularTask make_mixed_cubic(int p);

struct Example {
    int n = 0;
    int m = 0;
    int q = 0;
};

/// All p^2 input pairs in row-major order with their targets.
struct Dataset {
    int p = 0;
    std::vector<Example> examples;

    std::size_t size() const { return examples.size(); }
};

Dataset build_dataset(const ModularTask& task);

/// Seeded partition of dataset indices. Index sets are kept sorted ascending;
/// |train| = round(alpha * p^2) with ties to even.
struct Split {
    double alpha = 0.0;
    std::uint64_t seed = 0;
    std::vector<int> train;
    std::vector<int> test;
};

Split split_dataset(const Dataset& ds, double alpha, std::uint64_t seed);

/// Length-2p one-hot pair: position n in the first block, p+m in the second.
Eigen::VectorXd one_hot_encode(int n, int m, int p);

/// All r in [0,p) with r^2 = q mod p, sorted ascending. p need not be prime,
/// so the result may have any size.
std::vector<int> mod_roots(int q, int p);

} // namespace modgrok::tasks
