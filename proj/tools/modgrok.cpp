// Command-line front end: single runs, checkpoint analysis, and sweeps.
// Subcommand results land in a run directory resolved from --out, the
// config's out_dir, or $MODGROK_OUT.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "modgrok/analysis.hpp"
#include "modgrok/analytic.hpp"
#include "modgrok/config.hpp"
#include "modgrok/errors.hpp"
#include "modgrok/harness.hpp"
#include "modgrok/io.hpp"
#include "modgrok/network.hpp"
#include "modgrok/task.hpp"
#include "modgrok/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace modgrok;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitDiverged = 2;

struct CommonOpts {
    std::string config_path;
    std::string out;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
};

// config file -> --set overrides -> --seed, in that order
config::ExperimentConfig load_config(const CommonOpts& opts) {
    json raw;
    if (!opts.config_path.empty()) {
        std::ifstream in(opts.config_path);
        if (!in) throw IoError("cannot open config file " + opts.config_path);
        try {
            raw = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config parse error: ") + e.what());
        }
    } else {
        raw = json::object();
    }
    for (const auto& assignment : opts.overrides) config::apply_override(raw, assignment);
    config::ExperimentConfig cfg = config::parse_config(raw);
    if (opts.seed) {
        cfg.split_seed = *opts.seed;
        cfg.init_seed = *opts.seed;
    }
    return cfg;
}

std::string default_run_leaf(const config::ExperimentConfig& cfg) {
    char alpha[32];
    std::snprintf(alpha, sizeof alpha, "%g", cfg.alpha);
    return tasks::to_string(cfg.task.kind) + "_p" + std::to_string(cfg.task.p) + "_N" +
           std::to_string(cfg.N) + "_a" + alpha + "_" + train::to_string(cfg.optimizer.kind) +
           "_s" + std::to_string(cfg.init_seed);
}

void print_summary_line(const harness::RunOutcome& outcome) {
    const json& s = outcome.summary;
    std::printf("run %s: %s after %ld epochs", outcome.dir.string().c_str(),
                s.at("status").get<std::string>().c_str(), s.at("epochs_run").get<long>());
    if (!s.at("final").is_null()) {
        const json& f = s.at("final");
        std::printf(", train_acc=%.4f test_acc=%.4f", f.at("train_acc").get<double>(),
                    f.at("test_acc").get<double>());
    }
    if (!s.at("grokking_epoch").is_null())
        std::printf(", grokked at epoch %ld", s.at("grokking_epoch").get<long>());
    std::printf("\n");
}

int cmd_train(const CommonOpts& opts, bool resume, std::optional<long> extend_epochs) {
    harness::RunOutcome outcome;
    if (resume) {
        if (opts.out.empty()) throw ConfigError("--resume needs --out pointing at a run directory");
        outcome = harness::resume_run(opts.out, extend_epochs);
    } else {
        config::ExperimentConfig cfg = load_config(opts);
        const fs::path dir = harness::resolve_out_dir(opts.out, cfg, default_run_leaf(cfg));
        outcome = harness::run(cfg, dir);
    }
    print_summary_line(outcome);
    return outcome.summary.at("status") == "diverged" ? kExitDiverged : kExitOk;
}

int cmd_analytic(const CommonOpts& opts, int p_flag, int width_flag) {
    config::ExperimentConfig cfg;
    if (!opts.config_path.empty() || !opts.overrides.empty()) {
        cfg = load_config(opts);
    } else {
        cfg.task = tasks::make_add(p_flag);
        cfg.task_spec = {{"task", "add"}, {"p", p_flag}};
        cfg.N = width_flag;
    }
    if (opts.seed) cfg.init_seed = *opts.seed;

    const tasks::ModularTask& task = cfg.task;
    analytic::AnalyticSolution sol;
    json extra = json::object();
    switch (task.kind) {
        case tasks::TaskKind::Add:
            sol = analytic::build_addition_weights(task.p, cfg.N, cfg.init_seed);
            break;
        case tasks::TaskKind::GeneralSum:
            sol = analytic::build_general_weights(task.p, cfg.N, task.f1, task.f2, cfg.init_seed);
            break;
        case tasks::TaskKind::ComposedSum: {
            analytic::ComposedSolution comp = analytic::build_composed_weights(
                task.p, cfg.N, task.F, task.f1, task.f2, cfg.init_seed);
            sol.params = std::move(comp.params);
            sol.phases = std::move(comp.phases);
            extra["branch_count"] = comp.branch_count;
            break;
        }
        default:
            throw ConfigError("no weight constructor for task " + tasks::to_string(task.kind));
    }

    const tasks::Dataset ds = tasks::build_dataset(task);
    const net::Metrics metrics = net::evaluate(sol.params, net::full_batch(ds));

    const fs::path dir = harness::resolve_out_dir(
        opts.out, cfg,
        "analytic_" + tasks::to_string(task.kind) + "_p" + std::to_string(task.p) + "_N" +
            std::to_string(cfg.N) + "_s" + std::to_string(cfg.init_seed));
    fs::create_directories(dir);

    io::CheckpointMeta meta;
    meta.p = task.p;
    meta.N = cfg.N;
    meta.activation = sol.params.activation;
    meta.scaling = sol.params.scaling;
    meta.seed = cfg.init_seed;
    meta.origin = "analytic";
    io::save_checkpoint(dir / "analytic.ckpt", sol.params, meta, &sol.phases);

    json summary = {
        {"schema_version", 1},
        {"task", tasks::to_string(task.kind)},
        {"p", task.p},
        {"N", cfg.N},
        {"seed", cfg.init_seed},
        {"full_dataset_loss", metrics.loss},
        {"full_dataset_accuracy", metrics.acc},
    };
    for (auto& [k, v] : extra.items()) summary[k] = v;
    std::ofstream(dir / "summary.json") << summary.dump(2) << '\n';

    std::printf("analytic %s p=%d N=%d: accuracy %.4f on all %zu inputs -> %s\n",
                tasks::to_string(task.kind).c_str(), task.p, cfg.N, metrics.acc, ds.size(),
                dir.string().c_str());
    return kExitOk;
}

int cmd_analyze(const std::string& ckpt_path, const std::string& out, int bins, double margin,
                const std::vector<std::string>& maps, bool interference) {
    io::LoadedCheckpoint lc = io::load_checkpoint(ckpt_path);
    const fs::path dir = out.empty() ? fs::path(ckpt_path).parent_path() / "analysis" : fs::path(out);
    fs::create_directories(dir);

    io::write_spectra_csv(dir / "spectra.csv", lc.params);
    analysis::PhaseReport report = analysis::extract_phases(lc.params, bins, margin);
    io::write_phase_csv(dir / "phases.csv", report);
    io::write_phase_summary_json(dir / "phase_summary.json", report);

    for (const std::string& spec : maps) {
        const auto colon = spec.find(':');
        if (colon == std::string::npos)
            throw ConfigError("--map expects layer:index, got '" + spec + "'");
        const int layer = std::stoi(spec.substr(0, colon));
        const int index = std::stoi(spec.substr(colon + 1));
        analysis::PreactMap map = analysis::preactivation_map(lc.params, layer, index);
        const std::string stem = "map_l" + std::to_string(layer) + "_i" + std::to_string(index);
        io::write_map_csv(dir / (stem + ".csv"), map.values, lc.params.p, layer, index, "values");
        io::write_map_csv(dir / (stem + "_dft.csv"), map.dft_mag, lc.params.p, layer, index,
                          "dft_magnitude");
    }

    std::printf("checkpoint %s: p=%d N=%d origin=%s\n", ckpt_path.c_str(), lc.params.p,
                lc.params.N, lc.meta.origin.c_str());
    std::printf("avg IPR2 = %.6f\n", analysis::avg_ipr(lc.params, 2.0));
    std::printf("phase neurons: %zu included, %d excluded; residual mass |r|<pi/8 = %.4f\n",
                report.neurons.size(), report.excluded,
                analysis::residual_mass_within(report, std::numbers::pi / 8));
    if (interference) {
        const double ratio =
            analysis::interference_ratio(lc.params, tasks::make_add(lc.params.p));
        std::printf("interference ratio (add task) = %.6f\n", ratio);
    }
    std::printf("analysis artifacts -> %s\n", dir.string().c_str());
    return kExitOk;
}

int cmd_sweep_alpha(const CommonOpts& opts, std::vector<double> alphas,
                    const std::vector<std::string>& optimizer_names, long budget, int n_seeds,
                    int parallel) {
    config::ExperimentConfig base = load_config(opts);
    std::vector<train::OptimizerConfig> optimizers;
    for (const auto& name : optimizer_names)
        optimizers.push_back(train::default_optimizer(train::optimizer_from_string(name)));
    const fs::path dir = harness::resolve_out_dir(opts.out, base, "sweep_alpha");
    json result = harness::sweep_alpha(base, alphas, optimizers, budget, n_seeds, parallel, dir);
    for (const auto& [opt, bracket] : result.at("alpha_c_bracket").items())
        std::printf("%s: alpha_c bracket below=%s at=%s\n", opt.c_str(),
                    bracket.at("below").dump().c_str(), bracket.at("at").dump().c_str());
    std::printf("sweep artifacts -> %s\n", dir.string().c_str());
    return kExitOk;
}

int cmd_sweep_width(const CommonOpts& opts, const std::vector<int>& widths,
                    const std::vector<std::string>& sources, int parallel) {
    config::ExperimentConfig base = load_config(opts);
    const fs::path dir = harness::resolve_out_dir(opts.out, base, "sweep_width");
    json result = harness::sweep_width(base, widths, sources, parallel, dir);
    for (const auto& point : result.at("points")) {
        if (point.contains("median_accuracy"))
            std::printf("N=%d %s: median accuracy %.4f\n", point.at("N").get<int>(),
                        point.at("source").get<std::string>().c_str(),
                        point.at("median_accuracy").get<double>());
        else
            std::printf("N=%d %s: final test acc %s\n", point.at("N").get<int>(),
                        point.at("source").get<std::string>().c_str(),
                        point.at("final_test_acc").dump().c_str());
    }
    std::printf("sweep artifacts -> %s\n", dir.string().c_str());
    return kExitOk;
}

int cmd_eval_activations(const std::string& out, int p, const std::vector<int>& widths,
                         const std::vector<std::string>& activation_names, int n_seeds) {
    std::vector<net::Activation> activations;
    for (const auto& name : activation_names)
        activations.push_back(net::activation_from_string(name));
    config::ExperimentConfig dummy;
    const fs::path dir = harness::resolve_out_dir(out, dummy, "eval_activations");
    json result = harness::eval_analytic_activations(p, widths, activations, n_seeds, dir);
    for (const auto& [act, width] : result.at("width_threshold_for_full_accuracy").items())
        std::printf("%s: first width with median accuracy 1.0 = %s\n", act.c_str(),
                    width.dump().c_str());
    std::printf("table -> %s\n", (dir / "eval_activations.json").string().c_str());
    return kExitOk;
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required) {
    auto* c = cmd->add_option("--config", opts.config_path, "experiment config JSON file");
    if (config_required) c->required();
    cmd->add_option("--out", opts.out, "output directory (default: $MODGROK_OUT/<name>)");
    cmd->add_option("--set", opts.overrides,
                    "config override key=value; dots select nested fields (repeatable)");
    cmd->add_option("--seed", opts.seed, "override both split and init seeds");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-layer MLP grokking lab: modular-arithmetic training, closed-form cosine "
                 "solutions, and spectral diagnostics"};
    app.require_subcommand(1);

    CommonOpts train_opts;
    bool resume = false;
    std::optional<long> extend_epochs;
    auto* train_cmd = app.add_subcommand("train", "train one network and record its trajectory");
    add_common(train_cmd, train_opts, false);
    train_cmd->add_flag("--resume", resume, "continue the run directory given by --out");
    train_cmd->add_option("--extend-epochs", extend_epochs,
                          "with --resume, raise the epoch budget to this value");

    CommonOpts analytic_opts;
    int p_flag = 97, width_flag = 500;
    auto* analytic_cmd =
        app.add_subcommand("analytic", "construct cosine weights and save them as a checkpoint");
    add_common(analytic_cmd, analytic_opts, false);
    analytic_cmd->add_option("--p", p_flag, "modulus when no --config is given (add task)");
    analytic_cmd->add_option("--width", width_flag, "width when no --config is given");

    std::string ckpt_path, analyze_out;
    int bins = 64;
    double margin = 0.1;
    std::vector<std::string> map_specs;
    bool interference = false;
    auto* analyze_cmd =
        app.add_subcommand("analyze", "spectra, phases, and maps for a saved checkpoint");
    analyze_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    analyze_cmd->add_option("--out", analyze_out, "output directory (default: <ckpt dir>/analysis)");
    analyze_cmd->add_option("--bins", bins, "residual histogram bins");
    analyze_cmd->add_option("--margin", margin, "spectral dominance margin");
    analyze_cmd->add_option("--map", map_specs,
                            "preactivation map layer:index, e.g. 2:6 (repeatable)");
    analyze_cmd->add_flag("--interference", interference,
                          "also report the interference ratio on the add task");

    CommonOpts sa_opts;
    std::vector<double> alphas;
    std::vector<std::string> sa_optimizers{"gd", "adamw"};
    long budget = 10000;
    int sa_seeds = 3, sa_parallel = 1;
    auto* sa_cmd = app.add_subcommand("sweep-alpha", "grokking-time curve over the data fraction");
    add_common(sa_cmd, sa_opts, true);
    sa_cmd->add_option("--alphas", alphas, "data fractions, ascending")->required()->delimiter(',');
    sa_cmd->add_option("--optimizers", sa_optimizers, "optimizers (gd|gd_momentum_wd|adamw)")
        ->delimiter(',');
    sa_cmd->add_option("--budget", budget, "epoch budget per run");
    sa_cmd->add_option("--seeds", sa_seeds, "seeds per point");
    sa_cmd->add_option("--parallel", sa_parallel, "concurrent runs");

    CommonOpts sw_opts;
    std::vector<int> widths;
    std::vector<std::string> sources{"analytic"};
    int sw_parallel = 1;
    auto* sw_cmd = app.add_subcommand("sweep-width", "accuracy versus width");
    add_common(sw_cmd, sw_opts, true);
    sw_cmd->add_option("--widths", widths, "widths, ascending")->required()->delimiter(',');
    sw_cmd->add_option("--sources", sources, "analytic|trained_gd|trained_adamw")->delimiter(',');
    sw_cmd->add_option("--parallel", sw_parallel, "concurrent runs");

    std::string ea_out;
    int ea_p = 97, ea_seeds = 5;
    std::vector<int> ea_widths;
    std::vector<std::string> ea_activations{"quadratic", "relu", "gelu"};
    auto* ea_cmd = app.add_subcommand("eval-activations",
                                      "constructed-weight accuracy per activation and width");
    ea_cmd->add_option("--out", ea_out, "output directory");
    ea_cmd->add_option("--p", ea_p, "modulus");
    ea_cmd->add_option("--widths", ea_widths, "widths, ascending")->required()->delimiter(',');
    ea_cmd->add_option("--activations", ea_activations, "quadratic|relu|gelu")->delimiter(',');
    ea_cmd->add_option("--seeds", ea_seeds, "phase seeds per point");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) return cmd_train(train_opts, resume, extend_epochs);
        if (analytic_cmd->parsed()) return cmd_analytic(analytic_opts, p_flag, width_flag);
        if (analyze_cmd->parsed())
            return cmd_analyze(ckpt_path, analyze_out, bins, margin, map_specs, interference);
        if (sa_cmd->parsed())
            return cmd_sweep_alpha(sa_opts, alphas, sa_optimizers, budget, sa_seeds, sa_parallel);
        if (sw_cmd->parsed()) return cmd_sweep_width(sw_opts, widths, sources, sw_parallel);
        if (ea_cmd->parsed())
            return cmd_eval_activations(ea_out, ea_p, ea_widths, ea_activations, ea_seeds);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitError;
    }
    return kExitError;
}
