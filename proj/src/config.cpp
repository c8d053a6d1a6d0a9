#include "modgrok/config.hpp"

#include <fstream>

#include "modgrok/errors.hpp"

namespace modgrok::config {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ConfigError("config." + path + ": " + what);
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) { ok = true; break; }
        if (!ok) fail(path.empty() ? it.key() : path + "." + it.key(), "unknown key");
    }
}

template <typename T>
T get_field(const json& obj, const std::string& path, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        fail(path.empty() ? key : path + "." + key, "wrong type");
    }
}

template <typename T>
T require_field(const json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) fail(path.empty() ? key : path + "." + key, "missing");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        fail(path.empty() ? key : path + "." + key, "wrong type");
    }
}

} // namespace

tasks::Table parse_table(const json& spec, int p, const std::string& path) {
    if (spec.is_string()) {
        const std::string name = spec.get<std::string>();
        if (name == "identity") return tasks::identity_table(p);
        if (name == "square") return tasks::square_table(p);
        if (name == "cube") return tasks::cube_table(p);
        fail(path, "unknown map '" + name + "' (identity|square|cube)");
    }
    if (spec.is_object()) {
        check_keys(spec, path, {"affine"});
        if (!spec.contains("affine")) fail(path, "map object must hold 'affine'");
        const json& aff = spec.at("affine");
        check_keys(aff, path + ".affine", {"a", "b"});
        int a = require_field<int>(aff, path + ".affine", "a");
        int b = require_field<int>(aff, path + ".affine", "b");
        return tasks::affine_table(p, a, b);
    }
    if (spec.is_array()) {
        tasks::Table t;
        t.reserve(spec.size());
        for (const auto& v : spec) {
            if (!v.is_number_integer()) fail(path, "table entries must be integers");
            t.push_back(v.get<int>());
        }
        if (static_cast<int>(t.size()) != p) fail(path, "table must have length p");
        for (int v : t)
            if (v < 0 || v >= p) fail(path, "table entries must lie in [0,p)");
        return t;
    }
    fail(path, "expected a map name, an affine object, or an integer array");
}

tasks::ModularTask parse_task(const json& spec) {
    if (!spec.is_object()) fail("task", "must be an object");
    check_keys(spec, "task", {"task", "p", "f1", "f2", "F"});
    const std::string name = require_field<std::string>(spec, "task", "task");
    const int p = require_field<int>(spec, "task", "p");
    if (p < 2) fail("task.p", "modulus must be >= 2");

    auto forbid = [&](std::initializer_list<const char*> keys) {
        for (const char* k : keys)
            if (spec.contains(k)) fail(std::string("task.") + k, "not valid for task '" + name + "'");
    };

    if (name == "add") { forbid({"f1", "f2", "F"}); return tasks::make_add(p); }
    if (name == "sub") { forbid({"f1", "f2", "F"}); return tasks::make_sub(p); }
    if (name == "mul") { forbid({"f1", "f2", "F"}); return tasks::make_mul(p); }
    if (name == "mixed_quadratic") { forbid({"f1", "f2", "F"}); return tasks::make_mixed_quadratic(p); }
    if (name == "mixed_cubic") { forbid({"f1", "f2", "F"}); return tasks::make_mixed_cubic(p); }
    if (name == "general_sum") {
        forbid({"F"});
        if (!spec.contains("f1")) fail("task.f1", "missing");
        if (!spec.contains("f2")) fail("task.f2", "missing");
        return tasks::make_general_sum(p, parse_table(spec.at("f1"), p, "task.f1"),
                                       parse_table(spec.at("f2"), p, "task.f2"));
    }
    if (name == "composed_sum") {
        if (!spec.contains("F")) fail("task.F", "missing");
        tasks::Table f1 = spec.contains("f1") ? parse_table(spec.at("f1"), p, "task.f1")
                                              : tasks::identity_table(p);
        tasks::Table f2 = spec.contains("f2") ? parse_table(spec.at("f2"), p, "task.f2")
                                              : tasks::identity_table(p);
        return tasks::make_composed_sum(p, parse_table(spec.at("F"), p, "task.F"),
                                        std::move(f1), std::move(f2));
    }
    fail("task.task", "unknown task '" + name + "'");
}

ExperimentConfig parse_config(const json& j) {
    if (!j.is_object()) throw ConfigError("config: root must be a JSON object");
    check_keys(j, "", {"schema_version", "task", "N", "activation", "scaling", "optimizer",
                       "alpha", "seeds", "schedule", "out_dir"});
    const int version = get_field<int>(j, "", "schema_version", 1);
    if (version != 1) fail("schema_version", "unsupported version");
    if (!j.contains("task")) fail("task", "missing");

    ExperimentConfig cfg;
    cfg.task_spec = j.at("task");
    cfg.task = parse_task(cfg.task_spec);
    cfg.N = get_field<int>(j, "", "N", cfg.N);
    if (cfg.N < 1) fail("N", "width must be >= 1");
    cfg.activation = net::activation_from_string(
        get_field<std::string>(j, "", "activation", net::to_string(cfg.activation)));
    cfg.scaling = net::scaling_from_string(
        get_field<std::string>(j, "", "scaling", net::to_string(cfg.scaling)));

    if (j.contains("optimizer")) {
        const json& o = j.at("optimizer");
        if (!o.is_object()) fail("optimizer", "must be an object");
        check_keys(o, "optimizer", {"kind", "learning_rate", "momentum", "weight_decay",
                                    "beta1", "beta2", "epsilon"});
        cfg.optimizer = train::default_optimizer(train::optimizer_from_string(
            get_field<std::string>(o, "optimizer", "kind", to_string(cfg.optimizer.kind))));
        cfg.optimizer.learning_rate =
            get_field<double>(o, "optimizer", "learning_rate", cfg.optimizer.learning_rate);
        cfg.optimizer.momentum = get_field<double>(o, "optimizer", "momentum", cfg.optimizer.momentum);
        cfg.optimizer.weight_decay =
            get_field<double>(o, "optimizer", "weight_decay", cfg.optimizer.weight_decay);
        cfg.optimizer.beta1 = get_field<double>(o, "optimizer", "beta1", cfg.optimizer.beta1);
        cfg.optimizer.beta2 = get_field<double>(o, "optimizer", "beta2", cfg.optimizer.beta2);
        cfg.optimizer.epsilon = get_field<double>(o, "optimizer", "epsilon", cfg.optimizer.epsilon);
    }
    try {
        cfg.optimizer.validate();
    } catch (const ConfigError& e) {
        fail("optimizer", e.what());
    }

    cfg.alpha = get_field<double>(j, "", "alpha", cfg.alpha);
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) fail("alpha", "must lie in (0,1)");

    if (j.contains("seeds")) {
        const json& s = j.at("seeds");
        if (!s.is_object()) fail("seeds", "must be an object");
        check_keys(s, "seeds", {"split", "init"});
        cfg.split_seed = get_field<std::uint64_t>(s, "seeds", "split", cfg.split_seed);
        cfg.init_seed = get_field<std::uint64_t>(s, "seeds", "init", cfg.init_seed);
    }

    cfg.schedule.epochs = 10000;
    if (j.contains("schedule")) {
        const json& s = j.at("schedule");
        if (!s.is_object()) fail("schedule", "must be an object");
        check_keys(s, "schedule", {"epochs", "log_every", "ipr_every", "checkpoint_every",
                                   "stop_at_test_acc", "patience"});
        cfg.schedule.epochs = get_field<long>(s, "schedule", "epochs", cfg.schedule.epochs);
        cfg.schedule.log_every = get_field<long>(s, "schedule", "log_every", cfg.schedule.log_every);
        cfg.schedule.ipr_every = get_field<long>(s, "schedule", "ipr_every", cfg.schedule.ipr_every);
        cfg.schedule.checkpoint_every =
            get_field<long>(s, "schedule", "checkpoint_every", cfg.schedule.checkpoint_every);
        cfg.schedule.stop_at_test_acc =
            get_field<double>(s, "schedule", "stop_at_test_acc", cfg.schedule.stop_at_test_acc);
        cfg.schedule.patience = get_field<long>(s, "schedule", "patience", cfg.schedule.patience);
    }
    if (cfg.schedule.epochs < 1) fail("schedule.epochs", "must be >= 1");
    if (cfg.schedule.log_every < 1) fail("schedule.log_every", "must be >= 1");
    if (cfg.schedule.ipr_every < 0) fail("schedule.ipr_every", "must be >= 0");
    if (cfg.schedule.checkpoint_every < 0) fail("schedule.checkpoint_every", "must be >= 0");
    if (!(cfg.schedule.stop_at_test_acc > 0.0)) fail("schedule.stop_at_test_acc", "must be > 0");
    if (cfg.schedule.patience < 0) fail("schedule.patience", "must be >= 0");

    cfg.out_dir = get_field<std::string>(j, "", "out_dir", cfg.out_dir);
    return cfg;
}

json to_json(const ExperimentConfig& cfg) {
    json j = {
        {"schema_version", 1},
        {"task", cfg.task_spec},
        {"N", cfg.N},
        {"activation", net::to_string(cfg.activation)},
        {"scaling", net::to_string(cfg.scaling)},
        {"optimizer",
         {{"kind", to_string(cfg.optimizer.kind)},
          {"learning_rate", cfg.optimizer.learning_rate},
          {"momentum", cfg.optimizer.momentum},
          {"weight_decay", cfg.optimizer.weight_decay},
          {"beta1", cfg.optimizer.beta1},
          {"beta2", cfg.optimizer.beta2},
          {"epsilon", cfg.optimizer.epsilon}}},
        {"alpha", cfg.alpha},
        {"seeds", {{"split", cfg.split_seed}, {"init", cfg.init_seed}}},
        {"schedule",
         {{"epochs", cfg.schedule.epochs},
          {"log_every", cfg.schedule.log_every},
          {"ipr_every", cfg.schedule.ipr_every},
          {"checkpoint_every", cfg.schedule.checkpoint_every},
          {"stop_at_test_acc", cfg.schedule.stop_at_test_acc},
          {"patience", cfg.schedule.patience}}},
    };
    if (!cfg.out_dir.empty()) j["out_dir"] = cfg.out_dir;
    return j;
}

ExperimentConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
    return parse_config(j);
}

void apply_override(json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override '" + assignment + "' must look like key=value");
    std::string key = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);
    for (char& c : key)
        if (c == '.') c = '/';
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::exception&) {
        parsed = value; // unquoted strings stay strings
    }
    try {
        j[json::json_pointer("/" + key)] = parsed;
    } catch (const json::exception& e) {
        throw ConfigError("cannot apply override '" + assignment + "': " + e.what());
    }
}

} // namespace modgrok::config
