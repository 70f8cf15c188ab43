#include "ppap/config.hpp"

#include <cctype>
#include <cstdlib>
#include <set>

#include "json.hpp"

#include "ppap/fsio.hpp"

namespace ppap {

namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void bad(const std::string& path, const std::string& what) {
    throw ConfigError(path + ": " + what);
}

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.count(key))
            throw ConfigError("unknown key: " + (path.empty() ? key : path + "." + key));
    }
}

std::string at(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

void read_str(const json& obj, const std::string& path, const std::string& key, std::string& out) {
    if (!obj.contains(key)) return;
    if (!obj[key].is_string()) bad(at(path, key), "expected a string");
    out = obj[key].get<std::string>();
}

void read_bool(const json& obj, const std::string& path, const std::string& key, bool& out) {
    if (!obj.contains(key)) return;
    if (!obj[key].is_boolean()) bad(at(path, key), "expected a boolean");
    out = obj[key].get<bool>();
}

void read_int(const json& obj, const std::string& path, const std::string& key, int& out) {
    if (!obj.contains(key)) return;
    if (!obj[key].is_number_integer()) bad(at(path, key), "expected an integer");
    out = obj[key].get<int>();
}

void read_num(const json& obj, const std::string& path, const std::string& key, double& out) {
    if (!obj.contains(key)) return;
    if (!obj[key].is_number()) bad(at(path, key), "expected a number");
    out = obj[key].get<double>();
}

void read_ints(const json& obj, const std::string& path, const std::string& key, std::vector<int>& out) {
    if (!obj.contains(key)) return;
    if (!obj[key].is_array()) bad(at(path, key), "expected an array of integers");
    out.clear();
    for (const auto& v : obj[key]) {
        if (!v.is_number_integer()) bad(at(path, key), "expected an array of integers");
        out.push_back(v.get<int>());
    }
}

void read_seeds(const json& obj, const std::string& path, const std::string& key,
                std::vector<std::uint64_t>& out) {
    if (!obj.contains(key)) return;
    if (!obj[key].is_array()) bad(at(path, key), "expected an array of non-negative integers");
    out.clear();
    for (const auto& v : obj[key]) {
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
            bad(at(path, key), "expected an array of non-negative integers");
        out.push_back(v.get<std::uint64_t>());
    }
}

void read_nums(const json& obj, const std::string& path, const std::string& key, std::vector<double>& out) {
    if (!obj.contains(key)) return;
    if (!obj[key].is_array()) bad(at(path, key), "expected an array of numbers");
    out.clear();
    for (const auto& v : obj[key]) {
        if (!v.is_number()) bad(at(path, key), "expected an array of numbers");
        out.push_back(v.get<double>());
    }
}

ExperimentConfig from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config root: expected an object");
    check_keys(j, "", {"run", "model", "optimizer", "method", "tasks", "probe", "report"});
    ExperimentConfig cfg;

    if (j.contains("run")) {
        const auto& o = j["run"];
        if (!o.is_object()) bad("run", "expected an object");
        check_keys(o, "run", {"id", "protocol", "out_dir", "seeds", "workers", "record_walltime"});
        read_str(o, "run", "id", cfg.run_id);
        read_str(o, "run", "protocol", cfg.protocol);
        read_str(o, "run", "out_dir", cfg.out_dir);
        read_seeds(o, "run", "seeds", cfg.seeds);
        read_int(o, "run", "workers", cfg.workers);
        read_bool(o, "run", "record_walltime", cfg.record_walltime);
    }
    if (j.contains("model")) {
        const auto& o = j["model"];
        if (!o.is_object()) bad("model", "expected an object");
        check_keys(o, "model", {"arch", "backbone", "input_shape"});
        read_str(o, "model", "arch", cfg.arch);
        read_ints(o, "model", "backbone", cfg.backbone);
        read_ints(o, "model", "input_shape", cfg.input_shape);
    }
    if (j.contains("optimizer")) {
        const auto& o = j["optimizer"];
        if (!o.is_object()) bad("optimizer", "expected an object");
        check_keys(o, "optimizer", {"kind", "lr", "momentum", "beta1", "beta2", "eps"});
        read_str(o, "optimizer", "kind", cfg.opt.kind);
        read_num(o, "optimizer", "lr", cfg.opt.lr);
        read_num(o, "optimizer", "momentum", cfg.opt.momentum);
        read_num(o, "optimizer", "beta1", cfg.opt.beta1);
        read_num(o, "optimizer", "beta2", cfg.opt.beta2);
        read_num(o, "optimizer", "eps", cfg.opt.eps);
    }
    if (j.contains("method")) {
        const auto& o = j["method"];
        if (!o.is_object()) bad("method", "expected an object");
        check_keys(o, "method", {"k", "trigger", "combine", "si_xi", "ewc_max_samples", "variants"});
        read_num(o, "method", "k", cfg.k);
        read_str(o, "method", "trigger", cfg.trigger);
        read_str(o, "method", "combine", cfg.combine);
        read_num(o, "method", "si_xi", cfg.si_xi);
        read_int(o, "method", "ewc_max_samples", cfg.ewc_max_samples);
        if (o.contains("variants")) {
            if (!o["variants"].is_array()) bad("method.variants", "expected an array");
            cfg.variants.clear();
            int i = 0;
            for (const auto& v : o["variants"]) {
                const std::string path = "method.variants[" + std::to_string(i++) + "]";
                if (!v.is_object()) bad(path, "expected an object");
                check_keys(v, path, {"name", "strengths"});
                MethodVariant mv;
                mv.strengths.clear();
                read_str(v, path, "name", mv.name);
                read_nums(v, path, "strengths", mv.strengths);
                cfg.variants.push_back(std::move(mv));
            }
        }
    }
    if (j.contains("tasks")) {
        const auto& o = j["tasks"];
        if (!o.is_object()) bad("tasks", "expected an object");
        check_keys(o, "tasks",
                   {"dataset", "cifar_dir", "n_tasks", "classes_per_task", "radius", "sigma",
                    "n_train_per", "n_val_per", "moons_degrees", "moons_noise", "epochs", "batch",
                    "holdouts", "pretrain_epochs", "finetune_epochs", "pre_batch", "ft_batch",
                    "hier", "aug_crop", "aug_hflip"});
        read_str(o, "tasks", "dataset", cfg.dataset);
        read_str(o, "tasks", "cifar_dir", cfg.cifar_dir);
        read_int(o, "tasks", "n_tasks", cfg.n_tasks);
        read_int(o, "tasks", "classes_per_task", cfg.classes_per_task);
        read_num(o, "tasks", "radius", cfg.radius);
        read_num(o, "tasks", "sigma", cfg.sigma);
        read_int(o, "tasks", "n_train_per", cfg.n_train_per);
        read_int(o, "tasks", "n_val_per", cfg.n_val_per);
        read_num(o, "tasks", "moons_degrees", cfg.moons_degrees);
        read_num(o, "tasks", "moons_noise", cfg.moons_noise);
        read_int(o, "tasks", "epochs", cfg.epochs);
        read_int(o, "tasks", "batch", cfg.batch);
        read_ints(o, "tasks", "holdouts", cfg.holdouts);
        read_int(o, "tasks", "pretrain_epochs", cfg.pretrain_epochs);
        read_int(o, "tasks", "finetune_epochs", cfg.finetune_epochs);
        read_int(o, "tasks", "pre_batch", cfg.pre_batch);
        read_int(o, "tasks", "ft_batch", cfg.ft_batch);
        read_bool(o, "tasks", "aug_crop", cfg.aug_crop);
        read_bool(o, "tasks", "aug_hflip", cfg.aug_hflip);
        if (o.contains("hier")) {
            const auto& h = o["hier"];
            if (!h.is_object()) bad("tasks.hier", "expected an object");
            check_keys(h, "tasks.hier", {"n_super", "n_fine", "n_per", "dim", "r", "delta", "sigma", "hint"});
            read_int(h, "tasks.hier", "n_super", cfg.hier.n_super);
            read_int(h, "tasks.hier", "n_fine", cfg.hier.n_fine);
            read_int(h, "tasks.hier", "n_per", cfg.hier.n_per);
            read_int(h, "tasks.hier", "dim", cfg.hier.dim);
            read_num(h, "tasks.hier", "r", cfg.hier.r);
            read_num(h, "tasks.hier", "delta", cfg.hier.delta);
            read_num(h, "tasks.hier", "sigma", cfg.hier.sigma);
            read_num(h, "tasks.hier", "hint", cfg.hier.hint);
        }
    }
    if (j.contains("probe")) {
        const auto& o = j["probe"];
        if (!o.is_object()) bad("probe", "expected an object");
        check_keys(o, "probe", {"lr", "batch", "max_epochs", "plateau", "tol"});
        read_num(o, "probe", "lr", cfg.probe.lr);
        read_int(o, "probe", "batch", cfg.probe.batch);
        read_int(o, "probe", "max_epochs", cfg.probe.max_epochs);
        read_int(o, "probe", "plateau", cfg.probe.plateau);
        read_num(o, "probe", "tol", cfg.probe.tol);
    }
    if (j.contains("report")) {
        const auto& o = j["report"];
        if (!o.is_object()) bad("report", "expected an object");
        check_keys(o, "report", {"csv", "charts"});
        read_str(o, "report", "csv", cfg.csv_name);
        read_bool(o, "report", "charts", cfg.charts);
    }
    return cfg;
}

void validate(const ExperimentConfig& cfg) {
    auto one_of = [](const std::string& path, const std::string& v, const std::set<std::string>& opts) {
        if (!opts.count(v)) {
            std::string msg = "expected one of {";
            bool first = true;
            for (const auto& o : opts) {
                if (!first) msg += ", ";
                msg += o;
                first = false;
            }
            msg += "}, got '" + v + "'";
            bad(path, msg);
        }
    };

    if (cfg.run_id.empty()) bad("run.id", "must not be empty");
    one_of("run.protocol", cfg.protocol, {"sequence", "loco", "synthetic"});
    if (cfg.out_dir.empty()) bad("run.out_dir", "must not be empty");
    if (cfg.seeds.empty()) bad("run.seeds", "needs at least one seed");
    if (cfg.workers < 1) bad("run.workers", "must be >= 1");

    one_of("model.arch", cfg.arch, {"mlp", "cnn", "cnn6"});
    if (cfg.arch == "mlp") {
        if (cfg.backbone.empty()) bad("model.backbone", "needs at least the input width");
        for (int d : cfg.backbone)
            if (d < 1) bad("model.backbone", "entries must be >= 1");
    } else {
        if (cfg.input_shape.size() != 3) bad("model.input_shape", "expected [channels, height, width]");
        const int div = cfg.arch == "cnn" ? 4 : 8;
        if (cfg.input_shape[1] % div != 0 || cfg.input_shape[2] % div != 0)
            bad("model.input_shape", "height and width must be divisible by " + std::to_string(div));
    }

    one_of("optimizer.kind", cfg.opt.kind, {"adam", "sgdm"});
    if (cfg.opt.lr <= 0) bad("optimizer.lr", "must be > 0");
    if (cfg.opt.momentum < 0 || cfg.opt.momentum >= 1) bad("optimizer.momentum", "must be in [0, 1)");
    if (cfg.opt.beta1 < 0 || cfg.opt.beta1 >= 1) bad("optimizer.beta1", "must be in [0, 1)");
    if (cfg.opt.beta2 < 0 || cfg.opt.beta2 >= 1) bad("optimizer.beta2", "must be in [0, 1)");
    if (cfg.opt.eps <= 0) bad("optimizer.eps", "must be > 0");

    if (cfg.k <= 0) bad("method.k", "must be > 0");
    one_of("method.trigger", cfg.trigger, {"positive", "absolute"});
    one_of("method.combine", cfg.combine, {"latest", "min", "product"});
    if (cfg.si_xi <= 0) bad("method.si_xi", "must be > 0");
    if (cfg.ewc_max_samples < 1) bad("method.ewc_max_samples", "must be >= 1");
    if (cfg.variants.empty()) bad("method.variants", "needs at least one variant");
    for (std::size_t i = 0; i < cfg.variants.size(); ++i) {
        const auto& v = cfg.variants[i];
        const std::string path = "method.variants[" + std::to_string(i) + "]";
        one_of(path + ".name", v.name, {"none", "ppap", "si", "ewc"});
        if (v.name == "none") {
            if (!v.strengths.empty() && !(v.strengths.size() == 1 && v.strengths[0] == 0.0))
                bad(path + ".strengths", "none takes no strengths");
        } else {
            if (v.strengths.empty()) bad(path + ".strengths", "needs at least one strength");
            for (double s : v.strengths) {
                if (v.name == "ppap" && (s < 0.0 || s > 1.0))
                    bad(path + ".strengths", "blend r must be in [0, 1]");
                if (s < 0.0) bad(path + ".strengths", "must be >= 0");
            }
        }
    }

    one_of("tasks.dataset", cfg.dataset, {"cluster", "moons", "hier", "cifar", "cifar100"});
    if (cfg.protocol == "synthetic" && cfg.dataset != "cluster" && cfg.dataset != "moons")
        bad("tasks.dataset", "protocol synthetic expects cluster or moons");
    if (cfg.protocol == "loco" && cfg.dataset != "hier" && cfg.dataset != "cifar100")
        bad("tasks.dataset", "protocol loco expects hier or cifar100");
    if (cfg.protocol == "sequence" && cfg.dataset != "cifar")
        bad("tasks.dataset", "protocol sequence expects cifar");
    if ((cfg.dataset == "cifar" || cfg.dataset == "cifar100") && cfg.cifar_dir.empty())
        bad("tasks.cifar_dir", "required for cifar datasets");
    if (cfg.n_tasks < 1) bad("tasks.n_tasks", "must be >= 1");
    if (cfg.classes_per_task < 2) bad("tasks.classes_per_task", "must be >= 2");
    if (cfg.sigma <= 0) bad("tasks.sigma", "must be > 0");
    if (cfg.n_train_per < 1) bad("tasks.n_train_per", "must be >= 1");
    if (cfg.n_val_per < 1) bad("tasks.n_val_per", "must be >= 1");
    if (cfg.epochs < 1) bad("tasks.epochs", "must be >= 1");
    if (cfg.batch < 1) bad("tasks.batch", "must be >= 1");
    if (cfg.pretrain_epochs < 1) bad("tasks.pretrain_epochs", "must be >= 1");
    if (cfg.finetune_epochs < 1) bad("tasks.finetune_epochs", "must be >= 1");
    if (cfg.pre_batch < 1) bad("tasks.pre_batch", "must be >= 1");
    if (cfg.ft_batch < 1) bad("tasks.ft_batch", "must be >= 1");
    if (cfg.hier.n_super < 2) bad("tasks.hier.n_super", "must be >= 2");
    if (cfg.hier.n_fine < 1) bad("tasks.hier.n_fine", "must be >= 1");
    if (cfg.hier.n_per < 3) bad("tasks.hier.n_per", "must be >= 3");
    if (cfg.hier.dim < cfg.hier.n_super + cfg.hier.n_fine)
        bad("tasks.hier.dim", "must be >= n_super + n_fine");
    if (cfg.hier.sigma <= 0) bad("tasks.hier.sigma", "must be > 0");
    if (cfg.protocol != "loco" && !cfg.holdouts.empty())
        bad("tasks.holdouts", "only meaningful for protocol loco");
    const int n_super = cfg.dataset == "hier" ? cfg.hier.n_super : 20;
    for (int h : cfg.holdouts)
        if (h < 0 || h >= n_super)
            bad("tasks.holdouts", "holdout " + std::to_string(h) + " out of range for " +
                                      std::to_string(n_super) + " superclasses");
    if (cfg.arch == "mlp" && (cfg.dataset == "cluster" || cfg.dataset == "moons") && cfg.backbone.front() != 2)
        bad("model.backbone", "first entry must equal the task input width 2");
    if (cfg.arch == "mlp" && cfg.dataset == "hier" && cfg.backbone.front() != cfg.hier.dim)
        bad("model.backbone", "first entry must equal the task input width " + std::to_string(cfg.hier.dim));
    if ((cfg.dataset == "cifar" || cfg.dataset == "cifar100") && cfg.arch == "mlp")
        bad("model.arch", "cifar datasets need a conv architecture");

    if (cfg.probe.lr <= 0) bad("probe.lr", "must be > 0");
    if (cfg.probe.batch < 1) bad("probe.batch", "must be >= 1");
    if (cfg.probe.max_epochs < 1) bad("probe.max_epochs", "must be >= 1");
    if (cfg.probe.plateau < 1) bad("probe.plateau", "must be >= 1");
    if (cfg.probe.tol < 0) bad("probe.tol", "must be >= 0");

    if (cfg.csv_name.empty()) bad("report.csv", "must not be empty");
}

std::string upper(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

void apply_env_overrides(json& j) {
    static const std::vector<std::pair<std::string, std::vector<std::string>>> schema = {
        {"run", {"id", "protocol", "out_dir", "seeds", "workers", "record_walltime"}},
        {"model", {"arch", "backbone", "input_shape"}},
        {"optimizer", {"kind", "lr", "momentum", "beta1", "beta2", "eps"}},
        {"method", {"k", "trigger", "combine", "si_xi", "ewc_max_samples"}},
        {"tasks",
         {"dataset", "cifar_dir", "n_tasks", "classes_per_task", "radius", "sigma", "n_train_per",
          "n_val_per", "moons_degrees", "moons_noise", "epochs", "batch", "holdouts",
          "pretrain_epochs", "finetune_epochs", "pre_batch", "ft_batch", "aug_crop", "aug_hflip"}},
        {"probe", {"lr", "batch", "max_epochs", "plateau", "tol"}},
        {"report", {"csv", "charts"}},
    };
    for (const auto& [section, keys] : schema) {
        for (const auto& key : keys) {
            const std::string var = "PPAP_" + upper(section) + "__" + upper(key);
            const char* val = std::getenv(var.c_str());
            if (!val) continue;
            json parsed;
            try {
                parsed = json::parse(val);
            } catch (const json::parse_error&) {
                parsed = std::string(val); // bare strings need no quotes
            }
            j[section][key] = parsed;
        }
    }
}

} // namespace

MethodConfig ExperimentConfig::method_config(const std::string& name, double strength) const {
    MethodConfig mc;
    mc.method = name;
    mc.strength = strength;
    mc.k = k;
    mc.trigger = trigger == "absolute" ? SpikeTrigger::absolute : SpikeTrigger::positive;
    mc.combine = combine == "latest"    ? CombineRule::latest
                 : combine == "product" ? CombineRule::product
                                        : CombineRule::min;
    mc.si_xi = si_xi;
    mc.ewc_max_samples = ewc_max_samples;
    return mc;
}

ExperimentConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    ExperimentConfig cfg = from_json(j);
    validate(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    } catch (const std::exception& e) {
        throw ConfigError(std::string("cannot read config: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root: expected an object");
    check_keys(j, "", {"run", "model", "optimizer", "method", "tasks", "probe", "report"});
    apply_env_overrides(j);
    ExperimentConfig cfg = from_json(j);
    validate(cfg);
    return cfg;
}

std::string dump_config(const ExperimentConfig& cfg) {
    json j;
    j["run"] = {{"id", cfg.run_id},
                {"protocol", cfg.protocol},
                {"out_dir", cfg.out_dir},
                {"seeds", cfg.seeds},
                {"workers", cfg.workers},
                {"record_walltime", cfg.record_walltime}};
    j["model"] = {{"arch", cfg.arch}, {"backbone", cfg.backbone}, {"input_shape", cfg.input_shape}};
    j["optimizer"] = {{"kind", cfg.opt.kind}, {"lr", cfg.opt.lr},       {"momentum", cfg.opt.momentum},
                      {"beta1", cfg.opt.beta1}, {"beta2", cfg.opt.beta2}, {"eps", cfg.opt.eps}};
    json variants = json::array();
    for (const auto& v : cfg.variants) variants.push_back({{"name", v.name}, {"strengths", v.strengths}});
    j["method"] = {{"k", cfg.k},
                   {"trigger", cfg.trigger},
                   {"combine", cfg.combine},
                   {"si_xi", cfg.si_xi},
                   {"ewc_max_samples", cfg.ewc_max_samples},
                   {"variants", variants}};
    j["tasks"] = {{"dataset", cfg.dataset},
                  {"cifar_dir", cfg.cifar_dir},
                  {"n_tasks", cfg.n_tasks},
                  {"classes_per_task", cfg.classes_per_task},
                  {"radius", cfg.radius},
                  {"sigma", cfg.sigma},
                  {"n_train_per", cfg.n_train_per},
                  {"n_val_per", cfg.n_val_per},
                  {"moons_degrees", cfg.moons_degrees},
                  {"moons_noise", cfg.moons_noise},
                  {"epochs", cfg.epochs},
                  {"batch", cfg.batch},
                  {"holdouts", cfg.holdouts},
                  {"pretrain_epochs", cfg.pretrain_epochs},
                  {"finetune_epochs", cfg.finetune_epochs},
                  {"pre_batch", cfg.pre_batch},
                  {"ft_batch", cfg.ft_batch},
                  {"hier",
                   {{"n_super", cfg.hier.n_super},
                    {"n_fine", cfg.hier.n_fine},
                    {"n_per", cfg.hier.n_per},
                    {"dim", cfg.hier.dim},
                    {"r", cfg.hier.r},
                    {"delta", cfg.hier.delta},
                    {"sigma", cfg.hier.sigma},
                    {"hint", cfg.hier.hint}}},
                  {"aug_crop", cfg.aug_crop},
                  {"aug_hflip", cfg.aug_hflip}};
    j["probe"] = {{"lr", cfg.probe.lr},
                  {"batch", cfg.probe.batch},
                  {"max_epochs", cfg.probe.max_epochs},
                  {"plateau", cfg.probe.plateau},
                  {"tol", cfg.probe.tol}};
    j["report"] = {{"csv", cfg.csv_name}, {"charts", cfg.charts}};
    return j.dump(2) + "\n";
}

void write_effective_config(const ExperimentConfig& cfg, const std::string& path) {
    write_file_atomic(path, dump_config(cfg));
}

} // namespace ppap
