#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ppap/data.hpp"
#include "ppap/harness.hpp"

namespace ppap {

// Invalid configuration (unknown key, bad type, out-of-range value). The
// message names the offending field path; the CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// one method family and the strengths to sweep (r / c / lambda)
struct MethodVariant {
    std::string name = "none";
    std::vector<double> strengths{0.0};
};

struct ExperimentConfig {
    // run
    std::string run_id = "run";
    std::string protocol = "synthetic"; // sequence | loco | synthetic
    std::string out_dir = "results";
    std::vector<std::uint64_t> seeds{0};
    int workers = 1;
    bool record_walltime = false;

    // model
    std::string arch = "mlp"; // mlp | cnn | cnn6
    std::vector<int> backbone{2, 32, 32};
    std::vector<int> input_shape{3, 32, 32}; // conv archs

    // optimizer
    OptimizerConfig opt;

    // method knobs shared by all variants
    double k = 25.0;
    std::string trigger = "positive"; // positive | absolute
    std::string combine = "min";      // latest | min | product
    double si_xi = 1e-3;
    int ewc_max_samples = 4000;
    std::vector<MethodVariant> variants{{"none", {0.0}}};

    // tasks
    std::string dataset = "cluster"; // cluster | moons | hier | cifar | cifar100
    std::string cifar_dir;
    int n_tasks = 2;
    int classes_per_task = 8;
    double radius = 2.0;
    double sigma = 0.45;
    int n_train_per = 96;
    int n_val_per = 24;
    double moons_degrees = 180.0;
    double moons_noise = 0.1;
    int epochs = 200;
    int batch = 32;
    std::vector<int> holdouts; // loco; empty = every superclass
    int pretrain_epochs = 20;
    int finetune_epochs = 20;
    int pre_batch = 64;
    int ft_batch = 2;
    HierSpec hier;
    bool aug_crop = false;
    bool aug_hflip = false;

    // probe
    ProbeSettings probe;

    // report
    std::string csv_name = "metrics.csv";
    bool charts = true;

    MethodConfig method_config(const std::string& name, double strength) const;
};

// Parses a JSON config; unknown keys, type mismatches and out-of-range values
// raise ConfigError naming the field path. Missing keys take defaults.
ExperimentConfig parse_config(const std::string& json_text);

// parse_config over the file, then PPAP_<SECTION>__<KEY> environment
// overrides, then validation
ExperimentConfig load_config(const std::string& path);

// effective config (defaults resolved) as JSON; loading it back is identity
std::string dump_config(const ExperimentConfig& cfg);

// atomic write of dump_config
void write_effective_config(const ExperimentConfig& cfg, const std::string& path);

} // namespace ppap
