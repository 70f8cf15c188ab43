#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ppap/baselines.hpp"
#include "ppap/data.hpp"
#include "ppap/model.hpp"
#include "ppap/optim.hpp"
#include "ppap/profile.hpp"
#include "ppap/rng.hpp"

namespace ppap {

// One metrics record; `euclidean < 0` renders as an empty field.
struct CsvRow {
    std::string run_id;
    std::string method;
    double strength = 0.0;
    std::string task_id;
    std::string stage;
    double accuracy = 0.0;
    double euclidean = -1.0;
    std::uint64_t seed = 0;
    double wall_seconds = 0.0;
};

// sqrt(x^2 + y^2): joint adaptation/retention score
double euclidean_score(double x, double y);

// FNV-1a over the tag; purpose-named deterministic substreams so composed
// pipelines and standalone stages draw identical randomness
std::uint64_t stream_id(const std::string& tag);

struct MethodConfig {
    std::string method = "none"; // none | ppap | si | ewc
    double strength = 0.0;       // blend r (ppap), c (si), lambda (ewc)
    double k = 25.0;
    SpikeTrigger trigger = SpikeTrigger::positive;
    CombineRule combine = CombineRule::min;
    double si_xi = 1e-3;
    int ewc_max_samples = 4000;
};

struct OptimizerConfig {
    std::string kind = "adam"; // adam | sgdm
    double lr = 1e-3;
    double momentum = 0.9; // sgdm only
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

std::unique_ptr<Optimizer> make_optimizer(const OptimizerConfig& oc);

// Observers/hooks threaded through a training loop. All are optional and all
// are passive with respect to the rng streams: a run trains identically with
// or without the observers attached.
struct TrainHooks {
    std::function<void(ParamStore&)> grad_hook; // runs after backward, before the optimizer
    UpdateHook update_hook;                     // rewrites raw updates (blend)
    ActivityAccumulator* accum = nullptr;       // needs the same-batch loss delta
    SiTracker* si = nullptr;
};

struct TrainStats {
    double last_epoch_loss = 0.0;
    std::int64_t steps = 0;
};

// Epoch/batch SGD loop over one task: shuffles with `rng`, routes the task's
// head, applies hooks in grad -> update order. When `accum` is set each step
// re-runs the forward pass on the same batch (dropout masks replayed) to
// measure the step's loss change; that pass consumes no randomness.
TrainStats train_task(Model& model, Optimizer& opt, const TaskSpec& task, Rng& rng,
                      const TrainHooks& hooks = {});

// accuracy of `head` on (x, y), evaluated in chunks; restores the previously
// active head before returning
double evaluate_head(Model& model, const std::string& head, const Tensor& x,
                     const std::vector<int>& y, int chunk = 512);

struct ProbeSettings {
    // with Adam each scalar travels roughly lr per step, so the probe needs
    // lr * steps comfortably above the weight scale of a converged head
    double lr = 0.05;
    int batch = 64;
    int max_epochs = 200;
    int plateau = 10;   // epochs without improvement before stopping
    double tol = 1e-4;  // required epoch-loss improvement
};

// Trains a fresh linear head on frozen, cached features and returns its
// validation accuracy. The model's parameters are untouched.
double linear_probe(Model& model, const Tensor& x_train, const std::vector<int>& y_train,
                    const Tensor& x_val, const std::vector<int>& y_val, int n_classes,
                    Rng& rng, const ProbeSettings& ps = {});

// ---- task-sequence protocol ----

struct SequenceOutcome {
    std::vector<CsvRow> rows;
    std::vector<PlateauProfile> profiles; // one per task when method == ppap
};

// Trains `tasks` in order on `model` with a fresh optimizer per task.
// ppap: accumulates every task, trains task t under the combined profile of
// tasks < t. si/ewc: consolidates importances at each task end, penalizes
// later tasks. After each task every seen head is re-evaluated on its own
// validation split ("after_<taskid>" stage rows).
SequenceOutcome run_sequence(Model& model, const std::vector<TaskSpec>& tasks,
                             const MethodConfig& mc, const OptimizerConfig& oc,
                             const std::string& run_id, std::uint64_t seed,
                             bool record_walltime = false);

// ---- hold-one-out protocol ----

// Frozen pretrain state for one (seed, holdout): everything a finetune branch
// needs, computed once. The observers are passive, so this state is identical
// no matter which methods later branch from it. Branches rebuild the model
// from the spec and the init stream, then restore theta_pre, so every branch
// starts from the same model-rng state regardless of branch order.
struct LocoPretrained {
    ModelSpec mspec;
    std::map<std::string, Tensor> theta_pre;
    double pretrain_end = 0.0;
    PlateauProfile profile; // pretrain activity, k/trigger per MethodConfig
    ImportanceMap si_base;  // consolidated at strength 1
    ImportanceMap ewc_base; // fisher at strength 1
    std::uint64_t seed = 0;
    int holdout = 0;
};

LocoPretrained loco_pretrain(const ModelSpec& mspec, const TaskSpec& pre, std::uint64_t seed,
                             int holdout, const MethodConfig& mc, const OptimizerConfig& oc);

struct LocoResult {
    std::vector<CsvRow> rows;
    double pretrain_end = 0.0;  // head0 on pretrain val, before finetune
    double degraded = 0.0;      // head0 on pretrain val, after finetune
    double finetune_end = 0.0;  // head1 on finetune val: adaptation (Y)
    double probe_acc = 0.0;     // fresh linear head on pretrain val: retention (X)
    double euclid = 0.0;        // euclidean_score(X, Y)
};

struct LocoRunConfig {
    std::string run_id;
    MethodConfig method;
    OptimizerConfig opt;
    ProbeSettings probe;
    bool record_walltime = false;
};

// Rebuilds the model, restores theta_pre, finetunes with the branch's
// method, then measures the degraded head, the new-task accuracy and the
// retention probe. Any number of branches may share one pretrain.
LocoResult loco_branch(const LocoPretrained& pt, const TaskSpec& pre, const TaskSpec& ft,
                       const LocoRunConfig& cfg);

// one-shot pretrain + branch; bit-identical to the shared-pretrain path
LocoResult run_loco(const ModelSpec& mspec, const TaskSpec& pre, const TaskSpec& ft,
                    std::uint64_t seed, int holdout, const LocoRunConfig& cfg);

} // namespace ppap
