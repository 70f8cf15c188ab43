#include "ppap/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ppap/loss.hpp"

namespace ppap {

namespace {

Tensor gather_rows(const Tensor& x, const std::vector<std::int64_t>& perm, std::size_t begin,
                   std::size_t end) {
    const int n = x.dim(0);
    const std::size_t row = x.data.size() / static_cast<std::size_t>(n);
    std::vector<int> shape = x.shape;
    shape[0] = static_cast<int>(end - begin);
    Tensor out = Tensor::zeros(shape);
    for (std::size_t i = begin; i < end; ++i) {
        const auto src = static_cast<std::size_t>(perm[i]);
        std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(src * row), row,
                    out.data.begin() + static_cast<std::ptrdiff_t>((i - begin) * row));
    }
    return out;
}

std::vector<int> gather_labels(const std::vector<int>& y, const std::vector<std::int64_t>& perm,
                               std::size_t begin, std::size_t end) {
    std::vector<int> out(end - begin);
    for (std::size_t i = begin; i < end; ++i) out[i - begin] = y[static_cast<std::size_t>(perm[i])];
    return out;
}

std::int64_t count_correct(const Tensor& logits, const std::vector<int>& labels) {
    const int n = logits.dim(0), c = logits.dim(1);
    std::int64_t correct = 0;
    for (int i = 0; i < n; ++i) {
        const float* row = logits.data.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(c);
        int best = 0;
        for (int j = 1; j < c; ++j)
            if (row[j] > row[best]) best = j;
        if (best == labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return correct;
}

void merge_importance(ImportanceMap& total, const ImportanceMap& part) {
    for (const auto& [name, om] : part.omega) {
        auto it = total.omega.find(name);
        if (it == total.omega.end()) {
            total.omega[name] = om;
        } else {
            if (it->second.size() != om.size())
                throw std::runtime_error("importance size mismatch for " + name);
            for (std::size_t i = 0; i < om.size(); ++i) it->second[i] += om[i];
        }
    }
    for (const auto& [name, anchor] : part.anchor) total.anchor[name] = anchor;
}

struct WallClock {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    bool enabled = false;
    double now() const {
        if (!enabled) return 0.0;
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

void check_method(const std::string& m) {
    if (m != "none" && m != "ppap" && m != "si" && m != "ewc")
        throw std::invalid_argument("unknown method '" + m + "' (expected none|ppap|si|ewc)");
}

} // namespace

double euclidean_score(double x, double y) { return std::sqrt(x * x + y * y); }

std::uint64_t stream_id(const std::string& tag) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::unique_ptr<Optimizer> make_optimizer(const OptimizerConfig& oc) {
    if (oc.kind == "adam") return std::make_unique<Adam>(oc.lr, oc.beta1, oc.beta2, oc.eps);
    if (oc.kind == "sgdm") return std::make_unique<SgdMomentum>(oc.lr, oc.momentum);
    throw std::invalid_argument("unknown optimizer kind '" + oc.kind + "' (expected adam|sgdm)");
}

TrainStats train_task(Model& model, Optimizer& opt, const TaskSpec& task, Rng& rng,
                      const TrainHooks& hooks) {
    if (task.x_train.rank() == 0 || task.x_train.dim(0) == 0)
        throw std::invalid_argument("task " + task.task_id + " has no training data");
    const int n = task.x_train.dim(0);
    if (static_cast<std::size_t>(n) != task.y_train.size())
        throw std::invalid_argument("task " + task.task_id + " train labels do not match inputs");
    if (task.batch < 1 || task.epochs < 0)
        throw std::invalid_argument("task " + task.task_id + " has an invalid schedule");
    model.activate_head(task.head_name);

    TrainStats stats;
    const auto batch = static_cast<std::size_t>(task.batch);
    for (int epoch = 0; epoch < task.epochs; ++epoch) {
        const auto perm = rng.permutation(n);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < static_cast<std::size_t>(n); start += batch) {
            const std::size_t end = std::min(start + batch, static_cast<std::size_t>(n));
            Tensor xb = gather_rows(task.x_train, perm, start, end);
            const std::vector<int> yb = gather_labels(task.y_train, perm, start, end);
            if (task.aug_crop || task.aug_hflip) xb = augment(xb, task.aug_crop, task.aug_hflip, rng);

            model.store().zero_grads();
            Tensor dlogits;
            const double loss = softmax_ce(model.forward(xb, true), yb, &dlogits);
            model.backward(dlogits);
            if (hooks.grad_hook) hooks.grad_hook(model.store());
            auto updates = opt.compute_raw_update(model.store());
            opt.apply_update(model.store(), updates, hooks.update_hook);

            if (hooks.accum) {
                model.set_mask_replay(true);
                const double after = softmax_ce(model.forward(xb, true), yb);
                model.set_mask_replay(false);
                hooks.accum->observe(model.store(), opt.last_updates(), after - loss);
            }
            if (hooks.si) hooks.si->observe(model.store(), opt.last_updates());

            epoch_loss += loss * static_cast<double>(end - start);
            ++stats.steps;
        }
        stats.last_epoch_loss = epoch_loss / n;
    }
    return stats;
}

double evaluate_head(Model& model, const std::string& head, const Tensor& x,
                     const std::vector<int>& y, int chunk) {
    if (x.rank() == 0 || x.dim(0) == 0) throw std::invalid_argument("evaluate on empty data");
    if (static_cast<std::size_t>(x.dim(0)) != y.size())
        throw std::invalid_argument("evaluate labels do not match inputs");
    const int prev = model.active_head();
    model.activate_head(head);
    const int n = x.dim(0);
    std::vector<std::int64_t> ident(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) ident[static_cast<std::size_t>(i)] = i;
    std::int64_t correct = 0;
    for (std::size_t start = 0; start < static_cast<std::size_t>(n); start += static_cast<std::size_t>(chunk)) {
        const std::size_t end = std::min(start + static_cast<std::size_t>(chunk), static_cast<std::size_t>(n));
        const Tensor xb = gather_rows(x, ident, start, end);
        const std::vector<int> yb = gather_labels(y, ident, start, end);
        correct += count_correct(model.forward(xb, false), yb);
    }
    model.activate_head(prev);
    return static_cast<double>(correct) / n;
}

double linear_probe(Model& model, const Tensor& x_train, const std::vector<int>& y_train,
                    const Tensor& x_val, const std::vector<int>& y_val, int n_classes,
                    Rng& rng, const ProbeSettings& ps) {
    if (n_classes < 2) throw std::invalid_argument("probe needs at least two classes");
    const Tensor feats_tr = model.features(x_train);
    const Tensor feats_va = model.features(x_val);
    const int n = feats_tr.dim(0);
    const int fd = feats_tr.dim(1);

    ParamStore store;
    DenseLayer head(store, rng, "probe", fd, n_classes);
    Adam opt(ps.lr);

    double best = std::numeric_limits<double>::infinity();
    int wait = 0;
    const auto batch = static_cast<std::size_t>(ps.batch);
    for (int epoch = 0; epoch < ps.max_epochs; ++epoch) {
        const auto perm = rng.permutation(n);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < static_cast<std::size_t>(n); start += batch) {
            const std::size_t end = std::min(start + batch, static_cast<std::size_t>(n));
            const Tensor xb = gather_rows(feats_tr, perm, start, end);
            const std::vector<int> yb = gather_labels(y_train, perm, start, end);
            store.zero_grads();
            Tensor dlogits;
            const double loss = softmax_ce(head.forward(xb, true), yb, &dlogits);
            head.backward(dlogits);
            opt.step(store);
            epoch_loss += loss * static_cast<double>(end - start);
        }
        epoch_loss /= n;
        if (epoch_loss < best - ps.tol) {
            best = epoch_loss;
            wait = 0;
        } else if (++wait >= ps.plateau) {
            break;
        }
    }
    const Tensor logits = head.forward(feats_va, false);
    return static_cast<double>(count_correct(logits, y_val)) / feats_va.dim(0);
}

SequenceOutcome run_sequence(Model& model, const std::vector<TaskSpec>& tasks,
                             const MethodConfig& mc, const OptimizerConfig& oc,
                             const std::string& run_id, std::uint64_t seed,
                             bool record_walltime) {
    check_method(mc.method);
    if (tasks.empty()) throw std::invalid_argument("task sequence is empty");

    SequenceOutcome out;
    WallClock clock;
    clock.enabled = record_walltime;
    Rng train_rng(seed * 7 + 1);

    ImportanceMap total;
    total.method = mc.method == "ewc" ? ImportanceMap::Method::ewc : ImportanceMap::Method::si;
    total.strength = mc.strength;
    total.xi = mc.si_xi;

    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const TaskSpec& task = tasks[t];
        model.activate_head(task.head_name);

        ActivityAccumulator accum(mc.k, mc.trigger);
        SiTracker tracker;
        TrainHooks hooks;
        PlateauProfile combined; // must outlive train_task: the hook holds a pointer
        if (mc.method == "ppap") {
            accum.attach(model.store());
            hooks.accum = &accum;
            if (!out.profiles.empty()) {
                std::vector<const PlateauProfile*> ptrs;
                for (const auto& p : out.profiles) ptrs.push_back(&p);
                combined = combine_profiles(ptrs, mc.combine);
                hooks.update_hook = make_ppap_hook(combined, BlendConfig{mc.strength, 1.0f});
            }
        } else if (mc.method == "si") {
            tracker.attach(model.store());
            hooks.si = &tracker;
            hooks.grad_hook = [&total](ParamStore& ps) { add_penalty_gradient(total, ps); };
        } else if (mc.method == "ewc") {
            hooks.grad_hook = [&total](ParamStore& ps) { add_penalty_gradient(total, ps); };
        }

        auto opt = make_optimizer(oc);
        train_task(model, *opt, task, train_rng, hooks);

        if (mc.method == "ppap") {
            out.profiles.push_back(accum.finalize(task.task_id));
        } else if (mc.method == "si") {
            merge_importance(total, tracker.consolidate(model.store(), mc.si_xi, mc.strength));
        } else if (mc.method == "ewc") {
            Rng frng(stream_id("seq-fisher|" + std::to_string(seed) + "|" + std::to_string(t)));
            merge_importance(total, ewc_fisher(model, task.x_train, task.y_train,
                                               mc.ewc_max_samples, frng, mc.strength));
        }

        for (std::size_t j = 0; j <= t; ++j) {
            CsvRow row;
            row.run_id = run_id;
            row.method = mc.method;
            row.strength = mc.strength;
            row.task_id = tasks[j].task_id;
            row.stage = "after_" + task.task_id;
            row.accuracy = evaluate_head(model, tasks[j].head_name, tasks[j].x_val, tasks[j].y_val);
            row.seed = seed;
            row.wall_seconds = clock.now();
            out.rows.push_back(std::move(row));
        }
    }
    return out;
}

LocoPretrained loco_pretrain(const ModelSpec& mspec, const TaskSpec& pre, std::uint64_t seed,
                             int holdout, const MethodConfig& mc, const OptimizerConfig& oc) {
    const std::string suffix = std::to_string(seed) + "|" + std::to_string(holdout);
    LocoPretrained pt;
    pt.mspec = mspec;
    pt.seed = seed;
    pt.holdout = holdout;

    Model model(mspec, stream_id("init|" + suffix));
    model.activate_head(pre.head_name);

    ActivityAccumulator accum(mc.k, mc.trigger);
    accum.attach(model.store());
    SiTracker tracker;
    tracker.attach(model.store());
    TrainHooks hooks;
    hooks.accum = &accum;
    hooks.si = &tracker;

    Rng pre_rng(stream_id("pre|" + suffix));
    auto opt = make_optimizer(oc);
    train_task(model, *opt, pre, pre_rng, hooks);

    pt.pretrain_end = evaluate_head(model, pre.head_name, pre.x_val, pre.y_val);
    pt.profile = accum.finalize(pre.task_id);
    pt.si_base = tracker.consolidate(model.store(), mc.si_xi, 1.0);
    Rng frng(stream_id("fisher|" + suffix));
    pt.ewc_base = ewc_fisher(model, pre.x_train, pre.y_train, mc.ewc_max_samples, frng, 1.0);
    pt.theta_pre = model.store().snapshot_values();
    return pt;
}

LocoResult loco_branch(const LocoPretrained& pt, const TaskSpec& pre, const TaskSpec& ft,
                       const LocoRunConfig& cfg) {
    check_method(cfg.method.method);
    const std::string suffix = std::to_string(pt.seed) + "|" + std::to_string(pt.holdout);
    const std::string branch =
        suffix + "|" + cfg.method.method + "|" + std::to_string(cfg.method.strength);

    WallClock clock;
    clock.enabled = cfg.record_walltime;

    Model model(pt.mspec, stream_id("init|" + suffix));
    model.store().restore_values(pt.theta_pre);

    TrainHooks hooks;
    ImportanceMap map;
    if (cfg.method.method == "ppap") {
        hooks.update_hook = make_ppap_hook(pt.profile, BlendConfig{cfg.method.strength, 1.0f});
    } else if (cfg.method.method == "si" || cfg.method.method == "ewc") {
        map = cfg.method.method == "si" ? pt.si_base : pt.ewc_base;
        map.strength = cfg.method.strength;
        hooks.grad_hook = [&map](ParamStore& ps) { add_penalty_gradient(map, ps); };
    }

    Rng ft_rng(stream_id("ft|" + branch));
    auto opt = make_optimizer(cfg.opt);
    train_task(model, *opt, ft, ft_rng, hooks);

    LocoResult res;
    res.pretrain_end = pt.pretrain_end;
    res.finetune_end = evaluate_head(model, ft.head_name, ft.x_val, ft.y_val);
    res.degraded = evaluate_head(model, pre.head_name, pre.x_val, pre.y_val);
    Rng probe_rng(stream_id("probe|" + branch));
    res.probe_acc = linear_probe(model, pre.x_train, pre.y_train, pre.x_val, pre.y_val,
                                 pre.n_classes, probe_rng, cfg.probe);
    res.euclid = euclidean_score(res.probe_acc, res.finetune_end);

    auto row = [&](const std::string& stage, const std::string& task_id, double acc, double euc) {
        CsvRow r;
        r.run_id = cfg.run_id;
        r.method = cfg.method.method;
        r.strength = cfg.method.strength;
        r.task_id = task_id;
        r.stage = stage;
        r.accuracy = acc;
        r.euclidean = euc;
        r.seed = pt.seed;
        r.wall_seconds = clock.now();
        return r;
    };
    res.rows.push_back(row("pretrain_end", pre.task_id, res.pretrain_end, -1.0));
    res.rows.push_back(row("finetune_end", ft.task_id, res.finetune_end, -1.0));
    res.rows.push_back(row("degraded", pre.task_id, res.degraded, -1.0));
    res.rows.push_back(row("probe", pre.task_id, res.probe_acc, res.euclid));
    return res;
}

LocoResult run_loco(const ModelSpec& mspec, const TaskSpec& pre, const TaskSpec& ft,
                    std::uint64_t seed, int holdout, const LocoRunConfig& cfg) {
    const LocoPretrained pt = loco_pretrain(mspec, pre, seed, holdout, cfg.method, cfg.opt);
    return loco_branch(pt, pre, ft, cfg);
}

} // namespace ppap
