#include "ppap/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <thread>

namespace ppap {

namespace {

struct CellOut {
    std::vector<CsvRow> rows;
    std::vector<std::string> profile_paths;
};

std::string strength_tag(double s) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", s);
    return buf;
}

// consecutive 20-class chunk of cifar100 fine labels as one task
TaskSpec cifar100_chunk(const Dataset& train_split, const Dataset& val_split, int chunk, int task_index,
                        const ExperimentConfig& cfg) {
    TaskSpec t;
    t.task_id = "task" + std::to_string(task_index);
    t.head_name = t.task_id;
    t.n_classes = 20;
    t.epochs = cfg.epochs;
    t.batch = cfg.batch;
    t.aug_crop = cfg.aug_crop;
    t.aug_hflip = cfg.aug_hflip;
    const int lo = 20 * chunk, hi = 20 * (chunk + 1);
    auto build = [&](const Dataset& src, Tensor& x, std::vector<int>& y) {
        std::vector<int> idx;
        for (int i = 0; i < src.n(); ++i) {
            const int lbl = src.labels[static_cast<std::size_t>(i)];
            if (lbl >= lo && lbl < hi) idx.push_back(i);
        }
        const std::size_t row = src.x.data.size() / static_cast<std::size_t>(src.n());
        std::vector<int> shape = src.x.shape;
        shape[0] = static_cast<int>(idx.size());
        x = Tensor::zeros(shape);
        y.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const auto s = static_cast<std::size_t>(idx[i]);
            std::copy_n(src.x.data.begin() + static_cast<std::ptrdiff_t>(s * row), row,
                        x.data.begin() + static_cast<std::ptrdiff_t>(i * row));
            y[i] = src.labels[s] - lo;
        }
    };
    build(train_split, t.x_train, t.y_train);
    build(val_split, t.x_val, t.y_val);
    return t;
}

Dataset load_cifar10_train(const std::string& dir) {
    Dataset all;
    for (int b = 1; b <= 5; ++b) {
        Dataset d = load_cifar(dir + "/data_batch_" + std::to_string(b) + ".bin", CifarVariant::cifar10,
                               kCifarSeqMean, kCifarSeqStd);
        if (all.n() == 0) {
            all = std::move(d);
        } else {
            std::vector<int> shape = all.x.shape;
            shape[0] += d.n();
            Tensor merged = Tensor::zeros(shape);
            std::copy(all.x.data.begin(), all.x.data.end(), merged.data.begin());
            std::copy(d.x.data.begin(), d.x.data.end(),
                      merged.data.begin() + static_cast<std::ptrdiff_t>(all.x.data.size()));
            all.x = std::move(merged);
            all.labels.insert(all.labels.end(), d.labels.begin(), d.labels.end());
        }
    }
    return all;
}

} // namespace

RunOutput execute_config(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    const std::string profile_dir = cfg.out_dir + "/profiles";
    fs::create_directories(profile_dir);

    // expanded (variant, strength) list shared by all protocols
    std::vector<std::pair<std::string, double>> sweeps;
    for (const auto& v : cfg.variants) {
        if (v.name == "none") {
            sweeps.emplace_back("none", 0.0);
        } else {
            for (double s : v.strengths) sweeps.emplace_back(v.name, s);
        }
    }

    // heavyweight shared inputs, loaded once
    std::map<std::string, Dataset> shared;
    if (cfg.protocol == "sequence") {
        shared["c10"] = load_cifar10_train(cfg.cifar_dir);
        shared["c100"] = load_cifar(cfg.cifar_dir + "/train.bin", CifarVariant::cifar100, kCifarSeqMean,
                                    kCifarSeqStd);
    } else if (cfg.protocol == "loco" && cfg.dataset == "cifar100") {
        shared["c100"] = load_cifar(cfg.cifar_dir + "/train.bin", CifarVariant::cifar100, kCifarLocoMean,
                                    kCifarLocoStd);
    }

    std::vector<std::function<CellOut()>> cells;

    if (cfg.protocol == "synthetic" || cfg.protocol == "sequence") {
        // model shape is protocol-wide
        ModelSpec mspec;
        if (cfg.protocol == "synthetic") {
            std::vector<int> heads(static_cast<std::size_t>(cfg.n_tasks),
                                   cfg.dataset == "moons" ? 2 : cfg.classes_per_task);
            mspec = build_mlp_multihead(cfg.backbone, heads);
        } else {
            std::vector<int> heads{10, 20, 20, 20, 20, 20};
            mspec = cfg.arch == "cnn6" ? build_cnn6(cfg.input_shape, heads)
                                       : build_cnn_multihead(cfg.input_shape, heads);
        }

        for (std::uint64_t seed : cfg.seeds) {
            for (const auto& [name, strength] : sweeps) {
                cells.push_back([&cfg, &shared, mspec, seed, name = name, strength = strength,
                                 profile_dir]() -> CellOut {
                    std::vector<TaskSpec> tasks;
                    if (cfg.dataset == "cluster") {
                        tasks = gen_cluster_split(seed, cfg.n_tasks, cfg.classes_per_task, cfg.radius,
                                                  cfg.sigma, cfg.n_train_per, cfg.n_val_per, cfg.epochs,
                                                  cfg.batch);
                    } else if (cfg.dataset == "moons") {
                        tasks = gen_moons_rotation(seed, cfg.n_tasks, cfg.moons_degrees, cfg.moons_noise,
                                                   cfg.n_train_per, cfg.n_val_per, cfg.epochs, cfg.batch);
                    } else {
                        SplitPlan plan;
                        plan.seed = seed;
                        plan.fractions = {0.8, 0.2};
                        const auto s10 = make_task_splits(shared.at("c10"), plan);
                        TaskSpec t0;
                        t0.task_id = "task0";
                        t0.head_name = "task0";
                        t0.n_classes = 10;
                        t0.epochs = cfg.epochs;
                        t0.batch = cfg.batch;
                        t0.aug_crop = cfg.aug_crop;
                        t0.aug_hflip = cfg.aug_hflip;
                        t0.x_train = s10[0].x;
                        t0.y_train = s10[0].labels;
                        t0.x_val = s10[1].x;
                        t0.y_val = s10[1].labels;
                        tasks.push_back(std::move(t0));
                        const auto s100 = make_task_splits(shared.at("c100"), plan);
                        for (int c = 0; c < 5; ++c)
                            tasks.push_back(cifar100_chunk(s100[0], s100[1], c, c + 1, cfg));
                    }

                    Model model(mspec, stream_id("seq-init|" + std::to_string(seed)));
                    const auto out = run_sequence(model, tasks, cfg.method_config(name, strength), cfg.opt,
                                                  cfg.run_id, seed, cfg.record_walltime);
                    CellOut cell;
                    cell.rows = out.rows;
                    for (const auto& p : out.profiles) {
                        const std::string path = profile_dir + "/" + cfg.run_id + "-" + name +
                                                 strength_tag(strength) + "-s" + std::to_string(seed) + "-" +
                                                 p.task_id() + ".ppap";
                        p.save(path);
                        cell.profile_paths.push_back(path);
                    }
                    return cell;
                });
            }
        }
    } else { // loco
        const int n_super = cfg.dataset == "hier" ? cfg.hier.n_super : 20;
        const int n_fine = cfg.dataset == "hier" ? cfg.hier.n_fine : 5;
        std::vector<int> holdouts = cfg.holdouts;
        if (holdouts.empty())
            for (int h = 0; h < n_super; ++h) holdouts.push_back(h);

        ModelSpec mspec;
        if (cfg.arch == "mlp") {
            mspec = build_mlp_multihead(cfg.backbone, {n_super - 1, n_fine});
        } else {
            mspec = cfg.arch == "cnn6" ? build_cnn6(cfg.input_shape, {n_super - 1, n_fine})
                                       : build_cnn_multihead(cfg.input_shape, {n_super - 1, n_fine});
        }

        for (std::uint64_t seed : cfg.seeds) {
            for (int holdout : holdouts) {
                cells.push_back([&cfg, &shared, mspec, seed, holdout, &sweeps, profile_dir]() -> CellOut {
                    SplitPlan plan;
                    plan.seed = seed;
                    plan.fractions = {0.8, 0.16, 0.04};
                    plan.shuffle = cfg.dataset != "hier"; // generated cells are already iid
                    Dataset local;
                    const Dataset* data;
                    if (cfg.dataset == "hier") {
                        local = gen_hier_gaussians(seed, cfg.hier);
                        data = &local;
                    } else {
                        data = &shared.at("c100");
                    }
                    auto [pre, ft] = make_loco_tasks(*data, holdout, plan, cfg.pretrain_epochs,
                                                     cfg.finetune_epochs, cfg.pre_batch);
                    ft.batch = cfg.ft_batch;
                    if (cfg.dataset == "cifar100") {
                        pre.aug_crop = ft.aug_crop = cfg.aug_crop;
                        pre.aug_hflip = ft.aug_hflip = cfg.aug_hflip;
                    }

                    const MethodConfig shared_mc = cfg.method_config("none", 0.0);
                    const LocoPretrained pt = loco_pretrain(mspec, pre, seed, holdout, shared_mc, cfg.opt);

                    CellOut cell;
                    const std::string ppath = profile_dir + "/" + cfg.run_id + "-s" + std::to_string(seed) +
                                              "-hold" + std::to_string(holdout) + ".ppap";
                    pt.profile.save(ppath);
                    cell.profile_paths.push_back(ppath);

                    for (const auto& [name, strength] : sweeps) {
                        LocoRunConfig rc;
                        rc.run_id = cfg.run_id;
                        rc.method = cfg.method_config(name, strength);
                        rc.opt = cfg.opt;
                        rc.probe = cfg.probe;
                        rc.record_walltime = cfg.record_walltime;
                        const LocoResult res = loco_branch(pt, pre, ft, rc);
                        cell.rows.insert(cell.rows.end(), res.rows.begin(), res.rows.end());
                    }
                    return cell;
                });
            }
        }
    }

    // bounded pool; cell index order defines output order regardless of timing
    std::vector<CellOut> results(cells.size());
    std::vector<std::exception_ptr> errors(cells.size());
    const int workers = std::max(1, std::min<int>(cfg.workers, static_cast<int>(cells.size())));
    std::atomic<std::size_t> next{0};
    auto drain = [&]() {
        for (std::size_t i; (i = next.fetch_add(1)) < cells.size();) {
            try {
                results[i] = cells[i]();
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (workers == 1) {
        drain();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(drain);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    RunOutput out;
    for (auto& r : results) {
        out.rows.insert(out.rows.end(), r.rows.begin(), r.rows.end());
        out.profile_paths.insert(out.profile_paths.end(), r.profile_paths.begin(), r.profile_paths.end());
    }
    return out;
}

} // namespace ppap
