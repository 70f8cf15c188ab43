#include <doctest.h>

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "ppap/harness.hpp"
#include "ppap/loss.hpp"

using namespace ppap;

namespace {

ModelSpec tiny_mlp(int in, int hidden, int classes) {
    return build_mlp({in, hidden, hidden, classes});
}

std::vector<TaskSpec> two_cluster_tasks(std::uint64_t seed, int epochs) {
    return gen_cluster_split(seed, 2, 4, 2.0, 0.3, 40, 20, epochs, 16);
}

bool same_values(const std::map<std::string, Tensor>& a, const std::map<std::string, Tensor>& b) {
    if (a.size() != b.size()) return false;
    for (const auto& [name, t] : a) {
        const auto it = b.find(name);
        if (it == b.end() || !t.same_shape(it->second)) return false;
        if (std::memcmp(t.data.data(), it->second.data.data(), t.size() * sizeof(float)) != 0)
            return false;
    }
    return true;
}

} // namespace

TEST_SUITE("harness") {

TEST_CASE("euclidean score") {
    CHECK(euclidean_score(0.0, 0.0) == 0.0);
    CHECK(euclidean_score(3.0, 4.0) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(euclidean_score(1.0, 1.0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK(euclidean_score(0.803, 0.805) == doctest::Approx(1.1370).epsilon(1e-4));
    CHECK(euclidean_score(0.2, 0.9) == euclidean_score(0.9, 0.2));
}

TEST_CASE("make_optimizer maps kinds") {
    OptimizerConfig oc;
    oc.kind = "adam";
    auto a = make_optimizer(oc);
    CHECK(dynamic_cast<Adam*>(a.get()) != nullptr);
    oc.kind = "sgdm";
    auto s = make_optimizer(oc);
    CHECK(dynamic_cast<SgdMomentum*>(s.get()) != nullptr);
    oc.kind = "lbfgs";
    CHECK_THROWS_WITH_AS(make_optimizer(oc), doctest::Contains("unknown optimizer"),
                         std::invalid_argument);
}

TEST_CASE("evaluate_head scores a hand-built classifier") {
    ModelSpec s;
    s.input_shape = {2};
    s.head_dims = {2};
    s.head_names = {"task0"};
    s.feature_dim = 2;
    Model m(s, 1);
    m.store().at("head0.w").value = Tensor({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
    m.store().at("head0.b").value = Tensor::zeros({2});

    Tensor x = Tensor::zeros({6, 2});
    std::vector<int> y;
    for (int i = 0; i < 6; ++i) {
        const bool first = i % 2 == 0;
        x.at(i, 0) = first ? 2.0f : -2.0f;
        x.at(i, 1) = first ? -2.0f : 2.0f;
        y.push_back(first ? 0 : 1);
    }
    CHECK(evaluate_head(m, "task0", x, y) == 1.0);
    std::vector<int> wrong = {1, 0, 1, 0, 1, 0};
    CHECK(evaluate_head(m, "task0", x, wrong) == 0.0);

    CHECK_THROWS_AS(evaluate_head(m, "task0", Tensor(), {}), std::invalid_argument);
    std::vector<int> short_y = {0};
    CHECK_THROWS_AS(evaluate_head(m, "task0", x, short_y), std::invalid_argument);
}

TEST_CASE("evaluate_head chunks consistently and restores the head") {
    Model m(build_mlp_multihead({3, 8}, {2, 2}), 5);
    Rng rng(6);
    Tensor x = Tensor::zeros({37, 3});
    for (float& v : x.data) v = static_cast<float>(rng.normal());
    std::vector<int> y;
    for (int i = 0; i < 37; ++i) y.push_back(i % 2);

    m.activate_head(1);
    const double whole = evaluate_head(m, "task0", x, y, 512);
    const double pieces = evaluate_head(m, "task0", x, y, 5);
    CHECK(whole == pieces);
    CHECK(m.active_head() == 1); // restored after scoring a different head
}

TEST_CASE("train_task reduces loss and counts steps") {
    auto tasks = two_cluster_tasks(42, 8);
    TaskSpec& task = tasks[0];
    Model m(tiny_mlp(2, 16, 4), 7);

    m.activate_head(task.head_name);
    const double before = softmax_ce(m.forward(task.x_train), task.y_train);
    CHECK(before == doctest::Approx(std::log(4.0)).epsilon(0.5)); // near-uniform at init

    Adam opt(1e-3);
    Rng rng(11);
    TrainStats stats = train_task(m, opt, task, rng);
    // 160 rows, batch 16 -> 10 steps/epoch
    CHECK(stats.steps == 8 * 10);
    CHECK(stats.last_epoch_loss < before * 0.5);
    const double acc = evaluate_head(m, task.head_name, task.x_val, task.y_val);
    CHECK(acc > 0.8);
}

TEST_CASE("train_task validates its schedule") {
    Model m(tiny_mlp(2, 8, 2), 1);
    Adam opt(1e-3);
    Rng rng(1);
    TaskSpec bad;
    bad.task_id = "bad";
    bad.head_name = "task0";
    CHECK_THROWS_WITH_AS(train_task(m, opt, bad, rng), doctest::Contains("no training data"),
                         std::invalid_argument);
    bad.x_train = Tensor::zeros({4, 2});
    bad.y_train = {0};
    CHECK_THROWS_WITH_AS(train_task(m, opt, bad, rng), doctest::Contains("labels"),
                         std::invalid_argument);
    bad.y_train = {0, 1, 0, 1};
    bad.batch = 0;
    CHECK_THROWS_WITH_AS(train_task(m, opt, bad, rng), doctest::Contains("schedule"),
                         std::invalid_argument);
}

TEST_CASE("linear probe separates what the features separate") {
    // backbone-free model: the probe sees raw 2-d points
    ModelSpec s;
    s.input_shape = {2};
    s.head_dims = {2};
    s.head_names = {"task0"};
    s.feature_dim = 2;
    Model m(s, 3);

    Rng gen(8);
    Tensor xtr = Tensor::zeros({80, 2}), xva = Tensor::zeros({40, 2});
    std::vector<int> ytr, yva;
    auto fill = [&](Tensor& x, std::vector<int>& y) {
        for (int i = 0; i < x.dim(0); ++i) {
            const int cls = i % 2;
            x.at(i, 0) = static_cast<float>((cls ? 2.0 : -2.0) + 0.4 * gen.normal());
            x.at(i, 1) = static_cast<float>((cls ? -2.0 : 2.0) + 0.4 * gen.normal());
            y.push_back(cls);
        }
    };
    fill(xtr, ytr);
    fill(xva, yva);

    auto before = m.store().snapshot_values();
    Rng prng(21);
    const double acc = linear_probe(m, xtr, ytr, xva, yva, 2, prng);
    CHECK(acc > 0.9);
    CHECK(same_values(before, m.store().snapshot_values())); // model untouched

    CHECK_THROWS_AS(linear_probe(m, xtr, ytr, xva, yva, 1, prng), std::invalid_argument);
}

TEST_CASE("probe tracks head accuracy on a trained backbone") {
    auto tasks = two_cluster_tasks(13, 30);
    TaskSpec& task = tasks[0];
    Model m(tiny_mlp(2, 24, 4), 17);
    Adam opt(1e-3);
    Rng rng(19);
    train_task(m, opt, task, rng);

    const double head_acc = evaluate_head(m, task.head_name, task.x_val, task.y_val);
    Rng prng(23);
    const double probe_acc =
        linear_probe(m, task.x_train, task.y_train, task.x_val, task.y_val, task.n_classes, prng);
    CHECK(head_acc > 0.85);
    CHECK(std::abs(head_acc - probe_acc) < 0.05);
}

TEST_CASE("run_sequence emits the eval triangle") {
    auto tasks = two_cluster_tasks(29, 4);
    Model m(build_mlp_multihead({2, 16, 16}, {4, 4}), 31);
    MethodConfig mc; // none
    OptimizerConfig oc;
    SequenceOutcome out = run_sequence(m, tasks, mc, oc, "seq-demo", 77);

    REQUIRE(out.rows.size() == 3); // task0 | task0,task1
    CHECK(out.profiles.empty());
    CHECK(out.rows[0].stage == "after_task0");
    CHECK(out.rows[0].task_id == "task0");
    CHECK(out.rows[1].stage == "after_task1");
    CHECK(out.rows[1].task_id == "task0");
    CHECK(out.rows[2].stage == "after_task1");
    CHECK(out.rows[2].task_id == "task1");
    for (const auto& r : out.rows) {
        CHECK(r.run_id == "seq-demo");
        CHECK(r.method == "none");
        CHECK(r.seed == 77);
        CHECK(r.euclidean < 0.0);
        CHECK(r.wall_seconds == 0.0); // walltime recording off
        CHECK(r.accuracy >= 0.0);
        CHECK(r.accuracy <= 1.0);
    }

    CHECK_THROWS_AS(run_sequence(m, {}, mc, oc, "x", 1), std::invalid_argument);
    MethodConfig badm;
    badm.method = "dreams";
    CHECK_THROWS_WITH_AS(run_sequence(m, tasks, badm, oc, "x", 1), doctest::Contains("unknown method"),
                         std::invalid_argument);
}

TEST_CASE("passive observers keep training identical") {
    auto tasks = two_cluster_tasks(37, 4);
    OptimizerConfig oc;

    auto run_with = [&](const MethodConfig& mc) {
        Model m(build_mlp_multihead({2, 16, 16}, {4, 4}), 41);
        return run_sequence(m, tasks, mc, oc, "probe", 9);
    };
    MethodConfig none;
    MethodConfig ppap_r1;
    ppap_r1.method = "ppap";
    ppap_r1.strength = 1.0; // keep the raw update exactly
    MethodConfig si0;
    si0.method = "si";
    si0.strength = 0.0;
    MethodConfig ewc0;
    ewc0.method = "ewc";
    ewc0.strength = 0.0;

    SequenceOutcome base = run_with(none);
    SequenceOutcome r1 = run_with(ppap_r1);
    SequenceOutcome s0 = run_with(si0);
    SequenceOutcome e0 = run_with(ewc0);

    REQUIRE(r1.rows.size() == base.rows.size());
    for (std::size_t i = 0; i < base.rows.size(); ++i) {
        CHECK(r1.rows[i].accuracy == base.rows[i].accuracy);
        CHECK(s0.rows[i].accuracy == base.rows[i].accuracy);
        CHECK(e0.rows[i].accuracy == base.rows[i].accuracy);
    }
    CHECK(r1.profiles.size() == 2); // ppap still measured both tasks
    CHECK(r1.profiles[0].task_id() == "task0");
    CHECK(r1.profiles[1].task_id() == "task1");
}

TEST_CASE("one-shot loco equals pretrain plus branch") {
    HierSpec spec;
    spec.n_super = 4;
    spec.n_fine = 2;
    spec.n_per = 15;
    spec.dim = 8;
    Dataset d = gen_hier_gaussians(51, spec);
    SplitPlan plan;
    plan.seed = 51;
    plan.fractions = {0.8, 0.2};
    plan.shuffle = false;
    auto [pre, ft] = make_loco_tasks(d, 1, plan, 4, 4, 16);
    ModelSpec mspec = build_mlp_multihead({8, 16}, {pre.n_classes, ft.n_classes});

    LocoRunConfig cfg;
    cfg.run_id = "loco-demo";
    cfg.method.method = "ppap";
    cfg.method.strength = 0.2;
    cfg.probe.max_epochs = 30;

    LocoResult oneshot = run_loco(mspec, pre, ft, 3, 1, cfg);
    LocoPretrained pt = loco_pretrain(mspec, pre, 3, 1, cfg.method, cfg.opt);
    LocoResult branch = loco_branch(pt, pre, ft, cfg);

    CHECK(oneshot.pretrain_end == branch.pretrain_end);
    CHECK(oneshot.finetune_end == branch.finetune_end);
    CHECK(oneshot.degraded == branch.degraded);
    CHECK(oneshot.probe_acc == branch.probe_acc);
    CHECK(oneshot.euclid == branch.euclid);
    REQUIRE(oneshot.rows.size() == 4);
    CHECK(oneshot.rows[0].stage == "pretrain_end");
    CHECK(oneshot.rows[1].stage == "finetune_end");
    CHECK(oneshot.rows[2].stage == "degraded");
    CHECK(oneshot.rows[3].stage == "probe");
    CHECK(oneshot.rows[3].euclidean ==
          doctest::Approx(euclidean_score(oneshot.probe_acc, oneshot.finetune_end)).epsilon(1e-12));
    CHECK(oneshot.rows[0].euclidean < 0.0);

    // branches are isolated: running another method first changes nothing
    LocoRunConfig other = cfg;
    other.method.method = "si";
    other.method.strength = 0.05;
    (void)loco_branch(pt, pre, ft, other);
    LocoResult again = loco_branch(pt, pre, ft, cfg);
    CHECK(again.finetune_end == branch.finetune_end);
    CHECK(again.probe_acc == branch.probe_acc);

    // shared pretrain state does not depend on the branch method
    LocoPretrained pt2 = loco_pretrain(mspec, pre, 3, 1, other.method, other.opt);
    CHECK(same_values(pt.theta_pre, pt2.theta_pre));
}

} // TEST_SUITE
