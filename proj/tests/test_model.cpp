#include <doctest.h>

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ppap/loss.hpp"
#include "ppap/model.hpp"
#include "ppap/rng.hpp"

using namespace ppap;

namespace {

Tensor normal_tensor(Rng& rng, const std::vector<int>& shape, double scale) {
    Tensor t = Tensor::zeros(shape);
    for (auto& v : t.data) v = static_cast<float>(rng.normal() * scale);
    return t;
}

} // namespace

TEST_SUITE("model") {

TEST_CASE("mlp parameter count on a 4-8-8-3 stack") {
    Model m(build_mlp({4, 8, 8, 3}), 0);
    CHECK(m.store().trainable_scalars() == 139); // 40 + 72 + 27
    CHECK(m.n_heads() == 1);
    CHECK(m.head_name(0) == "task0");
}

TEST_CASE("multihead routing") {
    Model m(build_mlp_multihead({4, 8, 8}, {3, 5}), 1);
    CHECK(m.n_heads() == 2);
    CHECK(m.head_index("task1") == 1);
    CHECK(m.head_index("nope") == -1);

    Rng rng(2);
    Tensor x = normal_tensor(rng, {2, 4}, 1.0);
    m.activate_head("task0");
    Tensor y0 = m.forward(x);
    CHECK(y0.dim(1) == 3);
    m.activate_head("task1");
    Tensor y1 = m.forward(x);
    CHECK(y1.dim(1) == 5);
    CHECK(m.active_head() == 1);
    CHECK_THROWS_AS(m.activate_head("missing"), std::invalid_argument);

    // reinit touches only the selected head
    auto before = m.store().snapshot_values();
    Rng rinit(77);
    m.reinit_head(1, rinit);
    auto after = m.store().snapshot_values();
    bool backbone_same = true, head1_changed = false;
    for (const auto& [name, t] : before) {
        bool same = t.data == after.at(name).data;
        if (name.rfind("head1", 0) == 0) {
            if (!same) head1_changed = true;
        } else if (!same) {
            backbone_same = false;
        }
    }
    CHECK(backbone_same);
    CHECK(head1_changed);
}

TEST_CASE("features are the backbone output") {
    Model m(build_mlp_multihead({4, 8, 6}, {3}), 3);
    Rng rng(4);
    Tensor x = normal_tensor(rng, {5, 4}, 1.0);
    Tensor f = m.features(x);
    CHECK(f.shape == std::vector<int>{5, 6});
}

TEST_CASE("same seed builds identical weights, different seeds do not") {
    Model a(build_mlp({4, 8, 3}), 9);
    Model b(build_mlp({4, 8, 3}), 9);
    Model c(build_mlp({4, 8, 3}), 10);
    CHECK(a.store().snapshot_values().at("fc0.w").data == b.store().snapshot_values().at("fc0.w").data);
    CHECK(a.store().snapshot_values().at("fc0.w").data != c.store().snapshot_values().at("fc0.w").data);
}

TEST_CASE("backward needs a forward and cannot run twice") {
    Model m(build_mlp({4, 8, 3}), 5);
    Rng rng(6);
    Tensor x = normal_tensor(rng, {2, 4}, 1.0);
    Tensor dlogits;
    Tensor logits = m.forward(x, true);
    softmax_ce(logits, {0, 1}, &dlogits);
    m.backward(dlogits);
    CHECK_THROWS_AS(m.backward(dlogits), std::logic_error);
}

TEST_CASE("cnn builders produce the documented shapes") {
    Model m(build_cnn_multihead({3, 32, 32}, {10, 20}), 1);
    Rng rng(8);
    Tensor x = normal_tensor(rng, {2, 3, 32, 32}, 1.0);
    Tensor f = m.features(x);
    CHECK(f.shape == std::vector<int>{2, 512});
    m.activate_head(1);
    CHECK(m.forward(x).dim(1) == 20);

    Model m6(build_cnn6({3, 32, 32}, {5}), 2);
    Tensor f6 = m6.features(x);
    CHECK(f6.shape == std::vector<int>{2, 128});
    const std::size_t n6 = m6.store().trainable_scalars();
    CHECK(n6 > 400000);
    CHECK(n6 < 700000);
}

TEST_CASE("curvature_raw matches squared per-sample factors on a linear head") {
    // backbone-free model: logits = x W + b
    ModelSpec s;
    s.input_shape = {3};
    s.head_dims = {2};
    s.head_names = {"task0"};
    s.feature_dim = 3;
    Model m(s, 11);

    Rng rng(12);
    Tensor x = normal_tensor(rng, {4, 3}, 1.0);
    std::vector<int> y = {0, 1, 1, 0};

    auto fisher = m.curvature_raw(x, y);
    REQUIRE(fisher.count("head0.w"));
    REQUIRE(fisher.count("head0.b"));

    // independent softmax + squared-factor accumulation
    Tensor logits = m.forward(x);
    std::vector<double> fw(6, 0.0), fb(2, 0.0);
    for (int n = 0; n < 4; ++n) {
        double mx = std::max(logits.at(n, 0), logits.at(n, 1));
        double e0 = std::exp(logits.at(n, 0) - mx), e1 = std::exp(logits.at(n, 1) - mx);
        double z = e0 + e1;
        double d[2] = {e0 / z, e1 / z};
        d[y[static_cast<std::size_t>(n)]] -= 1.0;
        for (int c = 0; c < 2; ++c) {
            fb[static_cast<std::size_t>(c)] += d[c] * d[c];
            for (int j = 0; j < 3; ++j)
                fw[static_cast<std::size_t>(j * 2 + c)] +=
                    d[c] * d[c] * static_cast<double>(x.at(n, j)) * x.at(n, j);
        }
    }
    const auto& gw = fisher.at("head0.w");
    const auto& gb = fisher.at("head0.b");
    REQUIRE(gw.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) CHECK(gw[i] == doctest::Approx(fw[i]).epsilon(1e-4));
    for (std::size_t i = 0; i < 2; ++i) CHECK(gb[i] == doctest::Approx(fb[i]).epsilon(1e-4));
}

TEST_CASE("fd_margins_ok flags near-kink relu inputs") {
    ModelSpec s;
    s.input_shape = {2};
    s.backbone = {{LayerDesc::Kind::dense, 2, 2, 0, 0.0}, {LayerDesc::Kind::relu, 0, 0, 0, 0.0}};
    s.head_dims = {2};
    s.head_names = {"task0"};
    s.feature_dim = 2;
    Model m(s, 13);
    m.store().at("fc0.w").value = Tensor({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
    m.store().at("fc0.b").value = Tensor({2}, {0.0f, 0.0f});

    Tensor far({1, 2}, {1.0f, -1.0f});
    CHECK(fd_margins_ok(m, far, 0.05));
    Tensor near({1, 2}, {0.01f, -1.0f});
    CHECK(!fd_margins_ok(m, near, 0.05));
}

} // TEST_SUITE
