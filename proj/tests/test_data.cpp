#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "ppap/data.hpp"
#include "ppap/fsio.hpp"

using namespace ppap;

namespace {

std::filesystem::path tmp_path(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

// labels i%classes, x rows tagged with their original index for tracking
Dataset tagged_dataset(int n, int classes, bool with_coarse = false, int n_super = 2) {
    Dataset d;
    d.x = Tensor::zeros({n, 2});
    for (int i = 0; i < n; ++i) {
        d.x.at(i, 0) = static_cast<float>(i);
        d.x.at(i, 1) = static_cast<float>(-i);
    }
    d.labels.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) d.labels[static_cast<std::size_t>(i)] = i % classes;
    if (with_coarse) {
        d.coarse.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) d.coarse[static_cast<std::size_t>(i)] = (i / classes) % n_super;
    }
    return d;
}

std::string sealed(std::string body) {
    const std::uint32_t crc = crc32(reinterpret_cast<const unsigned char*>(body.data()), body.size());
    for (int i = 0; i < 4; ++i) body.push_back(static_cast<char>((crc >> (8 * i)) & 0xff));
    return body;
}

float at4(const Tensor& t, int n, int c, int h, int w) {
    const std::size_t idx =
        ((static_cast<std::size_t>(n) * static_cast<std::size_t>(t.dim(1)) + static_cast<std::size_t>(c)) *
             static_cast<std::size_t>(t.dim(2)) +
         static_cast<std::size_t>(h)) *
            static_cast<std::size_t>(t.dim(3)) +
        static_cast<std::size_t>(w);
    return t.data[idx];
}

} // namespace

TEST_SUITE("data") {

TEST_CASE("cifar10 records decode with per-channel normalization") {
    std::string bytes;
    bytes.push_back(7); // label
    bytes.append(3072, static_cast<char>(0xFF));
    bytes.push_back(3);
    bytes.append(3072, '\0');
    const auto path = tmp_path("ppap-test-c10.bin");
    write_file_atomic(path.string(), bytes);

    Dataset d = load_cifar(path.string(), CifarVariant::cifar10, kCifarSeqMean, kCifarSeqStd);
    CHECK(d.n() == 2);
    CHECK(d.x.shape == std::vector<int>{2, 3, 32, 32});
    CHECK(d.labels == std::vector<int>{7, 3});
    CHECK(d.coarse.empty());
    // pixel 255 -> (1 - mean) / std per channel
    CHECK(at4(d.x, 0, 0, 0, 0) == doctest::Approx((1.0 - 0.5071) / 0.2675).epsilon(1e-5));
    CHECK(at4(d.x, 0, 1, 5, 9) == doctest::Approx((1.0 - 0.4867) / 0.2565).epsilon(1e-5));
    CHECK(at4(d.x, 0, 2, 31, 31) == doctest::Approx((1.0 - 0.4408) / 0.2761).epsilon(1e-5));
    // pixel 0 -> -mean / std
    CHECK(at4(d.x, 1, 0, 0, 0) == doctest::Approx(-0.5071 / 0.2675).epsilon(1e-5));
    std::filesystem::remove(path);
}

TEST_CASE("cifar100 records carry coarse and fine labels") {
    std::string bytes;
    bytes.push_back(5);  // coarse
    bytes.push_back(42); // fine
    bytes.append(3072, static_cast<char>(128));
    const auto path = tmp_path("ppap-test-c100.bin");
    write_file_atomic(path.string(), bytes);

    Dataset d = load_cifar(path.string(), CifarVariant::cifar100, kCifarLocoMean, kCifarLocoStd);
    CHECK(d.n() == 1);
    CHECK(d.coarse == std::vector<int>{5});
    CHECK(d.labels == std::vector<int>{42});
    CHECK(at4(d.x, 0, 0, 0, 0) == doctest::Approx((128.0 / 255.0 - 0.4914) / 0.2470).epsilon(1e-5));
    std::filesystem::remove(path);
}

TEST_CASE("cifar loader reports malformed files") {
    const auto path = tmp_path("ppap-test-cbad.bin");

    std::string bytes(3073, '\0');
    bytes.push_back('\0'); // one stray byte
    write_file_atomic(path.string(), bytes);
    CHECK_THROWS_WITH_AS(load_cifar(path.string(), CifarVariant::cifar10, kCifarSeqMean, kCifarSeqStd),
                         doctest::Contains("not a multiple"), std::runtime_error);

    write_file_atomic(path.string(), "");
    CHECK_THROWS_WITH_AS(load_cifar(path.string(), CifarVariant::cifar10, kCifarSeqMean, kCifarSeqStd),
                         doctest::Contains("is empty"), std::runtime_error);

    std::string badlabel(3073 * 2, '\0');
    badlabel[3073] = 10; // second record's label out of range
    write_file_atomic(path.string(), badlabel);
    CHECK_THROWS_WITH_AS(load_cifar(path.string(), CifarVariant::cifar10, kCifarSeqMean, kCifarSeqStd),
                         doctest::Contains("offset 3073"), std::runtime_error);

    std::string badcoarse(3074, '\0');
    badcoarse[0] = 20;
    write_file_atomic(path.string(), badcoarse);
    CHECK_THROWS_WITH_AS(load_cifar(path.string(), CifarVariant::cifar100, kCifarLocoMean, kCifarLocoStd),
                         doctest::Contains("out of range"), std::runtime_error);
    std::filesystem::remove(path);
}

TEST_CASE("splits apportion exactly by largest remainder") {
    Dataset d = tagged_dataset(1000, 1);
    SplitPlan plan;
    plan.seed = 3;
    plan.fractions = {0.8, 0.16, 0.04};
    plan.stratified = false;
    auto parts = make_task_splits(d, plan);
    REQUIRE(parts.size() == 3);
    CHECK(parts[0].n() == 800);
    CHECK(parts[1].n() == 160);
    CHECK(parts[2].n() == 40);

    // 10 rows over three equal thirds: the first part wins the leftover
    Dataset d10 = tagged_dataset(10, 1);
    SplitPlan thirds;
    thirds.fractions = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    thirds.stratified = false;
    auto p3 = make_task_splits(d10, thirds);
    CHECK(p3[0].n() == 4);
    CHECK(p3[1].n() == 3);
    CHECK(p3[2].n() == 3);
}

TEST_CASE("stratified splits keep per-class ratios exact") {
    Dataset d = tagged_dataset(100, 2); // 50 per class
    SplitPlan plan;
    plan.seed = 7;
    plan.fractions = {0.8, 0.2};
    auto parts = make_task_splits(d, plan);
    CHECK(parts[0].n() == 80);
    CHECK(parts[1].n() == 20);
    int c0 = 0;
    for (int v : parts[0].labels) c0 += v == 0 ? 1 : 0;
    CHECK(c0 == 40);

    // splits are disjoint and cover everything
    std::vector<bool> seen(100, false);
    for (const auto& part : parts)
        for (int i = 0; i < part.n(); ++i) {
            const int tag = static_cast<int>(part.x.at(i, 0));
            CHECK(!seen[static_cast<std::size_t>(tag)]);
            seen[static_cast<std::size_t>(tag)] = true;
        }
    CHECK(std::count(seen.begin(), seen.end(), true) == 100);
}

TEST_CASE("stratification uses joint coarse and fine strata") {
    // 2 super x 2 fine x 8 rows; each (super,fine) cell must split 6/2
    Dataset d;
    d.x = Tensor::zeros({32, 1});
    for (int i = 0; i < 32; ++i) d.x.at(i, 0) = static_cast<float>(i);
    for (int s = 0; s < 2; ++s)
        for (int f = 0; f < 2; ++f)
            for (int j = 0; j < 8; ++j) {
                d.labels.push_back(f);
                d.coarse.push_back(s);
            }
    SplitPlan plan;
    plan.seed = 11;
    plan.fractions = {0.75, 0.25};
    auto parts = make_task_splits(d, plan);
    CHECK(parts[0].n() == 24);
    CHECK(parts[1].n() == 8);
    int cell[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < parts[0].labels.size(); ++i)
        cell[parts[0].coarse[i]][parts[0].labels[i]] += 1;
    for (int s = 0; s < 2; ++s)
        for (int f = 0; f < 2; ++f) CHECK(cell[s][f] == 6);
}

TEST_CASE("splits are seed-deterministic and order-stable") {
    Dataset d = tagged_dataset(60, 3);
    SplitPlan plan;
    plan.seed = 99;
    plan.fractions = {0.5, 0.5};
    auto a = make_task_splits(d, plan);
    auto b = make_task_splits(d, plan);
    CHECK(a[0].labels == b[0].labels);
    CHECK(std::memcmp(a[0].x.data.data(), b[0].x.data.data(), a[0].x.size() * sizeof(float)) == 0);

    plan.seed = 100;
    auto c = make_task_splits(d, plan);
    CHECK(a[0].labels.size() == c[0].labels.size());
    bool differs = std::memcmp(a[0].x.data.data(), c[0].x.data.data(), a[0].x.size() * sizeof(float)) != 0;
    CHECK(differs);

    // rows stay in original dataset order inside each part
    for (const auto& part : a)
        for (int i = 1; i < part.n(); ++i) CHECK(part.x.at(i, 0) > part.x.at(i - 1, 0));
}

TEST_CASE("unshuffled stratified splits take consecutive runs per class") {
    // block layout: rows 0..49 are class 0, rows 50..99 are class 1
    Dataset d;
    d.x = Tensor::zeros({100, 1});
    for (int i = 0; i < 100; ++i) {
        d.x.at(i, 0) = static_cast<float>(i);
        d.labels.push_back(i < 50 ? 0 : 1);
    }
    SplitPlan plan;
    plan.fractions = {0.8, 0.2};
    plan.shuffle = false;
    auto parts = make_task_splits(d, plan);
    CHECK(parts[0].x.at(0, 0) == 0.0f);
    CHECK(parts[0].x.at(39, 0) == 39.0f);
    CHECK(parts[0].x.at(40, 0) == 50.0f);
    CHECK(parts[1].x.at(0, 0) == 40.0f);
    CHECK(parts[1].x.at(10, 0) == 90.0f);
}

TEST_CASE("split plan validation") {
    Dataset d = tagged_dataset(10, 5);
    SplitPlan plan;
    CHECK_THROWS_AS(make_task_splits(d, plan), std::invalid_argument); // no fractions
    plan.fractions = {0.5, 0.6};
    CHECK_THROWS_AS(make_task_splits(d, plan), std::invalid_argument); // sum != 1
    plan.fractions = {1.5, -0.5};
    CHECK_THROWS_AS(make_task_splits(d, plan), std::invalid_argument); // negative
    plan.fractions = {0.4, 0.3, 0.3};
    CHECK_THROWS_WITH_AS(make_task_splits(d, plan), doctest::Contains("fewer than"),
                         std::invalid_argument); // 2 rows per class, 3 parts
}

TEST_CASE("hold-one-out tasks relabel and route heads") {
    HierSpec spec;
    spec.n_super = 4;
    spec.n_fine = 3;
    spec.n_per = 10;
    spec.dim = 10;
    spec.sigma = 0.5;
    Dataset d = gen_hier_gaussians(5, spec);
    SplitPlan plan;
    plan.seed = 5;
    plan.fractions = {0.8, 0.2};
    plan.shuffle = false;

    auto [pre, ft] = make_loco_tasks(d, 2, plan, 7, 9, 16);
    CHECK(pre.task_id == "pre-hold2");
    CHECK(ft.task_id == "ft-hold2");
    CHECK(pre.head_name == "task0");
    CHECK(ft.head_name == "task1");
    CHECK(pre.n_classes == 3);
    CHECK(ft.n_classes == 3);
    CHECK(pre.epochs == 7);
    CHECK(ft.epochs == 9);
    CHECK(pre.batch == 16);

    // 3 remaining supers x 3 fine x 8 train rows; holdout keeps 3 x 8
    CHECK(pre.x_train.dim(0) == 72);
    CHECK(pre.x_val.dim(0) == 18);
    CHECK(ft.x_train.dim(0) == 24);
    CHECK(ft.x_val.dim(0) == 6);
    for (int v : pre.y_train) {
        CHECK(v >= 0);
        CHECK(v < 3); // supers 0,1,3 relabel to 0,1,2
    }
    for (int v : ft.y_train) {
        CHECK(v >= 0);
        CHECK(v < 3);
    }
    // every pretrain class appears
    std::vector<int> hist(3, 0);
    for (int v : pre.y_train) hist[static_cast<std::size_t>(v)] += 1;
    for (int c : hist) CHECK(c == 24);

    CHECK_THROWS_WITH_AS(make_loco_tasks(d, 7, plan, 1, 1, 8), doctest::Contains("out of range"),
                         std::invalid_argument);
    Dataset flat = tagged_dataset(10, 2);
    CHECK_THROWS_AS(make_loco_tasks(flat, 0, plan, 1, 1, 8), std::invalid_argument);
    SplitPlan one;
    one.fractions = {1.0};
    CHECK_THROWS_AS(make_loco_tasks(d, 0, one, 1, 1, 8), std::invalid_argument);
}

TEST_CASE("cluster split interleaves tasks around the ring") {
    auto tasks = gen_cluster_split(17, 2, 8, 2.0, 0.05, 200, 50, 3, 32);
    REQUIRE(tasks.size() == 2);
    for (int t = 0; t < 2; ++t) {
        const auto& task = tasks[static_cast<std::size_t>(t)];
        CHECK(task.task_id == "task" + std::to_string(t));
        CHECK(task.head_name == task.task_id);
        CHECK(task.n_classes == 8);
        CHECK(task.epochs == 3);
        CHECK(task.batch == 32);
        CHECK(task.x_train.shape == std::vector<int>{1600, 2});
        CHECK(task.x_val.shape == std::vector<int>{400, 2});

        // class means sit near radius-2 ring positions with interleaved angles
        for (int c = 0; c < 8; ++c) {
            double sx = 0.0, sy = 0.0;
            int cnt = 0;
            for (int i = 0; i < task.x_train.dim(0); ++i) {
                if (task.y_train[static_cast<std::size_t>(i)] != c) continue;
                sx += task.x_train.at(i, 0);
                sy += task.x_train.at(i, 1);
                ++cnt;
            }
            CHECK(cnt == 200);
            const double ang = 2.0 * std::numbers::pi * (c * 2 + t) / 16.0;
            CHECK(std::abs(sx / cnt - 2.0 * std::cos(ang)) < 0.05);
            CHECK(std::abs(sy / cnt - 2.0 * std::sin(ang)) < 0.05);
        }
    }
    CHECK_THROWS_AS(gen_cluster_split(1, 0, 2, 1.0, 0.1, 10, 5, 1, 8), std::invalid_argument);
    CHECK_THROWS_AS(gen_cluster_split(1, 1, 1, 1.0, 0.1, 10, 5, 1, 8), std::invalid_argument);
}

TEST_CASE("hierarchical gaussians put supers on antipodal axes") {
    HierSpec spec;
    spec.n_super = 6;
    spec.n_fine = 3;
    spec.n_per = 200;
    spec.dim = 12;
    Dataset d = gen_hier_gaussians(23, spec);
    CHECK(d.x.shape == std::vector<int>{6 * 3 * 200, 12});
    CHECK(d.labels.size() == d.x.size() / 12);

    const int s = 3, f = 2;
    const int base = (s * 3 + f) * 200;
    CHECK(d.coarse[static_cast<std::size_t>(base)] == s);
    CHECK(d.labels[static_cast<std::size_t>(base)] == f);

    // sample parity alternates the antipode on axis s
    for (int j = 0; j < 24; ++j) {
        const float v = d.x.at(base + j, s);
        if (j % 2 == 0)
            CHECK(v > 0.0f);
        else
            CHECK(v < 0.0f);
    }

    // fine offset plus the low-margin superclass hint on the fine axes
    for (int fi = 0; fi < 3; ++fi) {
        double mean = 0.0;
        for (int j = 0; j < 200; ++j) mean += d.x.at(base + j, spec.n_super + fi);
        mean /= 200.0;
        const double hint = std::sin((s + 1) * (fi + 1.0)) >= 0.0 ? spec.hint : -spec.hint;
        const double expect = (fi == f ? spec.delta : 0.0) + hint;
        CHECK(std::abs(mean - expect) < 0.35);
    }
    // axes past super+fine stay centered
    double tail = 0.0;
    for (int j = 0; j < 200; ++j) tail += d.x.at(base + j, 11);
    CHECK(std::abs(tail / 200.0) < 0.35);

    HierSpec bad = spec;
    bad.dim = 8; // < 6 + 3
    CHECK_THROWS_AS(gen_hier_gaussians(1, bad), std::invalid_argument);
    bad = spec;
    bad.n_super = 1;
    CHECK_THROWS_AS(gen_hier_gaussians(1, bad), std::invalid_argument);
}

TEST_CASE("ppds cache round-trips bit-exactly") {
    HierSpec spec;
    spec.n_super = 3;
    spec.n_fine = 2;
    spec.n_per = 5;
    spec.dim = 6;
    Dataset d = gen_hier_gaussians(41, spec);
    const auto path = tmp_path("ppap-test-ds.ppds");
    save_ppds(path.string(), d);
    Dataset back = load_ppds(path.string());
    CHECK(back.x.shape == d.x.shape);
    CHECK(std::memcmp(back.x.data.data(), d.x.data.data(), d.x.size() * sizeof(float)) == 0);
    CHECK(back.labels == d.labels);
    CHECK(back.coarse == d.coarse);

    // without coarse labels
    Dataset flat = tagged_dataset(7, 3);
    save_ppds(path.string(), flat);
    Dataset fback = load_ppds(path.string());
    CHECK(fback.coarse.empty());
    CHECK(fback.labels == flat.labels);
    std::filesystem::remove(path);
}

TEST_CASE("ppds loader rejects corrupted files") {
    Dataset d = tagged_dataset(3, 2);
    const auto path = tmp_path("ppap-test-dsbad.ppds");
    save_ppds(path.string(), d);
    const std::string good = read_file(path.string());
    const std::string body = good.substr(0, good.size() - 4);

    auto expect_error = [&](const std::string& bytes, const char* what) {
        write_file_atomic(path.string(), bytes);
        CHECK_THROWS_WITH_AS(load_ppds(path.string()), doctest::Contains(what), std::runtime_error);
    };
    std::string flipped = good;
    flipped[8] = static_cast<char>(flipped[8] ^ 0x11);
    expect_error(flipped, "checksum mismatch");
    expect_error("PPDS", "truncated");
    expect_error(sealed(body.substr(0, body.size() - 2)), "truncated");
    expect_error(sealed(body + std::string(3, '\0')), "trailing bytes");
    std::string magic = body;
    magic[0] = 'Q';
    expect_error(sealed(magic), "bad magic");
    std::string vers = body;
    vers[4] = 9;
    expect_error(sealed(vers), "unsupported version");
    std::filesystem::remove(path);
}

TEST_CASE("crop shifts within the padded frame and zero-fills") {
    Tensor x = Tensor::zeros({1, 1, 4, 4});
    for (int i = 0; i < 16; ++i) x.data[static_cast<std::size_t>(i)] = static_cast<float>(i + 1);

    Tensor same = augment_crop(x, {{0, 0}}, 4);
    CHECK(std::memcmp(same.data.data(), x.data.data(), 16 * sizeof(float)) == 0);

    Tensor down = augment_crop(x, {{1, 0}}, 4); // read one row lower
    CHECK(at4(down, 0, 0, 0, 0) == 5.0f);
    CHECK(at4(down, 0, 0, 2, 3) == 16.0f);
    CHECK(at4(down, 0, 0, 3, 0) == 0.0f); // fell off the source, zero-filled

    Tensor diag = augment_crop(x, {{-1, 2}}, 4);
    CHECK(at4(diag, 0, 0, 0, 0) == 0.0f); // row -1 out of source
    CHECK(at4(diag, 0, 0, 1, 0) == 3.0f); // src row 0, col 2
    CHECK(at4(diag, 0, 0, 1, 2) == 0.0f); // src col 4 out of source

    CHECK_THROWS_AS(augment_crop(x, {{5, 0}}, 4), std::invalid_argument);
    CHECK_THROWS_AS(augment_crop(x, {{0, 0}, {0, 0}}, 4), std::invalid_argument);
    CHECK_THROWS_AS(augment_crop(Tensor::zeros({4, 4}), {{0, 0}}, 4), std::invalid_argument);
}

TEST_CASE("hflip mirrors columns and is an involution") {
    Tensor x = Tensor::zeros({2, 1, 1, 4});
    for (int i = 0; i < 8; ++i) x.data[static_cast<std::size_t>(i)] = static_cast<float>(i);
    Tensor f = augment_hflip(x, {1, 0});
    CHECK(at4(f, 0, 0, 0, 0) == 3.0f);
    CHECK(at4(f, 0, 0, 0, 3) == 0.0f);
    CHECK(at4(f, 1, 0, 0, 0) == 4.0f); // flag 0 leaves the image alone
    Tensor ff = augment_hflip(f, {1, 0});
    CHECK(std::memcmp(ff.data.data(), x.data.data(), 8 * sizeof(float)) == 0);
    CHECK_THROWS_AS(augment_hflip(x, {1}), std::invalid_argument);
}

TEST_CASE("combined augmentation is rng-deterministic") {
    Tensor x = Tensor::zeros({3, 2, 8, 8});
    Rng fill(9);
    for (float& v : x.data) v = static_cast<float>(fill.normal());
    Rng r1(77), r2(77), r3(78);
    Tensor a = augment(x, true, true, r1);
    Tensor b = augment(x, true, true, r2);
    CHECK(std::memcmp(a.data.data(), b.data.data(), a.size() * sizeof(float)) == 0);
    Tensor c = augment(x, true, true, r3);
    CHECK(std::memcmp(a.data.data(), c.data.data(), a.size() * sizeof(float)) != 0);
    // no-op flags return the input untouched
    Tensor d = augment(x, false, false, r1);
    CHECK(std::memcmp(d.data.data(), x.data.data(), x.size() * sizeof(float)) == 0);
}

} // TEST_SUITE
