#include "ppap/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numbers>
#include <stdexcept>

#include "ppap/fsio.hpp"

namespace ppap {

namespace {

Dataset take(const Dataset& d, const std::vector<int>& idx) {
    Dataset out;
    const int n = d.n();
    const std::size_t row = n ? d.x.size() / static_cast<std::size_t>(n) : 0;
    std::vector<int> shape = d.x.shape;
    shape[0] = static_cast<int>(idx.size());
    out.x = Tensor::zeros(shape);
    out.labels.reserve(idx.size());
    if (!d.coarse.empty()) out.coarse.reserve(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto src = static_cast<std::size_t>(idx[i]);
        std::copy_n(d.x.data.begin() + static_cast<std::ptrdiff_t>(src * row), row,
                    out.x.data.begin() + static_cast<std::ptrdiff_t>(i * row));
        out.labels.push_back(d.labels[src]);
        if (!d.coarse.empty()) out.coarse.push_back(d.coarse[src]);
    }
    return out;
}

// largest-remainder apportionment of n into parts by fraction
std::vector<int> apportion(int n, const std::vector<double>& fractions) {
    std::vector<int> counts(fractions.size(), 0);
    std::vector<std::pair<double, std::size_t>> rema;
    int assigned = 0;
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        const double target = fractions[i] * n;
        counts[i] = static_cast<int>(std::floor(target + 1e-9));
        assigned += counts[i];
        rema.emplace_back(target - counts[i], i);
    }
    std::stable_sort(rema.begin(), rema.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int k = 0; k < n - assigned; ++k) counts[rema[static_cast<std::size_t>(k)].second] += 1;
    return counts;
}

} // namespace

Dataset load_cifar(const std::string& path, CifarVariant variant,
                   const std::array<float, 3>& mean, const std::array<float, 3>& stdev) {
    const std::string bytes = read_file(path);
    const std::size_t rec = variant == CifarVariant::cifar10 ? 3073 : 3074;
    if (bytes.size() % rec != 0)
        throw std::runtime_error("cifar format error: " + path + " size " + std::to_string(bytes.size()) +
                                 " is not a multiple of the " + std::to_string(rec) +
                                 "-byte record (partial record at byte offset " +
                                 std::to_string(bytes.size() - bytes.size() % rec) + ")");
    const int n = static_cast<int>(bytes.size() / rec);
    if (n == 0) throw std::runtime_error("cifar format error: " + path + " is empty");
    Dataset d;
    d.x = Tensor::zeros({n, 3, 32, 32});
    d.labels.resize(static_cast<std::size_t>(n));
    if (variant == CifarVariant::cifar100) d.coarse.resize(static_cast<std::size_t>(n));
    const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
    for (int i = 0; i < n; ++i) {
        const unsigned char* r = raw + static_cast<std::size_t>(i) * rec;
        std::size_t off = 0;
        if (variant == CifarVariant::cifar10) {
            if (r[0] > 9)
                throw std::runtime_error("cifar format error: label " + std::to_string(r[0]) +
                                         " out of range at byte offset " + std::to_string(static_cast<std::size_t>(i) * rec));
            d.labels[static_cast<std::size_t>(i)] = r[0];
            off = 1;
        } else {
            if (r[0] > 19 || r[1] > 99)
                throw std::runtime_error("cifar format error: labels (" + std::to_string(r[0]) + "," +
                                         std::to_string(r[1]) + ") out of range at byte offset " +
                                         std::to_string(static_cast<std::size_t>(i) * rec));
            d.coarse[static_cast<std::size_t>(i)] = r[0];
            d.labels[static_cast<std::size_t>(i)] = r[1];
            off = 2;
        }
        float* xp = d.x.data.data() + static_cast<std::size_t>(i) * 3072;
        for (int c = 0; c < 3; ++c) {
            const float m = mean[static_cast<std::size_t>(c)];
            const float s = stdev[static_cast<std::size_t>(c)];
            for (int pix = 0; pix < 1024; ++pix) {
                const float v = static_cast<float>(r[off + static_cast<std::size_t>(c) * 1024 + static_cast<std::size_t>(pix)]) / 255.0f;
                xp[c * 1024 + pix] = (v - m) / s;
            }
        }
    }
    return d;
}

std::vector<Dataset> make_task_splits(const Dataset& d, const SplitPlan& plan) {
    if (plan.fractions.empty()) throw std::invalid_argument("split plan needs fractions");
    double sum = 0.0;
    for (double f : plan.fractions) {
        if (f <= 0.0) throw std::invalid_argument("split fractions must be positive");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("split fractions must sum to 1");
    const int parts = static_cast<int>(plan.fractions.size());
    const int n = d.n();
    Rng rng(plan.seed);

    std::vector<std::vector<int>> part_idx(static_cast<std::size_t>(parts));
    auto deal = [&](std::vector<int>& pool) {
        if (plan.shuffle) {
            const auto perm = rng.permutation(static_cast<std::int64_t>(pool.size()));
            std::vector<int> shuffled(pool.size());
            for (std::size_t i = 0; i < pool.size(); ++i)
                shuffled[i] = pool[static_cast<std::size_t>(perm[i])];
            pool = std::move(shuffled);
        }
        const auto counts = apportion(static_cast<int>(pool.size()), plan.fractions);
        std::size_t at = 0;
        for (int p = 0; p < parts; ++p) {
            for (int k = 0; k < counts[static_cast<std::size_t>(p)]; ++k)
                part_idx[static_cast<std::size_t>(p)].push_back(pool[at++]);
        }
    };

    if (plan.stratified) {
        // joint (coarse, fine) strata where superclasses exist, so each cell
        // keeps its own ratios (and its sample order when not shuffling)
        std::map<std::pair<int, int>, std::vector<int>> groups;
        for (int i = 0; i < n; ++i) {
            const int co = d.coarse.empty() ? 0 : d.coarse[static_cast<std::size_t>(i)];
            groups[{co, d.labels[static_cast<std::size_t>(i)]}].push_back(i);
        }
        for (auto& [cls, pool] : groups) {
            if (static_cast<int>(pool.size()) < parts)
                throw std::invalid_argument("class " + std::to_string(cls.first) + ":" + std::to_string(cls.second) +
                                            " has " + std::to_string(pool.size()) + " samples, fewer than " +
                                            std::to_string(parts) + " split parts");
            deal(pool);
        }
    } else {
        std::vector<int> pool(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
        if (n < parts) throw std::invalid_argument("dataset smaller than split part count");
        deal(pool);
    }

    std::vector<Dataset> out;
    out.reserve(static_cast<std::size_t>(parts));
    for (auto& idx : part_idx) {
        std::sort(idx.begin(), idx.end()); // stable row order regardless of class walk
        out.push_back(take(d, idx));
    }
    return out;
}

std::pair<TaskSpec, TaskSpec> make_loco_tasks(const Dataset& d, int holdout, const SplitPlan& plan,
                                              int pretrain_epochs, int finetune_epochs, int batch) {
    if (d.coarse.empty()) throw std::invalid_argument("hold-one-out needs superclass labels");
    int n_super = 0;
    for (int c : d.coarse) n_super = std::max(n_super, c + 1);
    if (holdout < 0 || holdout >= n_super)
        throw std::invalid_argument("holdout index " + std::to_string(holdout) + " out of range for " +
                                    std::to_string(n_super) + " superclasses");
    const auto splits = make_task_splits(d, plan);
    if (splits.size() < 2) throw std::invalid_argument("hold-one-out needs train and validation fractions");
    const Dataset& tr = splits[0];
    const Dataset& va = splits[1];

    // stable fine-label remap for the held-out superclass
    std::vector<int> fine_ids;
    for (int i = 0; i < d.n(); ++i)
        if (d.coarse[static_cast<std::size_t>(i)] == holdout) fine_ids.push_back(d.labels[static_cast<std::size_t>(i)]);
    std::sort(fine_ids.begin(), fine_ids.end());
    fine_ids.erase(std::unique(fine_ids.begin(), fine_ids.end()), fine_ids.end());
    auto fine_of = [&](int label) {
        const auto it = std::lower_bound(fine_ids.begin(), fine_ids.end(), label);
        return static_cast<int>(it - fine_ids.begin());
    };

    auto build = [&](const Dataset& src, bool pretrain, Tensor& x, std::vector<int>& y) {
        std::vector<int> idx;
        for (int i = 0; i < src.n(); ++i)
            if ((src.coarse[static_cast<std::size_t>(i)] != holdout) == pretrain) idx.push_back(i);
        Dataset sel = take(src, idx);
        x = std::move(sel.x);
        y.resize(sel.labels.size());
        for (std::size_t i = 0; i < sel.labels.size(); ++i)
            y[i] = pretrain ? sel.coarse[i] - (sel.coarse[i] > holdout ? 1 : 0) : fine_of(sel.labels[i]);
    };

    TaskSpec pre, ft;
    pre.task_id = "pre-hold" + std::to_string(holdout);
    pre.head_name = "task0";
    pre.n_classes = n_super - 1;
    pre.epochs = pretrain_epochs;
    pre.batch = batch;
    build(tr, true, pre.x_train, pre.y_train);
    build(va, true, pre.x_val, pre.y_val);

    ft.task_id = "ft-hold" + std::to_string(holdout);
    ft.head_name = "task1";
    ft.n_classes = static_cast<int>(fine_ids.size());
    ft.epochs = finetune_epochs;
    ft.batch = batch;
    build(tr, false, ft.x_train, ft.y_train);
    build(va, false, ft.x_val, ft.y_val);
    return {std::move(pre), std::move(ft)};
}

namespace {

// gaussian blobs at the given centers; per-class block layout, then shuffled
void make_clusters(Rng& rng, const std::vector<std::pair<double, double>>& centers, int n_per,
                   double sigma, Tensor& x, std::vector<int>& y) {
    const int total = static_cast<int>(centers.size()) * n_per;
    x = Tensor::zeros({total, 2});
    y.resize(static_cast<std::size_t>(total));
    int at = 0;
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
        for (int j = 0; j < n_per; ++j, ++at) {
            x.at(at, 0) = static_cast<float>(centers[ci].first + sigma * rng.normal());
            x.at(at, 1) = static_cast<float>(centers[ci].second + sigma * rng.normal());
            y[static_cast<std::size_t>(at)] = static_cast<int>(ci);
        }
    }
    const auto perm = rng.permutation(total);
    Tensor xs = Tensor::zeros(x.shape);
    std::vector<int> ys(y.size());
    for (int i = 0; i < total; ++i) {
        const auto src = static_cast<std::size_t>(perm[static_cast<std::size_t>(i)]);
        xs.at(i, 0) = x.at(static_cast<int>(src), 0);
        xs.at(i, 1) = x.at(static_cast<int>(src), 1);
        ys[static_cast<std::size_t>(i)] = y[src];
    }
    x = std::move(xs);
    y = std::move(ys);
}

} // namespace

std::vector<TaskSpec> gen_cluster_split(std::uint64_t seed, int n_tasks, int classes_per_task,
                                        double radius, double sigma, int n_train_per, int n_val_per,
                                        int epochs, int batch) {
    if (n_tasks < 1 || classes_per_task < 2) throw std::invalid_argument("cluster split needs >=1 task and >=2 classes");
    Rng rng(seed);
    const int total_clusters = n_tasks * classes_per_task;
    std::vector<std::vector<std::pair<double, double>>> centers(static_cast<std::size_t>(n_tasks));
    for (int t = 0; t < n_tasks; ++t) {
        for (int c = 0; c < classes_per_task; ++c) {
            const double ang = 2.0 * std::numbers::pi * (c * n_tasks + t) / total_clusters;
            centers[static_cast<std::size_t>(t)].emplace_back(radius * std::cos(ang), radius * std::sin(ang));
        }
    }
    std::vector<TaskSpec> tasks(static_cast<std::size_t>(n_tasks));
    for (int t = 0; t < n_tasks; ++t)
        make_clusters(rng, centers[static_cast<std::size_t>(t)], n_train_per, sigma,
                      tasks[static_cast<std::size_t>(t)].x_train, tasks[static_cast<std::size_t>(t)].y_train);
    for (int t = 0; t < n_tasks; ++t)
        make_clusters(rng, centers[static_cast<std::size_t>(t)], n_val_per, sigma,
                      tasks[static_cast<std::size_t>(t)].x_val, tasks[static_cast<std::size_t>(t)].y_val);
    for (int t = 0; t < n_tasks; ++t) {
        auto& task = tasks[static_cast<std::size_t>(t)];
        task.task_id = "task" + std::to_string(t);
        task.head_name = "task" + std::to_string(t);
        task.n_classes = classes_per_task;
        task.epochs = epochs;
        task.batch = batch;
    }
    return tasks;
}

std::vector<TaskSpec> gen_moons_rotation(std::uint64_t seed, int n_tasks, double degrees_per_task,
                                         double noise, int n_train_per, int n_val_per,
                                         int epochs, int batch) {
    if (n_tasks < 1) throw std::invalid_argument("moons needs >=1 task");
    Rng rng(seed);
    auto moons = [&](int n_per, double rot, Tensor& x, std::vector<int>& y) {
        x = Tensor::zeros({2 * n_per, 2});
        y.resize(static_cast<std::size_t>(2 * n_per));
        const double cr = std::cos(rot), sr = std::sin(rot);
        for (int i = 0; i < 2 * n_per; ++i) {
            const int cls = i < n_per ? 0 : 1;
            const double t = std::numbers::pi * rng.uniform();
            double px = cls == 0 ? std::cos(t) : 1.0 - std::cos(t);
            double py = cls == 0 ? std::sin(t) : 0.5 - std::sin(t);
            px += noise * rng.normal();
            py += noise * rng.normal();
            x.at(i, 0) = static_cast<float>(cr * px - sr * py);
            x.at(i, 1) = static_cast<float>(sr * px + cr * py);
            y[static_cast<std::size_t>(i)] = cls;
        }
    };
    std::vector<TaskSpec> tasks(static_cast<std::size_t>(n_tasks));
    for (int t = 0; t < n_tasks; ++t) {
        auto& task = tasks[static_cast<std::size_t>(t)];
        const double rot = t * degrees_per_task * std::numbers::pi / 180.0;
        moons(n_train_per, rot, task.x_train, task.y_train);
        moons(n_val_per, rot, task.x_val, task.y_val);
        task.task_id = "task" + std::to_string(t);
        task.head_name = "task" + std::to_string(t);
        task.n_classes = 2;
        task.epochs = epochs;
        task.batch = batch;
    }
    return tasks;
}

Dataset gen_hier_gaussians(std::uint64_t seed, const HierSpec& spec) {
    if (spec.n_super < 2 || spec.n_fine < 1 || spec.n_per < 1)
        throw std::invalid_argument("hierarchy needs >=2 superclasses, >=1 fine class, >=1 sample");
    if (spec.dim < spec.n_super + spec.n_fine)
        throw std::invalid_argument("hierarchy dim must cover superclass and fine axes");
    Rng rng(seed);
    const int total = spec.n_super * spec.n_fine * spec.n_per;
    Dataset d;
    d.x = Tensor::zeros({total, spec.dim});
    d.labels.resize(static_cast<std::size_t>(total));
    d.coarse.resize(static_cast<std::size_t>(total));
    int at = 0;
    for (int s = 0; s < spec.n_super; ++s) {
        std::vector<double> hs(static_cast<std::size_t>(spec.n_fine));
        for (int i = 0; i < spec.n_fine; ++i)
            hs[static_cast<std::size_t>(i)] = std::sin((s + 1) * (i + 1.0)) >= 0.0 ? 1.0 : -1.0;
        for (int f = 0; f < spec.n_fine; ++f) {
            for (int j = 0; j < spec.n_per; ++j, ++at) {
                float* row = d.x.data.data() + static_cast<std::size_t>(at) * static_cast<std::size_t>(spec.dim);
                for (int k = 0; k < spec.dim; ++k) row[k] = static_cast<float>(spec.sigma * rng.normal());
                row[s] += static_cast<float>(j % 2 == 0 ? spec.r : -spec.r);
                row[spec.n_super + f] += static_cast<float>(spec.delta);
                for (int i = 0; i < spec.n_fine; ++i)
                    row[spec.n_super + i] += static_cast<float>(spec.hint * hs[static_cast<std::size_t>(i)]);
                d.labels[static_cast<std::size_t>(at)] = f;
                d.coarse[static_cast<std::size_t>(at)] = s;
            }
        }
    }
    return d;
}

// ---- PPDS cache ----

namespace {

void put_u16d(std::string& b, std::uint16_t v) {
    b.push_back(static_cast<char>(v & 0xFF));
    b.push_back(static_cast<char>((v >> 8) & 0xFF));
}
void put_u32d(std::string& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

constexpr std::uint16_t kPpdsVersion = 1;

struct DsReader {
    const unsigned char* p;
    std::size_t left;
    void need(std::size_t n) const {
        if (left < n) throw std::runtime_error("ppds format error: truncated file");
    }
    std::uint16_t u16() {
        need(2);
        auto v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
        p += 2;
        left -= 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        p += 4;
        left -= 4;
        return v;
    }
    unsigned char u8() {
        need(1);
        unsigned char v = p[0];
        ++p;
        --left;
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        left -= n;
        return s;
    }
};

} // namespace

void save_ppds(const std::string& path, const Dataset& d) {
    std::string b;
    b += "PPDS";
    put_u16d(b, kPpdsVersion);
    b.push_back(static_cast<char>(d.x.rank()));
    for (int dim : d.x.shape) put_u32d(b, static_cast<std::uint32_t>(dim));
    for (float v : d.x.data) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32d(b, bits);
    }
    put_u32d(b, static_cast<std::uint32_t>(d.labels.size()));
    for (int v : d.labels) put_u32d(b, static_cast<std::uint32_t>(v));
    b.push_back(d.coarse.empty() ? '\0' : '\1');
    if (!d.coarse.empty()) {
        put_u32d(b, static_cast<std::uint32_t>(d.coarse.size()));
        for (int v : d.coarse) put_u32d(b, static_cast<std::uint32_t>(v));
    }
    const std::uint32_t crc = crc32(reinterpret_cast<const unsigned char*>(b.data()), b.size());
    put_u32d(b, crc);
    write_file_atomic(path, b);
}

Dataset load_ppds(const std::string& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() < 4 + 2 + 1 + 4)
        throw std::runtime_error("ppds format error: truncated file");
    const std::size_t payload = bytes.size() - 4;
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i)
        stored |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[payload + static_cast<std::size_t>(i)])) << (8 * i);
    if (stored != crc32(reinterpret_cast<const unsigned char*>(bytes.data()), payload))
        throw std::runtime_error("ppds format error: checksum mismatch");
    DsReader r{reinterpret_cast<const unsigned char*>(bytes.data()), payload};
    if (r.str(4) != "PPDS") throw std::runtime_error("ppds format error: bad magic");
    if (r.u16() != kPpdsVersion) throw std::runtime_error("ppds format error: unsupported version");
    const int rank = r.u8();
    std::vector<int> shape;
    for (int i = 0; i < rank; ++i) shape.push_back(static_cast<int>(r.u32()));
    Dataset d;
    d.x = Tensor::zeros(shape);
    for (float& v : d.x.data) {
        const std::uint32_t bits = r.u32();
        std::memcpy(&v, &bits, 4);
    }
    const std::uint32_t nl = r.u32();
    d.labels.resize(nl);
    for (auto& v : d.labels) v = static_cast<int>(r.u32());
    if (r.u8()) {
        const std::uint32_t nc = r.u32();
        d.coarse.resize(nc);
        for (auto& v : d.coarse) v = static_cast<int>(r.u32());
    }
    if (r.left != 0) throw std::runtime_error("ppds format error: trailing bytes");
    return d;
}

// ---- augmentation ----

Tensor augment_crop(const Tensor& x, const std::vector<std::pair<int, int>>& offsets, int pad) {
    if (x.rank() != 4) throw std::invalid_argument("crop expects [n,c,h,w]");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (static_cast<std::size_t>(n) != offsets.size()) throw std::invalid_argument("one offset pair per image required");
    Tensor out = Tensor::zeros(x.shape);
    for (int i = 0; i < n; ++i) {
        const auto [dr, dc] = offsets[static_cast<std::size_t>(i)];
        if (dr < -pad || dr > pad || dc < -pad || dc > pad)
            throw std::invalid_argument("crop offset exceeds padding");
        for (int ch = 0; ch < c; ++ch) {
            const float* src = x.data.data() + ((static_cast<std::size_t>(i) * c + ch) * h) * w;
            float* dst = out.data.data() + ((static_cast<std::size_t>(i) * c + ch) * h) * w;
            for (int r = 0; r < h; ++r) {
                const int sr = r + dr;
                if (sr < 0 || sr >= h) continue;
                for (int cc = 0; cc < w; ++cc) {
                    const int sc = cc + dc;
                    if (sc < 0 || sc >= w) continue;
                    dst[r * w + cc] = src[sr * w + sc];
                }
            }
        }
    }
    return out;
}

Tensor augment_hflip(const Tensor& x, const std::vector<std::uint8_t>& flips) {
    if (x.rank() != 4) throw std::invalid_argument("hflip expects [n,c,h,w]");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (static_cast<std::size_t>(n) != flips.size()) throw std::invalid_argument("one flip flag per image required");
    Tensor out = x;
    for (int i = 0; i < n; ++i) {
        if (!flips[static_cast<std::size_t>(i)]) continue;
        for (int ch = 0; ch < c; ++ch) {
            float* img = out.data.data() + ((static_cast<std::size_t>(i) * c + ch) * h) * w;
            for (int r = 0; r < h; ++r)
                for (int cc = 0; cc < w / 2; ++cc) std::swap(img[r * w + cc], img[r * w + (w - 1 - cc)]);
        }
    }
    return out;
}

Tensor augment(const Tensor& x, bool crop_pad4, bool hflip, Rng& rng) {
    Tensor out = x;
    const int n = x.dim(0);
    if (crop_pad4) {
        std::vector<std::pair<int, int>> offsets(static_cast<std::size_t>(n));
        for (auto& [dr, dc] : offsets) {
            dr = static_cast<int>(rng.below(9)) - 4;
            dc = static_cast<int>(rng.below(9)) - 4;
        }
        out = augment_crop(out, offsets, 4);
    }
    if (hflip) {
        std::vector<std::uint8_t> flips(static_cast<std::size_t>(n));
        for (auto& fl : flips) fl = rng.uniform() < 0.5 ? 1 : 0;
        out = augment_hflip(out, flips);
    }
    return out;
}

} // namespace ppap
