#include "ppap/profile.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "ppap/fsio.hpp"

namespace ppap {

double gaussian_scale(double loss_delta, double k) {
    if (k <= 0.0) throw std::invalid_argument("gaussian width k must be positive");
    return std::exp(-k * loss_delta * loss_delta);
}

// ---- PlateauProfile ----

PlateauProfile::PlateauProfile(double k, std::string task_id, std::int64_t steps, std::map<std::string, Tensor> scores)
    : k_(k), task_id_(std::move(task_id)), steps_(steps), scores_(std::move(scores)) {}

const Tensor* PlateauProfile::find(const std::string& name) const {
    auto it = scores_.find(name);
    return it == scores_.end() ? nullptr : &it->second;
}

namespace {

void put_u16(std::string& b, std::uint16_t v) {
    b.push_back(static_cast<char>(v & 0xFF));
    b.push_back(static_cast<char>((v >> 8) & 0xFF));
}
void put_u32(std::string& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_i32(std::string& b, std::int32_t v) { put_u32(b, static_cast<std::uint32_t>(v)); }
void put_f64(std::string& b, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}
void put_f32(std::string& b, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(b, bits);
}

struct Reader {
    const unsigned char* p;
    std::size_t left;
    void need(std::size_t n) const {
        if (left < n) throw std::runtime_error("profile format error: truncated file");
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
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
    double f64() {
        need(8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        p += 8;
        left -= 8;
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        left -= n;
        return s;
    }
    unsigned char u8() {
        need(1);
        unsigned char v = p[0];
        ++p;
        --left;
        return v;
    }
};

constexpr std::uint16_t kProfileVersion = 1;

} // namespace

void PlateauProfile::save(const std::string& path) const {
    std::string b;
    b += "PPAP";
    put_u16(b, kProfileVersion);
    put_f64(b, k_);
    if (task_id_.size() > std::numeric_limits<std::uint16_t>::max())
        throw std::invalid_argument("task id too long");
    put_u16(b, static_cast<std::uint16_t>(task_id_.size()));
    b += task_id_;
    put_u32(b, static_cast<std::uint32_t>(scores_.size()));
    for (const auto& [name, t] : scores_) {
        if (name.size() > std::numeric_limits<std::uint16_t>::max())
            throw std::invalid_argument("parameter name too long: " + name);
        put_u16(b, static_cast<std::uint16_t>(name.size()));
        b += name;
        b.push_back(static_cast<char>(t.rank()));
        for (int d : t.shape) put_i32(b, d);
        for (float v : t.data) put_f32(b, v);
    }
    const std::uint32_t crc = crc32(reinterpret_cast<const unsigned char*>(b.data()), b.size());
    put_u32(b, crc);
    write_file_atomic(path, b);
}

PlateauProfile PlateauProfile::load(const std::string& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() < 4 + 2 + 8 + 2 + 4 + 4) throw std::runtime_error("profile format error: truncated file");
    const std::size_t payload = bytes.size() - 4;
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i)
        stored |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[payload + static_cast<std::size_t>(i)])) << (8 * i);
    const std::uint32_t actual = crc32(reinterpret_cast<const unsigned char*>(bytes.data()), payload);
    if (stored != actual) throw std::runtime_error("profile format error: checksum mismatch");

    Reader r{reinterpret_cast<const unsigned char*>(bytes.data()), payload};
    if (r.str(4) != "PPAP") throw std::runtime_error("profile format error: bad magic");
    const std::uint16_t version = r.u16();
    if (version != kProfileVersion)
        throw std::runtime_error("profile format error: unsupported version " + std::to_string(version));
    const double k = r.f64();
    const std::uint16_t tlen = r.u16();
    std::string task_id = r.str(tlen);
    const std::uint32_t count = r.u32();
    std::map<std::string, Tensor> scores;
    for (std::uint32_t e = 0; e < count; ++e) {
        const std::uint16_t nlen = r.u16();
        std::string name = r.str(nlen);
        const int rank = r.u8();
        std::vector<int> shape;
        for (int i = 0; i < rank; ++i) shape.push_back(static_cast<std::int32_t>(r.u32()));
        const std::size_t numel = shape_numel(shape);
        Tensor t = Tensor::zeros(shape);
        for (std::size_t i = 0; i < numel; ++i) t.data[i] = r.f32();
        scores.emplace(std::move(name), std::move(t));
    }
    if (r.left != 0) throw std::runtime_error("profile format error: trailing bytes");
    return PlateauProfile(k, std::move(task_id), 0, std::move(scores));
}

// ---- ActivityAccumulator ----

ActivityAccumulator::ActivityAccumulator(double k, SpikeTrigger trigger) : k_(k), trigger_(trigger) {
    if (k <= 0.0) throw std::invalid_argument("gaussian width k must be positive");
}

double ActivityAccumulator::sigma_thresh() const {
    return std::sqrt(1.0 / (2.0 * k_));
}

void ActivityAccumulator::attach(const ParamStore& ps) {
    s_.clear();
    mu_.clear();
    ssd_.clear();
    shapes_.clear();
    n_ = 0;
    raw_steps_ = 0;
    finalized_ = false;
    for (const auto& [name, p] : ps.entries()) {
        if (!p.trainable) continue;
        s_[name].assign(p.value.size(), 0.0);
        mu_[name].assign(p.value.size(), 0.0);
        ssd_[name].assign(p.value.size(), 0.0);
        shapes_[name] = p.value.shape;
    }
}

void ActivityAccumulator::observe(const ParamStore& ps, const std::map<std::string, Tensor>& updates, double loss_delta) {
    if (finalized_) throw std::logic_error("accumulator already finalized");
    if (s_.empty()) throw std::logic_error("accumulator not attached");
    const double f = gaussian_scale(loss_delta, k_);

    const bool spike = trigger_ == SpikeTrigger::positive
                           ? loss_delta > sigma_thresh()
                           : std::abs(loss_delta) > sigma_thresh();
    if (spike) {
        const double f2 = f * f;
        for (auto& [name, sv] : s_) {
            auto& dv = ssd_[name];
            for (std::size_t i = 0; i < sv.size(); ++i) {
                sv[i] *= f;
                dv[i] *= f2;
            }
        }
        n_ = static_cast<std::int64_t>(std::ceil(static_cast<double>(n_) * f));
    }

    const std::int64_t np = n_ + 1;
    for (auto& [name, sv] : s_) {
        auto it = updates.find(name);
        if (it == updates.end()) throw std::runtime_error("no update for tracked parameter " + name);
        const Tensor& u = it->second;
        const Tensor& g = ps.at(name).grad;
        if (u.size() != sv.size() || g.size() != sv.size())
            throw std::runtime_error("tracked parameter shape changed: " + name);
        auto& mv = mu_[name];
        auto& dv = ssd_[name];
        for (std::size_t i = 0; i < sv.size(); ++i) {
            const double a = static_cast<double>(u.data[i]) * static_cast<double>(g.data[i]) * f;
            sv[i] += std::abs(a);
            const double d0 = a - mv[i];
            mv[i] += d0 / static_cast<double>(np);
            dv[i] += d0 * (a - mv[i]);
        }
    }
    n_ = np;
    ++raw_steps_;
}

const std::vector<double>& ActivityAccumulator::S(const std::string& name) const {
    auto it = s_.find(name);
    if (it == s_.end()) throw std::out_of_range("not tracked: " + name);
    return it->second;
}
const std::vector<double>& ActivityAccumulator::mu(const std::string& name) const {
    auto it = mu_.find(name);
    if (it == mu_.end()) throw std::out_of_range("not tracked: " + name);
    return it->second;
}
const std::vector<double>& ActivityAccumulator::ssd(const std::string& name) const {
    auto it = ssd_.find(name);
    if (it == ssd_.end()) throw std::out_of_range("not tracked: " + name);
    return it->second;
}

namespace {

// (x - lo) / (hi - lo) over all vectors jointly; all-ones when the range is
// degenerate
void global_minmax(std::map<std::string, std::vector<double>>& values) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& [name, v] : values)
        for (double x : v) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    if (!(hi > lo)) {
        for (auto& [name, v] : values)
            for (double& x : v) x = 1.0;
        return;
    }
    const double range = hi - lo;
    for (auto& [name, v] : values)
        for (double& x : v) x = std::clamp((x - lo) / range, 0.0, 1.0);
}

} // namespace

PlateauProfile ActivityAccumulator::finalize(const std::string& task_id) {
    if (finalized_) throw std::logic_error("accumulator already finalized");
    if (n_ < 1 || raw_steps_ < 1) throw std::logic_error("cannot finalize with zero accumulated steps");
    finalized_ = true;

    std::map<std::string, std::vector<double>> s_norm = s_;
    std::map<std::string, std::vector<double>> sigma;
    for (const auto& [name, dv] : ssd_) {
        auto& sg = sigma[name];
        sg.resize(dv.size());
        for (std::size_t i = 0; i < dv.size(); ++i)
            sg[i] = std::sqrt(std::max(0.0, dv[i]) / static_cast<double>(n_));
    }
    global_minmax(s_norm);
    global_minmax(sigma);

    std::map<std::string, std::vector<double>> merged;
    for (const auto& [name, sv] : s_norm) {
        auto& m = merged[name];
        const auto& sg = sigma[name];
        m.resize(sv.size());
        for (std::size_t i = 0; i < sv.size(); ++i) m[i] = sv[i] * sg[i];
    }
    global_minmax(merged);

    std::map<std::string, Tensor> scores;
    for (const auto& [name, m] : merged) {
        Tensor t = Tensor::zeros(shapes_[name]);
        for (std::size_t i = 0; i < m.size(); ++i) t.data[i] = static_cast<float>(m[i]);
        scores.emplace(name, std::move(t));
    }
    return PlateauProfile(k_, task_id, raw_steps_, std::move(scores));
}

// ---- hook / combination ----

UpdateHook make_ppap_hook(const PlateauProfile& profile, const BlendConfig& blend) {
    if (blend.r < 0.0 || blend.r > 1.0) throw std::invalid_argument("blend fraction r must be in [0,1]");
    if (blend.r == 1.0) {
        return [](const std::string&, Tensor&, const Tensor&) {};
    }
    const PlateauProfile* prof = &profile;
    const double r = blend.r;
    const double q = 1.0 - blend.r;
    const float dflt = blend.default_score;
    return [prof, r, q, dflt](const std::string& name, Tensor& update, const Tensor&) {
        const Tensor* p = prof->find(name);
        if (p && !p->same_shape(update))
            throw std::runtime_error("profile shape mismatch for " + name);
        for (std::size_t i = 0; i < update.data.size(); ++i) {
            const double u = static_cast<double>(update.data[i]);
            const double score = p ? static_cast<double>(p->data[i]) : static_cast<double>(dflt);
            update.data[i] = static_cast<float>(r * u + q * u * score);
        }
    };
}

PlateauProfile combine_profiles(const std::vector<const PlateauProfile*>& profiles, CombineRule rule,
                                float default_score) {
    if (profiles.empty()) throw std::invalid_argument("combine_profiles needs at least one profile");
    std::map<std::string, std::vector<int>> shapes;
    for (const PlateauProfile* p : profiles) {
        for (const auto& [name, t] : p->scores()) {
            auto it = shapes.find(name);
            if (it == shapes.end())
                shapes.emplace(name, t.shape);
            else if (it->second != t.shape)
                throw std::invalid_argument("profile shape mismatch for " + name);
        }
    }
    std::map<std::string, Tensor> out;
    for (const auto& [name, shape] : shapes) {
        Tensor acc = Tensor::full(shape, default_score);
        bool first = true;
        for (const PlateauProfile* p : profiles) {
            const Tensor* t = p->find(name);
            const auto score = [&](std::size_t i) { return t ? t->data[i] : default_score; };
            switch (rule) {
                case CombineRule::latest:
                    for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] = score(i);
                    break;
                case CombineRule::min:
                    if (first)
                        for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] = score(i);
                    else
                        for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] = std::min(acc.data[i], score(i));
                    break;
                case CombineRule::product:
                    if (first)
                        for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] = score(i);
                    else
                        for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] *= score(i);
                    break;
            }
            first = false;
        }
        out.emplace(name, std::move(acc));
    }
    std::string joined;
    std::int64_t steps = 0;
    for (const PlateauProfile* p : profiles) {
        if (!joined.empty()) joined += "+";
        joined += p->task_id();
        steps += p->steps();
    }
    return PlateauProfile(profiles.back()->k(), joined, steps, std::move(out));
}

} // namespace ppap
