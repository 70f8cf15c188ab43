#pragma once

#include <cstdint>
#include <vector>

namespace ppap {

// xoshiro256** seeded via splitmix64. Hand-rolled distributions so streams are
// identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t next_u64();
    // [0, 1)
    double uniform();
    // standard normal (Box-Muller, cached spare)
    double normal();
    // uniform integer in [0, n), rejection-sampled
    std::uint64_t below(std::uint64_t n);
    // Fisher-Yates permutation of 0..n-1
    std::vector<std::int64_t> permutation(std::int64_t n);
    // independent generator derived from this one's state plus a stream tag
    Rng split(std::uint64_t stream);

private:
    std::uint64_t s_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace ppap
