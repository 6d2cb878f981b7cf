#include "thinlab/rng.hpp"

#include <cmath>
#include <numbers>
#include <utility>

namespace thinlab {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// SplitMix64 finalizer (Stafford mix 13): bijective, full avalanche.
std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
}

std::uint64_t derive_key(std::uint64_t seed, const std::vector<std::uint64_t>& path) {
    std::uint64_t key = mix64(seed ^ 0x6a09e667f3bcc909ULL);
    for (std::uint64_t element : path) {
        key = mix64(key ^ mix64(element + kGolden));
    }
    return key;
}

}  // namespace

RandomStream::RandomStream(std::uint64_t master_seed)
    : RandomStream(master_seed, {}) {}

RandomStream::RandomStream(std::uint64_t master_seed, std::vector<std::uint64_t> path)
    : master_seed_(master_seed), path_(std::move(path)) {
    key_ = derive_key(master_seed_, path_);
    state_ = mix64(key_ ^ 0x2545f4914f6cdd1dULL);
    gamma_ = mix64(key_ + kGolden) | 1ULL;
}

RandomStream RandomStream::substream(std::uint64_t index) const {
    std::vector<std::uint64_t> child_path = path_;
    child_path.push_back(index);
    return RandomStream(master_seed_, std::move(child_path));
}

std::uint64_t RandomStream::next_u64() {
    state_ += gamma_;
    return mix64(state_);
}

double RandomStream::next_uniform() {
    // 53 random bits shifted into (0, 1): never returns an endpoint, so
    // log(u) and log(1 - u) are always finite.
    const double kInv53 = 0x1.0p-53;
    return static_cast<double>(next_u64() >> 11) * kInv53 + 0x1.0p-54;
}

double RandomStream::next_normal() {
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace thinlab
