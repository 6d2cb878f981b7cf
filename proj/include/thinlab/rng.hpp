#pragma once

#include <cstdint>
#include <vector>

namespace thinlab {

/// Counter-based random stream addressed by (master_seed, path).
///
/// The generator state is a pure function of the seed and the path, so a
/// substream can be reconstructed anywhere without knowing how many draws its
/// parent or siblings have consumed.  Each stream walks its own Weyl sequence
/// (state += gamma) through a 64-bit finalizer, with (state0, gamma) derived
/// by hashing the seed and path; distinct paths give statistically
/// independent sequences.
class RandomStream {
  public:
    explicit RandomStream(std::uint64_t master_seed);
    RandomStream(std::uint64_t master_seed, std::vector<std::uint64_t> path);

    /// Child stream addressed by path ++ (index); independent of how far
    /// this stream has advanced.
    [[nodiscard]] RandomStream substream(std::uint64_t index) const;

    std::uint64_t next_u64();

    /// Uniform draw strictly inside (0, 1).
    double next_uniform();

    /// Standard normal draw (Box-Muller; consumes two uniforms).
    double next_normal();

    std::uint64_t master_seed() const { return master_seed_; }
    const std::vector<std::uint64_t>& path() const { return path_; }

  private:
    std::uint64_t master_seed_ = 0;
    std::vector<std::uint64_t> path_;
    std::uint64_t key_ = 0;
    std::uint64_t state_ = 0;
    std::uint64_t gamma_ = 0;
};

}  // namespace thinlab
