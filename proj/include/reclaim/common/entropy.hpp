#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "reclaim/common/bytes.hpp"

namespace reclaim {

/// Source of random bytes for key generation, nonces and labels.
class Entropy {
public:
    virtual ~Entropy() = default;
    virtual void fill(std::span<std::uint8_t> out) = 0;

    Bytes bytes(std::size_t n) {
        Bytes b(n);
        fill(b);
        return b;
    }
};

/// Operating-system randomness through libsodium.
class SystemEntropy final : public Entropy {
public:
    void fill(std::span<std::uint8_t> out) override;
};

/// Reproducible stream: ChaCha20 keyed by a seed, one block per draw counter.
/// Used by the simulator and the benchmark so runs are a function of the seed.
class SeededEntropy final : public Entropy {
public:
    explicit SeededEntropy(std::uint64_t seed);
    explicit SeededEntropy(const std::array<std::uint8_t, 32>& seed) : seed_(seed) {}

    void fill(std::span<std::uint8_t> out) override;

private:
    std::array<std::uint8_t, 32> seed_{};
    std::uint64_t counter_ = 0;
};

Entropy& system_entropy();

}  // namespace reclaim
