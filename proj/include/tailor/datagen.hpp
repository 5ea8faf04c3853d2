#pragma once

#include <cstdint>

#include "tailor/network.hpp"

namespace tailor::bench {

// Synthetic classification data: one unit-RMS prototype image per class,
// plus isotropic noise scaled by `difficulty`. At difficulty 0 every example
// equals its class prototype, so the classes are linearly separable; raising
// difficulty raises class overlap smoothly.
struct DataSpec {
    int n = 0;             // training examples
    int classes = 0;
    int channels = 3;
    int image_size = 8;    // square side
    double difficulty = 0.5;
    std::uint64_t seed = 0;
};

// Deterministic in the spec: the same spec always yields bitwise-identical
// data. Labels are assigned round-robin, so each split is balanced within
// one example per class. The validation split holds max(classes, n/4)
// examples drawn from independent noise.
// Throws std::invalid_argument on degenerate specs (n < classes,
// classes < 2, channels < 1, image_size < 4, difficulty < 0).
nn::Dataset generate_dataset(const DataSpec& spec);

}  // namespace tailor::bench
