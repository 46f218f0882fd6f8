#pragma once

#include <cstdint>

#include "agrav/data.hpp"

namespace agrav {

/// Deterministic 28x28 grayscale digit corpus in MNIST's value range and
/// layout: glyph bitmaps rasterized with per-sample rotation, scale, shift,
/// intensity jitter, and additive pixel noise. per_class samples for each
/// of the 10 digit classes, interleaved so any prefix stays balanced.
Dataset make_digit_corpus(Index per_class, std::uint64_t seed);

}  // namespace agrav
