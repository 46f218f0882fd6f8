#include "agrav/digits.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "agrav/errors.hpp"
#include "agrav/rng.hpp"

namespace agrav {

namespace {

// 5x7 glyphs, row-major, one string per row.
constexpr std::array<std::array<const char*, 7>, 10> kGlyphs = {{
    {"01110", "10001", "10011", "10101", "11001", "10001", "01110"},  // 0
    {"00100", "01100", "00100", "00100", "00100", "00100", "01110"},  // 1
    {"01110", "10001", "00001", "00010", "00100", "01000", "11111"},  // 2
    {"11111", "00010", "00100", "00010", "00001", "10001", "01110"},  // 3
    {"00010", "00110", "01010", "10010", "11111", "00010", "00010"},  // 4
    {"11111", "10000", "11110", "00001", "00001", "10001", "01110"},  // 5
    {"00110", "01000", "10000", "11110", "10001", "10001", "01110"},  // 6
    {"11111", "00001", "00010", "00100", "01000", "01000", "01000"},  // 7
    {"01110", "10001", "10001", "01110", "10001", "10001", "01110"},  // 8
    {"01110", "10001", "10001", "01111", "00001", "00010", "01100"},  // 9
}};

constexpr Index kSide = 28;

struct Jitter {
  double angle;      // radians
  double cell;       // pixels per glyph cell
  double shift_x;
  double shift_y;
  double intensity;
};

void render(Index digit, const Jitter& j, Rng& rng, double* out) {
  const auto& glyph = kGlyphs[static_cast<std::size_t>(digit)];
  const double cos_a = std::cos(j.angle), sin_a = std::sin(j.angle);
  // 2x2 supersampling softens glyph edges like pen strokes
  constexpr double kSub[2] = {0.25, 0.75};
  for (Index r = 0; r < kSide; ++r) {
    for (Index c = 0; c < kSide; ++c) {
      double acc = 0.0;
      for (double sy : kSub) {
        for (double sx : kSub) {
          const double dx = static_cast<double>(c) + sx - 14.0 - j.shift_x;
          const double dy = static_cast<double>(r) + sy - 14.0 - j.shift_y;
          const double ux = cos_a * dx + sin_a * dy;
          const double uy = -sin_a * dx + cos_a * dy;
          const double gx = ux / j.cell + 2.5;
          const double gy = uy / j.cell + 3.5;
          if (gx >= 0.0 && gx < 5.0 && gy >= 0.0 && gy < 7.0) {
            const auto col = static_cast<std::size_t>(gx);
            const auto row = static_cast<std::size_t>(gy);
            if (glyph[row][col] == '1') acc += 1.0;
          }
        }
      }
      double v = j.intensity * (acc / 4.0) + 0.05 * rng.normal();
      out[r * kSide + c] = std::clamp(v, 0.0, 1.0);
    }
  }
}

}  // namespace

Dataset make_digit_corpus(Index per_class, std::uint64_t seed) {
  if (per_class < 1) {
    throw ValueError("make_digit_corpus: per_class must be >= 1");
  }
  const Index total = 10 * per_class;
  Eigen::ArrayXd data(total * kSide * kSide);
  Dataset ds;
  ds.classes = 10;
  ds.sample_shape = {1, kSide, kSide};
  ds.labels.reserve(static_cast<std::size_t>(total));
  Rng rng(seed, "digits");
  for (Index s = 0; s < per_class; ++s) {
    for (Index digit = 0; digit < 10; ++digit) {
      Jitter j;
      j.angle = rng.uniform(-0.15, 0.15);
      j.cell = 3.0 * rng.uniform(0.85, 1.15);
      j.shift_x = rng.uniform(-2.0, 2.0);
      j.shift_y = rng.uniform(-2.0, 2.0);
      j.intensity = rng.uniform(0.7, 1.0);
      const Index at = (s * 10 + digit) * kSide * kSide;
      render(digit, j, rng, data.data() + at);
      ds.labels.push_back(digit);
    }
  }
  ds.inputs = Tensor::from_array({total, 1, kSide, kSide}, std::move(data));
  return ds;
}

}  // namespace agrav
