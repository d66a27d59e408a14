#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "speckle/field.hpp"

namespace speckle {

inline constexpr std::uint32_t kIdxImageMagic = 2051;
inline constexpr std::uint32_t kIdxLabelMagic = 2049;

/// Labelled 8-bit digit bitmaps (MNIST layout).
struct DigitSet {
  int count = 0;
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols
  std::vector<std::uint8_t> labels;  // count, each in [0, 9]

  BitmapView bitmap(int index) const;
  void validate() const;
  bool operator==(const DigitSet&) const = default;
};

/// Parses an image IDX buffer and a label IDX buffer into a DigitSet.
DigitSet parse_idx(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes);

DigitSet load_idx(const std::filesystem::path& image_file, const std::filesystem::path& label_file);

/// Loads `<dir>/digits-images-idx3-ubyte` and `<dir>/digits-labels-idx1-ubyte`, falling back to
/// the MNIST test/train file names when those are absent.
DigitSet load_idx_dir(const std::filesystem::path& dir);

std::vector<std::uint8_t> encode_idx_images(const DigitSet& digits);
std::vector<std::uint8_t> encode_idx_labels(const DigitSet& digits);
void write_idx(const DigitSet& digits, const std::filesystem::path& image_file,
               const std::filesystem::path& label_file);

}  // namespace speckle
