#include "speckle/idx.hpp"

#include <fstream>
#include <iterator>
#include <string>

namespace speckle {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t check_magic(std::span<const std::uint8_t> bytes, std::uint32_t expected,
                          std::uint32_t other, const char* what) {
  if (bytes.size() < 4) throw LengthError(std::string(what) + " file shorter than its magic");
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic == other)
    throw PairingError(std::string(what) + " file has magic " + std::to_string(magic) +
                       ", expected " + std::to_string(expected) + " (image/label files swapped?)");
  if (magic != expected)
    throw FormatError(std::string(what) + " file has bad magic " + std::to_string(magic) +
                      ", expected " + std::to_string(expected));
  return magic;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

BitmapView DigitSet::bitmap(int index) const {
  if (index < 0 || index >= count) throw ArgumentError("digit index out of range");
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  return {rows, cols, std::span<const std::uint8_t>(pixels).subspan(index * n, n)};
}

void DigitSet::validate() const {
  if (count < 0 || rows < 1 || cols < 1) throw FormatError("digit set has invalid dimensions");
  if (pixels.size() != static_cast<std::size_t>(count) * rows * cols)
    throw LengthError("digit pixel payload does not match count x rows x cols");
  if (labels.size() != static_cast<std::size_t>(count))
    throw PairingError("digit label count does not match image count");
  for (auto l : labels)
    if (l > 9) throw FormatError("digit label " + std::to_string(l) + " outside [0, 9]");
}

DigitSet parse_idx(std::span<const std::uint8_t> image_bytes,
                   std::span<const std::uint8_t> label_bytes) {
  check_magic(image_bytes, kIdxImageMagic, kIdxLabelMagic, "image");
  check_magic(label_bytes, kIdxLabelMagic, kIdxImageMagic, "label");
  if (image_bytes.size() < 16) throw LengthError("image file header truncated");
  if (label_bytes.size() < 8) throw LengthError("label file header truncated");

  DigitSet set;
  const std::uint32_t count = read_be32(image_bytes, 4);
  const std::uint32_t rows = read_be32(image_bytes, 8);
  const std::uint32_t cols = read_be32(image_bytes, 12);
  const std::uint32_t label_count = read_be32(label_bytes, 4);
  if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096)
    throw FormatError("implausible image dimensions");

  const std::size_t payload = static_cast<std::size_t>(count) * rows * cols;
  if (image_bytes.size() - 16 < payload)
    throw LengthError("image payload truncated: header claims " + std::to_string(count) +
                      " images, file holds " +
                      std::to_string((image_bytes.size() - 16) / (rows * cols)));
  if (label_bytes.size() - 8 < label_count)
    throw LengthError("label payload truncated: header claims " + std::to_string(label_count) +
                      " labels");
  if (label_count != count)
    throw PairingError("image file holds " + std::to_string(count) + " images but label file " +
                       std::to_string(label_count) + " labels");

  set.count = static_cast<int>(count);
  set.rows = static_cast<int>(rows);
  set.cols = static_cast<int>(cols);
  set.pixels.assign(image_bytes.begin() + 16, image_bytes.begin() + 16 + payload);
  set.labels.assign(label_bytes.begin() + 8, label_bytes.begin() + 8 + count);
  set.validate();
  return set;
}

DigitSet load_idx(const std::filesystem::path& image_file, const std::filesystem::path& label_file) {
  const auto images = read_file(image_file);
  const auto labels = read_file(label_file);
  return parse_idx(images, labels);
}

DigitSet load_idx_dir(const std::filesystem::path& dir) {
  const std::pair<const char*, const char*> candidates[] = {
      {"digits-images-idx3-ubyte", "digits-labels-idx1-ubyte"},
      {"t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"},
      {"train-images-idx3-ubyte", "train-labels-idx1-ubyte"},
  };
  for (const auto& [img, lbl] : candidates)
    if (std::filesystem::exists(dir / img) && std::filesystem::exists(dir / lbl))
      return load_idx(dir / img, dir / lbl);
  throw FormatError("no IDX image/label pair found in " + dir.string());
}

std::vector<std::uint8_t> encode_idx_images(const DigitSet& digits) {
  digits.validate();
  std::vector<std::uint8_t> out;
  out.reserve(16 + digits.pixels.size());
  put_be32(out, kIdxImageMagic);
  put_be32(out, static_cast<std::uint32_t>(digits.count));
  put_be32(out, static_cast<std::uint32_t>(digits.rows));
  put_be32(out, static_cast<std::uint32_t>(digits.cols));
  out.insert(out.end(), digits.pixels.begin(), digits.pixels.end());
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(const DigitSet& digits) {
  digits.validate();
  std::vector<std::uint8_t> out;
  out.reserve(8 + digits.labels.size());
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(digits.count));
  out.insert(out.end(), digits.labels.begin(), digits.labels.end());
  return out;
}

void write_idx(const DigitSet& digits, const std::filesystem::path& image_file,
               const std::filesystem::path& label_file) {
  const auto write = [](const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("cannot write " + path.string());
  };
  write(image_file, encode_idx_images(digits));
  write(label_file, encode_idx_labels(digits));
}

}  // namespace speckle
