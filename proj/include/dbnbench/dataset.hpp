#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dbnbench/rbm.hpp"

namespace dbnbench {

/// Base class of every IDX parsing failure.
class IdxError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IdxBadMagic : public IdxError {
 public:
  using IdxError::IdxError;
};

class IdxTruncated : public IdxError {
 public:
  using IdxError::IdxError;
};

class IdxCountMismatch : public IdxError {
 public:
  using IdxError::IdxError;
};

/// File missing or unreadable.
class IdxIoError : public IdxError {
 public:
  using IdxError::IdxError;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::size_t kImageSide = 28;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;
inline constexpr std::size_t kCoarsePixels = 32;

struct RawImage {
  std::array<std::uint8_t, kImagePixels> pixels{};

  std::uint8_t at(std::size_t row, std::size_t col) const { return pixels[row * kImageSide + col]; }
};

struct LabeledImage {
  RawImage image;
  int label = 0;
};

/// Reads an IDX image file and its label file (raw or gzip, detected from the
/// first two bytes) and pairs them in order.
std::vector<LabeledImage> load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Crop the 2-pixel border to 24x24, average 4x4 blocks into a 6x6 grid of
/// values in [0, 1], and drop the grid's four corners. Output order is the
/// grid in row-major order with the corners skipped, i.e. output k holds grid
/// cell coarse_cell(k).
RealVector coarse_grain(const RawImage& img);

/// (row, col) of the 6x6 grid cell feeding coarse-grained pixel k.
std::pair<std::size_t, std::size_t> coarse_cell(std::size_t k);

struct Dataset {
  std::vector<RealVector> images;
  std::vector<int> labels;
  std::string name;

  std::size_t size() const noexcept { return images.size(); }
  bool empty() const noexcept { return images.empty(); }
};

struct MnistFiles {
  std::filesystem::path images;
  std::filesystem::path labels;
};

/// Standard file names inside `dir`, preferring raw files over `.gz` ones.
MnistFiles mnist_train_files(const std::filesystem::path& dir);
MnistFiles mnist_test_files(const std::filesystem::path& dir);

/// Coarse-grains every pair.
Dataset make_dataset(const std::vector<LabeledImage>& items, std::string name);

/// Uniform subsample without replacement; keeps the original relative order.
Dataset subsample(const Dataset& full, std::size_t count, std::uint64_t seed);

/// Load, coarse-grain, and optionally subsample.
Dataset build_dataset(const MnistFiles& files, std::optional<std::size_t> subset, std::uint64_t seed,
                      std::string name);

}  // namespace dbnbench
