#include "dbnbench/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <memory>
#include <numeric>

#include "dbnbench/rng.hpp"

namespace dbnbench {

namespace {

// Whole-file read through zlib, which passes non-gzip input through unchanged.
std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path) {
  std::unique_ptr<gzFile_s, decltype(&gzclose)> file(gzopen(path.c_str(), "rb"), &gzclose);
  if (!file) throw IdxIoError("cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::array<std::uint8_t, 1 << 16> chunk{};
  for (;;) {
    const int got = gzread(file.get(), chunk.data(), static_cast<unsigned>(chunk.size()));
    if (got < 0) {
      int code = 0;
      const char* msg = gzerror(file.get(), &code);
      // A cut-off gzip stream is still a truncated file.
      if (code == Z_BUF_ERROR || code == Z_DATA_ERROR) throw IdxTruncated(path.string() + ": " + msg);
      throw IdxIoError(path.string() + ": " + msg);
    }
    if (got == 0) break;
    out.insert(out.end(), chunk.begin(), chunk.begin() + got);
  }
  return out;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void require(bool ok, const std::filesystem::path& path, const std::string& what) {
  if (!ok) throw IdxTruncated(path.string() + ": " + what);
}

}  // namespace

std::vector<LabeledImage> load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_maybe_gzip(images);
  const auto lab = read_maybe_gzip(labels);

  require(img.size() >= 4, images, "missing header");
  if (read_be32(img, 0) != kIdxImageMagic) {
    throw IdxBadMagic(images.string() + ": expected image magic 2051, got " + std::to_string(read_be32(img, 0)));
  }
  require(lab.size() >= 4, labels, "missing header");
  if (read_be32(lab, 0) != kIdxLabelMagic) {
    throw IdxBadMagic(labels.string() + ": expected label magic 2049, got " + std::to_string(read_be32(lab, 0)));
  }
  require(img.size() >= 16, images, "truncated header");
  require(lab.size() >= 8, labels, "truncated header");

  const std::size_t image_count = read_be32(img, 4);
  const std::size_t rows = read_be32(img, 8);
  const std::size_t cols = read_be32(img, 12);
  if (rows != kImageSide || cols != kImageSide) {
    throw IdxError(images.string() + ": expected 28x28 images, got " + std::to_string(rows) + "x" +
                   std::to_string(cols));
  }
  const std::size_t label_count = read_be32(lab, 4);
  require(img.size() >= 16 + image_count * kImagePixels, images,
          "holds fewer than the " + std::to_string(image_count) + " images its header declares");
  require(lab.size() >= 8 + label_count, labels,
          "holds fewer than the " + std::to_string(label_count) + " labels its header declares");
  if (image_count != label_count) {
    throw IdxCountMismatch(std::to_string(image_count) + " images but " + std::to_string(label_count) + " labels");
  }

  std::vector<LabeledImage> out(image_count);
  for (std::size_t k = 0; k < image_count; ++k) {
    const auto* src = img.data() + 16 + k * kImagePixels;
    std::copy(src, src + kImagePixels, out[k].image.pixels.begin());
    out[k].label = lab[8 + k];
    if (out[k].label > 9) {
      throw IdxError(labels.string() + ": label " + std::to_string(out[k].label) + " out of range");
    }
  }
  return out;
}

namespace {

constexpr std::size_t kCrop = 2;
constexpr std::size_t kBlock = 4;
constexpr std::size_t kGrid = 6;

constexpr bool is_corner(std::size_t r, std::size_t c) {
  return (r == 0 || r == kGrid - 1) && (c == 0 || c == kGrid - 1);
}

constexpr std::array<std::pair<std::size_t, std::size_t>, kCoarsePixels> make_cell_map() {
  std::array<std::pair<std::size_t, std::size_t>, kCoarsePixels> cells{};
  std::size_t k = 0;
  for (std::size_t r = 0; r < kGrid; ++r) {
    for (std::size_t c = 0; c < kGrid; ++c) {
      if (!is_corner(r, c)) cells[k++] = {r, c};
    }
  }
  return cells;
}

constexpr auto kCellMap = make_cell_map();

}  // namespace

std::pair<std::size_t, std::size_t> coarse_cell(std::size_t k) { return kCellMap.at(k); }

RealVector coarse_grain(const RawImage& img) {
  RealVector out(kCoarsePixels);
  for (std::size_t k = 0; k < kCoarsePixels; ++k) {
    const auto [gr, gc] = kCellMap[k];
    unsigned sum = 0;
    for (std::size_t r = 0; r < kBlock; ++r) {
      for (std::size_t c = 0; c < kBlock; ++c) {
        sum += img.at(kCrop + gr * kBlock + r, kCrop + gc * kBlock + c);
      }
    }
    out[k] = static_cast<double>(sum) / (16.0 * 255.0);
  }
  return out;
}

namespace {

MnistFiles find_files(const std::filesystem::path& dir, const std::string& prefix) {
  auto pick = [&](const std::string& stem) {
    const auto raw = dir / stem;
    if (std::filesystem::exists(raw)) return raw;
    const auto gz = dir / (stem + ".gz");
    if (std::filesystem::exists(gz)) return gz;
    throw IdxIoError("neither " + raw.string() + " nor " + gz.string() + " exists");
  };
  return {pick(prefix + "-images-idx3-ubyte"), pick(prefix + "-labels-idx1-ubyte")};
}

}  // namespace

MnistFiles mnist_train_files(const std::filesystem::path& dir) { return find_files(dir, "train"); }
MnistFiles mnist_test_files(const std::filesystem::path& dir) { return find_files(dir, "t10k"); }

Dataset make_dataset(const std::vector<LabeledImage>& items, std::string name) {
  Dataset ds;
  ds.name = std::move(name);
  ds.images.reserve(items.size());
  ds.labels.reserve(items.size());
  for (const auto& item : items) {
    ds.images.push_back(coarse_grain(item.image));
    ds.labels.push_back(item.label);
  }
  return ds;
}

Dataset subsample(const Dataset& full, std::size_t count, std::uint64_t seed) {
  if (count > full.size()) {
    throw std::invalid_argument("subset of " + std::to_string(count) + " requested from " +
                                std::to_string(full.size()) + " items");
  }
  std::vector<std::size_t> all(full.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> picked;
  picked.reserve(count);
  Stream rng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(picked), count, rng);
  Dataset out;
  out.name = full.name;
  out.images.reserve(count);
  out.labels.reserve(count);
  for (std::size_t k : picked) {
    out.images.push_back(full.images[k]);
    out.labels.push_back(full.labels[k]);
  }
  return out;
}

Dataset build_dataset(const MnistFiles& files, std::optional<std::size_t> subset, std::uint64_t seed,
                      std::string name) {
  Dataset full = make_dataset(load_idx(files.images, files.labels), std::move(name));
  if (!subset) return full;
  return subsample(full, *subset, seed);
}

}  // namespace dbnbench
