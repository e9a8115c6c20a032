#include "vitc/data.hpp"

#include <array>
#include <fstream>
#include <iterator>
#include <string>

#include "vitc/error.hpp"
#include "vitc/rng.hpp"

namespace vitc {

namespace fs = std::filesystem;

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
  std::vector<float> out;
  out.reserve(indices.size() * image_size());
  for (std::size_t i : indices) {
    auto img = image(i);
    out.insert(out.end(), img.begin(), img.end());
  }
  return Tensor({indices.size(), height, width, channels}, std::move(out));
}

std::vector<int> Dataset::batch_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

Dataset Dataset::head(std::size_t n) const {
  if (n == 0 || n >= size()) return *this;
  return slice(0, n);
}

Dataset Dataset::slice(std::size_t first, std::size_t n) const {
  first = std::min(first, size());
  n = std::min(n, size() - first);
  Dataset out = *this;
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(first),
                    labels.begin() + static_cast<std::ptrdiff_t>(first + n));
  out.images.assign(images.begin() + static_cast<std::ptrdiff_t>(first * image_size()),
                    images.begin() + static_cast<std::ptrdiff_t>((first + n) * image_size()));
  return out;
}

float normalize_pixel(std::uint8_t value) {
  const float x = static_cast<float>(value) / 255.0f;
  return (x - 0.5f) / 0.5f;
}

Dataset load_cifar_batch(const fs::path& file, Split split, std::size_t limit) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + file.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw Error(ErrorCode::TruncatedRecord, file.string() + ": " + std::to_string(bytes.size()) +
                                                " bytes is not a multiple of " + std::to_string(kCifarRecordBytes));
  }
  std::size_t records = bytes.size() / kCifarRecordBytes;
  if (limit != 0) records = std::min(records, limit);

  Dataset ds;
  ds.split = split;
  ds.labels.reserve(records);
  ds.images.resize(records * ds.image_size());
  constexpr std::size_t plane = kCifarSide * kCifarSide;
  // Decode table keeps normalization a pure function of the byte.
  std::array<float, 256> lut{};
  for (int v = 0; v < 256; ++v) lut[static_cast<std::size_t>(v)] = normalize_pixel(static_cast<std::uint8_t>(v));

  for (std::size_t r = 0; r < records; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] >= ds.num_classes) {
      throw Error(ErrorCode::LabelOutOfRange,
                  file.string() + ": record " + std::to_string(r) + " has label " + std::to_string(rec[0]));
    }
    ds.labels.push_back(rec[0]);
    float* dst = ds.images.data() + r * ds.image_size();
    for (std::size_t p = 0; p < plane; ++p)
      for (std::size_t c = 0; c < 3; ++c) dst[p * 3 + c] = lut[rec[1 + c * plane + p]];
  }
  return ds;
}

namespace {

fs::path resolve_cifar_dir(const fs::path& directory) {
  if (fs::exists(directory / "test_batch.bin")) return directory;
  if (fs::exists(directory / "cifar-10-batches-bin" / "test_batch.bin")) return directory / "cifar-10-batches-bin";
  return directory;
}

void append(Dataset& into, const Dataset& more) {
  into.labels.insert(into.labels.end(), more.labels.begin(), more.labels.end());
  into.images.insert(into.images.end(), more.images.begin(), more.images.end());
}

}  // namespace

bool cifar10_available(const fs::path& directory) {
  const fs::path dir = resolve_cifar_dir(directory);
  for (int i = 1; i <= 5; ++i)
    if (!fs::exists(dir / ("data_batch_" + std::to_string(i) + ".bin"))) return false;
  return fs::exists(dir / "test_batch.bin");
}

std::pair<Dataset, Dataset> load_cifar10(const fs::path& directory, std::size_t train_limit, std::size_t test_limit) {
  const fs::path dir = resolve_cifar_dir(directory);
  for (int i = 1; i <= 5; ++i) {
    const fs::path f = dir / ("data_batch_" + std::to_string(i) + ".bin");
    if (!fs::exists(f)) throw Error(ErrorCode::MissingFile, "missing " + f.string());
  }
  if (!fs::exists(dir / "test_batch.bin")) throw Error(ErrorCode::MissingFile, "missing " + (dir / "test_batch.bin").string());

  Dataset train;
  train.split = Split::Train;
  for (int i = 1; i <= 5; ++i) {
    if (train_limit != 0 && train.size() >= train_limit) break;
    const std::size_t remaining = train_limit == 0 ? 0 : train_limit - train.size();
    append(train, load_cifar_batch(dir / ("data_batch_" + std::to_string(i) + ".bin"), Split::Train, remaining));
  }
  Dataset test = load_cifar_batch(dir / "test_batch.bin", Split::Test, test_limit);
  return {std::move(train), std::move(test)};
}

Dataset make_synthetic(std::size_t num, std::size_t classes, std::uint64_t seed, std::size_t height,
                       std::size_t width, std::size_t channels) {
  if (classes == 0) throw Error(ErrorCode::InvalidConfig, "synthetic data needs at least one class");
  Rng rng(seed);
  Dataset ds;
  ds.height = height;
  ds.width = width;
  ds.channels = channels;
  ds.num_classes = classes;
  ds.images.resize(num * ds.image_size());
  ds.labels.reserve(num);
  for (std::size_t i = 0; i < num; ++i) {
    const auto label = static_cast<int>(rng.below(classes));
    ds.labels.push_back(label);
    const float mean = static_cast<float>(label + 1) / static_cast<float>(classes + 1);
    float* dst = ds.images.data() + i * ds.image_size();
    for (std::size_t p = 0; p < ds.image_size(); ++p) dst[p] = (rng.normal(mean, 0.05f) - 0.5f) / 0.5f;
  }
  return ds;
}

}  // namespace vitc
