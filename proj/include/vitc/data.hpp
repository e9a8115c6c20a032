#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "vitc/tensor.hpp"

namespace vitc {

enum class Split { Train, Test };

// Images stored back to back in H x W x C float layout, already
// normalized with (x - 0.5) / 0.5 on [0,1] pixel values.
struct Dataset {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 3;
  std::size_t num_classes = 10;
  Split split = Split::Train;
  std::vector<float> images;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::size_t image_size() const { return height * width * channels; }
  std::span<const float> image(std::size_t i) const { return std::span(images).subspan(i * image_size(), image_size()); }

  // (B x H x W x C) tensor of the selected images.
  Tensor batch(std::span<const std::size_t> indices) const;
  std::vector<int> batch_labels(std::span<const std::size_t> indices) const;

  // First n records (all of them when n == 0 or n >= size()).
  Dataset head(std::size_t n) const;
  // Records [first, first + n).
  Dataset slice(std::size_t first, std::size_t n) const;
};

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarSide = 32;

float normalize_pixel(std::uint8_t value);

// One binary batch file: records of 1 label byte followed by three 1024-byte
// channel planes (R, G, B), each 32x32 row-major. `limit` caps the number
// of records read (0 = all).
Dataset load_cifar_batch(const std::filesystem::path& file, Split split, std::size_t limit = 0);

// data_batch_1..5.bin and test_batch.bin from `directory` (or its
// cifar-10-batches-bin subdirectory). Limits of 0 read everything.
std::pair<Dataset, Dataset> load_cifar10(const std::filesystem::path& directory, std::size_t train_limit = 0,
                                         std::size_t test_limit = 0);

// True when load_cifar10 would find every batch file.
bool cifar10_available(const std::filesystem::path& directory);

// Class c images have mean intensity (c+1)/(classes+1) with N(0, 0.05)
// pixel noise, before normalization.
Dataset make_synthetic(std::size_t num, std::size_t classes, std::uint64_t seed, std::size_t height = 32,
                       std::size_t width = 32, std::size_t channels = 3);

}  // namespace vitc
