/* Copyright 2026 The qat-tradeoff Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

// Image datasets held in memory as NHWC float tensors.
//
// Synthetic: each class k owns a mean image mu_k with unit RMS, built from a
// per-class colour vector and an oriented sinusoidal texture. An example is
// separation * mu_k + N(0, 1) noise per pixel, so separation 0 leaves only
// noise.
//
// CIFAR-10 binary: 3073-byte records (label byte, then 1024 R, 1024 G, 1024 B
// bytes in row-major order). Pixels are scaled to [0, 1] and normalized with
// the per-channel constants kCifarMean / kCifarStd.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "qat/runner/config.hpp"
#include "qat/tensor.hpp"

namespace qat::run {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::array<float, 3> kCifarMean = {0.4914f, 0.4822f, 0.4465f};
inline constexpr std::array<float, 3> kCifarStd = {0.2470f, 0.2435f, 0.2616f};
inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarSide = 32;
inline constexpr const char* kDatasetRootEnv = "QAT_DATASET_ROOT";

struct Dataset {
  Tensor<float> images;  // [N, H, W, C]
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t resolution() const { return images.dim(1); }
  std::size_t channels() const { return images.dim(3); }
};

struct SplitDataset {
  Dataset train;
  Dataset eval;
};

// ---- synthetic -------------------------------------------------------------

inline Tensor<float> synthetic_class_means(std::size_t num_classes, std::size_t resolution, std::size_t channels,
                                           std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5eedc1a55e5ull);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Tensor<float> means({num_classes, resolution, resolution, channels});
  const std::size_t per_class = resolution * resolution * channels;
  for (std::size_t k = 0; k < num_classes; ++k) {
    std::vector<double> color(channels), texture_gain(channels);
    for (auto& c : color) c = normal(rng);
    for (auto& g : texture_gain) g = normal(rng);
    const double angle = std::numbers::pi * unit(rng);
    const double freq = 1.0 + 2.0 * unit(rng);  // cycles across the image
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    std::vector<double> img(per_class);
    double ss = 0.0;
    for (std::size_t h = 0; h < resolution; ++h) {
      for (std::size_t w = 0; w < resolution; ++w) {
        const double u = (std::cos(angle) * static_cast<double>(h) + std::sin(angle) * static_cast<double>(w)) /
                         static_cast<double>(resolution);
        const double wave = std::cos(2.0 * std::numbers::pi * freq * u + phase);
        for (std::size_t c = 0; c < channels; ++c) {
          const double v = color[c] + texture_gain[c] * wave;
          img[(h * resolution + w) * channels + c] = v;
          ss += v * v;
        }
      }
    }
    const double rms = std::sqrt(ss / static_cast<double>(per_class));
    for (std::size_t i = 0; i < per_class; ++i) {
      means[k * per_class + i] = static_cast<float>(img[i] / rms);
    }
  }
  return means;
}

// Labels cycle 0..K-1 so every class is equally represented.
inline Dataset synthetic_split(const Tensor<float>& means, std::size_t count, double separation,
                               std::uint64_t seed) {
  const std::size_t k = means.dim(0), r = means.dim(1), ch = means.dim(3);
  const std::size_t per = r * r * ch;
  Dataset d;
  d.num_classes = k;
  d.images = Tensor<float>({count, r, r, ch});
  d.labels.resize(count);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t n = 0; n < count; ++n) {
    const std::size_t label = n % k;
    d.labels[n] = label;
    for (std::size_t i = 0; i < per; ++i) {
      d.images[n * per + i] =
          static_cast<float>(separation * static_cast<double>(means[label * per + i]) + normal(rng));
    }
  }
  return d;
}

inline SplitDataset make_synthetic(const DatasetDescriptor& d, std::uint64_t seed) {
  if (d.train_examples == 0 || d.eval_examples == 0) throw DatasetError("synthetic dataset needs examples");
  if (!(d.separation >= 0.0) || !std::isfinite(d.separation)) {
    throw DatasetError("synthetic separation must be finite and non-negative");
  }
  const Tensor<float> means = synthetic_class_means(d.num_classes, d.resolution, d.channels, seed);
  return {synthetic_split(means, d.train_examples, d.separation, seed * 2 + 1),
          synthetic_split(means, d.eval_examples, d.separation, seed * 2 + 2)};
}

// ---- CIFAR-10 --------------------------------------------------------------

inline std::filesystem::path resolve_dataset_path(const std::string& path) {
  std::filesystem::path p(path);
  if (p.is_relative()) {
    if (const char* root = std::getenv(kDatasetRootEnv); root && *root) return std::filesystem::path(root) / p;
  }
  return p;
}

// Parses whole records from a byte buffer; `limit` 0 keeps all.
inline Dataset parse_cifar_records(const std::vector<unsigned char>& bytes, std::size_t num_classes,
                                   const std::string& source = "<buffer>", std::size_t limit = 0) {
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw DatasetError("truncated record file '" + source + "': " + std::to_string(bytes.size()) +
                       " bytes is not a multiple of " + std::to_string(kCifarRecordBytes));
  }
  std::size_t n = bytes.size() / kCifarRecordBytes;
  if (n == 0) throw DatasetError("record file '" + source + "' is empty");
  if (limit) n = std::min(n, limit);
  Dataset d;
  d.num_classes = num_classes;
  d.images = Tensor<float>({n, kCifarSide, kCifarSide, 3});
  d.labels.resize(n);
  const std::size_t plane = kCifarSide * kCifarSide;
  for (std::size_t r = 0; r < n; ++r) {
    const unsigned char* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] >= num_classes) {
      throw DatasetError("record " + std::to_string(r) + " of '" + source + "' has label " +
                         std::to_string(rec[0]) + " >= class count " + std::to_string(num_classes));
    }
    d.labels[r] = rec[0];
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < plane; ++i) {
        const float v = static_cast<float>(rec[1 + c * plane + i]) / 255.0f;
        d.images[(r * plane + i) * 3 + c] = (v - kCifarMean[c]) / kCifarStd[c];
      }
    }
  }
  return d;
}

inline Dataset read_cifar_file(const std::filesystem::path& file, std::size_t num_classes, std::size_t limit = 0) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DatasetError("cannot open dataset file '" + file.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_cifar_records(bytes, num_classes, file.string(), limit);
}

inline Dataset concat(std::vector<Dataset> parts, std::size_t limit) {
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  if (limit) total = std::min(total, limit);
  const Dataset& first = parts.front();
  const std::size_t per = first.images.size() / first.size();
  Dataset d;
  d.num_classes = first.num_classes;
  Shape shape = first.images.shape();
  shape[0] = total;
  d.images = Tensor<float>(shape);
  std::size_t n = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < p.size() && n < total; ++i, ++n) {
      std::copy_n(p.images.data().begin() + i * per, per, d.images.data().begin() + n * per);
      d.labels.push_back(p.labels[i]);
    }
  }
  return d;
}

inline SplitDataset load_cifar10(const DatasetDescriptor& d) {
  if (d.path.empty()) throw DatasetError("cifar10 dataset needs a path");
  const auto dir = resolve_dataset_path(d.path);
  std::vector<Dataset> train;
  for (int i = 1; i <= 5; ++i) {
    const auto f = dir / ("data_batch_" + std::to_string(i) + ".bin");
    if (std::filesystem::exists(f)) train.push_back(read_cifar_file(f, d.num_classes));
  }
  if (train.empty()) throw DatasetError("no data_batch_*.bin files under '" + dir.string() + "'");
  return {concat(std::move(train), d.max_train_examples),
          read_cifar_file(dir / "test_batch.bin", d.num_classes, d.max_eval_examples)};
}

inline SplitDataset load_dataset(const DatasetDescriptor& d, std::uint64_t seed) {
  return d.kind == DatasetKind::SyntheticGaussianClusters ? make_synthetic(d, seed) : load_cifar10(d);
}

// ---- iteration -------------------------------------------------------------

template <typename T>
struct Batch {
  Tensor<T> images;
  std::vector<std::size_t> labels;
};

template <typename T>
Batch<T> gather(const Dataset& d, const std::vector<std::size_t>& indices) {
  const std::size_t per = d.images.size() / d.size();
  Shape shape = d.images.shape();
  shape[0] = indices.size();
  Batch<T> b{Tensor<T>(shape), {}};
  b.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    for (std::size_t j = 0; j < per; ++j) b.images[i * per + j] = static_cast<T>(d.images[src * per + j]);
    b.labels.push_back(d.labels[src]);
  }
  return b;
}

// Training batches. Step s draws positions s*B .. s*B+B-1 of an endless
// sequence of per-epoch permutations, so batch_at(s) depends only on (seed, s).
template <typename T>
class BatchStream {
 public:
  BatchStream(const Dataset& data, std::size_t batch_size, std::uint64_t seed, bool augment = false)
      : data_(&data), batch_size_(batch_size), seed_(seed), augment_(augment) {
    if (data.size() == 0) throw DatasetError("batch stream over empty dataset");
    if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  }

  Batch<T> batch_at(std::size_t step) const {
    std::vector<std::size_t> idx(batch_size_);
    const std::size_t n = data_->size();
    for (std::size_t i = 0; i < batch_size_; ++i) {
      const std::size_t pos = step * batch_size_ + i;
      idx[i] = permutation(pos / n)[pos % n];
    }
    Batch<T> b = gather<T>(*data_, idx);
    if (augment_) augment(b, step);
    return b;
  }

  const std::vector<std::size_t>& permutation(std::size_t epoch) const {
    if (epoch != cached_epoch_ || perm_.empty()) {
      perm_.resize(data_->size());
      for (std::size_t i = 0; i < perm_.size(); ++i) perm_[i] = i;
      std::mt19937_64 rng(seed_ * 0x9e3779b97f4a7c15ull + epoch);
      for (std::size_t i = perm_.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(perm_[i - 1], perm_[pick(rng)]);
      }
      cached_epoch_ = epoch;
    }
    return perm_;
  }

 private:
  // Random crop from a 4-pixel zero-padded image plus horizontal flip.
  void augment(Batch<T>& b, std::size_t step) const {
    std::mt19937_64 rng((seed_ + 0xa5a5) * 0xbf58476d1ce4e5b9ull + step);
    std::uniform_int_distribution<int> shift(-4, 4), coin(0, 1);
    const std::size_t r = b.images.dim(1), ch = b.images.dim(3), per = r * r * ch;
    std::vector<T> out(per);
    for (std::size_t n = 0; n < b.labels.size(); ++n) {
      const int dy = shift(rng), dx = shift(rng);
      const bool flip = coin(rng) == 1;
      T* img = b.images.data().data() + n * per;
      for (std::size_t h = 0; h < r; ++h) {
        for (std::size_t w = 0; w < r; ++w) {
          const long sh = static_cast<long>(h) + dy;
          const long sw0 = static_cast<long>(flip ? r - 1 - w : w) + dx;
          const bool inside = sh >= 0 && sh < static_cast<long>(r) && sw0 >= 0 && sw0 < static_cast<long>(r);
          for (std::size_t c = 0; c < ch; ++c) {
            out[(h * r + w) * ch + c] = inside ? img[(static_cast<std::size_t>(sh) * r + static_cast<std::size_t>(sw0)) * ch + c] : T{0};
          }
        }
      }
      std::copy(out.begin(), out.end(), img);
    }
  }

  const Dataset* data_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  bool augment_;
  mutable std::vector<std::size_t> perm_;
  mutable std::size_t cached_epoch_ = 0;
};

// Sequential, unshuffled batches covering the dataset once; the last batch may
// be short.
inline std::size_t num_sequential_batches(const Dataset& d, std::size_t batch_size) {
  if (d.size() == 0) throw DatasetError("evaluation over empty dataset");
  return (d.size() + batch_size - 1) / batch_size;
}

template <typename T>
Batch<T> sequential_batch(const Dataset& d, std::size_t batch_size, std::size_t index) {
  const std::size_t start = index * batch_size;
  if (start >= d.size()) throw std::out_of_range("sequential batch index out of range");
  std::vector<std::size_t> idx;
  for (std::size_t i = start; i < std::min(d.size(), start + batch_size); ++i) idx.push_back(i);
  return gather<T>(d, idx);
}

}  // namespace qat::run
