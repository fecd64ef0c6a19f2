#include "ema/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "ema/error.hpp"

namespace ema {

void check_dataset(const Dataset& d) {
  const Shape& s = d.images.shape();
  if (s.rank() != 4 || s[0] != d.size()) {
    throw ShapeError("dataset images " + s.str() + " do not match " + std::to_string(d.size()) + " labels");
  }
  for (int label : d.labels) {
    if (label < 0 || label >= d.num_classes) throw FormatError("label " + std::to_string(label) + " out of range");
  }
  if (d.images.array().minCoeff() < 0.0 || d.images.array().maxCoeff() > 1.0) {
    throw FormatError("pixel values outside [0,1]");
  }
}

Dataset take(const Dataset& d, Index start, Index count) {
  if (start < 0 || count < 1 || start + count > d.size()) {
    throw ConfigError("take: rows [" + std::to_string(start) + ", " + std::to_string(start + count) +
                      ") outside dataset of " + std::to_string(d.size()));
  }
  const Shape& s = d.images.shape();
  const Index per = s[1] * s[2] * s[3];
  Dataset out;
  out.num_classes = d.num_classes;
  out.images = Tensor(Shape{count, s[1], s[2], s[3]}, d.images.array().segment(start * per, count * per).eval());
  out.labels.assign(d.labels.begin() + start, d.labels.begin() + start + count);
  if (!d.coarse_labels.empty()) {
    out.coarse_labels.assign(d.coarse_labels.begin() + start, d.coarse_labels.begin() + start + count);
  }
  return out;
}

std::string_view to_string(Split split) { return split == Split::train ? "train" : "test"; }

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(name) + "'");
}

std::filesystem::path cifar100_file(const std::filesystem::path& path, Split split) {
  if (std::filesystem::is_directory(path)) return path / (std::string(to_string(split)) + ".bin");
  return path;
}

namespace {

constexpr Index kPixelBytes = kCifarRecordBytes - 2;

Index record_count(std::uintmax_t bytes) {
  if (bytes == 0 || bytes % kCifarRecordBytes != 0) {
    throw FormatError("CIFAR-100 file size " + std::to_string(bytes) + " is not a positive multiple of " +
                      std::to_string(kCifarRecordBytes));
  }
  return static_cast<Index>(bytes / kCifarRecordBytes);
}

void check_fine_label(std::uint8_t label, Index record) {
  if (label >= kCifarFineClasses) {
    throw FormatError("record " + std::to_string(record) + ": fine label " + std::to_string(label) + " >= 100");
  }
}

Index apply_limit(Index n, std::optional<Index> limit) {
  if (!limit) return n;
  if (*limit < 1) throw ConfigError("record limit must be >= 1");
  return std::min(n, *limit);
}

void decode_record(const std::uint8_t* rec, Index r, Dataset& d) {
  check_fine_label(rec[1], r);
  d.coarse_labels.push_back(rec[0]);
  d.labels.push_back(rec[1]);
  double* dst = d.images.data() + r * kPixelBytes;
  for (Index i = 0; i < kPixelBytes; ++i) dst[i] = rec[2 + i] / 255.0;
}

Dataset empty_cifar(Index n) {
  Dataset d;
  d.num_classes = kCifarFineClasses;
  d.images = Tensor(Shape{n, 3, kCifarSide, kCifarSide});
  d.labels.reserve(n);
  d.coarse_labels.reserve(n);
  return d;
}

}  // namespace

Dataset decode_cifar100(std::span<const std::uint8_t> bytes, std::optional<Index> limit) {
  const Index n = apply_limit(record_count(bytes.size()), limit);
  Dataset d = empty_cifar(n);
  for (Index r = 0; r < n; ++r) decode_record(bytes.data() + r * kCifarRecordBytes, r, d);
  return d;
}

std::vector<std::uint8_t> encode_cifar100(const Dataset& d) {
  const Shape& s = d.images.shape();
  if (s != Shape{d.size(), 3, kCifarSide, kCifarSide}) {
    throw ShapeError("encode_cifar100: expected (N,3,32,32) images, got " + s.str());
  }
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(d.size() * kCifarRecordBytes));
  for (Index r = 0; r < d.size(); ++r) {
    out.push_back(static_cast<std::uint8_t>(d.coarse_labels.empty() ? 0 : d.coarse_labels[r]));
    out.push_back(static_cast<std::uint8_t>(d.labels[r]));
    const double* src = d.images.data() + r * kPixelBytes;
    for (Index i = 0; i < kPixelBytes; ++i) {
      out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(src[i], 0.0, 1.0) * 255.0)));
    }
  }
  return out;
}

Dataset load_cifar100(const std::filesystem::path& path, Split split, std::optional<Index> limit) {
  const auto file = cifar100_file(path, split);
  std::ifstream is(file, std::ios::binary);
  if (!is) throw ConfigError("cannot open CIFAR-100 file " + file.string());
  const Index n = apply_limit(record_count(std::filesystem::file_size(file)), limit);

  Dataset d = empty_cifar(n);
  std::vector<std::uint8_t> rec(kCifarRecordBytes);
  for (Index r = 0; r < n; ++r) {
    if (!is.read(reinterpret_cast<char*>(rec.data()), kCifarRecordBytes)) {
      throw FormatError("short read in " + file.string() + " at record " + std::to_string(r));
    }
    decode_record(rec.data(), r, d);
  }
  return d;
}

Index count_cifar100_records(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw ConfigError("cannot open CIFAR-100 file " + file.string());
  const Index n = record_count(std::filesystem::file_size(file));
  std::vector<char> rec(kCifarRecordBytes);
  for (Index r = 0; r < n; ++r) {
    if (!is.read(rec.data(), kCifarRecordBytes)) {
      throw FormatError("short read in " + file.string() + " at record " + std::to_string(r));
    }
    check_fine_label(static_cast<std::uint8_t>(rec[1]), r);
  }
  return n;
}

// ---------------------------------------------------------------------------

std::array<double, 4> quadrant_energy(const Dataset& d, Index i) {
  const Shape& s = d.images.shape();
  const Index h2 = s[2] / 2, w2 = s[3] / 2;
  std::array<double, 4> e{};
  for (Index c = 0; c < s[1]; ++c) {
    for (Index y = 0; y < s[2]; ++y) {
      for (Index x = 0; x < s[3]; ++x) {
        const int q = (y >= h2 ? 2 : 0) + (x >= w2 ? 1 : 0);
        e[q] += d.images(i, c, y, x);
      }
    }
  }
  return e;
}

Dataset synth_quadrant(Index n, std::uint64_t seed, Index height, Index width) {
  if (n < 1) throw ConfigError("synth_quadrant: n must be >= 1");
  if (height < 2 || width < 2 || height % 2 != 0 || width % 2 != 0) {
    throw ConfigError("synth_quadrant: height and width must be even and >= 2, got " + std::to_string(height) + "x" +
                      std::to_string(width));
  }
  constexpr Index kChannels = 3;
  constexpr double kNoise = 0.1;
  const double sigma = std::max(0.5, static_cast<double>(std::min(height, width)) / 8.0);
  const Index h2 = height / 2, w2 = width / 2;

  std::mt19937_64 rng(seed);
  Dataset d;
  d.num_classes = 4;
  d.labels.resize(n);
  for (Index i = 0; i < n; ++i) d.labels[i] = static_cast<int>(i % 4);
  std::shuffle(d.labels.begin(), d.labels.end(), rng);
  d.images = Tensor(Shape{n, kChannels, height, width});

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> noise(-kNoise, kNoise);
  const Index plane = height * width;
  for (Index i = 0; i < n; ++i) {
    const int label = d.labels[i];
    const double y0 = (label >= 2 ? h2 : 0), x0 = (label % 2 == 1 ? w2 : 0);
    double* img = d.images.data() + i * kChannels * plane;
    // Rejection keeps the quadrant-energy invariant exact even when noise and clamping fight the blob.
    for (;;) {
      const double cy = y0 + unit(rng) * static_cast<double>(h2 - 1);
      const double cx = x0 + unit(rng) * static_cast<double>(w2 - 1);
      for (Index c = 0; c < kChannels; ++c) {
        for (Index y = 0; y < height; ++y) {
          for (Index x = 0; x < width; ++x) {
            const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
            const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma)) + noise(rng);
            img[c * plane + y * width + x] = std::clamp(v, 0.0, 1.0);
          }
        }
      }
      const auto e = quadrant_energy(d, i);
      bool strict = true;
      for (int q = 0; q < 4; ++q) strict = strict && (q == label || e[q] < e[label]);
      if (strict) break;
    }
  }
  return d;
}

}  // namespace ema
