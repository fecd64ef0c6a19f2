#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ema/tensor.hpp"

namespace ema {

/// Images (N,C,H,W) in [0,1] with one integer label per image.
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  int num_classes = 0;
  /// CIFAR-100 only; kept so a loaded file can be re-encoded byte for byte.
  std::vector<int> coarse_labels;

  Index size() const { return static_cast<Index>(labels.size()); }
};

/// Throws unless labels fit the class count and pixel values lie in [0,1].
void check_dataset(const Dataset& d);

/// Rows [start, start + count) as a new dataset.
Dataset take(const Dataset& d, Index start, Index count);

// ---------------------------------------------------------------------------
// CIFAR-100 binary files: 3,074-byte records of
// [coarse label][fine label][1,024 R][1,024 G][1,024 B], each plane row-major 32x32.

inline constexpr Index kCifarSide = 32;
inline constexpr Index kCifarRecordBytes = 2 + 3 * kCifarSide * kCifarSide;
inline constexpr int kCifarFineClasses = 100;

enum class Split { train, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

/// A directory resolves to <dir>/train.bin or <dir>/test.bin; a file path is used as is.
std::filesystem::path cifar100_file(const std::filesystem::path& path, Split split);

/// Parses records in memory; at most `limit` records if given.
Dataset decode_cifar100(std::span<const std::uint8_t> bytes, std::optional<Index> limit = std::nullopt);
std::vector<std::uint8_t> encode_cifar100(const Dataset& d);

Dataset load_cifar100(const std::filesystem::path& path, Split split, std::optional<Index> limit = std::nullopt);

/// Streams the file, validating size and every fine label, without keeping pixels.
Index count_cifar100_records(const std::filesystem::path& file);

// ---------------------------------------------------------------------------

/// Three-channel images holding one Gaussian blob (peak 1) inside one quadrant plus
/// uniform noise in [-0.1, 0.1], clamped to [0,1]. Label = quadrant index
/// (0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right), which always holds
/// the strictly largest summed intensity. Labels are a seeded shuffle of a
/// balanced list, so class counts differ by at most one.
Dataset synth_quadrant(Index n, std::uint64_t seed, Index height, Index width);

/// Summed intensity of each quadrant of image i, in label order.
std::array<double, 4> quadrant_energy(const Dataset& d, Index i);

}  // namespace ema
