#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ema/data.hpp"

using namespace ema;

namespace {

/// Two records with distinct labels and a pixel ramp.
std::vector<std::uint8_t> fixture_bytes() {
  std::vector<std::uint8_t> bytes;
  for (int r = 0; r < 2; ++r) {
    bytes.push_back(static_cast<std::uint8_t>(7 + r));   // coarse
    bytes.push_back(static_cast<std::uint8_t>(42 + r));  // fine
    for (int i = 0; i < 3072; ++i) bytes.push_back(static_cast<std::uint8_t>((i * 7 + r * 31) % 256));
  }
  return bytes;
}

std::filesystem::path write_temp(const std::string& name, const std::vector<std::uint8_t>& bytes) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream os(path, std::ios::binary);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  return path;
}

}  // namespace

TEST_CASE("CIFAR-100 fixture decodes to known pixels and labels") {
  const auto bytes = fixture_bytes();
  const Dataset d = decode_cifar100(bytes);
  REQUIRE(d.size() == 2);
  CHECK(d.labels == std::vector<int>{42, 43});
  CHECK(d.coarse_labels == std::vector<int>{7, 8});
  CHECK(d.images.shape() == Shape{2, 3, 32, 32});
  // Channel-major planes: green plane of record 1, row 2, column 5 is byte 1024 + 2*32 + 5.
  const int i = 1024 + 2 * 32 + 5;
  CHECK(d.images(1, 1, 2, 5) == static_cast<double>((i * 7 + 31) % 256) / 255.0);
  CHECK(d.images(0, 0, 0, 0) == 0.0);
  CHECK_NOTHROW(check_dataset(d));
}

TEST_CASE("CIFAR-100 fixture round-trips byte for byte") {
  const auto bytes = fixture_bytes();
  CHECK(encode_cifar100(decode_cifar100(bytes)) == bytes);
  const auto path = write_temp("ema_cifar_fixture.bin", bytes);
  const Dataset d = load_cifar100(path, Split::train);
  CHECK(encode_cifar100(d) == bytes);
  CHECK(count_cifar100_records(path) == 2);
  CHECK(load_cifar100(path, Split::train, 1).size() == 1);
  std::filesystem::remove(path);
}

TEST_CASE("malformed CIFAR-100 files are format errors") {
  auto bytes = fixture_bytes();
  bytes.pop_back();
  CHECK_THROWS_AS(decode_cifar100(bytes), FormatError);
  const auto truncated = write_temp("ema_cifar_truncated.bin", bytes);
  CHECK_THROWS_AS(load_cifar100(truncated, Split::train), FormatError);
  CHECK_THROWS_AS(count_cifar100_records(truncated), FormatError);
  std::filesystem::remove(truncated);

  auto bad_label = fixture_bytes();
  bad_label[1 + kCifarRecordBytes] = 100;
  CHECK_THROWS_AS(decode_cifar100(bad_label), FormatError);
  CHECK_THROWS_AS(decode_cifar100(std::vector<std::uint8_t>{}), FormatError);
  CHECK_THROWS_AS(load_cifar100("/nonexistent/ema/train.bin", Split::train), ConfigError);
}

TEST_CASE("directory paths resolve to the split file") {
  const auto dir = std::filesystem::temp_directory_path();
  CHECK(cifar100_file(dir, Split::test) == dir / "test.bin");
  CHECK(cifar100_file(dir / "x.bin", Split::test) == dir / "x.bin");
  CHECK(parse_split("train") == Split::train);
  CHECK_THROWS_AS(parse_split("val"), ConfigError);
}

TEST_CASE("synthetic quadrant data is deterministic") {
  const Dataset a = synth_quadrant(64, 3, 8, 8), b = synth_quadrant(64, 3, 8, 8);
  CHECK(a.images == b.images);
  CHECK(a.labels == b.labels);
  CHECK_FALSE(synth_quadrant(64, 4, 8, 8).images == a.images);
}

TEST_CASE("synthetic labels equal the quadrant of maximal energy") {
  for (auto [h, w] : {std::pair<Index, Index>{8, 8}, {16, 12}, {4, 6}}) {
    const Dataset d = synth_quadrant(300, 5, h, w);
    CHECK_NOTHROW(check_dataset(d));
    for (Index i = 0; i < d.size(); ++i) {
      const auto e = quadrant_energy(d, i);
      for (int q = 0; q < 4; ++q) {
        if (q != d.labels[i]) CHECK(e[q] < e[d.labels[i]]);
      }
    }
  }
}

TEST_CASE("synthetic class histogram is uniform") {
  const Dataset d = synth_quadrant(4000, 1, 8, 8);
  std::array<int, 4> counts{};
  for (int l : d.labels) ++counts[l];
  for (int c : counts) CHECK(std::abs(c - 1000) <= 50);
}

TEST_CASE("synthetic generator rejects bad arguments") {
  CHECK_THROWS_AS(synth_quadrant(10, 0, 7, 8), ConfigError);
  CHECK_THROWS_AS(synth_quadrant(0, 0, 8, 8), ConfigError);
}

TEST_CASE("take copies a contiguous block") {
  const Dataset d = synth_quadrant(10, 2, 4, 4);
  const Dataset t = take(d, 3, 4);
  CHECK(t.size() == 4);
  CHECK(t.labels[0] == d.labels[3]);
  CHECK(t.images(2, 1, 3, 0) == d.images(5, 1, 3, 0));
  CHECK_THROWS_AS(take(d, 8, 4), ConfigError);
}
