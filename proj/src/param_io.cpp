#include "ema/param_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace ema {

namespace {

constexpr std::uint8_t kMagic[4] = {'E', 'M', 'A', '1'};
constexpr std::size_t kHeaderBytes = 16;

template <class U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <class U>
U get_le(const std::uint8_t* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

AttentionKind kind_of(const AnyParams& p) {
  if (std::holds_alternative<EmaParams>(p)) return AttentionKind::ema;
  if (std::holds_alternative<CaParams>(p)) return AttentionKind::ca;
  return AttentionKind::se;
}

std::uint32_t narrow_u32(Index v) {
  if (v < 0 || v > static_cast<Index>(UINT32_MAX)) throw FormatError("header field out of u32 range");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::uint32_t kind_tag(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::ema:
      return 1;
    case AttentionKind::ca:
      return 2;
    case AttentionKind::se:
      return 3;
    case AttentionKind::none:
      break;
  }
  throw ConfigError("no parameter container for attention kind 'none'");
}

std::vector<std::uint8_t> encode_params(const AnyParams& params) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  std::visit(
      [&](const auto& p) {
        Index hyper = 0;
        if constexpr (std::is_same_v<std::decay_t<decltype(p)>, EmaParams>) {
          hyper = p.groups;
        } else {
          hyper = p.reduction;
        }
        put_le(out, kind_tag(kind_of(params)));
        put_le(out, narrow_u32(p.channels));
        put_le(out, narrow_u32(hyper));
        p.visit([&](std::string_view, const Tensor& t) {
          for (double v : t.values()) put_le(out, std::bit_cast<std::uint64_t>(v));
        });
      },
      params);
  return out;
}

AnyParams decode_params(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("parameter container: missing EMA1 magic");
  }
  const auto tag = get_le<std::uint32_t>(bytes.data() + 4);
  const auto channels = static_cast<Index>(get_le<std::uint32_t>(bytes.data() + 8));
  const auto hyper = static_cast<Index>(get_le<std::uint32_t>(bytes.data() + 12));

  AnyParams params;
  try {
    switch (tag) {
      case 1:
        params = ema_zeros(channels, hyper);
        break;
      case 2:
        params = ca_zeros(channels, hyper);
        break;
      case 3:
        params = se_zeros(channels, hyper);
        break;
      default:
        throw FormatError("parameter container: unknown kind tag " + std::to_string(tag));
    }
  } catch (const ConfigError& e) {
    throw FormatError(std::string("parameter container: ") + e.what());
  }

  const std::size_t expected = static_cast<std::size_t>(std::visit([](const auto& p) { return buffer_elements(p); }, params));
  const std::size_t payload = bytes.size() - kHeaderBytes;
  if (payload != expected * sizeof(double)) {
    throw FormatError("parameter container: header implies " + std::to_string(expected) + " values, payload holds " +
                      std::to_string(payload) + " bytes");
  }
  const std::uint8_t* cursor = bytes.data() + kHeaderBytes;
  std::visit(
      [&](auto& p) {
        p.visit([&](std::string_view, Tensor& t) {
          for (Index i = 0; i < t.size(); ++i) {
            t[i] = std::bit_cast<double>(get_le<std::uint64_t>(cursor));
            cursor += sizeof(double);
          }
        });
      },
      params);
  return params;
}

void save_params(const std::filesystem::path& path, const AnyParams& params) {
  const auto bytes = encode_params(params);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw FormatError("write failed: " + path.string());
}

AnyParams load_params(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_params(bytes);
}

}  // namespace ema
