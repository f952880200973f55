#include "randrnn/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "randrnn/error.hpp"

namespace randrnn {

static_assert(std::endian::native == std::endian::little,
              "NPY payloads are read and written as host-order little-endian floats");

namespace {

constexpr std::string_view kMagic = "\x93NUMPY";
constexpr std::size_t kAlignment = 64;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\n')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\n')) s.remove_suffix(1);
  return s;
}

// Returns the raw text of the value bound to `key` inside a Python dict literal.
std::string_view dict_value(std::string_view dict, std::string_view key) {
  for (const char quote : {'\'', '"'}) {
    const std::string needle = std::string(1, quote) + std::string(key) + std::string(1, quote);
    const auto pos = dict.find(needle);
    if (pos == std::string_view::npos) continue;
    auto rest = dict.substr(pos + needle.size());
    rest = trim(rest);
    if (rest.empty() || rest.front() != ':') throw FormatError(fmt::format("npy header: no ':' after key {}", key));
    rest = trim(rest.substr(1));
    if (rest.empty()) break;
    std::size_t end = 0;
    if (rest.front() == '(') {
      end = rest.find(')');
      if (end == std::string_view::npos) throw FormatError("npy header: unterminated shape tuple");
      return rest.substr(0, end + 1);
    }
    if (rest.front() == '\'' || rest.front() == '"') {
      end = rest.find(rest.front(), 1);
      if (end == std::string_view::npos) throw FormatError("npy header: unterminated string");
      return rest.substr(0, end + 1);
    }
    end = rest.find_first_of(",}");
    return trim(rest.substr(0, end));
  }
  throw FormatError(fmt::format("npy header: missing key '{}'", key));
}

Shape parse_shape_tuple(std::string_view tuple) {
  if (tuple.size() < 2 || tuple.front() != '(' || tuple.back() != ')')
    throw FormatError("npy header: malformed shape");
  Shape shape;
  auto body = tuple.substr(1, tuple.size() - 2);
  while (!body.empty()) {
    const auto comma = body.find(',');
    const auto item = trim(body.substr(0, comma));
    if (!item.empty()) {
      std::size_t value = 0;
      for (const char c : item) {
        if (c < '0' || c > '9') throw FormatError(fmt::format("npy header: bad extent '{}'", item));
        value = value * 10 + static_cast<std::size_t>(c - '0');
      }
      shape.push_back(value);
    }
    if (comma == std::string_view::npos) break;
    body.remove_prefix(comma + 1);
  }
  return shape;
}

std::string shape_tuple(std::span<const std::size_t> shape) {
  if (shape.size() == 1) return fmt::format("({},)", shape[0]);
  return fmt::format("({})", fmt::join(shape, ", "));
}

}  // namespace

ActivationTensor ActivationTensor::zeros(Shape shape, int level) {
  ActivationTensor t;
  t.data.assign(element_count(shape), 0.0f);
  t.shape = std::move(shape);
  t.level = level;
  return t;
}

std::size_t ActivationTensor::maps() const {
  if (rank() != 3) throw ShapeError(fmt::format("expected rank-3 tensor, got {}", shape_string(shape)));
  return shape[0];
}

std::size_t ActivationTensor::side() const {
  if (rank() != 3 || shape[1] != shape[2])
    throw ShapeError(fmt::format("expected square [K, s, s] tensor, got {}", shape_string(shape)));
  return shape[1];
}

std::size_t element_count(std::span<const std::size_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(std::span<const std::size_t> shape) {
  return fmt::format("[{}]", fmt::join(shape, ", "));
}

void validate_tensor(const ActivationTensor& t) {
  if (t.rank() != 1 && t.rank() != 3)
    throw ValidationError(fmt::format("tensor rank must be 1 or 3, got shape {}", shape_string(t.shape)));
  if (std::any_of(t.shape.begin(), t.shape.end(), [](std::size_t e) { return e == 0; }))
    throw ValidationError(fmt::format("tensor extents must be positive, got {}", shape_string(t.shape)));
  if (element_count(t.shape) != t.data.size())
    throw ValidationError(fmt::format("shape {} holds {} elements but data has {}", shape_string(t.shape),
                                      element_count(t.shape), t.data.size()));
  const auto bad = std::find_if(t.data.begin(), t.data.end(), [](float v) { return !std::isfinite(v); });
  if (bad != t.data.end())
    throw ValidationError(fmt::format("non-finite value at flat index {}", bad - t.data.begin()));
}

std::string encode_npy(const ActivationTensor& t) {
  validate_tensor(t);
  std::string dict = fmt::format("{{'descr': '<f4', 'fortran_order': False, 'shape': {}, }}", shape_tuple(t.shape));
  // magic(6) + version(2) + header_len(2) + dict + padding + '\n'
  const std::size_t unpadded = kMagic.size() + 2 + 2 + dict.size() + 1;
  const std::size_t padded = (unpadded + kAlignment - 1) / kAlignment * kAlignment;
  dict.append(padded - unpadded, ' ');
  dict.push_back('\n');
  if (dict.size() > 0xFFFF) throw FormatError("npy header exceeds v1.0 length field");

  std::string out;
  out.reserve(padded + t.data.size() * sizeof(float));
  out.append(kMagic);
  out.push_back('\x01');
  out.push_back('\x00');
  out.push_back(static_cast<char>(dict.size() & 0xFF));
  out.push_back(static_cast<char>(dict.size() >> 8));
  out.append(dict);
  const auto payload_offset = out.size();
  out.resize(payload_offset + t.data.size() * sizeof(float));
  std::memcpy(out.data() + payload_offset, t.data.data(), t.data.size() * sizeof(float));
  return out;
}

ActivationTensor decode_npy(std::string_view bytes) {
  if (bytes.size() < 10 || bytes.substr(0, kMagic.size()) != kMagic) throw FormatError("not an NPY file (bad magic)");
  const auto major = static_cast<unsigned char>(bytes[6]);
  const auto minor = static_cast<unsigned char>(bytes[7]);
  if (major != 1 || minor != 0) throw FormatError(fmt::format("unsupported NPY version {}.{}", major, minor));
  const std::size_t header_len =
      static_cast<unsigned char>(bytes[8]) | (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
  if (bytes.size() < 10 + header_len) throw FormatError("truncated NPY header");
  const auto header = trim(bytes.substr(10, header_len));
  if (header.empty() || header.front() != '{' || header.back() != '}') throw FormatError("NPY header is not a dict");

  const auto descr = dict_value(header, "descr");
  if (descr != "'<f4'" && descr != "\"<f4\"")
    throw UnsupportedDtypeError(fmt::format("dtype {} is not little-endian float32", descr));
  const auto order = dict_value(header, "fortran_order");
  if (order == "True") throw UnsupportedDtypeError("Fortran-order arrays are not supported");
  if (order != "False") throw FormatError(fmt::format("bad fortran_order value {}", order));

  ActivationTensor t;
  t.shape = parse_shape_tuple(dict_value(header, "shape"));
  if (t.shape.empty()) throw FormatError("scalar NPY arrays are not tensors");
  const std::size_t count = element_count(t.shape);
  const auto payload = bytes.substr(10 + header_len);
  if (payload.size() != count * sizeof(float))
    throw FormatError(fmt::format("payload holds {} bytes, shape {} needs {}", payload.size(), shape_string(t.shape),
                                  count * sizeof(float)));
  t.data.resize(count);
  std::memcpy(t.data.data(), payload.data(), payload.size());
  validate_tensor(t);
  return t;
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError(fmt::format("read failed: {}", path.string()));
  return std::move(buffer).str();
}

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError(fmt::format("cannot create directory {}: {}", path.parent_path().string(), ec.message()));
  }
  auto tmp = path;
  tmp += ".part";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot open {} for writing", tmp.string()));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(fmt::format("write failed: {}", tmp.string()));
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(fmt::format("cannot move {} into place: {}", path.string(), ec.message()));
}

ActivationTensor read_tensor(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_npy(bytes);
  } catch (const UnsupportedDtypeError& e) {
    throw UnsupportedDtypeError(fmt::format("{}: {}", path.string(), e.what()));
  } catch (const FormatError& e) {
    throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
  } catch (const ValidationError& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_tensor(const ActivationTensor& t, const std::filesystem::path& path) {
  write_file_bytes(path, encode_npy(t));
}

std::string_view to_string(Preprocess p) noexcept {
  switch (p) {
    case Preprocess::reshape: return "reshape";
    case Preprocess::pool_maps: return "pool_maps";
    case Preprocess::pool_spatial: return "pool_spatial";
    case Preprocess::pool_both: return "pool_both";
  }
  return "?";
}

Preprocess parse_preprocess(std::string_view text) {
  if (text == "reshape") return Preprocess::reshape;
  if (text == "pool_maps") return Preprocess::pool_maps;
  if (text == "pool_spatial") return Preprocess::pool_spatial;
  if (text == "pool_both") return Preprocess::pool_both;
  throw ConfigError(fmt::format("unknown preprocess '{}'", text));
}

Preprocess LevelSpec::infer_preprocess(std::span<const std::size_t> raw, const std::array<std::size_t, 3>& target) {
  if (element_count(raw) == element_count(target)) return Preprocess::reshape;
  if (raw.size() == 1) return Preprocess::pool_maps;
  const bool same_maps = raw[0] == target[0];
  const bool same_side = raw.size() == 3 && raw[1] == target[1];
  if (same_maps) return Preprocess::pool_spatial;
  if (same_side) return Preprocess::pool_maps;
  return Preprocess::pool_both;
}

void LevelSpec::validate() const {
  if (level < 1 || level > kNumLevels) throw ConfigError(fmt::format("level {} outside 1..{}", level, kNumLevels));
  if (raw_shape.size() != 1 && raw_shape.size() != 3)
    throw ConfigError(fmt::format("level {}: raw shape {} must be rank 1 or 3", level, shape_string(raw_shape)));
  if (std::any_of(raw_shape.begin(), raw_shape.end(), [](std::size_t e) { return e == 0; }) ||
      std::any_of(target_shape.begin(), target_shape.end(), [](std::size_t e) { return e == 0; }))
    throw ConfigError(fmt::format("level {}: zero extent", level));
  if (target_shape[1] != target_shape[2])
    throw ConfigError(fmt::format("level {}: target maps must be square, got {}", level, shape_string(target_shape)));
  if (element_count(target_shape) > element_count(raw_shape))
    throw ConfigError(fmt::format("level {}: target {} is larger than raw {}", level, shape_string(target_shape),
                                  shape_string(raw_shape)));
}

}  // namespace randrnn
