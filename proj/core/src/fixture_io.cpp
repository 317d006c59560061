#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "vnsa/error.hpp"
#include "vnsa/tensor.hpp"

namespace vnsa {
namespace {

constexpr std::uint8_t kMagic[4] = {0x56, 0x4E, 0x53, 0x41};
constexpr std::size_t kHeaderFixed = 6;

void put_u32(std::uint8_t* out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (t.rank() == 0 || t.rank() > 255) {
    fail(ErrorKind::kFormat, "fixture rank must be in [1, 255], got " + std::to_string(t.rank()));
  }
  std::vector<std::uint8_t> out(kHeaderFixed + 4 * t.rank() + 4 * t.size());
  std::memcpy(out.data(), kMagic, 4);
  out[4] = kFixtureVersion;
  out[5] = static_cast<std::uint8_t>(t.rank());
  std::uint8_t* cursor = out.data() + kHeaderFixed;
  for (std::size_t d : t.dims()) {
    if (d > 0xFFFFFFFFu) fail(ErrorKind::kFormat, "dimension exceeds u32: " + std::to_string(d));
    put_u32(cursor, static_cast<std::uint32_t>(d));
    cursor += 4;
  }
  for (float v : t.data()) {
    put_u32(cursor, std::bit_cast<std::uint32_t>(v));
    cursor += 4;
  }
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderFixed || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    fail(ErrorKind::kFormat, "missing VNSA magic");
  }
  if (bytes[4] != kFixtureVersion) {
    fail(ErrorKind::kFormat, "unsupported fixture version " + std::to_string(bytes[4]));
  }
  const std::size_t ndim = bytes[5];
  if (ndim == 0) fail(ErrorKind::kFormat, "fixture has zero dimensions");
  if (bytes.size() < kHeaderFixed + 4 * ndim) fail(ErrorKind::kFormat, "truncated fixture header");
  Shape dims(ndim);
  std::size_t count = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    dims[i] = get_u32(bytes, kHeaderFixed + 4 * i);
    if (dims[i] == 0) fail(ErrorKind::kFormat, "fixture has a zero dimension");
    count *= dims[i];
  }
  const std::size_t payload = kHeaderFixed + 4 * ndim;
  if (bytes.size() != payload + 4 * count) {
    fail(ErrorKind::kFormat, "fixture payload size mismatch for " + shape_to_string(dims));
  }
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    data[i] = std::bit_cast<float>(get_u32(bytes, payload + 4 * i));
  }
  return Tensor(std::move(dims), std::move(data));
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::kIo, "cannot open for writing: " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::kIo, "write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::kIo, "cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open for reading: " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  write_file_atomic(path, encode_tensor(t));
}

Tensor load_tensor(const std::filesystem::path& path) {
  try {
    return decode_tensor(read_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kIo) throw;
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace vnsa
