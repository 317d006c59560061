#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace vnsa {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& dims);

/// Dense row-major float32 tensor. Dimensions are fixed at construction;
/// every dimension must be positive.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape dims);
  Tensor(Shape dims, std::vector<float> data);

  static Tensor zeros(Shape dims) { return Tensor(std::move(dims)); }

  const Shape& dims() const noexcept { return dims_; }
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  float& operator[](std::size_t i) noexcept { return data_[i]; }
  float operator[](std::size_t i) const noexcept { return data_[i]; }

  float& at(std::size_t i, std::size_t j);
  float at(std::size_t i, std::size_t j) const;
  float& at(std::size_t i, std::size_t j, std::size_t k);
  float at(std::size_t i, std::size_t j, std::size_t k) const;

  /// Contiguous innermost row addressed by all leading indices.
  std::span<float> row(std::size_t i);
  std::span<const float> row(std::size_t i) const;
  std::span<float> row(std::size_t i, std::size_t j);
  std::span<const float> row(std::size_t i, std::size_t j) const;

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  std::size_t offset(std::size_t i, std::size_t j) const;
  std::size_t offset(std::size_t i, std::size_t j, std::size_t k) const;

  Shape dims_;
  std::vector<float> data_;
};

/// splitmix64 generator. The stream depends only on the seed.
class Rng64 {
 public:
  explicit Rng64(std::uint64_t seed = 0) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

/// Maps one 64-bit draw to [-0.05, 0.05) as (u / 2^64) * 0.1 - 0.05,
/// evaluated in double and rounded to float. The two float values that
/// rounding can push onto or past the interval ends are pulled back inside.
float uniform_from_u64(std::uint64_t u) noexcept;

/// Fills a tensor of the given shape in row-major order.
Tensor seeded_uniform(Rng64& rng, const Shape& dims);

/// Softmax over `logits`, computed as exp(x - max) with the max taken over
/// unmasked entries and the normalizer summed left to right in double.
/// Masked entries come out as exactly 0.
std::vector<double> stable_softmax(std::span<const double> logits);
std::vector<double> stable_softmax(std::span<const double> logits,
                                   const std::vector<bool>& mask);

/// 2-D matrix product. Each entry accumulates in double over the inner index
/// in ascending order before rounding to float.
Tensor matmul(const Tensor& a, const Tensor& b);

// Binary fixture format: "VNSA", version 0x01, u8 ndim, ndim x u32 LE dims,
// then row-major f32 LE payload.
inline constexpr std::uint8_t kFixtureVersion = 0x01;

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

/// Whole-file write via a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace vnsa
