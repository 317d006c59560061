#include "vnsa/tensor.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "vnsa/error.hpp"

namespace vnsa {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kIndex: return "index";
    case ErrorKind::kDomain: return "domain";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kEmptySupport: return "empty support";
    case ErrorKind::kEmptySequence: return "empty sequence";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kInternal: return "internal";
  }
  return "unknown";
}

std::string shape_to_string(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << 'x';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

namespace {

std::size_t element_count(const Shape& dims) {
  if (dims.empty()) fail(ErrorKind::kShape, "tensor needs at least one dimension");
  std::size_t n = 1;
  for (std::size_t d : dims) {
    if (d == 0) fail(ErrorKind::kShape, "tensor dims must be positive, got " + shape_to_string(dims));
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(Shape dims) : dims_(std::move(dims)) {
  data_.assign(element_count(dims_), 0.0f);
}

Tensor::Tensor(Shape dims, std::vector<float> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  const std::size_t n = element_count(dims_);
  if (n != data_.size()) {
    fail(ErrorKind::kShape, "tensor " + shape_to_string(dims_) + " expects " +
                                std::to_string(n) + " values, got " +
                                std::to_string(data_.size()));
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= dims_.size()) {
    fail(ErrorKind::kIndex, "axis " + std::to_string(axis) + " out of range for " +
                                shape_to_string(dims_));
  }
  return dims_[axis];
}

std::size_t Tensor::offset(std::size_t i, std::size_t j) const {
  if (dims_.size() != 2 || i >= dims_[0] || j >= dims_[1]) {
    fail(ErrorKind::kIndex, "2-D index out of range for " + shape_to_string(dims_));
  }
  return i * dims_[1] + j;
}

std::size_t Tensor::offset(std::size_t i, std::size_t j, std::size_t k) const {
  if (dims_.size() != 3 || i >= dims_[0] || j >= dims_[1] || k >= dims_[2]) {
    fail(ErrorKind::kIndex, "3-D index out of range for " + shape_to_string(dims_));
  }
  return (i * dims_[1] + j) * dims_[2] + k;
}

float& Tensor::at(std::size_t i, std::size_t j) { return data_[offset(i, j)]; }
float Tensor::at(std::size_t i, std::size_t j) const { return data_[offset(i, j)]; }
float& Tensor::at(std::size_t i, std::size_t j, std::size_t k) { return data_[offset(i, j, k)]; }
float Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
  return data_[offset(i, j, k)];
}

std::span<float> Tensor::row(std::size_t i) {
  return std::span<float>(data_).subspan(offset(i, 0), dims_[1]);
}
std::span<const float> Tensor::row(std::size_t i) const {
  return std::span<const float>(data_).subspan(offset(i, 0), dims_[1]);
}
std::span<float> Tensor::row(std::size_t i, std::size_t j) {
  return std::span<float>(data_).subspan(offset(i, j, 0), dims_[2]);
}
std::span<const float> Tensor::row(std::size_t i, std::size_t j) const {
  return std::span<const float>(data_).subspan(offset(i, j, 0), dims_[2]);
}

bool Tensor::all_finite() const noexcept {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

float uniform_from_u64(std::uint64_t u) noexcept {
  const double unit = static_cast<double>(u) * 0x1p-64;
  float v = static_cast<float>(unit * 0.1 - 0.05);
  // Largest float below 0.05 and smallest float not below -0.05.
  const float hi = std::nextafter(0.05f, 0.0f);
  const float lo = std::nextafter(-0.05f, 0.0f);
  if (static_cast<double>(v) >= 0.05) v = hi;
  if (static_cast<double>(v) < -0.05) v = lo;
  return v;
}

Tensor seeded_uniform(Rng64& rng, const Shape& dims) {
  Tensor t(dims);
  for (float& v : t.data()) v = uniform_from_u64(rng.next_u64());
  return t;
}

std::vector<double> stable_softmax(std::span<const double> logits) {
  return stable_softmax(logits, std::vector<bool>(logits.size(), true));
}

std::vector<double> stable_softmax(std::span<const double> logits,
                                   const std::vector<bool>& mask) {
  if (logits.empty()) fail(ErrorKind::kEmptySupport, "empty attention support");
  if (mask.size() != logits.size()) {
    fail(ErrorKind::kShape, "softmax mask length " + std::to_string(mask.size()) +
                                " does not match logits length " +
                                std::to_string(logits.size()));
  }
  double max_logit = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!mask[i]) continue;
    if (!any || logits[i] > max_logit) max_logit = logits[i];
    any = true;
  }
  if (!any) fail(ErrorKind::kEmptySupport, "empty attention support");

  std::vector<double> out(logits.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!mask[i]) continue;
    out[i] = std::exp(logits[i] - max_logit);
    sum += out[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask[i]) out[i] /= sum;
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dims()[1] != b.dims()[0]) {
    fail(ErrorKind::kShape, "matmul shape mismatch: " + shape_to_string(a.dims()) + " * " +
                                shape_to_string(b.dims()));
  }
  const std::size_t m = a.dims()[0];
  const std::size_t k = a.dims()[1];
  const std::size_t n = b.dims()[1];
  Tensor c({m, n});
  const auto av = a.data();
  const auto bv = b.data();
  auto cv = c.data();
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    // Per output entry the inner index still runs in ascending order.
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const float* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += aip * static_cast<double>(brow[j]);
    }
    for (std::size_t j = 0; j < n; ++j) cv[i * n + j] = static_cast<float>(acc[j]);
  }
  return c;
}

}  // namespace vnsa
