#include "reference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vnsa::ref {

std::vector<Real> softmax(std::span<const Real> logits) {
  Real hi = logits[0];
  for (Real x : logits) hi = std::max(hi, x);
  std::vector<Real> out(logits.size());
  Real sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - hi);
    sum += out[i];
  }
  for (Real& x : out) x /= sum;
  return out;
}

std::vector<Real> matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dims()[0], k = a.dims()[1], n = b.dims()[1];
  std::vector<Real> c(m * n, 0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      Real acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += Real(a.at(i, p)) * Real(b.at(p, j));
      c[i * n + j] = acc;
    }
  return c;
}

std::size_t group_of(std::size_t head0, std::size_t heads, std::size_t groups) {
  return head0 / (heads / groups);
}

std::vector<Real> attend_rows(std::span<const float> query,
                              const std::vector<std::vector<Real>>& keys,
                              const std::vector<std::vector<Real>>& values) {
  const std::size_t d = query.size();
  std::vector<Real> out(d, 0);
  if (keys.empty()) return out;
  std::vector<Real> logits;
  for (const auto& key : keys) {
    Real dot = 0;
    for (std::size_t c = 0; c < d; ++c) dot += Real(query[c]) * key[c];
    logits.push_back(dot / std::sqrt(Real(d)));
  }
  const auto p = softmax(logits);
  for (std::size_t i = 0; i < keys.size(); ++i)
    for (std::size_t c = 0; c < d; ++c) out[c] += p[i] * values[i][c];
  return out;
}

std::vector<Real> masked_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                   std::size_t head, std::size_t pos, std::size_t groups,
                                   const std::function<bool(std::size_t)>& keep) {
  const std::size_t heads = q.dims()[0];
  const std::size_t d = q.dims()[2];
  const std::size_t g = group_of(head, heads, groups);
  std::vector<std::vector<Real>> keys, values;
  for (std::size_t j = 0; j <= pos; ++j) {
    if (!keep(j)) continue;
    std::vector<Real> kr(d), vr(d);
    for (std::size_t c = 0; c < d; ++c) {
      kr[c] = k.at(g, j, c);
      vr[c] = v.at(g, j, c);
    }
    keys.push_back(std::move(kr));
    values.push_back(std::move(vr));
  }
  std::vector<float> query(d);
  for (std::size_t c = 0; c < d; ++c) query[c] = q.at(head, pos, c);
  return attend_rows(query, keys, values);
}

std::vector<Real> dense_causal(const Tensor& q, const Tensor& k, const Tensor& v,
                               std::size_t groups) {
  const std::size_t heads = q.dims()[0], seq = q.dims()[1], d = q.dims()[2];
  std::vector<Real> out(heads * seq * d);
  for (std::size_t s = 0; s < heads; ++s)
    for (std::size_t t = 0; t < seq; ++t) {
      const auto row = masked_attention(q, k, v, s, t, groups, [](std::size_t) { return true; });
      std::copy(row.begin(), row.end(), out.begin() + static_cast<std::ptrdiff_t>((s * seq + t) * d));
    }
  return out;
}

std::vector<Real> block_mean(const Tensor& t, std::size_t group, std::size_t first,
                             std::size_t count) {
  const std::size_t d = t.dims()[2];
  std::vector<Real> out(d, 0);
  for (std::size_t p = first; p < first + count; ++p)
    for (std::size_t c = 0; c < d; ++c) out[c] += t.at(group, p, c);
  for (Real& x : out) x /= Real(count);
  return out;
}

std::vector<Real> gate_forward(std::span<const Real> x, std::span<const Real> w1,
                               std::span<const Real> b1, std::span<const Real> w2,
                               std::span<const Real> b2, std::size_t din, std::size_t dh,
                               std::size_t dout) {
  std::vector<Real> hidden(dh);
  for (std::size_t j = 0; j < dh; ++j) {
    Real z = b1[j];
    for (std::size_t i = 0; i < din; ++i) z += x[i] * w1[i * dh + j];
    hidden[j] = z > 0 ? z : 0;
  }
  std::vector<Real> out(dout);
  for (std::size_t k = 0; k < dout; ++k) {
    Real z = b2[k];
    for (std::size_t j = 0; j < dh; ++j) z += hidden[j] * w2[j * dout + k];
    out[k] = 1 / (1 + std::exp(-z));
  }
  return out;
}

std::vector<Real> gate_forward(std::span<const Real> x, const Tensor& w1, const Tensor& b1,
                               const Tensor& w2, const Tensor& b2) {
  auto widen = [](const Tensor& t) { return std::vector<Real>(t.data().begin(), t.data().end()); };
  return gate_forward(x, widen(w1), widen(b1), widen(w2), widen(b2), w1.dims()[0], w1.dims()[1],
                      w2.dims()[1]);
}

Real order_statistic_quantile(std::span<const double> values, Real q) {
  const std::size_t n = values.size();
  if (n == 0) throw std::invalid_argument("empty population");
  // k-th order statistic: the value with at most k smaller entries and more than k
  // entries not larger.
  auto kth = [&](std::size_t k) -> Real {
    for (double candidate : values) {
      std::size_t less = 0, not_greater = 0;
      for (double x : values) {
        if (x < candidate) ++less;
        if (x <= candidate) ++not_greater;
      }
      if (less <= k && k < not_greater) return candidate;
    }
    throw std::logic_error("order statistic not found");
  };
  const Real position = q * Real(n - 1);
  const auto lo = static_cast<std::size_t>(std::floor(position));
  const std::size_t hi = std::min(lo + 1, n - 1);
  const Real frac = position - Real(lo);
  const Real a = kth(lo);
  const Real b = kth(hi);
  return a + frac * (b - a);
}

Real mean(std::span<const double> values) {
  Real s = 0;
  for (double x : values) s += x;
  return s / Real(values.size());
}

Real pearson(std::span<const double> a, std::span<const double> b) {
  const Real ma = mean(a), mb = mean(b);
  Real cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va == 0 || vb == 0) return 0;
  return cov / std::sqrt(va * vb);
}

Real max_abs_diff(std::span<const float> a, std::span<const Real> b) {
  Real worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::fabs(Real(a[i]) - b[i]));
  return worst;
}

}  // namespace vnsa::ref
