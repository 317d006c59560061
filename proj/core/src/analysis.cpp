#include "vnsa/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "vnsa/error.hpp"

namespace vnsa {

std::uint64_t attention_budget(std::uint64_t blocks, std::uint64_t block_size, std::uint64_t window) {
  return blocks * block_size + window;
}

double attention_fraction(std::uint64_t blocks, std::uint64_t block_size, std::uint64_t window,
                          std::uint64_t seq_len) {
  if (seq_len < 2) fail(ErrorKind::kDomain, "attention fraction needs L >= 2");
  return 2.0 * static_cast<double>(attention_budget(blocks, block_size, window)) /
         static_cast<double>(seq_len - 1);
}

double local_ratio(std::uint64_t blocks, std::uint64_t block_size, std::uint64_t window) {
  const std::uint64_t budget = attention_budget(blocks, block_size, window);
  if (budget == 0) fail(ErrorKind::kDomain, "local ratio undefined for a zero budget");
  return static_cast<double>(window) / static_cast<double>(budget);
}

std::uint64_t info_context_length(std::uint64_t tokens_per_frame, std::uint64_t frames) {
  return tokens_per_frame * frames;
}

double quantile(std::span<const double> values, double q) {
  if (values.empty()) fail(ErrorKind::kDomain, "quantile of an empty population");
  if (!(q >= 0.0 && q <= 1.0)) fail(ErrorKind::kDomain, "quantile level outside [0, 1]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double position = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(position));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = position - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Quartiles quartiles(std::span<const double> values) {
  return Quartiles{quantile(values, 0.25), quantile(values, 0.5), quantile(values, 0.75)};
}

double SinkReport::sink_ratio() const {
  return tokens() == 0 ? 0.0 : static_cast<double>(sink_count) / static_cast<double>(tokens());
}

std::vector<std::size_t> SinkReport::flagged() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < is_sink.size(); ++i) {
    if (is_sink[i]) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> SinkReport::positional_histogram(std::size_t bins) const {
  if (bins == 0) fail(ErrorKind::kDomain, "histogram needs at least one bin");
  std::vector<std::size_t> hist(bins, 0);
  const std::size_t n = tokens();
  for (std::size_t i = 0; i < n; ++i) {
    if (is_sink[i]) ++hist[i * bins / n];
  }
  return hist;
}

SinkReport detect_sinks(std::span<const double> alphas, std::span<const double> vnorms) {
  if (alphas.size() != vnorms.size()) {
    fail(ErrorKind::kShape, "alphas (" + std::to_string(alphas.size()) + ") and value norms (" +
                                std::to_string(vnorms.size()) + ") differ in length");
  }
  if (alphas.empty()) fail(ErrorKind::kDomain, "sink detection needs at least one token");
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!std::isfinite(alphas[i]) || !std::isfinite(vnorms[i])) {
      fail(ErrorKind::kDomain, "non-finite alpha or value norm at token " + std::to_string(i));
    }
  }
  SinkReport r;
  r.alpha.assign(alphas.begin(), alphas.end());
  r.vnorm.assign(vnorms.begin(), vnorms.end());
  r.vnorm_quartiles = quartiles(vnorms);
  r.norm_threshold = r.vnorm_quartiles.median - kSinkIqrFactor * r.vnorm_quartiles.iqr();
  r.is_sink.resize(alphas.size());
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    r.is_sink[i] = alphas[i] > kSinkAlphaThreshold && vnorms[i] < r.norm_threshold;
    if (r.is_sink[i]) ++r.sink_count;
  }
  return r;
}

std::vector<double> compute_alphas(const std::vector<std::vector<double>>& rows,
                                   std::size_t num_keys) {
  std::vector<double> sum(num_keys, 0.0);
  std::vector<std::size_t> seen(num_keys, 0);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    const auto& row = rows[t];
    if (row.empty()) continue;
    if (row.size() > num_keys) {
      fail(ErrorKind::kShape, "row " + std::to_string(t) + " covers more than " +
                                  std::to_string(num_keys) + " keys");
    }
    double total = 0.0;
    for (double p : row) {
      if (!std::isfinite(p) || p < 0.0) {
        fail(ErrorKind::kValidation, "row " + std::to_string(t) + " has an invalid probability");
      }
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-4) {
      fail(ErrorKind::kValidation, "row " + std::to_string(t) + " sums to " +
                                       format_double(total) + ", not 1");
    }
    for (std::size_t k = 0; k < row.size(); ++k) {
      sum[k] += row[k];
      ++seen[k];
    }
  }
  std::vector<double> alpha(num_keys, 0.0);
  for (std::size_t k = 0; k < num_keys; ++k) {
    if (seen[k] > 0) alpha[k] = sum[k] / static_cast<double>(seen[k]);
  }
  return alpha;
}

std::vector<double> per_layer_sink_ratios(std::span<const SinkReport> layers) {
  std::vector<double> out;
  out.reserve(layers.size());
  for (const auto& r : layers) out.push_back(r.sink_ratio());
  return out;
}

namespace {

std::vector<double> branch_population(const GateValues& gates, Branch b) {
  std::vector<double> out;
  out.reserve(gates.tokens() * gates.heads());
  for (std::size_t t = 0; t < gates.tokens(); ++t) {
    for (std::size_t s = 0; s < gates.heads(); ++s) out.push_back(gates.at(t, s, b));
  }
  return out;
}

}  // namespace

double inter_head_similarity(const GateValues& gates, Branch branch) {
  const std::size_t heads = gates.heads();
  const std::size_t tokens = gates.tokens();
  if (heads < 2 || tokens < 2) {
    fail(ErrorKind::kDomain, "inter-head similarity needs at least 2 heads and 2 tokens");
  }
  std::vector<double> mean(heads, 0.0);
  for (std::size_t s = 0; s < heads; ++s) {
    for (std::size_t t = 0; t < tokens; ++t) mean[s] += gates.at(t, s, branch);
    mean[s] /= static_cast<double>(tokens);
  }
  std::vector<double> var(heads, 0.0);
  for (std::size_t s = 0; s < heads; ++s) {
    for (std::size_t t = 0; t < tokens; ++t) {
      const double c = gates.at(t, s, branch) - mean[s];
      var[s] += c * c;
    }
  }
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < heads; ++a) {
    for (std::size_t b = a + 1; b < heads; ++b, ++pairs) {
      if (var[a] == 0.0 || var[b] == 0.0) continue;
      double cov = 0.0;
      for (std::size_t t = 0; t < tokens; ++t) {
        cov += (gates.at(t, a, branch) - mean[a]) * (gates.at(t, b, branch) - mean[b]);
      }
      total += std::clamp(cov / std::sqrt(var[a] * var[b]), -1.0, 1.0);
    }
  }
  return total / static_cast<double>(pairs);
}

GateStats gate_statistics(std::span<const GateValues> layers) {
  if (layers.empty()) fail(ErrorKind::kDomain, "gate statistics need at least one layer");
  GateStats stats;
  for (const GateValues& g : layers) {
    if (g.tokens() == 0 || g.heads() == 0) {
      fail(ErrorKind::kDomain, "gate statistics need at least one token");
    }
    std::array<BranchGateStats, kNumBranches> row{};
    for (Branch b : kAllBranches) {
      const std::vector<double> pop = branch_population(g, b);
      double sum = 0.0;
      for (double x : pop) sum += x;
      auto& out = row[static_cast<std::size_t>(b)];
      out.mean = sum / static_cast<double>(pop.size());
      const Quartiles q = quartiles(pop);
      out.iqr = q.iqr();
      if (g.heads() >= 2 && g.tokens() >= 2) out.inter_head_corr = inter_head_similarity(g, b);
    }
    stats.layers.push_back(row);
  }
  return stats;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string sink_report_csv(const SinkReport& report) {
  std::ostringstream os;
  os << "token_index,alpha,vnorm,is_sink\n";
  for (std::size_t i = 0; i < report.tokens(); ++i) {
    os << (i + 1) << ',' << format_double(report.alpha[i]) << ','
       << format_double(report.vnorm[i]) << ',' << (report.is_sink[i] ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string cost_report_csv(const CostReport& report) {
  std::ostringstream os;
  os << "L,branch,analytic_count,measured_count,wall_ns\n";
  for (const CostRow& r : report.rows) {
    os << r.seq_len << ',' << r.branch << ',' << r.analytic << ',' << r.measured << ','
       << r.wall_ns << '\n';
  }
  return os.str();
}

std::string gate_stats_csv(const GateStats& stats) {
  std::ostringstream os;
  os << "layer,branch,mean,iqr,inter_head_corr\n";
  for (std::size_t l = 0; l < stats.layers.size(); ++l) {
    for (Branch b : kAllBranches) {
      const auto& s = stats.layers[l][static_cast<std::size_t>(b)];
      os << l << ',' << branch_name(b) << ',' << format_double(s.mean) << ','
         << format_double(s.iqr) << ','
         << (s.inter_head_corr ? format_double(*s.inter_head_corr) : std::string()) << '\n';
    }
  }
  return os.str();
}

CsvTable parse_csv(const std::string& text) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (!table.empty() && fields.size() != table.front().size()) {
      fail(ErrorKind::kFormat, "CSV row has " + std::to_string(fields.size()) +
                                   " fields, header has " + std::to_string(table.front().size()));
    }
    table.push_back(std::move(fields));
  }
  return table;
}

}  // namespace vnsa
