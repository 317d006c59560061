#include "run_config.hpp"

#include <charconv>
#include <sstream>

#include "vnsa/error.hpp"

namespace vnsa::cli {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void bad(std::size_t line, const std::string& key, const std::string& what) {
  fail(ErrorKind::kValidation, "config line " + std::to_string(line) + ", key '" + key + "': " + what);
}

std::uint64_t parse_uint(std::size_t line, const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) {
    bad(line, key, "expected a nonnegative integer, got '" + text + "'");
  }
  return v;
}

std::vector<std::pair<std::size_t, std::size_t>> parse_spans(std::size_t line,
                                                             const std::string& key,
                                                             const std::string& text) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (text == "none") return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    const auto dash = item.find('-');
    if (dash == std::string::npos) bad(line, key, "expected start-end pairs, got '" + item + "'");
    const auto first = parse_uint(line, key, trim(item.substr(0, dash)));
    const auto last = parse_uint(line, key, trim(item.substr(dash + 1)));
    out.emplace_back(first, last);
  }
  return out;
}

std::array<double, kNumBranches> parse_triple(std::size_t line, const std::string& key,
                                              const std::string& text) {
  std::array<double, kNumBranches> out{};
  std::stringstream ss(text);
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i >= kNumBranches) bad(line, key, "expected three comma-separated gates");
    item = trim(item);
    try {
      std::size_t used = 0;
      out[i] = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      bad(line, key, "malformed gate value '" + item + "'");
    }
    if (!(out[i] >= 0.0 && out[i] <= 1.0)) bad(line, key, "gate values must lie in [0, 1]");
    ++i;
  }
  if (i != kNumBranches) bad(line, key, "expected three comma-separated gates");
  return out;
}

}  // namespace

ModalitySpans RunConfig::spans() const {
  if (!vision_spans) return ModalitySpans::all(Modality::kVision, seq_len);
  return ModalitySpans::from_vision(*vision_spans, seq_len);
}

void RunConfig::validate() const {
  layout.validate();
  sparse.validate();
  if (seq_len == 0) fail(ErrorKind::kValidation, "seq_len must be >= 1");
  if (tokens_per_frame && frames && *tokens_per_frame * *frames != seq_len) {
    fail(ErrorKind::kValidation, "seq_len (" + std::to_string(seq_len) +
                                     ") must equal tokens_per_frame * frames (" +
                                     std::to_string(*tokens_per_frame * *frames) + ")");
  }
  spans();
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  bool explicit_len = false;
  std::size_t len_line = 0;
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  std::vector<std::string> seen;
  while (std::getline(in, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string content = trim(raw);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) bad(line, content, "expected 'key = value'");
    const std::string key = trim(content.substr(0, eq));
    const std::string value = trim(content.substr(eq + 1));
    for (const auto& k : seen) {
      if (k == key) bad(line, key, "duplicate key");
    }
    seen.push_back(key);

    if (key == "heads") cfg.layout.heads = parse_uint(line, key, value);
    else if (key == "kv_heads") cfg.layout.kv_groups = parse_uint(line, key, value);
    else if (key == "head_dim") cfg.layout.head_dim = parse_uint(line, key, value);
    else if (key == "block_size") cfg.sparse.block_size = parse_uint(line, key, value);
    else if (key == "select_blocks") cfg.sparse.select_blocks = parse_uint(line, key, value);
    else if (key == "window") cfg.sparse.window = parse_uint(line, key, value);
    else if (key == "seq_len") {
      cfg.seq_len = parse_uint(line, key, value);
      explicit_len = true;
      len_line = line;
    }
    else if (key == "tokens_per_frame") cfg.tokens_per_frame = parse_uint(line, key, value);
    else if (key == "frames") cfg.frames = parse_uint(line, key, value);
    else if (key == "seed") cfg.seed = parse_uint(line, key, value);
    else if (key == "vision_spans") cfg.vision_spans = parse_spans(line, key, value);
    else if (key == "gate_override") cfg.gate_override = parse_triple(line, key, value);
    else if (key == "fixture_dir") cfg.fixture_dir = value;
    else if (key == "output_dir") cfg.output_dir = value;
    else bad(line, key, "unknown key");

    // Per-key checks that can name the offending line.
    if (key == "block_size" && cfg.sparse.block_size == 0) bad(line, key, "must be >= 1");
    if ((key == "heads" && cfg.layout.heads == 0) || (key == "kv_heads" && cfg.layout.kv_groups == 0) ||
        (key == "head_dim" && cfg.layout.head_dim == 0) || (key == "seq_len" && cfg.seq_len == 0) ||
        (key == "tokens_per_frame" && *cfg.tokens_per_frame == 0) ||
        (key == "frames" && *cfg.frames == 0)) {
      bad(line, key, "must be >= 1");
    }
  }
  if (cfg.tokens_per_frame && cfg.frames) {
    const std::size_t product = *cfg.tokens_per_frame * *cfg.frames;
    if (!explicit_len) {
      cfg.seq_len = product;
    } else if (cfg.seq_len != product) {
      bad(len_line, "seq_len", "must equal tokens_per_frame * frames = " + std::to_string(product));
    }
  }
  try {
    cfg.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kValidation, std::string("config: ") + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_config(std::string(bytes.begin(), bytes.end()));
}

}  // namespace vnsa::cli
