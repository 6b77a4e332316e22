#pragma once

// Scenario files, seeded runs and parameter sweeps.
//
// A scenario is flat `key = value` text grouped in [sections]; `#` and `;`
// start comments. Every key is optional. See scenarios/default.cfg for the
// full list with defaults.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "artic/correlation_map_file.hpp"
#include "artic/metrics.hpp"
#include "artic/session.hpp"

namespace artic {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid command-line input (as opposed to an invalid scenario file).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CorrelationSource {
  enum class Kind { none, uniform, file };
  Kind kind = Kind::none;
  double rho = 0.0;
  std::filesystem::path path;
};

struct Scenario {
  std::string id = "default";
  std::vector<std::uint64_t> seeds{1};
  double duration_s = 60.0;
  double drain_s = 5.0;

  LinkConfig link;
  std::optional<double> feedback_delay_ms;
  double feedback_loss = 0.0;

  double mtu_payload_bytes = kDefaultMtuPayloadBytes;
  double frame_rate = 30.0;
  std::optional<double> bitrate_kbps;
  std::optional<double> frame_bytes;
  int width = 1280;
  int height = 720;

  double gamma = kDefaultGamma;
  int patch_size = kDefaultPatchSize;
  RateModelParams rate_model;
  CorrelationSource correlation;

  RateMode mode = RateMode::adaptive;
  RateControllerConfig controller;

  std::optional<double> deadline_ms;       // default: one-way delay + 20 ms
  std::optional<double> max_substitute_age_ms;  // default: one sampling interval

  bool suppress_skipped_retransmit = true;
  double nack_check_ms = 5.0;
  std::optional<double> rtt_ms;
  int nack_max_retries = 10;
};

inline constexpr double kDefaultDeadlineSlackMs = 20.0;

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<std::int64_t> parse_int(const std::string& s) {
  std::int64_t v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace detail

/// Parses "1,2,3" or "1..5" (inclusive) or a mix of both.
inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const std::string& item : detail::split(text, ',')) {
    const auto dots = item.find("..");
    if (dots != std::string::npos) {
      const auto lo = detail::parse_int(detail::trim(item.substr(0, dots)));
      const auto hi = detail::parse_int(detail::trim(item.substr(dots + 2)));
      if (!lo || !hi || *lo < 0 || *hi < *lo) throw ConfigError("bad seed range '" + item + "'");
      for (std::int64_t s = *lo; s <= *hi; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
    } else {
      const auto v = detail::parse_int(item);
      if (!v || *v < 0) throw ConfigError("bad seed '" + item + "'");
      seeds.push_back(static_cast<std::uint64_t>(*v));
    }
  }
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());
  return seeds;
}

namespace detail {

class ScenarioParser {
 public:
  ScenarioParser(std::string source, std::filesystem::path base_dir)
      : source_(std::move(source)), base_dir_(std::move(base_dir)) {}

  Scenario parse(std::istream& in) {
    Scenario sc;
    std::string raw;
    std::string section;
    int line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      line_ = line_no;
      const auto hash = raw.find_first_of("#;");
      std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') fail("malformed section header '" + line + "'");
        section = trim(line.substr(1, line.size() - 2));
        if (!known_section(section)) fail("unknown section [" + section + "]");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) fail("expected 'key = value', got '" + line + "'");
      if (section.empty()) fail("key outside of any [section]");
      key_ = section + "." + trim(line.substr(0, eq));
      value_ = trim(line.substr(eq + 1));
      if (value_.empty()) fail("empty value");
      if (!seen_.insert(key_).second) fail("duplicate key");
      apply(sc);
    }
    finalize(sc);
    return sc;
  }

 private:
  static bool known_section(const std::string& s) {
    for (const char* k : {"run", "link", "video", "allocator", "controller", "sampler", "transport"}) {
      if (s == k) return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    std::string where = source_ + ":" + std::to_string(line_) + ": ";
    if (!key_.empty()) where += key_ + ": ";
    throw ConfigError(where + msg);
  }

  double number() const {
    auto v = parse_double(value_);
    if (!v) fail("expected a number, got '" + value_ + "'");
    return *v;
  }
  double positive() const {
    const double v = number();
    if (!(v > 0.0)) fail("must be positive");
    return v;
  }
  double non_negative() const {
    const double v = number();
    if (!(v >= 0.0)) fail("must be non-negative");
    return v;
  }
  double probability() const {
    const double v = number();
    if (!(v >= 0.0 && v <= 1.0)) fail("must lie in [0, 1]");
    return v;
  }
  int integer(int lo, int hi) const {
    auto v = parse_int(value_);
    if (!v) fail("expected an integer, got '" + value_ + "'");
    if (*v < lo || *v > hi) fail("must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return static_cast<int>(*v);
  }
  bool boolean() const {
    if (value_ == "true" || value_ == "yes" || value_ == "on" || value_ == "1") return true;
    if (value_ == "false" || value_ == "no" || value_ == "off" || value_ == "0") return false;
    fail("expected true or false, got '" + value_ + "'");
  }

  void apply(Scenario& sc) {
    const std::string& k = key_;
    if (k == "run.id") sc.id = value_;
    else if (k == "run.seeds") {
      try {
        sc.seeds = parse_seed_list(value_);
      } catch (const ConfigError& e) {
        fail(e.what());
      }
    }
    else if (k == "run.duration_s") sc.duration_s = positive();
    else if (k == "run.drain_s") sc.drain_s = non_negative();

    else if (k == "link.bandwidth_mbps") sc.link.bandwidth_bps = positive() * 1e6;
    else if (k == "link.one_way_delay_ms") sc.link.one_way_delay_ms = non_negative();
    else if (k == "link.loss") sc.link.loss.p = probability();
    else if (k == "link.loss_model") {
      if (value_ == "iid") sc.link.loss.kind = LossModel::Kind::iid_bernoulli;
      else if (value_ == "gilbert_elliott") sc.link.loss.kind = LossModel::Kind::gilbert_elliott;
      else fail("expected iid or gilbert_elliott, got '" + value_ + "'");
    }
    else if (k == "link.ge_good_to_bad") sc.link.loss.p_good_to_bad = probability();
    else if (k == "link.ge_bad_to_good") sc.link.loss.p_bad_to_good = probability();
    else if (k == "link.ge_loss_in_bad") sc.link.loss.loss_in_bad = probability();
    else if (k == "link.queue_cap_bits") {
      if (value_ == "unbounded") sc.link.queue_cap_bits.reset();
      else sc.link.queue_cap_bits = positive();
    }
    else if (k == "link.feedback_delay_ms") sc.feedback_delay_ms = non_negative();
    else if (k == "link.feedback_loss") sc.feedback_loss = probability();

    else if (k == "video.frame_rate") sc.frame_rate = positive();
    else if (k == "video.bitrate_kbps") sc.bitrate_kbps = positive();
    else if (k == "video.frame_bytes") sc.frame_bytes = positive();
    else if (k == "video.width") sc.width = integer(1, 65535);
    else if (k == "video.height") sc.height = integer(1, 65535);
    else if (k == "video.mtu_payload_bytes") sc.mtu_payload_bytes = positive();

    else if (k == "allocator.gamma") sc.gamma = positive();
    else if (k == "allocator.patch_size") sc.patch_size = integer(1, 65535);
    else if (k == "allocator.ref_bits_per_patch") sc.rate_model.ref_bits_per_patch = positive();
    else if (k == "allocator.ref_qp") sc.rate_model.ref_qp = integer(kMinQp, kMaxQp);
    else if (k == "allocator.halving_step") sc.rate_model.halving_step = positive();
    else if (k == "allocator.correlation") parse_correlation(sc);

    else if (k == "controller.mode") {
      if (value_ == "adaptive") sc.mode = RateMode::adaptive;
      else if (value_ == "fixed") sc.mode = RateMode::fixed;
      else fail("expected adaptive or fixed, got '" + value_ + "'");
    }
    else if (k == "controller.mllm_rate") sc.controller.mllm_rate = positive();
    else if (k == "controller.epsilon") sc.controller.epsilon = probability();
    else if (k == "controller.r_max") sc.controller.r_max = positive();
    else if (k == "controller.alpha") sc.controller.alpha = probability();
    else if (k == "controller.epoch_s") sc.controller.epoch_s = positive();
    else if (k == "controller.initial_loss") sc.controller.initial_loss = probability();

    else if (k == "sampler.deadline_ms") {
      if (value_ == "auto") sc.deadline_ms.reset();
      else sc.deadline_ms = non_negative();
    }
    else if (k == "sampler.max_substitute_age_ms") {
      if (value_ == "interval") sc.max_substitute_age_ms.reset();
      else if (value_ == "unbounded") sc.max_substitute_age_ms = std::numeric_limits<double>::infinity();
      else sc.max_substitute_age_ms = positive();
    }

    else if (k == "transport.suppress_skipped_retransmit") sc.suppress_skipped_retransmit = boolean();
    else if (k == "transport.nack_check_ms") sc.nack_check_ms = positive();
    else if (k == "transport.rtt_ms") {
      if (value_ == "auto") sc.rtt_ms.reset();
      else sc.rtt_ms = non_negative();
    }
    else if (k == "transport.nack_max_retries") sc.nack_max_retries = integer(0, 1000);
    else fail("unknown key");
  }

  void parse_correlation(Scenario& sc) {
    if (value_ == "none") {
      sc.correlation = {};
    } else if (value_.rfind("uniform:", 0) == 0) {
      auto rho = parse_double(trim(value_.substr(8)));
      if (!rho || *rho < -1.0 || *rho > 1.0) fail("uniform correlation must lie in [-1, 1]");
      sc.correlation = {CorrelationSource::Kind::uniform, *rho, {}};
    } else {
      std::filesystem::path p(value_);
      if (p.is_relative()) p = base_dir_ / p;
      sc.correlation = {CorrelationSource::Kind::file, 0.0, p};
    }
  }

  void finalize(const Scenario& sc) {
    line_ = 0;
    key_.clear();
    if (sc.controller.r_max < sc.controller.mllm_rate) fail("controller.r_max must be >= controller.mllm_rate");
    if (sc.controller.mllm_rate < 1.0) fail("controller.mllm_rate must be >= 1");
    if (!(sc.controller.epsilon > 0.0 && sc.controller.epsilon < 1.0)) fail("controller.epsilon must lie in (0, 1)");
    if (sc.bitrate_kbps && sc.frame_bytes) fail("set at most one of video.bitrate_kbps and video.frame_bytes");
  }

  std::string source_;
  std::filesystem::path base_dir_;
  int line_ = 0;
  std::string key_;
  std::string value_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline Scenario parse_scenario(std::istream& in, const std::string& source_name = "<scenario>",
                               const std::filesystem::path& base_dir = ".") {
  return detail::ScenarioParser(source_name, base_dir).parse(in);
}

inline Scenario parse_scenario_text(const std::string& text, const std::string& source_name = "<scenario>",
                                    const std::filesystem::path& base_dir = ".") {
  std::istringstream in(text);
  return parse_scenario(in, source_name, base_dir);
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file: " + path.string());
  return parse_scenario(in, path.string(), path.parent_path().empty() ? "." : path.parent_path());
}

/// Resolves the scenario's allocator and video settings into a runnable
/// session configuration. Loads and validates the correlation map file.
inline SessionConfig build_session(const Scenario& sc) {
  SessionConfig cfg;
  cfg.scenario_id = sc.id;
  cfg.link = sc.link;
  cfg.feedback_delay_ms = sc.feedback_delay_ms;
  cfg.feedback_loss = sc.feedback_loss;
  cfg.mtu_payload_bits = sc.mtu_payload_bytes * kBitsPerByte;
  cfg.mode = sc.mode;
  cfg.fixed_rate = sc.frame_rate;
  cfg.controller = sc.controller;

  PatchGrid grid;
  try {
    grid = PatchGrid::for_resolution(sc.width, sc.height, sc.patch_size);
  } catch (const std::domain_error& e) {
    throw ConfigError(std::string("video/allocator: ") + e.what());
  }

  std::optional<CorrelationMap> map;
  switch (sc.correlation.kind) {
    case CorrelationSource::Kind::none: break;
    case CorrelationSource::Kind::uniform: map = uniform_correlation_map(grid, sc.correlation.rho); break;
    case CorrelationSource::Kind::file: {
      if (!std::filesystem::exists(sc.correlation.path)) {
        throw ConfigError("correlation map not found: " + sc.correlation.path.string());
      }
      try {
        map = load_correlation_map(sc.correlation.path);
      } catch (const MapFormatError& e) {
        throw ConfigError(e.what());
      }
      if (map->patch_size != sc.patch_size || !map->matches_resolution(sc.width, sc.height)) {
        throw ConfigError(sc.correlation.path.string() + ": map is " + std::to_string(map->rows()) + "x" +
                          std::to_string(map->cols()) + " patches of " + std::to_string(map->patch_size) +
                          " px, but a " + std::to_string(sc.width) + "x" + std::to_string(sc.height) +
                          " frame with patch " + std::to_string(sc.patch_size) + " needs " +
                          std::to_string(grid.rows) + "x" + std::to_string(grid.cols));
      }
      break;
    }
  }
  ContextMap ctx = context_or_neutral(std::move(map), grid);
  cfg.context_fallback = ctx.fallback;

  RateModelParams params = sc.rate_model;
  std::optional<double> target_bits;
  if (sc.frame_bytes) target_bits = *sc.frame_bytes * kBitsPerByte;
  if (sc.bitrate_kbps) target_bits = *sc.bitrate_kbps * 1000.0 / sc.frame_rate;
  if (target_bits) params = scale_to_target(ctx.map, sc.gamma, params, *target_bits);
  auto budget = std::make_shared<FrameBudget>(build_frame_budget(ctx.map, sc.gamma, params));
  cfg.frame_bits = std::max(1.0, std::round(budget->total_bits));
  cfg.budget = std::move(budget);

  cfg.sampler.mllm_rate = sc.controller.mllm_rate;
  cfg.sampler.deadline_ms = sc.deadline_ms.value_or(sc.link.one_way_delay_ms + kDefaultDeadlineSlackMs);
  cfg.sampler.max_substitute_age_ms = sc.max_substitute_age_ms;

  cfg.suppress_skipped_retransmit = sc.suppress_skipped_retransmit;
  cfg.nack_check_ms = sc.nack_check_ms;
  cfg.rtt_ms = sc.rtt_ms;
  cfg.nack_max_retries = sc.nack_max_retries;
  cfg.duration_s = sc.duration_s;
  cfg.drain_s = sc.drain_s;

  try {
    cfg.validate();
  } catch (const std::domain_error& e) {
    throw ConfigError(std::string("invalid scenario '") + sc.id + "': " + e.what());
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Running

struct RunOptions {
  unsigned parallel = 1;
  bool trace = false;
};

struct RunResult {
  Report report;
  std::vector<TraceRecord> events;
  double total_bits_sent = 0.0;
};

struct Job {
  SessionConfig cfg;
  std::uint64_t seed = 0;
};

/// Runs every job; results come back in job order regardless of `parallel`.
inline std::vector<RunResult> run_jobs(const std::vector<Job>& jobs, const RunOptions& opts) {
  std::vector<RunResult> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  auto work = [&](std::size_t i) {
    try {
      SessionConfig cfg = jobs[i].cfg;
      cfg.trace = opts.trace;
      RunTrace trace = run_session(cfg, jobs[i].seed);
      results[i].report = aggregate(trace);
      results[i].total_bits_sent = trace.totals.total_bits_sent();
      results[i].events = std::move(trace.events);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(opts.parallel, static_cast<unsigned>(jobs.size())));
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) work(i);
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

inline std::vector<RunResult> run_scenario(const Scenario& sc, const RunOptions& opts = {}) {
  const SessionConfig cfg = build_session(sc);
  std::vector<Job> jobs;
  for (std::uint64_t seed : sc.seeds) jobs.push_back({cfg, seed});
  return run_jobs(jobs, opts);
}

enum class SweepAxis { bitrate, loss, frame_rate };

inline SweepAxis parse_axis(const std::string& name) {
  if (name == "bitrate") return SweepAxis::bitrate;
  if (name == "loss") return SweepAxis::loss;
  if (name == "frame_rate") return SweepAxis::frame_rate;
  throw UsageError("unknown sweep axis '" + name + "' (expected bitrate, loss or frame_rate)");
}

inline const char* to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::bitrate: return "bitrate";
    case SweepAxis::loss: return "loss";
    case SweepAxis::frame_rate: return "frame_rate";
  }
  return "?";
}

/// Applies one axis value. Bitrate is in kbps; frame_rate switches the
/// controller to fixed mode.
inline Scenario with_axis_value(Scenario sc, SweepAxis axis, const std::string& value) {
  const auto v = detail::parse_double(value);
  if (!v) throw UsageError("sweep value '" + value + "' is not a number");
  switch (axis) {
    case SweepAxis::bitrate:
      if (!(*v > 0.0)) throw UsageError("bitrate must be positive: " + value);
      sc.bitrate_kbps = *v;
      sc.frame_bytes.reset();
      break;
    case SweepAxis::loss:
      if (!(*v >= 0.0 && *v <= 1.0)) throw UsageError("loss must lie in [0, 1]: " + value);
      sc.link.loss = LossModel::iid(*v);
      break;
    case SweepAxis::frame_rate:
      if (!(*v > 0.0)) throw UsageError("frame rate must be positive: " + value);
      sc.mode = RateMode::fixed;
      sc.frame_rate = *v;
      break;
  }
  sc.id += std::string("/") + to_string(axis) + "=" + value;
  return sc;
}

/// Cross product of values x seeds, values outer, seeds inner.
inline std::vector<RunResult> sweep(const Scenario& base, SweepAxis axis, const std::vector<std::string>& values,
                                    const RunOptions& opts = {}) {
  if (values.empty()) throw UsageError("sweep needs at least one axis value");
  std::vector<Job> jobs;
  for (const std::string& value : values) {
    if (value.empty()) throw UsageError("empty sweep value");
    const SessionConfig cfg = build_session(with_axis_value(base, axis, value));
    for (std::uint64_t seed : base.seeds) jobs.push_back({cfg, seed});
  }
  return run_jobs(jobs, opts);
}

// ---------------------------------------------------------------------------
// Output

inline void write_csv(std::ostream& os, const std::vector<RunResult>& results) {
  os << kCsvHeader << '\n';
  for (const auto& r : results) os << csv_row(r.report) << '\n';
}

inline std::string to_csv(const std::vector<RunResult>& results) {
  std::ostringstream os;
  write_csv(os, results);
  return os.str();
}

inline void write_traces(std::ostream& os, const std::vector<RunResult>& results) {
  for (const auto& r : results) {
    write_trace_record(os, TraceRecord{0.0, "run_start", std::nullopt, std::nullopt,
                                       "scenario=" + r.report.scenario_id + " seed=" + std::to_string(r.report.seed)});
    for (const auto& e : r.events) write_trace_record(os, e);
  }
}

}  // namespace artic
