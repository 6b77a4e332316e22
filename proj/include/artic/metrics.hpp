#pragma once

// Post-processing of a finished run: frame latency distribution, stall
// latency per MLLM sample, bits wasted on frames the MLLM never looked at,
// and the sampler outcome mix.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "artic/transport.hpp"
#include "artic/units.hpp"

namespace artic {

/// Time from capture until the last packet of the frame arrived.
inline std::optional<TimeMs> frame_latency(TimeMs capture_ts, std::optional<TimeMs> completion_ts) {
  if (!completion_ts) return std::nullopt;
  if (*completion_ts < capture_ts) throw std::domain_error("frame_latency: completion precedes capture");
  return *completion_ts - capture_ts;
}

/// Nearest-rank percentile of an ascending sample; `pct` in (0, 100].
inline double nearest_rank(std::span<const double> sorted, double pct) {
  if (sorted.empty()) return 0.0;
  if (!(pct > 0.0 && pct <= 100.0)) throw std::domain_error("nearest_rank: percentile outside (0, 100]");
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

// ---------------------------------------------------------------------------
// Run trace: what a finished session hands to the metrics.

struct FrameLog {
  std::int64_t frame_id = 0;
  TimeMs capture_ts = 0.0;
  double size_bits = 0.0;
  std::int32_t packets = 0;
  std::optional<TimeMs> completion_ts;
  bool sampled = false;
};

struct SampleLog {
  std::int64_t slot = 0;
  TimeMs sample_ts = 0.0;
  TimeMs decision_ts = 0.0;
  SampleOutcome outcome;
  bool unresolved = false;  // stall still open when the run ended
};

struct RateLog {
  TimeMs at = 0.0;
  double rate = 0.0;
  double loss_estimate = 0.0;
  double kappa = 0.0;
  bool residual_violation = false;
};

struct TransferTotals {
  double original_bits_sent = 0.0;
  double original_bits_delivered = 0.0;
  double original_bits_lost = 0.0;      // lost on the link
  double original_bits_overflow = 0.0;  // dropped at a full queue
  double retransmit_bits_sent = 0.0;
  double retransmit_bits_delivered = 0.0;
  double retransmit_bits_lost = 0.0;
  double retransmit_bits_overflow = 0.0;
  std::uint64_t original_packets = 0;
  std::uint64_t retransmit_packets = 0;
  std::uint64_t nacks_sent = 0;
  std::uint64_t duplicate_packets = 0;

  double total_bits_sent() const noexcept { return original_bits_sent + retransmit_bits_sent; }
};

struct RunTrace {
  std::string scenario_id;
  std::uint64_t seed = 0;
  TimeMs duration_ms = 0.0;
  double loss_rate = 0.0;  // configured long-run link loss
  bool context_fallback = false;
  std::vector<FrameLog> frames;
  std::vector<SampleLog> samples;
  std::vector<RateLog> rates;
  TransferTotals totals;
  std::vector<TraceRecord> events;  // empty unless tracing was on
};

// ---------------------------------------------------------------------------
// Reports

struct FrameLatencyStats {
  std::vector<double> samples_ms;  // ascending, completed frames only
  double p50 = 0.0;
  double p90 = 0.0;
  double p99 = 0.0;
  double mean = 0.0;
  std::uint64_t incomplete_count = 0;
};

inline FrameLatencyStats latency_stats(std::span<const FrameLog> frames) {
  FrameLatencyStats s;
  for (const auto& f : frames) {
    if (auto lat = frame_latency(f.capture_ts, f.completion_ts)) {
      s.samples_ms.push_back(*lat);
    } else {
      ++s.incomplete_count;
    }
  }
  std::sort(s.samples_ms.begin(), s.samples_ms.end());
  if (!s.samples_ms.empty()) {
    s.p50 = nearest_rank(s.samples_ms, 50);
    s.p90 = nearest_rank(s.samples_ms, 90);
    s.p99 = nearest_rank(s.samples_ms, 99);
    double sum = 0.0;
    for (double v : s.samples_ms) sum += v;
    s.mean = sum / static_cast<double>(s.samples_ms.size());
  }
  return s;
}

struct StallReport {
  std::vector<double> waits_ms;  // one per sample, zero when not stalled
  double mean_ms = 0.0;
  std::uint64_t stall_count = 0;
};

inline StallReport stall_report(std::span<const SampleLog> samples) {
  StallReport r;
  double sum = 0.0;
  for (const auto& s : samples) {
    const double wait = s.outcome.kind == SampleKind::stall ? s.outcome.wait_ms : 0.0;
    if (s.outcome.kind == SampleKind::stall) ++r.stall_count;
    r.waits_ms.push_back(wait);
    sum += wait;
  }
  if (!samples.empty()) r.mean_ms = sum / static_cast<double>(samples.size());
  return r;
}

struct WasteReport {
  double total_bits = 0.0;
  double unsampled_bits = 0.0;
  double waste_fraction = 0.0;
};

inline WasteReport waste_report(std::span<const FrameLog> frames) {
  WasteReport w;
  for (const auto& f : frames) {
    w.total_bits += f.size_bits;
    if (!f.sampled) w.unsampled_bits += f.size_bits;
  }
  if (w.total_bits > 0.0) w.waste_fraction = w.unsampled_bits / w.total_bits;
  return w;
}

struct OutcomeHistogram {
  std::uint64_t expected = 0;
  std::uint64_t substitute = 0;
  std::uint64_t stall = 0;

  std::uint64_t total() const noexcept { return expected + substitute + stall; }
  double fraction(std::uint64_t n) const noexcept {
    return total() == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(total());
  }
};

struct Report {
  std::string scenario_id;
  std::uint64_t seed = 0;
  bool empty = true;
  double bitrate_kbps = 0.0;
  double loss_rate = 0.0;
  double frame_rate = 0.0;
  FrameLatencyStats latency;
  StallReport stalls;
  WasteReport waste;
  OutcomeHistogram outcomes;
  double total_bits_sent = 0.0;
};

inline Report aggregate(const RunTrace& run) {
  Report r;
  r.scenario_id = run.scenario_id;
  r.seed = run.seed;
  r.loss_rate = run.loss_rate;
  r.empty = run.frames.empty() && run.samples.empty();
  if (r.empty) return r;

  r.latency = latency_stats(run.frames);
  r.stalls = stall_report(run.samples);
  r.waste = waste_report(run.frames);
  for (const auto& s : run.samples) {
    switch (s.outcome.kind) {
      case SampleKind::expected: ++r.outcomes.expected; break;
      case SampleKind::substitute: ++r.outcomes.substitute; break;
      case SampleKind::stall: ++r.outcomes.stall; break;
    }
  }
  const double seconds = run.duration_ms / 1000.0;
  if (seconds > 0.0) {
    r.bitrate_kbps = r.waste.total_bits / seconds / 1000.0;
    r.frame_rate = static_cast<double>(run.frames.size()) / seconds;
  }
  r.total_bits_sent = run.totals.total_bits_sent();
  return r;
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char* kCsvHeader =
    "scenario_id,seed,bitrate_kbps,loss_rate,frame_rate,p50_ms,p90_ms,p99_ms,mean_ms,"
    "stall_mean_ms,stall_count,waste_fraction,substitute_fraction,expected_fraction";

inline std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string csv_row(const Report& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, ",%llu,%.3f,%.6f,%.3f,%.3f,%.3f,%.3f,%.3f,%.3f,%llu,%.6f,%.6f,%.6f",
                static_cast<unsigned long long>(r.seed), r.bitrate_kbps, r.loss_rate, r.frame_rate,
                r.latency.p50, r.latency.p90, r.latency.p99, r.latency.mean, r.stalls.mean_ms,
                static_cast<unsigned long long>(r.stalls.stall_count), r.waste.waste_fraction,
                r.outcomes.fraction(r.outcomes.substitute), r.outcomes.fraction(r.outcomes.expected));
  return csv_quote(r.scenario_id) + buf;
}

}  // namespace artic
