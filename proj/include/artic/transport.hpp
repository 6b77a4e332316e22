#pragma once

// Sender packetization and pacing, receiver frame assembly, NACK generation
// and the MLLM frame sampler.
//
// The sampler consumes one frame per sampling interval. When the frame it
// expects is still incomplete at decision time it takes the newest complete
// frame from the same sampling window instead of waiting; only when the whole
// window is incomplete does it stall for retransmission.

#include <algorithm>
#include <cstdint>
#include <iterator>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "artic/semantic_allocator.hpp"
#include "artic/units.hpp"

#include <json.hpp>

namespace artic {

struct Frame {
  std::int64_t frame_id = 0;
  TimeMs capture_ts = 0.0;
  double size_bits = 0.0;
  std::shared_ptr<const FrameBudget> budget;
};

struct Packet {
  std::int64_t seq = 0;
  std::int64_t frame_id = 0;
  std::int32_t index = 0;
  std::int32_t count = 1;
  double payload_bits = 0.0;
  TimeMs send_ts = 0.0;
  TimeMs capture_ts = 0.0;
  bool is_retransmit = false;
};

/// Splits a frame into MTU-sized packets with consecutive sequence numbers
/// starting at `first_seq`; the last packet carries the remainder.
inline std::vector<Packet> packetize(const Frame& frame, double mtu_payload_bits, std::int64_t first_seq = 0) {
  const auto count = packet_count(frame.size_bits, mtu_payload_bits);
  if (count > std::numeric_limits<std::int32_t>::max()) throw std::domain_error("packetize: frame too large");
  std::vector<Packet> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    Packet p;
    p.seq = first_seq + i;
    p.frame_id = frame.frame_id;
    p.index = static_cast<std::int32_t>(i);
    p.count = static_cast<std::int32_t>(count);
    const double remainder = frame.size_bits - static_cast<double>(i) * mtu_payload_bits;
    p.payload_bits = std::min(mtu_payload_bits, remainder);
    p.send_ts = frame.capture_ts;
    p.capture_ts = frame.capture_ts;
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pacing

/// Frame capture clock. A rate change restarts the phase: the next capture
/// is one new interval after the change (or immediately, if a capture was
/// already due at that instant).
class FramePacer {
 public:
  explicit FramePacer(double rate, TimeMs start = 0.0) : rate_(rate), phase_start_(start) {
    if (!(rate > 0.0)) throw std::domain_error("FramePacer: rate must be positive");
  }

  double rate() const noexcept { return rate_; }
  TimeMs interval() const noexcept { return 1000.0 / rate_; }

  TimeMs next_capture() const noexcept {
    return phase_start_ + static_cast<double>(captured_in_phase_) * 1000.0 / rate_;
  }

  /// Takes the due capture and returns its timestamp.
  TimeMs advance() {
    const TimeMs ts = next_capture();
    ++captured_in_phase_;
    return ts;
  }

  void set_rate(double rate, TimeMs now) {
    if (!(rate > 0.0)) throw std::domain_error("FramePacer: rate must be positive");
    if (rate == rate_) return;
    const TimeMs due = next_capture();
    rate_ = rate;
    if (due <= now) {
      phase_start_ = due;
      captured_in_phase_ = 0;
    } else {
      phase_start_ = now;
      captured_in_phase_ = 1;
    }
  }

 private:
  double rate_;
  TimeMs phase_start_;
  std::int64_t captured_in_phase_ = 0;
};

struct PacedFrame {
  Frame frame;
  std::vector<Packet> packets;
};

/// Sender front end: captures frames on the pacer clock and packetizes each
/// one immediately, with no sub-frame pacing.
class PacketSource {
 public:
  PacketSource(double rate, double mtu_payload_bits) : pacer_(rate), mtu_bits_(mtu_payload_bits) {
    if (!(mtu_payload_bits > 0.0)) throw std::domain_error("PacketSource: MTU payload must be positive");
  }

  PacedFrame capture(double size_bits, std::shared_ptr<const FrameBudget> budget = nullptr) {
    PacedFrame out;
    out.frame = Frame{next_frame_id_++, pacer_.advance(), size_bits, std::move(budget)};
    out.packets = packetize(out.frame, mtu_bits_, next_seq_);
    next_seq_ += static_cast<std::int64_t>(out.packets.size());
    return out;
  }

  FramePacer& pacer() noexcept { return pacer_; }
  const FramePacer& pacer() const noexcept { return pacer_; }
  double mtu_payload_bits() const noexcept { return mtu_bits_; }
  std::int64_t next_seq() const noexcept { return next_seq_; }

 private:
  FramePacer pacer_;
  double mtu_bits_;
  std::int64_t next_frame_id_ = 0;
  std::int64_t next_seq_ = 0;
};

/// Captures every frame due strictly before `until` at a fixed size.
inline std::vector<PacedFrame> pace_and_send(PacketSource& source, TimeMs until, double size_bits) {
  std::vector<PacedFrame> out;
  while (source.pacer().next_capture() < until) out.push_back(source.capture(size_bits));
  return out;
}

// ---------------------------------------------------------------------------
// Assembly

struct FrameRecord {
  std::int64_t frame_id = 0;
  TimeMs capture_ts = 0.0;
  std::int64_t base_seq = -1;  // -1 until known
  std::int32_t count = 0;
  std::vector<bool> received;
  std::int32_t received_count = 0;
  std::optional<TimeMs> completion_ts;
  bool skipped = false;

  bool complete() const noexcept { return completion_ts.has_value(); }
  bool complete_by(TimeMs t) const noexcept { return completion_ts && *completion_ts <= t; }
};

class AssemblyState {
 public:
  /// Announces a frame before any of its packets arrive (the sampler needs
  /// the capture timeline even for frames that are lost outright).
  void register_frame(std::int64_t frame_id, TimeMs capture_ts, std::int64_t base_seq, std::int32_t count) {
    FrameRecord& rec = frames_[frame_id];
    if (rec.count == 0) {
      rec.frame_id = frame_id;
      rec.capture_ts = capture_ts;
      rec.count = count;
      rec.received.assign(static_cast<std::size_t>(count), false);
    }
    if (rec.base_seq < 0 && base_seq >= 0) {
      rec.base_seq = base_seq;
      seq_index_[base_seq] = frame_id;
    }
  }

  /// Returns the frame id when `pkt` is the last missing piece of its frame.
  std::optional<std::int64_t> on_packet_arrival(const Packet& pkt, TimeMs now) {
    if (pkt.count < 1 || pkt.index < 0 || pkt.index >= pkt.count) {
      ++malformed_;
      return std::nullopt;
    }
    register_frame(pkt.frame_id, pkt.capture_ts, pkt.seq - pkt.index, pkt.count);
    FrameRecord& rec = frames_[pkt.frame_id];
    if (rec.count != pkt.count) {
      ++malformed_;
      return std::nullopt;
    }
    if (rec.skipped) ++stale_;
    std::vector<bool>::reference slot = rec.received[static_cast<std::size_t>(pkt.index)];
    if (slot) {
      ++duplicates_;
      return std::nullopt;
    }
    slot = true;
    ++rec.received_count;
    if (rec.received_count == rec.count) {
      rec.completion_ts = now;
      return rec.frame_id;
    }
    return std::nullopt;
  }

  const FrameRecord* find(std::int64_t frame_id) const {
    auto it = frames_.find(frame_id);
    return it == frames_.end() ? nullptr : &it->second;
  }

  /// Frame whose sequence range covers `seq`, if known.
  const FrameRecord* frame_for_seq(std::int64_t seq) const {
    auto it = seq_index_.upper_bound(seq);
    if (it == seq_index_.begin()) return nullptr;
    --it;
    const FrameRecord* rec = find(it->second);
    if (rec == nullptr || seq >= rec->base_seq + rec->count) return nullptr;
    return rec;
  }

  /// Newest frame captured at or before `ts`.
  const FrameRecord* newest_at_or_before(TimeMs ts) const {
    const FrameRecord* best = nullptr;
    for (auto it = frames_.rbegin(); it != frames_.rend(); ++it) {
      if (it->second.capture_ts <= ts + kTimeEpsilon) {
        best = &it->second;
        break;
      }
    }
    return best;
  }

  /// Marks every incomplete frame captured at or before `ts` as no longer
  /// wanted by the sampler, except frames for which `still_wanted(capture_ts)`
  /// holds.
  template <typename Pred>
  void skip_through(TimeMs ts, Pred&& still_wanted) {
    for (auto& [id, rec] : frames_) {
      if (rec.capture_ts > ts + kTimeEpsilon) break;
      if (!rec.complete() && !still_wanted(rec.capture_ts)) rec.skipped = true;
    }
  }

  void skip_through(TimeMs ts) {
    skip_through(ts, [](TimeMs) { return false; });
  }

  const std::map<std::int64_t, FrameRecord>& frames() const noexcept { return frames_; }
  std::uint64_t duplicates() const noexcept { return duplicates_; }
  std::uint64_t stale() const noexcept { return stale_; }
  std::uint64_t malformed() const noexcept { return malformed_; }

  static constexpr TimeMs kTimeEpsilon = 1e-6;

 private:
  std::map<std::int64_t, FrameRecord> frames_;  // frame ids increase with capture time
  std::map<std::int64_t, std::int64_t> seq_index_;  // base seq -> frame id
  std::uint64_t duplicates_ = 0;
  std::uint64_t stale_ = 0;
  std::uint64_t malformed_ = 0;
};

// ---------------------------------------------------------------------------
// Loss detection

struct NackConfig {
  TimeMs nack_delay_ms = 30.0;
  TimeMs rtt_ms = 60.0;
  int max_retries = 10;

  /// max(10 ms, RTT / 2), one round per RTT.
  static NackConfig for_rtt(TimeMs rtt_ms) { return NackConfig{std::max(10.0, 0.5 * rtt_ms), rtt_ms, 10}; }
};

// Tracks sequence gaps. A gap becomes NACK-eligible once it has been missing
// for nack_delay; each missing seq is NACKed at most once per RTT.
class NackTracker {
 public:
  explicit NackTracker(NackConfig cfg) : cfg_(cfg) {}

  /// Returns the number of new gaps opened by this arrival.
  std::int64_t on_packet(std::int64_t seq, TimeMs now) {
    std::int64_t opened = 0;
    if (seq > highest_) {
      for (std::int64_t s = highest_ + 1; s < seq; ++s) {
        missing_.emplace(s, Missing{now, std::nullopt, 0});
        ++opened;
      }
      highest_ = seq;
    }
    missing_.erase(seq);
    return opened;
  }

  /// Seqs due for a NACK at `now`. `abandon(seq)` returning true drops the
  /// seq from tracking without NACKing it.
  template <typename Abandon>
  std::vector<std::int64_t> detect_losses(TimeMs now, Abandon&& abandon) {
    std::vector<std::int64_t> out;
    for (auto it = missing_.begin(); it != missing_.end();) {
      if (abandon(it->first)) {
        it = missing_.erase(it);
        continue;
      }
      Missing& m = it->second;
      if (m.retries >= cfg_.max_retries) {
        it = missing_.erase(it);
        ++given_up_;
        continue;
      }
      const bool old_enough = now - m.detected_ts >= cfg_.nack_delay_ms;
      const bool round_open = !m.last_nack_ts || now - *m.last_nack_ts >= cfg_.rtt_ms;
      if (old_enough && round_open) {
        out.push_back(it->first);
        m.last_nack_ts = now;
        ++m.retries;
      }
      ++it;
    }
    return out;
  }

  std::vector<std::int64_t> detect_losses(TimeMs now) {
    return detect_losses(now, [](std::int64_t) { return false; });
  }

  std::int64_t highest_seq_seen() const noexcept { return highest_; }
  std::size_t missing_count() const noexcept { return missing_.size(); }
  std::uint64_t given_up() const noexcept { return given_up_; }
  const NackConfig& config() const noexcept { return cfg_; }

 private:
  struct Missing {
    TimeMs detected_ts;
    std::optional<TimeMs> last_nack_ts;
    int retries = 0;
  };

  NackConfig cfg_;
  std::int64_t highest_ = -1;
  std::map<std::int64_t, Missing> missing_;
  std::uint64_t given_up_ = 0;
};

// ---------------------------------------------------------------------------
// MLLM sampler

struct SamplerConfig {
  double mllm_rate = 2.0;
  TimeMs deadline_ms = 50.0;  // decision lag after each sampling instant
  std::optional<TimeMs> max_substitute_age_ms;  // nullopt = one sampling interval

  TimeMs sample_interval() const noexcept { return 1000.0 / mllm_rate; }
  TimeMs substitute_window() const noexcept { return max_substitute_age_ms.value_or(sample_interval()); }

  void validate() const {
    if (!(mllm_rate > 0.0)) throw std::domain_error("sampler: mllm_rate must be positive");
    if (!(deadline_ms >= 0.0)) throw std::domain_error("sampler: deadline must be non-negative");
    if (max_substitute_age_ms && !(*max_substitute_age_ms > 0.0)) {
      throw std::domain_error("sampler: max substitute age must be positive");
    }
  }
};

enum class SampleKind { expected, substitute, stall };

inline const char* to_string(SampleKind k) {
  switch (k) {
    case SampleKind::expected: return "expected";
    case SampleKind::substitute: return "substitute";
    case SampleKind::stall: return "stall";
  }
  return "?";
}

struct SampleOutcome {
  SampleKind kind = SampleKind::stall;
  std::int64_t frame_id = -1;  // -1 for an unresolved stall
  TimeMs age_ms = 0.0;         // sample_ts - capture_ts of the frame used
  TimeMs wait_ms = 0.0;        // stall wait; filled in once the stall resolves
};

/// Classifies the sampling instant `sample_ts` as seen at `now`.
inline SampleOutcome sample_for_mllm(const AssemblyState& state, const SamplerConfig& cfg, TimeMs sample_ts,
                                     TimeMs now) {
  const FrameRecord* expected = state.newest_at_or_before(sample_ts);
  if (expected == nullptr) return {};
  if (expected->complete_by(now)) {
    return {SampleKind::expected, expected->frame_id, sample_ts - expected->capture_ts, 0.0};
  }
  const TimeMs oldest = sample_ts - cfg.substitute_window();
  const auto& frames = state.frames();
  for (auto it = std::make_reverse_iterator(frames.find(expected->frame_id)); it != frames.rend(); ++it) {
    const FrameRecord& rec = it->second;
    if (rec.capture_ts <= oldest + AssemblyState::kTimeEpsilon) break;
    if (rec.complete_by(now)) return {SampleKind::substitute, rec.frame_id, sample_ts - rec.capture_ts, 0.0};
  }
  return {};
}

/// True when `capture_ts` falls inside the window a stall at `sample_ts` can
/// be resolved from.
inline bool in_sample_window(const SamplerConfig& cfg, TimeMs sample_ts, TimeMs capture_ts) {
  return capture_ts <= sample_ts + AssemblyState::kTimeEpsilon &&
         capture_ts > sample_ts - cfg.substitute_window() + AssemblyState::kTimeEpsilon;
}

// ---------------------------------------------------------------------------
// Event trace

struct TraceRecord {
  TimeMs time_ms = 0.0;
  std::string event;
  std::optional<std::int64_t> seq;
  std::optional<std::int64_t> frame_id;
  std::string detail;
};

// Newline-delimited JSON, fields in fixed order: time_ms, event, seq, frame_id, detail.
inline void write_trace_record(std::ostream& os, const TraceRecord& r) {
  nlohmann::ordered_json j;
  j["time_ms"] = r.time_ms;
  j["event"] = r.event;
  j["seq"] = r.seq ? nlohmann::ordered_json(*r.seq) : nlohmann::ordered_json(nullptr);
  j["frame_id"] = r.frame_id ? nlohmann::ordered_json(*r.frame_id) : nlohmann::ordered_json(nullptr);
  j["detail"] = r.detail;
  os << j.dump() << '\n';
}

}  // namespace artic
