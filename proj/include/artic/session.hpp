#pragma once

// One seeded simulation of an uplink video session:
//
//   sender (pacer + packetizer + rate controller)
//     -> bottleneck link (FIFO, delay, loss)
//       -> receiver (assembly, NACK, MLLM sampler)
//     <- feedback channel (NACKs and per-epoch loss reports; delay only by default)
//
// The whole session runs on a single event loop and is deterministic in
// (config, seed).

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "artic/metrics.hpp"
#include "artic/netem.hpp"
#include "artic/rate_controller.hpp"
#include "artic/semantic_allocator.hpp"
#include "artic/transport.hpp"

namespace artic {

enum class RateMode { fixed, adaptive };

struct SessionConfig {
  std::string scenario_id = "default";
  LinkConfig link;                           // link.seed is overwritten per run
  std::optional<TimeMs> feedback_delay_ms;   // default: link one-way delay
  double feedback_loss = 0.0;
  double mtu_payload_bits = kDefaultMtuPayloadBits;

  RateMode mode = RateMode::adaptive;
  double fixed_rate = 30.0;
  RateControllerConfig controller;
  SamplerConfig sampler;

  double frame_bits = 0.0;
  std::shared_ptr<const FrameBudget> budget;
  bool context_fallback = false;

  bool suppress_skipped_retransmit = true;
  TimeMs nack_check_ms = 5.0;
  std::optional<TimeMs> rtt_ms;  // default: twice the one-way delay
  int nack_max_retries = 10;

  double duration_s = 60.0;
  double drain_s = 5.0;
  bool trace = false;

  TimeMs feedback_delay() const noexcept { return feedback_delay_ms.value_or(link.one_way_delay_ms); }
  TimeMs rtt() const noexcept { return rtt_ms.value_or(link.one_way_delay_ms + feedback_delay()); }

  void validate() const {
    link.validate();
    controller.validate();
    sampler.validate();
    if (!(feedback_delay() >= 0.0)) throw std::domain_error("session: feedback delay must be non-negative");
    if (!(feedback_loss >= 0.0 && feedback_loss <= 1.0)) throw std::domain_error("session: feedback loss outside [0, 1]");
    if (!(mtu_payload_bits > 0.0)) throw std::domain_error("session: MTU payload must be positive");
    if (!(frame_bits > 0.0)) throw std::domain_error("session: frame size must be positive");
    if (mode == RateMode::fixed && !(fixed_rate > 0.0)) throw std::domain_error("session: frame rate must be positive");
    if (!(nack_check_ms > 0.0)) throw std::domain_error("session: nack check period must be positive");
    if (!(duration_s > 0.0)) throw std::domain_error("session: duration must be positive");
    if (!(drain_s >= 0.0)) throw std::domain_error("session: drain time must be non-negative");
  }
};

class Session {
 public:
  Session(SessionConfig cfg, std::uint64_t seed)
      : cfg_(std::move(cfg)),
        seed_(seed),
        link_(link_config(cfg_, seed)),
        feedback_rng_(derive_seed(seed, 1)),
        controller_(controller_config(cfg_)),
        source_(cfg_.mode == RateMode::fixed ? cfg_.fixed_rate : controller_.current_rate(), cfg_.mtu_payload_bits),
        nacks_(NackConfig{std::max(10.0, 0.5 * cfg_.rtt()), cfg_.rtt(), cfg_.nack_max_retries}) {
    cfg_.validate();
    duration_ms_ = cfg_.duration_s * 1000.0;
    end_ms_ = duration_ms_ + cfg_.drain_s * 1000.0;
  }

  RunTrace run() {
    if (ran_) throw std::logic_error("Session::run called twice");
    ran_ = true;

    run_.scenario_id = cfg_.scenario_id;
    run_.seed = seed_;
    run_.duration_ms = duration_ms_;
    run_.loss_rate = cfg_.link.loss.mean_loss();
    run_.context_fallback = cfg_.context_fallback;
    record_rate(0.0);

    schedule_capture();
    sim_.schedule_at(cfg_.sampler.deadline_ms, [this] { on_sample_decision(0); });
    sim_.schedule_at(cfg_.nack_check_ms, [this] { on_nack_check(); });
    if (cfg_.mode == RateMode::adaptive) {
      const TimeMs epoch = cfg_.controller.epoch_s * 1000.0;
      sim_.schedule_at(epoch, [this] { on_receiver_report(); });
      sim_.schedule_at(epoch, [this] { on_sender_epoch(); });
    }
    sim_.run_until(end_ms_);
    finish();
    return std::move(run_);
  }

 private:
  static LinkConfig link_config(const SessionConfig& cfg, std::uint64_t seed) {
    LinkConfig l = cfg.link;
    l.seed = derive_seed(seed, 0);
    return l;
  }

  static RateControllerConfig controller_config(const SessionConfig& cfg) {
    RateControllerConfig c = cfg.controller;
    c.mtu_payload_bits = cfg.mtu_payload_bits;
    if (cfg.frame_bits > 0.0) c.initial_kappa = static_cast<double>(packet_count(cfg.frame_bits, cfg.mtu_payload_bits));
    return c;
  }

  void trace(std::string event, std::optional<std::int64_t> seq, std::optional<std::int64_t> frame_id,
             std::string detail = {}) {
    if (!cfg_.trace) return;
    run_.events.push_back(TraceRecord{sim_.now(), std::move(event), seq, frame_id, std::move(detail)});
  }

  static std::string num(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
  }

  // -- sender --------------------------------------------------------------

  void schedule_capture() {
    const TimeMs at = source_.pacer().next_capture();
    if (at >= duration_ms_) return;
    const std::uint64_t gen = capture_gen_;
    sim_.schedule_at(at, [this, gen] {
      if (gen != capture_gen_) return;
      on_capture();
    });
  }

  void on_capture() {
    PacedFrame pf = source_.capture(cfg_.frame_bits, cfg_.budget);
    const Frame& f = pf.frame;
    frame_index_[f.frame_id] = run_.frames.size();
    run_.frames.push_back(FrameLog{f.frame_id, f.capture_ts, f.size_bits,
                                   static_cast<std::int32_t>(pf.packets.size()), std::nullopt, false});
    assembly_.register_frame(f.frame_id, f.capture_ts, pf.packets.front().seq,
                             static_cast<std::int32_t>(pf.packets.size()));
    controller_.on_frame_sent(f.size_bits);
    trace("capture", std::nullopt, f.frame_id,
          "bits=" + num(f.size_bits) + " packets=" + std::to_string(pf.packets.size()));
    for (Packet& p : pf.packets) {
      sent_[p.seq] = p;
      transmit(p);
    }
    schedule_capture();
  }

  void transmit(const Packet& p) {
    TransferTotals& t = run_.totals;
    if (p.is_retransmit) {
      t.retransmit_bits_sent += p.payload_bits;
      ++t.retransmit_packets;
    } else {
      t.original_bits_sent += p.payload_bits;
      ++t.original_packets;
    }
    const EnqueueResult r = link_.enqueue(p, sim_.now());
    if (r.status == EnqueueStatus::dropped_overflow) {
      (p.is_retransmit ? t.retransmit_bits_overflow : t.original_bits_overflow) += p.payload_bits;
      trace("overflow", p.seq, p.frame_id);
      return;
    }
    trace(p.is_retransmit ? "retransmit" : "enqueue", p.seq, p.frame_id, "drain=" + num(r.drain_ts));
    sim_.schedule_at(r.drain_ts, [this, p] { on_drain(p); });
  }

  void on_drain(const Packet& p) {
    trace("drain", p.seq, p.frame_id);
    const auto arrival = link_.deliver(p.payload_bits, sim_.now());
    TransferTotals& t = run_.totals;
    if (!arrival) {
      (p.is_retransmit ? t.retransmit_bits_lost : t.original_bits_lost) += p.payload_bits;
      trace("loss", p.seq, p.frame_id);
      return;
    }
    (p.is_retransmit ? t.retransmit_bits_delivered : t.original_bits_delivered) += p.payload_bits;
    sim_.schedule_at(*arrival, [this, p] { on_arrival(p); });
  }

  void on_nack_received(std::int64_t seq) {
    auto it = sent_.find(seq);
    if (it == sent_.end()) return;
    Packet p = it->second;
    p.is_retransmit = true;
    p.send_ts = sim_.now();
    transmit(p);
  }

  void on_sender_epoch() {
    const RateDecision d = controller_.end_epoch();
    if (d.rate != source_.pacer().rate()) {
      source_.pacer().set_rate(d.rate, sim_.now());
      ++capture_gen_;
      schedule_capture();
    }
    record_rate(sim_.now());
    trace("rate", std::nullopt, std::nullopt,
          "fps=" + num(d.rate) + " p=" + num(controller_.loss().p) + " kappa=" + num(controller_.kappa()) +
              (d.residual_violation ? " violation" : ""));
    const TimeMs next = sim_.now() + cfg_.controller.epoch_s * 1000.0;
    if (next < duration_ms_) sim_.schedule_at(next, [this] { on_sender_epoch(); });
  }

  void record_rate(TimeMs at) {
    run_.rates.push_back(RateLog{at, source_.pacer().rate(), controller_.loss().p, controller_.kappa(),
                                 controller_.last_decision().residual_violation});
  }

  // -- feedback channel ----------------------------------------------------

  template <typename F>
  void send_feedback(F&& deliver) {
    if (cfg_.feedback_loss > 0.0 && unit_draw(feedback_rng_) < cfg_.feedback_loss) return;
    sim_.schedule_in(cfg_.feedback_delay(), std::forward<F>(deliver));
  }

  // -- receiver ------------------------------------------------------------

  void on_arrival(const Packet& p) {
    trace("arrive", p.seq, p.frame_id, p.is_retransmit ? "rtx" : "");
    const std::int64_t gaps = nacks_.on_packet(p.seq, sim_.now());
    if (!p.is_retransmit) ++epoch_received_;
    epoch_lost_ += gaps;
    const auto completed = assembly_.on_packet_arrival(p, sim_.now());
    if (!completed) {
      run_.totals.duplicate_packets = assembly_.duplicates();
      return;
    }
    run_.frames[frame_index_.at(*completed)].completion_ts = sim_.now();
    trace("complete", std::nullopt, *completed);
    resolve_stalls(*completed);
  }

  void on_nack_check() {
    auto abandon = [this](std::int64_t seq) {
      const FrameRecord* rec = assembly_.frame_for_seq(seq);
      if (rec == nullptr) return false;
      return rec->complete() || (cfg_.suppress_skipped_retransmit && rec->skipped);
    };
    for (std::int64_t seq : nacks_.detect_losses(sim_.now(), abandon)) {
      ++run_.totals.nacks_sent;
      trace("nack", seq, std::nullopt);
      send_feedback([this, seq] { on_nack_received(seq); });
    }
    const TimeMs next = sim_.now() + cfg_.nack_check_ms;
    if (next <= end_ms_) sim_.schedule_at(next, [this] { on_nack_check(); });
  }

  void on_receiver_report() {
    const std::int64_t acked = epoch_received_;
    const std::int64_t lost = epoch_lost_;
    epoch_received_ = 0;
    epoch_lost_ = 0;
    trace("report", std::nullopt, std::nullopt, "acked=" + std::to_string(acked) + " lost=" + std::to_string(lost));
    send_feedback([this, acked, lost] { controller_.on_loss_feedback(acked, lost); });
    const TimeMs next = sim_.now() + cfg_.controller.epoch_s * 1000.0;
    if (next < duration_ms_) sim_.schedule_at(next, [this] { on_receiver_report(); });
  }

  void on_sample_decision(std::int64_t slot) {
    const TimeMs sample_ts = static_cast<double>(slot) * 1000.0 / cfg_.sampler.mllm_rate;
    SampleLog log{slot, sample_ts, sim_.now(), sample_for_mllm(assembly_, cfg_.sampler, sample_ts, sim_.now()), false};
    if (log.outcome.kind == SampleKind::stall) {
      pending_stalls_.push_back(run_.samples.size());
    } else {
      mark_sampled(log.outcome.frame_id);
      skip_unwanted(sample_ts);
    }
    trace("sample", std::nullopt, log.outcome.kind == SampleKind::stall ? std::nullopt
                                                                         : std::optional(log.outcome.frame_id),
          std::string(to_string(log.outcome.kind)) + " slot=" + std::to_string(slot));
    run_.samples.push_back(log);

    const TimeMs next_ts = static_cast<double>(slot + 1) * 1000.0 / cfg_.sampler.mllm_rate;
    if (next_ts < duration_ms_) {
      sim_.schedule_at(next_ts + cfg_.sampler.deadline_ms, [this, slot] { on_sample_decision(slot + 1); });
    }
  }

  void resolve_stalls(std::int64_t frame_id) {
    if (pending_stalls_.empty()) return;
    const FrameRecord* rec = assembly_.find(frame_id);
    std::vector<std::size_t> still;
    for (std::size_t idx : pending_stalls_) {
      SampleLog& s = run_.samples[idx];
      if (!in_sample_window(cfg_.sampler, s.sample_ts, rec->capture_ts)) {
        still.push_back(idx);
        continue;
      }
      s.outcome.frame_id = frame_id;
      s.outcome.age_ms = s.sample_ts - rec->capture_ts;
      s.outcome.wait_ms = sim_.now() - s.decision_ts;
      mark_sampled(frame_id);
      skip_unwanted(s.sample_ts);
      trace("stall_end", std::nullopt, frame_id, "slot=" + std::to_string(s.slot) + " wait=" + num(s.outcome.wait_ms));
    }
    pending_stalls_ = std::move(still);
  }

  // Frames a still-open stall could resolve from stay eligible for NACKs.
  void skip_unwanted(TimeMs through_ts) {
    assembly_.skip_through(through_ts, [this](TimeMs capture_ts) {
      for (std::size_t idx : pending_stalls_) {
        if (in_sample_window(cfg_.sampler, run_.samples[idx].sample_ts, capture_ts)) return true;
      }
      return false;
    });
  }

  void mark_sampled(std::int64_t frame_id) {
    auto it = frame_index_.find(frame_id);
    if (it != frame_index_.end()) run_.frames[it->second].sampled = true;
  }

  void finish() {
    for (std::size_t idx : pending_stalls_) {
      SampleLog& s = run_.samples[idx];
      s.unresolved = true;
      s.outcome.wait_ms = end_ms_ - s.decision_ts;
    }
    pending_stalls_.clear();
    run_.totals.duplicate_packets = assembly_.duplicates();
  }

  SessionConfig cfg_;
  std::uint64_t seed_;
  TimeMs duration_ms_ = 0.0;
  TimeMs end_ms_ = 0.0;
  bool ran_ = false;

  Simulator sim_;
  Link link_;
  std::mt19937_64 feedback_rng_;
  RateController controller_;
  PacketSource source_;
  std::uint64_t capture_gen_ = 0;
  std::unordered_map<std::int64_t, Packet> sent_;

  AssemblyState assembly_;
  NackTracker nacks_;
  std::int64_t epoch_received_ = 0;
  std::int64_t epoch_lost_ = 0;
  std::vector<std::size_t> pending_stalls_;

  std::unordered_map<std::int64_t, std::size_t> frame_index_;
  RunTrace run_;
};

inline RunTrace run_session(const SessionConfig& cfg, std::uint64_t seed) { return Session(cfg, seed).run(); }

}  // namespace artic
