#pragma once

// Discrete-event link emulator: a FIFO bottleneck serializing at a fixed
// bandwidth, a fixed one-way propagation delay and a per-packet loss process
// applied at egress.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "artic/units.hpp"

namespace artic {

// ---------------------------------------------------------------------------
// Event loop

struct RunStats {
  std::uint64_t events_processed = 0;
  TimeMs end_time = 0.0;
};

// Time-ordered event queue; equal timestamps pop in insertion order.
class EventQueue {
 public:
  using Action = std::function<void()>;

  void push(TimeMs at, Action action) { heap_.push(Entry{at, next_order_++, std::move(action)}); }
  bool empty() const noexcept { return heap_.empty(); }
  std::size_t size() const noexcept { return heap_.size(); }
  TimeMs next_time() const { return heap_.top().at; }

  std::pair<TimeMs, Action> pop() {
    Entry e = heap_.top();
    heap_.pop();
    return {e.at, std::move(e.action)};
  }

 private:
  struct Entry {
    TimeMs at;
    std::uint64_t order;
    Action action;
  };
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const noexcept {
      if (a.at != b.at) return a.at > b.at;
      return a.order > b.order;
    }
  };

  std::priority_queue<Entry, std::vector<Entry>, Later> heap_;
  std::uint64_t next_order_ = 0;
};

class Simulator {
 public:
  TimeMs now() const noexcept { return now_; }

  void schedule_at(TimeMs at, EventQueue::Action action) {
    if (!(at >= now_)) {
      throw std::logic_error("Simulator: event scheduled in the past (" + std::to_string(at) + " < " +
                             std::to_string(now_) + ")");
    }
    queue_.push(at, std::move(action));
  }

  void schedule_in(TimeMs delay, EventQueue::Action action) { schedule_at(now_ + delay, std::move(action)); }

  /// Processes every event with time <= t_end.
  RunStats run_until(TimeMs t_end) {
    RunStats stats;
    while (!queue_.empty() && queue_.next_time() <= t_end) {
      auto [at, action] = queue_.pop();
      now_ = at;
      action();
      ++stats.events_processed;
    }
    if (t_end > now_) now_ = t_end;
    processed_ += stats.events_processed;
    stats.end_time = now_;
    return stats;
  }

  std::uint64_t events_processed() const noexcept { return processed_; }
  std::size_t pending() const noexcept { return queue_.size(); }

 private:
  TimeMs now_ = 0.0;
  EventQueue queue_;
  std::uint64_t processed_ = 0;
};

// ---------------------------------------------------------------------------
// Loss

/// splitmix64 step; derives independent stream seeds from one scenario seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Uniform draw in [0, 1) from the top 53 bits; portable across standard libraries.
inline double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

struct LossModel {
  enum class Kind { iid_bernoulli, gilbert_elliott };

  Kind kind = Kind::iid_bernoulli;
  double p = 0.0;  // i.i.d. loss, or loss in the good state for Gilbert-Elliott
  double p_good_to_bad = 0.0;
  double p_bad_to_good = 1.0;
  double loss_in_bad = 1.0;

  static LossModel iid(double p) { return LossModel{Kind::iid_bernoulli, p}; }
  static LossModel gilbert_elliott(double p_good, double good_to_bad, double bad_to_good, double loss_in_bad) {
    return LossModel{Kind::gilbert_elliott, p_good, good_to_bad, bad_to_good, loss_in_bad};
  }

  void validate() const {
    auto prob = [](double v, const char* name) {
      if (!(v >= 0.0 && v <= 1.0)) throw std::domain_error(std::string("loss model: ") + name + " outside [0, 1]");
    };
    prob(p, "p");
    prob(p_good_to_bad, "p_good_to_bad");
    prob(p_bad_to_good, "p_bad_to_good");
    prob(loss_in_bad, "loss_in_bad");
  }

  /// Long-run loss rate.
  double mean_loss() const noexcept {
    if (kind == Kind::iid_bernoulli) return p;
    const double denom = p_good_to_bad + p_bad_to_good;
    if (denom == 0.0) return p;
    const double bad_share = p_good_to_bad / denom;
    return (1.0 - bad_share) * p + bad_share * loss_in_bad;
  }
};

class LossProcess {
 public:
  LossProcess(LossModel model, std::uint64_t seed) : model_(model), rng_(seed) { model_.validate(); }

  /// One draw per packet; true means the packet is lost.
  bool drop() {
    if (model_.kind == LossModel::Kind::iid_bernoulli) return unit_draw(rng_) < model_.p;
    const double transition = unit_draw(rng_);
    if (bad_) {
      if (transition < model_.p_bad_to_good) bad_ = false;
    } else if (transition < model_.p_good_to_bad) {
      bad_ = true;
    }
    return unit_draw(rng_) < (bad_ ? model_.loss_in_bad : model_.p);
  }

  const LossModel& model() const noexcept { return model_; }

 private:
  LossModel model_;
  std::mt19937_64 rng_;
  bool bad_ = false;
};

// ---------------------------------------------------------------------------
// Link

struct LinkConfig {
  double bandwidth_bps = 10e6;
  double one_way_delay_ms = 30.0;
  LossModel loss;
  std::optional<double> queue_cap_bits;  // nullopt = unbounded
  std::uint64_t seed = 1;

  void validate() const {
    if (!(bandwidth_bps > 0.0) || !std::isfinite(bandwidth_bps)) throw std::domain_error("link: bandwidth must be positive");
    if (!(one_way_delay_ms >= 0.0)) throw std::domain_error("link: one-way delay must be non-negative");
    if (queue_cap_bits && !(*queue_cap_bits > 0.0)) throw std::domain_error("link: queue capacity must be positive");
    loss.validate();
  }
};

enum class EnqueueStatus { accepted, dropped_overflow };

struct EnqueueResult {
  EnqueueStatus status = EnqueueStatus::accepted;
  TimeMs drain_ts = 0.0;  // valid when accepted
};

struct LinkStats {
  std::uint64_t accepted = 0;
  std::uint64_t overflow_drops = 0;
  std::uint64_t delivered = 0;
  std::uint64_t lost = 0;
  double accepted_bits = 0.0;
  double delivered_bits = 0.0;
  double lost_bits = 0.0;
  double overflow_bits = 0.0;
};

class Link {
 public:
  explicit Link(LinkConfig cfg) : cfg_(std::move(cfg)), loss_(cfg_.loss, cfg_.seed) { cfg_.validate(); }

  /// Queues `bits` behind everything not yet serialized. The returned drain
  /// time is when the last bit leaves the bottleneck.
  EnqueueResult enqueue(double bits, TimeMs now) {
    if (!(bits > 0.0)) throw std::domain_error("link: packet size must be positive");
    const double backlog = queued_bits(now);
    if (cfg_.queue_cap_bits && backlog + bits > *cfg_.queue_cap_bits) {
      ++stats_.overflow_drops;
      stats_.overflow_bits += bits;
      return {EnqueueStatus::dropped_overflow, now};
    }
    const TimeMs start = std::max(now, busy_until_);
    busy_until_ = start + serialization_ms(bits, cfg_.bandwidth_bps);
    in_flight_.push_back({busy_until_, bits});
    backlog_bits_ += bits;
    ++stats_.accepted;
    stats_.accepted_bits += bits;
    return {EnqueueStatus::accepted, busy_until_};
  }

  template <typename P>
    requires requires(const P& p) { p.payload_bits; }
  EnqueueResult enqueue(const P& pkt, TimeMs now) {
    return enqueue(pkt.payload_bits, now);
  }

  /// Samples the loss process once; survivors arrive after the propagation delay.
  std::optional<TimeMs> deliver(double bits, TimeMs drain_ts) {
    if (loss_.drop()) {
      ++stats_.lost;
      stats_.lost_bits += bits;
      return std::nullopt;
    }
    ++stats_.delivered;
    stats_.delivered_bits += bits;
    return drain_ts + cfg_.one_way_delay_ms;
  }

  /// Bits accepted but not yet fully serialized at `now`.
  double queued_bits(TimeMs now) {
    while (!in_flight_.empty() && in_flight_.front().drain_ts <= now) {
      backlog_bits_ -= in_flight_.front().bits;
      in_flight_.pop_front();
    }
    if (in_flight_.empty()) backlog_bits_ = 0.0;
    return backlog_bits_;
  }

  std::size_t queued_packets(TimeMs now) {
    queued_bits(now);
    return in_flight_.size();
  }

  TimeMs busy_until() const noexcept { return busy_until_; }
  const LinkConfig& config() const noexcept { return cfg_; }
  const LinkStats& stats() const noexcept { return stats_; }

 private:
  struct Queued {
    TimeMs drain_ts;
    double bits;
  };

  LinkConfig cfg_;
  LossProcess loss_;
  TimeMs busy_until_ = 0.0;
  std::deque<Queued> in_flight_;
  double backlog_bits_ = 0.0;
  LinkStats stats_;
};

}  // namespace artic
