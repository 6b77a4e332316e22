#pragma once

// Loss-resilient adaptive frame rate.
//
// The MLLM consumes one frame per sampling interval (R_M frames/s). Sending at
// R_t = K * R_M gives it K candidate frames per interval; it only has to wait
// for a retransmission when none of the K arrived intact. With i.i.d. packet
// loss p and kappa packets per frame:
//
//   P_f = (1 - p)^kappa            frame arrives intact
//   P_s = 1 - (1 - P_f)^K          at least one of K frames arrives intact
//
// The controller picks the smallest K with P_s >= 1 - epsilon.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "artic/units.hpp"

namespace artic {

inline constexpr double kDefaultMllmRate = 2.0;
inline constexpr double kDefaultEpsilon = 0.001;
inline constexpr double kDefaultMaxFrameRate = 30.0;
inline constexpr double kDefaultLossAlpha = 0.3;

inline double frame_success_prob(double p, double kappa) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("frame_success_prob: p outside [0, 1]");
  if (!(kappa > 0.0) || !std::isfinite(kappa)) throw std::domain_error("frame_success_prob: kappa must be positive");
  if (p == 1.0) return 0.0;
  return std::exp(kappa * std::log1p(-p));
}

inline double group_success_prob(double p_f, std::int64_t k) {
  if (!(p_f >= 0.0 && p_f <= 1.0)) throw std::domain_error("group_success_prob: p_f outside [0, 1]");
  if (k < 1) throw std::domain_error("group_success_prob: k must be >= 1");
  return 1.0 - std::pow(1.0 - p_f, static_cast<double>(k));
}

struct RateDecision {
  double rate = kDefaultMllmRate;  // frames/s, a multiple of the MLLM rate
  std::int64_t k = 1;              // frames per sampling interval at `rate`
  bool residual_violation = false; // constraint not met under the cap
};

/// Smallest multiple of `r_m` meeting the residual constraint, capped at the
/// largest multiple of `r_m` not above `r_max`.
inline RateDecision select_frame_rate(double p, double kappa, double r_m = kDefaultMllmRate,
                                      double eps = kDefaultEpsilon, double r_max = kDefaultMaxFrameRate) {
  if (!(r_m > 0.0) || !std::isfinite(r_m)) throw std::domain_error("select_frame_rate: r_m must be positive");
  if (!(eps > 0.0 && eps < 1.0)) throw std::domain_error("select_frame_rate: eps outside (0, 1)");
  if (!(r_max >= r_m)) throw std::domain_error("select_frame_rate: r_max below r_m");

  const auto k_cap = static_cast<std::int64_t>(std::floor(r_max / r_m + 1e-9));
  const double p_f = frame_success_prob(p, kappa);

  std::int64_t k = 1;
  bool satisfiable = true;
  if (p_f <= 0.0) {
    satisfiable = false;
  } else if (p_f < 1.0) {
    const double miss = 1.0 - p_f;
    const double ratio = std::log(eps) / std::log(miss);
    if (!std::isfinite(ratio) || ratio > static_cast<double>(k_cap) + 1.0) {
      satisfiable = false;
    } else {
      k = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(ratio)));
      // Settle ceil() rounding against the constraint as group_success_prob states it.
      auto meets = [&](std::int64_t n) { return group_success_prob(p_f, n) >= 1.0 - eps; };
      while (k > 1 && meets(k - 1)) --k;
      while (!meets(k)) ++k;
    }
  }

  RateDecision d;
  if (!satisfiable || k > k_cap) {
    d.k = k_cap;
    d.residual_violation = true;
  } else {
    d.k = k;
  }
  d.rate = r_m * static_cast<double>(d.k);
  return d;
}

struct LossEstimate {
  double p = 0.0;
  std::int64_t sample_count = 0;
};

/// EWMA of the per-epoch loss ratio. An epoch without feedback leaves the
/// estimate untouched.
inline LossEstimate update_loss_estimate(const LossEstimate& prev, std::int64_t acked, std::int64_t lost,
                                         double alpha = kDefaultLossAlpha) {
  if (acked < 0 || lost < 0) throw std::domain_error("update_loss_estimate: negative count");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::domain_error("update_loss_estimate: alpha outside [0, 1]");
  const std::int64_t total = acked + lost;
  if (total == 0) return prev;
  const double ratio = static_cast<double>(lost) / static_cast<double>(total);
  LossEstimate next;
  next.p = std::clamp(alpha * ratio + (1.0 - alpha) * prev.p, 0.0, 1.0);
  next.sample_count = prev.sample_count + total;
  return next;
}

/// Mean packets per frame.
inline double update_kappa(std::span<const double> frame_sizes_bits, double mtu_payload_bits) {
  if (frame_sizes_bits.empty()) throw std::domain_error("update_kappa: no frames");
  double sum = 0.0;
  for (double size : frame_sizes_bits) sum += static_cast<double>(packet_count(size, mtu_payload_bits));
  return sum / static_cast<double>(frame_sizes_bits.size());
}

struct RateControllerConfig {
  double mllm_rate = kDefaultMllmRate;
  double epsilon = kDefaultEpsilon;
  double r_max = kDefaultMaxFrameRate;
  double alpha = kDefaultLossAlpha;
  double epoch_s = 1.0;
  double initial_loss = 0.0;
  double initial_kappa = 1.0;
  double mtu_payload_bits = kDefaultMtuPayloadBits;

  void validate() const {
    if (!(mllm_rate >= 1.0)) throw std::domain_error("controller: mllm_rate must be >= 1");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::domain_error("controller: epsilon outside (0, 1)");
    if (!(r_max >= mllm_rate)) throw std::domain_error("controller: r_max below mllm_rate");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::domain_error("controller: alpha outside [0, 1]");
    if (!(epoch_s > 0.0)) throw std::domain_error("controller: epoch_s must be positive");
    if (!(initial_loss >= 0.0 && initial_loss <= 1.0)) throw std::domain_error("controller: initial_loss outside [0, 1]");
    if (!(initial_kappa >= 1.0)) throw std::domain_error("controller: initial_kappa must be >= 1");
    if (!(mtu_payload_bits > 0.0)) throw std::domain_error("controller: mtu payload must be positive");
  }
};

// Per-epoch state machine. Owned by the sender; not thread-safe.
class RateController {
 public:
  explicit RateController(RateControllerConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    loss_.p = cfg_.initial_loss;
    kappa_ = cfg_.initial_kappa;
    last_ = select_frame_rate(loss_.p, kappa_, cfg_.mllm_rate, cfg_.epsilon, cfg_.r_max);
  }

  void on_frame_sent(double size_bits) { epoch_frames_.push_back(size_bits); }

  void on_loss_feedback(std::int64_t acked, std::int64_t lost) {
    epoch_acked_ += acked;
    epoch_lost_ += lost;
  }

  /// Folds the epoch's observations into p and kappa and re-selects R_t.
  RateDecision end_epoch() {
    loss_ = update_loss_estimate(loss_, epoch_acked_, epoch_lost_, cfg_.alpha);
    if (!epoch_frames_.empty()) kappa_ = update_kappa(epoch_frames_, cfg_.mtu_payload_bits);
    epoch_frames_.clear();
    epoch_acked_ = 0;
    epoch_lost_ = 0;
    last_ = select_frame_rate(loss_.p, kappa_, cfg_.mllm_rate, cfg_.epsilon, cfg_.r_max);
    return last_;
  }

  double current_rate() const noexcept { return last_.rate; }
  const RateDecision& last_decision() const noexcept { return last_; }
  const LossEstimate& loss() const noexcept { return loss_; }
  double kappa() const noexcept { return kappa_; }
  const RateControllerConfig& config() const noexcept { return cfg_; }

 private:
  RateControllerConfig cfg_;
  LossEstimate loss_;
  double kappa_ = 1.0;
  RateDecision last_;
  std::vector<double> epoch_frames_;
  std::int64_t epoch_acked_ = 0;
  std::int64_t epoch_lost_ = 0;
};

}  // namespace artic
