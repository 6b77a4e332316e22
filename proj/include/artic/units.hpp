#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace artic {

// Simulation time and durations are continuous milliseconds.
using TimeMs = double;

inline constexpr double kBitsPerByte = 8.0;
inline constexpr double kDefaultMtuPayloadBytes = 1400.0;
inline constexpr double kDefaultMtuPayloadBits = kDefaultMtuPayloadBytes * kBitsPerByte;

/// Number of MTU-sized packets needed to carry `size_bits`.
/// Sizes within 1e-9 relative of an exact multiple count as that multiple so
/// that rescaled budgets do not spill a phantom packet.
inline std::int64_t packet_count(double size_bits, double mtu_payload_bits) {
  if (!(size_bits > 0.0)) throw std::domain_error("packet_count: size must be positive");
  if (!(mtu_payload_bits > 0.0)) throw std::domain_error("packet_count: MTU payload must be positive");
  const double ratio = size_bits / mtu_payload_bits;
  const double nearest = std::round(ratio);
  if (nearest >= 1.0 && std::abs(ratio - nearest) <= 1e-9 * nearest) {
    return static_cast<std::int64_t>(nearest);
  }
  return static_cast<std::int64_t>(std::ceil(ratio));
}

/// Serialization time of `bits` on a link of `bandwidth_bps`.
inline TimeMs serialization_ms(double bits, double bandwidth_bps) { return bits / bandwidth_bps * 1000.0; }

}  // namespace artic
