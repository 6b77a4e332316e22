#pragma once

// Context-aware bit allocation: correlation map -> per-patch QP -> frame budget.
//
// A correlation map holds one semantic correlation per N x N patch of a frame,
// the cosine similarity between the patch's visual feature and the feature of
// the user's words. High-correlation patches get a low QP (more bits), and
// irrelevant ones are pushed toward QP 51. Bits per patch come from an
// exponential rate-QP model standing in for a real encoder.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "artic/grid.hpp"

namespace artic {

inline constexpr int kMinQp = 0;
inline constexpr int kMaxQp = 51;
inline constexpr double kDefaultGamma = 3.0;
inline constexpr int kDefaultPatchSize = 64;

/// Feature embedding of one patch or of the user's words.
class FeatureVector {
 public:
  explicit FeatureVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw std::domain_error("FeatureVector: dimension must be >= 1");
    for (double v : values_) {
      if (!std::isfinite(v)) throw std::domain_error("FeatureVector: non-finite entry");
    }
  }

  std::size_t dimension() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }

 private:
  std::vector<double> values_;
};

/// Cosine similarity a.b / (|a||b|), clamped to [-1, 1].
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::domain_error("cosine_similarity: dimension mismatch");
  if (a.empty()) throw std::domain_error("cosine_similarity: empty vector");
  double dot = 0.0;
  double norm_a = 0.0;
  double norm_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    norm_a += a[i] * a[i];
    norm_b += b[i] * b[i];
  }
  if (norm_a == 0.0 || norm_b == 0.0) throw std::domain_error("cosine_similarity: zero-norm vector");
  const double sim = dot / (std::sqrt(norm_a) * std::sqrt(norm_b));
  return std::clamp(sim, -1.0, 1.0);
}

inline double cosine_similarity(const FeatureVector& a, const FeatureVector& b) {
  return cosine_similarity(a.values(), b.values());
}

/// Grid of semantic correlations, one per non-overlapping patch.
struct CorrelationMap {
  int patch_size = kDefaultPatchSize;
  Grid<double> values;

  int rows() const noexcept { return values.rows(); }
  int cols() const noexcept { return values.cols(); }

  /// Throws std::domain_error if empty or if any value lies outside [-1, 1].
  void validate() const {
    if (rows() < 1 || cols() < 1) throw std::domain_error("CorrelationMap: empty grid");
    if (patch_size < 1) throw std::domain_error("CorrelationMap: patch size must be >= 1");
    for (double rho : values) {
      if (!(rho >= -1.0 && rho <= 1.0)) {
        throw std::domain_error("CorrelationMap: correlation outside [-1, 1]");
      }
    }
  }

  /// True when the grid is the floor-division tiling of a width x height frame.
  bool matches_resolution(int width, int height) const noexcept {
    return patch_size > 0 && rows() == height / patch_size && cols() == width / patch_size;
  }
};

/// Grid shape for a frame of the given resolution.
struct PatchGrid {
  int rows = 0;
  int cols = 0;
  int patch_size = kDefaultPatchSize;

  static PatchGrid for_resolution(int width, int height, int patch_size) {
    if (patch_size < 1) throw std::domain_error("PatchGrid: patch size must be >= 1");
    PatchGrid g{height / patch_size, width / patch_size, patch_size};
    if (g.rows < 1 || g.cols < 1) {
      throw std::domain_error("PatchGrid: frame smaller than one patch");
    }
    return g;
  }
};

inline CorrelationMap uniform_correlation_map(const PatchGrid& grid, double rho) {
  CorrelationMap map{grid.patch_size, Grid<double>(grid.rows, grid.cols, rho)};
  map.validate();
  return map;
}

/// Correlation map plus whether it is the neutral stand-in used when the
/// chat has no user words yet.
struct ContextMap {
  CorrelationMap map;
  bool fallback = false;
};

inline ContextMap context_or_neutral(std::optional<CorrelationMap> map, const PatchGrid& grid) {
  if (map) {
    map->validate();
    return {std::move(*map), false};
  }
  return {uniform_correlation_map(grid, 0.0), true};
}

using QpMap = Grid<int>;

/// QP = 51 * (1 - ((rho + 1) / 2)^gamma), rounded half-up.
inline int qp_from_correlation(double rho, double gamma = kDefaultGamma) {
  if (!(rho >= -1.0 && rho <= 1.0)) throw std::domain_error("qp_from_correlation: rho outside [-1, 1]");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw std::domain_error("qp_from_correlation: gamma must be positive and finite");
  }
  const double importance = std::pow((rho + 1.0) / 2.0, gamma);
  const double qp = static_cast<double>(kMaxQp) * (1.0 - importance);
  const int rounded = static_cast<int>(std::floor(qp + 0.5));
  return std::clamp(rounded, kMinQp, kMaxQp);
}

inline QpMap build_qp_map(const CorrelationMap& map, double gamma = kDefaultGamma) {
  map.validate();
  QpMap out(map.rows(), map.cols());
  for (int r = 0; r < map.rows(); ++r) {
    for (int c = 0; c < map.cols(); ++c) out(r, c) = qp_from_correlation(map.values(r, c), gamma);
  }
  return out;
}

/// Exponential rate-QP model: rate halves every `halving_step` QP units.
struct RateModelParams {
  double ref_bits_per_patch = 2000.0;
  int ref_qp = 30;
  double halving_step = 6.0;

  void validate() const {
    if (!(ref_bits_per_patch > 0.0) || !std::isfinite(ref_bits_per_patch)) {
      throw std::domain_error("RateModelParams: ref_bits_per_patch must be positive");
    }
    if (ref_qp < kMinQp || ref_qp > kMaxQp) throw std::domain_error("RateModelParams: ref_qp outside [0, 51]");
    if (!(halving_step > 0.0) || !std::isfinite(halving_step)) {
      throw std::domain_error("RateModelParams: halving_step must be positive");
    }
  }
};

inline double patch_bits(int qp, const RateModelParams& params) {
  if (qp < kMinQp || qp > kMaxQp) throw std::domain_error("patch_bits: qp outside [0, 51]");
  params.validate();
  return params.ref_bits_per_patch *
         std::exp2(-static_cast<double>(qp - params.ref_qp) / params.halving_step);
}

struct FrameBudget {
  QpMap qp_map;
  Grid<double> patch_bits;
  double total_bits = 0.0;
};

inline FrameBudget build_frame_budget(const CorrelationMap& map, double gamma,
                                      const RateModelParams& params) {
  params.validate();
  FrameBudget budget;
  budget.qp_map = build_qp_map(map, gamma);
  budget.patch_bits = Grid<double>(map.rows(), map.cols());
  for (int r = 0; r < map.rows(); ++r) {
    for (int c = 0; c < map.cols(); ++c) {
      budget.patch_bits(r, c) = patch_bits(budget.qp_map(r, c), params);
    }
  }
  budget.total_bits = std::accumulate(budget.patch_bits.begin(), budget.patch_bits.end(), 0.0);
  return budget;
}

/// Rescales the reference rate so that the map's budget totals `target_bits`.
/// The QP map is unchanged; only the absolute scale of the rate model moves.
inline RateModelParams scale_to_target(const CorrelationMap& map, double gamma,
                                       RateModelParams params, double target_bits) {
  if (!(target_bits > 0.0)) throw std::domain_error("scale_to_target: target must be positive");
  const double total = build_frame_budget(map, gamma, params).total_bits;
  params.ref_bits_per_patch *= target_bits / total;
  return params;
}

}  // namespace artic
