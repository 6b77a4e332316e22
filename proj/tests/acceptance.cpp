// Acceptance checks. Prints one PASS/FAIL line per criterion.
//
//   artic_acceptance            run every criterion
//   artic_acceptance <name>...  run the named criteria only
//
// Exit status is 0 only if every selected criterion passed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "artic/artic.hpp"

namespace fs = std::filesystem;
using namespace artic;

namespace {

// Tolerances and limits.
constexpr int kOracleTrials = 100'000;
constexpr double kOracleSigmas = 3.0;
constexpr double kBlowupFactor = 10.0;
constexpr double kBelowBandwidthFactor = 2.0;
constexpr double kStallFactor = 10.0;
constexpr double kBitsFactor = 3.0;
constexpr double kSweepBudgetS = 120.0;
constexpr double kOracleBudgetS = 60.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

unsigned workers() { return std::max(1u, std::thread::hardware_concurrency()); }

Scenario shipped(const std::string& name) { return load_scenario(fs::path(ARTIC_SCENARIO_DIR) / name); }

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Results of a sweep keyed by [value index][seed index].
std::vector<std::vector<Report>> grid(const std::vector<RunResult>& results, std::size_t values, std::size_t seeds) {
  std::vector<std::vector<Report>> out(values);
  for (std::size_t v = 0; v < values; ++v) {
    for (std::size_t s = 0; s < seeds; ++s) out[v].push_back(results[v * seeds + s].report);
  }
  return out;
}

// Group success by packet-level simulation: K frames of kappa packets, each
// packet lost independently with probability p.
double simulated_group_success(double p, int kappa, std::int64_t k, std::mt19937_64& rng) {
  std::bernoulli_distribution lost(p);
  int ok = 0;
  for (int t = 0; t < kOracleTrials; ++t) {
    bool any = false;
    for (std::int64_t j = 0; j < k && !any; ++j) {
      bool frame = true;
      for (int i = 0; i < kappa && frame; ++i) frame = !lost(rng);
      any = frame;
    }
    ok += any;
  }
  return static_cast<double>(ok) / kOracleTrials;
}

Outcome rate_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  const double target = 1.0 - 0.001;
  const double sigma = std::sqrt(target * (1.0 - target) / kOracleTrials);
  bool ok = true;
  std::string detail;
  for (double p : {0.01, 0.05, 0.1}) {
    for (int kappa : {5, 10, 20}) {
      // r_max is lifted so the closed form is never clamped.
      const RateDecision d = select_frame_rate(p, kappa, 2, 0.001, 1e6);
      const double at_k = simulated_group_success(p, kappa, d.k, rng);
      bool cell = !d.residual_violation && at_k >= target - kOracleSigmas * sigma;
      double below = 0.0;
      if (d.k > 1) {
        below = simulated_group_success(p, kappa, d.k - 1, rng);
        cell = cell && below < target + kOracleSigmas * sigma;
      }
      ok = ok && cell;
      detail += fmt(" (%.2f,%d):K=%lld %.5f/%.5f%s", p, kappa, static_cast<long long>(d.k), at_k, below,
                    cell ? "" : "!");
    }
  }
  const double secs = elapsed_s(t0);
  ok = ok && secs < kOracleBudgetS;
  return {ok, fmt("%.1fs", secs) + detail};
}

Outcome worked_rates() {
  const RateDecision a = select_frame_rate(0.1, 10, 2, 0.001, 60);
  const RateDecision b = select_frame_rate(0.01, 10, 2, 0.001, 30);
  return {a.rate == 34.0 && b.rate == 6.0, fmt("p=0.1,k=10 -> %g fps; p=0.01,k=10 -> %g fps", a.rate, b.rate)};
}

Outcome queue_blowup() {
  const auto t0 = std::chrono::steady_clock::now();
  const Scenario sc = shipped("bitrate_sweep.cfg");
  const std::vector<std::string> kbps{"2000", "6000", "9000", "12000", "15000"};
  const auto g = grid(sweep(sc, SweepAxis::bitrate, kbps, {workers(), false}), kbps.size(), sc.seeds.size());
  const double secs = elapsed_s(t0);

  bool ok = secs < kSweepBudgetS;
  double worst_ratio = 1e300;
  double worst_below = 0.0;
  for (std::size_t s = 0; s < sc.seeds.size(); ++s) {
    const double base = g[0][s].latency.p50;
    for (std::size_t v = 3; v < kbps.size(); ++v) worst_ratio = std::min(worst_ratio, g[v][s].latency.p50 / base);
    for (std::size_t v = 0; v < 3; ++v) {
      const double frame_bits = std::stod(kbps[v]) * 1000.0 / sc.frame_rate;
      const double floor_ms = sc.link.one_way_delay_ms + frame_bits / sc.link.bandwidth_bps * 1000.0;
      worst_below = std::max(worst_below, g[v][s].latency.p50 / floor_ms);
    }
  }
  ok = ok && worst_ratio > kBlowupFactor && worst_below <= kBelowBandwidthFactor;
  std::string detail = fmt("%.1fs; min p50 ratio above/2Mbps %.1fx (need >%.0fx); max p50/(prop+ser) below %.3f "
                           "(need <=%.0f); seed-1 p50:",
                           secs, worst_ratio, kBlowupFactor, worst_below, kBelowBandwidthFactor);
  for (std::size_t v = 0; v < kbps.size(); ++v) detail += fmt(" %s=%.1f", kbps[v].c_str(), g[v][0].latency.p50);

  // Sensitivity to the queue assumption: a 200 ms drop-tail buffer turns the
  // blowup into loss. Reported, not judged.
  Scenario bounded = with_axis_value(sc, SweepAxis::bitrate, "12000");
  bounded.link.queue_cap_bits = 0.2 * sc.link.bandwidth_bps;
  bounded.seeds = {sc.seeds.front()};
  const Report b = run_scenario(bounded).front().report;
  detail += fmt("; bounded 200ms queue at 12000: p50=%.1f, %llu of %zu frames incomplete", b.latency.p50,
                static_cast<unsigned long long>(b.latency.incomplete_count),
                b.latency.samples_ms.size() + b.latency.incomplete_count);
  return {ok, detail};
}

Outcome loss_trend() {
  const Scenario sc = shipped("loss_sweep.cfg");
  const std::vector<std::string> loss{"0", "0.01", "0.05", "0.1"};
  const auto g = grid(sweep(sc, SweepAxis::loss, loss, {workers(), false}), loss.size(), sc.seeds.size());
  bool ok = true;
  std::string detail = "p99 by seed:";
  for (std::size_t s = 0; s < sc.seeds.size(); ++s) {
    detail += fmt(" [%llu]", static_cast<unsigned long long>(sc.seeds[s]));
    for (std::size_t v = 0; v < loss.size(); ++v) {
      detail += fmt(" %.1f", g[v][s].latency.p99);
      if (v > 0 && g[v][s].latency.p99 < g[v - 1][s].latency.p99) ok = false;
    }
  }
  return {ok, detail};
}

struct LossyRuns {
  std::vector<Report> adaptive, fixed2, fixed30;
  double secs = 0.0;
};

const LossyRuns& lossy_runs() {
  static const LossyRuns runs = [] {
    const auto t0 = std::chrono::steady_clock::now();
    LossyRuns r;
    const Scenario adaptive = shipped("lossy_adaptive.cfg");
    const Scenario fixed = shipped("lossy_fixed.cfg");
    for (const auto& res : run_scenario(adaptive, {workers(), false})) r.adaptive.push_back(res.report);
    const auto f = grid(sweep(fixed, SweepAxis::frame_rate, {"2", "30"}, {workers(), false}), 2, fixed.seeds.size());
    r.fixed2 = f[0];
    r.fixed30 = f[1];
    r.secs = elapsed_s(t0);
    return r;
  }();
  return runs;
}

double mean_of(const std::vector<Report>& v, const std::function<double(const Report&)>& f) {
  double sum = 0.0;
  for (const auto& r : v) sum += f(r);
  return sum / static_cast<double>(v.size());
}

Outcome adaptive_stall() {
  const LossyRuns& r = lossy_runs();
  auto stall = [](const Report& x) { return x.stalls.mean_ms; };
  const double a = mean_of(r.adaptive, stall);
  const double f = mean_of(r.fixed2, stall);
  std::string per_seed;
  for (std::size_t i = 0; i < r.adaptive.size(); ++i) {
    per_seed += fmt(" %.1f/%.2f", r.fixed2[i].stalls.mean_ms, r.adaptive[i].stalls.mean_ms);
  }
  const bool ok = f >= kStallFactor * a && r.secs < kSweepBudgetS;
  return {ok, fmt("%.1fs; stall mean fixed-2fps %.2f ms vs adaptive %.2f ms = %.1fx (need >=%.0fx); per seed:", r.secs,
                  f, a, f / a, kStallFactor) + per_seed};
}

Outcome adaptive_bits() {
  const LossyRuns& r = lossy_runs();
  auto bits = [](const Report& x) { return x.total_bits_sent; };
  const double a = mean_of(r.adaptive, bits);
  const double f = mean_of(r.fixed30, bits);
  auto fps = [](const Report& x) { return x.frame_rate; };
  const bool ok = f >= kBitsFactor * a && r.secs < kSweepBudgetS;
  return {ok, fmt("total bits sent fixed-30fps %.3g vs adaptive %.3g = %.2fx (need >=%.0fx); adaptive mean rate "
                  "%.1f fps",
                  f, a, f / a, kBitsFactor, mean_of(r.adaptive, fps))};
}

Outcome qp_properties() {
  int checked = 0;
  bool ok = true;
  for (double gamma : {1.0, 2.0, 3.0, 5.0}) {
    int prev = 52;
    for (int i = -100; i <= 100; ++i) {
      const int qp = qp_from_correlation(i / 100.0, gamma);
      ok = ok && qp >= 0 && qp <= 51 && qp <= prev;
      prev = qp;
      ++checked;
    }
    ok = ok && qp_from_correlation(-1.0, gamma) == 51 && qp_from_correlation(1.0, gamma) == 0;
  }
  return {ok, fmt("%d points in range and non-increasing; endpoints 51 and 0", checked)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "artic_acceptance";
  fs::create_directories(dir);
  const fs::path cfg = fs::path(ARTIC_SCENARIO_DIR) / "lossy_adaptive.cfg";
  std::string csv[2], trace[2];
  for (int i = 0; i < 2; ++i) {
    const fs::path out = dir / fmt("run%d.csv", i);
    const std::string cmd = std::string(ARTIC_CLI_PATH) + " run " + cfg.string() + " --trace -j " +
                            std::to_string(i + 1) + " --out " + out.string();
    if (std::system(cmd.c_str()) != 0) return {false, "CLI failed: " + cmd};
    csv[i] = slurp(out);
    trace[i] = slurp(out.string() + ".trace.ndjson");
  }
  const bool ok = !csv[0].empty() && !trace[0].empty() && csv[0] == csv[1] && trace[0] == trace[1];
  return {ok, fmt("CSV %zu bytes, trace %zu bytes, identical across two runs: %s", csv[0].size(), trace[0].size(),
                  ok ? "yes" : "no")};
}

Outcome allocator_properties() {
  bool ok = true;
  const RateModelParams params{10000, 30, 6};
  ok = ok && patch_bits(30, params) == 10000 && patch_bits(36, params) == 5000 && patch_bits(42, params) == 2500;
  for (int qp = 0; qp + 6 <= 51; ++qp) {
    ok = ok && std::abs(patch_bits(qp + 6, params) - patch_bits(qp, params) / 2) <= 1e-9 * patch_bits(qp, params);
  }
  const PatchGrid g = PatchGrid::for_resolution(1280, 720, 64);
  double prev = 0.0;
  for (int i = -100; i <= 100; ++i) {
    const double bits = build_frame_budget(uniform_correlation_map(g, i / 100.0), 3, params).total_bits;
    ok = ok && bits >= prev;
    prev = bits;
  }
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    CorrelationMap m = uniform_correlation_map(g, 0.0);
    for (double& v : m.values) v = u(rng);
    const double before = build_frame_budget(m, 3, params).total_bits;
    const int r = trial % g.rows;
    const int c = trial % g.cols;
    m.values(r, c) = std::min(1.0, m.values(r, c) + 0.25);
    ok = ok && build_frame_budget(m, 3, params).total_bits >= before;
  }
  return {ok, "halving identities exact; frame bits non-decreasing in rho (uniform sweep and 500 single-patch raises)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"rate-oracle", rate_oracle},
      {"worked-rates", worked_rates},
      {"queue-blowup", queue_blowup},
      {"loss-trend", loss_trend},
      {"adaptive-stall", adaptive_stall},
      {"adaptive-bits", adaptive_bits},
      {"qp-properties", qp_properties},
      {"determinism", determinism},
      {"allocator-properties", allocator_properties},
  };
  std::vector<std::string> selected(argv + 1, argv + argc);
  for (const auto& name : selected) {
    if (std::none_of(criteria.begin(), criteria.end(), [&](const auto& c) { return c.first == name; })) {
      std::fprintf(stderr, "unknown criterion: %s\n", name.c_str());
      return 2;
    }
  }
  bool all = true;
  for (const auto& [name, check] : criteria) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), name) == selected.end()) continue;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
