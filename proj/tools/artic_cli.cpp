// artic: run scenario files and parameter sweeps, emit per-seed CSV rows.
//
//   artic run <config> [--out file.csv] [--parallel N] [--trace [--trace-out file]]
//   artic sweep <config> --axis bitrate|loss|frame_rate --values a,b,c [...]
//
// Exit codes: 0 ok, 1 usage error, 2 invalid scenario or correlation map,
// 3 I/O failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "artic/scenario.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

struct CommonArgs {
  std::string config;
  std::string out;
  unsigned parallel = 1;
  bool trace = false;
  std::string trace_out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("config", args.config, "Scenario file")->required();
  cmd->add_option("--out,-o", args.out, "Write CSV here instead of stdout");
  cmd->add_option("--parallel,-j", args.parallel, "Simulations to run concurrently")
      ->check(CLI::Range(1u, 1024u));
  cmd->add_flag("--trace", args.trace, "Record the event trace (newline-delimited JSON)");
  cmd->add_option("--trace-out", args.trace_out, "Trace file (default: <out>.trace.ndjson or trace.ndjson)");
}

int emit(const CommonArgs& args, const std::vector<artic::RunResult>& results) {
  if (args.out.empty()) {
    artic::write_csv(std::cout, results);
  } else {
    std::ofstream out(args.out, std::ios::trunc);
    if (!out) {
      std::cerr << "artic: cannot write " << args.out << '\n';
      return kExitIo;
    }
    artic::write_csv(out, results);
  }
  if (args.trace) {
    std::string path = args.trace_out;
    if (path.empty()) path = args.out.empty() ? "trace.ndjson" : args.out + ".trace.ndjson";
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
      std::cerr << "artic: cannot write " << path << '\n';
      return kExitIo;
    }
    artic::write_traces(out, results);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Packet-level simulator for MLLM-oriented real-time video uplinks"};
  app.require_subcommand(1);

  CommonArgs run_args;
  auto* run = app.add_subcommand("run", "Run a scenario once per seed");
  add_common(run, run_args);

  CommonArgs sweep_args;
  std::string axis;
  std::string values;
  auto* sweep = app.add_subcommand("sweep", "Run a scenario across values of one axis");
  add_common(sweep, sweep_args);
  sweep->add_option("--axis", axis, "bitrate (kbps), loss (rate) or frame_rate (fps)")->required();
  sweep->add_option("--values", values, "Comma-separated axis values")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (run->parsed()) {
      const artic::Scenario sc = artic::load_scenario(run_args.config);
      return emit(run_args, artic::run_scenario(sc, {run_args.parallel, run_args.trace}));
    }
    const artic::SweepAxis ax = artic::parse_axis(axis);
    std::vector<std::string> list;
    std::string item;
    for (char c : values + ",") {
      if (c == ',') {
        if (!item.empty()) list.push_back(item);
        item.clear();
      } else if (c != ' ') {
        item += c;
      }
    }
    if (list.empty()) throw artic::UsageError("--values lists no axis values");
    const artic::Scenario sc = artic::load_scenario(sweep_args.config);
    return emit(sweep_args, artic::sweep(sc, ax, list, {sweep_args.parallel, sweep_args.trace}));
  } catch (const artic::UsageError& e) {
    std::cerr << "artic: " << e.what() << '\n';
    return kExitUsage;
  } catch (const artic::ConfigError& e) {
    std::cerr << "artic: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "artic: " << e.what() << '\n';
    return kExitConfig;
  }
}
