#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "artic/netem.hpp"

namespace artic {
namespace {

constexpr double kPkt = 1400 * 8;

LinkConfig link_with_loss(LossModel loss, std::uint64_t seed = 1) {
  LinkConfig cfg;
  cfg.loss = loss;
  cfg.seed = seed;
  return cfg;
}

TEST(Simulator, EmptyScenario) {
  Simulator sim;
  EXPECT_EQ(sim.run_until(1000).events_processed, 0u);
  EXPECT_DOUBLE_EQ(sim.now(), 1000);
}

TEST(Simulator, OrderAndTieBreak) {
  Simulator sim;
  std::string log;
  sim.schedule_at(5, [&] { log += 'c'; });
  sim.schedule_at(1, [&] { log += 'a'; });
  sim.schedule_at(5, [&] { log += 'd'; });
  sim.schedule_at(1, [&] {
    log += 'b';
    sim.schedule_in(0, [&] { log += 'x'; });
  });
  sim.schedule_at(7, [&] { log += 'z'; });
  const RunStats stats = sim.run_until(5);
  EXPECT_EQ(log, "abxcd");
  EXPECT_EQ(stats.events_processed, 5u);
  EXPECT_EQ(sim.pending(), 1u);
}

TEST(Simulator, PastEventIsLogicError) {
  Simulator sim;
  sim.schedule_at(10, [] {});
  sim.run_until(10);
  EXPECT_THROW(sim.schedule_at(9.999, [] {}), std::logic_error);
}

TEST(Simulator, SinglePacketIsThreeEvents) {
  Simulator sim;
  Link link(link_with_loss(LossModel::iid(0)));
  std::optional<TimeMs> arrived;
  sim.schedule_at(0, [&] {
    const EnqueueResult r = link.enqueue(kPkt, sim.now());
    sim.schedule_at(r.drain_ts, [&] {
      if (auto at = link.deliver(kPkt, sim.now())) sim.schedule_at(*at, [&] { arrived = sim.now(); });
    });
  });
  EXPECT_EQ(sim.run_until(1000).events_processed, 3u);
  ASSERT_TRUE(arrived);
  EXPECT_NEAR(*arrived, 31.12, 1e-9);
}

TEST(Link, DrainOnEmptyQueue) {
  Link link(link_with_loss(LossModel::iid(0)));
  const EnqueueResult r = link.enqueue(kPkt, 0);
  EXPECT_EQ(r.status, EnqueueStatus::accepted);
  EXPECT_NEAR(r.drain_ts, 1.12, 1e-12);
}

TEST(Link, DrainBehindTenPackets) {
  Link link(link_with_loss(LossModel::iid(0)));
  for (int i = 0; i < 10; ++i) link.enqueue(kPkt, 0);
  EXPECT_EQ(link.queued_packets(0), 10u);
  EXPECT_NEAR(link.enqueue(kPkt, 0).drain_ts, 12.32, 1e-9);
}

TEST(Link, WorkConserving) {
  Link link(link_with_loss(LossModel::iid(0)));
  link.enqueue(kPkt, 0);
  // Arrives after the link went idle: starts immediately.
  EXPECT_NEAR(link.enqueue(kPkt, 5).drain_ts, 6.12, 1e-9);
  // Arrives while busy: starts when the previous packet leaves.
  EXPECT_NEAR(link.enqueue(kPkt, 6).drain_ts, 7.24, 1e-9);
  EXPECT_NEAR(link.queued_bits(6), kPkt * 2, 1e-6);
  EXPECT_NEAR(link.queued_bits(6.12), kPkt, 1e-6);
}

TEST(Link, BoundedQueueOverflow) {
  LinkConfig cfg = link_with_loss(LossModel::iid(0));
  cfg.queue_cap_bits = 3 * kPkt;
  Link link(cfg);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(link.enqueue(kPkt, 0).status, EnqueueStatus::accepted);
  EXPECT_EQ(link.enqueue(kPkt, 0).status, EnqueueStatus::dropped_overflow);
  EXPECT_EQ(link.stats().overflow_drops, 1u);
  EXPECT_EQ(link.enqueue(kPkt, 1.2).status, EnqueueStatus::accepted);
}

TEST(Link, LosslessAndTotalLoss) {
  Link clean(link_with_loss(LossModel::iid(0)));
  Link dead(link_with_loss(LossModel::iid(1)));
  for (int i = 0; i < 1000; ++i) {
    EXPECT_EQ(clean.deliver(kPkt, i), i + 30.0);
    EXPECT_FALSE(dead.deliver(kPkt, i));
  }
}

TEST(Link, BernoulliDeliveryRate) {
  Link link(link_with_loss(LossModel::iid(0.1), 42));
  constexpr int kN = 100000;
  int delivered = 0;
  for (int i = 0; i < kN; ++i) delivered += link.deliver(kPkt, i).has_value();
  EXPECT_NEAR(static_cast<double>(delivered) / kN, 0.9, 0.003);
  EXPECT_EQ(link.stats().delivered + link.stats().lost, static_cast<std::uint64_t>(kN));
}

TEST(Link, GilbertElliottMeanLoss) {
  const LossModel ge = LossModel::gilbert_elliott(0.01, 0.02, 0.2, 0.5);
  EXPECT_NEAR(ge.mean_loss(), (10.0 / 11) * 0.01 + (1.0 / 11) * 0.5, 1e-12);
  LossProcess proc(ge, 7);
  constexpr int kN = 400000;
  int lost = 0;
  int bursts = 0;
  bool prev = false;
  for (int i = 0; i < kN; ++i) {
    const bool d = proc.drop();
    lost += d;
    bursts += d && prev;
    prev = d;
  }
  const double rate = static_cast<double>(lost) / kN;
  EXPECT_NEAR(rate, ge.mean_loss(), 0.004);
  // Consecutive losses are far more common than under i.i.d. loss at the same rate.
  EXPECT_GT(static_cast<double>(bursts) / kN, 3 * rate * rate);
}

TEST(Link, SeededDeterminism) {
  auto run = [](std::uint64_t seed) {
    Link link(link_with_loss(LossModel::gilbert_elliott(0.05, 0.1, 0.3, 0.6), seed));
    std::vector<bool> out;
    for (int i = 0; i < 5000; ++i) out.push_back(link.deliver(kPkt, i).has_value());
    return out;
  };
  EXPECT_EQ(run(3), run(3));
  EXPECT_NE(run(3), run(4));
}

TEST(Link, SaturationGrowsQueueDelay) {
  Link link(link_with_loss(LossModel::iid(0)));
  // 12 Mbps offered on a 10 Mbps link: one packet every 0.9333 ms.
  const double gap = kPkt / 12e6 * 1000;
  double prev_delay = -1;
  for (int i = 0; i < 2000; ++i) {
    const double now = i * gap;
    const double delay = link.enqueue(kPkt, now).drain_ts - now;
    if (i > 0) {
      EXPECT_GT(delay, prev_delay);
    }
    prev_delay = delay;
  }
}

TEST(Link, InvalidConfig) {
  LinkConfig cfg;
  cfg.bandwidth_bps = 0;
  EXPECT_THROW(Link{cfg}, std::domain_error);
  cfg = {};
  cfg.loss = LossModel::iid(1.5);
  EXPECT_THROW(Link{cfg}, std::domain_error);
}

TEST(Seeds, DeriveSeedSeparatesStreams) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(9, 3), derive_seed(9, 3));
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = unit_draw(rng);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

}  // namespace
}  // namespace artic
