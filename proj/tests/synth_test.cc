#include "streamrec/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "streamrec/data_io.hpp"
#include "support/test_util.hpp"

namespace streamrec {
namespace {

using testing::TempDir;

RunConfig small_cfg() {
  RunConfig cfg;
  cfg.synth_users = 20;
  cfg.synth_items = 10;
  cfg.synth_steps = 3;
  cfg.synth_events = 400;
  cfg.synth_d_s = 3;
  return cfg;
}

TEST(Synth, ZeroVarianceRatingsEqualTrueMeans) {
  RunConfig cfg = small_cfg();
  cfg.synth_zero_variance = true;
  SynthResult r = synth_generate(cfg, 5);
  ASSERT_FALSE(r.events.empty());
  for (std::size_t k = 0; k < r.events.size(); ++k)
    EXPECT_NEAR(r.events[k].rating, r.true_mean[k], 1e-3) << k;
}

TEST(Synth, OutputParsesBackLosslessly) {
  TempDir dir("synth");
  SynthResult r = synth_generate(small_cfg(), 7);
  write_ratings_tsv(dir.file("synth.tsv"), r.events);
  auto parsed =
      parse_ratings(dir.file("synth.tsv"), RatingsFormat::kTsv, -1e9, 1e9);
  ASSERT_EQ(parsed.size(), r.events.size());
  for (std::size_t k = 0; k < parsed.size(); ++k) EXPECT_EQ(parsed[k], r.events[k]);
}

TEST(Synth, EmpiricalVarianceMatchesConfiguredNoise) {
  RunConfig cfg;
  cfg.synth_users = 1;
  cfg.synth_items = 1;
  cfg.synth_steps = 1;
  cfg.synth_events = 100000;
  cfg.synth_d_s = 3;
  cfg.synth_env_var = 0.25;
  SynthResult r = synth_generate(cfg, 11);
  ASSERT_EQ(r.events.size(), 100000u);
  // One user, one item, one step: a single latent configuration, so ratings
  // are iid draws from N(true_mean, true_var).
  double sum = 0, sum_sq = 0;
  for (const auto& ev : r.events) {
    sum += ev.rating;
    sum_sq += ev.rating * ev.rating;
  }
  const double n = double(r.events.size());
  const double var = sum_sq / n - (sum / n) * (sum / n);
  EXPECT_NEAR(var, r.true_var[0], 0.05 * r.true_var[0]);
}

TEST(Synth, EveryEntityAppearsInStepOne) {
  RunConfig cfg = small_cfg();
  SynthResult r = synth_generate(cfg, 13);
  const std::int64_t g =
      std::llround(cfg.synth_granularity_weeks * kSecondsPerWeek);
  std::set<std::string> users, items;
  for (const auto& ev : r.events) {
    if (ev.timestamp <= kSynthStartTime + g) {
      users.insert(ev.user_id);
      items.insert(ev.item_id);
    }
  }
  EXPECT_EQ(users.size(), cfg.synth_users);
  EXPECT_EQ(items.size(), cfg.synth_items);
}

TEST(Synth, DeterministicUnderSeed) {
  SynthResult a = synth_generate(small_cfg(), 99);
  SynthResult b = synth_generate(small_cfg(), 99);
  ASSERT_EQ(a.events.size(), b.events.size());
  for (std::size_t k = 0; k < a.events.size(); ++k)
    EXPECT_EQ(a.events[k], b.events[k]);
}

TEST(Synth, SidecarContainsTruthColumns) {
  TempDir dir("synth");
  RunConfig cfg = small_cfg();
  SynthResult r = synth_generate(cfg, 3);
  write_truth_sidecar(dir.file("truth.tsv"), cfg, r);
  std::string text = testing::read_file(dir.file("truth.tsv"));
  EXPECT_NE(text.find("EVENT\t"), std::string::npos);
  EXPECT_NE(text.find("USER_FACTOR\tu1"), std::string::npos);
  EXPECT_NE(text.find("ITEM_FACTOR\ti1"), std::string::npos);
}

}  // namespace
}  // namespace streamrec
