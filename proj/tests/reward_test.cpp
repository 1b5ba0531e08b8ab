// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The embedrl Authors

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "embedrl/detail/random.hpp"
#include "embedrl/reward.hpp"
#include "oracles.hpp"

using namespace embedrl;
using namespace embedrl::reward;
using embedding::normalize;
using tcot::TCotDocument;

namespace {

template <class F>
Errc code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::invalid_argument;
}

TCotDocument keyword_doc(std::vector<std::string> words, std::string answer = "a") {
  TCotDocument d;
  d.thinking = "t";
  d.cues.push_back(tcot::TextKeywords{std::move(words)});
  d.answer = std::move(answer);
  return d;
}

/// Unit vector at angle theta in the plane: cosine with e1 is cos(theta).
EmbeddingVector at_cos(double c) { return normalize(std::vector<double>{c, std::sqrt(std::max(0.0, 1.0 - c * c))}); }

class ThrowingJudge final : public Discriminator {
 public:
  std::size_t select(const TCotDocument&, std::span<const TCotDocument>) const override {
    throw std::runtime_error("judge offline");
  }
};

class FirstJudge final : public Discriminator {
 public:
  std::size_t select(const TCotDocument&, std::span<const TCotDocument>) const override { return 0; }
};

}  // namespace

TEST(FormatReward, Examples) {
  auto img = TCotDocument{};
  img.cues.push_back(tcot::BBoxes{{tcot::BBox::make(0, 0, 10, 10)}});
  img.answer = "a";
  EXPECT_EQ(format_reward(img, Modality::image), 1);
  EXPECT_EQ(format_reward(keyword_doc({"x"}), Modality::video), 0);
  EXPECT_EQ(format_reward(std::string_view("<thinking>unclosed"), Modality::text), 0);
}

TEST(WeightedNegativeExpectation, Examples) {
  const std::vector<double> one{0.5};
  EXPECT_DOUBLE_EQ(weighted_negative_expectation(one, 0.5), 0.5);
  const std::vector<double> two{0.8, 0.2};
  const double hand = (std::exp(1.6) * 0.8 + std::exp(0.4) * 0.2) / (std::exp(1.6) + std::exp(0.4));
  EXPECT_NEAR(weighted_negative_expectation(two, 0.5), hand, 1e-12);
  EXPECT_NEAR(weighted_negative_expectation(two, 0.5), 0.6611, 1e-4);
  EXPECT_NEAR(weighted_negative_expectation(two, 1e6), 0.5, 1e-6);
  EXPECT_EQ(code_of([] { weighted_negative_expectation(std::vector<double>{}, 0.5); }), Errc::no_negatives);
}

TEST(WeightedNegativeExpectation, MatchesUnshiftedOracle) {
  embedrl::detail::Rng rng(8);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> s(1 + rng.below(20));
    for (double& x : s) x = 2.0 * rng.uniform() - 1.0;
    const double tau = 0.1 + rng.uniform();
    ASSERT_NEAR(weighted_negative_expectation(s, tau), oracle::softmax_weighted_mean(s, tau), 1e-12);
  }
}

TEST(AccTopk, Examples) {
  const auto q = at_cos(1.0);
  std::vector<Candidate> only{{"pos", at_cos(0.3)}};
  EXPECT_EQ(acc_topk(q, "pos", only, 1), 1);

  // 8 negatives above the positive, 11 below: rank 9 of 20.
  std::vector<Candidate> pool;
  for (int i = 0; i < 8; ++i) pool.push_back({"hi" + std::to_string(i), at_cos(0.9 - 0.01 * i)});
  pool.push_back({"pos", at_cos(0.5)});
  for (int i = 0; i < 11; ++i) pool.push_back({"lo" + std::to_string(i), at_cos(0.4 - 0.01 * i)});
  std::vector<std::pair<double, std::string>> brute;
  for (const auto& c : pool) brute.push_back({-embedding::cosine_sim(q, c.embedding), c.id});
  std::sort(brute.begin(), brute.end());
  const auto rank = std::find_if(brute.begin(), brute.end(), [](const auto& p) { return p.second == "pos"; }) - brute.begin() + 1;
  ASSERT_EQ(rank, 9);
  EXPECT_EQ(acc_topk(q, "pos", pool, 8), 0);
  EXPECT_EQ(acc_topk(q, "pos", pool, 9), 1);
  EXPECT_EQ(acc_topk(q, "pos", pool, 20), 1);
  EXPECT_EQ(acc_topk(q, "pos", pool, 500), 1);
  EXPECT_EQ(code_of([&] { acc_topk(q, "missing", pool, 8); }), Errc::unknown_positive);
}

TEST(OutcomeReward, Examples) {
  const auto q = at_cos(1.0);
  const Candidate pos{"pos", at_cos(0.9)};
  const std::vector<Candidate> neg{{"neg", at_cos(0.5)}};
  OutcomeConfig cfg;
  EXPECT_NEAR(outcome_reward(q, pos, neg, cfg), 0.4, 1e-12);

  cfg.k = 1;
  const std::vector<Candidate> above{{"neg", at_cos(0.95)}};
  EXPECT_EQ(outcome_reward(q, pos, above, cfg), 0.0);

  const std::vector<Candidate> same{{"neg", at_cos(0.9)}};
  cfg.k = 8;
  EXPECT_NEAR(outcome_reward(q, pos, same, cfg), 0.0, 1e-15);
  EXPECT_EQ(code_of([&] { outcome_reward(q, pos, std::vector<Candidate>{}, cfg); }), Errc::no_negatives);
}

TEST(TotalReward, Examples) {
  EXPECT_EQ(total_reward(1, 1, 0.4, RewardWeights{}), 0.93);
  EXPECT_EQ(total_reward(0, 0, 0, RewardWeights{}), 0.0);
  EXPECT_EQ(total_reward(1, 1, -0.37, RewardWeights{0, 0, 1}), -0.37);
}

TEST(ProcessReward, Examples) {
  const CueOverlapDiscriminator judge;
  const auto q = keyword_doc({"kite", "sky"});
  const std::vector<TCotDocument> single{keyword_doc({"beach"})};
  const std::vector<std::size_t> zero{0};
  EXPECT_EQ(process_reward(q, single, zero, judge, 1).reward, 1);

  std::vector<TCotDocument> cands{keyword_doc({"dog"}), keyword_doc({"car", "road"}), keyword_doc({"kite", "sky"}),
                                  keyword_doc({"tree"})};
  const std::vector<std::size_t> pos{2};
  for (std::uint64_t seed = 0; seed < 20; ++seed) EXPECT_EQ(process_reward(q, cands, pos, judge, seed).reward, 1);
  const std::vector<std::size_t> wrong{0, 3};
  for (std::uint64_t seed = 0; seed < 20; ++seed) EXPECT_EQ(process_reward(q, cands, wrong, judge, seed).reward, 0);

  EXPECT_EQ(code_of([&] { process_reward(q, std::vector<TCotDocument>{}, pos, judge, 0); }), Errc::empty_candidates);
}

TEST(ProcessReward, DiscriminatorFailureScoresZero) {
  const auto q = keyword_doc({"kite"});
  const std::vector<TCotDocument> cands{keyword_doc({"kite"})};
  const std::vector<std::size_t> pos{0};
  const auto r = process_reward(q, cands, pos, ThrowingJudge{}, 0);
  EXPECT_EQ(r.reward, 0);
  ASSERT_TRUE(r.fault);
  EXPECT_NE(r.fault->find("DiscriminatorFailure"), std::string::npos);
}

TEST(ProcessReward, ShuffleHidesCandidateOrder) {
  // A judge that always takes the first shown candidate hits the positive at
  // about the base rate, not always.
  const auto q = keyword_doc({"kite"});
  std::vector<TCotDocument> cands(4, keyword_doc({"x"}));
  const std::vector<std::size_t> pos{0};
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 400; ++seed) hits += process_reward(q, cands, pos, FirstJudge{}, seed).reward;
  EXPECT_GT(hits, 60);
  EXPECT_LT(hits, 140);
}

TEST(CueOverlapDiscriminator, BoxesAndFrames) {
  const CueOverlapDiscriminator judge;
  TCotDocument q;
  q.cues.push_back(tcot::BBoxes{{tcot::BBox::make(100, 100, 400, 400)}});
  TCotDocument near = q, far;
  near.cues[0] = tcot::BBoxes{{tcot::BBox::make(120, 110, 390, 420)}};
  far.cues.push_back(tcot::BBoxes{{tcot::BBox::make(600, 600, 900, 900)}});
  EXPECT_EQ(judge.select(q, std::vector<TCotDocument>{far, near}), 1u);

  TCotDocument v, v_match, v_other;
  v.cues.push_back(tcot::KeyFrames{{2, 5}});
  v_match.cues.push_back(tcot::KeyFrames{{5, 2, 9}});
  v_other.cues.push_back(tcot::KeyFrames{{1}});
  EXPECT_EQ(judge.select(v, std::vector<TCotDocument>{v_other, v_match}), 1u);
}

namespace {

struct RandomBatch {
  std::vector<PairRollouts> pairs;
};

RandomBatch random_batch(std::uint64_t seed, std::size_t n_pairs, std::size_t g, bool mirror_targets,
                         bool unparseable = true) {
  embedrl::detail::Rng rng(seed);
  RandomBatch b;
  const auto rand_vec = [&] {
    std::vector<double> v(6);
    for (double& x : v) x = rng.normal();
    return normalize(v);
  };
  for (std::size_t p = 0; p < n_pairs; ++p) {
    PairRollouts pr;
    pr.query.id = "q" + std::to_string(p);
    pr.target.id = "t" + std::to_string(p);
    pr.query.modality = Modality::text;
    pr.target.modality = Modality::text;
    for (std::size_t i = 0; i < g; ++i) {
      Rollout rq{keyword_doc({"w" + std::to_string(p), "r" + std::to_string(rng.below(3))}, "pair " + std::to_string(p)),
                 rand_vec(), 0.0};
      if (rng.below(6) == 0 && unparseable) rq.doc.reset();
      pr.query.rollouts.push_back(rq);
      if (mirror_targets) {
        pr.target.rollouts.push_back(rq);
      } else {
        Rollout rt{keyword_doc({"w" + std::to_string(p)}, "pair " + std::to_string(p)), rand_vec(), 0.0};
        if (rng.below(6) == 0) rt.doc->cues.clear();
        pr.target.rollouts.push_back(rt);
      }
    }
    b.pairs.push_back(std::move(pr));
  }
  return b;
}

/// Picks the first shown candidate whose answer equals the query's; order
/// independent in outcome because all such candidates are positives here.
class AnswerJudge final : public Discriminator {
 public:
  std::size_t select(const TCotDocument& q, std::span<const TCotDocument> c) const override {
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (c[i].answer == q.answer) return i;
    }
    return 0;
  }
};

}  // namespace

TEST(SymmetricRewards, MirroredBatchScoresBothDirectionsAlike) {
  const auto b = random_batch(4, 5, 8, /*mirror_targets=*/true);
  const auto r = symmetric_rewards(b.pairs, {}, CueOverlapDiscriminator{}, RewardConfig{}, 17);
  for (std::size_t p = 0; p < b.pairs.size(); ++p) EXPECT_EQ(r.pairs[p].query, r.pairs[p].target) << p;
}

TEST(SymmetricRewards, SinglePairHasNoNegatives) {
  const auto b = random_batch(4, 1, 4, false);
  EXPECT_EQ(code_of([&] { symmetric_rewards(b.pairs, {}, CueOverlapDiscriminator{}, RewardConfig{}, 0); }),
            Errc::no_negatives);
  RewardConfig no_outcome;
  no_outcome.use_outcome = false;
  EXPECT_NO_THROW(symmetric_rewards(b.pairs, {}, CueOverlapDiscriminator{}, no_outcome, 0));
}

TEST(SymmetricRewards, RoleSwapOracle) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto b = random_batch(seed, 2 + seed % 5, 4, false, /*unparseable=*/false);
    auto swapped = b.pairs;
    for (auto& p : swapped) std::swap(p.query, p.target);
    const AnswerJudge judge;
    const auto r = symmetric_rewards(b.pairs, {}, judge, RewardConfig{}, seed);
    const auto s = symmetric_rewards(swapped, {}, judge, RewardConfig{}, seed);
    for (std::size_t p = 0; p < b.pairs.size(); ++p) {
      ASSERT_EQ(r.pairs[p].query, s.pairs[p].target);
      ASSERT_EQ(r.pairs[p].target, s.pairs[p].query);
    }
  }
}

TEST(SymmetricRewards, OutcomeMatchesBruteForce) {
  const auto b = random_batch(99, 4, 3, false);
  RewardConfig cfg;
  cfg.outcome.k = 2;
  const auto r = symmetric_rewards(b.pairs, {}, CueOverlapDiscriminator{}, cfg, 1);
  for (std::size_t p = 0; p < b.pairs.size(); ++p) {
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& e = b.pairs[p].query.rollouts[i].embedding;
      const double pos = embedding::cosine_sim(e, b.pairs[p].target.rollouts[i].embedding);
      std::vector<double> neg;
      std::size_t above = 0;
      for (std::size_t o = 0; o < b.pairs.size(); ++o) {
        if (o == p) continue;
        neg.push_back(embedding::cosine_sim(e, b.pairs[o].target.rollouts[i].embedding));
        above += neg.back() > pos ? 1 : 0;
      }
      const double expect = above + 1 <= 2 ? pos - oracle::softmax_weighted_mean(neg, 0.5) : 0.0;
      ASSERT_NEAR(r.pairs[p].query[i].outcome, expect, 1e-12);
    }
  }
}

TEST(SymmetricRewards, AblationTogglesZeroTheirColumn) {
  const auto b = random_batch(7, 4, 4, false);
  RewardConfig cfg;
  cfg.use_process = false;
  const auto r = symmetric_rewards(b.pairs, {}, CueOverlapDiscriminator{}, cfg, 3);
  for (const auto& p : r.pairs) {
    for (const auto& x : p.query) {
      EXPECT_EQ(x.process, 0.0);
      EXPECT_EQ(x.total, 0.05 * x.format + 0.2 * x.outcome);
    }
  }
}

TEST(SymmetricRewards, GroupConsistentGate) {
  const auto b = random_batch(12, 6, 4, false);
  RewardConfig cfg;
  cfg.outcome.k = 2;
  cfg.outcome.acc_mode = AccMode::group_consistent;
  const auto r = symmetric_rewards(b.pairs, {}, CueOverlapDiscriminator{}, cfg, 3);
  cfg.outcome.acc_mode = AccMode::per_rollout;
  const auto per = symmetric_rewards(b.pairs, {}, CueOverlapDiscriminator{}, cfg, 3);
  for (std::size_t p = 0; p < r.pairs.size(); ++p) {
    const auto& g = r.pairs[p].query;
    const auto& pr = per.pairs[p].query;
    const bool all_open = std::all_of(g.begin(), g.end(), [](const auto& x) { return x.outcome != 0.0; });
    const bool all_closed = std::all_of(g.begin(), g.end(), [](const auto& x) { return x.outcome == 0.0; });
    EXPECT_TRUE(all_open || all_closed);
    if (all_open) {
      for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(g[i].outcome, pr[i].outcome);
    }
  }
}
