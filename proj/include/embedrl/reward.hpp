#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The embedrl Authors

/**
 * @file reward.hpp
 * @brief Format, process and outcome rewards for T-CoT rollouts.
 *
 * total = alpha * format + beta * process + gamma * outcome
 *
 * - format  (0/1): the trace follows the tag template and carries the cue kind
 *   its modality requires.
 * - outcome (real): Acc_k(anchor, positive) * (sim(anchor, positive) -
 *   E_tau[sim(anchor, negative)]), where E_tau is the softmax(s / tau)-weighted
 *   mean of the in-batch negative similarities.
 * - process (0/1): a discriminator picks, from shuffled candidate traces, the
 *   one best aligned with the anchor's trace; 1 iff it picked a positive.
 *
 * symmetric_rewards() scores both directions of every query/target pair.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "embedrl/detail/random.hpp"
#include "embedrl/embedding.hpp"
#include "embedrl/error.hpp"
#include "embedrl/tcot.hpp"

namespace embedrl::reward {

using embedding::EmbeddingVector;
using tcot::Modality;
using tcot::TCotDocument;

struct RewardWeights {
  double alpha = 0.05;  // format
  double beta = 0.8;    // process
  double gamma = 0.2;   // outcome

  void validate() const {
    if (!(alpha >= 0.0 && beta >= 0.0 && gamma >= 0.0)) {
      throw Error(Errc::invalid_argument, "reward weights must be non-negative");
    }
  }
};

/// How the top-k gate is evaluated. `per_rollout` gates each rollout on its
/// own rank; `group_consistent` opens the gate only when every rollout of the
/// anchor's group ranks its positive within the top k.
enum class AccMode { per_rollout, group_consistent };

struct OutcomeConfig {
  std::size_t k = 8;
  double tau = 0.5;
  AccMode acc_mode = AccMode::per_rollout;

  void validate() const {
    if (k < 1) throw Error(Errc::invalid_argument, "top-k must be >= 1");
    if (!(tau > 0.0)) throw Error(Errc::invalid_argument, "tau must be > 0");
  }
};

struct RewardBreakdown {
  double format = 0.0;
  double process = 0.0;
  double outcome = 0.0;
  double total = 0.0;

  bool operator==(const RewardBreakdown&) const = default;
};

// ---------------------------------------------------------------------------
// Components
// ---------------------------------------------------------------------------

inline int format_reward(const TCotDocument& doc, Modality modality) {
  return tcot::validate_format(doc, modality).compliant ? 1 : 0;
}

/// Raw rollout text; anything that fails to parse scores 0.
inline int format_reward(std::string_view raw, Modality modality) {
  return tcot::validate_raw(raw, modality).compliant ? 1 : 0;
}

/// sum_j softmax(s_j / tau) * s_j over the negatives.
inline double weighted_negative_expectation(std::span<const double> neg_sims, double tau) {
  if (neg_sims.empty()) throw Error(Errc::no_negatives, "weighted expectation over an empty negative set");
  if (!(tau > 0.0)) throw Error(Errc::invalid_argument, "tau must be > 0");
  const double max_sim = *std::max_element(neg_sims.begin(), neg_sims.end());
  double num = 0.0;
  double den = 0.0;
  for (double s : neg_sims) {
    const double w = std::exp((s - max_sim) / tau);
    num += w * s;
    den += w;
  }
  return num / den;
}

struct ScoredCandidate {
  std::string_view id;
  double sim = 0.0;
};

/// 1-based rank of `positive_id` by descending similarity, ties broken by
/// ascending id.
inline std::size_t positive_rank(std::span<const ScoredCandidate> pool, std::string_view positive_id) {
  const auto pos = std::find_if(pool.begin(), pool.end(), [&](const ScoredCandidate& c) { return c.id == positive_id; });
  if (pos == pool.end()) throw Error(Errc::unknown_positive, std::string(positive_id));
  std::size_t rank = 1;
  for (const auto& c : pool) {
    if (c.sim > pos->sim || (c.sim == pos->sim && c.id < pos->id)) ++rank;
  }
  return rank;
}

struct Candidate {
  std::string id;
  EmbeddingVector embedding;
};

inline int acc_topk(const EmbeddingVector& query, std::string_view positive_id, std::span<const Candidate> pool,
                    std::size_t k) {
  std::vector<ScoredCandidate> scored;
  scored.reserve(pool.size());
  for (const auto& c : pool) scored.push_back({c.id, embedding::cosine_sim(query, c.embedding)});
  return positive_rank(scored, positive_id) <= k ? 1 : 0;
}

/// Outcome reward from a precomputed gate and similarities.
inline double outcome_from_scores(bool acc, double pos_sim, std::span<const double> neg_sims, double tau) {
  const double expected_neg = weighted_negative_expectation(neg_sims, tau);
  return acc ? pos_sim - expected_neg : 0.0;
}

/// Outcome reward with the top-k pool taken as {positive} + negatives.
inline double outcome_reward(const EmbeddingVector& query, const Candidate& positive,
                             std::span<const Candidate> negatives, const OutcomeConfig& cfg) {
  cfg.validate();
  if (negatives.empty()) throw Error(Errc::no_negatives, "outcome reward for '" + positive.id + "'");
  std::vector<ScoredCandidate> pool;
  std::vector<double> neg_sims;
  pool.reserve(negatives.size() + 1);
  neg_sims.reserve(negatives.size());
  const double pos_sim = embedding::cosine_sim(query, positive.embedding);
  pool.push_back({positive.id, pos_sim});
  for (const auto& n : negatives) {
    const double s = embedding::cosine_sim(query, n.embedding);
    pool.push_back({n.id, s});
    neg_sims.push_back(s);
  }
  const bool acc = positive_rank(pool, positive.id) <= cfg.k;
  return outcome_from_scores(acc, pos_sim, neg_sims, cfg.tau);
}

/// alpha*format + beta*process + gamma*outcome, summed with Neumaier
/// compensation so the result does not depend on term order.
inline double total_reward(double format, double process, double outcome, const RewardWeights& w) {
  const double terms[] = {w.alpha * format, w.beta * process, w.gamma * outcome};
  double sum = 0.0, comp = 0.0;
  for (double t : terms) {
    const double next = sum + t;
    comp += std::abs(sum) >= std::abs(t) ? (sum - next) + t : (t - next) + sum;
    sum = next;
  }
  return sum + comp;
}

inline RewardBreakdown make_breakdown(double format, double process, double outcome, const RewardWeights& w) {
  return RewardBreakdown{format, process, outcome, total_reward(format, process, outcome, w)};
}

// ---------------------------------------------------------------------------
// Process reward
// ---------------------------------------------------------------------------

/// Listwise judge: returns the index of the candidate trace best aligned with
/// the query trace.
class Discriminator {
 public:
  virtual ~Discriminator() = default;
  virtual std::size_t select(const TCotDocument& query, std::span<const TCotDocument> candidates) const = 0;
  /// False when calls must be serialized.
  virtual bool concurrent_safe() const { return true; }
};

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

template <typename T>
double jaccard(const std::set<T>& a, const std::set<T>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

inline double iou(const tcot::BBox& a, const tcot::BBox& b) {
  const double ix = std::max(0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  const double area_a = static_cast<double>(a.x2 - a.x1) * (a.y2 - a.y1);
  const double area_b = static_cast<double>(b.x2 - b.x1) * (b.y2 - b.y1);
  return inter / (area_a + area_b - inter);
}

struct CueSets {
  std::set<std::string> keywords;
  std::vector<tcot::BBox> boxes;
  std::set<int> frames;
};

inline CueSets collect(const TCotDocument& doc) {
  CueSets out;
  for (const auto& cue : doc.cues) {
    if (const auto* kw = std::get_if<tcot::TextKeywords>(&cue)) {
      for (const auto& w : kw->words) out.keywords.insert(lower(w));
    } else if (const auto* bb = std::get_if<tcot::BBoxes>(&cue)) {
      out.boxes.insert(out.boxes.end(), bb->boxes.begin(), bb->boxes.end());
    } else if (const auto* kf = std::get_if<tcot::KeyFrames>(&cue)) {
      out.frames.insert(kf->frames.begin(), kf->frames.end());
    }
  }
  return out;
}

}  // namespace detail

/// Cue-overlap oracle: sums keyword Jaccard, mean best-match box IoU and
/// keyframe Jaccard over the cue kinds both traces carry; argmax with ties
/// to the lowest index.
class CueOverlapDiscriminator final : public Discriminator {
 public:
  static double alignment(const TCotDocument& a, const TCotDocument& b) {
    return alignment(detail::collect(a), detail::collect(b));
  }

  static double alignment(const detail::CueSets& q, const detail::CueSets& c) {
    double score = 0.0;
    if (!q.keywords.empty() && !c.keywords.empty()) score += detail::jaccard(q.keywords, c.keywords);
    if (!q.boxes.empty() && !c.boxes.empty()) {
      double sum = 0.0;
      for (const auto& qb : q.boxes) {
        double best = 0.0;
        for (const auto& cb : c.boxes) best = std::max(best, detail::iou(qb, cb));
        sum += best;
      }
      score += sum / static_cast<double>(q.boxes.size());
    }
    if (!q.frames.empty() && !c.frames.empty()) score += detail::jaccard(q.frames, c.frames);
    return score;
  }

  std::size_t select(const TCotDocument& query, std::span<const TCotDocument> candidates) const override {
    if (candidates.empty()) throw Error(Errc::empty_candidates, "nothing to select from");
    const detail::CueSets q = detail::collect(query);
    std::size_t best = 0;
    double best_score = -1.0;
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      const double s = alignment(q, detail::collect(candidates[j]));
      if (s > best_score) {
        best_score = s;
        best = j;
      }
    }
    return best;
  }
};

/// Seeded Fisher-Yates permutation of [0, n).
inline std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  embedrl::detail::Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  return perm;
}

struct ProcessResult {
  int reward = 0;
  std::optional<std::string> fault;  // discriminator failure, scored as 0
};

/// Shuffles candidates, asks the discriminator for its pick and maps it back
/// to the original index; 1 iff that index is in `positive_indices`.
inline ProcessResult process_reward(const TCotDocument& query, std::span<const TCotDocument> candidates,
                                    std::span<const std::size_t> positive_indices, const Discriminator& judge,
                                    std::uint64_t shuffle_seed) {
  if (candidates.empty()) throw Error(Errc::empty_candidates, "process reward needs candidates");
  if (positive_indices.empty()) throw Error(Errc::invalid_argument, "positive index set is empty");
  for (std::size_t p : positive_indices) {
    if (p >= candidates.size()) throw Error(Errc::index_out_of_range, "positive index " + std::to_string(p));
  }
  const auto perm = shuffled_order(candidates.size(), shuffle_seed);
  std::vector<TCotDocument> shuffled;
  shuffled.reserve(candidates.size());
  for (std::size_t j : perm) shuffled.push_back(candidates[j]);

  ProcessResult out;
  std::size_t pick = 0;
  try {
    pick = judge.select(query, shuffled);
  } catch (const std::exception& e) {
    out.fault = std::string(errc_name(Errc::discriminator_failure)) + ": " + e.what();
    return out;
  }
  if (pick >= shuffled.size()) {
    out.fault = std::string(errc_name(Errc::discriminator_failure)) + ": selected index " + std::to_string(pick) +
                " out of " + std::to_string(shuffled.size());
    return out;
  }
  const std::size_t original = perm[pick];
  out.reward = std::find(positive_indices.begin(), positive_indices.end(), original) != positive_indices.end() ? 1 : 0;
  return out;
}

// ---------------------------------------------------------------------------
// Symmetric batch scoring
// ---------------------------------------------------------------------------

struct Rollout {
  std::optional<TCotDocument> doc;  // nullopt: the generated text did not parse
  EmbeddingVector embedding;
  double old_logprob = 0.0;
};

/// One side (query or target) of a pair with its G rollouts.
struct Side {
  std::string id;
  Modality modality = Modality::text;
  std::vector<Rollout> rollouts;
};

struct PairRollouts {
  Side query;
  Side target;
};

struct RewardConfig {
  RewardWeights weights;
  OutcomeConfig outcome;
  bool use_format = true;
  bool use_process = true;
  bool use_outcome = true;
};

struct PairRewards {
  std::vector<RewardBreakdown> query;
  std::vector<RewardBreakdown> target;
};

struct BatchRewards {
  std::vector<PairRewards> pairs;
  std::vector<std::string> faults;  // logged discriminator failures
};

namespace detail {

enum class Direction : std::uint64_t { query_to_target = 1, target_to_query = 2 };

/// Scores the rollouts of `anchors[a]` against the opposite sides. Rollout i
/// of an anchor is compared with rollout i of every opposite side.
inline std::vector<RewardBreakdown> score_direction(std::size_t a, std::span<const Side* const> anchors,
                                                    std::span<const Side* const> opposite,
                                                    std::span<const Side* const> extra_negatives,
                                                    const Discriminator& judge, const RewardConfig& cfg,
                                                    std::uint64_t seed, Direction dir,
                                                    std::vector<std::string>& faults) {
  const Side& anchor = *anchors[a];
  const Side& positive = *opposite[a];
  const std::size_t g = anchor.rollouts.size();

  std::vector<const Side*> negatives;
  for (std::size_t p = 0; p < opposite.size(); ++p) {
    if (p != a) negatives.push_back(opposite[p]);
  }
  negatives.insert(negatives.end(), extra_negatives.begin(), extra_negatives.end());

  static const TCotDocument kEmpty{};
  const auto doc_of = [](const Rollout& r) -> const TCotDocument& { return r.doc ? *r.doc : kEmpty; };

  std::vector<double> outcome(g, 0.0);
  if (cfg.use_outcome) {
    if (negatives.empty()) throw Error(Errc::no_negatives, "anchor '" + anchor.id + "' has no in-batch negatives");
    std::vector<int> acc(g, 0);
    std::vector<double> pos_sims(g);
    std::vector<std::vector<double>> neg_sims(g);
    for (std::size_t i = 0; i < g; ++i) {
      const EmbeddingVector& e = anchor.rollouts[i].embedding;
      std::vector<ScoredCandidate> pool;
      pool.reserve(negatives.size() + 1);
      pos_sims[i] = embedding::cosine_sim(e, positive.rollouts[i].embedding);
      pool.push_back({positive.id, pos_sims[i]});
      for (const Side* n : negatives) {
        const double s = embedding::cosine_sim(e, n->rollouts[i].embedding);
        pool.push_back({n->id, s});
        neg_sims[i].push_back(s);
      }
      acc[i] = positive_rank(pool, positive.id) <= cfg.outcome.k ? 1 : 0;
    }
    if (cfg.outcome.acc_mode == AccMode::group_consistent) {
      const int all = std::all_of(acc.begin(), acc.end(), [](int x) { return x == 1; }) ? 1 : 0;
      std::fill(acc.begin(), acc.end(), all);
    }
    for (std::size_t i = 0; i < g; ++i) {
      outcome[i] = outcome_from_scores(acc[i] == 1, pos_sims[i], neg_sims[i], cfg.outcome.tau);
    }
  }

  std::vector<RewardBreakdown> out(g);
  std::vector<std::size_t> positive_idx(g);
  for (std::size_t j = 0; j < g; ++j) positive_idx[j] = j;
  for (std::size_t i = 0; i < g; ++i) {
    const Rollout& r = anchor.rollouts[i];
    double format = 0.0;
    if (cfg.use_format && r.doc) format = format_reward(*r.doc, anchor.modality);
    double process = 0.0;
    if (cfg.use_process && r.doc) {
      std::vector<TCotDocument> candidates;
      candidates.reserve(g + negatives.size());
      for (const auto& pr : positive.rollouts) candidates.push_back(doc_of(pr));
      for (const Side* n : negatives) candidates.push_back(doc_of(n->rollouts[i]));
      const std::uint64_t stream = (static_cast<std::uint64_t>(dir) << 56) ^ (static_cast<std::uint64_t>(a) << 24) ^ i;
      const auto res = process_reward(*r.doc, candidates, positive_idx, judge, embedrl::detail::derive_seed(seed, stream));
      process = res.reward;
      if (res.fault) faults.push_back(anchor.id + "[" + std::to_string(i) + "]: " + *res.fault);
    }
    out[i] = make_breakdown(format, process, outcome[i], cfg.weights);
  }
  return out;
}

}  // namespace detail

/// Rewards for every query and target rollout of a batch. Query anchors use
/// the other pairs' targets plus `extra_targets` as negatives; target anchors
/// use the other pairs' queries. Process candidates are the anchor's G
/// positive-side rollouts followed by rollout i of each negative.
inline BatchRewards symmetric_rewards(std::span<const PairRollouts> batch, std::span<const Side> extra_targets,
                                      const Discriminator& judge, const RewardConfig& cfg, std::uint64_t seed) {
  cfg.weights.validate();
  cfg.outcome.validate();
  if (batch.empty()) return {};
  const std::size_t g = batch.front().query.rollouts.size();
  if (g == 0) throw Error(Errc::incomplete_group, "pair '" + batch.front().query.id + "' has no rollouts");
  const auto check = [g](const Side& s) {
    if (s.rollouts.size() != g) {
      throw Error(Errc::incomplete_group, "'" + s.id + "' has " + std::to_string(s.rollouts.size()) +
                                              " rollouts, expected " + std::to_string(g));
    }
  };
  std::vector<const Side*> queries, targets, extras;
  for (const auto& p : batch) {
    check(p.query);
    check(p.target);
    queries.push_back(&p.query);
    targets.push_back(&p.target);
  }
  for (const auto& e : extra_targets) {
    check(e);
    extras.push_back(&e);
  }

  BatchRewards out;
  out.pairs.resize(batch.size());
  for (std::size_t p = 0; p < batch.size(); ++p) {
    out.pairs[p].query = detail::score_direction(p, queries, targets, extras, judge, cfg, seed,
                                                 detail::Direction::query_to_target, out.faults);
    out.pairs[p].target = detail::score_direction(p, targets, queries, {}, judge, cfg, seed,
                                                  detail::Direction::target_to_query, out.faults);
  }
  return out;
}

}  // namespace embedrl::reward
