#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The embedrl Authors

/**
 * @file sim_env.hpp
 * @brief A synthetic retrieval world in which the reasoner's cue choice
 * decides which embedding dimensions the embedder sees.
 *
 * The d dimensions are split into C contiguous channel blocks. Queries come
 * in families (one family = one dataset = one sub-batch). On a query's latent
 * channels its positive carries the query's own key vector; on every other
 * channel the positive carries the negated family base, while the family's
 * distractors copy the base. Attending to latent channels therefore ranks
 * the positive first, and attending elsewhere ranks it last.
 *
 * An action is a non-empty channel subset. Acting renders a T-CoT document
 * citing the entity's words for those channels and embeds the entity with
 * the channel blocks as the cue mask.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "embedrl/detail/random.hpp"
#include "embedrl/embedding.hpp"
#include "embedrl/error.hpp"
#include "embedrl/eval_metrics.hpp"
#include "embedrl/grpo.hpp"
#include "embedrl/reward.hpp"
#include "embedrl/tcot.hpp"

namespace embedrl::sim {

using embedding::CueMask;
using embedding::EmbeddingVector;
using tcot::TCotDocument;

struct WorldConfig {
  std::size_t dim = 32;
  std::size_t channels = 8;
  std::size_t queries = 64;
  std::size_t items = 256;
  std::size_t family_size = 16;
  std::size_t max_latent = 2;
  double tcot_weight = 0.0;  // weight of the hashed T-CoT text in the toy embedder
  std::uint64_t seed = 7;

  void validate() const {
    if (channels < 2) throw Error(Errc::bad_config, "need at least 2 channels");
    if (dim < channels) throw Error(Errc::bad_config, "dim " + std::to_string(dim) + " < channels " + std::to_string(channels));
    if (queries < 1) throw Error(Errc::bad_config, "need at least 1 query");
    if (items < queries) throw Error(Errc::bad_config, "items must cover one positive per query");
    if (family_size < 1) throw Error(Errc::bad_config, "family size must be >= 1");
    if (max_latent < 1 || max_latent > channels) throw Error(Errc::bad_config, "max_latent must be in [1, channels]");
    if (!(tcot_weight >= 0.0) || !std::isfinite(tcot_weight)) throw Error(Errc::bad_config, "tcot_weight must be >= 0");
  }
};

inline WorldConfig world_config_from_json(const nlohmann::json& j) {
  try {
    WorldConfig c;
    c.dim = j.at("dim").get<std::size_t>();
    c.channels = j.at("channels").get<std::size_t>();
    c.queries = j.at("queries").get<std::size_t>();
    c.items = j.at("items").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.family_size = j.value("family_size", c.family_size);
    c.max_latent = j.value("max_latent", c.max_latent);
    c.tcot_weight = j.value("tcot_weight", c.tcot_weight);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::bad_config, std::string("world config: ") + e.what());
  }
}

inline nlohmann::ordered_json world_config_to_json(const WorldConfig& c) {
  nlohmann::ordered_json j;
  j["dim"] = c.dim;
  j["channels"] = c.channels;
  j["queries"] = c.queries;
  j["items"] = c.items;
  j["seed"] = c.seed;
  j["family_size"] = c.family_size;
  j["max_latent"] = c.max_latent;
  j["tcot_weight"] = c.tcot_weight;
  return j;
}

struct Entity {
  std::string id;
  std::size_t family = 0;
  std::vector<double> vec;          // dim entries, one unit sub-vector per channel block
  std::vector<std::string> words;   // one keyword per channel
};

struct Query : Entity {
  std::vector<std::size_t> latent;  // sorted, non-empty
};

struct Item : Entity {
  std::optional<std::size_t> positive_of;  // query index; nullopt for distractors
};

struct Family {
  std::vector<std::size_t> queries;
  std::vector<std::size_t> distractors;  // item indices
};

struct SyntheticWorld {
  WorldConfig config;
  std::vector<std::pair<std::size_t, std::size_t>> blocks;  // [begin, end) per channel
  std::vector<Query> queries;
  std::vector<Item> items;  // items[q] is the positive of query q
  std::vector<Family> families;

  bool operator==(const SyntheticWorld& o) const {
    if (blocks != o.blocks || queries.size() != o.queries.size() || items.size() != o.items.size()) return false;
    for (std::size_t q = 0; q < queries.size(); ++q) {
      if (queries[q].vec != o.queries[q].vec || queries[q].latent != o.queries[q].latent ||
          queries[q].words != o.queries[q].words) {
        return false;
      }
    }
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (items[i].vec != o.items[i].vec || items[i].words != o.items[i].words) return false;
    }
    return true;
  }

  bool is_latent(std::size_t query, std::size_t channel) const {
    const auto& l = queries.at(query).latent;
    return std::binary_search(l.begin(), l.end(), channel);
  }
};

namespace detail {

inline std::string padded(std::string_view prefix, std::size_t n) {
  std::string digits = std::to_string(n);
  if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
  return std::string(prefix) + digits;
}

inline std::vector<double> unit_block(embedrl::detail::Rng& rng, std::size_t width) {
  std::vector<double> v(width);
  double n2 = 0.0;
  do {
    n2 = 0.0;
    for (double& x : v) {
      x = rng.normal();
      n2 += x * x;
    }
  } while (n2 < 1e-12);
  const double n = std::sqrt(n2);
  for (double& x : v) x /= n;
  return v;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Largest |cosine| tolerated between a new block vector and the vectors it
/// must stay distinguishable from.
inline constexpr double kSeparation = 0.8;
inline constexpr int kMaxDraws = 10'000;

inline std::vector<double> separated_block(embedrl::detail::Rng& rng, std::size_t width,
                                           const std::vector<const std::vector<double>*>& avoid) {
  for (int attempt = 0; attempt < kMaxDraws; ++attempt) {
    auto v = unit_block(rng, width);
    const bool ok = std::all_of(avoid.begin(), avoid.end(), [&](const auto* a) { return dot(v, *a) <= kSeparation; });
    if (ok) return v;
  }
  throw Error(Errc::bad_config, "channel blocks too narrow to separate the family's vectors");
}

}  // namespace detail

/// Deterministic in (config, seed).
inline SyntheticWorld generate_world(WorldConfig config, std::uint64_t seed) {
  config.seed = seed;
  config.validate();
  using embedrl::detail::derive_seed;
  using embedrl::detail::Rng;

  SyntheticWorld w;
  w.config = config;
  const std::size_t C = config.channels;
  for (std::size_t c = 0; c < C; ++c) w.blocks.push_back({c * config.dim / C, (c + 1) * config.dim / C});

  const std::size_t fam_size = std::min(config.family_size, config.queries);
  const std::size_t n_fam = (config.queries + fam_size - 1) / fam_size;
  w.families.resize(n_fam);

  Rng base_rng(derive_seed(seed, 1));
  std::vector<std::vector<std::vector<double>>> base(n_fam);  // [family][channel]
  for (std::size_t f = 0; f < n_fam; ++f) {
    for (std::size_t c = 0; c < C; ++c) {
      base[f].push_back(detail::unit_block(base_rng, w.blocks[c].second - w.blocks[c].first));
    }
  }

  // keys[f][c]: latent key vectors already used in family f on channel c
  std::vector<std::vector<std::vector<const std::vector<double>*>>> keys(n_fam, std::vector<std::vector<const std::vector<double>*>>(C));
  std::vector<std::vector<std::vector<double>>> query_blocks(config.queries);

  Rng q_rng(derive_seed(seed, 2));
  w.queries.resize(config.queries);
  for (std::size_t q = 0; q < config.queries; ++q) {
    Query& qu = w.queries[q];
    qu.id = detail::padded("query:", q);
    qu.family = q / fam_size;
    w.families[qu.family].queries.push_back(q);
    const std::size_t n_latent = 1 + static_cast<std::size_t>(q_rng.below(config.max_latent));
    std::vector<std::size_t> channels(C);
    for (std::size_t c = 0; c < C; ++c) channels[c] = c;
    for (std::size_t i = 0; i < n_latent; ++i) {
      std::swap(channels[i], channels[i + static_cast<std::size_t>(q_rng.below(C - i))]);
    }
    qu.latent.assign(channels.begin(), channels.begin() + static_cast<std::ptrdiff_t>(n_latent));
    std::sort(qu.latent.begin(), qu.latent.end());
  }
  // Keys are drawn once every latent set is known so they can be separated
  // from the base, its negation and the family's other keys.
  for (std::size_t q = 0; q < config.queries; ++q) {
    Query& qu = w.queries[q];
    const std::size_t f = qu.family;
    query_blocks[q].resize(C);
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t width = w.blocks[c].second - w.blocks[c].first;
      if (w.is_latent(q, c)) {
        std::vector<double> neg_base = base[f][c];
        for (double& x : neg_base) x = -x;
        std::vector<const std::vector<double>*> avoid{&base[f][c]};
        avoid.push_back(&neg_base);
        for (const auto* k : keys[f][c]) avoid.push_back(k);
        Rng k_rng(derive_seed(seed, 1000 + q * C + c));
        query_blocks[q][c] = detail::separated_block(k_rng, width, avoid);
        qu.words.push_back("k" + std::to_string(q) + "c" + std::to_string(c));
      } else {
        query_blocks[q][c] = base[f][c];
        qu.words.push_back("f" + std::to_string(f) + "c" + std::to_string(c));
      }
    }
    for (std::size_t c : qu.latent) keys[f][c].push_back(&query_blocks[q][c]);
  }

  const auto flatten = [&](const std::vector<std::vector<double>>& per_block) {
    std::vector<double> v;
    v.reserve(config.dim);
    for (const auto& b : per_block) v.insert(v.end(), b.begin(), b.end());
    return v;
  };

  w.items.resize(config.items);
  for (std::size_t q = 0; q < config.queries; ++q) {
    Item& it = w.items[q];
    const std::size_t f = w.queries[q].family;
    it.id = detail::padded("item:", q);
    it.family = f;
    it.positive_of = q;
    std::vector<std::vector<double>> blocks(C);
    for (std::size_t c = 0; c < C; ++c) {
      if (w.is_latent(q, c)) {
        blocks[c] = query_blocks[q][c];
        it.words.push_back("k" + std::to_string(q) + "c" + std::to_string(c));
      } else {
        blocks[c] = base[f][c];
        for (double& x : blocks[c]) x = -x;
        it.words.push_back("n" + std::to_string(f) + "c" + std::to_string(c));
      }
    }
    it.vec = flatten(blocks);
    w.queries[q].vec = flatten(query_blocks[q]);
  }

  Rng d_rng(derive_seed(seed, 3));
  for (std::size_t i = config.queries; i < config.items; ++i) {
    Item& it = w.items[i];
    const std::size_t f = (i - config.queries) % n_fam;
    it.id = detail::padded("item:", i);
    it.family = f;
    w.families[f].distractors.push_back(i);
    const std::size_t n_replaced = 1 + static_cast<std::size_t>(d_rng.below(std::min<std::size_t>(2, C - 1)));
    std::vector<std::size_t> channels(C);
    for (std::size_t c = 0; c < C; ++c) channels[c] = c;
    for (std::size_t k = 0; k < n_replaced; ++k) {
      std::swap(channels[k], channels[k + static_cast<std::size_t>(d_rng.below(C - k))]);
    }
    std::vector<std::vector<double>> blocks(C);
    for (std::size_t c = 0; c < C; ++c) {
      const bool replaced = std::find(channels.begin(), channels.begin() + static_cast<std::ptrdiff_t>(n_replaced), c) !=
                            channels.begin() + static_cast<std::ptrdiff_t>(n_replaced);
      if (replaced) {
        std::vector<const std::vector<double>*> avoid(keys[f][c].begin(), keys[f][c].end());
        blocks[c] = detail::separated_block(d_rng, w.blocks[c].second - w.blocks[c].first, avoid);
        it.words.push_back("d" + std::to_string(i) + "c" + std::to_string(c));
      } else {
        blocks[c] = base[f][c];
        it.words.push_back("f" + std::to_string(f) + "c" + std::to_string(c));
      }
    }
    it.vec = flatten(blocks);
  }
  return w;
}

// ---------------------------------------------------------------------------
// Actions
// ---------------------------------------------------------------------------

struct ActionCatalog {
  std::vector<std::vector<std::size_t>> subsets;  // sorted channel indices

  std::size_t size() const noexcept { return subsets.size(); }

  void validate(std::size_t channels) const {
    if (subsets.empty()) throw Error(Errc::bad_config, "action catalog is empty");
    for (const auto& s : subsets) {
      if (s.empty()) throw Error(Errc::bad_config, "action with no channel");
      for (std::size_t c : s) {
        if (c >= channels) throw Error(Errc::bad_config, "action cites channel " + std::to_string(c));
      }
    }
  }
};

/// Every channel subset of size 1..max_size, by size then lexicographically.
inline ActionCatalog default_catalog(std::size_t channels, std::size_t max_size = 2) {
  ActionCatalog cat;
  std::vector<std::size_t> cur;
  const auto rec = [&](auto&& self, std::size_t start, std::size_t size) -> void {
    if (cur.size() == size) {
      cat.subsets.push_back(cur);
      return;
    }
    for (std::size_t c = start; c < channels; ++c) {
      cur.push_back(c);
      self(self, c + 1, size);
      cur.pop_back();
    }
  };
  for (std::size_t size = 1; size <= std::min(max_size, channels); ++size) rec(rec, 0, size);
  return cat;
}

/// True when the action cites only latent channels of the query.
inline bool latent_matching(const SyntheticWorld& w, const ActionCatalog& cat, std::size_t query, std::size_t action) {
  const auto& s = cat.subsets.at(action);
  return std::all_of(s.begin(), s.end(), [&](std::size_t c) { return w.is_latent(query, c); });
}

inline CueMask action_mask(const SyntheticWorld& w, const ActionCatalog& cat, std::size_t action) {
  if (action >= cat.size()) throw Error(Errc::unknown_action, "action " + std::to_string(action));
  CueMask mask(w.config.dim, false);
  for (std::size_t c : cat.subsets[action]) {
    for (std::size_t i = w.blocks[c].first; i < w.blocks[c].second; ++i) mask[i] = true;
  }
  return mask;
}

/// Policy contexts: queries first, then items.
struct EntityRef {
  enum class Kind { query, item } kind = Kind::query;
  std::size_t index = 0;
};

inline const Entity& entity(const SyntheticWorld& w, EntityRef e) {
  return e.kind == EntityRef::Kind::query ? static_cast<const Entity&>(w.queries.at(e.index))
                                          : static_cast<const Entity&>(w.items.at(e.index));
}

inline std::size_t context_index(const SyntheticWorld& w, EntityRef e) {
  return e.kind == EntityRef::Kind::query ? e.index : w.queries.size() + e.index;
}

inline std::vector<std::string> context_ids(const SyntheticWorld& w) {
  std::vector<std::string> ids;
  for (const auto& q : w.queries) ids.push_back(q.id);
  for (const auto& i : w.items) ids.push_back(i.id);
  return ids;
}

inline TCotDocument render_action(const SyntheticWorld& w, const ActionCatalog& cat, EntityRef e, std::size_t action) {
  if (action >= cat.size()) throw Error(Errc::unknown_action, "action " + std::to_string(action));
  const Entity& ent = entity(w, e);
  std::string list;
  tcot::TextKeywords kw;
  for (std::size_t c : cat.subsets[action]) {
    if (!list.empty()) list += ", ";
    list += std::to_string(c);
    kw.words.push_back(ent.words[c]);
  }
  TCotDocument doc;
  doc.thinking = "The deciding evidence for " + ent.id + " sits in channel(s) " + list + ".";
  doc.cues.push_back(std::move(kw));
  doc.rethink = "Only the cited channels are compared.";
  doc.answer = "Match on channel(s) " + list + ".";
  return doc;
}

struct ActResult {
  TCotDocument tcot;
  EmbeddingVector embedding;
};

inline embedding::ToyEmbedder world_embedder(const SyntheticWorld& w) {
  embedding::ToyEmbedder emb(w.config.dim, w.config.tcot_weight);
  for (const auto& q : w.queries) emb.register_handle(q.id, q.vec);
  for (const auto& i : w.items) emb.register_handle(i.id, i.vec);
  return emb;
}

inline ActResult act_and_embed(const SyntheticWorld& w, const ActionCatalog& cat, const embedding::ToyEmbedder& emb,
                               EntityRef e, std::size_t action) {
  TCotDocument doc = render_action(w, cat, e, action);
  const auto input = tcot::assemble_embedder_input(entity(w, e).id, "", "", doc);
  return {std::move(doc), emb.embed(input, action_mask(w, cat, action))};
}

/// Convenience overload building the world's embedder on the fly.
inline ActResult act_and_embed(const SyntheticWorld& w, const ActionCatalog& cat, EntityRef e, std::size_t action) {
  return act_and_embed(w, cat, world_embedder(w), e, action);
}

/// World, catalog and embedder with a memo of (context, action) results.
class Environment {
 public:
  Environment(SyntheticWorld world, ActionCatalog catalog)
      : world_(std::move(world)), catalog_(std::move(catalog)), embedder_(world_embedder(world_)) {
    catalog_.validate(world_.config.channels);
    cache_.resize((world_.queries.size() + world_.items.size()) * catalog_.size());
  }

  const SyntheticWorld& world() const noexcept { return world_; }
  const ActionCatalog& catalog() const noexcept { return catalog_; }

  const ActResult& act(EntityRef e, std::size_t action) {
    if (action >= catalog_.size()) throw Error(Errc::unknown_action, "action " + std::to_string(action));
    auto& slot = cache_[context_index(world_, e) * catalog_.size() + action];
    if (!slot) slot = act_and_embed(world_, catalog_, embedder_, e, action);
    return *slot;
  }

 private:
  SyntheticWorld world_;
  ActionCatalog catalog_;
  embedding::ToyEmbedder embedder_;
  std::vector<std::optional<ActResult>> cache_;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainingOptions {
  std::size_t updates_per_batch = 2;  // ascent steps per sampled batch
  bool distractor_negatives = true;   // add the family's distractors as extra negatives
};

struct TrainingResult {
  grpo::TrainingTrace trace;
  grpo::PolicyState policy;
  grpo::PolicyState reference;
  std::vector<std::string> faults;
};

namespace detail {

inline reward::Side make_side(Environment& env, const grpo::GroupSample& g, EntityRef e) {
  reward::Side side;
  side.id = entity(env.world(), e).id;
  side.modality = tcot::Modality::text;
  for (std::size_t i = 0; i < g.actions.size(); ++i) {
    const ActResult& r = env.act(e, g.actions[i]);
    side.rollouts.push_back({r.tcot, r.embedding, g.old_logprobs[i]});
  }
  return side;
}

}  // namespace detail

/// Step s trains on family s mod F: every query of the family and its
/// positive item sample G actions, rewards are scored symmetrically, and the
/// policy takes `updates_per_batch` clipped-surrogate ascent steps.
inline TrainingResult run_training(Environment& env, const grpo::GrpoConfig& gcfg, const reward::RewardConfig& rcfg,
                                   std::size_t steps, const TrainingOptions& opts = {}) {
  gcfg.validate();
  rcfg.weights.validate();
  rcfg.outcome.validate();
  using embedrl::detail::derive_seed;
  const SyntheticWorld& w = env.world();

  TrainingResult out;
  out.policy = grpo::PolicyState(context_ids(w), env.catalog().size());
  out.reference = out.policy;
  const grpo::ReferenceSnapshot reference(out.reference);
  const reward::CueOverlapDiscriminator judge;

  for (std::size_t step = 0; step < steps; ++step) {
    const Family& fam = w.families[step % w.families.size()];
    const std::uint64_t step_seed = derive_seed(gcfg.seed, step);
    const auto sample = [&](EntityRef e) {
      const std::size_t ctx = context_index(w, e);
      return grpo::sample_group(out.policy, ctx, gcfg.group_size, derive_seed(step_seed, ctx));
    };

    std::vector<grpo::GroupSample> q_groups, t_groups;
    std::vector<reward::PairRollouts> batch;
    for (std::size_t q : fam.queries) {
      const EntityRef qe{EntityRef::Kind::query, q};
      const EntityRef te{EntityRef::Kind::item, q};
      q_groups.push_back(sample(qe));
      t_groups.push_back(sample(te));
      batch.push_back({detail::make_side(env, q_groups.back(), qe), detail::make_side(env, t_groups.back(), te)});
    }
    std::vector<reward::Side> extras;
    if (opts.distractor_negatives) {
      for (std::size_t d : fam.distractors) {
        const EntityRef de{EntityRef::Kind::item, d};
        extras.push_back(detail::make_side(env, sample(de), de));
      }
    }

    const auto rewards = reward::symmetric_rewards(batch, extras, judge, rcfg, derive_seed(step_seed, ~0ull));
    out.faults.insert(out.faults.end(), rewards.faults.begin(), rewards.faults.end());

    grpo::TraceRow row;
    row.step = step;
    std::vector<grpo::GroupSample> groups;
    std::size_t n = 0;
    const auto fill = [&](grpo::GroupSample g, const std::vector<reward::RewardBreakdown>& r) {
      for (const auto& b : r) {
        g.rewards.push_back(b.total);
        row.mean_reward += b.total;
        row.mean_format += b.format;
        row.mean_process += b.process;
        row.mean_outcome += b.outcome;
        ++n;
      }
      g.advantages = grpo::compute_advantages(g.rewards);
      groups.push_back(std::move(g));
    };
    for (std::size_t p = 0; p < batch.size(); ++p) {
      fill(q_groups[p], rewards.pairs[p].query);
      fill(t_groups[p], rewards.pairs[p].target);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    row.mean_reward *= inv_n;
    row.mean_format *= inv_n;
    row.mean_process *= inv_n;
    row.mean_outcome *= inv_n;
    for (const auto& g : groups) row.entropy += grpo::entropy(out.policy, g.context);
    row.entropy /= static_cast<double>(groups.size());

    for (std::size_t u = 0; u < opts.updates_per_batch; ++u) {
      const auto obj = grpo::grpo_objective(out.policy, reference, groups, gcfg);
      if (u == 0) {
        row.objective = obj.objective;
        row.kl = obj.mean_kl;
      }
      out.policy = grpo::update_step(out.policy, obj.grad, gcfg.learning_rate);
    }
    out.trace.push_back(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

/// Highest-probability action; ties go to the lowest index.
inline std::size_t greedy_action(const grpo::PolicyState& policy, std::size_t context) {
  const auto z = policy.logits(context);
  return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

/// Ranking of a query's family items (positives and distractors), every
/// entity acting greedily under `policy`.
inline eval::RankedList greedy_ranking(Environment& env, const grpo::PolicyState& policy, std::size_t query) {
  const SyntheticWorld& w = env.world();
  const EntityRef qe{EntityRef::Kind::query, query};
  const ActResult& qa = env.act(qe, greedy_action(policy, context_index(w, qe)));
  const Family& fam = w.families[w.queries.at(query).family];
  std::vector<std::pair<std::string, double>> scored;
  const auto add = [&](std::size_t item) {
    const EntityRef ie{EntityRef::Kind::item, item};
    const ActResult& ia = env.act(ie, greedy_action(policy, context_index(w, ie)));
    scored.push_back({w.items[item].id, embedding::cosine_sim(qa.embedding, ia.embedding)});
  };
  for (std::size_t q : fam.queries) add(q);
  for (std::size_t d : fam.distractors) add(d);
  return eval::RankedList::from_scores(w.queries[query].id, std::move(scored));
}

/// Mean top-1 minus top-2 similarity over all queries.
inline double mean_similarity_gap(Environment& env, const grpo::PolicyState& policy) {
  std::vector<eval::RankedList> runs;
  for (std::size_t q = 0; q < env.world().queries.size(); ++q) runs.push_back(greedy_ranking(env, policy, q));
  return eval::summarize_gaps(runs).mean;
}

/// Mean Hit@1 of the positive under greedy actions.
inline double greedy_hit_rate(Environment& env, const grpo::PolicyState& policy) {
  double hits = 0.0;
  for (std::size_t q = 0; q < env.world().queries.size(); ++q) {
    hits += greedy_ranking(env, policy, q).ids.front() == env.world().items[q].id ? 1.0 : 0.0;
  }
  return hits / static_cast<double>(env.world().queries.size());
}

struct PreferenceTest {
  std::size_t samples = 0;
  std::size_t observed = 0;  // latent-matching draws
  double expected = 0.0;     // under the uniform policy
  double chi2 = 0.0;
  double p_value = 1.0;
};

/// Draws `per_query` actions from every query context and tests the count of
/// latent-matching draws against the uniform-policy expectation with a
/// two-cell chi-square test (1 degree of freedom).
inline PreferenceTest latent_preference_test(const SyntheticWorld& w, const ActionCatalog& cat,
                                             const grpo::PolicyState& policy, std::size_t per_query,
                                             std::uint64_t seed) {
  PreferenceTest t;
  const double n_actions = static_cast<double>(cat.size());
  for (std::size_t q = 0; q < w.queries.size(); ++q) {
    std::size_t matching = 0;
    for (std::size_t a = 0; a < cat.size(); ++a) matching += latent_matching(w, cat, q, a) ? 1 : 0;
    const auto g = grpo::sample_group(policy, q, per_query, embedrl::detail::derive_seed(seed, q));
    for (std::size_t a : g.actions) t.observed += latent_matching(w, cat, q, a) ? 1 : 0;
    t.samples += per_query;
    t.expected += static_cast<double>(per_query) * static_cast<double>(matching) / n_actions;
  }
  const double n = static_cast<double>(t.samples);
  const double o = static_cast<double>(t.observed);
  if (t.expected > 0.0 && t.expected < n) {
    t.chi2 = (o - t.expected) * (o - t.expected) / t.expected +
             (o - t.expected) * (o - t.expected) / (n - t.expected);
    t.p_value = std::erfc(std::sqrt(t.chi2 / 2.0));
  }
  return t;
}

}  // namespace embedrl::sim
