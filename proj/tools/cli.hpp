#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The embedrl Authors

// embedrl command-line front end. `run` is the whole program minus main(),
// so tests can drive it in-process.
//
// Exit codes: 0 ok, 1 validation failure or bad input data, 2 usage or
// configuration error, 3 I/O error.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "embedrl/embedrl.hpp"

namespace embedrl::cli {

inline constexpr int kOk = 0;
inline constexpr int kValidationFailure = 1;
inline constexpr int kUsage = 2;
inline constexpr int kIo = 3;

inline int exit_code_for(Errc code) {
  switch (code) {
    case Errc::io_error: return kIo;
    case Errc::bad_config:
    case Errc::invalid_argument:
    case Errc::invalid_weight: return kUsage;
    default: return kValidationFailure;
  }
}

namespace detail {

inline std::vector<double> split_reals(const std::string& s, std::size_t expected, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::logic_error&) {
      throw Error(Errc::invalid_argument, flag + ": '" + part + "' is not a number");
    }
  }
  if (out.size() != expected) {
    throw Error(Errc::invalid_argument, flag + " expects " + std::to_string(expected) + " comma-separated values");
  }
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot read " + path);
  return in;
}

/// Writes to `path`, or to `fallback` when the path is empty.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) throw Error(Errc::io_error, "cannot write " + path);
    }
    os_ = path.empty() ? &fallback : &file_;
  }
  std::ostream& operator*() { return *os_; }

 private:
  std::ofstream file_;
  std::ostream* os_;
};

struct RewardFlags {
  std::string weights;
  double tau = 0.5;
  std::size_t topk = 8;
  bool no_format = false, no_process = false, no_outcome = false;
  bool group_acc = false;

  void add_to(CLI::App* app) {
    app->add_option("--weights", weights, "format,process,outcome weights (default 0.05,0.8,0.2)");
    app->add_option("--tau", tau, "temperature of the negative expectation");
    app->add_option("--topk", topk, "top-k accuracy gate");
    app->add_flag("--no-format", no_format, "zero the format reward");
    app->add_flag("--no-process", no_process, "zero the process reward");
    app->add_flag("--no-outcome", no_outcome, "zero the outcome reward");
    app->add_flag("--group-acc", group_acc, "gate on all rollouts of a group reaching the top-k");
  }

  reward::RewardConfig config() const {
    reward::RewardConfig c;
    if (!weights.empty()) {
      const auto w = split_reals(weights, 3, "--weights");
      c.weights = {w[0], w[1], w[2]};
    }
    c.outcome.tau = tau;
    c.outcome.k = topk;
    c.outcome.acc_mode = group_acc ? reward::AccMode::group_consistent : reward::AccMode::per_rollout;
    c.use_format = !no_format;
    c.use_process = !no_process;
    c.use_outcome = !no_outcome;
    try {
      c.weights.validate();
      c.outcome.validate();
    } catch (const Error& e) {
      throw Error(Errc::bad_config, e.what());
    }
    return c;
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

struct ValidateArgs {
  std::string corpus;
  std::string modality;  // overrides per-record modality when set
  std::string out;
};

inline int cmd_validate(const ValidateArgs& a, std::ostream& out, std::ostream& err) {
  std::optional<tcot::Modality> forced;
  if (!a.modality.empty()) {
    try {
      forced = tcot::modality_from_string(a.modality);
    } catch (const Error& e) {
      throw Error(Errc::invalid_argument, e.what());
    }
  }
  auto in = detail::open_in(a.corpus);
  detail::Sink sink(a.out, out);
  std::string line;
  std::size_t lineno = 0, checked = 0, failed = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::parse_error, "corpus line " + std::to_string(lineno) + ": " + e.what());
    }
    const std::string id = rec.value("id", "line" + std::to_string(lineno));
    const tcot::Modality m = forced ? *forced : tcot::modality_from_string(rec.value("modality", "text"));
    const auto report = tcot::validate_raw(rec.value("raw", ""), m);
    ++checked;
    if (!report.compliant) ++failed;
    for (const auto& v : report.violations) {
      nlohmann::ordered_json row;
      row["id"] = id;
      row["code"] = tcot::to_string(v.code);
      row["detail"] = v.detail;
      row["blocking"] = v.blocking;
      *sink << row.dump() << '\n';
    }
  }
  err << "checked " << checked << " record(s), " << failed << " non-compliant\n";
  return failed == 0 ? kOk : kValidationFailure;
}

// ---------------------------------------------------------------------------
// reward
// ---------------------------------------------------------------------------

struct RewardArgs {
  std::string rollouts;
  std::string embeddings;
  std::string embeddings_bin;  // defaults to the header path with extension .bin
  std::string out;
  std::uint64_t seed = 0;
  detail::RewardFlags flags;
};

/// Rows: {"pair", "side": "query"|"target", "rollout", "modality", "raw",
/// "embedding": dump id, "old_logprob"?}.
inline std::vector<reward::PairRollouts> read_rollouts(std::istream& in,
                                                       const std::map<std::string, embedding::EmbeddingVector, std::less<>>& emb) {
  struct Pending {
    std::map<std::size_t, reward::Rollout> query, target;
    tcot::Modality query_modality = tcot::Modality::text, target_modality = tcot::Modality::text;
  };
  std::vector<std::string> order;
  std::map<std::string, Pending> pending;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const std::string pair = j.at("pair").get<std::string>();
      const std::string side = j.at("side").get<std::string>();
      if (side != "query" && side != "target") throw Error(Errc::parse_error, "side must be query or target");
      const std::string emb_id = j.at("embedding").get<std::string>();
      const auto it = emb.find(emb_id);
      if (it == emb.end()) throw Error(Errc::unknown_positive, "embedding '" + emb_id + "' not in dump");
      reward::Rollout r{std::nullopt, it->second, j.value("old_logprob", 0.0)};
      try {
        r.doc = tcot::parse_tcot(j.at("raw").get<std::string>());
      } catch (const Error&) {
        // unparseable text scores 0 on format and process
      }
      if (!pending.count(pair)) order.push_back(pair);
      Pending& p = pending[pair];
      const auto modality = tcot::modality_from_string(j.value("modality", "text"));
      auto& slot = side == "query" ? p.query : p.target;
      (side == "query" ? p.query_modality : p.target_modality) = modality;
      if (!slot.emplace(j.at("rollout").get<std::size_t>(), std::move(r)).second) {
        throw Error(Errc::parse_error, "duplicate rollout index");
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::parse_error, "rollout line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  std::vector<reward::PairRollouts> batch;
  for (const auto& id : order) {
    Pending& p = pending[id];
    reward::PairRollouts pr;
    pr.query.id = id + "/query";
    pr.query.modality = p.query_modality;
    pr.target.id = id + "/target";
    pr.target.modality = p.target_modality;
    for (auto& [_, r] : p.query) pr.query.rollouts.push_back(std::move(r));
    for (auto& [_, r] : p.target) pr.target.rollouts.push_back(std::move(r));
    batch.push_back(std::move(pr));
  }
  return batch;
}

inline void write_reward_report(std::ostream& out, std::span<const reward::PairRollouts> batch,
                                const reward::BatchRewards& rewards) {
  const auto emit = [&](const std::string& group, const std::vector<reward::RewardBreakdown>& rows) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      nlohmann::ordered_json j;
      j["group"] = group;
      j["rollout"] = i;
      j["format"] = rows[i].format;
      j["process"] = rows[i].process;
      j["outcome"] = rows[i].outcome;
      j["total"] = rows[i].total;
      out << j.dump() << '\n';
    }
  };
  for (std::size_t p = 0; p < batch.size(); ++p) {
    emit(batch[p].query.id, rewards.pairs[p].query);
    emit(batch[p].target.id, rewards.pairs[p].target);
  }
}

inline int cmd_reward(const RewardArgs& a, std::ostream& out, std::ostream& err) {
  const auto cfg = a.flags.config();
  std::filesystem::path bin = a.embeddings_bin;
  if (bin.empty()) bin = std::filesystem::path(a.embeddings).replace_extension(".bin");
  const auto dump = embedding::read_dump(a.embeddings, bin);
  auto in = detail::open_in(a.rollouts);
  const auto batch = read_rollouts(in, dump.by_id());
  const reward::CueOverlapDiscriminator judge;
  const auto rewards = reward::symmetric_rewards(batch, {}, judge, cfg, a.seed);
  detail::Sink sink(a.out, out);
  write_reward_report(*sink, batch, rewards);
  for (const auto& f : rewards.faults) err << "discriminator fault: " << f << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// train-sim
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string world;
  std::size_t steps = 300;
  std::uint64_t seed = grpo::GrpoConfig{}.seed;
  std::size_t group_size = 8;
  double epsilon = 0.2;
  double kl_beta = 0.01;
  double learning_rate = grpo::GrpoConfig{}.learning_rate;
  std::size_t updates = 2;
  std::string trace = "trace.csv";
  std::string policy = "policy.json";
  detail::RewardFlags flags;
};

inline int cmd_train_sim(const TrainArgs& a, std::ostream& out, std::ostream&) {
  sim::WorldConfig wc;
  if (!a.world.empty()) {
    auto in = detail::open_in(a.world);
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw Error(Errc::bad_config, a.world + " is not valid JSON");
    wc = sim::world_config_from_json(j);
  }
  grpo::GrpoConfig g;
  g.group_size = a.group_size;
  g.epsilon = a.epsilon;
  g.kl_beta = a.kl_beta;
  g.learning_rate = a.learning_rate;
  g.seed = a.seed;
  g.validate();
  const auto rcfg = a.flags.config();

  sim::Environment env(sim::generate_world(wc, wc.seed), sim::default_catalog(wc.channels));
  sim::TrainingOptions opts;
  opts.updates_per_batch = a.updates;
  const auto res = sim::run_training(env, g, rcfg, a.steps, opts);

  detail::Sink trace(a.trace, out);
  grpo::write_trace_csv(*trace, res.trace);
  detail::Sink policy(a.policy, out);
  *policy << grpo::policy_to_json(res.policy).dump(1) << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string run;
  std::string judgments;
  std::string metrics = "hit1,ndcg5,map,r1,r10,p1,ds";
  bool per_query = false;
  std::string out;
};

inline const std::vector<std::string>& known_metrics() {
  static const std::vector<std::string> names{"hit1", "ndcg5", "map", "r1", "r5", "r10", "p1", "ds"};
  return names;
}

inline int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream&) {
  std::vector<std::string> metrics;
  {
    std::stringstream ss(a.metrics);
    std::string m;
    while (std::getline(ss, m, ',')) {
      if (std::find(known_metrics().begin(), known_metrics().end(), m) == known_metrics().end()) {
        throw Error(Errc::invalid_argument, "unknown metric '" + m + "'");
      }
      metrics.push_back(m);
    }
  }
  auto run_in = detail::open_in(a.run);
  const auto runs = eval::read_run_jsonl(run_in);
  eval::Judgments judgments;
  const bool need_judgments = std::any_of(metrics.begin(), metrics.end(), [](const auto& m) { return m != "ds"; });
  if (need_judgments) {
    auto j_in = detail::open_in(a.judgments);
    judgments = eval::read_judgments_jsonl(j_in);
  }

  using Metric = std::function<double(const eval::RankedList&, const eval::Judgments&)>;
  const std::map<std::string, Metric> table{
      {"hit1", [](const auto& r, const auto& j) { return static_cast<double>(eval::hit_at_1(r, j)); }},
      {"p1", [](const auto& r, const auto& j) { return static_cast<double>(eval::precision_at_1(r, j)); }},
      {"ndcg5", [](const auto& r, const auto& j) { return eval::ndcg_at_k(r, j, 5); }},
      {"map", [](const auto& r, const auto& j) { return eval::average_precision(r, j); }},
      {"r1", [](const auto& r, const auto& j) { return eval::recall_at_k(r, j, 1); }},
      {"r5", [](const auto& r, const auto& j) { return eval::recall_at_k(r, j, 5); }},
      {"r10", [](const auto& r, const auto& j) { return eval::recall_at_k(r, j, 10); }},
      {"ds", [](const auto& r, const auto&) { return eval::similarity_gap(r); }},
  };

  detail::Sink sink(a.out, out);
  std::ostream& os = *sink;
  if (a.per_query) {
    os << "query\tmetric\tvalue\n";
    for (const auto& r : runs) {
      for (const auto& m : metrics) {
        try {
          os << r.query << '\t' << m << '\t' << grpo::format_double(table.at(m)(r, judgments)) << '\n';
        } catch (const Error& e) {
          if (e.code() != Errc::no_relevant) throw;
          os << r.query << '\t' << m << "\tNA\n";
        }
      }
    }
    return kOk;
  }
  os << "metric\tmean\tqueries\texcluded\n";
  for (const auto& m : metrics) {
    const auto s = eval::summarize(runs, judgments, table.at(m));
    os << m << '\t' << grpo::format_double(s.mean) << '\t' << s.count << '\t' << s.excluded << '\n';
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// filter / sample
// ---------------------------------------------------------------------------

struct FilterArgs {
  std::string manifest;
  std::string verdicts;
  std::optional<double> mock_reject;
  std::string out_retained;
  std::string out_rejected;
  std::string out_rl;
  std::optional<std::size_t> rl_count;
  std::optional<double> rl_fraction;
  std::string table;
};

inline int cmd_filter(const FilterArgs& a, std::ostream& out, std::ostream&) {
  if (a.verdicts.empty() == !a.mock_reject.has_value()) {
    throw Error(Errc::invalid_argument, "give exactly one of --verdicts and --mock-reject");
  }
  if (a.rl_count && a.rl_fraction) throw Error(Errc::invalid_argument, "--rl-count and --rl-fraction are exclusive");
  auto m_in = detail::open_in(a.manifest);
  const auto records = data::read_manifest(m_in);
  std::vector<data::FilterVerdict> verdicts;
  if (a.mock_reject) {
    verdicts = data::mock_verdicts(records, *a.mock_reject);
  } else {
    auto v_in = detail::open_in(a.verdicts);
    verdicts = data::read_verdicts(v_in);
  }
  const auto result = data::relevance_filter(records, verdicts);
  if (!a.out_retained.empty()) {
    detail::Sink s(a.out_retained, out);
    data::write_manifest(*s, result.retained);
  }
  if (!a.out_rejected.empty()) {
    detail::Sink s(a.out_rejected, out);
    data::write_manifest(*s, result.rejected);
  }
  if (!a.out_rl.empty()) {
    data::RlQuota quota;
    if (a.rl_fraction) {
      quota.fraction = *a.rl_fraction;
    } else {
      for (const auto& r : result.rejected) quota.counts[r.dataset] = a.rl_count.value_or(0);
    }
    detail::Sink s(a.out_rl, out);
    data::write_manifest(*s, data::build_rl_set(result.rejected, quota));
  }
  detail::Sink t(a.table, out);
  *t << data::retention_table(result.table);
  return kOk;
}

struct SampleArgs {
  std::string manifest;
  std::string caps;
  std::uint64_t seed = 0;
  std::string out;
};

inline int cmd_sample(const SampleArgs& a, std::ostream& out, std::ostream& err) {
  data::SamplingCaps caps;
  if (!a.caps.empty()) {
    const auto c = detail::split_reals(a.caps, 3, "--caps");
    for (double v : c) {
      if (!(v >= 1.0) || v != std::floor(v)) throw Error(Errc::invalid_argument, "--caps must be positive integers");
    }
    caps = {static_cast<std::size_t>(c[0]), static_cast<std::size_t>(c[1]), static_cast<std::size_t>(c[2])};
  }
  auto in = detail::open_in(a.manifest);
  const auto records = data::read_manifest(in);
  const auto sampled = data::stratified_sample(records, caps, a.seed);
  detail::Sink s(a.out, out);
  data::write_manifest(*s, sampled);
  err << "kept " << sampled.size() << " of " << records.size() << " record(s)\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// entry point
// ---------------------------------------------------------------------------

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Evidence-grounded embedding RL toolkit", "embedrl"};
  app.require_subcommand(1);

  ValidateArgs va;
  auto* validate = app.add_subcommand("validate", "check T-CoT corpus records against the format rules");
  validate->add_option("corpus", va.corpus, "corpus JSONL")->required();
  validate->add_option("--modality", va.modality, "text, image or video; overrides per-record modality");
  validate->add_option("-o,--out", va.out, "report JSONL (default stdout)");

  RewardArgs ra;
  auto* rew = app.add_subcommand("reward", "score rollouts with format, process and outcome rewards");
  rew->add_option("rollouts", ra.rollouts, "rollout JSONL")->required();
  rew->add_option("--embeddings", ra.embeddings, "embedding dump header (JSON)")->required();
  rew->add_option("--embeddings-bin", ra.embeddings_bin, "embedding dump data (f32le)");
  rew->add_option("--seed", ra.seed, "seed for candidate shuffling");
  rew->add_option("-o,--out", ra.out, "report JSONL (default stdout)");
  ra.flags.add_to(rew);

  TrainArgs ta;
  auto* train = app.add_subcommand("train-sim", "run GRPO in the synthetic retrieval world");
  train->add_option("--world", ta.world, "world config JSON {dim, channels, queries, items, seed}");
  train->add_option("--steps", ta.steps, "training steps");
  train->add_option("--seed", ta.seed, "run seed");
  train->add_option("--group-size", ta.group_size, "rollouts per group");
  train->add_option("--epsilon", ta.epsilon, "clip range");
  train->add_option("--kl-beta", ta.kl_beta, "KL penalty weight");
  train->add_option("--lr", ta.learning_rate, "learning rate");
  train->add_option("--updates", ta.updates, "ascent steps per batch");
  train->add_option("--trace", ta.trace, "trace CSV path");
  train->add_option("--policy", ta.policy, "final policy JSON path");
  ta.flags.add_to(train);

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "compute retrieval metrics for a run");
  ev->add_option("run", ea.run, "run JSONL {query, ranking, scores}")->required();
  ev->add_option("--judgments", ea.judgments, "judgments JSONL {query, relevant: {id: grade}}");
  ev->add_option("--metrics", ea.metrics, "comma list of hit1,ndcg5,map,r1,r5,r10,p1,ds");
  ev->add_flag("--per-query", ea.per_query, "one row per query and metric");
  ev->add_option("-o,--out", ea.out, "output TSV (default stdout)");

  FilterArgs fa;
  double mock_reject = 0.0;
  std::size_t rl_count = 0;
  double rl_fraction = 0.0;
  auto* filt = app.add_subcommand("filter", "split a manifest by relevance verdicts");
  filt->add_option("manifest", fa.manifest, "manifest JSONL")->required();
  filt->add_option("--verdicts", fa.verdicts, "verdicts JSONL {id, label: Yes|No}");
  auto* mock_opt = filt->add_option("--mock-reject", mock_reject, "label this fraction Yes, evenly spaced");
  filt->add_option("--retained", fa.out_retained, "retained manifest path");
  filt->add_option("--rejected", fa.out_rejected, "rejected manifest path");
  filt->add_option("--rl", fa.out_rl, "RL manifest path");
  auto* count_opt = filt->add_option("--rl-count", rl_count, "rejected records per dataset for the RL set");
  auto* frac_opt = filt->add_option("--rl-fraction", rl_fraction, "fraction of rejected records per dataset");
  filt->add_option("--table", fa.table, "retention table path (default stdout)");

  SampleArgs sa;
  auto* samp = app.add_subcommand("sample", "cap each dataset by its modality class");
  samp->add_option("manifest", sa.manifest, "manifest JSONL")->required();
  samp->add_option("--caps", sa.caps, "image,document,video caps (default 50000,100000,300000)");
  samp->add_option("--seed", sa.seed, "sampling seed");
  samp->add_option("-o,--out", sa.out, "output manifest (default stdout)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }
  if (*mock_opt) fa.mock_reject = mock_reject;
  if (*count_opt) fa.rl_count = rl_count;
  if (*frac_opt) fa.rl_fraction = rl_fraction;

  try {
    if (*validate) return cmd_validate(va, out, err);
    if (*rew) return cmd_reward(ra, out, err);
    if (*train) return cmd_train_sim(ta, out, err);
    if (*ev) return cmd_eval(ea, out, err);
    if (*filt) return cmd_filter(fa, out, err);
    if (*samp) return cmd_sample(sa, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kValidationFailure;
  }
  return kUsage;
}

}  // namespace embedrl::cli
