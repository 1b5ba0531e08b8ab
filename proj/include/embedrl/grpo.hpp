#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The embedrl Authors

/**
 * @file grpo.hpp
 * @brief Group Relative Policy Optimization over a categorical policy.
 *
 * The policy holds one logit vector per context over a discrete action
 * space (whole T-CoT templates), so likelihood ratios are sequence level and
 * the KL to the reference policy has a closed form.
 *
 * Objective (maximized), averaged over groups and the G rollouts of each:
 *
 *   min(r_i A_i, clip(r_i, 1 - eps, 1 + eps) A_i) - kl_beta * KL(pi || pi_ref)
 *
 * with r_i = pi(a_i) / pi_old(a_i) and A_i the group-normalized reward.
 */

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "embedrl/detail/random.hpp"
#include "embedrl/error.hpp"

namespace embedrl::grpo {

/// Per-context logits over a shared action space, row-major.
class PolicyState {
 public:
  PolicyState() = default;

  PolicyState(std::vector<std::string> context_ids, std::size_t num_actions)
      : context_ids_(std::move(context_ids)),
        num_actions_(num_actions),
        logits_(context_ids_.size() * num_actions, 0.0) {
    if (num_actions < 2) throw Error(Errc::invalid_argument, "action space needs at least 2 actions");
  }

  std::size_t num_contexts() const noexcept { return context_ids_.size(); }
  std::size_t num_actions() const noexcept { return num_actions_; }
  const std::vector<std::string>& context_ids() const noexcept { return context_ids_; }

  std::span<const double> logits(std::size_t context) const {
    check(context);
    return std::span<const double>(logits_).subspan(context * num_actions_, num_actions_);
  }
  std::span<double> logits(std::size_t context) {
    check(context);
    return std::span<double>(logits_).subspan(context * num_actions_, num_actions_);
  }

  std::span<const double> all_logits() const noexcept { return logits_; }
  std::span<double> all_logits() noexcept { return logits_; }

  std::vector<double> log_probabilities(std::size_t context) const {
    const auto z = logits(context);
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - m);
    const double log_z = m + std::log(sum);
    std::vector<double> out(z.size());
    for (std::size_t a = 0; a < z.size(); ++a) out[a] = z[a] - log_z;
    return out;
  }

  std::vector<double> probabilities(std::size_t context) const {
    auto lp = log_probabilities(context);
    for (double& v : lp) v = std::exp(v);
    return lp;
  }

  bool operator==(const PolicyState&) const = default;

 private:
  void check(std::size_t context) const {
    if (context >= context_ids_.size()) throw Error(Errc::unknown_context, "context " + std::to_string(context));
  }

  std::vector<std::string> context_ids_;
  std::size_t num_actions_ = 0;
  std::vector<double> logits_;
};

/// Frozen copy of the policy taken when RL starts.
class ReferenceSnapshot {
 public:
  explicit ReferenceSnapshot(PolicyState policy) : policy_(std::move(policy)) {}
  const PolicyState& policy() const noexcept { return policy_; }

 private:
  PolicyState policy_;
};

struct GrpoConfig {
  std::size_t group_size = 8;
  double epsilon = 0.2;
  double kl_beta = 0.01;
  double learning_rate = 10.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (group_size < 2) throw Error(Errc::bad_config, "group size must be >= 2");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw Error(Errc::bad_config, "epsilon must be in (0, 1)");
    if (!(kl_beta >= 0.0)) throw Error(Errc::bad_config, "kl_beta must be >= 0");
    if (!std::isfinite(learning_rate)) throw Error(Errc::bad_config, "learning rate must be finite");
  }
};

struct GroupSample {
  std::size_t context = 0;
  std::vector<std::size_t> actions;
  std::vector<double> old_logprobs;
  std::vector<double> rewards;
  std::vector<double> advantages;

  bool complete() const noexcept {
    const std::size_t g = actions.size();
    return g >= 2 && old_logprobs.size() == g && rewards.size() == g && advantages.size() == g;
  }
};

/// G i.i.d. draws from softmax(logits[context]) by inverse CDF.
inline GroupSample sample_group(const PolicyState& policy, std::size_t context, std::size_t group_size,
                                std::uint64_t seed) {
  const auto probs = policy.probabilities(context);
  const auto logp = policy.log_probabilities(context);
  detail::Rng rng(seed);
  GroupSample out;
  out.context = context;
  out.actions.reserve(group_size);
  out.old_logprobs.reserve(group_size);
  for (std::size_t i = 0; i < group_size; ++i) {
    const double u = rng.uniform();
    double cum = 0.0;
    std::size_t a = probs.size() - 1;
    for (std::size_t k = 0; k < probs.size(); ++k) {
      cum += probs[k];
      if (u < cum) {
        a = k;
        break;
      }
    }
    out.actions.push_back(a);
    out.old_logprobs.push_back(logp[a]);
  }
  return out;
}

inline constexpr double kAdvantageStdGuard = 1e-8;

/// (r_i - mean) / population std, with the std floored at 1e-8; all zero for
/// constant rewards.
inline std::vector<double> compute_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw Error(Errc::invalid_argument, "advantages need a group of at least 2");
  std::vector<double> out(rewards.size(), 0.0);
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards.front(); })) return out;
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= n;
  const double sd = std::sqrt(var);
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / std::max(sd, kAdvantageStdGuard);
  return out;
}

inline double clipped_surrogate(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

/// d clipped_surrogate / d ratio, taken as 0 where the clipped branch binds.
inline double clipped_surrogate_slope(double ratio, double advantage, double epsilon) {
  if (advantage > 0.0 && ratio > 1.0 + epsilon) return 0.0;
  if (advantage < 0.0 && ratio < 1.0 - epsilon) return 0.0;
  return advantage;
}

/// Exact KL(pi || pi_ref) for one context.
inline double kl_divergence(const PolicyState& policy, const PolicyState& reference, std::size_t context) {
  const auto lp = policy.log_probabilities(context);
  const auto lq = reference.log_probabilities(context);
  if (lp.size() != lq.size()) throw Error(Errc::shape_mismatch, "policy and reference action spaces differ");
  double kl = 0.0;
  for (std::size_t a = 0; a < lp.size(); ++a) kl += std::exp(lp[a]) * (lp[a] - lq[a]);
  return std::max(kl, 0.0);
}

inline double entropy(const PolicyState& policy, std::size_t context) {
  const auto lp = policy.log_probabilities(context);
  double h = 0.0;
  for (double v : lp) h -= std::exp(v) * v;
  return h;
}

struct ObjectiveResult {
  double objective = 0.0;
  std::vector<double> grad;  // d objective / d logits, shaped like PolicyState::all_logits()
  double mean_kl = 0.0;      // over groups
};

inline ObjectiveResult grpo_objective(const PolicyState& policy, const ReferenceSnapshot& reference,
                                      std::span<const GroupSample> groups, const GrpoConfig& cfg) {
  const PolicyState& ref = reference.policy();
  if (ref.num_contexts() != policy.num_contexts() || ref.num_actions() != policy.num_actions()) {
    throw Error(Errc::shape_mismatch, "policy and reference shapes differ");
  }
  ObjectiveResult out;
  out.grad.assign(policy.all_logits().size(), 0.0);
  if (groups.empty()) return out;

  const std::size_t n_actions = policy.num_actions();
  const double group_weight = 1.0 / static_cast<double>(groups.size());
  for (const GroupSample& gs : groups) {
    if (!gs.complete()) throw Error(Errc::incomplete_group, "context " + std::to_string(gs.context));
    const auto lp = policy.log_probabilities(gs.context);
    const auto lq = ref.log_probabilities(gs.context);
    std::vector<double> pi(n_actions);
    for (std::size_t a = 0; a < n_actions; ++a) pi[a] = std::exp(lp[a]);

    double* g = out.grad.data() + gs.context * n_actions;
    const double g_size = static_cast<double>(gs.actions.size());
    double surrogate = 0.0;
    for (std::size_t i = 0; i < gs.actions.size(); ++i) {
      const std::size_t a = gs.actions[i];
      if (a >= n_actions) throw Error(Errc::shape_mismatch, "action " + std::to_string(a) + " out of range");
      const double ratio = std::exp(lp[a] - gs.old_logprobs[i]);
      surrogate += clipped_surrogate(ratio, gs.advantages[i], cfg.epsilon);
      // d ratio / d z_j = ratio * (1[j == a] - pi_j)
      const double coef = group_weight / g_size * clipped_surrogate_slope(ratio, gs.advantages[i], cfg.epsilon) * ratio;
      if (coef != 0.0) {
        for (std::size_t j = 0; j < n_actions; ++j) g[j] -= coef * pi[j];
        g[a] += coef;
      }
    }
    double kl = 0.0;
    for (std::size_t a = 0; a < n_actions; ++a) kl += pi[a] * (lp[a] - lq[a]);
    // d KL / d z_j = pi_j (log pi_j - log q_j - KL)
    for (std::size_t j = 0; j < n_actions; ++j) g[j] -= group_weight * cfg.kl_beta * pi[j] * (lp[j] - lq[j] - kl);

    out.objective += group_weight * (surrogate / g_size - cfg.kl_beta * kl);
    out.mean_kl += group_weight * kl;
  }
  return out;
}

/// Gradient ascent: logits += learning_rate * grad.
inline PolicyState update_step(const PolicyState& policy, std::span<const double> grad, double learning_rate) {
  if (grad.size() != policy.all_logits().size()) {
    throw Error(Errc::shape_mismatch, "gradient has " + std::to_string(grad.size()) + " entries, policy has " +
                                          std::to_string(policy.all_logits().size()));
  }
  PolicyState next = policy;
  auto z = next.all_logits();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += learning_rate * grad[i];
  return next;
}

// ---------------------------------------------------------------------------
// Policy files
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json policy_to_json(const PolicyState& policy) {
  nlohmann::ordered_json j;
  j["num_actions"] = policy.num_actions();
  auto& contexts = j["contexts"] = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < policy.num_contexts(); ++c) {
    const auto z = policy.logits(c);
    contexts.push_back({{"id", policy.context_ids()[c]}, {"logits", std::vector<double>(z.begin(), z.end())}});
  }
  return j;
}

inline PolicyState policy_from_json(const nlohmann::json& j) {
  try {
    std::vector<std::string> ids;
    for (const auto& c : j.at("contexts")) ids.push_back(c.at("id").get<std::string>());
    PolicyState p(ids, j.at("num_actions").get<std::size_t>());
    for (std::size_t c = 0; c < ids.size(); ++c) {
      const auto z = j.at("contexts")[c].at("logits").get<std::vector<double>>();
      if (z.size() != p.num_actions()) throw Error(Errc::shape_mismatch, "context '" + ids[c] + "'");
      std::copy(z.begin(), z.end(), p.logits(c).begin());
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, std::string("policy file: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Training traces
// ---------------------------------------------------------------------------

struct TraceRow {
  std::size_t step = 0;
  double mean_reward = 0.0;
  double mean_format = 0.0;
  double mean_process = 0.0;
  double mean_outcome = 0.0;
  double objective = 0.0;
  double kl = 0.0;
  double entropy = 0.0;

  bool operator==(const TraceRow&) const = default;
};

using TrainingTrace = std::vector<TraceRow>;

/// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline void write_trace_csv(std::ostream& out, std::span<const TraceRow> trace) {
  out << "step,mean_reward,mean_format,mean_process,mean_outcome,objective,kl,entropy\n";
  for (const auto& r : trace) {
    out << r.step << ',' << format_double(r.mean_reward) << ',' << format_double(r.mean_format) << ','
        << format_double(r.mean_process) << ',' << format_double(r.mean_outcome) << ',' << format_double(r.objective)
        << ',' << format_double(r.kl) << ',' << format_double(r.entropy) << '\n';
  }
}

}  // namespace embedrl::grpo
