#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The embedrl Authors

/**
 * @file data_pipeline.hpp
 * @brief Sampling, relevance filtering, RL-set extraction and sub-batching
 * for query/positive manifests.
 *
 *   records --stratified_sample--> initial pool (per-dataset caps by class)
 *           --relevance_filter-->  retained ("No")  -> contrastive training
 *                                  rejected ("Yes") -> equidistant_sample -> RL set
 *   retained --weighted_interleave--> stream --build_subbatches--> batches
 *
 * Every sub-batch holds records of a single dataset.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "embedrl/detail/random.hpp"
#include "embedrl/error.hpp"

namespace embedrl::data {

enum class ModalityClass { image, document, video };

inline std::string_view to_string(ModalityClass m) {
  switch (m) {
    case ModalityClass::image: return "image";
    case ModalityClass::document: return "document";
    case ModalityClass::video: return "video";
  }
  return "image";
}

inline ModalityClass modality_class_from_string(std::string_view s) {
  if (s == "image") return ModalityClass::image;
  if (s == "document") return ModalityClass::document;
  if (s == "video") return ModalityClass::video;
  throw Error(Errc::unknown_modality_class, "'" + std::string(s) + "'");
}

struct ManifestRecord {
  std::string id;
  std::string dataset;
  std::string modality_pair;   // e.g. "text->video"
  std::string modality_class;  // image | document | video
  double weight = 1.0;
  std::string query_ref;
  std::string pos_ref;
  std::vector<std::string> tcot_refs;

  bool operator==(const ManifestRecord&) const = default;
};

struct SamplingCaps {
  std::size_t image_cap = 50'000;
  std::size_t doc_cap = 100'000;
  std::size_t video_cap = 300'000;

  std::size_t cap_for(ModalityClass m) const {
    switch (m) {
      case ModalityClass::image: return image_cap;
      case ModalityClass::document: return doc_cap;
      case ModalityClass::video: return video_cap;
    }
    return image_cap;
  }

  void validate() const {
    if (image_cap < 1 || doc_cap < 1 || video_cap < 1) throw Error(Errc::invalid_argument, "sampling caps must be >= 1");
  }
};

enum class Label { yes, no };

struct FilterVerdict {
  std::string id;
  Label label = Label::no;
};

inline std::string_view to_string(Label l) { return l == Label::yes ? "Yes" : "No"; }

/// Exactly "Yes" or "No"; surrounding whitespace is tolerated.
inline Label parse_label(std::string_view raw) {
  while (!raw.empty() && std::isspace(static_cast<unsigned char>(raw.front()))) raw.remove_prefix(1);
  while (!raw.empty() && std::isspace(static_cast<unsigned char>(raw.back()))) raw.remove_suffix(1);
  if (raw == "Yes") return Label::yes;
  if (raw == "No") return Label::no;
  throw Error(Errc::parse_error, "verdict label must be \"Yes\" or \"No\", got \"" + std::string(raw) + "\"");
}

/// Published totals of the full-scale pipeline, kept for documentation.
namespace reference {
inline constexpr std::size_t kInitialSamples = 2'223'882;
inline constexpr std::size_t kRetainedSamples = 1'828'341;
inline constexpr double kRetentionPercent = 82.21;
inline constexpr std::size_t kRlSamples = 19'000;
}  // namespace reference

// ---------------------------------------------------------------------------
// Stratified sampling
// ---------------------------------------------------------------------------

namespace detail {

/// Datasets in first-appearance order with their record indices.
inline std::vector<std::pair<std::string, std::vector<std::size_t>>> group_by_dataset(
    std::span<const ManifestRecord> records) {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> groups;
  std::map<std::string, std::size_t, std::less<>> index;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto [it, inserted] = index.try_emplace(records[i].dataset, groups.size());
    if (inserted) groups.push_back({records[i].dataset, {}});
    groups[it->second].second.push_back(i);
  }
  return groups;
}

}  // namespace detail

/// Per dataset, keeps min(size, cap) records drawn uniformly without
/// replacement (partial Fisher-Yates, seeded per dataset name). Kept records
/// stay in input order.
inline std::vector<ManifestRecord> stratified_sample(std::span<const ManifestRecord> records, const SamplingCaps& caps,
                                                     std::uint64_t seed) {
  caps.validate();
  std::vector<bool> keep(records.size(), false);
  for (const auto& [dataset, idx] : detail::group_by_dataset(records)) {
    const ModalityClass cls = modality_class_from_string(records[idx.front()].modality_class);
    for (std::size_t i : idx) {
      if (modality_class_from_string(records[i].modality_class) != cls) {
        throw Error(Errc::unknown_modality_class, "dataset '" + dataset + "' mixes modality classes");
      }
    }
    const std::size_t cap = caps.cap_for(cls);
    if (idx.size() <= cap) {
      for (std::size_t i : idx) keep[i] = true;
      continue;
    }
    std::vector<std::size_t> pool = idx;
    embedrl::detail::Rng rng(embedrl::detail::derive_seed(seed, embedrl::detail::fnv1a64(dataset)));
    for (std::size_t i = 0; i < cap; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
      keep[pool[i]] = true;
    }
  }
  std::vector<ManifestRecord> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (keep[i]) out.push_back(records[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Relevance filtering
// ---------------------------------------------------------------------------

struct RetentionRow {
  std::string dataset;
  std::size_t initial = 0;
  std::size_t retained = 0;
  double weight = 0.0;
  std::string modality_pair;

  double ratio() const { return initial ? static_cast<double>(retained) / static_cast<double>(initial) : 0.0; }
};

struct FilterResult {
  std::vector<ManifestRecord> retained;  // labelled "No": relevant, not conflicting
  std::vector<ManifestRecord> rejected;  // labelled "Yes"
  std::vector<RetentionRow> table;       // per dataset, first-appearance order
};

inline FilterResult relevance_filter(std::span<const ManifestRecord> records, std::span<const FilterVerdict> verdicts) {
  std::map<std::string, Label, std::less<>> by_id;
  for (const auto& v : verdicts) by_id.insert_or_assign(v.id, v.label);
  FilterResult out;
  std::map<std::string, std::size_t, std::less<>> row_of;
  for (const auto& r : records) {
    const auto it = by_id.find(r.id);
    if (it == by_id.end()) throw Error(Errc::missing_verdict, "record '" + r.id + "'");
    auto [row_it, inserted] = row_of.try_emplace(r.dataset, out.table.size());
    if (inserted) out.table.push_back({r.dataset, 0, 0, r.weight, r.modality_pair});
    RetentionRow& row = out.table[row_it->second];
    ++row.initial;
    if (it->second == Label::no) {
      ++row.retained;
      out.retained.push_back(r);
    } else {
      out.rejected.push_back(r);
    }
  }
  return out;
}

/// Deterministic mock judge: labels exactly floor(n * reject_fraction)
/// records "Yes", spread evenly over the input order.
inline std::vector<FilterVerdict> mock_verdicts(std::span<const ManifestRecord> records, double reject_fraction) {
  if (!(reject_fraction >= 0.0 && reject_fraction <= 1.0)) {
    throw Error(Errc::invalid_argument, "reject fraction must be in [0, 1]");
  }
  std::vector<FilterVerdict> out;
  out.reserve(records.size());
  const auto rejected_before = [&](std::size_t i) {
    // Rounded so fractions like 0.2 land exactly on multiples of 1/n.
    return static_cast<std::size_t>(std::floor(static_cast<double>(i) * reject_fraction + 1e-9));
  };
  for (std::size_t i = 0; i < records.size(); ++i) {
    const bool reject = rejected_before(i + 1) > rejected_before(i);
    out.push_back({records[i].id, reject ? Label::yes : Label::no});
  }
  return out;
}

/// External relevance judge (e.g. an MLLM behind the judgment prompt).
/// Returns the raw single-word answer.
class RelevanceJudge {
 public:
  virtual ~RelevanceJudge() = default;
  virtual std::string judge(const std::string& prompt) const = 0;
};

/// The judgment prompt followed by the three inputs it refers to.
inline std::string judgment_prompt(std::string_view prompt_template, std::string_view qry, std::string_view query_cot,
                                   std::string_view pos_cot) {
  std::string out(prompt_template);
  if (!out.empty() && out.back() != '\n') out += '\n';
  out += "qry: ";
  out += qry;
  out += "\nquery_cot: ";
  out += query_cot;
  out += "\npos_cot: ";
  out += pos_cot;
  out += '\n';
  return out;
}

// ---------------------------------------------------------------------------
// RL set extraction
// ---------------------------------------------------------------------------

/// Picks positions floor(i * N / n), i = 0..n-1, from records sorted by
/// ascending id.
inline std::vector<ManifestRecord> equidistant_sample(std::span<const ManifestRecord> rejected, std::size_t n) {
  if (n > rejected.size()) {
    throw Error(Errc::sample_too_large, std::to_string(n) + " > " + std::to_string(rejected.size()) + " records");
  }
  std::vector<const ManifestRecord*> ordered;
  ordered.reserve(rejected.size());
  for (const auto& r : rejected) ordered.push_back(&r);
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
  std::vector<ManifestRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(*ordered[i * rejected.size() / n]);
  return out;
}

/// How many rejected records of a dataset go to the RL set.
struct RlQuota {
  std::optional<double> fraction;             // round(fraction * size) per dataset
  std::map<std::string, std::size_t> counts;  // fixed counts; datasets absent get 0
};

inline std::vector<ManifestRecord> build_rl_set(std::span<const ManifestRecord> rejected, const RlQuota& quota) {
  std::vector<ManifestRecord> out;
  for (const auto& [dataset, idx] : detail::group_by_dataset(rejected)) {
    std::vector<ManifestRecord> subset;
    for (std::size_t i : idx) subset.push_back(rejected[i]);
    std::size_t n = 0;
    if (quota.fraction) {
      if (!(*quota.fraction >= 0.0 && *quota.fraction <= 1.0)) throw Error(Errc::invalid_argument, "RL fraction");
      n = static_cast<std::size_t>(std::llround(*quota.fraction * static_cast<double>(subset.size())));
    } else if (const auto it = quota.counts.find(dataset); it != quota.counts.end()) {
      n = it->second;
    }
    auto picked = equidistant_sample(subset, n);
    out.insert(out.end(), picked.begin(), picked.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Weighted interleaving and sub-batches
// ---------------------------------------------------------------------------

struct WeightedDataset {
  std::string name;
  double weight = 1.0;
  std::vector<ManifestRecord> records;
};

/// Emits records one at a time, choosing the source dataset with probability
/// proportional to its weight among datasets that still have records.
class Interleaver {
 public:
  Interleaver(std::vector<WeightedDataset> datasets, std::uint64_t seed) : datasets_(std::move(datasets)), rng_(seed) {
    for (const auto& d : datasets_) {
      if (!(d.weight > 0.0) || !std::isfinite(d.weight)) {
        throw Error(Errc::invalid_weight, "dataset '" + d.name + "' has weight " + std::to_string(d.weight));
      }
    }
    cursor_.assign(datasets_.size(), 0);
  }

  bool exhausted() const {
    for (std::size_t d = 0; d < datasets_.size(); ++d) {
      if (cursor_[d] < datasets_[d].records.size()) return false;
    }
    return true;
  }

  const ManifestRecord& next() {
    double total = 0.0;
    for (std::size_t d = 0; d < datasets_.size(); ++d) {
      if (cursor_[d] < datasets_[d].records.size()) total += datasets_[d].weight;
    }
    if (total == 0.0) throw Error(Errc::all_exhausted, "every dataset is exhausted");
    const double u = rng_.uniform() * total;
    double cum = 0.0;
    std::size_t chosen = datasets_.size();
    for (std::size_t d = 0; d < datasets_.size(); ++d) {
      if (cursor_[d] >= datasets_[d].records.size()) continue;
      chosen = d;  // last live dataset absorbs rounding at the top end
      cum += datasets_[d].weight;
      if (u < cum) break;
    }
    return datasets_[chosen].records[cursor_[chosen]++];
  }

 private:
  std::vector<WeightedDataset> datasets_;
  std::vector<std::size_t> cursor_;
  embedrl::detail::Rng rng_;
};

inline std::vector<ManifestRecord> weighted_interleave(std::vector<WeightedDataset> datasets, std::uint64_t seed) {
  Interleaver it(std::move(datasets), seed);
  std::vector<ManifestRecord> out;
  while (!it.exhausted()) out.push_back(it.next());
  return out;
}

struct SubBatches {
  std::vector<std::vector<ManifestRecord>> batches;
  std::map<std::string, std::size_t> dropped;  // per dataset remainder
  std::size_t dropped_total() const {
    std::size_t n = 0;
    for (const auto& [_, c] : dropped) n += c;
    return n;
  }
};

/// Buffers the stream per dataset and emits a batch whenever a buffer fills;
/// partial buffers at the end are dropped and reported.
inline SubBatches build_subbatches(std::span<const ManifestRecord> stream, std::size_t subbatch_size) {
  if (subbatch_size < 2) throw Error(Errc::invalid_argument, "sub-batch size must be >= 2");
  SubBatches out;
  std::map<std::string, std::vector<ManifestRecord>, std::less<>> buffers;
  for (const auto& r : stream) {
    auto& buf = buffers[r.dataset];
    buf.push_back(r);
    if (buf.size() == subbatch_size) {
      out.batches.push_back(std::move(buf));
      buf.clear();
    }
  }
  for (const auto& [dataset, buf] : buffers) {
    if (!buf.empty()) out.dropped[dataset] = buf.size();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Files and reports
// ---------------------------------------------------------------------------

inline ManifestRecord record_from_json(const nlohmann::json& j) {
  ManifestRecord r;
  r.id = j.at("id").get<std::string>();
  r.dataset = j.at("dataset").get<std::string>();
  r.modality_pair = j.value("modality_pair", "");
  r.modality_class = j.at("modality_class").get<std::string>();
  r.weight = j.value("weight", 1.0);
  r.query_ref = j.value("query_ref", "");
  r.pos_ref = j.value("pos_ref", "");
  if (j.contains("tcot_refs")) r.tcot_refs = j.at("tcot_refs").get<std::vector<std::string>>();
  if (!(r.weight > 0.0)) throw Error(Errc::invalid_weight, "record '" + r.id + "'");
  return r;
}

inline nlohmann::ordered_json record_to_json(const ManifestRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["dataset"] = r.dataset;
  j["modality_pair"] = r.modality_pair;
  j["modality_class"] = r.modality_class;
  j["weight"] = r.weight;
  j["query_ref"] = r.query_ref;
  j["pos_ref"] = r.pos_ref;
  if (!r.tcot_refs.empty()) j["tcot_refs"] = r.tcot_refs;
  return j;
}

inline std::vector<ManifestRecord> read_manifest(std::istream& in) {
  std::vector<ManifestRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::parse_error, "manifest line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_manifest(std::ostream& out, std::span<const ManifestRecord> records) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

inline std::vector<FilterVerdict> read_verdicts(std::istream& in) {
  std::vector<FilterVerdict> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("id").get<std::string>(), parse_label(j.at("label").get<std::string>())});
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::parse_error, "verdict line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_verdicts(std::ostream& out, std::span<const FilterVerdict> verdicts) {
  for (const auto& v : verdicts) {
    nlohmann::ordered_json j;
    j["id"] = v.id;
    j["label"] = to_string(v.label);
    out << j.dump() << '\n';
  }
}

inline std::string with_thousands(std::size_t n) {
  std::string digits = std::to_string(n);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

inline std::string percent(double ratio) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << ratio * 100.0 << '%';
  return os.str();
}

/// Dataset | Initial Samples | Filtered Samples | Retention Ratio | Weight | Modality,
/// with a Total row.
inline std::string retention_table(std::span<const RetentionRow> rows) {
  std::vector<std::vector<std::string>> cells;
  cells.push_back({"Dataset", "Initial Samples", "Filtered Samples", "Retention Ratio", "Weight", "Modality"});
  std::size_t initial = 0, retained = 0;
  for (const auto& r : rows) {
    std::ostringstream w;
    w << r.weight;
    cells.push_back({r.dataset, with_thousands(r.initial), with_thousands(r.retained), percent(r.ratio()), w.str(),
                     r.modality_pair});
    initial += r.initial;
    retained += r.retained;
  }
  const double total_ratio = initial ? static_cast<double>(retained) / static_cast<double>(initial) : 0.0;
  cells.push_back({"Total", with_thousands(initial), with_thousands(retained), percent(total_ratio), "-", "-"});

  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    if (r == cells.size() - 1 || r == 1) {
      for (std::size_t c = 0; c < width.size(); ++c) out += std::string(width[c], '-') + (c + 1 < width.size() ? "  " : "");
      out += '\n';
    }
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      const std::string& s = cells[r][c];
      const bool numeric = c >= 1 && c <= 4 && r > 0;
      const std::string pad(width[c] - s.size(), ' ');
      out += numeric ? pad + s : s + pad;
      if (c + 1 < cells[r].size()) out += "  ";
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += '\n';
  }
  return out;
}

}  // namespace embedrl::data
