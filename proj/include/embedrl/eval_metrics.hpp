#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The embedrl Authors

// Retrieval metrics over ranked candidate lists with graded judgments.
// Rankings order by descending score, ties by ascending candidate id.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "embedrl/error.hpp"
#include "embedrl/tcot.hpp"

namespace embedrl::eval {

struct RankedList {
  std::string query;
  std::vector<std::string> ids;
  std::vector<double> scores;

  std::size_t size() const noexcept { return ids.size(); }

  /// Sorts (id, score) pairs into ranking order.
  static RankedList from_scores(std::string query, std::vector<std::pair<std::string, double>> scored) {
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    RankedList r;
    r.query = std::move(query);
    for (auto& [id, s] : scored) {
      r.ids.push_back(std::move(id));
      r.scores.push_back(s);
    }
    r.validate();
    return r;
  }

  void validate() const {
    if (ids.size() != scores.size()) throw Error(Errc::shape_mismatch, "ranking '" + query + "': ids vs scores");
    std::set<std::string_view> seen;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!seen.insert(ids[i]).second) throw Error(Errc::invalid_argument, "ranking '" + query + "': duplicate id " + ids[i]);
      if (i > 0 && scores[i] > scores[i - 1]) {
        throw Error(Errc::invalid_argument, "ranking '" + query + "': scores increase at position " + std::to_string(i + 1));
      }
    }
  }
};

/// query id -> candidate id -> grade (0 = not relevant).
using Judgments = std::map<std::string, std::map<std::string, int>, std::less<>>;

namespace detail {

inline const std::map<std::string, int>& grades_for(const RankedList& r, const Judgments& j) {
  const auto it = j.find(r.query);
  if (it == j.end()) throw Error(Errc::missing_judgment, "query '" + r.query + "'");
  return it->second;
}

inline int grade(const std::map<std::string, int>& g, const std::string& id) {
  const auto it = g.find(id);
  return it == g.end() ? 0 : it->second;
}

inline std::size_t relevant_count(const std::map<std::string, int>& g) {
  return static_cast<std::size_t>(std::count_if(g.begin(), g.end(), [](const auto& kv) { return kv.second > 0; }));
}

inline double gain(int grade) { return std::exp2(static_cast<double>(grade)) - 1.0; }

inline void require_nonempty(const RankedList& r) {
  if (r.ids.empty()) throw Error(Errc::invalid_argument, "ranking '" + r.query + "' is empty");
}

}  // namespace detail

inline int hit_at_1(const RankedList& r, const Judgments& j) {
  const auto& g = detail::grades_for(r, j);
  detail::require_nonempty(r);
  return detail::grade(g, r.ids.front()) > 0 ? 1 : 0;
}

inline int precision_at_1(const RankedList& r, const Judgments& j) { return hit_at_1(r, j); }

/// DCG@k = sum_{i<=k} (2^grade_i - 1) / log2(i + 1); IDCG from the judged
/// grades sorted descending.
inline double ndcg_at_k(const RankedList& r, const Judgments& j, std::size_t k = 5) {
  const auto& g = detail::grades_for(r, j);
  if (detail::relevant_count(g) == 0) throw Error(Errc::no_relevant, "query '" + r.query + "'");
  double dcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, r.ids.size()); ++i) {
    dcg += detail::gain(detail::grade(g, r.ids[i])) / std::log2(static_cast<double>(i) + 2.0);
  }
  std::vector<int> ideal;
  for (const auto& [id, grade] : g) {
    if (grade > 0) ideal.push_back(grade);
  }
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) {
    idcg += detail::gain(ideal[i]) / std::log2(static_cast<double>(i) + 2.0);
  }
  return dcg / idcg;
}

/// Sum of precision at each relevant rank, divided by the number of relevant
/// candidates in the judgments (unretrieved relevant ones contribute 0).
inline double average_precision(const RankedList& r, const Judgments& j) {
  const auto& g = detail::grades_for(r, j);
  const std::size_t total = detail::relevant_count(g);
  if (total == 0) throw Error(Errc::no_relevant, "query '" + r.query + "'");
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < r.ids.size(); ++i) {
    if (detail::grade(g, r.ids[i]) > 0) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(total);
}

inline double recall_at_k(const RankedList& r, const Judgments& j, std::size_t k) {
  const auto& g = detail::grades_for(r, j);
  const std::size_t total = detail::relevant_count(g);
  if (total == 0) throw Error(Errc::no_relevant, "query '" + r.query + "'");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(k, r.ids.size()); ++i) hits += detail::grade(g, r.ids[i]) > 0 ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(total);
}

/// Score of the top candidate minus the runner-up.
inline double similarity_gap(const RankedList& r) {
  if (r.scores.size() < 2) throw Error(Errc::too_few_candidates, "query '" + r.query + "' has fewer than 2 candidates");
  return r.scores[0] - r.scores[1];
}

struct Summary {
  double mean = 0.0;
  std::size_t count = 0;     // queries averaged
  std::size_t excluded = 0;  // queries skipped for lack of relevant candidates
};

/// Mean of a per-query metric; NoRelevant queries are excluded and counted.
inline Summary summarize(std::span<const RankedList> runs, const Judgments& j,
                         const std::function<double(const RankedList&, const Judgments&)>& metric) {
  Summary s;
  double sum = 0.0;
  for (const auto& r : runs) {
    try {
      sum += metric(r, j);
      ++s.count;
    } catch (const Error& e) {
      if (e.code() != Errc::no_relevant) throw;
      ++s.excluded;
    }
  }
  s.mean = s.count ? sum / static_cast<double>(s.count) : 0.0;
  return s;
}

struct GapSummary {
  std::vector<double> per_query;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

inline GapSummary summarize_gaps(std::span<const RankedList> runs) {
  GapSummary s;
  for (const auto& r : runs) s.per_query.push_back(similarity_gap(r));
  if (!s.per_query.empty()) {
    s.mean = std::accumulate(s.per_query.begin(), s.per_query.end(), 0.0) / static_cast<double>(s.per_query.size());
    s.min = *std::min_element(s.per_query.begin(), s.per_query.end());
    s.max = *std::max_element(s.per_query.begin(), s.per_query.end());
  }
  return s;
}

// ---------------------------------------------------------------------------
// Evidence counts
// ---------------------------------------------------------------------------

struct EvidenceCounts {
  std::vector<std::size_t> per_document;
  std::map<std::size_t, std::size_t> histogram;  // count -> documents
  double mean = 0.0;
};

/// Per-document number of cue items of the modality's kind (keywords, boxes
/// or keyframes), with histogram and mean.
inline EvidenceCounts evidence_counts(std::span<const tcot::TCotDocument> corpus, tcot::Modality modality) {
  const tcot::CueKind kind = tcot::required_cue(modality);
  EvidenceCounts out;
  for (const auto& doc : corpus) {
    std::size_t n = 0;
    for (const auto& cue : doc.cues) {
      if (tcot::cue_kind(cue) == kind) n += tcot::cue_size(cue);
    }
    out.per_document.push_back(n);
    ++out.histogram[n];
  }
  if (!out.per_document.empty()) {
    out.mean = static_cast<double>(std::accumulate(out.per_document.begin(), out.per_document.end(), std::size_t{0})) /
               static_cast<double>(out.per_document.size());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run and judgment files
// ---------------------------------------------------------------------------

/// {"query": id, "ranking": [ids], "scores": [reals]} per line.
inline std::vector<RankedList> read_run_jsonl(std::istream& in) {
  std::vector<RankedList> runs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      RankedList r;
      r.query = j.at("query").get<std::string>();
      r.ids = j.at("ranking").get<std::vector<std::string>>();
      r.scores = j.at("scores").get<std::vector<double>>();
      r.validate();
      runs.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::parse_error, "run line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return runs;
}

/// {"query": id, "relevant": {id: grade}} per line.
inline Judgments read_judgments_jsonl(std::istream& in) {
  Judgments out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      auto& grades = out[j.at("query").get<std::string>()];
      for (const auto& [id, grade] : j.at("relevant").items()) {
        const int g = grade.get<int>();
        if (g < 0) throw Error(Errc::invalid_argument, "negative grade for '" + id + "'");
        grades[id] = g;
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::parse_error, "judgment line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace embedrl::eval
