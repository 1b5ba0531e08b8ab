#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The embedrl Authors

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "embedrl/detail/random.hpp"
#include "embedrl/error.hpp"
#include "embedrl/tcot.hpp"

namespace embedrl::embedding {

/// Unit-norm dense vector. Only normalize() and the unchecked factory produce
/// one, so holders can rely on |‖v‖ − 1| <= 1e-6.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  /// Wraps values that are already unit norm (e.g. read back from a dump);
  /// re-normalizes to absorb float32 rounding.
  static EmbeddingVector from_unit(std::vector<double> values);

  bool operator==(const EmbeddingVector&) const = default;

 private:
  explicit EmbeddingVector(std::vector<double> v) : values_(std::move(v)) {}
  std::vector<double> values_;

  friend EmbeddingVector normalize(std::span<const double> v);
};

inline double l2_norm(std::span<const double> v) {
  // Scaled accumulation keeps tiny and huge inputs finite.
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  if (scale == 0.0 || !std::isfinite(scale)) return scale;
  double sum = 0.0;
  for (double x : v) {
    const double y = x / scale;
    sum += y * y;
  }
  return scale * std::sqrt(sum);
}

inline EmbeddingVector normalize(std::span<const double> v) {
  const double n = l2_norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw Error(Errc::zero_vector, "cannot normalize a zero or non-finite vector");
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return EmbeddingVector(std::move(out));
}

inline EmbeddingVector EmbeddingVector::from_unit(std::vector<double> values) { return normalize(values); }

inline double cosine_sim(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw Error(Errc::dimension_mismatch, std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) dot += a[i] * b[i];
  return dot;
}

/// Row-major N x M matrix of cosine similarities, queries by targets.
struct SimilarityMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> entries;
  std::vector<std::string> row_ids;
  std::vector<std::string> col_ids;

  double at(std::size_t r, std::size_t c) const { return entries[r * cols + c]; }
  double& at(std::size_t r, std::size_t c) { return entries[r * cols + c]; }

  static SimilarityMatrix zeros(std::size_t rows, std::size_t cols) {
    SimilarityMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.entries.assign(rows * cols, 0.0);
    return m;
  }
};

inline SimilarityMatrix similarity_matrix(std::span<const EmbeddingVector> queries,
                                          std::span<const EmbeddingVector> targets) {
  SimilarityMatrix m = SimilarityMatrix::zeros(queries.size(), targets.size());
  for (std::size_t r = 0; r < queries.size(); ++r) {
    for (std::size_t c = 0; c < targets.size(); ++c) m.at(r, c) = cosine_sim(queries[r], targets[c]);
  }
  return m;
}

// ---------------------------------------------------------------------------
// InfoNCE
// ---------------------------------------------------------------------------

/// Contrastive temperature used when a batch does not set one.
inline constexpr double kDefaultContrastiveTemperature = 0.05;

struct ContrastiveBatch {
  std::vector<EmbeddingVector> queries;
  std::vector<EmbeddingVector> targets;
  std::vector<std::size_t> positives;  // positives[i] indexes targets
  double temperature = kDefaultContrastiveTemperature;
  /// Source dataset per query row; when set, all entries must agree.
  std::vector<std::string> dataset_ids;
};

struct InfoNceResult {
  double loss = 0.0;
  SimilarityMatrix grad;  // d loss / d similarity
};

/// Loss and gradient from a precomputed similarity matrix. Every column other
/// than the row's positive is an in-batch negative.
inline InfoNceResult info_nce(const SimilarityMatrix& sims, std::span<const std::size_t> positives,
                              double temperature) {
  if (sims.rows < 2 || sims.cols < 2) {
    throw Error(Errc::singleton_batch, "InfoNCE needs at least 2 rows and 2 targets to have negatives");
  }
  if (positives.size() != sims.rows) {
    throw Error(Errc::shape_mismatch, "one positive index per row required");
  }
  if (!(temperature > 0.0)) throw Error(Errc::invalid_argument, "temperature must be > 0");

  InfoNceResult out;
  out.grad = SimilarityMatrix::zeros(sims.rows, sims.cols);
  out.grad.row_ids = sims.row_ids;
  out.grad.col_ids = sims.col_ids;
  const double inv_n = 1.0 / static_cast<double>(sims.rows);
  std::vector<double> logits(sims.cols);
  for (std::size_t r = 0; r < sims.rows; ++r) {
    const std::size_t pos = positives[r];
    if (pos >= sims.cols) throw Error(Errc::index_out_of_range, "positive index " + std::to_string(pos));
    double max_logit = -INFINITY;
    for (std::size_t c = 0; c < sims.cols; ++c) {
      logits[c] = sims.at(r, c) / temperature;
      max_logit = std::max(max_logit, logits[c]);
    }
    double denom = 0.0;
    for (std::size_t c = 0; c < sims.cols; ++c) denom += std::exp(logits[c] - max_logit);
    const double log_z = max_logit + std::log(denom);
    out.loss -= (logits[pos] - log_z) * inv_n;
    for (std::size_t c = 0; c < sims.cols; ++c) {
      const double p = std::exp(logits[c] - log_z);
      out.grad.at(r, c) = (p - (c == pos ? 1.0 : 0.0)) * inv_n / temperature;
    }
  }
  return out;
}

inline InfoNceResult info_nce(const ContrastiveBatch& batch) {
  if (!batch.dataset_ids.empty()) {
    if (batch.dataset_ids.size() != batch.queries.size()) {
      throw Error(Errc::shape_mismatch, "dataset_ids must have one entry per query");
    }
    for (const auto& id : batch.dataset_ids) {
      if (id != batch.dataset_ids.front()) {
        throw Error(Errc::mixed_dataset_batch, "'" + id + "' vs '" + batch.dataset_ids.front() + "'");
      }
    }
  }
  return info_nce(similarity_matrix(batch.queries, batch.targets), batch.positives, batch.temperature);
}

// ---------------------------------------------------------------------------
// Toy embedder
// ---------------------------------------------------------------------------

/// Boolean mask over embedding dimensions.
using CueMask = std::vector<bool>;

/// Deterministic stand-in for a frozen embedder.
///
/// Each non-empty segment of the input contributes a base vector: the
/// registered vector when the segment is a known handle, otherwise a
/// pseudo-random Gaussian vector seeded by the FNV-1a hash of its bytes. The
/// T-CoT segment is scaled by `tcot_weight`. The sum is masked and normalized.
class ToyEmbedder {
 public:
  explicit ToyEmbedder(std::size_t dim, double tcot_weight = 1.0) : dim_(dim), tcot_weight_(tcot_weight) {
    if (dim == 0) throw Error(Errc::invalid_argument, "embedding dimension must be >= 1");
  }

  std::size_t dim() const noexcept { return dim_; }

  void register_handle(std::string handle, std::vector<double> features) {
    if (features.size() != dim_) throw Error(Errc::dimension_mismatch, "handle '" + handle + "'");
    handles_.insert_or_assign(std::move(handle), std::move(features));
  }

  std::vector<double> features(const tcot::EmbedderInput& input) const {
    std::vector<double> acc(dim_, 0.0);
    const auto add = [&](const std::string& segment, double weight) {
      if (segment.empty() || weight == 0.0) return;
      if (auto it = handles_.find(segment); it != handles_.end()) {
        for (std::size_t i = 0; i < dim_; ++i) acc[i] += weight * it->second[i];
        return;
      }
      detail::Rng rng(detail::fnv1a64(segment));
      for (std::size_t i = 0; i < dim_; ++i) acc[i] += weight * rng.normal();
    };
    add(input.text_part, 1.0);
    add(input.image_part, 1.0);
    add(input.video_part, 1.0);
    add(input.tcot, tcot_weight_);
    return acc;
  }

  EmbeddingVector embed(const tcot::EmbedderInput& input, const CueMask& mask) const {
    if (mask.size() != dim_) throw Error(Errc::dimension_mismatch, "mask size " + std::to_string(mask.size()));
    if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; })) {
      throw Error(Errc::empty_mask, "cue mask selects no dimension");
    }
    std::vector<double> f = features(input);
    for (std::size_t i = 0; i < dim_; ++i) {
      if (!mask[i]) f[i] = 0.0;
    }
    return normalize(f);
  }

 private:
  std::size_t dim_;
  double tcot_weight_;
  std::map<std::string, std::vector<double>, std::less<>> handles_;
};

/// Hash-only toy embedder over mask.size() dimensions.
inline EmbeddingVector toy_embedder(const tcot::EmbedderInput& input, const CueMask& mask) {
  if (mask.empty()) throw Error(Errc::empty_mask, "cue mask is empty");
  return ToyEmbedder(mask.size()).embed(input, mask);
}

}  // namespace embedrl::embedding
