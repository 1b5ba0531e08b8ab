#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The embedrl Authors

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace embedrl {

enum class Errc {
  // T-CoT grammar
  missing_tag,
  tag_order_violation,
  duplicate_tag,
  malformed_cue,
  invalid_bbox,
  invalid_key_frame,
  degenerate_crop,
  index_out_of_range,
  empty_input,
  // vectors and contrastive loss
  zero_vector,
  dimension_mismatch,
  singleton_batch,
  empty_mask,
  mixed_dataset_batch,
  // rewards
  no_negatives,
  unknown_positive,
  empty_candidates,
  discriminator_failure,
  // policy optimization
  unknown_context,
  incomplete_group,
  shape_mismatch,
  // simulation
  bad_config,
  unknown_action,
  // data pipeline
  unknown_modality_class,
  missing_verdict,
  sample_too_large,
  all_exhausted,
  invalid_weight,
  // metrics
  missing_judgment,
  no_relevant,
  too_few_candidates,
  // plumbing
  invalid_argument,
  io_error,
  parse_error,
};

constexpr std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::missing_tag: return "MissingTag";
    case Errc::tag_order_violation: return "TagOrderViolation";
    case Errc::duplicate_tag: return "DuplicateTag";
    case Errc::malformed_cue: return "MalformedCue";
    case Errc::invalid_bbox: return "InvalidBBox";
    case Errc::invalid_key_frame: return "InvalidKeyFrame";
    case Errc::degenerate_crop: return "DegenerateCrop";
    case Errc::index_out_of_range: return "IndexOutOfRange";
    case Errc::empty_input: return "EmptyInput";
    case Errc::zero_vector: return "ZeroVector";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::singleton_batch: return "SingletonBatch";
    case Errc::empty_mask: return "EmptyMask";
    case Errc::mixed_dataset_batch: return "MixedDatasetBatch";
    case Errc::no_negatives: return "NoNegatives";
    case Errc::unknown_positive: return "UnknownPositive";
    case Errc::empty_candidates: return "EmptyCandidates";
    case Errc::discriminator_failure: return "DiscriminatorFailure";
    case Errc::unknown_context: return "UnknownContext";
    case Errc::incomplete_group: return "IncompleteGroup";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::bad_config: return "BadConfig";
    case Errc::unknown_action: return "UnknownAction";
    case Errc::unknown_modality_class: return "UnknownModalityClass";
    case Errc::missing_verdict: return "MissingVerdict";
    case Errc::sample_too_large: return "SampleTooLarge";
    case Errc::all_exhausted: return "AllExhausted";
    case Errc::invalid_weight: return "InvalidWeight";
    case Errc::missing_judgment: return "MissingJudgment";
    case Errc::no_relevant: return "NoRelevant";
    case Errc::too_few_candidates: return "TooFewCandidates";
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::io_error: return "IOError";
    case Errc::parse_error: return "ParseError";
  }
  return "Unknown";
}

/// Single exception type for the library. `code()` identifies the failure;
/// `what()` reads "<Name>: <detail>".
class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + detail),
        code_(code),
        detail_(std::move(detail)) {}

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace embedrl
