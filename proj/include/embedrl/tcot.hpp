#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The embedrl Authors

/**
 * @file tcot.hpp
 * @brief Traceability chain-of-thought (T-CoT) documents.
 *
 * A T-CoT trace has three tagged sections in fixed order:
 *
 *   <thinking> prose + cue objects </thinking>
 *   <rethink> prose </rethink>
 *   <answer> prose </answer>
 *
 * Cue objects are JSON objects embedded in the thinking span carrying one of
 * the keys `text_keywords` (list of strings), `bbox_2d` (boxes on a 0-1000
 * relative grid) or `key_frames` (1-based frame indices). Parsing lifts them
 * into typed CueBlocks and leaves the surrounding prose in `thinking`.
 *
 * Canonical form (what serialize_tcot emits): thinking prose, then each cue
 * rendered on the same line separated by one space. Parsing removes a cue
 * together with one directly preceding space, so parse(serialize(d)) == d for
 * any document whose free-text fields hold no tag strings and whose thinking
 * prose holds no cue-bearing JSON object.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <unordered_set>
#include <variant>
#include <vector>

#include <json.hpp>

#include "embedrl/error.hpp"

namespace embedrl::tcot {

enum class Modality { text, image, video };

inline std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::text: return "text";
    case Modality::image: return "image";
    case Modality::video: return "video";
  }
  return "text";
}

inline Modality modality_from_string(std::string_view s) {
  if (s == "text") return Modality::text;
  if (s == "image") return Modality::image;
  if (s == "video") return Modality::video;
  throw Error(Errc::invalid_argument, "unknown modality '" + std::string(s) + "'");
}

enum class CueKind { text_keywords, bbox_2d, key_frames };

inline std::string_view to_string(CueKind k) {
  switch (k) {
    case CueKind::text_keywords: return "text_keywords";
    case CueKind::bbox_2d: return "bbox_2d";
    case CueKind::key_frames: return "key_frames";
  }
  return "text_keywords";
}

/// The cue kind a document of this modality must carry.
constexpr CueKind required_cue(Modality m) noexcept {
  switch (m) {
    case Modality::text: return CueKind::text_keywords;
    case Modality::image: return CueKind::bbox_2d;
    case Modality::video: return CueKind::key_frames;
  }
  return CueKind::text_keywords;
}

/// Relative box on the 0-1000 grid; 0 <= x1 < x2 <= 1000, same for y.
struct BBox {
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  static constexpr int kScale = 1000;

  static bool valid(std::int64_t x1, std::int64_t y1, std::int64_t x2, std::int64_t y2) noexcept {
    return 0 <= x1 && x1 < x2 && x2 <= kScale && 0 <= y1 && y1 < y2 && y2 <= kScale;
  }

  static BBox make(int x1, int y1, int x2, int y2) {
    if (!valid(x1, y1, x2, y2)) {
      throw Error(Errc::invalid_bbox, "[" + std::to_string(x1) + "," + std::to_string(y1) + "," +
                                          std::to_string(x2) + "," + std::to_string(y2) +
                                          "] violates 0 <= x1 < x2 <= 1000, 0 <= y1 < y2 <= 1000");
    }
    return BBox{x1, y1, x2, y2};
  }

  bool operator==(const BBox&) const = default;
};

struct TextKeywords {
  std::vector<std::string> words;
  bool operator==(const TextKeywords&) const = default;
};

struct BBoxes {
  std::vector<BBox> boxes;
  bool operator==(const BBoxes&) const = default;
};

struct KeyFrames {
  std::vector<int> frames;
  bool operator==(const KeyFrames&) const = default;
};

using CueBlock = std::variant<TextKeywords, BBoxes, KeyFrames>;

inline CueKind cue_kind(const CueBlock& cue) noexcept { return static_cast<CueKind>(cue.index()); }

/// Number of evidence items (keywords, boxes or frames) in a cue block.
inline std::size_t cue_size(const CueBlock& cue) noexcept {
  return std::visit(
      [](const auto& c) -> std::size_t {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, TextKeywords>) return c.words.size();
        if constexpr (std::is_same_v<T, BBoxes>) return c.boxes.size();
        if constexpr (std::is_same_v<T, KeyFrames>) return c.frames.size();
      },
      cue);
}

struct TCotDocument {
  std::string thinking;
  std::vector<CueBlock> cues;
  std::string rethink;
  std::string answer;

  bool operator==(const TCotDocument&) const = default;
};

namespace tags {
inline constexpr std::string_view thinking_open = "<thinking>";
inline constexpr std::string_view thinking_close = "</thinking>";
inline constexpr std::string_view rethink_open = "<rethink>";
inline constexpr std::string_view rethink_close = "</rethink>";
inline constexpr std::string_view answer_open = "<answer>";
inline constexpr std::string_view answer_close = "</answer>";
inline constexpr std::array<std::string_view, 6> in_order = {
    thinking_open, thinking_close, rethink_open, rethink_close, answer_open, answer_close};
}  // namespace tags

// ---------------------------------------------------------------------------
// Cue rendering
// ---------------------------------------------------------------------------

inline std::string render_cue(const CueBlock& cue) {
  std::string out = "{\"";
  out += to_string(cue_kind(cue));
  out += "\": [";
  std::visit(
      [&out](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, TextKeywords>) {
          for (std::size_t i = 0; i < c.words.size(); ++i) {
            if (i) out += ", ";
            out += nlohmann::json(c.words[i]).dump();
          }
        } else if constexpr (std::is_same_v<T, BBoxes>) {
          for (std::size_t i = 0; i < c.boxes.size(); ++i) {
            const BBox& b = c.boxes[i];
            if (i) out += ", ";
            out += "[" + std::to_string(b.x1) + ", " + std::to_string(b.y1) + ", " +
                   std::to_string(b.x2) + ", " + std::to_string(b.y2) + "]";
          }
        } else {
          for (std::size_t i = 0; i < c.frames.size(); ++i) {
            if (i) out += ", ";
            out += std::to_string(c.frames[i]);
          }
        }
      },
      cue);
  out += "]}";
  return out;
}

inline std::string serialize_tcot(const TCotDocument& doc) {
  std::string out;
  out += tags::thinking_open;
  out += doc.thinking;
  for (std::size_t i = 0; i < doc.cues.size(); ++i) {
    if (i > 0 || !doc.thinking.empty()) out += ' ';
    out += render_cue(doc.cues[i]);
  }
  out += tags::thinking_close;
  out += tags::rethink_open;
  out += doc.rethink;
  out += tags::rethink_close;
  out += tags::answer_open;
  out += doc.answer;
  out += tags::answer_close;
  return out;
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr std::array<std::string_view, 3> kCueKeys = {"text_keywords", "bbox_2d", "key_frames"};

inline bool mentions_cue_key(std::string_view fragment) {
  return std::any_of(kCueKeys.begin(), kCueKeys.end(),
                     [&](std::string_view key) { return fragment.find(key) != std::string_view::npos; });
}

/// Index one past the '}' matching the '{' at `open`, honouring JSON string
/// literals; npos when the object is unterminated.
inline std::size_t match_brace(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

inline std::string trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

inline std::optional<std::int64_t> as_integer(const nlohmann::ordered_json& v) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9.0e15) return static_cast<std::int64_t>(d);
  }
  return std::nullopt;
}

inline BBox parse_box(const nlohmann::ordered_json& v) {
  if (!v.is_array() || v.size() != 4) {
    throw Error(Errc::invalid_bbox, "box must be an array of 4 integers, got " + v.dump());
  }
  std::array<std::int64_t, 4> c{};
  for (std::size_t i = 0; i < 4; ++i) {
    const auto n = as_integer(v[i]);
    if (!n) throw Error(Errc::invalid_bbox, "non-integer coordinate in " + v.dump());
    c[i] = *n;
  }
  if (!BBox::valid(c[0], c[1], c[2], c[3])) {
    throw Error(Errc::invalid_bbox, v.dump() + " violates 0 <= x1 < x2 <= 1000, 0 <= y1 < y2 <= 1000");
  }
  return BBox{static_cast<int>(c[0]), static_cast<int>(c[1]), static_cast<int>(c[2]), static_cast<int>(c[3])};
}

inline CueBlock parse_cue_value(std::string_view key, const nlohmann::ordered_json& v, std::size_t position) {
  const auto malformed = [&](const std::string& reason) {
    return Error(Errc::malformed_cue, "at offset " + std::to_string(position) + ": " + reason);
  };
  if (key == "text_keywords") {
    if (!v.is_array()) throw malformed("text_keywords must be a list of strings");
    if (v.empty()) throw malformed("text_keywords list is empty");
    TextKeywords kw;
    for (const auto& w : v) {
      if (!w.is_string()) throw malformed("text_keywords entry is not a string: " + w.dump());
      std::string t = trim(w.get<std::string>());
      if (t.empty()) throw malformed("text_keywords entry is blank");
      kw.words.push_back(std::move(t));
    }
    return kw;
  }
  if (key == "bbox_2d") {
    if (!v.is_array() || v.empty()) throw Error(Errc::invalid_bbox, "bbox_2d must be a non-empty list");
    BBoxes boxes;
    if (v[0].is_number()) {
      boxes.boxes.push_back(parse_box(v));  // single [x1, y1, x2, y2]
    } else {
      for (const auto& b : v) boxes.boxes.push_back(parse_box(b));
    }
    return boxes;
  }
  // key_frames
  if (!v.is_array() || v.empty()) throw Error(Errc::invalid_key_frame, "key_frames must be a non-empty list");
  KeyFrames kf;
  std::unordered_set<int> seen;
  for (const auto& f : v) {
    const auto n = as_integer(f);
    if (!n) throw Error(Errc::invalid_key_frame, "non-integer frame index " + f.dump());
    if (*n < 1 || *n > INT32_MAX) throw Error(Errc::invalid_key_frame, "frame index " + f.dump() + " is not a positive 1-based index");
    if (seen.insert(static_cast<int>(*n)).second) kf.frames.push_back(static_cast<int>(*n));
  }
  return kf;
}

struct ExtractedCues {
  std::string prose;
  std::vector<CueBlock> cues;
};

/// Lifts cue objects out of a span. With `strict`, malformed cue objects throw;
/// otherwise they stay in the prose. `base` offsets reported positions.
inline ExtractedCues extract_cues(std::string_view span, std::size_t base, bool strict) {
  ExtractedCues out;
  std::size_t i = 0;
  while (i < span.size()) {
    const std::size_t open = span.find('{', i);
    if (open == std::string_view::npos) {
      out.prose.append(span.substr(i));
      break;
    }
    out.prose.append(span.substr(i, open - i));
    const std::size_t end = match_brace(span, open);
    if (end == std::string_view::npos) {
      if (strict && mentions_cue_key(span.substr(open))) {
        throw Error(Errc::malformed_cue, "at offset " + std::to_string(base + open) + ": unterminated cue object");
      }
      out.prose.push_back('{');
      i = open + 1;
      continue;
    }
    const std::string_view fragment = span.substr(open, end - open);
    if (!mentions_cue_key(fragment)) {
      out.prose.append(fragment);
      i = end;
      continue;
    }
    nlohmann::ordered_json obj = nlohmann::ordered_json::parse(fragment, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded() || !obj.is_object()) {
      if (strict) throw Error(Errc::malformed_cue, "at offset " + std::to_string(base + open) + ": invalid JSON");
      out.prose.append(fragment);
      i = end;
      continue;
    }
    std::vector<CueBlock> found;
    for (const auto& [key, value] : obj.items()) {
      if (std::find(kCueKeys.begin(), kCueKeys.end(), key) == kCueKeys.end()) continue;
      if (strict) {
        found.push_back(parse_cue_value(key, value, base + open));
      } else {
        try {
          found.push_back(parse_cue_value(key, value, base + open));
        } catch (const Error&) {
        }
      }
    }
    if (found.empty()) {
      // The key only appeared inside a string value or a nested object.
      out.prose.append(fragment);
    } else {
      if (!out.prose.empty() && out.prose.back() == ' ') out.prose.pop_back();
      for (auto& c : found) out.cues.push_back(std::move(c));
    }
    i = end;
  }
  return out;
}

}  // namespace detail

/// Parses a raw T-CoT trace. Each of the six tags must occur exactly once and
/// in order; cue blocks are lifted from the thinking span only.
inline TCotDocument parse_tcot(std::string_view raw) {
  std::array<std::size_t, 6> pos{};
  for (std::size_t t = 0; t < tags::in_order.size(); ++t) {
    const std::string_view tag = tags::in_order[t];
    const std::size_t first = raw.find(tag);
    if (first == std::string_view::npos) throw Error(Errc::missing_tag, std::string(tag));
    pos[t] = first;
  }
  for (std::size_t t = 0; t < tags::in_order.size(); ++t) {
    const std::string_view tag = tags::in_order[t];
    if (raw.find(tag, pos[t] + tag.size()) != std::string_view::npos) {
      throw Error(Errc::duplicate_tag, std::string(tag));
    }
  }
  for (std::size_t t = 1; t < tags::in_order.size(); ++t) {
    if (pos[t] < pos[t - 1] + tags::in_order[t - 1].size()) {
      throw Error(Errc::tag_order_violation,
                  std::string(tags::in_order[t]) + " appears before " + std::string(tags::in_order[t - 1]) + " ends");
    }
  }
  const auto span = [&](std::size_t open_idx) {
    const std::size_t b = pos[open_idx] + tags::in_order[open_idx].size();
    return raw.substr(b, pos[open_idx + 1] - b);
  };

  TCotDocument doc;
  const std::size_t thinking_begin = pos[0] + tags::thinking_open.size();
  auto extracted = detail::extract_cues(span(0), thinking_begin, /*strict=*/true);
  doc.thinking = std::move(extracted.prose);
  doc.cues = std::move(extracted.cues);
  doc.rethink = std::string(span(2));
  doc.answer = std::string(span(4));
  return doc;
}

/// Well-formed cue objects found in rethink or answer; they are not lifted.
inline std::size_t count_stray_cues(const TCotDocument& doc) {
  return detail::extract_cues(doc.rethink, 0, false).cues.size() +
         detail::extract_cues(doc.answer, 0, false).cues.size();
}

// ---------------------------------------------------------------------------
// Format validation
// ---------------------------------------------------------------------------

enum class ViolationCode {
  parse_failure,        // raw text did not parse; detail carries the error
  missing_required_cue, // no cue of the modality's kind
  empty_answer,
  cue_outside_thinking, // warning only
};

inline std::string_view to_string(ViolationCode v) {
  switch (v) {
    case ViolationCode::parse_failure: return "ParseFailure";
    case ViolationCode::missing_required_cue: return "MissingRequiredCue";
    case ViolationCode::empty_answer: return "EmptyAnswer";
    case ViolationCode::cue_outside_thinking: return "CueOutsideThinking";
  }
  return "Unknown";
}

struct Violation {
  ViolationCode code;
  std::string detail;
  bool blocking = true;

  bool operator==(const Violation&) const = default;
};

struct FormatReport {
  bool compliant = false;
  std::vector<Violation> violations;
};

/// Compliant iff the document carries at least one cue of the kind its
/// modality requires and a non-blank answer. Cues of other kinds are allowed.
inline FormatReport validate_format(const TCotDocument& doc, Modality modality) {
  FormatReport report;
  const CueKind need = required_cue(modality);
  const bool has_required = std::any_of(doc.cues.begin(), doc.cues.end(),
                                        [need](const CueBlock& c) { return cue_kind(c) == need; });
  if (!has_required) {
    report.violations.push_back({ViolationCode::missing_required_cue, std::string(to_string(need)), true});
  }
  if (detail::trim(doc.answer).empty()) {
    report.violations.push_back({ViolationCode::empty_answer, "", true});
  }
  if (const std::size_t stray = count_stray_cues(doc); stray > 0) {
    report.violations.push_back(
        {ViolationCode::cue_outside_thinking, std::to_string(stray) + " cue object(s) ignored", false});
  }
  report.compliant = std::none_of(report.violations.begin(), report.violations.end(),
                                  [](const Violation& v) { return v.blocking; });
  return report;
}

/// Parse + validate in one step; a parse error becomes a blocking violation.
inline FormatReport validate_raw(std::string_view raw, Modality modality) {
  try {
    return validate_format(parse_tcot(raw), modality);
  } catch (const Error& e) {
    FormatReport report;
    report.violations.push_back({ViolationCode::parse_failure, e.what(), true});
    return report;
  }
}

// ---------------------------------------------------------------------------
// Evidence geometry
// ---------------------------------------------------------------------------

struct PixelRect {
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  int width() const noexcept { return x2 - x1; }
  int height() const noexcept { return y2 - y1; }
  bool operator==(const PixelRect&) const = default;
};

namespace detail {

// round(v * extent / 1000), half away from zero; v and extent are non-negative.
inline int scale_coordinate(int v, int extent) {
  const std::int64_t num = 2LL * v * extent + BBox::kScale;
  return static_cast<int>(num / (2LL * BBox::kScale));
}

inline void widen_to_one(int& lo, int& hi, int extent) {
  lo = std::clamp(lo, 0, extent);
  hi = std::clamp(hi, 0, extent);
  if (lo < hi) return;
  if (lo < extent) {
    hi = lo + 1;
  } else {
    lo = extent - 1;
    hi = extent;
  }
}

}  // namespace detail

/// Maps a relative box to pixel coordinates of a width x height image. Boxes
/// that collapse after rounding are widened to one pixel inside the image.
inline PixelRect bbox_to_pixels(const BBox& b, int width, int height) {
  if (width < 1 || height < 1) {
    throw Error(Errc::degenerate_crop,
                "image " + std::to_string(width) + "x" + std::to_string(height) + " has no pixel to crop");
  }
  PixelRect r{detail::scale_coordinate(b.x1, width), detail::scale_coordinate(b.y1, height),
              detail::scale_coordinate(b.x2, width), detail::scale_coordinate(b.y2, height)};
  detail::widen_to_one(r.x1, r.x2, width);
  detail::widen_to_one(r.y1, r.y2, height);
  return r;
}

/// Validates 1-based keyframe indices against a clip of `frame_count` frames;
/// returns them sorted and deduplicated.
inline std::vector<int> select_keyframes(std::span<const int> indices, int frame_count) {
  if (frame_count < 1) throw Error(Errc::invalid_argument, "frame_count must be >= 1");
  std::vector<int> out(indices.begin(), indices.end());
  for (int i : out) {
    if (i < 1 || i > frame_count) {
      throw Error(Errc::index_out_of_range, std::to_string(i) + " not in [1, " + std::to_string(frame_count) + "]");
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Embedder input
// ---------------------------------------------------------------------------

/// Input sequence for the embedder: text, image, video, T-CoT, then the
/// terminal <emb> marker whose state becomes the embedding. Media parts are
/// opaque handles.
struct EmbedderInput {
  static constexpr std::string_view emb_marker = "<emb>";

  std::string text_part;
  std::string image_part;
  std::string video_part;
  std::string tcot;

  /// Non-empty segments in canonical order, marker last.
  std::vector<std::string_view> segments() const {
    std::vector<std::string_view> out;
    for (const std::string* s : {&text_part, &image_part, &video_part, &tcot}) {
      if (!s->empty()) out.emplace_back(*s);
    }
    out.push_back(emb_marker);
    return out;
  }

  std::string flatten() const {
    std::string out;
    for (std::string_view s : segments()) {
      if (!out.empty()) out += '\n';
      out += s;
    }
    return out;
  }

  bool operator==(const EmbedderInput&) const = default;
};

inline EmbedderInput assemble_embedder_input(std::string text, std::string image, std::string video,
                                             const TCotDocument& doc) {
  if (text.empty() && image.empty() && video.empty()) {
    throw Error(Errc::empty_input, "text, image and video segments are all empty");
  }
  return EmbedderInput{std::move(text), std::move(image), std::move(video), serialize_tcot(doc)};
}

}  // namespace embedrl::tcot
