#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The embedrl Authors

// Annotation prompt templates shipped under assets/prompts/ and a small
// {placeholder} renderer for them.

#include <array>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <string_view>

#include "embedrl/error.hpp"

namespace embedrl::prompts {

/// Asset file stems.
inline constexpr std::array<std::string_view, 8> kTemplateNames = {
    "relevance_judgment",      "text_to_image_reasoning",  "image_reasoning",
    "video_reasoning",         "text_to_video_reasoning",  "positive_text_reasoning",
    "positive_image_reasoning", "positive_video_reasoning",
};

inline std::string load_template(const std::filesystem::path& dir, std::string_view name) {
  const auto path = dir / (std::string(name) + ".txt");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot read " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Replaces `{key}` for every key in `values`; other braces are kept as is.
/// Throws if a key never occurs in the template.
inline std::string render(std::string_view tmpl, const std::map<std::string, std::string, std::less<>>& values) {
  std::string out(tmpl);
  for (const auto& [key, value] : values) {
    const std::string needle = "{" + key + "}";
    std::size_t pos = out.find(needle);
    if (pos == std::string::npos) throw Error(Errc::invalid_argument, "template has no placeholder " + needle);
    while (pos != std::string::npos) {
      out.replace(pos, needle.size(), value);
      pos = out.find(needle, pos + value.size());
    }
  }
  return out;
}

}  // namespace embedrl::prompts
