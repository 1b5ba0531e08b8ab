#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The embedrl Authors

// Random inputs shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <string>

#include "embedrl/detail/random.hpp"
#include "embedrl/tcot.hpp"

namespace gen {

/// Arbitrary T-CoT document: prose with quotes and brackets, 0-3 cues of any
/// kind, keywords with braces and escapes, boxes anywhere on the grid.
inline embedrl::tcot::TCotDocument random_tcot(embedrl::detail::Rng& rng) {
  using namespace embedrl::tcot;
  static const std::string prose_chars = "abcdefghijklmnopqrstuvwxyz ABCXYZ0123456789.,;:!?'-\"()[]";
  static const std::string word_chars = "abcdefghijklmnopqrstuvwxyz0123456789 -'\"{}\\/";
  const auto text = [&](const std::string& alphabet, std::size_t max_len) {
    std::string s;
    const std::size_t n = rng.below(max_len + 1);
    for (std::size_t i = 0; i < n; ++i) s += alphabet[rng.below(alphabet.size())];
    return s;
  };
  TCotDocument doc;
  doc.thinking = text(prose_chars, 40);
  const std::size_t n_cues = rng.below(4);
  for (std::size_t c = 0; c < n_cues; ++c) {
    switch (rng.below(3)) {
      case 0: {
        TextKeywords kw;
        const std::size_t n = 1 + rng.below(4);
        for (std::size_t i = 0; i < n; ++i) kw.words.push_back("w" + text(word_chars, 8) + "z");
        doc.cues.push_back(kw);
        break;
      }
      case 1: {
        BBoxes b;
        const std::size_t n = 1 + rng.below(3);
        for (std::size_t i = 0; i < n; ++i) {
          const int x1 = static_cast<int>(rng.below(1000)), y1 = static_cast<int>(rng.below(1000));
          const int x2 = x1 + 1 + static_cast<int>(rng.below(1000 - x1));
          const int y2 = y1 + 1 + static_cast<int>(rng.below(1000 - y1));
          b.boxes.push_back(BBox::make(x1, y1, x2, y2));
        }
        doc.cues.push_back(b);
        break;
      }
      default: {
        KeyFrames k;
        int f = 0;
        const std::size_t n = 1 + rng.below(5);
        for (std::size_t i = 0; i < n; ++i) k.frames.push_back(f += 1 + static_cast<int>(rng.below(7)));
        if (rng.below(2)) std::reverse(k.frames.begin(), k.frames.end());
        doc.cues.push_back(k);
      }
    }
  }
  doc.rethink = text(prose_chars, 30);
  doc.answer = text(prose_chars, 30);
  return doc;
}

}  // namespace gen
