// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The embedrl Authors

#include <cmath>
#include <filesystem>
#include <vector>

#include <gtest/gtest.h>

#include "embedrl/detail/random.hpp"
#include "embedrl/embedding.hpp"
#include "embedrl/embedding_io.hpp"
#include "oracles.hpp"

using namespace embedrl;
using namespace embedrl::embedding;

namespace {

template <class F>
Errc code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::invalid_argument;
}

SimilarityMatrix identity_sims(std::size_t n) {
  auto m = SimilarityMatrix::zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

std::vector<std::size_t> diagonal(std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  return p;
}

}  // namespace

TEST(Normalize, Examples) {
  const auto v = normalize(std::vector<double>{3.0, 4.0});
  EXPECT_DOUBLE_EQ(v[0], 0.6);
  EXPECT_DOUBLE_EQ(v[1], 0.8);
  const auto u = normalize(std::vector<double>{0.0, 1.0, 0.0});
  EXPECT_EQ(std::vector<double>(u.values().begin(), u.values().end()), (std::vector<double>{0.0, 1.0, 0.0}));
  EXPECT_EQ(code_of([] { normalize(std::vector<double>{0.0, 0.0}); }), Errc::zero_vector);
}

TEST(Normalize, UnitNormOnRandomVectors) {
  embedrl::detail::Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> v(1 + rng.below(64));
    for (double& x : v) x = rng.normal() * std::pow(10.0, static_cast<double>(rng.below(12)) - 6.0);
    const auto u = normalize(v);
    ASSERT_LE(std::abs(l2_norm(u.values()) - 1.0), 1e-6);
  }
}

TEST(CosineSim, Examples) {
  const auto a = normalize(std::vector<double>{1.0, 2.0, -0.5});
  const auto neg = normalize(std::vector<double>{-1.0, -2.0, 0.5});
  EXPECT_NEAR(cosine_sim(a, a), 1.0, 1e-12);
  EXPECT_NEAR(cosine_sim(a, neg), -1.0, 1e-12);
  EXPECT_NEAR(cosine_sim(normalize(std::vector<double>{1, 0}), normalize(std::vector<double>{0, 1})), 0.0, 1e-15);
  EXPECT_EQ(code_of([&] { cosine_sim(a, normalize(std::vector<double>{1, 0})); }), Errc::dimension_mismatch);
}

TEST(SimilarityMatrix, EntriesBoundedAndMatchOracle) {
  embedrl::detail::Rng rng(11);
  std::vector<EmbeddingVector> q, t;
  std::vector<std::vector<double>> raw_q, raw_t;
  for (int i = 0; i < 6; ++i) {
    std::vector<double> a(8), b(8);
    for (double& x : a) x = rng.normal();
    for (double& x : b) x = rng.normal();
    raw_q.push_back(a);
    raw_t.push_back(b);
    q.push_back(normalize(a));
    t.push_back(normalize(b));
  }
  const auto m = similarity_matrix(q, t);
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 6; ++c) {
      EXPECT_GE(m.at(r, c), -1.0 - 1e-6);
      EXPECT_LE(m.at(r, c), 1.0 + 1e-6);
      EXPECT_NEAR(m.at(r, c), oracle::cosine(raw_q[r], raw_t[c]), 1e-12);
    }
  }
}

TEST(InfoNce, ClosedForms) {
  EXPECT_NEAR(info_nce(identity_sims(2), diagonal(2), 1.0).loss, std::log(1.0 + std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(info_nce(identity_sims(2), diagonal(2), 1.0).loss, 0.31326, 1e-5);
  EXPECT_NEAR(info_nce(identity_sims(4), diagonal(4), 1.0).loss, std::log(1.0 + 3.0 / std::exp(1.0)), 1e-12);
  EXPECT_NEAR(info_nce(identity_sims(4), diagonal(4), 1.0).loss, 0.74366, 1e-5);
  for (std::size_t n : {2u, 3u, 7u}) {
    auto flat = SimilarityMatrix::zeros(n, n);
    for (double& e : flat.entries) e = 0.3;
    EXPECT_NEAR(info_nce(flat, diagonal(n), 0.05).loss, std::log(static_cast<double>(n)), 1e-12);
  }
}

TEST(InfoNce, GradientMatchesFiniteDifferences) {
  embedrl::detail::Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(5);
    const double tau = 0.05 + rng.uniform();
    auto sims = SimilarityMatrix::zeros(n, n);
    for (double& e : sims.entries) e = 2.0 * rng.uniform() - 1.0;
    const auto pos = diagonal(n);
    const auto res = info_nce(sims, pos, tau);
    const auto f = [&](const std::vector<double>& x) {
      auto m = sims;
      m.entries = x;
      return info_nce(m, pos, tau).loss;
    };
    for (std::size_t i = 0; i < sims.entries.size(); ++i) {
      const double fd = oracle::central_difference(f, sims.entries, i, 1e-5);
      ASSERT_LE(std::abs(fd - res.grad.entries[i]), 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(InfoNce, BatchRules) {
  EXPECT_EQ(code_of([] { info_nce(identity_sims(1), diagonal(1), 1.0); }), Errc::singleton_batch);
  ContrastiveBatch b;
  b.queries = {normalize(std::vector<double>{1, 0}), normalize(std::vector<double>{0, 1})};
  b.targets = b.queries;
  b.positives = {0, 1};
  b.dataset_ids = {"MSCOCO", "VisDial"};
  EXPECT_EQ(code_of([&] { info_nce(b); }), Errc::mixed_dataset_batch);
  b.dataset_ids = {"MSCOCO", "MSCOCO"};
  b.temperature = 1.0;
  EXPECT_NEAR(info_nce(b).loss, std::log(1.0 + std::exp(-1.0)), 1e-12);
}

TEST(ToyEmbedder, DeterministicAndMasked) {
  tcot::TCotDocument doc;
  doc.answer = "a";
  const auto input = tcot::assemble_embedder_input("a red car", "", "", doc);
  const CueMask all(16, true);
  EXPECT_EQ(toy_embedder(input, all), toy_embedder(input, all));

  CueMask lo(16, false), hi(16, false);
  for (std::size_t i = 0; i < 8; ++i) lo[i] = true;
  for (std::size_t i = 8; i < 16; ++i) hi[i] = true;
  EXPECT_EQ(cosine_sim(toy_embedder(input, lo), toy_embedder(input, hi)), 0.0);
  EXPECT_EQ(code_of([&] { toy_embedder(input, CueMask(16, false)); }), Errc::empty_mask);
}

TEST(ToyEmbedder, RegisteredHandles) {
  ToyEmbedder emb(4, 0.0);
  emb.register_handle("query:0001", {1.0, 2.0, 0.0, 0.0});
  tcot::TCotDocument doc;
  const auto v = emb.embed(tcot::assemble_embedder_input("query:0001", "", "", doc), CueMask(4, true));
  EXPECT_NEAR(v[0], 1.0 / std::sqrt(5.0), 1e-15);
  EXPECT_NEAR(v[1], 2.0 / std::sqrt(5.0), 1e-15);
}

TEST(EmbeddingDump, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "embedrl_dump_test";
  std::filesystem::create_directories(dir);
  std::vector<EmbeddingVector> vs{normalize(std::vector<double>{1, 2, 3}), normalize(std::vector<double>{-1, 0, 0.5})};
  const auto dump = make_dump({"a", "b"}, vs);
  write_dump(dump, dir / "e.json", dir / "e.bin");
  EXPECT_EQ(std::filesystem::file_size(dir / "e.bin"), 2u * 3u * 4u);
  const auto back = read_dump(dir / "e.json", dir / "e.bin");
  EXPECT_EQ(back.ids, dump.ids);
  EXPECT_EQ(back.values, dump.values);
  const auto by_id = back.by_id();
  EXPECT_NEAR(cosine_sim(by_id.at("a"), vs[0]), 1.0, 1e-6);

  std::filesystem::resize_file(dir / "e.bin", 20);
  EXPECT_EQ(code_of([&] { read_dump(dir / "e.json", dir / "e.bin"); }), Errc::parse_error);
  std::filesystem::remove_all(dir);
}
