#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "sstap/error.hpp"
#include "sstap/pretext.hpp"
#include "test_util.hpp"

using namespace sstap;

TEST(Permutations, LexicographicEnumeration) {
  EXPECT_EQ(factorial(0), 1u);
  EXPECT_EQ(factorial(4), 24u);
  const std::vector<std::size_t> id{0, 1}, sw{1, 0};
  EXPECT_EQ(permutation_index(id), 0u);
  EXPECT_EQ(permutation_index(sw), 1u);
  std::vector<std::size_t> p{0, 1, 2, 3};
  std::size_t rank = 0;
  do {
    EXPECT_EQ(permutation_index(p), rank);
    EXPECT_EQ(permutation_from_index(rank, 4), p);
    ++rank;
  } while (std::next_permutation(p.begin(), p.end()));
  EXPECT_EQ(rank, 24u);
  EXPECT_THROW(permutation_from_index(24, 4), ArgumentError);
}

TEST(MaskFeatures, ZeroOmegaIsIdentity) {
  Rng rng(1);
  const auto f = test::random_matrix<double>(10, 4, 2);
  const auto m = mask_features(f, 0.0, rng);
  EXPECT_EQ(m.masked, f);
  EXPECT_EQ(std::accumulate(m.mask.begin(), m.mask.end(), 0), 0);
}

TEST(MaskFeatures, ExactCountAndUntouchedRows) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto f = test::random_matrix<double>(10, 5, rng());
    const auto m = mask_features(f, 0.3, rng);
    EXPECT_EQ(std::accumulate(m.mask.begin(), m.mask.end(), 0), 3);
    for (std::size_t t = 0; t < 10; ++t) {
      for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(m.masked(t, c), m.mask[t] ? 0.0 : f(t, c));
    }
  }
}

TEST(MaskFeatures, DeterministicAndRejectsBadOmega) {
  const auto f = test::random_matrix<float>(20, 3, 4);
  Rng a(8), b(8);
  EXPECT_EQ(mask_features(f, 0.4, a).mask, mask_features(f, 0.4, b).mask);
  EXPECT_THROW(mask_features(f, 1.0, a), ArgumentError);
  EXPECT_THROW(mask_features(f, -0.1, a), ArgumentError);
}

TEST(ReconLoss, Examples) {
  const auto f = test::random_matrix<double>(7, 3, 5);
  EXPECT_EQ(recon_loss(f, f), 0.0);
  auto g = f;
  for (auto& v : g.values()) v += 1.0;
  EXPECT_NEAR(recon_loss(g, f), 1.0, 1e-15);
}

TEST(ReconLoss, MatchesNaiveDoubleLoop) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto a = test::random_matrix<double>(11, 6, s);
    const auto b = test::random_matrix<double>(11, 6, s + 100);
    double acc = 0.0;
    for (std::size_t t = 0; t < 11; ++t) {
      for (std::size_t c = 0; c < 6; ++c) acc += (a(t, c) - b(t, c)) * (a(t, c) - b(t, c));
    }
    EXPECT_NEAR(recon_loss(a, b), acc / 66.0, 1e-12);
  }
}

TEST(ReconLoss, MaskedRowsVariantAndGradient) {
  const auto a = test::random_matrix<double>(6, 2, 1);
  const auto b = test::random_matrix<double>(6, 2, 2);
  const std::vector<std::uint8_t> rows{1, 0, 0, 1, 0, 0};
  double acc = 0.0;
  for (std::size_t t : {0u, 3u}) {
    for (std::size_t c = 0; c < 2; ++c) acc += (a(t, c) - b(t, c)) * (a(t, c) - b(t, c));
  }
  Matrix<double> grad(6, 2);
  EXPECT_NEAR(recon_loss(a, b, &grad, 2.0, &rows), acc / 4.0, 1e-14);
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t c = 0; c < 2; ++c) {
      const double expect = rows[t] ? 2.0 * 2.0 * (a(t, c) - b(t, c)) / 4.0 : 0.0;
      EXPECT_NEAR(grad(t, c), expect, 1e-14);
    }
  }
}

TEST(OrderSample, TwoClipSwap) {
  Matrix<double> f(8, 1);
  for (std::size_t t = 0; t < 8; ++t) f(t, 0) = static_cast<double>(t);
  Rng rng(1);
  bool seen[2] = {false, false};
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = make_order_sample(f, 2, rng);
    seen[s.label] = true;
    ASSERT_EQ(s.shuffled.rows(), 8u);
    for (std::size_t t = 0; t < 8; ++t) {
      const double expect = s.label == 0 ? double(t) : double((t + 4) % 8);
      EXPECT_EQ(s.shuffled(t, 0), expect);
    }
  }
  EXPECT_TRUE(seen[0] && seen[1]);
}

TEST(OrderSample, TruncatesToWholeClips) {
  const auto f = test::random_matrix<double>(10, 2, 3);
  Rng rng(2);
  const auto s = make_order_sample(f, 3, rng);
  EXPECT_EQ(s.shuffled.rows(), 9u);
  EXPECT_EQ(s.label, permutation_index(s.permutation));
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(s.shuffled(j * 3 + r, 1), f(s.permutation[j] * 3 + r, 1));
  }
  EXPECT_THROW(make_order_sample(f, 1, rng), ArgumentError);
  EXPECT_THROW(make_order_sample(f, 11, rng), ArgumentError);
}

TEST(OrderSample, LabelsUniformChiSquared) {
  // K = 3: 6 classes, 6000 draws; the 0.999 quantile of chi2(5) is 20.5.
  const auto f = test::random_matrix<double>(9, 1, 4);
  Rng rng(12345);
  std::vector<double> counts(6, 0.0);
  const int n = 6000;
  for (int k = 0; k < n; ++k) counts[make_order_sample(f, 3, rng).label] += 1.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - n / 6.0) * (c - n / 6.0) / (n / 6.0);
  EXPECT_LT(chi2, 20.5);
}

TEST(OrderLoss, Examples) {
  const std::vector<double> zero{0.0, 0.0}, sat{20.0, -20.0};
  EXPECT_NEAR(order_loss<double>(zero, 0), std::log(2.0), 1e-15);
  EXPECT_LT(order_loss<double>(sat, 0), 1e-8);
  EXPECT_THROW(order_loss<double>(zero, 2), ArgumentError);
}

TEST(OrderLoss, GradientMatchesFiniteDifferences) {
  std::vector<double> logits{0.3, -1.2, 2.0, 0.1, -0.5, 0.9};
  std::vector<double> grad(6, 0.0);
  order_loss<double>(logits, 4, grad);
  const double h = 1e-6;
  for (std::size_t k = 0; k < 6; ++k) {
    auto up = logits, dn = logits;
    up[k] += h;
    dn[k] -= h;
    const double num = (order_loss<double>(up, 4) - order_loss<double>(dn, 4)) / (2 * h);
    EXPECT_NEAR(grad[k], num, 1e-8);
  }
  // softmax - onehot sums to zero
  EXPECT_NEAR(std::accumulate(grad.begin(), grad.end(), 0.0), 0.0, 1e-14);
}
