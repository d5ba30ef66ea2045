#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "sstap/data.hpp"
#include "sstap/error.hpp"
#include "sstap/postprocess.hpp"
#include "sstap/random.hpp"
#include "test_util.hpp"

using namespace sstap;

namespace {

ModelOutputs<double> flat_outputs(std::size_t T, std::size_t D, double value) {
  ModelOutputs<double> o;
  o.p_s.assign(T, value);
  o.p_e.assign(T, value);
  o.valid_mask = candidate_valid_mask(T, D);
  o.m_cc = Matrix<double>(D, T);
  o.m_cr = Matrix<double>(D, T);
  for (std::size_t k = 0; k < D * T; ++k) {
    if (o.valid_mask.data()[k]) o.m_cc.data()[k] = o.m_cr.data()[k] = 1.0;
  }
  return o;
}

std::vector<bool> naive_boundaries(const std::vector<double>& p) {
  const double mx = *std::max_element(p.begin(), p.end());
  std::vector<bool> out(p.size());
  for (std::size_t t = 0; t < p.size(); ++t) {
    const bool left = t == 0 || p[t] > p[t - 1];
    const bool right = t + 1 == p.size() || p[t] > p[t + 1];
    out[t] = (left && right) || p[t] > 0.5 * mx;
  }
  return out;
}

double naive_iou(const Proposal& a, const Proposal& b) {
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  return inter / ((a.end - a.start) + (b.end - b.start) - inter);
}

std::vector<Proposal> random_integer_proposals(Rng& rng, std::size_t n) {
  std::uniform_int_distribution<int> pos(0, 20);
  std::uniform_real_distribution<double> score(0.01, 1.0);
  std::vector<Proposal> out;
  while (out.size() < n) {
    int a = pos(rng), b = pos(rng);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    out.push_back({double(a), double(b), score(rng)});
  }
  return out;
}

// Greedy hard NMS where any positive overlap suppresses.
std::vector<Proposal> hard_nms(std::vector<Proposal> p) {
  std::sort(p.begin(), p.end(), [](const Proposal& a, const Proposal& b) { return a.score > b.score; });
  std::vector<Proposal> kept;
  for (const auto& q : p) {
    bool ok = true;
    for (const auto& k : kept) ok = ok && naive_iou(q, k) <= 0.0;
    if (ok) kept.push_back(q);
  }
  return kept;
}

}  // namespace

TEST(Decode, ConstantMapsGiveEveryPair) {
  const auto all = decode_candidates(flat_outputs(10, 10, 0.7));
  EXPECT_EQ(all.size(), 10u * 9u / 2u);
  // durations limited by D: pairs with e - s < D
  const auto clipped = decode_candidates(flat_outputs(10, 4, 0.7));
  std::size_t expect = 0;
  for (std::size_t s = 0; s < 10; ++s) {
    for (std::size_t e = s + 1; e < 10; ++e) expect += (e - s < 4);
  }
  EXPECT_EQ(clipped.size(), expect);
}

TEST(Decode, SharpPeaksGiveTopProposal) {
  auto o = flat_outputs(16, 16, 0.01);
  o.p_s[3] = 0.9;
  o.p_e[9] = 0.8;
  const auto props = decode_candidates(o);
  ASSERT_FALSE(props.empty());
  EXPECT_EQ(props[0].start, 3.0);
  EXPECT_EQ(props[0].end, 10.0);
  EXPECT_DOUBLE_EQ(props[0].score, 0.9 * 0.8);
}

TEST(Decode, EmptyBoundarySetGivesNoProposals) {
  auto o = flat_outputs(8, 8, 0.3);
  o.p_e.assign(8, 0.0);
  o.p_e[0] = 1.0;  // the only end candidate precedes every start
  o.p_s.assign(8, 0.0);
  o.p_s[5] = 1.0;
  EXPECT_TRUE(decode_candidates(o).empty());
}

TEST(Decode, MatchesBruteForceOverAllPairs) {
  Rng rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t T = 20, D = 12;
    auto o = flat_outputs(T, D, 0.0);
    for (auto& v : o.p_s) v = u(rng);
    for (auto& v : o.p_e) v = u(rng);
    for (std::size_t k = 0; k < D * T; ++k) {
      if (!o.valid_mask.data()[k]) continue;
      o.m_cc.data()[k] = u(rng);
      o.m_cr.data()[k] = u(rng);
    }
    const auto bs = naive_boundaries(o.p_s), be = naive_boundaries(o.p_e);
    std::vector<Proposal> expect;
    for (std::size_t s = 0; s < T; ++s) {
      for (std::size_t e = s + 1; e < T; ++e) {
        if (!bs[s] || !be[e] || e - s >= D) continue;
        expect.push_back({double(s), double(e + 1), o.p_s[s] * o.p_e[e] * o.m_cc(e - s, s) * o.m_cr(e - s, s)});
      }
    }
    std::sort(expect.begin(), expect.end(), [](const Proposal& a, const Proposal& b) {
      if (a.score != b.score) return a.score > b.score;
      return std::pair(a.start, a.end) < std::pair(b.start, b.end);
    });
    const auto got = decode_candidates(o);
    ASSERT_EQ(got, expect) << "trial " << trial;
    for (const auto& p : got) {
      EXPECT_GE(p.start, 0.0);
      EXPECT_LE(p.end, double(T));
      EXPECT_LE(p.end - p.start, double(D));
    }
  }
}

TEST(Decode, BoundaryCandidatesRule) {
  const std::vector<double> p{0.1, 0.3, 0.2, 0.25, 0.1, 0.9, 0.5};
  // local maxima at 1, 3, 5; above 0.45: 5, 6
  EXPECT_EQ(boundary_candidates(p), (std::vector<std::size_t>{1, 3, 5, 6}));
}

TEST(SoftNms, DisjointProposalsUnchanged) {
  std::vector<Proposal> in{{0, 2, 0.3}, {5, 7, 0.9}, {10, 12, 0.6}};
  const auto out = soft_nms(in);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0], in[1]);
  EXPECT_EQ(out[1], in[2]);
  EXPECT_EQ(out[2], in[0]);
}

TEST(SoftNms, GaussianDecayExample) {
  const std::vector<Proposal> in{{0, 10, 1.0}, {0, 8, 0.9}};  // iou 0.8
  const auto out = soft_nms(in, {0.4, 0.001, 100});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_NEAR(out[1].score, 0.9 * std::exp(-1.6), 1e-12);
  EXPECT_NEAR(out[1].score, 0.1817, 1e-4);
}

TEST(SoftNms, TinySigmaMatchesHardNms) {
  Rng rng(77);
  std::uniform_int_distribution<std::size_t> count(1, 20);
  for (int trial = 0; trial < 100; ++trial) {
    const auto props = random_integer_proposals(rng, count(rng));
    const auto soft = soft_nms(props, {1e-6, 0.001, 100});
    const auto hard = hard_nms(props);
    ASSERT_EQ(soft.size(), hard.size()) << "trial " << trial;
    for (std::size_t k = 0; k < hard.size(); ++k) EXPECT_EQ(soft[k], hard[k]);
  }
}

TEST(SoftNms, OutputInvariants) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto props = random_integer_proposals(rng, 20);
    const auto out = soft_nms(props);
    for (std::size_t k = 0; k < out.size(); ++k) {
      if (k > 0) {
        EXPECT_LE(out[k].score, out[k - 1].score);
      }
      const auto it = std::find_if(props.begin(), props.end(), [&](const Proposal& p) {
        return p.start == out[k].start && p.end == out[k].end && out[k].score <= p.score;
      });
      EXPECT_NE(it, props.end());
    }
  }
}

TEST(SoftNms, PermutationInvariant) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    auto props = random_integer_proposals(rng, 15);
    const auto a = soft_nms(props);
    std::shuffle(props.begin(), props.end(), rng);
    EXPECT_EQ(soft_nms(props), a);
  }
}

TEST(SoftNms, TiesBrokenByStartThenEnd) {
  const std::vector<Proposal> in{{4, 6, 0.5}, {0, 2, 0.5}, {0, 1, 0.5}};
  const auto out = soft_nms(in, {0.4, 0.0, 100});
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].end, 1.0);
}

TEST(SoftNms, LimitsAndErrors) {
  Rng rng(3);
  const auto props = random_integer_proposals(rng, 20);
  EXPECT_LE(soft_nms(props, {0.4, 0.0, 5}).size(), 5u);
  const auto floored = soft_nms(props, {0.4, 0.5, 100});
  for (const auto& p : floored) EXPECT_GE(p.score, 0.5);
  EXPECT_THROW(soft_nms(props, {0.0, 0.001, 100}), ArgumentError);
  EXPECT_THROW(soft_nms({{0, 1, -0.1}}), ArgumentError);
  EXPECT_TRUE(soft_nms({}).empty());
}

TEST(ProposalFile, RoundTrip) {
  test::TempDir dir;
  std::vector<VideoProposals> v{{"a", 10, {{0, 2.5, 0.75}, {1, 9, 0.125}}}, {"b", 20, {}}, {"c", 4, {{0, 4, 1.0}}}};
  write_proposals(v, dir / "p.txt");
  const auto back = read_proposals(dir / "p.txt");
  ASSERT_EQ(back.at("a").size(), 2u);
  EXPECT_EQ(back.at("a")[0], v[0].proposals[0]);
  EXPECT_EQ(back.at("a")[1], v[0].proposals[1]);
  EXPECT_EQ(back.at("c")[0], v[2].proposals[0]);
  EXPECT_EQ(back.count("b"), 0u);
  std::ifstream is(dir / "p.txt");
  std::string line;
  while (std::getline(is, line) && line.starts_with("#")) {
  }
  EXPECT_EQ(line.substr(0, 2), "a ");
  EXPECT_NE(line.find(" 0.25"), std::string::npos);  // normalized end 2.5 / 10
}

TEST(ProposalFile, MalformedLineIsFormatError) {
  test::TempDir dir;
  {
    std::ofstream os(dir / "p.txt");
    os << "# header\nvid 1 2 0.5 0.1 0.2\nvid 1 two 0.5 0.1 0.2\n";
  }
  EXPECT_THROW(read_proposals(dir / "p.txt"), FormatError);
  EXPECT_THROW(read_proposals(dir / "missing.txt"), IoError);
}
