#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sstap/error.hpp"
#include "sstap/eval.hpp"
#include "sstap/random.hpp"

using namespace sstap;

namespace {

AnnotationSet gt_of(std::initializer_list<Segment> s) { return AnnotationSet{std::vector<Segment>(s)}; }

// Direct recall at one (threshold, AN) cell.
double naive_recall(const std::vector<Proposal>& props, const AnnotationSet& gt, double theta, std::size_t an) {
  std::size_t hit = 0;
  for (const auto& g : gt.instances) {
    bool found = false;
    for (std::size_t k = 0; k < std::min(an, props.size()); ++k) {
      const auto& p = props[k];
      const double inter = std::max(0.0, std::min(p.end, g.end) - std::max(p.start, g.start));
      const double iou = inter / ((p.end - p.start) + (g.end - g.start) - inter);
      found = found || iou >= theta;
    }
    hit += found;
  }
  return static_cast<double>(hit) / static_cast<double>(gt.size());
}

}  // namespace

TEST(Thresholds, Grids) {
  const auto a = activitynet_thresholds();
  ASSERT_EQ(a.size(), 10u);
  EXPECT_EQ(a.front(), 0.5);
  EXPECT_EQ(a.back(), 0.95);
  EXPECT_EQ(a[3], 0.65);
  const auto t = thumos_thresholds();
  ASSERT_EQ(t.size(), 11u);
  EXPECT_EQ(t.back(), 1.0);
  EXPECT_EQ(an_grid(3), (std::vector<std::size_t>{1, 2, 3}));
}

TEST(RecallMatrix, WorkedExample) {
  const std::vector<Proposal> props{{12, 28, 0.9}};
  const auto m = recall_matrix(props, gt_of({{10, 30}}), {0.5, 0.75, 0.95}, {1});
  EXPECT_EQ(m(0, 0), 1.0);
  EXPECT_EQ(m(1, 0), 1.0);
  EXPECT_EQ(m(2, 0), 0.0);
}

TEST(RecallMatrix, EmptyPerfectAndErrors) {
  const auto gt = gt_of({{0, 5}, {10, 20}});
  const auto th = activitynet_thresholds();
  const auto empty = recall_matrix({}, gt, th, {1, 5});
  for (double v : empty.values()) EXPECT_EQ(v, 0.0);
  const std::vector<Proposal> perfect{{0, 5, 0.9}, {10, 20, 0.8}};
  const auto m = recall_matrix(perfect, gt, th, {1, 2, 3});
  for (std::size_t k = 0; k < th.size(); ++k) {
    EXPECT_EQ(m(k, 0), 0.5);
    EXPECT_EQ(m(k, 1), 1.0);
    EXPECT_EQ(m(k, 2), 1.0);
  }
  const std::vector<Proposal> unsorted{{0, 5, 0.1}, {10, 20, 0.8}};
  EXPECT_THROW(recall_matrix(unsorted, gt, th, {1}), ContractError);
  EXPECT_THROW(recall_matrix(perfect, AnnotationSet{}, th, {1}), ArgumentError);
}

TEST(ArAtAn, WorkedExampleAndAveraging) {
  std::map<std::string, std::vector<Proposal>> props{{"v", {{12, 28, 0.9}}}};
  const auto res = evaluate_dataset(props, {{"v", gt_of({{10, 30}})}}, {0.5, 0.75, 0.95}, {1});
  EXPECT_NEAR(*ar_at_an(res, 1), 2.0 / 3.0, 1e-15);
  EXPECT_THROW(ar_at_an(res, 2), ArgumentError);

  std::map<std::string, std::vector<Proposal>> two{{"a", {{0, 10, 0.5}}}, {"b", {{50, 60, 0.5}}}};
  const auto r2 = evaluate_dataset(two, {{"a", gt_of({{0, 10}})}, {"b", gt_of({{0, 10}})}}, {0.5}, {1});
  EXPECT_EQ(*ar_at_an(r2, 1), 0.5);
}

TEST(ArAtAn, NoEligibleVideoIsAbsent) {
  const auto res = evaluate_dataset({}, {{"a", AnnotationSet{}}}, {0.5}, an_grid());
  EXPECT_EQ(res.video_ids.size(), 0u);
  EXPECT_FALSE(ar_at_an(res, 10).has_value());
  EXPECT_FALSE(auc(res).has_value());
}

TEST(ArAtAn, ThreeVideoFixtureMatchesExhaustiveComputation) {
  Rng rng(31);
  std::uniform_real_distribution<double> u(0.0, 30.0), sc(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::map<std::string, std::vector<Proposal>> props;
    std::vector<std::pair<std::string, AnnotationSet>> gts;
    for (const char* id : {"x", "y", "z"}) {
      auto& p = props[id];
      const std::size_t n = std::uniform_int_distribution<std::size_t>(0, 5)(rng);
      while (p.size() < n) {
        double a = u(rng), b = u(rng);
        if (a == b) continue;
        p.push_back({std::min(a, b), std::max(a, b), sc(rng)});
      }
      std::sort(p.begin(), p.end(), [](auto& l, auto& r) { return l.score > r.score; });
      AnnotationSet g;
      const std::size_t m = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
      while (g.size() < m) {
        double a = u(rng), b = u(rng);
        if (a == b) continue;
        g.instances.push_back({std::min(a, b), std::max(a, b)});
      }
      gts.emplace_back(id, g);
    }
    const auto th = activitynet_thresholds();
    const auto res = evaluate_dataset(props, gts, th, an_grid());
    double auc_sum = 0.0;
    for (std::size_t an = 1; an <= 100; ++an) {
      double ar = 0.0;
      for (const auto& [id, g] : gts) {
        double r = 0.0;
        for (double t : th) r += naive_recall(props[id], g, t, an);
        ar += r / static_cast<double>(th.size());
      }
      ar /= 3.0;
      EXPECT_NEAR(*ar_at_an(res, an), ar, 1e-12);
      auc_sum += ar;
    }
    EXPECT_NEAR(*auc(res), auc_sum, 1e-10);  // 100 * mean = sum over 100 points
  }
}

TEST(Auc, ConstantAndZeroCurves) {
  // one gt, one proposal with iou 0.75 vs thresholds {0.5, 0.6, 0.7, 0.8}: AR = 0.75 at every AN
  std::map<std::string, std::vector<Proposal>> props{{"v", {{0, 7.5, 1.0}}}};
  const auto res = evaluate_dataset(props, {{"v", gt_of({{0, 10}})}}, {0.5, 0.6, 0.7, 0.8}, an_grid());
  EXPECT_NEAR(*auc(res), 75.0, 1e-12);
  const auto zero = evaluate_dataset({}, {{"v", gt_of({{0, 10}})}}, {0.5}, an_grid());
  EXPECT_EQ(*auc(zero), 0.0);
  const auto small = evaluate_dataset(props, {{"v", gt_of({{0, 10}})}}, {0.5}, an_grid(50));
  EXPECT_THROW(auc(small), ArgumentError);
}

TEST(Auc, PerfectRecallGivesHundred) {
  std::map<std::string, std::vector<Proposal>> props{{"v", {{0, 10, 1.0}}}};
  const auto res = evaluate_dataset(props, {{"v", gt_of({{0, 10}})}}, thumos_thresholds(), an_grid());
  EXPECT_EQ(*auc(res), 100.0);
}

TEST(Metrics, MonotoneInAnAndThreshold) {
  Rng rng(4);
  std::uniform_real_distribution<double> u(0.0, 50.0), sc(0.0, 1.0);
  std::vector<Proposal> p;
  while (p.size() < 60) {
    double a = u(rng), b = u(rng);
    if (a != b) p.push_back({std::min(a, b), std::max(a, b), sc(rng)});
  }
  std::sort(p.begin(), p.end(), [](auto& l, auto& r) { return l.score > r.score; });
  const auto m = recall_matrix(p, gt_of({{3, 9}, {20, 41}, {44, 47}}), thumos_thresholds(), an_grid());
  for (std::size_t k = 0; k < m.rows(); ++k) {
    for (std::size_t a = 0; a < m.cols(); ++a) {
      if (a > 0) {
        EXPECT_GE(m(k, a), m(k, a - 1));
      }
      if (k > 0) {
        EXPECT_LE(m(k, a), m(k - 1, a));
      }
    }
  }
}

TEST(Report, FieldsAndCsv) {
  std::map<std::string, std::vector<Proposal>> props{{"v", {{0, 7.5, 1.0}}}};
  const auto res = evaluate_dataset(props, {{"v", gt_of({{0, 10}})}}, {0.5, 0.6, 0.7, 0.8}, an_grid());
  const auto rep = make_report(res);
  EXPECT_EQ(rep.videos, 1u);
  EXPECT_NEAR(*rep.ar10, 0.75, 1e-15);
  EXPECT_NEAR(*rep.auc, 75.0, 1e-12);
  EXPECT_EQ(rep.curve.size(), 100u);
  EXPECT_EQ(rep.recall_by_threshold.size(), 4u);
  EXPECT_EQ(rep.recall_by_threshold[3][0], 0.0);
  const auto csv = rep.curve_csv();
  EXPECT_EQ(csv.substr(0, 6), "AN,AR\n");
  EXPECT_NE(rep.to_json().find("\"AUC\""), std::string::npos);
}
