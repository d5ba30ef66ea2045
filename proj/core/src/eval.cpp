#include "sstap/eval.hpp"

#include <algorithm>
#include <array>
#include <cstdio>

#include <json.hpp>

#include "sstap/error.hpp"

namespace sstap {

std::vector<double> threshold_grid(int lo_percent, int hi_percent, int step_percent) {
  if (step_percent <= 0 || lo_percent > hi_percent) throw ArgumentError("threshold_grid: empty or invalid range");
  std::vector<double> out;
  for (int p = lo_percent; p <= hi_percent; p += step_percent) out.push_back(static_cast<double>(p) / 100.0);
  return out;
}

std::vector<double> thumos_thresholds() { return threshold_grid(50, 100, 5); }
std::vector<double> activitynet_thresholds() { return threshold_grid(50, 95, 5); }

std::vector<std::size_t> an_grid(std::size_t max_an) {
  std::vector<std::size_t> out(max_an);
  for (std::size_t k = 0; k < max_an; ++k) out[k] = k + 1;
  return out;
}

Matrix<double> recall_matrix(const std::vector<Proposal>& props, const AnnotationSet& gt,
                             const std::vector<double>& thresholds, const std::vector<std::size_t>& an_values) {
  if (gt.empty()) throw ArgumentError("recall_matrix: empty ground truth");
  for (std::size_t k = 1; k < props.size(); ++k) {
    if (props[k].score > props[k - 1].score) throw ContractError("recall_matrix: proposals are not sorted by score");
  }
  // best[g][r]: highest iou of gt g among the top r+1 proposals
  const std::size_t n = props.size();
  std::vector<std::vector<double>> best(gt.size(), std::vector<double>(n, 0.0));
  for (std::size_t g = 0; g < gt.size(); ++g) {
    double run = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      run = std::max(run, iou_1d(gt.instances[g], {props[r].start, props[r].end}));
      best[g][r] = run;
    }
  }
  Matrix<double> out(thresholds.size(), an_values.size());
  for (std::size_t a = 0; a < an_values.size(); ++a) {
    const std::size_t top = std::min(an_values[a], n);
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
      std::size_t hit = 0;
      if (top > 0) {
        for (std::size_t g = 0; g < gt.size(); ++g) hit += best[g][top - 1] >= thresholds[k] ? 1 : 0;
      }
      out(k, a) = static_cast<double>(hit) / static_cast<double>(gt.size());
    }
  }
  return out;
}

DatasetResults evaluate_dataset(const std::map<std::string, std::vector<Proposal>>& proposals,
                                const std::vector<std::pair<std::string, AnnotationSet>>& ground_truth,
                                const std::vector<double>& thresholds, const std::vector<std::size_t>& an_values) {
  DatasetResults res;
  res.thresholds = thresholds;
  res.an_values = an_values;
  static const std::vector<Proposal> none;
  for (const auto& [id, gt] : ground_truth) {
    if (gt.empty()) continue;
    const auto it = proposals.find(id);
    res.video_ids.push_back(id);
    res.recalls.push_back(recall_matrix(it == proposals.end() ? none : it->second, gt, thresholds, an_values));
  }
  return res;
}

std::optional<double> ar_at_an(const DatasetResults& res, std::size_t an) {
  const auto it = std::find(res.an_values.begin(), res.an_values.end(), an);
  if (it == res.an_values.end()) throw ArgumentError("ar_at_an: AN=" + std::to_string(an) + " is not on the evaluated grid");
  if (res.recalls.empty() || res.thresholds.empty()) return std::nullopt;
  const auto a = static_cast<std::size_t>(it - res.an_values.begin());
  double sum = 0.0;
  for (const auto& m : res.recalls) {
    double per = 0.0;
    for (std::size_t k = 0; k < m.rows(); ++k) per += m(k, a);
    sum += per / static_cast<double>(m.rows());
  }
  return sum / static_cast<double>(res.recalls.size());
}

std::optional<double> auc(const DatasetResults& res) {
  double sum = 0.0;
  for (std::size_t an = 1; an <= 100; ++an) {
    const auto ar = ar_at_an(res, an);
    if (!ar) return std::nullopt;
    sum += *ar;
  }
  return 100.0 * sum / 100.0;
}

EvalReport make_report(const DatasetResults& res) {
  EvalReport rep;
  rep.videos = res.recalls.size();
  rep.thresholds = res.thresholds;
  auto has = [&](std::size_t an) {
    return std::find(res.an_values.begin(), res.an_values.end(), an) != res.an_values.end();
  };
  if (has(10)) rep.ar10 = ar_at_an(res, 10);
  if (has(50)) rep.ar50 = ar_at_an(res, 50);
  if (has(100)) rep.ar100 = ar_at_an(res, 100);
  bool full_grid = true;
  for (std::size_t an = 1; an <= 100; ++an) full_grid = full_grid && has(an);
  if (full_grid) rep.auc = auc(res);
  for (std::size_t k = 0; k < res.thresholds.size(); ++k) {
    std::array<double, 3> row{0.0, 0.0, 0.0};
    const std::size_t ans[3] = {10, 50, 100};
    for (int c = 0; c < 3; ++c) {
      const auto it = std::find(res.an_values.begin(), res.an_values.end(), ans[c]);
      if (it == res.an_values.end() || res.recalls.empty()) continue;
      const auto a = static_cast<std::size_t>(it - res.an_values.begin());
      for (const auto& m : res.recalls) row[c] += m(k, a);
      row[c] /= static_cast<double>(res.recalls.size());
    }
    rep.recall_by_threshold.push_back(row);
  }
  for (auto an : res.an_values) {
    const auto ar = ar_at_an(res, an);
    if (ar) rep.curve.emplace_back(an, *ar);
  }
  return rep;
}

std::string EvalReport::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json j;
  j["videos"] = videos;
  j["AR@10"] = opt(ar10);
  j["AR@50"] = opt(ar50);
  j["AR@100"] = opt(ar100);
  j["AUC"] = opt(auc);
  j["recall_by_threshold"] = nlohmann::json::array();
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    j["recall_by_threshold"].push_back({{"tiou", thresholds[k]},
                                        {"R@10", recall_by_threshold[k][0]},
                                        {"R@50", recall_by_threshold[k][1]},
                                        {"R@100", recall_by_threshold[k][2]}});
  }
  return j.dump(2);
}

std::string EvalReport::curve_csv() const {
  std::string out = "AN,AR\n";
  char buf[64];
  for (const auto& [an, ar] : curve) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", an, ar);
    out += buf;
  }
  return out;
}

}  // namespace sstap
