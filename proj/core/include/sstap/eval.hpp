#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sstap/data.hpp"
#include "sstap/postprocess.hpp"

namespace sstap {

// (50 + 5k) / 100 for k = 0.. up to `hi_percent`; computed from integers so
// the grid holds exact decimal-rounded values.
std::vector<double> threshold_grid(int lo_percent, int hi_percent, int step_percent);
// [0.5:0.05:1.0]
std::vector<double> thumos_thresholds();
// [0.5:0.05:0.95]
std::vector<double> activitynet_thresholds();
// 1..max_an
std::vector<std::size_t> an_grid(std::size_t max_an = 100);

// Entry (k, a) is the fraction of ground-truth instances matched with
// iou >= thresholds[k] by at least one of the top an_values[a] proposals.
// Throws ContractError when `props` is not sorted by descending score and
// ArgumentError when `gt` is empty.
Matrix<double> recall_matrix(const std::vector<Proposal>& props, const AnnotationSet& gt,
                             const std::vector<double>& thresholds, const std::vector<std::size_t>& an_values);

struct DatasetResults {
  std::vector<double> thresholds;
  std::vector<std::size_t> an_values;
  std::vector<std::string> video_ids;    // eligible videos (non-empty ground truth)
  std::vector<Matrix<double>> recalls;   // one recall matrix per eligible video
};

// Videos without proposals count as having an empty list; videos with empty
// ground truth are excluded.
DatasetResults evaluate_dataset(const std::map<std::string, std::vector<Proposal>>& proposals,
                                const std::vector<std::pair<std::string, AnnotationSet>>& ground_truth,
                                const std::vector<double>& thresholds, const std::vector<std::size_t>& an_values);

// Mean over videos of the mean over thresholds of recall at AN. Absent when
// no video is eligible. Throws ArgumentError when AN is not on the grid.
std::optional<double> ar_at_an(const DatasetResults& res, std::size_t an);

// 100 * mean of AR@AN over AN = 1..100; requires that grid.
std::optional<double> auc(const DatasetResults& res);

struct EvalReport {
  std::size_t videos = 0;
  std::optional<double> ar10, ar50, ar100, auc;
  std::vector<double> thresholds;
  // per-threshold recall averaged over videos at AN = 10, 50, 100
  std::vector<std::array<double, 3>> recall_by_threshold;
  std::vector<std::pair<std::size_t, double>> curve;  // (AN, AR@AN)

  std::string to_json() const;
  std::string curve_csv() const;
};

EvalReport make_report(const DatasetResults& res);

}  // namespace sstap
