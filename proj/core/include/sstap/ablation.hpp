#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "sstap/data.hpp"
#include "sstap/eval.hpp"
#include "sstap/trainer.hpp"

namespace sstap {

// Which training components a configuration keeps.
struct AblationVariant {
  std::string name;
  bool shift = true;   // S
  bool flip = true;    // F
  bool recon = true;   // R
  bool order = true;   // C
};

// Named grids:
//   default  vanilla, sstap_all
//   table4   vanilla, sstap-F, sstap-F-R, sstap-F-R-C, sstap-R-C, sstap-S-R-C, sstap_all
//   table5   vanilla, bmn+C, bmn+R, bmn+C+R
// Throws ArgumentError for an unknown grid.
std::vector<AblationVariant> ablation_grid(std::string_view grid);

// Zeroes the weights of disabled components. A variant with every component
// off does not sample unlabeled videos (plain supervised training).
TrainConfig apply_variant(TrainConfig cfg, const AblationVariant& v);

struct AblationData {
  std::vector<FeatureSequence> train;
  std::vector<FeatureSequence> test;
};

// Training split with `label_fraction` labeled and a disjoint, fully
// annotated test split drawn with a different generator seed.
AblationData make_ablation_data(const GeneratorOptions& train_opts, std::size_t test_videos);

struct AblationResult {
  std::string grid;
  std::string variant;
  std::uint64_t seed = 0;
  double label_fraction = 0.0;
  EvalReport report;  // student on the test split
  double final_loss = 0.0;
  double seconds = 0.0;
};

AblationResult run_ablation_variant(const AblationData& data, const TrainConfig& base, const AblationVariant& v,
                                    std::uint64_t seed, const std::vector<double>& thresholds);

std::string ablation_csv_header();
std::string ablation_csv_row(const AblationResult& r);

}  // namespace sstap
