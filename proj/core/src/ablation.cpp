#include "sstap/ablation.hpp"

#include <chrono>
#include <cstdio>

#include "sstap/error.hpp"
#include "sstap/pipeline.hpp"

namespace sstap {

std::vector<AblationVariant> ablation_grid(std::string_view grid) {
  const AblationVariant vanilla{"vanilla", false, false, false, false};
  const AblationVariant all{"sstap_all", true, true, true, true};
  if (grid == "default") return {vanilla, all};
  if (grid == "table4") {
    return {vanilla,
            {"sstap-F", true, false, true, true},
            {"sstap-F-R", true, false, false, true},
            {"sstap-F-R-C", true, false, false, false},
            {"sstap-R-C", true, true, false, false},
            {"sstap-S-R-C", false, true, false, false},
            all};
  }
  if (grid == "table5") {
    return {vanilla,
            {"bmn+C", false, false, false, true},
            {"bmn+R", false, false, true, false},
            {"bmn+C+R", false, false, true, true}};
  }
  throw ArgumentError("unknown ablation grid '" + std::string(grid) + "' (expected default, table4 or table5)");
}

TrainConfig apply_variant(TrainConfig cfg, const AblationVariant& v) {
  if (!v.shift) cfg.lambda1 = 0.0;
  if (!v.flip) cfg.lambda2 = 0.0;
  if (!v.recon) cfg.lambda3 = 0.0;
  if (!v.order) cfg.lambda4 = 0.0;
  if (!(v.shift || v.flip || v.recon || v.order)) cfg.use_unlabeled = false;
  return cfg;
}

AblationData make_ablation_data(const GeneratorOptions& train_opts, std::size_t test_videos) {
  AblationData d;
  d.train = generate_synthetic_videos(train_opts);
  GeneratorOptions t = train_opts;
  t.n_videos = test_videos;
  t.label_fraction = 1.0;
  t.seed = train_opts.seed + 1000003;
  d.test = generate_synthetic_videos(t);
  return d;
}

AblationResult run_ablation_variant(const AblationData& data, const TrainConfig& base, const AblationVariant& v,
                                    std::uint64_t seed, const std::vector<double>& thresholds) {
  TrainConfig cfg = apply_variant(base, v);
  cfg.seed = seed;
  AblationResult r;
  r.variant = v.name;
  r.seed = seed;
  std::size_t labeled = 0;
  for (const auto& f : data.train) labeled += f.labeled ? 1 : 0;
  r.label_fraction = data.train.empty() ? 0.0 : static_cast<double>(labeled) / static_cast<double>(data.train.size());
  const auto t0 = std::chrono::steady_clock::now();
  auto evaluate = [&](const auto& res) {
    const ProposalModel model(res.shape);
    r.report = evaluate_params(model, res.state.student, data.test, thresholds);
    r.final_loss = res.epochs.empty() ? 0.0 : res.epochs.back().mean.total;
  };
  if (cfg.precision == Precision::f64) evaluate(train_run<double>(data.train, cfg));
  else evaluate(train_run<float>(data.train, cfg));
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::string ablation_csv_header() { return "grid,config,label_fraction,seed,AUC,AR@10,AR@50,AR@100,final_loss,seconds"; }

std::string ablation_csv_row(const AblationResult& r) {
  auto num = [](const std::optional<double>& v, double scale) {
    char buf[40];
    if (!v) return std::string("nan");
    std::snprintf(buf, sizeof buf, "%.6f", *v * scale);
    return std::string(buf);
  };
  char tail[96];
  std::snprintf(tail, sizeof tail, ",%.6f,%.2f", r.final_loss, r.seconds);
  return r.grid + "," + r.variant + "," + num(r.label_fraction, 1.0) + "," + std::to_string(r.seed) + "," +
         num(r.report.auc, 1.0) + "," + num(r.report.ar10, 100.0) + "," + num(r.report.ar50, 100.0) + "," +
         num(r.report.ar100, 100.0) + tail;
}

}  // namespace sstap
