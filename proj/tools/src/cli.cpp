#include "sstap/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "sstap/ablation.hpp"
#include "sstap/checkpoint.hpp"
#include "sstap/data.hpp"
#include "sstap/error.hpp"
#include "sstap/eval.hpp"
#include "sstap/grad_check.hpp"
#include "sstap/pipeline.hpp"
#include "sstap/postprocess.hpp"
#include "sstap/train_config.hpp"
#include "sstap/trainer.hpp"

namespace fs = std::filesystem;

namespace sstap::cli {

namespace {

fs::path manifest_path(const fs::path& p) { return fs::is_directory(p) ? p / "manifest.json" : p; }

std::vector<FeatureSequence> load_subset(const fs::path& data, const std::string& subset) {
  const auto all = load_dataset(read_manifest(manifest_path(data)));
  if (subset == "all") return all;
  std::vector<FeatureSequence> out;
  for (const auto& v : all) {
    if ((subset == "labeled") == v.labeled) out.push_back(v);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw IoError("write failed for " + path.string());
}

std::vector<double> thresholds_named(const std::string& name) {
  if (name == "thumos") return thumos_thresholds();
  if (name == "activitynet") return activitynet_thresholds();
  throw ArgumentError("unknown threshold set '" + name + "' (expected thumos or activitynet)");
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || used == 0) throw ArgumentError("bad seed '" + item + "' in --seeds");
    seeds.push_back(v);
  }
  if (seeds.empty()) throw ArgumentError("--seeds is empty");
  return seeds;
}

// Shared by train and ablate: defaults, then the config file, then the
// mode and component switches, then --set, then dedicated flags.
struct ConfigFlags {
  std::string config_file;
  std::string mode = "sstap";
  bool no_shift = false, no_flip = false, no_recon = false, no_order = false;
  std::vector<std::string> sets;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> precision;

  void add_to(CLI::App* app, bool with_mode) {
    app->add_option("--config", config_file, "key = value config file (see config/schema.md)")->check(CLI::ExistingFile);
    if (with_mode) {
      app->add_option("--mode", mode, "sstap (all branches) or supervised (labeled data only, all weights 0)")
          ->check(CLI::IsMember({"sstap", "supervised"}));
      app->add_flag("--no-shift", no_shift, "disable the temporal-shift consistency (lambda1 = 0)");
      app->add_flag("--no-flip", no_flip, "disable the temporal-flip consistency (lambda2 = 0)");
      app->add_flag("--no-recon", no_recon, "disable masked reconstruction (lambda3 = 0)");
      app->add_flag("--no-order", no_order, "disable clip-order prediction (lambda4 = 0)");
    }
    app->add_option("--set", sets, "override a config key, key=value (repeatable)");
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--seed", seed, "training seed");
    app->add_option("--precision", precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
  }

  TrainConfig resolve() const {
    TrainConfig cfg;
    if (!config_file.empty()) cfg = load_config(config_file, cfg);
    AblationVariant v{"cli", !no_shift, !no_flip, !no_recon, !no_order};
    if (mode == "supervised") v = {"supervised", false, false, false, false};
    cfg = apply_variant(cfg, v);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ArgumentError("--set expects key=value, got '" + s + "'");
      set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    if (epochs) cfg.epochs = *epochs;
    if (seed) cfg.seed = *seed;
    if (precision) cfg.precision = parse_precision(*precision);
    cfg.validate();
    return cfg;
  }
};

char fmt_buf[512];

template <typename... A>
const char* fmt(const char* f, A... a) {
  std::snprintf(fmt_buf, sizeof fmt_buf, f, a...);
  return fmt_buf;
}

// ---------------------------------------------------------------------------

struct GenData {
  GeneratorOptions g;
  std::string out_dir;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("gen-data", "generate a deterministic synthetic dataset");
    c->add_option("--out", out_dir, "output directory (manifest.json + features/)")->required();
    c->add_option("--videos", g.n_videos, "number of videos")->capture_default_str();
    c->add_option("--labeled", g.label_fraction, "fraction of videos marked labeled")->capture_default_str();
    c->add_option("--seed", g.seed, "generator seed")->capture_default_str();
    c->add_option("--T", g.T, "snippets per video")->capture_default_str();
    c->add_option("--C", g.C, "feature channels")->capture_default_str();
    c->add_option("--noise", g.noise_std, "feature noise standard deviation")->capture_default_str();
    c->add_option("--signature", g.signature_scale, "amplitude of the action signature")->capture_default_str();
    c->add_option("--transient", g.transient, "amplitude of the boundary transients")->capture_default_str();
    c->add_option("--min-duration", g.min_duration_frac, "shortest instance as a fraction of T")->capture_default_str();
    c->add_option("--max-duration", g.max_duration_frac, "longest instance as a fraction of T")->capture_default_str();
    cmd = c;
  }
  int run(std::ostream& out) {
    const auto m = gen_synthetic_dataset(g, out_dir);
    std::size_t labeled = 0;
    for (const auto& v : m.videos) labeled += v.labeled ? 1 : 0;
    out << "wrote " << m.videos.size() << " videos (" << labeled << " labeled) to " << out_dir << "\n";
    return kOk;
  }
  CLI::App* cmd = nullptr;
};

struct Train {
  ConfigFlags flags;
  std::string data;
  std::string runs_dir = "runs";
  std::string run_dir;
  bool resume = false;
  std::optional<std::size_t> stop_after;
  bool quiet = false;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("train", "train the proposal network (mean teacher + pretext tasks)");
    c->add_option("--data", data, "dataset directory or manifest.json")->required();
    flags.add_to(c, true);
    c->add_option("--runs-dir", runs_dir, "parent of the run directory <config-hash>-s<seed>")->capture_default_str();
    c->add_option("--run-dir", run_dir, "explicit run directory (overrides --runs-dir naming)");
    c->add_flag("--resume", resume, "continue from the run directory's checkpoint");
    c->add_option("--stop-after", stop_after, "stop once this many epochs are complete");
    c->add_flag("--quiet", quiet, "no per-epoch lines");
    cmd = c;
  }

  template <typename R>
  void train(const std::vector<FeatureSequence>& videos, const TrainConfig& cfg, const RunOptions& ro) {
    train_run<R>(videos, cfg, ro);
  }

  int run(std::ostream& out) {
    const TrainConfig cfg = flags.resolve();
    const auto videos = load_dataset(read_manifest(manifest_path(data)));
    const fs::path dir = run_dir.empty() ? fs::path(runs_dir) / (config_hash(cfg) + "-s" + std::to_string(cfg.seed))
                                         : fs::path(run_dir);
    fs::create_directories(dir);
    RunOptions ro;
    ro.out_dir = dir;
    ro.stop_after_epoch = stop_after;
    if (resume) {
      if (!fs::exists(dir / "checkpoint.bin")) throw IoError("--resume: no checkpoint in " + dir.string());
      ro.resume = dir / "checkpoint.bin";
    }
    if (!quiet) {
      ro.on_epoch = [&out](const EpochRecord& r) {
        out << fmt("epoch %llu total %.6f supervised %.6f shift %.6f flip %.6f recons %.6f order %.6f (%.1fs)\n",
                   static_cast<unsigned long long>(r.epoch), r.mean.total, r.mean.supervised, r.mean.shift,
                   r.mean.flip, r.mean.recons, r.mean.order, r.wall_seconds);
        out.flush();
      };
    }
    write_text(dir / "config.cfg", format_config(cfg));
    if (cfg.precision == Precision::f64) train<double>(videos, cfg, ro);
    else train<float>(videos, cfg, ro);
    out << "run_dir " << dir.string() << "\n";
    return kOk;
  }
  CLI::App* cmd = nullptr;
};

struct Infer {
  std::string checkpoint, run, data, out_file, weights = "student", subset = "all";
  InferOptions io;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("infer", "load a checkpoint and write ranked proposals");
    auto* ck = c->add_option("--checkpoint", checkpoint, "checkpoint file");
    auto* rn = c->add_option("--run", run, "run directory (uses its checkpoint.bin)");
    ck->excludes(rn);
    c->add_option("--data", data, "dataset directory or manifest.json")->required();
    c->add_option("--out", out_file, "proposal file (default <run>/proposals.txt)");
    c->add_option("--weights", weights, "student or teacher")->check(CLI::IsMember({"student", "teacher"}))->capture_default_str();
    c->add_option("--subset", subset, "all, labeled or unlabeled")->check(CLI::IsMember({"all", "labeled", "unlabeled"}))->capture_default_str();
    c->add_option("--sigma", io.nms.sigma, "Soft-NMS Gaussian width")->capture_default_str();
    c->add_option("--score-floor", io.nms.score_floor, "Soft-NMS score floor")->capture_default_str();
    c->add_option("--max-out", io.nms.max_out, "proposals kept per video")->capture_default_str();
    c->add_option("--peak-fraction", io.decode.peak_fraction, "boundary threshold as a fraction of the max")->capture_default_str();
    cmd = c;
  }

  template <typename R>
  std::vector<VideoProposals> predict(const fs::path& ck, const std::vector<FeatureSequence>& videos) {
    CheckpointInfo info;
    const auto st = load_checkpoint<R>(ck, &info);
    const ProposalModel model(info.shape);
    const ParamStore<R>& p = weights == "teacher" ? st.teacher.params : st.student;
    std::vector<VideoProposals> out;
    for (const auto& v : videos) {
      if (v.T() != info.shape.T || v.C() != info.shape.C) {
        throw FormatError("video " + v.video_id + " does not match the checkpoint's T and C");
      }
      out.push_back({v.video_id, v.T(), predict_proposals(model, p, v, io)});
    }
    return out;
  }

  int run_cmd(std::ostream& out) {
    if (checkpoint.empty() && run.empty()) throw ArgumentError("infer needs --checkpoint or --run");
    const fs::path ck = checkpoint.empty() ? fs::path(run) / "checkpoint.bin" : fs::path(checkpoint);
    fs::path dest = out_file;
    if (dest.empty()) {
      if (run.empty()) throw ArgumentError("infer needs --out when --checkpoint is given");
      dest = fs::path(run) / "proposals.txt";
    }
    const auto videos = load_subset(data, subset);
    const auto info = read_checkpoint_info(ck);
    const auto props = info.precision == Precision::f64 ? predict<double>(ck, videos) : predict<float>(ck, videos);
    write_proposals(props, dest);
    out << "wrote proposals for " << props.size() << " videos to " << dest.string() << "\n";
    return kOk;
  }
  CLI::App* cmd = nullptr;
};

struct Eval {
  std::string proposals, data, out_file, curve, thresholds = "activitynet", subset = "all";
  std::size_t max_an = 100;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("eval", "score proposals against a manifest's ground truth");
    c->add_option("--proposals", proposals, "proposal file written by infer")->required();
    c->add_option("--data", data, "dataset directory or manifest.json")->required();
    c->add_option("--out", out_file, "metrics report (JSON); printed to stdout as well");
    c->add_option("--curve", curve, "CSV of the AR-vs-AN curve");
    c->add_option("--thresholds", thresholds, "thumos ([0.5:0.05:1.0]) or activitynet ([0.5:0.05:0.95])")
        ->check(CLI::IsMember({"thumos", "activitynet"}))
        ->capture_default_str();
    c->add_option("--max-an", max_an, "largest AN on the grid (AUC needs >= 100)")->capture_default_str();
    c->add_option("--subset", subset, "all, labeled or unlabeled")->check(CLI::IsMember({"all", "labeled", "unlabeled"}))->capture_default_str();
    cmd = c;
  }

  int run(std::ostream& out) {
    if (max_an < 1) throw ArgumentError("--max-an must be >= 1");
    const auto props = read_proposals(proposals);
    const auto videos = load_subset(data, subset);
    const auto res = evaluate_dataset(props, ground_truth_of(videos), thresholds_named(thresholds), an_grid(max_an));
    const auto rep = make_report(res);
    const std::string json = rep.to_json();
    if (!out_file.empty()) write_text(out_file, json + "\n");
    if (!curve.empty()) write_text(curve, rep.curve_csv());
    out << json << "\n";
    return kOk;
  }
  CLI::App* cmd = nullptr;
};

struct GradCheckCmd {
  GradCheckOptions o;
  std::string mode = "full", out_file;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("grad-check", "finite-difference check of every parameter gradient (64-bit)");
    c->add_option("--seed", o.seed, "seed of parameters and inputs")->capture_default_str();
    c->add_option("--mode", mode, "full, unfrozen-dropout (negative control) or linear-probe")
        ->check(CLI::IsMember({"full", "unfrozen-dropout", "linear-probe"}))
        ->capture_default_str();
    c->add_option("--step", o.h, "finite-difference step")->capture_default_str();
    c->add_option("--tol", o.tolerance, "max relative error per tensor")->capture_default_str();
    c->add_option("--T", o.shape.T)->capture_default_str();
    c->add_option("--C", o.shape.C)->capture_default_str();
    c->add_option("--H", o.shape.H)->capture_default_str();
    c->add_option("--H2", o.shape.H2)->capture_default_str();
    c->add_option("--D", o.shape.D)->capture_default_str();
    c->add_option("--N", o.shape.N)->capture_default_str();
    c->add_option("--K", o.shape.K)->capture_default_str();
    c->add_option("--out", out_file, "write the JSON report here");
    cmd = c;
  }

  int run(std::ostream& out, std::ostream& err) {
    o.mode = mode == "full" ? GradCheckMode::full
             : mode == "unfrozen-dropout" ? GradCheckMode::unfrozen_dropout
                                          : GradCheckMode::linear_probe;
    const auto rep = grad_check(o);
    for (const auto& t : rep.tensors) {
      out << fmt("%-12s rel_error %.3e checked %zu refined %zu skipped %zu %s\n", t.name.c_str(), t.rel_error,
                 t.checked, t.kink_refined, t.kink_skipped, t.pass ? "ok" : "FAIL");
    }
    out << fmt("grad-check %s: max rel error %.3e (tolerance %.1e), %.2fs\n", rep.pass ? "passed" : "FAILED",
               rep.max_rel_error, o.tolerance, rep.seconds);
    if (!out_file.empty()) write_text(out_file, rep.to_json() + "\n");
    if (!rep.pass) {
      err << "grad-check: gradient mismatch above tolerance\n";
      return kNumeric;
    }
    return kOk;
  }
  CLI::App* cmd = nullptr;
};

struct Ablate {
  ConfigFlags flags;
  std::string grid = "default", seeds = "1,2,3,4,5", data, test_data, out_file, thresholds = "activitynet";
  GeneratorOptions g{100, 100, 16, 0.1};
  std::size_t test_videos = 50;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("ablate", "train a named grid of configurations over shared seeds");
    c->add_option("--grid", grid, "default, table4 or table5")->check(CLI::IsMember({"default", "table4", "table5"}))->capture_default_str();
    c->add_option("--seeds", seeds, "comma-separated seeds")->capture_default_str();
    auto* d = c->add_option("--data", data, "training dataset (otherwise generated per seed)");
    c->add_option("--test-data", test_data, "evaluation dataset (required with --data)")->needs(d);
    c->add_option("--videos", g.n_videos, "generated training videos")->capture_default_str();
    c->add_option("--labeled", g.label_fraction, "generated labeled fraction")->capture_default_str();
    c->add_option("--test-videos", test_videos, "generated test videos")->capture_default_str();
    c->add_option("--T", g.T, "generated snippets per video")->capture_default_str();
    c->add_option("--C", g.C, "generated feature channels")->capture_default_str();
    c->add_option("--thresholds", thresholds, "thumos or activitynet")->check(CLI::IsMember({"thumos", "activitynet"}))->capture_default_str();
    c->add_option("--out", out_file, "CSV file (stdout when absent)");
    flags.add_to(c, false);
    cmd = c;
  }

  int run(std::ostream& out, std::ostream& err) {
    const TrainConfig base = flags.resolve();
    const auto seed_list = parse_seed_list(seeds);
    const auto variants = ablation_grid(grid);
    const auto th = thresholds_named(thresholds);
    if (!data.empty() && test_data.empty()) throw ArgumentError("--data needs --test-data");
    std::string csv = ablation_csv_header() + "\n";
    std::ofstream file;
    if (!out_file.empty()) {
      file.open(out_file, std::ios::trunc);
      if (!file) throw IoError("cannot open " + out_file + " for writing");
      file << csv;
      file.flush();
    }
    for (auto seed : seed_list) {
      AblationData d;
      if (!data.empty()) {
        d.train = load_dataset(read_manifest(manifest_path(data)));
        d.test = load_dataset(read_manifest(manifest_path(test_data)));
      } else {
        GeneratorOptions gs = g;
        gs.seed = seed;
        d = make_ablation_data(gs, test_videos);
      }
      for (const auto& v : variants) {
        auto r = run_ablation_variant(d, base, v, seed, th);
        r.grid = grid;
        const std::string row = ablation_csv_row(r);
        csv += row + "\n";
        if (file.is_open()) {
          file << row << "\n";
          file.flush();
        }
        err << row << "\n";
      }
    }
    if (out_file.empty()) out << csv;
    return kOk;
  }
  CLI::App* cmd = nullptr;
};

}  // namespace

int dispatch(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"sstap: semi-supervised temporal action proposals on synthetic snippet features"};
  app.name(argv.empty() ? "sstap" : fs::path(argv.front()).filename().string());
  app.require_subcommand(1);
  GenData gen;
  Train train;
  Infer infer;
  Eval eval;
  GradCheckCmd gc;
  Ablate ablate;
  gen.add(app);
  train.add(app);
  infer.add(app);
  eval.add(app);
  gc.add(app);
  ablate.add(app);

  std::vector<const char*> cargs;
  for (const auto& a : argv) cargs.push_back(a.c_str());
  if (cargs.empty()) cargs.push_back("sstap");
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    err << "error: " << e.what() << "\n" << (subs.empty() ? app.help() : subs.front()->help());
    return kUsage;
  }

  try {
    if (*gen.cmd) return gen.run(out);
    if (*train.cmd) return train.run(out);
    if (*infer.cmd) return infer.run_cmd(out);
    if (*eval.cmd) return eval.run(out);
    if (*gc.cmd) return gc.run(out, err);
    if (*ablate.cmd) return ablate.run(out, err);
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const Error& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  }
  err << "error: no subcommand\n" << app.help();
  return kUsage;
}

}  // namespace sstap::cli
