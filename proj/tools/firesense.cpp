// firesense: command-line front end for data generation, training, evaluation
// and the analysis exports.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "firesense/analysis.hpp"
#include "firesense/checkpoint.hpp"
#include "firesense/config.hpp"
#include "firesense/data.hpp"
#include "firesense/error.hpp"
#include "firesense/gradcheck_suite.hpp"
#include "firesense/io.hpp"
#include "firesense/metrics.hpp"
#include "firesense/model.hpp"
#include "firesense/train.hpp"

namespace fs = std::filesystem;
using namespace firesense;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

constexpr const char* kCheckpointFile = "checkpoint.fsck";
constexpr const char* kEchoFile = "config.txt";

// Config keys bound to flags: --batch-size sets batch_size, and so on.
struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "key=value config file")->check(CLI::ExistingFile);
    for (const auto& key : RunConfig::keys()) {
      std::string flag = "--" + key;
      for (auto& ch : flag) {
        if (ch == '_') ch = '-';
      }
      app->add_option(flag, overrides[key], "config key '" + key + "'");
    }
  }

  // Defaults, then `base` (usually a checkpoint's echo), then the file, then flags.
  RunConfig resolve(CLI::App* app, const std::string& base = {}) const {
    RunConfig cfg;
    if (!base.empty()) cfg.load_text(base, "checkpoint");
    if (!config_file.empty()) cfg.load_file(config_file);
    for (const auto& [key, value] : overrides) {
      std::string flag = "--" + key;
      for (auto& ch : flag) {
        if (ch == '_') ch = '-';
      }
      if (app->count(flag) > 0) cfg.set(key, value);
    }
    return cfg;
  }
};

fs::path require_out_dir(const RunConfig& cfg) {
  const auto& out = cfg.get("out");
  if (out.empty()) throw ConfigError("--out is required");
  fs::create_directories(out);
  return out;
}

Dataset require_data(const RunConfig& cfg) {
  const auto& data = cfg.get("data");
  if (data.empty()) throw ConfigError("--data is required");
  return read_dataset(data);
}

Dataset select_split(const Dataset& ds, const std::string& which, std::uint64_t split_seed) {
  if (which == "all") return ds;
  if (ds.size() < 10) {
    throw ConfigError("dataset has " + std::to_string(ds.size()) + " samples; splits need at least 10 (use --split all)");
  }
  auto s = split(ds, split_seed);
  if (which == "train") return s.train;
  if (which == "val") return s.val;
  if (which == "test") return s.test;
  throw ConfigError("unknown split '" + which + "' (expected train|val|test|all)");
}

std::size_t find_sample(const Dataset& ds, std::uint64_t id) {
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.samples[i].id == id) return i;
  }
  throw ConfigError("no sample with id " + std::to_string(id));
}

Tensor<float> model_input(const Dataset& raw, std::size_t index, const Preprocessor& pre) {
  auto x = pre.apply(raw.samples[index], raw.height, raw.width);
  return Tensor<float>({static_cast<std::int64_t>(raw.channels()), raw.height, raw.width}, std::move(x));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path.string() + "'", 0);
  out << text;
}

void print_report(const MetricsReport& r) {
  std::printf("%-18s %-8s thr=%s P=%s R=%s F1=%s AP=%s\n", r.model.c_str(), to_string(r.protocol).c_str(),
              format_number(r.threshold).c_str(), format_number(r.metrics.precision).c_str(),
              format_number(r.metrics.recall).c_str(), format_number(r.metrics.f1).c_str(),
              r.auc_pr.defined ? format_number(r.auc_pr.value).c_str() : "undefined");
}

// ---------------------------------------------------------------------------

struct GenData {
  std::size_t n = 100;
  std::uint64_t seed = 0;
  int size = 64;
  std::string bias = "east";
  double empty_fraction = SyntheticOptions{}.empty_fraction;
  double unknown_fraction = SyntheticOptions{}.unknown_fraction;
  std::string out;

  int run() const {
    SyntheticOptions opt;
    opt.size = size;
    opt.spread_bias = parse_direction(bias);
    opt.empty_fraction = empty_fraction;
    opt.unknown_fraction = unknown_fraction;
    const auto ds = generate_synthetic(n, seed, opt);
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    write_dataset(out, ds);
    write_text(out + ".config.txt", "n=" + std::to_string(n) + "\nseed=" + std::to_string(seed) +
                                        "\nsize=" + std::to_string(size) + "\nbias=" + to_string(opt.spread_bias) +
                                        "\nempty_fraction=" + format_number(empty_fraction) +
                                        "\nunknown_fraction=" + format_number(unknown_fraction) + "\n");
    std::printf("wrote %zu samples (%dx%d) to %s\n", ds.size(), ds.height, ds.width, out.c_str());
    return kExitOk;
  }
};

int run_stats(const RunConfig& cfg, const std::string& which) {
  const auto ds = require_data(cfg);
  const auto part = select_split(ds, which, cfg.split_seed());
  const auto pre = fit_preprocessor(part, cfg.smoothing());
  const auto& out = cfg.get("out");
  if (out.empty()) throw ConfigError("--out is required");
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  write_norm_stats(out, pre.stats);
  cfg.write_echo(out + ".config.txt");
  for (std::size_t c = 0; c < pre.stats.channels.size(); ++c) {
    std::printf("%-13s mean=%s std=%s\n", pre.stats.channels[c].c_str(), format_number(pre.stats.mean[c]).c_str(),
                format_number(pre.stats.std[c]).c_str());
  }
  return kExitOk;
}

struct TrainArgs {
  bool resume = false;
  bool train_on_all = false;
  int stop_after = -1;
};

int run_train(CLI::App* app, const ConfigFlags& flags, const TrainArgs& args) {
  // On resume the run's own echo is the base layer so the continuation uses the same settings.
  std::optional<Checkpoint> prior;
  std::string base;
  if (args.resume) {
    RunConfig probe = flags.resolve(app);
    const fs::path ckpt_path = fs::path(probe.get("out")) / kCheckpointFile;
    prior = load_checkpoint(ckpt_path);
    if (!prior->train) throw ConfigError("'" + ckpt_path.string() + "' holds no training state to resume");
    base = prior->config_echo;
  }
  const RunConfig cfg = flags.resolve(app, base);
  const auto out = require_out_dir(cfg);
  const auto ds = require_data(cfg);
  const auto tc = cfg.train();

  Dataset train_set;
  Dataset val_set;
  if (args.train_on_all) {
    train_set = ds;
    val_set = ds;
  } else {
    auto s = split(ds, cfg.split_seed());
    train_set = std::move(s.train);
    val_set = std::move(s.val);
  }

  Preprocessor pre;
  TrainState state;
  std::optional<Model<float>> model;
  if (prior) {
    if (prior->train->finished) {
      std::printf("run in %s already finished (%zu epochs)\n", out.string().c_str(), prior->train->history.size());
      return kExitOk;
    }
    pre = prior->preprocessor;
    state = *prior->train;
    model.emplace(instantiate(*prior));
  } else {
    pre = fit_preprocessor(train_set, cfg.smoothing());
    state = initial_train_state(tc);
    model.emplace(build<float>(cfg.model(), tc.seed));
  }
  cfg.write_echo(out / kEchoFile);

  FitOptions fo;
  fo.epochs_this_call = args.stop_after;
  fo.on_epoch = [](const EpochRecord& r) {
    std::fprintf(stderr, "epoch %4d lr=%-12s loss=%-12s val_f1=%s\n", r.epoch + 1, format_number(r.lr).c_str(),
                 format_number(r.loss).c_str(), format_number(r.val_f1).c_str());
  };
  const auto res = fit(*model, pre, train_set, val_set, tc, state, fo);

  save_checkpoint(out / kCheckpointFile, capture(*model, pre, &state, cfg.echo()));
  write_history_csv(out / "history.csv", state.history);
  if (res.finished) {
    std::printf("finished after %zu epochs; best val F1 %s at epoch %d", state.history.size(),
                format_number(res.best_f1).c_str(), res.best_epoch + 1);
    if (res.epochs_to_target > 0) std::printf("; target reached at epoch %d", res.epochs_to_target);
    std::printf("\n");
  } else {
    std::printf("paused after epoch %d; continue with --resume\n", state.next_epoch);
  }
  return kExitOk;
}

struct EvalArgs {
  std::string ckpt;
  std::string model = "checkpoint";
  std::string protocol = "both";
  std::string split = "test";
};

struct Loaded {
  std::optional<Checkpoint> ckpt;
  std::optional<Model<float>> model;
};

Loaded load_model(const std::string& path) {
  if (path.empty()) throw ConfigError("--ckpt is required");
  Loaded l;
  l.ckpt = load_checkpoint(path);
  l.model.emplace(instantiate(*l.ckpt));
  return l;
}

std::string ckpt_echo(const std::string& path) { return path.empty() ? std::string{} : load_checkpoint(path).config_echo; }

int run_eval(CLI::App* app, const ConfigFlags& flags, const EvalArgs& args) {
  const bool dummy = args.model == "dummy-copy-prev";
  if (!dummy && args.model != "checkpoint") throw ConfigError("unknown --model '" + args.model + "'");
  const RunConfig cfg = flags.resolve(app, dummy ? std::string{} : ckpt_echo(args.ckpt));
  const auto out = require_out_dir(cfg);
  const auto data = select_split(require_data(cfg), args.split, cfg.split_seed());

  std::vector<Protocol> protocols;
  if (args.protocol == "both") {
    protocols = {Protocol::Clean, Protocol::Inflated};
  } else {
    protocols = {parse_protocol(args.protocol)};
  }

  Loaded loaded;
  std::unique_ptr<Predictor> predictor;
  if (dummy) {
    predictor = std::make_unique<CopyPrevPredictor>();
  } else {
    loaded = load_model(args.ckpt);
    predictor = std::make_unique<ModelPredictor>(*loaded.model, loaded.ckpt->preprocessor,
                                                 to_string(loaded.ckpt->model.arch));
  }
  const auto pooled = pool(data, predictor->predict(data));
  std::vector<MetricsReport> reports;
  for (auto p : protocols) {
    SweepResult sweep;
    reports.push_back(evaluate(predictor->name(), pooled, p, &sweep));
    write_sweep_csv(out / ("sweep_" + to_string(p) + ".csv"), predictor->name(), p, sweep);
    print_report(reports.back());
  }
  write_metrics_csv(out / "metrics.csv", reports);
  cfg.write_echo(out / kEchoFile);
  return kExitOk;
}

int run_audit(CLI::App* app, const ConfigFlags& flags, const EvalArgs& args) {
  const RunConfig cfg = flags.resolve(app, ckpt_echo(args.ckpt));
  const auto out = require_out_dir(cfg);
  const auto data = select_split(require_data(cfg), args.split, cfg.split_seed());

  std::vector<AuditRow> rows;
  Loaded loaded;
  if (!args.ckpt.empty()) {
    loaded = load_model(args.ckpt);
    ModelPredictor p(*loaded.model, loaded.ckpt->preprocessor, to_string(loaded.ckpt->model.arch));
    rows.push_back(inflation_audit(p.name(), pool(data, p.predict(data))));
  }
  CopyPrevPredictor copy;
  rows.push_back(inflation_audit(copy.name(), pool(data, copy.predict(data))));
  for (const auto& r : rows) {
    std::printf("%-18s clean F1=%s inflated F1=%s inflation=%s\n", r.model.c_str(),
                format_number(r.clean.metrics.f1).c_str(), format_number(r.inflated.metrics.f1).c_str(),
                r.inflation_defined ? (format_number(r.inflation_pct) + "%").c_str() : "undefined");
  }
  write_audit_csv(out / "audit.csv", rows);
  cfg.write_echo(out / kEchoFile);
  return kExitOk;
}

int run_importance(CLI::App* app, const ConfigFlags& flags, const EvalArgs& args, std::optional<double> threshold) {
  const RunConfig cfg = flags.resolve(app, ckpt_echo(args.ckpt));
  const auto out = require_out_dir(cfg);
  const auto data = select_split(require_data(cfg), args.split, cfg.split_seed());
  auto loaded = load_model(args.ckpt);
  const auto rep = channel_importance(*loaded.model, loaded.ckpt->preprocessor, data, threshold);
  std::printf("threshold %s, baseline F1 %s\n", format_number(rep.threshold).c_str(),
              format_number(rep.baseline_f1).c_str());
  for (const auto& r : rep.rows) {
    std::printf("%-13s %-7s dF1=%s\n", r.name.c_str(), std::string(to_string(r.group)).c_str(),
                format_number(r.delta_f1).c_str());
  }
  write_importance_csv(out / "importance.csv", rep);
  cfg.write_echo(out / kEchoFile);
  return kExitOk;
}

struct MapArgs {
  std::uint64_t sample_id = 0;
  int passes = kDefaultMcPasses;
  std::uint64_t mc_seed = 0;
};

int run_uncertainty(CLI::App* app, const ConfigFlags& flags, const EvalArgs& args, const MapArgs& m) {
  const RunConfig cfg = flags.resolve(app, ckpt_echo(args.ckpt));
  const auto out = require_out_dir(cfg);
  const auto data = require_data(cfg);
  auto loaded = load_model(args.ckpt);
  const auto x = model_input(data, find_sample(data, m.sample_id), loaded.ckpt->preprocessor);
  const auto u = mc_predict(*loaded.model, x, m.passes, m.mc_seed);
  const auto stem = "sample" + std::to_string(m.sample_id);
  write_raster(out / (stem + "_mean.fsr"), u.height, u.width, u.mean);
  write_raster(out / (stem + "_std.fsr"), u.height, u.width, u.std);
  cfg.write_echo(out / kEchoFile);
  std::printf("%d passes; mean/std rasters (%dx%d) written to %s\n", u.n_passes, u.height, u.width,
              out.string().c_str());
  return kExitOk;
}

int run_attention(CLI::App* app, const ConfigFlags& flags, const EvalArgs& args, const MapArgs& m) {
  const RunConfig cfg = flags.resolve(app, ckpt_echo(args.ckpt));
  const auto out = require_out_dir(cfg);
  const auto data = require_data(cfg);
  auto loaded = load_model(args.ckpt);
  const auto x = model_input(data, find_sample(data, m.sample_id), loaded.ckpt->preprocessor);
  const auto alphas = export_attention(*loaded.model, x);
  for (std::size_t s = 0; s < alphas.size(); ++s) {
    const auto& shape = alphas[s].shape();
    const int h = static_cast<int>(shape[shape.size() - 2]);
    const int w = static_cast<int>(shape[shape.size() - 1]);
    write_raster(out / ("sample" + std::to_string(m.sample_id) + "_alpha" + std::to_string(s) + ".fsr"), h, w,
                 alphas[s].values());
    std::printf("scale %zu: %dx%d\n", s, h, w);
  }
  cfg.write_echo(out / kEchoFile);
  return kExitOk;
}

int run_count(CLI::App* app, const ConfigFlags& flags, int height, int width) {
  const RunConfig cfg = flags.resolve(app);
  auto model = build<float>(cfg.model(), 0);
  const auto params = count_params(model);
  const auto flops = count_flops(model, height, width);

  std::string csv = "model,layer,params,flops\n";
  std::map<std::string, std::int64_t> layer_flops;
  for (const auto& l : flops.layers) layer_flops[l.layer] += l.flops;
  const auto name = to_string(model.config().arch);
  std::map<std::string, bool> seen;
  for (const auto& l : params.layers) {
    csv += name + "," + l.layer + "," + std::to_string(l.params) + "," + std::to_string(layer_flops[l.layer]) + "\n";
    seen[l.layer] = true;
  }
  // Parameter-free layers (pooling, upsampling, fusion arithmetic) only carry FLOPs.
  for (const auto& l : flops.layers) {
    if (!seen[l.layer]) {
      csv += name + "," + l.layer + ",0," + std::to_string(l.flops) + "\n";
      seen[l.layer] = true;
    }
  }
  csv += name + ",total," + std::to_string(params.total_params) + "," + std::to_string(flops.total_flops) + "\n";

  std::printf("%s width_mult=%s input %dx%d: %lld params, %lld FLOPs (%.3f GMAC)\n", name.c_str(),
              format_number(model.config().width_mult).c_str(), height, width,
              static_cast<long long>(params.total_params), static_cast<long long>(flops.total_flops),
              static_cast<double>(flops.total_flops) / 2e9);
  if (!cfg.get("out").empty()) {
    const auto out = require_out_dir(cfg);
    write_text(out / "count.csv", csv);
    cfg.write_echo(out / kEchoFile);
  } else {
    std::fputs(csv.c_str(), stdout);
  }
  return kExitOk;
}

int run_gradcheck(const GradcheckSuiteOptions& opt, const std::string& out, double tolerance) {
  std::string csv = "family,max_rel_error,coordinates,skipped,trials,pass\n";
  bool ok = true;
  for (const auto& r : run_gradcheck_suite(opt)) {
    const bool pass = r.max_rel_error < tolerance;
    ok = ok && pass;
    std::printf("%-28s %-12s coords=%-6zu skipped=%-5zu %s\n", r.family.c_str(), format_number(r.max_rel_error).c_str(),
                r.coordinates, r.skipped, pass ? "ok" : "FAIL");
    csv += r.family + "," + format_number(r.max_rel_error) + "," + std::to_string(r.coordinates) + "," +
           std::to_string(r.skipped) + "," + std::to_string(r.trials) + "," + (pass ? "1" : "0") + "\n";
  }
  if (!out.empty()) {
    fs::create_directories(out);
    write_text(fs::path(out) / "gradcheck.csv", csv);
  }
  return ok ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FireSenseNet toolkit: synthetic data, training, evaluation and analysis exports"};
  app.require_subcommand(1);

  GenData gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic dataset file");
  gen_cmd->add_option("--n", gen.n, "number of samples")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", gen.seed, "generator seed");
  gen_cmd->add_option("--size", gen.size, "patch side length (multiple of 8)");
  gen_cmd->add_option("--bias", gen.bias, "spread direction: north|east|south|west");
  gen_cmd->add_option("--empty-fraction", gen.empty_fraction, "probability of a fire-free patch");
  gen_cmd->add_option("--unknown-fraction", gen.unknown_fraction, "probability of a -1 label rectangle");
  gen_cmd->add_option("--out", gen.out, "output dataset file")->required();

  ConfigFlags stats_flags;
  std::string stats_split = "train";
  auto* stats_cmd = app.add_subcommand("stats", "Fit smoothing + normalization statistics");
  stats_flags.attach(stats_cmd);
  stats_cmd->add_option("--split", stats_split, "train|val|test|all");

  ConfigFlags train_flags;
  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model; writes checkpoint and history");
  train_flags.attach(train_cmd);
  train_cmd->add_flag("--resume", train_args.resume, "continue the run stored in --out");
  train_cmd->add_flag("--train-on-all", train_args.train_on_all, "train and validate on the whole dataset");
  train_cmd->add_option("--stop-after", train_args.stop_after, "pause after this many epochs (resume later)");

  ConfigFlags eval_flags;
  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Metrics and threshold sweep under a protocol");
  eval_flags.attach(eval_cmd);
  eval_cmd->add_option("--ckpt", eval_args.ckpt, "checkpoint file");
  eval_cmd->add_option("--model", eval_args.model, "checkpoint|dummy-copy-prev");
  eval_cmd->add_option("--protocol", eval_args.protocol, "clean|inflated|both");
  eval_cmd->add_option("--split", eval_args.split, "train|val|test|all");

  ConfigFlags audit_flags;
  EvalArgs audit_args;
  auto* audit_cmd = app.add_subcommand("audit", "Clean vs inflated F1 per model (copy-prev reference included)");
  audit_flags.attach(audit_cmd);
  audit_cmd->add_option("--ckpt", audit_args.ckpt, "checkpoint file (optional)");
  audit_cmd->add_option("--split", audit_args.split, "train|val|test|all");

  ConfigFlags imp_flags;
  EvalArgs imp_args;
  std::optional<double> imp_threshold;
  auto* imp_cmd = app.add_subcommand("importance", "Channel masking importance");
  imp_flags.attach(imp_cmd);
  imp_cmd->add_option("--ckpt", imp_args.ckpt, "checkpoint file")->required();
  imp_cmd->add_option("--split", imp_args.split, "train|val|test|all");
  imp_cmd->add_option("--threshold", imp_threshold, "fixed threshold (default: best clean sweep threshold)");

  ConfigFlags unc_flags;
  EvalArgs unc_args;
  MapArgs unc_map;
  auto* unc_cmd = app.add_subcommand("uncertainty", "MC-dropout mean/std rasters for one sample");
  unc_flags.attach(unc_cmd);
  unc_cmd->add_option("--ckpt", unc_args.ckpt, "checkpoint file")->required();
  unc_cmd->add_option("--sample-id", unc_map.sample_id, "sample id")->required();
  unc_cmd->add_option("--passes", unc_map.passes, "stochastic passes");
  unc_cmd->add_option("--mc-seed", unc_map.mc_seed, "dropout mask seed");

  ConfigFlags att_flags;
  EvalArgs att_args;
  MapArgs att_map;
  auto* att_cmd = app.add_subcommand("attention", "CAFIM alpha rasters for one sample");
  att_flags.attach(att_cmd);
  att_cmd->add_option("--ckpt", att_args.ckpt, "checkpoint file")->required();
  att_cmd->add_option("--sample-id", att_map.sample_id, "sample id")->required();

  ConfigFlags count_flags;
  int count_h = 64;
  int count_w = 64;
  auto* count_cmd = app.add_subcommand("count", "Parameter and FLOP counts per layer");
  count_flags.attach(count_cmd);
  count_cmd->add_option("--height", count_h, "input height");
  count_cmd->add_option("--width", count_w, "input width");

  GradcheckSuiteOptions gc;
  std::string gc_out;
  double gc_tol = 1e-3;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks per op family");
  gc_cmd->add_option("--seed", gc.seed, "seed");
  gc_cmd->add_option("--trials", gc.trials, "random instances per op");
  gc_cmd->add_option("--coords-per-tensor", gc.full_model_coords_per_tensor,
                     "coordinates per parameter tensor in the full-network check (0 = all)");
  gc_cmd->add_flag("!--skip-full-model", gc.full_model, "leave out the full-network check");
  gc_cmd->add_option("--tolerance", gc_tol, "pass threshold on the relative error");
  gc_cmd->add_option("--out", gc_out, "directory for gradcheck.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return gen.run();
    if (*stats_cmd) return run_stats(stats_flags.resolve(stats_cmd), stats_split);
    if (*train_cmd) return run_train(train_cmd, train_flags, train_args);
    if (*eval_cmd) return run_eval(eval_cmd, eval_flags, eval_args);
    if (*audit_cmd) return run_audit(audit_cmd, audit_flags, audit_args);
    if (*imp_cmd) return run_importance(imp_cmd, imp_flags, imp_args, imp_threshold);
    if (*unc_cmd) return run_uncertainty(unc_cmd, unc_flags, unc_args, unc_map);
    if (*att_cmd) return run_attention(att_cmd, att_flags, att_args, att_map);
    if (*count_cmd) return run_count(count_cmd, count_flags, count_h, count_w);
    if (*gc_cmd) return run_gradcheck(gc, gc_out, gc_tol);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
