// Command-line front end: label | train | evaluate | backtest | reproduce.
//
// Exit status: 0 on success, 1 on a configuration error, 2 on any runtime
// error. Artifacts are written to a temporary sibling and renamed into
// place, so a failed run leaves nothing behind.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mimstocr/experiment.hpp"

namespace fs = std::filesystem;
using namespace mimstocr;

namespace {

struct Artifact {
  std::string path;
  std::string body;
};

// Writes every artifact to `<path>.tmp`, then renames all of them.
void commit(const std::vector<Artifact>& files) {
  std::vector<std::string> staged;
  try {
    for (const auto& a : files) {
      const fs::path p(a.path);
      if (p.has_parent_path()) fs::create_directories(p.parent_path());
      const std::string tmp = a.path + ".tmp";
      std::ofstream out(tmp, std::ios::binary);
      if (!out) throw DataError("cannot write " + a.path);
      out << a.body;
      out.close();
      if (!out) throw DataError("short write to " + a.path);
      staged.push_back(tmp);
    }
  } catch (...) {
    for (const auto& t : staged) fs::remove(t);
    throw;
  }
  for (std::size_t k = 0; k < files.size(); ++k) fs::rename(staged[k], files[k].path);
}

nlohmann::json config_json(const ExperimentConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : cfg.resolved()) j[k] = v;
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  for (const auto& [k, v] : j.items()) cfg.set(k, v.get<std::string>());
  return cfg;
}

struct CommonOpts {
  std::string config_file;
  std::vector<std::string> sets;
};

void add_common(CLI::App* sub, CommonOpts& o) {
  sub->add_option("-c,--config", o.config_file, "key=value config file");
  sub->add_option("-s,--set", o.sets, "override one key, e.g. --set train.epochs=20")->allow_extra_args(false);
}

void apply_common(ExperimentConfig& cfg, const CommonOpts& o) {
  if (!o.config_file.empty()) apply_config_file(cfg, o.config_file);
  for (const auto& s : o.sets) apply_assignment(cfg, s, "--set");
  cfg.validate();
}

ExperimentConfig resolve(const CommonOpts& o) {
  ExperimentConfig cfg;
  apply_common(cfg, o);
  return cfg;
}

// Checkpoint config first, then file and --set overrides on top.
ExperimentConfig resolve_from_checkpoint(const std::string& path, const CommonOpts& o, BackboneParams& bp) {
  if (path.empty()) throw ConfigError("--checkpoint is required");
  if (!fs::exists(path)) throw DataError("checkpoint not found: " + path);
  nlohmann::json meta;
  bp = load_checkpoint(path, &meta);
  ExperimentConfig cfg = meta.contains("config") ? config_from_json(meta.at("config")) : ExperimentConfig{};
  apply_common(cfg, o);
  return cfg;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

int cmd_label(const CommonOpts& o, const std::string& out) {
  const ExperimentConfig cfg = resolve(o);
  const StockPanel panel = load_panel(cfg);
  const LevelMatrix levels = class_labels(panel, cfg.sample);
  std::ostringstream s;
  s << cfg.provenance(true) << "date,ticker,level\n";
  for (std::size_t t = 0; t < levels.rows; ++t) {
    for (std::size_t i = 0; i < levels.cols; ++i) {
      if (levels.has(t, i)) s << panel.dates[t] << ',' << panel.tickers[i] << ',' << int(levels.at(t, i)) << '\n';
    }
  }
  commit({{out, s.str()}});
  return 0;
}

int cmd_train(const CommonOpts& o, const std::string& ckpt, const std::string& log_path) {
  const ExperimentConfig cfg = resolve(o);
  const PreparedData data = prepare(cfg);
  const FitResult fr = train_model(cfg, data);
  const nlohmann::json meta = {{"config", config_json(cfg)},
                               {"seed", cfg.seed},
                               {"best_epoch", fr.best_epoch},
                               {"best_valid_ic", fr.best_valid_ic},
                               {"epochs_run", fr.epochs_run}};
  std::ostringstream log;
  log << cfg.provenance(true);
  write_epoch_log(log, fr.log);
  commit({{ckpt, params_to_json(fr.params, meta).dump(1) + "\n"}, {log_path, log.str()}});
  std::cerr << "trained " << fr.epochs_run << " epochs, best epoch " << fr.best_epoch << " (valid IC "
            << fmt(fr.best_valid_ic) << ")\n";
  return 0;
}

int cmd_evaluate(const CommonOpts& o, const std::string& ckpt, const std::string& out, const std::string& k_out) {
  BackboneParams bp;
  const ExperimentConfig cfg = resolve_from_checkpoint(ckpt, o, bp);
  const PreparedData data = prepare(cfg);
  const EvalReport rep = evaluate_model(cfg, data, bp);
  nlohmann::json j = to_json(rep);
  j["config"] = config_json(cfg);
  j["checkpoint"] = ckpt;
  std::ostringstream k;
  k << cfg.provenance(true) << "k,count\n";
  for (const auto& [kv, n] : rep.k_histogram) k << kv << ',' << n << '\n';
  commit({{out, j.dump(2) + "\n"}, {k_out, k.str()}});
  std::cout << "IC " << fmt(rep.ic) << "  RankIC " << fmt(rep.rank_ic) << "  days " << rep.days << '\n';
  return 0;
}

int cmd_backtest(const CommonOpts& o, const std::string& ckpt, const std::string& out) {
  BackboneParams bp;
  const ExperimentConfig cfg = resolve_from_checkpoint(ckpt, o, bp);
  const PreparedData data = prepare(cfg);
  const BacktestLedger ledger = backtest_model(cfg, data, bp);
  std::ostringstream s;
  s << cfg.provenance(true);
  write_ledger_csv(s, ledger);
  commit({{out, s.str()}});
  std::cout << "cumulative return " << fmt(cumulative_return(ledger)) << "%\n";
  return 0;
}

int cmd_reproduce(const CommonOpts& o, const std::string& out, std::size_t jobs) {
  const ExperimentConfig cfg = resolve(o);
  const StockPanel panel = load_panel(cfg);
  const auto cells = ablation_matrix(cfg);
  const auto rows = run_ablations(cells, panel, jobs);
  std::ostringstream s;
  s << cfg.provenance(true);
  write_ablation_csv(s, rows, cfg.precision_n);
  commit({{out, s.str()}});
  std::cout << s.str().substr(cfg.provenance(true).size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task stock ranking: labels, training, evaluation and backtests"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  CommonOpts common;
  std::string label_out, eval_out, ledger_out, table_out;
  std::string ckpt, log_path, k_out;
  std::size_t jobs = 1;

  auto* label = app.add_subcommand("label", "write momentum (or rise/fall) labels as date,ticker,level");
  add_common(label, common);
  label->add_option("-o,--out", label_out, "label CSV")->default_val("labels.csv");

  auto* train = app.add_subcommand("train", "train a model; writes a checkpoint and an epoch log");
  add_common(train, common);
  train->add_option("--checkpoint", ckpt, "checkpoint JSON")->default_val("checkpoint.json");
  train->add_option("--log", log_path, "epoch log CSV")->default_val("epochs.csv");

  auto* evaluate = app.add_subcommand("evaluate", "IC, RankIC and Precision@N on the test split");
  add_common(evaluate, common);
  evaluate->add_option("--checkpoint", ckpt, "checkpoint JSON")->required();
  evaluate->add_option("-o,--out", eval_out, "report JSON")->default_val("eval.json");
  evaluate->add_option("--k-out", k_out, "adaptive-k histogram CSV")->default_val("k_hist.csv");

  auto* backtest = app.add_subcommand("backtest", "daily top-N backtest on the test split");
  add_common(backtest, common);
  backtest->add_option("--checkpoint", ckpt, "checkpoint JSON")->required();
  backtest->add_option("-o,--out", ledger_out, "ledger CSV")->default_val("ledger.csv");

  auto* reproduce = app.add_subcommand("reproduce", "run the ablation matrix and emit a comparison table");
  add_common(reproduce, common);
  reproduce->add_option("-o,--out", table_out, "table CSV")->default_val("ablation.csv");
  reproduce->add_option("-j,--jobs", jobs, "cells run in parallel")->default_val(1)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*label) return cmd_label(common, label_out);
    if (*train) return cmd_train(common, ckpt, log_path);
    if (*evaluate) return cmd_evaluate(common, ckpt, eval_out, k_out);
    if (*backtest) return cmd_backtest(common, ckpt, ledger_out);
    if (*reproduce) return cmd_reproduce(common, table_out, jobs);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
