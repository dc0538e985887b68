#include "acconet/cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <iomanip>
#include <list>
#include <iostream>
#include <optional>

#include "acconet/config.hpp"
#include "acconet/metrics.hpp"
#include "acconet/plot.hpp"

namespace acconet::cli {

namespace {

namespace fs = std::filesystem;

// Flags shared by train / infer: each maps onto one config key and, when
// given, overrides both the file and the defaults.
struct Overrides {
  std::string config;
  std::vector<std::pair<std::string, std::string>> values;
  std::vector<std::string> extra;  // --set key=value

  void add(CLI::App* app, const std::string& flag, const std::string& key,
           const std::string& help) {
    auto* slot = &storage.emplace_back();
    app->add_option(flag, *slot, help)->each([this, key](const std::string& v) {
      values.emplace_back(key, v);
    });
  }
  void add_flag(CLI::App* app, const std::string& flag, const std::string& key,
                const std::string& help) {
    app->add_flag_callback(flag, [this, key] { values.emplace_back(key, "true"); }, help);
  }

  ExperimentConfig resolve() const {
    ExperimentConfig cfg;
    if (!config.empty()) apply_config_file(cfg, config);
    for (const auto& [k, v] : values) cfg.set(k, v);
    for (const std::string& kv : extra) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
  }

  std::list<std::string> storage;
};

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
  o.add(app, "--data-root", "data_root", "dataset root");
  o.add(app, "--out", "out_dir", "run directory");
  o.add(app, "--seed", "seed", "master seed");
  o.add(app, "--epochs", "epochs", "training epochs");
  o.add(app, "--batch-size", "batch_size", "batch size");
  o.add(app, "--lr", "lr", "initial learning rate");
  o.add(app, "--ablation", "ablation", "network variant");
  o.add(app, "--loss-mode", "loss_mode", "both | bce | iou");
  o.add(app, "--backbone", "backbone", "backbone name");
  o.add(app, "--max-iterations", "max_iterations", "optimizer-step budget");
  o.add_flag(app, "--micro", "micro", "scaled-down schedule");
  app->add_option("--set", o.extra, "override any config key (key=value)");
}

void print_table(std::ostream& out, const ExperimentConfig& cfg) {
  std::size_t width = 0;
  for (const auto& [k, v] : cfg.entries()) width = std::max(width, k.size());
  for (const auto& [k, v] : cfg.entries()) {
    out << std::left << std::setw(static_cast<int>(width)) << k << " = " << v << '\n';
  }
  out << std::left << std::setw(static_cast<int>(width)) << "fingerprint"
      << " = " << cfg.train.fingerprint() << '\n';
}

fs::path split_dir(const ExperimentConfig& cfg, const char* sub) {
  if (cfg.data_root.empty()) throw ConfigError("data_root is not set");
  return cfg.data_root / cfg.eval_split / sub;
}

void print_report(std::ostream& out, const metrics::MetricReport& r) {
  out << std::fixed << std::setprecision(4) << "images   " << r.images << '\n'
      << "S        " << r.s_measure << '\n'
      << "maxF     " << r.max_f << "   meanF " << r.mean_f << "   adpF " << r.adp_f << '\n'
      << "maxE     " << r.max_e << "   meanE " << r.mean_e << "   adpE " << r.adp_e << '\n'
      << "MAE      " << r.mae << '\n';
  out.unsetf(std::ios::floatfield);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ACCoNet saliency detection: training, inference and evaluation",
               args.empty() ? "acconet" : args[0]};
  app.require_subcommand(1);

  Overrides train_o, infer_o, eval_o;
  bool dry_run = false;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  add_common(train_cmd, train_o);
  train_cmd->add_flag("--dry-run", dry_run, "validate and print the resolved config");
  std::int64_t log_every = 10;
  train_cmd->add_option("--log-every", log_every, "print every N iterations");

  auto* infer_cmd = app.add_subcommand("infer", "write saliency maps");
  add_common(infer_cmd, infer_o);
  std::string checkpoint, images, pred_out;
  infer_cmd->add_option("--checkpoint", checkpoint, "checkpoint (default: newest in run dir)");
  infer_cmd->add_option("--images", images, "image directory (default: <data-root>/<split>/images)");
  infer_cmd->add_option("--pred", pred_out, "output directory (default: <out>/predictions)");

  auto* eval_cmd = app.add_subcommand("eval", "score predictions against ground truth");
  std::string pred_dir, gt_dir;
  eval_o.add(eval_cmd, "--out", "out_dir", "directory for the report");
  eval_o.add(eval_cmd, "--data-root", "data_root", "dataset root");
  eval_cmd->add_option("--config", eval_o.config, "config file")->check(CLI::ExistingFile);
  eval_cmd->add_option("--pred", pred_dir, "prediction directory");
  eval_cmd->add_option("--gt", gt_dir, "ground-truth directory");

  auto* plot_cmd = app.add_subcommand("plot-pr", "plot PR-curve files");
  std::vector<std::string> curve_files;
  std::string plot_out = "pr_curve.png";
  plot_cmd->add_option("inputs", curve_files, "PR-curve CSV files")->required()->check(CLI::ExistingFile);
  plot_cmd->add_option("-o,--output", plot_out, "output PNG; raw rows go next to it as .csv");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*train_cmd) {
      ExperimentConfig cfg = train_o.resolve();
      cfg.train.validate();
      if (dry_run) {
        print_table(out, cfg);
        return 0;
      }
      if (cfg.data_root.empty()) throw ConfigError("data_root is not set");
      fs::create_directories(cfg.out_dir);
      std::ofstream(cfg.out_dir / "config.txt", std::ios::trunc) << to_config_text(cfg);
      const auto result = train::train(
          cfg.train, cfg.data_root, cfg.out_dir, [&](const train::IterationLog& l) {
            if (log_every > 0 && l.iteration % log_every == 0) {
              out << "iter " << l.iteration << " epoch " << l.epoch << " lr " << l.lr
                  << " loss " << l.loss.total << '\n';
            }
          });
      out << "trained " << result.epochs_completed << " epochs, " << result.iterations
          << " iterations; checkpoint " << result.last_checkpoint.string() << '\n';
      return 0;
    }
    if (*infer_cmd) {
      const ExperimentConfig cfg = infer_o.resolve();
      const fs::path ckpt = checkpoint.empty() ? train::latest_checkpoint(cfg.out_dir)
                                               : fs::path(checkpoint);
      if (ckpt.empty() || !fs::exists(ckpt)) {
        throw std::runtime_error("no checkpoint found (looked in " +
                                 (cfg.out_dir / "checkpoints").string() + ")");
      }
      const fs::path img_dir = images.empty() ? split_dir(cfg, "images") : fs::path(images);
      const fs::path dst = pred_out.empty() ? cfg.out_dir / "predictions" : fs::path(pred_out);
      const auto written = train::infer(cfg.train, ckpt, img_dir, dst);
      out << "wrote " << written.size() << " maps to " << dst.string() << '\n';
      return 0;
    }
    if (*eval_cmd) {
      const ExperimentConfig cfg = eval_o.resolve();
      const fs::path p = pred_dir.empty() ? cfg.out_dir / "predictions" : fs::path(pred_dir);
      const fs::path g = gt_dir.empty() ? split_dir(cfg, "gt") : fs::path(gt_dir);
      const metrics::MetricReport report = metrics::evaluate_dataset(p, g);
      fs::create_directories(cfg.out_dir);
      metrics::write_report(cfg.out_dir / cfg.report_name, report);
      metrics::write_pr_curve(cfg.out_dir / cfg.pr_curve_name, report);
      print_report(out, report);
      out << "report: " << (cfg.out_dir / cfg.report_name).string() << '\n';
      return 0;
    }
    if (*plot_cmd) {
      std::vector<plot::NamedCurve> curves;
      for (const std::string& f : curve_files) {
        curves.push_back({fs::path(f).stem().string(), metrics::read_pr_curve(f)});
      }
      const fs::path png = plot_out;
      plot::plot_pr_curves(curves, png);
      fs::path csv = png;
      csv.replace_extension(".csv");
      plot::write_combined_csv(curves, csv);
      out << "plot: " << png.string() << "\nrows: " << csv.string() << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace acconet::cli
