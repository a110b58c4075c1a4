// Command-line workbench for the HetNet mirror-detection stack: training,
// evaluation, prediction, efficiency profiling, ablation grids and synthetic
// data generation.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hetnet/checkpoint.hpp"
#include "hetnet/efficiency.hpp"
#include "hetnet/image_io.hpp"
#include "hetnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace hetnet;

namespace {

struct ConfigCli {
  std::string config_file;
  std::vector<std::string> overrides;  // key=value pairs routed into the JSON tree
};

void add_config_options(CLI::App* cmd, ConfigCli& cc) {
  cmd->add_option("--config", cc.config_file, "JSON run configuration file");
  cmd->add_option("--set", cc.overrides,
                  "Override a config field, e.g. --set epochs=20 --set optimizer.max_lr=0.005");
}

// Builds one sparse JSON document from dotted key=value pairs.
std::string overrides_to_json(const std::vector<std::string>& overrides) {
  nlohmann::json doc = nlohmann::json::object();
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    nlohmann::json leaf;
    if (nlohmann::json::accept(value)) {
      leaf = nlohmann::json::parse(value);
    } else {
      leaf = value;  // bare words become strings
    }
    // wrap the leaf into nested objects along the dotted path, innermost first
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (true) {
      const auto dot = key.find('.', pos);
      if (dot == std::string::npos) {
        parts.push_back(key.substr(pos));
        break;
      }
      parts.push_back(key.substr(pos, dot - pos));
      pos = dot + 1;
    }
    nlohmann::json node = leaf;
    for (auto it = parts.rbegin(); it != parts.rend(); ++it)
      node = nlohmann::json{{*it, node}};
    doc.merge_patch(node);
  }
  return doc.dump();
}

RunConfig resolve_config(const ConfigCli& cc) {
  RunConfig cfg;
  if (!cc.config_file.empty()) {
    std::ifstream is(cc.config_file);
    if (!is) throw ConfigError("cannot open config file '" + cc.config_file + "'");
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    run_config_apply_json(cfg, text);
  }
  if (!cc.overrides.empty()) run_config_apply_json(cfg, overrides_to_json(cc.overrides));
  return cfg;
}

void print_report(const MetricReport& rep) {
  std::cout << "images:    " << rep.n_images << "\n"
            << "threshold: " << rep.threshold << "\n"
            << "MAE:       " << rep.mae << "\n"
            << "IoU:       " << rep.iou << "\n"
            << "F_beta:    " << rep.f_beta << "\n";
}

std::vector<std::string> collect_images(const std::string& input) {
  std::vector<std::string> paths;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input))
      if (e.is_regular_file()) paths.push_back(e.path().string());
    std::sort(paths.begin(), paths.end());
  } else {
    paths.push_back(input);
  }
  return paths;
}

int run_ablate(const std::string& grid_name, const RunConfig& base, const std::string& out_csv) {
  AblationGrid grid = make_grid(grid_name, base.network);
  // Build each row up front so a broken config aborts before any training.
  for (const auto& [label, net_cfg] : grid.rows) {
    try {
      net_cfg.validate();
      build_network(net_cfg, base.seed);
    } catch (const std::exception& e) {
      throw ConfigError("ablation row '" + label + "' failed to build: " + e.what());
    }
  }
  std::ostringstream csv;
  csv << "label,mae,iou,f_beta,params_m,flops_gmac,fps\n";
  std::cout << "label        MAE     IoU     F_beta  Para(M)  FLOPs(GMac)  FPS\n";
  for (const auto& [label, net_cfg] : grid.rows) {
    RunConfig row_cfg = base;
    row_cfg.network = net_cfg;
    row_cfg.output_dir = (fs::path(base.output_dir) / ("ablate_" + grid.name) / label).string();
    TrainResult tr = train_run(row_cfg, /*verbose=*/false);
    MetricReport rep = tr.final_metrics
                           ? *tr.final_metrics
                           : evaluate_checkpoint(tr.final_checkpoint, row_cfg.dataset_root,
                                                 Split::train, row_cfg.inference_size);
    auto net = load_network(tr.final_checkpoint);
    BenchOptions bench;
    bench.warmup_iters = 3;
    bench.timed_iters = 10;
    EfficiencyReport eff = profile(*net, row_cfg.inference_size, row_cfg.inference_size, bench);
    char line[256];
    std::snprintf(line, sizeof(line), "%-12s %-7.4f %-7.4f %-7.4f %-8.3f %-12.4f %.2f\n",
                  label.c_str(), rep.mae, rep.iou, rep.f_beta, eff.params_millions, eff.flops_gmac,
                  eff.fps);
    std::cout << line << std::flush;
    csv << label << "," << rep.mae << "," << rep.iou << "," << rep.f_beta << ","
        << eff.params_millions << "," << eff.flops_gmac << "," << eff.fps << "\n";
  }
  if (!out_csv.empty()) {
    std::ofstream os(out_csv);
    os << csv.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HetNet mirror detection workbench"};
  app.require_subcommand(1);

  ConfigCli train_cc, eval_cc, bench_cc, ablate_cc, describe_cc;

  auto* train_cmd = app.add_subcommand("train", "Train a network");
  add_config_options(train_cmd, train_cc);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  std::string eval_ckpt, eval_root, eval_split = "test", eval_csv;
  int eval_size = 0;
  bool eval_adaptive = false;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval_root, "Dataset root")->required();
  eval_cmd->add_option("--split", eval_split, "train|test");
  eval_cmd->add_option("--inference-size", eval_size, "Override the inference resolution");
  eval_cmd->add_flag("--adaptive-threshold", eval_adaptive,
                     "Also report metrics at the per-image 2*mean threshold");
  eval_cmd->add_option("--csv", eval_csv, "Write the report as CSV");

  auto* predict_cmd = app.add_subcommand("predict", "Write probability/binary maps for images");
  std::string pred_ckpt, pred_input, pred_out = "predictions";
  int pred_size = 0;
  predict_cmd->add_option("--checkpoint", pred_ckpt, "Checkpoint file")->required();
  predict_cmd->add_option("--input", pred_input, "Image file or directory")->required();
  predict_cmd->add_option("--out", pred_out, "Output directory");
  predict_cmd->add_option("--inference-size", pred_size, "Override the inference resolution");

  auto* bench_cmd = app.add_subcommand("bench", "Profile parameters, analytic MACs and FPS");
  add_config_options(bench_cmd, bench_cc);
  std::string bench_ckpt, bench_csv;
  int bench_size = 0, bench_warmup = 20, bench_iters = 100;
  bench_cmd->add_option("--checkpoint", bench_ckpt, "Profile the network from a checkpoint");
  bench_cmd->add_option("--input-size", bench_size, "Square input size (default: inference size)");
  bench_cmd->add_option("--warmup", bench_warmup, "Warmup iterations");
  bench_cmd->add_option("--iters", bench_iters, "Timed iterations");
  bench_cmd->add_option("--csv", bench_csv, "Append the report row to a CSV file");

  auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate an ablation grid");
  add_config_options(ablate_cmd, ablate_cc);
  std::string grid_name, ablate_csv;
  ablate_cmd->add_option("--grid", grid_name, "architecture|components|rotation")->required();
  ablate_cmd->add_option("--csv", ablate_csv, "Write the results table as CSV");

  auto* synth_cmd = app.add_subcommand("synth-data", "Generate a synthetic mirror dataset");
  std::string synth_root = "data/synthetic";
  int synth_train = 200, synth_test = 40, synth_size = 64;
  unsigned synth_seed = 1;
  synth_cmd->add_option("--out", synth_root, "Dataset root to create");
  synth_cmd->add_option("--n-train", synth_train, "Training scenes");
  synth_cmd->add_option("--n-test", synth_test, "Test scenes");
  synth_cmd->add_option("--size", synth_size, "Scene size in pixels");
  synth_cmd->add_option("--seed", synth_seed, "Generator seed");

  auto* ingest_cmd = app.add_subcommand("ingest", "Normalize an existing dataset layout");
  std::string ingest_src, ingest_dst, ingest_split = "train";
  std::string ingest_image_dir = "image", ingest_mask_dir = "mask";
  ingest_cmd->add_option("--src", ingest_src, "Source directory")->required();
  ingest_cmd->add_option("--dst", ingest_dst, "Destination dataset root")->required();
  ingest_cmd->add_option("--split", ingest_split, "train|test");
  ingest_cmd->add_option("--image-dir", ingest_image_dir, "Image subdirectory name in the source");
  ingest_cmd->add_option("--mask-dir", ingest_mask_dir, "Mask subdirectory name in the source");

  auto* describe_cmd = app.add_subcommand("describe", "Print the layer table");
  add_config_options(describe_cmd, describe_cc);
  int describe_size = 0;

  describe_cmd->add_option("--input-size", describe_size, "Square input size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (train_cmd->parsed()) {
      RunConfig cfg = resolve_config(train_cc);
      TrainResult result = train_run(cfg);
      std::cout << "run dir:          " << result.run_dir << "\n"
                << "final checkpoint: " << result.final_checkpoint << "\n";
      if (result.final_metrics) print_report(*result.final_metrics);
    } else if (eval_cmd->parsed()) {
      EvalOptions opts;
      opts.adaptive = eval_adaptive;
      MetricReport rep = evaluate_checkpoint(
          eval_ckpt, eval_root, split_from_string(eval_split),
          eval_size > 0 ? std::optional<int>(eval_size) : std::nullopt, opts);
      print_report(rep);
      if (!eval_csv.empty()) {
        std::ofstream os(eval_csv);
        os << "mae,iou,f_beta,n_images,threshold\n"
           << rep.mae << "," << rep.iou << "," << rep.f_beta << "," << rep.n_images << ","
           << rep.threshold << "\n";
      }
    } else if (predict_cmd->parsed()) {
      auto net = load_network(pred_ckpt);
      int size = pred_size;
      if (size == 0) {
        auto rc = checkpoint_run_config(pred_ckpt);
        size = rc ? rc->inference_size : 352;
      }
      PredictStats stats =
          predict_to_dir(*net, collect_images(pred_input), pred_out, snap_to_stride(size));
      std::cout << "wrote " << stats.written << " prediction pairs to " << pred_out << "\n";
      if (stats.written == 0 && stats.failed > 0) return 2;
    } else if (bench_cmd->parsed()) {
      std::unique_ptr<HetNet> net;
      int size = bench_size;
      if (!bench_ckpt.empty()) {
        net = load_network(bench_ckpt);
        if (size == 0) {
          auto rc = checkpoint_run_config(bench_ckpt);
          size = rc ? rc->inference_size : 352;
        }
      } else {
        RunConfig cfg = resolve_config(bench_cc);
        net = build_network(cfg.network, cfg.seed);
        if (size == 0) size = cfg.inference_size;
      }
      size = snap_to_stride(size);
      BenchOptions opts;
      opts.warmup_iters = bench_warmup;
      opts.timed_iters = bench_iters;
      EfficiencyReport rep = profile(*net, size, size, opts);
      std::cout << "input size:  " << size << "x" << size << "\n"
                << "Para. (M):   " << rep.params_millions << "\n"
                << "FLOPs (GMac):" << rep.flops_gmac << "\n"
                << "FPS:         " << rep.fps << "\n"
                << "device:      " << rep.device << "\n";
      if (!bench_csv.empty()) {
        const bool fresh = !fs::exists(bench_csv);
        std::ofstream os(bench_csv, std::ios::app);
        if (fresh) os << EfficiencyReport::csv_header() << "\n";
        os << rep.csv_row("hetnet") << "\n";
      }
    } else if (ablate_cmd->parsed()) {
      RunConfig cfg = resolve_config(ablate_cc);
      return run_ablate(grid_name, cfg, ablate_csv);
    } else if (synth_cmd->parsed()) {
      auto train_recs = generate_synthetic(synth_train, synth_size, synth_seed);
      auto test_recs = generate_synthetic(synth_test, synth_size, synth_seed + 1);
      write_dataset(train_recs, synth_root, Split::train);
      write_dataset(test_recs, synth_root, Split::test);
      std::cout << "wrote " << train_recs.size() << " train and " << test_recs.size()
                << " test scenes under " << synth_root << "\n";
    } else if (ingest_cmd->parsed()) {
      const fs::path src(ingest_src);
      const fs::path dst = fs::path(ingest_dst) / ingest_split;
      if (!fs::is_directory(src / ingest_image_dir) || !fs::is_directory(src / ingest_mask_dir))
        throw InputError("ingest: expected '" + (src / ingest_image_dir).string() + "' and '" +
                         (src / ingest_mask_dir).string() + "'");
      fs::create_directories(dst / "image");
      fs::create_directories(dst / "mask");
      int n = 0;
      for (const auto& e : fs::directory_iterator(src / ingest_image_dir)) {
        if (!e.is_regular_file()) continue;
        Tensor img = load_image_rgb(e.path().string());
        const std::string stem = e.path().stem().string();
        // locate the mask by stem, any extension
        fs::path mask_path;
        for (const auto& m : fs::directory_iterator(src / ingest_mask_dir))
          if (m.path().stem() == stem) mask_path = m.path();
        if (mask_path.empty()) throw InputError("ingest: no mask for '" + stem + "'");
        MaskLoadResult mask = load_mask(mask_path.string());
        save_rgb_png((dst / "image" / (stem + ".png")).string(), img);
        save_gray_png((dst / "mask" / (stem + ".png")).string(), mask.mask);
        ++n;
      }
      std::cout << "ingested " << n << " pairs into " << dst.string() << "\n";
    } else if (describe_cmd->parsed()) {
      RunConfig cfg = resolve_config(describe_cc);
      auto net = build_network(cfg.network, cfg.seed);
      const int size = snap_to_stride(describe_size > 0 ? describe_size : cfg.inference_size);
      std::cout << format_layer_table(net->describe(size, size));
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
