#include "hetnet/trainer.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "hetnet/checkpoint.hpp"
#include "hetnet/image_io.hpp"

namespace fs = std::filesystem;

namespace hetnet {

int snap_to_stride(int size) {
  const int snapped = std::max(32, ((size + 15) / 32) * 32);
  if (snapped != size)
    std::cerr << "[eval] warning: inference size " << size << " is not divisible by 32, using "
              << snapped << "\n";
  return snapped;
}

Tensor predict_probability(HetNet& net, const Tensor& image, int inference_size) {
  const Shape4 s = image.shape();
  Tensor resized = bilinear_resize(image, inference_size, inference_size);
  Tensor prob = net.predict(resized);
  return bilinear_resize(prob, s.h, s.w);
}

MetricReport evaluate_records(HetNet& net, const std::vector<SampleRecord>& records,
                              int inference_size, EvalOptions opts) {
  MetricAccumulator acc(opts);
  for (const auto& rec : records)
    acc.add(predict_probability(net, rec.image, inference_size), rec.mask);
  return acc.report();
}

namespace {

std::map<std::string, std::string> checkpoint_meta_for(const RunConfig& cfg) {
  return {{"run_config", run_config_to_json(cfg)},
          {"network_config", network_config_to_json(cfg.network)}};
}

}  // namespace

TrainResult train_run(const RunConfig& config, bool verbose) {
  config.validate();
  if (config.augment.crop_size % 32 != 0)
    throw ConfigError("train: augment.crop_size must be divisible by 32");

  const fs::path run_dir(config.output_dir);
  fs::create_directories(run_dir / "checkpoints");
  fs::create_directories(run_dir / "logs");
  fs::create_directories(run_dir / "predictions");
  {
    std::ofstream os(run_dir / "config.resolved");
    os << run_config_to_json(config) << "\n";
  }

  auto net = build_network(config.network, config.seed);
  std::vector<SampleRecord> train_set = load_dataset(config.dataset_root, Split::train);
  std::vector<SampleRecord> test_set;
  bool has_test = true;
  try {
    test_set = load_dataset(config.dataset_root, Split::test);
  } catch (const InputError&) {
    has_test = false;
  }

  const int inference_size = snap_to_stride(config.inference_size);

  TrainResult result;
  result.run_dir = run_dir.string();
  result.final_checkpoint = (run_dir / "checkpoints" / "final.ckpt").string();
  result.best_checkpoint = (run_dir / "checkpoints" / "best.ckpt").string();

  std::ofstream loss_csv(run_dir / "logs" / "loss.csv");
  loss_csv << "step,l_bce_edge,ppa_0,ppa_1,ppa_2,ppa_3,ppa_4,total\n";
  std::ofstream metrics_csv(run_dir / "logs" / "metrics.csv");
  metrics_csv << "epoch,split,mae,iou,f_beta,mean_total_loss\n";

  if (config.epochs == 0) {
    save_checkpoint(result.final_checkpoint, *net, checkpoint_meta_for(config));
    save_checkpoint(result.best_checkpoint, *net, checkpoint_meta_for(config));
    if (has_test) result.final_metrics = evaluate_records(*net, test_set, inference_size);
    return result;
  }

  Sgd opt(*net, config.optimizer);
  const std::int64_t steps_per_epoch =
      (static_cast<std::int64_t>(train_set.size()) + config.batch_size - 1) / config.batch_size;
  const std::int64_t total_steps = steps_per_epoch * config.epochs;

  double best_iou = -1.0;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    net->set_train(true);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937 shuffle_rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch), 1u << 20));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    std::int64_t epoch_batches = 0;
    for (std::size_t off = 0; off < order.size(); off += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t take =
          std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), order.size() - off);
      std::vector<SampleRecord> augmented;
      augmented.reserve(take);
      for (std::size_t i = 0; i < take; ++i) {
        std::mt19937 aug_rng(
            derive_seed(config.seed, static_cast<std::uint64_t>(epoch), off + i));
        augmented.push_back(augment(train_set[order[off + i]], config.augment, aug_rng));
      }
      std::vector<std::size_t> idx(take);
      std::iota(idx.begin(), idx.end(), 0);
      Batch batch = make_batch(augmented, idx);

      FusionGraphOutputs out = net->forward(Variable(batch.images), RunMode::train);
      LossTerms loss = total_loss(out, batch.masks, batch.edges);
      opt.zero_grad();
      backward(loss.total);
      opt.step(lr_at(config.optimizer, step, total_steps));

      loss_csv << step << "," << loss.l_bce_edge;
      for (double v : loss.l_ppa_per_scale) loss_csv << "," << v;
      loss_csv << "," << loss.total_value << "\n";
      epoch_loss += loss.total_value;
      ++epoch_batches;
      ++step;
    }
    epoch_loss /= static_cast<double>(std::max<std::int64_t>(1, epoch_batches));
    if (epoch == 0) result.first_epoch_loss = epoch_loss;
    result.last_epoch_loss = epoch_loss;

    if (has_test) {
      MetricReport rep = evaluate_records(*net, test_set, inference_size);
      metrics_csv << epoch << ",test," << rep.mae << "," << rep.iou << "," << rep.f_beta << ","
                  << epoch_loss << "\n";
      metrics_csv.flush();
      if (rep.iou > best_iou) {
        best_iou = rep.iou;
        save_checkpoint(result.best_checkpoint, *net, checkpoint_meta_for(config));
      }
      if (verbose)
        std::cout << "epoch " << epoch << "  loss " << epoch_loss << "  test iou " << rep.iou
                  << "\n";
      if (epoch == config.epochs - 1) result.final_metrics = rep;
    } else {
      metrics_csv << epoch << ",train,,,," << epoch_loss << "\n";
      if (verbose) std::cout << "epoch " << epoch << "  loss " << epoch_loss << "\n";
    }
    if (config.checkpoint_interval > 0 && (epoch + 1) % config.checkpoint_interval == 0)
      save_checkpoint((run_dir / "checkpoints" / ("epoch_" + std::to_string(epoch + 1) + ".ckpt"))
                          .string(),
                      *net, checkpoint_meta_for(config));
  }
  result.steps = step;
  save_checkpoint(result.final_checkpoint, *net, checkpoint_meta_for(config));
  if (best_iou < 0.0) save_checkpoint(result.best_checkpoint, *net, checkpoint_meta_for(config));
  return result;
}

std::unique_ptr<HetNet> load_network(const std::string& checkpoint_path) {
  auto meta = read_checkpoint_meta(checkpoint_path);
  auto it = meta.find("network_config");
  if (it == meta.end())
    throw ConfigError("checkpoint '" + checkpoint_path + "' carries no network config");
  NetworkConfig cfg = network_config_from_json(it->second);
  auto net = build_network(cfg, 0);
  load_checkpoint(checkpoint_path, *net);
  return net;
}

std::optional<RunConfig> checkpoint_run_config(const std::string& checkpoint_path) {
  auto meta = read_checkpoint_meta(checkpoint_path);
  auto it = meta.find("run_config");
  if (it == meta.end()) return std::nullopt;
  return run_config_from_json(it->second);
}

MetricReport evaluate_checkpoint(const std::string& checkpoint_path, const std::string& dataset_root,
                                 Split split, std::optional<int> inference_size, EvalOptions opts) {
  auto net = load_network(checkpoint_path);
  int size = 0;
  if (inference_size) {
    size = *inference_size;
  } else if (auto rc = checkpoint_run_config(checkpoint_path)) {
    size = rc->inference_size;
  } else {
    size = 352;
  }
  size = snap_to_stride(size);
  std::vector<SampleRecord> records = load_dataset(dataset_root, split);
  return evaluate_records(*net, records, size, opts);
}

PredictStats predict_to_dir(HetNet& net, const std::vector<std::string>& image_paths,
                            const std::string& out_dir, int inference_size) {
  fs::create_directories(out_dir);
  PredictStats stats;
  for (const std::string& path : image_paths) {
    Tensor image;
    try {
      image = load_image_rgb(path);
    } catch (const InputError& e) {
      std::cerr << "[predict] warning: skipping '" << path << "': " << e.what() << "\n";
      ++stats.failed;
      continue;
    }
    Tensor prob = predict_probability(net, image, inference_size);
    const std::string stem = fs::path(path).stem().string();
    save_gray_png((fs::path(out_dir) / (stem + "_prob.png")).string(), prob);
    // binarize on the quantized bytes so the two files agree exactly
    Tensor binary(prob.shape());
    for (std::int64_t i = 0; i < prob.numel(); ++i) {
      const double q = std::lround(std::clamp(prob.data()[i], 0.0, 1.0) * 255.0);
      binary.data()[i] = q >= 128.0 ? 1.0 : 0.0;
    }
    save_gray_png((fs::path(out_dir) / (stem + "_mask.png")).string(), binary);
    ++stats.written;
  }
  return stats;
}

}  // namespace hetnet
