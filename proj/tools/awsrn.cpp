// awsrn: build, analyze, train, run, evaluate, prune and inspect AWSRN models.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "awsrn/awsrn.hpp"

namespace {

using Model = awsrn::AwsrnModel<float>;

struct ModelFlags {
  std::string preset;
  std::string config_file;
  int scale = 0;  // 0: from config file, else 2
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
  cmd->add_option("--model", f.preset, "preset: awsrn-s, awsrn-sd, awsrn-m, awsrn");
  cmd->add_option("--config", f.config_file, "key = value config file");
  cmd->add_option("--scale", f.scale, "upscaling factor (2, 3, 4, 8)");
}

/// Config file first, then flags on top.
awsrn::RunConfig resolve(const ModelFlags& f) {
  std::vector<awsrn::KeyValue> kvs;
  if (!f.config_file.empty()) kvs = awsrn::load_key_values(f.config_file);
  if (!f.preset.empty()) kvs.push_back({"model", f.preset, 0});
  if (f.scale != 0) kvs.push_back({"scale", std::to_string(f.scale), 0});
  // Later entries win, so flags override the file.
  return awsrn::RunConfig::from_key_values(kvs);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw awsrn::DataError("cannot write '" + path + "'");
  out << text;
}

std::pair<std::size_t, std::size_t> parse_size(const std::string& s) {
  const auto x = s.find('x');
  try {
    if (x != std::string::npos) {
      std::size_t a = 0, b = 0;
      const auto w = std::stoul(s.substr(0, x), &a);
      const auto h = std::stoul(s.substr(x + 1), &b);
      if (a == x && b == s.size() - x - 1 && w > 0 && h > 0) return {w, h};
    }
  } catch (const std::exception&) {
  }
  throw awsrn::ConfigError("--out-size expects WxH, got '" + s + "'");
}

std::vector<awsrn::ImagePair> load_pairs(const std::string& dir, int scale) {
  std::vector<awsrn::ImagePair> pairs;
  for (const auto& p : awsrn::dataset_paths(dir)) {
    pairs.push_back(awsrn::make_pair(awsrn::load_png(p), scale));
  }
  return pairs;
}

Model load_model(const std::string& path, int scale_flag) {
  Model m = awsrn::load_checkpoint<float>(path);
  if (scale_flag != 0 && scale_flag != m.config().scale) {
    throw awsrn::ConfigError("scale mismatch: checkpoint is x" + std::to_string(m.config().scale) +
                             ", --scale is " + std::to_string(scale_flag));
  }
  return m;
}

int cmd_analyze(const ModelFlags& f, const std::string& out_size, const std::string& csv) {
  const auto rc = resolve(f);
  const auto [w, h] = parse_size(out_size);
  const auto report = awsrn::analyze_complexity(rc.model, w, h);
  std::cout << "model: " << rc.preset << "\n"
            << "scale: " << rc.model.scale << "\n"
            << "output: " << w << 'x' << h << "\n\n"
            << report.to_table() << '\n'
            << "params: " << report.total_params << " (" << awsrn::format_kilo(report.total_params)
            << ")\n"
            << "multi-adds: " << std::fixed << std::setprecision(0) << report.multi_adds << " ("
            << awsrn::format_giga(report.multi_adds) << ")\n";
  if (!csv.empty()) write_text(csv, report.to_csv());
  return 0;
}

int cmd_init(const ModelFlags& f, std::uint64_t seed, bool seed_set, const std::string& out) {
  auto rc = resolve(f);
  if (seed_set) rc.train.seed = seed;
  const Model m = Model::build(rc.model, rc.train.seed);
  awsrn::save_checkpoint(m, out);
  std::cout << "wrote " << out << " (" << awsrn::count_params(m) << " params)\n";
  return 0;
}

struct TrainFlags {
  std::string data, out, trace, resume;
  std::optional<std::size_t> iters, checkpoint_every;
  std::size_t start_iter = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

int cmd_train(const ModelFlags& f, const TrainFlags& t) {
  auto rc = resolve(f);
  if (t.seed_set) rc.train.seed = t.seed;
  if (t.iters) rc.train.max_iters = *t.iters;
  if (t.checkpoint_every) rc.train.checkpoint_every = *t.checkpoint_every;
  if (rc.train.checkpoint_every > 0) rc.train.checkpoint_path = t.out;

  Model model = t.resume.empty() ? Model::build(rc.model, rc.train.seed)
                                 : awsrn::load_checkpoint<float>(t.resume, rc.model);
  const auto pairs = load_pairs(t.data, rc.model.scale);
  std::cout << "training " << rc.preset << " x" << rc.model.scale << " on " << pairs.size()
            << " image(s) for " << rc.train.max_iters << " iteration(s)\n";

  const auto start = std::chrono::steady_clock::now();
  const auto result = awsrn::train(model, pairs, rc.train, t.start_iter,
                                   [&](std::size_t it, double loss) {
                                     if ((it + 1) % 100 == 0) {
                                       std::cout << "iter " << it + 1 << " loss " << loss << '\n';
                                     }
                                   });
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  awsrn::save_checkpoint(model, t.out);
  const std::string trace = t.trace.empty() ? t.out + ".trace.txt" : t.trace;
  awsrn::write_loss_trace(trace, result.losses, t.start_iter);

  // Summary on the training images themselves.
  const std::size_t shave = static_cast<std::size_t>(rc.model.scale);
  double sr_psnr = 0.0, bic_psnr = 0.0;
  for (const auto& p : pairs) {
    const awsrn::Image sr = awsrn::to_image(model.infer(awsrn::to_tensor<float>(p.lr)));
    const awsrn::Image bic =
        awsrn::bicubic_resize(p.lr, awsrn::Ratio{static_cast<std::size_t>(rc.model.scale), 1});
    sr_psnr += awsrn::psnr_y(sr, p.hr, shave);
    bic_psnr += awsrn::psnr_y(bic, p.hr, shave);
  }
  sr_psnr /= static_cast<double>(pairs.size());
  bic_psnr /= static_cast<double>(pairs.size());
  std::cout << std::fixed << std::setprecision(4);
  if (!result.losses.empty()) std::cout << "final loss: " << result.losses.back() << '\n';
  std::cout << "train psnr: " << sr_psnr << " dB\n"
            << "bicubic psnr: " << bic_psnr << " dB\n"
            << "psnr gain: " << sr_psnr - bic_psnr << " dB\n"
            << "time: " << std::setprecision(1) << secs << " s\n"
            << "wrote " << t.out << " and " << trace << '\n';
  return 0;
}

int cmd_sr(const std::string& ckpt, const std::string& in, const std::string& out, int scale) {
  const Model m = load_model(ckpt, scale);
  const awsrn::Image lr = awsrn::load_png(in);
  const awsrn::Image sr = awsrn::to_image(m.infer(awsrn::to_tensor<float>(lr)));
  awsrn::save_png(sr, out);
  std::cout << "wrote " << out << " (" << sr.width << 'x' << sr.height << ")\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& hr_dir, int scale,
             std::optional<std::size_t> shave, const std::string& csv) {
  const Model m = load_model(ckpt, scale);
  const int s = m.config().scale;
  const auto report = awsrn::evaluate_images(awsrn::dataset_paths(hr_dir), s,
                                             shave.value_or(static_cast<std::size_t>(s)),
                                             awsrn::model_upscaler(m));
  std::cout << report.to_table();
  if (!csv.empty()) write_text(csv, report.to_csv());
  if (!report.mean().ok()) throw awsrn::DataError("no image could be evaluated");
  return 0;
}

int cmd_prune(const std::string& ckpt, double threshold, const std::string& out) {
  const Model m = awsrn::load_checkpoint<float>(ckpt);
  const auto before = awsrn::count_params(m);
  auto result = awsrn::prune_branches(m, threshold);
  awsrn::save_checkpoint(result.model, out);
  std::cout << "removed: [";
  for (std::size_t i = 0; i < result.removed.size(); ++i) {
    std::cout << (i ? ", " : "") << result.removed[i];
  }
  std::cout << "]\n"
            << "params: " << before << " -> " << awsrn::count_params(result.model) << '\n'
            << "wrote " << out << '\n';
  return 0;
}

int cmd_inspect(const std::string& ckpt, const std::string& csv) {
  const Model m = awsrn::load_checkpoint<float>(ckpt);
  const auto report = awsrn::inspect_weights(m);
  std::cout << report.to_table();
  if (!csv.empty()) write_text(csv, report.to_csv());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AWSRN lightweight super-resolution toolkit"};
  app.require_subcommand(1);

  ModelFlags mf;
  std::string out_size = "1280x720", csv, out, ckpt, in, hr_dir;
  std::uint64_t seed = 0;
  int scale = 0;
  double threshold = 0.0;
  std::optional<std::size_t> shave;
  TrainFlags tf;

  auto* analyze = app.add_subcommand("analyze", "parameter count and Multi-Adds");
  add_model_flags(analyze, mf);
  analyze->add_option("--out-size", out_size, "output image size WxH");
  analyze->add_option("--csv", csv, "also write the breakdown as CSV");

  auto* init = app.add_subcommand("init", "write a freshly initialized checkpoint");
  add_model_flags(init, mf);
  auto* init_seed = init->add_option("--seed", seed, "initialization seed");
  init->add_option("--out", out, "checkpoint path")->required();

  auto* train = app.add_subcommand("train", "train on a directory of HR images");
  add_model_flags(train, mf);
  train->add_option("--data", tf.data, "directory of HR PNGs (optional manifest.txt)")->required();
  train->add_option("--out", tf.out, "output checkpoint")->required();
  train->add_option("--trace", tf.trace, "loss trace file (default <out>.trace.txt)");
  train->add_option("--iters", tf.iters, "iterations (overrides max_iters)");
  auto* train_seed = train->add_option("--seed", tf.seed, "seed for initialization and sampling");
  train->add_option("--resume", tf.resume, "start from this checkpoint");
  train->add_option("--start-iter", tf.start_iter, "schedule offset for resumed runs");
  train->add_option("--checkpoint-every", tf.checkpoint_every, "save every N iterations");

  auto* sr = app.add_subcommand("sr", "super-resolve one PNG");
  sr->add_option("--ckpt", ckpt, "checkpoint")->required();
  sr->add_option("--in", in, "input PNG")->required();
  sr->add_option("--out", out, "output PNG")->required();
  sr->add_option("--scale", scale, "expected scale (checked against the checkpoint)");

  auto* eval = app.add_subcommand("eval", "PSNR/SSIM on Y against HR images");
  eval->add_option("--ckpt", ckpt, "checkpoint")->required();
  eval->add_option("--hr-dir", hr_dir, "directory of HR PNGs")->required();
  eval->add_option("--scale", scale, "expected scale (checked against the checkpoint)");
  eval->add_option("--shave", shave, "border pixels excluded (default: scale)");
  eval->add_option("--csv", csv, "also write results as CSV");

  auto* prune = app.add_subcommand("prune", "remove low-weight reconstruction branches");
  prune->add_option("--ckpt", ckpt, "input checkpoint")->required();
  prune->add_option("--threshold", threshold, "remove branches with |alpha| below this")
      ->required();
  prune->add_option("--out", out, "output checkpoint")->required();

  auto* inspect = app.add_subcommand("inspect", "print the adaptive weights");
  inspect->add_option("--ckpt", ckpt, "checkpoint")->required();
  inspect->add_option("--csv", csv, "also write the weights as CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (analyze->parsed()) return cmd_analyze(mf, out_size, csv);
    if (init->parsed()) return cmd_init(mf, seed, init_seed->count() > 0, out);
    if (train->parsed()) {
      tf.seed_set = train_seed->count() > 0;
      return cmd_train(mf, tf);
    }
    if (sr->parsed()) return cmd_sr(ckpt, in, out, scale);
    if (eval->parsed()) return cmd_eval(ckpt, hr_dir, scale, shave, csv);
    if (prune->parsed()) return cmd_prune(ckpt, threshold, out);
    if (inspect->parsed()) return cmd_inspect(ckpt, csv);
  } catch (const awsrn::Error& e) {
    std::cerr << "error: " << e.category() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
