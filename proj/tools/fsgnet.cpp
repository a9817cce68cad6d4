// fsgnet: synthetic data, training, evaluation, tiled prediction, ablations,
// gradient checks and model accounting from one binary.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "fsg/data.hpp"
#include "fsg/grad_suite.hpp"
#include "fsg/kernels.hpp"
#include "fsg/metrics.hpp"
#include "fsg/network.hpp"
#include "fsg/train.hpp"

namespace fs = std::filesystem;
using namespace fsg;

namespace {

constexpr int kUsage = 1;
constexpr int kRuntime = 2;

// Reference totals for the full-width model on a 256x256x3 input.
constexpr double kReferenceParamsM = 13.76;
constexpr double kReferenceGflops = 6.21;

struct ModelFlags {
  double width = 0.25;
  std::string dawim = "full", stsam = "full", lgfu = "on";
  bool scale_attention = false;
};

struct TrainFlags {
  std::size_t epochs = 30, batch = 8;
  double lr_head = 1e-3, lr_backbone = 1e-4, lr_final = 1e-6, weight_decay = 0.01;
  bool no_augment = false;
};

void add_model_flags(CLI::App* app, ModelFlags& m) {
  app->add_option("--width", m.width, "Encoder width multiplier")->capture_default_str();
  app->add_option("--dawim", m.dawim, "full|difference|conv211|conv233|noSE|noRes|off")->capture_default_str();
  app->add_option("--stsam", m.stsam, "full|self|coord|self+coord|noTime|off")->capture_default_str();
  app->add_option("--lgfu", m.lgfu, "on|off")->check(CLI::IsMember({"on", "off"}))->capture_default_str();
  app->add_flag("--scale-attention", m.scale_attention, "Divide attention scores by sqrt(C/8)");
}

void add_train_flags(CLI::App* app, TrainFlags& t) {
  app->add_option("--epochs", t.epochs)->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--batch", t.batch)->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--lr-head", t.lr_head, "Initial LR of every non-encoder parameter")->capture_default_str();
  app->add_option("--lr-backbone", t.lr_backbone, "Initial LR of encoder parameters")->capture_default_str();
  app->add_option("--lr-final", t.lr_final, "LR reached by the cosine schedule")->capture_default_str();
  app->add_option("--weight-decay", t.weight_decay)->capture_default_str();
  app->add_flag("--no-augment", t.no_augment, "Disable random flips and right-angle rotations of training pairs");
}

void add_config(CLI::App* app, std::string& path) {
  app->add_option("--config", path, "Flat key=value file of long flag names; command-line flags take precedence")
      ->check(CLI::ExistingFile);
}

// Splices the items of a subcommand's --config file in front of its
// command-line flags; with take-last options the command line then wins.
std::vector<std::string> expand_config(int argc, char** argv, const CLI::App& app) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::size_t sub = 0;
  while (sub < args.size() && app.get_subcommand_no_throw(args[sub]) == nullptr) ++sub;
  std::string path;
  for (std::size_t i = sub + 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::vector<std::string> items;
  for (const CLI::ConfigItem& item : CLI::ConfigINI().from_file(path)) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    for (const std::string& value : item.inputs) items.push_back("--" + item.name + "=" + value);
  }
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub) + 1, items.begin(), items.end());
  return args;
}

NetConfig net_config(const ModelFlags& m, std::uint64_t seed) {
  NetConfig c;
  c.encoder.width_multiplier = m.width;
  c.dawim = parse_dawim_variant(m.dawim);
  c.stsam = parse_stsam_variant(m.stsam);
  c.lgfu = m.lgfu == "on";
  c.scale_attention = m.scale_attention;
  c.seed = seed;
  c.encoder.validate();
  return c;
}

TrainConfig train_config(const TrainFlags& t, std::uint64_t seed) {
  TrainConfig c;
  c.epochs = t.epochs;
  c.batch_size = t.batch;
  c.lr_head = t.lr_head;
  c.lr_backbone = t.lr_backbone;
  c.lr_final = t.lr_final;
  c.weight_decay = t.weight_decay;
  c.augment = !t.no_augment;
  c.seed = seed;
  return c;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Effective flags of `app` plus the verbatim config file, if one was given.
// The output path is left out so the same run written to two places gives
// identical files.
std::string provenance(const CLI::App* app, const std::string& config_path) {
  std::string out = "command=" + app->get_name() + "\n";
  std::istringstream flags(app->config_to_str(true, false));
  for (std::string line; std::getline(flags, line);)
    if (!line.starts_with("out=")) out += line + "\n";
  if (!config_path.empty()) out += "# config file " + config_path + "\n" + read_text(config_path);
  return out;
}

void print_metrics(const MetricsReport& m, const ConfusionCounts& c) {
  std::printf("precision %.4f\nrecall    %.4f\nf1        %.4f\niou       %.4f\noa        %.4f\n", m.precision,
              m.recall, m.f1, m.iou, m.oa);
  std::printf("tp %llu fp %llu tn %llu fn %llu%s\n", static_cast<unsigned long long>(c.tp),
              static_cast<unsigned long long>(c.fp), static_cast<unsigned long long>(c.tn),
              static_cast<unsigned long long>(c.fn), m.degenerate ? " (degenerate)" : "");
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
  if (!out) throw Error("write failed: " + path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bi-temporal change detection: FSG-Net at desk scale"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::uint64_t seed = 7;
  std::string config_path;

  // synth
  CLI::App* synth = app.add_subcommand("synth", "Generate a seeded synthetic dataset directory");
  std::string synth_out;
  SynthConfig sc;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--count", sc.count, "Samples, split 70/15/15")->capture_default_str();
  synth->add_option("--size", sc.size, "Image side: 32, 64, 128 or 256")->capture_default_str();
  synth->add_option("--density", sc.change_density, "Target changed-pixel fraction")->capture_default_str();
  synth->add_option("--base-objects", sc.base_objects)->capture_default_str();
  synth->add_option("--max-changes", sc.max_changes, "0 gives all-zero labels")->capture_default_str();
  synth->add_option("--brightness", sc.pseudo.brightness_shift_range)->capture_default_str();
  synth->add_option("--gradient", sc.pseudo.smooth_gradient_amp)->capture_default_str();
  synth->add_option("--noise", sc.pseudo.noise_sigma)->capture_default_str();
  synth->add_option("--tint", sc.pseudo.season_tint_range)->capture_default_str();
  synth->add_option("--train-count", sc.train_count, "Explicit split sizes override --count");
  synth->add_option("--val-count", sc.val_count);
  synth->add_option("--test-count", sc.test_count);
  synth->add_option("--seed", seed)->capture_default_str();
  add_config(synth, config_path);

  // train
  CLI::App* train_cmd = app.add_subcommand("train", "Train on a dataset directory");
  std::string data_dir, out_path;
  ModelFlags model;
  TrainFlags tflags;
  train_cmd->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--out", out_path, "Checkpoint path; history goes to <out>.history.tsv")->required();
  add_model_flags(train_cmd, model);
  add_train_flags(train_cmd, tflags);
  train_cmd->add_option("--seed", seed, "Initialization and shuffling")->capture_default_str();
  add_config(train_cmd, config_path);

  // eval
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  std::string ckpt_path, split = "test", render_dir;
  std::size_t eval_batch = 8;
  eval_cmd->add_option("--data", data_dir)->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--ckpt", ckpt_path)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
  eval_cmd->add_option("--render", render_dir, "Comparison map directory (default <ckpt>.render)");
  eval_cmd->add_option("--batch", eval_batch)->check(CLI::PositiveNumber)->capture_default_str();
  add_config(eval_cmd, config_path);

  // predict
  CLI::App* predict_cmd = app.add_subcommand("predict", "Tiled change prediction for an image pair of any size");
  std::string image_a, image_b, mask_out, label_path;
  std::size_t patch = 256;
  predict_cmd->add_option("--ckpt", ckpt_path)->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--a", image_a, "First-time image (PNG)")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--b", image_b, "Second-time image (PNG)")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--out", mask_out, "Output mask PNG")->required();
  predict_cmd->add_option("--patch", patch, "Tile side")->capture_default_str();
  predict_cmd->add_option("--label", label_path, "Optional reference mask: prints metrics, writes <out>.cmp.png")
      ->check(CLI::ExistingFile);
  add_config(predict_cmd, config_path);

  // ablate
  CLI::App* ablate = app.add_subcommand("ablate", "Train and test a matrix of module configurations");
  std::vector<std::string> rows;
  std::string preset = "modules", report_path;
  ablate->add_option("--data", data_dir)->required()->check(CLI::ExistingDirectory);
  ablate->add_option("--row", rows, "dawim=<v>,stsam=<v>,lgfu=<on|off>; repeatable, replaces --preset");
  ablate->add_option("--preset", preset, "modules|dawim|stsam|core")->capture_default_str();
  ablate->add_option("--width", model.width)->capture_default_str();
  add_train_flags(ablate, tflags);
  ablate->add_option("--seed", seed)->capture_default_str();
  ablate->add_option("--out", report_path, "Writes the table to <out> and key=value records to <out>.records");
  add_config(ablate, config_path);

  // gradcheck
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  std::size_t grad_seeds = 5;
  bool skip_network = false;
  gradcheck->add_option("--seeds", grad_seeds, "Seeds 1..N")->check(CLI::PositiveNumber)->capture_default_str();
  gradcheck->add_flag("--skip-network", skip_network, "Modules only");

  // info
  CLI::App* info = app.add_subcommand("info", "Parameter and FLOP totals");
  std::size_t info_size = 256;
  ModelFlags info_model;
  info_model.width = 1.0;
  add_model_flags(info, info_model);
  info->add_option("--size", info_size, "Square input side")->capture_default_str();

  try {
    std::vector<std::string> args = expand_config(argc, argv, app);
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (synth->parsed()) {
      sc.seed = seed;
      const Dataset d = generate_synthetic(sc);
      write_dataset(synth_out, d);
      std::printf("wrote %s: %zu train, %zu val, %zu test (%zux%zu)\n", synth_out.c_str(), d.train.size(),
                  d.val.size(), d.test.size(), sc.size, sc.size);
    } else if (train_cmd->parsed()) {
      const Dataset d = read_dataset(data_dir);
      FsgNet net(net_config(model, seed));
      TrainConfig tc = train_config(tflags, seed);
      tc.on_epoch = [](const EpochRecord& r) {
        std::printf("epoch %3zu  lr %.3g/%.3g  loss %.5f  val_f1 %.4f  val_iou %.4f\n", r.epoch, r.lr_head,
                    r.lr_backbone, r.train_loss, r.val_f1, r.val_iou);
        std::fflush(stdout);
      };
      const std::string isa(kernels::isa_name(kernels::active().isa));
      std::printf("%s, %zu parameters, %s kernels\n", net.config().describe().c_str(), param_count(net), isa.c_str());
      const TrainResult r = train(net, d, tc, provenance(train_cmd, config_path));
      write_file(out_path, r.best_checkpoint);
      std::ostringstream history;
      write_history(history, r.history);
      write_file(out_path + ".history.tsv", history.str());
      std::printf("best epoch %zu (val_f1 %.4f) -> %s\n", r.best_epoch, r.best_val_f1, out_path.c_str());
    } else if (eval_cmd->parsed()) {
      FsgNet net = FsgNet::load(ckpt_path);
      const std::vector<SamplePair> samples = read_split(data_dir, split);
      if (samples.empty()) throw Error("split '" + split + "' of " + data_dir + " is empty");
      if (render_dir.empty()) render_dir = ckpt_path + ".render";
      fs::create_directories(render_dir);
      ConfusionCounts total;
      for (std::size_t begin = 0; begin < samples.size(); begin += eval_batch) {
        const std::size_t end = std::min(samples.size(), begin + eval_batch);
        std::vector<const Tensor*> a, b;
        for (std::size_t i = begin; i < end; ++i) {
          a.push_back(&samples[i].img1);
          b.push_back(&samples[i].img2);
        }
        const std::vector<ChangeMap> pred = predict(net.forward(stack_images(a), stack_images(b), false));
        for (std::size_t i = begin; i < end; ++i) {
          total += confusion(pred[i - begin], samples[i].label);
          save_png((fs::path(render_dir) / (samples[i].id + "_cmp.png")).string(),
                   render_comparison(pred[i - begin], samples[i].label));
        }
      }
      std::printf("%s split, %zu pairs\n", split.c_str(), samples.size());
      print_metrics(metrics(total), total);
    } else if (predict_cmd->parsed()) {
      FsgNet net = FsgNet::load(ckpt_path);
      const Tensor a = image_to_tensor(load_png(image_a));
      const Tensor b = image_to_tensor(load_png(image_b));
      const ChangeMap pred = predict(reshape(predict_tiled(net, a, b, patch), Shape{1, 1, a.dim(1), a.dim(2)}))[0];
      save_mask(mask_out, pred);
      std::printf("%zux%zu, %zu changed pixels -> %s\n", pred.width, pred.height, pred.positives(), mask_out.c_str());
      if (!label_path.empty()) {
        const ChangeMap label = load_mask(label_path);
        const ConfusionCounts c = confusion(pred, label);
        print_metrics(metrics(c), c);
        save_png(mask_out + ".cmp.png", render_comparison(pred, label));
      }
    } else if (ablate->parsed()) {
      const Dataset d = read_dataset(data_dir);
      std::vector<AblationConfig> matrix;
      if (rows.empty()) {
        matrix = ablation_preset(preset);
      } else {
        for (const auto& r : rows) matrix.push_back(AblationConfig::parse(r));
      }
      EncoderConfig encoder;
      encoder.width_multiplier = model.width;
      encoder.validate();
      TrainConfig tc = train_config(tflags, seed);
      const std::vector<AblationRow> result = run_ablation(matrix, d, encoder, tc, seed);
      const std::string table = format_ablation_table(result);
      std::fputs(table.c_str(), stdout);
      if (!report_path.empty()) {
        write_file(report_path, table);
        write_file(report_path + ".records", format_ablation_records(result));
      }
    } else if (gradcheck->parsed()) {
      GradSuiteOptions o;
      o.seeds.clear();
      for (std::size_t s = 1; s <= grad_seeds; ++s) o.seeds.push_back(s);
      o.include_network = !skip_network;
      const auto t0 = std::chrono::steady_clock::now();
      const std::vector<GradSuiteEntry> entries = run_grad_suite(o);
      bool ok = true;
      std::printf("%-18s %12s %10s %10s  %s\n", "module", "max_rel_err", "threshold", "components", "worst");
      for (const auto& e : entries) {
        std::printf("%-18s %12.3e %10.0e %10zu  %s%s\n", e.name.c_str(), e.max_error, e.threshold, e.components,
                    e.worst.c_str(), e.passed() ? "" : "  FAIL");
        if (e.unresolved > 0) std::printf("%-18s %zu components unmeasured (kinks on both sides)\n", "", e.unresolved);
        ok = ok && e.passed();
      }
      std::printf("%zu seeds, %.1f s: %s\n", o.seeds.size(),
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(),
                  ok ? "all passed" : "FAILED");
      return ok ? 0 : kRuntime;
    } else if (info->parsed()) {
      FsgNet net(net_config(info_model, seed));
      const std::size_t params = param_count(net);
      const std::size_t flops = flop_estimate(net, Shape{1, 3, info_size, info_size});
      std::printf("config      %s, width %g, input %zux%zux3\n", net.config().describe().c_str(), info_model.width,
                  info_size, info_size);
      std::printf("parameters  %zu (%.2fM)   reference %.2fM\n", params, params / 1e6, kReferenceParamsM);
      std::printf("flops       %zu (%.2fG)   reference %.2fG\n", flops, flops / 1e9, kReferenceGflops);
      std::printf("(one multiply-add counts as 2 FLOPs; BN and activations excluded)\n");
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fsgnet %s: %s\n", app.get_subcommands().front()->get_name().c_str(), e.what());
    return kRuntime;
  }
  return 0;
}
