#include "fsg/train.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "fsg/rng.hpp"

namespace fsg {

namespace {

struct Batch {
  Tensor img1, img2, label;
};

// Source index of output pixel (y, x) under dihedral transform t.
std::size_t dihedral_source(std::size_t y, std::size_t x, std::size_t h, std::size_t w, unsigned t) {
  if (t & 4u) std::swap(y, x);
  if (t & 2u) y = h - 1 - y;
  if (t & 1u) x = w - 1 - x;
  return y * w + x;
}

void check_transform(std::size_t h, std::size_t w, unsigned t) {
  if (t >= 8) throw Error("dihedral: transform index " + std::to_string(t) + " out of range");
  if ((t & 4u) && h != w) throw ShapeError("dihedral: transpose needs a square image");
}

Batch make_batch(const std::vector<SamplePair>& samples, const std::vector<std::size_t>& order, std::size_t begin,
                 std::size_t end, const std::vector<unsigned>* transforms = nullptr) {
  std::vector<Tensor> a, b;
  std::vector<ChangeMap> labels;
  for (std::size_t i = begin; i < end; ++i) {
    const SamplePair& s = samples[order[i]];
    const unsigned t = transforms == nullptr ? 0u : (*transforms)[i];
    a.push_back(t == 0 ? s.img1 : dihedral(s.img1, t));
    b.push_back(t == 0 ? s.img2 : dihedral(s.img2, t));
    labels.push_back(t == 0 ? s.label : dihedral(s.label, t));
  }
  std::vector<const Tensor*> pa, pb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    pa.push_back(&a[i]);
    pb.push_back(&b[i]);
  }
  return Batch{stack_images(pa), stack_images(pb), label_tensor(labels)};
}

}  // namespace

Tensor dihedral(const Tensor& image, unsigned t) {
  if (image.rank() != 3) throw ShapeError("dihedral: expected [C,H,W], got " + to_string(image.shape()));
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  check_transform(h, w, t);
  Tensor out(image.shape());
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out[(k * h + y) * w + x] = image[k * h * w + dihedral_source(y, x, h, w, t)];
  return out;
}

ChangeMap dihedral(const ChangeMap& map, unsigned t) {
  check_transform(map.height, map.width, t);
  ChangeMap out(map.height, map.width);
  for (std::size_t y = 0; y < map.height; ++y)
    for (std::size_t x = 0; x < map.width; ++x)
      out.at(y, x) = map.mask[dihedral_source(y, x, map.height, map.width, t)];
  return out;
}

TrainResult train(FsgNet& net, const Dataset& data, const TrainConfig& config, const std::string& metadata) {
  if (data.train.empty()) throw Error("train: training split is empty");
  if (config.epochs == 0 || config.batch_size == 0) throw Error("train: epochs and batch size must be positive");
  const ParameterList params = net.parameters();
  AdamW optimizer(params, AdamWConfig{0.9, 0.999, 1e-8, config.weight_decay});
  const Schedule schedule{config.lr_head, config.lr_backbone, config.lr_final, config.epochs};
  Rng rng(config.seed);
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<unsigned> transforms(order.size(), 0u);
  bool square = true;
  for (const auto& s : data.train) square = square && s.label.height == s.label.width;

  TrainResult result;
  bool have_best = false;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr_head = cosine_lr(epoch, schedule, LrGroup::head);
    rec.lr_backbone = cosine_lr(epoch, schedule, LrGroup::backbone);
    rng.shuffle(order);
    if (config.augment)
      for (auto& t : transforms) t = static_cast<unsigned>(rng.uniform_int(0, square ? 7 : 3));
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const Batch batch = make_batch(data.train, order, begin, end, &transforms);
      zero_grads(params);
      Tape tape;
      double loss_value = 0.0;
      try {
        TapeScope scope(tape);
        const Tensor logits = net.forward(batch.img1, batch.img2, true);
        const Tensor loss = total_loss(logits, batch.label);
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) throw NumericError("loss is not finite");
        tape.backward(loss);
      } catch (const NumericError& e) {
        throw NumericError("train: divergence at epoch " + std::to_string(epoch + 1) + ", batch " +
                           std::to_string(batches) + ": " + e.what());
      }
      optimizer.step(rec.lr_head, rec.lr_backbone);
      loss_sum += loss_value;
      ++batches;
    }
    rec.train_loss = loss_sum / static_cast<double>(batches);
    if (!data.val.empty()) {
      const MetricsReport m = metrics(evaluate(net, data.val, config.batch_size));
      rec.val_f1 = m.f1;
      rec.val_iou = m.iou;
    }
    result.history.push_back(rec);
    const bool better = data.val.empty() || !have_best || rec.val_f1 > result.best_val_f1;
    if (better) {
      have_best = true;
      result.best_epoch = rec.epoch;
      result.best_val_f1 = rec.val_f1;
      result.best_checkpoint = net.serialize(metadata);
    }
    if (config.on_epoch) config.on_epoch(rec);
  }
  return result;
}

ConfusionCounts evaluate(FsgNet& net, const std::vector<SamplePair>& samples, std::size_t batch_size) {
  ConfusionCounts total;
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t begin = 0; begin < samples.size(); begin += batch_size) {
    const std::size_t end = std::min(samples.size(), begin + batch_size);
    const Batch batch = make_batch(samples, order, begin, end);
    const std::vector<ChangeMap> pred = predict(net.forward(batch.img1, batch.img2, false));
    for (std::size_t i = 0; i < pred.size(); ++i) total += confusion(pred[i], samples[begin + i].label);
  }
  return total;
}

Tensor predict_tiled(FsgNet& net, const Tensor& img1, const Tensor& img2, std::size_t patch) {
  if (img1.shape() != img2.shape()) throw ShapeError("predict_tiled: image sizes differ");
  const std::size_t m = net.config().encoder.input_multiple();
  if (patch == 0 || patch % m != 0)
    throw Error("predict_tiled: patch " + std::to_string(patch) + " must be a multiple of " + std::to_string(m));
  const TileGrid a = tile_patches(img1, patch);
  const TileGrid b = tile_patches(img2, patch);
  TileGrid out = a;
  for (std::size_t i = 0; i < a.tiles.size(); ++i) {
    const Tensor logits = net.forward(stack_images({&a.tiles[i]}), stack_images({&b.tiles[i]}), false);
    out.tiles[i] = reshape(logits, Shape{1, patch, patch});
  }
  return stitch_patches(out);
}

void write_history(std::ostream& out, const std::vector<EpochRecord>& history) {
  out << "#epoch\tlr_head\tlr_backbone\ttrain_loss\tval_f1\tval_iou\n";
  char line[256];
  for (const auto& r : history) {
    std::snprintf(line, sizeof line, "%zu\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\n", r.epoch, r.lr_head, r.lr_backbone,
                  r.train_loss, r.val_f1, r.val_iou);
    out << line;
  }
}

std::vector<EpochRecord> read_history(std::istream& in) {
  std::vector<EpochRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    EpochRecord r;
    if (!(fields >> r.epoch >> r.lr_head >> r.lr_backbone >> r.train_loss >> r.val_f1 >> r.val_iou))
      throw Error("history: malformed line '" + line + "'");
    out.push_back(r);
  }
  return out;
}

AblationConfig AblationConfig::parse(const std::string& text) {
  AblationConfig c;
  c.label = text;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error("ablation: expected key=value, got '" + item + "'");
    const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
    if (key == "dawim") {
      c.dawim = parse_dawim_variant(value);
    } else if (key == "stsam") {
      c.stsam = parse_stsam_variant(value);
    } else if (key == "lgfu") {
      if (value != "on" && value != "off") throw Error("ablation: lgfu must be on or off, got '" + value + "'");
      c.lgfu = value == "on";
    } else {
      throw Error("ablation: unknown toggle '" + key + "' (expected dawim, stsam, lgfu)");
    }
  }
  return c;
}

std::string AblationConfig::describe() const {
  return std::string("dawim=") + to_string(dawim) + ",stsam=" + to_string(stsam) + ",lgfu=" + (lgfu ? "on" : "off");
}

std::vector<AblationRow> run_ablation(const std::vector<AblationConfig>& matrix, const Dataset& data,
                                      const EncoderConfig& encoder, const TrainConfig& train_config,
                                      std::uint64_t seed) {
  if (data.test.empty()) throw Error("ablation: test split is empty");
  std::vector<AblationRow> rows;
  for (const auto& cfg : matrix) {
    NetConfig nc;
    nc.encoder = encoder;
    nc.dawim = cfg.dawim;
    nc.stsam = cfg.stsam;
    nc.lgfu = cfg.lgfu;
    nc.seed = seed;
    FsgNet net(nc);
    TrainConfig tc = train_config;
    tc.seed = seed;
    const TrainResult tr = train(net, data, tc);
    FsgNet best = FsgNet::deserialize(tr.best_checkpoint);
    AblationRow row;
    row.config = cfg;
    row.test = metrics(evaluate(best, data.test, tc.batch_size));
    row.best_epoch = tr.best_epoch;
    row.best_val_f1 = tr.best_val_f1;
    row.param_count = param_count(best);
    rows.push_back(row);
  }
  return rows;
}

std::vector<AblationConfig> ablation_preset(const std::string& name) {
  std::vector<std::string> rows;
  if (name == "modules") {
    rows = {"dawim=off,stsam=off,lgfu=off", "dawim=full,stsam=off,lgfu=off", "dawim=off,stsam=full,lgfu=off",
            "dawim=off,stsam=off,lgfu=on",  "dawim=off,stsam=full,lgfu=on",  "dawim=full,stsam=off,lgfu=on",
            "dawim=full,stsam=full,lgfu=off", "dawim=full,stsam=full,lgfu=on"};
  } else if (name == "dawim") {
    for (const char* v : {"difference", "conv211", "conv233", "noSE", "noRes", "full"})
      rows.push_back(std::string("dawim=") + v + ",stsam=full,lgfu=on");
  } else if (name == "stsam") {
    for (const char* v : {"self", "coord", "self+coord", "noTime", "full"})
      rows.push_back(std::string("dawim=full,stsam=") + v + ",lgfu=on");
  } else if (name == "core") {
    rows = {"dawim=off,stsam=off,lgfu=off", "dawim=off,stsam=full,lgfu=on", "dawim=full,stsam=full,lgfu=on"};
  } else {
    throw Error("ablation: unknown preset '" + name + "' (expected modules, dawim, stsam, core)");
  }
  std::vector<AblationConfig> out;
  for (const auto& r : rows) out.push_back(AblationConfig::parse(r));
  return out;
}

namespace {

std::string label_of(const AblationConfig& c) { return c.label.empty() ? c.describe() : c.label; }

}  // namespace

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, label_of(r.config).size());
  std::ostringstream out;
  out << "# test metrics of the best-validation-F1 epoch\n";
  out << std::left << std::setw(static_cast<int>(width)) << "config" << std::right << std::setw(10) << "params"
      << std::setw(6) << "best" << std::setw(9) << "val_f1" << std::setw(9) << "prec" << std::setw(9) << "rec"
      << std::setw(9) << "f1" << std::setw(9) << "iou" << std::setw(9) << "oa" << '\n';
  out << std::fixed << std::setprecision(4);
  for (const auto& r : rows) {
    out << std::left << std::setw(static_cast<int>(width)) << label_of(r.config) << std::right << std::setw(10)
        << r.param_count << std::setw(6) << r.best_epoch << std::setw(9) << r.best_val_f1 << std::setw(9)
        << r.test.precision << std::setw(9) << r.test.recall << std::setw(9) << r.test.f1 << std::setw(9)
        << r.test.iou << std::setw(9) << r.test.oa << (r.test.degenerate ? "  (degenerate)" : "") << '\n';
  }
  return out.str();
}

std::string format_ablation_records(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf,
                  "config=%s dawim=%s stsam=%s lgfu=%s params=%zu best_epoch=%zu val_f1=%.17g precision=%.17g "
                  "recall=%.17g f1=%.17g iou=%.17g oa=%.17g degenerate=%d\n",
                  label_of(r.config).c_str(), to_string(r.config.dawim), to_string(r.config.stsam),
                  r.config.lgfu ? "on" : "off", r.param_count, r.best_epoch, r.best_val_f1, r.test.precision,
                  r.test.recall, r.test.f1, r.test.iou, r.test.oa, r.test.degenerate ? 1 : 0);
    out << buf;
  }
  return out.str();
}

}  // namespace fsg
