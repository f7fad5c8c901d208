#include "synseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "synseg/checkpoint.hpp"
#include "synseg/errors.hpp"
#include "synseg/image.hpp"
#include "synseg/rng.hpp"

namespace synseg {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// ============================================================
// Dataset manifest
// ============================================================

DatasetManifest load_manifest(const std::string& path, const std::string& data_root) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset manifest: " + path);

  DatasetManifest out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      out.skipped.push_back(where + ": not a JSON object");
      continue;
    }
    if (!j.contains("image_path") || !j["image_path"].is_string() || !j.contains("categories") ||
        !j["categories"].is_array()) {
      out.skipped.push_back(where + ": missing image_path or categories");
      continue;
    }
    ManifestRecord rec;
    rec.image_path = j["image_path"].get<std::string>();
    if (!data_root.empty() && fs::path(rec.image_path).is_relative()) {
      rec.image_path = (fs::path(data_root) / rec.image_path).string();
    }
    if (j.contains("mask_path") && j["mask_path"].is_string()) {
      rec.mask_path = j["mask_path"].get<std::string>();
      if (!data_root.empty() && fs::path(rec.mask_path).is_relative()) {
        rec.mask_path = (fs::path(data_root) / rec.mask_path).string();
      }
    }
    bool bad_category = false;
    for (const auto& c : j["categories"]) {
      if (!c.is_string() || c.get<std::string>().empty()) {
        bad_category = true;
        break;
      }
      rec.categories.push_back(c.get<std::string>());
    }
    if (bad_category) {
      out.skipped.push_back(where + ": categories must be non-empty strings");
      continue;
    }
    if (rec.categories.empty()) {
      out.skipped.push_back(where + ": no categories");
      continue;
    }
    if (!fs::exists(rec.image_path)) {
      out.skipped.push_back(where + ": image not found: " + rec.image_path);
      continue;
    }
    out.records.push_back(std::move(rec));
  }
  if (out.records.empty()) {
    throw InputError("dataset manifest has no usable records: " + path);
  }
  return out;
}

// ============================================================
// Config
// ============================================================

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw InputError("learning_rate must be finite and >= 0");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
    throw InputError("weight_decay must be finite and >= 0");
  if (batch_size < 1) throw InputError("batch_size must be >= 1");
  if (epochs < 0) throw InputError("epochs must be >= 0");
  if (max_categories_per_image < 1) throw InputError("max_categories_per_image must be >= 1");
  if (weights.lambda1 < 0 || weights.lambda2 < 0 || weights.lambda3 < 0 || weights.lambda4 < 0)
    throw InputError("loss weights must be >= 0");
  encoder.validate();
  dims.validate();
}

void to_json(ordered_json& j, const TrainConfig& c) {
  j = ordered_json{{"learning_rate", c.learning_rate},
                   {"weight_decay", c.weight_decay},
                   {"batch_size", c.batch_size},
                   {"epochs", c.epochs},
                   {"max_categories_per_image", c.max_categories_per_image},
                   {"seed", c.seed},
                   {"decay_biases", c.decay_biases}};
  ordered_json w, e, d;
  to_json(w, c.weights);
  to_json(e, c.encoder);
  to_json(d, c.dims);
  j["weights"] = w;
  j["encoder"] = e;
  j["dims"] = d;
}

void from_json(const json& j, TrainConfig& c) {
  if (j.contains("learning_rate")) j.at("learning_rate").get_to(c.learning_rate);
  if (j.contains("weight_decay")) j.at("weight_decay").get_to(c.weight_decay);
  if (j.contains("batch_size")) j.at("batch_size").get_to(c.batch_size);
  if (j.contains("epochs")) j.at("epochs").get_to(c.epochs);
  if (j.contains("max_categories_per_image"))
    j.at("max_categories_per_image").get_to(c.max_categories_per_image);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  if (j.contains("decay_biases")) j.at("decay_biases").get_to(c.decay_biases);
  if (j.contains("weights")) j.at("weights").get_to(c.weights);
  if (j.contains("encoder")) j.at("encoder").get_to(c.encoder);
  if (j.contains("dims")) j.at("dims").get_to(c.dims);
}

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  if (!j.is_object()) throw InputError("config section '" + where + "' must be a JSON object");
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) {
      throw InputError("unknown config key '" + item.key() + "' in " + where);
    }
  }
}

}  // namespace

TrainConfig parse_train_config(const json& j) {
  reject_unknown_keys(j,
                      {"learning_rate", "weight_decay", "batch_size", "epochs",
                       "max_categories_per_image", "seed", "decay_biases", "weights", "encoder",
                       "dims"},
                      "config");
  if (j.contains("weights"))
    reject_unknown_keys(j["weights"], {"lambda1", "lambda2", "lambda3", "lambda4"}, "weights");
  if (j.contains("encoder"))
    reject_unknown_keys(j["encoder"],
                        {"kind", "image_side", "patch_size", "visual_channels", "text_dim", "seed",
                         "prompt_template", "position_scale", "adapter_path"},
                        "encoder");
  if (j.contains("dims"))
    reject_unknown_keys(j["dims"], {"decoder_blocks", "decoder_heads", "ff_mult", "film_hidden"},
                        "dims");
  TrainConfig c;
  try {
    from_json(j, c);
  } catch (const json::exception& e) {
    throw InputError(std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

// ============================================================
// Batching
// ============================================================

namespace {

std::vector<std::string> dedupe_keep_order(const std::vector<std::string>& cats) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& c : cats) {
    if (seen.insert(c).second) out.push_back(c);
  }
  return out;
}

// Sample keep out of n by partial shuffle, then restore original order.
std::vector<int> sample_indices(int n, int keep, Rng& rng) {
  std::vector<int> idx(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  rng.shuffle(idx);
  idx.resize(static_cast<size_t>(keep));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

std::vector<std::vector<BatchItem>> build_batches(const DatasetManifest& manifest,
                                                  const TrainConfig& cfg, uint64_t epoch) {
  std::vector<int> order(manifest.records.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  Rng shuffle_rng = seeded_stream(cfg.seed, "shuffle", epoch);
  shuffle_rng.shuffle(order);

  std::vector<std::vector<BatchItem>> batches;
  for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
    std::vector<BatchItem> batch;
    const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
    for (size_t i = start; i < end; ++i) {
      BatchItem item;
      item.record = order[i];
      item.categories = dedupe_keep_order(manifest.records[static_cast<size_t>(item.record)].categories);
      const int cap = cfg.max_categories_per_image;
      if (static_cast<int>(item.categories.size()) > cap) {
        Rng cap_rng = seeded_stream(cfg.seed, "category_cap",
                                    epoch * 1000003ULL + static_cast<uint64_t>(item.record));
        std::vector<int> keep = sample_indices(static_cast<int>(item.categories.size()), cap, cap_rng);
        std::vector<std::string> capped;
        capped.reserve(keep.size());
        for (int k : keep) capped.push_back(item.categories[static_cast<size_t>(k)]);
        item.categories = std::move(capped);
      }
      batch.push_back(std::move(item));
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

// ============================================================
// Optimization
// ============================================================

namespace {

double vec_norm(const DenseArray& v) {
  double s = 0.0;
  for (int64_t i = 0; i < v.numel(); ++i) s += static_cast<double>(v[i]) * v[i];
  return std::sqrt(s);
}

}  // namespace

void sgd_update(std::vector<std::pair<std::string, Parameter*>> params, const TrainConfig& cfg) {
  for (auto& [name, p] : params) {
    (void)name;
    if (!p->trainable) continue;
    const bool decay = p->decay || cfg.decay_biases;
    std::vector<float>& v = p->value.data();
    const std::vector<float>& g = p->grad.data();
    const int64_t n = p->value.numel();
    for (int64_t i = 0; i < n; ++i) {
      const size_t k = static_cast<size_t>(i);
      double step = static_cast<double>(g[k]);
      if (decay) step += cfg.weight_decay * static_cast<double>(v[k]);
      v[k] = static_cast<float>(static_cast<double>(v[k]) - cfg.learning_rate * step);
    }
    p->zero_grad();
  }
}

LossReport train_step(SynSegModel& model, const std::vector<TrainImage>& batch,
                      const TrainConfig& cfg) {
  if (batch.empty()) throw InputError("train_step requires a non-empty batch");
  for (auto& [name, p] : model.parameters()) {
    (void)name;
    p->zero_grad();
  }

  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  std::vector<PerImageLosses> per_image;
  std::vector<int> n_categories;
  std::vector<std::string> offenders;

  for (const auto& item : batch) {
    Graph g;
    ImageForward fwd = model.forward_image(g, item.image, item.categories);
    std::vector<Value> fg, bg, text;
    // A fully collapsed map makes a synergy vector exactly zero, which the
    // cosine rejects. That is divergence, not a caller bug: report the image
    // through the same channel as a non-finite loss, without an update.
    bool degenerate = false;
    for (const auto& cat : fwd.categories) {
      degenerate = degenerate || vec_norm(g.value(cat.fg)) <= 1e-12 ||
                   vec_norm(g.value(cat.bg)) <= 1e-12;
      fg.push_back(cat.fg);
      bg.push_back(cat.bg);
      text.push_back(cat.text);
    }
    if (degenerate) {
      offenders.push_back(item.id);
      per_image.push_back(PerImageLosses{});
      n_categories.push_back(static_cast<int>(fwd.categories.size()));
      continue;
    }
    ImageLossValues lv = image_losses(g, fg, bg, text, cfg.weights);
    PerImageLosses pl{g.scalar_value(lv.align), g.scalar_value(lv.cont), g.scalar_value(lv.back),
                      g.scalar_value(lv.sep), g.scalar_value(lv.total)};
    per_image.push_back(pl);
    n_categories.push_back(static_cast<int>(fwd.categories.size()));
    if (!std::isfinite(pl.total)) {
      offenders.push_back(item.id);
      continue;
    }
    Value root = g.scale(lv.total, inv_batch);
    g.backward(root);
  }

  if (!offenders.empty()) {
    std::string msg = "loss not finite or synergy features degenerate; offending images:";
    for (const auto& id : offenders) msg += " " + id;
    // No update is applied for the offending batch.
    throw NonFiniteLossError(msg, offenders);
  }

  sgd_update(model.parameters(), cfg);
  model.steps_trained += 1;
  return make_report(per_image, n_categories, cfg.weights);
}

// ============================================================
// Checkpointing
// ============================================================

void save_model_checkpoint(const std::string& path, SynSegModel& model, const TrainConfig& cfg,
                           const std::vector<double>& loss_tail) {
  ordered_json fields;
  fields["kind"] = "train_checkpoint";
  ordered_json cfg_json;
  to_json(cfg_json, cfg);
  fields["config"] = cfg_json;
  fields["steps"] = model.steps_trained;
  ordered_json tail = ordered_json::array();
  const size_t keep = 50;
  const size_t start = loss_tail.size() > keep ? loss_tail.size() - keep : 0;
  for (size_t i = start; i < loss_tail.size(); ++i) tail.push_back(loss_tail[i]);
  fields["loss_tail"] = tail;

  std::vector<std::pair<std::string, DenseArray>> tensors;
  for (auto& [name, p] : model.parameters()) tensors.emplace_back(name, p->value);
  write_checkpoint(path, fields, tensors);
}

LoadedModel load_model_checkpoint(const std::string& path) {
  CheckpointData ck = read_checkpoint(path);
  if (!ck.manifest.contains("kind") || ck.manifest["kind"] != "train_checkpoint") {
    throw InputError("not a training checkpoint: " + path);
  }
  if (!ck.manifest.contains("config")) {
    throw InputError("checkpoint is missing its config echo: " + path);
  }
  LoadedModel out;
  try {
    out.config = ck.manifest["config"].get<TrainConfig>();
  } catch (const json::exception& e) {
    throw InputError(std::string("bad checkpoint config: ") + e.what());
  }
  out.config.validate();
  out.model = std::make_unique<SynSegModel>(out.config.encoder, out.config.dims, out.config.seed);

  std::set<std::string> consumed;
  for (auto& [name, p] : out.model->parameters()) {
    const DenseArray* t = ck.find(name);
    if (!t) throw InputError("checkpoint is missing tensor '" + name + "': " + path);
    if (!t->same_shape(p->value)) {
      throw InputError("checkpoint tensor '" + name + "' has shape " + t->shape_str() +
                       ", model expects " + p->value.shape_str());
    }
    p->value = *t;
    p->zero_grad();
    consumed.insert(name);
  }
  for (const auto& [name, t] : ck.tensors) {
    (void)t;
    if (!consumed.count(name)) {
      throw InputError("checkpoint has unexpected tensor '" + name + "': " + path);
    }
  }
  if (ck.manifest.contains("steps")) {
    out.model->steps_trained = ck.manifest["steps"].get<int64_t>();
  }
  return out;
}

// ============================================================
// Training loop
// ============================================================

TrainResult train(const TrainConfig& cfg, const DatasetManifest& manifest,
                  const std::string& checkpoint_path, const std::string& loss_log_path,
                  const ordered_json* config_echo) {
  cfg.validate();

  // Desk-scale datasets fit in memory; load each image once.
  std::map<int, ImageRGB> images;
  for (size_t i = 0; i < manifest.records.size(); ++i) {
    images.emplace(static_cast<int>(i), load_ppm(manifest.records[i].image_path));
  }

  SynSegModel model(cfg.encoder, cfg.dims, cfg.seed);

  std::ofstream log;
  if (!loss_log_path.empty()) {
    log.open(loss_log_path, std::ios::trunc);
    if (!log) throw InputError("cannot open loss log for writing: " + loss_log_path);
    ordered_json header;
    header["type"] = "header";
    if (config_echo) {
      header["config"] = *config_echo;
    } else {
      ordered_json cfg_json;
      to_json(cfg_json, cfg);
      header["config"] = cfg_json;
    }
    header["dataset_records"] = manifest.records.size();
    log << header.dump() << "\n";
  }

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto batches = build_batches(manifest, cfg, static_cast<uint64_t>(epoch));
    for (const auto& batch : batches) {
      std::vector<TrainImage> loaded;
      loaded.reserve(batch.size());
      for (const auto& item : batch) {
        loaded.push_back(TrainImage{manifest.records[static_cast<size_t>(item.record)].image_path,
                                    images.at(item.record), item.categories});
      }
      LossReport report = train_step(model, loaded, cfg);
      result.steps += 1;
      result.loss_history.push_back(report.total);
      if (log) {
        ordered_json rec;
        rec["type"] = "step";
        rec["step"] = result.steps;
        rec["epoch"] = epoch;
        ordered_json body = report.to_json();
        for (auto& item : body.items()) rec[item.key()] = item.value();
        log << rec.dump() << "\n";
      }
    }
  }

  if (!checkpoint_path.empty()) {
    save_model_checkpoint(checkpoint_path, model, cfg, result.loss_history);
    result.checkpoint_path = checkpoint_path;
  }
  return result;
}

}  // namespace synseg
