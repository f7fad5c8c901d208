#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "synseg/fss.hpp"
#include "synseg/mccl.hpp"

namespace synseg {

struct ManifestRecord {
  std::string image_path;  // resolved (data_root applied)
  std::string mask_path;   // optional ground-truth labels; empty when absent
  std::vector<std::string> categories;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::vector<std::string> skipped;  // "<line or path>: reason"
};

// JSONL, one {"image_path": ..., "categories": [...]} per line. Relative
// paths resolve against data_root. Records that do not resolve (missing file,
// malformed line, no categories) are skipped and reported, not fatal; an
// empty result is.
DatasetManifest load_manifest(const std::string& path, const std::string& data_root);

struct TrainConfig {
  double learning_rate = 1e-5;
  double weight_decay = 1e-4;
  int batch_size = 8;
  int epochs = 1;
  int max_categories_per_image = 8;
  uint64_t seed = 42;
  bool decay_biases = false;  // true applies weight decay to bias/norm tensors too
  LossWeights weights;
  EncoderConfig encoder;
  ModelDims dims;

  void validate() const;
};

void to_json(nlohmann::ordered_json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Strict variant for user-supplied config files: unknown keys are rejected.
TrainConfig parse_train_config(const nlohmann::json& j);

struct BatchItem {
  int record = 0;                       // index into DatasetManifest::records
  std::vector<std::string> categories;  // deduplicated, capped
};

// Seeded shuffle into batch_size chunks; per-record categories deduplicated
// (first occurrence wins) and sampled down to max_categories_per_image.
// Deterministic in (config.seed, epoch).
std::vector<std::vector<BatchItem>> build_batches(const DatasetManifest& manifest,
                                                  const TrainConfig& cfg, uint64_t epoch);

struct TrainImage {
  std::string id;  // image path; used in diagnostics
  ImageRGB image;
  std::vector<std::string> categories;
};

// One SGD step over a batch: per-image forward/backward with gradients
// accumulated at 1/batch weight, a finiteness gate, then the parameter
// update. Throws NonFiniteLossError (naming the images) before applying any
// update if a per-image total is not finite.
LossReport train_step(SynSegModel& model, const std::vector<TrainImage>& batch,
                      const TrainConfig& cfg);

void sgd_update(std::vector<std::pair<std::string, Parameter*>> params, const TrainConfig& cfg);

// Model checkpointing on top of the tensor container: every trainable tensor
// exactly once, plus config echo, step count and the tail of the loss curve.
void save_model_checkpoint(const std::string& path, SynSegModel& model, const TrainConfig& cfg,
                           const std::vector<double>& loss_tail);

struct LoadedModel {
  TrainConfig config;
  std::unique_ptr<SynSegModel> model;
};

LoadedModel load_model_checkpoint(const std::string& path);

struct TrainResult {
  int64_t steps = 0;
  std::vector<double> loss_history;  // total per step
  std::string checkpoint_path;
};

// Full loop: epochs x batches of train_step, JSONL loss log (header record
// with the config echo, then one record per step), checkpoint at the end.
// config_echo, when given, is embedded verbatim in artifacts (the CLI passes
// the resolved config with provenance); otherwise the TrainConfig is echoed.
TrainResult train(const TrainConfig& cfg, const DatasetManifest& manifest,
                  const std::string& checkpoint_path, const std::string& loss_log_path,
                  const nlohmann::ordered_json* config_echo = nullptr);

}  // namespace synseg
