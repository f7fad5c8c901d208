// synseg: command-line front for the mining / training / inference pipeline.
//
// Exit codes: 0 success, 1 internal error, 2 bad input, 3 non-finite loss.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "synseg/caption.hpp"
#include "synseg/errors.hpp"
#include "synseg/image.hpp"
#include "synseg/inference.hpp"
#include "synseg/synthetic.hpp"
#include "synseg/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace synseg;

#ifndef SYNSEG_DATA_DIR
#define SYNSEG_DATA_DIR "data"
#endif

namespace {

std::string data_file(const char* name) {
  return (fs::path(SYNSEG_DATA_DIR) / name).string();
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

uint64_t parse_seed_text(const std::string& text, const std::string& origin) {
  try {
    size_t pos = 0;
    unsigned long long v = std::stoull(text, &pos);
    if (pos != text.size()) throw std::invalid_argument("trailing characters");
    return static_cast<uint64_t>(v);
  } catch (const std::exception&) {
    throw InputError("bad seed '" + text + "' from " + origin);
  }
}

// ============================================================
// Train config resolution: defaults <- file <- flags, with provenance.
// ============================================================

struct TrainFlags {
  std::string config_path;
  double learning_rate = 0, weight_decay = 0, position_scale = 0;
  double lambda1 = 0, lambda2 = 0, lambda3 = 0, lambda4 = 0;
  int batch_size = 0, epochs = 0, max_categories = 0;
  int image_side = 0, patch_size = 0, visual_channels = 0, text_dim = 0;
  int decoder_blocks = 0, decoder_heads = 0, ff_mult = 0, film_hidden = 0;
  uint64_t seed = 0;
  bool decay_biases = false;
  std::string encoder_kind, prompt_template, adapter_path;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file (same field names as the log echo)");
    cmd->add_option("--learning-rate", learning_rate, "SGD learning rate")->capture_default_str();
    cmd->add_option("--weight-decay", weight_decay, "L2 weight decay on weight matrices")
        ->capture_default_str();
    cmd->add_option("--batch-size", batch_size, "images per optimization step");
    cmd->add_option("--epochs", epochs, "passes over the dataset");
    cmd->add_option("--max-categories-per-image", max_categories,
                    "seeded cap on categories per image");
    cmd->add_option("--seed", seed, "master seed (SYNSEG_SEED honored when absent)");
    cmd->add_flag("--decay-biases", decay_biases, "apply weight decay to bias/norm tensors too");
    cmd->add_option("--lambda1", lambda1, "object alignment weight");
    cmd->add_option("--lambda2", lambda2, "object contrast weight");
    cmd->add_option("--lambda3", lambda3, "background consistency weight");
    cmd->add_option("--lambda4", lambda4, "category separation weight");
    cmd->add_option("--encoder-kind", encoder_kind,
                    "seeded_mock | toy_patch | pretrained_adapter");
    cmd->add_option("--image-side", image_side, "input image side in pixels");
    cmd->add_option("--patch-size", patch_size, "encoder patch side in pixels");
    cmd->add_option("--visual-channels", visual_channels, "visual token width");
    cmd->add_option("--text-dim", text_dim, "text embedding width");
    cmd->add_option("--prompt-template", prompt_template, "prompt with {} category placeholder");
    cmd->add_option("--position-scale", position_scale, "patch position offset magnitude");
    cmd->add_option("--adapter-path", adapter_path, "pretrained adapter checkpoint");
    cmd->add_option("--decoder-blocks", decoder_blocks, "transformer decoder depth");
    cmd->add_option("--decoder-heads", decoder_heads, "attention heads per block");
    cmd->add_option("--ff-mult", ff_mult, "feed-forward width multiplier");
    cmd->add_option("--film-hidden", film_hidden, "FiLM generator hidden width");
  }

  // Resolution marks every top-level config field with where its value came
  // from; the echo rides along in each artifact.
  TrainConfig resolve(CLI::App* cmd, ordered_json& provenance) const {
    TrainConfig cfg;
    std::map<std::string, std::string> src = {
        {"learning_rate", "default"}, {"weight_decay", "default"},
        {"batch_size", "default"},    {"epochs", "default"},
        {"max_categories_per_image", "default"}, {"seed", "default"},
        {"decay_biases", "default"},  {"weights", "default"},
        {"encoder", "default"},       {"dims", "default"}};

    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw InputError("cannot open config: " + config_path);
      json j = json::parse(in, nullptr, false);
      if (j.is_discarded()) throw InputError("config is not valid JSON: " + config_path);
      cfg = parse_train_config(j);
      for (auto& [key, val] : src) {
        (void)val;
        if (j.contains(key)) src[key] = "file";
      }
    }

    auto seen = [&](const char* flag) { return cmd->count(flag) > 0; };
    if (seen("--learning-rate")) cfg.learning_rate = learning_rate, src["learning_rate"] = "flag";
    if (seen("--weight-decay")) cfg.weight_decay = weight_decay, src["weight_decay"] = "flag";
    if (seen("--batch-size")) cfg.batch_size = batch_size, src["batch_size"] = "flag";
    if (seen("--epochs")) cfg.epochs = epochs, src["epochs"] = "flag";
    if (seen("--max-categories-per-image"))
      cfg.max_categories_per_image = max_categories, src["max_categories_per_image"] = "flag";
    if (seen("--decay-biases")) cfg.decay_biases = decay_biases, src["decay_biases"] = "flag";
    if (seen("--lambda1")) cfg.weights.lambda1 = lambda1, src["weights"] = "flag";
    if (seen("--lambda2")) cfg.weights.lambda2 = lambda2, src["weights"] = "flag";
    if (seen("--lambda3")) cfg.weights.lambda3 = lambda3, src["weights"] = "flag";
    if (seen("--lambda4")) cfg.weights.lambda4 = lambda4, src["weights"] = "flag";
    if (seen("--encoder-kind"))
      cfg.encoder.kind = encoder_kind_from_name(encoder_kind), src["encoder"] = "flag";
    if (seen("--image-side")) cfg.encoder.image_side = image_side, src["encoder"] = "flag";
    if (seen("--patch-size")) cfg.encoder.patch_size = patch_size, src["encoder"] = "flag";
    if (seen("--visual-channels"))
      cfg.encoder.visual_channels = visual_channels, src["encoder"] = "flag";
    if (seen("--text-dim")) cfg.encoder.text_dim = text_dim, src["encoder"] = "flag";
    if (seen("--prompt-template"))
      cfg.encoder.prompt_template = prompt_template, src["encoder"] = "flag";
    if (seen("--position-scale"))
      cfg.encoder.position_scale = position_scale, src["encoder"] = "flag";
    if (seen("--adapter-path")) cfg.encoder.adapter_path = adapter_path, src["encoder"] = "flag";
    if (seen("--decoder-blocks")) cfg.dims.decoder_blocks = decoder_blocks, src["dims"] = "flag";
    if (seen("--decoder-heads")) cfg.dims.decoder_heads = decoder_heads, src["dims"] = "flag";
    if (seen("--ff-mult")) cfg.dims.ff_mult = ff_mult, src["dims"] = "flag";
    if (seen("--film-hidden")) cfg.dims.film_hidden = film_hidden, src["dims"] = "flag";

    if (seen("--seed")) {
      cfg.seed = seed;
      src["seed"] = "flag";
    } else if (const char* env = std::getenv("SYNSEG_SEED")) {
      cfg.seed = parse_seed_text(env, "SYNSEG_SEED");
      src["seed"] = "env";
    }

    // Encoder streams share the master seed unless the file pinned one.
    if (src["encoder"] != "file") cfg.encoder.seed = cfg.seed;

    cfg.validate();
    provenance = ordered_json::object();
    for (const auto& [key, val] : src) provenance[key] = val;
    return cfg;
  }
};

ordered_json config_echo_json(const TrainConfig& cfg, const ordered_json& provenance) {
  ordered_json echo;
  ordered_json cfg_json;
  to_json(cfg_json, cfg);
  echo["config"] = cfg_json;
  echo["provenance"] = provenance;
  return echo;
}

uint64_t resolve_plain_seed(CLI::App* cmd, uint64_t flag_value, uint64_t fallback) {
  if (cmd->count("--seed") > 0) return flag_value;
  if (const char* env = std::getenv("SYNSEG_SEED")) return parse_seed_text(env, "SYNSEG_SEED");
  return fallback;
}

double check_threshold(double t) {
  if (!(t > 0.0 && t < 1.0)) {
    throw InputError("threshold must lie strictly between 0 and 1");
  }
  return t;
}

std::string sanitize_filename(const std::string& s) {
  std::string out;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
    out.push_back(ok ? c : '_');
  }
  return out;
}

// Pairs images/<stem>.ppm with gt/<stem>.pgm; any unmatched file on either
// side is an input error.
std::vector<std::pair<std::string, std::string>> pair_images_gt(const std::string& images_dir,
                                                                const std::string& gt_dir) {
  if (!fs::is_directory(images_dir)) throw InputError("not a directory: " + images_dir);
  if (!fs::is_directory(gt_dir)) throw InputError("not a directory: " + gt_dir);
  std::vector<std::string> stems;
  for (const auto& e : fs::directory_iterator(images_dir)) {
    if (e.path().extension() == ".ppm") stems.push_back(e.path().stem().string());
  }
  std::sort(stems.begin(), stems.end());
  if (stems.empty()) throw InputError("no .ppm images in " + images_dir);

  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& s : stems) {
    fs::path gt = fs::path(gt_dir) / (s + ".pgm");
    if (!fs::exists(gt)) throw InputError("no ground truth for image '" + s + "' in " + gt_dir);
    pairs.emplace_back((fs::path(images_dir) / (s + ".ppm")).string(), gt.string());
  }
  for (const auto& e : fs::directory_iterator(gt_dir)) {
    if (e.path().extension() != ".pgm") continue;
    const std::string s = e.path().stem().string();
    if (!std::binary_search(stems.begin(), stems.end(), s)) {
      throw InputError("ground truth '" + s + "' has no matching image in " + images_dir);
    }
  }
  return pairs;
}

std::vector<EvalItem> load_pairs(const std::vector<std::pair<std::string, std::string>>& pairs,
                                 const Palette& palette) {
  std::vector<EvalItem> items;
  for (const auto& [img, gt] : pairs) {
    EvalItem item;
    item.image = load_ppm(img);
    item.gt = load_pgm(gt);
    item.categories = palette.foreground_names();
    items.push_back(std::move(item));
  }
  return items;
}

LoadedModel load_model_or_die(const std::string& path) {
  LoadedModel lm = load_model_checkpoint(path);
  if (lm.model->steps_trained == 0) {
    std::cerr << "warning: checkpoint " << path << " has had no training steps\n";
  }
  return lm;
}

// ============================================================
// Commands
// ============================================================

int cmd_mine(const std::string& input, const std::string& output, const std::string& exclusion,
             const std::string& lexicon) {
  LexiconTagger tagger = LexiconTagger::from_file(lexicon);
  ExclusionList excl = ExclusionList::from_file(exclusion);
  MineCounts c = mine_corpus(input, excl, output, tagger);
  ordered_json summary;
  summary["read"] = c.read;
  summary["emitted"] = c.emitted;
  summary["skipped_malformed"] = c.skipped_malformed;
  summary["skipped_empty"] = c.skipped_empty;
  summary["exclusion_terms"] = excl.terms.size();
  summary["lexicon_entries"] = tagger.size();
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_train(CLI::App* cmd, const TrainFlags& flags, const std::string& manifest_path,
              const std::string& data_root, const std::string& out_ckpt,
              const std::string& loss_log) {
  ordered_json provenance;
  TrainConfig cfg = flags.resolve(cmd, provenance);
  const std::string root =
      data_root.empty() ? fs::path(manifest_path).parent_path().string() : data_root;
  DatasetManifest manifest = load_manifest(manifest_path, root);
  for (const auto& s : manifest.skipped) std::cerr << "warning: skipped record: " << s << "\n";

  ordered_json echo = config_echo_json(cfg, provenance);
  TrainResult r = train(cfg, manifest, out_ckpt, loss_log, &echo);

  ordered_json summary;
  summary["steps"] = r.steps;
  summary["first_total"] = r.loss_history.empty() ? 0.0 : r.loss_history.front();
  summary["final_total"] = r.loss_history.empty() ? 0.0 : r.loss_history.back();
  summary["checkpoint"] = out_ckpt;
  summary["loss_log"] = loss_log;
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_segment(const std::string& ckpt, const std::string& image_path,
                const std::string& categories_csv, double threshold, const std::string& mode_name,
                const std::string& out_dir, const std::string& labels_out,
                const std::string& overlay_out) {
  check_threshold(threshold);
  SegmentMode mode = segment_mode_from_name(mode_name);
  std::vector<std::string> categories = split_commas(categories_csv);
  if (categories.empty()) throw InputError("--categories must name at least one category");

  LoadedModel lm = load_model_or_die(ckpt);
  ImageRGB image = load_ppm(image_path);
  ActivationStack acts =
      run_activations(*lm.model, image, categories, image.width, image.height);

  fs::create_directories(out_dir);
  const std::string stem = fs::path(image_path).stem().string();
  ordered_json written = ordered_json::array();
  for (size_t k = 0; k < acts.categories.size(); ++k) {
    LabelImage mask = make_labels(acts.width, acts.height);
    for (size_t i = 0; i < acts.maps[k].size(); ++i) {
      mask.labels[i] = static_cast<double>(acts.maps[k][i]) >= threshold ? 255 : 0;
    }
    const std::string path =
        (fs::path(out_dir) / (stem + "_" + sanitize_filename(acts.categories[k]) + ".pgm"))
            .string();
    save_pgm(mask, path);
    written.push_back(path);
  }

  if (!labels_out.empty()) {
    std::vector<int> labels;
    for (size_t k = 0; k < acts.categories.size(); ++k) labels.push_back(static_cast<int>(k) + 1);
    LabelImage combined = apply_threshold(acts, threshold, mode, labels, 0);
    save_pgm(combined, labels_out);
    written.push_back(labels_out);
  }
  if (!overlay_out.empty()) {
    save_ppm(render_overlay(image, acts, threshold), overlay_out);
    written.push_back(overlay_out);
  }

  ordered_json summary;
  summary["categories"] = acts.categories;
  summary["threshold"] = threshold;
  summary["mode"] = segment_mode_name(mode);
  summary["written"] = written;
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& images_dir, const std::string& gt_dir,
             const std::string& palette_path, double threshold, const std::string& mode_name,
             const std::string& out_json) {
  check_threshold(threshold);
  SegmentMode mode = segment_mode_from_name(mode_name);
  Palette palette = load_palette(palette_path);
  LoadedModel lm = load_model_or_die(ckpt);
  std::vector<EvalItem> items = load_pairs(pair_images_gt(images_dir, gt_dir), palette);
  EvalResult res = evaluate_dataset(*lm.model, items, palette, threshold, mode);

  ordered_json report;
  ordered_json cfg_json;
  to_json(cfg_json, lm.config);
  report["config"] = cfg_json;
  report["threshold"] = threshold;
  report["mode"] = segment_mode_name(mode);
  report["images"] = res.images;
  report["miou"] = res.miou;
  ordered_json per_class = ordered_json::object();
  for (size_t k = 0; k < palette.names.size(); ++k) {
    if (res.per_class_iou[k] >= 0) {
      per_class[palette.names[k]] = res.per_class_iou[k];
    } else {
      per_class[palette.names[k]] = nullptr;
    }
  }
  report["per_class_iou"] = per_class;
  std::cout << report.dump() << "\n";
  if (!out_json.empty()) {
    std::ofstream out(out_json, std::ios::trunc);
    if (!out) throw InputError("cannot write report: " + out_json);
    out << report.dump(2) << "\n";
  }
  return 0;
}

int cmd_sweep(const std::string& ckpt, const std::string& images_dir, const std::string& gt_dir,
              const std::string& palette_path, const std::string& thresholds_csv,
              const std::string& mode_name, const std::string& out_csv) {
  SegmentMode mode = segment_mode_from_name(mode_name);
  Palette palette = load_palette(palette_path);
  std::vector<double> thresholds;
  for (const auto& t : split_commas(thresholds_csv)) {
    try {
      thresholds.push_back(check_threshold(std::stod(t)));
    } catch (const InputError&) {
      throw;
    } catch (const std::exception&) {
      throw InputError("bad threshold '" + t + "'");
    }
  }
  LoadedModel lm = load_model_or_die(ckpt);
  std::vector<EvalItem> items = load_pairs(pair_images_gt(images_dir, gt_dir), palette);
  std::vector<SweepRow> rows = threshold_sweep(*lm.model, items, palette, thresholds, mode);

  ordered_json echo;
  ordered_json cfg_json;
  to_json(cfg_json, lm.config);
  echo["config"] = cfg_json;
  echo["mode"] = segment_mode_name(mode);
  echo["thresholds"] = thresholds;
  write_sweep_csv(out_csv, rows, echo);

  ordered_json summary;
  summary["rows"] = rows.size();
  summary["out"] = out_csv;
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_ablate(CLI::App* cmd, const TrainFlags& flags, const std::string& manifest_path,
               const std::string& data_root, const std::string& palette_path, double threshold,
               const std::string& mode_name, const std::string& out_csv) {
  check_threshold(threshold);
  SegmentMode mode = segment_mode_from_name(mode_name);
  ordered_json provenance;
  TrainConfig cfg = flags.resolve(cmd, provenance);
  const std::string root =
      data_root.empty() ? fs::path(manifest_path).parent_path().string() : data_root;
  DatasetManifest manifest = load_manifest(manifest_path, root);
  Palette palette = load_palette(palette_path);

  std::vector<AblationRow> rows = run_ablation(cfg, manifest, palette, threshold, mode);
  ordered_json echo = config_echo_json(cfg, provenance);
  echo["threshold"] = threshold;
  echo["mode"] = segment_mode_name(mode);
  write_ablation_csv(out_csv, rows, echo);

  ordered_json summary = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json row;
    row["name"] = r.name;
    row["final_total"] = r.final_total;
    row["miou"] = r.miou;
    summary.push_back(row);
  }
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_synth(CLI::App* cmd, const std::string& out_dir, int images, int side,
              uint64_t seed_flag) {
  SynthConfig cfg;
  cfg.n_images = images;
  cfg.side = side;
  cfg.seed = resolve_plain_seed(cmd, seed_flag, cfg.seed);
  generate_synthetic_dataset(out_dir, cfg);
  ordered_json summary;
  summary["out"] = out_dir;
  summary["images"] = cfg.n_images;
  summary["side"] = cfg.side;
  summary["seed"] = cfg.seed;
  summary["manifest"] = (fs::path(out_dir) / "manifest.jsonl").string();
  summary["palette"] = (fs::path(out_dir) / "palette.json").string();
  std::cout << summary.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synseg: weakly supervised open-vocabulary segmentation, desk scale"};
  app.require_subcommand(1);

  // mine
  auto* mine = app.add_subcommand("mine", "extract noun-phrase categories from captions");
  std::string mine_input, mine_output;
  std::string mine_exclusion = data_file("exclusion_default.txt");
  std::string mine_lexicon = data_file("pos_lexicon.tsv");
  mine->add_option("--input", mine_input, "caption file (TSV or JSONL)")->required();
  mine->add_option("--output", mine_output, "output JSONL path")->required();
  mine->add_option("--exclusion", mine_exclusion, "exclusion list file")->capture_default_str();
  mine->add_option("--lexicon", mine_lexicon, "word->tag lexicon TSV")->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "train decoder/FiLM/projector on a manifest");
  TrainFlags train_flags;
  std::string train_manifest, train_root, train_out = "checkpoint.synseg";
  std::string train_log = "loss_log.jsonl";
  train_cmd->add_option("--manifest", train_manifest, "dataset manifest JSONL")->required();
  train_cmd->add_option("--data-root", train_root,
                        "root for relative paths (default: manifest directory)");
  train_cmd->add_option("--out", train_out, "checkpoint output path")->capture_default_str();
  train_cmd->add_option("--loss-log", train_log, "loss log JSONL path")->capture_default_str();
  train_flags.attach(train_cmd);

  // segment
  auto* seg = app.add_subcommand("segment", "segment one image with free-form categories");
  std::string seg_ckpt, seg_image, seg_categories, seg_out_dir = ".";
  std::string seg_labels, seg_overlay, seg_mode = "with_background";
  double seg_threshold = 0.4;
  seg->add_option("--ckpt", seg_ckpt, "trained checkpoint")->required();
  seg->add_option("--image", seg_image, "input image (PPM)")->required();
  seg->add_option("--categories", seg_categories, "comma-separated category names")->required();
  seg->add_option("--threshold", seg_threshold, "activation threshold in (0,1)")
      ->capture_default_str();
  seg->add_option("--mode", seg_mode, "labeled_only | with_background")->capture_default_str();
  seg->add_option("--out-dir", seg_out_dir, "directory for per-category masks")
      ->capture_default_str();
  seg->add_option("--labels", seg_labels, "combined label map output (PGM)");
  seg->add_option("--overlay", seg_overlay, "tinted overlay output (PPM)");

  // eval
  auto* ev = app.add_subcommand("eval", "mIoU of a checkpoint against ground-truth masks");
  std::string ev_ckpt, ev_images, ev_gt, ev_palette, ev_out;
  std::string ev_mode = "with_background";
  double ev_threshold = 0.4;
  ev->add_option("--ckpt", ev_ckpt, "trained checkpoint")->required();
  ev->add_option("--images", ev_images, "directory of .ppm images")->required();
  ev->add_option("--gt", ev_gt, "directory of .pgm label maps (same stems)")->required();
  ev->add_option("--palette", ev_palette, "palette JSON")->required();
  ev->add_option("--threshold", ev_threshold, "activation threshold in (0,1)")
      ->capture_default_str();
  ev->add_option("--mode", ev_mode, "labeled_only | with_background")->capture_default_str();
  ev->add_option("--out", ev_out, "also write the JSON report here");

  // sweep
  auto* sw = app.add_subcommand("sweep", "mIoU and mask area across thresholds");
  std::string sw_ckpt, sw_images, sw_gt, sw_palette, sw_out = "sweep.csv";
  std::string sw_thresholds = "0.1,0.2,0.3,0.4,0.5,0.6";
  std::string sw_mode = "with_background";
  sw->add_option("--ckpt", sw_ckpt, "trained checkpoint")->required();
  sw->add_option("--images", sw_images, "directory of .ppm images")->required();
  sw->add_option("--gt", sw_gt, "directory of .pgm label maps (same stems)")->required();
  sw->add_option("--palette", sw_palette, "palette JSON")->required();
  sw->add_option("--thresholds", sw_thresholds, "comma-separated thresholds")
      ->capture_default_str();
  sw->add_option("--mode", sw_mode, "labeled_only | with_background")->capture_default_str();
  sw->add_option("--out", sw_out, "CSV output path")->capture_default_str();

  // ablate
  auto* ab = app.add_subcommand("ablate", "drop-one loss-weight study (five configurations)");
  TrainFlags ab_flags;
  std::string ab_manifest, ab_root, ab_palette, ab_out = "ablation.csv";
  std::string ab_mode = "with_background";
  double ab_threshold = 0.4;
  ab->add_option("--manifest", ab_manifest, "dataset manifest JSONL")->required();
  ab->add_option("--data-root", ab_root, "root for relative paths (default: manifest directory)");
  ab->add_option("--palette", ab_palette, "palette JSON")->required();
  ab->add_option("--threshold", ab_threshold, "activation threshold in (0,1)")
      ->capture_default_str();
  ab->add_option("--mode", ab_mode, "labeled_only | with_background")->capture_default_str();
  ab->add_option("--out", ab_out, "CSV output path")->capture_default_str();
  ab_flags.attach(ab);

  // synth
  auto* sy = app.add_subcommand("synth", "generate the shape dataset used by the desk runs");
  std::string sy_out;
  int sy_images = 8, sy_side = 32;
  uint64_t sy_seed = 42;
  sy->add_option("--out", sy_out, "output directory")->required();
  sy->add_option("--images", sy_images, "number of images")->capture_default_str();
  sy->add_option("--side", sy_side, "image side in pixels (multiple of 8)")
      ->capture_default_str();
  sy->add_option("--seed", sy_seed, "master seed (SYNSEG_SEED honored when absent)")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (mine->parsed()) return cmd_mine(mine_input, mine_output, mine_exclusion, mine_lexicon);
    if (train_cmd->parsed())
      return cmd_train(train_cmd, train_flags, train_manifest, train_root, train_out, train_log);
    if (seg->parsed())
      return cmd_segment(seg_ckpt, seg_image, seg_categories, seg_threshold, seg_mode, seg_out_dir,
                         seg_labels, seg_overlay);
    if (ev->parsed())
      return cmd_eval(ev_ckpt, ev_images, ev_gt, ev_palette, ev_threshold, ev_mode, ev_out);
    if (sw->parsed())
      return cmd_sweep(sw_ckpt, sw_images, sw_gt, sw_palette, sw_thresholds, sw_mode, sw_out);
    if (ab->parsed())
      return cmd_ablate(ab, ab_flags, ab_manifest, ab_root, ab_palette, ab_threshold, ab_mode,
                        ab_out);
    if (sy->parsed()) return cmd_synth(sy, sy_out, sy_images, sy_side, sy_seed);
    std::cerr << "error: no command\n";
    return 2;
  } catch (const NonFiniteLossError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
