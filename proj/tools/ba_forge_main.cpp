// ba-forge command-line front end: dataset generation, extractor training,
// attack generation, evaluation matrices, and loss-variation profiles.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "baforge/attack.hpp"
#include "baforge/dataset.hpp"
#include "baforge/errors.hpp"
#include "baforge/evaluation.hpp"
#include "baforge/extractor.hpp"
#include "baforge/manifest.hpp"
#include "baforge/mask.hpp"
#include "baforge/ppm.hpp"
#include "baforge/rng.hpp"
#include "baforge/tensor.hpp"
#include "baforge/training.hpp"
#include "baforge/transforms.hpp"
#include "baforge/version.hpp"
#include "baforge/weights_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace baforge;

namespace {

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw IoError("short write to " + path);
}

// "<base>.<old ext>" -> "<base><suffix>"; no extension -> append suffix.
std::string sibling_path(const std::string& out_path, const std::string& suffix) {
  const fs::path p(out_path);
  fs::path s = p;
  s.replace_extension();
  return s.string() + suffix;
}

DatasetSpec parse_dataset_spec(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("dataset spec: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("dataset spec: top level must be a JSON object");
  DatasetSpec spec;
  for (const auto& item : j.items()) {
    const std::string& k = item.key();
    if (k == "n_identities") spec.n_identities = item.value().get<int>();
    else if (k == "samples_per_identity") spec.samples_per_identity = item.value().get<int>();
    else if (k == "height") spec.height = item.value().get<int>();
    else if (k == "width") spec.width = item.value().get<int>();
    else if (k == "max_shift") spec.max_shift = item.value().get<double>();
    else if (k == "noise_sigma") spec.noise_sigma = item.value().get<double>();
    else if (k == "jitter_lo") spec.jitter_lo = item.value().get<double>();
    else if (k == "jitter_hi") spec.jitter_hi = item.value().get<double>();
    else throw ValidationError("dataset spec: unknown field '" + k + "'");
  }
  spec.validate();
  return spec;
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir, uint64_t seed) {
  DatasetSpec spec;
  std::string spec_text = "{}";
  if (!spec_path.empty()) {
    spec_text = read_text_file(spec_path);
    spec = parse_dataset_spec(spec_text);
  }
  const LabeledDataset ds = generate_dataset(spec, seed);
  export_dataset_ppm(ds, out_dir);

  RunManifest manifest;
  manifest.command = "gen-data";
  manifest.seed = seed;
  manifest.config_hash = fnv1a64_hex(spec_text);
  if (!spec_path.empty()) manifest.inputs.push_back(spec_path);
  manifest.outputs.push_back((fs::path(out_dir) / "labels.csv").string());
  write_manifest((fs::path(out_dir) / "manifest.json").string(), manifest);

  std::cout << "wrote " << ds.items.size() << " images (" << ds.n_identities
            << " identities x " << ds.samples_per_identity << " samples) to " << out_dir
            << "\n";
  return 0;
}

int cmd_train(const std::string& data_dir, const std::string& arch_name,
              const std::string& out_path, int epochs, double lr, int batch_size,
              const std::string& aug_range, uint64_t seed) {
  const LabeledDataset ds = load_dataset_ppm(data_dir);
  if (ds.items.empty()) throw ValidationError("train: dataset directory is empty");
  const int h = ds.items.front().image.height;
  const int w = ds.items.front().image.width;
  const Architecture arch = make_architecture(arch_name, h, w);

  TrainParams params;
  params.epochs = epochs;
  params.lr = lr;
  params.batch_size = batch_size;
  params.seed = seed;
  if (std::sscanf(aug_range.c_str(), "%lf:%lf", &params.aug_lo, &params.aug_hi) != 2) {
    throw ValidationError("train: --brightness-aug expects lo:hi, e.g. 0.5:1.5");
  }
  const TrainResult result = train_extractor(ds, arch, params);
  save_extractor(out_path, result.extractor);

  RunManifest manifest;
  manifest.command = "train";
  manifest.seed = seed;
  manifest.config_hash = fnv1a64_hex(arch_name + "/" + std::to_string(epochs) + "/" +
                                     std::to_string(lr) + "/" + std::to_string(batch_size) +
                                     "/" + aug_range);
  manifest.inputs.push_back(data_dir);
  manifest.outputs.push_back(out_path);
  write_manifest(sibling_path(out_path, ".manifest.json"), manifest);

  std::cout << "arch " << arch_name << ", " << result.n_classes << " classes, epochs "
            << epochs << "\n";
  std::cout << "cross-entropy first epoch " << result.initial_loss << ", last epoch "
            << result.final_loss << "\n";
  std::cout << "holdout accuracy " << result.holdout_accuracy << "\n";
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_attack(const std::string& config_path, const std::string& source_path,
               const std::string& target_path, const std::string& weights_path,
               const std::string& mask_path, const std::string& out_path, int64_t seed_flag) {
  AttackConfig config = config_path.empty() ? AttackConfig{} : load_attack_config(config_path);
  if (seed_flag >= 0) config.seed = static_cast<uint64_t>(seed_flag);

  const FeatureExtractor model = load_extractor(weights_path);
  const ImageTensor source = read_ppm(source_path);
  ImageTensor target = source;
  if (!target_path.empty()) {
    target = read_ppm(target_path);
  } else if (config.objective == Objective::kImpersonation) {
    throw ValidationError("attack: impersonation requires --target");
  }

  const bool patch = config.mode != AttackMode::kImperceptible;
  Mask mask;
  if (patch) {
    if (mask_path.empty()) {
      throw ValidationError("attack: patch modes require --mask (see assets/*.ppm)");
    }
    mask = load_mask(mask_path);
  }

  const AttackResult result = run_attack(source, target, model, config,
                                         patch ? &mask : nullptr, config.seed);
  write_ppm(out_path, result.adversarial);

  const std::string trace_path = sibling_path(out_path, ".trace.csv");
  std::ostringstream trace;
  trace << "iteration,mean_ensemble_loss\n";
  for (size_t i = 0; i < result.loss_trace.size(); ++i) {
    trace << i << ',' << result.loss_trace[i] << '\n';
  }
  write_text_file(trace_path, trace.str());

  RunManifest manifest;
  manifest.command = "attack";
  manifest.seed = config.seed;
  manifest.config_hash = fnv1a64_hex(attack_config_to_json(config));
  manifest.inputs.push_back(source_path);
  if (!target_path.empty()) manifest.inputs.push_back(target_path);
  manifest.inputs.push_back(weights_path);
  if (!mask_path.empty()) manifest.inputs.push_back(mask_path);
  manifest.outputs.push_back(out_path);
  manifest.outputs.push_back(trace_path);
  write_manifest(sibling_path(out_path, ".manifest.json"), manifest);

  std::cout << variant_name(config.variant) << " " << mode_name(config.mode) << " "
            << objective_name(config.objective) << ", " << config.iterations
            << " iterations\n";
  std::cout << "loss " << result.loss_trace.front() << " -> " << result.loss_trace.back()
            << "\n";
  std::cout << "wrote " << out_path << " and " << trace_path << "\n";
  return 0;
}

std::vector<std::string> split_csv_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

int cmd_evaluate(const std::string& data_dir, const std::string& surrogate_path,
                 const std::string& targets_csv, const std::string& variants_csv,
                 const std::string& modes_csv, const std::string& objectives_csv,
                 int n_instances, int n_trials, const std::string& defense_text,
                 const std::string& config_path, const std::string& identity_range,
                 double target_far, const std::string& out_prefix, uint64_t seed) {
  LabeledDataset pool = load_dataset_ppm(data_dir);
  if (!identity_range.empty()) {
    int lo = 0, hi = 0;
    if (std::sscanf(identity_range.c_str(), "%d:%d", &lo, &hi) != 2 || lo >= hi) {
      throw ValidationError("evaluate: --identity-range must be lo:hi with lo < hi");
    }
    pool = filter_identities(pool, lo, hi);
    if (pool.items.empty()) throw ValidationError("evaluate: identity range selects nothing");
  }

  EvalRequest request;
  for (const std::string& v : split_csv_list(variants_csv))
    request.variants.push_back(parse_variant(v));
  for (const std::string& m : split_csv_list(modes_csv)) request.modes.push_back(parse_mode(m));
  for (const std::string& o : split_csv_list(objectives_csv))
    request.objectives.push_back(parse_objective(o));
  request.n_instances = n_instances;
  request.base_config = config_path.empty() ? AttackConfig{} : load_attack_config(config_path);
  request.eval_params.n_trials = n_trials;
  request.eval_params.defense = parse_defense(defense_text);
  request.seed = seed;

  // Load every model and calibrate its verification threshold on the pool.
  std::vector<std::unique_ptr<FeatureExtractor>> models;
  std::vector<std::string> model_paths;
  model_paths.push_back(surrogate_path);
  for (const std::string& t : split_csv_list(targets_csv)) model_paths.push_back(t);
  std::vector<EvalModelRef> refs;
  for (const std::string& path : model_paths) {
    models.push_back(std::make_unique<FeatureExtractor>(load_extractor(path)));
    EvalModelRef ref;
    ref.name = fs::path(path).stem().string();
    ref.model = models.back().get();
    ref.tau = calibrate_threshold(*models.back(), pool, target_far, 2000, seed).tau;
    std::cout << "model " << ref.name << ": tau = " << ref.tau << " (target FAR "
              << target_far << ")\n";
    refs.push_back(ref);
  }
  const std::vector<EvalModelRef> targets(refs.begin() + 1, refs.end());

  const EvaluationReport report = eval_matrix(request, refs.front(), targets, pool);
  const std::string json_path = out_prefix + ".json";
  const std::string csv_path = out_prefix + ".csv";
  write_text_file(json_path, report_to_json(report));
  write_text_file(csv_path, report_to_csv(report));

  RunManifest manifest;
  manifest.command = "evaluate";
  manifest.seed = seed;
  manifest.config_hash = fnv1a64_hex(report.attack_config_json + "|" + report.defense);
  manifest.inputs.push_back(data_dir);
  for (const std::string& p : model_paths) manifest.inputs.push_back(p);
  manifest.outputs.push_back(json_path);
  manifest.outputs.push_back(csv_path);
  write_manifest(out_prefix + ".manifest.json", manifest);

  for (const EvalCell& cell : report.cells) {
    std::cout << cell.variant << " " << cell.mode << " " << cell.objective << " on "
              << cell.model << (cell.white_box ? " (white-box)" : " (black-box)")
              << ": mean ASR " << cell.mean_asr << " (clean " << cell.clean_asr << ")\n";
  }
  std::cout << "wrote " << json_path << " and " << csv_path << "\n";
  return 0;
}

int cmd_profile(const std::string& weights_path, const std::string& image_path,
                const std::string& reference_path, const std::string& kind_text,
                const std::string& objective_text, int n, const std::string& out_path,
                uint64_t seed) {
  EvalTransformKind kind;
  if (kind_text == "none") kind = EvalTransformKind::kNone;
  else if (kind_text == "linear") kind = EvalTransformKind::kLinear;
  else if (kind_text == "nonlinear") kind = EvalTransformKind::kNonlinear;
  else throw ValidationError("profile: unknown kind '" + kind_text +
                             "' (valid: none, linear, nonlinear)");

  const FeatureExtractor model = load_extractor(weights_path);
  const ImageTensor image = read_ppm(image_path);
  const ImageTensor ref_image =
      reference_path.empty() ? image : read_ppm(reference_path);
  const EmbeddingVector reference = model.forward(ref_image);
  const Objective objective = parse_objective(objective_text);

  EvalParams params;
  Rng rng(derive_seed(seed, "evaluation"));
  const LossVariationProfile prof =
      loss_variation_profile(model, image, reference, objective, kind, n, params, rng);

  std::ostringstream csv;
  csv << "# kind=" << kind_text << ",n=" << prof.n_samples << ",mean=" << prof.mean
      << ",stddev=" << prof.stddev << ",min=" << prof.min << ",max=" << prof.max << "\n";
  csv << "sample,loss\n";
  for (size_t i = 0; i < prof.losses.size(); ++i) csv << i << ',' << prof.losses[i] << '\n';
  write_text_file(out_path, csv.str());

  RunManifest manifest;
  manifest.command = "profile";
  manifest.seed = seed;
  manifest.config_hash = fnv1a64_hex(kind_text + "/" + objective_text + "/" + std::to_string(n));
  manifest.inputs.push_back(weights_path);
  manifest.inputs.push_back(image_path);
  if (!reference_path.empty()) manifest.inputs.push_back(reference_path);
  manifest.outputs.push_back(out_path);
  write_manifest(sibling_path(out_path, ".manifest.json"), manifest);

  std::cout << "kind " << kind_text << ", n " << prof.n_samples << ": mean " << prof.mean
            << ", stddev " << prof.stddev << ", min " << prof.min << ", max " << prof.max
            << "\n";
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ba-forge: brightness-robust adversarial example toolkit"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic identity dataset");
  std::string gen_spec, gen_out;
  uint64_t gen_seed = 0;
  gen->add_option("--spec", gen_spec, "Dataset spec JSON (defaults when omitted)");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Master seed");

  // train
  auto* train = app.add_subcommand("train", "Train a feature extractor");
  std::string train_data, train_arch = "cnn-a", train_out;
  int train_epochs = 30, train_batch = 32;
  double train_lr = 0.002;
  uint64_t train_seed = 0;
  std::string train_aug = "0.6:1.4";
  train->add_option("--data", train_data, "Dataset directory")->required();
  train->add_option("--arch", train_arch, "Architecture name (cnn-a, cnn-b)");
  train->add_option("--out", train_out, "Output weights path")->required();
  train->add_option("--epochs", train_epochs, "Training epochs");
  train->add_option("--lr", train_lr, "Adam learning rate");
  train->add_option("--batch-size", train_batch, "Mini-batch size");
  train->add_option("--brightness-aug", train_aug,
                    "Train-time brightness scale range lo:hi (1:1 disables)");
  train->add_option("--seed", train_seed, "Master seed");

  // attack
  auto* attack = app.add_subcommand("attack", "Generate one adversarial example");
  std::string atk_config, atk_source, atk_target, atk_weights, atk_mask, atk_out;
  int64_t atk_seed = -1;
  attack->add_option("--config", atk_config, "Attack config JSON (defaults when omitted)");
  attack->add_option("--source", atk_source, "Source image (PPM)")->required();
  attack->add_option("--target", atk_target,
                     "Target image (PPM); required for impersonation");
  attack->add_option("--model", atk_weights, "Model weights")->required();
  attack->add_option("--mask", atk_mask, "Patch mask (PPM); required in patch modes");
  attack->add_option("--out", atk_out, "Output adversarial image (PPM)")->required();
  attack->add_option("--seed", atk_seed, "Master seed (overrides config seed)");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Run an attack/evaluation matrix");
  std::string ev_data, ev_surrogate, ev_targets, ev_out;
  std::string ev_variants = "A1,A2,A3,A4";
  std::string ev_modes = "patch_sticker";
  std::string ev_objectives = "impersonation,dodging";
  std::string ev_defense = "none", ev_config, ev_range;
  int ev_instances = 50, ev_trials = 100;
  double ev_far = 0.01;
  uint64_t ev_seed = 0;
  eval->add_option("--data", ev_data, "Evaluation pool dataset directory")->required();
  eval->add_option("--surrogate", ev_surrogate, "Surrogate model weights")->required();
  eval->add_option("--targets", ev_targets, "Comma-separated transfer target weights");
  eval->add_option("--variants", ev_variants, "Comma-separated attack variants");
  eval->add_option("--modes", ev_modes, "Comma-separated attack modes");
  eval->add_option("--objectives", ev_objectives, "Comma-separated objectives");
  eval->add_option("--n-instances", ev_instances, "Attack instances per cell");
  eval->add_option("--n-trials", ev_trials, "Evaluation transform draws per instance");
  eval->add_option("--defense", ev_defense, "none | median_blur:<k> | bit_squeeze:<bits>");
  eval->add_option("--attack-config", ev_config, "Base attack config JSON");
  eval->add_option("--identity-range", ev_range, "Restrict the pool to labels lo:hi");
  eval->add_option("--far", ev_far, "Target false-accept rate for calibration");
  eval->add_option("--out", ev_out, "Report path prefix (.json/.csv appended)")->required();
  eval->add_option("--seed", ev_seed, "Master seed");

  // profile
  auto* profile = app.add_subcommand("profile", "Loss variation under transform draws");
  std::string pr_weights, pr_image, pr_reference, pr_kind = "nonlinear";
  std::string pr_objective = "impersonation", pr_out;
  int pr_n = 200;
  uint64_t pr_seed = 0;
  profile->add_option("--model", pr_weights, "Model weights")->required();
  profile->add_option("--image", pr_image, "Probe image (PPM)")->required();
  profile->add_option("--reference", pr_reference,
                      "Reference image (PPM); defaults to the probe");
  profile->add_option("--kind", pr_kind, "none | linear | nonlinear");
  profile->add_option("--objective", pr_objective, "impersonation | dodging");
  profile->add_option("--n", pr_n, "Number of transform draws");
  profile->add_option("--out", pr_out, "Output CSV path")->required();
  profile->add_option("--seed", pr_seed, "Master seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage problems are validation failures
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_spec, gen_out, gen_seed);
    if (train->parsed())
      return cmd_train(train_data, train_arch, train_out, train_epochs, train_lr, train_batch,
                       train_aug, train_seed);
    if (attack->parsed())
      return cmd_attack(atk_config, atk_source, atk_target, atk_weights, atk_mask, atk_out,
                        atk_seed);
    if (eval->parsed())
      return cmd_evaluate(ev_data, ev_surrogate, ev_targets, ev_variants, ev_modes,
                          ev_objectives, ev_instances, ev_trials, ev_defense, ev_config,
                          ev_range, ev_far, ev_out, ev_seed);
    if (profile->parsed())
      return cmd_profile(pr_weights, pr_image, pr_reference, pr_kind, pr_objective, pr_n,
                         pr_out, pr_seed);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const CalibrationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const DegenerateInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
