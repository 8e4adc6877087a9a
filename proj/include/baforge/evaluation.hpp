#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "baforge/attack.hpp"
#include "baforge/dataset.hpp"
#include "baforge/extractor.hpp"
#include "baforge/loss.hpp"
#include "baforge/transforms.hpp"

namespace baforge {

// Pre-processing defenses applied to the probe image before the extractor.
struct Defense {
  enum class Kind { kNone, kMedianBlur, kBitSqueeze } kind = Kind::kNone;
  int param = 3;  // kernel size (median blur) or bit depth (bit squeeze)
};

// Per-channel k x k median filter with edge-replicate padding; k odd >= 1.
ImageTensor median_blur(const ImageTensor& image, int k);

// round(x * (2^bits - 1)) / (2^bits - 1), element-wise; 1 <= bits <= 8.
ImageTensor bit_squeeze(const ImageTensor& image, int bits);

ImageTensor apply_defense(const ImageTensor& image, const Defense& defense);

// "none" | "median_blur:<k>" | "bit_squeeze:<bits>".
Defense parse_defense(const std::string& text);
std::string defense_name(const Defense& defense);

// What the evaluation ensemble applies to each probe.
enum class EvalTransformKind { kNone, kLinear, kNonlinear };

// Fixed, attack-agnostic evaluation parameters so every variant faces the
// same test distribution.
struct EvalParams {
  BrightnessParams brightness{1.0, 0.5, 1.5, 1.0, 0.1};  // p, l, h, mu, sigma
  double rect_frac_lo = 0.1;
  double rect_frac_hi = 0.6;
  double linear_lo = 0.5;
  double linear_hi = 1.5;
  int n_trials = 100;
  EvalTransformKind kind = EvalTransformKind::kNonlinear;
  Defense defense;
};

// One verification decision. Impersonation succeeds when the probe's
// embedding reaches the reference (cos >= tau); dodging succeeds when it
// escapes it (cos < tau).
bool verify(const EmbeddingModel& extractor, const ImageTensor& probe,
            const EmbeddingVector& reference, float tau, Objective objective);

// Mean attack success over n_trials evaluation-transform draws of the
// adversarial image. The reference embedding comes from the clean reference
// image (target image for impersonation, source image for dodging).
// `patch_mask` selects the patch-form transform; pass nullptr for
// imperceptible-noise images (rectangle-only form).
double mean_asr(const ImageTensor& ax, const ImageTensor& reference_image,
                const EmbeddingModel& extractor, float tau, Objective objective,
                const EvalParams& params, const Mask* patch_mask, Rng& rng);

// Loss-variation statistics of j_adv over transform draws of one image.
struct LossVariationProfile {
  EvalTransformKind kind = EvalTransformKind::kNone;
  int n_samples = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::vector<double> losses;
};

LossVariationProfile loss_variation_profile(const EmbeddingModel& extractor,
                                            const ImageTensor& image,
                                            const EmbeddingVector& reference,
                                            Objective objective, EvalTransformKind kind,
                                            int n_samples, const EvalParams& params, Rng& rng);

// One model in the evaluation matrix, with its verification threshold.
struct EvalModelRef {
  std::string name;
  const EmbeddingModel* model = nullptr;
  float tau = 0.0f;
};

struct EvalRequest {
  std::vector<Variant> variants;
  std::vector<AttackMode> modes;
  std::vector<Objective> objectives;
  int n_instances = 50;
  AttackConfig base_config;  // variant/mode/objective fields overridden per cell
  EvalParams eval_params;
  uint64_t seed = 0;
};

// One (variant, mode, objective, evaluated-on model) cell.
struct EvalCell {
  std::string variant, mode, objective, model;
  bool white_box = true;
  int n_instances = 0;
  int n_trials = 0;
  double mean_asr = 0.0;   // mean over instances of per-instance ensemble ASR
  double std_asr = 0.0;    // std over instances
  double clean_asr = 0.0;  // success rate without the evaluation transform
};

struct EvaluationReport {
  std::string tool_version;
  uint64_t seed = 0;
  int n_instances = 0;
  std::string surrogate;
  std::vector<std::pair<std::string, float>> thresholds;
  std::string defense;
  std::string attack_config_json;
  std::vector<EvalCell> cells;
};

// White-box cells attack and evaluate on the surrogate; black-box cells
// attack on the surrogate and evaluate on each target. Source/target pairs
// are drawn from `pool` (held-out identities) per instance, shared across
// variants.
EvaluationReport eval_matrix(const EvalRequest& request, const EvalModelRef& surrogate,
                             const std::vector<EvalModelRef>& targets,
                             const LabeledDataset& pool);

std::string report_to_json(const EvaluationReport& report);
std::string report_to_csv(const EvaluationReport& report);

}  // namespace baforge
