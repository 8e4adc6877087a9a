#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "baforge/curriculum.hpp"
#include "baforge/extractor.hpp"
#include "baforge/loss.hpp"
#include "baforge/mask.hpp"
#include "baforge/tensor.hpp"
#include "baforge/transforms.hpp"

namespace baforge {

// A1: plain PGD, no transform ensemble.
// A2: PGD over whole-image linear brightness scales.
// A3: PGD over the composite non-linear transform with fixed p and [l,h].
// A4: A3 plus the curriculum controller driving p, l, h.
enum class Variant { kA1 = 1, kA2 = 2, kA3 = 3, kA4 = 4 };

enum class AttackMode { kPatchEyeglass, kPatchSticker, kImperceptible };

const char* variant_name(Variant v);
const char* mode_name(AttackMode m);
const char* objective_name(Objective o);
Variant parse_variant(const std::string& s);
AttackMode parse_mode(const std::string& s);
Objective parse_objective(const std::string& s);

struct AttackConfig {
  Variant variant = Variant::kA4;
  AttackMode mode = AttackMode::kPatchSticker;
  Objective objective = Objective::kImpersonation;
  int iterations = 300;              // T
  double alpha = 4.0 / 255.0;        // patch default; imperceptible default 1/255
  int ensemble_size = 8;             // N_b
  int batch_constant = 10;           // N, iterations per curriculum window
  double similarity_constant = 1.0;  // K
  double epsilon = 4.0 / 255.0;      // L-inf bound, imperceptible mode only
  bool allow_epsilon_override = false;
  StepSchedule schedule;
  double p_fixed = 0.5;  // A3's constant transform probability
  uint64_t seed = 0;
  // Distribution knobs with module defaults.
  double mu = 1.0;
  double sigma = 0.1;
  double rect_frac_lo = 0.1;
  double rect_frac_hi = 0.6;
  double linear_lo = 0.5;  // A2's brightness range
  double linear_hi = 1.5;

  void validate() const;  // throws ValidationError
};

// JSON field names match the struct: variant, mode, objective, iterations,
// alpha, ensemble_size, batch_constant, similarity_constant, epsilon,
// schedule {delta_l, delta_h, l_min, h_max, period}, p_fixed, seed, plus the
// optional distribution knobs. Unknown fields are rejected.
AttackConfig parse_attack_config(const std::string& json_text);
AttackConfig load_attack_config(const std::string& path);
std::string attack_config_to_json(const AttackConfig& config);

// Random draws realized for one ensemble member at one iteration.
struct EnsembleDraw {
  int iteration = 0;
  int member = 0;
  TransformDraws draws;
  int rect_r0 = 0, rect_r1 = 0, rect_c0 = 0, rect_c1 = 0;  // M_b bounds
};

struct AttackResult {
  ImageTensor adversarial;
  std::vector<double> loss_trace;  // mean ensemble loss per iteration
  CurriculumState final_state;
  std::vector<EnsembleDraw> draw_log;
};

// Patch initialization: source outside the patch, noise inside.
ImageTensor init_patch(const ImageTensor& source, const ImageTensor& noise, const Mask& m_p);

// One projected descent step: clip01(x - alpha * sign(summed_grad)),
// with sign(0) = 0.
ImageTensor pgd_step(const ImageTensor& x, const ImageTensor& summed_grad, double alpha);

// Called after every completed iteration with (iteration index, current
// adversarial image); used for confinement checks and progress output.
using IterationObserver = std::function<void(int, const ImageTensor&)>;

// Full attack run. `patch_mask` is required in patch modes and ignored in
// imperceptible mode. For dodging, pass target = source. Randomness is
// derived from `seed` via named substreams, so equal seeds give bit-equal
// results. Throws NumericError (with the iteration index) if the loss or
// gradient turns non-finite.
AttackResult run_attack(const ImageTensor& source, const ImageTensor& target,
                        const EmbeddingModel& extractor, const AttackConfig& config,
                        const Mask* patch_mask, uint64_t seed,
                        const IterationObserver& observer = {});

}  // namespace baforge
