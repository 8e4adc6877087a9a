#include "baforge/attack.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "baforge/errors.hpp"
#include "baforge/rng.hpp"

namespace baforge {

using nlohmann::json;

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kA1: return "A1";
    case Variant::kA2: return "A2";
    case Variant::kA3: return "A3";
    case Variant::kA4: return "A4";
  }
  return "?";
}

const char* mode_name(AttackMode m) {
  switch (m) {
    case AttackMode::kPatchEyeglass: return "patch_eyeglass";
    case AttackMode::kPatchSticker: return "patch_sticker";
    case AttackMode::kImperceptible: return "imperceptible";
  }
  return "?";
}

const char* objective_name(Objective o) {
  return o == Objective::kImpersonation ? "impersonation" : "dodging";
}

Variant parse_variant(const std::string& s) {
  if (s == "A1") return Variant::kA1;
  if (s == "A2") return Variant::kA2;
  if (s == "A3") return Variant::kA3;
  if (s == "A4") return Variant::kA4;
  throw ValidationError("unknown attack variant '" + s + "' (valid: A1, A2, A3, A4)");
}

AttackMode parse_mode(const std::string& s) {
  if (s == "patch_eyeglass") return AttackMode::kPatchEyeglass;
  if (s == "patch_sticker") return AttackMode::kPatchSticker;
  if (s == "imperceptible") return AttackMode::kImperceptible;
  throw ValidationError("unknown attack mode '" + s +
                        "' (valid: patch_eyeglass, patch_sticker, imperceptible)");
}

Objective parse_objective(const std::string& s) {
  if (s == "impersonation") return Objective::kImpersonation;
  if (s == "dodging") return Objective::kDodging;
  throw ValidationError("unknown objective '" + s + "' (valid: impersonation, dodging)");
}

void AttackConfig::validate() const {
  if (iterations <= 0) throw ValidationError("attack config: iterations must be > 0");
  if (ensemble_size < 1) throw ValidationError("attack config: ensemble_size must be >= 1");
  if (batch_constant < 1) throw ValidationError("attack config: batch_constant must be >= 1");
  if (!(alpha > 0.0)) throw ValidationError("attack config: alpha must be > 0");
  if (!(epsilon > 0.0)) throw ValidationError("attack config: epsilon must be > 0");
  if (mode == AttackMode::kImperceptible && !allow_epsilon_override &&
      std::abs(epsilon - 4.0 / 255.0) > 1e-12) {
    throw ValidationError(
        "attack config: imperceptible mode requires epsilon = 4/255; "
        "set allow_epsilon_override to use a different bound");
  }
  if (!(p_fixed >= 0.0 && p_fixed <= 1.0)) {
    throw ValidationError("attack config: p_fixed must lie in [0,1]");
  }
  if (!(sigma >= 0.0)) throw ValidationError("attack config: sigma must be >= 0");
  if (!(rect_frac_lo > 0.0 && rect_frac_lo <= rect_frac_hi && rect_frac_hi <= 1.0)) {
    throw ValidationError("attack config: need 0 < rect_frac_lo <= rect_frac_hi <= 1");
  }
  if (!(linear_lo >= 0.0 && linear_lo <= linear_hi)) {
    throw ValidationError("attack config: need 0 <= linear_lo <= linear_hi");
  }
  schedule.validate();
}

namespace {

double get_number(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) {
    throw ValidationError(std::string("attack config: field '") + key + "' must be a number");
  }
  return j[key].get<double>();
}

int get_int(const json& j, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer()) {
    throw ValidationError(std::string("attack config: field '") + key + "' must be an integer");
  }
  return j[key].get<int>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                    const char* where) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ValidationError(std::string("attack config: unknown field '") + item.key() + "' in " +
                            where);
    }
  }
}

}  // namespace

AttackConfig parse_attack_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("attack config: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("attack config: top level must be a JSON object");
  reject_unknown(j,
                 {"variant", "mode", "objective", "iterations", "alpha", "ensemble_size",
                  "batch_constant", "similarity_constant", "epsilon", "allow_epsilon_override",
                  "schedule", "p_fixed", "seed", "mu", "sigma", "rect_frac_lo", "rect_frac_hi",
                  "linear_lo", "linear_hi"},
                 "top-level object");
  AttackConfig c;
  if (j.contains("variant")) c.variant = parse_variant(j["variant"].get<std::string>());
  if (j.contains("mode")) c.mode = parse_mode(j["mode"].get<std::string>());
  if (j.contains("objective")) c.objective = parse_objective(j["objective"].get<std::string>());
  c.iterations = get_int(j, "iterations", c.iterations);
  const double default_alpha = c.mode == AttackMode::kImperceptible ? 1.0 / 255.0 : 4.0 / 255.0;
  c.alpha = get_number(j, "alpha", default_alpha);
  c.ensemble_size = get_int(j, "ensemble_size", c.ensemble_size);
  c.batch_constant = get_int(j, "batch_constant", c.batch_constant);
  // K defaults depend on the loss range: [0,2] for impersonation, [-1,1] for dodging.
  const double default_k = c.objective == Objective::kImpersonation ? 1.0 : 0.5;
  c.similarity_constant = get_number(j, "similarity_constant", default_k);
  c.epsilon = get_number(j, "epsilon", c.epsilon);
  if (j.contains("allow_epsilon_override")) {
    if (!j["allow_epsilon_override"].is_boolean()) {
      throw ValidationError("attack config: allow_epsilon_override must be a boolean");
    }
    c.allow_epsilon_override = j["allow_epsilon_override"].get<bool>();
  }
  if (j.contains("schedule")) {
    const json& s = j["schedule"];
    if (!s.is_object()) throw ValidationError("attack config: schedule must be an object");
    reject_unknown(s, {"delta_l", "delta_h", "l_min", "h_max", "period"}, "schedule");
    c.schedule.delta_l = get_number(s, "delta_l", c.schedule.delta_l);
    c.schedule.delta_h = get_number(s, "delta_h", c.schedule.delta_h);
    c.schedule.l_min = get_number(s, "l_min", c.schedule.l_min);
    c.schedule.h_max = get_number(s, "h_max", c.schedule.h_max);
    c.schedule.period = get_int(s, "period", c.schedule.period);
  }
  c.p_fixed = get_number(j, "p_fixed", c.p_fixed);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer()) {
      throw ValidationError("attack config: seed must be an integer");
    }
    c.seed = j["seed"].get<uint64_t>();
  }
  c.mu = get_number(j, "mu", c.mu);
  c.sigma = get_number(j, "sigma", c.sigma);
  c.rect_frac_lo = get_number(j, "rect_frac_lo", c.rect_frac_lo);
  c.rect_frac_hi = get_number(j, "rect_frac_hi", c.rect_frac_hi);
  c.linear_lo = get_number(j, "linear_lo", c.linear_lo);
  c.linear_hi = get_number(j, "linear_hi", c.linear_hi);
  c.validate();
  return c;
}

AttackConfig load_attack_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open attack config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_attack_config(buf.str());
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

std::string attack_config_to_json(const AttackConfig& c) {
  json j;
  j["variant"] = variant_name(c.variant);
  j["mode"] = mode_name(c.mode);
  j["objective"] = objective_name(c.objective);
  j["iterations"] = c.iterations;
  j["alpha"] = c.alpha;
  j["ensemble_size"] = c.ensemble_size;
  j["batch_constant"] = c.batch_constant;
  j["similarity_constant"] = c.similarity_constant;
  j["epsilon"] = c.epsilon;
  j["allow_epsilon_override"] = c.allow_epsilon_override;
  j["schedule"] = {{"delta_l", c.schedule.delta_l},
                   {"delta_h", c.schedule.delta_h},
                   {"l_min", c.schedule.l_min},
                   {"h_max", c.schedule.h_max},
                   {"period", c.schedule.period}};
  j["p_fixed"] = c.p_fixed;
  j["seed"] = c.seed;
  j["mu"] = c.mu;
  j["sigma"] = c.sigma;
  j["rect_frac_lo"] = c.rect_frac_lo;
  j["rect_frac_hi"] = c.rect_frac_hi;
  j["linear_lo"] = c.linear_lo;
  j["linear_hi"] = c.linear_hi;
  return j.dump(2);
}

ImageTensor init_patch(const ImageTensor& source, const ImageTensor& noise, const Mask& m_p) {
  require_same_shape(source, noise, "init_patch noise");
  require_same_shape(source, m_p, "init_patch mask");
  ImageTensor out(source.height, source.width, source.channels);
  for (size_t i = 0; i < out.size(); ++i) {
    out.data[i] = m_p.data[i] != 0.0f ? noise.data[i] : source.data[i];
  }
  return out;
}

ImageTensor pgd_step(const ImageTensor& x, const ImageTensor& summed_grad, double alpha) {
  require_same_shape(x, summed_grad, "pgd_step gradient");
  const float a = static_cast<float>(alpha);
  ImageTensor out(x.height, x.width, x.channels);
  for (size_t i = 0; i < x.size(); ++i) {
    const float g = summed_grad.data[i];
    const float sgn = g > 0.0f ? 1.0f : (g < 0.0f ? -1.0f : 0.0f);
    const float v = x.data[i] - a * sgn;
    out.data[i] = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  }
  return out;
}

AttackResult run_attack(const ImageTensor& source, const ImageTensor& target,
                        const EmbeddingModel& extractor, const AttackConfig& config,
                        const Mask* patch_mask, uint64_t seed,
                        const IterationObserver& observer) {
  config.validate();
  const bool patch = config.mode != AttackMode::kImperceptible;
  if (patch && patch_mask == nullptr) {
    throw ValidationError("patch mode requires a patch mask");
  }
  if (source.height != extractor.input_height() || source.width != extractor.input_width() ||
      source.channels != extractor.input_channels()) {
    throw ShapeError("attack: source dimensions do not match the model input");
  }
  require_same_shape(source, target, "attack source/target");
  if (patch) require_same_shape(source, *patch_mask, "attack patch mask");

  Rng init_rng(derive_seed(seed, "init-noise"));
  Rng ens_rng(derive_seed(seed, "ensemble"));

  // Reference features come from the clean reference image, computed once:
  // the target identity's image for impersonation, the own clean image for
  // dodging.
  const ImageTensor& ref_image = config.objective == Objective::kDodging ? source : target;
  const EmbeddingVector reference = extractor.forward(ref_image);

  ImageTensor x = source;
  if (patch) {
    ImageTensor noise(source.height, source.width, source.channels);
    for (float& v : noise.data) v = static_cast<float>(init_rng.uniform(0.4, 0.6));
    x = init_patch(source, noise, *patch_mask);
  }

  const float eps = static_cast<float>(config.epsilon);
  CurriculumState state;
  AttackResult result;
  result.loss_trace.reserve(static_cast<size_t>(config.iterations));

  // A1 sees no transform, so its ensemble members would be identical copies;
  // one member yields the same gradient signs and loss mean.
  const int nb = config.variant == Variant::kA1 ? 1 : config.ensemble_size;

  for (int i = 0; i < config.iterations; ++i) {
    ImageTensor sum_grad(x.height, x.width, x.channels);
    double loss_sum = 0.0;
    for (int j = 0; j < nb; ++j) {
      double loss;
      if (config.variant == Variant::kA1) {
        const EmbeddingVector emb = extractor.forward(x);
        loss = j_adv(emb, reference, config.objective);
        const EmbeddingVector d_emb = j_adv_gradient(emb, reference, config.objective);
        const ImageTensor g = extractor.input_gradient(x, d_emb);
        for (size_t k = 0; k < sum_grad.size(); ++k) sum_grad.data[k] += g.data[k];
      } else {
        TransformSample sample;
        EnsembleDraw log_entry;
        log_entry.iteration = i;
        log_entry.member = j;
        if (config.variant == Variant::kA2) {
          sample = linear_brightness(x, config.linear_lo, config.linear_hi, ens_rng);
        } else {
          const RectBounds rb = random_rect_bounds(x.height, x.width, ens_rng,
                                                   static_cast<float>(config.rect_frac_lo),
                                                   static_cast<float>(config.rect_frac_hi));
          const Mask m_b = rect_mask(x.height, x.width, rb.r0, rb.r1, rb.c0, rb.c1);
          BrightnessParams params;
          if (config.variant == Variant::kA3) {
            params.p = config.p_fixed;
            params.l = config.schedule.l_min;
            params.h = config.schedule.h_max;
          } else {  // A4: curriculum-driven
            params.p = std::clamp(state.p, 0.0, 1.0);
            params.l = state.l;
            params.h = state.h;
          }
          params.mu = config.mu;
          params.sigma = config.sigma;
          sample = patch ? cnbt_patch(x, *patch_mask, m_b, params, ens_rng)
                         : cnbt_imperceptible(x, m_b, params, ens_rng);
          log_entry.rect_r0 = rb.r0;
          log_entry.rect_r1 = rb.r1;
          log_entry.rect_c0 = rb.c0;
          log_entry.rect_c1 = rb.c1;
        }
        log_entry.draws = sample.draws;
        result.draw_log.push_back(log_entry);

        const EmbeddingVector emb = extractor.forward(sample.transformed);
        loss = j_adv(emb, reference, config.objective);
        const EmbeddingVector d_emb = j_adv_gradient(emb, reference, config.objective);
        const ImageTensor g = extractor.input_gradient(sample.transformed, d_emb);
        // Chain through the affine transform: d loss / d x = coeff * g.
        for (size_t k = 0; k < sum_grad.size(); ++k) {
          sum_grad.data[k] += sample.coeff.data[k] * g.data[k];
        }
      }
      if (!std::isfinite(loss)) throw NumericError("non-finite ensemble loss", i);
      loss_sum += loss;
    }
    for (float v : sum_grad.data) {
      if (!std::isfinite(v)) throw NumericError("non-finite attack gradient", i);
    }
    const double mean_loss = loss_sum / nb;
    result.loss_trace.push_back(mean_loss);

    x = pgd_step(x, sum_grad, config.alpha);
    if (patch) {
      // Pixels outside the patch always equal the source exactly.
      for (size_t k = 0; k < x.size(); ++k) {
        if (patch_mask->data[k] == 0.0f) x.data[k] = source.data[k];
      }
    } else {
      for (size_t k = 0; k < x.size(); ++k) {
        const float s = source.data[k];
        const float lo = std::max(0.0f, s - eps);
        const float hi = std::min(1.0f, s + eps);
        x.data[k] = std::clamp(x.data[k], lo, hi);
      }
    }

    if (config.variant == Variant::kA4) {
      curriculum_update(state, i, config.batch_constant, config.similarity_constant, mean_loss,
                        config.schedule);
    }
    if (observer) observer(i, x);
  }

  result.adversarial = std::move(x);
  result.final_state = state;
  return result;
}

}  // namespace baforge
