#include "baforge/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

#include "baforge/errors.hpp"
#include "baforge/parallel.hpp"
#include "baforge/rng.hpp"
#include "baforge/version.hpp"

namespace baforge {

using nlohmann::json;

ImageTensor median_blur(const ImageTensor& image, int k) {
  if (k < 1 || k % 2 == 0) throw ValidationError("median_blur: kernel size must be odd and >= 1");
  if (k == 1) return image;
  ImageTensor out(image.height, image.width, image.channels);
  std::vector<float> window(static_cast<size_t>(k) * k);
  const int r = k / 2;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) {
        size_t n = 0;
        for (int dy = -r; dy <= r; ++dy) {
          const int yy = std::clamp(y + dy, 0, image.height - 1);  // edge replicate
          for (int dx = -r; dx <= r; ++dx) {
            const int xx = std::clamp(x + dx, 0, image.width - 1);
            window[n++] = image.at(yy, xx, c);
          }
        }
        auto mid = window.begin() + static_cast<long>(n / 2);
        std::nth_element(window.begin(), mid, window.begin() + static_cast<long>(n));
        out.at(y, x, c) = *mid;
      }
    }
  }
  return out;
}

ImageTensor bit_squeeze(const ImageTensor& image, int bits) {
  if (bits < 1 || bits > 8) throw ValidationError("bit_squeeze: bits must lie in [1,8]");
  const float levels = static_cast<float>((1 << bits) - 1);
  ImageTensor out(image.height, image.width, image.channels);
  for (size_t i = 0; i < image.size(); ++i) {
    out.data[i] = std::round(image.data[i] * levels) / levels;
  }
  return out;
}

ImageTensor apply_defense(const ImageTensor& image, const Defense& defense) {
  switch (defense.kind) {
    case Defense::Kind::kNone: return image;
    case Defense::Kind::kMedianBlur: return median_blur(image, defense.param);
    case Defense::Kind::kBitSqueeze: return bit_squeeze(image, defense.param);
  }
  return image;
}

Defense parse_defense(const std::string& text) {
  Defense d;
  if (text == "none" || text.empty()) return d;
  const size_t colon = text.find(':');
  const std::string name = text.substr(0, colon);
  int param = 0;
  if (colon != std::string::npos) {
    try {
      param = std::stoi(text.substr(colon + 1));
    } catch (const std::exception&) {
      throw ValidationError("defense: bad parameter in '" + text + "'");
    }
  }
  if (name == "median_blur") {
    d.kind = Defense::Kind::kMedianBlur;
    d.param = colon == std::string::npos ? 3 : param;
  } else if (name == "bit_squeeze") {
    d.kind = Defense::Kind::kBitSqueeze;
    d.param = colon == std::string::npos ? 5 : param;
  } else {
    throw ValidationError("unknown defense '" + name +
                          "' (valid: none, median_blur:<k>, bit_squeeze:<bits>)");
  }
  return d;
}

std::string defense_name(const Defense& defense) {
  switch (defense.kind) {
    case Defense::Kind::kNone: return "none";
    case Defense::Kind::kMedianBlur: return "median_blur:" + std::to_string(defense.param);
    case Defense::Kind::kBitSqueeze: return "bit_squeeze:" + std::to_string(defense.param);
  }
  return "none";
}

bool verify(const EmbeddingModel& extractor, const ImageTensor& probe,
            const EmbeddingVector& reference, float tau, Objective objective) {
  const float cos = cosine_similarity(extractor.forward(probe), reference);
  return objective == Objective::kImpersonation ? cos >= tau : cos < tau;
}

namespace {

// One evaluation-transform draw; output is fed to the extractor unclipped
// (transforms never clip; only the attack update does).
ImageTensor draw_probe(const ImageTensor& image, EvalTransformKind kind, const EvalParams& params,
                       const Mask* patch_mask, Rng& rng) {
  switch (kind) {
    case EvalTransformKind::kNone:
      return image;
    case EvalTransformKind::kLinear:
      return linear_brightness(image, params.linear_lo, params.linear_hi, rng).transformed;
    case EvalTransformKind::kNonlinear: {
      const Mask m_b = random_rect_mask(image.height, image.width, rng,
                                        static_cast<float>(params.rect_frac_lo),
                                        static_cast<float>(params.rect_frac_hi));
      if (patch_mask) {
        return cnbt_patch(image, *patch_mask, m_b, params.brightness, rng).transformed;
      }
      return cnbt_imperceptible(image, m_b, params.brightness, rng).transformed;
    }
  }
  return image;
}

}  // namespace

double mean_asr(const ImageTensor& ax, const ImageTensor& reference_image,
                const EmbeddingModel& extractor, float tau, Objective objective,
                const EvalParams& params, const Mask* patch_mask, Rng& rng) {
  if (params.n_trials < 1) throw ValidationError("mean_asr: n_trials must be >= 1");
  const EmbeddingVector reference = extractor.forward(reference_image);
  int ok = 0;
  for (int t = 0; t < params.n_trials; ++t) {
    ImageTensor probe = draw_probe(ax, params.kind, params, patch_mask, rng);
    probe = apply_defense(probe, params.defense);
    ok += verify(extractor, probe, reference, tau, objective) ? 1 : 0;
  }
  return static_cast<double>(ok) / params.n_trials;
}

LossVariationProfile loss_variation_profile(const EmbeddingModel& extractor,
                                            const ImageTensor& image,
                                            const EmbeddingVector& reference,
                                            Objective objective, EvalTransformKind kind,
                                            int n_samples, const EvalParams& params, Rng& rng) {
  if (n_samples < 1 || (kind != EvalTransformKind::kNone && n_samples < 2)) {
    throw ValidationError("loss profile: need n_samples >= 2 for transformed kinds");
  }
  LossVariationProfile prof;
  prof.kind = kind;
  prof.n_samples = n_samples;
  prof.losses.reserve(static_cast<size_t>(n_samples));
  for (int s = 0; s < n_samples; ++s) {
    const ImageTensor probe = draw_probe(image, kind, params, nullptr, rng);
    prof.losses.push_back(j_adv(extractor.forward(probe), reference, objective));
  }
  double sum = 0.0;
  prof.min = prof.losses.front();
  prof.max = prof.losses.front();
  for (double v : prof.losses) {
    sum += v;
    prof.min = std::min(prof.min, v);
    prof.max = std::max(prof.max, v);
  }
  prof.mean = sum / n_samples;
  double sq = 0.0;
  for (double v : prof.losses) sq += (v - prof.mean) * (v - prof.mean);
  prof.stddev = std::sqrt(sq / n_samples);
  return prof;
}

EvaluationReport eval_matrix(const EvalRequest& request, const EvalModelRef& surrogate,
                             const std::vector<EvalModelRef>& targets,
                             const LabeledDataset& pool) {
  if (!surrogate.model) throw ValidationError("eval: surrogate model missing");
  if (request.variants.empty() || request.modes.empty() || request.objectives.empty()) {
    throw ValidationError("eval: empty variant/mode/objective axis");
  }
  if (request.n_instances < 1) throw ValidationError("eval: n_instances must be >= 1");
  std::map<int, std::vector<size_t>> by_label;
  for (size_t i = 0; i < pool.items.size(); ++i) by_label[pool.items[i].label].push_back(i);
  if (by_label.size() < 2) throw ValidationError("eval: pool needs at least 2 identities");
  std::vector<int> labels;
  for (const auto& [label, idxs] : by_label) labels.push_back(label);

  const int ih = surrogate.model->input_height();
  const int iw = surrogate.model->input_width();

  EvaluationReport report;
  report.tool_version = kToolVersion;
  report.seed = request.seed;
  report.n_instances = request.n_instances;
  report.surrogate = surrogate.name;
  report.thresholds.emplace_back(surrogate.name, surrogate.tau);
  for (const EvalModelRef& t : targets) report.thresholds.emplace_back(t.name, t.tau);
  report.defense = defense_name(request.eval_params.defense);
  report.attack_config_json = attack_config_to_json(request.base_config);

  const size_t n_models = 1 + targets.size();
  const int n_modes = static_cast<int>(request.modes.size());
  const int n_objectives = static_cast<int>(request.objectives.size());

  for (size_t vi = 0; vi < request.variants.size(); ++vi) {
    for (int mi = 0; mi < n_modes; ++mi) {
      const AttackMode mode = request.modes[mi];
      Mask patch_storage;
      const Mask* patch_mask = nullptr;
      if (mode == AttackMode::kPatchEyeglass) {
        patch_storage = eyeglass_mask(ih, iw);
        patch_mask = &patch_storage;
      } else if (mode == AttackMode::kPatchSticker) {
        patch_storage = sticker_mask(ih, iw);
        patch_mask = &patch_storage;
      }
      for (int oi = 0; oi < n_objectives; ++oi) {
        const Objective objective = request.objectives[oi];
        const uint64_t cell_id =
            (vi * n_modes + static_cast<size_t>(mi)) * n_objectives + static_cast<size_t>(oi);
        // The attack stream ignores the variant so every variant sees the
        // same pairs and the same initialization noise (paired comparison).
        const uint64_t pair_cell = static_cast<uint64_t>(mi) * n_objectives + oi;

        AttackConfig config = request.base_config;
        config.variant = request.variants[vi];
        config.mode = mode;
        config.objective = objective;
        if (objective != request.base_config.objective) {
          // K tracks the loss range: [0,2] for impersonation, [-1,1] for dodging.
          config.similarity_constant = objective == Objective::kImpersonation ? 1.0 : 0.5;
        }

        // Per-instance results, filled independently, aggregated after.
        std::vector<std::vector<double>> asr(n_models,
                                             std::vector<double>(request.n_instances, 0.0));
        std::vector<std::vector<double>> clean(n_models,
                                               std::vector<double>(request.n_instances, 0.0));

        parallel_for(static_cast<size_t>(request.n_instances), [&](size_t k) {
          Rng pair_rng(derive_seed(request.seed, "pairs", k));
          const int sl = labels[pair_rng.uniform_int(0, static_cast<int>(labels.size()) - 1)];
          const auto& src_idxs = by_label.at(sl);
          const size_t src = src_idxs[pair_rng.uniform_int(0, static_cast<int>(src_idxs.size()) - 1)];
          int tl = sl;
          while (tl == sl) tl = labels[pair_rng.uniform_int(0, static_cast<int>(labels.size()) - 1)];
          const auto& tgt_idxs = by_label.at(tl);
          const size_t tgt = tgt_idxs[pair_rng.uniform_int(0, static_cast<int>(tgt_idxs.size()) - 1)];

          const ImageTensor& source = pool.items[src].image;
          const ImageTensor& target =
              objective == Objective::kDodging ? source : pool.items[tgt].image;
          const ImageTensor& reference = target;  // == source for dodging

          const uint64_t attack_seed = derive_seed(request.seed, "attack", pair_cell, k);
          const AttackResult ar =
              run_attack(source, target, *surrogate.model, config, patch_mask, attack_seed);
          // AXs are deployed as 8-bit images; evaluate what would be written.
          const ImageTensor axq = quantize8(ar.adversarial);

          for (size_t m = 0; m < n_models; ++m) {
            const EvalModelRef& ref = m == 0 ? surrogate : targets[m - 1];
            Rng eval_rng(derive_seed(request.seed, "evaluation", cell_id * n_models + m, k));
            EvalParams ep = request.eval_params;
            asr[m][k] = mean_asr(axq, reference, *ref.model, ref.tau, objective, ep, patch_mask,
                                 eval_rng);
            ep.kind = EvalTransformKind::kNone;
            ep.n_trials = 1;
            clean[m][k] = mean_asr(axq, reference, *ref.model, ref.tau, objective, ep, patch_mask,
                                   eval_rng);
          }
        });

        for (size_t m = 0; m < n_models; ++m) {
          double mean = 0.0, clean_mean = 0.0;
          for (int k = 0; k < request.n_instances; ++k) {
            mean += asr[m][k];
            clean_mean += clean[m][k];
          }
          mean /= request.n_instances;
          clean_mean /= request.n_instances;
          double var = 0.0;
          for (int k = 0; k < request.n_instances; ++k) {
            var += (asr[m][k] - mean) * (asr[m][k] - mean);
          }
          EvalCell cell;
          cell.variant = variant_name(config.variant);
          cell.mode = mode_name(mode);
          cell.objective = objective_name(objective);
          cell.model = m == 0 ? surrogate.name : targets[m - 1].name;
          cell.white_box = m == 0;
          cell.n_instances = request.n_instances;
          cell.n_trials = request.eval_params.n_trials;
          cell.mean_asr = mean;
          cell.std_asr = std::sqrt(var / request.n_instances);
          cell.clean_asr = clean_mean;
          report.cells.push_back(cell);
        }
      }
    }
  }
  return report;
}

std::string report_to_json(const EvaluationReport& report) {
  json j;
  j["tool_version"] = report.tool_version;
  j["seed"] = report.seed;
  j["n_instances"] = report.n_instances;
  j["surrogate"] = report.surrogate;
  json th = json::object();
  for (const auto& [name, tau] : report.thresholds) th[name] = tau;
  j["thresholds"] = th;
  j["defense"] = report.defense;
  j["attack_config"] = json::parse(report.attack_config_json);
  j["cells"] = json::array();
  for (const EvalCell& c : report.cells) {
    j["cells"].push_back({{"variant", c.variant},
                          {"mode", c.mode},
                          {"objective", c.objective},
                          {"model", c.model},
                          {"white_box", c.white_box},
                          {"n_instances", c.n_instances},
                          {"n_trials", c.n_trials},
                          {"mean_asr", c.mean_asr},
                          {"std_asr", c.std_asr},
                          {"clean_asr", c.clean_asr}});
  }
  return j.dump(2);
}

std::string report_to_csv(const EvaluationReport& report) {
  std::ostringstream out;
  out << "variant,mode,objective,model,white_box,n_instances,n_trials,mean_asr,std_asr,clean_asr\n";
  for (const EvalCell& c : report.cells) {
    out << c.variant << ',' << c.mode << ',' << c.objective << ',' << c.model << ','
        << (c.white_box ? 1 : 0) << ',' << c.n_instances << ',' << c.n_trials << ','
        << c.mean_asr << ',' << c.std_asr << ',' << c.clean_asr << '\n';
  }
  return out.str();
}

}  // namespace baforge
