#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "baforge/attack.hpp"
#include "baforge/errors.hpp"
#include "baforge/extractor.hpp"
#include "baforge/loss.hpp"
#include "baforge/mask.hpp"
#include "baforge/rng.hpp"
#include "baforge/transforms.hpp"

#include "support/oracle.hpp"

using namespace baforge;

namespace {

ImageTensor random_image(int h, int w, uint64_t seed) {
  Rng rng(seed);
  ImageTensor img(h, w, 3);
  for (float& v : img.data) v = static_cast<float>(rng.uniform01());
  return img;
}

// Small stack that still exercises every layer kind: 8x8 input, two strided
// convolutions, pool, dense, normalize.
Architecture tiny_arch(int input = 8) {
  Architecture a;
  a.name = "tiny";
  a.input_height = input;
  a.input_width = input;
  a.input_channels = 3;
  a.embedding_dim = 8;
  a.layers = {LayerSpec::conv(3, 4, 3, 2), LayerSpec::relu(),
              LayerSpec::conv(4, 8, 3, 2), LayerSpec::relu(),
              LayerSpec::global_avg_pool(), LayerSpec::dense(8, 8),
              LayerSpec::l2_normalize()};
  return a;
}

AttackConfig base_config(Variant v, AttackMode m, Objective o, int iterations) {
  AttackConfig c;
  c.variant = v;
  c.mode = m;
  c.objective = o;
  c.iterations = iterations;
  c.ensemble_size = 4;
  c.batch_constant = 3;
  return c;
}

// A model whose forward pass returns NaN; exercises the numeric guard.
class NanModel final : public EmbeddingModel {
 public:
  int input_height() const override { return 8; }
  int input_width() const override { return 8; }
  int input_channels() const override { return 3; }
  int embedding_dim() const override { return 4; }
  EmbeddingVector forward(const ImageTensor&) const override {
    EmbeddingVector e(4);
    e.values[0] = std::nan("");
    e.values[1] = 1.0f;
    return e;
  }
  ImageTensor input_gradient(const ImageTensor& image, const EmbeddingVector&) const override {
    return ImageTensor(image.height, image.width, image.channels);
  }
};

}  // namespace

TEST_CASE("variant, mode and objective names round trip") {
  for (Variant v : {Variant::kA1, Variant::kA2, Variant::kA3, Variant::kA4})
    CHECK(parse_variant(variant_name(v)) == v);
  for (AttackMode m :
       {AttackMode::kPatchEyeglass, AttackMode::kPatchSticker, AttackMode::kImperceptible})
    CHECK(parse_mode(mode_name(m)) == m);
  for (Objective o : {Objective::kImpersonation, Objective::kDodging})
    CHECK(parse_objective(objective_name(o)) == o);
  CHECK_THROWS_AS(parse_variant("A5"), ValidationError);
  CHECK_THROWS_AS(parse_mode("patch"), ValidationError);
  CHECK_THROWS_AS(parse_objective("evade"), ValidationError);
}

TEST_CASE("patch initialization replaces exactly the masked pixels") {
  const ImageTensor source = random_image(6, 6, 1);
  const ImageTensor noise = random_image(6, 6, 2);
  Mask m = zeros_mask(6, 6);
  // Checkerboard over pixels, constant across channels.
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c)
      if ((r + c) % 2 == 0)
        for (int ch = 0; ch < 3; ++ch) m.at(r, c, ch) = 1.0f;
  const ImageTensor x = init_patch(source, noise, m);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c)
      for (int ch = 0; ch < 3; ++ch) {
        const float expected = (r + c) % 2 == 0 ? noise.at(r, c, ch) : source.at(r, c, ch);
        CHECK(x.at(r, c, ch) == expected);
      }
  CHECK_THROWS_AS(init_patch(source, noise, zeros_mask(5, 6)), ShapeError);
}

TEST_CASE("pgd step follows the gradient sign and clips to the unit box") {
  ImageTensor x(1, 4, 1);
  x.data = {0.5f, 0.5f, 0.005f, 0.999f};
  ImageTensor g(1, 4, 1);
  g.data = {2.5f, -0.1f, 1.0f, -3.0f};
  const ImageTensor y = pgd_step(x, g, 0.01);
  CHECK(y.data[0] == doctest::Approx(0.49));
  CHECK(y.data[1] == doctest::Approx(0.51));
  CHECK(y.data[2] == 0.0f);  // 0.005 - 0.01 clips at 0
  CHECK(y.data[3] == 1.0f);  // 0.999 + 0.01 clips at 1

  // Zero gradient components leave the pixel untouched.
  g.data = {0.0f, 0.0f, 0.0f, 0.0f};
  const ImageTensor z = pgd_step(x, g, 0.25);
  for (size_t i = 0; i < x.size(); ++i) CHECK(z.data[i] == x.data[i]);
}

TEST_CASE("attack config JSON: defaults, objective-dependent constants, validation") {
  const AttackConfig c = parse_attack_config("{}");
  CHECK(c.variant == Variant::kA4);
  CHECK(c.mode == AttackMode::kPatchSticker);
  CHECK(c.objective == Objective::kImpersonation);
  CHECK(c.alpha == doctest::Approx(4.0 / 255.0));
  CHECK(c.similarity_constant == doctest::Approx(1.0));
  CHECK(c.ensemble_size == 8);
  CHECK(c.batch_constant == 10);
  CHECK(c.schedule.period == 10);

  const AttackConfig d = parse_attack_config(R"({"objective": "dodging"})");
  CHECK(d.similarity_constant == doctest::Approx(0.5));

  const AttackConfig imp = parse_attack_config(R"({"mode": "imperceptible"})");
  CHECK(imp.alpha == doctest::Approx(1.0 / 255.0));
  CHECK(imp.epsilon == doctest::Approx(4.0 / 255.0));

  // The imperceptible bound is part of the threat model; changing it
  // requires the explicit override flag.
  CHECK_THROWS_AS(parse_attack_config(R"({"mode": "imperceptible", "epsilon": 0.02})"),
                  ValidationError);
  const AttackConfig ovr = parse_attack_config(
      R"({"mode": "imperceptible", "epsilon": 0.02, "allow_epsilon_override": true})");
  CHECK(ovr.epsilon == doctest::Approx(0.02));
  // Patch modes may use any positive epsilon field (it is unused there).
  CHECK_NOTHROW(parse_attack_config(R"({"mode": "patch_sticker", "epsilon": 0.5})"));

  CHECK_THROWS_AS(parse_attack_config(R"({"iterations": 0})"), ValidationError);
  CHECK_THROWS_AS(parse_attack_config(R"({"p_fixed": 1.5})"), ValidationError);
  CHECK_THROWS_AS(parse_attack_config(R"({"turbo": true})"), ValidationError);
  CHECK_THROWS_AS(parse_attack_config(R"({"schedule": {"cadence": 3}})"), ValidationError);
  CHECK_THROWS_AS(parse_attack_config("not json"), FormatError);
  CHECK_THROWS_AS(parse_attack_config(R"([1,2,3])"), ValidationError);

  // Serialization round trip preserves every field.
  AttackConfig full = parse_attack_config(R"({
    "variant": "A3", "mode": "patch_eyeglass", "objective": "dodging",
    "iterations": 17, "alpha": 0.01, "ensemble_size": 5, "batch_constant": 4,
    "similarity_constant": 0.7, "p_fixed": 0.25, "seed": 99,
    "schedule": {"delta_l": 0.02, "delta_h": 0.03, "l_min": 0.6, "h_max": 1.4, "period": 7},
    "mu": 1.1, "sigma": 0.05, "rect_frac_lo": 0.2, "rect_frac_hi": 0.5,
    "linear_lo": 0.7, "linear_hi": 1.3
  })");
  const AttackConfig back = parse_attack_config(attack_config_to_json(full));
  CHECK(back.variant == full.variant);
  CHECK(back.mode == full.mode);
  CHECK(back.objective == full.objective);
  CHECK(back.iterations == full.iterations);
  CHECK(back.alpha == full.alpha);
  CHECK(back.ensemble_size == full.ensemble_size);
  CHECK(back.batch_constant == full.batch_constant);
  CHECK(back.similarity_constant == full.similarity_constant);
  CHECK(back.p_fixed == full.p_fixed);
  CHECK(back.seed == full.seed);
  CHECK(back.schedule.delta_l == full.schedule.delta_l);
  CHECK(back.schedule.period == full.schedule.period);
  CHECK(back.mu == full.mu);
  CHECK(back.rect_frac_hi == full.rect_frac_hi);
  CHECK(back.linear_lo == full.linear_lo);
}

TEST_CASE("attack input validation") {
  const FeatureExtractor fe(tiny_arch(), 5);
  const ImageTensor src = random_image(8, 8, 3);
  const ImageTensor tgt = random_image(8, 8, 4);
  const Mask m = rect_mask(8, 8, 2, 6, 2, 6);
  AttackConfig c = base_config(Variant::kA1, AttackMode::kPatchSticker,
                               Objective::kImpersonation, 1);
  CHECK_THROWS_AS(run_attack(src, tgt, fe, c, nullptr, 0), ValidationError);
  CHECK_THROWS_AS(run_attack(random_image(7, 8, 3), tgt, fe, c, &m, 0), ShapeError);
  const Mask small = rect_mask(7, 8, 1, 2, 1, 2);
  CHECK_THROWS_AS(run_attack(src, random_image(7, 8, 3), fe, c, &small, 0), ShapeError);
}

TEST_CASE("equal seeds reproduce an attack bit for bit") {
  const FeatureExtractor fe(tiny_arch(), 11);
  const ImageTensor src = random_image(8, 8, 21);
  const ImageTensor tgt = random_image(8, 8, 22);
  const Mask m = rect_mask(8, 8, 1, 5, 1, 7);
  AttackConfig c = base_config(Variant::kA4, AttackMode::kPatchSticker,
                               Objective::kImpersonation, 6);
  const AttackResult r1 = run_attack(src, tgt, fe, c, &m, 1234);
  const AttackResult r2 = run_attack(src, tgt, fe, c, &m, 1234);
  REQUIRE(r1.adversarial.size() == r2.adversarial.size());
  for (size_t i = 0; i < r1.adversarial.size(); ++i)
    CHECK(r1.adversarial.data[i] == r2.adversarial.data[i]);
  REQUIRE(r1.loss_trace.size() == r2.loss_trace.size());
  for (size_t i = 0; i < r1.loss_trace.size(); ++i)
    CHECK(r1.loss_trace[i] == r2.loss_trace[i]);
  REQUIRE(r1.draw_log.size() == r2.draw_log.size());

  const AttackResult r3 = run_attack(src, tgt, fe, c, &m, 1235);
  CHECK(max_abs_diff(r1.adversarial, r3.adversarial) > 0.0f);
}

TEST_CASE("collapsed curriculum parameters reduce the ensemble attack to plain descent") {
  // With K = 0 the curriculum never opens the gate (impersonation losses are
  // non-negative), zero schedule deltas pin l = h = 1, and sigma = 0 pins
  // Y = mu = 1. Every transform coefficient is then exactly 1.0f, so the
  // ensemble gradient is N_b copies of the plain gradient — same signs, same
  // steps, bit-identical trajectory to the transform-free attack.
  const FeatureExtractor fe(tiny_arch(), 31);
  const ImageTensor src = random_image(8, 8, 41);
  const ImageTensor tgt = random_image(8, 8, 42);
  const Mask m = rect_mask(8, 8, 2, 7, 1, 6);

  AttackConfig plain = base_config(Variant::kA1, AttackMode::kPatchSticker,
                                   Objective::kImpersonation, 10);
  AttackConfig collapsed = plain;
  collapsed.variant = Variant::kA4;
  collapsed.similarity_constant = 0.0;
  collapsed.ensemble_size = 8;  // power of two keeps the trace mean exact
  collapsed.sigma = 0.0;
  collapsed.mu = 1.0;
  collapsed.schedule.delta_l = 0.0;
  collapsed.schedule.delta_h = 0.0;

  const AttackResult ra = run_attack(src, tgt, fe, plain, &m, 777);
  const AttackResult rb = run_attack(src, tgt, fe, collapsed, &m, 777);
  REQUIRE(ra.adversarial.size() == rb.adversarial.size());
  for (size_t i = 0; i < ra.adversarial.size(); ++i)
    CHECK(ra.adversarial.data[i] == rb.adversarial.data[i]);
  REQUIRE(ra.loss_trace.size() == rb.loss_trace.size());
  for (size_t i = 0; i < ra.loss_trace.size(); ++i)
    CHECK(ra.loss_trace[i] == rb.loss_trace[i]);
  CHECK(rb.final_state.p == 0.0);
}

TEST_CASE("patch attacks never touch pixels outside the mask") {
  const FeatureExtractor fe(tiny_arch(), 51);
  const ImageTensor src = random_image(8, 8, 61);
  const ImageTensor tgt = random_image(8, 8, 62);
  const Mask m = rect_mask(8, 8, 2, 6, 3, 7);
  for (Variant v : {Variant::kA1, Variant::kA2, Variant::kA3, Variant::kA4}) {
    AttackConfig c = base_config(v, AttackMode::kPatchSticker, Objective::kImpersonation, 5);
    int iterations_seen = 0;
    const auto observer = [&](int, const ImageTensor& x) {
      ++iterations_seen;
      for (int r = 0; r < 8; ++r)
        for (int col = 0; col < 8; ++col)
          for (int ch = 0; ch < 3; ++ch) {
            if (m.at(r, col, ch) == 0.0f) CHECK(x.at(r, col, ch) == src.at(r, col, ch));
            CHECK(x.at(r, col, ch) >= 0.0f);
            CHECK(x.at(r, col, ch) <= 1.0f);
          }
    };
    const AttackResult res = run_attack(src, tgt, fe, c, &m, 99, observer);
    CHECK(iterations_seen == 5);
    // Inside the patch something actually moved.
    float inside_change = 0.0f;
    for (int r = 2; r < 6; ++r)
      for (int col = 3; col < 7; ++col)
        inside_change += std::abs(res.adversarial.at(r, col, 0) - src.at(r, col, 0));
    CHECK(inside_change > 0.0f);
  }
}

TEST_CASE("imperceptible attacks stay inside the epsilon ball around the source") {
  const FeatureExtractor fe(tiny_arch(), 71);
  const ImageTensor src = random_image(8, 8, 81);
  const ImageTensor tgt = random_image(8, 8, 82);
  const float eps = 4.0f / 255.0f;
  for (Variant v : {Variant::kA1, Variant::kA2, Variant::kA3, Variant::kA4}) {
    AttackConfig c = base_config(v, AttackMode::kImperceptible, Objective::kImpersonation, 6);
    c.alpha = 1.0 / 255.0;
    const auto observer = [&](int, const ImageTensor& x) {
      for (size_t i = 0; i < x.size(); ++i) {
        CHECK(x.data[i] >= 0.0f);
        CHECK(x.data[i] <= 1.0f);
        CHECK(std::abs(x.data[i] - src.data[i]) <= eps + 1e-7f);
      }
    };
    run_attack(src, tgt, fe, c, nullptr, 7, observer);
  }
}

TEST_CASE("ensemble gradient matches finite differences through the transform chain") {
  // Freeze one iteration's worth of ensemble randomness, rebuild the summed
  // gradient with public replay + model calls, and compare against central
  // differences of the total ensemble loss computed by the independent
  // double-precision oracle.
  const Architecture arch = tiny_arch();
  const FeatureExtractor fe(arch, 91);
  const oracle::Net net = oracle::Net::from(fe);
  const ImageTensor src = random_image(8, 8, 101);
  const ImageTensor tgt = random_image(8, 8, 102);
  const Mask m_p = rect_mask(8, 8, 1, 6, 1, 7);
  const EmbeddingVector ref = fe.forward(tgt);
  std::vector<double> ref_d(ref.values.begin(), ref.values.end());

  // Draw members with wide-open parameters so every term participates.
  Rng rng(13);
  BrightnessParams params{1.0, 0.5, 1.5, 1.0, 0.1};
  const ImageTensor x = init_patch(src, random_image(8, 8, 103), m_p);
  const int members = 6;
  std::vector<Mask> rects;
  std::vector<TransformDraws> draws;
  for (int j = 0; j < members; ++j) {
    const Mask m_b = random_rect_mask(8, 8, rng, 0.1f, 0.6f);
    const TransformSample s = cnbt_patch(x, m_p, m_b, params, rng);
    rects.push_back(m_b);
    draws.push_back(s.draws);
  }

  // Analytic summed gradient via replay, exactly as the attack chains it.
  ImageTensor analytic(8, 8, 3);
  for (int j = 0; j < members; ++j) {
    const TransformSample s = replay_cnbt_patch(x, m_p, rects[j], draws[j]);
    const EmbeddingVector emb = fe.forward(s.transformed);
    const EmbeddingVector up = j_adv_gradient(emb, ref, Objective::kImpersonation);
    const ImageTensor g = fe.input_gradient(s.transformed, up);
    for (size_t k = 0; k < analytic.size(); ++k)
      analytic.data[k] += s.coeff.data[k] * g.data[k];
  }

  // Total ensemble loss as a double-precision function of the image.
  const auto total_loss = [&](const ImageTensor& img, std::vector<int8_t>* signs) -> double {
    double sum = 0.0;
    for (int j = 0; j < members; ++j) {
      const TransformSample s = replay_cnbt_patch(img, m_p, rects[j], draws[j]);
      std::vector<double> in(s.transformed.data.begin(), s.transformed.data.end());
      std::vector<int8_t> member_signs;
      const std::vector<double> emb = net.forward(in, &member_signs);
      sum += oracle::adv_loss(emb, ref_d, /*impersonation=*/true);
      if (signs) signs->insert(signs->end(), member_signs.begin(), member_signs.end());
    }
    return sum;
  };

  Rng pick(17);
  int checked = 0, skipped = 0;
  double worst = 0.0;
  const double h = 1e-3;
  for (int trial = 0; trial < 60; ++trial) {
    const size_t k = static_cast<size_t>(pick.next_u64() % x.size());
    ImageTensor plus = x, minus = x;
    plus.data[k] += static_cast<float>(h);
    minus.data[k] -= static_cast<float>(h);
    std::vector<int8_t> s_plus, s_minus;
    const double lp = total_loss(plus, &s_plus);
    const double lm = total_loss(minus, &s_minus);
    if (s_plus != s_minus) {  // crossed a ReLU kink; FD invalid there
      ++skipped;
      continue;
    }
    const double fd = (lp - lm) / (2.0 * h);
    const double a = analytic.data[k];
    const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3});
    worst = std::max(worst, rel);
    ++checked;
  }
  CHECK(checked >= 30);
  CHECK(worst < 1e-3);
  INFO("checked ", checked, " skipped ", skipped, " worst ", worst);
}

TEST_CASE("descent actually reduces the adversarial loss") {
  // Dodging gives a random-init extractor room to move: two noise images
  // embed almost identically (cos near 1), so pushing the cosine down is a
  // real optimization problem while impersonation would start near zero loss.
  const FeatureExtractor fe(tiny_arch(16), 111);
  const ImageTensor src = random_image(16, 16, 121);
  const Mask m = rect_mask(16, 16, 2, 12, 2, 14);
  AttackConfig c = base_config(Variant::kA1, AttackMode::kPatchSticker,
                               Objective::kDodging, 40);
  const AttackResult r = run_attack(src, src, fe, c, &m, 2024);
  REQUIRE(r.loss_trace.size() == 40);
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 5; ++i) {
    head += r.loss_trace[i];
    tail += r.loss_trace[40 - 5 + i];
  }
  CHECK(tail / 5.0 < head / 5.0 - 0.02);
}

TEST_CASE("non-finite losses surface as numeric errors with the iteration") {
  const NanModel nan_model;
  const ImageTensor src = random_image(8, 8, 131);
  const ImageTensor tgt = random_image(8, 8, 132);
  AttackConfig c = base_config(Variant::kA1, AttackMode::kImperceptible,
                               Objective::kImpersonation, 3);
  c.alpha = 1.0 / 255.0;
  try {
    run_attack(src, tgt, nan_model, c, nullptr, 0);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.iteration == 0);
    CHECK(std::string(e.what()).find("iteration 0") != std::string::npos);
  }
}

TEST_CASE("A2 draws one whole-image scale per ensemble member") {
  const FeatureExtractor fe(tiny_arch(), 141);
  const ImageTensor src = random_image(8, 8, 151);
  const ImageTensor tgt = random_image(8, 8, 152);
  const Mask m = rect_mask(8, 8, 1, 7, 1, 7);
  AttackConfig c = base_config(Variant::kA2, AttackMode::kPatchSticker,
                               Objective::kImpersonation, 4);
  c.ensemble_size = 5;
  const AttackResult r = run_attack(src, tgt, fe, c, &m, 61);
  REQUIRE(r.draw_log.size() == 4u * 5u);
  for (const EnsembleDraw& d : r.draw_log) {
    CHECK(d.draws.bt_fired);
    CHECK(d.draws.bt_scale >= 0.5);
    CHECK(d.draws.bt_scale < 1.5);
    CHECK(d.draws.y == 1.0);
    CHECK(d.draws.rect_scale == 1.0);
  }
  // Scales vary across members (whole-image scaling is re-drawn each time).
  CHECK(r.draw_log[0].draws.bt_scale != r.draw_log[1].draws.bt_scale);
}
