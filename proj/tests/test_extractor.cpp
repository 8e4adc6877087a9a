#include <doctest.h>

#include <cmath>
#include <vector>

#include "baforge/errors.hpp"
#include "baforge/extractor.hpp"
#include "baforge/loss.hpp"
#include "baforge/rng.hpp"
#include "support/oracle.hpp"

using namespace baforge;

namespace {

ImageTensor random_image(int h, int w, int c, Rng& rng) {
  ImageTensor img(h, w, c);
  for (float& v : img.data) v = static_cast<float>(rng.uniform01());
  return img;
}

EmbeddingVector random_upstream(int d, Rng& rng) {
  EmbeddingVector u(static_cast<size_t>(d));
  for (float& v : u.values) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return u;
}

std::vector<double> to_double(const std::vector<float>& v) {
  return std::vector<double>(v.begin(), v.end());
}

// Max relative FD error over `n_components` sampled pixels. Components whose
// finite-difference interval straddles a ReLU kink are skipped; tiny
// components are compared against a floor of 1e-3 * max|analytic|.
double max_fd_error(const FeatureExtractor& net, const ImageTensor& image,
                    const EmbeddingVector& upstream, int n_components, Rng& rng,
                    int* n_skipped = nullptr) {
  const oracle::Net ref = oracle::Net::from(net);
  const std::vector<double> up = to_double(upstream.values);
  const ImageTensor analytic = net.input_gradient(image, upstream);
  float max_abs = 0.0f;
  for (float v : analytic.data) max_abs = std::max(max_abs, std::abs(v));
  const double floor = 1e-3 * max_abs;

  auto scalar = [&](const std::vector<double>& x, std::vector<int8_t>* signs) {
    return oracle::dot(ref.forward(x, signs), up);
  };
  const std::vector<double> x0 = to_double(image.data);
  double worst = 0.0;
  int skipped = 0;
  for (int t = 0; t < n_components; ++t) {
    const size_t i = static_cast<size_t>(rng.uniform_int(0, static_cast<int>(x0.size()) - 1));
    double fd;
    if (!oracle::central_diff(scalar, x0, i, 1e-3, &fd)) {
      ++skipped;
      continue;
    }
    const double a = analytic.data[i];
    const double denom = std::max({std::abs(a), std::abs(fd), floor});
    if (denom == 0.0) continue;  // both exactly zero
    worst = std::max(worst, std::abs(a - fd) / denom);
  }
  if (n_skipped) *n_skipped = skipped;
  return worst;
}

}  // namespace

TEST_CASE("stage shapes of the reference architectures") {
  const Architecture a = make_architecture("cnn-a");
  const auto sa = stage_shapes(a);
  REQUIRE(sa.size() == a.layers.size() + 1);
  CHECK(sa[1].h == 31);  // (64-3)/2+1
  CHECK(sa[3].h == 15);
  CHECK(sa.back().c == 32);
  CHECK(sa.back().h == 1);

  const Architecture b = make_architecture("cnn-b");
  const auto sb = stage_shapes(b);
  CHECK(sb[5].h == 7);  // third conv stage
  CHECK(sb.back().c == 32);

  CHECK_THROWS_AS(make_architecture("cnn-z"), ValidationError);
}

TEST_CASE("architecture validation rejects inconsistent stacks") {
  Architecture bad = make_architecture("cnn-a");
  bad.layers[2].in_ch = 4;  // second conv no longer matches first conv's width
  CHECK_THROWS_AS(stage_shapes(bad), ValidationError);
  Architecture wrong_dim = make_architecture("cnn-a");
  wrong_dim.embedding_dim = 16;
  CHECK_THROWS_AS(stage_shapes(wrong_dim), ValidationError);
}

TEST_CASE("forward is deterministic and unit-norm") {
  const FeatureExtractor net(make_architecture("cnn-a"), 7);
  Rng rng(99);
  const ImageTensor img = random_image(64, 64, 3, rng);
  const EmbeddingVector e1 = net.forward(img);
  const EmbeddingVector e2 = net.forward(img);
  REQUIRE(e1.dim() == 32);
  for (size_t i = 0; i < e1.dim(); ++i) CHECK(e1.values[i] == e2.values[i]);

  double sq = 0.0;
  for (float v : e1.values) sq += static_cast<double>(v) * v;
  CHECK(std::abs(std::sqrt(sq) - 1.0) < 1e-5);
  CHECK(cosine_similarity(e1, e2) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("all-zero image maps to a fixed unit vector with zero gradient") {
  // Zero input with zero biases gives a zero pre-embedding, which the
  // normalization layer maps to the fixed fallback vector.
  const FeatureExtractor net(make_architecture("cnn-a"), 3);
  const ImageTensor zero(64, 64, 3);
  const EmbeddingVector e = net.forward(zero);
  CHECK(e.values[0] == 1.0f);
  for (size_t i = 1; i < e.dim(); ++i) CHECK(e.values[i] == 0.0f);

  EmbeddingVector up(e.dim());
  for (float& v : up.values) v = 1.0f;
  const ImageTensor g = net.input_gradient(zero, up);
  for (float v : g.data) CHECK(v == 0.0f);
}

TEST_CASE("zero upstream gives zero gradient; VJP is linear in the upstream") {
  const FeatureExtractor net(make_architecture("cnn-a"), 11);
  Rng rng(5);
  const ImageTensor img = random_image(64, 64, 3, rng);

  const ImageTensor gz = net.input_gradient(img, EmbeddingVector(32));
  for (float v : gz.data) CHECK(v == 0.0f);

  const EmbeddingVector u1 = random_upstream(32, rng);
  const EmbeddingVector u2 = random_upstream(32, rng);
  EmbeddingVector usum(32);
  for (size_t i = 0; i < 32; ++i) usum.values[i] = u1.values[i] + u2.values[i];
  const ImageTensor g1 = net.input_gradient(img, u1);
  const ImageTensor g2 = net.input_gradient(img, u2);
  const ImageTensor gs = net.input_gradient(img, usum);
  float max_abs = 0.0f;
  for (size_t i = 0; i < gs.size(); ++i) max_abs = std::max(max_abs, std::abs(gs.data[i]));
  for (size_t i = 0; i < gs.size(); ++i) {
    CHECK(std::abs(gs.data[i] - (g1.data[i] + g2.data[i])) <= 1e-5f * std::max(1.0f, max_abs));
  }
}

TEST_CASE("input gradient matches central finite differences on 10 seeds per architecture") {
  for (const std::string& name : known_architectures()) {
    for (uint64_t seed = 0; seed < 10; ++seed) {
      const FeatureExtractor net(make_architecture(name), derive_seed(seed, "fd-net"));
      Rng rng(derive_seed(seed, "fd-data"));
      const ImageTensor img = random_image(64, 64, 3, rng);
      const EmbeddingVector up = random_upstream(32, rng);
      int skipped = 0;
      const double err = max_fd_error(net, img, up, 60, rng, &skipped);
      INFO(name << " seed " << seed << " skipped " << skipped);
      CHECK(err < 1e-3);
      CHECK(skipped < 30);  // kinks must stay the exception, not the rule
    }
  }
}

TEST_CASE("parameter gradients match finite differences") {
  const Architecture arch = make_architecture("cnn-a", 32, 32);
  const FeatureExtractor net(arch, 21);
  Rng rng(22);
  const ImageTensor img = random_image(32, 32, 3, rng);
  const EmbeddingVector up = random_upstream(32, rng);

  FeatureExtractor::Stages stages;
  net.forward_stages(img, stages);
  std::vector<ParamBlock> grads = net.zero_param_grads();
  net.backward(stages, up, &grads, nullptr);

  const std::vector<double> x0 = to_double(img.data);
  const std::vector<double> upd = to_double(up.values);
  double worst = 0.0;
  int checked = 0;
  for (size_t li = 0; li < net.params().size(); ++li) {
    const size_t nw = net.params()[li].w.size();
    if (nw == 0) continue;
    for (int t = 0; t < 12; ++t) {
      const size_t wi = static_cast<size_t>(rng.uniform_int(0, static_cast<int>(nw) - 1));
      auto scalar = [&](double delta, std::vector<int8_t>* signs) {
        oracle::Net ref = oracle::Net::from(net);
        ref.w[li][wi] += delta;
        return oracle::dot(ref.forward(x0, signs), upd);
      };
      std::vector<int8_t> sp, sm;
      const double fp = scalar(1e-3, &sp);
      const double fm = scalar(-1e-3, &sm);
      if (sp != sm) continue;
      const double fd = (fp - fm) / 2e-3;
      const double a = grads[li].w[wi];
      const double denom = std::max({std::abs(a), std::abs(fd), 1e-4});
      worst = std::max(worst, std::abs(a - fd) / denom);
      ++checked;
    }
  }
  CHECK(checked > 20);
  CHECK(worst < 1e-3);
}

TEST_CASE("shape errors on mismatched inputs") {
  const FeatureExtractor net(make_architecture("cnn-a"), 1);
  CHECK_THROWS_AS(net.forward(ImageTensor(32, 64, 3)), ShapeError);
  CHECK_THROWS_AS(net.input_gradient(ImageTensor(64, 64, 3), EmbeddingVector(16)), ShapeError);
}

TEST_CASE("weight layout round-trips through the param constructor") {
  const FeatureExtractor a(make_architecture("cnn-b"), 17);
  const FeatureExtractor b(a.architecture(), a.params());
  Rng rng(18);
  const ImageTensor img = random_image(64, 64, 3, rng);
  const EmbeddingVector ea = a.forward(img);
  const EmbeddingVector eb = b.forward(img);
  for (size_t i = 0; i < ea.dim(); ++i) CHECK(ea.values[i] == eb.values[i]);

  std::vector<ParamBlock> bad = a.params();
  bad[0].w.pop_back();
  CHECK_THROWS_AS(FeatureExtractor(a.architecture(), bad), ValidationError);
}
