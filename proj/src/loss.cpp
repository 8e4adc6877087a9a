#include "baforge/loss.hpp"

#include <cmath>

#include "baforge/errors.hpp"

namespace baforge {

namespace {

constexpr double kNormFloor = 1e-12;

double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.dim(); ++i) s += static_cast<double>(a.values[i]) * b.values[i];
  return s;
}

double norm(const EmbeddingVector& a) { return std::sqrt(dot(a, a)); }

}  // namespace

float cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) throw ShapeError("cosine_similarity: embedding length mismatch");
  const double na = norm(a);
  const double nb = norm(b);
  if (na < kNormFloor || nb < kNormFloor) {
    throw DegenerateInputError("cosine_similarity: zero-norm embedding");
  }
  return static_cast<float>(dot(a, b) / (na * nb));
}

float j_adv(const EmbeddingVector& probe, const EmbeddingVector& reference, Objective objective) {
  const float c = cosine_similarity(probe, reference);
  return objective == Objective::kImpersonation ? 1.0f - c : c;
}

EmbeddingVector j_adv_gradient(const EmbeddingVector& probe, const EmbeddingVector& reference,
                               Objective objective) {
  if (probe.dim() != reference.dim()) throw ShapeError("j_adv_gradient: embedding length mismatch");
  const double np = norm(probe);
  const double nr = norm(reference);
  if (np < kNormFloor || nr < kNormFloor) {
    throw DegenerateInputError("j_adv_gradient: zero-norm embedding");
  }
  // d cos(a,b)/da = (b_hat - cos * a_hat) / |a|
  const double cosv = dot(probe, reference) / (np * nr);
  const double sgn = objective == Objective::kImpersonation ? -1.0 : 1.0;
  EmbeddingVector g(probe.dim());
  for (size_t i = 0; i < probe.dim(); ++i) {
    const double bhat = reference.values[i] / nr;
    const double ahat = probe.values[i] / np;
    g.values[i] = static_cast<float>(sgn * (bhat - cosv * ahat) / np);
  }
  return g;
}

}  // namespace baforge
