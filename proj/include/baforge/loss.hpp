#pragma once

#include "baforge/tensor.hpp"

namespace baforge {

enum class Objective { kImpersonation, kDodging };

// a.b / (|a||b|). Throws DegenerateInputError on a zero-norm input and
// ShapeError on a length mismatch.
float cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

// Adversarial loss, gradient-descent convention (lower is better):
//   impersonation: 1 - cos(probe, reference)   in [0, 2]
//   dodging:           cos(probe, reference)   in [-1, 1]
float j_adv(const EmbeddingVector& probe, const EmbeddingVector& reference, Objective objective);

// d j_adv / d probe, exact for non-unit probes as well.
EmbeddingVector j_adv_gradient(const EmbeddingVector& probe, const EmbeddingVector& reference,
                               Objective objective);

}  // namespace baforge
