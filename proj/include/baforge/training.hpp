#pragma once

#include <cstdint>

#include "baforge/dataset.hpp"
#include "baforge/extractor.hpp"

namespace baforge {

struct TrainParams {
  int epochs = 30;
  double lr = 0.002;
  int batch_size = 32;
  double logit_scale = 16.0;   // scale on logits over the unit-norm embedding
  double holdout_frac = 0.25;  // per-identity tail slice held out for accuracy
  // Brightness augmentation: each training sample is scaled by one factor
  // drawn from U(aug_lo, aug_hi) per visit, mirroring how deployed
  // verification models are trained to tolerate exposure changes. Holdout
  // accuracy is always measured on clean images. Set both to 1 to disable.
  double aug_lo = 0.6;
  double aug_hi = 1.4;
  uint64_t seed = 0;
};

struct TrainResult {
  FeatureExtractor extractor;
  int n_classes = 0;
  double initial_loss = 0.0;  // mean cross-entropy over the first epoch
  double final_loss = 0.0;    // mean cross-entropy over the last epoch
  double holdout_accuracy = 0.0;
};

// Softmax cross-entropy over identity labels with the embedding as the
// penultimate feature layer; the classifier head is discarded afterwards.
// Throws TrainingError on divergence (non-finite loss).
TrainResult train_extractor(const LabeledDataset& dataset, const Architecture& arch,
                            const TrainParams& params);

struct VerificationThreshold {
  float tau = 0.0f;
  double target_far = 0.01;
  double far_at_tau = 0.0;  // measured on the impostor sample
  double gar_at_tau = 0.0;  // measured on the genuine sample
};

// Smallest cosine threshold whose empirical false-accept rate on sampled
// impostor pairs is <= target_far (default 2000 impostor + 2000 genuine
// pairs). Throws CalibrationError when embeddings are degenerate.
VerificationThreshold calibrate_threshold(const EmbeddingModel& extractor,
                                          const LabeledDataset& dataset, double target_far,
                                          int n_pairs = 2000, uint64_t seed = 0);

}  // namespace baforge
