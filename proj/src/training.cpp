#include "baforge/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "baforge/errors.hpp"
#include "baforge/loss.hpp"
#include "baforge/rng.hpp"

namespace baforge {

namespace {

// Adam moments for one parameter array.
struct AdamSlot {
  std::vector<double> m, v;
  explicit AdamSlot(size_t n) : m(n, 0.0), v(n, 0.0) {}
};

void adam_step(std::vector<float>& param, const std::vector<float>& grad, AdamSlot& slot,
               double lr, int t) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  for (size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    slot.m[i] = b1 * slot.m[i] + (1.0 - b1) * g;
    slot.v[i] = b2 * slot.v[i] + (1.0 - b2) * g * g;
    param[i] -= static_cast<float>(lr * (slot.m[i] / c1) / (std::sqrt(slot.v[i] / c2) + eps));
  }
}

}  // namespace

TrainResult train_extractor(const LabeledDataset& dataset, const Architecture& arch,
                            const TrainParams& params) {
  if (dataset.items.empty()) throw ValidationError("train: dataset is empty");
  if (params.epochs < 0 || params.batch_size < 1 || !(params.lr > 0.0)) {
    throw ValidationError("train: bad epochs/batch size/learning rate");
  }
  if (!(params.aug_lo > 0.0) || params.aug_lo > params.aug_hi) {
    throw ValidationError("train: need 0 < aug_lo <= aug_hi");
  }

  // Contiguous class ids from whatever labels the dataset carries.
  std::map<int, int> class_of_label;
  for (const LabeledImage& item : dataset.items) {
    class_of_label.emplace(item.label, static_cast<int>(class_of_label.size()));
  }
  const int n_classes = static_cast<int>(class_of_label.size());

  // Per-identity tail slice becomes the holdout set.
  std::map<int, std::vector<size_t>> by_label;
  for (size_t i = 0; i < dataset.items.size(); ++i) by_label[dataset.items[i].label].push_back(i);
  std::vector<size_t> train_idx, holdout_idx;
  for (auto& [label, idxs] : by_label) {
    std::sort(idxs.begin(), idxs.end(), [&](size_t a, size_t b) {
      return dataset.items[a].index < dataset.items[b].index;
    });
    const size_t n_hold = std::min(idxs.size() - 1,
                                   static_cast<size_t>(std::llround(params.holdout_frac *
                                                                    static_cast<double>(idxs.size()))));
    for (size_t k = 0; k < idxs.size(); ++k) {
      (k < idxs.size() - n_hold ? train_idx : holdout_idx).push_back(idxs[k]);
    }
  }

  const int d = arch.embedding_dim;
  TrainResult result{FeatureExtractor(arch, derive_seed(params.seed, "init")), n_classes, 0.0,
                     0.0, 0.0};
  FeatureExtractor& net = result.extractor;

  // Classifier head: n_classes x D, logits = logit_scale * (W e).
  std::vector<float> head(static_cast<size_t>(n_classes) * d);
  {
    Rng head_rng(derive_seed(params.seed, "head"));
    const double std = 1.0 / std::sqrt(static_cast<double>(d));
    for (float& v : head) v = static_cast<float>(head_rng.gaussian(0.0, std));
  }

  std::vector<AdamSlot> slots;
  for (const ParamBlock& p : net.params()) {
    slots.emplace_back(p.w.size());
    slots.emplace_back(p.b.size());
  }
  AdamSlot head_slot(head.size());
  const float scale = static_cast<float>(params.logit_scale);

  std::vector<float> logits(n_classes), probs(n_classes);
  auto forward_logits = [&](const ImageTensor& img, FeatureExtractor::Stages* stages,
                            EmbeddingVector* emb_out) {
    EmbeddingVector e = stages ? net.forward_stages(img, *stages) : net.forward(img);
    for (int k = 0; k < n_classes; ++k) {
      float acc = 0.0f;
      const float* row = head.data() + static_cast<size_t>(k) * d;
      for (int j = 0; j < d; ++j) acc += row[j] * e.values[j];
      logits[k] = scale * acc;
    }
    if (emb_out) *emb_out = std::move(e);
  };
  auto softmax_ce = [&](int cls) {
    const float mx = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (int k = 0; k < n_classes; ++k) denom += std::exp(static_cast<double>(logits[k] - mx));
    for (int k = 0; k < n_classes; ++k) {
      probs[k] = static_cast<float>(std::exp(static_cast<double>(logits[k] - mx)) / denom);
    }
    return -(static_cast<double>(logits[cls] - mx) - std::log(denom));
  };

  const bool augment = params.aug_lo != 1.0 || params.aug_hi != 1.0;
  int adam_t = 0;
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    // Fisher-Yates shuffle from a per-epoch stream.
    Rng shuffle_rng(derive_seed(params.seed, "shuffle", static_cast<uint64_t>(epoch)));
    std::vector<size_t> order = train_idx;
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(0, static_cast<int>(i) - 1)]);
    }
    Rng aug_rng(derive_seed(params.seed, "augment", static_cast<uint64_t>(epoch)));

    double epoch_loss = 0.0;
    size_t epoch_count = 0;
    for (size_t start = 0; start < order.size(); start += params.batch_size) {
      const size_t end = std::min(order.size(), start + params.batch_size);
      const int bsz = static_cast<int>(end - start);
      std::vector<ParamBlock> grads = net.zero_param_grads();
      std::vector<float> head_grad(head.size(), 0.0f);
      for (size_t s = start; s < end; ++s) {
        const LabeledImage& item = dataset.items[order[s]];
        const int cls = class_of_label.at(item.label);
        FeatureExtractor::Stages stages;
        EmbeddingVector e;
        if (augment) {
          const float b = static_cast<float>(aug_rng.uniform(params.aug_lo, params.aug_hi));
          forward_logits(baforge::scale(item.image, b), &stages, &e);
        } else {
          forward_logits(item.image, &stages, &e);
        }
        const double loss = softmax_ce(cls);
        if (!std::isfinite(loss)) {
          throw TrainingError("training diverged (non-finite loss) at epoch " +
                              std::to_string(epoch));
        }
        epoch_loss += loss;
        ++epoch_count;
        // dlogits = probs - onehot; chain into head and embedding.
        EmbeddingVector de(static_cast<size_t>(d));
        for (int k = 0; k < n_classes; ++k) {
          const float dl = (probs[k] - (k == cls ? 1.0f : 0.0f)) * scale;
          float* hrow = head_grad.data() + static_cast<size_t>(k) * d;
          const float* wrow = head.data() + static_cast<size_t>(k) * d;
          for (int j = 0; j < d; ++j) {
            hrow[j] += dl * e.values[j];
            de.values[j] += dl * wrow[j];
          }
        }
        net.backward(stages, de, &grads, nullptr);
      }
      const float inv = 1.0f / static_cast<float>(bsz);
      ++adam_t;
      size_t si = 0;
      for (size_t li = 0; li < net.params().size(); ++li) {
        for (float& g : grads[li].w) g *= inv;
        for (float& g : grads[li].b) g *= inv;
        adam_step(net.params()[li].w, grads[li].w, slots[si++], params.lr, adam_t);
        adam_step(net.params()[li].b, grads[li].b, slots[si++], params.lr, adam_t);
      }
      for (float& g : head_grad) g *= inv;
      adam_step(head, head_grad, head_slot, params.lr, adam_t);
    }
    const double mean_loss = epoch_count ? epoch_loss / static_cast<double>(epoch_count) : 0.0;
    if (epoch == 0) result.initial_loss = mean_loss;
    result.final_loss = mean_loss;
  }

  // Holdout identity-classification accuracy with the trained head.
  size_t correct = 0;
  for (size_t idx : holdout_idx) {
    const LabeledImage& item = dataset.items[idx];
    forward_logits(item.image, nullptr, nullptr);
    const int pred = static_cast<int>(std::max_element(logits.begin(), logits.end()) -
                                      logits.begin());
    if (pred == class_of_label.at(item.label)) ++correct;
  }
  result.holdout_accuracy =
      holdout_idx.empty() ? 0.0 : static_cast<double>(correct) / holdout_idx.size();
  return result;
}

VerificationThreshold calibrate_threshold(const EmbeddingModel& extractor,
                                          const LabeledDataset& dataset, double target_far,
                                          int n_pairs, uint64_t seed) {
  if (!(target_far >= 0.0 && target_far <= 1.0)) {
    throw ValidationError("calibrate: target_far must lie in [0,1]");
  }
  if (n_pairs < 1) throw ValidationError("calibrate: need n_pairs >= 1");
  std::map<int, std::vector<size_t>> by_label;
  for (size_t i = 0; i < dataset.items.size(); ++i) by_label[dataset.items[i].label].push_back(i);
  if (by_label.size() < 2) throw ValidationError("calibrate: need at least 2 identities");

  std::vector<EmbeddingVector> embeddings(dataset.items.size());
  for (size_t i = 0; i < dataset.items.size(); ++i) {
    embeddings[i] = extractor.forward(dataset.items[i].image);
  }
  std::vector<int> labels;
  for (const auto& [label, idxs] : by_label) labels.push_back(label);
  std::vector<int> rich_labels;  // identities that can form genuine pairs
  for (const auto& [label, idxs] : by_label) {
    if (idxs.size() >= 2) rich_labels.push_back(label);
  }
  if (rich_labels.empty()) {
    throw ValidationError("calibrate: no identity has 2+ samples for genuine pairs");
  }

  Rng rng(derive_seed(seed, "calibration"));
  std::vector<float> impostor(n_pairs), genuine(n_pairs);
  for (int k = 0; k < n_pairs; ++k) {
    const int la = labels[rng.uniform_int(0, static_cast<int>(labels.size()) - 1)];
    int lb = la;
    while (lb == la) lb = labels[rng.uniform_int(0, static_cast<int>(labels.size()) - 1)];
    const auto& ia = by_label[la];
    const auto& ib = by_label[lb];
    const size_t a = ia[rng.uniform_int(0, static_cast<int>(ia.size()) - 1)];
    const size_t b = ib[rng.uniform_int(0, static_cast<int>(ib.size()) - 1)];
    impostor[k] = cosine_similarity(embeddings[a], embeddings[b]);
  }
  for (int k = 0; k < n_pairs; ++k) {
    const int l = rich_labels[rng.uniform_int(0, static_cast<int>(rich_labels.size()) - 1)];
    const auto& idxs = by_label[l];
    const int a = rng.uniform_int(0, static_cast<int>(idxs.size()) - 1);
    int b = a;
    while (b == a) b = rng.uniform_int(0, static_cast<int>(idxs.size()) - 1);
    genuine[k] = cosine_similarity(embeddings[idxs[a]], embeddings[idxs[b]]);
  }

  std::sort(impostor.begin(), impostor.end());
  if (impostor.front() > 1.0f - 1e-6f) {
    throw CalibrationError("calibrate: impostor similarities are all ~1 (degenerate embeddings)");
  }

  VerificationThreshold out;
  out.target_far = target_far;
  const int n = n_pairs;
  const int m = static_cast<int>(std::floor(target_far * n));  // accepts allowed
  if (m >= n) {
    out.tau = impostor.front();
  } else {
    // Smallest observed value strictly above the (m+1)-th largest similarity.
    const float cutoff = impostor[static_cast<size_t>(n - m - 1)];
    auto it = std::upper_bound(impostor.begin(), impostor.end(), cutoff);
    out.tau = it == impostor.end() ? cutoff + 1e-6f : *it;
  }
  out.far_at_tau = static_cast<double>(impostor.end() -
                                       std::lower_bound(impostor.begin(), impostor.end(),
                                                        out.tau)) /
                   n;
  size_t gen_ok = 0;
  for (float g : genuine) gen_ok += g >= out.tau ? 1 : 0;
  out.gar_at_tau = static_cast<double>(gen_ok) / n;
  return out;
}

}  // namespace baforge
