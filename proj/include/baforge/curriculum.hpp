#pragma once

namespace baforge {

// Mutable curriculum variables. Start values: l = h = 1 (no brightness
// range), p = 0 (transform gate closed), loss_cum = 0.
struct CurriculumState {
  double l = 1.0;
  double h = 1.0;
  double p = 0.0;
  double loss_cum = 0.0;
  int iteration = 0;
};

// Piecewise-constant step functions for the l/h bounds: every `period`
// iterations l decreases by delta_l (floored at l_min) and h increases by
// delta_h (capped at h_max).
struct StepSchedule {
  double delta_l = 0.05;
  double delta_h = 0.05;
  double l_min = 0.5;
  double h_max = 1.5;
  int period = 10;

  void validate() const;
};

// One end-of-iteration curriculum update:
//  - loss_cum accumulates this iteration's mean ensemble loss;
//  - l/h step on schedule boundaries ((i+1) % period == 0);
//  - on window boundaries (i != 0 and i % N == 0) p is recomputed from the
//    pre-accumulation loss_cum — the sum of the previous N mean losses —
//    as p = max(0, K - loss_cum/N), and loss_cum restarts the next window
//    at this iteration's mean loss.
// p is NOT clamped to [0,1] here; callers clamp at use time (dodging
// losses can be negative, pushing p above K).
void curriculum_update(CurriculumState& state, int i, int N, double K,
                       double mean_ensemble_loss, const StepSchedule& schedule);

}  // namespace baforge
