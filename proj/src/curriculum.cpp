#include "baforge/curriculum.hpp"

#include <algorithm>

#include "baforge/errors.hpp"

namespace baforge {

void StepSchedule::validate() const {
  if (!(delta_l >= 0.0 && delta_h >= 0.0)) {
    throw ValidationError("schedule: deltas must be >= 0");
  }
  if (!(l_min <= 1.0 && 1.0 <= h_max)) {
    throw ValidationError("schedule: need l_min <= 1 <= h_max");
  }
  if (period < 1) throw ValidationError("schedule: period must be >= 1");
}

void curriculum_update(CurriculumState& state, int i, int N, double K,
                       double mean_ensemble_loss, const StepSchedule& schedule) {
  const double prev_cum = state.loss_cum;
  state.loss_cum += mean_ensemble_loss;
  if ((i + 1) % schedule.period == 0) {
    state.l = std::max(schedule.l_min, state.l - schedule.delta_l);
    state.h = std::min(schedule.h_max, state.h + schedule.delta_h);
  }
  if (i != 0 && i % N == 0) {
    // prev_cum holds the sum of the previous window's N mean losses; the
    // accumulation above is discarded by the reset so the new window starts
    // with exactly this iteration's loss.
    state.p = std::max(0.0, K - prev_cum / static_cast<double>(N));
    state.loss_cum = mean_ensemble_loss;
  }
  state.iteration = i + 1;
}

}  // namespace baforge
