#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "vllr/error.hpp"

namespace vllr {

enum class Stage { kValueInit, kFinetune };

inline const char* to_string(Stage s) { return s == Stage::kValueInit ? "stage_1" : "stage_2"; }

struct RewardWeights {
  double alpha = 1.0;   // extrinsic progress reward, stage 1
  double beta = 0.1;    // self-certainty, stage 2
  double phi = 10.0;    // sparse task success, stage 2
  double sc_ceiling = 5.0;

  void validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0) || !(phi >= 0.0) || !std::isfinite(alpha) ||
        !std::isfinite(beta) || !std::isfinite(phi)) {
      fail(ErrorKind::kInvalidInput, "reward weights must be finite and nonnegative");
    }
    if (!(sc_ceiling > 0.0)) fail(ErrorKind::kInvalidInput, "self-certainty ceiling must be positive");
  }
};

struct RewardInputs {
  double r_vlm = 0.0;
  double r_sc = 0.0;
  double r_task = 0.0;
};

// Stage-gated weighted sum. Only the active stage's terms are evaluated;
// the inactive ones contribute an exact zero.
inline double compose(Stage stage, const RewardWeights& w, const RewardInputs& r) {
  if (!std::isfinite(r.r_vlm) || !std::isfinite(r.r_sc) || !std::isfinite(r.r_task)) {
    fail(ErrorKind::kInvalidInput, "non-finite reward component");
  }
  if (r.r_task != 0.0 && r.r_task != 1.0) fail(ErrorKind::kInvalidInput, "task reward must be 0 or 1");
  if (stage == Stage::kValueInit) return w.alpha * r.r_vlm;
  return w.beta * std::min(r.r_sc, w.sc_ceiling) + w.phi * r.r_task;
}

}  // namespace vllr
