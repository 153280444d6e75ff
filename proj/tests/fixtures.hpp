// Small hand-specified RBMs and their moments, computed once by a separate
// 16-state enumeration script and pinned here.
#pragma once

#include "dbnbench/rbm.hpp"

namespace fixtures {

// n = m = 2, b = (0.5, -0.5), c = (0.25, 0), W = ((1, -1), (0, 0.5)).
inline dbnbench::RbmParams p1() {
  dbnbench::RbmParams p(2, 2);
  p.visible_bias = {0.5, -0.5};
  p.hidden_bias = {0.25, 0.0};
  p.weights(0, 0) = 1.0;
  p.weights(0, 1) = -1.0;
  p.weights(1, 0) = 0.0;
  p.weights(1, 1) = 0.5;
  return p;
}

inline constexpr double kP1LogZ = 3.24173792209848;
inline constexpr double kP1V[2] = {0.6779512115715781, 0.42548958667964315};
inline constexpr double kP1H[2] = {0.7080196436310023, 0.39154972847648195};
inline constexpr double kP1VH[2][2] = {{0.5269713826378014, 0.21295771370399},
                                       {0.2998720934522966, 0.195774864238241}};

}  // namespace fixtures
