#pragma once

#include <cstdint>
#include <vector>

#include "lbkt/dataset.hpp"

namespace lbkt {

/// Rasch-style synthetic students: P(correct) = sigmoid(ability - difficulty),
/// plus an optional per-attempt learning gain.
struct SyntheticIrtOptions {
  int students = 2000;
  int questions = 200;
  int min_length = 50;
  int max_length = 400;
  double ability_sd = 1.0;
  double difficulty_sd = 1.5;
  double learning_gain = 0.0;
  std::uint64_t seed = 7;
};

struct SyntheticIrtData {
  std::vector<RawSequence> sequences;
  std::vector<double> abilities;
  std::vector<double> difficulties;
};

SyntheticIrtData generate_irt(const SyntheticIrtOptions& options);

}  // namespace lbkt
