#include "lbkt/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "lbkt/random.hpp"

namespace lbkt {

SyntheticIrtData generate_irt(const SyntheticIrtOptions& o) {
  if (o.students < 1 || o.questions < 1) throw std::invalid_argument("synthetic set needs students and questions");
  if (o.min_length < 1 || o.max_length < o.min_length) throw std::invalid_argument("bad synthetic length range");
  Rng rng(mix_seed(o.seed, 0x1127));
  SyntheticIrtData data;
  data.difficulties.resize(static_cast<std::size_t>(o.questions));
  for (auto& b : data.difficulties) b = o.difficulty_sd * rng.normal();
  data.abilities.resize(static_cast<std::size_t>(o.students));
  data.sequences.resize(static_cast<std::size_t>(o.students));

  char buf[32];
  for (int s = 0; s < o.students; ++s) {
    const double ability = o.ability_sd * rng.normal();
    data.abilities[static_cast<std::size_t>(s)] = ability;
    auto& seq = data.sequences[static_cast<std::size_t>(s)];
    std::snprintf(buf, sizeof buf, "s%05d", s);
    seq.student_id = buf;
    const auto span = static_cast<std::uint64_t>(o.max_length - o.min_length + 1);
    const int length = o.min_length + static_cast<int>(rng.below(span));
    seq.records.reserve(static_cast<std::size_t>(length));
    for (int t = 0; t < length; ++t) {
      const auto q = rng.below(static_cast<std::uint64_t>(o.questions));
      const double logit = ability + o.learning_gain * t - data.difficulties[q];
      const double p = 1.0 / (1.0 + std::exp(-logit));
      InteractionRecord r;
      r.student_id = seq.student_id;
      std::snprintf(buf, sizeof buf, "q%04d", static_cast<int>(q));
      r.question_id = buf;
      r.correct = rng.uniform() < p ? 1 : 0;
      r.timestamp = static_cast<std::int64_t>(t) * 1000;
      seq.records.push_back(std::move(r));
    }
  }
  return data;
}

}  // namespace lbkt
