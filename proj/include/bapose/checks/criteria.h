#pragma once

// The acceptance criteria as callable checks. The acceptance binary runs
// them at full size; `bapose selftest` runs reduced counts.

#include <cstdint>
#include <string>
#include <vector>

#include "bapose/config.h"
#include "bapose/synthetic.h"
#include "bapose/train.h"

namespace bapose::check {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;  // measured values, or the first failure
  double seconds = 0;
};

// "[PASS] 3 gradient suite (12.3 s): ..." style line.
std::string format_result(const CriterionResult& r);

CriterionResult conv_oracle(int cases = 200, std::uint64_t seed = 11);
CriterionResult adaptive_degeneracy(int cases = 50, std::uint64_t seed = 12);
// Layer suites and (when full_model) the whole-network check.
CriterionResult gradient_suite(bool full_model = true, std::uint64_t seed = 1);
CriterionResult channel_widths();
CriterionResult render_decode_round_trip(int scenes = 100,
                                         std::uint64_t seed = 15);
CriterionResult oks_closed_forms();
CriterionResult evaluator_equivalence(int scenes = 500, std::uint64_t seed = 17);
CriterionResult lr_schedule();
CriterionResult augmentation(int draws = 100000, std::uint64_t seed = 19);

// The synthetic training problem behind the overfit and determinism checks.
struct ToyProblem {
  PeopleParams people;
  int images = 8;
  std::uint64_t data_seed = 1;
  std::uint64_t model_seed = 1;
  RunConfig config;

  std::vector<TrainSample> dataset() const;
};

// Defaults tuned for the overfit criterion (toy widths, augmentation off).
ToyProblem toy_problem();

CriterionResult toy_overfit(const ToyProblem& toy);
// Two runs of `epochs` epochs from the same seed, checkpoints compared byte
// for byte. Augmentation is switched on so the sampling streams are covered.
CriterionResult determinism(const ToyProblem& toy, int epochs = 3);
CriterionResult format_round_trips(std::uint64_t seed = 23);

}  // namespace bapose::check
