// Runs every acceptance criterion at full size and prints one line each.
// Exit status is the number of failed criteria (0 when all pass).

#include <cstdio>
#include <functional>
#include <vector>

#include "bapose/checks/criteria.h"

int main() {
  using namespace bapose::check;
  const ToyProblem toy = toy_problem();
  const std::vector<std::function<CriterionResult()>> criteria = {
      [] { return conv_oracle(); },
      [] { return adaptive_degeneracy(); },
      [] { return gradient_suite(); },
      [] { return channel_widths(); },
      [] { return render_decode_round_trip(); },
      [] { return oks_closed_forms(); },
      [] { return evaluator_equivalence(); },
      [] { return lr_schedule(); },
      [] { return augmentation(); },
      [&] { return toy_overfit(toy); },
      [&] { return determinism(toy); },
      [] { return format_round_trips(); },
  };
  int failed = 0;
  for (const auto& run : criteria) {
    const CriterionResult r = run();
    failed += !r.passed;
    std::printf("%s\n", format_result(r).c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n",
              static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed;
}
