#pragma once

#include <cstdint>
#include <vector>

#include "prodigy/graph.hpp"

namespace prodigy {

enum class Family { neighbor_matching, multi_task, downstream };

const char* family_name(Family f);

/// An m-way k-shot episode. Examples are grouped by class: class 0's k examples first.
struct FewShotPrompt {
  int ways = 0;
  int shots = 0;
  Level level = Level::node;
  Family family = Family::downstream;
  std::vector<Datapoint> examples;
  std::vector<int> example_labels;
  std::vector<Datapoint> queries;
  std::vector<int> query_labels;  // ground truth; may be empty for stripped prompts
  /// Per-class origin: the anchor node for neighbor matching, the source class id otherwise.
  std::vector<std::int64_t> class_meta;

  int num_queries() const { return static_cast<int>(queries.size()); }
  /// Checks class balance and label ranges.
  void validate() const;
};

/// Copy of `p` with the ground-truth query labels removed.
FewShotPrompt strip_query_labels(FewShotPrompt p);

}  // namespace prodigy
