#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "lsplit/sql.hpp"

namespace lsplit {

inline constexpr double kAtomAlpha = 0.5;
inline constexpr double kCompoundAlpha = 0.1;

// A discrete distribution over structure strings. Keys absent from the map
// have weight zero.
struct Distribution {
  std::map<std::string, double> weights;

  std::size_t support() const { return weights.size(); }
  // Throws BadDistribution unless all weights are >= 0 and sum to 1 +- 1e-9.
  void validate() const;

  // Relative frequencies of a count table. Throws BadDistribution when the
  // counts are all zero.
  static Distribution from_counts(const std::map<std::string, std::size_t>& counts);
};

// C_alpha(P || Q) = sum_k p_k^alpha q_k^(1-alpha) over the shared support.
double chernoff_coefficient(const Distribution& p, const Distribution& q, double alpha);

// 1 - C_alpha(P || Q). Throws BadAlpha unless 0 < alpha < 1.
double chernoff_divergence(const Distribution& p, const Distribution& q, double alpha);

// Relative-frequency distribution of the multiset union of `bags`.
Distribution bag_distribution(const std::vector<const StructureBag*>& bags);

struct SplitDivergence {
  double atom = 0.0;
  double compound = 0.0;
};

// Train is P and evaluation is Q for both kinds.
SplitDivergence split_divergences(const std::vector<const ProgramStructure*>& train,
                                  const std::vector<const ProgramStructure*>& eval, double atom_alpha = kAtomAlpha,
                                  double compound_alpha = kCompoundAlpha);

// Convenience overload looking the ids up in a structure map. Throws
// MissingStructure for an id without an entry.
SplitDivergence split_divergences(const StructureMap& structures, const std::vector<std::string>& train_ids,
                                  const std::vector<std::string>& eval_ids, double atom_alpha = kAtomAlpha,
                                  double compound_alpha = kCompoundAlpha);

}  // namespace lsplit
