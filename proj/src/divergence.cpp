#include "lsplit/divergence.hpp"

#include <cmath>

#include "lsplit/error.hpp"

namespace lsplit {

void Distribution::validate() const {
  double total = 0.0;
  for (const auto& [key, w] : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorCode::BadDistribution, "negative weight for `" + key + "`");
    total += w;
  }
  if (std::fabs(total - 1.0) > 1e-9) {
    throw Error(ErrorCode::BadDistribution, "weights sum to " + std::to_string(total));
  }
}

Distribution Distribution::from_counts(const std::map<std::string, std::size_t>& counts) {
  std::size_t total = 0;
  for (const auto& [key, c] : counts) total += c;
  if (total == 0) throw Error(ErrorCode::BadDistribution, "empty count table");
  Distribution d;
  for (const auto& [key, c] : counts) {
    if (c > 0) d.weights.emplace(key, static_cast<double>(c) / static_cast<double>(total));
  }
  return d;
}

double chernoff_coefficient(const Distribution& p, const Distribution& q, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::BadAlpha, "alpha=" + std::to_string(alpha));
  p.validate();
  q.validate();
  double sum = 0.0;
  // walk the smaller support and probe the larger one
  const bool p_smaller = p.support() <= q.support();
  const auto& outer = p_smaller ? p.weights : q.weights;
  const auto& inner = p_smaller ? q.weights : p.weights;
  for (const auto& [key, w] : outer) {
    auto it = inner.find(key);
    if (it == inner.end() || w == 0.0 || it->second == 0.0) continue;
    const double pk = p_smaller ? w : it->second;
    const double qk = p_smaller ? it->second : w;
    sum += std::pow(pk, alpha) * std::pow(qk, 1.0 - alpha);
  }
  return sum;
}

double chernoff_divergence(const Distribution& p, const Distribution& q, double alpha) {
  const double d = 1.0 - chernoff_coefficient(p, q, alpha);
  return std::min(1.0, std::max(0.0, d));
}

Distribution bag_distribution(const std::vector<const StructureBag*>& bags) {
  std::map<std::string, std::size_t> counts;
  for (const StructureBag* bag : bags) {
    for (const auto& item : bag->items) ++counts[item];
  }
  return Distribution::from_counts(counts);
}

SplitDivergence split_divergences(const std::vector<const ProgramStructure*>& train,
                                  const std::vector<const ProgramStructure*>& eval, double atom_alpha,
                                  double compound_alpha) {
  std::vector<const StructureBag*> ta, tc, ea, ec;
  for (const auto* s : train) {
    ta.push_back(&s->atoms);
    tc.push_back(&s->compounds);
  }
  for (const auto* s : eval) {
    ea.push_back(&s->atoms);
    ec.push_back(&s->compounds);
  }
  SplitDivergence out;
  out.atom = chernoff_divergence(bag_distribution(ta), bag_distribution(ea), atom_alpha);
  out.compound = chernoff_divergence(bag_distribution(tc), bag_distribution(ec), compound_alpha);
  return out;
}

SplitDivergence split_divergences(const StructureMap& structures, const std::vector<std::string>& train_ids,
                                  const std::vector<std::string>& eval_ids, double atom_alpha,
                                  double compound_alpha) {
  auto gather = [&](const std::vector<std::string>& ids) {
    std::vector<const ProgramStructure*> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
      auto it = structures.find(id);
      if (it == structures.end()) throw Error(ErrorCode::MissingStructure, id);
      out.push_back(&it->second);
    }
    return out;
  };
  return split_divergences(gather(train_ids), gather(eval_ids), atom_alpha, compound_alpha);
}

}  // namespace lsplit
