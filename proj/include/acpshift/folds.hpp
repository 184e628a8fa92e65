#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "acpshift/data.hpp"
#include "acpshift/errors.hpp"
#include "acpshift/rng.hpp"

namespace acpshift {

struct FoldPlan {
  int K = 0;
  std::vector<int> assignment;  // observation index -> fold id in [0, K)
  std::uint64_t seed = 0;
  std::vector<int> fold_sizes;

  std::vector<int> fold_indices(int k) const {
    std::vector<int> idx;
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] == k) idx.push_back(static_cast<int>(i));
    return idx;
  }
  std::vector<int> complement_indices(int k) const {
    std::vector<int> idx;
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] != k) idx.push_back(static_cast<int>(i));
    return idx;
  }
};

// Stratified K-fold partition: labeled and unlabeled units are shuffled
// separately and dealt into folds of size floor or ceil of (count / K).
inline FoldPlan make_folds(const Dataset& data, int K, std::uint64_t seed) {
  if (K < 2) throw KTooSmall("K must be at least 2, got " + std::to_string(K));
  if (K > std::min(data.n_labeled, data.n_unlabeled))
    throw KTooLarge("K = " + std::to_string(K) + " exceeds min(n, N) = " +
                    std::to_string(std::min(data.n_labeled, data.n_unlabeled)));

  std::vector<int> labeled, unlabeled;
  for (int i = 0; i < data.size(); ++i)
    (data.obs[i].r == 1 ? labeled : unlabeled).push_back(i);

  Rng rng(derive_seed(seed, {tag("folds")}));
  auto shuffle = [&rng](std::vector<int>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = rng.uniform_int(i);
      std::swap(v[i - 1], v[j]);
    }
  };
  shuffle(labeled);
  shuffle(unlabeled);

  FoldPlan plan;
  plan.K = K;
  plan.seed = seed;
  plan.assignment.assign(data.size(), -1);
  plan.fold_sizes.assign(K, 0);
  auto deal = [&](const std::vector<int>& stratum) {
    const int count = static_cast<int>(stratum.size());
    const int base = count / K, extra = count % K;
    int pos = 0;
    for (int k = 0; k < K; ++k) {
      const int take = base + (k < extra ? 1 : 0);
      for (int t = 0; t < take; ++t, ++pos) {
        plan.assignment[stratum[pos]] = k;
        ++plan.fold_sizes[k];
      }
    }
  };
  deal(labeled);
  deal(unlabeled);
  return plan;
}

}  // namespace acpshift
