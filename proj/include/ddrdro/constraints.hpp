#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "ddrdro/core.hpp"

namespace ddrdro {

enum class PairKind { must_link, cannot_link };

using IndexPair = std::pair<std::size_t, std::size_t>;

/// Unordered index pairs into a dataset, stored as (min, max), no duplicates.
struct PairSet {
  PairKind kind = PairKind::must_link;
  std::vector<IndexPair> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

struct Triplet {
  std::size_t i, j, k;
  friend bool operator==(const Triplet&, const Triplet&) = default;
};

/// Triplets (i, j, k): d(x_i, x_j) should be smaller than d(x_i, x_k).
struct TripletSet {
  std::vector<Triplet> triplets;

  std::size_t size() const { return triplets.size(); }
  bool empty() const { return triplets.empty(); }
};

/// Fraction of constraints trusted by the robust learners, in (0, 1].
class RobustLevel {
 public:
  explicit RobustLevel(double alpha);
  double alpha() const { return alpha_; }

  /// max(1, floor(alpha * n)); n must be positive.
  std::size_t floor_budget(std::size_t n) const;
  /// max(1, ceil(alpha * n)).
  std::size_t ceil_budget(std::size_t n) const;

 private:
  double alpha_;
};

struct PairSets {
  PairSet must_link;
  PairSet cannot_link;
};

/// For each i and each of its k Euclidean nearest neighbours j: the pair
/// goes to M when labels agree and to N otherwise. Distance ties break by
/// lower index; pairs are deduplicated as unordered.
PairSets build_pair_sets(const LabeledDataset& data, std::size_t k);

/// Anchored triplets: for each i, every j among its k nearest same-label
/// neighbours crossed with every k' among its k nearest other-label neighbours.
TripletSet build_triplets(const LabeledDataset& data, std::size_t k);

/// Hinge value (d^2(x_i, x_j) - d^2(x_i, x_k) + 1)_+ of one triplet.
double triplet_hinge(const MetricMatrix& metric, const LabeledDataset& data, const Triplet& t);

/// Indices (into R, ascending) of the floor(alpha |R|) largest hinge values.
/// Ties break toward lower index.
std::vector<std::size_t> top_relative_indices(std::span<const double> hinges, const RobustLevel& level);

TripletSet select_top_relative(const MetricMatrix& metric, const TripletSet& r, const LabeledDataset& data,
                               const RobustLevel& level);

struct AbsoluteSelection {
  std::vector<std::size_t> must_link;    // indices into M, ascending
  std::vector<std::size_t> cannot_link;  // indices into N, ascending
};

/// M_alpha: floor(alpha |M|) largest d^2 in M. N_alpha: ceil(alpha |N|) smallest d^2 in N.
AbsoluteSelection select_pairs_absolute_indices(std::span<const double> m_dist, std::span<const double> n_dist,
                                                const RobustLevel& level);

PairSets select_pairs_absolute(const MetricMatrix& metric, const PairSet& m, const PairSet& n,
                               const LabeledDataset& data, const RobustLevel& level);

double pair_distance_sq(const MetricMatrix& metric, const LabeledDataset& data, const IndexPair& p);

/// CSV export: columns i,j,k,kind (k empty for pairs; kind M, N or R).
void write_constraints_csv(std::ostream& os, const PairSets& pairs, const TripletSet& triplets);

}  // namespace ddrdro
