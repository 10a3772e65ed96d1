#include "ddrdro/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>

#include "ddrdro/errors.hpp"

namespace ddrdro {

namespace {

// Small slack so alpha * n that is an integer in exact arithmetic is not
// pushed across by rounding (0.9 * 10 must budget 9).
constexpr double kBudgetSlack = 1e-9;

void check_k(const LabeledDataset& data, std::size_t k) {
  if (data.size() < 2) throw InvalidArgument("k-NN constraints need at least two samples");
  if (k == 0) throw InvalidArgument("k must be positive");
  if (k >= data.size()) throw InvalidArgument("k must be smaller than the number of samples");
}

// Neighbours of i sorted by (squared Euclidean distance, index), optionally
// filtered by a label predicate.
template <typename Pred>
std::vector<std::size_t> sorted_neighbours(const LabeledDataset& data, std::size_t i, Pred keep) {
  const Matrix& f = data.features();
  std::vector<std::pair<double, std::size_t>> cand;
  cand.reserve(data.size());
  for (std::size_t j = 0; j < data.size(); ++j) {
    if (j == i || !keep(j)) continue;
    const double d2 = (f.row(static_cast<Eigen::Index>(i)) - f.row(static_cast<Eigen::Index>(j))).squaredNorm();
    cand.emplace_back(d2, j);
  }
  std::sort(cand.begin(), cand.end());
  std::vector<std::size_t> out;
  out.reserve(cand.size());
  for (const auto& c : cand) out.push_back(c.second);
  return out;
}

template <typename Value>
std::vector<std::size_t> ranked(std::span<const Value> values, bool descending) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return descending ? values[a] > values[b] : values[a] < values[b];
  });
  return order;
}

std::vector<std::size_t> take_sorted(std::vector<std::size_t> order, std::size_t count) {
  order.resize(std::min(count, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace

RobustLevel::RobustLevel(double alpha) : alpha_(alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in (0, 1]");
}

std::size_t RobustLevel::floor_budget(std::size_t n) const {
  const auto b = static_cast<std::size_t>(std::floor(alpha_ * static_cast<double>(n) + kBudgetSlack));
  return std::clamp<std::size_t>(b, 1, std::max<std::size_t>(n, 1));
}

std::size_t RobustLevel::ceil_budget(std::size_t n) const {
  const auto b = static_cast<std::size_t>(std::ceil(alpha_ * static_cast<double>(n) - kBudgetSlack));
  return std::clamp<std::size_t>(b, 1, std::max<std::size_t>(n, 1));
}

PairSets build_pair_sets(const LabeledDataset& data, std::size_t k) {
  check_k(data, k);
  PairSets out;
  out.must_link.kind = PairKind::must_link;
  out.cannot_link.kind = PairKind::cannot_link;
  std::set<IndexPair> seen;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto nn = sorted_neighbours(data, i, [](std::size_t) { return true; });
    for (std::size_t r = 0; r < k; ++r) {
      const std::size_t j = nn[r];
      const IndexPair p{std::min(i, j), std::max(i, j)};
      if (!seen.insert(p).second) continue;
      (data.y(i) == data.y(j) ? out.must_link : out.cannot_link).pairs.push_back(p);
    }
  }
  return out;
}

TripletSet build_triplets(const LabeledDataset& data, std::size_t k) {
  check_k(data, k);
  TripletSet out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int yi = data.y(i);
    auto same = sorted_neighbours(data, i, [&](std::size_t j) { return data.y(j) == yi; });
    auto other = sorted_neighbours(data, i, [&](std::size_t j) { return data.y(j) != yi; });
    same.resize(std::min(k, same.size()));
    other.resize(std::min(k, other.size()));
    for (std::size_t j : same)
      for (std::size_t l : other) out.triplets.push_back({i, j, l});
  }
  return out;
}

double pair_distance_sq(const MetricMatrix& metric, const LabeledDataset& data, const IndexPair& p) {
  return mahalanobis_sq(metric, data.x(p.first), data.x(p.second));
}

double triplet_hinge(const MetricMatrix& metric, const LabeledDataset& data, const Triplet& t) {
  const Vector xi = data.x(t.i);
  const double v = mahalanobis_sq(metric, xi, data.x(t.j)) - mahalanobis_sq(metric, xi, data.x(t.k)) + 1.0;
  return v > 0.0 ? v : 0.0;
}

std::vector<std::size_t> top_relative_indices(std::span<const double> hinges, const RobustLevel& level) {
  if (hinges.empty()) throw InvalidArgument("relative constraint set is empty");
  return take_sorted(ranked(hinges, true), level.floor_budget(hinges.size()));
}

TripletSet select_top_relative(const MetricMatrix& metric, const TripletSet& r, const LabeledDataset& data,
                               const RobustLevel& level) {
  if (r.empty()) throw InvalidArgument("relative constraint set is empty");
  std::vector<double> h;
  h.reserve(r.size());
  for (const auto& t : r.triplets) h.push_back(triplet_hinge(metric, data, t));
  TripletSet out;
  for (std::size_t idx : top_relative_indices(h, level)) out.triplets.push_back(r.triplets[idx]);
  return out;
}

AbsoluteSelection select_pairs_absolute_indices(std::span<const double> m_dist, std::span<const double> n_dist,
                                                const RobustLevel& level) {
  if (m_dist.empty()) throw InvalidArgument("must-link set is empty");
  if (n_dist.empty()) throw InvalidArgument("cannot-link set is empty");
  return {take_sorted(ranked(m_dist, true), level.floor_budget(m_dist.size())),
          take_sorted(ranked(n_dist, false), level.ceil_budget(n_dist.size()))};
}

PairSets select_pairs_absolute(const MetricMatrix& metric, const PairSet& m, const PairSet& n,
                               const LabeledDataset& data, const RobustLevel& level) {
  std::vector<double> dm, dn;
  for (const auto& p : m.pairs) dm.push_back(pair_distance_sq(metric, data, p));
  for (const auto& p : n.pairs) dn.push_back(pair_distance_sq(metric, data, p));
  const auto sel = select_pairs_absolute_indices(dm, dn, level);
  PairSets out;
  out.must_link.kind = m.kind;
  out.cannot_link.kind = n.kind;
  for (std::size_t idx : sel.must_link) out.must_link.pairs.push_back(m.pairs[idx]);
  for (std::size_t idx : sel.cannot_link) out.cannot_link.pairs.push_back(n.pairs[idx]);
  return out;
}

void write_constraints_csv(std::ostream& os, const PairSets& pairs, const TripletSet& triplets) {
  os << "i,j,k,kind\n";
  for (const auto& p : pairs.must_link.pairs) os << p.first << ',' << p.second << ",,M\n";
  for (const auto& p : pairs.cannot_link.pairs) os << p.first << ',' << p.second << ",,N\n";
  for (const auto& t : triplets.triplets) os << t.i << ',' << t.j << ',' << t.k << ",R\n";
}

}  // namespace ddrdro
