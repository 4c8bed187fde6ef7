#include "fnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace fnet::metrics {

std::vector<std::int32_t> labels_of(const Tensor<std::int32_t>& mask) {
  std::set<std::int32_t> s;
  for (i64 i = 0; i < mask.size(); ++i)
    if (mask[i] > 0) s.insert(mask[i]);
  return {s.begin(), s.end()};
}

DiceResult dice(const Tensor<std::int32_t>& a, const Tensor<std::int32_t>& b) {
  detail::check_same_shape(a, b, "dice");
  std::set<std::int32_t> labels;
  for (auto l : labels_of(a)) labels.insert(l);
  for (auto l : labels_of(b)) labels.insert(l);
  detail::check(!labels.empty(), "dice: no positive labels in either map");

  DiceResult out;
  for (std::int32_t l : labels) {
    i64 na = 0, nb = 0, ni = 0;
    for (i64 i = 0; i < a.size(); ++i) {
      const bool ia = a[i] == l, ib = b[i] == l;
      na += ia;
      nb += ib;
      ni += ia && ib;
    }
    out.per_label[l] = 2.0 * static_cast<double>(ni) / static_cast<double>(na + nb);
  }
  for (const auto& [l, d] : out.per_label) out.mean += d;
  out.mean /= static_cast<double>(out.per_label.size());
  return out;
}

namespace {

std::vector<std::vector<double>> boundary_points(const Tensor<std::int32_t>& m,
                                                 std::int32_t label) {
  const Shape& s = m.shape();
  const int rank = m.rank();
  const Shape strides = row_major_strides(s);
  std::vector<std::vector<double>> pts;
  std::vector<i64> coord(static_cast<std::size_t>(rank));
  for (i64 v = 0; v < m.size(); ++v) {
    if (m[v] != label) continue;
    for (int a = 0; a < rank; ++a) coord[static_cast<std::size_t>(a)] = (v / strides[a]) % s[a];
    bool boundary = false;
    for (int a = 0; a < rank && !boundary; ++a) {
      const i64 c = coord[static_cast<std::size_t>(a)];
      if (c == 0 || m[v - strides[a]] != label) boundary = true;
      if (!boundary && (c == s[a] - 1 || m[v + strides[a]] != label)) boundary = true;
    }
    if (boundary) {
      std::vector<double> p(static_cast<std::size_t>(rank));
      for (int a = 0; a < rank; ++a) p[static_cast<std::size_t>(a)] = static_cast<double>(coord[static_cast<std::size_t>(a)]);
      pts.push_back(std::move(p));
    }
  }
  return pts;
}

double directed_hd(const std::vector<std::vector<double>>& from,
                   const std::vector<std::vector<double>>& to) {
  double worst = 0;
  for (const auto& p : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to) {
      double d2 = 0;
      for (std::size_t a = 0; a < p.size(); ++a) {
        const double d = p[a] - q[a];
        d2 += d * d;
      }
      best = std::min(best, d2);
    }
    worst = std::max(worst, best);
  }
  return std::sqrt(worst);
}

}  // namespace

double hausdorff(const Tensor<std::int32_t>& a, const Tensor<std::int32_t>& b,
                 std::int32_t label) {
  detail::check_same_shape(a, b, "hausdorff");
  const auto pa = boundary_points(a, label);
  const auto pb = boundary_points(b, label);
  detail::check(!pa.empty(), "hausdorff: label " + std::to_string(label) + " empty in first map");
  detail::check(!pb.empty(), "hausdorff: label " + std::to_string(label) + " empty in second map");
  return std::max(directed_hd(pa, pb), directed_hd(pb, pa));
}

}  // namespace fnet::metrics
