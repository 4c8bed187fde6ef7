#pragma once

#include <map>

#include "fnet/deform.hpp"
#include "fnet/tensor.hpp"

namespace fnet::metrics {

/// Sorted positive labels present in a label map.
std::vector<std::int32_t> labels_of(const Tensor<std::int32_t>& mask);

struct DiceResult {
  std::map<std::int32_t, double> per_label;
  double mean = 0;
};

/// Per-label Dice overlap 2|A^B| / (|A| + |B|) over the positive labels
/// present in either map; labels absent from both are excluded.
DiceResult dice(const Tensor<std::int32_t>& a, const Tensor<std::int32_t>& b);

/// Classic (max-min) symmetric Hausdorff distance between the boundary voxel
/// centres of one label. A voxel is boundary if it carries the label and has
/// a face neighbour (or the image border) without it. Throws if the label is
/// empty in either map.
double hausdorff(const Tensor<std::int32_t>& a, const Tensor<std::int32_t>& b, std::int32_t label);

/// Nearest-neighbour label warp (forwarding to the deform kernel).
template <class R>
Tensor<std::int32_t> warp_labels(const Tensor<std::int32_t>& labels, const Tensor<R>& field) {
  return deform::warp_nn(labels, field);
}

}  // namespace fnet::metrics
