#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <set>
#include <vector>

namespace cgseg::testing {

/// Exhaustive HDBSCAN over the full mutual-reachability graph. The cluster
/// tree is built top-down from level sets (connected components of the edges
/// strictly below each distinct distance), never from an MST or a binary
/// linkage, so ties merge simultaneously. Returns member sets of the flat
/// clustering (noise omitted).
std::set<std::set<std::uint32_t>> exhaustive_hdbscan(const Eigen::MatrixXd& points, int min_cluster_size,
                                                     int min_samples, double epsilon);

/// Member sets of a label vector (0 = noise).
std::set<std::set<std::uint32_t>> member_sets(const std::vector<std::uint32_t>& labels);

} // namespace cgseg::testing
