#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace cgseg {

struct HdbscanParams {
    int min_cluster_size = 5;
    int min_samples = 0; // 0 → min_cluster_size; the point itself counts toward it
    double epsilon = 0.0;
};

/// Flat labels from HDBSCAN over the rows of `points` (Euclidean): 0 marks
/// noise, clusters are numbered 1..C in order of discovery in the condensed tree.
///
/// Mutual-reachability MST, single-linkage hierarchy (merges at equal distance
/// collapse into one multi-way split), condensed tree with
/// `min_cluster_size`, excess-of-mass selection (never the root), then
/// epsilon merging of selected clusters born below `epsilon`. When the whole
/// set is within `epsilon` of itself along the MST it forms one cluster.
std::vector<std::uint32_t> hdbscan(const Eigen::MatrixXd& points, const HdbscanParams& params);

/// Mutual-reachability distances (n×n) with core distance = distance to the
/// k-th nearest point counting the point itself.
Eigen::MatrixXd mutual_reachability(const Eigen::MatrixXd& points, int min_samples);

} // namespace cgseg
