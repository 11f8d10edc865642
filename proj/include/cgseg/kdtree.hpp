#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace cgseg {

/// Exact k-nearest-neighbour index over 3D points. Distances are evaluated in
/// double; equal distances resolve to the lower index.
class KdTree {
public:
    explicit KdTree(std::vector<Eigen::Vector3f> points);

    std::size_t size() const { return points_.size(); }
    const std::vector<Eigen::Vector3f>& points() const { return points_; }

    /// k nearest neighbours of point `query`, excluding `query` itself, nearest first.
    std::vector<std::uint32_t> knn(std::uint32_t query, int k) const;
    /// k nearest neighbours of every point, flattened (N·k).
    std::vector<std::uint32_t> knn_all(int k) const;

private:
    struct Node {
        std::uint32_t begin, end; // range in order_
        std::int32_t left = -1, right = -1;
        int axis = 0;
        float split = 0.0f;
    };

    std::int32_t build(std::uint32_t begin, std::uint32_t end);

    std::vector<Eigen::Vector3f> points_;
    std::vector<std::uint32_t> order_;
    std::vector<Node> nodes_;
};

} // namespace cgseg
