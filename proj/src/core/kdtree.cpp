#include "cgseg/kdtree.hpp"

#include "cgseg/error.hpp"

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>

#include <algorithm>
#include <fmt/format.h>
#include <numeric>

namespace cgseg {

namespace {

constexpr std::uint32_t kLeafSize = 8;

struct Candidate {
    double d2;
    std::uint32_t index;
    bool operator<(const Candidate& o) const { return d2 != o.d2 ? d2 < o.d2 : index < o.index; }
};

/// Fixed-capacity sorted list of the best candidates so far.
class BestK {
public:
    explicit BestK(int k) : k_(static_cast<std::size_t>(k)) { items_.reserve(k_ + 1); }

    bool full() const { return items_.size() == k_; }
    double worst() const { return items_.back().d2; }

    void offer(const Candidate& c) {
        if (full() && !(c < items_.back())) return;
        items_.insert(std::upper_bound(items_.begin(), items_.end(), c), c);
        if (items_.size() > k_) items_.pop_back();
    }

    const std::vector<Candidate>& items() const { return items_; }

private:
    std::size_t k_;
    std::vector<Candidate> items_;
};

double dist2(const Eigen::Vector3f& a, const Eigen::Vector3f& b) {
    return (a.cast<double>() - b.cast<double>()).squaredNorm();
}

} // namespace

KdTree::KdTree(std::vector<Eigen::Vector3f> points) : points_(std::move(points)) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    if (!points_.empty()) {
        nodes_.reserve(2 * points_.size() / kLeafSize + 2);
        build(0, static_cast<std::uint32_t>(points_.size()));
    }
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({begin, end});
    if (end - begin <= kLeafSize) return id;

    Eigen::Vector3f lo = points_[order_[begin]], hi = lo;
    for (std::uint32_t k = begin; k < end; ++k) {
        lo = lo.cwiseMin(points_[order_[k]]);
        hi = hi.cwiseMax(points_[order_[k]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) { return points_[a][axis] < points_[b][axis]; });
    nodes_[static_cast<std::size_t>(id)].axis = axis;
    nodes_[static_cast<std::size_t>(id)].split = points_[order_[mid]][axis];
    const std::int32_t left = build(begin, mid);
    const std::int32_t right = build(mid, end);
    nodes_[static_cast<std::size_t>(id)].left = left;
    nodes_[static_cast<std::size_t>(id)].right = right;
    return id;
}

std::vector<std::uint32_t> KdTree::knn(std::uint32_t query, int k) const {
    if (k < 1 || static_cast<std::size_t>(k) + 1 > points_.size()) {
        fail(ErrorCode::Precondition, fmt::format("knn needs at least k+1 = {} points, have {}", k + 1, points_.size()));
    }
    if (query >= points_.size()) fail(ErrorCode::ContractViolation, "knn query index out of range");
    const Eigen::Vector3f& q = points_[query];
    BestK best(k);
    // Explicit stack of (node, lower bound on squared distance).
    std::vector<std::pair<std::int32_t, double>> stack{{0, 0.0}};
    while (!stack.empty()) {
        const auto [id, bound] = stack.back();
        stack.pop_back();
        if (best.full() && bound > best.worst()) continue;
        const Node& node = nodes_[static_cast<std::size_t>(id)];
        if (node.left < 0) {
            for (std::uint32_t j = node.begin; j < node.end; ++j) {
                const std::uint32_t idx = order_[j];
                if (idx != query) best.offer({dist2(q, points_[idx]), idx});
            }
            continue;
        }
        const double diff = static_cast<double>(q[node.axis]) - static_cast<double>(node.split);
        const double plane = diff * diff;
        // Points equal to the split may sit on either side, so the far side
        // is bounded by the plane distance and the near side by the parent bound.
        const std::int32_t near = diff < 0.0 ? node.left : node.right;
        const std::int32_t far = diff < 0.0 ? node.right : node.left;
        stack.push_back({far, std::max(bound, plane)});
        stack.push_back({near, bound});
    }
    std::vector<std::uint32_t> out;
    out.reserve(static_cast<std::size_t>(k));
    for (const auto& c : best.items()) out.push_back(c.index);
    return out;
}

std::vector<std::uint32_t> KdTree::knn_all(int k) const {
    const std::size_t n = points_.size();
    std::vector<std::uint32_t> out(n * static_cast<std::size_t>(k));
    tbb::parallel_for(tbb::blocked_range<std::size_t>(0, n, 256), [&](const auto& range) {
        for (std::size_t i = range.begin(); i != range.end(); ++i) {
            const auto nn = knn(static_cast<std::uint32_t>(i), k);
            std::copy(nn.begin(), nn.end(), out.begin() + static_cast<std::ptrdiff_t>(i * static_cast<std::size_t>(k)));
        }
    });
    return out;
}

} // namespace cgseg
