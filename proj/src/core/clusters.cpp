#include "cgseg/clusters.hpp"

#include "cgseg/error.hpp"
#include "cgseg/hdbscan.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <map>
#include <tuple>

namespace cgseg {

bool operator==(const GlobalClusters& a, const GlobalClusters& b) {
    auto same = [](const std::vector<GlobalCluster>& x, const std::vector<GlobalCluster>& y) {
        if (x.size() != y.size()) return false;
        for (std::size_t k = 0; k < x.size(); ++k) {
            if (x[k].id != y[k].id || x[k].member_count != y[k].member_count ||
                x[k].representative.size() != y[k].representative.size() ||
                x[k].representative != y[k].representative) {
                return false;
            }
        }
        return true;
    };
    return same(a.coarse, b.coarse) && same(a.fine, b.fine);
}

std::vector<PooledSegmentFeature> pool_segment_features(const std::vector<const RenderBuffers*>& renders,
                                                        const std::vector<const TwoLevelMask*>& masks,
                                                        FeatureLayout layout) {
    if (renders.size() != masks.size()) fail(ErrorCode::ContractViolation, "one render per mask is required");
    std::vector<PooledSegmentFeature> out;
    for (std::size_t v = 0; v < renders.size(); ++v) {
        const RenderBuffers& rb = *renders[v];
        const TwoLevelMask& mask = *masks[v];
        if (rb.width != mask.width || rb.height != mask.height) {
            fail(ErrorCode::ContractViolation, fmt::format("view {}: render and mask sizes differ", mask.view_id));
        }
        for (Level level : kLevels) {
            const int dim = level_dim(level, layout);
            std::map<std::int32_t, std::pair<Eigen::VectorXd, std::uint32_t>> sums;
            const auto& ids = mask.at(level);
            for (std::size_t p = 0; p < ids.size(); ++p) {
                if (ids[p] == 0) continue;
                auto [it, inserted] = sums.try_emplace(ids[p], Eigen::VectorXd::Zero(dim), 0u);
                it->second.first += rb.level_at(p, level, layout).cast<double>();
                ++it->second.second;
            }
            for (auto& [id, acc] : sums) {
                if (acc.second < kMinPooledPixels) continue;
                out.push_back({level, mask.view_id, id, acc.first / static_cast<double>(acc.second), acc.second});
            }
        }
    }
    return out;
}

int min_cluster_size_for_views(std::size_t view_count) {
    return std::max(2, static_cast<int>(std::ceil(0.2 * static_cast<double>(view_count) - 1e-9)));
}

ClusterLevelResult cluster_level(const std::vector<PooledSegmentFeature>& pooled, Level level, FeatureLayout layout,
                                 double epsilon, int min_cluster_size) {
    ClusterLevelResult result;
    result.labels.assign(pooled.size(), 0);
    const int dim = level_dim(level, layout);
    const double radius = level_radius(level, layout);

    std::vector<std::size_t> members;
    for (std::size_t k = 0; k < pooled.size(); ++k) {
        if (pooled[k].level == level) members.push_back(k);
    }
    if (members.size() < static_cast<std::size_t>(std::max(2, min_cluster_size))) {
        spdlog::warn("{} clustering: {} pooled segments, fewer than min_cluster_size {}", to_string(level),
                     members.size(), min_cluster_size);
        return result;
    }

    Eigen::MatrixXd points(static_cast<Eigen::Index>(members.size()), dim);
    for (std::size_t r = 0; r < members.size(); ++r) {
        const Eigen::VectorXd& f = pooled[members[r]].mean_feature;
        if (f.size() != dim) fail(ErrorCode::ContractViolation, "pooled feature dimension does not match the level");
        const double norm = f.norm();
        points.row(static_cast<Eigen::Index>(r)) = norm > 0.0 ? Eigen::VectorXd(f * (radius / norm)) : f;
    }
    const auto raw = hdbscan(points, {min_cluster_size, min_cluster_size, epsilon});

    struct Group {
        std::vector<std::size_t> rows;
        std::tuple<std::uint32_t, std::int32_t> first_member{~0u, 0};
    };
    std::map<std::uint32_t, Group> groups;
    for (std::size_t r = 0; r < members.size(); ++r) {
        if (raw[r] == 0) continue;
        Group& g = groups[raw[r]];
        g.rows.push_back(r);
        const auto key = std::make_tuple(pooled[members[r]].view_id, pooled[members[r]].segment_id);
        g.first_member = std::min(g.first_member, key);
    }
    std::vector<Group*> order;
    for (auto& [label, g] : groups) order.push_back(&g);
    std::sort(order.begin(), order.end(), [](const Group* a, const Group* b) {
        if (a->rows.size() != b->rows.size()) return a->rows.size() > b->rows.size();
        return a->first_member < b->first_member;
    });

    for (std::size_t c = 0; c < order.size(); ++c) {
        const auto id = static_cast<std::uint32_t>(c + 1);
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
        for (std::size_t r : order[c]->rows) {
            mean += points.row(static_cast<Eigen::Index>(r)).transpose();
            result.labels[members[r]] = id;
        }
        const double norm = mean.norm();
        if (norm > 0.0) mean *= radius / norm;
        result.clusters.push_back({id, static_cast<std::uint32_t>(order[c]->rows.size()), mean.cast<float>()});
    }
    if (result.clusters.empty()) {
        spdlog::warn("{} clustering: every pooled segment was classified as noise", to_string(level));
    }
    return result;
}

} // namespace cgseg
