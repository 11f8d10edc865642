#include "cgseg/hdbscan.hpp"

#include "cgseg/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

namespace cgseg {

namespace {

constexpr double kMinDistance = 1e-12;

struct Edge {
    std::uint32_t a, b;
    double w;
};

std::vector<Edge> prim_mst(const Eigen::MatrixXd& mrd) {
    const auto n = static_cast<std::size_t>(mrd.rows());
    std::vector<Edge> edges;
    if (n < 2) return edges;
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    std::vector<std::uint32_t> from(n, 0);
    std::vector<bool> in_tree(n, false);
    std::uint32_t current = 0;
    in_tree[0] = true;
    for (std::size_t step = 1; step < n; ++step) {
        std::uint32_t next = 0;
        double next_w = std::numeric_limits<double>::infinity();
        for (std::uint32_t j = 0; j < n; ++j) {
            if (in_tree[j]) continue;
            const double d = mrd(current, j);
            if (d < best[j]) {
                best[j] = d;
                from[j] = current;
            }
            if (best[j] < next_w) {
                next_w = best[j];
                next = j;
            }
        }
        edges.push_back({from[next], next, next_w});
        in_tree[next] = true;
        current = next;
    }
    return edges;
}

struct UnionFind {
    std::vector<std::uint32_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0u); }
    std::uint32_t find(std::uint32_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
};

/// Row of the single-linkage hierarchy: node n+k merges `left` and `right`.
struct Merge {
    std::uint32_t left, right;
    double distance;
    std::uint32_t size;
};

std::vector<Merge> single_linkage(std::vector<Edge> edges, std::size_t n) {
    std::stable_sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) { return x.w < y.w; });
    UnionFind uf(2 * n);
    std::vector<std::uint32_t> size(2 * n, 1);
    std::vector<Merge> merges;
    merges.reserve(n - 1);
    for (const Edge& e : edges) {
        const std::uint32_t ra = uf.find(e.a), rb = uf.find(e.b);
        const auto node = static_cast<std::uint32_t>(n + merges.size());
        merges.push_back({ra, rb, e.w, size[ra] + size[rb]});
        size[node] = size[ra] + size[rb];
        uf.parent[ra] = uf.parent[rb] = node;
    }
    return merges;
}

/// Condensed-tree row: `child` is a point (< n) or a cluster label (≥ n).
struct CondensedRow {
    std::uint32_t parent, child;
    double lambda;
    std::uint32_t size;
};

std::vector<CondensedRow> condense(const std::vector<Merge>& merges, std::size_t n, std::uint32_t min_size) {
    const auto root = static_cast<std::uint32_t>(2 * n - 2);
    auto size_of = [&](std::uint32_t node) { return node < n ? 1u : merges[node - n].size; };
    auto lambda_of = [](double d) { return d > 0.0 ? 1.0 / d : std::numeric_limits<double>::infinity(); };

    std::vector<CondensedRow> rows;
    std::vector<std::uint32_t> relabel(2 * n - 1, 0);
    auto next_label = static_cast<std::uint32_t>(n);
    relabel[root] = next_label++;

    // Emits every leaf under `node` as dropping out of `parent` at `lambda`.
    auto drop_points = [&](std::uint32_t node, std::uint32_t parent, double lambda) {
        std::vector<std::uint32_t> stack{node};
        while (!stack.empty()) {
            const std::uint32_t x = stack.back();
            stack.pop_back();
            if (x < n) {
                rows.push_back({parent, x, lambda, 1});
            } else {
                stack.push_back(merges[x - n].right);
                stack.push_back(merges[x - n].left);
            }
        }
    };

    // Top-down in breadth-first order, as in the reference condensation.
    std::vector<std::uint32_t> queue{root};
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const std::uint32_t node = queue[head];
        if (node < n) continue;
        const Merge& m = merges[node - n];
        const double lambda = lambda_of(m.distance);
        const std::uint32_t label = relabel[node];
        // Merges at exactly this distance happen at once: gather every subtree
        // joined at this level so ties split simultaneously.
        std::vector<std::uint32_t> parts, stack{m.right, m.left};
        while (!stack.empty()) {
            const std::uint32_t x = stack.back();
            stack.pop_back();
            if (x >= n && merges[x - n].distance == m.distance) {
                stack.push_back(merges[x - n].right);
                stack.push_back(merges[x - n].left);
            } else {
                parts.push_back(x);
            }
        }
        const auto big_count = std::count_if(parts.begin(), parts.end(), [&](std::uint32_t x) { return size_of(x) >= min_size; });
        for (std::uint32_t c : parts) {
            if (size_of(c) < min_size) {
                drop_points(c, label, lambda);
            } else if (big_count >= 2) {
                relabel[c] = next_label++;
                rows.push_back({label, relabel[c], lambda, size_of(c)});
                queue.push_back(c);
            } else {
                relabel[c] = label;
                queue.push_back(c);
            }
        }
    }
    return rows;
}

} // namespace

Eigen::MatrixXd mutual_reachability(const Eigen::MatrixXd& points, int min_samples) {
    const Eigen::Index n = points.rows();
    Eigen::MatrixXd dist(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        dist(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double d = std::max(kMinDistance, (points.row(i) - points.row(j)).norm());
            dist(i, j) = dist(j, i) = d;
        }
    }
    const Eigen::Index k = std::min<Eigen::Index>(std::max(1, min_samples), n);
    Eigen::VectorXd core(n);
    std::vector<double> row(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) row[static_cast<std::size_t>(j)] = dist(i, j);
        std::nth_element(row.begin(), row.begin() + (k - 1), row.end());
        core[i] = row[static_cast<std::size_t>(k - 1)];
    }
    Eigen::MatrixXd mrd(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) mrd(i, j) = i == j ? 0.0 : std::max({dist(i, j), core[i], core[j]});
    }
    return mrd;
}

std::vector<std::uint32_t> hdbscan(const Eigen::MatrixXd& points, const HdbscanParams& params) {
    if (params.min_cluster_size < 2) fail(ErrorCode::Precondition, "min_cluster_size must be at least 2");
    const auto n = static_cast<std::size_t>(points.rows());
    std::vector<std::uint32_t> labels(n, 0);
    if (n < static_cast<std::size_t>(params.min_cluster_size)) return labels;

    const int min_samples = params.min_samples > 0 ? params.min_samples : params.min_cluster_size;
    const std::vector<Edge> mst = prim_mst(mutual_reachability(points, min_samples));

    double max_edge = 0.0;
    for (const Edge& e : mst) max_edge = std::max(max_edge, e.w);
    if (max_edge <= params.epsilon) {
        std::fill(labels.begin(), labels.end(), 1u);
        return labels;
    }

    const auto merges = single_linkage(mst, n);
    const auto tree = condense(merges, n, static_cast<std::uint32_t>(params.min_cluster_size));
    const auto root = static_cast<std::uint32_t>(n);

    // Cluster bookkeeping indexed by label - n.
    std::uint32_t max_label = root;
    for (const auto& r : tree) max_label = std::max(max_label, std::max(r.parent, r.child));
    const std::size_t C = max_label - root + 1;
    std::vector<double> birth(C, 0.0), stability(C, 0.0);
    std::vector<std::int64_t> parent_of(C, -1);
    std::vector<std::vector<std::uint32_t>> children(C);
    for (const auto& r : tree) {
        if (r.child >= root) {
            birth[r.child - root] = r.lambda;
            parent_of[r.child - root] = r.parent;
            children[r.parent - root].push_back(r.child);
        }
    }
    for (const auto& r : tree) {
        const double lambda = std::isinf(r.lambda) ? 1.0 / kMinDistance : r.lambda;
        const double b = std::isinf(birth[r.parent - root]) ? 1.0 / kMinDistance : birth[r.parent - root];
        stability[r.parent - root] += (lambda - b) * r.size;
    }

    // Excess of mass, leaves first (children always carry larger labels).
    std::vector<bool> selected(C, false);
    for (std::size_t c = C; c-- > 1;) {
        double subtree = 0.0;
        for (std::uint32_t ch : children[c]) subtree += stability[ch - root];
        if (subtree > stability[c]) {
            stability[c] = subtree;
        } else {
            selected[c] = true;
            std::vector<std::uint32_t> stack(children[c].begin(), children[c].end());
            while (!stack.empty()) {
                const std::uint32_t x = stack.back();
                stack.pop_back();
                selected[x - root] = false;
                stack.insert(stack.end(), children[x - root].begin(), children[x - root].end());
            }
        }
    }

    if (params.epsilon > 0.0) {
        std::vector<std::uint32_t> leaves;
        for (std::size_t c = 1; c < C; ++c) {
            if (selected[c]) leaves.push_back(static_cast<std::uint32_t>(c + root));
        }
        std::set<std::uint32_t> chosen, processed;
        for (std::uint32_t leaf : leaves) {
            const double eps = 1.0 / birth[leaf - root];
            if (eps < params.epsilon) {
                if (processed.count(leaf)) continue;
                // Climb while the parent was itself born below epsilon.
                std::uint32_t node = leaf;
                while (true) {
                    const auto parent = static_cast<std::uint32_t>(parent_of[node - root]);
                    if (parent == root) break;
                    node = parent;
                    if (1.0 / birth[node - root] > params.epsilon) break;
                }
                chosen.insert(node);
                std::vector<std::uint32_t> stack(children[node - root].begin(), children[node - root].end());
                while (!stack.empty()) {
                    const std::uint32_t x = stack.back();
                    stack.pop_back();
                    processed.insert(x);
                    stack.insert(stack.end(), children[x - root].begin(), children[x - root].end());
                }
            } else {
                chosen.insert(leaf);
            }
        }
        std::fill(selected.begin(), selected.end(), false);
        for (std::uint32_t c : chosen) selected[c - root] = true;
    }

    // Points take the label of the selected cluster whose subtree holds them.
    std::vector<std::uint32_t> flat(C, 0);
    std::uint32_t next = 1;
    for (std::size_t c = 1; c < C; ++c) {
        if (selected[c]) flat[c] = next++;
    }
    std::vector<std::uint32_t> owner(C, 0);
    for (std::size_t c = 1; c < C; ++c) {
        // Parents precede children in label order.
        owner[c] = flat[c] ? flat[c] : owner[static_cast<std::size_t>(parent_of[c]) - root];
    }
    for (const auto& r : tree) {
        if (r.child < root) labels[r.child] = owner[r.parent - root];
    }
    return labels;
}

} // namespace cgseg
