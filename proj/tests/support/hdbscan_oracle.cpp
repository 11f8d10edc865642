#include "hdbscan_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>

namespace cgseg::testing {

namespace {

constexpr double kFloor = 1e-12;

struct Node {
    std::vector<std::uint32_t> points; // at birth
    double birth = 0.0;                // lambda
    double stability = 0.0;
    int parent = -1;
    std::vector<int> children;
};

double lambda_of(double d) { return 1.0 / d; }

} // namespace

std::set<std::set<std::uint32_t>> member_sets(const std::vector<std::uint32_t>& labels) {
    std::map<std::uint32_t, std::set<std::uint32_t>> by;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0) by[labels[i]].insert(static_cast<std::uint32_t>(i));
    }
    std::set<std::set<std::uint32_t>> out;
    for (auto& [_, m] : by) out.insert(m);
    return out;
}

std::set<std::set<std::uint32_t>> exhaustive_hdbscan(const Eigen::MatrixXd& points, int min_cluster_size,
                                                     int min_samples, double epsilon) {
    const auto n = static_cast<std::size_t>(points.rows());
    if (n < static_cast<std::size_t>(min_cluster_size)) return {};
    const int ms = min_samples > 0 ? min_samples : min_cluster_size;

    // Pairwise distances and core distances (self included in the count).
    std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            d[i][j] = i == j ? 0.0 : std::max(kFloor, (points.row(static_cast<Eigen::Index>(i)) - points.row(static_cast<Eigen::Index>(j))).norm());
        }
    }
    std::vector<double> core(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row = d[i];
        std::sort(row.begin(), row.end());
        core[i] = row[static_cast<std::size_t>(std::min<int>(ms, static_cast<int>(n))) - 1];
    }
    std::vector<std::vector<double>> mr(n, std::vector<double>(n, 0.0));
    std::vector<double> levels;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            mr[i][j] = std::max({d[i][j], core[i], core[j]});
            if (i < j) levels.push_back(mr[i][j]);
        }
    }
    std::sort(levels.begin(), levels.end(), std::greater<>());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

    // Everything within epsilon along the graph: one cluster. The largest
    // MST edge equals the smallest level at which the graph is connected.
    auto components = [&](const std::vector<std::uint32_t>& members, double below) {
        std::vector<std::vector<std::uint32_t>> comps;
        std::vector<char> seen(n, 0), in(n, 0);
        for (auto m : members) in[m] = 1;
        for (auto s : members) {
            if (seen[s]) continue;
            std::vector<std::uint32_t> comp{s}, stack{s};
            seen[s] = 1;
            while (!stack.empty()) {
                const auto x = stack.back();
                stack.pop_back();
                for (auto y : members) {
                    if (!seen[y] && in[y] && mr[x][y] < below) {
                        seen[y] = 1;
                        comp.push_back(y);
                        stack.push_back(y);
                    }
                }
            }
            comps.push_back(std::move(comp));
        }
        return comps;
    };
    std::vector<std::uint32_t> all(n);
    for (std::uint32_t i = 0; i < n; ++i) all[i] = i;
    {
        // Smallest level L such that edges ≤ L connect everything.
        double connect = 0.0;
        for (double L : levels) {
            if (components(all, std::nextafter(L, std::numeric_limits<double>::infinity())).size() == 1) connect = L;
        }
        if (connect <= epsilon) return {std::set<std::uint32_t>(all.begin(), all.end())};
    }

    // Top-down level-set tree.
    std::vector<Node> nodes;
    nodes.push_back({all, 0.0, 0.0, -1, {}});
    std::vector<int> work{0};
    while (!work.empty()) {
        const int id = work.back();
        work.pop_back();
        std::vector<std::uint32_t> current = nodes[static_cast<std::size_t>(id)].points;
        const double birth = nodes[static_cast<std::size_t>(id)].birth;
        double stability = 0.0;
        for (double L : levels) {
            const double lam = lambda_of(L);
            if (lam <= birth) continue;
            if (current.empty()) break;
            auto comps = components(current, L);
            if (comps.size() == 1) continue;
            std::vector<std::vector<std::uint32_t>> big;
            std::size_t dropped = 0;
            for (auto& c : comps) {
                if (c.size() >= static_cast<std::size_t>(min_cluster_size)) {
                    big.push_back(std::move(c));
                } else {
                    dropped += c.size();
                }
            }
            stability += static_cast<double>(dropped) * (lam - birth);
            if (big.size() >= 2) {
                for (auto& c : big) {
                    stability += static_cast<double>(c.size()) * (lam - birth);
                    nodes.push_back({c, lam, 0.0, id, {}});
                    nodes[static_cast<std::size_t>(id)].children.push_back(static_cast<int>(nodes.size()) - 1);
                    work.push_back(static_cast<int>(nodes.size()) - 1);
                }
                current.clear();
                break;
            }
            if (big.empty()) {
                current.clear();
                break;
            }
            current = std::move(big.front());
        }
        // Points still together at the floor distance leave at its lambda.
        stability += static_cast<double>(current.size()) * (lambda_of(kFloor) - birth);
        nodes[static_cast<std::size_t>(id)].stability = stability;
    }

    // Excess of mass, root excluded, bottom-up.
    std::vector<int> order(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) order[i] = static_cast<int>(i);
    std::function<int(int)> depth = [&](int x) { return nodes[static_cast<std::size_t>(x)].parent < 0 ? 0 : 1 + depth(nodes[static_cast<std::size_t>(x)].parent); };
    std::sort(order.begin(), order.end(), [&](int a, int b) { return depth(a) > depth(b); });
    std::vector<double> value(nodes.size());
    std::vector<char> selected(nodes.size(), 0);
    std::function<void(int)> deselect = [&](int x) {
        for (int c : nodes[static_cast<std::size_t>(x)].children) {
            selected[static_cast<std::size_t>(c)] = 0;
            deselect(c);
        }
    };
    for (int x : order) {
        const auto& nd = nodes[static_cast<std::size_t>(x)];
        double sub = 0.0;
        for (int c : nd.children) sub += value[static_cast<std::size_t>(c)];
        if (x == 0) continue;
        if (!nd.children.empty() && sub > nd.stability) {
            value[static_cast<std::size_t>(x)] = sub;
        } else {
            value[static_cast<std::size_t>(x)] = nd.stability;
            selected[static_cast<std::size_t>(x)] = 1;
            deselect(x);
        }
    }

    if (epsilon > 0.0) {
        std::vector<char> chosen(nodes.size(), 0), processed(nodes.size(), 0);
        for (std::size_t x = 1; x < nodes.size(); ++x) {
            if (!selected[x]) continue;
            if (1.0 / nodes[x].birth >= epsilon) {
                chosen[x] = 1;
                continue;
            }
            if (processed[x]) continue;
            int y = static_cast<int>(x);
            while (nodes[static_cast<std::size_t>(y)].parent > 0) {
                y = nodes[static_cast<std::size_t>(y)].parent;
                if (1.0 / nodes[static_cast<std::size_t>(y)].birth > epsilon) break;
            }
            chosen[static_cast<std::size_t>(y)] = 1;
            std::function<void(int)> mark = [&](int z) {
                for (int c : nodes[static_cast<std::size_t>(z)].children) {
                    processed[static_cast<std::size_t>(c)] = 1;
                    mark(c);
                }
            };
            mark(y);
        }
        selected = chosen;
    }

    // Members: points of the selected node that are not in any selected descendant
    // still belong to it (they fell out as noise of that cluster's subtree
    // or stayed to the end). Nearest selected ancestor owns each point.
    std::vector<int> owner(n, -1);
    std::function<void(int, int)> assign = [&](int x, int own) {
        if (selected[static_cast<std::size_t>(x)]) own = x;
        if (own >= 0) {
            for (auto p : nodes[static_cast<std::size_t>(x)].points) owner[p] = own;
        }
        for (int c : nodes[static_cast<std::size_t>(x)].children) assign(c, own);
    };
    assign(0, -1);
    std::map<int, std::set<std::uint32_t>> by;
    for (std::uint32_t p = 0; p < n; ++p) {
        if (owner[p] >= 0) by[owner[p]].insert(p);
    }
    std::set<std::set<std::uint32_t>> out;
    for (auto& [_, m] : by) out.insert(m);
    return out;
}

} // namespace cgseg::testing
