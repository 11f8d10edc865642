#include "cgseg/oracle/metrics.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>

namespace cgseg::oracle {

std::vector<int> hungarian(const Eigen::MatrixXd& cost) {
    const Eigen::Index rows = cost.rows(), cols = cost.cols();
    const Eigen::Index n = std::max(rows, cols);
    if (n == 0) return {};
    // Square padding with zero cost; potentials method over 1-based arrays.
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    a.topLeftCorner(rows, cols) = cost;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
    std::vector<Eigen::Index> p(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
    for (Eigen::Index i = 1; i <= n; ++i) {
        p[0] = i;
        Eigen::Index j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
        std::vector<bool> used(static_cast<std::size_t>(n + 1), false);
        do {
            used[static_cast<std::size_t>(j0)] = true;
            const Eigen::Index i0 = p[static_cast<std::size_t>(j0)];
            double delta = inf;
            Eigen::Index j1 = 0;
            for (Eigen::Index j = 1; j <= n; ++j) {
                const auto ju = static_cast<std::size_t>(j);
                if (used[ju]) continue;
                const double cur = a(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[ju];
                if (cur < minv[ju]) {
                    minv[ju] = cur;
                    way[ju] = j0;
                }
                if (minv[ju] < delta) {
                    delta = minv[ju];
                    j1 = j;
                }
            }
            for (Eigen::Index j = 0; j <= n; ++j) {
                const auto ju = static_cast<std::size_t>(j);
                if (used[ju]) {
                    u[static_cast<std::size_t>(p[ju])] += delta;
                    v[ju] -= delta;
                } else {
                    minv[ju] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const Eigen::Index j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> result(static_cast<std::size_t>(rows), -1);
    for (Eigen::Index j = 1; j <= n; ++j) {
        const Eigen::Index i = p[static_cast<std::size_t>(j)];
        if (i >= 1 && i <= rows && j <= cols) result[static_cast<std::size_t>(i - 1)] = static_cast<int>(j - 1);
    }
    return result;
}

double matched_accuracy(const std::vector<std::uint32_t>& predicted, const std::vector<std::uint32_t>& truth) {
    if (predicted.size() != truth.size() || truth.empty()) return predicted.size() == truth.size() ? 1.0 : 0.0;
    std::map<std::uint32_t, Eigen::Index> pred_index, true_index;
    for (std::uint32_t p : predicted) {
        if (p != 0) pred_index.try_emplace(p, static_cast<Eigen::Index>(pred_index.size()));
    }
    for (std::uint32_t t : truth) true_index.try_emplace(t, static_cast<Eigen::Index>(true_index.size()));
    if (pred_index.empty()) return 0.0;
    Eigen::MatrixXd overlap = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(pred_index.size()),
                                                    static_cast<Eigen::Index>(true_index.size()));
    for (std::size_t k = 0; k < truth.size(); ++k) {
        if (predicted[k] != 0) overlap(pred_index[predicted[k]], true_index[truth[k]]) += 1.0;
    }
    const auto match = hungarian(-overlap);
    double hits = 0.0;
    for (std::size_t r = 0; r < match.size(); ++r) {
        if (match[r] >= 0) hits += overlap(static_cast<Eigen::Index>(r), match[r]);
    }
    return hits / static_cast<double>(truth.size());
}

SetScore set_score(const std::vector<std::uint32_t>& predicted, const std::vector<std::uint32_t>& truth) {
    const std::set<std::uint32_t> p(predicted.begin(), predicted.end()), t(truth.begin(), truth.end());
    if (p.empty() && t.empty()) return {1.0, 1.0, 1.0};
    std::size_t inter = 0;
    for (std::uint32_t x : p) inter += t.count(x);
    const std::size_t uni = p.size() + t.size() - inter;
    SetScore s;
    s.iou = static_cast<double>(inter) / static_cast<double>(uni);
    s.precision = p.empty() ? 0.0 : static_cast<double>(inter) / static_cast<double>(p.size());
    s.recall = t.empty() ? 0.0 : static_cast<double>(inter) / static_cast<double>(t.size());
    return s;
}

Eigen::MatrixXd finite_difference(const std::function<double(const Eigen::MatrixXd&)>& f, const Eigen::MatrixXd& x,
                                  double h) {
    Eigen::MatrixXd grad(x.rows(), x.cols());
    Eigen::MatrixXd probe = x;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            const double keep = probe(r, c);
            probe(r, c) = keep + h;
            const double up = f(probe);
            probe(r, c) = keep - h;
            const double down = f(probe);
            probe(r, c) = keep;
            grad(r, c) = (up - down) / (2.0 * h);
        }
    }
    return grad;
}

double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor) {
    const double scale = std::max(b.cwiseAbs().maxCoeff(), floor);
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

} // namespace cgseg::oracle
