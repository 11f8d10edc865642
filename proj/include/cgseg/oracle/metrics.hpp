#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <vector>

namespace cgseg::oracle {

/// Minimum-cost assignment of rows to columns (rectangular allowed); result[r]
/// is the column of row r or -1 when rows outnumber columns.
std::vector<int> hungarian(const Eigen::MatrixXd& cost);

/// Fraction of items whose predicted label maps to their true label under the
/// best one-to-one matching of labels. Predicted label 0 (abstain) never matches.
double matched_accuracy(const std::vector<std::uint32_t>& predicted, const std::vector<std::uint32_t>& truth);

struct SetScore {
    double iou = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

/// Set overlap of two id lists (duplicates ignored). Empty vs empty scores 1.
SetScore set_score(const std::vector<std::uint32_t>& predicted, const std::vector<std::uint32_t>& truth);

/// Central differences of `f` at every entry of `x` (step h).
Eigen::MatrixXd finite_difference(const std::function<double(const Eigen::MatrixXd&)>& f, const Eigen::MatrixXd& x,
                                  double h = 1e-6);

/// max |a − b| / max(max |b|, floor).
double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor = 1e-8);

} // namespace cgseg::oracle
