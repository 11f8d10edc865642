#pragma once

#include "cgseg/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace cgseg {

/// Per-Gaussian two-level features. Row i holds 24 scalars: the coarse block
/// (0..12) followed by the fine-only block (12..24). The fine view under the
/// shared prior is the whole row, so it can never go stale relative to the halves.
template <typename T>
class BasicFeatureStore {
public:
    using Matrix = Eigen::Matrix<T, Eigen::Dynamic, kFeatureDim, Eigen::RowMajor>;

    BasicFeatureStore() = default;
    explicit BasicFeatureStore(std::size_t n) : data_(Matrix::Zero(static_cast<Eigen::Index>(n), kFeatureDim)) {}
    explicit BasicFeatureStore(Matrix data) : data_(std::move(data)) {}

    std::size_t size() const { return static_cast<std::size_t>(data_.rows()); }

    auto row(std::size_t i) { return data_.row(static_cast<Eigen::Index>(i)); }
    auto row(std::size_t i) const { return data_.row(static_cast<Eigen::Index>(i)); }

    auto coarse(std::size_t i) { return row(i).template head<kCoarseDim>(); }
    auto coarse(std::size_t i) const { return row(i).template head<kCoarseDim>(); }
    auto fine_extra(std::size_t i) { return row(i).template tail<kExtraDim>(); }
    auto fine_extra(std::size_t i) const { return row(i).template tail<kExtraDim>(); }
    /// coarse ⊕ fine_extra, a view of the stored row.
    auto fine(std::size_t i) { return row(i); }
    auto fine(std::size_t i) const { return row(i); }

    /// The level feature of row i under `layout`.
    auto level(std::size_t i, Level lv, FeatureLayout layout) const {
        return row(i).segment(level_offset(lv, layout), level_dim(lv, layout));
    }

    Matrix& matrix() { return data_; }
    const Matrix& matrix() const { return data_; }

    const T* data() const { return data_.data(); }
    T* data() { return data_.data(); }

    template <typename U>
    BasicFeatureStore<U> cast() const {
        return BasicFeatureStore<U>(typename BasicFeatureStore<U>::Matrix(data_.template cast<U>()));
    }

    /// Keeps rows whose `keep` flag is set, in order.
    BasicFeatureStore select_rows(const std::vector<std::uint8_t>& keep) const;
    /// Appends copies of the given rows.
    void append_rows(const std::vector<std::uint32_t>& ids);

    friend bool operator==(const BasicFeatureStore& a, const BasicFeatureStore& b) {
        return a.data_.rows() == b.data_.rows() && a.data_ == b.data_;
    }

private:
    Matrix data_;
};

using FeatureStore = BasicFeatureStore<float>;
using FeatureStoreD = BasicFeatureStore<double>;

/// Each 12-dim half drawn uniformly on its unit sphere (normalized standard
/// normal sample). Deterministic in `seed`.
FeatureStore init_features(std::size_t gaussian_count, std::uint64_t seed);

extern template class BasicFeatureStore<float>;
extern template class BasicFeatureStore<double>;

} // namespace cgseg
