#include "cgseg/features.hpp"

#include "cgseg/random.hpp"

namespace cgseg {

template <typename T>
BasicFeatureStore<T> BasicFeatureStore<T>::select_rows(const std::vector<std::uint8_t>& keep) const {
    Eigen::Index count = 0;
    for (auto k : keep) count += k ? 1 : 0;
    Matrix out(count, kFeatureDim);
    Eigen::Index dst = 0;
    for (Eigen::Index i = 0; i < data_.rows(); ++i) {
        if (keep[static_cast<std::size_t>(i)]) out.row(dst++) = data_.row(i);
    }
    return BasicFeatureStore(std::move(out));
}

template <typename T>
void BasicFeatureStore<T>::append_rows(const std::vector<std::uint32_t>& ids) {
    const Eigen::Index old_rows = data_.rows();
    Matrix grown(old_rows + static_cast<Eigen::Index>(ids.size()), kFeatureDim);
    grown.topRows(old_rows) = data_;
    for (std::size_t k = 0; k < ids.size(); ++k) {
        grown.row(old_rows + static_cast<Eigen::Index>(k)) = data_.row(ids[k]);
    }
    data_ = std::move(grown);
}

template class BasicFeatureStore<float>;
template class BasicFeatureStore<double>;

FeatureStore init_features(std::size_t gaussian_count, std::uint64_t seed) {
    Rng rng(seed);
    FeatureStore store(gaussian_count);
    Eigen::Matrix<double, kCoarseDim, 1> v;
    for (std::size_t i = 0; i < gaussian_count; ++i) {
        for (int half = 0; half < 2; ++half) {
            double n = 0.0;
            do {
                for (int d = 0; d < kCoarseDim; ++d) v[d] = standard_normal(rng);
                n = v.norm();
            } while (n < 1e-12);
            store.row(i).segment(half * kCoarseDim, kCoarseDim) = (v / n).cast<float>();
        }
    }
    return store;
}

} // namespace cgseg
