#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <vector>

namespace cgseg {

/// Number of SH coefficients per color channel for a given degree.
constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// Evaluates view-dependent color from SH coefficients laid out as
/// `coeffs[k * 3 + channel]`, k < sh_coeff_count(degree). `dir` must be unit length.
/// Applies the +0.5 offset and clamps at zero like the 3DGS reference.
Eigen::Vector3f eval_sh_color(int degree, const float* coeffs, const Eigen::Vector3f& dir);

/// One Gaussian in activated form (exp'd scale, sigmoid'd opacity, unit quaternion).
struct Gaussian {
    Eigen::Vector3f position = Eigen::Vector3f::Zero();
    Eigen::Vector3f scale = Eigen::Vector3f::Ones();
    Eigen::Vector4f rotation{1.0f, 0.0f, 0.0f, 0.0f}; // (w, x, y, z)
    float opacity = 1.0f;
    std::vector<float> sh; // sh_coeff_count(degree) * 3 values
};

/// Frozen geometry and appearance of a pre-trained splat scene, stored SoA.
struct GaussianScene {
    int sh_degree = 0;
    std::vector<Eigen::Vector3f> positions;
    std::vector<Eigen::Vector3f> scales;
    std::vector<Eigen::Vector4f> rotations;
    std::vector<float> opacities;
    std::vector<float> sh; // size() * sh_stride()

    std::size_t size() const { return positions.size(); }
    bool empty() const { return positions.empty(); }
    int sh_stride() const { return sh_coeff_count(sh_degree) * 3; }
    const float* sh_of(std::size_t i) const { return sh.data() + i * sh_stride(); }

    void reserve(std::size_t n);
    void push_back(const Gaussian& g);
    Gaussian at(std::size_t i) const;

    /// Color of Gaussian i seen from `camera_center`.
    Eigen::Vector3f color(std::size_t i, const Eigen::Vector3d& camera_center) const;
};

/// Rotation matrix of a (w, x, y, z) quaternion; the quaternion is normalized first.
Eigen::Matrix3d rotation_matrix(const Eigen::Vector4f& q);

} // namespace cgseg
