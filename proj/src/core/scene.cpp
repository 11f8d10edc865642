#include "cgseg/scene.hpp"

#include "cgseg/error.hpp"

#include <algorithm>
#include <fmt/format.h>

namespace cgseg {

namespace {

constexpr float kC0 = 0.28209479177387814f;
constexpr float kC1 = 0.4886025119029199f;
constexpr float kC2[] = {1.0925484305920792f, -1.0925484305920792f, 0.31539156525252005f,
                         -1.0925484305920792f, 0.5462742152960396f};
constexpr float kC3[] = {-0.5900435899266435f, 2.890611442640554f, -0.4570457994644658f,
                         0.3731763325901154f,  -0.4570457994644658f, 1.445305721320277f,
                         -0.5900435899266435f};

} // namespace

Eigen::Vector3f eval_sh_color(int degree, const float* coeffs, const Eigen::Vector3f& dir) {
    auto coeff = [coeffs](int k) {
        return Eigen::Vector3f(coeffs[k * 3], coeffs[k * 3 + 1], coeffs[k * 3 + 2]);
    };
    Eigen::Vector3f result = kC0 * coeff(0);
    if (degree > 0) {
        const float x = dir.x(), y = dir.y(), z = dir.z();
        result += -kC1 * y * coeff(1) + kC1 * z * coeff(2) - kC1 * x * coeff(3);
        if (degree > 1) {
            const float xx = x * x, yy = y * y, zz = z * z;
            const float xy = x * y, yz = y * z, xz = x * z;
            result += kC2[0] * xy * coeff(4) + kC2[1] * yz * coeff(5) +
                      kC2[2] * (2.0f * zz - xx - yy) * coeff(6) + kC2[3] * xz * coeff(7) +
                      kC2[4] * (xx - yy) * coeff(8);
            if (degree > 2) {
                result += kC3[0] * y * (3.0f * xx - yy) * coeff(9) +
                          kC3[1] * xy * z * coeff(10) +
                          kC3[2] * y * (4.0f * zz - xx - yy) * coeff(11) +
                          kC3[3] * z * (2.0f * zz - 3.0f * xx - 3.0f * yy) * coeff(12) +
                          kC3[4] * x * (4.0f * zz - xx - yy) * coeff(13) +
                          kC3[5] * z * (xx - yy) * coeff(14) +
                          kC3[6] * x * (xx - 3.0f * yy) * coeff(15);
            }
        }
    }
    result.array() += 0.5f;
    return result.cwiseMax(0.0f);
}

void GaussianScene::reserve(std::size_t n) {
    positions.reserve(n);
    scales.reserve(n);
    rotations.reserve(n);
    opacities.reserve(n);
    sh.reserve(n * static_cast<std::size_t>(sh_stride()));
}

void GaussianScene::push_back(const Gaussian& g) {
    if (static_cast<int>(g.sh.size()) != sh_stride()) {
        fail(ErrorCode::ContractViolation,
             fmt::format("Gaussian carries {} SH values, scene degree {} needs {}", g.sh.size(),
                         sh_degree, sh_stride()));
    }
    positions.push_back(g.position);
    scales.push_back(g.scale);
    rotations.push_back(g.rotation);
    opacities.push_back(g.opacity);
    sh.insert(sh.end(), g.sh.begin(), g.sh.end());
}

Gaussian GaussianScene::at(std::size_t i) const {
    Gaussian g;
    g.position = positions[i];
    g.scale = scales[i];
    g.rotation = rotations[i];
    g.opacity = opacities[i];
    g.sh.assign(sh_of(i), sh_of(i) + sh_stride());
    return g;
}

Eigen::Vector3f GaussianScene::color(std::size_t i, const Eigen::Vector3d& camera_center) const {
    Eigen::Vector3f dir = Eigen::Vector3f::UnitZ();
    if (sh_degree > 0) {
        Eigen::Vector3d d = positions[i].cast<double>() - camera_center;
        const double n = d.norm();
        if (n > 0.0) dir = (d / n).cast<float>();
    }
    return eval_sh_color(sh_degree, sh_of(i), dir);
}

Eigen::Matrix3d rotation_matrix(const Eigen::Vector4f& q) {
    Eigen::Vector4d v = q.cast<double>();
    const double n = v.norm();
    if (n > 0.0) v /= n;
    const double w = v[0], x = v[1], y = v[2], z = v[3];
    Eigen::Matrix3d r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

} // namespace cgseg
