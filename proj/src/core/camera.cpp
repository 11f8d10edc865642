#include "cgseg/camera.hpp"

#include "cgseg/error.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <fmt/format.h>

namespace cgseg {

void Camera::validate() const {
    if (width <= 0 || height <= 0) {
        fail(ErrorCode::Precondition, fmt::format("camera size {}x{} is not positive", width, height));
    }
    if (!(fx > 0.0) || !(fy > 0.0)) {
        fail(ErrorCode::Precondition, "camera focal lengths must be positive");
    }
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
        fail(ErrorCode::Precondition,
             fmt::format("principal point ({}, {}) outside the {}x{} image", cx, cy, width, height));
    }
    const Eigen::Matrix3d r = rotation();
    const double err = (r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (!(err <= 1e-5)) {
        fail(ErrorCode::Precondition,
             fmt::format("world_to_camera rotation is not orthonormal (error {:.3g})", err));
    }
    const Eigen::RowVector4d last = world_to_camera.row(3);
    if ((last - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-9) {
        fail(ErrorCode::Precondition, "world_to_camera last row must be (0, 0, 0, 1)");
    }
}

Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up,
               int width, int height, double fov_x_radians) {
    const Eigen::Vector3d forward = (target - eye).normalized();
    Eigen::Vector3d right = forward.cross(up);
    if (right.norm() < 1e-9) right = forward.unitOrthogonal();
    right.normalize();
    // +y points down in image space.
    const Eigen::Vector3d down = forward.cross(right);

    Eigen::Matrix3d r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();

    Camera cam;
    cam.width = width;
    cam.height = height;
    cam.fx = 0.5 * width / std::tan(0.5 * fov_x_radians);
    cam.fy = cam.fx;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    cam.world_to_camera.setIdentity();
    cam.world_to_camera.topLeftCorner<3, 3>() = r;
    cam.world_to_camera.topRightCorner<3, 1>() = -r * eye;
    return cam;
}

} // namespace cgseg
