#pragma once

#include <Eigen/Core>

namespace cgseg {

/// Pinhole camera. Camera space looks down +z with x right and y down; pixel
/// (x, y) samples the image-plane point u = fx·X/Z + cx, v = fy·Y/Z + cy at
/// integer coordinates.
struct Camera {
    int width = 0;
    int height = 0;
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    Eigen::Matrix4d world_to_camera = Eigen::Matrix4d::Identity();

    /// Throws Precondition when intrinsics or pose are invalid.
    void validate() const;

    Eigen::Matrix3d rotation() const { return world_to_camera.topLeftCorner<3, 3>(); }
    Eigen::Vector3d translation() const { return world_to_camera.topRightCorner<3, 1>(); }
    Eigen::Vector3d center() const { return -rotation().transpose() * translation(); }

    Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const {
        return rotation() * world + translation();
    }

    std::size_t pixel_count() const {
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }
};

/// Camera at `eye` looking at `target`, with `up` roughly along world up.
Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
               const Eigen::Vector3d& up, int width, int height, double fov_x_radians);

} // namespace cgseg
