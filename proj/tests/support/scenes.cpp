#include "scenes.hpp"

#include "cgseg/random.hpp"

#include <cmath>

namespace cgseg::testing {

GaussianScene random_scene(std::size_t count, std::uint64_t seed, int sh_degree) {
    Rng rng(seed);
    auto u = [&](double lo, double hi) { return static_cast<float>(lo + (hi - lo) * uniform01(rng)); };
    GaussianScene scene;
    scene.sh_degree = sh_degree;
    scene.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Gaussian g;
        g.position = {u(-1.0, 1.0), u(-1.0, 1.0), u(-1.0, 1.0)};
        // Log-uniform scales, some needle-like.
        for (int a = 0; a < 3; ++a) g.scale[a] = std::exp(u(std::log(0.004), std::log(0.12)));
        g.rotation = {static_cast<float>(standard_normal(rng)), static_cast<float>(standard_normal(rng)),
                      static_cast<float>(standard_normal(rng)), static_cast<float>(standard_normal(rng))};
        g.rotation.normalize();
        g.opacity = u(0.02, 1.0);
        g.sh.resize(static_cast<std::size_t>(sh_coeff_count(sh_degree) * 3));
        for (std::size_t k = 0; k < g.sh.size(); ++k) g.sh[k] = k < 3 ? u(-1.5, 1.5) : u(-0.4, 0.4);
        scene.push_back(g);
    }
    return scene;
}

Camera random_camera(int width, int height, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::Vector3d dir(standard_normal(rng), standard_normal(rng), standard_normal(rng));
    dir.normalize();
    const double dist = 2.6 + 0.8 * uniform01(rng);
    const Eigen::Vector3d up = std::abs(dir.z()) < 0.95 ? Eigen::Vector3d::UnitZ() : Eigen::Vector3d::UnitX();
    const double fov = (40.0 + 30.0 * uniform01(rng)) * 3.14159265358979323846 / 180.0;
    return look_at(dir * dist, Eigen::Vector3d::Zero(), up, width, height, fov);
}

FeatureStoreD random_features(std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    FeatureStoreD f(count);
    for (std::size_t i = 0; i < count; ++i) {
        for (int d = 0; d < kFeatureDim; ++d) f.row(i)[d] = 2.0 * uniform01(rng) - 1.0;
    }
    return f;
}

} // namespace cgseg::testing
