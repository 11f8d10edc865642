#include "cgseg/losses.hpp"

#include "cgseg/error.hpp"
#include "cgseg/random.hpp"

#include <spdlog/spdlog.h>

#include <tbb/blocked_range.h>
#include <tbb/combinable.h>
#include <tbb/parallel_for.h>

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace cgseg {

namespace {

constexpr double kTinyNorm = 1e-12;
constexpr Eigen::Index kPairBlock = 1024;

using MatrixXdR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row-normalized copy; zero rows stay zero. Also returns the norms.
MatrixXdR normalize_rows(const MatrixXdR& x, Eigen::VectorXd& norms) {
    norms = x.rowwise().norm();
    MatrixXdR u = x;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        if (norms[r] > kTinyNorm) {
            u.row(r) /= norms[r];
        } else {
            u.row(r).setZero();
        }
    }
    return u;
}

/// Pulls a gradient w.r.t. unit rows back through x ↦ x/‖x‖.
MatrixXdR through_normalization(const MatrixXdR& g, const MatrixXdR& u, const Eigen::VectorXd& norms) {
    MatrixXdR out(g.rows(), g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
        if (norms[r] > kTinyNorm) {
            out.row(r) = (g.row(r) - u.row(r) * u.row(r).dot(g.row(r))) / norms[r];
        } else {
            out.row(r).setZero();
        }
    }
    return out;
}

} // namespace

ContrastiveResult contrastive_loss(const PixelBatch& batch, const TrainConfig& cfg) {
    const auto n = static_cast<Eigen::Index>(batch.size());
    if (batch.features.rows() != n || batch.coarse_ids.size() != batch.size() || batch.fine_ids.size() != batch.size()) {
        fail(ErrorCode::ContractViolation, "pixel batch arrays disagree in length");
    }
    ContrastiveResult result;
    result.grad = RowMatrixD::Zero(n, kFeatureDim);
    if (n == 0) return result;
    const double inv_n2 = 1.0 / (static_cast<double>(n) * static_cast<double>(n));

    for (Level level : kLevels) {
        const int dim = level_dim(level, cfg.layout);
        const int off = level_offset(level, cfg.layout);
        const MatrixXdR x = batch.features.middleCols(off, dim);
        Eigen::VectorXd norms;
        const MatrixXdR u = normalize_rows(x, norms);
        const auto& ids = batch.ids(level);

        // Same-ID pairs: Σ_{p,q same} u_p·u_q = Σ_seg ‖Σ_{p∈seg} u_p‖².
        std::unordered_map<std::int32_t, Eigen::VectorXd> seg_sum;
        for (Eigen::Index p = 0; p < n; ++p) {
            auto [it, inserted] = seg_sum.try_emplace(ids[static_cast<std::size_t>(p)], Eigen::VectorXd::Zero(dim));
            it->second += u.row(p).transpose();
        }
        double pos = 0.0;
        for (const auto& [id, v] : seg_sum) pos -= v.squaredNorm();
        MatrixXdR g_pos(n, dim);
        for (Eigen::Index p = 0; p < n; ++p) {
            g_pos.row(p) = -2.0 * inv_n2 * seg_sum.at(ids[static_cast<std::size_t>(p)]).transpose();
        }

        // Different-ID pairs above the margin, blockwise.
        const double tau = cfg.tau(level);
        MatrixXdR g_neg = MatrixXdR::Zero(n, dim);
        tbb::combinable<double> neg_sum(0.0);
        const Eigen::Index blocks = (n + kPairBlock - 1) / kPairBlock;
        tbb::parallel_for(Eigen::Index{0}, blocks, [&](Eigen::Index b) {
            const Eigen::Index r0 = b * kPairBlock, rows = std::min(kPairBlock, n - r0);
            MatrixXdR s = u.middleRows(r0, rows) * u.transpose();
            double local = 0.0;
            for (Eigen::Index r = 0; r < rows; ++r) {
                const std::int32_t id = ids[static_cast<std::size_t>(r0 + r)];
                for (Eigen::Index q = 0; q < n; ++q) {
                    const double sv = s(r, q);
                    const bool active = sv > tau && ids[static_cast<std::size_t>(q)] != id;
                    if (active) local += sv;
                    s(r, q) = active ? 1.0 : 0.0;
                }
            }
            g_neg.middleRows(r0, rows) = 2.0 * inv_n2 * (s * u);
            neg_sum.local() += local;
        });
        const double neg = neg_sum.combine(std::plus<>());

        MatrixXdR gx_pos = through_normalization(g_pos, u, norms);
        MatrixXdR gx_neg = through_normalization(g_neg, u, norms);
        if (level == Level::Fine && cfg.layout == FeatureLayout::SharedPrior) gx_neg.leftCols(kCoarseDim).setZero();
        result.grad.middleCols(off, dim) += gx_pos + cfg.lambda_neg_cont * gx_neg;
        result.pos += pos * inv_n2;
        result.neg += neg * inv_n2;
    }
    result.total = result.pos + cfg.lambda_neg_cont * result.neg;
    return result;
}

GflAssignment gfl_assign(const RowMatrixD& features, const GlobalClusters& clusters, FeatureLayout layout) {
    GflAssignment out;
    for (Level level : kLevels) {
        const auto& list = clusters.at(level);
        auto& assign = out[static_cast<std::size_t>(level)];
        assign.assign(static_cast<std::size_t>(features.rows()), 0);
        if (list.empty()) continue;
        const int dim = level_dim(level, layout), off = level_offset(level, layout);
        MatrixXdR reps(static_cast<Eigen::Index>(list.size()), dim);
        for (std::size_t c = 0; c < list.size(); ++c) {
            reps.row(static_cast<Eigen::Index>(c)) = list[c].representative.cast<double>().normalized().transpose();
        }
        const MatrixXdR sims = features.middleCols(off, dim) * reps.transpose();
        for (Eigen::Index i = 0; i < features.rows(); ++i) {
            Eigen::Index best = 0;
            sims.row(i).maxCoeff(&best);
            assign[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(best);
        }
    }
    return out;
}

LossResult gfl_loss(const RowMatrixD& features, const GlobalClusters& clusters, const TrainConfig& cfg,
                    const GflAssignment* frozen, bool warn_empty) {
    const Eigen::Index N = features.rows();
    LossResult result;
    result.grad = RowMatrixD::Zero(N, kFeatureDim);
    if (N == 0) return result;
    const GflAssignment assignment = frozen ? *frozen : gfl_assign(features, clusters, cfg.layout);

    for (Level level : kLevels) {
        const auto& list = clusters.at(level);
        if (list.empty()) {
            if (warn_empty) spdlog::warn("GFL: no {} clusters, level skipped", to_string(level));
            continue;
        }
        const int dim = level_dim(level, cfg.layout), off = level_offset(level, cfg.layout);
        const auto C = static_cast<Eigen::Index>(list.size());
        MatrixXdR reps(C, dim);
        for (Eigen::Index c = 0; c < C; ++c) {
            reps.row(c) = list[static_cast<std::size_t>(c)].representative.cast<double>().normalized().transpose();
        }
        const MatrixXdR x = features.middleCols(off, dim);
        Eigen::VectorXd norms;
        const MatrixXdR u = normalize_rows(x, norms);
        const MatrixXdR sims = u * reps.transpose();
        const double tau = cfg.tau(level);
        const double inv_n = 1.0 / static_cast<double>(N), inv_nc = inv_n / static_cast<double>(C);
        const auto& assign = assignment[static_cast<std::size_t>(level)];
        MatrixXdR gu = MatrixXdR::Zero(N, dim);
        double pos = 0.0, neg = 0.0;
        for (Eigen::Index i = 0; i < N; ++i) {
            if (norms[i] <= kTinyNorm) continue;
            const auto ci = static_cast<Eigen::Index>(assign[static_cast<std::size_t>(i)]);
            if (sims(i, ci) > cfg.tau_g) {
                pos -= sims(i, ci) * inv_n;
                gu.row(i) -= inv_n * reps.row(ci);
            }
            for (Eigen::Index c = 0; c < C; ++c) {
                if (c == ci || !(sims(i, c) > tau)) continue;
                neg += sims(i, c) * inv_nc;
                gu.row(i) += inv_nc * reps.row(c);
            }
        }
        result.grad.middleCols(off, dim) += through_normalization(gu, u, norms);
        result.pos += pos;
        result.neg += neg;
    }
    result.value = result.pos + result.neg;
    return result;
}

LossResult hypersphere_loss(const RowMatrixD& features) {
    const Eigen::Index N = features.rows();
    LossResult result;
    result.grad = RowMatrixD::Zero(N, kFeatureDim);
    if (N == 0) return result;
    const double inv_n = 1.0 / static_cast<double>(N);
    for (Eigen::Index i = 0; i < N; ++i) {
        for (int half = 0; half < 2; ++half) {
            const auto block = features.row(i).segment(half * kCoarseDim, kCoarseDim);
            const double norm = block.norm();
            result.value += (norm - 1.0) * (norm - 1.0) * inv_n;
            if (norm > kTinyNorm) {
                result.grad.row(i).segment(half * kCoarseDim, kCoarseDim) = 2.0 * inv_n * (norm - 1.0) / norm * block;
            }
        }
    }
    return result;
}

PixelLossResult rendered_norm_loss(const RenderBuffersD& buffers, FeatureLayout layout) {
    const std::size_t P = buffers.pixel_count();
    PixelLossResult result;
    result.grad_pixels.assign(P * kFeatureDim, 0.0);
    if (P == 0) return result;
    const double inv_hw = 1.0 / static_cast<double>(P);
    for (std::size_t p = 0; p < P; ++p) {
        for (Level level : kLevels) {
            const auto f = buffers.level_at(p, level, layout);
            const double r = level_radius(level, layout);
            const double norm = f.norm();
            result.value += (norm - r) * (norm - r) * inv_hw;
            if (norm <= kTinyNorm) continue;
            double* g = result.grad_pixels.data() + p * kFeatureDim + level_offset(level, layout);
            const double scale = 2.0 * inv_hw * (norm - r) / norm;
            for (Eigen::Index d = 0; d < f.size(); ++d) g[d] += scale * f[d];
        }
    }
    return result;
}

LossResult spatial_loss(const RowMatrixD& features, const std::vector<std::uint32_t>& samples,
                        const std::vector<std::uint32_t>& neighbors, int k) {
    const Eigen::Index N = features.rows();
    LossResult result;
    result.grad = RowMatrixD::Zero(N, kFeatureDim);
    if (samples.empty() || k <= 0) return result;
    if (neighbors.size() != static_cast<std::size_t>(N) * static_cast<std::size_t>(k)) {
        fail(ErrorCode::ContractViolation, "neighbour table does not hold k ids per Gaussian");
    }
    const double w = 1.0 / (static_cast<double>(samples.size()) * k);
    auto unit = [&](Eigen::Index i, double& norm) {
        norm = features.row(i).norm();
        return norm > kTinyNorm ? Eigen::Matrix<double, 1, kFeatureDim>(features.row(i) / norm)
                                : Eigen::Matrix<double, 1, kFeatureDim>::Zero();
    };
    for (std::uint32_t i : samples) {
        double ni = 0.0;
        const auto ui = unit(i, ni);
        for (int j = 0; j < k; ++j) {
            const std::uint32_t nb = neighbors[static_cast<std::size_t>(i) * static_cast<std::size_t>(k) + static_cast<std::size_t>(j)];
            double nk = 0.0;
            const auto uk = unit(nb, nk);
            const double cos = ui.dot(uk);
            result.value -= w * cos;
            if (ni > kTinyNorm) result.grad.row(i) -= w * (uk - cos * ui) / ni;
            if (nk > kTinyNorm) result.grad.row(nb) -= w * (ui - cos * uk) / nk;
        }
    }
    return result;
}

RegularizerResult regularizers(const RowMatrixD& features, const RenderBuffersD& buffers,
                               const std::vector<std::uint32_t>& neighbors, const TrainConfig& cfg,
                               std::uint64_t seed) {
    RegularizerResult out;
    out.hypersphere = hypersphere_loss(features);
    out.rendered_norm = rendered_norm_loss(buffers, cfg.layout);
    const auto samples = sample_indices(static_cast<std::size_t>(features.rows()),
                                        static_cast<std::size_t>(cfg.n_spatial), seed);
    out.spatial = spatial_loss(features, samples, neighbors, cfg.k_neighbors);
    return out;
}

} // namespace cgseg
