#include "cgseg/checkpoint.hpp"

#include "cgseg/error.hpp"
#include "cgseg/io/binary.hpp"

#include <fmt/format.h>

namespace cgseg {

namespace {

constexpr std::uint32_t kFeatureVersion = 1;
constexpr std::uint32_t kCheckpointVersion = 1;

FeatureLayout parse_layout(std::uint32_t flags, const std::string& what) {
    if (flags == 0) return FeatureLayout::SharedPrior;
    if (flags == 1) return FeatureLayout::Independent;
    fail(ErrorCode::Format, fmt::format("{}: unknown feature layout {}", what, flags));
}

LoadedFeatures read_features(io::ByteReader& r, const std::string& what, std::size_t expected_rows) {
    r.expect_magic("CGFT");
    const auto version = r.get<std::uint32_t>();
    if (version != kFeatureVersion) fail(ErrorCode::Format, fmt::format("{}: unsupported version {}", what, version));
    const auto n = r.get<std::uint32_t>();
    const auto dc = r.get<std::uint32_t>();
    const auto d = r.get<std::uint32_t>();
    if (dc != kCoarseDim || d != kFeatureDim) {
        fail(ErrorCode::Format, fmt::format("{}: feature dims {}/{} (expected {}/{})", what, dc, d, kCoarseDim, kFeatureDim));
    }
    if (expected_rows != 0 && n != expected_rows) {
        fail(ErrorCode::Format, fmt::format("{}: {} feature rows but the scene has {} Gaussians", what, n, expected_rows));
    }
    LoadedFeatures out;
    out.layout = parse_layout(r.get<std::uint32_t>(), what);
    if (r.remaining() / (sizeof(float) * kFeatureDim) < n) fail(ErrorCode::Format, what + ": truncated");
    out.store = FeatureStore(n);
    r.get_f32s(std::span(out.store.data(), static_cast<std::size_t>(n) * kFeatureDim));
    return out;
}

} // namespace

std::vector<std::uint8_t> encode_features(const FeatureStore& store, FeatureLayout layout) {
    io::ByteWriter w;
    w.magic("CGFT");
    w.put(kFeatureVersion);
    w.put(static_cast<std::uint32_t>(store.size()));
    w.put(static_cast<std::uint32_t>(kCoarseDim));
    w.put(static_cast<std::uint32_t>(kFeatureDim));
    w.put(static_cast<std::uint32_t>(layout));
    w.put_f32s(std::span(store.data(), store.size() * kFeatureDim));
    return w.take();
}

void save_features(const FeatureStore& store, const std::filesystem::path& path, FeatureLayout layout) {
    io::write_file(path, encode_features(store, layout));
}

LoadedFeatures load_features(const std::filesystem::path& path, std::size_t expected_rows) {
    const auto bytes = io::read_file(path);
    io::ByteReader r(bytes, path.string());
    auto out = read_features(r, path.string(), expected_rows);
    r.expect_end();
    return out;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    io::ByteWriter w;
    w.magic("CGCK");
    w.put(kCheckpointVersion);
    w.put(ck.iteration);
    w.put(ck.config_digest);
    w.append(encode_features(ck.features, ck.layout));
    for (Level level : kLevels) {
        const auto& list = ck.clusters.at(level);
        const auto dim = static_cast<Eigen::Index>(level_dim(level, ck.layout));
        w.put(static_cast<std::uint32_t>(list.size()));
        for (const GlobalCluster& c : list) {
            if (c.representative.size() != dim) {
                fail(ErrorCode::ContractViolation, fmt::format("{} cluster {} has {} dims, expected {}",
                                                               to_string(level), c.id, c.representative.size(), dim));
            }
            w.put(c.id);
            w.put(c.member_count);
            w.put_f32s(std::span(c.representative.data(), static_cast<std::size_t>(dim)));
        }
    }
    io::write_file(path, w.bytes());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string what = path.string();
    const auto bytes = io::read_file(path);
    io::ByteReader r(bytes, what);
    r.expect_magic("CGCK");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) fail(ErrorCode::Format, fmt::format("{}: unsupported version {}", what, version));
    Checkpoint ck;
    ck.iteration = r.get<std::uint64_t>();
    ck.config_digest = r.get<std::uint64_t>();
    auto loaded = read_features(r, what, 0);
    ck.features = std::move(loaded.store);
    ck.layout = loaded.layout;
    for (Level level : kLevels) {
        const auto dim = static_cast<std::size_t>(level_dim(level, ck.layout));
        const auto count = r.get<std::uint32_t>();
        if (r.remaining() / (8 + 4 * dim) < count) fail(ErrorCode::Format, what + ": truncated");
        auto& list = ck.clusters.at(level);
        list.resize(count);
        for (GlobalCluster& c : list) {
            c.id = r.get<std::uint32_t>();
            c.member_count = r.get<std::uint32_t>();
            c.representative.resize(static_cast<Eigen::Index>(dim));
            r.get_f32s(std::span(c.representative.data(), dim));
        }
    }
    r.expect_end();
    return ck;
}

} // namespace cgseg
