#include "twa/checkpoints.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <system_error>

namespace twa {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<char, 4> kMagic{'T', 'W', 'A', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 16;

template <typename T>
void put_le(std::string& buf, T v) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const unsigned char* p) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
    return v;
}

void write_file_atomically(const fs::path& path, const std::string& bytes) {
    fs::path tmp = path;
    tmp += ".tmp";
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw StorageError("cannot create " + path.parent_path().string() + ": " + ec.message());
    }
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw StorageError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw StorageError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw StorageError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

json entry_to_json(const CheckpointEntry& e) {
    json j{{"step", e.step}, {"epoch", e.epoch}, {"path", e.path}};
    j["val_metric"] = e.val_metric ? json(*e.val_metric) : json(nullptr);
    return j;
}

CheckpointEntry entry_from_json(const json& j) {
    CheckpointEntry e;
    e.step = j.at("step").get<std::size_t>();
    e.epoch = j.at("epoch").get<std::size_t>();
    if (j.contains("val_metric") && !j.at("val_metric").is_null()) e.val_metric = j.at("val_metric").get<double>();
    e.path = j.at("path").get<std::string>();
    return e;
}

struct Manifest {
    std::size_t dim = 0;
    std::vector<CheckpointEntry> entries;
};

Manifest read_manifest(const fs::path& path) {
    if (!fs::exists(path)) throw MissingFileError(path.string(), "manifest not found");
    std::ifstream in(path);
    if (!in) throw MissingFileError(path.string(), "cannot open manifest");
    try {
        const json j = json::parse(in);
        Manifest m;
        m.dim = j.at("D").get<std::size_t>();
        for (const auto& e : j.at("entries")) m.entries.push_back(entry_from_json(e));
        return m;
    } catch (const json::exception& e) {
        throw CorruptFileError(path.string(), std::string("malformed manifest: ") + e.what());
    }
}

fs::path resolve(const fs::path& manifest, const std::string& entry_path) {
    fs::path p(entry_path);
    return p.is_absolute() ? p : manifest.parent_path() / p;
}

} // namespace

void SamplingPolicy::validate() const {
    if (n < 1) throw InputError("sampling interval must be >= 1");
    if (limit && *limit < 1) throw InputError("sampling limit must be >= 1");
    if (window_epochs && *window_epochs < 1) throw InputError("sampling window must be >= 1 epoch");
}

bool should_sample(const SamplingPolicy& policy, std::size_t epoch, std::size_t step,
                   std::size_t steps_per_epoch, std::size_t taken, std::size_t total_epochs) {
    policy.validate();
    if (step == 0 || steps_per_epoch == 0) return false;
    if (policy.limit && taken >= *policy.limit) return false;
    if (policy.window_epochs) {
        const std::size_t window = *policy.window_epochs;
        if (policy.phase == SamplingPhase::head && epoch >= window) return false;
        if (policy.phase == SamplingPhase::tail && total_epochs > 0 && epoch + window < total_epochs)
            return false;
    }
    if (policy.mode == SamplingMode::every_n_steps) return step % policy.n == 0;
    return step % steps_per_epoch == 0 && (epoch + 1) % policy.n == 0;
}

CheckpointSet::CheckpointSet(Matrix<double> weights, std::vector<CheckpointEntry> entries,
                             fs::path manifest_path)
    : weights_(std::move(weights)), entries_(std::move(entries)), manifest_path_(std::move(manifest_path)) {
    if (static_cast<std::size_t>(weights_.cols()) != entries_.size())
        throw DimensionError("checkpoint count does not match entry count");
    if (entries_.empty()) throw EmptyInputError("checkpoint set is empty");
    if (weights_.rows() == 0) throw InputError("checkpoints must have D > 0");
    for (std::size_t i = 1; i < entries_.size(); ++i)
        if (entries_[i].step < entries_[i - 1].step) throw InputError("checkpoint entries must be in step order");
    if (!weights_.allFinite()) throw NumericError("checkpoint weights contain non-finite values");
}

CheckpointSet CheckpointSet::from_vectors(const std::vector<ParamVector>& ws,
                                          std::vector<CheckpointEntry> entries) {
    if (ws.empty()) throw EmptyInputError("checkpoint set is empty");
    const Eigen::Index d = ws.front().size();
    Matrix<double> m(d, static_cast<Eigen::Index>(ws.size()));
    for (std::size_t i = 0; i < ws.size(); ++i) {
        if (ws[i].size() != d) throw DimensionError("checkpoints must share D");
        m.col(static_cast<Eigen::Index>(i)) = ws[i];
    }
    if (entries.empty()) {
        for (std::size_t i = 0; i < ws.size(); ++i) entries.push_back({i + 1, i, std::nullopt, {}});
    }
    return CheckpointSet(std::move(m), std::move(entries));
}

ParamVector CheckpointSet::checkpoint(std::size_t i) const {
    if (i >= size()) throw IndexError("checkpoint index " + std::to_string(i) + " out of range");
    return weights_.col(static_cast<Eigen::Index>(i));
}

void write_twa1(const fs::path& path, const ParamVector& w) {
    if (w.size() == 0) throw InputError("cannot write an empty parameter vector");
    if (!w.cast<float>().allFinite()) throw NumericError("weights are not finite at float32 precision");
    std::string buf;
    buf.reserve(kHeaderBytes + 4 * static_cast<std::size_t>(w.size()));
    buf.append(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(buf, kVersion);
    put_le<std::uint64_t>(buf, static_cast<std::uint64_t>(w.size()));
    for (Eigen::Index i = 0; i < w.size(); ++i)
        put_le<std::uint32_t>(buf, std::bit_cast<std::uint32_t>(static_cast<float>(w[i])));
    write_file_atomically(path, buf);
}

ParamVector read_twa1(const fs::path& path) {
    if (!fs::exists(path)) throw MissingFileError(path.string(), "checkpoint file not found");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFileError(path.string(), "cannot open checkpoint file");
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < kHeaderBytes) {
        if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic.data(), 4) != 0)
            throw BadMagicError(path.string(), "bad magic");
        throw TruncatedFileError(path.string(), "truncated header (" + std::to_string(bytes.size()) + " bytes)");
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (std::memcmp(p, kMagic.data(), 4) != 0) throw BadMagicError(path.string(), "bad magic");
    const auto version = get_le<std::uint32_t>(p + 4);
    if (version != kVersion) throw CorruptFileError(path.string(), "unsupported format version " + std::to_string(version));
    const auto dim = get_le<std::uint64_t>(p + 8);
    const std::size_t payload = bytes.size() - kHeaderBytes;
    if (dim == 0) throw CorruptFileError(path.string(), "D = 0");
    if (payload / 4 < dim) throw TruncatedFileError(path.string(), "payload holds " + std::to_string(payload) + " bytes, expected " + std::to_string(dim * 4));
    if (payload != dim * 4) throw CorruptFileError(path.string(), "trailing bytes after payload");
    ParamVector w(static_cast<Eigen::Index>(dim));
    for (std::uint64_t i = 0; i < dim; ++i)
        w[static_cast<Eigen::Index>(i)] = std::bit_cast<float>(get_le<std::uint32_t>(p + kHeaderBytes + 4 * i));
    if (!w.allFinite()) throw CorruptFileError(path.string(), "non-finite value in payload");
    return w;
}

fs::path save_checkpoint(const fs::path& manifest_path, const ParamVector& w, CheckpointEntry meta) {
    if (w.size() == 0) throw InputError("cannot save an empty parameter vector");
    Manifest m;
    if (fs::exists(manifest_path)) {
        m = read_manifest(manifest_path);
        if (m.dim != static_cast<std::size_t>(w.size()))
            throw DimensionMismatchError(manifest_path.string(), "manifest holds D=" + std::to_string(m.dim) +
                                                                     ", checkpoint has D=" + std::to_string(w.size()));
    }
    m.dim = static_cast<std::size_t>(w.size());

    if (meta.path.empty()) meta.path = "ckpt_step" + std::to_string(meta.step) + ".twa1";
    const fs::path file = resolve(manifest_path, meta.path);
    write_twa1(file, w);

    const auto pos = std::upper_bound(m.entries.begin(), m.entries.end(), meta.step,
                                      [](std::size_t s, const CheckpointEntry& e) { return s < e.step; });
    m.entries.insert(pos, meta);

    json j{{"D", m.dim}, {"entries", json::array()}};
    for (const auto& e : m.entries) j["entries"].push_back(entry_to_json(e));
    write_file_atomically(manifest_path, j.dump(2) + "\n");
    return file;
}

CheckpointSet load_set(const fs::path& manifest_path) {
    Manifest m = read_manifest(manifest_path);
    if (m.entries.empty()) throw ValidationError(manifest_path.string(), "manifest lists no checkpoints");
    if (m.dim == 0) throw CorruptFileError(manifest_path.string(), "manifest declares D = 0");
    std::stable_sort(m.entries.begin(), m.entries.end(),
                     [](const CheckpointEntry& a, const CheckpointEntry& b) { return a.step < b.step; });

    Matrix<double> weights(static_cast<Eigen::Index>(m.dim), static_cast<Eigen::Index>(m.entries.size()));
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        const fs::path file = resolve(manifest_path, m.entries[i].path);
        const ParamVector w = read_twa1(file);
        if (static_cast<std::size_t>(w.size()) != m.dim)
            throw DimensionMismatchError(file.string(), "has D=" + std::to_string(w.size()) +
                                                            ", manifest declares D=" + std::to_string(m.dim));
        weights.col(static_cast<Eigen::Index>(i)) = w;
    }
    return CheckpointSet(std::move(weights), std::move(m.entries), manifest_path);
}

} // namespace twa
