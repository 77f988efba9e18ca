#pragma once

// Weight sampling during training and the on-disk checkpoint store.
//
// TWA1 file layout (little-endian):
//   bytes 0-3   magic "TWA1"
//   bytes 4-7   format version, uint32 = 1
//   bytes 8-15  D, uint64
//   then D IEEE-754 float32 values.
// A manifest (JSON) lists the checkpoints of one run in step order:
//   {"D": int, "entries": [{"step", "epoch", "val_metric" (number|null), "path"}]}
// Relative entry paths resolve against the manifest's directory.

#include "twa/param_space.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace twa {

enum class SamplingMode { every_n_epochs, every_n_steps };
enum class SamplingPhase { head, tail };

struct SamplingPolicy {
    SamplingMode mode = SamplingMode::every_n_epochs;
    std::size_t n = 1;
    SamplingPhase phase = SamplingPhase::head;
    std::optional<std::size_t> limit;
    /// Restricts sampling to the first (head) or last (tail) `window_epochs` epochs.
    std::optional<std::size_t> window_epochs;

    void validate() const;
};

/// `step` counts completed optimizer steps (1-based), `epoch` is the 0-based epoch
/// that step belongs to, `taken` is the number of checkpoints already emitted.
/// Tail windows need `total_epochs`; without it the window is ignored.
bool should_sample(const SamplingPolicy& policy, std::size_t epoch, std::size_t step,
                   std::size_t steps_per_epoch, std::size_t taken = 0,
                   std::size_t total_epochs = 0);

struct CheckpointEntry {
    std::size_t step = 0;
    std::size_t epoch = 0;
    std::optional<double> val_metric;
    std::string path;
};

/// Ordered sampled weights plus their metadata. Weights are held widened to
/// double, one checkpoint per column.
class CheckpointSet {
public:
    CheckpointSet() = default;
    CheckpointSet(Matrix<double> weights, std::vector<CheckpointEntry> entries,
                  std::filesystem::path manifest_path = {});

    /// In-memory set; entries get steps 1..n unless given.
    static CheckpointSet from_vectors(const std::vector<ParamVector>& ws,
                                      std::vector<CheckpointEntry> entries = {});

    std::size_t size() const { return entries_.size(); }
    std::size_t dim() const { return static_cast<std::size_t>(weights_.rows()); }
    const std::vector<CheckpointEntry>& entries() const { return entries_; }
    const Matrix<double>& weights() const { return weights_; }
    ParamVector checkpoint(std::size_t i) const;
    const std::filesystem::path& manifest_path() const { return manifest_path_; }

private:
    Matrix<double> weights_; // D x n
    std::vector<CheckpointEntry> entries_;
    std::filesystem::path manifest_path_;
};

void write_twa1(const std::filesystem::path& path, const ParamVector& w);
ParamVector read_twa1(const std::filesystem::path& path);

/// Writes w next to `manifest_path` and records it in the manifest (created on
/// first use). Returns the checkpoint file path.
std::filesystem::path save_checkpoint(const std::filesystem::path& manifest_path,
                                      const ParamVector& w, CheckpointEntry meta);

CheckpointSet load_set(const std::filesystem::path& manifest_path);

} // namespace twa
