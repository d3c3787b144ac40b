#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fqkl/tensor.hpp"

namespace fqkl {

/// Fixed-length windows cut from sensor streams, with one label and one
/// subject id per window.
struct WindowedDataset {
  Tensor windows;                        // M x T x d
  std::vector<int> labels;               // M, each < num_classes
  std::vector<int> subjects;             // M
  int num_classes = 0;
  std::vector<std::string> label_names;  // optional, size num_classes when set
  double sample_rate_hz = 0.0;

  std::size_t count() const { return windows.rank() == 3 ? windows.extent(0) : 0; }
  std::size_t window_len() const { return windows.extent(1); }
  std::size_t channels() const { return windows.extent(2); }
  /// Window i as a T x d view materialized into a tensor.
  Tensor window(std::size_t i) const;
  void validate() const;
};

/// Cut a labelled multichannel stream into windows of length `win` starting
/// at 0, s, 2s, ... (trailing partial window dropped). The window label is
/// the majority vote over per-sample labels, ties broken by the smaller
/// class index.
WindowedDataset window_series(const Tensor& series, const std::vector<int>& labels,
                              std::size_t win, std::size_t stride, int num_classes,
                              int subject = 0);

/// Per-channel standardization statistics; compute them on the training
/// split only.
struct NormStats {
  std::vector<double> mean, std;
  static NormStats compute(const WindowedDataset& train);
};

/// (x - mean) / max(std, 1e-8) per channel.
WindowedDataset normalize(const WindowedDataset& ds, const NormStats& stats);

struct PartitionPlan {
  std::vector<std::vector<int>> shards;  // window indices per client
  std::string strategy;
  std::uint64_t seed = 0;
};

/// Deal windows to K clients. "iid": seeded shuffle then round-robin (shard
/// sizes differ by at most 1). "by-subject": subjects shuffled and dealt
/// whole.
PartitionPlan partition(const WindowedDataset& ds, std::size_t k, std::string_view strategy,
                        std::uint64_t seed);

/// Deterministic multichannel sine-class generator: class c, channel j runs
/// at frequency 1 + c + 0.5 j cycles per window, with one random phase per
/// window plus white noise. Balanced classes; subject ids round-robin over 8
/// pseudo-subjects.
WindowedDataset gen_synthetic(int num_classes, std::size_t windows_per_class, std::size_t window,
                              std::size_t channels, double noise_sd, std::uint64_t seed);

/// Copy the selected windows (indices into ds).
WindowedDataset select_windows(const WindowedDataset& ds, std::span<const int> indices);

/// Window-level (default) or subject-level holdout split.
std::pair<WindowedDataset, WindowedDataset> split_train_test(const WindowedDataset& ds,
                                                             double test_fraction,
                                                             bool by_subject,
                                                             std::uint64_t seed);

}  // namespace fqkl
