#include "fqkl/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>

#include "fqkl/errors.hpp"
#include "fqkl/rng.hpp"

namespace fqkl {

Tensor WindowedDataset::window(std::size_t i) const {
  const std::size_t t = window_len();
  const std::size_t d = channels();
  Tensor w({t, d});
  const double* src = windows.data() + i * t * d;
  std::copy(src, src + t * d, w.data());
  return w;
}

void WindowedDataset::validate() const {
  if (windows.rank() != 3 || count() == 0) throw DataError("dataset: windows must be M x T x d, M >= 1");
  if (labels.size() != count() || subjects.size() != count()) {
    throw DataError("dataset: labels/subjects size mismatch");
  }
  for (int l : labels) {
    if (l < 0 || l >= num_classes) throw DataError("dataset: label out of range");
  }
  if (!label_names.empty() && label_names.size() != static_cast<std::size_t>(num_classes)) {
    throw DataError("dataset: label_names must match num_classes");
  }
}

WindowedDataset window_series(const Tensor& series, const std::vector<int>& labels,
                              std::size_t win, std::size_t stride, int num_classes,
                              int subject) {
  if (series.rank() != 2) throw DataError("window_series: series must be T_total x d");
  const std::size_t t_total = series.extent(0);
  const std::size_t d = series.extent(1);
  if (labels.size() != t_total) throw DataError("window_series: per-sample label count mismatch");
  if (win < 1 || stride < 1) throw DataError("window_series: win and stride must be >= 1");
  if (t_total < win) {
    throw DataError("window_series: stream of length " + std::to_string(t_total) +
                    " is shorter than the window " + std::to_string(win));
  }

  const std::size_t m = (t_total - win) / stride + 1;
  WindowedDataset out;
  out.windows = Tensor({m, win, d});
  out.labels.resize(m);
  out.subjects.assign(m, subject);
  out.num_classes = num_classes;

  std::vector<std::size_t> votes(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t start = i * stride;
    std::copy(series.data() + start * d, series.data() + (start + win) * d,
              out.windows.data() + i * win * d);
    std::fill(votes.begin(), votes.end(), 0);
    for (std::size_t t = start; t < start + win; ++t) {
      const int l = labels[t];
      if (l < 0 || l >= num_classes) throw DataError("window_series: sample label out of range");
      ++votes[static_cast<std::size_t>(l)];
    }
    // majority vote; ties go to the smaller class index
    std::size_t best = 0;
    for (std::size_t c = 1; c < votes.size(); ++c) {
      if (votes[c] > votes[best]) best = c;
    }
    out.labels[i] = static_cast<int>(best);
  }
  return out;
}

NormStats NormStats::compute(const WindowedDataset& train) {
  train.validate();
  const std::size_t d = train.channels();
  const std::size_t per_channel = train.count() * train.window_len();
  NormStats s;
  s.mean.assign(d, 0.0);
  s.std.assign(d, 0.0);
  const double* x = train.windows.data();
  const std::size_t total = train.windows.size();
  for (std::size_t i = 0; i < total; ++i) s.mean[i % d] += x[i];
  for (std::size_t c = 0; c < d; ++c) s.mean[c] /= static_cast<double>(per_channel);
  for (std::size_t i = 0; i < total; ++i) {
    const double diff = x[i] - s.mean[i % d];
    s.std[i % d] += diff * diff;
  }
  for (std::size_t c = 0; c < d; ++c) s.std[c] = std::sqrt(s.std[c] / static_cast<double>(per_channel));
  return s;
}

WindowedDataset normalize(const WindowedDataset& ds, const NormStats& stats) {
  if (stats.mean.size() != ds.channels() || stats.std.size() != ds.channels()) {
    throw DataError("normalize: stats channel count does not match dataset");
  }
  constexpr double kStdFloor = 1e-8;
  WindowedDataset out = ds;
  const std::size_t d = ds.channels();
  double* x = out.windows.data();
  for (std::size_t i = 0; i < out.windows.size(); ++i) {
    const std::size_t c = i % d;
    x[i] = (x[i] - stats.mean[c]) / std::max(stats.std[c], kStdFloor);
  }
  return out;
}

PartitionPlan partition(const WindowedDataset& ds, std::size_t k, std::string_view strategy,
                        std::uint64_t seed) {
  ds.validate();
  if (k < 1) throw DataError("partition: need at least one client");
  const std::size_t m = ds.count();
  PartitionPlan plan;
  plan.strategy = std::string(strategy);
  plan.seed = seed;
  plan.shards.resize(k);

  if (strategy == "iid") {
    if (k > m) throw DataError("partition: more clients than windows");
    std::vector<int> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    rng.shuffle(idx);
    for (std::size_t i = 0; i < m; ++i) plan.shards[i % k].push_back(idx[i]);
  } else if (strategy == "by-subject") {
    std::set<int> subject_set(ds.subjects.begin(), ds.subjects.end());
    std::vector<int> subjects(subject_set.begin(), subject_set.end());
    if (k > subjects.size()) {
      throw DataError("partition: by-subject needs at least as many subjects as clients (" +
                      std::to_string(subjects.size()) + " subjects, " + std::to_string(k) +
                      " clients)");
    }
    Rng rng(seed);
    rng.shuffle(subjects);
    std::map<int, std::size_t> shard_of;
    for (std::size_t i = 0; i < subjects.size(); ++i) shard_of[subjects[i]] = i % k;
    for (std::size_t i = 0; i < m; ++i) {
      plan.shards[shard_of[ds.subjects[i]]].push_back(static_cast<int>(i));
    }
  } else {
    throw DataError("partition: unknown strategy '" + plan.strategy + "' (iid | by-subject)");
  }
  return plan;
}

WindowedDataset gen_synthetic(int num_classes, std::size_t windows_per_class, std::size_t window,
                              std::size_t channels, double noise_sd, std::uint64_t seed) {
  if (num_classes < 2) throw DataError("gen_synthetic: need at least 2 classes");
  if (windows_per_class < 1 || window < 1 || channels < 1) {
    throw DataError("gen_synthetic: all extents must be >= 1");
  }
  const std::size_t m = static_cast<std::size_t>(num_classes) * windows_per_class;
  WindowedDataset out;
  out.windows = Tensor({m, window, channels});
  out.labels.resize(m);
  out.subjects.resize(m);
  out.num_classes = num_classes;
  out.sample_rate_hz = 50.0;
  out.label_names.resize(num_classes);
  for (int c = 0; c < num_classes; ++c) out.label_names[c] = "class" + std::to_string(c);

  Rng rng(seed);
  std::size_t i = 0;
  for (int c = 0; c < num_classes; ++c) {
    for (std::size_t w = 0; w < windows_per_class; ++w, ++i) {
      out.labels[i] = c;
      out.subjects[i] = static_cast<int>(i % 8);
      const double phase = 2.0 * M_PI * rng.uniform();
      double* dst = out.windows.data() + i * window * channels;
      for (std::size_t t = 0; t < window; ++t) {
        for (std::size_t j = 0; j < channels; ++j) {
          const double freq = 1.0 + c + 0.5 * static_cast<double>(j);
          const double clean =
              std::sin(2.0 * M_PI * freq * static_cast<double>(t) / static_cast<double>(window) + phase);
          dst[t * channels + j] = clean + (noise_sd > 0.0 ? noise_sd * rng.normal() : 0.0);
        }
      }
    }
  }
  return out;
}

WindowedDataset select_windows(const WindowedDataset& ds, std::span<const int> indices) {
  const std::size_t t = ds.window_len();
  const std::size_t d = ds.channels();
  WindowedDataset out;
  out.windows = Tensor({indices.size(), t, d});
  out.labels.resize(indices.size());
  out.subjects.resize(indices.size());
  out.num_classes = ds.num_classes;
  out.label_names = ds.label_names;
  out.sample_rate_hz = ds.sample_rate_hz;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = static_cast<std::size_t>(indices[i]);
    std::copy(ds.windows.data() + src * t * d, ds.windows.data() + (src + 1) * t * d,
              out.windows.data() + i * t * d);
    out.labels[i] = ds.labels[src];
    out.subjects[i] = ds.subjects[src];
  }
  return out;
}

std::pair<WindowedDataset, WindowedDataset> split_train_test(const WindowedDataset& ds,
                                                             double test_fraction,
                                                             bool by_subject,
                                                             std::uint64_t seed) {
  ds.validate();
  if (test_fraction <= 0.0 || test_fraction >= 1.0) {
    throw DataError("split: test_fraction must lie in (0, 1)");
  }
  std::vector<int> train_idx, test_idx;
  Rng rng(seed);
  if (by_subject) {
    std::set<int> subject_set(ds.subjects.begin(), ds.subjects.end());
    std::vector<int> subjects(subject_set.begin(), subject_set.end());
    if (subjects.size() < 2) throw DataError("split: by-subject needs at least 2 subjects");
    rng.shuffle(subjects);
    std::size_t n_test = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                      std::llround(test_fraction * subjects.size())));
    if (n_test >= subjects.size()) n_test = subjects.size() - 1;
    std::set<int> test_subjects(subjects.begin(), subjects.begin() + n_test);
    for (std::size_t i = 0; i < ds.count(); ++i) {
      (test_subjects.count(ds.subjects[i]) ? test_idx : train_idx).push_back(static_cast<int>(i));
    }
  } else {
    std::vector<int> idx(ds.count());
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    std::size_t n_test = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                      std::llround(test_fraction * idx.size())));
    if (n_test >= idx.size()) n_test = idx.size() - 1;
    test_idx.assign(idx.begin(), idx.begin() + n_test);
    train_idx.assign(idx.begin() + n_test, idx.end());
  }
  if (train_idx.empty() || test_idx.empty()) throw DataError("split: empty train or test split");
  return {select_windows(ds, train_idx), select_windows(ds, test_idx)};
}

}  // namespace fqkl
