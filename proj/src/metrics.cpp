#include "fqkl/metrics.hpp"

#include <thread>

#include "fqkl/errors.hpp"

namespace fqkl {

MetricsReport compute_metrics(const ConfusionMatrix& confusion) {
  const std::size_t c = confusion.size();
  if (c == 0) throw ShapeError("compute_metrics: empty confusion matrix");
  std::int64_t total = 0, diag = 0;
  std::vector<std::int64_t> row_sum(c, 0), col_sum(c, 0);
  for (std::size_t t = 0; t < c; ++t) {
    if (confusion[t].size() != c) throw ShapeError("compute_metrics: matrix must be square");
    for (std::size_t p = 0; p < c; ++p) {
      const std::int64_t n = confusion[t][p];
      if (n < 0) throw ShapeError("compute_metrics: negative count");
      total += n;
      row_sum[t] += n;
      col_sum[p] += n;
      if (t == p) diag += n;
    }
  }
  if (total == 0) throw ShapeError("compute_metrics: no samples");

  MetricsReport r;
  r.confusion = confusion;
  r.accuracy = static_cast<double>(diag) / static_cast<double>(total);
  for (std::size_t k = 0; k < c; ++k) {
    const double tp = static_cast<double>(confusion[k][k]);
    const double prec = col_sum[k] > 0 ? tp / static_cast<double>(col_sum[k]) : 0.0;
    const double rec = row_sum[k] > 0 ? tp / static_cast<double>(row_sum[k]) : 0.0;
    const double f1 = (prec + rec) > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    r.precision += prec;
    r.recall += rec;
    r.f1 += f1;
  }
  r.precision /= static_cast<double>(c);
  r.recall /= static_cast<double>(c);
  r.f1 /= static_cast<double>(c);
  return r;
}

ConfusionMatrix confusion_matrix(const ModelConfig& cfg, const ParamTree& params,
                                 const WindowedDataset& data) {
  data.validate();
  const std::size_t m = data.count();
  std::vector<int> predicted(m);

  // Eval forwards are independent; the tally below keeps a fixed order.
  const std::size_t workers = std::min<std::size_t>(std::thread::hardware_concurrency(), 8);
  auto eval_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const Tensor logits = model_forward(data.window(i), cfg, params, nullptr, false);
      std::size_t best = 0;
      for (std::size_t k = 1; k < logits.size(); ++k) {
        if (logits[k] > logits[best]) best = k;
      }
      predicted[i] = static_cast<int>(best);
    }
  };
  if (workers > 1 && m > 8) {
    std::vector<std::thread> pool;
    const std::size_t chunk = (m + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t lo = w * chunk;
      const std::size_t hi = std::min(m, lo + chunk);
      if (lo < hi) pool.emplace_back(eval_range, lo, hi);
    }
    for (auto& t : pool) t.join();
  } else {
    eval_range(0, m);
  }

  ConfusionMatrix cm(cfg.classes, std::vector<std::int64_t>(cfg.classes, 0));
  for (std::size_t i = 0; i < m; ++i) {
    cm[static_cast<std::size_t>(data.labels[i])][static_cast<std::size_t>(predicted[i])] += 1;
  }
  return cm;
}

}  // namespace fqkl
