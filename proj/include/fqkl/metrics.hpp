#pragma once

#include <cstdint>
#include <vector>

#include "fqkl/model.hpp"
#include "fqkl/data.hpp"

namespace fqkl {

using ConfusionMatrix = std::vector<std::vector<std::int64_t>>;  // [true][predicted]

struct MetricsReport {
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  double precision = 0.0;  // macro
  double recall = 0.0;     // macro
  double f1 = 0.0;         // macro
};

/// Accuracy plus macro-averaged precision/recall/F1. Classes whose
/// denominator is zero contribute 0 to the macro mean.
MetricsReport compute_metrics(const ConfusionMatrix& confusion);

/// Argmax-evaluate the model over a dataset and tally the confusion matrix.
ConfusionMatrix confusion_matrix(const ModelConfig& cfg, const ParamTree& params,
                                 const WindowedDataset& data);

}  // namespace fqkl
