#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>

#include "fqkl/data.hpp"

namespace fqkl {

/// Layout expected under the root directory: one subdirectory per subject,
/// each holding CSV files named `<sensor>_<activity>_<position>.csv` (e.g.
/// acc_walking_chest.csv). Files need a header row; columns may appear in
/// any order. Timestamps are milliseconds; a jump of more than
/// `gap_periods` sample periods splits the stream before windowing.
struct RwharOptions {
  std::string sensor = "acc";
  std::string body_position = "chest";
  std::string timestamp_column = "attr_time";
  std::array<std::string, 3> axis_columns = {"attr_x", "attr_y", "attr_z"};
  double sample_rate_hz = 50.0;
  double gap_periods = 3.0;
  std::size_t window = 100;
  std::size_t stride = 50;
  std::map<std::string, int> label_map;  // activity name -> class index
};

WindowedDataset load_rwhar(const std::filesystem::path& root, const RwharOptions& opts);

}  // namespace fqkl
