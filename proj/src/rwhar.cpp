#include "fqkl/rwhar.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <vector>

#include "fqkl/errors.hpp"

namespace fqkl {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    // trim surrounding whitespace and CR
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    fields.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  return fields;
}

struct ParsedName {
  std::string sensor, activity, position;
};

// <sensor>_<activity>_<position>.csv; the activity may itself contain
// underscores (climbing_down), so sensor is the first segment and position
// the last.
bool parse_file_name(const std::string& stem, ParsedName& out) {
  const auto first = stem.find('_');
  const auto last = stem.rfind('_');
  if (first == std::string::npos || last == first) return false;
  out.sensor = stem.substr(0, first);
  out.activity = stem.substr(first + 1, last - first - 1);
  out.position = stem.substr(last + 1);
  return !out.activity.empty() && !out.position.empty();
}

struct StreamData {
  std::vector<double> times;   // ms
  std::vector<double> values;  // rows x 3
};

StreamData read_csv(const std::filesystem::path& path, const RwharOptions& opts) {
  std::ifstream in(path);
  if (!in) throw DataError("rwhar: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("rwhar: " + path.string() + " is empty");

  const auto header = split_csv_line(line);
  auto find_col = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw DataError("rwhar: " + path.string() + " is missing required column '" + name + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t t_col = find_col(opts.timestamp_column);
  const std::array<std::size_t, 3> axis_cols = {find_col(opts.axis_columns[0]),
                                                find_col(opts.axis_columns[1]),
                                                find_col(opts.axis_columns[2])};

  StreamData data;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw DataError("rwhar: " + path.string() + ":" + std::to_string(line_no) +
                      " has " + std::to_string(fields.size()) + " fields, header has " +
                      std::to_string(header.size()));
    }
    try {
      data.times.push_back(std::stod(fields[t_col]));
      for (std::size_t a = 0; a < 3; ++a) data.values.push_back(std::stod(fields[axis_cols[a]]));
    } catch (const std::exception&) {
      throw DataError("rwhar: " + path.string() + ":" + std::to_string(line_no) +
                      " has a non-numeric value");
    }
  }
  return data;
}

}  // namespace

WindowedDataset load_rwhar(const std::filesystem::path& root, const RwharOptions& opts) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw DataError("rwhar: '" + root.string() + "' is not a directory");
  if (opts.label_map.empty()) throw DataError("rwhar: label map is empty");

  int num_classes = 0;
  for (const auto& [name, idx] : opts.label_map) num_classes = std::max(num_classes, idx + 1);

  std::vector<fs::path> subject_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) subject_dirs.push_back(entry.path());
  }
  std::sort(subject_dirs.begin(), subject_dirs.end());
  if (subject_dirs.empty()) {
    throw DataError("rwhar: no subject directories under '" + root.string() + "'");
  }

  const double period_ms = 1000.0 / opts.sample_rate_hz;
  const double max_gap_ms = opts.gap_periods * period_ms;

  std::vector<WindowedDataset> pieces;
  for (std::size_t subject = 0; subject < subject_dirs.size(); ++subject) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(subject_dirs[subject])) {
      if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      ParsedName name;
      if (!parse_file_name(file.stem().string(), name)) continue;
      if (name.sensor != opts.sensor || name.position != opts.body_position) continue;
      auto it = opts.label_map.find(name.activity);
      if (it == opts.label_map.end()) {
        throw DataError("rwhar: activity '" + name.activity + "' in " + file.string() +
                        " is not in the label map");
      }
      const int label = it->second;
      StreamData data = read_csv(file, opts);
      const std::size_t rows = data.times.size();
      // cut into contiguous segments at timestamp gaps, then window each
      std::size_t seg_start = 0;
      for (std::size_t r = 1; r <= rows; ++r) {
        const bool gap = r < rows && (data.times[r] - data.times[r - 1]) > max_gap_ms;
        if (r == rows || gap) {
          const std::size_t seg_len = r - seg_start;
          if (seg_len >= opts.window) {
            Tensor series = Tensor::from(
                {seg_len, 3}, std::vector<double>(data.values.begin() + seg_start * 3,
                                                  data.values.begin() + r * 3));
            std::vector<int> sample_labels(seg_len, label);
            pieces.push_back(window_series(series, sample_labels, opts.window, opts.stride,
                                           num_classes, static_cast<int>(subject)));
            pieces.back().sample_rate_hz = opts.sample_rate_hz;
          }
          seg_start = r;
        }
      }
    }
  }
  if (pieces.empty()) {
    throw DataError("rwhar: no usable data for sensor '" + opts.sensor + "' at position '" +
                    opts.body_position + "' under '" + root.string() + "'");
  }

  std::size_t total = 0;
  for (const auto& p : pieces) total += p.count();
  WindowedDataset out;
  out.windows = Tensor({total, opts.window, 3});
  out.labels.reserve(total);
  out.subjects.reserve(total);
  out.num_classes = num_classes;
  out.sample_rate_hz = opts.sample_rate_hz;
  out.label_names.assign(num_classes, "");
  for (const auto& [name, idx] : opts.label_map) out.label_names[idx] = name;

  std::size_t offset = 0;
  for (const auto& p : pieces) {
    std::copy(p.windows.data(), p.windows.data() + p.windows.size(), out.windows.data() + offset);
    offset += p.windows.size();
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    out.subjects.insert(out.subjects.end(), p.subjects.begin(), p.subjects.end());
  }
  return out;
}

}  // namespace fqkl
