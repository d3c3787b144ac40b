#include "fqkl/dataset_cache.hpp"

#include <cstring>
#include <fstream>

#include "bytes.hpp"
#include "fqkl/checkpoint.hpp"
#include "fqkl/errors.hpp"

namespace fqkl {

namespace {
constexpr char kMagic[4] = {'F', 'Q', 'K', 'D'};
constexpr std::uint8_t kVersion = 1;
}  // namespace

void save_dataset_cache(const std::filesystem::path& path, const WindowedDataset& ds) {
  ds.validate();
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(kVersion);
  bytes::put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.num_classes));
  bytes::put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.label_names.size()));
  for (const auto& name : ds.label_names) {
    bytes::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
  }
  bytes::put_f64(out, ds.sample_rate_hz);

  ParamTree tensors;
  tensors.insert("windows", ds.windows);
  Tensor labels({ds.labels.size()});
  for (std::size_t i = 0; i < ds.labels.size(); ++i) labels[i] = ds.labels[i];
  tensors.insert("labels", std::move(labels));
  Tensor subjects({ds.subjects.size()});
  for (std::size_t i = 0; i < ds.subjects.size(); ++i) subjects[i] = ds.subjects[i];
  tensors.insert("subjects", std::move(subjects));
  const auto blob = serialize_checkpoint(tensors);
  out.insert(out.end(), blob.begin(), blob.end());

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("short write to '" + path.string() + "'");
}

WindowedDataset load_dataset_cache(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open dataset cache '" + path.string() + "'");
  std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (pos + n > blob.size()) throw DataError("dataset cache '" + path.string() + "' is truncated");
  };
  need(5);
  if (std::memcmp(blob.data(), kMagic, 4) != 0) {
    throw DataError("'" + path.string() + "' is not a dataset cache (bad magic)");
  }
  if (blob[4] != kVersion) throw DataError("dataset cache version not supported");
  pos = 5;

  WindowedDataset ds;
  need(8);
  ds.num_classes = static_cast<int>(bytes::get<std::uint32_t>(blob.data() + pos));
  const auto name_count = bytes::get<std::uint32_t>(blob.data() + pos + 4);
  pos += 8;
  for (std::uint32_t i = 0; i < name_count; ++i) {
    need(4);
    const auto len = bytes::get<std::uint32_t>(blob.data() + pos);
    pos += 4;
    need(len);
    ds.label_names.emplace_back(reinterpret_cast<const char*>(blob.data() + pos), len);
    pos += len;
  }
  need(8);
  ds.sample_rate_hz = bytes::get_f64(blob.data() + pos);
  pos += 8;

  ParamTree tensors = deserialize_checkpoint(std::span(blob).subspan(pos));
  ds.windows = tensors.at("windows");
  const Tensor& labels = tensors.at("labels");
  const Tensor& subjects = tensors.at("subjects");
  ds.labels.resize(labels.size());
  ds.subjects.resize(subjects.size());
  for (std::size_t i = 0; i < labels.size(); ++i) ds.labels[i] = static_cast<int>(labels[i]);
  for (std::size_t i = 0; i < subjects.size(); ++i) ds.subjects[i] = static_cast<int>(subjects[i]);
  ds.validate();
  return ds;
}

}  // namespace fqkl
