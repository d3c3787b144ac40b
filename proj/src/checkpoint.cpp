#include "fqkl/checkpoint.hpp"

#include <fstream>
#include <string>

#include "bytes.hpp"
#include "fqkl/errors.hpp"

namespace fqkl {

namespace {
constexpr char kMagic[4] = {'F', 'Q', 'K', 'C'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kDtypeF64 = 0;
constexpr std::uint8_t kDtypeF32 = 1;

struct Reader {
  std::span<const std::uint8_t> blob;
  std::size_t pos = 0;
  std::string context = "header";

  void need(std::size_t n) {
    if (pos + n > blob.size()) {
      throw CheckpointError(CheckpointFault::Truncated,
                            "checkpoint truncated while reading " + context);
    }
  }
  template <class T>
  T take() {
    need(sizeof(T));
    T v = bytes::get<T>(blob.data() + pos);
    pos += sizeof(T);
    return v;
  }
  const std::uint8_t* take_raw(std::size_t n) {
    need(n);
    const std::uint8_t* p = blob.data() + pos;
    pos += n;
    return p;
  }
};
}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ParamTree& params, bool as_f32) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(kVersion);
  bytes::put<std::uint64_t>(out, params.size());
  for (const auto& [name, tensor] : params) {
    bytes::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(as_f32 ? kDtypeF32 : kDtypeF64);
    out.push_back(static_cast<std::uint8_t>(tensor.rank()));
    for (std::size_t e : tensor.shape()) bytes::put<std::uint64_t>(out, e);
    for (double v : tensor.values()) {
      if (as_f32) {
        bytes::put_f32(out, static_cast<float>(v));
      } else {
        bytes::put_f64(out, v);
      }
    }
  }
  return out;
}

ParamTree deserialize_checkpoint(std::span<const std::uint8_t> blob) {
  Reader r{blob};
  r.need(4);
  if (std::memcmp(blob.data(), kMagic, 4) != 0) {
    throw CheckpointError(CheckpointFault::BadMagic, "checkpoint: bad magic");
  }
  r.pos = 4;
  const auto version = r.take<std::uint8_t>();
  if (version != kVersion) {
    throw CheckpointError(CheckpointFault::BadVersion,
                          "checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = r.take<std::uint64_t>();

  ParamTree tree;
  for (std::uint64_t i = 0; i < count; ++i) {
    r.context = "tensor " + std::to_string(i) + " name";
    const auto name_len = r.take<std::uint32_t>();
    const std::uint8_t* name_ptr = r.take_raw(name_len);
    std::string name(reinterpret_cast<const char*>(name_ptr), name_len);
    r.context = "tensor '" + name + "'";
    if (tree.contains(name)) {
      throw CheckpointError(CheckpointFault::DuplicateName,
                            "checkpoint: duplicate tensor name '" + name + "'");
    }
    const auto dtype = r.take<std::uint8_t>();
    if (dtype != kDtypeF64 && dtype != kDtypeF32) {
      throw CheckpointError(CheckpointFault::BadDtype,
                            "checkpoint: unknown dtype code " + std::to_string(dtype) +
                                " for tensor '" + name + "'");
    }
    const auto rank = r.take<std::uint8_t>();
    std::vector<std::size_t> shape(rank);
    std::size_t numel = 1;
    for (std::uint8_t a = 0; a < rank; ++a) {
      shape[a] = static_cast<std::size_t>(r.take<std::uint64_t>());
      numel *= shape[a];
    }
    std::vector<double> values(numel);
    if (dtype == kDtypeF64) {
      for (std::size_t v = 0; v < numel; ++v) values[v] = bytes::get_f64(r.take_raw(8));
    } else {
      for (std::size_t v = 0; v < numel; ++v) values[v] = static_cast<double>(bytes::get_f32(r.take_raw(4)));
    }
    tree.insert(std::move(name), Tensor::from(std::move(shape), std::move(values)));
  }
  return tree;
}

void save_checkpoint_file(const std::filesystem::path& path, const ParamTree& params, bool as_f32) {
  const auto blob = serialize_checkpoint(params, as_f32);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (!out) throw DataError("short write to '" + path.string() + "'");
}

ParamTree load_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  return deserialize_checkpoint(blob);
}

}  // namespace fqkl
