#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace fqkl {

/// Frame layout, integers little-endian:
///   magic "FQKL" | version u8 | type u8 | payload length u64 | payload
enum class MsgType : std::uint8_t {
  Hello = 0x01,   // client -> server: {client id u32, sample count u64}
  Global = 0x02,  // server -> client: {round u32, checkpoint blob}
  Update = 0x03,  // client -> server: {round u32, sample count u64, checkpoint blob}
  Done = 0x04,    // server -> client: empty
};

struct WireMessage {
  MsgType type;
  std::vector<std::uint8_t> payload;
};

inline constexpr std::uint64_t kDefaultMaxPayload = std::uint64_t{1} << 30;  // 1 GiB

/// Byte stream the decoder pulls from; returns the number of bytes actually
/// read (short reads signal closed/truncated streams).
struct ByteSource {
  virtual ~ByteSource() = default;
  virtual std::size_t read(void* buf, std::size_t n) = 0;
};

/// In-memory source for tests and buffered payload parsing.
class SpanSource : public ByteSource {
 public:
  explicit SpanSource(std::span<const std::uint8_t> data) : data_(data) {}
  std::size_t read(void* buf, std::size_t n) override;

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> wire_encode(const WireMessage& msg);
WireMessage wire_decode(ByteSource& source, std::uint64_t max_payload = kDefaultMaxPayload);

// Typed payloads.
struct HelloPayload {
  std::uint32_t client_id;
  std::uint64_t sample_count;
};
struct GlobalPayload {
  std::uint32_t round;
  std::vector<std::uint8_t> checkpoint;
};
struct UpdatePayload {
  std::uint32_t round;
  std::uint64_t sample_count;
  std::vector<std::uint8_t> checkpoint;
};

WireMessage encode_hello(const HelloPayload& p);
WireMessage encode_global(const GlobalPayload& p);
WireMessage encode_update(const UpdatePayload& p);
WireMessage encode_done();

HelloPayload decode_hello(const WireMessage& msg);
GlobalPayload decode_global(const WireMessage& msg);
UpdatePayload decode_update(const WireMessage& msg);

}  // namespace fqkl
