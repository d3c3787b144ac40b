#include "fqkl/wire.hpp"

#include <cstring>
#include <string>

#include "bytes.hpp"
#include "fqkl/errors.hpp"

namespace fqkl {

namespace {
constexpr char kMagic[4] = {'F', 'Q', 'K', 'L'};
constexpr std::uint8_t kVersion = 1;

void read_exact(ByteSource& src, void* buf, std::size_t n, const char* what) {
  std::size_t got = 0;
  auto* p = static_cast<std::uint8_t*>(buf);
  while (got < n) {
    const std::size_t r = src.read(p + got, n - got);
    if (r == 0) {
      throw WireError(WireFault::Truncated, std::string("wire: stream ended while reading ") + what);
    }
    got += r;
  }
}

bool known_type(std::uint8_t t) {
  return t >= static_cast<std::uint8_t>(MsgType::Hello) && t <= static_cast<std::uint8_t>(MsgType::Done);
}
}  // namespace

std::size_t SpanSource::read(void* buf, std::size_t n) {
  const std::size_t take = std::min(n, data_.size() - pos_);
  std::memcpy(buf, data_.data() + pos_, take);
  pos_ += take;
  return take;
}

std::vector<std::uint8_t> wire_encode(const WireMessage& msg) {
  std::vector<std::uint8_t> out;
  out.reserve(14 + msg.payload.size());
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(msg.type));
  bytes::put<std::uint64_t>(out, msg.payload.size());
  out.insert(out.end(), msg.payload.begin(), msg.payload.end());
  return out;
}

WireMessage wire_decode(ByteSource& source, std::uint64_t max_payload) {
  std::uint8_t header[14];
  read_exact(source, header, sizeof(header), "frame header");
  if (std::memcmp(header, kMagic, 4) != 0) {
    throw WireError(WireFault::BadMagic, "wire: bad magic");
  }
  if (header[4] != kVersion) {
    throw WireError(WireFault::BadVersion,
                    "wire: unsupported version " + std::to_string(header[4]));
  }
  if (!known_type(header[5])) {
    throw WireError(WireFault::UnknownType,
                    "wire: unknown message type 0x" + std::to_string(header[5]));
  }
  const std::uint64_t len = bytes::get<std::uint64_t>(header + 6);
  if (len > max_payload) {
    throw WireError(WireFault::Oversize, "wire: payload of " + std::to_string(len) +
                                             " bytes exceeds limit " + std::to_string(max_payload));
  }
  WireMessage msg;
  msg.type = static_cast<MsgType>(header[5]);
  msg.payload.resize(static_cast<std::size_t>(len));
  if (len > 0) read_exact(source, msg.payload.data(), msg.payload.size(), "payload");
  return msg;
}

WireMessage encode_hello(const HelloPayload& p) {
  WireMessage m{MsgType::Hello, {}};
  bytes::put<std::uint32_t>(m.payload, p.client_id);
  bytes::put<std::uint64_t>(m.payload, p.sample_count);
  return m;
}

WireMessage encode_global(const GlobalPayload& p) {
  WireMessage m{MsgType::Global, {}};
  bytes::put<std::uint32_t>(m.payload, p.round);
  m.payload.insert(m.payload.end(), p.checkpoint.begin(), p.checkpoint.end());
  return m;
}

WireMessage encode_update(const UpdatePayload& p) {
  WireMessage m{MsgType::Update, {}};
  bytes::put<std::uint32_t>(m.payload, p.round);
  bytes::put<std::uint64_t>(m.payload, p.sample_count);
  m.payload.insert(m.payload.end(), p.checkpoint.begin(), p.checkpoint.end());
  return m;
}

WireMessage encode_done() { return WireMessage{MsgType::Done, {}}; }

namespace {
void check_payload(const WireMessage& msg, MsgType want, std::size_t min_len, const char* name) {
  if (msg.type != want) {
    throw WireError(WireFault::UnknownType, std::string("wire: expected ") + name + " message");
  }
  if (msg.payload.size() < min_len) {
    throw WireError(WireFault::Truncated, std::string("wire: ") + name + " payload too short");
  }
}
}  // namespace

HelloPayload decode_hello(const WireMessage& msg) {
  check_payload(msg, MsgType::Hello, 12, "HELLO");
  return {bytes::get<std::uint32_t>(msg.payload.data()), bytes::get<std::uint64_t>(msg.payload.data() + 4)};
}

GlobalPayload decode_global(const WireMessage& msg) {
  check_payload(msg, MsgType::Global, 4, "GLOBAL");
  return {bytes::get<std::uint32_t>(msg.payload.data()),
          std::vector<std::uint8_t>(msg.payload.begin() + 4, msg.payload.end())};
}

UpdatePayload decode_update(const WireMessage& msg) {
  check_payload(msg, MsgType::Update, 12, "UPDATE");
  return {bytes::get<std::uint32_t>(msg.payload.data()), bytes::get<std::uint64_t>(msg.payload.data() + 4),
          std::vector<std::uint8_t>(msg.payload.begin() + 12, msg.payload.end())};
}

}  // namespace fqkl
