#include "livemath/hash.hpp"

#include <array>
#include <fstream>
#include <mutex>

#include <fmt/format.h>
#include <sodium.h>

#include "livemath/error.hpp"

namespace livemath {

namespace {

void ensure_sodium() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) throw Error("internal", "libsodium initialisation failed");
  });
}

std::string to_hex(const unsigned char* data, std::size_t len) {
  std::string out;
  out.reserve(len * 2);
  for (std::size_t i = 0; i < len; ++i) out += fmt::format("{:02x}", data[i]);
  return out;
}

}  // namespace

Fingerprint fingerprint128(std::string_view bytes) {
  ensure_sodium();
  std::array<unsigned char, 16> out{};
  crypto_generichash(out.data(), out.size(), reinterpret_cast<const unsigned char*>(bytes.data()),
                     bytes.size(), nullptr, 0);
  Fingerprint fp;
  for (int i = 0; i < 8; ++i) {
    fp.hi = (fp.hi << 8) | out[i];
    fp.lo = (fp.lo << 8) | out[8 + i];
  }
  return fp;
}

std::string digest_hex(std::string_view bytes) {
  ensure_sodium();
  std::array<unsigned char, 32> out{};
  crypto_generichash(out.data(), out.size(), reinterpret_cast<const unsigned char*>(bytes.data()),
                     bytes.size(), nullptr, 0);
  return to_hex(out.data(), out.size());
}

struct Hasher::State {
  crypto_generichash_state st;
};

Hasher::Hasher() : state_(std::make_unique<State>()) {
  ensure_sodium();
  crypto_generichash_init(&state_->st, nullptr, 0, 32);
}

Hasher::~Hasher() = default;

Hasher& Hasher::update(std::string_view bytes) {
  crypto_generichash_update(&state_->st, reinterpret_cast<const unsigned char*>(bytes.data()),
                            bytes.size());
  return *this;
}

Hasher& Hasher::field(std::string_view bytes) {
  std::uint64_t n = bytes.size();
  std::array<char, 8> len{};
  for (int i = 0; i < 8; ++i) len[i] = static_cast<char>((n >> (8 * i)) & 0xff);
  update(std::string_view(len.data(), len.size()));
  return update(bytes);
}

std::string Hasher::hex() {
  std::array<unsigned char, 32> out{};
  crypto_generichash_final(&state_->st, out.data(), out.size());
  return to_hex(out.data(), out.size());
}

std::string file_digest_hex(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  Hasher h;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())));
  }
  return h.hex();
}

}  // namespace livemath
