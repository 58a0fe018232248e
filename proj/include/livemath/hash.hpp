#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

namespace livemath {

/// 128-bit content fingerprint (BLAKE2b with a 16-byte digest).
struct Fingerprint {
  std::uint64_t hi = 0;
  std::uint64_t lo = 0;

  friend auto operator<=>(const Fingerprint&, const Fingerprint&) = default;
};

Fingerprint fingerprint128(std::string_view bytes);

/// Lowercase hex BLAKE2b-256 digest.
std::string digest_hex(std::string_view bytes);

/// Streaming BLAKE2b-256 over a file; throws IoError if unreadable.
std::string file_digest_hex(const std::filesystem::path& path);

/// Incremental BLAKE2b-256.
class Hasher {
 public:
  Hasher();
  ~Hasher();
  Hasher(const Hasher&) = delete;
  Hasher& operator=(const Hasher&) = delete;

  Hasher& update(std::string_view bytes);
  /// Length-prefixed update, so ("ab","c") and ("a","bc") differ.
  Hasher& field(std::string_view bytes);
  std::string hex();

 private:
  struct State;
  std::unique_ptr<State> state_;
};

}  // namespace livemath
