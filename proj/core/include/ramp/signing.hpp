#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ramp::signing {

/// One signature over a document, in the order the parties signed it.
struct Signature {
  std::string signer_id;
  std::string value_hex;

  bool operator==(const Signature&) const = default;
};

/// Canonical payload bytes plus the signatures applied to them. Signature i
/// covers the payload and signatures 0..i-1, so a countersignature also
/// vouches for the signatures already present.
struct SignedDocument {
  std::string payload;
  std::vector<Signature> signatures;

  bool operator==(const SignedDocument&) const = default;
};

/// A signature algorithm. Keys are opaque byte strings.
class SignatureScheme {
 public:
  virtual ~SignatureScheme() = default;
  virtual std::string name() const = 0;
  virtual std::vector<std::uint8_t> sign(std::string_view message,
                                         std::span<const std::uint8_t> signing_key) const = 0;
  virtual bool verify(std::string_view message, std::span<const std::uint8_t> signature,
                      std::span<const std::uint8_t> verification_key) const = 0;
};

/// Keyed-hash authenticator. The verification key is the shared secret, so
/// verifiers must obtain it from the key registry out of band.
class HmacSha256Scheme final : public SignatureScheme {
 public:
  std::string name() const override { return "hmac-sha256"; }
  std::vector<std::uint8_t> sign(std::string_view message, std::span<const std::uint8_t> key) const override;
  bool verify(std::string_view message, std::span<const std::uint8_t> signature,
              std::span<const std::uint8_t> key) const override;
};

/// Public-key alternative (Ed25519 via OpenSSL).
class Ed25519Scheme final : public SignatureScheme {
 public:
  std::string name() const override { return "ed25519"; }
  std::vector<std::uint8_t> sign(std::string_view message, std::span<const std::uint8_t> private_key) const override;
  bool verify(std::string_view message, std::span<const std::uint8_t> signature,
              std::span<const std::uint8_t> public_key) const override;
};

/// Looks up a scheme by name; throws ConfigError for unknown names.
const SignatureScheme& scheme_by_name(const std::string& name);

struct KeyPair {
  std::string principal;
  std::string scheme = "hmac-sha256";
  std::vector<std::uint8_t> signing_key;
  std::vector<std::uint8_t> verification_key;
};

/// Fresh random key pair.
KeyPair generate_key(const std::string& principal, const std::string& scheme = "hmac-sha256");
/// Reproducible key pair derived from (principal, seed); for simulations.
KeyPair derive_key(const std::string& principal, std::uint64_t seed, const std::string& scheme = "hmac-sha256");

/// Key files are JSON: {"principal","scheme","signing_key","verification_key"} (hex).
/// A verification-only file omits "signing_key".
KeyPair load_key_file(const std::string& path);
void save_key_file(const std::string& path, const KeyPair& key, bool include_signing_key = true);

/// Registered verification keys, one per principal. Keys never change once set.
class KeyRing {
 public:
  /// Throws Error if the principal already holds a different key.
  void add(const std::string& principal, const std::string& scheme, std::vector<std::uint8_t> verification_key);
  void add(const KeyPair& key) { add(key.principal, key.scheme, key.verification_key); }
  bool contains(const std::string& principal) const { return keys_.count(principal) != 0; }
  std::vector<std::string> principals() const;

  /// Verifies signature `index` of `doc` against the signer's registered key.
  bool verify(const SignedDocument& doc, std::size_t index) const;
  /// All signatures verify and the signer ids are exactly `expected_signers`, in order.
  bool verify_all(const SignedDocument& doc, std::span<const std::string> expected_signers) const;

  /// Loads every *.key / *.json file in a directory.
  static KeyRing load_dir(const std::string& dir);

 private:
  struct Entry {
    std::string scheme;
    std::vector<std::uint8_t> key;
  };
  std::map<std::string, Entry> keys_;
};

/// Holds one principal's signing key.
class Signer {
 public:
  explicit Signer(KeyPair key);
  const std::string& principal() const { return key_.principal; }
  const KeyPair& key() const { return key_; }
  /// Appends this principal's signature to the document.
  void sign(SignedDocument& doc) const;

 private:
  KeyPair key_;
};

std::string signing_input(const SignedDocument& doc, std::size_t index);

std::string to_hex(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> from_hex(std::string_view hex);
std::string sha256_hex(std::string_view data);

}  // namespace ramp::signing
