#include "ramp/signing.hpp"

#include "ramp/error.hpp"

#include <nlohmann/json.hpp>
#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>
#include <openssl/sha.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace ramp::signing {

namespace {

struct PkeyDeleter {
  void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* p) const { EVP_MD_CTX_free(p); }
};

std::vector<std::uint8_t> sha256(std::string_view data) {
  std::vector<std::uint8_t> out(SHA256_DIGEST_LENGTH);
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), out.data());
  return out;
}

}  // namespace

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out += kDigits[b >> 4];
    out += kDigits[b & 0xf];
  }
  return out;
}

std::vector<std::uint8_t> from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw ParseError("odd-length hex string");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw ParseError("invalid hex digit");
  };
  std::vector<std::uint8_t> out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  }
  return out;
}

std::string sha256_hex(std::string_view data) { return to_hex(sha256(data)); }

std::vector<std::uint8_t> HmacSha256Scheme::sign(std::string_view message, std::span<const std::uint8_t> key) const {
  if (key.empty()) throw Error("empty HMAC key");
  std::vector<std::uint8_t> out(EVP_MAX_MD_SIZE);
  unsigned int len = 0;
  HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()),
       reinterpret_cast<const unsigned char*>(message.data()), message.size(), out.data(), &len);
  out.resize(len);
  return out;
}

bool HmacSha256Scheme::verify(std::string_view message, std::span<const std::uint8_t> signature,
                              std::span<const std::uint8_t> key) const {
  if (key.empty()) return false;
  const auto expected = sign(message, key);
  return expected.size() == signature.size() &&
         CRYPTO_memcmp(expected.data(), signature.data(), expected.size()) == 0;
}

std::vector<std::uint8_t> Ed25519Scheme::sign(std::string_view message,
                                              std::span<const std::uint8_t> private_key) const {
  std::unique_ptr<EVP_PKEY, PkeyDeleter> pkey(
      EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, private_key.data(), private_key.size()));
  if (!pkey) throw Error("invalid Ed25519 private key");
  std::unique_ptr<EVP_MD_CTX, MdCtxDeleter> ctx(EVP_MD_CTX_new());
  std::vector<std::uint8_t> sig(64);
  std::size_t len = sig.size();
  if (EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, pkey.get()) != 1 ||
      EVP_DigestSign(ctx.get(), sig.data(), &len, reinterpret_cast<const unsigned char*>(message.data()),
                     message.size()) != 1) {
    throw Error("Ed25519 signing failed");
  }
  sig.resize(len);
  return sig;
}

bool Ed25519Scheme::verify(std::string_view message, std::span<const std::uint8_t> signature,
                           std::span<const std::uint8_t> public_key) const {
  std::unique_ptr<EVP_PKEY, PkeyDeleter> pkey(
      EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, public_key.data(), public_key.size()));
  if (!pkey) return false;
  std::unique_ptr<EVP_MD_CTX, MdCtxDeleter> ctx(EVP_MD_CTX_new());
  if (EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, pkey.get()) != 1) return false;
  return EVP_DigestVerify(ctx.get(), signature.data(), signature.size(),
                          reinterpret_cast<const unsigned char*>(message.data()), message.size()) == 1;
}

const SignatureScheme& scheme_by_name(const std::string& name) {
  static const HmacSha256Scheme hmac;
  static const Ed25519Scheme ed25519;
  if (name == hmac.name()) return hmac;
  if (name == ed25519.name()) return ed25519;
  throw ConfigError("unknown signature scheme '" + name + "'");
}

namespace {

KeyPair key_from_seed(const std::string& principal, std::vector<std::uint8_t> seed, const std::string& scheme) {
  KeyPair k;
  k.principal = principal;
  k.scheme = scheme;
  if (scheme == "hmac-sha256") {
    k.signing_key = seed;
    k.verification_key = seed;
  } else if (scheme == "ed25519") {
    std::unique_ptr<EVP_PKEY, PkeyDeleter> pkey(
        EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, seed.data(), 32));
    if (!pkey) throw Error("Ed25519 key generation failed");
    std::vector<std::uint8_t> pub(32);
    std::size_t len = pub.size();
    EVP_PKEY_get_raw_public_key(pkey.get(), pub.data(), &len);
    k.signing_key = seed;
    k.verification_key = pub;
  } else {
    throw ConfigError("unknown signature scheme '" + scheme + "'");
  }
  return k;
}

}  // namespace

KeyPair generate_key(const std::string& principal, const std::string& scheme) {
  std::vector<std::uint8_t> seed(32);
  if (RAND_bytes(seed.data(), static_cast<int>(seed.size())) != 1) throw Error("RAND_bytes failed");
  return key_from_seed(principal, std::move(seed), scheme);
}

KeyPair derive_key(const std::string& principal, std::uint64_t seed, const std::string& scheme) {
  return key_from_seed(principal, sha256("ramp-key:" + principal + ":" + std::to_string(seed)), scheme);
}

KeyPair load_key_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read key file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed key file '" + path + "': " + e.what());
  }
  KeyPair k;
  k.principal = j.at("principal").get<std::string>();
  k.scheme = j.value("scheme", std::string("hmac-sha256"));
  if (j.contains("signing_key")) k.signing_key = from_hex(j.at("signing_key").get<std::string>());
  k.verification_key = from_hex(j.at("verification_key").get<std::string>());
  scheme_by_name(k.scheme);
  return k;
}

void save_key_file(const std::string& path, const KeyPair& key, bool include_signing_key) {
  nlohmann::json j{{"principal", key.principal},
                   {"scheme", key.scheme},
                   {"verification_key", to_hex(key.verification_key)}};
  if (include_signing_key) j["signing_key"] = to_hex(key.signing_key);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write key file '" + path + "'");
  out << j.dump(2) << '\n';
}

void KeyRing::add(const std::string& principal, const std::string& scheme,
                  std::vector<std::uint8_t> verification_key) {
  scheme_by_name(scheme);
  auto it = keys_.find(principal);
  if (it != keys_.end()) {
    if (it->second.scheme == scheme && it->second.key == verification_key) return;
    throw Error("principal '" + principal + "' already has a registered key");
  }
  keys_.emplace(principal, Entry{scheme, std::move(verification_key)});
}

std::vector<std::string> KeyRing::principals() const {
  std::vector<std::string> out;
  for (const auto& [p, e] : keys_) out.push_back(p);
  return out;
}

std::string signing_input(const SignedDocument& doc, std::size_t index) {
  std::string input = doc.payload;
  for (std::size_t i = 0; i < index && i < doc.signatures.size(); ++i) {
    input += '\n';
    input += doc.signatures[i].signer_id;
    input += ':';
    input += doc.signatures[i].value_hex;
  }
  return input;
}

bool KeyRing::verify(const SignedDocument& doc, std::size_t index) const {
  if (index >= doc.signatures.size()) return false;
  const auto& sig = doc.signatures[index];
  auto it = keys_.find(sig.signer_id);
  if (it == keys_.end()) return false;
  std::vector<std::uint8_t> raw;
  try {
    raw = from_hex(sig.value_hex);
  } catch (const ParseError&) {
    return false;
  }
  return scheme_by_name(it->second.scheme).verify(signing_input(doc, index), raw, it->second.key);
}

bool KeyRing::verify_all(const SignedDocument& doc, std::span<const std::string> expected_signers) const {
  if (doc.signatures.size() != expected_signers.size()) return false;
  for (std::size_t i = 0; i < expected_signers.size(); ++i) {
    if (doc.signatures[i].signer_id != expected_signers[i] || !verify(doc, i)) return false;
  }
  return true;
}

KeyRing KeyRing::load_dir(const std::string& dir) {
  KeyRing ring;
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ConfigError("key directory '" + dir + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".key" || ext == ".json")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) ring.add(load_key_file(f.string()));
  return ring;
}

Signer::Signer(KeyPair key) : key_(std::move(key)) {
  if (key_.signing_key.empty()) throw ConfigError("no signing key for '" + key_.principal + "'");
  scheme_by_name(key_.scheme);
}

void Signer::sign(SignedDocument& doc) const {
  const auto input = signing_input(doc, doc.signatures.size());
  const auto raw = scheme_by_name(key_.scheme).sign(input, key_.signing_key);
  doc.signatures.push_back({key_.principal, to_hex(raw)});
}

}  // namespace ramp::signing
