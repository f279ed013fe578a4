#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace ramp::cli {

struct ResourceOptions {
  std::string config;
};
int run_resource(const ResourceOptions& o);

struct UserOptions {
  std::string rfq;
  int rounds = 3;
  double round_interval = 15;
  std::string approval = "auto";
  std::string registry = "127.0.0.1:7703";
  std::string bank = "127.0.0.1:7702";
  std::string key;
  std::string listen = "127.0.0.1:0";
  std::string transcript;
  std::string ops_listen;
  /// Keep serving the ops API after the auction closes.
  bool stay = false;
};
int run_user(const UserOptions& o);

struct BankOptions {
  std::string ledger;
  std::string keys;
  std::string listen = "127.0.0.1:7702";
  std::string transcript;
};
int run_bank(const BankOptions& o);
int bank_credit(const std::string& ledger, const std::string& keys, const std::string& principal,
                const std::string& amount);
int bank_register_key(const std::string& keys, const std::string& principal, const std::string& keyfile);

int run_keygen(const std::string& principal, const std::string& out_dir, const std::string& scheme);

struct RegistryOptions {
  std::string listen = "127.0.0.1:7703";
  double heartbeat_interval = 5;
};
int run_registry(const RegistryOptions& o);

struct SimOptions {
  std::string scenario;
  bool virtual_time = false;
  double speed = 1;
  std::optional<int> repetitions;
  std::string out = "ramp-out";
  std::string study;
};
int run_sim(const SimOptions& o);

int run_metrics(const std::string& transcript_dir, const std::string& out_dir);

struct OpsOptions {
  std::string listen = "127.0.0.1:8080";
  std::string scenario;
  double speed = 1;
  int users = 1;
};
int run_ops_api(const OpsOptions& o);

}  // namespace ramp::cli
