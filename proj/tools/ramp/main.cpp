#include "commands.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <exception>
#include <functional>

int main(int argc, char** argv) {
  using namespace ramp::cli;

  CLI::App app{"ramp: a market for compute cycles"};
  app.require_subcommand(1);
  std::function<int()> action;

  ResourceOptions resource;
  auto* res_cmd = app.add_subcommand("resource", "Run a resource agent");
  res_cmd->add_option("--config", resource.config, "Resource config (JSON)")->required()->check(CLI::ExistingFile);
  res_cmd->callback([&] { action = [&] { return run_resource(resource); }; });

  UserOptions user;
  auto* user_cmd = app.add_subcommand("user", "Run a user agent and one auction");
  user_cmd->add_option("--rfq", user.rfq, "RFQL document")->check(CLI::ExistingFile);
  user_cmd->add_option("--rounds", user.rounds, "Bidding rounds")->check(CLI::PositiveNumber);
  user_cmd->add_option("--round-interval", user.round_interval, "Seconds per round")->check(CLI::PositiveNumber);
  user_cmd->add_option("--approval", user.approval, "auto or manual")->check(CLI::IsMember({"auto", "manual"}));
  user_cmd->add_option("--registry", user.registry, "Registry address");
  user_cmd->add_option("--bank", user.bank, "Bank address");
  user_cmd->add_option("--key", user.key, "Signing key file")->required()->check(CLI::ExistingFile);
  user_cmd->add_option("--listen", user.listen, "Address for replies");
  user_cmd->add_option("--transcript", user.transcript, "JSON-lines transcript path (default stdout)");
  user_cmd->add_option("--ops-listen", user.ops_listen, "Serve the ops API on this address");
  user_cmd->add_flag("--stay", user.stay, "Keep running after the auction closes");
  user_cmd->callback([&] { action = [&] { return run_user(user); }; });

  BankOptions bank;
  auto* bank_cmd = app.add_subcommand("bank", "Run the bank or administer its ledger");
  bank_cmd->add_option("--ledger", bank.ledger, "Ledger file")->required();
  bank_cmd->add_option("--keys", bank.keys, "Directory of registered keys");
  bank_cmd->add_option("--listen", bank.listen, "Listen address");
  bank_cmd->add_option("--transcript", bank.transcript, "JSON-lines transcript path");
  std::string principal, amount, keyfile;
  auto* credit_cmd = bank_cmd->add_subcommand("credit", "Deposit funds offline");
  credit_cmd->add_option("principal", principal)->required();
  credit_cmd->add_option("amount", amount)->required();
  credit_cmd->callback([&] { action = [&] { return bank_credit(bank.ledger, bank.keys, principal, amount); }; });
  auto* regkey_cmd = bank_cmd->add_subcommand("register-key", "Add a principal's verification key");
  regkey_cmd->add_option("principal", principal)->required();
  regkey_cmd->add_option("keyfile", keyfile)->required()->check(CLI::ExistingFile);
  regkey_cmd->callback([&] {
    if (bank.keys.empty()) throw CLI::ValidationError("--keys", "register-key needs --keys");
    action = [&] { return bank_register_key(bank.keys, principal, keyfile); };
  });
  bank_cmd->callback([&] {
    if (!action) {
      if (bank.keys.empty()) throw CLI::ValidationError("--keys", "the bank needs --keys");
      action = [&] { return run_bank(bank); };
    }
  });

  std::string key_out = ".", scheme = "hmac-sha256";
  auto* keygen_cmd = app.add_subcommand("keygen", "Generate a signing key");
  keygen_cmd->add_option("principal", principal)->required();
  keygen_cmd->add_option("--out", key_out, "Output directory");
  keygen_cmd->add_option("--scheme", scheme)->check(CLI::IsMember({"hmac-sha256", "ed25519"}));
  keygen_cmd->callback([&] { action = [&] { return run_keygen(principal, key_out, scheme); }; });

  RegistryOptions registry;
  auto* reg_cmd = app.add_subcommand("registry", "Run the resource registry");
  reg_cmd->add_option("--listen", registry.listen, "Listen address");
  reg_cmd->add_option("--heartbeat-interval", registry.heartbeat_interval, "Seconds")->check(CLI::PositiveNumber);
  reg_cmd->callback([&] { action = [&] { return run_registry(registry); }; });

  SimOptions sim;
  int reps = 0;
  auto* sim_cmd = app.add_subcommand("sim", "Run a scenario in one process");
  sim_cmd->add_option("--scenario", sim.scenario, "Scenario JSON (default: bundled Table 2 market)")
      ->check(CLI::ExistingFile);
  sim_cmd->add_flag("--virtual-time", sim.virtual_time, "Run as fast as possible");
  sim_cmd->add_option("--speed", sim.speed, "Virtual seconds per wall second")->check(CLI::PositiveNumber);
  auto* reps_opt = sim_cmd->add_option("--repetitions", reps)->check(CLI::PositiveNumber);
  sim_cmd->add_option("--out", sim.out, "Output directory for transcript and CSVs");
  sim_cmd->add_option("--study", sim.study, "Run an experiment and print its JSON report")
      ->check(CLI::IsMember({"rounds", "units", "users", "winner", "atomicity", "hold", "below-floor"}));
  sim_cmd->callback([&] {
    if (*reps_opt) sim.repetitions = reps;
    action = [&] { return run_sim(sim); };
  });

  std::string metrics_dir, metrics_out;
  auto* metrics_cmd = app.add_subcommand("metrics", "Compute CSVs from transcripts");
  metrics_cmd->add_option("transcript-dir", metrics_dir)->required()->check(CLI::ExistingDirectory);
  metrics_cmd->add_option("--out", metrics_out, "Output directory (default: transcript dir)");
  metrics_cmd->callback([&] { action = [&] { return run_metrics(metrics_dir, metrics_out); }; });

  OpsOptions ops;
  auto* ops_cmd = app.add_subcommand("ops-api", "Serve the ops API over a simulated market");
  ops_cmd->add_option("--listen", ops.listen, "Listen address");
  ops_cmd->add_option("--scenario", ops.scenario)->check(CLI::ExistingFile);
  ops_cmd->add_option("--speed", ops.speed, "Virtual seconds per wall second")->check(CLI::PositiveNumber);
  ops_cmd->callback([&] { action = [&] { return run_ops_api(ops); }; });

  CLI11_PARSE(app, argc, argv);
  try {
    return action ? action() : 0;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
}
