// fqkl: train and evaluate the kernel-gate LSTM, centralized or federated.

#include <functional>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fqkl/commands.hpp"

namespace {

void add_common(CLI::App* sub, fqkl::CliOptions& opts, bool needs_config = true) {
  auto* cfg = sub->add_option("--config", opts.config_path, "config file (key=value lines)");
  if (needs_config) cfg->required();
  std::uint64_t* seed_slot = nullptr;
  sub->add_option_function<std::uint64_t>(
      "--seed", [&opts](const std::uint64_t& s) { opts.seed = s; },
      "override the config seed");
  (void)seed_slot;
  sub->add_option("--out", opts.out_dir, "output directory (default: out)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated kernel-gate LSTM for multichannel time-series classification"};
  app.require_subcommand(1);

  fqkl::CliOptions opts;
  using Handler = std::function<int()>;
  Handler handler;

  auto* train = app.add_subcommand("train", "centralized training run");
  add_common(train, opts);
  train->callback([&] { handler = [&] { return fqkl::cmd_train(opts, std::cout); }; });

  auto* fed_sim = app.add_subcommand("fed-sim", "federated rounds, all clients in-process");
  add_common(fed_sim, opts);
  fed_sim->callback([&] { handler = [&] { return fqkl::cmd_fed_sim(opts, std::cout); }; });

  auto* fed_server = app.add_subcommand("fed-server", "federated aggregator over TCP");
  add_common(fed_server, opts);
  fed_server->add_option("--listen", opts.listen, "HOST:PORT to bind")->required();
  fed_server->callback([&] { handler = [&] { return fqkl::cmd_fed_server(opts, std::cout); }; });

  auto* fed_client = app.add_subcommand("fed-client", "federated client over TCP");
  add_common(fed_client, opts);
  fed_client->add_option("--connect", opts.connect, "HOST:PORT of the server")->required();
  fed_client->add_option("--client-id", opts.client_id, "client id in [0, fed.clients)")->required();
  fed_client->callback([&] { handler = [&] { return fqkl::cmd_fed_client(opts, std::cout); }; });

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(eval, opts);
  eval->add_option("checkpoint", opts.checkpoint, "path to a .fqkc checkpoint")->required();
  eval->callback([&] { handler = [&] { return fqkl::cmd_eval(opts, std::cout); }; });

  auto* count = app.add_subcommand("count-params", "per-component trainable parameter table");
  add_common(count, opts, /*needs_config=*/false);
  count->callback([&] { handler = [&] { return fqkl::cmd_count_params(opts, std::cout); }; });

  auto* kcheck = app.add_subcommand("kernel-check", "kernel self-tests (closed form, Gram PSD)");
  add_common(kcheck, opts, /*needs_config=*/false);
  kcheck->callback([&] { handler = [&] { return fqkl::cmd_kernel_check(opts, std::cout); }; });

  auto* gen = app.add_subcommand("gen-synth", "write a synthetic dataset cache");
  add_common(gen, opts, /*needs_config=*/false);
  gen->callback([&] { handler = [&] { return fqkl::cmd_gen_synth(opts, std::cout); }; });

  auto* grid = app.add_subcommand("grid", "federated sweep over clients x local epochs");
  add_common(grid, opts);
  grid->callback([&] { handler = [&] { return fqkl::cmd_grid(opts, std::cout); }; });

  CLI11_PARSE(app, argc, argv);

  try {
    return handler();
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
}
