#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fqkl/adam.hpp"
#include "fqkl/data.hpp"
#include "fqkl/model.hpp"
#include "fqkl/param_tree.hpp"

namespace fqkl {

struct TrainHyper {
  AdamHyper adam;
  std::size_t batch = 32;
};

struct FedConfig {
  std::size_t clients = 3;
  std::size_t local_epochs = 4;
  std::size_t rounds = 30;
  TrainHyper hyper;
  std::string partition_strategy = "iid";
  std::size_t eval_every = 1;
  std::uint64_t max_message = std::uint64_t{1} << 30;

  void validate() const;
};

struct ClientUpdate {
  std::uint32_t round = 0;
  std::uint32_t client_id = 0;
  std::uint64_t sample_count = 0;  // n_k
  ParamTree params;
  double train_loss = 0.0;  // mean minibatch loss over the local run
  // local-only diagnostics (not transferred)
  std::uint64_t optimizer_steps = 0;
  std::vector<double> epoch_losses;
};

struct RoundRecord {
  std::uint32_t round = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double train_loss = 0.0;
  double seconds = 0.0;
};

/// Per-(client, round) training seed; everything a client draws derives from
/// this one value.
std::uint64_t client_seed(std::uint64_t base_seed, std::uint32_t client_id, std::uint32_t round);

/// Sample-count-weighted parameter mean, accumulated in ascending client-id
/// order so the floating-point result never depends on arrival order.
ParamTree fedavg_aggregate(const std::vector<ClientUpdate>& updates);

/// One client's local run: copy the global parameters, train `epochs` epochs
/// of seeded-shuffled mini-batches with a fresh Adam state, and report the
/// final parameters with n_k = shard size. Executes exactly
/// epochs * ceil(n_k / batch) optimizer steps.
ClientUpdate local_train(const ParamTree& global, const WindowedDataset& data,
                         std::span<const int> shard, const ModelConfig& cfg,
                         const TrainHyper& hyper, std::size_t epochs, std::uint64_t seed,
                         std::uint32_t round, std::uint32_t client_id);

struct FedRunResult {
  std::vector<RoundRecord> records;
  ParamTree final_params;
};

/// Synchronous in-process rounds: broadcast, K local runs, weighted
/// aggregation, centralized evaluation on the held-out split.
FedRunResult run_federated(const FedConfig& fed, const ModelConfig& cfg,
                           const WindowedDataset& train, const WindowedDataset& test,
                           std::uint64_t seed, std::ostream* log = nullptr);

/// Centralized reference loop with the same round/epoch structure and seed
/// schedule as a single federated client.
FedRunResult train_centralized(std::size_t rounds, std::size_t epochs, const TrainHyper& hyper,
                               const ModelConfig& cfg, const WindowedDataset& train,
                               const WindowedDataset& test, std::uint64_t seed,
                               std::ostream* log = nullptr);

/// TCP aggregator: accepts `fed.clients` connections, then runs the same
/// round loop as run_federated over the wire. Any client failure aborts the
/// round (no partial aggregation).
FedRunResult run_fed_server(const FedConfig& fed, const ModelConfig& cfg,
                            const WindowedDataset& test, const std::string& listen_endpoint,
                            std::uint64_t seed, std::ostream* log = nullptr,
                            std::uint16_t* bound_port = nullptr);

/// TCP client: HELLO, then GLOBAL -> local_train -> UPDATE until DONE.
void run_fed_client(const ModelConfig& cfg, const TrainHyper& hyper, std::size_t epochs,
                    const WindowedDataset& train, std::span<const int> shard,
                    std::uint32_t client_id, const std::string& connect_endpoint,
                    std::uint64_t seed, std::uint64_t max_message = std::uint64_t{1} << 30,
                    std::ostream* log = nullptr);

/// metrics.csv with header round,accuracy,precision,recall,f1,train_loss,seconds.
/// Metric columns are printed with full precision (%.17g) so equal runs
/// produce byte-equal columns.
void write_metrics_csv(const std::filesystem::path& path, const std::vector<RoundRecord>& records);

}  // namespace fqkl
