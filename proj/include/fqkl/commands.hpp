#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "fqkl/config.hpp"
#include "fqkl/data.hpp"
#include "fqkl/federated.hpp"
#include "fqkl/model.hpp"

namespace fqkl {

struct CliOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;  // overrides the config's seed
  std::string out_dir = "out";
  std::string listen;      // fed-server, host:port
  std::string connect;     // fed-client, host:port
  int client_id = -1;      // fed-client
  std::string checkpoint;  // eval
};

/// Everything a run needs, assembled from one config file: the normalized
/// train/test splits and the model/fed configuration with data-driven
/// dimensions filled in.
struct Experiment {
  KvConfig cfg = KvConfig::defaults();
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  WindowedDataset train, test;
  ModelConfig model;
  FedConfig fed;
  TrainHyper hyper;
};

Experiment load_experiment(const CliOptions& opts);

/// Model config without materializing the dataset (dims read from the data
/// section); enough for parameter counting.
ModelConfig model_config_only(const KvConfig& cfg);

int cmd_train(const CliOptions& opts, std::ostream& out);
int cmd_fed_sim(const CliOptions& opts, std::ostream& out);
int cmd_fed_server(const CliOptions& opts, std::ostream& out);
int cmd_fed_client(const CliOptions& opts, std::ostream& out);
int cmd_eval(const CliOptions& opts, std::ostream& out);
int cmd_count_params(const CliOptions& opts, std::ostream& out);
int cmd_kernel_check(const CliOptions& opts, std::ostream& out);
int cmd_gen_synth(const CliOptions& opts, std::ostream& out);
int cmd_grid(const CliOptions& opts, std::ostream& out);

}  // namespace fqkl
