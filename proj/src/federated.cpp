#include "fqkl/federated.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>

#include "fqkl/checkpoint.hpp"
#include "fqkl/errors.hpp"
#include "fqkl/metrics.hpp"
#include "fqkl/nn_ops.hpp"
#include "fqkl/parallel.hpp"
#include "fqkl/rng.hpp"
#include "fqkl/tcp.hpp"

namespace fqkl {

namespace {

// Name for the auxiliary scalar riding inside UPDATE checkpoints; stripped
// before the tree is treated as parameters.
constexpr const char* kMetaLossName = "_meta.train_loss";

std::vector<std::uint8_t> encode_update_blob(const ParamTree& params, double train_loss) {
  ParamTree with_meta = params;
  with_meta.insert(kMetaLossName, Tensor::scalar(train_loss));
  return serialize_checkpoint(with_meta);
}

std::pair<ParamTree, double> decode_update_blob(std::span<const std::uint8_t> blob) {
  ParamTree tree = deserialize_checkpoint(blob);
  double loss = 0.0;
  if (tree.contains(kMetaLossName)) {
    loss = tree.at(kMetaLossName)[0];
    tree.erase(kMetaLossName);
  }
  return {std::move(tree), loss};
}

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

MetricsReport evaluate(const ModelConfig& cfg, const ParamTree& params, const WindowedDataset& test) {
  return compute_metrics(confusion_matrix(cfg, params, test));
}

void log_round(std::ostream* log, const RoundRecord& r) {
  if (!log) return;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "round %u  acc %.4f  prec %.4f  rec %.4f  f1 %.4f  loss %.4f  (%.2fs)",
                r.round, r.accuracy, r.precision, r.recall, r.f1, r.train_loss, r.seconds);
  (*log) << buf << '\n' << std::flush;
}

}  // namespace

void FedConfig::validate() const {
  if (clients < 1 || local_epochs < 1 || rounds < 1) {
    throw ConfigError("fed config: clients, local_epochs and rounds must all be >= 1");
  }
  if (hyper.batch < 1) throw ConfigError("fed config: batch must be >= 1");
  if (eval_every < 1) throw ConfigError("fed config: eval_every must be >= 1");
}

std::uint64_t client_seed(std::uint64_t base_seed, std::uint32_t client_id, std::uint32_t round) {
  return derive_seed(derive_seed(base_seed, seed_stream::kClient), client_id, round);
}

ParamTree fedavg_aggregate(const std::vector<ClientUpdate>& updates) {
  if (updates.empty()) throw FedError("fedavg: no updates to aggregate");
  std::vector<const ClientUpdate*> ordered;
  ordered.reserve(updates.size());
  for (const auto& u : updates) ordered.push_back(&u);
  std::sort(ordered.begin(), ordered.end(),
            [](const ClientUpdate* a, const ClientUpdate* b) { return a->client_id < b->client_id; });

  std::uint64_t total = 0;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    const ClientUpdate& u = *ordered[i];
    if (u.sample_count < 1) throw FedError("fedavg: client " + std::to_string(u.client_id) +
                                           " reports zero samples");
    if (i > 0 && ordered[i - 1]->client_id == u.client_id) {
      throw FedError("fedavg: duplicate update from client " + std::to_string(u.client_id));
    }
    if (u.round != ordered[0]->round) {
      throw FedError("fedavg: mixed rounds (" + std::to_string(u.round) + " vs " +
                     std::to_string(ordered[0]->round) + ")");
    }
    if (!u.params.congruent_with(ordered[0]->params)) {
      throw FedError("fedavg: update from client " + std::to_string(u.client_id) +
                     " is not congruent with the others");
    }
    total += u.sample_count;
  }

  ParamTree global = ParamTree::zeros_like(ordered[0]->params);
  for (const ClientUpdate* u : ordered) {
    global.add_scaled(u->params,
                      static_cast<double>(u->sample_count) / static_cast<double>(total));
  }
  return global;
}

ClientUpdate local_train(const ParamTree& global, const WindowedDataset& data,
                         std::span<const int> shard, const ModelConfig& cfg,
                         const TrainHyper& hyper, std::size_t epochs, std::uint64_t seed,
                         std::uint32_t round, std::uint32_t client_id) {
  if (shard.empty()) throw FedError("local_train: empty shard");
  if (epochs < 1 || hyper.batch < 1) throw FedError("local_train: epochs and batch must be >= 1");

  ParamTree params = global;
  AdamState state = AdamState::init(params);  // optimizer state is per round

  std::vector<int> order(shard.begin(), shard.end());
  double loss_sum = 0.0;
  std::size_t steps = 0;
  std::vector<double> epoch_losses;

  std::vector<ParamTree> window_grads;
  std::vector<double> window_losses;

  for (std::size_t e = 0; e < epochs; ++e) {
    const std::uint64_t epoch_seed = derive_seed(seed, e);
    Rng shuffle_rng(derive_seed(epoch_seed, 0));
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;

    for (std::size_t start = 0; start < order.size(); start += hyper.batch) {
      const std::size_t batch = std::min(hyper.batch, order.size() - start);
      const std::uint64_t step_seed = derive_seed(epoch_seed, 1 + start / hyper.batch);

      window_grads.assign(batch, ParamTree());
      window_losses.assign(batch, 0.0);
      parallel_for(batch, [&](std::size_t slot) {
        const int idx = order[start + slot];
        Rng wrng(derive_seed(step_seed, slot));
        ModelCache cache;
        const Tensor logits = model_forward(data.window(idx), cfg, params, &wrng, true, &cache);
        const auto sx = softmax_cross_entropy(logits, static_cast<std::size_t>(data.labels[idx]));
        window_losses[slot] = sx.loss;
        window_grads[slot] = model_backward(cfg, params, cache, sx.grad);
      });

      ParamTree grad = ParamTree::zeros_like(params);
      const double inv = 1.0 / static_cast<double>(batch);
      double batch_loss = 0.0;
      for (std::size_t slot = 0; slot < batch; ++slot) {
        grad.add_scaled(window_grads[slot], inv);
        batch_loss += window_losses[slot] * inv;
      }
      adam_step(params, grad, state, hyper.adam);
      loss_sum += batch_loss;
      epoch_loss += batch_loss;
      ++steps;
      ++epoch_steps;
    }
    epoch_losses.push_back(epoch_loss / static_cast<double>(epoch_steps));
  }

  ClientUpdate update;
  update.round = round;
  update.client_id = client_id;
  update.sample_count = shard.size();
  update.params = std::move(params);
  update.train_loss = loss_sum / static_cast<double>(steps);
  update.optimizer_steps = steps;
  update.epoch_losses = std::move(epoch_losses);
  return update;
}

namespace {

// Shared round-record assembly: evaluates on cadence, carries metrics
// forward otherwise.
struct RoundRecorder {
  const ModelConfig& cfg;
  const WindowedDataset& test;
  std::size_t eval_every;
  std::size_t total_rounds;
  MetricsReport last;
  bool have_last = false;

  RoundRecord make(std::uint32_t round, const ParamTree& global, double train_loss, double t0) {
    if (!have_last || round % eval_every == 0 || round + 1 == total_rounds) {
      last = evaluate(cfg, global, test);
      have_last = true;
    }
    RoundRecord rec;
    rec.round = round;
    rec.accuracy = last.accuracy;
    rec.precision = last.precision;
    rec.recall = last.recall;
    rec.f1 = last.f1;
    rec.train_loss = train_loss;
    rec.seconds = now_seconds() - t0;
    return rec;
  }
};

}  // namespace

FedRunResult run_federated(const FedConfig& fed, const ModelConfig& cfg,
                           const WindowedDataset& train, const WindowedDataset& test,
                           std::uint64_t seed, std::ostream* log) {
  fed.validate();
  cfg.validate();
  const PartitionPlan plan =
      partition(train, fed.clients, fed.partition_strategy, derive_seed(seed, seed_stream::kPartition));

  Rng init_rng(derive_seed(seed, seed_stream::kInit));
  ParamTree global = init_params(cfg, init_rng);

  FedRunResult result;
  RoundRecorder recorder{cfg, test, fed.eval_every, fed.rounds, {}, false};
  for (std::uint32_t r = 0; r < fed.rounds; ++r) {
    const double t0 = now_seconds();
    std::vector<ClientUpdate> updates;
    updates.reserve(fed.clients);
    for (std::uint32_t k = 0; k < fed.clients; ++k) {
      updates.push_back(local_train(global, train, plan.shards[k], cfg, fed.hyper,
                                    fed.local_epochs, client_seed(seed, k, r), r, k));
    }
    global = fedavg_aggregate(updates);
    double mean_loss = 0.0;
    for (const auto& u : updates) mean_loss += u.train_loss;
    mean_loss /= static_cast<double>(updates.size());

    result.records.push_back(recorder.make(r, global, mean_loss, t0));
    log_round(log, result.records.back());
  }
  result.final_params = std::move(global);
  return result;
}

FedRunResult train_centralized(std::size_t rounds, std::size_t epochs, const TrainHyper& hyper,
                               const ModelConfig& cfg, const WindowedDataset& train,
                               const WindowedDataset& test, std::uint64_t seed,
                               std::ostream* log) {
  cfg.validate();
  const PartitionPlan plan =
      partition(train, 1, "iid", derive_seed(seed, seed_stream::kPartition));

  Rng init_rng(derive_seed(seed, seed_stream::kInit));
  ParamTree global = init_params(cfg, init_rng);

  FedRunResult result;
  RoundRecorder recorder{cfg, test, 1, rounds, {}, false};
  for (std::uint32_t r = 0; r < rounds; ++r) {
    const double t0 = now_seconds();
    ClientUpdate update = local_train(global, train, plan.shards[0], cfg, hyper, epochs,
                                      client_seed(seed, 0, r), r, 0);
    global = std::move(update.params);
    result.records.push_back(recorder.make(r, global, update.train_loss, t0));
    log_round(log, result.records.back());
  }
  result.final_params = std::move(global);
  return result;
}

FedRunResult run_fed_server(const FedConfig& fed, const ModelConfig& cfg,
                            const WindowedDataset& test, const std::string& listen_endpoint,
                            std::uint64_t seed, std::ostream* log, std::uint16_t* bound_port) {
  fed.validate();
  cfg.validate();
  const auto [host, port] = parse_endpoint(listen_endpoint);
  TcpListener listener(host, port);
  if (bound_port) *bound_port = listener.port();
  if (log) (*log) << "listening on " << host << ":" << listener.port() << ", waiting for "
                  << fed.clients << " clients\n";

  // Admission: one connection per expected client id.
  std::map<std::uint32_t, std::unique_ptr<TcpConn>> conns;
  std::map<std::uint32_t, std::uint64_t> sample_counts;
  while (conns.size() < fed.clients) {
    auto conn = listener.accept();
    const HelloPayload hello = decode_hello(conn->recv_message(fed.max_message));
    if (hello.client_id >= fed.clients) {
      throw FedError("server: client id " + std::to_string(hello.client_id) +
                     " out of range for " + std::to_string(fed.clients) + " clients");
    }
    if (conns.count(hello.client_id)) {
      throw FedError("server: duplicate client id " + std::to_string(hello.client_id));
    }
    if (log) (*log) << "client " << hello.client_id << " joined with " << hello.sample_count
                    << " samples\n";
    sample_counts[hello.client_id] = hello.sample_count;
    conns[hello.client_id] = std::move(conn);
  }

  Rng init_rng(derive_seed(seed, seed_stream::kInit));
  ParamTree global = init_params(cfg, init_rng);

  FedRunResult result;
  RoundRecorder recorder{cfg, test, fed.eval_every, fed.rounds, {}, false};
  for (std::uint32_t r = 0; r < fed.rounds; ++r) {
    const double t0 = now_seconds();
    const auto blob = serialize_checkpoint(global);
    for (auto& [id, conn] : conns) conn->send_message(encode_global({r, blob}));

    // Synchronous barrier: nothing is aggregated until all K updates arrive.
    std::vector<ClientUpdate> updates;
    updates.reserve(fed.clients);
    for (auto& [id, conn] : conns) {
      const UpdatePayload up = decode_update(conn->recv_message(fed.max_message));
      if (up.round != r) {
        throw FedError("server: client " + std::to_string(id) + " answered round " +
                       std::to_string(up.round) + " during round " + std::to_string(r));
      }
      auto [params, train_loss] = decode_update_blob(up.checkpoint);
      ClientUpdate u;
      u.round = up.round;
      u.client_id = id;
      u.sample_count = up.sample_count;
      u.params = std::move(params);
      u.train_loss = train_loss;
      updates.push_back(std::move(u));
    }
    global = fedavg_aggregate(updates);
    double mean_loss = 0.0;
    for (const auto& u : updates) mean_loss += u.train_loss;
    mean_loss /= static_cast<double>(updates.size());

    result.records.push_back(recorder.make(r, global, mean_loss, t0));
    log_round(log, result.records.back());
  }
  for (auto& [id, conn] : conns) conn->send_message(encode_done());
  result.final_params = std::move(global);
  return result;
}

void run_fed_client(const ModelConfig& cfg, const TrainHyper& hyper, std::size_t epochs,
                    const WindowedDataset& train, std::span<const int> shard,
                    std::uint32_t client_id, const std::string& connect_endpoint,
                    std::uint64_t seed, std::uint64_t max_message, std::ostream* log) {
  cfg.validate();
  if (shard.empty()) throw FedError("client: empty shard");
  const auto [host, port] = parse_endpoint(connect_endpoint);
  auto conn = TcpConn::connect(host, port);
  conn->send_message(encode_hello({client_id, shard.size()}));

  while (true) {
    const WireMessage msg = conn->recv_message(max_message);
    if (msg.type == MsgType::Done) break;
    const GlobalPayload gp = decode_global(msg);
    const ParamTree global = deserialize_checkpoint(gp.checkpoint);
    ClientUpdate update = local_train(global, train, shard, cfg, hyper, epochs,
                                      client_seed(seed, client_id, gp.round), gp.round, client_id);
    conn->send_message(encode_update(
        {gp.round, update.sample_count, encode_update_blob(update.params, update.train_loss)}));
    if (log) (*log) << "client " << client_id << " finished round " << gp.round << "\n";
  }
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<RoundRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << "round,accuracy,precision,recall,f1,train_loss,seconds\n";
  char buf[256];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%u,%.17g,%.17g,%.17g,%.17g,%.17g,%.3f\n", r.round, r.accuracy,
                  r.precision, r.recall, r.f1, r.train_loss, r.seconds);
    out << buf;
  }
  if (!out) throw DataError("short write to '" + path.string() + "'");
}

}  // namespace fqkl
