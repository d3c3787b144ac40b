#include "fqkl/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <vector>

#include "fqkl/checkpoint.hpp"
#include "fqkl/dataset_cache.hpp"
#include "fqkl/errors.hpp"
#include "fqkl/metrics.hpp"
#include "fqkl/qkernel.hpp"
#include "fqkl/rng.hpp"
#include "fqkl/rwhar.hpp"

namespace fqkl {

namespace {

namespace fs = std::filesystem;

std::map<std::string, int> parse_label_map(const KvConfig& cfg) {
  std::map<std::string, int> map;
  for (const auto& item : cfg.get_str_list("rwhar.labels")) {
    const auto colon = item.rfind(':');
    if (colon == std::string::npos) {
      throw ConfigError("rwhar.labels entries must look like name:index, got '" + item + "'");
    }
    try {
      map[item.substr(0, colon)] = std::stoi(item.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("rwhar.labels entry '" + item + "' has a non-numeric index");
    }
  }
  return map;
}

RwharOptions rwhar_options(const KvConfig& cfg) {
  RwharOptions o;
  o.sensor = cfg.get_str("rwhar.sensor");
  o.body_position = cfg.get_str("rwhar.position");
  o.timestamp_column = cfg.get_str("rwhar.timestamp_col");
  const auto axes = cfg.get_str_list("rwhar.axis_cols");
  if (axes.size() != 3) throw ConfigError("rwhar.axis_cols must name exactly 3 columns");
  o.axis_columns = {axes[0], axes[1], axes[2]};
  o.sample_rate_hz = cfg.get_double("rwhar.rate_hz");
  o.gap_periods = cfg.get_double("rwhar.gap_periods");
  o.window = static_cast<std::size_t>(cfg.get_u64("rwhar.window"));
  o.stride = static_cast<std::size_t>(cfg.get_u64("rwhar.stride"));
  o.label_map = parse_label_map(cfg);
  if (o.label_map.empty()) cfg.require("rwhar.labels", "required for data.source=rwhar");
  return o;
}

WindowedDataset build_dataset(const KvConfig& cfg, std::uint64_t seed) {
  const std::string source = cfg.get_str("data.source");
  if (source == "synthetic") {
    return gen_synthetic(static_cast<int>(cfg.get_int("synth.classes")),
                         cfg.get_u64("synth.windows_per_class"), cfg.get_u64("synth.window"),
                         cfg.get_u64("synth.channels"), cfg.get_double("synth.noise_sd"),
                         derive_seed(seed, seed_stream::kData));
  }
  if (source == "rwhar") {
    const std::string dir = cfg.require("rwhar.dir", "required for data.source=rwhar");
    return load_rwhar(dir, rwhar_options(cfg));
  }
  if (source == "cache") {
    const std::string path = cfg.require("cache.path", "required for data.source=cache");
    return load_dataset_cache(path);
  }
  throw ConfigError("data.source must be synthetic, rwhar or cache (got '" + source + "')");
}

ModelConfig model_from_config(const KvConfig& cfg, std::size_t in_channels, std::size_t window,
                              std::size_t classes) {
  ModelConfig m;
  m.in_channels = in_channels;
  m.window = window;
  m.classes = classes;
  const std::size_t layers = cfg.get_u64("model.conv_layers");
  auto filters = cfg.get_size_list("model.conv_filters");
  auto widths = cfg.get_size_list("model.conv_width");
  auto broadcast = [&](std::vector<std::size_t>& v, const char* key) {
    if (v.size() == 1) v.assign(layers, v[0]);
    if (v.size() != layers) {
      throw ConfigError(std::string("config key '") + key + "' must have 1 or model.conv_layers entries");
    }
  };
  broadcast(filters, "model.conv_filters");
  broadcast(widths, "model.conv_width");
  m.conv.clear();
  for (std::size_t l = 0; l < layers; ++l) m.conv.push_back({filters[l], widths[l]});
  m.rnn_layers = cfg.get_u64("model.rnn_layers");
  m.hidden = cfg.get_u64("model.hidden");
  m.landmarks = cfg.get_u64("model.landmarks");
  m.kernel_block = cfg.get_u64("kernel.block");
  m.kernel_depth = cfg.get_u64("kernel.depth");
  m.dropout = cfg.get_double("model.dropout");
  m.gate_bias = cfg.get_bool("model.gate_bias");
  m.baseline = cfg.get_bool("model.baseline");
  m.mean_pool = cfg.get_bool("model.mean_pool");
  m.validate();
  return m;
}

TrainHyper hyper_from_config(const KvConfig& cfg) {
  TrainHyper h;
  h.adam.lr = cfg.get_double("opt.lr");
  h.adam.beta1 = cfg.get_double("opt.beta1");
  h.adam.beta2 = cfg.get_double("opt.beta2");
  h.adam.eps = cfg.get_double("opt.eps");
  h.adam.weight_decay = cfg.get_double("opt.weight_decay");
  h.batch = cfg.get_u64("train.batch");
  return h;
}

FedConfig fed_from_config(const KvConfig& cfg) {
  FedConfig f;
  f.clients = cfg.get_u64("fed.clients");
  f.local_epochs = cfg.get_u64("fed.local_epochs");
  f.rounds = cfg.get_u64("fed.rounds");
  f.partition_strategy = cfg.get_str("fed.partition");
  f.eval_every = cfg.get_u64("fed.eval_every");
  f.max_message = cfg.get_u64("fed.max_message_mb") << 20;
  f.hyper = hyper_from_config(cfg);
  f.validate();
  return f;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << text;
}

void write_resolved(const Experiment& exp) {
  fs::create_directories(exp.out_dir);
  KvConfig resolved = exp.cfg;
  resolved.set("seed", std::to_string(exp.seed));
  write_text_file(exp.out_dir / "config.resolved", resolved.resolved_text());
}

std::string with_thousands(std::size_t n) {
  std::string digits = std::to_string(n);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

void print_metrics(std::ostream& out, const MetricsReport& m) {
  out << "confusion (rows = truth, cols = predicted):\n";
  for (const auto& row : m.confusion) {
    out << "  ";
    for (std::int64_t v : row) out << v << ' ';
    out << '\n';
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "accuracy  %.6f\nprecision %.6f\nrecall    %.6f\nf1        %.6f\n", m.accuracy,
                m.precision, m.recall, m.f1);
  out << buf;
}

// Cholesky of G + shift*I; succeeding is the in-product PSD self-check.
bool cholesky_psd(const Tensor& g, double shift) {
  const std::size_t n = g.extent(0);
  std::vector<double> a(g.data(), g.data() + n * n);
  for (std::size_t i = 0; i < n; ++i) a[i * n + i] += shift;
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (d <= 0.0) return false;
    const double l = std::sqrt(d);
    a[j * n + j] = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / l;
    }
  }
  return true;
}

void finish_run(const Experiment& exp, const FedRunResult& result, std::ostream& out) {
  write_metrics_csv(exp.out_dir / "metrics.csv", result.records);
  save_checkpoint_file(exp.out_dir / "final.fqkc", result.final_params);
  const auto& last = result.records.back();
  char buf[120];
  std::snprintf(buf, sizeof(buf), "final: accuracy %.4f, macro-F1 %.4f\n", last.accuracy, last.f1);
  out << buf;
  out << "wrote " << (exp.out_dir / "metrics.csv").string() << " and "
      << (exp.out_dir / "final.fqkc").string() << "\n";
}

}  // namespace

ModelConfig model_config_only(const KvConfig& cfg) {
  const std::string source = cfg.get_str("data.source");
  if (source == "synthetic") {
    return model_from_config(cfg, cfg.get_u64("synth.channels"), cfg.get_u64("synth.window"),
                             cfg.get_u64("synth.classes"));
  }
  if (source == "rwhar") {
    int classes = 0;
    for (const auto& [name, idx] : parse_label_map(cfg)) classes = std::max(classes, idx + 1);
    if (classes < 2) cfg.require("rwhar.labels", "required for data.source=rwhar");
    return model_from_config(cfg, 3, cfg.get_u64("rwhar.window"), static_cast<std::size_t>(classes));
  }
  if (source == "cache") {
    const auto ds = load_dataset_cache(cfg.require("cache.path", "required for data.source=cache"));
    return model_from_config(cfg, ds.channels(), ds.window_len(), ds.num_classes);
  }
  throw ConfigError("data.source must be synthetic, rwhar or cache (got '" + source + "')");
}

Experiment load_experiment(const CliOptions& opts) {
  Experiment exp;
  exp.cfg = opts.config_path.empty() ? KvConfig::defaults() : KvConfig::from_file(opts.config_path);
  exp.seed = opts.seed ? *opts.seed : exp.cfg.get_u64("seed");
  exp.out_dir = opts.out_dir;

  WindowedDataset full = build_dataset(exp.cfg, exp.seed);
  auto [train, test] = split_train_test(full, exp.cfg.get_double("split.test_fraction"),
                                        exp.cfg.get_bool("split.by_subject"),
                                        derive_seed(exp.seed, seed_stream::kSplit));
  const NormStats stats = NormStats::compute(train);
  exp.train = normalize(train, stats);
  exp.test = normalize(test, stats);

  exp.model = model_from_config(exp.cfg, exp.train.channels(), exp.train.window_len(),
                                static_cast<std::size_t>(exp.train.num_classes));
  exp.fed = fed_from_config(exp.cfg);
  exp.hyper = hyper_from_config(exp.cfg);
  return exp;
}

int cmd_train(const CliOptions& opts, std::ostream& out) {
  Experiment exp = load_experiment(opts);
  write_resolved(exp);
  const std::size_t rounds = exp.cfg.get_u64("train.rounds");
  const std::size_t epochs = exp.cfg.get_u64("train.epochs");
  out << "centralized training: " << rounds << " rounds x " << epochs << " epochs, "
      << exp.train.count() << " train / " << exp.test.count() << " test windows\n";
  const FedRunResult result = train_centralized(rounds, epochs, exp.hyper, exp.model, exp.train,
                                                exp.test, exp.seed, &out);
  finish_run(exp, result, out);
  return 0;
}

int cmd_fed_sim(const CliOptions& opts, std::ostream& out) {
  Experiment exp = load_experiment(opts);
  write_resolved(exp);
  out << "federated (in-process): " << exp.fed.clients << " clients, " << exp.fed.local_epochs
      << " local epochs, " << exp.fed.rounds << " rounds\n";
  const FedRunResult result = run_federated(exp.fed, exp.model, exp.train, exp.test, exp.seed, &out);
  finish_run(exp, result, out);
  return 0;
}

int cmd_fed_server(const CliOptions& opts, std::ostream& out) {
  if (opts.listen.empty()) throw ConfigError("fed-server needs --listen HOST:PORT");
  Experiment exp = load_experiment(opts);
  write_resolved(exp);
  const FedRunResult result =
      run_fed_server(exp.fed, exp.model, exp.test, opts.listen, exp.seed, &out);
  finish_run(exp, result, out);
  return 0;
}

int cmd_fed_client(const CliOptions& opts, std::ostream& out) {
  if (opts.connect.empty()) throw ConfigError("fed-client needs --connect HOST:PORT");
  if (opts.client_id < 0) throw ConfigError("fed-client needs --client-id N");
  Experiment exp = load_experiment(opts);
  if (static_cast<std::size_t>(opts.client_id) >= exp.fed.clients) {
    throw ConfigError("client id " + std::to_string(opts.client_id) + " out of range for " +
                      std::to_string(exp.fed.clients) + " clients");
  }
  const PartitionPlan plan = partition(exp.train, exp.fed.clients, exp.fed.partition_strategy,
                                       derive_seed(exp.seed, seed_stream::kPartition));
  const auto& shard = plan.shards[static_cast<std::size_t>(opts.client_id)];
  out << "client " << opts.client_id << ": " << shard.size() << " local windows, connecting to "
      << opts.connect << "\n";
  run_fed_client(exp.model, exp.hyper, exp.fed.local_epochs, exp.train, shard,
                 static_cast<std::uint32_t>(opts.client_id), opts.connect, exp.seed,
                 exp.fed.max_message, &out);
  out << "client " << opts.client_id << " done\n";
  return 0;
}

int cmd_eval(const CliOptions& opts, std::ostream& out) {
  if (opts.checkpoint.empty()) throw ConfigError("eval needs a checkpoint path");
  Experiment exp = load_experiment(opts);
  const ParamTree params = load_checkpoint_file(opts.checkpoint);
  Rng probe(0);
  const ParamTree expected = init_params(exp.model, probe);
  if (!params.congruent_with(expected)) {
    throw ConfigError("checkpoint '" + opts.checkpoint + "' does not match the configured model "
                      "(tensor names/shapes differ)");
  }
  const MetricsReport m = compute_metrics(confusion_matrix(exp.model, params, exp.test));
  print_metrics(out, m);
  return 0;
}

int cmd_count_params(const CliOptions& opts, std::ostream& out) {
  const KvConfig cfg =
      opts.config_path.empty() ? KvConfig::defaults() : KvConfig::from_file(opts.config_path);
  const ModelConfig model = model_config_only(cfg);
  const ParamCount count = count_params(model);
  out << "component            parameters\n";
  for (const auto& row : count.rows) {
    out << row.component;
    for (std::size_t i = row.component.size(); i < 21; ++i) out << ' ';
    out << with_thousands(row.count) << "\n";
  }
  out << "total                " << with_thousands(count.total) << "\n";
  return 0;
}

int cmd_kernel_check(const CliOptions& opts, std::ostream& out) {
  const KvConfig cfg =
      opts.config_path.empty() ? KvConfig::defaults() : KvConfig::from_file(opts.config_path);
  const std::uint64_t seed = opts.seed ? *opts.seed : cfg.get_u64("seed");

  // statevector vs closed form at depth 0
  Rng rng(derive_seed(seed, 0xC0DE));
  double max_dev = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t d = 1 + rng.uniform_index(16);
    KernelConfig kc{d, 4, 0};
    std::vector<double> a(d), b(d), w(d);
    for (std::size_t k = 0; k < d; ++k) {
      a[k] = (2.0 * rng.uniform() - 1.0) * M_PI;
      b[k] = (2.0 * rng.uniform() - 1.0) * M_PI;
      w[k] = 0.5 + rng.uniform();
    }
    const double sv = kernel_value_statevector(a, b, w, kc);
    const double cf = kernel_value_closed_form(a, b, w);
    max_dev = std::max(max_dev, std::abs(sv - cf));
  }
  const bool closed_ok = max_dev < 1e-10;
  char buf[120];
  std::snprintf(buf, sizeof(buf), "closed-form check: max |statevector - product| = %.3e (limit 1e-10) %s\n",
                max_dev, closed_ok ? "PASS" : "FAIL");
  out << buf;

  // Gram PSD at depth 0 and 1
  bool psd_ok = true;
  for (std::size_t depth = 0; depth <= 1; ++depth) {
    const std::size_t n = 64, d = 8;
    KernelConfig kc{d, 4, depth};
    Tensor x({n, d});
    for (double& v : x.values()) v = rng.normal();
    const std::vector<double> w(d, 1.0);
    const Tensor g = gram_matrix(x, w, kc);
    bool sym = true, diag = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (g.at(i, i) != 1.0) diag = false;
      for (std::size_t j = 0; j < n; ++j) {
        if (g.at(i, j) != g.at(j, i)) sym = false;
      }
    }
    const bool chol = cholesky_psd(g, 1e-8);
    psd_ok = psd_ok && sym && diag && chol;
    std::snprintf(buf, sizeof(buf),
                  "gram check (depth %zu): symmetric %s, unit diagonal %s, PSD (shifted Cholesky) %s\n",
                  depth, sym ? "yes" : "NO", diag ? "yes" : "NO", chol ? "yes" : "NO");
    out << buf;
  }
  out << (closed_ok && psd_ok ? "kernel-check PASS\n" : "kernel-check FAIL\n");
  return closed_ok && psd_ok ? 0 : 1;
}

int cmd_gen_synth(const CliOptions& opts, std::ostream& out) {
  const KvConfig cfg =
      opts.config_path.empty() ? KvConfig::defaults() : KvConfig::from_file(opts.config_path);
  const std::uint64_t seed = opts.seed ? *opts.seed : cfg.get_u64("seed");
  const WindowedDataset ds =
      gen_synthetic(static_cast<int>(cfg.get_int("synth.classes")),
                    cfg.get_u64("synth.windows_per_class"), cfg.get_u64("synth.window"),
                    cfg.get_u64("synth.channels"), cfg.get_double("synth.noise_sd"),
                    derive_seed(seed, seed_stream::kData));
  fs::path path = cfg.get_str("cache.path");
  if (path.empty()) {
    fs::create_directories(opts.out_dir);
    path = fs::path(opts.out_dir) / "dataset.fqkd";
  }
  save_dataset_cache(path, ds);
  out << "wrote " << ds.count() << " windows (" << ds.num_classes << " classes) to " << path.string()
      << "\n";
  return 0;
}

int cmd_grid(const CliOptions& opts, std::ostream& out) {
  Experiment exp = load_experiment(opts);
  write_resolved(exp);
  const auto clients = exp.cfg.get_size_list("grid.clients");
  const auto epochs = exp.cfg.get_size_list("grid.epochs");
  if (clients.empty() || epochs.empty()) {
    throw ConfigError("grid.clients and grid.epochs must be non-empty lists");
  }

  std::string csv = "clients,epochs,round,accuracy,precision,recall,f1\n";
  bool any_failed = false;
  char buf[256];
  for (const std::size_t k : clients) {
    for (const std::size_t e : epochs) {
      FedConfig fed = exp.fed;
      fed.clients = k;
      fed.local_epochs = e;
      out << "grid cell: clients=" << k << " epochs=" << e << "\n";
      try {
        const FedRunResult result =
            run_federated(fed, exp.model, exp.train, exp.test, exp.seed, nullptr);
        for (const auto& r : result.records) {
          std::snprintf(buf, sizeof(buf), "%zu,%zu,%u,%.17g,%.17g,%.17g,%.17g\n", k, e, r.round,
                        r.accuracy, r.precision, r.recall, r.f1);
          csv += buf;
        }
      } catch (const std::exception& ex) {
        out << "  cell failed: " << ex.what() << "\n";
        std::snprintf(buf, sizeof(buf), "%zu,%zu,,,,,\n", k, e);
        csv += buf;
        any_failed = true;
      }
    }
  }
  write_text_file(exp.out_dir / "grid.csv", csv);
  out << "wrote " << (exp.out_dir / "grid.csv").string() << "\n";
  return any_failed ? 1 : 0;
}

}  // namespace fqkl
