#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fqkl/commands.hpp"
#include "fqkl/config.hpp"
#include "fqkl/errors.hpp"
#include "fqkl/metrics.hpp"

using namespace fqkl;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("fqkl_cli_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "run.cfg";
  std::ofstream f(p);
  f << text;
  return p;
}

// desk-scale config that runs in well under a second
const char* kTinyConfig = R"(
seed = 11
synth.classes = 3
synth.windows_per_class = 10
synth.window = 16
model.conv_layers = 1
model.conv_filters = 4
model.conv_width = 3
model.rnn_layers = 1
model.hidden = 4
model.landmarks = 4
model.dropout = 0.0
opt.lr = 1e-3
train.batch = 4
fed.clients = 2
fed.local_epochs = 1
fed.rounds = 2
)";

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) lines.push_back(line);
  return lines;
}

std::string strip_last_column(const std::string& csv_line) {
  return csv_line.substr(0, csv_line.rfind(','));
}

}  // namespace

TEST_CASE("compute_metrics") {
  SUBCASE("perfect diagonal") {
    const MetricsReport m = compute_metrics({{5, 0}, {0, 9}});
    CHECK(m.accuracy == 1.0);
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == 1.0);
  }
  SUBCASE("two-class hand computation") {
    const MetricsReport m = compute_metrics({{8, 2}, {3, 7}});
    CHECK(m.accuracy == doctest::Approx(0.75).epsilon(1e-12));
    // class 0: P = 8/11, R = 8/10; class 1: P = 7/9, R = 7/10
    // macro-F1 = (16/21 + 14/19) / 2
    const double macro_f1 = 0.5 * (16.0 / 21.0 + 14.0 / 19.0);
    CHECK(m.f1 == doctest::Approx(macro_f1).epsilon(1e-12));
    CHECK(m.f1 == doctest::Approx(0.7493734335839599).epsilon(1e-9));
    CHECK(m.precision == doctest::Approx(0.5 * (8.0 / 11.0 + 7.0 / 9.0)).epsilon(1e-12));
    CHECK(m.recall == doctest::Approx(0.75).epsilon(1e-12));
  }
  SUBCASE("class absent from truth and prediction contributes zero") {
    const MetricsReport m = compute_metrics({{5, 0, 0}, {0, 5, 0}, {0, 0, 0}});
    CHECK(m.accuracy == 1.0);
    CHECK(m.precision == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(m.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("empty or malformed matrices are rejected") {
    CHECK_THROWS_AS(compute_metrics({}), ShapeError);
    CHECK_THROWS_AS(compute_metrics({{0, 0}, {0, 0}}), ShapeError);  // no samples
    CHECK_THROWS_AS(compute_metrics({{1, 2}}), ShapeError);          // not square
  }
}

TEST_CASE("config parsing") {
  SUBCASE("defaults cover the whole schema") {
    const KvConfig cfg = KvConfig::defaults();
    CHECK(cfg.get_u64("model.hidden") == 64);
    CHECK(cfg.get_double("opt.lr") == doctest::Approx(1e-4));
    CHECK(cfg.get_str("fed.partition") == "iid");
  }
  SUBCASE("file values override defaults; comments and blanks ignored") {
    const KvConfig cfg = KvConfig::from_text(R"(
# a comment
model.hidden = 16   # trailing comment
fed.clients=5
)");
    CHECK(cfg.get_u64("model.hidden") == 16);
    CHECK(cfg.get_u64("fed.clients") == 5);
    CHECK(cfg.get_u64("model.landmarks") == 16);  // untouched default
  }
  SUBCASE("unknown keys are hard errors that name the key") {
    try {
      KvConfig::from_text("model.hiden = 16\n");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("model.hiden") != std::string::npos);
    }
  }
  SUBCASE("malformed lines are rejected with a line number") {
    try {
      KvConfig::from_text("# header\nmodel.hidden 16\n");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
  }
  SUBCASE("missing required keys name the key") {
    KvConfig cfg = KvConfig::defaults();
    cfg.set("data.source", "rwhar");
    try {
      cfg.require("rwhar.dir", "required for data.source=rwhar");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("rwhar.dir") != std::string::npos);
    }
  }
  SUBCASE("typed getters validate") {
    KvConfig cfg = KvConfig::defaults();
    cfg.set("model.hidden", "abc");
    CHECK_THROWS_AS(cfg.get_u64("model.hidden"), ConfigError);
    cfg.set("model.baseline", "maybe");
    CHECK_THROWS_AS(cfg.get_bool("model.baseline"), ConfigError);
  }
  SUBCASE("resolved text is sorted and complete") {
    const KvConfig cfg = KvConfig::defaults();
    const std::string text = cfg.resolved_text();
    CHECK(text.find("fed.clients=3\n") != std::string::npos);
    CHECK(text.find("opt.lr=1e-4\n") != std::string::npos);
    // round-trips through the parser
    const KvConfig again = KvConfig::from_text(text);
    CHECK(again.resolved_text() == text);
  }
}

TEST_CASE("cmd_train writes stable artifacts") {
  const fs::path dir = temp_dir("train");
  CliOptions opts;
  opts.config_path = write_config(dir, kTinyConfig).string();
  opts.out_dir = (dir / "out").string();

  std::ostringstream log;
  REQUIRE(cmd_train(opts, log) == 0);
  CHECK(fs::exists(dir / "out" / "metrics.csv"));
  CHECK(fs::exists(dir / "out" / "final.fqkc"));
  CHECK(fs::exists(dir / "out" / "config.resolved"));

  const auto first = read_lines(dir / "out" / "metrics.csv");
  CHECK(first[0] == "round,accuracy,precision,recall,f1,train_loss,seconds");
  CHECK(first.size() == 2);  // header + train.rounds rows

  // rerun: identical bytes except the wall-clock column
  std::ostringstream log2;
  REQUIRE(cmd_train(opts, log2) == 0);
  const auto second = read_lines(dir / "out" / "metrics.csv");
  REQUIRE(second.size() == first.size());
  for (std::size_t i = 1; i < first.size(); ++i) {
    CHECK(strip_last_column(first[i]) == strip_last_column(second[i]));
  }
}

TEST_CASE("cmd_fed_sim emits one row per round") {
  const fs::path dir = temp_dir("fedsim");
  CliOptions opts;
  opts.config_path = write_config(dir, kTinyConfig).string();
  opts.out_dir = (dir / "out").string();
  std::ostringstream log;
  REQUIRE(cmd_fed_sim(opts, log) == 0);
  const auto lines = read_lines(dir / "out" / "metrics.csv");
  CHECK(lines.size() == 3);  // header + fed.rounds rows
  CHECK(lines[1].substr(0, 2) == "0,");
  CHECK(lines[2].substr(0, 2) == "1,");
}

TEST_CASE("cmd_eval matches the training run and rejects mismatched configs") {
  const fs::path dir = temp_dir("eval");
  CliOptions opts;
  opts.config_path = write_config(dir, kTinyConfig).string();
  opts.out_dir = (dir / "out").string();
  std::ostringstream log;
  REQUIRE(cmd_train(opts, log) == 0);

  CliOptions eval_opts = opts;
  eval_opts.checkpoint = (dir / "out" / "final.fqkc").string();
  std::ostringstream eval_log;
  REQUIRE(cmd_eval(eval_opts, eval_log) == 0);
  CHECK(eval_log.str().find("accuracy") != std::string::npos);

  // a config with a different hidden size must be rejected
  CliOptions bad = eval_opts;
  bad.config_path =
      write_config(temp_dir("eval_bad"), std::string(kTinyConfig) + "model.hidden = 8\n").string();
  std::ostringstream bad_log;
  CHECK_THROWS_AS(cmd_eval(bad, bad_log), ConfigError);
}

TEST_CASE("cmd_count_params prints the classical table") {
  const fs::path dir = temp_dir("count");
  CliOptions opts;
  opts.config_path = write_config(dir, R"(
synth.channels = 3
model.conv_filters = 64
model.conv_width = 11
model.rnn_layers = 1
model.hidden = 64
model.baseline = true
)").string();
  std::ostringstream log;
  REQUIRE(cmd_count_params(opts, log) == 0);
  CHECK(log.str().find("33,024") != std::string::npos);
}

TEST_CASE("cmd_kernel_check passes on a clean build") {
  CliOptions opts;
  std::ostringstream log;
  CHECK(cmd_kernel_check(opts, log) == 0);
  CHECK(log.str().find("PASS") != std::string::npos);
}

TEST_CASE("cmd_gen_synth writes a loadable cache") {
  const fs::path dir = temp_dir("gensynth");
  CliOptions opts;
  opts.config_path = write_config(dir, std::string(kTinyConfig) + "cache.path = " +
                                           (dir / "data.fqkd").string() + "\n")
                         .string();
  opts.out_dir = (dir / "out").string();
  std::ostringstream log;
  REQUIRE(cmd_gen_synth(opts, log) == 0);
  REQUIRE(fs::exists(dir / "data.fqkd"));

  // a cache-backed training run consumes the file
  CliOptions train_opts = opts;
  train_opts.config_path =
      write_config(dir, std::string(kTinyConfig) + "data.source = cache\ncache.path = " +
                            (dir / "data.fqkd").string() + "\n")
          .string();
  std::ostringstream train_log;
  REQUIRE(cmd_train(train_opts, train_log) == 0);
}

TEST_CASE("cmd_grid emits the full schema") {
  const fs::path dir = temp_dir("grid");
  CliOptions opts;
  opts.config_path =
      write_config(dir, std::string(kTinyConfig) + "grid.clients = 2\ngrid.epochs = 1\n").string();
  opts.out_dir = (dir / "out").string();
  std::ostringstream log;
  REQUIRE(cmd_grid(opts, log) == 0);
  const auto lines = read_lines(dir / "out" / "grid.csv");
  CHECK(lines[0] == "clients,epochs,round,accuracy,precision,recall,f1");
  CHECK(lines.size() == 1 + 2);  // one cell, fed.rounds = 2
  CHECK(lines[1].substr(0, 4) == "2,1,");
}

TEST_CASE("cmd_grid records a failed cell as an empty row and exits nonzero") {
  const fs::path dir = temp_dir("gridfail");
  CliOptions opts;
  // 30 windows total -> 24 train; a 64-client cell cannot be partitioned
  opts.config_path =
      write_config(dir, std::string(kTinyConfig) + "grid.clients = 2,64\ngrid.epochs = 1\n").string();
  opts.out_dir = (dir / "out").string();
  std::ostringstream log;
  CHECK(cmd_grid(opts, log) == 1);
  const auto lines = read_lines(dir / "out" / "grid.csv");
  CHECK(lines.size() == 1 + 2 + 1);  // good cell rows + one failure row
  CHECK(lines.back() == "64,1,,,,,");
}
