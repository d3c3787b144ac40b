#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fqkl/adam.hpp"
#include "fqkl/data.hpp"
#include "fqkl/errors.hpp"
#include "fqkl/finite_diff.hpp"
#include "fqkl/model.hpp"
#include "fqkl/nn_ops.hpp"
#include "fqkl/rng.hpp"
#include "oracles.hpp"

using namespace fqkl;

namespace {

// The end-to-end gradient-check shape: 3 channels x 8 steps, one width-3
// conv layer with 4 filters, one kernel-gate layer (hidden 4, 4 landmarks),
// 3 classes.
ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.in_channels = 3;
  cfg.window = 8;
  cfg.conv = {{4, 3}};
  cfg.rnn_layers = 1;
  cfg.hidden = 4;
  cfg.landmarks = 4;
  cfg.kernel_block = 4;
  cfg.kernel_depth = 0;
  cfg.classes = 3;
  cfg.dropout = 0.0;
  return cfg;
}

ParamTree standalone_qk_layer(std::size_t n, std::size_t p, std::size_t n_land, Rng& rng,
                              bool bias) {
  ModelConfig cfg;
  cfg.in_channels = p;
  cfg.window = 4;
  cfg.conv = {{p, 1}};
  cfg.rnn_layers = 1;
  cfg.hidden = n;
  cfg.landmarks = n_land;
  cfg.gate_bias = bias;
  cfg.classes = 2;
  cfg.dropout = 0.0;
  return init_params(cfg, rng);
}

QkLayerView standalone_view(const ModelConfig& cfg, const ParamTree& params) {
  return qk_layer_view(cfg, params, 0);
}

Tensor random_window(Rng& rng, std::size_t t, std::size_t d) {
  Tensor w({t, d});
  for (double& v : w.values()) v = rng.normal();
  return w;
}

double model_loss(const ModelConfig& cfg, const ParamTree& params, const Tensor& window,
                  std::size_t label) {
  const Tensor logits = model_forward(window, cfg, params, nullptr, true, nullptr);
  return softmax_cross_entropy(logits, label).loss;
}

}  // namespace

TEST_CASE("kernel-gate cell: zero previous memory") {
  Rng rng(1);
  ModelConfig cfg;
  cfg.in_channels = 2;
  cfg.window = 4;
  cfg.conv = {{2, 1}};
  cfg.rnn_layers = 1;
  cfg.hidden = 3;
  cfg.landmarks = 4;
  cfg.classes = 2;
  cfg.dropout = 0.0;
  ParamTree params = init_params(cfg, rng);
  const QkLayerView view = standalone_view(cfg, params);

  std::vector<double> x = {0.3, -0.7};
  CellState prev = CellState::zeros(3);
  prev.h = {0.1, -0.2, 0.4};
  QkCellCache cache;
  const CellState next = qklstm_cell_forward(x, prev, view, &cache);
  // C_t = i . chat exactly when C_{t-1} = 0
  for (std::size_t h = 0; h < 3; ++h) {
    CHECK(next.c[h] == cache.act[kInput][h] * cache.act[kCandidate][h]);
  }
}

TEST_CASE("kernel-gate cell: zero coefficients degenerate to half-gates") {
  Rng rng(2);
  ModelConfig cfg;
  cfg.in_channels = 2;
  cfg.window = 4;
  cfg.conv = {{2, 1}};
  cfg.rnn_layers = 1;
  cfg.hidden = 3;
  cfg.landmarks = 4;
  cfg.classes = 2;
  cfg.dropout = 0.0;
  ParamTree params = init_params(cfg, rng);
  for (const char* g : {"beta_f", "beta_i", "beta_c", "beta_o"}) {
    params.at(std::string("rnn.0.") + g).fill(0.0);
  }
  const QkLayerView view = standalone_view(cfg, params);

  CellState prev = CellState::zeros(3);
  prev.c = {0.8, -0.4, 0.2};
  prev.h = {0.1, 0.2, 0.3};
  const std::vector<double> x = {1.0, -1.0};
  const CellState next = qklstm_cell_forward(x, prev, view);
  for (std::size_t h = 0; h < 3; ++h) {
    CHECK(next.c[h] == doctest::Approx(0.5 * prev.c[h]).epsilon(1e-15));
    CHECK(next.h[h] == doctest::Approx(0.5 * std::tanh(0.5 * prev.c[h])).epsilon(1e-15));
  }
}

TEST_CASE("kernel-gate cell matches the straight-line transcription") {
  Rng rng(3);
  for (std::size_t depth : {0u, 1u}) {
    ModelConfig cfg;
    cfg.in_channels = 2;
    cfg.window = 4;
    cfg.conv = {{2, 1}};
    cfg.rnn_layers = 1;
    cfg.hidden = 3;
    cfg.landmarks = 4;
    cfg.kernel_depth = depth;
    cfg.classes = 2;
    cfg.dropout = 0.0;
    cfg.gate_bias = true;
    ParamTree params = init_params(cfg, rng);
    params.at("rnn.0.gate_bias_f").fill(0.25);
    const QkLayerView view = standalone_view(cfg, params);

    CellState state = CellState::zeros(3);
    state.h = {0.05, -0.1, 0.2};
    state.c = {0.3, 0.0, -0.6};
    for (int step = 0; step < 3; ++step) {
      std::vector<double> x = {rng.normal(), rng.normal()};
      const CellState got = qklstm_cell_forward(x, state, view);
      const CellState want = oracles::cell_reference(x, state, view);
      for (std::size_t h = 0; h < 3; ++h) {
        CHECK(std::abs(got.c[h] - want.c[h]) < 1e-12);
        CHECK(std::abs(got.h[h] - want.h[h]) < 1e-12);
      }
      state = got;
    }
  }
}

TEST_CASE("classical cell: zero parameters match the zero-coefficient kernel cell") {
  ModelConfig cfg;
  cfg.in_channels = 2;
  cfg.window = 4;
  cfg.conv = {{2, 1}};
  cfg.rnn_layers = 1;
  cfg.hidden = 3;
  cfg.landmarks = 4;
  cfg.classes = 2;
  cfg.dropout = 0.0;
  cfg.baseline = true;
  Rng rng(4);
  ParamTree params = init_params(cfg, rng);
  for (std::size_t g = 0; g < 4; ++g) {
    params.at(std::string("rnn.0.weight_") + kGateSuffix[g]).fill(0.0);
    params.at(std::string("rnn.0.bias_") + kGateSuffix[g]).fill(0.0);
  }
  const LstmLayerView view = lstm_layer_view(cfg, params, 0);

  CellState state = CellState::zeros(3);
  state.c = {1.0, -2.0, 0.5};
  std::vector<double> x = {0.7, 0.9};
  for (int step = 0; step < 4; ++step) {
    state = classical_lstm_cell_forward(x, state, view);
  }
  // closed recursion: C_t = 0.5^t C_0, h_t = 0.5 tanh(C_t)
  for (std::size_t h = 0; h < 3; ++h) {
    const double c0 = (h == 0 ? 1.0 : h == 1 ? -2.0 : 0.5);
    CHECK(state.c[h] == doctest::Approx(c0 / 16.0).epsilon(1e-14));
    CHECK(state.h[h] == doctest::Approx(0.5 * std::tanh(c0 / 16.0)).epsilon(1e-14));
  }
}

TEST_CASE("classical cell: n = 1 hand case") {
  ModelConfig cfg;
  cfg.in_channels = 1;
  cfg.window = 2;
  cfg.conv = {{1, 1}};
  cfg.rnn_layers = 1;
  cfg.hidden = 1;
  cfg.landmarks = 1;
  cfg.classes = 2;
  cfg.dropout = 0.0;
  cfg.baseline = true;
  Rng rng(5);
  ParamTree params = init_params(cfg, rng);
  for (std::size_t g = 0; g < 4; ++g) {
    params.at(std::string("rnn.0.weight_") + kGateSuffix[g]).fill(0.0);
    params.at(std::string("rnn.0.bias_") + kGateSuffix[g]).fill(0.0);
  }
  const double a = 0.9;  // candidate pre-activation via its bias
  params.at("rnn.0.bias_c")[0] = a;
  const LstmLayerView view = lstm_layer_view(cfg, params, 0);

  const std::vector<double> x = {0.0};
  const CellState next = classical_lstm_cell_forward(x, CellState::zeros(1), view);
  const double c_expected = 0.5 * std::tanh(a);
  CHECK(next.c[0] == doctest::Approx(c_expected).epsilon(1e-15));
  CHECK(next.h[0] == doctest::Approx(0.5 * std::tanh(c_expected)).epsilon(1e-15));
}

TEST_CASE("layer forward: single step equals one cell call") {
  Rng rng(6);
  ModelConfig cfg;
  cfg.in_channels = 2;
  cfg.window = 4;
  cfg.conv = {{2, 1}};
  cfg.rnn_layers = 1;
  cfg.hidden = 3;
  cfg.landmarks = 4;
  cfg.classes = 2;
  cfg.dropout = 0.0;
  ParamTree params = init_params(cfg, rng);
  const QkLayerView view = standalone_view(cfg, params);

  Tensor seq = random_window(rng, 1, 2);
  const Tensor hidden = qklstm_layer_forward(seq, CellState::zeros(3), view);
  const CellState single = qklstm_cell_forward(seq.row(0), CellState::zeros(3), view);
  for (std::size_t h = 0; h < 3; ++h) CHECK(hidden.at(0, h) == single.h[h]);
}

TEST_CASE("layer forward: zero input with zero coefficients stays at rest") {
  Rng rng(7);
  ModelConfig cfg;
  cfg.in_channels = 2;
  cfg.window = 4;
  cfg.conv = {{2, 1}};
  cfg.rnn_layers = 1;
  cfg.hidden = 3;
  cfg.landmarks = 4;
  cfg.classes = 2;
  cfg.dropout = 0.0;
  ParamTree params = init_params(cfg, rng);
  for (const char* g : {"beta_f", "beta_i", "beta_c", "beta_o"}) {
    params.at(std::string("rnn.0.") + g).fill(0.0);
  }
  const QkLayerView view = standalone_view(cfg, params);
  const Tensor hidden = qklstm_layer_forward(Tensor({5, 2}), CellState::zeros(3), view);
  for (double v : hidden.values()) CHECK(v == 0.0);
}

TEST_CASE("layer forward: split and resume equals one pass") {
  Rng rng(8);
  ModelConfig cfg;
  cfg.in_channels = 2;
  cfg.window = 8;
  cfg.conv = {{2, 1}};
  cfg.rnn_layers = 1;
  cfg.hidden = 3;
  cfg.landmarks = 4;
  cfg.classes = 2;
  cfg.dropout = 0.0;
  ParamTree params = init_params(cfg, rng);
  const QkLayerView view = standalone_view(cfg, params);

  const Tensor seq = random_window(rng, 6, 2);
  const Tensor full = qklstm_layer_forward(seq, CellState::zeros(3), view);

  Tensor head = Tensor::from({3, 2}, std::vector<double>(seq.data(), seq.data() + 6));
  Tensor tail = Tensor::from({3, 2}, std::vector<double>(seq.data() + 6, seq.data() + 12));
  CellState carried;
  const Tensor h1 = qklstm_layer_forward(head, CellState::zeros(3), view, nullptr, &carried);
  const Tensor h2 = qklstm_layer_forward(tail, carried, view);
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t h = 0; h < 3; ++h) {
      CHECK(full.at(t, h) == h1.at(t, h));
      CHECK(full.at(t + 3, h) == h2.at(t, h));
    }
  }

  CHECK_THROWS_AS(qklstm_layer_forward(Tensor({0, 2}), CellState::zeros(3), view), ShapeError);
}

TEST_CASE("model forward: shapes, determinism, reference transcription") {
  Rng rng(9);
  ModelConfig cfg = tiny_config();
  cfg.rnn_layers = 2;  // exercise the stacked path
  ParamTree params = init_params(cfg, rng);
  const Tensor window = random_window(rng, cfg.window, cfg.in_channels);

  const Tensor a = model_forward(window, cfg, params, nullptr, false);
  const Tensor b = model_forward(window, cfg, params, nullptr, false);
  CHECK(a.size() == cfg.classes);
  CHECK(a == b);

  const Tensor ref = oracles::model_reference(window, cfg, params);
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    CHECK(std::abs(a[c] - ref[c]) < 1e-10);
  }

  SUBCASE("dropout at eval time changes nothing") {
    ModelConfig dropped = cfg;
    dropped.dropout = 0.5;
    const Tensor c = model_forward(window, dropped, params, nullptr, false);
    CHECK(c == a);
  }
  SUBCASE("window shape mismatch is rejected") {
    CHECK_THROWS_AS(model_forward(random_window(rng, 4, 3), cfg, params, nullptr, false),
                    ShapeError);
  }
  SUBCASE("mean pooling variant agrees with its reference") {
    ModelConfig pooled = cfg;
    pooled.mean_pool = true;
    const Tensor got = model_forward(window, pooled, params, nullptr, false);
    const Tensor want = oracles::model_reference(window, pooled, params);
    for (std::size_t c = 0; c < cfg.classes; ++c) CHECK(std::abs(got[c] - want[c]) < 1e-10);
  }
}

TEST_CASE("model backward: zero upstream gives a zero tree") {
  Rng rng(10);
  const ModelConfig cfg = tiny_config();
  ParamTree params = init_params(cfg, rng);
  ModelCache cache;
  model_forward(random_window(rng, cfg.window, cfg.in_channels), cfg, params, nullptr, true, &cache);
  const ParamTree grads = model_backward(cfg, params, cache, Tensor({cfg.classes}));
  for (const auto& [name, t] : grads) {
    for (double v : t.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("model backward: missing cache is rejected") {
  Rng rng(10);
  const ModelConfig cfg = tiny_config();
  ParamTree params = init_params(cfg, rng);
  ModelCache cache;  // never filled by a forward pass
  CHECK_THROWS_AS(model_backward(cfg, params, cache, Tensor({cfg.classes})), ShapeError);
}

namespace {

void check_model_gradients(const ModelConfig& cfg, std::uint64_t seed, double rel_tol,
                           double abs_tol) {
  Rng rng(seed);
  ParamTree params = init_params(cfg, rng);
  const Tensor window = random_window(rng, cfg.window, cfg.in_channels);
  const std::size_t label = 1;

  ModelCache cache;
  const Tensor logits = model_forward(window, cfg, params, nullptr, true, &cache);
  const auto sx = softmax_cross_entropy(logits, label);
  const ParamTree analytic = model_backward(cfg, params, cache, sx.grad);
  const ParamTree fd = finite_diff_grad(
      [&](const ParamTree& p) { return model_loss(cfg, p, window, label); }, params);

  auto a = analytic.begin();
  auto f = fd.begin();
  for (; a != analytic.end(); ++a, ++f) {
    for (std::size_t i = 0; i < a->second.size(); ++i) {
      INFO("parameter ", a->first, "[", i, "]");
      CHECK(oracles::close(a->second[i], f->second[i], rel_tol, abs_tol));
    }
  }
}

}  // namespace

TEST_CASE("model backward matches finite differences (kernel gates, depth 0)") {
  check_model_gradients(tiny_config(), 11, 1e-4, 1e-8);
}

TEST_CASE("model backward matches finite differences (bias + mean pool + 2 layers)") {
  ModelConfig cfg = tiny_config();
  cfg.gate_bias = true;
  cfg.mean_pool = true;
  cfg.rnn_layers = 2;
  check_model_gradients(cfg, 12, 1e-4, 1e-8);
}

TEST_CASE("model backward matches finite differences (entangled kernel, depth 1)") {
  ModelConfig cfg = tiny_config();
  cfg.window = 6;
  cfg.kernel_depth = 1;
  check_model_gradients(cfg, 13, 1e-4, 1e-8);
}

TEST_CASE("model backward matches finite differences (classical baseline)") {
  ModelConfig cfg = tiny_config();
  cfg.baseline = true;
  check_model_gradients(cfg, 14, 1e-6, 1e-9);
}

TEST_CASE("kernel and classical cells share the degenerate trajectory") {
  ModelConfig qk = tiny_config();
  ModelConfig cls = tiny_config();
  cls.baseline = true;
  Rng rng(15);
  ParamTree pq = init_params(qk, rng);
  ParamTree pc = init_params(cls, rng);
  for (const char* g : {"beta_f", "beta_i", "beta_c", "beta_o"}) {
    pq.at(std::string("rnn.0.") + g).fill(0.0);
  }
  for (std::size_t g = 0; g < 4; ++g) {
    pc.at(std::string("rnn.0.weight_") + kGateSuffix[g]).fill(0.0);
    pc.at(std::string("rnn.0.bias_") + kGateSuffix[g]).fill(0.0);
  }
  const QkLayerView vq = qk_layer_view(qk, pq, 0);
  const LstmLayerView vc = lstm_layer_view(cls, pc, 0);

  CellState sq = CellState::zeros(4), sc = CellState::zeros(4);
  sq.c = sc.c = {0.5, -1.0, 0.25, 2.0};
  for (int t = 0; t < 5; ++t) {
    std::vector<double> x = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    sq = qklstm_cell_forward(x, sq, vq);
    sc = classical_lstm_cell_forward(x, sc, vc);
    for (std::size_t h = 0; h < 4; ++h) {
      CHECK(sq.c[h] == sc.c[h]);
      CHECK(sq.h[h] == sc.h[h]);
    }
  }
}

TEST_CASE("hidden state stays inside the open unit interval") {
  Rng rng(16);
  ModelConfig cfg = tiny_config();
  ParamTree params = init_params(cfg, rng);
  // inflate coefficients to push the gates hard
  for (const char* g : {"beta_f", "beta_i", "beta_c", "beta_o"}) {
    for (double& v : params.at(std::string("rnn.0.") + g).values()) v *= 10.0;
  }
  const QkLayerView view = standalone_view(cfg, params);
  CellState state = CellState::zeros(4);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> x = {5.0 * rng.normal(), 5.0 * rng.normal(), 5.0 * rng.normal(),
                             5.0 * rng.normal()};
    state = qklstm_cell_forward(x, state, view);
    for (double h : state.h) {
      CHECK(h > -1.0);
      CHECK(h < 1.0);
    }
  }
}

TEST_CASE("overfitting one fixed batch") {
  // 50 optimizer steps at lr 1e-2 on 8 windows must cut the loss below 25%
  // of its starting value, decreasing in at least 45 of the 50 steps.
  ModelConfig cfg;
  cfg.in_channels = 3;
  cfg.window = 32;
  cfg.conv = {{8, 5}};
  cfg.rnn_layers = 1;
  cfg.hidden = 12;
  cfg.landmarks = 8;
  cfg.classes = 4;
  cfg.dropout = 0.0;

  const WindowedDataset data = gen_synthetic(4, 2, 32, 3, 0.1, 99);
  REQUIRE(data.count() == 8);

  Rng rng(17);
  ParamTree params = init_params(cfg, rng);
  AdamState state = AdamState::init(params);
  AdamHyper hyper;
  hyper.lr = 1e-2;

  auto batch_pass = [&](bool with_grads, ParamTree* grads_out) {
    double loss = 0.0;
    ParamTree grads = ParamTree::zeros_like(params);
    for (std::size_t i = 0; i < data.count(); ++i) {
      ModelCache cache;
      const Tensor logits =
          model_forward(data.window(i), cfg, params, nullptr, true, with_grads ? &cache : nullptr);
      const auto sx = softmax_cross_entropy(logits, static_cast<std::size_t>(data.labels[i]));
      loss += sx.loss / static_cast<double>(data.count());
      if (with_grads) {
        grads.add_scaled(model_backward(cfg, params, cache, sx.grad),
                         1.0 / static_cast<double>(data.count()));
      }
    }
    if (grads_out) *grads_out = std::move(grads);
    return loss;
  };

  const double initial = batch_pass(false, nullptr);
  double prev = initial;
  int decreases = 0;
  double last = initial;
  for (int step = 0; step < 50; ++step) {
    ParamTree grads;
    batch_pass(true, &grads);
    adam_step(params, grads, state, hyper);
    last = batch_pass(false, nullptr);
    if (last < prev) ++decreases;
    prev = last;
  }
  CHECK(decreases >= 45);
  CHECK(last < 0.25 * initial);
}

TEST_CASE("parameter counting") {
  SUBCASE("classical layer at m = n = 64") {
    ModelConfig cfg;
    cfg.in_channels = 3;
    cfg.window = 100;
    cfg.conv = {{64, 11}};
    cfg.rnn_layers = 1;
    cfg.hidden = 64;
    cfg.baseline = true;
    cfg.classes = 4;
    cfg.dropout = 0.0;
    const ParamCount count = count_params(cfg);
    CHECK(count.rows[1].component == "rnn.0");
    CHECK(count.rows[1].count == 33024);
  }
  SUBCASE("kernel layer at m = n = 64, N = 16") {
    ModelConfig cfg;
    cfg.in_channels = 3;
    cfg.window = 100;
    cfg.conv = {{64, 11}};
    cfg.rnn_layers = 1;
    cfg.hidden = 64;
    cfg.landmarks = 16;
    cfg.classes = 4;
    cfg.dropout = 0.0;
    const ParamCount count = count_params(cfg);
    CHECK(count.rows[1].count == 6656);
  }
  SUBCASE("table equals the actual parameter tree") {
    Rng rng(20);
    for (bool baseline : {false, true}) {
      for (bool bias : {false, true}) {
        ModelConfig cfg = tiny_config();
        cfg.rnn_layers = 2;
        cfg.baseline = baseline;
        cfg.gate_bias = bias;
        const ParamTree params = init_params(cfg, rng);
        CHECK(count_params(cfg).total == params.numel());
      }
    }
  }
  SUBCASE("kernel variant is strictly smaller whenever N <= n/2") {
    for (std::size_t m : {8u, 16u, 64u}) {
      for (std::size_t n : {8u, 16u, 64u}) {
        for (std::size_t n_land = 1; n_land <= n / 2; n_land += 3) {
          ModelConfig qk;
          qk.in_channels = 3;
          qk.window = 64;
          qk.conv = {{m, 5}};
          qk.rnn_layers = 1;
          qk.hidden = n;
          qk.landmarks = n_land;
          qk.classes = 4;
          qk.dropout = 0.0;
          ModelConfig cls = qk;
          cls.baseline = true;
          CHECK(count_params(qk).total < count_params(cls).total);
        }
      }
    }
  }
}

TEST_CASE("parameter initialization is deterministic") {
  ModelConfig cfg = tiny_config();
  Rng a(42), b(42);
  CHECK(init_params(cfg, a) == init_params(cfg, b));
}
