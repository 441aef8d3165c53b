#include <doctest.h>

#include <cmath>

#include "fishdet/checkpoint.hpp"
#include "fishdet/errors.hpp"
#include "fishdet/model.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace fishdet;
using namespace fishdet::model;

namespace {
ModelConfig config(Cell cell, int w, int s) {
  ModelConfig c;
  c.cell = cell;
  c.w = w;
  c.s = s;
  return c;
}
}  // namespace

TEST_CASE("parameter counts for the benchmark configurations") {
  const int ws[] = {5, 10, 15};
  const int ss[] = {32, 64, 128};
  const std::size_t elman[3][3] = {{5704, 21640, 84232}, {5864, 21960, 84872}, {6024, 22280, 85512}};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const auto n = count_params(config(Cell::elman, ws[i], ss[j]));
      CHECK(n.total == elman[i][j]);
      const std::size_t s = static_cast<std::size_t>(ss[j]), w = static_cast<std::size_t>(ws[i]);
      CHECK(n.total == 5 * s * s + w * s + 13 * s + 8);
      CHECK(n.aux == 8);
    }
  }
  CHECK(count_params(config(Cell::gru, 10, 64)).total == 64200);
  CHECK(count_params(config(Cell::lstm, 10, 64)).total == 85320);
}

TEST_CASE("allocated weights match the accounting") {
  for (auto cell : {Cell::elman, Cell::gru, Cell::lstm}) {
    const auto cfg = config(cell, 10, 16);
    const auto w = init_weights<float>(cfg, 1);
    const auto n = count_params(cfg);
    CHECK(w.network_size() == n.recurrent + n.decoder);
    CHECK(w.centers.value.shape == nn::Shape{2, 16});
  }
}

TEST_CASE("init is seeded and bounded") {
  const auto cfg = config(Cell::lstm, 5, 32);
  const auto a = init_weights<float>(cfg, 7);
  const auto b = init_weights<float>(cfg, 7);
  const auto c = init_weights<float>(cfg, 8);
  const double bound = 1.0 / std::sqrt(32.0);
  bool differs = false;
  auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  for (std::size_t p = 0; p < pa.size(); ++p) {
    CHECK(pa[p]->value.data == pb[p]->value.data);
    differs = differs || pa[p]->value.data != pc[p]->value.data;
    if (pa[p]->name == "loss.centers") {
      for (float v : pa[p]->value.data) CHECK(v == 0.0f);
      continue;
    }
    for (float v : pa[p]->value.data) CHECK(std::abs(v) < bound);
  }
  CHECK(differs);
}

TEST_CASE("forward shapes, zero weights and batch independence") {
  Rng rng(3);
  for (auto cell : {Cell::elman, Cell::gru, Cell::lstm}) {
    const auto cfg = config(cell, 10, 32);
    auto zero = zero_weights<float>(cfg);
    nn::Tensor<float> x({2, 10, 4});
    for (auto& v : x.data) v = static_cast<float>(rng.uniform());
    {
      nn::Tape<float> tape;
      auto out = forward(tape, cfg, zero, x, false, rng);
      CHECK(tape.value(out.logits).shape == nn::Shape{2});
      CHECK(tape.value(out.embedding).shape == nn::Shape{2, 32});
      CHECK(tape.value(out.logits).data == std::vector<float>{0.0f, 0.0f});
    }
    auto w = init_weights<float>(cfg, 5);
    nn::Tensor<float> swapped = x;
    std::copy_n(x.data.begin(), 40, swapped.data.begin() + 40);
    std::copy_n(x.data.begin() + 40, 40, swapped.data.begin());
    nn::Tape<float> t1, t2;
    auto o1 = forward(t1, cfg, w, x, false, rng);
    auto o2 = forward(t2, cfg, w, swapped, false, rng);
    CHECK(t1.value(o1.logits).data[0] == t2.value(o2.logits).data[1]);
    CHECK(t1.value(o1.logits).data[1] == t2.value(o2.logits).data[0]);

    nn::Tensor<float> bad({2, 9, 4});
    nn::Tape<float> t3;
    CHECK_THROWS_AS(forward(t3, cfg, w, bad, false, rng), std::invalid_argument);
  }
}

TEST_CASE("inference is deterministic and dropout free") {
  const auto cfg = config(Cell::gru, 5, 8);
  auto w = init_weights<float>(cfg, 2);
  nn::Tensor<float> x({3, 5, 4}, 0.3f);
  Rng r1(1), r2(999);
  nn::Tape<float> a, b;
  auto oa = forward(a, cfg, w, x, false, r1);
  auto ob = forward(b, cfg, w, x, false, r2);
  CHECK(a.value(oa.logits).data == b.value(ob.logits).data);
}

TEST_CASE("config validation") {
  CHECK_THROWS(config(Cell::elman, 1, 8).validate());
  CHECK_THROWS(config(Cell::elman, 5, 0).validate());
  auto c = config(Cell::elman, 5, 8);
  c.dropout_rate = 1.0;
  CHECK_THROWS(c.validate());
  CHECK(parse_cell("lstm") == Cell::lstm);
  CHECK_THROWS_AS(parse_cell("transformer"), std::invalid_argument);
  CHECK(ModelConfig::from_json(config(Cell::gru, 15, 128).to_json()) == config(Cell::gru, 15, 128));
}

TEST_CASE("analytic gradients match finite differences") {
  for (auto cell : {Cell::elman, Cell::gru, Cell::lstm}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      CAPTURE(to_string(cell));
      CAPTURE(seed);
      const auto d = oracle::gradient_check<double>(cell, seed, 1e-5);
      CHECK(d.max_rel_error < 1e-6);
      // A wider batch keeps some decoder ReLU units alive, so every
      // parameter must receive gradient.
      CHECK(oracle::gradient_check<double>(cell, seed, 1e-5, 4, 6, 8).zero_grad_params == 0);
      const auto f = oracle::gradient_check<float>(cell, seed);
      CHECK(f.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("checkpoint round trip and integrity checks") {
  testing::TempDir dir;
  Checkpoint ck;
  ck.config = config(Cell::lstm, 5, 8);
  ck.weights = init_weights<float>(ck.config, 4);
  for (std::size_t a = 0; a < 4; ++a) ck.norm.attrs[a] = {1.0 + a, 2.0, -1.0, 10.0 + a};
  ck.metadata = {{"note", "x"}};
  const auto path = dir.file("m.json");
  ck.save(path);
  const auto back = Checkpoint::load(path);
  CHECK(back.config == ck.config);
  auto pa = ck.weights.parameters();
  auto pb = back.weights.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t p = 0; p < pa.size(); ++p) {
    CHECK(pa[p]->name == pb[p]->name);
    CHECK(pa[p]->value.data == pb[p]->value.data);
  }
  CHECK(back.norm.hash() == ck.norm.hash());
  CHECK(back.metadata["note"] == "x");

  SUBCASE("tampered statistics") {
    auto j = nlohmann::json::parse(std::ifstream(path));
    j["normalization"]["sog"]["mean"] = 123.0;
    std::ofstream(path) << j.dump();
    CHECK_THROWS_AS(Checkpoint::load(path), ConfigError);
  }
  SUBCASE("truncated blob") {
    std::filesystem::resize_file(path + ".bin", 16);
    CHECK_THROWS_AS(Checkpoint::load(path), IoError);
  }
  SUBCASE("missing manifest") { CHECK_THROWS_AS(Checkpoint::load(dir.file("none.json")), IoError); }
}
