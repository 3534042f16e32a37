#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "aunet/hierarchy.hpp"
#include "aunet/ops.hpp"
#include "aunet/splitter.hpp"
#include "aunet/trainer.hpp"
#include "doctest.h"
#include "test_util.hpp"

using aunet::AUNetConfig;
using aunet::PackedBatch;
using aunet::Tensor;
using aunet::TrainConfig;

namespace {

std::vector<std::uint8_t> to_bytes(const std::string& s) {
  return {s.begin(), s.end()};
}

AUNetConfig tiny_cfg(int n_stages, std::int64_t max_len2 = 64) {
  AUNetConfig cfg;
  cfg.n_stages = n_stages;
  const std::int64_t dims[4] = {8, 12, 16, 20};
  for (int s = 0; s < n_stages; ++s) {
    aunet::StageSpec st;
    st.dim = dims[s];
    st.n_layers = 1;
    st.ffn = dims[s] + 4;
    st.head_dim = 4;
    st.window = s == 0 ? 16 : 0;
    st.max_len = s == 0 ? 128 : max_len2 >> (s - 1);
    cfg.stages.push_back(st);
  }
  return cfg;
}

TrainConfig tiny_train(std::int64_t seq, std::int64_t rows, std::int64_t steps) {
  TrainConfig tc;
  tc.seq_len = seq;
  tc.bsz = seq * rows;
  tc.total_steps = steps;
  tc.lr_max = 0.01;
  tc.eval_interval = 10;
  return tc;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("packing layout: docs, separators, padding") {
  const auto stream = aunet::join_docs({to_bytes("aaaaaaaaaa"), to_bytes("bbbbbbbbbb")});
  REQUIRE(stream.size() == 22);
  CHECK(stream[10] == aunet::kSepByte);
  CHECK(stream[21] == aunet::kSepByte);

  aunet::Packer packer(stream, tiny_cfg(2), 32, 1, 7);
  CHECK(packer.n_rows() == 1);
  const PackedBatch b = packer.next();
  REQUIRE(b.rows == 1);
  REQUIRE(b.seq == 32);
  for (int i = 0; i < 22; ++i) CHECK(b.bytes[i] == stream[i]);
  for (int i = 22; i < 32; ++i) CHECK(b.bytes[i] == aunet::kSepByte);
  // Real positions predict their successor, including the separators; the
  // last real byte would predict padding and is masked with the pad tail.
  for (int i = 0; i <= 20; ++i) CHECK(b.targets[i] == static_cast<int>(stream[i + 1]));
  for (int i = 21; i < 32; ++i) CHECK(b.targets[i] == aunet::kIgnoreTarget);
  CHECK(b.real_bytes == 22);
  CHECK(b.live_targets == 21);
}

TEST_CASE("packing layout: exact fit leaves no padding") {
  const auto stream = aunet::join_docs({to_bytes("one two three four five six sed")});
  REQUIRE(stream.size() == 32);
  aunet::Packer packer(stream, tiny_cfg(2), 32, 1, 0);
  const PackedBatch b = packer.next();
  CHECK(b.real_bytes == 32);
  CHECK(b.live_targets == 31);
  CHECK(b.targets[30] == static_cast<int>(aunet::kSepByte));
  CHECK(b.targets[31] == aunet::kIgnoreTarget);
}

TEST_CASE("packing is deterministic per seed") {
  std::string text;
  for (int i = 0; i < 40; ++i) text += "many words fill the stream here. ";
  const auto stream = aunet::join_docs({to_bytes(text)});
  const auto cfg = tiny_cfg(2);

  aunet::Packer a(stream, cfg, 32, 4, 11);
  aunet::Packer b(stream, cfg, 32, 4, 11);
  for (int i = 0; i < 5; ++i) {
    const PackedBatch ba = a.next();
    const PackedBatch bb = b.next();
    CHECK(ba.bytes == bb.bytes);
    CHECK(ba.targets == bb.targets);
  }

  aunet::Packer c(stream, cfg, 32, 4, 12);
  aunet::Packer d(stream, cfg, 32, 4, 11);
  bool differed = false;
  for (int i = 0; i < 3 && !differed; ++i) differed = c.next().bytes != d.next().bytes;
  CHECK(differed);

  CHECK_THROWS_AS(aunet::Packer(to_bytes("tiny"), cfg, 32, 4, 0), std::invalid_argument);
}

TEST_CASE("cosine schedule: warmup, peak, floor") {
  TrainConfig tc;
  tc.lr_max = 0.004;
  tc.total_steps = 1000;
  CHECK(aunet::cosine_lr(0, tc) == 0.0);
  CHECK(aunet::cosine_lr(50, tc) == doctest::Approx(0.002));
  CHECK(aunet::cosine_lr(100, tc) == doctest::Approx(0.004));
  CHECK(aunet::cosine_lr(1000, tc) == doctest::Approx(0.01 * 0.004));
  // Halfway through the decay phase the cosine sits at its midpoint.
  const double mid = 0.01 * 0.004 + 0.5 * (0.004 - 0.01 * 0.004);
  CHECK(aunet::cosine_lr(550, tc) == doctest::Approx(mid));
  double prev = aunet::cosine_lr(100, tc);
  for (std::int64_t s = 150; s <= 1000; s += 50) {
    const double lr = aunet::cosine_lr(s, tc);
    CHECK(lr < prev);
    prev = lr;
  }
  CHECK_THROWS_AS(aunet::cosine_lr(-1, tc), std::invalid_argument);
  CHECK_THROWS_AS(aunet::cosine_lr(1001, tc), std::invalid_argument);
}

TEST_CASE("adamw: zero grads, clipping, non-finite abort") {
  auto w = aunet::make_tensor<double>({2}, {1.0, 2.0}, true);
  TrainConfig tc;
  tc.weight_decay = 0.0;

  aunet::AdamW<double> opt({{"w", w}}, tc);
  opt.step(0.1);  // empty grad counts as zero
  CHECK(w->values[0] == 1.0);
  CHECK(w->values[1] == 2.0);

  w->ensure_grad();
  w->grad = {0.6, 0.8};
  opt.step(0.1);
  CHECK(opt.last_grad_norm() == doctest::Approx(1.0));
  CHECK(opt.last_clip_scale() == doctest::Approx(0.2));

  w->grad = {std::numeric_limits<double>::quiet_NaN(), 0.0};
  CHECK_THROWS_WITH_AS(opt.step(0.1), doctest::Contains("non-finite gradient in w"),
                       std::runtime_error);

  CHECK_THROWS_AS(aunet::AdamW<double>({}, tc), std::invalid_argument);
}

TEST_CASE("adamw: scalar quadratic reaches its optimum") {
  auto w = aunet::make_tensor<double>({1}, {0.0}, true);
  auto c = aunet::make_tensor<double>({1}, {-3.0});
  TrainConfig tc;
  tc.weight_decay = 0.0;
  aunet::AdamW<double> opt({{"w", w}}, tc);
  for (int step = 0; step < 200; ++step) {
    aunet::zero_grad<double>({w});
    auto d = aunet::add(w, c);
    auto loss = aunet::mul(d, d);
    aunet::backward(loss);
    opt.step(0.1);
  }
  CHECK(std::abs(w->values[0] - 3.0) < 0.01);
}

TEST_CASE("bits per byte: uniform logits cost exactly 8") {
  const auto cfg = tiny_cfg(1);
  auto m = aunet::make_model<double>(cfg, 3);
  for (auto& v : m.head->values) v = 0.0;
  std::vector<std::uint8_t> bytes;
  std::mt19937_64 rng(9);
  for (int i = 0; i < 300; ++i) bytes.push_back(static_cast<std::uint8_t>(rng() % 256));
  CHECK(aunet::bits_per_byte(m, bytes, 64) == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("bits per byte matches a log-loss oracle") {
  const auto cfg = tiny_cfg(2);
  const auto m = aunet::make_model<double>(cfg, 17);
  const auto bytes = to_bytes("The quick brown fox jumps over the lazy dog. Pack my box with five dozen jugs");
  REQUIRE(bytes.size() > 64);

  const double got = aunet::bits_per_byte(m, bytes, 128);

  aunet::NoGradGuard ng;
  const std::string text(bytes.begin(), bytes.end());
  const auto segmap =
      aunet::build_hierarchy(aunet::split_stage1(text, cfg.splitter), text, cfg.splitter);
  const auto logits = aunet::aunet_forward(m, bytes, segmap);
  const auto targets =
      aunet::row_targets(bytes.data(), static_cast<std::int64_t>(bytes.size()),
                         static_cast<std::int64_t>(bytes.size()), segmap, cfg);
  double nats = 0;
  std::int64_t live = 0;
  const std::int64_t v = cfg.vocab;
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(targets.size()); ++i) {
    if (targets[i] == aunet::kIgnoreTarget) continue;
    const double* row = logits->values.data() + i * v;
    double mx = row[0];
    for (std::int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    double z = 0;
    for (std::int64_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    nats += mx + std::log(z) - row[targets[i]];
    ++live;
  }
  CHECK(got == doctest::Approx(nats / static_cast<double>(live) / std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("padding bytes contribute nothing to loss or gradients") {
  const auto cfg = tiny_cfg(2);
  auto m = aunet::make_model<double>(cfg, 5);
  auto params = aunet::named_params(m);
  std::vector<Tensor<double>> tensors;
  for (auto& [n, p] : params) tensors.push_back(p);

  const std::string real = "the cat sat on the mat.\n";
  const std::int64_t real_len = static_cast<std::int64_t>(real.size());
  const std::int64_t seq = 32;

  auto run = [&](std::uint8_t pad) {
    std::vector<std::uint8_t> row(real.begin(), real.end());
    row.resize(static_cast<std::size_t>(seq), pad);
    const std::string text(row.begin(), row.end());
    const auto segmap =
        aunet::build_hierarchy(aunet::split_stage1(text, cfg.splitter), text, cfg.splitter);
    const auto targets = aunet::row_targets(row.data(), real_len, seq, segmap, cfg);
    aunet::zero_grad(tensors);
    const auto logits = aunet::aunet_forward(m, row, segmap);
    const auto ce = aunet::cross_entropy_logits(logits, targets, aunet::kIgnoreTarget);
    aunet::backward(ce);
    std::vector<std::vector<double>> grads;
    for (auto& t : tensors) grads.push_back(t->grad);
    return std::make_pair(ce->values[0], grads);
  };

  // 0x00 and 0x01 pads tile into identical segment structure, so every shape
  // in the graph matches and the results must agree bit for bit.
  const auto [loss_a, grads_a] = run(aunet::kSepByte);
  const auto [loss_b, grads_b] = run(0x01);
  CHECK(loss_a == loss_b);
  REQUIRE(grads_a.size() == grads_b.size());
  for (std::size_t i = 0; i < grads_a.size(); ++i) CHECK(grads_a[i] == grads_b[i]);

  // Letter pads merge into one long pad word, changing contraction lengths in
  // the matrix products; agreement then holds to rounding only.
  const auto [loss_c, grads_c] = run('z');
  CHECK(loss_a == doctest::Approx(loss_c).epsilon(1e-12));
  for (std::size_t i = 0; i < grads_a.size(); ++i) {
    // A never-touched parameter keeps an empty grad, equivalent to zeros; the
    // long pad word touches later upsampling maps than the short pads do.
    const auto& ga = grads_a[i];
    const auto& gc = grads_c[i];
    const std::size_t n = std::max(ga.size(), gc.size());
    double mx = 0, diff = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const double a = j < ga.size() ? ga[j] : 0.0;
      const double c = j < gc.size() ? gc[j] : 0.0;
      mx = std::max({mx, std::abs(a), std::abs(c)});
      diff = std::max(diff, std::abs(a - c));
    }
    CHECK(diff <= 1e-12 * std::max(mx, 1e-30));
  }

  // The masked loss over the padded row equals the loss over the bare prefix.
  aunet::NoGradGuard ng;
  std::vector<std::uint8_t> prefix(real.begin(), real.end());
  const std::string ptext(prefix.begin(), prefix.end());
  const auto psegmap =
      aunet::build_hierarchy(aunet::split_stage1(ptext, cfg.splitter), ptext, cfg.splitter);
  const auto ptargets = aunet::row_targets(prefix.data(), real_len, real_len, psegmap, cfg);
  const auto plogits = aunet::aunet_forward(m, prefix, psegmap);
  const auto pce = aunet::cross_entropy_logits(plogits, ptargets, aunet::kIgnoreTarget);
  CHECK(loss_a == doctest::Approx(pce->values[0]).epsilon(1e-12));
}

TEST_CASE("stage caps mask the truncated tail") {
  const auto cfg = tiny_cfg(2, /*max_len2=*/3);
  const std::string text = "aa bb cc dd ee ff gg hh";
  const auto row = to_bytes(text);
  const std::int64_t len = static_cast<std::int64_t>(row.size());
  const auto bounds = aunet::split_stage1(text, cfg.splitter);
  REQUIRE(bounds.size() > 3);
  const auto segmap = aunet::build_hierarchy(bounds, text, cfg.splitter);
  const auto targets = aunet::row_targets(row.data(), len, len, segmap, cfg);
  const std::int64_t cut = bounds[2];
  for (std::int64_t i = 0; i < len; ++i) {
    if (i + 1 < len && i <= cut)
      CHECK(targets[i] == static_cast<int>(row[i + 1]));
    else
      CHECK(targets[i] == aunet::kIgnoreTarget);
  }
}

TEST_CASE("training runs deterministically and reduces the loss") {
  std::string text;
  for (int i = 0; i < 120; ++i) text += "the cat sat. ";
  const auto corpus = aunet::join_docs({to_bytes(text)});
  const auto tc = tiny_train(64, 4, 25);

  auto run = [&] {
    auto m = aunet::make_model<double>(tiny_cfg(1), 21);
    std::vector<std::string> lines;
    aunet::TrainCallbacks cb;
    cb.metrics = [&](const std::string& l) { lines.push_back(l); };
    const auto res = aunet::train(m, tc, corpus, cb);
    return std::make_pair(res, lines);
  };

  const auto [res_a, lines_a] = run();
  const auto [res_b, lines_b] = run();
  REQUIRE(lines_a.size() == lines_b.size());
  for (std::size_t i = 0; i < lines_a.size(); ++i) {
    // Everything before the wall-clock throughput field is deterministic.
    const auto cut = [](const std::string& l) { return l.substr(0, l.find(" bytes_per_sec=")); };
    CHECK(cut(lines_a[i]) == cut(lines_b[i]));
  }
  REQUIRE(lines_a.size() == 25);
  CHECK(lines_a.front().rfind("step=1 loss=", 0) == 0);
  CHECK(lines_a.front().find("bytes_per_sec=") != std::string::npos);
  CHECK(lines_a.front().find("bpb=") == std::string::npos);
  CHECK(lines_a[9].find("bpb=") != std::string::npos);
  CHECK(res_a.steps == 25);
  CHECK(res_a.final_bpb > 0.0);

  // Repetitive text is quickly compressible even for a tiny model.
  const double first = std::stod(lines_a.front().substr(std::string("step=1 loss=").size()));
  CHECK(res_a.final_loss < first);
  CHECK(res_b.final_loss == res_a.final_loss);
}

TEST_CASE("training on incompressible bytes plateaus at eight bits") {
  // Large enough that 150 steps stay under one epoch; a smaller corpus lets
  // even this model memorize sampling noise and drag the held-out cost up.
  std::vector<std::uint8_t> corpus;
  std::mt19937_64 rng(4);
  for (int i = 0; i < 32768; ++i) corpus.push_back(static_cast<std::uint8_t>(rng() % 256));
  auto m = aunet::make_model<double>(tiny_cfg(1), 2);
  const auto res = aunet::train(m, tiny_train(64, 4, 150), corpus);
  CHECK(res.final_bpb == doctest::Approx(8.0).epsilon(0.0125));
}

TEST_CASE("non-finite loss aborts before any checkpoint") {
  std::string text;
  for (int i = 0; i < 60; ++i) text += "the cat sat. ";
  const auto corpus = aunet::join_docs({to_bytes(text)});
  auto m = aunet::make_model<double>(tiny_cfg(1), 21);
  m.head->values[0] = std::numeric_limits<double>::quiet_NaN();
  std::int64_t checkpoints = 0;
  aunet::TrainCallbacks cb;
  cb.checkpoint = [&](std::int64_t) { ++checkpoints; };
  auto tc = tiny_train(64, 2, 5);
  tc.checkpoint_interval = 1;
  CHECK_THROWS_WITH_AS(aunet::train(m, tc, corpus, cb),
                       doctest::Contains("non-finite loss at step 1"), std::runtime_error);
  CHECK(checkpoints == 0);
}

TEST_CASE("train config validation") {
  TrainConfig tc;
  tc.bsz = 100;
  tc.seq_len = 64;
  CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
  tc = TrainConfig{};
  tc.warmup_fraction = 0.0;
  CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
  tc = TrainConfig{};
  tc.grad_clip = 0.0;
  CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
  tc = TrainConfig{};
  CHECK_NOTHROW(tc.validate());
}

}  // TEST_SUITE
