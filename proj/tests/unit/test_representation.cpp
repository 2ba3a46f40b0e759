#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "avsf/error.hpp"
#include "avsf/pipeline.hpp"
#include "avsf/representation.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace avsf;

namespace {

struct Instance {
  ToyEncoder enc;
  Matrix visual, audio;
  std::vector<std::size_t> targets;
};

Instance random_instance(std::uint64_t seed, std::size_t frames, std::size_t w, std::size_t c = 5) {
  std::mt19937_64 rng(seed);
  EncoderShape shape{3, 4, 2, w, c};
  Instance in{ToyEncoder::initialise(shape, seed), test::random_matrix(frames, 3, rng), test::random_matrix(frames, 4, rng), {}};
  // non-trivial mask vectors and larger predictor weights so every block matters
  std::normal_distribution<double> n(0.0, 0.5);
  for (auto& v : in.enc.params.visual_mask) v = n(rng);
  for (auto& v : in.enc.params.audio_mask) v = n(rng);
  for (auto& v : in.enc.params.predictor_w.data()) v = n(rng);
  for (std::size_t t = 0; t < frames; ++t) in.targets.push_back(rng() % c);
  return in;
}

double oracle_nll(const Matrix& logits, const std::vector<std::size_t>& targets, const std::vector<std::size_t>& idx) {
  double s = 0;
  for (std::size_t t : idx) {
    double z = 0;
    for (std::size_t c = 0; c < logits.cols(); ++c) z += std::exp(logits(t, c));
    s -= logits(t, targets[t]) - std::log(z);
  }
  return s;
}

// Direct loops: frontends, mask substitution, zeroed dropped modality,
// zero-padded window, affine predictor.
Matrix oracle_logits(const ToyEncoder& e, const Matrix& v, const Matrix& a, const MaskSpec& m, DropoutState d) {
  const auto& p = e.params;
  const std::size_t T = v.rows(), df = e.shape.feature_dim, w = e.shape.context;
  std::vector<std::vector<double>> fused(T, std::vector<double>(2 * df, 0.0));
  auto in = [](const std::vector<std::size_t>& s, std::size_t t) { return std::find(s.begin(), s.end(), t) != s.end(); };
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < df; ++i) {
      if (d != DropoutState::audio_only) {
        double x = p.visual_b[i];
        for (std::size_t j = 0; j < v.cols(); ++j) x += p.visual_w(i, j) * v(t, j);
        fused[t][i] = in(m.visual, t) ? p.visual_mask[i] : x;
      }
      if (d != DropoutState::visual_only) {
        double x = p.audio_b[i];
        for (std::size_t j = 0; j < a.cols(); ++j) x += p.audio_w(i, j) * a(t, j);
        fused[t][df + i] = in(m.audio, t) ? p.audio_mask[i] : x;
      }
    }
  }
  Matrix out(T, e.shape.codebook_size);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < e.shape.codebook_size; ++c) {
      double z = p.predictor_b[c];
      for (long k = -static_cast<long>(w); k <= static_cast<long>(w); ++k) {
        const long u = static_cast<long>(t) + k;
        if (u < 0 || u >= static_cast<long>(T)) continue;
        for (std::size_t j = 0; j < 2 * df; ++j) z += p.predictor_w(c, (k + w) * 2 * df + j) * fused[u][j];
      }
      out(t, c) = z;
    }
  }
  return out;
}

MaskSpec fixed_mask(std::vector<std::size_t> v, std::vector<std::size_t> a) {
  MaskSpec m;
  m.visual = std::move(v);
  m.audio = std::move(a);
  return m;
}

}  // namespace

TEST_CASE("zero predictor gives uniform softmax and 5 ln C over five masked frames") {
  EncoderShape shape{4, 4, 4, 0, 100};
  ToyEncoder enc{shape, EncoderParams::zeros(shape)};
  for (std::size_t i = 0; i < 4; ++i) enc.params.visual_w(i, i) = enc.params.audio_w(i, i) = 1.0;
  std::mt19937_64 rng(1);
  const Matrix v = test::random_matrix(10, 4, rng), a = test::random_matrix(10, 4, rng);
  const auto mask = fixed_mask({1, 2, 3}, {3, 4, 5});
  const Matrix logits = forward(enc, v, a, mask, DropoutState::both);
  const Matrix p = softmax_rows(logits);
  for (double x : p.data()) CHECK(x == doctest::Approx(0.01));
  std::vector<std::size_t> targets(10, 7);
  CHECK(masked_nll(logits, targets, mask) == doctest::Approx(5.0 * std::log(100.0)));
  CHECK(5.0 * std::log(100.0) == doctest::Approx(23.0259).epsilon(1e-5));
}

TEST_CASE("masked_nll matches a direct re-derivation and vanishes with a large margin") {
  std::mt19937_64 rng(2);
  const Matrix logits = test::random_matrix(12, 6, rng, 3.0);
  std::vector<std::size_t> targets(12);
  for (auto& t : targets) t = rng() % 6;
  const auto mask = fixed_mask({0, 4, 5}, {5, 9});
  CHECK(masked_nll(logits, targets, mask) == doctest::Approx(oracle_nll(logits, targets, {0, 4, 5, 9})).epsilon(1e-12));
  CHECK(masked_nll(logits, targets, mask) >= 0.0);

  Matrix sure(12, 6, -1.0);
  for (std::size_t t = 0; t < 12; ++t) sure(t, targets[t]) = 800.0;
  CHECK(masked_nll(sure, targets, mask) == 0.0);
  CHECK_THROWS_AS(masked_nll(logits, targets, MaskSpec::none()), Error);
}

TEST_CASE("forward matches straight-line loops") {
  for (std::size_t w : {0u, 1u, 3u}) {
    for (auto d : {DropoutState::both, DropoutState::audio_only, DropoutState::visual_only}) {
      auto in = random_instance(10 + w, 7, w);
      const auto mask = fixed_mask({0, 1, 5}, {2, 6});
      const Matrix got = forward(in.enc, in.visual, in.audio, mask, d);
      const Matrix want = oracle_logits(in.enc, in.visual, in.audio, mask, d);
      for (std::size_t i = 0; i < got.data().size(); ++i) CHECK(got.data()[i] == doctest::Approx(want.data()[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("analytic gradient matches central differences") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const std::size_t w = seed % 3;
    auto in = random_instance(100 + seed, 6, w);
    const auto mask = fixed_mask({1, 2}, {2, 3, 4});
    const auto d = static_cast<DropoutState>(seed % 3);
    CHECK(oracle::gradient_check(in.enc, in.visual, in.audio, in.targets, mask, d) < 1e-5);
  }
}

TEST_CASE("gradient vanishes where the loss is zero") {
  auto in = random_instance(3, 5, 1);
  std::fill(in.targets.begin(), in.targets.end(), 2);
  in.enc.params.predictor_b[2] = 800.0;
  const auto g = grad_masked_nll(in.enc, in.visual, in.audio, in.targets, fixed_mask({0, 1}, {3}), DropoutState::both);
  CHECK(g.loss == 0.0);
  g.gradient.for_each_block([](std::span<const double> b) {
    for (double x : b) CHECK(std::abs(x) < 1e-12);
  });
}

TEST_CASE("duplicated masked frame doubles its gradient contribution") {
  // Two identical frames with identical targets: masking both doubles the gradient of masking one.
  auto in = random_instance(4, 1, 0);
  Matrix v(2, 3), a(2, 4);
  for (std::size_t j = 0; j < 3; ++j) v(0, j) = v(1, j) = in.visual(0, j);
  for (std::size_t j = 0; j < 4; ++j) a(0, j) = a(1, j) = in.audio(0, j);
  const std::vector<std::size_t> targets{1, 1};
  const auto one = grad_masked_nll(in.enc, v, a, targets, fixed_mask({0}, {}), DropoutState::both);
  const auto two = grad_masked_nll(in.enc, v, a, targets, fixed_mask({0, 1}, {}), DropoutState::both);
  CHECK(two.masked_frames == 2 * one.masked_frames);
  std::vector<std::span<const double>> g1;
  one.gradient.for_each_block([&](std::span<const double> b) { g1.push_back(b); });
  std::size_t blk = 0;
  two.gradient.for_each_block([&](std::span<const double> b) {
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(b[i] == doctest::Approx(2.0 * g1[blk][i]).epsilon(1e-12).scale(1e-12));
    ++blk;
  });
}

TEST_CASE("dropped modality has no influence") {
  auto in = random_instance(5, 9, 2);
  const auto mask = fixed_mask({3}, {4});
  Matrix other = in.audio;
  for (auto& x : other.data()) x += 5.0;
  CHECK(forward(in.enc, in.visual, in.audio, mask, DropoutState::visual_only) ==
        forward(in.enc, in.visual, other, mask, DropoutState::visual_only));
  Matrix vother = in.visual;
  for (auto& x : vother.data()) x *= -3.0;
  CHECK(forward(in.enc, in.visual, in.audio, mask, DropoutState::audio_only) ==
        forward(in.enc, vother, in.audio, mask, DropoutState::audio_only));

  const auto e1 = embed(in.enc, in.visual, Modality::visual);
  CHECK(e1.frames() == in.visual.rows());
  CHECK(e1.modality == Modality::visual);
  CHECK(embed(in.enc, in.visual, Modality::visual) == e1);
  for (std::size_t t = 0; t < e1.frames(); ++t) {
    double s = 0;
    for (double x : e1.data.row(t)) s += x;
    CHECK(s == doctest::Approx(1.0));
  }
}

TEST_CASE("frame-local loss is invariant to a joint permutation") {
  auto in = random_instance(6, 10, 0);
  const auto mask = fixed_mask({0, 3, 7}, {2, 3});
  const double base = masked_nll(forward(in.enc, in.visual, in.audio, mask, DropoutState::both), in.targets, mask);

  std::vector<std::size_t> perm(10);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(6);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::size_t> inv(10);
  for (std::size_t i = 0; i < 10; ++i) inv[perm[i]] = i;  // old index -> new index
  Matrix v(10, 3), a(10, 4);
  std::vector<std::size_t> targets(10);
  for (std::size_t i = 0; i < 10; ++i) {
    for (std::size_t j = 0; j < 3; ++j) v(i, j) = in.visual(perm[i], j);
    for (std::size_t j = 0; j < 4; ++j) a(i, j) = in.audio(perm[i], j);
    targets[i] = in.targets[perm[i]];
  }
  MaskSpec pm;
  for (auto t : mask.visual) pm.visual.push_back(inv[t]);
  for (auto t : mask.audio) pm.audio.push_back(inv[t]);
  std::sort(pm.visual.begin(), pm.visual.end());
  std::sort(pm.audio.begin(), pm.audio.end());
  CHECK(masked_nll(forward(in.enc, v, a, pm, DropoutState::both), targets, pm) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("masked content does not leak into the loss") {
  auto in = random_instance(7, 8, 2);
  const auto mask = fixed_mask({2, 3}, {3, 4});
  const double base = masked_nll(forward(in.enc, in.visual, in.audio, mask, DropoutState::both), in.targets, mask);
  Matrix v = in.visual, a = in.audio;
  for (std::size_t j = 0; j < 3; ++j) v(2, j) = v(3, j) = 1e3;
  for (std::size_t j = 0; j < 4; ++j) a(3, j) = a(4, j) = -7.0;
  CHECK(masked_nll(forward(in.enc, v, a, mask, DropoutState::both), in.targets, mask) == base);
}

TEST_CASE("sample_mask spans") {
  std::mt19937_64 rng(8);
  const auto m = sample_mask(100, 0.3, 5, rng);
  CHECK(!m.visual.empty());
  CHECK(m.visual.size() <= 30);
  for (auto t : m.union_indices()) CHECK(t < 100);
  CHECK(sample_mask(100, 0.0, 5, rng).union_indices().empty());
  CHECK(sample_mask(3, 0.3, 5, rng).visual.size() == 3);
}

TEST_CASE("lr = 0 leaves weights unchanged") {
  auto in = random_instance(9, 20, 1);
  std::vector<TrainingSequence> data{{in.visual, in.audio, in.targets}};
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.epochs = 3;
  CHECK(train(in.enc, data, cfg).encoder == in.enc);
}

TEST_CASE("one epoch on one sequence equals a hand-stepped update") {
  auto in = random_instance(10, 12, 0);
  std::vector<TrainingSequence> data{{in.visual, in.audio, in.targets}};
  TrainConfig cfg;
  cfg.lr = 0.3;
  cfg.epochs = 1;
  cfg.batch = 1;
  cfg.seed = 99;
  const auto trained = train(in.enc, data, cfg).encoder;

  std::mt19937_64 rng(cfg.seed);
  shuffled_order(1, rng);
  const auto mask = sample_mask(12, cfg.mask_prob, cfg.span_len, rng);
  const auto drop = sample_dropout(cfg.dropout, rng);
  const auto lg = grad_masked_nll(in.enc, in.visual, in.audio, in.targets, mask, drop);
  ToyEncoder want = in.enc;
  std::vector<std::span<const double>> g;
  lg.gradient.for_each_block([&](std::span<const double> b) { g.push_back(b); });
  std::size_t blk = 0;
  want.params.for_each_block([&](std::span<double> b) {
    for (std::size_t i = 0; i < b.size(); ++i) b[i] -= cfg.lr / static_cast<double>(lg.masked_frames) * g[blk][i];
    ++blk;
  });
  CHECK(trained == want);
}

TEST_CASE("training on the synthetic world lowers the loss within ten epochs") {
  const auto world = make_world(WorldParams{});
  ToyPipelineConfig cfg;
  cfg.codebook_size = 30;
  cfg.train_videos = 10;
  cfg.frames = 200;
  cfg.rounds = 1;
  cfg.train.epochs = 10;
  const auto res = train_toy_encoder(world, cfg);
  REQUIRE(res.round_loss.size() == 1);
  CHECK(res.round_loss[0][9] < res.round_loss[0][0]);

  const auto again = train_toy_encoder(world, cfg);
  CHECK(again.encoder == res.encoder);
}

TEST_CASE("divergence is reported") {
  auto in = random_instance(11, 20, 1);
  std::vector<TrainingSequence> data{{in.visual, in.audio, in.targets}};
  TrainConfig cfg;
  cfg.lr = 1e300;
  cfg.epochs = 5;
  try {
    train(in.enc, data, cfg);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::divergence);
  }
}

TEST_CASE("encoder serialisation round trip and errors") {
  auto in = random_instance(12, 4, 2);
  const auto dir = test::scratch("encoder");
  write_encoder(in.enc, dir / "e.bin");
  CHECK(read_encoder(dir / "e.bin") == in.enc);
  CHECK_THROWS_AS(forward(in.enc, in.visual, Matrix(3, 4), MaskSpec::none(), DropoutState::both), Error);
  CHECK_THROWS_AS(forward(in.enc, Matrix(4, 2), in.audio, MaskSpec::none(), DropoutState::both), Error);
}
