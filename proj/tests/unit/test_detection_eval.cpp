#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "avsf/detection_eval.hpp"
#include "avsf/error.hpp"
#include "avsf/synthetic.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace avsf;

namespace {

std::vector<ScoredVideo> scored(const std::vector<double>& real, const std::vector<double>& fake,
                                const std::string& cat = "x") {
  std::vector<ScoredVideo> out;
  for (std::size_t i = 0; i < real.size(); ++i) out.push_back({"r" + std::to_string(i), real[i], {}, Label::real, "real"});
  for (std::size_t i = 0; i < fake.size(); ++i) out.push_back({"f" + std::to_string(i), fake[i], {}, Label::fake, cat});
  return out;
}

LoadedDataset swap_dataset(std::size_t n, std::size_t frames, std::uint64_t seed) {
  const auto world = make_world(WorldParams{});
  std::mt19937_64 rng(seed);
  LoadedDataset d;
  const auto reals = gen_real(world, frames, n, rng);
  for (const auto& r : reals) {
    const auto f = gen_forgery(world, r, VideoCategory::swap, rng);
    for (const auto* v : {&r, &f}) {
      LoadedPair p;
      p.entry = {v->id, v->label, to_string(v->category), {}, {}};
      p.visual = {Modality::visual, 25.0, v->visual_obs};
      p.audio = {Modality::audio, 25.0, v->audio_obs};
      d.pairs.push_back(std::move(p));
    }
  }
  return d;
}

}  // namespace

TEST_CASE("auc examples") {
  CHECK(auc(std::vector<double>{0.3, 0.4}, std::vector<double>{0.1, 0.2}) == 1.0);
  CHECK(auc(std::vector<double>{0.5, 0.2}, std::vector<double>{0.3, 0.1}) == 0.75);
  CHECK(auc(std::vector<double>{0.1, 0.2}, std::vector<double>{0.3, 0.4}) == 0.0);
  CHECK(auc(std::vector<double>{0.5}, std::vector<double>{0.5}) == 0.5);
  CHECK(auc(scored({0.5, 0.2}, {0.3, 0.1})) == 0.75);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1}, std::vector<double>{}), Error);
  CHECK_THROWS_AS(auc(scored({0.1, 0.2}, {})), Error);
}

TEST_CASE("auc equals pairwise counting and is invariant to increasing transforms") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> r(1 + rng() % 60), f(1 + rng() % 60);
    for (auto& x : r) x = static_cast<double>(rng() % 20) / 10.0;  // coarse grid forces ties
    for (auto& x : f) x = static_cast<double>(rng() % 17) / 10.0;
    const double a = auc(r, f);
    CHECK(std::abs(a - oracle::auc_pairwise(r, f)) <= 1e-12);
    auto tr = r, tf = f;
    for (auto& x : tr) x = std::exp(3 * x) - 7;
    for (auto& x : tf) x = std::exp(3 * x) - 7;
    CHECK(auc(tr, tf) == a);
  }
}

TEST_CASE("classify") {
  const auto s = scored({0.31, 0.3}, {0.29, -0.9});
  const auto p = classify(s);
  CHECK(p[0].predicted == Label::real);
  CHECK(p[1].predicted == Label::real);
  CHECK(p[2].predicted == Label::fake);
  for (const auto& q : classify(s, -1.0)) CHECK(q.predicted == Label::real);
  // raising the threshold never turns a fake prediction into a real one
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> xs(50);
  for (auto& x : xs) x = u(rng);
  const auto many = scored(xs, {});
  for (double th = -1.0; th < 1.0; th += 0.1) {
    const auto lo = classify(many, th), hi = classify(many, th + 0.1);
    for (std::size_t i = 0; i < lo.size(); ++i) {
      if (lo[i].predicted == Label::fake) CHECK(hi[i].predicted == Label::fake);
    }
  }
}

TEST_CASE("calibrate_threshold") {
  const std::vector<double> r{1.0, 0.4, 0.8, 0.2, 0.6};
  CHECK(calibrate_threshold(r, 0.2) == 0.2);
  CHECK(calibrate_threshold(r, 0.4) == 0.4);
  CHECK(calibrate_threshold(r, 0.41) == 0.6);
  CHECK(calibrate_threshold(r, 1e-9) <= 0.2);
  CHECK(calibrate_threshold(std::vector<double>(7, 0.35), 0.1) == 0.35);
  // empirical FPR at the threshold never exceeds the target by more than one sample
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  std::vector<double> xs(97);
  for (auto& x : xs) x = n(rng);
  for (double q : {0.01, 0.05, 0.1, 0.5}) {
    const double th = calibrate_threshold(xs, q);
    const auto below = std::count_if(xs.begin(), xs.end(), [&](double x) { return x < th; });
    CHECK(static_cast<double>(below) <= q * 97);
  }
  CHECK_THROWS_AS(calibrate_threshold(std::vector<double>{}, 0.1), Error);
  CHECK_THROWS_AS(calibrate_threshold(r, 0.0), Error);
  CHECK_THROWS_AS(calibrate_threshold(r, 1.0), Error);
}

TEST_CASE("histogram covers [-1, 1] and overlap is shared mass") {
  const auto s = scored({0.95, 0.9, 1.0}, {-1.0, -0.5, 0.0});
  const auto h = make_histogram(s, 4);
  CHECK(h.bins() == 4);
  CHECK(h.real == std::vector<std::size_t>{0, 0, 0, 3});
  CHECK(h.fake == std::vector<std::size_t>{1, 1, 1, 0});
  CHECK(histogram_overlap(h) == 0.0);
  const auto same = make_histogram(scored({0.1, 0.6}, {0.1, 0.6}), 10);
  CHECK(histogram_overlap(same) == doctest::Approx(1.0));
}

TEST_CASE("summaries: one category, clip beyond length, per-category AUC vs all reals") {
  auto data = swap_dataset(20, 100, 4);
  EvalOptions opts;
  const auto rep = evaluate(data, opts);
  CHECK(rep.n_real == 20);
  CHECK(rep.n_fake == 20);
  REQUIRE(rep.auc_by_category.size() == 1);
  CHECK(rep.auc_by_category.at("swap") == rep.auc_overall);
  CHECK(rep.auc_overall >= 0.99);
  CHECK(rep.scored.size() == 40);
  CHECK(rep.scored[0].id == data.pairs[0].entry.id);

  opts.clip_seconds = 1000.0;
  const auto clipped = evaluate(data, opts);
  for (std::size_t i = 0; i < rep.scored.size(); ++i) CHECK(clipped.scored[i].score == rep.scored[i].score);

  opts.clip_seconds = 1.0;
  CHECK(score_pair(data.pairs[0], opts).score ==
        score_pair({data.pairs[0].entry, data.pairs[0].visual.truncated(25), data.pairs[0].audio.truncated(25)},
                   EvalOptions{})
            .score);

  const auto tau = evaluate(data, EvalOptions{}, SweepKind::tau);
  CHECK(tau.sweep_results.size() == 16);
  CHECK(tau.sweep_results.back().first == 15.0);
  CHECK(tau.sweep_results.back().second == rep.auc_overall);
  const auto clip = evaluate(data, EvalOptions{}, SweepKind::clip);
  CHECK(clip.sweep_results.size() == 20);
}

TEST_CASE("threads do not change results") {
  auto data = swap_dataset(10, 80, 5);
  EvalOptions one, many;
  many.threads = 8;
  CHECK(report_to_json(evaluate(data, one)) != "");
  auto a = evaluate(data, one), b = evaluate(data, many);
  b.options.threads = 1;
  CHECK(report_to_json(a) == report_to_json(b));
  const std::vector<double> sig{0.0, 0.5};
  CHECK(robustness_sweep(data, one, sig, 9) == robustness_sweep(data, many, sig, 9));
}

TEST_CASE("robustness sweep") {
  const auto data = swap_dataset(60, 100, 6);
  EvalOptions opts;
  const std::vector<double> sig{0.0, 0.2, 0.8, 1e6};
  const auto r = robustness_sweep(data, opts, sig, 1);
  CHECK(r[0].second == evaluate(data, opts).auc_overall);
  CHECK(std::abs(r[3].second - 0.5) <= 0.1);

  // mean real-pair score does not increase with noise
  double prev = 2.0;
  for (double s : {0.0, 0.2, 0.5, 1.0, 2.0}) {
    const auto noisy = with_visual_noise(data, s, 3, 0);
    double sum = 0;
    std::size_t n = 0;
    for (const auto& p : noisy.pairs) {
      if (p.entry.label != Label::real) continue;
      sum += score_pair(p, opts).score;
      ++n;
    }
    CHECK(sum / n <= prev + 0.01);
    prev = sum / n;
  }
  CHECK(with_visual_noise(data, 0.3, 1, 2).pairs[0].audio == data.pairs[0].audio);
}

TEST_CASE("unreadable manifest entries are skipped and reported") {
  const auto dir = test::scratch("eval_skip");
  const auto world = make_world(WorldParams{});
  BenchmarkOptions bo;
  bo.frames = 60;
  auto m = build_benchmark(world, {{VideoCategory::real, 5}, {VideoCategory::swap, 5}}, dir, bo);
  m.entries.push_back({"ghost", Label::fake, "swap", "missing.v.avsf", "missing.a.avsf"});
  const auto rep = evaluate(m, EvalOptions{});
  REQUIRE(rep.skipped.size() == 1);
  CHECK(rep.skipped[0].id == "ghost");
  CHECK(rep.scored.size() == 10);
  const auto json = report_to_json(rep);
  CHECK(json.find("\"ghost\"") != std::string::npos);
  CHECK(json.find("\"auc_overall\"") != std::string::npos);
  CHECK(histogram_csv(rep.histogram).rfind("bin_lo,bin_hi,real,fake\n", 0) == 0);
  CHECK(parse_sweep("tau") == SweepKind::tau);
  CHECK(parse_sweep("") == SweepKind::none);
  CHECK_THROWS_AS(parse_sweep("nope"), Error);
}
