#include <doctest.h>

#include <random>
#include <set>

#include "avsf/alignment.hpp"
#include "avsf/error.hpp"
#include "avsf/synthetic.hpp"
#include "test_util.hpp"

using namespace avsf;

namespace {

SyntheticWorld noiseless() {
  WorldParams p;
  p.sigma_audio = 0.0;
  p.sigma_visual = 0.0;
  return make_world(p);
}

}  // namespace

TEST_CASE("default world invariants") {
  const auto w = make_world(WorldParams{});
  CHECK(w.states == 20);
  CHECK(w.visemes == 7);
  CHECK(w.audio_dim() == 8);
  CHECK(w.visual_dim() == 8);
  for (std::size_t v = 0; v < w.visemes; ++v) CHECK(w.viseme_class(v).size() >= 2);
  for (std::size_t s = 0; s < w.states; ++s) {
    double sum = 0;
    for (double p : w.transition.row(s)) sum += p;
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
  std::set<std::vector<double>> means;
  for (std::size_t s = 0; s < w.states; ++s) means.insert({w.audio_means.row(s).begin(), w.audio_means.row(s).end()});
  CHECK(means.size() == w.states);
  CHECK_THROWS_AS(make_world(WorldParams{4, 3}), Error);
}

TEST_CASE("world JSON round trip and parameter form") {
  const auto w = make_world(WorldParams{});
  const auto back = world_from_json(world_to_json(w));
  CHECK(back.transition == w.transition);
  CHECK(back.audio_means == w.audio_means);
  CHECK(back.coarticulation == w.coarticulation);
  CHECK(back.viseme_of == w.viseme_of);
  const auto p = world_from_json(R"({"K": 12, "V": 4, "seed": 3})");
  CHECK(p.states == 12);
  CHECK(p.visemes == 4);
  CHECK_THROWS_AS(world_from_json("[1,2]"), Error);
  CHECK_THROWS_AS(world_from_json("{bad"), Error);
}

TEST_CASE("empirical transitions match the chain") {
  const auto w = make_world(WorldParams{});
  std::mt19937_64 rng(1);
  const auto path = sample_path(w, 100001, rng);
  Matrix counts(w.states, w.states);
  std::vector<double> visits(w.states, 0.0);
  for (std::size_t t = 0; t + 1 < path.size(); ++t) {
    counts(path[t], path[t + 1]) += 1;
    visits[path[t]] += 1;
  }
  for (std::size_t s = 0; s < w.states; ++s) {
    REQUIRE(visits[s] > 1000);
    for (std::size_t t = 0; t < w.states; ++t) CHECK(std::abs(counts(s, t) / visits[s] - w.transition(s, t)) < 0.02);
  }
}

TEST_CASE("noiseless observations are exactly the emission means") {
  const auto w = noiseless();
  std::mt19937_64 rng(2);
  const auto v = gen_real(w, 50, 1, rng)[0];
  CHECK(v.label == Label::real);
  CHECK(v.visual_states == v.state_path);
  for (std::size_t t = 0; t < 50; ++t) {
    const auto s = v.state_path[t];
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(v.audio_obs(t, i) == w.audio_means(s, i));
      const double trace = t ? w.coarticulation(v.state_path[t - 1], i) : 0.0;
      CHECK(v.visual_obs(t, i) == w.visual_means(w.viseme_of[s], i) + trace);
    }
  }
}

TEST_CASE("same seed, same videos") {
  const auto w = make_world(WorldParams{});
  std::mt19937_64 a(3), b(3);
  const auto x = gen_real(w, 40, 3, a), y = gen_real(w, 40, 3, b);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(x[i].audio_obs == y[i].audio_obs);
    CHECK(x[i].visual_obs == y[i].visual_obs);
    CHECK(x[i].id == y[i].id);
  }
  CHECK(x[0].id == "real_00000");
}

TEST_CASE("swap and lipsync forgeries") {
  const auto w = noiseless();
  std::mt19937_64 rng(4);
  const auto real = gen_real(w, 200, 1, rng)[0];
  const auto copy = real;

  const auto sw = gen_forgery(w, real, VideoCategory::swap, rng);
  CHECK(sw.label == Label::fake);
  CHECK(sw.audio_obs == real.audio_obs);
  CHECK(sw.visual_states != real.state_path);

  const auto ls = gen_forgery(w, real, VideoCategory::lipsync, rng);
  CHECK(ls.label == Label::fake);
  CHECK(ls.audio_obs == real.audio_obs);
  std::size_t changed = 0;
  for (std::size_t t = 0; t < 200; ++t) {
    // frame-locally plausible: the mouth shape is the true viseme
    CHECK(w.viseme_of[ls.visual_states[t]] == w.viseme_of[real.state_path[t]]);
    for (std::size_t i = 0; i < 4; ++i) CHECK(ls.visual_obs(t, i) == w.visual_means(w.viseme_of[real.state_path[t]], i) +
                                                                        (t ? w.coarticulation(ls.visual_states[t - 1], i) : 0.0));
    changed += ls.visual_states[t] != real.state_path[t];
  }
  CHECK(changed > 50);

  // the source video is never mutated
  CHECK(real.visual_obs == copy.visual_obs);
  CHECK(real.audio_obs == copy.audio_obs);
  CHECK(real.state_path == copy.state_path);
  CHECK_THROWS_AS(gen_forgery(w, real, VideoCategory::real, rng), Error);
}

TEST_CASE("swap with constant paths differs at every frame") {
  const auto w = noiseless();
  std::mt19937_64 rng(5);
  const std::vector<std::size_t> s0(30, 0), s1(30, 1);
  const auto a = render(w, s0, s0, rng), b = render(w, s0, s1, rng);
  for (std::size_t t = 0; t < 30; ++t) {
    bool differs = false;
    for (std::size_t i = 0; i < 8; ++i) differs |= a.visual_obs(t, i) != b.visual_obs(t, i);
    CHECK(differs);
  }
}

TEST_CASE("lipsync with singleton viseme classes is a real video") {
  auto w = noiseless();
  // one viseme per state: redrawing within the class cannot change anything
  w.visemes = w.states;
  for (std::size_t s = 0; s < w.states; ++s) w.viseme_of[s] = s;
  Matrix vm(w.states, 8);
  for (std::size_t s = 0; s < w.states; ++s)
    for (std::size_t i = 0; i < 8; ++i) vm(s, i) = w.audio_means(s, i);
  w.visual_means = vm;
  std::mt19937_64 rng(6);
  const auto path = sample_path(w, 100, rng);
  const auto real = render(w, path, path, rng);
  const auto ls = gen_forgery(w, real, VideoCategory::lipsync, rng);
  CHECK(ls.visual_states == real.state_path);
  CHECK(ls.visual_obs == real.visual_obs);  // noiseless, so identical
}

TEST_CASE("fixed offsets are exact and recoverable") {
  const auto w = noiseless();
  std::mt19937_64 rng(7);
  const auto real = gen_real(w, 100, 1, rng)[0];
  for (int d : {5, -5, 12}) {
    const auto off = with_fixed_offset(real, d);
    CHECK(off.label == Label::real);
    for (std::size_t t = 0; t < 100; ++t) {
      const long src = static_cast<long>(t) - d;
      for (std::size_t i = 0; i < 8; ++i) {
        CHECK(off.audio_obs(t, i) == (src >= 0 && src < 100 ? real.audio_obs(static_cast<std::size_t>(src), i) : 0.0));
      }
    }
    const auto r = score_fixed_offset(off.visual_obs, off.audio_obs, 15);
    CHECK(std::abs(*r.best_offset) == std::abs(d));
    // de-shifting restores the original stream on the overlap
    const auto back = shift_rows(off.audio_obs, std::vector<int>(100, -d));
    for (std::size_t t = 0; t < 100; ++t) {
      const long src = static_cast<long>(t) + d;
      if (src < 0 || src >= 100) continue;
      for (std::size_t i = 0; i < 8; ++i) CHECK(back(t, i) == real.audio_obs(t, i));
    }
  }

  const auto rnd = gen_forgery(w, real, VideoCategory::offset_fixed, rng);
  CHECK(std::abs(rnd.offsets[0]) >= kMinOffset);
  CHECK(std::abs(rnd.offsets[0]) <= kMaxOffset);
  const auto dyn = gen_forgery(w, real, VideoCategory::offset_dynamic, rng);
  CHECK(dyn.label == Label::real);
  for (std::size_t t = 0; t < 100; ++t) CHECK(dyn.offsets[t] == dyn.offsets[(t / kDynamicSegmentFrames) * kDynamicSegmentFrames]);
  CHECK(shift_rows(real.audio_obs, dyn.offsets) == dyn.audio_obs);
}

TEST_CASE("benchmark build is reproducible") {
  const auto w = make_world(WorldParams{});
  BenchmarkOptions o;
  o.frames = 50;
  const auto sizes = parse_sizes("real=3,swap=2,offset_dynamic=1");
  CHECK(sizes.at(VideoCategory::swap) == 2);
  CHECK_THROWS_AS(parse_sizes("weird=3"), Error);
  CHECK_THROWS_AS(parse_sizes("real"), Error);

  const auto d1 = test::scratch("bench1"), d2 = test::scratch("bench2");
  const auto m = build_benchmark(w, sizes, d1, o);
  build_benchmark(w, sizes, d2, o);
  CHECK(m.entries.size() == 6);
  for (const auto& e : m.entries) {
    CHECK(read_file_bytes(d1 / e.visual_path) == read_file_bytes(d2 / e.visual_path));
    CHECK(read_file_bytes(d1 / e.audio_path) == read_file_bytes(d2 / e.audio_path));
  }
  CHECK(read_file_bytes(d1 / "manifest.jsonl") == read_file_bytes(d2 / "manifest.jsonl"));
  CHECK(load_world(d1 / "world.json").transition == w.transition);

  // category sizes do not perturb one another
  const auto more = generate_benchmark(w, parse_sizes("real=7,swap=2"), o);
  const auto fewer = generate_benchmark(w, parse_sizes("real=3,swap=2"), o);
  CHECK(more[7].id == fewer[3].id);
  CHECK(more[7].visual_obs == fewer[3].visual_obs);
  CHECK(more[0].audio_obs == fewer[0].audio_obs);
}
