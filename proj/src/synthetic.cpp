#include "avsf/synthetic.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "avsf/error.hpp"

namespace avsf {

using nlohmann::json;

std::vector<std::size_t> SyntheticWorld::viseme_class(std::size_t viseme) const {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < states; ++s) {
    if (viseme_of[s] == viseme) out.push_back(s);
  }
  return out;
}

void SyntheticWorld::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::invalid_argument, "world: " + m); };
  if (states < 2 || visemes < 1 || visemes >= states) fail("need 1 <= V < K");
  if (transition.rows() != states || transition.cols() != states) fail("transition must be K x K");
  if (viseme_of.size() != states) fail("viseme_of must have K entries");
  if (audio_means.rows() != states || audio_means.cols() == 0) fail("audio_means must be K x da");
  if (visual_means.rows() != visemes || visual_means.cols() == 0) fail("visual_means must be V x dv");
  if (coarticulation.rows() != states || coarticulation.cols() != visual_means.cols()) {
    fail("coarticulation must be K x dv");
  }
  if (!(sigma_audio >= 0) || !(sigma_visual >= 0)) fail("noise levels must be >= 0");
  for (std::size_t s = 0; s < states; ++s) {
    double sum = 0.0;
    for (double p : transition.row(s)) {
      if (!(p >= 0.0)) fail("negative transition probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) fail("transition row " + std::to_string(s) + " sums to " + std::to_string(sum));
    if (viseme_of[s] >= visemes) fail("viseme index out of range");
  }
  for (std::size_t v = 0; v < visemes; ++v) {
    if (viseme_class(v).size() < 2) fail("viseme " + std::to_string(v) + " has fewer than two states");
  }
  for (std::size_t a = 0; a < states; ++a) {
    for (std::size_t b = a + 1; b < states; ++b) {
      if (audio_means.row(a).size() && squared_distance(audio_means.row(a), audio_means.row(b)) == 0.0) {
        fail("audio emission means are not distinct");
      }
    }
  }
  for (std::size_t a = 0; a < visemes; ++a) {
    for (std::size_t b = a + 1; b < visemes; ++b) {
      if (squared_distance(visual_means.row(a), visual_means.row(b)) == 0.0) fail("viseme means are not distinct");
    }
  }
  if (!all_finite(transition.data()) || !all_finite(audio_means.data()) || !all_finite(visual_means.data()) ||
      !all_finite(coarticulation.data())) {
    fail("non-finite parameters");
  }
}

namespace {

// Draws n points of N(0, I) in `dim` dimensions whose pairwise distances
// (within the groups given by `group`) are at least min_dist.
Matrix separated_points(std::size_t n, std::size_t dim, const std::vector<std::size_t>& group, double min_dist,
                        std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix pts(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (int attempt = 0;; ++attempt) {
      for (double& v : pts.row(i)) v = nd(rng);
      bool ok = true;
      for (std::size_t j = 0; j < i && ok; ++j) {
        if (group[j] == group[i] && squared_distance(pts.row(i), pts.row(j)) < min_dist * min_dist) ok = false;
      }
      if (ok || attempt > 1000) break;
    }
  }
  return pts;
}

std::size_t draw_categorical(std::span<const double> probs, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Rounding left u past the last cumulative sum; take the last nonzero entry.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  return probs.size() - 1;
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  return rows;
}

Matrix matrix_from_json(const json& j, const char* name) {
  if (!j.is_array() || j.empty()) throw Error(ErrorKind::format, std::string("world field '") + name + "' must be a nonempty array");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].size();
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw Error(ErrorKind::format, std::string("ragged matrix '") + name + "'");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

}  // namespace

SyntheticWorld make_world(const WorldParams& p) {
  if (p.states < 2 || p.visemes < 1 || p.visemes >= p.states || 2 * p.visemes > p.states) {
    throw Error(ErrorKind::invalid_argument, "need V < K with at least two states per viseme");
  }
  if (p.dim < 2) throw Error(ErrorKind::invalid_argument, "observation dim must be >= 2");
  std::mt19937_64 rng(p.seed);
  SyntheticWorld w;
  w.states = p.states;
  w.visemes = p.visemes;
  w.sigma_audio = p.sigma_audio;
  w.sigma_visual = p.sigma_visual;
  w.seed = p.seed;
  w.viseme_of.resize(p.states);
  for (std::size_t s = 0; s < p.states; ++s) w.viseme_of[s] = s % p.visemes;

  const std::size_t content = p.dim / 2;
  const std::size_t detail = p.dim - content;
  const Matrix shape = separated_points(p.visemes, content, std::vector<std::size_t>(p.visemes, 0), 1.0, rng);
  const Matrix state_detail = separated_points(p.states, detail, w.viseme_of, 1.0, rng);

  w.visual_means = Matrix(p.visemes, p.dim);
  for (std::size_t v = 0; v < p.visemes; ++v) {
    for (std::size_t i = 0; i < content; ++i) w.visual_means(v, i) = shape(v, i);
  }
  w.audio_means = Matrix(p.states, p.dim);
  w.coarticulation = Matrix(p.states, p.dim);
  for (std::size_t s = 0; s < p.states; ++s) {
    for (std::size_t i = 0; i < content; ++i) w.audio_means(s, i) = shape(w.viseme_of[s], i);
    for (std::size_t i = 0; i < detail; ++i) {
      w.audio_means(s, content + i) = state_detail(s, i);
      w.coarticulation(s, content + i) = p.coarticulation_gain * state_detail(s, i);
    }
  }

  // Viseme-level chain with flat Dirichlet rows; within a viseme class the
  // successor is uniform.
  Matrix viseme_chain(p.visemes, p.visemes);
  std::exponential_distribution<double> ex(1.0);
  for (std::size_t a = 0; a < p.visemes; ++a) {
    double sum = 0.0;
    for (double& v : viseme_chain.row(a)) sum += (v = ex(rng));
    for (double& v : viseme_chain.row(a)) v /= sum;
  }
  std::vector<double> class_size(p.visemes, 0.0);
  for (std::size_t s = 0; s < p.states; ++s) class_size[w.viseme_of[s]] += 1.0;
  w.transition = Matrix(p.states, p.states);
  for (std::size_t s = 0; s < p.states; ++s) {
    for (std::size_t t = 0; t < p.states; ++t) {
      w.transition(s, t) = viseme_chain(w.viseme_of[s], w.viseme_of[t]) / class_size[w.viseme_of[t]];
    }
  }
  w.validate();
  return w;
}

std::string world_to_json(const SyntheticWorld& w) {
  nlohmann::ordered_json j;
  j["K"] = w.states;
  j["V"] = w.visemes;
  j["seed"] = w.seed;
  j["sigma_audio"] = w.sigma_audio;
  j["sigma_visual"] = w.sigma_visual;
  j["viseme_map"] = w.viseme_of;
  j["transition"] = matrix_json(w.transition);
  j["audio_means"] = matrix_json(w.audio_means);
  j["visual_means"] = matrix_json(w.visual_means);
  j["coarticulation"] = matrix_json(w.coarticulation);
  return j.dump(1);
}

SyntheticWorld world_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::format, std::string("world config: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::format, "world config must be a JSON object");
  try {
    if (!j.contains("transition")) {
      WorldParams p;
      p.states = j.value("K", j.value("states", p.states));
      p.visemes = j.value("V", j.value("visemes", p.visemes));
      p.dim = j.value("dim", p.dim);
      p.sigma_audio = j.value("sigma_audio", p.sigma_audio);
      p.sigma_visual = j.value("sigma_visual", p.sigma_visual);
      p.coarticulation_gain = j.value("coarticulation_gain", p.coarticulation_gain);
      p.seed = j.value("seed", p.seed);
      return make_world(p);
    }
    SyntheticWorld w;
    w.states = j.at("K").get<std::size_t>();
    w.visemes = j.at("V").get<std::size_t>();
    w.seed = j.value("seed", std::uint64_t{7});
    w.sigma_audio = j.at("sigma_audio").get<double>();
    w.sigma_visual = j.at("sigma_visual").get<double>();
    w.viseme_of = j.at("viseme_map").get<std::vector<std::size_t>>();
    w.transition = matrix_from_json(j.at("transition"), "transition");
    w.audio_means = matrix_from_json(j.at("audio_means"), "audio_means");
    w.visual_means = matrix_from_json(j.at("visual_means"), "visual_means");
    w.coarticulation = j.contains("coarticulation") ? matrix_from_json(j.at("coarticulation"), "coarticulation")
                                                    : Matrix(w.states, w.visual_means.cols());
    w.validate();
    return w;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, std::string("world config: ") + e.what());
  }
}

SyntheticWorld load_world(const std::filesystem::path& src) {
  const auto bytes = read_file_bytes(src);
  return world_from_json(std::string(bytes.begin(), bytes.end()));
}

void save_world(const SyntheticWorld& w, const std::filesystem::path& dest) {
  write_text_file(dest, world_to_json(w) + "\n");
}

const char* to_string(VideoCategory c) {
  switch (c) {
    case VideoCategory::real: return "real";
    case VideoCategory::swap: return "swap";
    case VideoCategory::lipsync: return "lipsync";
    case VideoCategory::offset_fixed: return "offset_fixed";
    case VideoCategory::offset_dynamic: return "offset_dynamic";
  }
  return "?";
}

VideoCategory parse_category(const std::string& s) {
  for (auto c : kAllCategories) {
    if (s == to_string(c)) return c;
  }
  throw Error(ErrorKind::invalid_argument, "unknown category '" + s + "'");
}

std::vector<std::size_t> sample_path(const SyntheticWorld& w, std::size_t frames, std::mt19937_64& rng) {
  if (frames == 0) throw Error(ErrorKind::invalid_argument, "T must be >= 1");
  std::vector<std::size_t> path(frames);
  path[0] = std::uniform_int_distribution<std::size_t>(0, w.states - 1)(rng);
  for (std::size_t t = 1; t < frames; ++t) path[t] = draw_categorical(w.transition.row(path[t - 1]), rng);
  return path;
}

SyntheticVideo render(const SyntheticWorld& w, std::vector<std::size_t> audio_states,
                      std::vector<std::size_t> visual_states, std::mt19937_64& rng) {
  const std::size_t n = audio_states.size();
  if (visual_states.size() != n) throw Error(ErrorKind::invalid_argument, "state paths differ in length");
  std::normal_distribution<double> nd(0.0, 1.0);
  SyntheticVideo v;
  v.audio_obs = Matrix(n, w.audio_dim());
  v.visual_obs = Matrix(n, w.visual_dim());
  for (std::size_t t = 0; t < n; ++t) {
    auto a = v.audio_obs.row(t);
    const auto mean = w.audio_means.row(audio_states[t]);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = mean[i] + w.sigma_audio * nd(rng);
  }
  for (std::size_t t = 0; t < n; ++t) {
    auto x = v.visual_obs.row(t);
    const auto mean = w.visual_means.row(w.viseme_of[visual_states[t]]);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double trace = t > 0 ? w.coarticulation(visual_states[t - 1], i) : 0.0;
      x[i] = mean[i] + trace + w.sigma_visual * nd(rng);
    }
  }
  v.state_path = std::move(audio_states);
  v.visual_states = std::move(visual_states);
  return v;
}

std::vector<SyntheticVideo> gen_real(const SyntheticWorld& w, std::size_t frames, std::size_t count,
                                     std::mt19937_64& rng, const std::string& id_prefix) {
  w.validate();
  std::vector<SyntheticVideo> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto path = sample_path(w, frames, rng);
    auto video = render(w, path, path, rng);
    char id[32];
    std::snprintf(id, sizeof id, "_%05zu", i);
    video.id = id_prefix + id;
    out.push_back(std::move(video));
  }
  return out;
}

Matrix shift_rows(const Matrix& m, const std::vector<int>& delays) {
  if (delays.size() != m.rows()) throw Error(ErrorKind::invalid_argument, "one delay per frame required");
  Matrix out(m.rows(), m.cols());
  const auto n = static_cast<long>(m.rows());
  for (long t = 0; t < n; ++t) {
    const long src = t - delays[static_cast<std::size_t>(t)];
    if (src < 0 || src >= n) continue;
    auto s = m.row(static_cast<std::size_t>(src));
    std::copy(s.begin(), s.end(), out.row(static_cast<std::size_t>(t)).begin());
  }
  return out;
}

SyntheticVideo with_fixed_offset(const SyntheticVideo& real, int delay) {
  SyntheticVideo v = real;
  v.offsets.assign(real.audio_obs.rows(), delay);
  v.audio_obs = shift_rows(real.audio_obs, v.offsets);
  v.category = VideoCategory::offset_fixed;
  v.label = Label::real;
  return v;
}

SyntheticVideo gen_forgery(const SyntheticWorld& w, const SyntheticVideo& real, VideoCategory kind,
                           std::mt19937_64& rng) {
  const std::size_t n = real.state_path.size();
  if (n == 0 || real.audio_obs.rows() != n || real.visual_obs.rows() != n) {
    throw Error(ErrorKind::invalid_argument, "source video is not a valid real video");
  }
  auto draw_offset = [&] {
    const int mag = std::uniform_int_distribution<int>(kMinOffset, kMaxOffset)(rng);
    return std::bernoulli_distribution(0.5)(rng) ? mag : -mag;
  };
  SyntheticVideo out;
  switch (kind) {
    case VideoCategory::real:
      throw Error(ErrorKind::invalid_argument, "real is not a forgery kind");
    case VideoCategory::swap: {
      auto other = sample_path(w, n, rng);
      SyntheticVideo fresh = render(w, real.state_path, other, rng);
      out = real;
      out.visual_obs = std::move(fresh.visual_obs);
      out.visual_states = std::move(other);
      out.label = Label::fake;
      break;
    }
    case VideoCategory::lipsync: {
      std::vector<std::size_t> lips(n);
      for (std::size_t t = 0; t < n; ++t) {
        const auto cls = w.viseme_class(w.viseme_of[real.state_path[t]]);
        lips[t] = cls[std::uniform_int_distribution<std::size_t>(0, cls.size() - 1)(rng)];
      }
      SyntheticVideo fresh = render(w, real.state_path, lips, rng);
      out = real;
      out.visual_obs = std::move(fresh.visual_obs);
      out.visual_states = std::move(lips);
      out.label = Label::fake;
      break;
    }
    case VideoCategory::offset_fixed:
      out = with_fixed_offset(real, draw_offset());
      break;
    case VideoCategory::offset_dynamic: {
      out = real;
      out.offsets.resize(n);
      for (std::size_t t = 0; t < n; t += kDynamicSegmentFrames) {
        const int d = draw_offset();
        for (std::size_t u = t; u < std::min(n, t + kDynamicSegmentFrames); ++u) out.offsets[u] = d;
      }
      out.audio_obs = shift_rows(real.audio_obs, out.offsets);
      out.label = Label::real;
      break;
    }
  }
  out.category = kind;
  return out;
}

std::vector<SyntheticVideo> generate_benchmark(const SyntheticWorld& w,
                                               const std::map<VideoCategory, std::size_t>& sizes,
                                               const BenchmarkOptions& opts) {
  w.validate();
  std::vector<SyntheticVideo> out;
  for (std::size_t ci = 0; ci < std::size(kAllCategories); ++ci) {
    const VideoCategory cat = kAllCategories[ci];
    const auto it = sizes.find(cat);
    if (it == sizes.end() || it->second == 0) continue;
    std::seed_seq seq{static_cast<std::uint32_t>(opts.seed), static_cast<std::uint32_t>(opts.seed >> 32),
                      static_cast<std::uint32_t>(ci)};
    std::mt19937_64 rng(seq);
    auto sources = gen_real(w, opts.frames, it->second, rng, to_string(cat));
    for (auto& src : sources) {
      if (cat == VideoCategory::real) {
        out.push_back(std::move(src));
      } else {
        SyntheticVideo v = gen_forgery(w, src, cat, rng);
        v.id = src.id;
        out.push_back(std::move(v));
      }
    }
  }
  return out;
}

std::map<VideoCategory, std::size_t> parse_sizes(const std::string& spec) {
  std::map<VideoCategory, std::size_t> sizes;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::invalid_argument, "size entry '" + item + "' needs name=count");
    const VideoCategory cat = parse_category(item.substr(0, eq));
    try {
      const long n = std::stol(item.substr(eq + 1));
      if (n < 0) throw std::out_of_range("negative");
      sizes[cat] = static_cast<std::size_t>(n);
    } catch (const std::exception&) {
      throw Error(ErrorKind::invalid_argument, "bad count in '" + item + "'");
    }
  }
  return sizes;
}

Manifest build_benchmark(const SyntheticWorld& w, const std::map<VideoCategory, std::size_t>& sizes,
                         const std::filesystem::path& out_dir, const BenchmarkOptions& opts) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create " + out_dir.string() + ": " + ec.message());
  const auto videos = generate_benchmark(w, sizes, opts);
  Manifest m;
  m.base_dir = out_dir;
  for (const auto& v : videos) {
    EmbeddingSequence vis, aud;
    if (opts.encoder) {
      vis = embed(*opts.encoder, v.visual_obs, Modality::visual, opts.fps);
      aud = embed(*opts.encoder, v.audio_obs, Modality::audio, opts.fps);
    } else {
      vis = EmbeddingSequence{Modality::visual, opts.fps, v.visual_obs};
      aud = EmbeddingSequence{Modality::audio, opts.fps, v.audio_obs};
    }
    ManifestEntry e{v.id, v.label, to_string(v.category), v.id + ".v.avsf", v.id + ".a.avsf"};
    write_embeddings(vis, out_dir / e.visual_path);
    write_embeddings(aud, out_dir / e.audio_path);
    m.entries.push_back(std::move(e));
  }
  write_manifest(m, out_dir / "manifest.jsonl");
  save_world(w, out_dir / "world.json");
  return m;
}

}  // namespace avsf
