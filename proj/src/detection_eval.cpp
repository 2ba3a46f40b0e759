#include "avsf/detection_eval.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <json.hpp>

#include "avsf/error.hpp"
#include "avsf/parallel.hpp"

namespace avsf {

double auc(std::span<const double> real_scores, std::span<const double> fake_scores) {
  if (real_scores.empty() || fake_scores.empty()) {
    throw Error(ErrorKind::invalid_argument, "AUC needs at least one real and one fake score");
  }
  std::vector<std::pair<double, bool>> all;
  all.reserve(real_scores.size() + fake_scores.size());
  for (double s : real_scores) all.emplace_back(s, true);
  for (double s : fake_scores) all.emplace_back(s, false);
  for (const auto& [s, r] : all) {
    if (!std::isfinite(s)) throw Error(ErrorKind::non_finite, "score is not finite");
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  // Ranks are 1-based; a tie group spanning ranks [i+1, j] gets (i+1+j)/2.
  double real_rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    std::size_t reals = 0;
    while (j < all.size() && all[j].first == all[i].first) reals += all[j++].second ? 1 : 0;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    real_rank_sum += midrank * static_cast<double>(reals);
    i = j;
  }
  const auto nr = static_cast<double>(real_scores.size());
  const auto nf = static_cast<double>(fake_scores.size());
  const double u = real_rank_sum - nr * (nr + 1.0) / 2.0;
  return u / (nr * nf);
}

double auc(std::span<const ScoredVideo> scored) {
  std::vector<double> reals, fakes;
  for (const auto& v : scored) (v.label == Label::real ? reals : fakes).push_back(v.score);
  return auc(reals, fakes);
}

std::vector<Prediction> classify(std::span<const ScoredVideo> scored, double threshold) {
  std::vector<Prediction> out;
  out.reserve(scored.size());
  for (const auto& v : scored) out.push_back({v.id, v.score >= threshold ? Label::real : Label::fake});
  return out;
}

double calibrate_threshold(std::span<const double> real_scores, double target_fpr) {
  if (real_scores.empty()) throw Error(ErrorKind::invalid_argument, "no real scores to calibrate on");
  if (!(target_fpr > 0.0 && target_fpr < 1.0)) throw Error(ErrorKind::invalid_argument, "target FPR must be in (0, 1)");
  if (!all_finite(real_scores)) throw Error(ErrorKind::non_finite, "real scores contain NaN or Inf");
  std::vector<double> sorted(real_scores.begin(), real_scores.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  // The epsilon keeps products like 0.2 * 5 from rounding up a rank.
  auto k = static_cast<std::size_t>(std::ceil(target_fpr * n - 1e-9));
  k = std::clamp<std::size_t>(k, 1, sorted.size());
  return sorted[k - 1];
}

Histogram make_histogram(std::span<const ScoredVideo> scored, std::size_t bins) {
  if (bins == 0) throw Error(ErrorKind::invalid_argument, "histogram needs at least one bin");
  Histogram h;
  h.real.assign(bins, 0);
  h.fake.assign(bins, 0);
  for (const auto& v : scored) {
    const double x = (v.score - h.lo) / (h.hi - h.lo) * static_cast<double>(bins);
    const auto b = static_cast<std::size_t>(std::clamp(std::floor(x), 0.0, static_cast<double>(bins - 1)));
    ++(v.label == Label::real ? h.real : h.fake)[b];
  }
  return h;
}

double histogram_overlap(const Histogram& h) {
  double nr = 0.0, nf = 0.0;
  for (std::size_t b = 0; b < h.bins(); ++b) {
    nr += static_cast<double>(h.real[b]);
    nf += static_cast<double>(h.fake[b]);
  }
  if (nr == 0.0 || nf == 0.0) return 0.0;
  double overlap = 0.0;
  for (std::size_t b = 0; b < h.bins(); ++b) {
    overlap += std::min(static_cast<double>(h.real[b]) / nr, static_cast<double>(h.fake[b]) / nf);
  }
  return overlap;
}

SweepKind parse_sweep(const std::string& s) {
  if (s.empty() || s == "none") return SweepKind::none;
  if (s == "tau") return SweepKind::tau;
  if (s == "clip") return SweepKind::clip;
  throw Error(ErrorKind::invalid_argument, "unknown sweep '" + s + "' (tau|clip)");
}

LoadedDataset load_dataset(const Manifest& manifest, std::size_t threads) {
  const std::size_t n = manifest.entries.size();
  std::vector<std::optional<LoadedPair>> slots(n);
  std::vector<std::string> errors(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const auto& e = manifest.entries[i];
    try {
      LoadedPair p{e, read_embeddings(manifest.resolve(e.visual_path)), read_embeddings(manifest.resolve(e.audio_path))};
      if (p.visual.dim() != p.audio.dim()) {
        throw Error(ErrorKind::dimension_mismatch, "visual dim " + std::to_string(p.visual.dim()) + " vs audio dim " +
                                                       std::to_string(p.audio.dim()));
      }
      slots[i] = std::move(p);
    } catch (const Error& err) {
      errors[i] = err.what();
    }
  });
  LoadedDataset out;
  for (std::size_t i = 0; i < n; ++i) {
    if (slots[i]) {
      out.pairs.push_back(std::move(*slots[i]));
    } else {
      out.skipped.push_back({manifest.entries[i].id, errors[i]});
    }
  }
  return out;
}

ScoredVideo score_pair(const LoadedPair& pair, const EvalOptions& opts) {
  const EmbeddingSequence* vis = &pair.visual;
  const EmbeddingSequence* aud = &pair.audio;
  EmbeddingSequence vclip, aclip;
  if (opts.clip_seconds) {
    if (!(*opts.clip_seconds > 0.0)) throw Error(ErrorKind::invalid_argument, "clip length must be positive");
    auto frames_for = [&](const EmbeddingSequence& s) {
      return static_cast<std::size_t>(std::floor(*opts.clip_seconds * s.fps + 1e-9));
    };
    vclip = vis->truncated(frames_for(*vis));
    aclip = aud->truncated(frames_for(*aud));
    vis = &vclip;
    aud = &aclip;
  }
  const MatchResult m = score(*vis, *aud, opts.alignment);
  return ScoredVideo{pair.entry.id, m.score, m.best_offset, pair.entry.label, pair.entry.category};
}

std::vector<ScoredVideo> score_dataset(std::span<const LoadedPair> pairs, const EvalOptions& opts) {
  std::vector<ScoredVideo> out(pairs.size());
  parallel_for(pairs.size(), opts.threads, [&](std::size_t i) { out[i] = score_pair(pairs[i], opts); });
  return out;
}

EvalReport summarize(std::vector<ScoredVideo> scored, const EvalOptions& opts) {
  EvalReport r;
  r.options = opts;
  std::vector<double> reals;
  std::map<std::string, std::vector<double>> fakes_by_cat;
  for (const auto& v : scored) {
    if (v.label == Label::real) {
      reals.push_back(v.score);
    } else {
      fakes_by_cat[v.category].push_back(v.score);
    }
  }
  r.n_real = reals.size();
  r.n_fake = scored.size() - reals.size();
  r.auc_overall = auc(scored);
  for (const auto& [cat, fakes] : fakes_by_cat) r.auc_by_category[cat] = auc(reals, fakes);
  r.histogram = make_histogram(scored, opts.hist_bins);
  r.scored = std::move(scored);
  return r;
}

EvalReport evaluate(const LoadedDataset& data, const EvalOptions& opts, SweepKind sweep) {
  EvalReport r = summarize(score_dataset(data.pairs, opts), opts);
  r.skipped = data.skipped;
  r.sweep = sweep;
  if (sweep == SweepKind::tau) {
    for (int tau = 0; tau <= kTauSweepMax; ++tau) {
      EvalOptions o = opts;
      o.alignment.mode = AlignmentMode::fixed_offset;
      o.alignment.tau = tau;
      const auto s = score_dataset(data.pairs, o);
      r.sweep_results.emplace_back(tau, auc(s));
    }
  } else if (sweep == SweepKind::clip) {
    for (int secs = 1; secs <= kClipSweepMaxSeconds; ++secs) {
      EvalOptions o = opts;
      o.clip_seconds = secs;
      const auto s = score_dataset(data.pairs, o);
      r.sweep_results.emplace_back(secs, auc(s));
    }
  }
  return r;
}

EvalReport evaluate(const Manifest& manifest, const EvalOptions& opts, SweepKind sweep) {
  return evaluate(load_dataset(manifest, opts.threads), opts, sweep);
}

LoadedDataset with_visual_noise(const LoadedDataset& data, double sigma, std::uint64_t seed, std::size_t level,
                                std::size_t threads) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw Error(ErrorKind::invalid_argument, "noise level must be >= 0");
  LoadedDataset out = data;
  if (sigma == 0.0) return out;
  parallel_for(out.pairs.size(), threads, [&](std::size_t i) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(level), static_cast<std::uint32_t>(i)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> nd(0.0, sigma);
    for (double& v : out.pairs[i].visual.data.data()) v += nd(rng);
  });
  return out;
}

std::vector<std::pair<double, double>> robustness_sweep(const LoadedDataset& data, const EvalOptions& opts,
                                                        std::span<const double> sigmas, std::uint64_t seed) {
  std::vector<std::pair<double, double>> out;
  for (std::size_t l = 0; l < sigmas.size(); ++l) {
    const LoadedDataset noisy = with_visual_noise(data, sigmas[l], seed, l, opts.threads);
    out.emplace_back(sigmas[l], auc(score_dataset(noisy.pairs, opts)));
  }
  return out;
}

std::vector<std::pair<double, double>> robustness_sweep(const Manifest& manifest, const EvalOptions& opts,
                                                        std::span<const double> sigmas, std::uint64_t seed) {
  return robustness_sweep(load_dataset(manifest, opts.threads), opts, sigmas, seed);
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["auc_overall"] = r.auc_overall;
  j["auc_by_category"] = nlohmann::ordered_json::object();
  for (const auto& [cat, a] : r.auc_by_category) j["auc_by_category"][cat] = a;
  j["n_real"] = r.n_real;
  j["n_fake"] = r.n_fake;
  const auto& a = r.options.alignment;
  j["alignment"] = {{"mode", to_string(a.mode)},
                    {"tau", a.tau},
                    {"band", a.dtw_band ? nlohmann::ordered_json(*a.dtw_band) : nlohmann::ordered_json(nullptr)},
                    {"score_scale", a.mode == AlignmentMode::dtw ? "1 - mean cosine distance along the DTW path"
                                                                 : "mean frame-wise cosine similarity"}};
  j["clip_seconds"] = r.options.clip_seconds ? nlohmann::ordered_json(*r.options.clip_seconds)
                                             : nlohmann::ordered_json(nullptr);
  j["histogram"] = {{"lo", r.histogram.lo}, {"hi", r.histogram.hi}, {"bins", r.histogram.bins()},
                    {"real", r.histogram.real}, {"fake", r.histogram.fake}};
  if (r.sweep == SweepKind::none) {
    j["sweep_results"] = nullptr;
  } else {
    nlohmann::ordered_json s;
    s["parameter"] = r.sweep == SweepKind::tau ? "tau" : "clip_seconds";
    s["auc"] = nlohmann::ordered_json::object();
    for (const auto& [value, v] : r.sweep_results) s["auc"][format_double(value)] = v;
    j["sweep_results"] = s;
  }
  j["skipped"] = nlohmann::ordered_json::array();
  for (const auto& s : r.skipped) j["skipped"].push_back({{"id", s.id}, {"reason", s.reason}});
  return j.dump(2) + "\n";
}

std::string histogram_csv(const Histogram& h) {
  std::string out = "bin_lo,bin_hi,real,fake\n";
  const double width = (h.hi - h.lo) / static_cast<double>(h.bins());
  for (std::size_t b = 0; b < h.bins(); ++b) {
    out += format_double(h.lo + width * static_cast<double>(b)) + "," +
           format_double(h.lo + width * static_cast<double>(b + 1)) + "," + std::to_string(h.real[b]) + "," +
           std::to_string(h.fake[b]) + "\n";
  }
  return out;
}

std::vector<ReportRow> report_rows(std::span<const ScoredVideo> scored) {
  std::vector<ReportRow> rows;
  rows.reserve(scored.size());
  for (const auto& v : scored) rows.push_back({v.id, v.score, v.offset, v.label, v.category});
  return rows;
}

}  // namespace avsf
