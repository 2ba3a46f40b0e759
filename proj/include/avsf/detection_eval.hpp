#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "avsf/alignment.hpp"
#include "avsf/embedding_io.hpp"

namespace avsf {

struct ScoredVideo {
  std::string id;
  double score = 0.0;
  std::optional<int> offset;
  Label label = Label::real;
  std::string category;
};

// Probability that a random real video outscores a random fake one, ties
// counting one half (Mann-Whitney U over midranks).
double auc(std::span<const double> real_scores, std::span<const double> fake_scores);
double auc(std::span<const ScoredVideo> scored);

struct Prediction {
  std::string id;
  Label predicted = Label::real;
};

inline constexpr double kDefaultThreshold = 0.3;

// Real iff score >= threshold.
std::vector<Prediction> classify(std::span<const ScoredVideo> scored, double threshold = kDefaultThreshold);

// Lower empirical quantile: the order statistic at ceil(target_fpr * n).
double calibrate_threshold(std::span<const double> real_scores, double target_fpr);

struct Histogram {
  double lo = -1.0;
  double hi = 1.0;
  std::vector<std::size_t> real;
  std::vector<std::size_t> fake;

  std::size_t bins() const { return real.size(); }
};

Histogram make_histogram(std::span<const ScoredVideo> scored, std::size_t bins);
// Shared probability mass of the two normalised histograms, in [0, 1].
double histogram_overlap(const Histogram& h);

struct EvalOptions {
  AlignmentConfig alignment;
  std::optional<double> clip_seconds;
  std::size_t hist_bins = 50;
  std::size_t threads = 1;
};

struct SkippedEntry {
  std::string id;
  std::string reason;
};

enum class SweepKind { none, tau, clip };
SweepKind parse_sweep(const std::string& s);

struct EvalReport {
  double auc_overall = 0.5;
  std::map<std::string, double> auc_by_category;  // each fake category vs all reals
  std::size_t n_real = 0;
  std::size_t n_fake = 0;
  Histogram histogram;
  SweepKind sweep = SweepKind::none;
  std::vector<std::pair<double, double>> sweep_results;  // parameter value -> auc
  std::vector<ScoredVideo> scored;  // manifest order
  std::vector<SkippedEntry> skipped;
  EvalOptions options;
};

struct LoadedPair {
  ManifestEntry entry;
  EmbeddingSequence visual;
  EmbeddingSequence audio;
};

struct LoadedDataset {
  std::vector<LoadedPair> pairs;  // manifest order, unreadable entries removed
  std::vector<SkippedEntry> skipped;
};

LoadedDataset load_dataset(const Manifest& manifest, std::size_t threads = 1);

// Truncates both streams to clip_seconds (at their own fps) when set.
ScoredVideo score_pair(const LoadedPair& pair, const EvalOptions& opts);
std::vector<ScoredVideo> score_dataset(std::span<const LoadedPair> pairs, const EvalOptions& opts);

// AUCs and histogram over already-scored videos.
EvalReport summarize(std::vector<ScoredVideo> scored, const EvalOptions& opts);

EvalReport evaluate(const LoadedDataset& data, const EvalOptions& opts, SweepKind sweep = SweepKind::none);
EvalReport evaluate(const Manifest& manifest, const EvalOptions& opts, SweepKind sweep = SweepKind::none);

inline constexpr int kTauSweepMax = 15;
inline constexpr int kClipSweepMaxSeconds = 20;

// Gaussian noise of standard deviation sigma on every visual embedding value,
// then standard evaluation. Noise for entry i at level l comes from a
// generator seeded with (seed, l, i), so results do not depend on threads.
std::vector<std::pair<double, double>> robustness_sweep(const LoadedDataset& data, const EvalOptions& opts,
                                                        std::span<const double> sigmas, std::uint64_t seed);
std::vector<std::pair<double, double>> robustness_sweep(const Manifest& manifest, const EvalOptions& opts,
                                                        std::span<const double> sigmas, std::uint64_t seed);
LoadedDataset with_visual_noise(const LoadedDataset& data, double sigma, std::uint64_t seed, std::size_t level,
                                std::size_t threads = 1);

std::string report_to_json(const EvalReport& report);
std::string histogram_csv(const Histogram& h);
std::vector<ReportRow> report_rows(std::span<const ScoredVideo> scored);

}  // namespace avsf
