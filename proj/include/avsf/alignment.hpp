#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "avsf/embedding_io.hpp"

namespace avsf {

enum class AlignmentMode { plain, fixed_offset, dtw };

const char* to_string(AlignmentMode m);
// Accepts "plain", "fixed" / "fixed_offset", "dtw".
AlignmentMode parse_alignment_mode(const std::string& s);

struct AlignmentConfig {
  AlignmentMode mode = AlignmentMode::fixed_offset;
  int tau = 15;                   // max offset in frames; window 2*tau + 1
  std::optional<int> dtw_band;    // Sakoe-Chiba half-width, |i - j| <= band

  void validate() const;
};

using WarpingPath = std::vector<std::pair<std::size_t, std::size_t>>;  // 0-based (visual, audio)

struct MatchResult {
  double score = 0.0;
  // Visual frame t pairs with audio frame t + best_offset; positive when the
  // audio lags the video.
  std::optional<int> best_offset;
  std::optional<WarpingPath> path;
};

// 0 when either vector has zero norm.
double cosine(std::span<const double> u, std::span<const double> v);

MatchResult score_plain(const Matrix& visual, const Matrix& audio);
MatchResult score_fixed_offset(const Matrix& visual, const Matrix& audio, int tau);
MatchResult score_dtw(const Matrix& visual, const Matrix& audio, std::optional<int> band = std::nullopt);

// Dispatches on cfg.mode. Plain and fixed-offset scoring truncate both
// streams to the shorter one first; DTW uses them as given.
MatchResult score(const EmbeddingSequence& visual, const EmbeddingSequence& audio, const AlignmentConfig& cfg);

}  // namespace avsf
