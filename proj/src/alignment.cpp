#include "avsf/alignment.hpp"

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "avsf/error.hpp"

namespace avsf {

const char* to_string(AlignmentMode m) {
  switch (m) {
    case AlignmentMode::plain: return "plain";
    case AlignmentMode::fixed_offset: return "fixed";
    case AlignmentMode::dtw: return "dtw";
  }
  return "?";
}

AlignmentMode parse_alignment_mode(const std::string& s) {
  if (s == "plain") return AlignmentMode::plain;
  if (s == "fixed" || s == "fixed_offset") return AlignmentMode::fixed_offset;
  if (s == "dtw") return AlignmentMode::dtw;
  throw Error(ErrorKind::invalid_argument, "unknown alignment '" + s + "' (plain|fixed|dtw)");
}

void AlignmentConfig::validate() const {
  if (tau < 0) throw Error(ErrorKind::invalid_argument, "tau must be >= 0");
  if (dtw_band && *dtw_band < 0) throw Error(ErrorKind::invalid_argument, "dtw band must be >= 0");
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw Error(ErrorKind::dimension_mismatch,
                "cosine of vectors with dims " + std::to_string(u.size()) + " and " + std::to_string(v.size()));
  }
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) return 0.0;
  // Rounding can push |uv| a hair past sqrt(uu*vv).
  return std::clamp(uv / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

namespace {

void check_pair(const Matrix& visual, const Matrix& audio, bool equal_frames) {
  if (visual.rows() == 0 || audio.rows() == 0) throw Error(ErrorKind::invalid_argument, "empty sequence");
  if (visual.cols() != audio.cols()) {
    throw Error(ErrorKind::dimension_mismatch, "visual dim " + std::to_string(visual.cols()) + " vs audio dim " +
                                                   std::to_string(audio.cols()));
  }
  if (equal_frames && visual.rows() != audio.rows()) {
    throw Error(ErrorKind::invalid_argument, "frame counts differ (" + std::to_string(visual.rows()) + " vs " +
                                                 std::to_string(audio.rows()) + "); truncate first");
  }
}

double mean_similarity_at(const Matrix& visual, const Matrix& audio, int offset) {
  const auto n = static_cast<long>(visual.rows());
  double sum = 0.0;
  for (long t = 0; t < n; ++t) {
    const long i = t + offset;
    if (i < 0 || i >= n) continue;  // zero-vector padding contributes cosine 0
    sum += cosine(visual.row(static_cast<std::size_t>(t)), audio.row(static_cast<std::size_t>(i)));
  }
  return sum / static_cast<double>(n);
}

}  // namespace

MatchResult score_plain(const Matrix& visual, const Matrix& audio) {
  check_pair(visual, audio, true);
  return MatchResult{mean_similarity_at(visual, audio, 0), std::nullopt, std::nullopt};
}

MatchResult score_fixed_offset(const Matrix& visual, const Matrix& audio, int tau) {
  check_pair(visual, audio, true);
  if (tau < 0) throw Error(ErrorKind::invalid_argument, "tau must be >= 0");
  // Visit 0, -1, +1, -2, +2, ... and keep strict improvements only, so ties
  // resolve to the smallest |offset| with negative first.
  MatchResult best{mean_similarity_at(visual, audio, 0), 0, std::nullopt};
  for (int m = 1; m <= tau; ++m) {
    for (int offset : {-m, m}) {
      const double s = mean_similarity_at(visual, audio, offset);
      if (s > best.score) {
        best.score = s;
        best.best_offset = offset;
      }
    }
  }
  return best;
}

MatchResult score_dtw(const Matrix& visual, const Matrix& audio, std::optional<int> band) {
  check_pair(visual, audio, false);
  const std::size_t n = visual.rows(), m = audio.rows();
  if (band) {
    if (*band < 0) throw Error(ErrorKind::invalid_argument, "dtw band must be >= 0");
    const auto gap = static_cast<std::size_t>(std::labs(static_cast<long>(n) - static_cast<long>(m)));
    if (gap > static_cast<std::size_t>(*band)) {
      throw Error(ErrorKind::invalid_argument, "band " + std::to_string(*band) + " cannot connect corners of a " +
                                                   std::to_string(n) + "x" + std::to_string(m) + " grid");
    }
  }
  auto in_band = [&](std::size_t i, std::size_t j) {
    return !band || std::labs(static_cast<long>(i) - static_cast<long>(j)) <= *band;
  };

  // Minimum total cost; among equal-cost predecessors the shorter path wins,
  // then the diagonal, then a step along the audio axis, then the visual axis.
  constexpr double inf = std::numeric_limits<double>::infinity();
  Matrix acc(n, m, inf);
  std::vector<std::size_t> len(n * m, 0);
  std::vector<std::uint8_t> from(n * m, 0);  // 0 diagonal, 1 (i, j-1), 2 (i-1, j)
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (!in_band(i, j)) continue;
      const double cost = 1.0 - cosine(visual.row(i), audio.row(j));
      double prev = 0.0;
      std::size_t prev_len = 0;
      if (i > 0 || j > 0) {
        prev = inf;
        auto consider = [&](std::size_t pi, std::size_t pj, std::uint8_t dir) {
          const double c = acc(pi, pj);
          const std::size_t l = len[pi * m + pj];
          if (c < prev || (c == prev && c < inf && l < prev_len)) {
            prev = c;
            prev_len = l;
            from[i * m + j] = dir;
          }
        };
        if (i > 0 && j > 0) consider(i - 1, j - 1, 0);
        if (j > 0) consider(i, j - 1, 1);
        if (i > 0) consider(i - 1, j, 2);
      }
      acc(i, j) = prev + cost;
      len[i * m + j] = prev_len + 1;
    }
  }

  WarpingPath path;
  std::size_t i = n - 1, j = m - 1;
  path.emplace_back(i, j);
  while (i > 0 || j > 0) {
    switch (from[i * m + j]) {
      case 0: --i, --j; break;
      case 1: --j; break;
      default: --i; break;
    }
    path.emplace_back(i, j);
  }
  std::reverse(path.begin(), path.end());

  const double total = acc(n - 1, m - 1);
  MatchResult r;
  r.score = std::clamp(1.0 - total / static_cast<double>(path.size()), -1.0, 1.0);
  r.path = std::move(path);
  return r;
}

MatchResult score(const EmbeddingSequence& visual, const EmbeddingSequence& audio, const AlignmentConfig& cfg) {
  cfg.validate();
  if (cfg.mode == AlignmentMode::dtw) return score_dtw(visual.data, audio.data, cfg.dtw_band);
  const std::size_t t = std::min(visual.frames(), audio.frames());
  if (t == 0) throw Error(ErrorKind::invalid_argument, "empty sequence");
  const Matrix v = visual.data.head_rows(t);
  const Matrix a = audio.data.head_rows(t);
  return cfg.mode == AlignmentMode::plain ? score_plain(v, a) : score_fixed_offset(v, a, cfg.tau);
}

}  // namespace avsf
