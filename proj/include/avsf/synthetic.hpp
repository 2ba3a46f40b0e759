#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "avsf/embedding_io.hpp"
#include "avsf/matrix.hpp"
#include "avsf/representation.hpp"

namespace avsf {

// Hidden-Markov "speech world". States are phonemes; several states share a
// viseme, so a single visual frame cannot tell them apart. Each visual frame
// also carries a faint coarticulation trace of the previous state, which is
// what a model with temporal context can use to resolve the ambiguity.
struct SyntheticWorld {
  std::size_t states = 0;   // K
  std::size_t visemes = 0;  // V < K
  Matrix transition;        // K x K, row-stochastic
  std::vector<std::size_t> viseme_of;  // state -> viseme
  Matrix audio_means;       // K x da
  Matrix visual_means;      // V x dv
  Matrix coarticulation;    // K x dv, added to visual frame t+1 when the state at t is s
  double sigma_audio = 0.3;
  double sigma_visual = 0.3;
  std::uint64_t seed = 7;

  std::size_t audio_dim() const { return audio_means.cols(); }
  std::size_t visual_dim() const { return visual_means.cols(); }
  std::vector<std::size_t> viseme_class(std::size_t viseme) const;
  void validate() const;
};

struct WorldParams {
  std::size_t states = 20;
  std::size_t visemes = 7;
  std::size_t dim = 8;  // shared audio/visual observation size
  double sigma_audio = 0.3;
  double sigma_visual = 0.3;
  double coarticulation_gain = 0.15;
  std::uint64_t seed = 7;
};

// Observation space: the first half of the dimensions carries the viseme
// (identical in both modalities), the second half the state detail (audio)
// or the coarticulation trace (visual). Transitions act on visemes; the next
// state is uniform within its viseme class.
SyntheticWorld make_world(const WorldParams& params);

std::string world_to_json(const SyntheticWorld& w);
// Accepts the full form written by world_to_json, or a parameter-only
// document (fields of WorldParams, with "K"/"V" aliases), which is expanded
// through make_world.
SyntheticWorld world_from_json(const std::string& text);
SyntheticWorld load_world(const std::filesystem::path& src);
void save_world(const SyntheticWorld& w, const std::filesystem::path& dest);

enum class VideoCategory { real, swap, lipsync, offset_fixed, offset_dynamic };
const char* to_string(VideoCategory c);
VideoCategory parse_category(const std::string& s);
inline constexpr VideoCategory kAllCategories[] = {VideoCategory::real, VideoCategory::swap, VideoCategory::lipsync,
                                                   VideoCategory::offset_fixed, VideoCategory::offset_dynamic};

struct SyntheticVideo {
  std::string id;
  std::vector<std::size_t> state_path;     // drives the audio
  std::vector<std::size_t> visual_states;  // drives the visual stream
  Matrix visual_obs;                       // T x dv
  Matrix audio_obs;                        // T x da
  Label label = Label::real;
  VideoCategory category = VideoCategory::real;
  // Per-frame audio delay for offset categories: audio'[t] = audio[t - offset[t]].
  std::vector<int> offsets;
};

std::vector<std::size_t> sample_path(const SyntheticWorld& w, std::size_t frames, std::mt19937_64& rng);

// Emits both streams from a state path. Visual frame t uses the viseme of
// visual_states[t] plus the trace of visual_states[t-1].
SyntheticVideo render(const SyntheticWorld& w, std::vector<std::size_t> audio_states,
                      std::vector<std::size_t> visual_states, std::mt19937_64& rng);

std::vector<SyntheticVideo> gen_real(const SyntheticWorld& w, std::size_t frames, std::size_t count,
                                     std::mt19937_64& rng, const std::string& id_prefix = "real");

// Offset categories keep the label real: content matches, only timing moves.
SyntheticVideo gen_forgery(const SyntheticWorld& w, const SyntheticVideo& real, VideoCategory kind,
                           std::mt19937_64& rng);

// Shifts audio by a constant delay, zero-padding the uncovered frames.
SyntheticVideo with_fixed_offset(const SyntheticVideo& real, int delay);
Matrix shift_rows(const Matrix& m, const std::vector<int>& delays);

inline constexpr std::size_t kDynamicSegmentFrames = 50;
inline constexpr int kMinOffset = 5;
inline constexpr int kMaxOffset = 12;

struct BenchmarkOptions {
  std::size_t frames = 400;
  std::uint64_t seed = 7;
  double fps = 25.0;
  // Learned mode: observations are replaced by the encoder's embeddings.
  std::optional<ToyEncoder> encoder;
};

// Videos of each category come from their own generator seeded with
// (seed, category index), so sizes of one category never perturb another.
std::vector<SyntheticVideo> generate_benchmark(const SyntheticWorld& w,
                                               const std::map<VideoCategory, std::size_t>& sizes,
                                               const BenchmarkOptions& opts);

std::map<VideoCategory, std::size_t> parse_sizes(const std::string& spec);

// Writes <id>.v.avsf / <id>.a.avsf, manifest.jsonl and world.json into out_dir.
Manifest build_benchmark(const SyntheticWorld& w, const std::map<VideoCategory, std::size_t>& sizes,
                         const std::filesystem::path& out_dir, const BenchmarkOptions& opts);

}  // namespace avsf
