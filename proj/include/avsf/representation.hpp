#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "avsf/embedding_io.hpp"
#include "avsf/matrix.hpp"

namespace avsf {

struct EncoderShape {
  std::size_t visual_dim = 8;
  std::size_t audio_dim = 8;
  std::size_t feature_dim = 8;  // per-modality frontend output
  std::size_t context = 0;      // half window w; 0 is strictly frame-local
  std::size_t codebook_size = 100;

  std::size_t window_frames() const { return 2 * context + 1; }
  std::size_t fused_dim() const { return 2 * feature_dim; }
  std::size_t predictor_inputs() const { return window_frames() * fused_dim(); }
  void validate() const;
  bool operator==(const EncoderShape&) const = default;
};

// Trainable weights. Also used as the gradient container.
struct EncoderParams {
  Matrix visual_w;                  // feature_dim x visual_dim
  std::vector<double> visual_b;     // feature_dim
  Matrix audio_w;                   // feature_dim x audio_dim
  std::vector<double> audio_b;      // feature_dim
  std::vector<double> visual_mask;  // learned replacement for masked visual frames
  std::vector<double> audio_mask;
  Matrix predictor_w;               // codebook_size x predictor_inputs
  std::vector<double> predictor_b;  // codebook_size

  static EncoderParams zeros(const EncoderShape& shape);

  // Visits every parameter block in a fixed order.
  void for_each_block(const std::function<void(std::span<double>)>& fn);
  void for_each_block(const std::function<void(std::span<const double>)>& fn) const;
  std::size_t size() const;
  bool operator==(const EncoderParams&) const = default;
};

struct ToyEncoder {
  EncoderShape shape;
  EncoderParams params;

  // Small Gaussian initialisation; mask vectors start at zero.
  static ToyEncoder initialise(const EncoderShape& shape, std::uint64_t seed);
  bool operator==(const ToyEncoder&) const = default;
};

enum class DropoutState { both, audio_only, visual_only };
const char* to_string(DropoutState s);

// Masked frame indices per modality (sorted, unique, 0-based). The sets may overlap.
struct MaskSpec {
  std::vector<std::size_t> visual;
  std::vector<std::size_t> audio;
  double span_len = 5.0;
  double mask_prob = 0.3;

  static MaskSpec none() { return MaskSpec{}; }
  std::vector<std::size_t> union_indices() const;
};

// Contiguous spans of span_len frames; round(mask_prob * T / span_len) span
// starts (at least one when mask_prob > 0) drawn uniformly per modality.
MaskSpec sample_mask(std::size_t frames, double mask_prob, std::size_t span_len, std::mt19937_64& rng);

struct DropoutProbs {
  double both = 0.5;
  double audio_only = 0.25;
  double visual_only = 0.25;
};
DropoutState sample_dropout(const DropoutProbs& probs, std::mt19937_64& rng);

// Frontend outputs after masking and modality dropout, frames x fused_dim
// with the visual half first.
Matrix corrupted_features(const ToyEncoder& enc, const Matrix& visual, const Matrix& audio, const MaskSpec& mask,
                          DropoutState dropout);

// Context-window logits for every frame; frames outside [0, T) are zero.
Matrix forward(const ToyEncoder& enc, const Matrix& visual, const Matrix& audio, const MaskSpec& mask,
               DropoutState dropout);

// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& logits);

// -sum over t in (visual u audio) of log softmax(logits_t)[targets_t].
double masked_nll(const Matrix& logits, std::span<const std::size_t> targets, const MaskSpec& mask);

struct LossAndGradient {
  double loss = 0.0;
  std::size_t masked_frames = 0;
  EncoderParams gradient;
};

LossAndGradient grad_masked_nll(const ToyEncoder& enc, const Matrix& visual, const Matrix& audio,
                                std::span<const std::size_t> targets, const MaskSpec& mask, DropoutState dropout);

struct TrainingSequence {
  Matrix visual;
  Matrix audio;
  std::vector<std::size_t> targets;
};

struct TrainConfig {
  double lr = 0.5;
  std::size_t epochs = 50;
  std::size_t batch = 4;
  std::uint64_t seed = 7;
  double mask_prob = 0.3;
  std::size_t span_len = 5;
  DropoutProbs dropout;
};

struct TrainResult {
  ToyEncoder encoder;
  std::vector<double> epoch_loss;  // mean NLL per masked frame
};

// Plain gradient descent. Each step subtracts lr times the batch gradient
// divided by the number of masked frames in the batch. Randomness is drawn
// from one generator seeded with cfg.seed: per epoch a Fisher-Yates shuffle
// (i from n-1 down to 1), then per sequence its mask and its dropout state.
TrainResult train(ToyEncoder enc, std::span<const TrainingSequence> data, const TrainConfig& cfg,
                  const std::function<void(std::size_t epoch, double loss)>& on_epoch = {});

// Shuffle used by train, exposed so single steps can be replayed.
std::vector<std::size_t> shuffled_order(std::size_t n, std::mt19937_64& rng);

// Posterior over the codebook from one modality with the other dropped out
// and nothing masked. The posterior is the detection embedding.
EmbeddingSequence embed(const ToyEncoder& enc, const Matrix& obs, Modality modality, double fps = 25.0);

// Unmasked frontend features of both modalities, frames x fused_dim.
Matrix fused_features(const ToyEncoder& enc, const Matrix& visual, const Matrix& audio);

inline constexpr char kEncoderMagic[4] = {'A', 'V', 'S', 'E'};
void write_encoder(const ToyEncoder& enc, const std::filesystem::path& dest);
ToyEncoder read_encoder(const std::filesystem::path& src);

}  // namespace avsf
