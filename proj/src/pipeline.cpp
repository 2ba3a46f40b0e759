#include "avsf/pipeline.hpp"

#include "avsf/error.hpp"

namespace avsf {

namespace {

Matrix stack_rows(const std::vector<Matrix>& parts) {
  std::size_t rows = 0;
  for (const auto& m : parts) rows += m.rows();
  Matrix out(rows, parts.front().cols());
  std::size_t r = 0;
  for (const auto& m : parts) {
    std::copy(m.data().begin(), m.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(r * out.cols()));
    r += m.rows();
  }
  return out;
}

}  // namespace

std::vector<TrainingSequence> training_set(const std::vector<SyntheticVideo>& videos, const Codebook& codebook,
                                           const std::vector<Matrix>& features) {
  std::vector<TrainingSequence> data;
  data.reserve(videos.size());
  for (std::size_t i = 0; i < videos.size(); ++i) {
    data.push_back({videos[i].visual_obs, videos[i].audio_obs, assign(codebook, features[i]).labels});
  }
  return data;
}

ToyPipelineResult train_toy_encoder(const SyntheticWorld& world, const ToyPipelineConfig& cfg, const LogFn& log) {
  if (cfg.rounds == 0 || cfg.train_videos == 0) throw Error(ErrorKind::invalid_argument, "need >= 1 round and video");
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.train.seed), static_cast<std::uint32_t>(cfg.train.seed >> 32),
                    0x70u};
  std::mt19937_64 rng(seq);
  const auto videos = gen_real(world, cfg.frames, cfg.train_videos, rng, "train");

  EncoderShape shape{world.visual_dim(), world.audio_dim(), cfg.feature_dim, cfg.context, cfg.codebook_size};
  ToyPipelineResult result;
  std::vector<Matrix> features;
  for (const auto& v : videos) features.push_back(v.audio_obs);

  for (std::size_t round = 0; round < cfg.rounds; ++round) {
    result.codebook = kmeans_fit(stack_rows(features), cfg.codebook_size, cfg.train.seed + round, cfg.kmeans_iter);
    result.codebook.feature_source = round == 0 ? FeatureSource::mfcc : FeatureSource::learned;
    result.codebook.iteration = static_cast<std::uint32_t>(round);
    if (log) {
      log("round " + std::to_string(round) + ": k-means objective " +
          format_double(result.codebook.objective_trace.back()));
    }
    const auto data = training_set(videos, result.codebook, features);
    TrainConfig tc = cfg.train;
    tc.seed = cfg.train.seed + round;
    auto trained = train(ToyEncoder::initialise(shape, tc.seed), data, tc, [&](std::size_t epoch, double loss) {
      if (log) log("round " + std::to_string(round) + " epoch " + std::to_string(epoch) + " loss " + format_double(loss));
    });
    result.encoder = std::move(trained.encoder);
    result.round_loss.push_back(std::move(trained.epoch_loss));
    if (round + 1 < cfg.rounds) {
      for (std::size_t i = 0; i < videos.size(); ++i) {
        features[i] = fused_features(result.encoder, videos[i].visual_obs, videos[i].audio_obs);
      }
    }
  }
  return result;
}

}  // namespace avsf
