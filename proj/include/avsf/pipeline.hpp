#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "avsf/cluster_targets.hpp"
#include "avsf/representation.hpp"
#include "avsf/synthetic.hpp"

namespace avsf {

// End-to-end toy representation learning on a synthetic world: sample real
// videos, derive cluster targets (audio observations in round 0, fused
// frontend features afterwards), train the masked predictor.
struct ToyPipelineConfig {
  std::size_t codebook_size = 100;
  std::size_t context = 5;
  std::size_t feature_dim = 8;
  std::size_t train_videos = 40;
  std::size_t frames = 400;
  std::size_t rounds = 2;
  std::size_t kmeans_iter = 50;
  TrainConfig train;
};

struct ToyPipelineResult {
  ToyEncoder encoder;
  Codebook codebook;                            // targets of the final round
  std::vector<std::vector<double>> round_loss;  // per round, per epoch
};

using LogFn = std::function<void(const std::string&)>;

std::vector<TrainingSequence> training_set(const std::vector<SyntheticVideo>& videos, const Codebook& codebook,
                                           const std::vector<Matrix>& features);

ToyPipelineResult train_toy_encoder(const SyntheticWorld& world, const ToyPipelineConfig& cfg,
                                    const LogFn& log = {});

}  // namespace avsf
