#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "avsf/matrix.hpp"

namespace avsf {

enum class FeatureSource : std::uint8_t { mfcc = 0, learned = 1 };

struct Codebook {
  Matrix centroids;  // C x dim
  FeatureSource feature_source = FeatureSource::mfcc;
  std::uint32_t iteration = 0;  // refinement round
  // Within-cluster sum of squares after each assignment step of the fit.
  std::vector<double> objective_trace;

  std::size_t size() const noexcept { return centroids.rows(); }
  std::size_t dim() const noexcept { return centroids.cols(); }
};

// Cluster indices are 0-based: labels[t] in [0, C).
struct ClusterAssignment {
  std::vector<std::size_t> labels;
  std::size_t codebook_size = 0;
};

// k-means++ seeding: first centre uniform, the rest drawn with probability
// proportional to squared distance to the nearest chosen centre.
Matrix kmeans_plus_plus(const Matrix& features, std::size_t k, std::mt19937_64& rng);

// Lloyd iterations from the given centres until the assignment stops changing
// or max_iter updates have run. Empty clusters are re-seeded to the point
// farthest from its own centroid.
Codebook lloyd(const Matrix& features, Matrix initial, std::size_t max_iter);

Codebook kmeans_fit(const Matrix& features, std::size_t k, std::uint64_t seed, std::size_t max_iter = 100);

// Nearest centroid by squared Euclidean distance; ties go to the lower index.
ClusterAssignment assign(const Codebook& codebook, const Matrix& features);

double within_cluster_ss(const Matrix& features, const Matrix& centroids, const std::vector<std::size_t>& labels);

inline constexpr char kCodebookMagic[4] = {'A', 'V', 'S', 'C'};

void write_codebook(const Codebook& cb, const std::filesystem::path& dest);
Codebook read_codebook(const std::filesystem::path& src);

}  // namespace avsf
