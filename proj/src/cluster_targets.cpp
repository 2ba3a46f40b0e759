#include "avsf/cluster_targets.hpp"

#include <bit>
#include <cstring>
#include <limits>
#include <string>

#include "avsf/embedding_io.hpp"
#include "avsf/error.hpp"

namespace avsf {

namespace {

void check_features(const Matrix& features, std::size_t k) {
  if (k == 0) throw Error(ErrorKind::invalid_argument, "codebook size must be >= 1");
  if (features.rows() < k) {
    throw Error(ErrorKind::invalid_argument,
                "need at least C=" + std::to_string(k) + " points, got " + std::to_string(features.rows()));
  }
  if (features.cols() == 0) throw Error(ErrorKind::invalid_argument, "zero-dimensional features");
  if (!all_finite(features.data())) throw Error(ErrorKind::non_finite, "features contain NaN or Inf");
}

std::size_t nearest(const Matrix& centroids, std::span<const double> x, double* best_d = nullptr) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = squared_distance(centroids.row(c), x);
    if (d < bd) {
      bd = d;
      best = c;
    }
  }
  if (best_d) *best_d = bd;
  return best;
}

}  // namespace

Matrix kmeans_plus_plus(const Matrix& features, std::size_t k, std::mt19937_64& rng) {
  check_features(features, k);
  const std::size_t n = features.rows();
  Matrix centres(k, features.cols());
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  for (std::size_t c = 0; c < k; ++c) {
    if (c > 0) {
      double total = 0.0;
      for (double v : d2) total += v;
      if (total > 0.0) {
        const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
        double acc = 0.0;
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          acc += d2[i];
          if (u < acc && d2[i] > 0.0) {
            pick = i;
            break;
          }
        }
      } else {
        // Every point coincides with a centre already.
        pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      }
    }
    auto src = features.row(pick);
    std::copy(src.begin(), src.end(), centres.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(features.row(i), centres.row(c)));
  }
  return centres;
}

double within_cluster_ss(const Matrix& features, const Matrix& centroids, const std::vector<std::size_t>& labels) {
  double s = 0.0;
  for (std::size_t i = 0; i < features.rows(); ++i) s += squared_distance(features.row(i), centroids.row(labels[i]));
  return s;
}

Codebook lloyd(const Matrix& features, Matrix initial, std::size_t max_iter) {
  check_features(features, initial.rows());
  if (initial.cols() != features.cols()) throw Error(ErrorKind::dimension_mismatch, "initial centroids dim");
  const std::size_t n = features.rows();
  const std::size_t k = initial.rows();
  const std::size_t d = features.cols();

  Codebook cb;
  cb.centroids = std::move(initial);
  std::vector<std::size_t> labels(n, k);  // k marks "unassigned"
  std::vector<double> dist(n);
  for (std::size_t iter = 0;; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = nearest(cb.centroids, features.row(i), &dist[i]);
      if (c != labels[i]) {
        labels[i] = c;
        changed = true;
      }
    }
    cb.objective_trace.push_back(within_cluster_ss(features, cb.centroids, labels));
    if (!changed || iter >= max_iter) break;

    Matrix sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = sums.row(labels[i]);
      auto src = features.row(i);
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      ++counts[labels[i]];
    }
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      auto dst = cb.centroids.row(c);
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < d; ++j) dst[j] = sums(c, j) / static_cast<double>(counts[c]);
        continue;
      }
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i] && dist[i] > far_d) {
          far_d = dist[i];
          far = i;
        }
      }
      taken[far] = true;
      auto src = features.row(far);
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
  return cb;
}

Codebook kmeans_fit(const Matrix& features, std::size_t k, std::uint64_t seed, std::size_t max_iter) {
  std::mt19937_64 rng(seed);
  Matrix init = kmeans_plus_plus(features, k, rng);
  return lloyd(features, std::move(init), max_iter);
}

ClusterAssignment assign(const Codebook& codebook, const Matrix& features) {
  if (features.cols() != codebook.dim()) {
    throw Error(ErrorKind::dimension_mismatch, "features have dim " + std::to_string(features.cols()) +
                                                   ", codebook " + std::to_string(codebook.dim()));
  }
  ClusterAssignment out;
  out.codebook_size = codebook.size();
  out.labels.resize(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) out.labels[i] = nearest(codebook.centroids, features.row(i));
  return out;
}

void write_codebook(const Codebook& cb, const std::filesystem::path& dest) {
  std::vector<std::uint8_t> out(kCodebookMagic, kCodebookMagic + 4);
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  u32(1);
  out.push_back(static_cast<std::uint8_t>(cb.feature_source));
  out.insert(out.end(), 3, 0);
  u32(cb.iteration);
  u32(static_cast<std::uint32_t>(cb.size()));
  u32(static_cast<std::uint32_t>(cb.dim()));
  for (double v : cb.centroids.data()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  write_file_bytes(dest, out);
}

Codebook read_codebook(const std::filesystem::path& src) {
  const auto bytes = read_file_bytes(src);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCodebookMagic, 4) != 0) {
    throw Error(ErrorKind::bad_magic, "expected AVSC");
  }
  if (bytes.size() < 24) throw Error(ErrorKind::truncated, "codebook header");
  auto u32 = [&](std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
    return v;
  };
  if (u32(4) != 1) throw Error(ErrorKind::unsupported_version, "AVSC version " + std::to_string(u32(4)));
  if (bytes[8] > 1) throw Error(ErrorKind::format, "feature source byte");
  Codebook cb;
  cb.feature_source = static_cast<FeatureSource>(bytes[8]);
  cb.iteration = u32(12);
  const std::size_t k = u32(16), d = u32(20);
  if (bytes.size() != 24 + k * d * 8) throw Error(ErrorKind::truncated, "codebook payload size");
  std::vector<double> values(k * d);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[24 + 8 * i + b]) << (8 * b);
    values[i] = std::bit_cast<double>(bits);
  }
  if (!all_finite(values)) throw Error(ErrorKind::non_finite, "codebook centroids");
  cb.centroids = Matrix(k, d, std::move(values));
  return cb;
}

}  // namespace avsf
