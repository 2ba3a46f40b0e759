#include "avsf/audio_features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "avsf/error.hpp"

namespace avsf {

std::size_t MfccConfig::window_samples() const {
  return static_cast<std::size_t>(std::lround(sample_rate * window_ms / 1000.0));
}

std::size_t MfccConfig::hop_samples() const {
  return static_cast<std::size_t>(std::lround(sample_rate * hop_ms / 1000.0));
}

void MfccConfig::validate() const {
  if (!(sample_rate > 0)) throw Error(ErrorKind::invalid_argument, "sample_rate must be positive");
  if (window_samples() == 0 || hop_samples() == 0) throw Error(ErrorKind::invalid_argument, "empty window or hop");
  if (n_fft == 0 || (n_fft & (n_fft - 1)) != 0) throw Error(ErrorKind::invalid_argument, "n_fft must be a power of two");
  if (n_fft < window_samples()) throw Error(ErrorKind::invalid_argument, "n_fft shorter than the window");
  if (n_mels == 0 || n_coeffs == 0 || n_coeffs > n_mels) {
    throw Error(ErrorKind::invalid_argument, "need 1 <= n_coeffs <= n_mels");
  }
  if (!(mel_fmin >= 0 && mel_fmax > mel_fmin && mel_fmax <= sample_rate / 2)) {
    throw Error(ErrorKind::invalid_argument, "mel band edges must satisfy 0 <= fmin < fmax <= nyquist");
  }
  if (!(log_floor > 0)) throw Error(ErrorKind::invalid_argument, "log_floor must be positive");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Matrix mel_filterbank(const MfccConfig& cfg) {
  const std::size_t n_bins = cfg.n_fft / 2 + 1;
  const double lo = hz_to_mel(cfg.mel_fmin);
  const double hi = hz_to_mel(cfg.mel_fmax);
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
  }
  Matrix fb(cfg.n_mels, n_bins);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(cfg.n_fft);
      double w = 0.0;
      if (f > left && f <= centre) {
        w = (f - left) / (centre - left);
      } else if (f > centre && f < right) {
        w = (right - f) / (right - centre);
      }
      fb(m, k) = w;
    }
  }
  return fb;
}

void fft(std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  if (n == 0 || (n & (n - 1)) != 0) throw Error(ErrorKind::invalid_argument, "fft size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const auto u = x[i + j];
        const auto v = x[i + j + len / 2] * w;
        x[i + j] = u + v;
        x[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

FeatureFrames mel_energies(const AudioWaveform& wave, const MfccConfig& cfg) {
  cfg.validate();
  if (std::abs(wave.sample_rate - cfg.sample_rate) > 1e-9) {
    throw Error(ErrorKind::invalid_argument, "sample rate " + std::to_string(wave.sample_rate) +
                                                 " does not match configured " + std::to_string(cfg.sample_rate));
  }
  const std::size_t win = cfg.window_samples();
  const std::size_t hop = cfg.hop_samples();
  const std::size_t n = wave.samples.size();
  if (n < win) throw Error(ErrorKind::invalid_argument, "waveform shorter than one analysis window");
  if (!all_finite(wave.samples)) throw Error(ErrorKind::non_finite, "waveform contains NaN or Inf");

  std::vector<double> emph(n);
  emph[0] = wave.samples[0];
  for (std::size_t i = 1; i < n; ++i) emph[i] = wave.samples[i] - cfg.preemphasis * wave.samples[i - 1];

  std::vector<double> hann(win);
  for (std::size_t i = 0; i < win; ++i) {
    hann[i] = win == 1 ? 1.0
                       : 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                              static_cast<double>(win - 1));
  }

  const Matrix fb = mel_filterbank(cfg);
  const std::size_t n_frames = (n - win) / hop + 1;
  const std::size_t n_bins = cfg.n_fft / 2 + 1;
  FeatureFrames out{1000.0 / cfg.hop_ms, Matrix(n_frames, cfg.n_mels)};
  std::vector<std::complex<double>> buf(cfg.n_fft);
  std::vector<double> mag(n_bins);
  for (std::size_t t = 0; t < n_frames; ++t) {
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    for (std::size_t i = 0; i < win; ++i) buf[i] = emph[t * hop + i] * hann[i];
    fft(buf);
    for (std::size_t k = 0; k < n_bins; ++k) mag[k] = std::abs(buf[k]);
    for (std::size_t m = 0; m < cfg.n_mels; ++m) out.data(t, m) = dot(fb.row(m), mag);
  }
  return out;
}

FeatureFrames mfcc(const AudioWaveform& wave, const MfccConfig& cfg) {
  FeatureFrames mel = mel_energies(wave, cfg);
  const std::size_t n_mels = cfg.n_mels;
  // Orthonormal DCT-II basis, truncated to the first n_coeffs rows.
  Matrix dct(cfg.n_coeffs, n_mels);
  for (std::size_t k = 0; k < cfg.n_coeffs; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n_mels));
    for (std::size_t m = 0; m < n_mels; ++m) {
      dct(k, m) = scale * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(m) + 1.0) /
                                   (2.0 * static_cast<double>(n_mels)));
    }
  }
  FeatureFrames out{mel.rate_hz, Matrix(mel.frames(), cfg.n_coeffs)};
  std::vector<double> logmel(n_mels);
  for (std::size_t t = 0; t < mel.frames(); ++t) {
    for (std::size_t m = 0; m < n_mels; ++m) logmel[m] = std::log(std::max(mel.data(t, m), cfg.log_floor));
    for (std::size_t k = 0; k < cfg.n_coeffs; ++k) out.data(t, k) = dot(dct.row(k), logmel);
  }
  return out;
}

FeatureFrames stack_frames(const FeatureFrames& feats, std::size_t k) {
  if (k == 0) throw Error(ErrorKind::invalid_argument, "stack factor must be >= 1");
  if (feats.frames() < k) {
    throw Error(ErrorKind::invalid_argument,
                std::to_string(feats.frames()) + " frames cannot be stacked by " + std::to_string(k));
  }
  const std::size_t out_frames = feats.frames() / k;
  const std::size_t d = feats.dim();
  FeatureFrames out{feats.rate_hz / static_cast<double>(k), Matrix(out_frames, d * k)};
  for (std::size_t t = 0; t < out_frames; ++t) {
    auto dst = out.data.row(t);
    for (std::size_t j = 0; j < k; ++j) {
      auto src = feats.data.row(t * k + j);
      std::copy(src.begin(), src.end(), dst.begin() + j * d);
    }
  }
  return out;
}

void normalize_utterance(FeatureFrames& feats) {
  const std::size_t n = feats.frames();
  if (n == 0) return;
  for (std::size_t c = 0; c < feats.dim(); ++c) {
    double mean = 0.0;
    for (std::size_t t = 0; t < n; ++t) mean += feats.data(t, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t t = 0; t < n; ++t) var += (feats.data(t, c) - mean) * (feats.data(t, c) - mean);
    var /= static_cast<double>(n);
    const double sd = var > 1e-24 ? std::sqrt(var) : 1.0;
    for (std::size_t t = 0; t < n; ++t) feats.data(t, c) = (feats.data(t, c) - mean) / sd;
  }
}

}  // namespace avsf
