#pragma once

#include <complex>
#include <vector>

#include "avsf/embedding_io.hpp"
#include "avsf/matrix.hpp"

namespace avsf {

struct MfccConfig {
  double sample_rate = 16000.0;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  std::size_t n_fft = 512;
  std::size_t n_mels = 26;
  std::size_t n_coeffs = 13;
  double mel_fmin = 0.0;
  double mel_fmax = 8000.0;
  double log_floor = 1e-10;
  double preemphasis = 0.97;

  std::size_t window_samples() const;
  std::size_t hop_samples() const;
  void validate() const;
};

struct FeatureFrames {
  double rate_hz = 100.0;
  Matrix data;  // frames x dim

  std::size_t frames() const noexcept { return data.rows(); }
  std::size_t dim() const noexcept { return data.cols(); }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// n_mels x (n_fft/2 + 1) triangular HTK-mel weights over FFT bin frequencies.
Matrix mel_filterbank(const MfccConfig& cfg);

// In-place radix-2 FFT; size must be a power of two.
void fft(std::vector<std::complex<double>>& x);

// Mel filterbank energies (magnitude spectrum, before the log) per frame.
FeatureFrames mel_energies(const AudioWaveform& wave, const MfccConfig& cfg);

FeatureFrames mfcc(const AudioWaveform& wave, const MfccConfig& cfg = {});

// Frame t of the result concatenates input frames [k*t, k*t + k); the
// remainder frames are dropped.
FeatureFrames stack_frames(const FeatureFrames& feats, std::size_t k = 4);

// Zero mean, unit variance per dimension over the utterance. Constant
// dimensions are only centred.
void normalize_utterance(FeatureFrames& feats);

}  // namespace avsf
