#include "avsf/representation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <iterator>
#include <limits>
#include <string>

#include "avsf/error.hpp"

namespace avsf {

void EncoderShape::validate() const {
  if (visual_dim == 0 || audio_dim == 0 || feature_dim == 0) {
    throw Error(ErrorKind::invalid_argument, "encoder dims must be >= 1");
  }
  if (codebook_size < 2) throw Error(ErrorKind::invalid_argument, "codebook size must be >= 2");
}

EncoderParams EncoderParams::zeros(const EncoderShape& s) {
  EncoderParams p;
  p.visual_w = Matrix(s.feature_dim, s.visual_dim);
  p.visual_b.assign(s.feature_dim, 0.0);
  p.audio_w = Matrix(s.feature_dim, s.audio_dim);
  p.audio_b.assign(s.feature_dim, 0.0);
  p.visual_mask.assign(s.feature_dim, 0.0);
  p.audio_mask.assign(s.feature_dim, 0.0);
  p.predictor_w = Matrix(s.codebook_size, s.predictor_inputs());
  p.predictor_b.assign(s.codebook_size, 0.0);
  return p;
}

void EncoderParams::for_each_block(const std::function<void(std::span<double>)>& fn) {
  fn(visual_w.data());
  fn(visual_b);
  fn(audio_w.data());
  fn(audio_b);
  fn(visual_mask);
  fn(audio_mask);
  fn(predictor_w.data());
  fn(predictor_b);
}

void EncoderParams::for_each_block(const std::function<void(std::span<const double>)>& fn) const {
  fn(visual_w.data());
  fn(visual_b);
  fn(audio_w.data());
  fn(audio_b);
  fn(visual_mask);
  fn(audio_mask);
  fn(predictor_w.data());
  fn(predictor_b);
}

std::size_t EncoderParams::size() const {
  std::size_t n = 0;
  for_each_block([&](std::span<const double> b) { n += b.size(); });
  return n;
}

ToyEncoder ToyEncoder::initialise(const EncoderShape& shape, std::uint64_t seed) {
  shape.validate();
  ToyEncoder enc{shape, EncoderParams::zeros(shape)};
  std::mt19937_64 rng(seed);
  auto fill = [&](Matrix& m, double sd) {
    std::normal_distribution<double> nd(0.0, sd);
    for (double& v : m.data()) v = nd(rng);
  };
  fill(enc.params.visual_w, 1.0 / std::sqrt(static_cast<double>(shape.visual_dim)));
  fill(enc.params.audio_w, 1.0 / std::sqrt(static_cast<double>(shape.audio_dim)));
  fill(enc.params.predictor_w, 0.1 / std::sqrt(static_cast<double>(shape.predictor_inputs())));
  return enc;
}

const char* to_string(DropoutState s) {
  switch (s) {
    case DropoutState::both: return "both";
    case DropoutState::audio_only: return "audio_only";
    case DropoutState::visual_only: return "visual_only";
  }
  return "?";
}

std::vector<std::size_t> MaskSpec::union_indices() const {
  std::vector<std::size_t> u;
  std::set_union(visual.begin(), visual.end(), audio.begin(), audio.end(), std::back_inserter(u));
  return u;
}

MaskSpec sample_mask(std::size_t frames, double mask_prob, std::size_t span_len, std::mt19937_64& rng) {
  if (frames == 0) throw Error(ErrorKind::invalid_argument, "cannot mask an empty sequence");
  if (span_len == 0 || mask_prob < 0.0 || mask_prob > 1.0) {
    throw Error(ErrorKind::invalid_argument, "need span_len >= 1 and mask_prob in [0, 1]");
  }
  MaskSpec spec;
  spec.span_len = static_cast<double>(span_len);
  spec.mask_prob = mask_prob;
  const std::size_t n_spans =
      mask_prob > 0.0
          ? std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(mask_prob * static_cast<double>(frames) /
                                                                          static_cast<double>(span_len))))
          : 0;
  const std::size_t last_start = frames > span_len ? frames - span_len : 0;
  auto draw = [&](std::vector<std::size_t>& out) {
    std::vector<bool> hit(frames, false);
    std::uniform_int_distribution<std::size_t> start(0, last_start);
    for (std::size_t s = 0; s < n_spans; ++s) {
      const std::size_t a = start(rng);
      for (std::size_t t = a; t < std::min(frames, a + span_len); ++t) hit[t] = true;
    }
    for (std::size_t t = 0; t < frames; ++t) {
      if (hit[t]) out.push_back(t);
    }
  };
  draw(spec.visual);
  draw(spec.audio);
  return spec;
}

DropoutState sample_dropout(const DropoutProbs& probs, std::mt19937_64& rng) {
  const double total = probs.both + probs.audio_only + probs.visual_only;
  if (!(total > 0.0) || probs.both < 0 || probs.audio_only < 0 || probs.visual_only < 0) {
    throw Error(ErrorKind::invalid_argument, "dropout probabilities must be nonnegative with positive sum");
  }
  const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  if (u < probs.both) return DropoutState::both;
  if (u < probs.both + probs.audio_only) return DropoutState::audio_only;
  return DropoutState::visual_only;
}

namespace {

void check_inputs(const ToyEncoder& enc, const Matrix& visual, const Matrix& audio) {
  if (visual.rows() == 0) throw Error(ErrorKind::invalid_argument, "T = 0");
  if (visual.rows() != audio.rows()) {
    throw Error(ErrorKind::dimension_mismatch, "visual has " + std::to_string(visual.rows()) + " frames, audio " +
                                                   std::to_string(audio.rows()));
  }
  if (visual.cols() != enc.shape.visual_dim || audio.cols() != enc.shape.audio_dim) {
    throw Error(ErrorKind::dimension_mismatch, "observation dims do not match the encoder");
  }
}

std::vector<bool> as_flags(const std::vector<std::size_t>& idx, std::size_t frames) {
  std::vector<bool> f(frames, false);
  for (std::size_t t : idx) {
    if (t >= frames) throw Error(ErrorKind::invalid_argument, "mask index " + std::to_string(t) + " out of range");
    f[t] = true;
  }
  return f;
}

bool keeps_visual(DropoutState d) { return d != DropoutState::audio_only; }
bool keeps_audio(DropoutState d) { return d != DropoutState::visual_only; }

// Adds the logits of frame t to out (which must hold the bias already).
void accumulate_logits(const ToyEncoder& enc, const Matrix& fused, std::size_t t, bool vis, bool aud,
                       std::span<double> out) {
  const auto& s = enc.shape;
  const std::size_t df = s.feature_dim;
  const auto w = static_cast<long>(s.context);
  const auto n = static_cast<long>(fused.rows());
  const Matrix& wp = enc.params.predictor_w;
  for (long k = -w; k <= w; ++k) {
    const long u = static_cast<long>(t) + k;
    if (u < 0 || u >= n) continue;
    const auto f = fused.row(static_cast<std::size_t>(u));
    const std::size_t base = static_cast<std::size_t>(k + w) * s.fused_dim();
    for (std::size_t c = 0; c < s.codebook_size; ++c) {
      const double* wr = wp.row(c).data() + base;
      double acc = 0.0;
      if (vis) {
        for (std::size_t j = 0; j < df; ++j) acc += wr[j] * f[j];
      }
      if (aud) {
        for (std::size_t j = df; j < 2 * df; ++j) acc += wr[j] * f[j];
      }
      out[c] += acc;
    }
  }
}

double log_sum_exp(std::span<const double> x) {
  const double mx = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  return mx + std::log(s);
}

}  // namespace

Matrix corrupted_features(const ToyEncoder& enc, const Matrix& visual, const Matrix& audio, const MaskSpec& mask,
                          DropoutState dropout) {
  check_inputs(enc, visual, audio);
  const std::size_t n = visual.rows();
  const std::size_t df = enc.shape.feature_dim;
  const auto mv = as_flags(mask.visual, n);
  const auto ma = as_flags(mask.audio, n);
  const auto& p = enc.params;
  Matrix fused(n, 2 * df);
  for (std::size_t t = 0; t < n; ++t) {
    auto out = fused.row(t);
    if (keeps_visual(dropout)) {
      for (std::size_t i = 0; i < df; ++i) out[i] = mv[t] ? p.visual_mask[i] : p.visual_b[i] + dot(p.visual_w.row(i), visual.row(t));
    }
    if (keeps_audio(dropout)) {
      for (std::size_t i = 0; i < df; ++i) out[df + i] = ma[t] ? p.audio_mask[i] : p.audio_b[i] + dot(p.audio_w.row(i), audio.row(t));
    }
  }
  return fused;
}

Matrix forward(const ToyEncoder& enc, const Matrix& visual, const Matrix& audio, const MaskSpec& mask,
               DropoutState dropout) {
  const Matrix fused = corrupted_features(enc, visual, audio, mask, dropout);
  const std::size_t n = fused.rows();
  Matrix logits(n, enc.shape.codebook_size);
  for (std::size_t t = 0; t < n; ++t) {
    auto row = logits.row(t);
    std::copy(enc.params.predictor_b.begin(), enc.params.predictor_b.end(), row.begin());
    accumulate_logits(enc, fused, t, keeps_visual(dropout), keeps_audio(dropout), row);
  }
  return logits;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    const auto x = logits.row(t);
    const double mx = *std::max_element(x.begin(), x.end());
    double s = 0.0;
    auto out = p.row(t);
    for (std::size_t c = 0; c < x.size(); ++c) s += (out[c] = std::exp(x[c] - mx));
    for (double& v : out) v /= s;
  }
  return p;
}

double masked_nll(const Matrix& logits, std::span<const std::size_t> targets, const MaskSpec& mask) {
  if (targets.size() != logits.rows()) throw Error(ErrorKind::dimension_mismatch, "targets length != frames");
  const auto idx = mask.union_indices();
  if (idx.empty()) throw Error(ErrorKind::invalid_argument, "mask union is empty");
  double loss = 0.0;
  for (std::size_t t : idx) {
    if (t >= logits.rows()) throw Error(ErrorKind::invalid_argument, "mask index out of range");
    if (targets[t] >= logits.cols()) throw Error(ErrorKind::invalid_argument, "target label out of range");
    const auto x = logits.row(t);
    loss += log_sum_exp(x) - x[targets[t]];
  }
  return loss;
}

LossAndGradient grad_masked_nll(const ToyEncoder& enc, const Matrix& visual, const Matrix& audio,
                                std::span<const std::size_t> targets, const MaskSpec& mask, DropoutState dropout) {
  const Matrix fused = corrupted_features(enc, visual, audio, mask, dropout);
  const std::size_t n = fused.rows();
  if (targets.size() != n) throw Error(ErrorKind::dimension_mismatch, "targets length != frames");
  const auto idx = mask.union_indices();
  if (idx.empty()) throw Error(ErrorKind::invalid_argument, "mask union is empty");

  const auto& s = enc.shape;
  const std::size_t df = s.feature_dim;
  const std::size_t c_count = s.codebook_size;
  const auto w = static_cast<long>(s.context);
  const bool vis = keeps_visual(dropout), aud = keeps_audio(dropout);
  const auto& p = enc.params;

  LossAndGradient out;
  out.gradient = EncoderParams::zeros(s);
  auto& g = out.gradient;
  out.masked_frames = idx.size();
  Matrix d_fused(n, 2 * df);
  std::vector<double> logits(c_count), delta(c_count);

  for (std::size_t t : idx) {
    if (targets[t] >= c_count) throw Error(ErrorKind::invalid_argument, "target label out of range");
    std::copy(p.predictor_b.begin(), p.predictor_b.end(), logits.begin());
    accumulate_logits(enc, fused, t, vis, aud, logits);
    const double lse = log_sum_exp(logits);
    out.loss += lse - logits[targets[t]];
    for (std::size_t c = 0; c < c_count; ++c) delta[c] = std::exp(logits[c] - lse);
    delta[targets[t]] -= 1.0;

    for (std::size_t c = 0; c < c_count; ++c) g.predictor_b[c] += delta[c];
    for (long k = -w; k <= w; ++k) {
      const long u = static_cast<long>(t) + k;
      if (u < 0 || u >= static_cast<long>(n)) continue;
      const auto f = fused.row(static_cast<std::size_t>(u));
      auto df_row = d_fused.row(static_cast<std::size_t>(u));
      const std::size_t base = static_cast<std::size_t>(k + w) * s.fused_dim();
      const std::size_t lo = vis ? 0 : df, hi = aud ? 2 * df : df;
      for (std::size_t c = 0; c < c_count; ++c) {
        const double dc = delta[c];
        double* gw = g.predictor_w.row(c).data() + base;
        const double* pw = p.predictor_w.row(c).data() + base;
        for (std::size_t j = lo; j < hi; ++j) {
          gw[j] += dc * f[j];
          df_row[j] += pw[j] * dc;
        }
      }
    }
  }

  const auto mv = as_flags(mask.visual, n);
  const auto ma = as_flags(mask.audio, n);
  for (std::size_t t = 0; t < n; ++t) {
    const auto d = d_fused.row(t);
    if (vis) {
      for (std::size_t i = 0; i < df; ++i) {
        if (d[i] == 0.0) continue;
        if (mv[t]) {
          g.visual_mask[i] += d[i];
        } else {
          g.visual_b[i] += d[i];
          auto gw = g.visual_w.row(i);
          const auto x = visual.row(t);
          for (std::size_t j = 0; j < x.size(); ++j) gw[j] += d[i] * x[j];
        }
      }
    }
    if (aud) {
      for (std::size_t i = 0; i < df; ++i) {
        const double di = d[df + i];
        if (di == 0.0) continue;
        if (ma[t]) {
          g.audio_mask[i] += di;
        } else {
          g.audio_b[i] += di;
          auto gw = g.audio_w.row(i);
          const auto x = audio.row(t);
          for (std::size_t j = 0; j < x.size(); ++j) gw[j] += di * x[j];
        }
      }
    }
  }
  return out;
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i-- > 1;) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(0, i)(rng);
    std::swap(order[i], order[j]);
  }
  return order;
}

TrainResult train(ToyEncoder enc, std::span<const TrainingSequence> data, const TrainConfig& cfg,
                  const std::function<void(std::size_t, double)>& on_epoch) {
  if (data.empty()) throw Error(ErrorKind::invalid_argument, "training set is empty");
  if (cfg.batch == 0) throw Error(ErrorKind::invalid_argument, "batch must be >= 1");
  if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr)) throw Error(ErrorKind::invalid_argument, "lr must be finite and >= 0");
  for (const auto& seq : data) {
    check_inputs(enc, seq.visual, seq.audio);
    if (seq.targets.size() != seq.visual.rows()) throw Error(ErrorKind::dimension_mismatch, "targets length");
  }

  std::mt19937_64 rng(cfg.seed);
  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled_order(data.size(), rng);
    double epoch_loss = 0.0;
    std::size_t epoch_frames = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch);
      EncoderParams grad = EncoderParams::zeros(enc.shape);
      std::size_t frames = 0;
      for (std::size_t b = start; b < stop; ++b) {
        const auto& seq = data[order[b]];
        const MaskSpec mask = sample_mask(seq.visual.rows(), cfg.mask_prob, cfg.span_len, rng);
        const DropoutState drop = sample_dropout(cfg.dropout, rng);
        if (mask.union_indices().empty()) continue;
        auto lg = grad_masked_nll(enc, seq.visual, seq.audio, seq.targets, mask, drop);
        epoch_loss += lg.loss;
        frames += lg.masked_frames;
        std::vector<std::span<double>> dst;
        grad.for_each_block([&](std::span<double> blk) { dst.push_back(blk); });
        std::size_t i = 0;
        lg.gradient.for_each_block([&](std::span<const double> blk) {
          for (std::size_t j = 0; j < blk.size(); ++j) dst[i][j] += blk[j];
          ++i;
        });
      }
      if (!std::isfinite(epoch_loss)) {
        throw Error(ErrorKind::divergence, "loss is not finite in epoch " + std::to_string(epoch + 1) +
                                               " (lr=" + std::to_string(cfg.lr) + ")");
      }
      if (frames == 0) continue;
      epoch_frames += frames;
      const double step = cfg.lr / static_cast<double>(frames);
      std::vector<std::span<const double>> src;
      grad.for_each_block([&](std::span<const double> blk) { src.push_back(blk); });
      std::size_t i = 0;
      enc.params.for_each_block([&](std::span<double> blk) {
        for (std::size_t j = 0; j < blk.size(); ++j) blk[j] -= step * src[i][j];
        ++i;
      });
    }
    const double mean = epoch_frames ? epoch_loss / static_cast<double>(epoch_frames) : 0.0;
    if (!std::isfinite(mean) || !all_finite(enc.params.predictor_w.data())) {
      throw Error(ErrorKind::divergence, "training diverged in epoch " + std::to_string(epoch + 1));
    }
    result.epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch + 1, mean);
  }
  result.encoder = std::move(enc);
  return result;
}

EmbeddingSequence embed(const ToyEncoder& enc, const Matrix& obs, Modality modality, double fps) {
  EmbeddingSequence out;
  out.modality = modality;
  out.fps = fps;
  if (modality == Modality::visual) {
    const Matrix silent(obs.rows(), enc.shape.audio_dim);
    out.data = softmax_rows(forward(enc, obs, silent, MaskSpec::none(), DropoutState::visual_only));
  } else if (modality == Modality::audio) {
    const Matrix blank(obs.rows(), enc.shape.visual_dim);
    out.data = softmax_rows(forward(enc, blank, obs, MaskSpec::none(), DropoutState::audio_only));
  } else {
    throw Error(ErrorKind::invalid_argument, "embed takes a single modality");
  }
  return out;
}

Matrix fused_features(const ToyEncoder& enc, const Matrix& visual, const Matrix& audio) {
  return corrupted_features(enc, visual, audio, MaskSpec::none(), DropoutState::both);
}

void write_encoder(const ToyEncoder& enc, const std::filesystem::path& dest) {
  std::vector<std::uint8_t> out(kEncoderMagic, kEncoderMagic + 4);
  auto u32 = [&](std::uint64_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  u32(1);
  const auto& s = enc.shape;
  for (std::size_t v : {s.visual_dim, s.audio_dim, s.feature_dim, s.context, s.codebook_size}) u32(v);
  enc.params.for_each_block([&](std::span<const double> blk) {
    for (double v : blk) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  });
  write_file_bytes(dest, out);
}

ToyEncoder read_encoder(const std::filesystem::path& src) {
  const auto bytes = read_file_bytes(src);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kEncoderMagic, 4) != 0) {
    throw Error(ErrorKind::bad_magic, "expected AVSE");
  }
  if (bytes.size() < 28) throw Error(ErrorKind::truncated, "encoder header");
  auto u32 = [&](std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
    return v;
  };
  if (u32(4) != 1) throw Error(ErrorKind::unsupported_version, "AVSE version " + std::to_string(u32(4)));
  EncoderShape s{u32(8), u32(12), u32(16), u32(20), u32(24)};
  s.validate();
  ToyEncoder enc{s, EncoderParams::zeros(s)};
  if (bytes.size() != 28 + enc.params.size() * 8) throw Error(ErrorKind::truncated, "encoder payload size");
  std::size_t pos = 28;
  enc.params.for_each_block([&](std::span<double> blk) {
    for (double& v : blk) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[pos + b]) << (8 * b);
      v = std::bit_cast<double>(bits);
      pos += 8;
    }
  });
  bool finite = true;
  enc.params.for_each_block([&](std::span<const double> blk) { finite = finite && all_finite(blk); });
  if (!finite) throw Error(ErrorKind::non_finite, "encoder weights");
  return enc;
}

}  // namespace avsf
