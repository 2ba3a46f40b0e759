#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "avsf/matrix.hpp"

namespace avsf {

enum class Modality : std::uint8_t { visual = 0, audio = 1, fused = 2 };

const char* to_string(Modality m);
Modality parse_modality(const std::string& s);

// Per-frame speech representations of one modality, time-major.
// Stored as f32 on disk and widened to f64 here.
struct EmbeddingSequence {
  Modality modality = Modality::visual;
  double fps = 25.0;
  Matrix data;  // frames x dim

  std::size_t frames() const noexcept { return data.rows(); }
  std::size_t dim() const noexcept { return data.cols(); }

  // Throws unless dim >= 1, frames >= 1, fps > 0 and every entry is finite.
  void validate() const;

  // Leading n frames; n is clamped to [1, frames()].
  EmbeddingSequence truncated(std::size_t n) const;

  bool operator==(const EmbeddingSequence&) const = default;
};

inline constexpr char kEmbeddingMagic[4] = {'A', 'V', 'S', 'F'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;
inline constexpr std::size_t kEmbeddingHeaderBytes = 28;  // includes fps

std::vector<std::uint8_t> encode_embeddings(const EmbeddingSequence& seq);
EmbeddingSequence decode_embeddings(const std::vector<std::uint8_t>& bytes);

void write_embeddings(const EmbeddingSequence& seq, const std::filesystem::path& dest);
EmbeddingSequence read_embeddings(const std::filesystem::path& src);

struct AudioWaveform {
  double sample_rate = 16000.0;
  std::vector<double> samples;

  double duration_seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

// 16-bit PCM mono only; samples are divided by 32768.
AudioWaveform read_wav(const std::filesystem::path& src);
// Writes 16-bit PCM mono, clipping to [-1, 32767/32768].
void write_wav(const AudioWaveform& wave, const std::filesystem::path& dest);

enum class Label { real, fake };
const char* to_string(Label l);
Label parse_label(const std::string& s);

struct ManifestEntry {
  std::string id;
  Label label = Label::real;
  std::string category;
  std::filesystem::path visual_path;
  std::filesystem::path audio_path;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  // Directory relative paths are resolved against; empty means cwd.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

Manifest parse_manifest(const std::string& jsonl, std::filesystem::path base_dir = {});
Manifest load_manifest(const std::filesystem::path& src);
std::string format_manifest_line(const ManifestEntry& e);
void write_manifest(const Manifest& m, const std::filesystem::path& dest);

struct ReportRow {
  std::string id;
  double score = 0.0;
  std::optional<int> offset;
  Label label = Label::real;
  std::string category;
};

// CSV `id,score,offset,label,category`, rows in the given order.
std::string format_report(const std::vector<ReportRow>& rows);
void write_report(const std::vector<ReportRow>& rows, const std::filesystem::path& dest);
std::vector<ReportRow> read_report(const std::filesystem::path& src);

// Shortest round-trip decimal; integral values keep a trailing ".0".
std::string format_double(double v);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& src);
void write_file_bytes(const std::filesystem::path& dest, const std::vector<std::uint8_t>& bytes);
void write_text_file(const std::filesystem::path& dest, const std::string& text);

}  // namespace avsf
