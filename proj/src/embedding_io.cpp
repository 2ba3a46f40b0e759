#include "avsf/embedding_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "avsf/error.hpp"

namespace avsf {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

float get_f32(const std::uint8_t* p) { return std::bit_cast<float>(get_u32(p)); }

}  // namespace

const char* to_string(Modality m) {
  switch (m) {
    case Modality::visual: return "visual";
    case Modality::audio: return "audio";
    case Modality::fused: return "fused";
  }
  return "?";
}

Modality parse_modality(const std::string& s) {
  if (s == "visual") return Modality::visual;
  if (s == "audio") return Modality::audio;
  if (s == "fused") return Modality::fused;
  throw Error(ErrorKind::invalid_argument, "unknown modality '" + s + "'");
}

void EmbeddingSequence::validate() const {
  if (dim() == 0) throw Error(ErrorKind::invalid_argument, "embedding dim must be >= 1");
  if (frames() == 0) throw Error(ErrorKind::invalid_argument, "embedding needs at least one frame");
  if (!(fps > 0.0) || !std::isfinite(fps)) throw Error(ErrorKind::invalid_argument, "fps must be positive");
  if (!all_finite(data.data())) throw Error(ErrorKind::non_finite, "embedding contains NaN or Inf");
}

EmbeddingSequence EmbeddingSequence::truncated(std::size_t n) const {
  n = std::clamp<std::size_t>(n, 1, frames());
  return EmbeddingSequence{modality, fps, data.head_rows(n)};
}

std::vector<std::uint8_t> encode_embeddings(const EmbeddingSequence& seq) {
  seq.validate();
  std::vector<std::uint8_t> out;
  out.reserve(kEmbeddingHeaderBytes + seq.data.data().size() * 4);
  out.insert(out.end(), kEmbeddingMagic, kEmbeddingMagic + 4);
  put_u32(out, kEmbeddingVersion);
  out.push_back(static_cast<std::uint8_t>(seq.modality));
  out.insert(out.end(), 3, 0);
  put_u32(out, static_cast<std::uint32_t>(seq.dim()));
  put_u64(out, seq.frames());
  put_f32(out, static_cast<float>(seq.fps));
  for (double v : seq.data.data()) {
    const float f = static_cast<float>(v);
    if (!std::isfinite(f)) throw Error(ErrorKind::non_finite, "value overflows f32");
    put_f32(out, f);
  }
  return out;
}

EmbeddingSequence decode_embeddings(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kEmbeddingMagic, 4) != 0) {
    throw Error(ErrorKind::bad_magic, "expected AVSF");
  }
  if (bytes.size() < kEmbeddingHeaderBytes) throw Error(ErrorKind::truncated, "header shorter than 28 bytes");
  const std::uint8_t* p = bytes.data();
  const std::uint32_t version = get_u32(p + 4);
  if (version != kEmbeddingVersion) {
    throw Error(ErrorKind::unsupported_version, "AVSF version " + std::to_string(version));
  }
  if (p[8] > 2) throw Error(ErrorKind::format, "modality byte " + std::to_string(p[8]));
  if (p[9] != 0 || p[10] != 0 || p[11] != 0) throw Error(ErrorKind::format, "reserved bytes not zero");
  const std::uint32_t dim = get_u32(p + 12);
  const std::uint64_t frames = get_u64(p + 16);
  const float fps = get_f32(p + 24);
  if (dim == 0 || frames == 0) throw Error(ErrorKind::format, "zero dim or frame count");
  if (!(fps > 0.0f) || !std::isfinite(fps)) throw Error(ErrorKind::format, "fps must be positive");

  const std::uint64_t payload = bytes.size() - kEmbeddingHeaderBytes;
  if (frames > payload / 4 / dim || frames * dim * 4 > payload) {
    throw Error(ErrorKind::truncated,
                "declared " + std::to_string(frames) + " frames of dim " + std::to_string(dim) +
                    ", payload holds " + std::to_string(payload / 4) + " values");
  }
  if (frames * dim * 4 != payload) throw Error(ErrorKind::format, "trailing bytes after payload");

  EmbeddingSequence seq;
  seq.modality = static_cast<Modality>(p[8]);
  seq.fps = fps;
  std::vector<double> values(frames * dim);
  const std::uint8_t* q = p + kEmbeddingHeaderBytes;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = get_f32(q + 4 * i);
    if (!std::isfinite(f)) throw Error(ErrorKind::non_finite, "payload value " + std::to_string(i));
    values[i] = f;
  }
  seq.data = Matrix(frames, dim, std::move(values));
  return seq;
}

void write_embeddings(const EmbeddingSequence& seq, const std::filesystem::path& dest) {
  write_file_bytes(dest, encode_embeddings(seq));
}

EmbeddingSequence read_embeddings(const std::filesystem::path& src) {
  return decode_embeddings(read_file_bytes(src));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& src) {
  std::ifstream in(src, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + src.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorKind::io, "read failed: " + src.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& dest, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(dest, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot open for writing " + dest.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::io, "write failed: " + dest.string());
}

void write_text_file(const std::filesystem::path& dest, const std::string& text) {
  std::ofstream out(dest, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot open for writing " + dest.string());
  out << text;
  if (!out) throw Error(ErrorKind::io, "write failed: " + dest.string());
}

AudioWaveform read_wav(const std::filesystem::path& src) {
  const auto bytes = read_file_bytes(src);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorKind::unsupported_format, src.string() + " is not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  AudioWaveform wave;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = get_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + 16 > bytes.size()) throw Error(ErrorKind::truncated, "fmt chunk");
      const std::uint16_t format = get_u16(bytes.data() + body);
      const std::uint16_t channels = get_u16(bytes.data() + body + 2);
      const std::uint32_t rate = get_u32(bytes.data() + body + 4);
      const std::uint16_t bits = get_u16(bytes.data() + body + 14);
      if (format != 1) throw Error(ErrorKind::unsupported_format, "WAV is not PCM");
      if (channels != 1) throw Error(ErrorKind::unsupported_format, "WAV is not mono");
      if (bits != 16) throw Error(ErrorKind::unsupported_format, "WAV is not 16-bit");
      if (rate == 0) throw Error(ErrorKind::unsupported_format, "zero sample rate");
      wave.sample_rate = rate;
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw Error(ErrorKind::unsupported_format, "data chunk before fmt chunk");
      if (body + size > bytes.size()) throw Error(ErrorKind::truncated, "data chunk");
      wave.samples.resize(size / 2);
      for (std::size_t i = 0; i < wave.samples.size(); ++i) {
        const auto s = static_cast<std::int16_t>(get_u16(bytes.data() + body + 2 * i));
        wave.samples[i] = static_cast<double>(s) / 32768.0;
      }
      return wave;
    }
    pos = body + size + (size & 1u);
  }
  throw Error(ErrorKind::unsupported_format, src.string() + " has no data chunk");
}

void write_wav(const AudioWaveform& wave, const std::filesystem::path& dest) {
  const auto rate = static_cast<std::uint32_t>(std::lround(wave.sample_rate));
  const auto data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  std::vector<std::uint8_t> out;
  auto tag = [&](const char* t) { out.insert(out.end(), t, t + 4); };
  auto u16 = [&](std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  tag("RIFF");
  put_u32(out, 36 + data_bytes);
  tag("WAVE");
  tag("fmt ");
  put_u32(out, 16);
  u16(1);
  u16(1);
  put_u32(out, rate);
  put_u32(out, rate * 2);
  u16(2);
  u16(16);
  tag("data");
  put_u32(out, data_bytes);
  for (double s : wave.samples) {
    const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  write_file_bytes(dest, out);
}

const char* to_string(Label l) { return l == Label::real ? "real" : "fake"; }

Label parse_label(const std::string& s) {
  if (s == "real") return Label::real;
  if (s == "fake") return Label::fake;
  throw Error(ErrorKind::format, "unknown label '" + s + "' (expected real or fake)");
}

std::filesystem::path Manifest::resolve(const std::filesystem::path& p) const {
  if (p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

Manifest parse_manifest(const std::string& jsonl, std::filesystem::path base_dir) {
  static const std::set<std::string> kFields = {"id", "label", "category", "visual_path", "audio_path"};
  Manifest m;
  m.base_dir = std::move(base_dir);
  std::set<std::string> seen;
  std::istringstream in(jsonl);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = "manifest line " + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::format, where + ": " + e.what());
    }
    if (!j.is_object()) throw Error(ErrorKind::format, where + ": not a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (!kFields.contains(key)) throw Error(ErrorKind::format, where + ": unknown field '" + key + "'");
    }
    auto field = [&](const char* name) {
      if (!j.contains(name)) throw Error(ErrorKind::format, where + ": missing field '" + name + "'");
      if (!j[name].is_string()) throw Error(ErrorKind::format, where + ": field '" + name + "' must be a string");
      return j[name].get<std::string>();
    };
    ManifestEntry e;
    e.id = field("id");
    e.label = parse_label(field("label"));
    e.category = field("category");
    e.visual_path = field("visual_path");
    e.audio_path = field("audio_path");
    if (e.id.empty()) throw Error(ErrorKind::format, where + ": empty id");
    if (!seen.insert(e.id).second) throw Error(ErrorKind::format, where + ": duplicate id '" + e.id + "'");
    m.entries.push_back(std::move(e));
  }
  return m;
}

Manifest load_manifest(const std::filesystem::path& src) {
  const auto bytes = read_file_bytes(src);
  return parse_manifest(std::string(bytes.begin(), bytes.end()), src.parent_path());
}

std::string format_manifest_line(const ManifestEntry& e) {
  nlohmann::ordered_json j;
  j["id"] = e.id;
  j["label"] = to_string(e.label);
  j["category"] = e.category;
  j["visual_path"] = e.visual_path.generic_string();
  j["audio_path"] = e.audio_path.generic_string();
  return j.dump();
}

void write_manifest(const Manifest& m, const std::filesystem::path& dest) {
  std::string text;
  for (const auto& e : m.entries) text += format_manifest_line(e) + "\n";
  write_text_file(dest, text);
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, end);
  if (std::isfinite(v) && s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

std::string format_report(const std::vector<ReportRow>& rows) {
  std::string out = "id,score,offset,label,category\n";
  for (const auto& r : rows) {
    if (r.id.find_first_of(",\n") != std::string::npos || r.category.find_first_of(",\n") != std::string::npos) {
      throw Error(ErrorKind::format, "report fields may not contain commas or newlines: " + r.id);
    }
    out += r.id + "," + format_double(r.score) + "," + (r.offset ? std::to_string(*r.offset) : "") + "," +
           to_string(r.label) + "," + r.category + "\n";
  }
  return out;
}

void write_report(const std::vector<ReportRow>& rows, const std::filesystem::path& dest) {
  write_text_file(dest, format_report(rows));
}

std::vector<ReportRow> read_report(const std::filesystem::path& src) {
  const auto bytes = read_file_bytes(src);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  if (!std::getline(in, line) || line != "id,score,offset,label,category") {
    throw Error(ErrorKind::format, src.string() + ": missing report header");
  }
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cells.size() != 5) throw Error(ErrorKind::format, "report row with " + std::to_string(cells.size()) + " cells");
    ReportRow r;
    r.id = cells[0];
    try {
      r.score = std::stod(cells[1]);
      if (!cells[2].empty()) r.offset = std::stoi(cells[2]);
    } catch (const std::exception&) {
      throw Error(ErrorKind::format, "bad number in report row '" + line + "'");
    }
    r.label = parse_label(cells[3]);
    r.category = cells[4];
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace avsf
