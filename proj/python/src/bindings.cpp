#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "avsf/alignment.hpp"
#include "avsf/audio_features.hpp"
#include "avsf/cli.hpp"
#include "avsf/cluster_targets.hpp"
#include "avsf/detection_eval.hpp"
#include "avsf/embedding_io.hpp"
#include "avsf/error.hpp"
#include "avsf/pipeline.hpp"
#include "avsf/representation.hpp"
#include "avsf/synthetic.hpp"

namespace py = pybind11;
using namespace avsf;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.data().begin());
  return m;
}

Array to_array(const Matrix& m) {
  Array a({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), a.mutable_data());
  return a;
}

py::dict match_to_dict(const MatchResult& r) {
  py::dict d;
  d["score"] = r.score;
  d["offset"] = r.best_offset ? py::cast(*r.best_offset) : py::none();
  d["path"] = r.path ? py::cast(*r.path) : py::none();
  return d;
}

AlignmentConfig alignment(const std::string& mode, int tau, std::optional<int> band) {
  AlignmentConfig cfg{parse_alignment_mode(mode), tau, band};
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_avsf, m) {
  m.doc() = "Audio-visual speech consistency scoring for face-forgery detection";

  py::register_exception<Error>(m, "AvsfError", PyExc_RuntimeError);

  m.def(
      "read_embeddings",
      [](const std::filesystem::path& p) {
        const auto s = read_embeddings(p);
        return py::make_tuple(to_array(s.data), to_string(s.modality), s.fps);
      },
      py::arg("path"), "Read an AVSF file; returns (frames x dim array, modality, fps).");
  m.def(
      "write_embeddings",
      [](const std::filesystem::path& p, const Array& data, const std::string& modality, double fps) {
        write_embeddings(EmbeddingSequence{parse_modality(modality), fps, to_matrix(data)}, p);
      },
      py::arg("path"), py::arg("data"), py::arg("modality") = "visual", py::arg("fps") = 25.0);

  m.def(
      "read_wav",
      [](const std::filesystem::path& p) {
        const auto w = read_wav(p);
        return py::make_tuple(py::array_t<double>(static_cast<py::ssize_t>(w.samples.size()), w.samples.data()),
                              w.sample_rate);
      },
      py::arg("path"), "Read 16-bit PCM mono WAV; returns (samples in [-1, 1], sample_rate).");

  m.def(
      "mfcc",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& samples, double sample_rate,
         std::size_t stack, bool normalize) {
        AudioWaveform w;
        w.sample_rate = sample_rate;
        w.samples.assign(samples.data(), samples.data() + samples.size());
        MfccConfig cfg;
        cfg.sample_rate = sample_rate;
        FeatureFrames f = mfcc(w, cfg);
        if (normalize) normalize_utterance(f);
        if (stack > 1) f = stack_frames(f, stack);
        return to_array(f.data);
      },
      py::arg("samples"), py::arg("sample_rate") = 16000.0, py::arg("stack") = 1, py::arg("normalize") = false);

  m.def(
      "kmeans_fit",
      [](const Array& x, std::size_t k, std::uint64_t seed, std::size_t max_iter) {
        const auto cb = kmeans_fit(to_matrix(x), k, seed, max_iter);
        return py::make_tuple(to_array(cb.centroids), cb.objective_trace);
      },
      py::arg("features"), py::arg("k"), py::arg("seed") = 7, py::arg("max_iter") = 100);
  m.def(
      "assign",
      [](const Array& centroids, const Array& x) {
        Codebook cb;
        cb.centroids = to_matrix(centroids);
        return assign(cb, to_matrix(x)).labels;
      },
      py::arg("centroids"), py::arg("features"));

  m.def("cosine", [](const std::vector<double>& u, const std::vector<double>& v) { return cosine(u, v); });
  m.def(
      "score",
      [](const Array& v, const Array& a, const std::string& mode, int tau, std::optional<int> band) {
        return match_to_dict(score(EmbeddingSequence{Modality::visual, 25.0, to_matrix(v)},
                                   EmbeddingSequence{Modality::audio, 25.0, to_matrix(a)}, alignment(mode, tau, band)));
      },
      py::arg("visual"), py::arg("audio"), py::arg("alignment") = "fixed", py::arg("tau") = 15,
      py::arg("band") = std::nullopt);

  m.def(
      "auc", [](const std::vector<double>& r, const std::vector<double>& f) { return auc(r, f); }, py::arg("real"),
      py::arg("fake"));
  m.def(
      "calibrate_threshold",
      [](const std::vector<double>& r, double fpr) { return calibrate_threshold(r, fpr); }, py::arg("real_scores"),
      py::arg("target_fpr"));

  m.def(
      "build_benchmark",
      [](const std::filesystem::path& out_dir, const std::string& sizes, std::uint64_t seed, std::size_t frames,
         std::optional<std::filesystem::path> world) {
        const SyntheticWorld w = world ? load_world(*world) : make_world(WorldParams{});
        BenchmarkOptions opts;
        opts.seed = seed;
        opts.frames = frames;
        return build_benchmark(w, parse_sizes(sizes), out_dir, opts).entries.size();
      },
      py::arg("out_dir"), py::arg("sizes") = "real=200,swap=200,lipsync=200,offset_fixed=200,offset_dynamic=200",
      py::arg("seed") = 7, py::arg("frames") = 400, py::arg("world") = std::nullopt,
      "Write a synthetic benchmark; returns the number of videos.");

  m.def(
      "evaluate",
      [](const std::filesystem::path& manifest, const std::string& mode, int tau, std::optional<int> band,
         std::optional<double> clip_seconds, std::size_t threads) {
        EvalOptions opts{alignment(mode, tau, band), clip_seconds, 50, threads};
        return report_to_json(evaluate(load_manifest(manifest), opts));
      },
      py::arg("manifest"), py::arg("alignment") = "fixed", py::arg("tau") = 15, py::arg("band") = std::nullopt,
      py::arg("clip_seconds") = std::nullopt, py::arg("threads") = 1, "Evaluate a manifest; returns report JSON text.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run the avsf command line in-process; returns (exit_code, stdout, stderr).");
}
