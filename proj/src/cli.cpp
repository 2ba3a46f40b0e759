#include "avsf/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "avsf/alignment.hpp"
#include "avsf/audio_features.hpp"
#include "avsf/cluster_targets.hpp"
#include "avsf/detection_eval.hpp"
#include "avsf/embedding_io.hpp"
#include "avsf/error.hpp"
#include "avsf/parallel.hpp"
#include "avsf/pipeline.hpp"
#include "avsf/representation.hpp"
#include "avsf/synthetic.hpp"

namespace avsf::cli {

namespace {

namespace fs = std::filesystem;

enum class LogLevel { error = 0, info = 1, debug = 2 };

struct Globals {
  std::uint64_t seed = 7;
  std::size_t threads = 1;
  std::string log_level = "info";

  LogLevel level() const {
    if (log_level == "error") return LogLevel::error;
    if (log_level == "debug") return LogLevel::debug;
    return LogLevel::info;
  }
};

struct Alignment {
  std::string mode = "fixed";
  int tau = 15;
  std::optional<int> band;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--alignment", mode, "plain | fixed | dtw")->capture_default_str();
    cmd->add_option("--tau", tau, "max offset in frames for fixed alignment")->capture_default_str();
    cmd->add_option("--band", band, "Sakoe-Chiba band half-width for DTW");
  }

  AlignmentConfig config() const {
    AlignmentConfig cfg{parse_alignment_mode(mode), tau, band};
    cfg.validate();
    return cfg;
  }
};

std::size_t default_threads() {
  if (const char* env = std::getenv("AVSF_THREADS")) {
    try {
      const long n = std::stol(env);
      if (n >= 1) return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
    }
  }
  return 1;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw Error(ErrorKind::invalid_argument, "not a number: '" + item + "'");
    }
  }
  return out;
}

fs::path sibling(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out.replace_extension();
  return out.string() + suffix;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Audio-visual speech consistency toolkit for face-forgery detection", "avsf"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  g.threads = default_threads();
  app.add_option("--seed", g.seed, "random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads for manifest-parallel stages (env AVSF_THREADS)")
      ->check(CLI::PositiveNumber);
  app.add_option("--log-level", g.log_level, "error | info | debug")
      ->check(CLI::IsMember({"error", "info", "debug"}))
      ->capture_default_str();

  auto log = [&](LogLevel lvl, const std::string& msg) {
    if (lvl <= g.level()) err << msg << "\n";
  };

  int exit_code = kExitOk;

  // mfcc
  auto* mfcc_cmd = app.add_subcommand("mfcc", "MFCC features of a 16 kHz WAV, stacked to video rate");
  std::string mfcc_in, mfcc_out;
  std::size_t mfcc_stack = 4;
  bool mfcc_no_norm = false;
  mfcc_cmd->add_option("--in", mfcc_in, "16-bit PCM mono WAV")->required();
  mfcc_cmd->add_option("--out", mfcc_out, "output AVSF file")->required();
  mfcc_cmd->add_option("--stack", mfcc_stack, "adjacent 10 ms frames per output frame")->capture_default_str();
  mfcc_cmd->add_flag("--no-normalize", mfcc_no_norm, "skip per-utterance mean/variance normalisation");
  mfcc_cmd->callback([&] {
    const AudioWaveform wave = read_wav(mfcc_in);
    FeatureFrames f = mfcc(wave);
    if (!mfcc_no_norm) normalize_utterance(f);
    f = stack_frames(f, mfcc_stack);
    write_embeddings(EmbeddingSequence{Modality::audio, f.rate_hz, std::move(f.data)}, mfcc_out);
    log(LogLevel::info, "wrote " + mfcc_out);
  });

  // cluster
  auto* cluster_cmd = app.add_subcommand("cluster", "k-means codebook over feature frames");
  std::vector<std::string> cluster_features;
  std::size_t cluster_c = 100, cluster_iter = 100;
  std::string cluster_out, cluster_labels;
  cluster_cmd->add_option("--features", cluster_features, "AVSF feature files")->required();
  cluster_cmd->add_option("--C", cluster_c, "codebook size")->capture_default_str();
  cluster_cmd->add_option("--max-iter", cluster_iter, "Lloyd iterations")->capture_default_str();
  cluster_cmd->add_option("--out", cluster_out, "codebook file (AVSC)")->required();
  cluster_cmd->add_option("--labels-out", cluster_labels, "CSV of per-frame labels");
  cluster_cmd->callback([&] {
    std::vector<EmbeddingSequence> seqs;
    std::size_t rows = 0;
    for (const auto& f : cluster_features) {
      seqs.push_back(read_embeddings(f));
      rows += seqs.back().frames();
      if (seqs.back().dim() != seqs.front().dim()) throw Error(ErrorKind::dimension_mismatch, f);
    }
    Matrix all(rows, seqs.front().dim());
    std::size_t r = 0;
    for (const auto& s : seqs) {
      std::copy(s.data.data().begin(), s.data.data().end(), all.data().begin() + static_cast<std::ptrdiff_t>(r * all.cols()));
      r += s.frames();
    }
    Codebook cb = kmeans_fit(all, cluster_c, g.seed, cluster_iter);
    cb.feature_source = seqs.front().modality == Modality::fused ? FeatureSource::learned : FeatureSource::mfcc;
    write_codebook(cb, cluster_out);
    log(LogLevel::info, "objective " + format_double(cb.objective_trace.back()) + " after " +
                            std::to_string(cb.objective_trace.size()) + " assignment passes");
    if (!cluster_labels.empty()) {
      std::string csv = "file,frame,label\n";
      for (std::size_t i = 0; i < seqs.size(); ++i) {
        const auto labels = assign(cb, seqs[i].data).labels;
        for (std::size_t t = 0; t < labels.size(); ++t) {
          csv += fs::path(cluster_features[i]).filename().string() + "," + std::to_string(t) + "," + std::to_string(labels[t]) + "\n";
        }
      }
      write_text_file(cluster_labels, csv);
    }
  });

  // train-toy
  auto* train_cmd = app.add_subcommand("train-toy", "train the toy masked-prediction encoder on a synthetic world");
  std::string train_world, train_out, train_loss_out;
  ToyPipelineConfig pc;
  train_cmd->add_option("--world", train_world, "world JSON")->required();
  train_cmd->add_option("--C", pc.codebook_size, "codebook size")->capture_default_str();
  train_cmd->add_option("--w", pc.context, "context half-window (0 = frame-local)")->capture_default_str();
  train_cmd->add_option("--epochs", pc.train.epochs, "epochs per round")->capture_default_str();
  train_cmd->add_option("--lr", pc.train.lr, "learning rate")->capture_default_str();
  train_cmd->add_option("--batch", pc.train.batch, "sequences per step")->capture_default_str();
  train_cmd->add_option("--df", pc.feature_dim, "frontend output size")->capture_default_str();
  train_cmd->add_option("--n-train", pc.train_videos, "synthetic training videos")->capture_default_str();
  train_cmd->add_option("--frames", pc.frames, "frames per training video")->capture_default_str();
  train_cmd->add_option("--rounds", pc.rounds, "cluster refinement rounds")->capture_default_str();
  train_cmd->add_option("--mask-prob", pc.train.mask_prob)->capture_default_str();
  train_cmd->add_option("--span-len", pc.train.span_len)->capture_default_str();
  train_cmd->add_option("--out", train_out, "encoder file (AVSE)")->required();
  train_cmd->add_option("--loss-out", train_loss_out, "CSV of round,epoch,loss");
  train_cmd->callback([&] {
    const SyntheticWorld world = load_world(train_world);
    pc.train.seed = g.seed;
    auto res = train_toy_encoder(world, pc, [&](const std::string& m) { log(LogLevel::info, m); });
    write_encoder(res.encoder, train_out);
    if (!train_loss_out.empty()) {
      std::string csv = "round,epoch,loss\n";
      for (std::size_t r = 0; r < res.round_loss.size(); ++r) {
        for (std::size_t e = 0; e < res.round_loss[r].size(); ++e) {
          csv += std::to_string(r) + "," + std::to_string(e + 1) + "," + format_double(res.round_loss[r][e]) + "\n";
        }
      }
      write_text_file(train_loss_out, csv);
    }
  });

  // embed
  auto* embed_cmd = app.add_subcommand("embed", "embed observation files with a trained encoder");
  std::string embed_encoder, embed_in, embed_out, embed_modality = "visual", embed_manifest, embed_out_dir;
  embed_cmd->add_option("--encoder", embed_encoder, "encoder file (AVSE)")->required();
  embed_cmd->add_option("--in", embed_in, "observation AVSF file");
  embed_cmd->add_option("--modality", embed_modality, "visual | audio")->capture_default_str();
  embed_cmd->add_option("--out", embed_out, "output AVSF file");
  embed_cmd->add_option("--manifest", embed_manifest, "embed every entry of a manifest");
  embed_cmd->add_option("--out-dir", embed_out_dir, "output directory for --manifest");
  embed_cmd->callback([&] {
    const ToyEncoder enc = read_encoder(embed_encoder);
    if (!embed_manifest.empty()) {
      if (embed_out_dir.empty()) throw Error(ErrorKind::invalid_argument, "--manifest needs --out-dir");
      const Manifest m = load_manifest(embed_manifest);
      fs::create_directories(embed_out_dir);
      Manifest outm;
      outm.base_dir = embed_out_dir;
      std::vector<std::string> errors(m.entries.size());
      parallel_for(m.entries.size(), g.threads, [&](std::size_t i) {
        const auto& e = m.entries[i];
        try {
          const auto v = read_embeddings(m.resolve(e.visual_path));
          const auto a = read_embeddings(m.resolve(e.audio_path));
          write_embeddings(embed(enc, v.data, Modality::visual, v.fps), fs::path(embed_out_dir) / (e.id + ".v.avsf"));
          write_embeddings(embed(enc, a.data, Modality::audio, a.fps), fs::path(embed_out_dir) / (e.id + ".a.avsf"));
        } catch (const Error& ex) {
          errors[i] = ex.what();
        }
      });
      for (std::size_t i = 0; i < m.entries.size(); ++i) {
        const auto& e = m.entries[i];
        if (!errors[i].empty()) {
          log(LogLevel::error, "skipped " + e.id + ": " + errors[i]);
          exit_code = kExitPartial;
          continue;
        }
        outm.entries.push_back({e.id, e.label, e.category, e.id + ".v.avsf", e.id + ".a.avsf"});
      }
      write_manifest(outm, fs::path(embed_out_dir) / "manifest.jsonl");
      return;
    }
    if (embed_in.empty() || embed_out.empty()) throw Error(ErrorKind::invalid_argument, "need --in and --out");
    const auto obs = read_embeddings(embed_in);
    write_embeddings(embed(enc, obs.data, parse_modality(embed_modality), obs.fps), embed_out);
  });

  // score
  auto* score_cmd = app.add_subcommand("score", "matching score of one visual/audio embedding pair");
  std::string score_visual, score_audio;
  Alignment score_align;
  score_cmd->add_option("--visual", score_visual, "visual AVSF file")->required();
  score_cmd->add_option("--audio", score_audio, "audio AVSF file")->required();
  score_align.add_to(score_cmd);
  score_cmd->callback([&] {
    const auto m = score(read_embeddings(score_visual), read_embeddings(score_audio), score_align.config());
    out << format_double(m.score) << "," << (m.best_offset ? std::to_string(*m.best_offset) : "") << "\n";
  });

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "video-level AUC report over a manifest");
  std::string eval_manifest, eval_out, eval_sweep, eval_scores_out, eval_hist_out;
  Alignment eval_align;
  std::optional<double> eval_clip;
  std::size_t eval_bins = 50;
  eval_cmd->add_option("--manifest", eval_manifest, "JSON-Lines manifest")->required();
  eval_align.add_to(eval_cmd);
  eval_cmd->add_option("--clip-seconds", eval_clip, "truncate videos before scoring");
  eval_cmd->add_option("--sweep", eval_sweep, "tau | clip");
  eval_cmd->add_option("--hist-bins", eval_bins, "score histogram bins over [-1, 1]")->capture_default_str();
  eval_cmd->add_option("--out", eval_out, "report JSON")->required();
  eval_cmd->add_option("--scores-out", eval_scores_out, "per-video CSV (default <out>.scores.csv)");
  eval_cmd->add_option("--hist-out", eval_hist_out, "histogram CSV (default <out>.hist.csv)");
  eval_cmd->callback([&] {
    EvalOptions opts{eval_align.config(), eval_clip, eval_bins, g.threads};
    const EvalReport r = evaluate(load_manifest(eval_manifest), opts, parse_sweep(eval_sweep));
    write_text_file(eval_out, report_to_json(r));
    write_report(report_rows(r.scored), eval_scores_out.empty() ? sibling(eval_out, ".scores.csv") : fs::path(eval_scores_out));
    write_text_file(eval_hist_out.empty() ? sibling(eval_out, ".hist.csv") : fs::path(eval_hist_out), histogram_csv(r.histogram));
    log(LogLevel::info, "AUC " + format_double(r.auc_overall) + " over " + std::to_string(r.n_real) + " real / " +
                            std::to_string(r.n_fake) + " fake");
    for (const auto& s : r.skipped) log(LogLevel::error, "skipped " + s.id + ": " + s.reason);
    if (!r.skipped.empty()) exit_code = kExitPartial;
  });

  // calibrate
  auto* cal_cmd = app.add_subcommand("calibrate", "decision threshold from real-video scores at a target FPR");
  std::string cal_scores;
  double cal_fpr = 0.05;
  cal_cmd->add_option("--scores", cal_scores, "score CSV written by eval")->required();
  cal_cmd->add_option("--fpr", cal_fpr, "target false-positive rate on real videos")->capture_default_str();
  cal_cmd->callback([&] {
    std::vector<double> reals;
    for (const auto& row : read_report(cal_scores)) {
      if (row.label == Label::real) reals.push_back(row.score);
    }
    out << format_double(calibrate_threshold(reals, cal_fpr)) << "\n";
  });

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate the synthetic benchmark");
  std::string synth_config, synth_out, synth_encoder;
  std::string synth_sizes = "real=200,swap=200,lipsync=200,offset_fixed=200,offset_dynamic=200";
  std::size_t synth_frames = 400;
  synth_cmd->add_option("--config", synth_config, "world JSON (defaults when omitted)");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--sizes", synth_sizes, "videos per category")->capture_default_str();
  synth_cmd->add_option("--frames", synth_frames, "frames per video")->capture_default_str();
  synth_cmd->add_option("--encoder", synth_encoder, "write learned embeddings instead of observations");
  synth_cmd->callback([&] {
    SyntheticWorld world = synth_config.empty() ? make_world(WorldParams{}) : load_world(synth_config);
    BenchmarkOptions opts;
    opts.frames = synth_frames;
    opts.seed = g.seed;
    if (!synth_encoder.empty()) opts.encoder = read_encoder(synth_encoder);
    const Manifest m = build_benchmark(world, parse_sizes(synth_sizes), synth_out, opts);
    log(LogLevel::info, "wrote " + std::to_string(m.entries.size()) + " videos to " + synth_out);
  });

  // robustness
  auto* rob_cmd = app.add_subcommand("robustness", "AUC under increasing visual embedding noise");
  std::string rob_manifest, rob_levels = "0,0.1,0.2,0.4,0.8", rob_out;
  Alignment rob_align;
  rob_cmd->add_option("--manifest", rob_manifest, "JSON-Lines manifest")->required();
  rob_align.add_to(rob_cmd);
  rob_cmd->add_option("--levels", rob_levels, "noise standard deviations")->capture_default_str();
  rob_cmd->add_option("--out", rob_out, "JSON output");
  rob_cmd->callback([&] {
    EvalOptions opts{rob_align.config(), std::nullopt, 50, g.threads};
    const auto data = load_dataset(load_manifest(rob_manifest), g.threads);
    const auto levels = parse_list(rob_levels);
    const auto res = robustness_sweep(data, opts, levels, g.seed);
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    out << "sigma,auc\n";
    for (const auto& [sigma, a] : res) {
      out << format_double(sigma) << "," << format_double(a) << "\n";
      j.push_back({{"sigma", sigma}, {"auc", a}});
    }
    if (!rob_out.empty()) write_text_file(rob_out, j.dump(2) + "\n");
    for (const auto& s : data.skipped) log(LogLevel::error, "skipped " + s.id + ": " + s.reason);
    if (!data.skipped.empty()) exit_code = kExitPartial;
  });

  std::vector<std::string> argv_store{"avsf"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  return exit_code;
}

}  // namespace avsf::cli
