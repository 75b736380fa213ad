#include "cli.hpp"

#include "multilat/bench.hpp"
#include "multilat/denoise.hpp"
#include "multilat/estimators.hpp"
#include "multilat/io.hpp"
#include "multilat/simulate.hpp"
#include "multilat/tdoa.hpp"
#include "multilat/wav.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <vector>

namespace multilat::cli {
namespace {

namespace fs = std::filesystem;

// Carries an exit code through to the top-level handler.
struct Failure {
  int code;
  std::string message;
};

constexpr const char* kRdConvention =
    "RD CSV convention: row m, column m' holds d(m,m') = D(m') - D(m), the distance from "
    "microphone m' to the source minus the distance from microphone m.";

bool on_off(const std::string& value) { return value == "on"; }

double array_diameter(const std::vector<Point3>& mics) {
  double d = 0.0;
  for (std::size_t i = 0; i < mics.size(); ++i) {
    for (std::size_t j = i + 1; j < mics.size(); ++j) d = std::max(d, (mics[i] - mics[j]).norm());
  }
  return d;
}

std::string format_point(const Point3& p) {
  return format_shortest(p.x()) + " " + format_shortest(p.y()) + " " + format_shortest(p.z());
}

std::optional<unsigned> threads_from_env() {
  const char* env = std::getenv("MULTILAT_THREADS");
  if (!env || !*env) return std::nullopt;
  try {
    const long v = std::stol(env);
    if (v < 0) throw Failure{kExitUsage, "MULTILAT_THREADS must be >= 0"};
    return static_cast<unsigned>(v);
  } catch (const std::logic_error&) {
    throw Failure{kExitUsage, "MULTILAT_THREADS is not a number"};
  }
}

struct LocalizeArgs {
  std::string scene;
  std::string rd;
  std::vector<std::string> wav;
  std::string method = "srd-ls";
  std::string ref = "nearest-barycenter";
  std::string vad = "on";
  std::string denoise = "off";
  std::optional<double> sound_speed;
  std::uint64_t seed = 0;
  double frame_duration = 0.064;
  double overlap = 0.5;
};

int cmd_localize(const LocalizeArgs& a, std::ostream& out) {
  SceneFile scene = read_scene_file(a.scene);
  if (a.sound_speed) scene.sound_speed = *a.sound_speed;
  const Method method = parse_method(a.method);
  const ReferencePolicy policy = parse_reference_policy(a.ref);
  validate_mics(scene.mics, 2);

  RdMatrix rd;
  std::optional<std::vector<double>> energies;
  if (!a.rd.empty()) {
    rd.values = read_matrix_csv(fs::path(a.rd));
    if (rd.values.rows() != rd.values.cols() || rd.mic_count() != scene.mics.size()) {
      throw InputError("RD matrix is " + std::to_string(rd.values.rows()) + "x" +
                       std::to_string(rd.values.cols()) + " but the scene has " +
                       std::to_string(scene.mics.size()) + " microphones");
    }
    if (rd.antisymmetry_error() > 1e-9) throw InputError("RD matrix is not antisymmetric");
  } else {
    std::vector<fs::path> paths(a.wav.begin(), a.wav.end());
    const MicSignals signals = load_mic_signals(paths);
    if (signals.channel_count() != scene.mics.size()) {
      throw InputError("got " + std::to_string(signals.channel_count()) + " channels for " +
                       std::to_string(scene.mics.size()) + " microphones");
    }
    FrameConfig frames{signals.sample_rate, a.frame_duration, a.overlap};
    TdoaOptions opts;
    opts.vad = on_off(a.vad);
    opts.sound_speed = scene.sound_speed;
    opts.max_distance_m = array_diameter(scene.mics);
    const TdoaMatrix tdoa = estimate_tdoa_matrix(signals, frames, opts);
    if (!tdoa.all_valid()) throw Failure{kExitDegenerate, "no frames survived for some microphone pair"};
    rd = tdoa.to_rd(scene.sound_speed);
    energies = channel_energies(signals);
  }
  if (on_off(a.denoise)) rd = tdoa_average(rd);

  std::size_t reference = 0;
  const MethodSpec spec{method, policy};
  if (spec.uses_reference()) {
    if (policy.needs_energy()) {
      if (!energies) throw InputError("energy-based reference policies need WAV input");
      reference = select_reference_from_energies(*energies, policy);
    } else {
      reference = select_reference(scene.mics, policy);
    }
  }

  const LocalizationResult res = localize(method, rd, scene.mics, reference);
  if (!is_success(res.status)) {
    throw Failure{kExitDegenerate, std::string(to_string(res.status)) + ": " + res.diagnostic};
  }

  out << "method: " << to_string(spec) << '\n';
  if (spec.uses_reference()) out << "reference: " << reference << '\n';
  out << "status: " << to_string(res.status) << '\n';
  out << "position: " << format_point(res.position) << '\n';
  out << "residual: " << format_shortest(res.residual) << '\n';
  if (scene.source) {
    out << "position_error_m: " << format_shortest((res.position - *scene.source).norm()) << '\n';
  }
  return kExitOk;
}

struct TdoaArgs {
  std::vector<std::string> wav;
  std::string scene;
  std::optional<double> max_distance;
  double sound_speed = kDefaultSoundSpeed;
  std::string vad = "on";
  std::string vad_rule = "split_energy";
  bool no_interpolate = false;
  double frame_duration = 0.064;
  double overlap = 0.5;
  std::string out_tdoa = "tdoa.csv";
  std::string out_rd = "rd.csv";
};

int cmd_tdoa(const TdoaArgs& a, std::ostream& out) {
  std::vector<fs::path> paths(a.wav.begin(), a.wav.end());
  const MicSignals signals = load_mic_signals(paths);
  if (signals.channel_count() < 2) {
    throw InputError("need at least 2 channels, got " + std::to_string(signals.channel_count()));
  }
  TdoaOptions opts;
  opts.vad = on_off(a.vad);
  opts.vad_rule = a.vad_rule == "summed_waveform" ? VadRule::summed_waveform : VadRule::split_energy;
  opts.interpolate = !a.no_interpolate;
  opts.sound_speed = a.sound_speed;
  if (a.max_distance) {
    opts.max_distance_m = *a.max_distance;
  } else if (!a.scene.empty()) {
    const SceneFile scene = read_scene_file(a.scene);
    if (scene.mics.size() != signals.channel_count()) {
      throw InputError("scene microphone count does not match the channel count");
    }
    opts.max_distance_m = array_diameter(scene.mics);
  }
  FrameConfig frames{signals.sample_rate, a.frame_duration, a.overlap};
  const TdoaMatrix tdoa = estimate_tdoa_matrix(signals, frames, opts);
  write_matrix_csv(fs::path(a.out_tdoa), tdoa.values);
  write_matrix_csv(fs::path(a.out_rd), tdoa.to_rd(a.sound_speed).values);
  out << "channels: " << signals.channel_count() << '\n';
  out << "tdoa_csv: " << a.out_tdoa << '\n';
  out << "rd_csv: " << a.out_rd << '\n';
  if (!tdoa.all_valid()) out << "warning: some pairs had no surviving frames (written as nan)\n";
  return kExitOk;
}

struct BenchArgs {
  std::string config;
  std::string out_dir = ".";
  std::optional<unsigned> threads;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  BenchmarkConfig config = parse_benchmark_config(read_text_file(a.config));
  if (a.threads) {
    config.threads = *a.threads;
  } else if (auto env = threads_from_env()) {
    config.threads = *env;
  }

  const auto start = std::chrono::steady_clock::now();
  const auto records = run_benchmark(config);
  const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "records.csv", std::ios::binary);
    write_records_csv(f, records);
  }
  const auto summary = summarize(records);
  {
    std::ofstream f(dir / "summary.csv", std::ios::binary);
    write_summary_csv(f, summary);
  }
  {
    std::ofstream f(dir / "histogram.csv", std::ios::binary);
    write_histogram_csv(f, histogram(records, config.histogram_bins));
  }
  out << "cells: " << summary.size() << '\n';
  out << "records: " << records.size() << '\n';
  out << "elapsed_s: " << format_significant(elapsed, 4) << '\n';
  return kExitOk;
}

struct SimulateArgs {
  std::string scene;
  std::string out_wav;
  std::string out_rd;
  std::string format = "float32";
  double duration = 2.0;
  double sample_rate = 16000.0;
  std::string snr = "30";
  std::string gain_law = "inverse_distance";
  std::string source_wav;
  double rd_sigma = 0.0;
  std::uint64_t seed = 0;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  const Scene scene = read_scene_file(a.scene).scene();
  if (a.out_wav.empty() && a.out_rd.empty()) throw InputError("nothing to do: give --out-wav and/or --out-rd");
  if (!a.out_rd.empty()) {
    RdNoiseModel noise;
    noise.sigma = a.rd_sigma;
    noise.seed = a.seed;
    write_matrix_csv(fs::path(a.out_rd), perturb_rd(true_rd_full(scene), noise).values);
    out << "rd_csv: " << a.out_rd << '\n';
  }
  if (!a.out_wav.empty()) {
    SignalModel model;
    model.gain_law = parse_gain_law(a.gain_law);
    model.snr_db = a.snr == "off" ? std::nullopt : std::optional<double>(parse_double(a.snr));
    model.seed = a.seed;
    if (!a.source_wav.empty()) {
      const WavData src = read_wav(a.source_wav);
      if (src.sample_rate != a.sample_rate) throw InputError("source WAV sample rate does not match --sample-rate");
      model.source_samples = src.channels.front();
    }
    const MicSignals signals = synth_signals(scene, model, a.duration, a.sample_rate);
    write_wav(a.out_wav, WavData{signals.sample_rate, signals.channels},
              a.format == "pcm16" ? WavFormat::pcm16 : WavFormat::float32);
    out << "wav: " << a.out_wav << " (" << signals.channel_count() << " channels)\n";
  }
  return kExitOk;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multilateration toolkit: TDOA estimation, least-squares source localization and "
               "Monte Carlo benchmarking."};
  app.require_subcommand(1);
  app.footer(kRdConvention);

  LocalizeArgs loc;
  auto* localize = app.add_subcommand("localize", "Estimate the source position from an RD matrix or WAV input");
  localize->add_option("--scene", loc.scene, "Scene JSON file (mics, optional source, sound_speed)")->required();
  auto* rd_opt = localize->add_option("--rd", loc.rd, "M x M RD matrix CSV in meters");
  auto* wav_opt = localize->add_option("--wav", loc.wav, "WAV input: one multichannel file or one mono file per mic");
  rd_opt->excludes(wav_opt);
  localize->add_option("--method", loc.method, "usrd-ls, srd-ls, conic, conic-norm or hyperbolic")
      ->check(CLI::IsMember({"usrd-ls", "srd-ls", "conic", "conic-norm", "hyperbolic"}));
  localize->add_option("--ref", loc.ref, "nearest-barycenter, max-energy, min-energy or index:N");
  localize->add_option("--vad", loc.vad, "Energy VAD during TDOA aggregation")->check(CLI::IsMember({"on", "off"}));
  localize->add_option("--denoise", loc.denoise, "TDOA averaging before localization")->check(CLI::IsMember({"on", "off"}));
  localize->add_option("--sound-speed", loc.sound_speed, "Speed of sound in m/s (overrides the scene file)");
  localize->add_option("--seed", loc.seed, "Random seed (the pipeline is deterministic)");
  localize->add_option("--frame-duration", loc.frame_duration, "Frame duration in seconds");
  localize->add_option("--overlap", loc.overlap, "Frame overlap fraction");
  localize->footer(kRdConvention);

  TdoaArgs td;
  auto* tdoa = app.add_subcommand("tdoa", "Estimate the pairwise TDOA and RD matrices from WAV input");
  tdoa->add_option("--wav", td.wav, "One multichannel file or one mono file per mic")->required();
  tdoa->add_option("--scene", td.scene, "Scene JSON used to bound the lag search by the array diameter");
  tdoa->add_option("--max-distance", td.max_distance, "Largest inter-mic distance in meters");
  tdoa->add_option("--sound-speed", td.sound_speed, "Speed of sound in m/s");
  tdoa->add_option("--vad", td.vad, "Energy VAD")->check(CLI::IsMember({"on", "off"}));
  tdoa->add_option("--vad-rule", td.vad_rule, "split_energy or summed_waveform")
      ->check(CLI::IsMember({"split_energy", "summed_waveform"}));
  tdoa->add_flag("--no-interpolate", td.no_interpolate, "Disable parabolic sub-sample refinement");
  tdoa->add_option("--frame-duration", td.frame_duration, "Frame duration in seconds");
  tdoa->add_option("--overlap", td.overlap, "Frame overlap fraction");
  tdoa->add_option("--out-tdoa", td.out_tdoa, "TDOA matrix CSV (seconds)");
  tdoa->add_option("--out-rd", td.out_rd, "RD matrix CSV (meters)");
  tdoa->footer(kRdConvention);

  BenchArgs bn;
  auto* bench = app.add_subcommand("bench", "Run a Monte Carlo benchmark grid");
  bench->add_option("--config", bn.config, "Benchmark JSON configuration")->required();
  bench->add_option("--out", bn.out_dir, "Output directory for records/summary/histogram CSV");
  bench->add_option("--threads", bn.threads, "Worker threads (0 = auto); overrides MULTILAT_THREADS");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Synthesize microphone signals or RD matrices for a scene");
  simulate->add_option("--scene", sim.scene, "Scene JSON file with a source")->required();
  simulate->add_option("--out-wav", sim.out_wav, "Multichannel WAV output");
  simulate->add_option("--out-rd", sim.out_rd, "RD matrix CSV output");
  simulate->add_option("--format", sim.format, "WAV sample format")->check(CLI::IsMember({"pcm16", "float32"}));
  simulate->add_option("--duration", sim.duration, "Signal duration in seconds");
  simulate->add_option("--sample-rate", sim.sample_rate, "Sample rate in Hz");
  simulate->add_option("--snr", sim.snr, "Per-channel SNR in dB, or 'off'");
  simulate->add_option("--gain-law", sim.gain_law, "unit or inverse_distance");
  simulate->add_option("--source-wav", sim.source_wav, "Mono source waveform (default: white noise)");
  simulate->add_option("--rd-sigma", sim.rd_sigma, "Gaussian RD noise in meters for --out-rd");
  simulate->add_option("--seed", sim.seed, "Random seed");

  std::vector<std::string> argv;
  argv.reserve(args.size());
  for (auto it = args.rbegin(); it != args.rend(); ++it) argv.push_back(*it);

  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error code=" << kExitUsage << " message=" << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*localize) {
      if (loc.rd.empty() && loc.wav.empty()) throw InputError("give either --rd or --wav");
      return cmd_localize(loc, out);
    }
    if (*tdoa) return cmd_tdoa(td, out);
    if (*bench) return cmd_bench(bn, out);
    if (*simulate) return cmd_simulate(sim, out);
  } catch (const Failure& f) {
    err << "error code=" << f.code << " message=" << f.message << '\n';
    return f.code;
  } catch (const InputError& e) {
    err << "error code=" << kExitUsage << " message=" << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error code=" << kExitUsage << " message=" << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace multilat::cli
