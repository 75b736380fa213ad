#pragma once

#include "multilat/estimators.hpp"
#include "multilat/geometry.hpp"
#include "multilat/simulate.hpp"
#include "multilat/tdoa.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace multilat {

/// Observation variant fed to the estimators: VAD on/off during TDOA
/// aggregation, optionally followed by TDOA averaging.
struct Feature {
  bool vad = true;
  bool denoised = false;

  bool operator==(const Feature&) const = default;
};

/// "vad-raw", "vad-denoised", "novad-raw", "novad-denoised".
std::string to_string(const Feature& feature);
Feature parse_feature(std::string_view text);

/// All C(m, k) index subsets in lexicographic order.
std::vector<std::vector<std::size_t>> enumerate_subsets(std::size_t m, std::size_t k);

enum class BenchMode {
  /// Noise injected directly on the true RDs.
  rd,
  /// Synthesized signals through GCC-PHAT; VAD only has an effect here.
  signal,
};

struct SceneSource {
  enum class Kind { lab, random };
  Kind kind = Kind::lab;
  std::vector<int> positions{1, 2, 3};  // lab
  std::size_t count = 1;                // random
  std::size_t mic_count = 8;            // random
  Point3 lower{-2.5, -2.5, 0.5};        // random
  Point3 upper{2.5, 2.5, 2.0};          // random
};

struct SubsetSpec {
  enum class Kind { all_k_of_m, full };
  Kind kind = Kind::full;
  std::size_t k = 5;
};

struct SignalSettings {
  double duration_s = 2.0;
  FrameConfig frames;
  VadRule vad_rule = VadRule::split_energy;
  bool interpolate = true;
  GainLaw gain_law = GainLaw::inverse_distance;
};

struct BenchmarkConfig {
  BenchMode mode = BenchMode::rd;
  SceneSource scenes;
  SubsetSpec subsets;
  std::vector<Feature> features{{false, false}};
  std::vector<MethodSpec> methods;
  /// rd mode noise sweep.
  std::vector<RdNoiseModel> rd_noise;
  /// signal mode noise sweep (per-channel SNR).
  std::vector<double> snr_db;
  SignalSettings signal;
  std::size_t trials = 1;
  std::uint64_t seed = 1;
  double sound_speed = kDefaultSoundSpeed;
  /// Worker threads, 0 = hardware concurrency.
  unsigned threads = 0;
  /// Record wall time per trial. Off by default so that records files are
  /// byte-reproducible.
  bool timing = false;
  std::size_t histogram_bins = 30;

  /// Throws InputError on an invalid configuration.
  void validate() const;
  std::size_t noise_level_count() const;
  /// sigma in meters (rd mode) or SNR in dB (signal mode).
  double noise_level(std::size_t index) const;
};

enum class TrialStatus { converged, closed_form, degenerate, max_iterations, invalid_tdoa };

std::string_view to_string(TrialStatus status);
TrialStatus parse_trial_status(std::string_view text);
inline bool is_success(TrialStatus s) {
  return s == TrialStatus::converged || s == TrialStatus::closed_form;
}

struct TrialRecord {
  std::string method;
  std::string feature;
  /// Microphone indices joined with '-', e.g. "0-2-3-5-7".
  std::string subset;
  double noise_level = 0.0;
  /// scene_index * trials + trial.
  std::size_t trial = 0;
  TrialStatus status = TrialStatus::degenerate;
  double position_error_m = 0.0;
  double mean_abs_rd_error_m = 0.0;
  double wall_time_s = 0.0;
  /// Spherical estimators: [D; r] in reference-centered coordinates. Not
  /// persisted.
  std::optional<Eigen::Vector4d> augmented;

  bool operator==(const TrialRecord& other) const;
};

/// Scenes generated for a configuration, in scene-index order.
std::vector<Scene> make_scenes(const BenchmarkConfig& config);

/// Runs the full grid. Records are ordered by (scene, noise level, trial,
/// subset, feature, method) regardless of the worker count.
std::vector<TrialRecord> run_benchmark(const BenchmarkConfig& config);

struct SummaryRow {
  std::string method;
  std::string feature;
  double noise_level = 0.0;
  double median_m = 0.0;
  double q1_m = 0.0;
  double q3_m = 0.0;
  double failure_rate = 0.0;
  std::size_t n = 0;
};

/// Linear-interpolation quantile of sorted values, p in [0, 1].
double quantile_sorted(const std::vector<double>& sorted, double p);

/// Per (method, feature, noise level) statistics of successful position
/// errors, sorted by that key. Throws InputError on empty input.
std::vector<SummaryRow> summarize(const std::vector<TrialRecord>& records);

struct HistogramCell {
  std::string method;
  std::string feature;
  std::size_t rd_bin = 0;
  std::size_t pos_bin = 0;
  double rd_lo = 0.0, rd_hi = 0.0;
  double pos_lo = 0.0, pos_hi = 0.0;
  std::size_t count = 0;
};

/// Joint histogram of mean absolute RD error against position error, per
/// (method, feature), over the data range of successful trials. Only
/// non-empty cells are returned.
std::vector<HistogramCell> histogram(const std::vector<TrialRecord>& records, std::size_t bins);

inline constexpr std::string_view kRecordsHeader =
    "method,feature,subset,noise_level,trial,status,position_error_m,mean_abs_rd_error_m,wall_time_s";
inline constexpr std::string_view kSummaryHeader =
    "method,feature,noise_level,median_m,q1_m,q3_m,failure_rate,n";
inline constexpr std::string_view kHistogramHeader =
    "method,feature,rd_bin,pos_bin,rd_lo_m,rd_hi_m,pos_lo_m,pos_hi_m,count";

void write_records_csv(std::ostream& out, const std::vector<TrialRecord>& records);
std::vector<TrialRecord> read_records_csv(std::istream& in);
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);
std::vector<SummaryRow> read_summary_csv(std::istream& in);
void write_histogram_csv(std::ostream& out, const std::vector<HistogramCell>& cells);
std::vector<HistogramCell> read_histogram_csv(std::istream& in);

/// JSON benchmark configuration (schema in docs/benchmark-config.md).
BenchmarkConfig parse_benchmark_config(std::string_view json_text);
std::string format_benchmark_config(const BenchmarkConfig& config);

}  // namespace multilat
