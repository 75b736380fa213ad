#pragma once

#include "multilat/geometry.hpp"

#include <Eigen/Core>

#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace multilat {

/// Raised when a correlation has no usable peak (e.g. both frames silent).
class TdoaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FrameConfig {
  double sample_rate = 16000.0;
  double frame_duration = 0.064;
  double overlap = 0.5;

  std::size_t frame_length() const;
  /// frame_length * (1 - overlap), rounded to the nearest sample, at least 1.
  std::size_t hop() const;
  /// Throws InputError when frame length < 2 or overlap outside [0, 1).
  void validate() const;
};

/// Multichannel recording, one equal-length channel per microphone.
struct MicSignals {
  std::vector<std::vector<double>> channels;
  double sample_rate = 16000.0;

  std::size_t channel_count() const { return channels.size(); }
  std::size_t length() const { return channels.empty() ? 0 : channels.front().size(); }
  /// Equal lengths, at least `min_length` samples, positive sample rate.
  void validate(std::size_t min_length = 1) const;
};

/// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

/// Overlapping Hann-windowed frames; a trailing partial frame is dropped.
std::vector<std::vector<double>> frame_signal(std::span<const double> channel,
                                              const FrameConfig& config);

/// Sum of squared samples.
double frame_energy(std::span<const double> frame);

/// GCC-PHAT lag (samples) of frame_b relative to frame_a, searched in
/// [-max_lag, max_lag]. Positive when b lags a. The peak is taken on the
/// correlation magnitude; with `interpolate` it is refined by a three-point
/// parabola.
double gcc_phat_pair(std::span<const double> frame_a, std::span<const double> frame_b,
                     std::size_t max_lag, bool interpolate = true);

enum class VadRule {
  /// Threshold is half the median over frames of E(a_i) + E(b_i).
  split_energy,
  /// Threshold is half the median over frames of E(a_i + b_i).
  summed_waveform,
};

/// Per-pair VAD reference energy (the median before halving).
double pair_median_energy(std::span<const std::vector<double>> frames_a,
                          std::span<const std::vector<double>> frames_b,
                          VadRule rule = VadRule::split_energy);

/// Keep a frame pair when either frame exceeds half the pair median energy.
bool energy_vad(std::span<const double> frame_a, std::span<const double> frame_b,
                double pair_median_energy);

/// Median with the mean of the two middle values for even sizes.
double median(std::vector<double> values);

struct TdoaOptions {
  bool vad = true;
  VadRule vad_rule = VadRule::split_energy;
  /// Longest physically possible inter-mic distance; bounds the lag search.
  double max_distance_m = 5.0;
  double sound_speed = kDefaultSoundSpeed;
  bool interpolate = true;
};

/// Pairwise delays in seconds: values(m, m') = tau_{m'} - tau_m.
struct TdoaMatrix {
  Eigen::MatrixXd values;
  Eigen::MatrixXi frame_count_used;
  /// False for pairs with no surviving frames.
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> valid;

  std::size_t mic_count() const { return static_cast<std::size_t>(values.rows()); }
  bool all_valid() const { return valid.all(); }
  bool all_valid(std::span<const std::size_t> subset) const;
  RdMatrix to_rd(double sound_speed) const;
};

/// ceil(max_distance / c * fs).
std::size_t max_lag_samples(double max_distance_m, double sound_speed, double sample_rate);

TdoaMatrix estimate_tdoa_matrix(const MicSignals& signals, const FrameConfig& config,
                                const TdoaOptions& options);

/// Total energy per channel.
std::vector<double> channel_energies(const MicSignals& signals);

/// argmax / argmin of the given energies, ties to the lowest index. Only
/// max_energy and min_energy policies are accepted.
std::size_t select_reference_from_energies(std::span<const double> energies,
                                           const ReferencePolicy& policy);

std::size_t select_reference_energy(const MicSignals& signals, const ReferencePolicy& policy);

}  // namespace multilat
