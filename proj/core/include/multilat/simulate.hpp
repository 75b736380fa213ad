#pragma once

#include "multilat/geometry.hpp"
#include "multilat/tdoa.hpp"

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

namespace multilat {

/// Order-independent seed for a work item: mixes the indices into `base`
/// with splitmix64.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> indices);

struct RdNoiseModel {
  enum class Kind { gaussian, laplacian, outlier_mixture };
  Kind kind = Kind::gaussian;
  /// Standard deviation of the nominal noise, meters.
  double sigma = 0.0;
  /// Mixture only: probability that an entry is an outlier, and the outlier
  /// standard deviation in meters.
  double outlier_fraction = 0.0;
  double outlier_scale = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  /// One noise sample.
  double sample(std::mt19937_64& rng) const;
};

std::string_view to_string(RdNoiseModel::Kind kind);
RdNoiseModel::Kind parse_noise_kind(std::string_view text);

/// Adds i.i.d. noise to the independent entries (upper triangle, mirrored).
RdMatrix perturb_rd(const RdMatrix& rd, const RdNoiseModel& model);
RdMatrix perturb_rd(const RdMatrix& rd, const RdNoiseModel& model, std::mt19937_64& rng);
RdVector perturb_rd(const RdVector& rd, const RdNoiseModel& model);
RdVector perturb_rd(const RdVector& rd, const RdNoiseModel& model, std::mt19937_64& rng);

enum class GainLaw { unit, inverse_distance };

std::string_view to_string(GainLaw law);
GainLaw parse_gain_law(std::string_view text);

/// Microphone gain for a source at `distance`: 1, or 1 / max(distance, 0.1).
double mic_gain(GainLaw law, double distance);

struct SignalModel {
  GainLaw gain_law = GainLaw::unit;
  /// Per-channel SNR in dB; no noise is added when empty.
  std::optional<double> snr_db = 30.0;
  /// Source waveform. White Gaussian noise when empty; otherwise it must
  /// cover the synthesized duration plus the propagation delay.
  std::vector<double> source_samples;
  std::uint64_t seed = 0;
};

/// Taps of the windowed-sinc fractional delay filter.
inline constexpr int kFractionalDelayTaps = 32;

/// Free-field microphone signals y_m(n) = a_m x(n - tau_m fs) + n_m(n),
/// with tau_m = |r_m - r_s| / c realized by a Kaiser-windowed sinc.
MicSignals synth_signals(const Scene& scene, const SignalModel& model, double duration_s,
                         double sample_rate);

}  // namespace multilat
