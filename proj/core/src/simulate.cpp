#include "multilat/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace multilat {

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> indices) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(base);
  for (auto i : indices) h = mix(h ^ mix(i + 0x632be59bd9b4e019ULL));
  return h;
}

void RdNoiseModel::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InputError("noise sigma must be >= 0");
  if (!(outlier_fraction >= 0.0 && outlier_fraction <= 1.0)) {
    throw InputError("outlier fraction must lie in [0, 1]");
  }
  if (!(outlier_scale >= 0.0) || !std::isfinite(outlier_scale)) {
    throw InputError("outlier scale must be >= 0");
  }
}

double RdNoiseModel::sample(std::mt19937_64& rng) const {
  switch (kind) {
    case Kind::gaussian: {
      std::normal_distribution<double> n(0.0, 1.0);
      return sigma * n(rng);
    }
    case Kind::laplacian: {
      // Scale sigma / sqrt(2) gives standard deviation sigma.
      std::uniform_real_distribution<double> u(-0.5, 0.5);
      const double v = u(rng);
      const double sign = v < 0.0 ? -1.0 : 1.0;
      return -sign * (sigma / std::numbers::sqrt2) * std::log1p(-2.0 * std::abs(v));
    }
    case Kind::outlier_mixture: {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::normal_distribution<double> n(0.0, 1.0);
      const bool outlier = u(rng) < outlier_fraction;
      return (outlier ? outlier_scale : sigma) * n(rng);
    }
  }
  return 0.0;
}

std::string_view to_string(RdNoiseModel::Kind kind) {
  switch (kind) {
    case RdNoiseModel::Kind::gaussian: return "gaussian";
    case RdNoiseModel::Kind::laplacian: return "laplacian";
    case RdNoiseModel::Kind::outlier_mixture: return "outlier_mixture";
  }
  return "unknown";
}

RdNoiseModel::Kind parse_noise_kind(std::string_view text) {
  if (text == "gaussian") return RdNoiseModel::Kind::gaussian;
  if (text == "laplacian") return RdNoiseModel::Kind::laplacian;
  if (text == "outlier_mixture" || text == "outlier-mixture") return RdNoiseModel::Kind::outlier_mixture;
  throw InputError("unknown noise kind '" + std::string(text) + "'");
}

RdMatrix perturb_rd(const RdMatrix& rd, const RdNoiseModel& model, std::mt19937_64& rng) {
  model.validate();
  RdMatrix out = rd;
  const auto m = rd.values.rows();
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      out.values(i, j) = rd.values(i, j) + model.sample(rng);
      out.values(j, i) = -out.values(i, j);
    }
  }
  return out;
}

RdMatrix perturb_rd(const RdMatrix& rd, const RdNoiseModel& model) {
  std::mt19937_64 rng(model.seed);
  return perturb_rd(rd, model, rng);
}

RdVector perturb_rd(const RdVector& rd, const RdNoiseModel& model, std::mt19937_64& rng) {
  model.validate();
  RdVector out = rd;
  for (Eigen::Index k = 0; k < out.values.size(); ++k) out.values(k) += model.sample(rng);
  return out;
}

RdVector perturb_rd(const RdVector& rd, const RdNoiseModel& model) {
  std::mt19937_64 rng(model.seed);
  return perturb_rd(rd, model, rng);
}

std::string_view to_string(GainLaw law) {
  return law == GainLaw::unit ? "unit" : "inverse_distance";
}

GainLaw parse_gain_law(std::string_view text) {
  if (text == "unit") return GainLaw::unit;
  if (text == "inverse_distance" || text == "inverse-distance") return GainLaw::inverse_distance;
  throw InputError("unknown gain law '" + std::string(text) + "'");
}

double mic_gain(GainLaw law, double distance) {
  return law == GainLaw::unit ? 1.0 : 1.0 / std::max(distance, 0.1);
}

namespace {

constexpr double kKaiserBeta = 8.0;
constexpr int kHalfTaps = kFractionalDelayTaps / 2;

double kaiser(double u) {
  if (std::abs(u) > 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - u * u)) /
         std::cyl_bessel_i(0.0, kKaiserBeta);
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

MicSignals synth_signals(const Scene& scene, const SignalModel& model, double duration_s,
                         double sample_rate) {
  scene.validate();
  if (!(sample_rate > 0.0)) throw InputError("sample rate must be positive");
  if (model.snr_db && !std::isfinite(*model.snr_db)) throw InputError("SNR must be finite");
  FrameConfig default_frames;
  default_frames.sample_rate = sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  if (n < 2 * default_frames.frame_length()) {
    throw InputError("duration must cover at least two analysis frames");
  }

  std::vector<double> delays(scene.mic_count());
  for (std::size_t m = 0; m < scene.mic_count(); ++m) {
    delays[m] = (scene.mics[m] - scene.source).norm() / scene.sound_speed * sample_rate;
    if (delays[m] >= static_cast<double>(n)) {
      throw InputError("propagation delay exceeds the signal duration");
    }
  }
  const double max_delay = *std::max_element(delays.begin(), delays.end());
  const auto pre = static_cast<std::size_t>(std::ceil(max_delay)) + kHalfTaps + 1;
  const std::size_t total = pre + n + kHalfTaps + 1;

  std::mt19937_64 rng(model.seed);
  std::vector<double> source;
  if (model.source_samples.empty()) {
    std::normal_distribution<double> white(0.0, 1.0);
    source.resize(total);
    for (auto& x : source) x = white(rng);
  } else {
    if (model.source_samples.size() < total) {
      throw InputError("source signal is too short for the requested duration");
    }
    source.assign(model.source_samples.begin(),
                  model.source_samples.begin() + static_cast<std::ptrdiff_t>(total));
  }

  MicSignals out;
  out.sample_rate = sample_rate;
  out.channels.resize(scene.mic_count());
  std::vector<double> taps(kFractionalDelayTaps);
  for (std::size_t m = 0; m < scene.mic_count(); ++m) {
    const double gain = mic_gain(model.gain_law, (scene.mics[m] - scene.source).norm());
    auto& y = out.channels[m];
    y.assign(n, 0.0);
    // y(k) = gain * x(k - delay); the filter only depends on the fractional
    // part, so it is computed once per channel.
    const double whole = std::floor(delays[m]);
    const double frac = delays[m] - whole;
    for (int j = 0; j < kFractionalDelayTaps; ++j) {
      // tap j reads x(k - whole - (j - kHalfTaps + 1)); distance from the
      // continuous sample position is t - i = (j - kHalfTaps + 1) - frac.
      const double dist = static_cast<double>(j - kHalfTaps + 1) - frac;
      taps[static_cast<std::size_t>(j)] = sinc(dist) * kaiser(dist / kHalfTaps);
    }
    for (std::size_t k = 0; k < n; ++k) {
      double acc = 0.0;
      for (int j = 0; j < kFractionalDelayTaps; ++j) {
        const auto idx = static_cast<std::ptrdiff_t>(pre + k) - static_cast<std::ptrdiff_t>(whole) -
                         (j - kHalfTaps + 1);
        acc += taps[static_cast<std::size_t>(j)] * source[static_cast<std::size_t>(idx)];
      }
      y[k] = gain * acc;
    }
  }

  if (model.snr_db) {
    std::normal_distribution<double> white(0.0, 1.0);
    for (auto& y : out.channels) {
      double power = 0.0;
      for (double v : y) power += v * v;
      power /= static_cast<double>(y.size());
      const double noise_std = std::sqrt(power / std::pow(10.0, *model.snr_db / 10.0));
      for (auto& v : y) v += noise_std * white(rng);
    }
  }
  return out;
}

}  // namespace multilat
