#include "multilat/tdoa.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace multilat {

std::size_t FrameConfig::frame_length() const {
  return static_cast<std::size_t>(std::llround(frame_duration * sample_rate));
}

std::size_t FrameConfig::hop() const {
  const auto h = static_cast<std::size_t>(
      std::llround(static_cast<double>(frame_length()) * (1.0 - overlap)));
  return std::max<std::size_t>(h, 1);
}

void FrameConfig::validate() const {
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) throw InputError("sample rate must be positive");
  if (!(frame_duration > 0.0) || frame_length() < 2) throw InputError("frame must span at least 2 samples");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw InputError("overlap must lie in [0, 1)");
}

void MicSignals::validate(std::size_t min_length) const {
  if (!(sample_rate > 0.0)) throw InputError("sample rate must be positive");
  if (channels.empty()) throw InputError("no channels");
  for (const auto& ch : channels) {
    if (ch.size() != channels.front().size()) throw InputError("channels differ in length");
  }
  if (length() < min_length) {
    throw InputError("channels are shorter than one frame (" + std::to_string(length()) + " < " +
                     std::to_string(min_length) + " samples)");
  }
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

std::vector<std::vector<double>> frame_signal(std::span<const double> channel,
                                              const FrameConfig& config) {
  config.validate();
  const std::size_t len = config.frame_length();
  if (channel.size() < len) {
    throw InputError("channel shorter than one frame (" + std::to_string(channel.size()) + " < " +
                     std::to_string(len) + " samples)");
  }
  const std::size_t hop = config.hop();
  const auto window = hann_window(len);
  std::vector<std::vector<double>> frames;
  frames.reserve((channel.size() - len) / hop + 1);
  for (std::size_t start = 0; start + len <= channel.size(); start += hop) {
    std::vector<double> f(len);
    for (std::size_t i = 0; i < len; ++i) f[i] = channel[start + i] * window[i];
    frames.push_back(std::move(f));
  }
  return frames;
}

double frame_energy(std::span<const double> frame) {
  double e = 0.0;
  for (double x : frame) e += x * x;
  return e;
}

namespace {

constexpr double kPhatFloor = 1e-12;

// Zero-padded spectra and PHAT-weighted correlation for one frame length.
class PhatCorrelator {
 public:
  explicit PhatCorrelator(std::size_t frame_length)
      : n_(frame_length), nfft_(2 * frame_length), padded_(nfft_, 0.0) {}

  std::vector<std::complex<double>> spectrum(std::span<const double> frame) {
    std::fill(padded_.begin(), padded_.end(), 0.0);
    std::copy(frame.begin(), frame.end(), padded_.begin());
    std::vector<std::complex<double>> out;
    fft_.fwd(out, padded_);
    return out;
  }

  // Throws TdoaError when every PHAT bin falls below the floor.
  double lag(const std::vector<std::complex<double>>& xa, const std::vector<std::complex<double>>& xb,
             std::size_t max_lag, bool interpolate) {
    cross_.resize(nfft_);
    bool any = false;
    for (std::size_t k = 0; k < nfft_; ++k) {
      const std::complex<double> g = std::conj(xa[k]) * xb[k];
      const double mag = std::abs(g);
      if (mag < kPhatFloor) {
        cross_[k] = 0.0;
      } else {
        cross_[k] = g / mag;
        any = true;
      }
    }
    if (!any) throw TdoaError("no correlation peak: both frames are silent");
    fft_.inv(corr_, cross_);

    // Peak picking on |R| so that a polarity flip between channels keeps the
    // delay.
    const auto at = [&](long l) {
      const long m = static_cast<long>(nfft_);
      return std::abs(corr_[static_cast<std::size_t>(((l % m) + m) % m)]);
    };
    const long reach = static_cast<long>(std::min(max_lag, n_ - 1));
    long best = 0;
    double best_val = at(0);
    for (long l = -reach; l <= reach; ++l) {
      const double v = at(l);
      if (v > best_val) {
        best_val = v;
        best = l;
      }
    }
    if (!interpolate) return static_cast<double>(best);
    const double ym = at(best - 1);
    const double yp = at(best + 1);
    const double denom = ym - 2.0 * best_val + yp;
    if (!(denom < 0.0)) return static_cast<double>(best);
    const double offset = std::clamp(0.5 * (ym - yp) / denom, -0.5, 0.5);
    return static_cast<double>(best) + offset;
  }

  std::size_t frame_length() const { return n_; }

 private:
  std::size_t n_;
  std::size_t nfft_;
  Eigen::FFT<double> fft_;
  std::vector<double> padded_;
  std::vector<std::complex<double>> cross_;
  std::vector<double> corr_;
};

}  // namespace

double gcc_phat_pair(std::span<const double> frame_a, std::span<const double> frame_b,
                     std::size_t max_lag, bool interpolate) {
  if (frame_a.size() != frame_b.size()) throw InputError("frames differ in length");
  if (max_lag == 0 || max_lag >= frame_a.size()) {
    throw InputError("max lag must lie in (0, frame length)");
  }
  PhatCorrelator corr(frame_a.size());
  const auto xa = corr.spectrum(frame_a);
  const auto xb = corr.spectrum(frame_b);
  return corr.lag(xa, xb, max_lag, interpolate);
}

double median(std::vector<double> values) {
  if (values.empty()) throw InputError("median of an empty list");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double pair_median_energy(std::span<const std::vector<double>> frames_a,
                          std::span<const std::vector<double>> frames_b, VadRule rule) {
  if (frames_a.size() != frames_b.size() || frames_a.empty()) {
    throw InputError("frame lists must be non-empty and of equal length");
  }
  std::vector<double> energies(frames_a.size());
  for (std::size_t i = 0; i < frames_a.size(); ++i) {
    if (rule == VadRule::split_energy) {
      energies[i] = frame_energy(frames_a[i]) + frame_energy(frames_b[i]);
    } else {
      double e = 0.0;
      for (std::size_t k = 0; k < frames_a[i].size(); ++k) {
        const double s = frames_a[i][k] + frames_b[i][k];
        e += s * s;
      }
      energies[i] = e;
    }
  }
  return median(std::move(energies));
}

bool energy_vad(std::span<const double> frame_a, std::span<const double> frame_b,
                double pair_median_energy) {
  const double threshold = 0.5 * pair_median_energy;
  return frame_energy(frame_a) > threshold || frame_energy(frame_b) > threshold;
}

bool TdoaMatrix::all_valid(std::span<const std::size_t> subset) const {
  for (std::size_t i : subset) {
    for (std::size_t j : subset) {
      if (!valid(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) return false;
    }
  }
  return true;
}

RdMatrix TdoaMatrix::to_rd(double sound_speed) const {
  return RdMatrix{values * sound_speed};
}

std::size_t max_lag_samples(double max_distance_m, double sound_speed, double sample_rate) {
  if (!(sound_speed > 0.0) || !(max_distance_m > 0.0)) {
    throw InputError("max distance and sound speed must be positive");
  }
  return static_cast<std::size_t>(std::ceil(max_distance_m / sound_speed * sample_rate));
}

TdoaMatrix estimate_tdoa_matrix(const MicSignals& signals, const FrameConfig& config,
                                const TdoaOptions& options) {
  config.validate();
  if (signals.channel_count() < 2) throw InputError("need at least 2 channels");
  if (std::abs(signals.sample_rate - config.sample_rate) > 1e-9) {
    throw InputError("signal sample rate does not match frame configuration");
  }
  const std::size_t len = config.frame_length();
  signals.validate(len);
  const std::size_t max_lag =
      max_lag_samples(options.max_distance_m, options.sound_speed, config.sample_rate);
  if (max_lag >= len) throw InputError("max lag does not fit inside one frame");

  const std::size_t m = signals.channel_count();
  PhatCorrelator corr(len);
  std::vector<std::vector<std::vector<double>>> frames(m);
  std::vector<std::vector<std::vector<std::complex<double>>>> spectra(m);
  for (std::size_t c = 0; c < m; ++c) {
    frames[c] = frame_signal(signals.channels[c], config);
    spectra[c].reserve(frames[c].size());
    for (const auto& f : frames[c]) spectra[c].push_back(corr.spectrum(f));
  }
  const std::size_t frame_count = frames.front().size();

  const auto mi = static_cast<Eigen::Index>(m);
  TdoaMatrix out{Eigen::MatrixXd::Zero(mi, mi), Eigen::MatrixXi::Zero(mi, mi),
                 Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(mi, mi, true)};

  std::vector<double> lags;
  lags.reserve(frame_count);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      const double reference_energy =
          options.vad ? pair_median_energy(frames[a], frames[b], options.vad_rule) : 0.0;
      lags.clear();
      for (std::size_t i = 0; i < frame_count; ++i) {
        if (options.vad && !energy_vad(frames[a][i], frames[b][i], reference_energy)) continue;
        try {
          lags.push_back(corr.lag(spectra[a][i], spectra[b][i], max_lag, options.interpolate));
        } catch (const TdoaError&) {
          // silent frame pair, nothing to aggregate
        }
      }
      const auto ia = static_cast<Eigen::Index>(a);
      const auto ib = static_cast<Eigen::Index>(b);
      out.frame_count_used(ia, ib) = out.frame_count_used(ib, ia) = static_cast<int>(lags.size());
      if (lags.empty()) {
        out.valid(ia, ib) = out.valid(ib, ia) = false;
        out.values(ia, ib) = out.values(ib, ia) = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      const double tau = median(lags) / config.sample_rate;
      out.values(ia, ib) = tau;
      out.values(ib, ia) = -tau;
    }
  }
  return out;
}

std::vector<double> channel_energies(const MicSignals& signals) {
  std::vector<double> e;
  e.reserve(signals.channel_count());
  for (const auto& ch : signals.channels) e.push_back(frame_energy(ch));
  return e;
}

std::size_t select_reference_from_energies(std::span<const double> energies,
                                           const ReferencePolicy& policy) {
  if (energies.empty()) throw InputError("no channels");
  if (!policy.needs_energy()) throw InputError("not an energy-based reference policy");
  const bool want_max = policy.kind == ReferencePolicy::Kind::max_energy;
  std::size_t best = 0;
  for (std::size_t i = 1; i < energies.size(); ++i) {
    if (want_max ? energies[i] > energies[best] : energies[i] < energies[best]) best = i;
  }
  return best;
}

std::size_t select_reference_energy(const MicSignals& signals, const ReferencePolicy& policy) {
  return select_reference_from_energies(channel_energies(signals), policy);
}

}  // namespace multilat
