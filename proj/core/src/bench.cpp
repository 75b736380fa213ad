#include "multilat/bench.hpp"

#include "multilat/denoise.hpp"
#include "multilat/io.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <thread>
#include <tuple>

namespace multilat {

std::string to_string(const Feature& feature) {
  return std::string(feature.vad ? "vad" : "novad") + (feature.denoised ? "-denoised" : "-raw");
}

Feature parse_feature(std::string_view text) {
  for (bool vad : {true, false}) {
    for (bool den : {false, true}) {
      if (text == to_string(Feature{vad, den})) return {vad, den};
    }
  }
  throw InputError("unknown feature '" + std::string(text) + "'");
}

std::vector<std::vector<std::size_t>> enumerate_subsets(std::size_t m, std::size_t k) {
  if (k < 1 || k > m) throw InputError("subset size must lie in [1, m]");
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    out.push_back(idx);
    // Rightmost position that can still advance.
    std::size_t pos = k;
    while (pos > 0 && idx[pos - 1] == m - k + (pos - 1)) --pos;
    if (pos == 0) break;
    ++idx[pos - 1];
    for (std::size_t j = pos; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return out;
}

void BenchmarkConfig::validate() const {
  if (methods.empty()) throw InputError("benchmark needs at least one method");
  if (features.empty()) throw InputError("benchmark needs at least one feature");
  if (trials == 0) throw InputError("trials must be positive");
  if (!(sound_speed > 0.0)) throw InputError("sound speed must be positive");
  if (histogram_bins == 0) throw InputError("histogram bins must be positive");
  if (noise_level_count() == 0) throw InputError("noise sweep is empty");
  // Records and summary cells are keyed by the noise level, so two sweep
  // entries with the same level would be merged.
  for (std::size_t i = 0; i < noise_level_count(); ++i) {
    for (std::size_t j = i + 1; j < noise_level_count(); ++j) {
      if (noise_level(i) == noise_level(j)) throw InputError("noise sweep levels must be distinct");
    }
  }
  for (const auto& n : rd_noise) n.validate();
  for (double s : snr_db) {
    if (!std::isfinite(s)) throw InputError("SNR must be finite");
  }

  std::size_t m = 0;
  if (scenes.kind == SceneSource::Kind::lab) {
    if (scenes.positions.empty()) throw InputError("no lab source positions selected");
    for (int p : scenes.positions) {
      if (p < 1 || p > 3) throw InputError("lab source position must be 1, 2 or 3");
    }
    m = 8;
  } else {
    if (scenes.count == 0) throw InputError("random scene count must be positive");
    if (scenes.mic_count < 4) throw InputError("random scenes need at least 4 microphones");
    if (!(scenes.upper.array() > scenes.lower.array()).all()) {
      throw InputError("random scene bounds must satisfy lower < upper");
    }
    m = scenes.mic_count;
  }
  if (subsets.kind == SubsetSpec::Kind::all_k_of_m && (subsets.k < 1 || subsets.k > m)) {
    throw InputError("subset size k must lie in [1, " + std::to_string(m) + "]");
  }
  for (const auto& method : methods) {
    if (method.reference.kind == ReferencePolicy::Kind::fixed) {
      const std::size_t k = subsets.kind == SubsetSpec::Kind::full ? m : subsets.k;
      if (method.reference.index >= k) throw InputError("fixed reference index exceeds subset size");
    }
  }
  if (mode == BenchMode::signal) {
    signal.frames.validate();
    if (!(signal.duration_s > 0.0)) throw InputError("signal duration must be positive");
  }
}

std::size_t BenchmarkConfig::noise_level_count() const {
  return mode == BenchMode::rd ? rd_noise.size() : snr_db.size();
}

double BenchmarkConfig::noise_level(std::size_t index) const {
  return mode == BenchMode::rd ? rd_noise.at(index).sigma : snr_db.at(index);
}

std::string_view to_string(TrialStatus status) {
  switch (status) {
    case TrialStatus::converged: return "converged";
    case TrialStatus::closed_form: return "closed_form";
    case TrialStatus::degenerate: return "degenerate";
    case TrialStatus::max_iterations: return "max_iterations";
    case TrialStatus::invalid_tdoa: return "invalid_tdoa";
  }
  return "unknown";
}

TrialStatus parse_trial_status(std::string_view text) {
  for (auto s : {TrialStatus::converged, TrialStatus::closed_form, TrialStatus::degenerate,
                 TrialStatus::max_iterations, TrialStatus::invalid_tdoa}) {
    if (text == to_string(s)) return s;
  }
  throw InputError("unknown trial status '" + std::string(text) + "'");
}

namespace {

bool same_double(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

TrialStatus from_solve(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return TrialStatus::converged;
    case SolveStatus::closed_form: return TrialStatus::closed_form;
    case SolveStatus::degenerate: return TrialStatus::degenerate;
    case SolveStatus::max_iterations: return TrialStatus::max_iterations;
  }
  return TrialStatus::degenerate;
}

std::string subset_id(const std::vector<std::size_t>& subset) {
  std::string out;
  for (std::size_t i = 0; i < subset.size(); ++i) {
    if (i) out += '-';
    out += std::to_string(subset[i]);
  }
  return out;
}

double mean_abs_upper_error(const RdMatrix& observed, const RdMatrix& truth) {
  const auto m = observed.values.rows();
  double acc = 0.0;
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j, ++n) acc += std::abs(observed.values(i, j) - truth.values(i, j));
  }
  return n ? acc / static_cast<double>(n) : 0.0;
}

std::size_t resolve_reference(const ReferencePolicy& policy, std::span<const Point3> mics,
                              std::span<const double> energies) {
  return policy.needs_energy() ? select_reference_from_energies(energies, policy)
                               : select_reference(mics, policy);
}

double array_diameter(std::span<const Point3> mics) {
  double d = 0.0;
  for (std::size_t i = 0; i < mics.size(); ++i) {
    for (std::size_t j = i + 1; j < mics.size(); ++j) d = std::max(d, (mics[i] - mics[j]).norm());
  }
  return d;
}

struct WorkUnit {
  std::size_t scene = 0;
  std::size_t noise = 0;
  std::size_t trial = 0;
};

// Observations of one work unit restricted to the full microphone set; the
// per-subset views are taken from these.
struct UnitObservations {
  RdMatrix truth;
  std::vector<double> energies;
  // Indexed by VAD flag (rd mode stores the same matrix twice).
  std::optional<RdMatrix> rd[2];
  std::optional<TdoaMatrix> tdoa[2];
};

class Runner {
 public:
  explicit Runner(const BenchmarkConfig& config)
      : config_(config), scenes_(make_scenes(config)) {
    const std::size_t m = scenes_.front().mic_count();
    subsets_ = config.subsets.kind == SubsetSpec::Kind::full
                   ? enumerate_subsets(m, m)
                   : enumerate_subsets(m, config.subsets.k);
  }

  std::vector<WorkUnit> units() const {
    std::vector<WorkUnit> out;
    for (std::size_t s = 0; s < scenes_.size(); ++s) {
      for (std::size_t n = 0; n < config_.noise_level_count(); ++n) {
        for (std::size_t t = 0; t < config_.trials; ++t) out.push_back({s, n, t});
      }
    }
    return out;
  }

  std::vector<TrialRecord> run(const WorkUnit& unit) const {
    const Scene& scene = scenes_[unit.scene];
    const auto obs = observe(unit, scene);

    std::vector<TrialRecord> out;
    out.reserve(subsets_.size() * config_.features.size() * config_.methods.size());
    for (const auto& subset : subsets_) {
      std::vector<Point3> mics;
      std::vector<double> energies;
      for (std::size_t i : subset) {
        mics.push_back(scene.mics[i]);
        energies.push_back(obs.energies[i]);
      }
      const RdMatrix truth = restrict_to(obs.truth, subset);
      const std::string sid = subset_id(subset);

      for (const auto& feature : config_.features) {
        const int v = feature.vad ? 1 : 0;
        const bool invalid = obs.tdoa[v] && !obs.tdoa[v]->all_valid(subset);
        std::optional<RdMatrix> observed;
        double rd_error = std::numeric_limits<double>::quiet_NaN();
        if (!invalid) {
          observed = restrict_to(*obs.rd[v], subset);
          if (feature.denoised) observed = tdoa_average(*observed);
          rd_error = mean_abs_upper_error(*observed, truth);
        }

        for (const auto& method : config_.methods) {
          TrialRecord rec;
          rec.method = to_string(method);
          rec.feature = to_string(feature);
          rec.subset = sid;
          rec.noise_level = config_.noise_level(unit.noise);
          rec.trial = unit.scene * config_.trials + unit.trial;
          rec.mean_abs_rd_error_m = rd_error;
          rec.position_error_m = std::numeric_limits<double>::quiet_NaN();
          if (invalid) {
            rec.status = TrialStatus::invalid_tdoa;
            out.push_back(std::move(rec));
            continue;
          }

          const auto start = std::chrono::steady_clock::now();
          LocalizationResult res;
          try {
            const std::size_t ref =
                method.uses_reference() ? resolve_reference(method.reference, mics, energies) : 0;
            res = localize(method.method, *observed, mics, ref);
          } catch (const InputError& e) {
            res.status = SolveStatus::degenerate;
            res.diagnostic = e.what();
          }
          const auto stop = std::chrono::steady_clock::now();

          rec.status = from_solve(res.status);
          if (res.position.allFinite() && is_success(res.status)) {
            rec.position_error_m = (res.position - scene.source).norm();
          }
          rec.augmented = res.augmented;
          if (config_.timing) rec.wall_time_s = std::chrono::duration<double>(stop - start).count();
          out.push_back(std::move(rec));
        }
      }
    }
    return out;
  }

 private:
  UnitObservations observe(const WorkUnit& unit, const Scene& scene) const {
    UnitObservations obs;
    obs.truth = true_rd_full(scene);
    const std::uint64_t seed = derive_seed(config_.seed, {unit.scene, unit.noise, unit.trial});

    if (config_.mode == BenchMode::rd) {
      std::mt19937_64 rng(seed);
      RdMatrix noisy = perturb_rd(obs.truth, config_.rd_noise[unit.noise], rng);
      obs.rd[0] = noisy;
      obs.rd[1] = std::move(noisy);
      // Energy policies follow the inverse-distance gain model.
      for (const auto& mic : scene.mics) {
        const double g = mic_gain(GainLaw::inverse_distance, (mic - scene.source).norm());
        obs.energies.push_back(g * g);
      }
      return obs;
    }

    SignalModel model;
    model.gain_law = config_.signal.gain_law;
    model.snr_db = config_.snr_db[unit.noise];
    model.seed = seed;
    const MicSignals signals =
        synth_signals(scene, model, config_.signal.duration_s, config_.signal.frames.sample_rate);
    obs.energies = channel_energies(signals);

    TdoaOptions opts;
    opts.vad_rule = config_.signal.vad_rule;
    opts.interpolate = config_.signal.interpolate;
    opts.sound_speed = scene.sound_speed;
    opts.max_distance_m = array_diameter(scene.mics);
    for (int v = 0; v < 2; ++v) {
      const bool wanted = std::any_of(config_.features.begin(), config_.features.end(),
                                      [&](const Feature& f) { return f.vad == (v == 1); });
      if (!wanted) continue;
      opts.vad = v == 1;
      obs.tdoa[v] = estimate_tdoa_matrix(signals, config_.signal.frames, opts);
      obs.rd[v] = obs.tdoa[v]->to_rd(scene.sound_speed);
    }
    return obs;
  }

  const BenchmarkConfig& config_;
  std::vector<Scene> scenes_;
  std::vector<std::vector<std::size_t>> subsets_;
};

}  // namespace

bool TrialRecord::operator==(const TrialRecord& o) const {
  return method == o.method && feature == o.feature && subset == o.subset &&
         same_double(noise_level, o.noise_level) && trial == o.trial && status == o.status &&
         same_double(position_error_m, o.position_error_m) &&
         same_double(mean_abs_rd_error_m, o.mean_abs_rd_error_m) &&
         same_double(wall_time_s, o.wall_time_s);
}

std::vector<Scene> make_scenes(const BenchmarkConfig& config) {
  std::vector<Scene> scenes;
  if (config.scenes.kind == SceneSource::Kind::lab) {
    for (int p : config.scenes.positions) scenes.push_back(lab_scene(p, config.sound_speed));
    return scenes;
  }
  const auto& src = config.scenes;
  const Point3 span = src.upper - src.lower;
  for (std::size_t s = 0; s < src.count; ++s) {
    std::mt19937_64 rng(derive_seed(config.seed, {0x5CE4E, s}));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto draw = [&](double shrink) {
      Point3 p;
      for (int i = 0; i < 3; ++i) {
        p(i) = src.lower(i) + span(i) * (0.5 * shrink + (1.0 - shrink) * unit(rng));
      }
      return p;
    };
    Scene scene;
    scene.sound_speed = config.sound_speed;
    for (std::size_t m = 0; m < src.mic_count; ++m) scene.mics.push_back(draw(0.0));
    scene.source = draw(0.5);
    scene.validate();
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

std::vector<TrialRecord> run_benchmark(const BenchmarkConfig& config) {
  config.validate();
  const Runner runner(config);
  const auto units = runner.units();
  std::vector<std::vector<TrialRecord>> results(units.size());

  unsigned workers = config.threads ? config.threads : std::max(1U, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, units.size()));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < units.size(); i = next++) results[i] = runner.run(units[i]);
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }

  std::vector<TrialRecord> records;
  for (auto& r : results) {
    for (auto& rec : r) records.push_back(std::move(rec));
  }
  return records;
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<SummaryRow> summarize(const std::vector<TrialRecord>& records) {
  if (records.empty()) throw InputError("no records to summarize");
  using Key = std::tuple<std::string, std::string, double>;
  struct Acc {
    std::vector<double> errors;
    std::size_t n = 0;
  };
  std::map<Key, Acc> groups;
  for (const auto& r : records) {
    auto& g = groups[{r.method, r.feature, r.noise_level}];
    ++g.n;
    if (is_success(r.status) && std::isfinite(r.position_error_m)) g.errors.push_back(r.position_error_m);
  }
  std::vector<SummaryRow> rows;
  for (auto& [key, acc] : groups) {
    std::sort(acc.errors.begin(), acc.errors.end());
    SummaryRow row;
    std::tie(row.method, row.feature, row.noise_level) = key;
    row.median_m = quantile_sorted(acc.errors, 0.5);
    row.q1_m = quantile_sorted(acc.errors, 0.25);
    row.q3_m = quantile_sorted(acc.errors, 0.75);
    row.n = acc.n;
    row.failure_rate = static_cast<double>(acc.n - acc.errors.size()) / static_cast<double>(acc.n);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<HistogramCell> histogram(const std::vector<TrialRecord>& records, std::size_t bins) {
  if (bins == 0) throw InputError("histogram needs at least one bin");
  double rd_lo = std::numeric_limits<double>::infinity(), rd_hi = -rd_lo;
  double pos_lo = rd_lo, pos_hi = -rd_lo;
  std::vector<const TrialRecord*> ok;
  for (const auto& r : records) {
    if (!is_success(r.status) || !std::isfinite(r.position_error_m) || !std::isfinite(r.mean_abs_rd_error_m)) {
      continue;
    }
    ok.push_back(&r);
    rd_lo = std::min(rd_lo, r.mean_abs_rd_error_m);
    rd_hi = std::max(rd_hi, r.mean_abs_rd_error_m);
    pos_lo = std::min(pos_lo, r.position_error_m);
    pos_hi = std::max(pos_hi, r.position_error_m);
  }
  if (ok.empty()) return {};
  const double rd_w = rd_hi > rd_lo ? (rd_hi - rd_lo) / static_cast<double>(bins) : 1.0;
  const double pos_w = pos_hi > pos_lo ? (pos_hi - pos_lo) / static_cast<double>(bins) : 1.0;
  auto bin_of = [&](double v, double lo, double w) {
    return std::min(static_cast<std::size_t>((v - lo) / w), bins - 1);
  };

  using Key = std::tuple<std::string, std::string, std::size_t, std::size_t>;
  std::map<Key, std::size_t> counts;
  for (const auto* r : ok) {
    ++counts[{r->method, r->feature, bin_of(r->mean_abs_rd_error_m, rd_lo, rd_w),
              bin_of(r->position_error_m, pos_lo, pos_w)}];
  }
  std::vector<HistogramCell> cells;
  for (const auto& [key, count] : counts) {
    HistogramCell c;
    std::tie(c.method, c.feature, c.rd_bin, c.pos_bin) = key;
    c.rd_lo = rd_lo + rd_w * static_cast<double>(c.rd_bin);
    c.rd_hi = c.rd_lo + rd_w;
    c.pos_lo = pos_lo + pos_w * static_cast<double>(c.pos_bin);
    c.pos_hi = c.pos_lo + pos_w;
    c.count = count;
    cells.push_back(std::move(c));
  }
  return cells;
}

namespace {

std::vector<std::vector<std::string>> read_table(std::istream& in, std::string_view header,
                                                 std::size_t columns) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("missing CSV header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) throw InputError("unexpected CSV header: " + line);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != columns) throw InputError("CSV row has " + std::to_string(cells.size()) + " columns");
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::size_t parse_count(const std::string& s) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw InputError("not a count: '" + s + "'");
  }
  return v;
}

}  // namespace

void write_records_csv(std::ostream& out, const std::vector<TrialRecord>& records) {
  out << kRecordsHeader << '\n';
  for (const auto& r : records) {
    out << r.method << ',' << r.feature << ',' << r.subset << ',' << format_significant(r.noise_level)
        << ',' << r.trial << ',' << to_string(r.status) << ',' << format_significant(r.position_error_m)
        << ',' << format_significant(r.mean_abs_rd_error_m) << ',' << format_significant(r.wall_time_s)
        << '\n';
  }
}

std::vector<TrialRecord> read_records_csv(std::istream& in) {
  std::vector<TrialRecord> out;
  for (const auto& c : read_table(in, kRecordsHeader, 9)) {
    TrialRecord r;
    r.method = c[0];
    r.feature = c[1];
    r.subset = c[2];
    r.noise_level = parse_double(c[3]);
    r.trial = parse_count(c[4]);
    r.status = parse_trial_status(c[5]);
    r.position_error_m = parse_double(c[6]);
    r.mean_abs_rd_error_m = parse_double(c[7]);
    r.wall_time_s = parse_double(c[8]);
    out.push_back(std::move(r));
  }
  return out;
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << kSummaryHeader << '\n';
  for (const auto& r : rows) {
    out << r.method << ',' << r.feature << ',' << format_significant(r.noise_level) << ','
        << format_significant(r.median_m) << ',' << format_significant(r.q1_m) << ','
        << format_significant(r.q3_m) << ',' << format_significant(r.failure_rate) << ',' << r.n << '\n';
  }
}

std::vector<SummaryRow> read_summary_csv(std::istream& in) {
  std::vector<SummaryRow> out;
  for (const auto& c : read_table(in, kSummaryHeader, 8)) {
    SummaryRow r;
    r.method = c[0];
    r.feature = c[1];
    r.noise_level = parse_double(c[2]);
    r.median_m = parse_double(c[3]);
    r.q1_m = parse_double(c[4]);
    r.q3_m = parse_double(c[5]);
    r.failure_rate = parse_double(c[6]);
    r.n = parse_count(c[7]);
    out.push_back(std::move(r));
  }
  return out;
}

void write_histogram_csv(std::ostream& out, const std::vector<HistogramCell>& cells) {
  out << kHistogramHeader << '\n';
  for (const auto& c : cells) {
    out << c.method << ',' << c.feature << ',' << c.rd_bin << ',' << c.pos_bin << ','
        << format_significant(c.rd_lo) << ',' << format_significant(c.rd_hi) << ','
        << format_significant(c.pos_lo) << ',' << format_significant(c.pos_hi) << ',' << c.count << '\n';
  }
}

std::vector<HistogramCell> read_histogram_csv(std::istream& in) {
  std::vector<HistogramCell> out;
  for (const auto& c : read_table(in, kHistogramHeader, 9)) {
    HistogramCell h;
    h.method = c[0];
    h.feature = c[1];
    h.rd_bin = parse_count(c[2]);
    h.pos_bin = parse_count(c[3]);
    h.rd_lo = parse_double(c[4]);
    h.rd_hi = parse_double(c[5]);
    h.pos_lo = parse_double(c[6]);
    h.pos_hi = parse_double(c[7]);
    h.count = parse_count(c[8]);
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace multilat
