#include "multilat/bench.hpp"

#include <json.hpp>

namespace multilat {
namespace {

using nlohmann::json;

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError(std::string("config key '") + key + "' has the wrong type");
  }
}

Point3 point_from(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw InputError(what + " must be [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::string_view to_string(VadRule rule) {
  return rule == VadRule::split_energy ? "split_energy" : "summed_waveform";
}

VadRule parse_vad_rule(std::string_view text) {
  if (text == "split_energy") return VadRule::split_energy;
  if (text == "summed_waveform") return VadRule::summed_waveform;
  throw InputError("unknown VAD rule '" + std::string(text) + "'");
}

}  // namespace

BenchmarkConfig parse_benchmark_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("benchmark config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw InputError("benchmark config must be a JSON object");

  try {
    BenchmarkConfig c;
    const auto mode = get_or<std::string>(j, "mode", "rd");
    if (mode == "rd") {
      c.mode = BenchMode::rd;
    } else if (mode == "signal") {
      c.mode = BenchMode::signal;
    } else {
      throw InputError("mode must be 'rd' or 'signal'");
    }
    c.seed = get_or<std::uint64_t>(j, "seed", 1);
    c.trials = get_or<std::size_t>(j, "trials", 1);
    c.threads = get_or<unsigned>(j, "threads", 0);
    c.sound_speed = get_or<double>(j, "sound_speed", kDefaultSoundSpeed);
    c.timing = get_or<bool>(j, "timing", false);
    c.histogram_bins = get_or<std::size_t>(j, "histogram_bins", 30);

    if (j.contains("scenes")) {
      const auto& s = j.at("scenes");
      const auto kind = get_or<std::string>(s, "kind", "lab");
      if (kind == "lab") {
        c.scenes.kind = SceneSource::Kind::lab;
        c.scenes.positions = get_or<std::vector<int>>(s, "positions", {1, 2, 3});
      } else if (kind == "random") {
        c.scenes.kind = SceneSource::Kind::random;
        c.scenes.count = get_or<std::size_t>(s, "count", 1);
        c.scenes.mic_count = get_or<std::size_t>(s, "mic_count", 8);
        if (s.contains("bounds")) {
          const auto& b = s.at("bounds");
          if (!b.is_array() || b.size() != 2) throw InputError("bounds must be [[lower], [upper]]");
          c.scenes.lower = point_from(b[0], "bounds[0]");
          c.scenes.upper = point_from(b[1], "bounds[1]");
        }
      } else {
        throw InputError("scenes.kind must be 'lab' or 'random'");
      }
    }

    if (j.contains("subsets")) {
      const auto& s = j.at("subsets");
      const auto kind = get_or<std::string>(s, "kind", "full");
      if (kind == "full") {
        c.subsets.kind = SubsetSpec::Kind::full;
      } else if (kind == "all_k_of_m") {
        c.subsets.kind = SubsetSpec::Kind::all_k_of_m;
        if (!s.contains("k")) throw InputError("subsets.k is required for all_k_of_m");
        c.subsets.k = s.at("k").get<std::size_t>();
      } else {
        throw InputError("subsets.kind must be 'full' or 'all_k_of_m'");
      }
    }

    if (j.contains("features")) {
      c.features.clear();
      for (const auto& f : j.at("features")) c.features.push_back(parse_feature(f.get<std::string>()));
    }
    c.methods.clear();
    if (j.contains("methods")) {
      for (const auto& m : j.at("methods")) c.methods.push_back(parse_method_spec(m.get<std::string>()));
    }

    if (j.contains("noise")) {
      for (const auto& n : j.at("noise")) {
        if (c.mode == BenchMode::rd) {
          RdNoiseModel model;
          model.kind = parse_noise_kind(get_or<std::string>(n, "kind", "gaussian"));
          model.sigma = get_or<double>(n, "sigma", 0.0);
          model.outlier_fraction = get_or<double>(n, "outlier_fraction", 0.0);
          model.outlier_scale = get_or<double>(n, "outlier_scale", 0.0);
          c.rd_noise.push_back(model);
        } else {
          if (!n.contains("snr_db")) throw InputError("signal-mode noise entries need snr_db");
          c.snr_db.push_back(n.at("snr_db").get<double>());
        }
      }
    }

    if (j.contains("signal")) {
      const auto& s = j.at("signal");
      c.signal.duration_s = get_or<double>(s, "duration_s", c.signal.duration_s);
      c.signal.frames.sample_rate = get_or<double>(s, "sample_rate", c.signal.frames.sample_rate);
      c.signal.frames.frame_duration = get_or<double>(s, "frame_duration", c.signal.frames.frame_duration);
      c.signal.frames.overlap = get_or<double>(s, "overlap", c.signal.frames.overlap);
      c.signal.interpolate = get_or<bool>(s, "interpolate", c.signal.interpolate);
      c.signal.vad_rule = parse_vad_rule(get_or<std::string>(s, "vad_rule", "split_energy"));
      c.signal.gain_law = parse_gain_law(get_or<std::string>(s, "gain_law", "inverse_distance"));
    }

    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw InputError(std::string("benchmark config: ") + e.what());
  }
}

std::string format_benchmark_config(const BenchmarkConfig& c) {
  json j;
  j["mode"] = c.mode == BenchMode::rd ? "rd" : "signal";
  j["seed"] = c.seed;
  j["trials"] = c.trials;
  j["threads"] = c.threads;
  j["sound_speed"] = c.sound_speed;
  j["timing"] = c.timing;
  j["histogram_bins"] = c.histogram_bins;
  if (c.scenes.kind == SceneSource::Kind::lab) {
    j["scenes"] = {{"kind", "lab"}, {"positions", c.scenes.positions}};
  } else {
    j["scenes"] = {{"kind", "random"},
                   {"count", c.scenes.count},
                   {"mic_count", c.scenes.mic_count},
                   {"bounds",
                    {{c.scenes.lower.x(), c.scenes.lower.y(), c.scenes.lower.z()},
                     {c.scenes.upper.x(), c.scenes.upper.y(), c.scenes.upper.z()}}}};
  }
  if (c.subsets.kind == SubsetSpec::Kind::full) {
    j["subsets"] = {{"kind", "full"}};
  } else {
    j["subsets"] = {{"kind", "all_k_of_m"}, {"k", c.subsets.k}};
  }
  j["features"] = json::array();
  for (const auto& f : c.features) j["features"].push_back(to_string(f));
  j["methods"] = json::array();
  for (const auto& m : c.methods) j["methods"].push_back(to_string(m));
  j["noise"] = json::array();
  if (c.mode == BenchMode::rd) {
    for (const auto& n : c.rd_noise) {
      j["noise"].push_back({{"kind", std::string(to_string(n.kind))},
                            {"sigma", n.sigma},
                            {"outlier_fraction", n.outlier_fraction},
                            {"outlier_scale", n.outlier_scale}});
    }
  } else {
    for (double s : c.snr_db) j["noise"].push_back({{"snr_db", s}});
  }
  j["signal"] = {{"duration_s", c.signal.duration_s},
                 {"sample_rate", c.signal.frames.sample_rate},
                 {"frame_duration", c.signal.frames.frame_duration},
                 {"overlap", c.signal.frames.overlap},
                 {"interpolate", c.signal.interpolate},
                 {"vad_rule", std::string(to_string(c.signal.vad_rule))},
                 {"gain_law", std::string(to_string(c.signal.gain_law))}};
  return j.dump(2) + "\n";
}

}  // namespace multilat
