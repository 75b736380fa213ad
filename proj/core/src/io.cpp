#include "multilat/io.hpp"

#include <json.hpp>

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace multilat {
namespace {

using nlohmann::json;

Point3 parse_point(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw InputError(what + " must be an [x, y, z] array");
  Point3 p;
  for (int i = 0; i < 3; ++i) {
    if (!j[static_cast<std::size_t>(i)].is_number()) throw InputError(what + " has a non-numeric coordinate");
    p(i) = j[static_cast<std::size_t>(i)].get<double>();
  }
  return p;
}

json point_json(const Point3& p) { return json::array({p.x(), p.y(), p.z()}); }

}  // namespace

Scene SceneFile::scene() const {
  if (!source) throw InputError("scene file has no source position");
  Scene s{mics, *source, sound_speed};
  s.validate();
  return s;
}

SceneFile parse_scene(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("scene file is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw InputError("scene file must be a JSON object");
  if (!j.contains("mics")) throw InputError("scene file lacks 'mics'");
  SceneFile out;
  const auto& mics = j.at("mics");
  if (!mics.is_array()) throw InputError("'mics' must be a list of [x, y, z]");
  for (std::size_t i = 0; i < mics.size(); ++i) {
    out.mics.push_back(parse_point(mics[i], "mics[" + std::to_string(i) + "]"));
  }
  if (j.contains("source") && !j.at("source").is_null()) out.source = parse_point(j.at("source"), "source");
  if (j.contains("sound_speed")) {
    if (!j.at("sound_speed").is_number()) throw InputError("'sound_speed' must be a number");
    out.sound_speed = j.at("sound_speed").get<double>();
  }
  validate_mics(out.mics, 1);
  if (!(out.sound_speed > 0.0) || !std::isfinite(out.sound_speed)) {
    throw InputError("sound speed must be positive");
  }
  return out;
}

SceneFile read_scene_file(const std::filesystem::path& path) {
  return parse_scene(read_text_file(path));
}

std::string format_scene(const SceneFile& scene) {
  json j;
  j["mics"] = json::array();
  for (const auto& m : scene.mics) j["mics"].push_back(point_json(m));
  if (scene.source) j["source"] = point_json(*scene.source);
  j["sound_speed"] = scene.sound_speed;
  return j.dump(2) + "\n";
}

void write_scene_file(const std::filesystem::path& path, const SceneFile& scene) {
  write_text_file(path, format_scene(scene));
}

std::string format_shortest(double value) {
  if (std::isnan(value)) return "nan";
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), ptr);
}

std::string format_significant(double value, int digits) {
  if (std::isnan(value)) return "nan";
  std::array<char, 64> buf{};
  const int n = std::snprintf(buf.data(), buf.size(), "%.*g", digits, value);
  return std::string(buf.data(), static_cast<std::size_t>(n));
}

double parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  if (text == "nan" || text == "NaN" || text == "-nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw InputError("not a number: '" + std::string(text) + "'");
  }
  return v;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_shortest(m(i, j));
    }
    out << '\n';
  }
}

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  write_matrix_csv(out, m);
}

Eigen::MatrixXd read_matrix_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<double> row;
    for (const auto& cell : split_csv_line(line)) row.push_back(parse_double(cell));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw InputError("CSV rows differ in length");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError("empty CSV matrix");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return m;
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return read_matrix_csv(in);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

}  // namespace multilat
