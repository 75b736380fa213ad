#pragma once

#include "multilat/geometry.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace multilat {

/// Scene file contents. The source is optional so that real recordings
/// without ground truth can be described.
struct SceneFile {
  std::vector<Point3> mics;
  std::optional<Point3> source;
  double sound_speed = kDefaultSoundSpeed;

  /// Throws InputError when the file has no source.
  Scene scene() const;
};

/// JSON object {"mics": [[x,y,z], ...], "source": [x,y,z], "sound_speed": c}.
SceneFile parse_scene(std::string_view json_text);
SceneFile read_scene_file(const std::filesystem::path& path);
std::string format_scene(const SceneFile& scene);
void write_scene_file(const std::filesystem::path& path, const SceneFile& scene);

/// Shortest representation that parses back to the same double.
std::string format_shortest(double value);

/// printf("%.{digits}g"), with "nan" for NaN.
std::string format_significant(double value, int digits = 9);

/// Parses a double, accepting "nan"; throws InputError on trailing junk.
double parse_double(std::string_view text);

/// Comma-separated rows, LF line endings, shortest round-trip floats.
void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m);
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_csv(std::istream& in);
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path);

/// Splits one CSV line on commas (no quoting).
std::vector<std::string> split_csv_line(std::string_view line);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace multilat
