#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace multilat {

using Point3 = Eigen::Vector3d;

/// Speed of sound in air at 20 degrees C.
inline constexpr double kDefaultSoundSpeed = 343.0;

/// Minimum separation below which two microphones are considered coincident.
inline constexpr double kMinMicSeparation = 1e-9;

/// Thrown for malformed inputs (size mismatches, invalid scenes, bad indices).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Microphone array, source and propagation speed. Coordinates in meters.
struct Scene {
  std::vector<Point3> mics;
  Point3 source = Point3::Zero();
  double sound_speed = kDefaultSoundSpeed;

  std::size_t mic_count() const { return mics.size(); }

  /// Throws InputError when a scene invariant is violated.
  void validate() const;
};

/// Validates microphone positions only (count >= min_count, finite, distinct).
void validate_mics(std::span<const Point3> mics, std::size_t min_count = 2);

/// Full pairwise range differences, values(m, m') = D_{m'} - D_m.
struct RdMatrix {
  Eigen::MatrixXd values;

  std::size_t mic_count() const { return static_cast<std::size_t>(values.rows()); }
  double operator()(std::size_t m, std::size_t n) const {
    return values(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  }

  /// Largest |d(m,m') + d(m',m)| and |d(m,m)|.
  double antisymmetry_error() const;
};

/// Reference-based range differences D_{m'} - D_ref for m' != ref, in
/// ascending m' order.
struct RdVector {
  std::size_t reference_index = 0;
  Eigen::VectorXd values;

  std::size_t mic_count() const { return static_cast<std::size_t>(values.size()) + 1; }
};

enum class SolveStatus { converged, closed_form, degenerate, max_iterations };

std::string_view to_string(SolveStatus status);

inline bool is_success(SolveStatus s) {
  return s == SolveStatus::converged || s == SolveStatus::closed_form;
}

struct LocalizationResult {
  Point3 position = Point3::Constant(std::numeric_limits<double>::quiet_NaN());
  /// Cost function value at the returned position.
  double residual = 0.0;
  SolveStatus status = SolveStatus::degenerate;
  /// Human-readable reason for degenerate/max_iterations outcomes.
  std::string diagnostic;
  int iterations = 0;
  /// Conic only: triplets excluded by the row-norm floor.
  std::size_t dropped_rows = 0;
  /// Spherical estimators only: [D; r] in reference-translated coordinates.
  std::optional<Eigen::Vector4d> augmented;
};

RdMatrix true_rd_full(const Scene& scene);
RdVector true_rd_ref(const Scene& scene, std::size_t reference);

/// Row `reference` of a full RD matrix, non-reference columns only.
RdVector extract_reference_row(const RdMatrix& rd, std::size_t reference);

/// Restriction of an RD matrix to the given microphone indices (in order).
RdMatrix restrict_to(const RdMatrix& rd, std::span<const std::size_t> indices);

inline double tdoa_to_rd(double tdoa_seconds, double sound_speed) {
  return sound_speed * tdoa_seconds;
}

Point3 barycenter(std::span<const Point3> mics);

struct ReferencePolicy {
  enum class Kind { nearest_barycenter, fixed, max_energy, min_energy };
  Kind kind = Kind::nearest_barycenter;
  std::size_t index = 0;  // fixed only

  static ReferencePolicy nearest_barycenter() { return {}; }
  static ReferencePolicy fixed(std::size_t i) { return {Kind::fixed, i}; }
  static ReferencePolicy max_energy() { return {Kind::max_energy, 0}; }
  static ReferencePolicy min_energy() { return {Kind::min_energy, 0}; }

  bool needs_energy() const { return kind == Kind::max_energy || kind == Kind::min_energy; }
  bool operator==(const ReferencePolicy&) const = default;
};

/// Parses "nearest-barycenter", "max-energy", "min-energy" or "index:N".
ReferencePolicy parse_reference_policy(std::string_view text);
std::string to_string(const ReferencePolicy& policy);

/// Signal-free reference choice. Energy policies are rejected here; see
/// select_reference_energy in tdoa.hpp. Ties go to the lowest index.
std::size_t select_reference(std::span<const Point3> mics, const ReferencePolicy& policy);

/// Circle of eight microphones (radius 2.28 m) used for the lab-geometry
/// scenes. Every microphone sits 15 cm below (1.04 m) or above (1.34 m) the
/// 1.19 m source height, in neighbouring pairs: low, low, high, high, ...
/// A strict low/high alternation would make the range differences identical
/// to those of a coplanar array for a source at 1.19 m, which leaves the
/// conic plane system rank-deficient on many 5-subsets.
std::vector<Point3> lab_circle_array();

/// Lab source positions 1..3: (-0.8|0|0.8, -0.8, 1.19).
Point3 lab_source_position(int position);

Scene lab_scene(int position, double sound_speed = kDefaultSoundSpeed);

}  // namespace multilat
