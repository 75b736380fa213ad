#pragma once

#include "multilat/geometry.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace multilat {

/// Singular values below this fraction of the largest one count as zero.
inline constexpr double kRankTolerance = 1e-12;

/// usrd-ls refuses systems whose normal matrix is worse conditioned than this.
inline constexpr double kMaxNormalCondition = 1e12;

/// Linear system of the squared-range formulation. Rows are [d, r^T] and
/// b = (|r|^2 - d^2) / 2, in coordinates centered on the reference mic.
struct SphericalSystem {
  Eigen::MatrixXd phi;  // (M-1) x 4
  Eigen::VectorXd b;
  Point3 origin = Point3::Zero();  // reference mic in the caller's frame
};

SphericalSystem build_spherical_system(const RdVector& rd, std::span<const Point3> mics);

/// Unconstrained spherical LS. Needs M >= 5.
LocalizationResult usrd_ls(const RdVector& rd, std::span<const Point3> mics);

/// Constrained spherical LS: global minimizer of |phi c - b|^2 subject to
/// c1^2 = |r|^2, c1 >= 0, found through the Lagrange-multiplier secular
/// equation.
LocalizationResult srd_ls(const RdVector& rd, std::span<const Point3> mics);

/// |c1^2 - |r|^2| for an augmented spherical estimate.
inline double spherical_constraint_residual(const Eigen::Vector4d& c) {
  return std::abs(c(0) * c(0) - c.tail<3>().squaredNorm());
}

/// Stacked plane equations, one per microphone triplet p < q < r.
struct ConicSystem {
  Eigen::MatrixXd psi_matrix;  // rows [A, B, C]
  Eigen::VectorXd psi_rhs;     // F
  std::vector<std::array<std::size_t, 3>> triplets;  // rows kept, in row order
  std::vector<std::array<std::size_t, 3>> dropped;   // normalized only
  bool normalized = false;
  Point3 origin = Point3::Zero();  // coordinates are relative to this point
};

ConicSystem build_conic_system(const RdMatrix& rd, std::span<const Point3> mics, bool normalize);

/// Plane-intersection LS on the full RD set, optionally with unit-norm rows.
LocalizationResult conic_ls(const RdMatrix& rd, std::span<const Point3> mics, bool normalize);

/// Symmetric positive-definite RD noise covariance (m^2).
class NoiseCovariance {
 public:
  explicit NoiseCovariance(Eigen::MatrixXd sigma);

  static NoiseCovariance identity(std::size_t n) {
    return NoiseCovariance(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n),
                                                     static_cast<Eigen::Index>(n)));
  }

  const Eigen::MatrixXd& matrix() const { return sigma_; }
  std::size_t size() const { return static_cast<std::size_t>(sigma_.rows()); }

 private:
  Eigen::MatrixXd sigma_;
};

struct HyperbolicOptions {
  /// Starting point in the caller's frame; defaults to the usrd-ls estimate,
  /// or the array barycenter when that is degenerate.
  std::optional<Point3> init;
  std::optional<NoiseCovariance> weights;
  int max_iterations = 100;
  double step_tolerance = 1e-10;
  double initial_damping = 1e-3;
};

/// Weighted RD-domain least squares, (d - d(r))^T S^-1 (d - d(r)), minimized
/// by damped Gauss-Newton.
LocalizationResult hyperbolic_ls(const RdVector& rd, std::span<const Point3> mics,
                                 const HyperbolicOptions& options = {});

/// The weighted hyperbolic cost at a given position (caller's frame).
double hyperbolic_cost(const RdVector& rd, std::span<const Point3> mics, const Point3& position,
                       const std::optional<NoiseCovariance>& weights = std::nullopt);

enum class Method { usrd_ls, srd_ls, conic, conic_norm, hyperbolic };

/// A localization method together with its reference-microphone policy.
/// The policy is ignored by the conic methods, which use every pair.
struct MethodSpec {
  Method method = Method::srd_ls;
  ReferencePolicy reference;

  bool uses_reference() const { return method != Method::conic && method != Method::conic_norm; }
  bool operator==(const MethodSpec&) const = default;
};

std::string_view to_string(Method method);
Method parse_method(std::string_view text);

/// "srd-ls:max-energy", "conic-norm", ...; round-trips with parse_method_spec.
std::string to_string(const MethodSpec& spec);
MethodSpec parse_method_spec(std::string_view text);

/// Runs `method` on a full RD matrix, extracting the reference row when the
/// method needs one.
LocalizationResult localize(Method method, const RdMatrix& rd, std::span<const Point3> mics,
                            std::size_t reference);

}  // namespace multilat
