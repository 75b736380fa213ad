#include "multilat/geometry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>

namespace multilat {

void validate_mics(std::span<const Point3> mics, std::size_t min_count) {
  if (mics.size() < min_count) {
    throw InputError("need at least " + std::to_string(min_count) + " microphones, got " +
                     std::to_string(mics.size()));
  }
  for (std::size_t i = 0; i < mics.size(); ++i) {
    if (!mics[i].allFinite()) {
      throw InputError("microphone " + std::to_string(i) + " has non-finite coordinates");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if ((mics[i] - mics[j]).norm() <= kMinMicSeparation) {
        throw InputError("microphones " + std::to_string(j) + " and " + std::to_string(i) +
                         " coincide");
      }
    }
  }
}

void Scene::validate() const {
  validate_mics(mics, 2);
  if (!source.allFinite()) throw InputError("source has non-finite coordinates");
  if (!(sound_speed > 0.0) || !std::isfinite(sound_speed)) {
    throw InputError("sound speed must be positive and finite");
  }
}

double RdMatrix::antisymmetry_error() const {
  if (values.rows() != values.cols()) return std::numeric_limits<double>::infinity();
  if (values.size() == 0) return 0.0;
  return std::max((values + values.transpose()).cwiseAbs().maxCoeff(),
                  values.diagonal().cwiseAbs().maxCoeff());
}

std::string_view to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::closed_form: return "closed_form";
    case SolveStatus::degenerate: return "degenerate";
    case SolveStatus::max_iterations: return "max_iterations";
  }
  return "unknown";
}

RdMatrix true_rd_full(const Scene& scene) {
  scene.validate();
  const auto m = static_cast<Eigen::Index>(scene.mic_count());
  Eigen::VectorXd dist(m);
  for (Eigen::Index i = 0; i < m; ++i) dist(i) = (scene.mics[static_cast<std::size_t>(i)] - scene.source).norm();

  RdMatrix rd{Eigen::MatrixXd::Zero(m, m)};
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      rd.values(i, j) = dist(j) - dist(i);
      rd.values(j, i) = -rd.values(i, j);
    }
  }
  return rd;
}

RdVector true_rd_ref(const Scene& scene, std::size_t reference) {
  scene.validate();
  if (reference >= scene.mic_count()) throw InputError("reference index out of range");
  const double d_ref = (scene.mics[reference] - scene.source).norm();
  RdVector out{reference, Eigen::VectorXd(static_cast<Eigen::Index>(scene.mic_count() - 1))};
  Eigen::Index k = 0;
  for (std::size_t m = 0; m < scene.mic_count(); ++m) {
    if (m == reference) continue;
    out.values(k++) = (scene.mics[m] - scene.source).norm() - d_ref;
  }
  return out;
}

RdVector extract_reference_row(const RdMatrix& rd, std::size_t reference) {
  const std::size_t m = rd.mic_count();
  if (reference >= m) throw InputError("reference index out of range");
  RdVector out{reference, Eigen::VectorXd(static_cast<Eigen::Index>(m - 1))};
  Eigen::Index k = 0;
  for (std::size_t j = 0; j < m; ++j) {
    if (j != reference) out.values(k++) = rd(reference, j);
  }
  return out;
}

RdMatrix restrict_to(const RdMatrix& rd, std::span<const std::size_t> indices) {
  const auto n = static_cast<Eigen::Index>(indices.size());
  RdMatrix out{Eigen::MatrixXd(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto a = indices[static_cast<std::size_t>(i)];
      const auto b = indices[static_cast<std::size_t>(j)];
      if (a >= rd.mic_count() || b >= rd.mic_count()) throw InputError("subset index out of range");
      out.values(i, j) = rd(a, b);
    }
  }
  return out;
}

Point3 barycenter(std::span<const Point3> mics) {
  Point3 acc = Point3::Zero();
  for (const auto& p : mics) acc += p;
  return mics.empty() ? acc : Point3(acc / static_cast<double>(mics.size()));
}

ReferencePolicy parse_reference_policy(std::string_view text) {
  if (text == "nearest-barycenter") return ReferencePolicy::nearest_barycenter();
  if (text == "max-energy" || text == "max") return ReferencePolicy::max_energy();
  if (text == "min-energy" || text == "min") return ReferencePolicy::min_energy();
  if (text.starts_with("index:")) {
    std::size_t idx = 0;
    const auto digits = text.substr(6);
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), idx);
    if (ec == std::errc{} && ptr == digits.data() + digits.size() && !digits.empty()) {
      return ReferencePolicy::fixed(idx);
    }
  }
  throw InputError("unknown reference policy '" + std::string(text) + "'");
}

std::string to_string(const ReferencePolicy& policy) {
  switch (policy.kind) {
    case ReferencePolicy::Kind::nearest_barycenter: return "nearest-barycenter";
    case ReferencePolicy::Kind::fixed: return "index:" + std::to_string(policy.index);
    case ReferencePolicy::Kind::max_energy: return "max-energy";
    case ReferencePolicy::Kind::min_energy: return "min-energy";
  }
  return "unknown";
}

std::size_t select_reference(std::span<const Point3> mics, const ReferencePolicy& policy) {
  if (mics.empty()) throw InputError("no microphones");
  switch (policy.kind) {
    case ReferencePolicy::Kind::fixed:
      if (policy.index >= mics.size()) throw InputError("reference index out of range");
      return policy.index;
    case ReferencePolicy::Kind::nearest_barycenter: {
      const Point3 center = barycenter(mics);
      std::size_t best = 0;
      double best_dist = (mics[0] - center).norm();
      for (std::size_t i = 1; i < mics.size(); ++i) {
        const double d = (mics[i] - center).norm();
        if (d < best_dist) {
          best = i;
          best_dist = d;
        }
      }
      return best;
    }
    case ReferencePolicy::Kind::max_energy:
    case ReferencePolicy::Kind::min_energy:
      break;
  }
  throw InputError("energy-based reference policies need microphone signals");
}

std::vector<Point3> lab_circle_array() {
  constexpr double radius = 2.28;
  constexpr double low = 1.04;
  constexpr double high = 1.34;
  std::vector<Point3> mics;
  mics.reserve(8);
  for (int m = 0; m < 8; ++m) {
    const double angle = 2.0 * std::numbers::pi * m / 8.0;
    mics.emplace_back(radius * std::cos(angle), radius * std::sin(angle), (m / 2) % 2 == 0 ? low : high);
  }
  return mics;
}

Point3 lab_source_position(int position) {
  switch (position) {
    case 1: return {-0.80, -0.80, 1.19};
    case 2: return {0.00, -0.80, 1.19};
    case 3: return {0.80, -0.80, 1.19};
    default: throw InputError("lab source position must be 1, 2 or 3");
  }
}

Scene lab_scene(int position, double sound_speed) {
  return Scene{lab_circle_array(), lab_source_position(position), sound_speed};
}

}  // namespace multilat
