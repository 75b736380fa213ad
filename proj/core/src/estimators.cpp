#include "multilat/estimators.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace multilat {
namespace {

void check_rd_vector(const RdVector& rd, std::span<const Point3> mics) {
  if (rd.mic_count() != mics.size()) {
    throw InputError("RD vector has " + std::to_string(rd.values.size()) + " entries for " +
                     std::to_string(mics.size()) + " microphones");
  }
  if (rd.reference_index >= mics.size()) throw InputError("reference index out of range");
  if (!rd.values.allFinite()) throw InputError("RD vector has non-finite entries");
}

// Hyperbolic iterates farther than this many array apertures from the array
// are treated as divergent.
constexpr double kDivergenceFactor = 1e4;

LocalizationResult degenerate(std::string why) {
  LocalizationResult r;
  r.status = SolveStatus::degenerate;
  r.diagnostic = std::move(why);
  return r;
}

// Non-reference microphones relative to the reference, in RD vector order.
std::vector<Point3> translated_others(const RdVector& rd, std::span<const Point3> mics) {
  std::vector<Point3> out;
  out.reserve(mics.size() - 1);
  const Point3& origin = mics[rd.reference_index];
  for (std::size_t m = 0; m < mics.size(); ++m) {
    if (m != rd.reference_index) out.push_back(mics[m] - origin);
  }
  return out;
}

}  // namespace

SphericalSystem build_spherical_system(const RdVector& rd, std::span<const Point3> mics) {
  check_rd_vector(rd, mics);
  const auto others = translated_others(rd, mics);
  const auto rows = static_cast<Eigen::Index>(others.size());
  SphericalSystem sys{Eigen::MatrixXd(rows, 4), Eigen::VectorXd(rows), mics[rd.reference_index]};
  for (Eigen::Index k = 0; k < rows; ++k) {
    const Point3& r = others[static_cast<std::size_t>(k)];
    const double d = rd.values(k);
    sys.phi(k, 0) = d;
    sys.phi.block<1, 3>(k, 1) = r.transpose();
    sys.b(k) = 0.5 * (r.squaredNorm() - d * d);
  }
  return sys;
}

LocalizationResult usrd_ls(const RdVector& rd, std::span<const Point3> mics) {
  check_rd_vector(rd, mics);
  if (mics.size() < 5) {
    return degenerate("insufficient microphones: usrd-ls needs at least 5 in 3D, got " +
                      std::to_string(mics.size()));
  }
  const SphericalSystem sys = build_spherical_system(rd, mics);

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(sys.phi, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  if (!(smin > 0.0) || (smax / smin) * (smax / smin) > kMaxNormalCondition) {
    return degenerate("ill-conditioned spherical system (near-coplanar or collinear array)");
  }
  const Eigen::Vector4d c = svd.solve(sys.b);

  LocalizationResult out;
  out.position = c.tail<3>() + sys.origin;
  out.residual = (sys.phi * c - sys.b).squaredNorm();
  out.status = SolveStatus::closed_form;
  out.augmented = c;
  return out;
}

ConicSystem build_conic_system(const RdMatrix& rd, std::span<const Point3> mics, bool normalize) {
  const std::size_t m = mics.size();
  if (rd.values.rows() != rd.values.cols() || rd.mic_count() != m) {
    throw InputError("RD matrix size does not match microphone count");
  }
  if (!rd.values.allFinite()) throw InputError("RD matrix has non-finite entries");

  ConicSystem sys;
  sys.normalized = normalize;
  sys.origin = barycenter(mics);

  std::vector<Point3> pos(m);
  std::vector<double> sq(m);
  for (std::size_t i = 0; i < m; ++i) {
    pos[i] = mics[i] - sys.origin;
    sq[i] = pos[i].squaredNorm();
  }

  std::vector<Eigen::Vector4d> rows;
  rows.reserve(m * (m - 1) * (m - 2) / 6);
  for (std::size_t p = 0; p < m; ++p) {
    for (std::size_t q = p + 1; q < m; ++q) {
      for (std::size_t r = q + 1; r < m; ++r) {
        const double d_pq = rd(p, q);
        const double d_qr = rd(q, r);
        const double d_rp = rd(r, p);
        Eigen::Vector4d row;
        row.head<3>() = d_qr * pos[p] + d_rp * pos[q] + d_pq * pos[r];
        row(3) = 0.5 * (d_pq * d_qr * d_rp + d_qr * sq[p] + d_rp * sq[q] + d_pq * sq[r]);
        if (normalize) {
          const double norm = row.head<3>().norm();
          if (norm < kRankTolerance) {
            sys.dropped.push_back({p, q, r});
            continue;
          }
          row /= norm;
        }
        rows.push_back(row);
        sys.triplets.push_back({p, q, r});
      }
    }
  }

  const auto n = static_cast<Eigen::Index>(rows.size());
  sys.psi_matrix.resize(n, 3);
  sys.psi_rhs.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    sys.psi_matrix.row(i) = rows[static_cast<std::size_t>(i)].head<3>().transpose();
    sys.psi_rhs(i) = rows[static_cast<std::size_t>(i)](3);
  }
  return sys;
}

LocalizationResult conic_ls(const RdMatrix& rd, std::span<const Point3> mics, bool normalize) {
  if (mics.size() < 4) {
    return degenerate("insufficient microphones: conic LS needs at least 4, got " +
                      std::to_string(mics.size()));
  }
  const ConicSystem sys = build_conic_system(rd, mics, normalize);
  if (sys.psi_matrix.rows() < 3) {
    auto out = degenerate("fewer than three usable triplets");
    out.dropped_rows = sys.dropped.size();
    return out;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(sys.psi_matrix, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(2) <= kRankTolerance * sv(0)) {
    auto out = degenerate("plane system is rank deficient");
    out.dropped_rows = sys.dropped.size();
    return out;
  }
  svd.setThreshold(kRankTolerance);
  const Point3 r = svd.solve(sys.psi_rhs);

  LocalizationResult out;
  out.position = r + sys.origin;
  out.residual = (sys.psi_matrix * r - sys.psi_rhs).squaredNorm();
  out.status = SolveStatus::closed_form;
  out.dropped_rows = sys.dropped.size();
  return out;
}

NoiseCovariance::NoiseCovariance(Eigen::MatrixXd sigma) : sigma_(std::move(sigma)) {
  if (sigma_.rows() != sigma_.cols() || sigma_.rows() == 0) {
    throw InputError("covariance must be a non-empty square matrix");
  }
  if (!sigma_.allFinite()) throw InputError("covariance has non-finite entries");
  if ((sigma_ - sigma_.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw InputError("covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma_, Eigen::EigenvaluesOnly);
  if (!(eig.eigenvalues().minCoeff() > 0.0)) {
    throw InputError("covariance is not positive definite");
  }
}

namespace {

// Residuals d - d_hat(r) and Jacobian of those residuals, reference at origin.
void hyperbolic_residuals(const Eigen::VectorXd& d, const std::vector<Point3>& others,
                          const Point3& r, Eigen::VectorXd& e, Eigen::MatrixXd* jac) {
  const auto n = d.size();
  const double r_norm = r.norm();
  const Point3 u_ref = r_norm > 0.0 ? Point3(r / r_norm) : Point3::Zero();
  for (Eigen::Index k = 0; k < n; ++k) {
    const Point3 diff = r - others[static_cast<std::size_t>(k)];
    const double dist = diff.norm();
    e(k) = d(k) - (dist - r_norm);
    if (jac) {
      // d e / d r = -(u_k - u_ref)
      const Point3 u_k = dist > 0.0 ? Point3(diff / dist) : Point3::Zero();
      jac->row(k) = (u_ref - u_k).transpose();
    }
  }
}

bool collides(const Point3& r, const std::vector<Point3>& others) {
  if (r.norm() < kMinMicSeparation) return true;
  return std::any_of(others.begin(), others.end(),
                     [&](const Point3& m) { return (r - m).norm() < kMinMicSeparation; });
}

}  // namespace

double hyperbolic_cost(const RdVector& rd, std::span<const Point3> mics, const Point3& position,
                       const std::optional<NoiseCovariance>& weights) {
  check_rd_vector(rd, mics);
  const auto others = translated_others(rd, mics);
  Eigen::VectorXd e(rd.values.size());
  hyperbolic_residuals(rd.values, others, position - mics[rd.reference_index], e, nullptr);
  if (!weights) return e.squaredNorm();
  if (weights->size() != static_cast<std::size_t>(e.size())) {
    throw InputError("covariance size does not match RD vector");
  }
  return e.dot(weights->matrix().llt().solve(e));
}

LocalizationResult hyperbolic_ls(const RdVector& rd, std::span<const Point3> mics,
                                 const HyperbolicOptions& options) {
  check_rd_vector(rd, mics);
  validate_mics(mics, 2);
  const auto n = rd.values.size();
  if (options.weights && options.weights->size() != static_cast<std::size_t>(n)) {
    throw InputError("covariance size does not match RD vector");
  }

  const Point3 origin = mics[rd.reference_index];
  const auto others = translated_others(rd, mics);
  std::vector<Point3> local_mics(others);
  local_mics.push_back(Point3::Zero());
  const Point3 center = barycenter(local_mics);
  double coordinate_scale = 0.0;
  for (const auto& m : others) coordinate_scale = std::max(coordinate_scale, m.norm());

  Point3 r;
  if (options.init) {
    if (!options.init->allFinite()) throw InputError("initial point is not finite");
    r = *options.init - origin;
  } else {
    const auto seed = usrd_ls(rd, mics);
    r = seed.status == SolveStatus::closed_form ? Point3(seed.position - origin) : center;
  }

  // Whitening: S = L L^T, residuals and Jacobian are premultiplied by L^-1.
  std::optional<Eigen::LLT<Eigen::MatrixXd>> whitener;
  if (options.weights) whitener.emplace(options.weights->matrix());
  auto whiten = [&](auto& x) {
    if (whitener) whitener->matrixL().solveInPlace(x);
  };

  auto guard = [&](Point3& p) {
    if (!collides(p, others)) return true;
    const Point3 toward = center - p;
    if (toward.norm() < kMinMicSeparation) return false;
    p += 1e-6 * toward.normalized();
    return !collides(p, others);
  };

  LocalizationResult out;
  if (!guard(r)) return degenerate("estimate collides with a microphone");

  Eigen::VectorXd e(n);
  Eigen::MatrixXd jac(n, 3);
  hyperbolic_residuals(rd.values, others, r, e, &jac);
  whiten(e);
  whiten(jac);
  double cost = e.squaredNorm();
  double damping = options.initial_damping;

  out.status = SolveStatus::max_iterations;
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    if (cost == 0.0) {
      out.status = SolveStatus::converged;
      break;
    }
    const Eigen::Matrix3d jtj = jac.transpose() * jac;
    const Eigen::Vector3d grad = jac.transpose() * e;
    // Marquardt scaling keeps the iterates invariant to a uniform rescaling
    // of the covariance.
    Eigen::Vector3d scale = jtj.diagonal();
    const double floor = std::max(scale.maxCoeff(), 1e-300) * kRankTolerance;
    scale = scale.cwiseMax(floor);
    Eigen::Matrix3d lhs = jtj;
    lhs.diagonal() += damping * scale;
    const Eigen::Vector3d step = lhs.ldlt().solve(-grad);
    if (!step.allFinite()) return degenerate("singular Gauss-Newton system");
    // Convergence is judged on the undamped step: a large damping shrinks the
    // step without the iterate being near the minimum.
    const Eigen::Vector3d gauss_newton = jtj.ldlt().solve(-grad);
    const double stall = gauss_newton.allFinite() ? gauss_newton.norm() : step.norm();
    if (stall < options.step_tolerance) {
      out.status = SolveStatus::converged;
      break;
    }

    Point3 candidate = r + step;
    if (!guard(candidate)) return degenerate("estimate collides with a microphone");
    // Far outside the array the cost flattens to its far-field limit and the
    // iterate can slide away indefinitely; that is a divergence, not a fix.
    if ((candidate - center).norm() > kDivergenceFactor * (1.0 + coordinate_scale)) {
      return degenerate("iterate diverged away from the array");
    }
    Eigen::VectorXd e_new(n);
    Eigen::MatrixXd jac_new(n, 3);
    hyperbolic_residuals(rd.values, others, candidate, e_new, &jac_new);
    whiten(e_new);
    whiten(jac_new);
    const double cost_new = e_new.squaredNorm();
    // Close to the minimum the cost is flat to rounding. Residuals carry an
    // absolute rounding error of about eps * coordinate scale, so the cost is
    // only known to about 2 |e| eps scale; a step inside that band that
    // shrinks the gradient is still progress.
    const double magnitude = 1.0 + candidate.norm() + coordinate_scale;
    const double band = 64.0 * std::numeric_limits<double>::epsilon() * magnitude * std::sqrt(cost);
    const bool tied = cost_new <= cost + band && (jac_new.transpose() * e_new).norm() < grad.norm();
    if (cost_new < cost || tied) {
      r = candidate;
      e = std::move(e_new);
      jac = std::move(jac_new);
      cost = cost_new;
      damping = std::max(damping / 10.0, 1e-12);
    } else {
      damping *= 10.0;
      if (damping > 1e12) {
        // No descent direction left at any damping: a stationary point.
        out.status = SolveStatus::converged;
        break;
      }
    }
  }

  out.iterations = iter;
  out.position = r + origin;
  out.residual = cost;
  return out;
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::usrd_ls: return "usrd-ls";
    case Method::srd_ls: return "srd-ls";
    case Method::conic: return "conic";
    case Method::conic_norm: return "conic-norm";
    case Method::hyperbolic: return "hyperbolic";
  }
  return "unknown";
}

Method parse_method(std::string_view text) {
  for (auto m : {Method::usrd_ls, Method::srd_ls, Method::conic, Method::conic_norm,
                 Method::hyperbolic}) {
    if (text == to_string(m)) return m;
  }
  throw InputError("unknown method '" + std::string(text) + "'");
}

std::string to_string(const MethodSpec& spec) {
  std::string out(to_string(spec.method));
  if (spec.uses_reference()) out += ":" + to_string(spec.reference);
  return out;
}

MethodSpec parse_method_spec(std::string_view text) {
  const auto colon = text.find(':');
  MethodSpec spec;
  spec.method = parse_method(text.substr(0, colon));
  if (colon != std::string_view::npos) {
    if (!spec.uses_reference()) {
      throw InputError("method '" + std::string(to_string(spec.method)) +
                       "' does not take a reference policy");
    }
    spec.reference = parse_reference_policy(text.substr(colon + 1));
  }
  return spec;
}

LocalizationResult localize(Method method, const RdMatrix& rd, std::span<const Point3> mics,
                            std::size_t reference) {
  switch (method) {
    case Method::conic: return conic_ls(rd, mics, false);
    case Method::conic_norm: return conic_ls(rd, mics, true);
    case Method::usrd_ls: return usrd_ls(extract_reference_row(rd, reference), mics);
    case Method::srd_ls: return srd_ls(extract_reference_row(rd, reference), mics);
    case Method::hyperbolic: return hyperbolic_ls(extract_reference_row(rd, reference), mics);
  }
  throw InputError("unknown method");
}

}  // namespace multilat
