// Constrained spherical least squares.
//
//   minimize |phi c - b|^2  subject to  c^T J c = 0, c(0) >= 0,  J = diag(1, -1, -1, -1)
//
// Stationary points satisfy (A + l J) c = g with A = phi^T phi, g = phi^T b.
// After simultaneously diagonalizing the pencil (J, A + l0 J) the constraint
// becomes the scalar secular equation
//
//   f(t) = sum_i mu_i h_i^2 / (1 + t mu_i)^2 = 0,       t = l - l0,
//
// which is strictly decreasing on the interval where A + l J is positive
// definite. The root there is bracketed and bisected; roots in the other
// pole intervals come from the numerator polynomial and only matter when the
// first one lands on the c(0) < 0 nappe of the cone.

#include "multilat/estimators.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <unsupported/Eigen/Polynomials>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace multilat {
namespace {

const Eigen::Vector4d kSignature(1.0, -1.0, -1.0, -1.0);

struct Pencil {
  Eigen::Matrix4d basis;  // columns v_i with v_i^T (A + l0 J) v_j = delta_ij
  Eigen::Vector4d mu;     // v_i^T J v_i
  Eigen::Vector4d h;      // basis^T g
  double shift = 0.0;     // l0
};

bool is_definite(const Eigen::Matrix4d& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(m, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  return ev(0) > kRankTolerance * std::max(ev(3), 0.0) && ev(0) > 0.0;
}

// Finds l0 with A + l0 J positive definite. A itself is tried first; it is
// singular only for three-row systems.
std::optional<double> definite_shift(const Eigen::Matrix4d& a) {
  if (is_definite(a)) return 0.0;
  const double scale = std::max(a.trace() / 4.0, 1e-300);
  for (int k = -8; k <= 2; ++k) {
    for (double sign : {1.0, -1.0}) {
      const double l0 = sign * scale * std::pow(10.0, k);
      if (is_definite(a + l0 * kSignature.asDiagonal().toDenseMatrix())) return l0;
    }
  }
  return std::nullopt;
}

double secular(const Pencil& p, double t) {
  double f = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double den = 1.0 + t * p.mu(i);
    f += p.mu(i) * p.h(i) * p.h(i) / (den * den);
  }
  return f;
}

double secular_derivative(const Pencil& p, double t) {
  double f = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double den = 1.0 + t * p.mu(i);
    f -= 2.0 * p.mu(i) * p.mu(i) * p.h(i) * p.h(i) / (den * den * den);
  }
  return f;
}

std::optional<Eigen::Vector4d> solution_at(const Pencil& p, double t) {
  Eigen::Vector4d z;
  for (int i = 0; i < 4; ++i) {
    const double den = 1.0 + t * p.mu(i);
    if (std::abs(den) < 1e-14) return std::nullopt;
    z(i) = p.h(i) / den;
  }
  Eigen::Vector4d c = p.basis * z;
  if (!c.allFinite()) return std::nullopt;
  return c;
}

double newton_polish(const Pencil& p, double t, double lo, double hi) {
  for (int k = 0; k < 8; ++k) {
    const double f = secular(p, t);
    const double df = secular_derivative(p, t);
    if (f == 0.0 || df == 0.0 || !std::isfinite(df)) break;
    const double next = t - f / df;
    if (!(next > lo && next < hi)) break;
    if (std::abs(secular(p, next)) >= std::abs(f)) break;
    t = next;
  }
  return t;
}

// Product of (1 + t mu_j)^2 over j != skip, as ascending coefficients.
std::vector<double> squared_factor_product(const Eigen::Vector4d& mu, int skip) {
  std::vector<double> poly{1.0};
  for (int j = 0; j < 4; ++j) {
    if (j == skip) continue;
    for (int rep = 0; rep < 2; ++rep) {
      std::vector<double> next(poly.size() + 1, 0.0);
      for (std::size_t k = 0; k < poly.size(); ++k) {
        next[k] += poly[k];
        next[k + 1] += poly[k] * mu(j);
      }
      poly = std::move(next);
    }
  }
  return poly;
}

// Real roots of the secular numerator, excluding the poles.
std::vector<double> all_secular_roots(const Pencil& p) {
  std::vector<double> numer(7, 0.0);
  for (int i = 0; i < 4; ++i) {
    const auto prod = squared_factor_product(p.mu, i);
    const double w = p.mu(i) * p.h(i) * p.h(i);
    for (std::size_t k = 0; k < prod.size(); ++k) numer[k] += w * prod[k];
  }
  const double peak = std::abs(*std::max_element(numer.begin(), numer.end(),
                                                 [](double a, double b) {
                                                   return std::abs(a) < std::abs(b);
                                                 }));
  while (numer.size() > 1 && std::abs(numer.back()) <= 1e-14 * peak) numer.pop_back();
  if (numer.size() < 2) return {};

  Eigen::VectorXd coeffs = Eigen::Map<Eigen::VectorXd>(numer.data(), static_cast<Eigen::Index>(numer.size()));
  Eigen::PolynomialSolver<double, Eigen::Dynamic> solver(coeffs);
  std::vector<double> roots;
  for (const auto& root : solver.roots()) {
    if (std::abs(root.imag()) <= 1e-7 * (1.0 + std::abs(root.real()))) roots.push_back(root.real());
  }
  return roots;
}

bool feasible(const Eigen::Vector4d& c) {
  return spherical_constraint_residual(c) <= 1e-6 * (1.0 + c.tail<3>().squaredNorm()) &&
         c(0) >= -1e-9;
}

}  // namespace

LocalizationResult srd_ls(const RdVector& rd, std::span<const Point3> mics) {
  LocalizationResult out;
  out.status = SolveStatus::degenerate;
  if (rd.mic_count() != mics.size()) {
    throw InputError("RD vector size does not match microphone count");
  }
  if (mics.size() < 4) {
    out.diagnostic = "insufficient microphones: srd-ls needs at least 4, got " +
                     std::to_string(mics.size());
    return out;
  }
  const SphericalSystem sys = build_spherical_system(rd, mics);

  // The spatial part must pin down all three coordinates.
  Eigen::JacobiSVD<Eigen::MatrixXd> spatial(sys.phi.rightCols<3>());
  const auto& sv = spatial.singularValues();
  if (!(sv(0) > 0.0) || sv(2) <= kRankTolerance * sv(0)) {
    out.diagnostic = "microphone geometry is coplanar or collinear";
    return out;
  }

  const Eigen::Matrix4d a = sys.phi.transpose() * sys.phi;
  const Eigen::Vector4d g = sys.phi.transpose() * sys.b;

  const auto shift = definite_shift(a);
  if (!shift) {
    out.diagnostic = "no positive-definite multiplier for the spherical pencil";
    return out;
  }

  Pencil pencil;
  pencil.shift = *shift;
  {
    const Eigen::Matrix4d j = kSignature.asDiagonal();
    const Eigen::Matrix4d b = a + pencil.shift * j;
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::Matrix4d> gen(j, b, Eigen::ComputeEigenvectors |
                                                                        Eigen::Ax_lBx);
    if (gen.info() != Eigen::Success) {
      out.diagnostic = "generalized eigen-decomposition failed";
      return out;
    }
    pencil.basis = gen.eigenvectors();
    pencil.mu = gen.eigenvalues();
    pencil.h = pencil.basis.transpose() * g;
  }

  std::vector<double> candidates;
  int iterations = 0;

  // Positive-definite interval: 1 + t mu_i > 0 for all i.
  const double mu_max = pencil.mu.maxCoeff();
  const double mu_min = pencil.mu.minCoeff();
  bool bracketed = false;
  if (mu_max > 0.0 && mu_min < 0.0) {
    const double lo_pole = -1.0 / mu_max;
    const double hi_pole = -1.0 / mu_min;
    const double width = hi_pole - lo_pole;
    double lo = lo_pole;
    double hi = hi_pole;
    // Step inward from the poles until the sign pattern (+, -) appears.
    for (double eps = 1e-3; eps >= 1e-15; eps *= 1e-2) {
      lo = lo_pole + eps * width;
      hi = hi_pole - eps * width;
      if (secular(pencil, lo) > 0.0 && secular(pencil, hi) < 0.0) {
        bracketed = true;
        break;
      }
    }
    if (bracketed) {
      for (; iterations < 200 && hi - lo > 1e-15 * (1.0 + std::abs(lo) + std::abs(hi)); ++iterations) {
        const double mid = 0.5 * (lo + hi);
        (secular(pencil, mid) > 0.0 ? lo : hi) = mid;
      }
      candidates.push_back(newton_polish(pencil, 0.5 * (lo + hi), lo_pole, hi_pole));
    }
  }

  auto pick = [&](const std::vector<double>& ts) {
    std::optional<Eigen::Vector4d> best;
    double best_cost = std::numeric_limits<double>::infinity();
    for (double t : ts) {
      auto c = solution_at(pencil, t);
      if (!c || !feasible(*c)) continue;
      const double cost = (sys.phi * *c - sys.b).squaredNorm();
      if (cost < best_cost) {
        best_cost = cost;
        best = c;
      }
    }
    return best;
  };

  auto best = pick(candidates);
  if (!best) {
    // The definite-interval root lies on the wrong nappe, or did not exist.
    std::vector<double> others;
    for (double t : all_secular_roots(pencil)) {
      double lo = -std::numeric_limits<double>::infinity();
      double hi = std::numeric_limits<double>::infinity();
      for (int i = 0; i < 4; ++i) {
        if (pencil.mu(i) == 0.0) continue;
        const double pole = -1.0 / pencil.mu(i);
        if (pole < t) lo = std::max(lo, pole);
        if (pole > t) hi = std::min(hi, pole);
      }
      others.push_back(newton_polish(pencil, t, lo, hi));
    }
    best = pick(others);
  }

  out.iterations = iterations;
  if (!best) {
    if (!bracketed) {
      out.status = SolveStatus::max_iterations;
      out.diagnostic = "multiplier root search failed to bracket";
    } else {
      out.diagnostic = "no multiplier root gives a feasible estimate";
    }
    return out;
  }

  out.status = SolveStatus::closed_form;
  out.augmented = *best;
  out.position = best->tail<3>() + sys.origin;
  out.residual = (sys.phi * *best - sys.b).squaredNorm();
  return out;
}

}  // namespace multilat
