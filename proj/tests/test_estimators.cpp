#include "multilat/estimators.hpp"
#include "multilat/simulate.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace multilat;
using multilat::testing::random_rotation;
using multilat::testing::random_scene;

namespace {

constexpr Method kAllMethods[] = {Method::usrd_ls, Method::srd_ls, Method::conic, Method::conic_norm,
                                  Method::hyperbolic};

RdMatrix noisy_full(const Scene& s, double sigma, std::uint64_t seed) {
  RdNoiseModel noise;
  noise.sigma = sigma;
  noise.seed = seed;
  return perturb_rd(true_rd_full(s), noise);
}

// Spherical system written out independently of the library: reference mic
// moved to the origin, rows [d, r^T], rhs (|r|^2 - d^2)/2.
void reference_system(const RdVector& rd, const std::vector<Point3>& mics, Eigen::MatrixXd& phi,
                      Eigen::VectorXd& b) {
  const auto rows = static_cast<Eigen::Index>(mics.size() - 1);
  phi.resize(rows, 4);
  b.resize(rows);
  Eigen::Index k = 0;
  for (std::size_t m = 0; m < mics.size(); ++m) {
    if (m == rd.reference_index) continue;
    const Point3 r = mics[m] - mics[rd.reference_index];
    const double d = rd.values(k);
    phi(k, 0) = d;
    phi.block<1, 3>(k, 1) = r.transpose();
    b(k) = 0.5 * (r.x() * r.x() + r.y() * r.y() + r.z() * r.z() - d * d);
    ++k;
  }
}

double spherical_cost(const Eigen::MatrixXd& phi, const Eigen::VectorXd& b, const Eigen::Vector4d& c) {
  return (phi * c - b).squaredNorm();
}

}  // namespace

TEST(SphericalSystem, PlugInRows) {
  const std::vector<Point3> mics{Point3(0, 0, 0), Point3(2, 0, 0), Point3(3, 0, 0)};
  RdVector rd{0, Eigen::Vector2d(0.0, 1.0)};
  const SphericalSystem sys = build_spherical_system(rd, mics);
  ASSERT_EQ(sys.phi.rows(), 2);
  EXPECT_EQ(sys.phi.row(0), Eigen::RowVector4d(0, 2, 0, 0));
  EXPECT_EQ(sys.b(0), 2.0);
  EXPECT_EQ(sys.phi.row(1), Eigen::RowVector4d(1, 3, 0, 0));
  EXPECT_EQ(sys.b(1), 4.0);
}

TEST(SphericalSystem, TrueAugmentedVectorSolvesSystem) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Scene s = random_scene(rng, 8);
    const std::size_t ref = 3;
    const SphericalSystem sys = build_spherical_system(true_rd_ref(s, ref), s.mics);
    Eigen::Vector4d c;
    c(0) = (s.mics[ref] - s.source).norm();
    c.tail<3>() = s.source - s.mics[ref];
    EXPECT_LE((sys.phi * c - sys.b).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(UsrdLs, RecoversSourceFromFiveMics) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    const Scene s = random_scene(rng, 5);
    const auto res = usrd_ls(true_rd_ref(s, 0), s.mics);
    ASSERT_EQ(res.status, SolveStatus::closed_form) << res.diagnostic;
    EXPECT_LE((res.position - s.source).norm(), 1e-6);
  }
}

TEST(UsrdLs, FourMicsAreInsufficient) {
  std::mt19937_64 rng(23);
  const Scene s = random_scene(rng, 4);
  const auto res = usrd_ls(true_rd_ref(s, 0), s.mics);
  EXPECT_EQ(res.status, SolveStatus::degenerate);
  EXPECT_NE(res.diagnostic.find("insufficient microphones"), std::string::npos);
}

TEST(UsrdLs, CoplanarArrayIsFlagged) {
  std::vector<Point3> mics;
  for (int i = 0; i < 6; ++i) {
    const double a = i * 1.047;
    mics.emplace_back(2.0 * std::cos(a), 2.0 * std::sin(a), 0.0);
  }
  Scene s{mics, Point3(0.3, -0.2, 0.8)};
  const auto res = usrd_ls(true_rd_ref(s, 0), s.mics);
  EXPECT_EQ(res.status, SolveStatus::degenerate);
}

TEST(UsrdLs, MatchesNormalEquationsOracle) {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 100; ++trial) {
    const Scene s = random_scene(rng, 7);
    RdNoiseModel noise;
    noise.sigma = 0.05;
    noise.seed = static_cast<std::uint64_t>(trial);
    const RdVector rd = perturb_rd(true_rd_ref(s, 2), noise);
    Eigen::MatrixXd phi;
    Eigen::VectorXd b;
    reference_system(rd, s.mics, phi, b);
    const Eigen::Matrix4d normal = phi.transpose() * phi;
    const Eigen::Vector4d oracle = normal.inverse() * (phi.transpose() * b);

    const auto res = usrd_ls(rd, s.mics);
    ASSERT_TRUE(res.augmented.has_value());
    EXPECT_LE((*res.augmented - oracle).norm(), 1e-9 * oracle.norm());
    EXPECT_NEAR(res.residual, spherical_cost(phi, b, oracle), 1e-9 * (1.0 + res.residual));
  }
}

TEST(SrdLs, RecoversSourceFromEightMics) {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 50; ++trial) {
    const Scene s = random_scene(rng, 8);
    const auto res = srd_ls(true_rd_ref(s, 1), s.mics);
    ASSERT_TRUE(is_success(res.status)) << res.diagnostic;
    EXPECT_LE((res.position - s.source).norm(), 1e-6);
  }
}

TEST(SrdLs, EnforcesConstraintWhereUsrdDoesNot) {
  const Scene s = lab_scene(2);
  RdNoiseModel noise;
  noise.sigma = 0.1;
  double usrd_violation = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    noise.seed = seed;
    const RdVector rd = perturb_rd(true_rd_ref(s, 0), noise);
    const auto c = srd_ls(rd, s.mics);
    ASSERT_TRUE(is_success(c.status)) << c.diagnostic;
    const Eigen::Vector4d cc = *c.augmented;
    EXPECT_LE(spherical_constraint_residual(cc), 1e-6 * (1.0 + cc.tail<3>().squaredNorm()));
    EXPECT_GE(cc(0), -1e-9);
    const auto u = usrd_ls(rd, s.mics);
    usrd_violation = std::max(usrd_violation, spherical_constraint_residual(*u.augmented));
  }
  EXPECT_GT(usrd_violation, 1e-3);
}

TEST(SrdLs, CollinearArrayIsDegenerate) {
  std::vector<Point3> mics;
  for (int i = 0; i < 6; ++i) mics.emplace_back(0.7 * i, 0.0, 0.0);
  Scene s{mics, Point3(1.0, 1.5, 0.5)};
  const auto res = srd_ls(true_rd_ref(s, 0), s.mics);
  EXPECT_EQ(res.status, SolveStatus::degenerate);
}

TEST(SrdLs, NoFeasiblePointHasLowerCost) {
  // Sampling oracle: the returned cost must not exceed the cost of any
  // feasible augmented vector [|r|, r] on a dense grid around the array.
  std::mt19937_64 rng(26);
  for (int trial = 0; trial < 10; ++trial) {
    const Scene s = random_scene(rng, 6);
    RdNoiseModel noise;
    noise.sigma = 0.2;
    noise.seed = static_cast<std::uint64_t>(trial);
    const RdVector rd = perturb_rd(true_rd_ref(s, 0), noise);
    const auto res = srd_ls(rd, s.mics);
    ASSERT_TRUE(is_success(res.status)) << res.diagnostic;
    Eigen::MatrixXd phi;
    Eigen::VectorXd b;
    reference_system(rd, s.mics, phi, b);
    const double cost = spherical_cost(phi, b, *res.augmented);
    double best = std::numeric_limits<double>::infinity();
    for (double x = -7.0; x <= 7.0; x += 0.25) {
      for (double y = -7.0; y <= 7.0; y += 0.25) {
        for (double z = -7.0; z <= 7.0; z += 0.25) {
          const Eigen::Vector3d r(x, y, z);
          Eigen::Vector4d c;
          c << r.norm(), r;
          best = std::min(best, spherical_cost(phi, b, c));
        }
      }
    }
    EXPECT_LE(cost, best + 1e-9);
  }
}

// Plane normals written out independently: for a triplet (p, q, r) with
// source distances D, the normal is (D_r - D_q) p + (D_p - D_r) q + (D_q - D_p) r.
Eigen::MatrixXd triplet_normals(const Scene& s) {
  const std::size_t m = s.mics.size();
  std::vector<double> dist;
  for (const auto& mic : s.mics) dist.push_back((mic - s.source).norm());
  std::vector<Eigen::RowVector3d> rows;
  for (std::size_t p = 0; p < m; ++p) {
    for (std::size_t q = p + 1; q < m; ++q) {
      for (std::size_t r = q + 1; r < m; ++r) {
        rows.push_back(((dist[r] - dist[q]) * s.mics[p] + (dist[p] - dist[r]) * s.mics[q] +
                        (dist[q] - dist[p]) * s.mics[r])
                           .transpose());
      }
    }
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), 3);
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = rows[i];
  return out;
}

Eigen::Index numerical_rank(const Eigen::MatrixXd& a) {
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(a).singularValues();
  return (sv.array() > 1e-9 * sv(0)).count();
}

TEST(ConicLs, FourMicsGiveOnlyTwoIndependentPlanes) {
  // Each plane equates two linear expressions in the reference distance, so
  // M microphones yield only M - 2 independent planes: four microphones pin
  // the source to a line, not a point.
  std::mt19937_64 rng(27);
  for (int trial = 0; trial < 50; ++trial) {
    const Scene s = random_scene(rng, 4);
    EXPECT_EQ(numerical_rank(triplet_normals(s)), 2);
    const RdMatrix rd = true_rd_full(s);
    const ConicSystem sys = build_conic_system(rd, s.mics, false);
    const Eigen::VectorXd plane_error = sys.psi_matrix * (s.source - sys.origin) - sys.psi_rhs;
    EXPECT_LE(plane_error.cwiseAbs().maxCoeff(), 1e-9);
    const auto res = conic_ls(rd, s.mics, false);
    EXPECT_EQ(res.status, SolveStatus::degenerate);
    EXPECT_TRUE(std::isnan(res.position.x()));
  }
}

TEST(ConicLs, FiveNonCoplanarMicsAreExact) {
  std::mt19937_64 rng(127);
  for (int trial = 0; trial < 50; ++trial) {
    const Scene s = random_scene(rng, 5);
    EXPECT_EQ(numerical_rank(triplet_normals(s)), 3);
    for (bool normalize : {false, true}) {
      const auto res = conic_ls(true_rd_full(s), s.mics, normalize);
      ASSERT_EQ(res.status, SolveStatus::closed_form) << res.diagnostic;
      EXPECT_LE((res.position - s.source).norm(), 1e-6);
    }
  }
}

TEST(ConicLs, AllZeroRdsLeaveNoPlanes) {
  // Every coefficient of the plane equations is a linear combination of the
  // RDs, so an all-zero matrix carries no positional information.
  std::vector<Point3> mics{Point3(1, 0, 0.3), Point3(-1, 0, -0.3), Point3(0, 1, -0.3), Point3(0, -1, 0.3),
                           Point3(0.7, 0.7, 0.0)};
  RdMatrix zero{Eigen::MatrixXd::Zero(5, 5)};
  EXPECT_EQ(conic_ls(zero, mics, false).status, SolveStatus::degenerate);
  EXPECT_EQ(conic_ls(zero, mics, true).status, SolveStatus::degenerate);
}

TEST(ConicLs, NormalizationDoesNotChangeExactSolution) {
  std::mt19937_64 rng(28);
  for (int trial = 0; trial < 30; ++trial) {
    const Scene s = random_scene(rng, 8);
    const RdMatrix rd = true_rd_full(s);
    const auto raw = conic_ls(rd, s.mics, false);
    const auto norm = conic_ls(rd, s.mics, true);
    EXPECT_LE((raw.position - norm.position).norm(), 1e-9);
  }
}

TEST(ConicSystem, TrueSourceLiesOnEveryPlane) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    const Scene s = random_scene(rng, 7);
    for (bool normalize : {false, true}) {
      const ConicSystem sys = build_conic_system(true_rd_full(s), s.mics, normalize);
      EXPECT_EQ(sys.psi_matrix.rows(), 35);
      EXPECT_EQ(sys.triplets.size(), 35u);
      const Eigen::VectorXd r = sys.psi_matrix * (s.source - sys.origin) - sys.psi_rhs;
      EXPECT_LE(r.cwiseAbs().maxCoeff(), 1e-9);
      if (normalize) {
        EXPECT_LE((sys.psi_matrix.rowwise().norm().array() - 1.0).abs().maxCoeff(), 1e-12);
      }
    }
  }
}

TEST(ConicSystem, NormalizationDropsVanishingRows) {
  // Collinear mics at equal RDs give identically zero plane coefficients.
  std::vector<Point3> mics{Point3(0, 0, 0), Point3(1, 0, 0), Point3(2, 0, 0), Point3(0, 1, 1)};
  RdMatrix rd{Eigen::MatrixXd::Zero(4, 4)};
  const ConicSystem sys = build_conic_system(rd, mics, true);
  EXPECT_EQ(sys.triplets.size() + sys.dropped.size(), 4u);
  EXPECT_EQ(sys.dropped.size(), 4u);
}

TEST(ConicLs, RejectsThreeMics) {
  std::vector<Point3> mics{Point3(0, 0, 0), Point3(1, 0, 0), Point3(0, 1, 0)};
  Scene s{mics, Point3(0.2, 0.3, 0.5)};
  EXPECT_EQ(conic_ls(true_rd_full(s), s.mics, false).status, SolveStatus::degenerate);
}

TEST(HyperbolicLs, TrueInitIsImmediatelyOptimal) {
  std::mt19937_64 rng(30);
  const Scene s = random_scene(rng, 6);
  HyperbolicOptions opts;
  opts.init = s.source;
  const auto res = hyperbolic_ls(true_rd_ref(s, 0), s.mics, opts);
  EXPECT_EQ(res.status, SolveStatus::converged);
  EXPECT_LE(res.residual, 1e-20);
  EXPECT_LE(res.iterations, 1);
  EXPECT_LE((res.position - s.source).norm(), 1e-9);
}

TEST(HyperbolicLs, ConvergesFromSphericalInit) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const Scene s = random_scene(rng, 8);
    const RdVector rd = true_rd_ref(s, 0);
    HyperbolicOptions opts;
    opts.init = usrd_ls(rd, s.mics).position;
    const auto res = hyperbolic_ls(rd, s.mics, opts);
    ASSERT_EQ(res.status, SolveStatus::converged) << res.diagnostic;
    EXPECT_LE((res.position - s.source).norm(), 1e-6);
  }
}

TEST(HyperbolicLs, UniformCovarianceScalingGivesSameIterates) {
  const Scene s = lab_scene(1);
  RdNoiseModel noise;
  noise.sigma = 0.05;
  noise.seed = 3;
  const RdVector rd = perturb_rd(true_rd_ref(s, 0), noise);
  for (int iters = 1; iters <= 8; ++iters) {
    HyperbolicOptions a;
    a.init = Point3(0.5, 0.5, 1.0);
    a.max_iterations = iters;
    a.weights = NoiseCovariance::identity(7);
    HyperbolicOptions b = a;
    b.weights = NoiseCovariance(4.0 * Eigen::MatrixXd::Identity(7, 7));
    const auto ra = hyperbolic_ls(rd, s.mics, a);
    const auto rb = hyperbolic_ls(rd, s.mics, b);
    EXPECT_LE((ra.position - rb.position).norm(), 1e-12) << "iterations " << iters;
    EXPECT_NEAR(ra.residual, 4.0 * rb.residual, 1e-12);
  }
}

TEST(HyperbolicLs, CostNeverIncreases) {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 10; ++trial) {
    const Scene s = random_scene(rng, 6);
    RdNoiseModel noise;
    noise.sigma = 0.1;
    noise.seed = static_cast<std::uint64_t>(trial);
    const RdVector rd = perturb_rd(true_rd_ref(s, 0), noise);
    const Point3 init = barycenter(s.mics) + Point3(1.0, -0.5, 0.7);
    double previous = hyperbolic_cost(rd, s.mics, init);
    for (int iters = 1; iters <= 30; ++iters) {
      HyperbolicOptions opts;
      opts.init = init;
      opts.max_iterations = iters;
      const auto res = hyperbolic_ls(rd, s.mics, opts);
      EXPECT_LE(res.residual, previous + 1e-15);
      EXPECT_NEAR(res.residual, hyperbolic_cost(rd, s.mics, res.position), 1e-12);
      previous = res.residual;
    }
  }
}

TEST(HyperbolicLs, CorrelatedWeightsMatchWhitenedCost) {
  const Scene s = lab_scene(3);
  Eigen::MatrixXd sigma = 0.01 * Eigen::MatrixXd::Identity(7, 7);
  sigma.array() += 0.005;
  RdNoiseModel noise;
  noise.sigma = 0.05;
  noise.seed = 9;
  const RdVector rd = perturb_rd(true_rd_ref(s, 0), noise);
  HyperbolicOptions opts;
  opts.weights = NoiseCovariance(sigma);
  const auto res = hyperbolic_ls(rd, s.mics, opts);
  ASSERT_EQ(res.status, SolveStatus::converged);
  // Independent evaluation of (d - d(r))^T S^-1 (d - d(r)).
  const RdVector model = true_rd_ref(Scene{s.mics, res.position}, 0);
  const Eigen::VectorXd e = rd.values - model.values;
  EXPECT_NEAR(res.residual, e.dot(sigma.ldlt().solve(e)), 1e-10);
  // The optimum has a vanishing weighted gradient: small moves cannot help.
  for (int axis = 0; axis < 3; ++axis) {
    for (double h : {1e-4, -1e-4}) {
      Point3 p = res.position;
      p(axis) += h;
      EXPECT_GE(hyperbolic_cost(rd, s.mics, p, opts.weights), res.residual - 1e-12);
    }
  }
}

TEST(HyperbolicLs, StartingOnMicrophoneIsGuarded) {
  std::mt19937_64 rng(33);
  const Scene s = random_scene(rng, 6);
  HyperbolicOptions opts;
  opts.init = s.mics[2];
  const auto res = hyperbolic_ls(true_rd_ref(s, 0), s.mics, opts);
  EXPECT_TRUE(res.position.allFinite());
  EXPECT_NE(res.status, SolveStatus::degenerate);
}

TEST(NoiseCovariance, ValidatesInput) {
  EXPECT_THROW(NoiseCovariance(Eigen::MatrixXd::Identity(2, 3)), InputError);
  Eigen::MatrixXd asym = Eigen::MatrixXd::Identity(3, 3);
  asym(0, 1) = 0.1;
  EXPECT_THROW(NoiseCovariance{asym}, InputError);
  Eigen::MatrixXd indefinite = Eigen::MatrixXd::Identity(2, 2);
  indefinite(0, 1) = indefinite(1, 0) = 2.0;
  EXPECT_THROW(NoiseCovariance{indefinite}, InputError);
  EXPECT_NO_THROW(NoiseCovariance::identity(4));
}

TEST(HyperbolicLs, RunawayIterateIsReportedAsDegenerate) {
  // A poor closed-form start can leave the iteration in the far-field valley
  // of the cost, where it slides away from the array without bound.
  const Scene s = lab_scene(2);
  RdNoiseModel noise;
  noise.sigma = 0.05;
  noise.seed = 236;
  const RdMatrix rd = perturb_rd(true_rd_full(s), noise);
  const RdVector v = extract_reference_row(rd, select_reference(s.mics, ReferencePolicy::nearest_barycenter()));
  const auto res = hyperbolic_ls(v, s.mics);
  EXPECT_EQ(res.status, SolveStatus::degenerate);
  EXPECT_NE(res.diagnostic.find("diverged"), std::string::npos) << res.diagnostic;
  // Started at the true source the same data gives a sensible fit.
  HyperbolicOptions opts;
  opts.init = s.source;
  const auto near = hyperbolic_ls(v, s.mics, opts);
  ASSERT_TRUE(is_success(near.status));
  EXPECT_LT((near.position - s.source).norm(), 0.5);
}

TEST(Estimators, TranslationEquivariance) {
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 20; ++trial) {
    const Scene s = random_scene(rng, 7);
    const RdMatrix rd = noisy_full(s, 0.01, static_cast<std::uint64_t>(trial));
    const Point3 t(3.5, -12.0, 0.75);
    std::vector<Point3> moved;
    for (const auto& m : s.mics) moved.push_back(m + t);
    for (Method method : kAllMethods) {
      const auto a = localize(method, rd, s.mics, 0);
      const auto b = localize(method, rd, moved, 0);
      ASSERT_TRUE(is_success(a.status) && is_success(b.status)) << to_string(method);
      EXPECT_LE((b.position - (a.position + t)).norm(), 1e-9) << to_string(method);
    }
  }
}

TEST(Estimators, RotationEquivariance) {
  std::mt19937_64 rng(35);
  for (int trial = 0; trial < 20; ++trial) {
    const Scene s = random_scene(rng, 7);
    const RdMatrix rd = noisy_full(s, 0.01, static_cast<std::uint64_t>(trial));
    const Eigen::Matrix3d rot = random_rotation(rng);
    std::vector<Point3> turned;
    for (const auto& m : s.mics) turned.push_back(rot * m);
    for (Method method : kAllMethods) {
      const auto a = localize(method, rd, s.mics, 2);
      const auto b = localize(method, rd, turned, 2);
      ASSERT_TRUE(is_success(a.status) && is_success(b.status)) << to_string(method);
      EXPECT_LE((b.position - rot * a.position).norm(), 1e-9) << to_string(method);
    }
  }
}

TEST(Estimators, MethodNamesRoundTrip) {
  for (Method m : kAllMethods) EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_THROW(parse_method("chan-ho"), InputError);
  const MethodSpec spec = parse_method_spec("srd-ls:max-energy");
  EXPECT_EQ(spec.method, Method::srd_ls);
  EXPECT_EQ(spec.reference.kind, ReferencePolicy::Kind::max_energy);
  EXPECT_EQ(to_string(spec), "srd-ls:max-energy");
  EXPECT_EQ(parse_method_spec("conic").method, Method::conic);
}

TEST(Localize, ResultInvariants) {
  std::mt19937_64 rng(36);
  for (int trial = 0; trial < 20; ++trial) {
    const Scene s = random_scene(rng, 6);
    const RdMatrix rd = noisy_full(s, 0.05, static_cast<std::uint64_t>(trial));
    for (Method method : kAllMethods) {
      const auto r = localize(method, rd, s.mics, 1);
      EXPECT_GE(r.residual, 0.0);
      if (r.status != SolveStatus::degenerate) {
        EXPECT_TRUE(r.position.allFinite());
      }
    }
  }
}
