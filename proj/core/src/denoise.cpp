#include "multilat/denoise.hpp"

#include <Eigen/Dense>

#include <map>
#include <memory>
#include <mutex>

namespace multilat {
namespace {

constexpr double kAntisymmetryTolerance = 1e-9;

void check_antisymmetric(const RdMatrix& rd) {
  if (rd.values.rows() != rd.values.cols()) throw InputError("RD matrix is not square");
  if (rd.mic_count() < 2) throw InputError("need at least 2 microphones");
  if (!rd.values.allFinite()) throw InputError("RD matrix has non-finite entries");
  if (rd.antisymmetry_error() > kAntisymmetryTolerance) {
    throw InputError("RD matrix is not antisymmetric");
  }
}

Eigen::MatrixXd build_projector(std::size_t m) {
  const auto mi = static_cast<Eigen::Index>(m);
  const Eigen::Index pairs = mi * (mi - 1) / 2;
  // d(m, m') = D(m') - D(m)
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(pairs, mi);
  Eigen::Index row = 0;
  for (Eigen::Index i = 0; i < mi; ++i) {
    for (Eigen::Index j = i + 1; j < mi; ++j, ++row) {
      g(row, i) = -1.0;
      g(row, j) = 1.0;
    }
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(g);
  return g * cod.pseudoInverse();
}

}  // namespace

const Eigen::MatrixXd& consistent_projector(std::size_t mic_count) {
  static std::mutex mutex;
  static std::map<std::size_t, std::unique_ptr<const Eigen::MatrixXd>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[mic_count];
  if (!slot) slot = std::make_unique<const Eigen::MatrixXd>(build_projector(mic_count));
  return *slot;
}

Eigen::VectorXd upper_triangle(const RdMatrix& rd) {
  const auto m = rd.values.rows();
  Eigen::VectorXd out(m * (m - 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) out(k++) = rd.values(i, j);
  }
  return out;
}

RdMatrix from_upper_triangle(const Eigen::VectorXd& upper, std::size_t mic_count) {
  const auto m = static_cast<Eigen::Index>(mic_count);
  if (upper.size() != m * (m - 1) / 2) throw InputError("upper triangle has the wrong length");
  RdMatrix rd{Eigen::MatrixXd::Zero(m, m)};
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      rd.values(i, j) = upper(k);
      rd.values(j, i) = -upper(k);
      ++k;
    }
  }
  return rd;
}

RdMatrix tdoa_average(const RdMatrix& rd) {
  check_antisymmetric(rd);
  const auto m = rd.values.rows();
  // With an antisymmetric input, (1/M) sum_k (d(m,k) + d(k,m')) reduces to
  // the difference of scaled row sums. Build the upper triangle and mirror it
  // so that the output is exactly antisymmetric.
  const Eigen::VectorXd row_sums = rd.values.rowwise().sum();
  const Eigen::VectorXd col_sums = rd.values.colwise().sum().transpose();
  RdMatrix out{Eigen::MatrixXd::Zero(m, m)};
  const double inv_m = 1.0 / static_cast<double>(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      out.values(i, j) = inv_m * (row_sums(i) + col_sums(j));
      out.values(j, i) = -out.values(i, j);
    }
  }
  return out;
}

RdMatrix tdoa_average_projected(const RdMatrix& rd) {
  check_antisymmetric(rd);
  const Eigen::MatrixXd& p = consistent_projector(rd.mic_count());
  return from_upper_triangle(p * upper_triangle(rd), rd.mic_count());
}

}  // namespace multilat
