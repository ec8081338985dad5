#pragma once

#include <Eigen/Dense>
#include <functional>
#include <thread>
#include <vector>

#include "effdid/errors.hpp"

namespace effdid {

// Symmetrize, clip negative eigenvalues at zero, and add a small ridge
// (1e-10 * trace/dim). Returns the repaired matrix and whether the input
// needed repair.
struct PsdRepairResult {
  Eigen::MatrixXd matrix;
  bool repaired = false;
};

// Symmetrizes the matrix; when it is indefinite beyond rounding, clips the
// negative eigenvalues at zero and adds a ridge of 1e-10 * trace/dim.
// Definite inputs pass through untouched so exact algebraic identities
// survive the weight solve.
inline PsdRepairResult psd_repair(const Eigen::MatrixXd& m) {
  PsdRepairResult out;
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  Eigen::VectorXd ev = es.eigenvalues();
  const double emax = ev.cwiseAbs().maxCoeff();
  if (ev.minCoeff() >= -1e-12 * emax) {
    out.matrix = sym;
    return out;
  }
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev[i] < 0.0) ev[i] = 0.0;
  Eigen::MatrixXd repaired =
      es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  const double dim = static_cast<double>(m.rows());
  const double ridge = 1e-10 * repaired.trace() / dim;
  repaired += ridge * Eigen::MatrixXd::Identity(m.rows(), m.cols());
  out.matrix = 0.5 * (repaired + repaired.transpose());
  out.repaired = true;
  return out;
}

// Minimizer of w' V w subject to w'1 = 1 for symmetric PSD V.
//
// Regular case: w = 1'V^{-1} / (1'V^{-1} 1). When V is singular the limit of
// the ridge-regularized problem applies: if the null space of V contains a
// direction with nonzero coordinate sum, the optimum variance is zero and the
// minimum-norm weight vector inside the null space is returned; otherwise the
// pseudo-inverse acts on the range. Throws DEGENERATE_INFORMATION when no
// direction with 1'w != 0 carries information.
inline Eigen::VectorXd min_variance_weights(const Eigen::MatrixXd& v) {
  const Eigen::Index k = v.rows();
  if (k == 1) return Eigen::VectorXd::Ones(1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (v + v.transpose()));
  const Eigen::VectorXd ev = es.eigenvalues();
  const Eigen::MatrixXd u = es.eigenvectors();
  const double emax = ev.cwiseAbs().maxCoeff();
  const double tol = std::max(1e-13 * emax, 1e-300);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(k);

  // Component of the all-ones vector inside the (numerical) null space.
  Eigen::VectorXd null_part = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd pinv_sum = Eigen::VectorXd::Zero(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::VectorXd ui = u.col(i);
    const double proj = ui.dot(ones);
    if (ev[i] <= tol) {
      null_part += proj * ui;
    } else {
      pinv_sum += (proj / ev[i]) * ui;
    }
  }
  const double null_mass = null_part.dot(ones);
  if (std::abs(null_mass) > 1e-9 * std::sqrt(static_cast<double>(k))) {
    return null_part / null_mass;
  }
  const double denom = pinv_sum.dot(ones);
  if (!(denom > 1e-300)) {
    throw Error("DEGENERATE_INFORMATION",
                "information matrix admits no weight vector with unit sum");
  }
  Eigen::VectorXd w = pinv_sum / denom;
  // Renormalize exactly so the weights sum to one at machine precision.
  return w / w.sum();
}

// Runs fn(i) for i in [0, count). Jobs must be independent; results should be
// written to per-index slots so the outcome does not depend on scheduling.
inline void parallel_for(std::size_t count, int threads,
                         const std::function<void(std::size_t)>& fn) {
  if (threads <= 0) {
    threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads <= 0) threads = 1;
  }
  if (threads == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::size_t per = (count + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    std::size_t lo = t * per;
    std::size_t hi = std::min(count, lo + per);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

} // namespace effdid
