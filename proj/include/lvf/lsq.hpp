#pragma once

#include <Eigen/Dense>
#include <string>

namespace lvf {

enum class FitMode { ols = 0, nonneg = 1, rowsum = 2 };

std::string to_string(FitMode mode);
FitMode fit_mode_from_string(const std::string& s);

// Paired transition data in the canonical (pose-normalized) frame.
// Columns of `pre` are vectorized images before the push; the matching
// columns of `post` are the images after it.
struct PairedDataset {
  Eigen::MatrixXd pre;   // N^2 x M
  Eigen::MatrixXd post;  // N^2 x M
  int length_bucket = 0;
};

struct SolverConfig {
  double ridge = 1e-8;  // relative to trace(pre*pre^T)/N^2
  double kkt_tol = 1e-6;
  int max_iters = 5000;
};

struct TransitionMatrix {
  Eigen::MatrixXd a;  // N^2 x N^2
  FitMode mode = FitMode::ols;
};

// Unconstrained fit via the normal equations
// A = post*pre^T * (pre*pre^T + ridge*I)^-1. With ridge = 0 a singular
// Gram matrix raises a conditioning error.
TransitionMatrix fit_ols(const PairedDataset& data, const SolverConfig& cfg);

// Row-decomposed non-negative least squares: each row independently
// minimizes ||post[i,:] - A[i,:]*pre||_2 subject to A[i,:] >= 0, solved
// by block principal pivoting on the shared Gram matrix.
TransitionMatrix fit_row_nonneg(const PairedDataset& data, const SolverConfig& cfg);

// Row-decomposed simplex-constrained least squares: A[i,:] >= 0 and
// sum_j A[i,j] = 1 for every row.
TransitionMatrix fit_row_sum1(const PairedDataset& data, const SolverConfig& cfg);

// Maximum mode-appropriate KKT violation across rows; at most kkt_tol for
// any matrix returned by the fit operations above.
double kkt_residual(const TransitionMatrix& m, const PairedDataset& data,
                    const SolverConfig& cfg);

// Data-term objective ||post - A*pre||_F.
double fit_objective(const TransitionMatrix& m, const PairedDataset& data);

// Row-level solvers on the normal-equation form min 1/2 x'Qx - b'x.
// Exposed for direct testing against small oracles.
Eigen::VectorXd solve_nonneg_row(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs,
                                 const SolverConfig& cfg,
                                 const Eigen::VectorXd* warm_start = nullptr);
Eigen::VectorXd solve_simplex_row(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs,
                                  const SolverConfig& cfg,
                                  const Eigen::VectorXd* warm_start = nullptr);

}  // namespace lvf
