#include "lvf/lsq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "lvf/parallel.hpp"

namespace lvf {

namespace {

// Absolute ridge from the config's trace-relative setting.
double ridge_abs(const SolverConfig& cfg, const Eigen::MatrixXd& gram) {
  if (cfg.ridge <= 0.0) return 0.0;
  const double tr = gram.trace();
  return cfg.ridge * std::max(tr, 1e-300) / static_cast<double>(gram.rows());
}

void check_dataset(const PairedDataset& data, const char* op) {
  if (data.pre.cols() < 1)
    throw std::invalid_argument(std::string(op) + ": dataset must contain at least one pair");
  if (data.pre.rows() != data.post.rows() || data.pre.cols() != data.post.cols())
    throw std::invalid_argument(std::string(op) + ": pre/post shape mismatch");
  if (data.pre.minCoeff() < 0.0 || data.pre.maxCoeff() > 1.0 ||
      data.post.minCoeff() < 0.0 || data.post.maxCoeff() > 1.0)
    throw std::invalid_argument(std::string(op) + ": dataset entries outside [0,1]");
}

std::vector<int> mask_to_indices(const std::vector<char>& mask) {
  std::vector<int> idx;
  for (size_t j = 0; j < mask.size(); ++j)
    if (mask[j]) idx.push_back(static_cast<int>(j));
  return idx;
}

// Worst KKT violation given a precomputed gradient, in absolute units.
// The sum-to-one multiplier is estimated as the mean gradient over the
// support.
double kkt_violation_from_grad(const Eigen::VectorXd& g, const Eigen::VectorXd& x,
                               bool with_sum1, double support_tol) {
  double lambda = 0.0;
  if (with_sum1) {
    double acc = 0.0;
    int np = 0;
    for (int j = 0; j < x.size(); ++j)
      if (x[j] > support_tol) {
        acc += g[j];
        ++np;
      }
    lambda = np > 0 ? -acc / np : 0.0;
  }
  double worst = with_sum1 ? std::abs(x.sum() - 1.0) : 0.0;
  for (int j = 0; j < x.size(); ++j) {
    const double gj = g[j] + lambda;
    if (x[j] > support_tol)
      worst = std::max(worst, std::abs(gj));
    else
      worst = std::max(worst, -gj);
  }
  return worst;
}

// Equality-aware least-squares solve restricted to the index set `idx`,
// returned as a full-length vector (zeros elsewhere, not clipped). The
// sum-to-one multiplier comes out of a Schur complement on the block.
Eigen::VectorXd support_solve(const Eigen::MatrixXd& q, const Eigen::VectorXd& b,
                              double jitter, const std::vector<int>& idx,
                              bool with_sum1, double* lambda_out) {
  const int np = static_cast<int>(idx.size());
  Eigen::VectorXd x = Eigen::VectorXd::Zero(q.rows());
  if (lambda_out) *lambda_out = 0.0;
  if (np == 0) return x;
  Eigen::MatrixXd qpp(np, np);
  Eigen::VectorXd bp(np);
  for (int r = 0; r < np; ++r) {
    bp[r] = b[idx[static_cast<size_t>(r)]];
    for (int c = 0; c < np; ++c)
      qpp(r, c) = q(idx[static_cast<size_t>(r)], idx[static_cast<size_t>(c)]);
    qpp(r, r) += jitter;
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(qpp);
  Eigen::VectorXd xp;
  double lambda = 0.0;
  if (with_sum1) {
    const Eigen::VectorXd u = ldlt.solve(bp);
    const Eigen::VectorXd w = ldlt.solve(Eigen::VectorXd::Ones(np));
    const double denom = w.sum();
    lambda = (denom > 1e-300) ? (u.sum() - 1.0) / denom : 0.0;
    xp = u - lambda * w;
  } else {
    xp = ldlt.solve(bp);
  }
  for (int r = 0; r < np; ++r) x[idx[static_cast<size_t>(r)]] = xp[r];
  if (lambda_out) *lambda_out = lambda;
  return x;
}

// Classical Lawson-Hanson active set in Gram form, optionally with the
// row-sum equality: bring in the variable with the most negative reduced
// dual, then restore primal feasibility by line search and removals. The
// objective strictly decreases, so the iteration cannot cycle; entering
// variables that fail to stick get banned, which caps the work on
// degenerate data.
Eigen::VectorXd lawson_hanson(const Eigen::MatrixXd& q, const Eigen::VectorXd& b,
                              double jitter, bool with_sum1, double tol_dual,
                              int max_outer, double support_tol, double* out_viol) {
  const int n = static_cast<int>(q.rows());
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd g = -b;
  double lambda = 0.0;
  std::vector<char> in_p(static_cast<size_t>(n), 0), banned(static_cast<size_t>(n), 0);
  std::vector<int> p;

  if (with_sum1) {  // start from the best single-vertex feasible point
    int j0 = 0;
    b.maxCoeff(&j0);
    p.push_back(j0);
    in_p[static_cast<size_t>(j0)] = 1;
    x = support_solve(q, b, jitter, p, true, &lambda);
    g = q * x - b;
    g.array() += jitter * x.array();
  }

  for (int outer = 0; outer < max_outer; ++outer) {
    int enter = -1;
    double worst = -tol_dual;
    for (int j = 0; j < n; ++j) {
      if (in_p[static_cast<size_t>(j)] || banned[static_cast<size_t>(j)]) continue;
      const double dj = g[j] + lambda;
      if (dj < worst) {
        worst = dj;
        enter = j;
      }
    }
    if (enter < 0) break;
    in_p[static_cast<size_t>(enter)] = 1;
    p.push_back(enter);

    for (int inner = 0; inner <= n && !p.empty(); ++inner) {
      const Eigen::VectorXd z = support_solve(q, b, jitter, p, with_sum1, &lambda);
      bool feasible = true;
      double alpha = 1.0;
      for (int j : p) {
        if (z[j] <= 0.0) {
          feasible = false;
          const double denom = x[j] - z[j];
          if (denom > 0.0) alpha = std::min(alpha, x[j] / denom);
        }
      }
      if (feasible) {
        x = z;
        break;
      }
      for (int j : p) x[j] = std::max(0.0, x[j] + alpha * (z[j] - x[j]));
      std::erase_if(p, [&](int j) {
        if (x[j] <= support_tol * 1e-3) {
          x[j] = 0.0;
          in_p[static_cast<size_t>(j)] = 0;
          return true;
        }
        return false;
      });
    }
    if (!in_p[static_cast<size_t>(enter)]) banned[static_cast<size_t>(enter)] = 1;
    g = q * x - b;
    g.array() += jitter * x.array();
  }
  if (out_viol) *out_viol = kkt_violation_from_grad(g, x, with_sum1, support_tol);
  return x;
}

// Block principal pivoting for min 1/2 x'Qx - b'x over a sign-constrained
// set; `with_sum1` adds the equality constraint sum(x) = 1 through a Schur
// complement on the passive block. Pivoting exchanges whole infeasible
// blocks and finishes most rows in a handful of iterations; when it
// stagnates (rank-deficient data leaves the optimum non-unique and the
// exchanges start cycling inside the solve noise) the monotone
// Lawson-Hanson pass takes over.
Eigen::VectorXd pivot_solve(const Eigen::MatrixXd& q, const Eigen::VectorXd& b,
                            const SolverConfig& cfg, const Eigen::VectorXd* warm,
                            bool with_sum1, double* out_residual, int rank_hint = -1) {
  const int n = static_cast<int>(q.rows());
  // Factorization jitter keyed to the spectral scale (trace bounds the top
  // eigenvalue), keeping passive-block solves at bounded condition number.
  const double jitter = std::max(ridge_abs(cfg, q), 1e-9 * q.trace());
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  // Feasibility slack above the noise floor of solves on nearly singular
  // passive blocks, well inside the 1e-6 KKT contract.
  const double tol = 1e-7 * scale;
  const double accept = 0.3 * cfg.kkt_tol * scale;
  const int pivot_cap = std::min(cfg.max_iters, 150);
  const int size_cap = rank_hint > 0 ? std::min(n, 2 * rank_hint + 64) : n;

  std::vector<char> passive(static_cast<size_t>(n), 0);
  if (warm) {
    for (int j = 0; j < n; ++j) passive[static_cast<size_t>(j)] = (*warm)[j] > 0.0;
  }

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd dual = Eigen::VectorXd::Zero(n);

  // One pivoting phase; true when the KKT conditions hold, leaving the
  // optimum in x. Gives up early on stagnation or runaway passive sets.
  auto run_pivots = [&]() -> bool {
    if (with_sum1 && mask_to_indices(passive).empty()) {
      int jmax = 0;
      b.maxCoeff(&jmax);
      passive[static_cast<size_t>(jmax)] = 1;
    }
    int best_infeasible = n + 1;
    int backoff = 3;
    int stagnant = 0;
    for (int iter = 0; iter < pivot_cap; ++iter) {
      const std::vector<int> p = mask_to_indices(passive);
      const int np = static_cast<int>(p.size());
      if (np > size_cap) return false;
      double lambda = 0.0;
      if (np > 0) {
        x = support_solve(q, b, jitter, p, with_sum1, &lambda);
        dual = q * x - b;
        dual.array() += jitter * x.array();
      } else {
        x.setZero();
        dual = -b;
      }
      if (with_sum1) dual.array() += lambda;

      std::vector<int> infeasible;
      int passive_infeasible = 0;
      double worst = 0.0;
      for (int j = 0; j < n; ++j) {
        if (passive[static_cast<size_t>(j)]) {
          if (x[j] < -tol) {
            infeasible.push_back(j);
            ++passive_infeasible;
            worst = std::max(worst, -x[j]);
          }
        } else if (dual[j] < -tol) {
          infeasible.push_back(j);
          worst = std::max(worst, -dual[j]);
        }
      }
      if (with_sum1 && passive_infeasible == np && np > 0 &&
          passive_infeasible == static_cast<int>(infeasible.size())) {
        // The passive set would empty out; keep the least negative
        // variable so the equality constraint stays representable.
        int keep = -1;
        double best_x = -std::numeric_limits<double>::infinity();
        for (int j : infeasible)
          if (x[j] > best_x) {
            best_x = x[j];
            keep = j;
          }
        if (keep >= 0) std::erase(infeasible, keep);
      }

      if (infeasible.empty()) {
        x = x.cwiseMax(0.0);
        return true;
      }
      if (worst <= accept) {
        // Residual violations already satisfy the KKT contract; stop
        // instead of chasing sign flips inside the solve noise.
        x = x.cwiseMax(0.0);
        return true;
      }

      const int ninf = static_cast<int>(infeasible.size());
      if (ninf < best_infeasible) {
        best_infeasible = ninf;
        backoff = 3;
        stagnant = 0;
      } else if (++stagnant > 15) {
        return false;  // cycling; let the monotone pass finish the job
      } else if (backoff > 0) {
        --backoff;
      } else {
        infeasible = {infeasible.back()};  // Murty's rule: largest index only
      }
      for (int j : infeasible) passive[static_cast<size_t>(j)] ^= 1;
    }
    return false;
  };

  if (run_pivots()) {
    if (out_residual) *out_residual = 0.0;
    return x;
  }

  double viol = 0.0;
  const Eigen::VectorXd polished =
      lawson_hanson(q, b, jitter, with_sum1, accept, std::min(cfg.max_iters, 4 * n),
                    tol, &viol);
  if (out_residual) *out_residual = viol;
  if (viol <= cfg.kkt_tol * scale) return polished;  // inside the contract
  std::ostringstream msg;
  msg << "pivot_solve: no convergence within iteration budget (worst violation "
      << viol / scale << ")";
  throw std::runtime_error(msg.str());
}

// Shared fit driver for the two constrained modes.
TransitionMatrix fit_rows(const PairedDataset& data, const SolverConfig& cfg,
                          bool with_sum1, const char* op) {
  check_dataset(data, op);
  const int n = static_cast<int>(data.pre.rows());

  Eigen::MatrixXd gram = data.pre * data.pre.transpose();
  const Eigen::MatrixXd target = data.post * data.pre.transpose();
  const double jitter = ridge_abs(cfg, gram);
  gram.diagonal().array() += jitter;

  // Warm start every row from the ridge OLS sign pattern; one shared
  // factorization covers all rows. The support is capped by the sample
  // count so passive blocks stay within the data rank and the solves on
  // them stay well conditioned.
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  const Eigen::MatrixXd warm = ldlt.solve(target.transpose()).transpose();
  const int support_cap = static_cast<int>(data.pre.cols());

  SolverConfig row_cfg = cfg;
  row_cfg.ridge = 0.0;  // gram is already jittered

  TransitionMatrix result;
  result.mode = with_sum1 ? FitMode::rowsum : FitMode::nonneg;
  result.a.resize(n, n);
  parallel_for(0, n, [&](int i) {
    const Eigen::VectorXd rhs = target.row(i).transpose();
    Eigen::VectorXd warm_row = warm.row(i).transpose();
    int positives = 0;
    for (int j = 0; j < n; ++j) positives += warm_row[j] > 0.0;
    if (positives > support_cap) {
      std::vector<double> vals;
      vals.reserve(static_cast<size_t>(positives));
      for (int j = 0; j < n; ++j)
        if (warm_row[j] > 0.0) vals.push_back(warm_row[j]);
      std::nth_element(vals.begin(), vals.end() - support_cap, vals.end());
      const double cut = vals[vals.size() - static_cast<size_t>(support_cap)];
      for (int j = 0; j < n; ++j)
        if (warm_row[j] < cut) warm_row[j] = 0.0;
    }
    double residual = 0.0;
    try {
      result.a.row(i) = pivot_solve(gram, rhs, row_cfg, &warm_row, with_sum1,
                                    &residual, support_cap)
                            .transpose();
    } catch (const std::runtime_error& e) {
      std::ostringstream msg;
      msg << op << ": row " << i << " failed: " << e.what();
      throw std::runtime_error(msg.str());
    }
  });
  return result;
}

}  // namespace

std::string to_string(FitMode mode) {
  switch (mode) {
    case FitMode::ols: return "ols";
    case FitMode::nonneg: return "nonneg";
    case FitMode::rowsum: return "rowsum";
  }
  throw std::invalid_argument("to_string: bad fit mode");
}

FitMode fit_mode_from_string(const std::string& s) {
  if (s == "ols") return FitMode::ols;
  if (s == "nonneg") return FitMode::nonneg;
  if (s == "rowsum") return FitMode::rowsum;
  throw std::invalid_argument("unknown fit mode: " + s);
}

TransitionMatrix fit_ols(const PairedDataset& data, const SolverConfig& cfg) {
  check_dataset(data, "fit_ols");
  Eigen::MatrixXd gram = data.pre * data.pre.transpose();
  const Eigen::MatrixXd target = data.post * data.pre.transpose();
  const double lam = ridge_abs(cfg, gram);
  gram.diagonal().array() += lam;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (lam == 0.0) {
    const auto d = ldlt.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    if (d.minCoeff() <= dmax * gram.rows() * 1e-14)
      throw std::runtime_error("fit_ols: singular Gram matrix; set ridge > 0");
  }
  TransitionMatrix result;
  result.mode = FitMode::ols;
  result.a = ldlt.solve(target.transpose()).transpose();
  return result;
}

TransitionMatrix fit_row_nonneg(const PairedDataset& data, const SolverConfig& cfg) {
  return fit_rows(data, cfg, false, "fit_row_nonneg");
}

TransitionMatrix fit_row_sum1(const PairedDataset& data, const SolverConfig& cfg) {
  return fit_rows(data, cfg, true, "fit_row_sum1");
}

Eigen::VectorXd solve_nonneg_row(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs,
                                 const SolverConfig& cfg,
                                 const Eigen::VectorXd* warm_start) {
  return pivot_solve(gram, rhs, cfg, warm_start, false, nullptr);
}

Eigen::VectorXd solve_simplex_row(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs,
                                  const SolverConfig& cfg,
                                  const Eigen::VectorXd* warm_start) {
  return pivot_solve(gram, rhs, cfg, warm_start, true, nullptr);
}

double kkt_residual(const TransitionMatrix& m, const PairedDataset& data,
                    const SolverConfig& cfg) {
  if (m.a.cols() != data.pre.rows())
    throw std::invalid_argument("kkt_residual: shape mismatch");
  const Eigen::MatrixXd gram = data.pre * data.pre.transpose();
  const Eigen::MatrixXd target = data.post * data.pre.transpose();
  // Gradient of the data term row by row: G = A*gram - target.
  const Eigen::MatrixXd grad = m.a * gram - target;
  const double scale = std::max(1.0, target.cwiseAbs().maxCoeff());
  const int n = static_cast<int>(m.a.rows());

  double worst = 0.0;
  if (m.mode == FitMode::ols) {
    const double lam = ridge_abs(cfg, gram);
    worst = (grad + lam * m.a).cwiseAbs().maxCoeff();
  } else {
    for (int i = 0; i < n; ++i) {
      double lambda = 0.0;
      if (m.mode == FitMode::rowsum) {
        double acc = 0.0;
        int np = 0;
        for (int j = 0; j < static_cast<int>(m.a.cols()); ++j)
          if (m.a(i, j) > cfg.kkt_tol) {
            acc += grad(i, j);
            ++np;
          }
        lambda = np > 0 ? -acc / np : 0.0;
        worst = std::max(worst, std::abs(m.a.row(i).sum() - 1.0) * scale);
      }
      for (int j = 0; j < static_cast<int>(m.a.cols()); ++j) {
        const double g = grad(i, j) + lambda;
        if (m.a(i, j) > cfg.kkt_tol)
          worst = std::max(worst, std::abs(g));
        else
          worst = std::max(worst, -g);
      }
    }
  }
  return worst / scale;
}

double fit_objective(const TransitionMatrix& m, const PairedDataset& data) {
  return (data.post - m.a * data.pre).norm();
}

}  // namespace lvf
