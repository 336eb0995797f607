#ifndef DAB_LBFGS_HPP
#define DAB_LBFGS_HPP

#include <functional>
#include <string>
#include <vector>

#include "dab/grid.hpp"

namespace dab {

struct LbfgsConfig {
  int max_iterations = 200;
  /// Stop when |g| / |g0| falls below this.
  double grad_tol = 1e-6;
  int memory = 10;
  double armijo_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  int max_backtracks = 50;
};

struct LbfgsResult {
  Vector x;
  std::vector<double> cost;       // J at every accepted iterate, starting with x0
  std::vector<double> grad_norm;  // |grad J| at the same iterates
  int iterations = 0;
  std::string exit_reason;        // converged | max_iterations | stalled
};

/// Objective: returns J(x) and writes grad J(x) into the second argument.
using Objective = std::function<double(const Vector &, Vector &)>;

/// Limited-memory BFGS with Armijo backtracking. Accepted iterates never
/// increase J; on line-search failure the best iterate is returned.
LbfgsResult minimize_lbfgs(const Objective &f, const Vector &x0, const LbfgsConfig &cfg);

}  // namespace dab

#endif  // DAB_LBFGS_HPP
