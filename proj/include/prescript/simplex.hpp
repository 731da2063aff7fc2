#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "prescript/errors.hpp"

namespace prescript::simplex {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Primal feasibility tolerance, shared by every solver in the project.
constexpr double kFeasibilityTol = 1e-7;
/// Reduced-cost (optimality) tolerance.
constexpr double kOptimalityTol = 1e-9;
/// Smallest pivot element the ratio test will accept.
constexpr double kPivotTol = 1e-9;
/// Integrality tolerance for branch and bound.
constexpr double kIntegralityTol = 1e-6;

enum class Relation { kLessEqual, kEqual, kGreaterEqual };

struct ConstraintRow {
  std::vector<double> coeffs;
  Relation relation = Relation::kLessEqual;
  double rhs = 0.0;
};

/// Dense linear program, minimization sense.
///
/// Variable bounds may be +-infinity; `integrality` marks variables that
/// solve_milp must drive to integer values (and solve_lp must not see).
struct LinearProgram {
  std::vector<double> objective;
  std::vector<ConstraintRow> rows;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<bool> integrality;

  std::size_t num_vars() const { return objective.size(); }

  void validate() const {
    const std::size_t n = num_vars();
    if (n == 0) throw InvalidInput("LP has no variables");
    if (lower.size() != n || upper.size() != n || integrality.size() != n)
      throw InvalidInput("LP bound/integrality lengths differ from variable count");
    for (double c : objective)
      if (!std::isfinite(c)) throw InvalidInput("LP objective has non-finite coefficient");
    for (std::size_t j = 0; j < n; ++j) {
      if (std::isnan(lower[j]) || std::isnan(upper[j]) || lower[j] > upper[j])
        throw InvalidInput("LP has an empty variable bound interval");
    }
    for (const auto& row : rows) {
      if (row.coeffs.size() != n) throw InvalidInput("LP constraint row is not rectangular");
      for (double a : row.coeffs)
        if (!std::isfinite(a)) throw InvalidInput("LP constraint has non-finite coefficient");
      if (!std::isfinite(row.rhs)) throw InvalidInput("LP rhs is non-finite");
    }
  }

  /// Plain-text listing for bug reports.
  std::string dump() const {
    std::ostringstream out;
    out << "min";
    for (std::size_t j = 0; j < objective.size(); ++j) out << " " << objective[j] << "*x" << j;
    out << "\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out << "r" << i << ":";
      for (std::size_t j = 0; j < rows[i].coeffs.size(); ++j)
        out << " " << rows[i].coeffs[j] << "*x" << j;
      out << (rows[i].relation == Relation::kLessEqual   ? " <= "
              : rows[i].relation == Relation::kEqual     ? " == "
                                                         : " >= ")
          << rows[i].rhs << "\n";
    }
    for (std::size_t j = 0; j < num_vars(); ++j) {
      out << "x" << j << " in [" << lower[j] << ", " << upper[j] << "]"
          << (integrality[j] ? " integral" : "") << "\n";
    }
    return out.str();
  }
};

enum class SolveStatus { kOptimal, kInfeasible, kUnbounded };

/// Solution with certificates. For optimal solves the duals satisfy strong
/// duality: |primal objective - dual objective| <= 1e-6 * (1 + |objective|).
struct LpSolution {
  SolveStatus status = SolveStatus::kInfeasible;
  std::vector<double> primal;
  std::vector<double> dual;
  double objective = 0.0;
};

namespace detail {

enum class VarState : unsigned char { kBasic, kAtLower, kAtUpper, kFreeZero };

/// Full-tableau bounded-variable simplex with an artificial phase 1.
///
/// Rows whose slack can absorb the initial residual start on their slack and
/// need no artificial column; only initially infeasible rows get one. Pricing
/// is Devex with index tie-breaks; after a run of non-improving (degenerate)
/// pivots the method falls back to Bland's rule, which cannot cycle, and
/// reverts once the objective moves again. All candidate scans run in fixed
/// index order, so every solve is deterministic for identical input.
class Tableau {
 public:
  explicit Tableau(const LinearProgram& lp) : n_struct_(lp.num_vars()), m_(lp.rows.size()) {
    const std::size_t base = n_struct_ + m_;
    lower_.assign(base, 0.0);
    upper_.assign(base, 0.0);
    for (std::size_t j = 0; j < n_struct_; ++j) {
      lower_[j] = lp.lower[j];
      upper_[j] = lp.upper[j];
    }
    for (std::size_t i = 0; i < m_; ++i) {
      const std::size_t slack = n_struct_ + i;
      switch (lp.rows[i].relation) {
        case Relation::kLessEqual:
          lower_[slack] = 0.0;
          upper_[slack] = kInf;
          break;
        case Relation::kGreaterEqual:
          lower_[slack] = -kInf;
          upper_[slack] = 0.0;
          break;
        case Relation::kEqual:
          lower_[slack] = 0.0;
          upper_[slack] = 0.0;
          break;
      }
    }

    // Nonbasic placement: nearest finite bound, or free at zero.
    state_.assign(base, VarState::kAtLower);
    value_.assign(base, 0.0);
    for (std::size_t j = 0; j < base; ++j) {
      if (std::isfinite(lower_[j])) {
        state_[j] = VarState::kAtLower;
        value_[j] = lower_[j];
      } else if (std::isfinite(upper_[j])) {
        state_[j] = VarState::kAtUpper;
        value_[j] = upper_[j];
      } else {
        state_[j] = VarState::kFreeZero;
        value_[j] = 0.0;
      }
    }

    // Initial basis, one column per row: the slack when it can hold the
    // residual, a signed artificial otherwise.
    rhs_.resize(m_);
    row_sign_.resize(m_);
    basis_.resize(m_);
    x_basic_.resize(m_);
    art_column_.assign(m_, kNoColumn);
    std::vector<double> residuals(m_);
    std::size_t n_artificial = 0;
    for (std::size_t i = 0; i < m_; ++i) {
      double residual = lp.rows[i].rhs;
      for (std::size_t j = 0; j < n_struct_; ++j) residual -= lp.rows[i].coeffs[j] * value_[j];
      residuals[i] = residual;
      const std::size_t slack = n_struct_ + i;
      const bool slack_feasible = residual >= lower_[slack] && residual <= upper_[slack];
      row_sign_[i] = slack_feasible || residual >= 0.0 ? 1.0 : -1.0;
      if (!slack_feasible) ++n_artificial;
      rhs_[i] = lp.rows[i].rhs;
    }

    total_ = base + n_artificial;
    lower_.resize(total_, 0.0);
    upper_.resize(total_, kInf);
    state_.resize(total_, VarState::kAtLower);
    value_.resize(total_, 0.0);
    tableau_.assign(m_ * total_, 0.0);
    std::size_t next_art = base;
    for (std::size_t i = 0; i < m_; ++i) {
      const std::size_t slack = n_struct_ + i;
      const double sign = row_sign_[i];
      double* row = row_ptr(i);
      for (std::size_t j = 0; j < n_struct_; ++j) row[j] = sign * lp.rows[i].coeffs[j];
      row[slack] = sign;
      const bool slack_feasible =
          residuals[i] >= lower_[slack] && residuals[i] <= upper_[slack];
      if (slack_feasible) {
        basis_[i] = slack;
        state_[slack] = VarState::kBasic;
        x_basic_[i] = residuals[i];
      } else {
        const std::size_t art = next_art++;
        art_column_[i] = art;
        row[art] = 1.0;
        basis_[i] = art;
        state_[art] = VarState::kBasic;
        x_basic_[i] = std::abs(residuals[i]);
      }
    }
  }

  SolveStatus solve(const LinearProgram& lp) {
    // Phase 1: minimize the total artificial mass (skipped when the slack
    // basis is already feasible).
    cost_.assign(total_, 0.0);
    bool need_phase1 = false;
    for (std::size_t i = 0; i < m_; ++i)
      if (art_column_[i] != kNoColumn) {
        cost_[art_column_[i]] = 1.0;
        need_phase1 = true;
      }
    live_cols_ = total_;
    if (need_phase1) {
      refresh_reduced_costs();
      reset_devex();
      // Accept any artificial mass at the incremental-update noise floor:
      // grinding further on a degenerate phase 1 only invites tiny-pivot
      // breakdown. The floor scales with the data like the noise does.
      double scale = 1.0;
      for (std::size_t i = 0; i < m_; ++i) scale = std::max(scale, std::abs(rhs_[i]));
      const double mass_floor = 1e-8 * scale;
      const SolveStatus phase1 = iterate(mass_floor);
      if (phase1 != SolveStatus::kOptimal) return SolveStatus::kInfeasible;
      if (objective_value() > mass_floor) return SolveStatus::kInfeasible;
      expel_artificials();
    }

    // Phase 2: the real objective, artificials pinned at zero.
    cost_.assign(total_, 0.0);
    for (std::size_t j = 0; j < n_struct_; ++j) cost_[j] = lp.objective[j];
    for (std::size_t i = 0; i < m_; ++i) {
      const std::size_t art = art_column_[i];
      if (art == kNoColumn) continue;
      upper_[art] = 0.0;
      if (state_[art] != VarState::kBasic) {
        state_[art] = VarState::kAtLower;
        value_[art] = 0.0;
      }
    }
    // Artificial columns are dead from here on (pinned at zero, and B^{-1}
    // reads go through the slack columns); stop sweeping them.
    live_cols_ = n_struct_ + m_;
    refresh_reduced_costs();
    reset_devex();
    return iterate(-kInf);
  }

  double objective_value() const {
    double total = 0.0;
    for (std::size_t j = 0; j < total_; ++j)
      if (state_[j] != VarState::kBasic) total += cost_[j] * value_[j];
    for (std::size_t i = 0; i < m_; ++i) total += cost_[basis_[i]] * x_basic_[i];
    return total;
  }

  std::vector<double> structural_values() const {
    std::vector<double> x(n_struct_);
    for (std::size_t j = 0; j < n_struct_; ++j) x[j] = value_[j];
    for (std::size_t i = 0; i < m_; ++i)
      if (basis_[i] < n_struct_) x[basis_[i]] = x_basic_[i];
    return x;
  }

  /// Row duals, w.r.t. the original (unscaled) rows. The tableau works on
  /// rows scaled by row_sign; the slack column of row i carries sign * e_i,
  /// so c_B' * T_slack(i) is sign * ytilde_i = y_i with both signs cancelled.
  /// This read stays exact under pivoting, so no incremental drift enters.
  std::vector<double> row_duals() const {
    std::vector<double> y(m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
      double sum = 0.0;
      for (std::size_t k = 0; k < m_; ++k) {
        const double cb = cost_[basis_[k]];
        if (cb != 0.0) sum += cb * tableau_[k * total_ + (n_struct_ + i)];
      }
      y[i] = sum;
    }
    return y;
  }

  long iterations() const { return iterations_; }

 private:
  static constexpr std::size_t kNoColumn = static_cast<std::size_t>(-1);

  double* row_ptr(std::size_t i) { return tableau_.data() + i * total_; }
  const double* row_ptr(std::size_t i) const { return tableau_.data() + i * total_; }

  void refresh_reduced_costs() {
    reduced_.assign(total_, 0.0);
    for (std::size_t j = 0; j < live_cols_; ++j) reduced_[j] = cost_[j];
    for (std::size_t i = 0; i < m_; ++i) {
      const double cb = cost_[basis_[i]];
      if (cb == 0.0) continue;
      const double* row = row_ptr(i);
      for (std::size_t j = 0; j < live_cols_; ++j) reduced_[j] -= cb * row[j];
    }
  }

  /// Recomputes basic values from the original data through B^{-1} to shed
  /// accumulated update error.
  void refresh_basic_values() {
    for (std::size_t i = 0; i < m_; ++i) {
      double v = 0.0;
      for (std::size_t k = 0; k < m_; ++k) {
        // (Binv D b)_i with both row signs cancelling, as in row_duals.
        const double binv = tableau_[i * total_ + (n_struct_ + k)];
        if (binv != 0.0) v += binv * rhs_[k];
      }
      const double* row = row_ptr(i);
      for (std::size_t j = 0; j < total_; ++j) {
        if (state_[j] == VarState::kBasic || value_[j] == 0.0) continue;
        v -= row[j] * value_[j];
      }
      x_basic_[i] = v;
    }
  }

  void reset_devex() { devex_.assign(total_, 1.0); }

  bool eligible(std::size_t j, int& direction) const {
    if (state_[j] == VarState::kBasic) return false;
    if (lower_[j] == upper_[j]) return false;  // fixed, includes retired artificials
    const double z = reduced_[j];
    switch (state_[j]) {
      case VarState::kAtLower:
        if (z < -kOptimalityTol) {
          direction = +1;
          return true;
        }
        return false;
      case VarState::kAtUpper:
        if (z > kOptimalityTol) {
          direction = -1;
          return true;
        }
        return false;
      case VarState::kFreeZero:
        if (z < -kOptimalityTol) {
          direction = +1;
          return true;
        }
        if (z > kOptimalityTol) {
          direction = -1;
          return true;
        }
        return false;
      case VarState::kBasic:
        break;
    }
    return false;
  }

  SolveStatus iterate(double early_exit_objective) {
    const long iteration_limit = 20000 + 200 * static_cast<long>(m_ + total_);
    long stalled = 0;
    bland_mode_ = false;
    bool fresh = true;
    double last_objective = objective_value();
    if (last_objective <= early_exit_objective) return SolveStatus::kOptimal;
    for (;;) {
      if (++iterations_ > iteration_limit)
        throw SolverStalled("simplex iteration limit exceeded", iterations_);
      if (iterations_ % 64 == 0) {
        refresh_reduced_costs();
        refresh_basic_values();
        fresh = true;
      }

      // Entering column: Bland takes the first eligible index, Devex the
      // largest squared reduced cost over its reference weight.
      std::size_t entering = total_;
      int direction = 0;
      const auto price = [&] {
        entering = total_;
        if (bland_mode_) {
          for (std::size_t j = 0; j < live_cols_; ++j) {
            int dir;
            if (eligible(j, dir)) {
              entering = j;
              direction = dir;
              break;
            }
          }
        } else {
          double best = 0.0;
          for (std::size_t j = 0; j < live_cols_; ++j) {
            int dir;
            if (!eligible(j, dir)) continue;
            const double score = reduced_[j] * reduced_[j] / devex_[j];
            if (score > best) {
              best = score;
              entering = j;
              direction = dir;
            }
          }
        }
      };
      price();
      if (entering == total_) {
        // Optimality may be an artifact of incremental drift: confirm it on
        // freshly recomputed reduced costs before declaring it.
        if (fresh) return SolveStatus::kOptimal;
        refresh_reduced_costs();
        refresh_basic_values();
        fresh = true;
        price();
        if (entering == total_) return SolveStatus::kOptimal;
      }
      fresh = false;

      // Ratio test: how far can the entering variable move?
      double step = upper_[entering] - lower_[entering];  // own-span bound flip
      std::size_t leaving_row = m_;
      bool leaving_to_upper = false;
      for (std::size_t i = 0; i < m_; ++i) {
        const double w = tableau_[i * total_ + entering];
        const double delta = -direction * w;  // change of basic i per unit step
        if (delta > kPivotTol) {
          const double room = upper_[basis_[i]];
          if (std::isfinite(room)) {
            const double limit = (room - x_basic_[i]) / delta;
            if (limit < step - 1e-12 ||
                (leaving_row < m_ && limit < step + 1e-12 && better_leaving(i, leaving_row, entering))) {
              step = std::max(limit, 0.0);
              leaving_row = i;
              leaving_to_upper = true;
            }
          }
        } else if (delta < -kPivotTol) {
          const double floor_k = lower_[basis_[i]];
          if (std::isfinite(floor_k)) {
            const double limit = (x_basic_[i] - floor_k) / (-delta);
            if (limit < step - 1e-12 ||
                (leaving_row < m_ && limit < step + 1e-12 && better_leaving(i, leaving_row, entering))) {
              step = std::max(limit, 0.0);
              leaving_row = i;
              leaving_to_upper = false;
            }
          }
        }
      }

      if (!std::isfinite(step)) return SolveStatus::kUnbounded;

      if (leaving_row == m_) {
        // Bound flip: the entering variable crosses its own span.
        apply_step(entering, direction, step);
        state_[entering] = state_[entering] == VarState::kAtLower ? VarState::kAtUpper : VarState::kAtLower;
        value_[entering] = state_[entering] == VarState::kAtUpper ? upper_[entering] : lower_[entering];
      } else {
        pivot(entering, direction, step, leaving_row, leaving_to_upper);
      }

      const double objective = objective_value();
      if (objective <= early_exit_objective) return SolveStatus::kOptimal;
      if (objective < last_objective - 1e-12) {
        stalled = 0;
        bland_mode_ = false;
      } else if (++stalled > 100 + static_cast<long>(m_)) {
        // A short Bland stretch resolves most degenerate plateaus; one that
        // does not is better abandoned to the caller's perturbed retry than
        // ground through thousands of tiny pivots.
        if (stalled > 1000 + 10 * static_cast<long>(m_))
          throw SolverStalled("simplex stalled on a degenerate plateau", iterations_);
        bland_mode_ = true;
      }
      last_objective = std::min(last_objective, objective);
    }
  }

  /// Deterministic tie-break between candidate leaving rows. Under Bland's
  /// rule ties go to the smallest basis column id (the anti-cycling
  /// requirement); otherwise the larger pivot magnitude wins, then the id.
  bool better_leaving(std::size_t candidate, std::size_t incumbent, std::size_t entering) const {
    const double wc = std::abs(tableau_[candidate * total_ + entering]);
    const double wi = std::abs(tableau_[incumbent * total_ + entering]);
    if (bland_mode_) {
      // Smallest basis id, except that a numerically unusable pivot never
      // displaces a sound one (pivoting on ~1e-9 elements wrecks the tableau).
      if (wc >= 1e-7 && wi < 1e-7) return true;
      if (wc < 1e-7 && wi >= 1e-7) return false;
      return basis_[candidate] < basis_[incumbent];
    }
    if (wc > wi + 1e-12) return true;
    if (wc < wi - 1e-12) return false;
    return basis_[candidate] < basis_[incumbent];
  }

  void apply_step(std::size_t entering, int direction, double step) {
    if (step == 0.0) return;
    for (std::size_t i = 0; i < m_; ++i) {
      const double w = tableau_[i * total_ + entering];
      if (w != 0.0) x_basic_[i] -= direction * w * step;
    }
  }

  void pivot(std::size_t entering, int direction, double step, std::size_t row, bool to_upper) {
    apply_step(entering, direction, step);
    const double entering_value = value_[entering] + direction * step;
    const std::size_t leaving = basis_[row];
    state_[leaving] = to_upper ? VarState::kAtUpper : VarState::kAtLower;
    value_[leaving] = to_upper ? upper_[leaving] : lower_[leaving];
    if (leaving >= n_struct_ + m_) upper_[leaving] = 0.0;  // artificials never return

    double* prow = row_ptr(row);
    const double p = prow[entering];
    const double inv = 1.0 / p;
    for (std::size_t j = 0; j < live_cols_; ++j) prow[j] *= inv;
    for (std::size_t i = 0; i < m_; ++i) {
      if (i == row) continue;
      double* irow = row_ptr(i);
      const double factor = irow[entering];
      if (factor == 0.0) continue;
      for (std::size_t j = 0; j < live_cols_; ++j) irow[j] -= factor * prow[j];
    }
    const double zfactor = reduced_[entering];
    if (zfactor != 0.0)
      for (std::size_t j = 0; j < live_cols_; ++j) reduced_[j] -= zfactor * prow[j];

    // Devex reference-weight update along the (normalized) pivot row.
    const double weight_entering = devex_[entering];
    double weight_max = 1.0;
    for (std::size_t j = 0; j < live_cols_; ++j) {
      if (state_[j] == VarState::kBasic || prow[j] == 0.0) continue;
      const double candidate = prow[j] * prow[j] * weight_entering;
      if (candidate > devex_[j]) devex_[j] = candidate;
      if (devex_[j] > weight_max) weight_max = devex_[j];
    }
    devex_[leaving] = std::max(weight_entering / (p * p), 1.0);
    if (weight_max > 1e8) reset_devex();

    basis_[row] = entering;
    state_[entering] = VarState::kBasic;
    x_basic_[row] = entering_value;
  }

  /// After phase 1, pivot any remaining artificial out of the basis where a
  /// usable column exists; rows with no such column are redundant and keep a
  /// pinned artificial.
  void expel_artificials() {
    for (std::size_t i = 0; i < m_; ++i) {
      if (basis_[i] < n_struct_ + m_) continue;
      const double* row = row_ptr(i);
      std::size_t replacement = total_;
      for (std::size_t j = 0; j < n_struct_ + m_; ++j) {
        if (state_[j] == VarState::kBasic) continue;
        if (std::abs(row[j]) > 1e-7) {
          replacement = j;
          break;
        }
      }
      if (replacement == total_) continue;  // redundant row
      const int direction = +1;             // degenerate pivot, step 0
      pivot(replacement, direction, 0.0, i, false);
    }
  }

  std::size_t n_struct_;
  std::size_t m_;
  std::size_t total_ = 0;
  std::vector<double> tableau_;
  std::vector<double> lower_, upper_;
  std::vector<double> cost_;
  std::vector<double> reduced_;
  std::vector<double> devex_;
  std::vector<double> value_;
  std::vector<double> rhs_;
  std::vector<double> row_sign_;
  std::vector<std::size_t> art_column_;
  std::vector<VarState> state_;
  std::vector<std::size_t> basis_;
  std::vector<double> x_basic_;
  std::size_t live_cols_ = 0;
  long iterations_ = 0;
  bool bland_mode_ = false;
};

}  // namespace detail

/// Worst violation of rows and bounds by a candidate point.
inline double solution_residual(const LinearProgram& lp, const std::vector<double>& x) {
  double worst = 0.0;
  for (std::size_t j = 0; j < lp.num_vars(); ++j) {
    worst = std::max(worst, lp.lower[j] - x[j]);
    worst = std::max(worst, x[j] - lp.upper[j]);
  }
  for (const auto& row : lp.rows) {
    double lhs = 0.0;
    for (std::size_t j = 0; j < lp.num_vars(); ++j) lhs += row.coeffs[j] * x[j];
    switch (row.relation) {
      case Relation::kLessEqual: worst = std::max(worst, lhs - row.rhs); break;
      case Relation::kGreaterEqual: worst = std::max(worst, row.rhs - lhs); break;
      case Relation::kEqual: worst = std::max(worst, std::abs(lhs - row.rhs)); break;
    }
  }
  return worst;
}

inline double dual_objective(const LinearProgram& lp, const LpSolution& solution);

/// Solves a pure LP (the integrality mask must be all false).
///
/// Every "optimal" result is validated against the original data (primal
/// residual and strong-duality gap). A solve that stalls on degeneracy or
/// fails validation is retried once with a deterministic relax-only nudge
/// (inequality right-hand sides move outward, finite upper bounds grow by
/// ~1e-9) that breaks the ties; the nudge sits two orders below the
/// feasibility tolerance, so the certificates still satisfy the advertised
/// 1e-7/1e-6 guarantees for the original data.
inline LpSolution solve_lp(const LinearProgram& lp) {
  lp.validate();
  for (bool flag : lp.integrality)
    if (flag) throw InvalidInput("solve_lp given an integer variable; use solve_milp");

  double scale = 1.0;
  for (double c : lp.objective) scale = std::max(scale, std::abs(c));
  for (const auto& row : lp.rows) scale = std::max(scale, std::abs(row.rhs));

  const auto attempt = [&lp, scale](const LinearProgram& program, LpSolution& solution) {
    // Row equilibration: with rows normalized to unit magnitude the tableau
    // stays O(1), which keeps the absolute pivot/optimality tolerances
    // meaningful on data of any scale. Duals are rescaled back on the way out.
    LinearProgram scaled = program;
    std::vector<double> row_scale(program.rows.size(), 1.0);
    for (std::size_t i = 0; i < scaled.rows.size(); ++i) {
      double magnitude = 0.0;
      for (double a : scaled.rows[i].coeffs) magnitude = std::max(magnitude, std::abs(a));
      if (magnitude <= 1e-300) magnitude = 1.0;
      row_scale[i] = magnitude;
      for (double& a : scaled.rows[i].coeffs) a /= magnitude;
      scaled.rows[i].rhs /= magnitude;
    }

    detail::Tableau tableau(scaled);
    solution.status = tableau.solve(scaled);
    if (solution.status != SolveStatus::kOptimal) return true;
    solution.primal = tableau.structural_values();
    solution.dual = tableau.row_duals();
    for (std::size_t i = 0; i < row_scale.size(); ++i) solution.dual[i] /= row_scale[i];
    solution.objective = 0.0;
    for (std::size_t j = 0; j < lp.num_vars(); ++j)
      solution.objective += lp.objective[j] * solution.primal[j];
    if (solution_residual(lp, solution.primal) > kFeasibilityTol * scale) return false;
    const double gap = std::abs(solution.objective - dual_objective(lp, solution));
    return gap <= 1e-6 * (1.0 + std::abs(solution.objective));
  };

  LpSolution solution;
  bool sound = false;
  try {
    sound = attempt(lp, solution);
  } catch (const SolverStalled&) {
    sound = false;
  }
  if (sound) return solution;

  LinearProgram nudged = lp;
  for (std::size_t i = 0; i < nudged.rows.size(); ++i) {
    const double nudge = 1e-9 * (static_cast<double>((i * 7) % 13) + 1.0) / 13.0;
    if (nudged.rows[i].relation == Relation::kLessEqual) nudged.rows[i].rhs += nudge;
    if (nudged.rows[i].relation == Relation::kGreaterEqual) nudged.rows[i].rhs -= nudge;
  }
  for (std::size_t j = 0; j < nudged.num_vars(); ++j) {
    if (std::isfinite(nudged.upper[j]) && nudged.upper[j] > nudged.lower[j])
      nudged.upper[j] += 1e-9 * (static_cast<double>((j * 5) % 11) + 1.0) / 11.0;
  }
  if (!attempt(nudged, solution))
    throw NumericalError("LP solution failed validation even after the perturbed retry");
  return solution;
}

/// Objective value of the dual certificate: y'b plus the reduced-cost terms of
/// nonbasic variables at finite bounds. Equals the primal objective at an
/// optimum (strong duality); exposed so tests can assert the gap.
inline double dual_objective(const LinearProgram& lp, const LpSolution& solution) {
  double total = 0.0;
  for (std::size_t i = 0; i < lp.rows.size(); ++i) total += solution.dual[i] * lp.rows[i].rhs;
  for (std::size_t j = 0; j < lp.num_vars(); ++j) {
    double reduced = lp.objective[j];
    for (std::size_t i = 0; i < lp.rows.size(); ++i)
      reduced -= solution.dual[i] * lp.rows[i].coeffs[j];
    // Complementarity picks the bound the variable rests on.
    if (reduced > 0.0 && std::isfinite(lp.lower[j]))
      total += reduced * lp.lower[j];
    else if (reduced < 0.0 && std::isfinite(lp.upper[j]))
      total += reduced * lp.upper[j];
  }
  return total;
}

/// Best-first branch and bound for LPs whose `integrality` variables all have
/// bounds inside [0, 1]. Branches on the most fractional variable; node
/// selection is by lowest relaxation bound with node id as tie-break, so the
/// search order is deterministic.
inline LpSolution solve_milp(const LinearProgram& lp) {
  lp.validate();
  std::vector<std::size_t> integer_vars;
  for (std::size_t j = 0; j < lp.num_vars(); ++j) {
    if (!lp.integrality[j]) continue;
    if (lp.lower[j] < -kIntegralityTol || lp.upper[j] > 1.0 + kIntegralityTol)
      throw InvalidInput("integer variables must have bounds inside [0, 1]");
    integer_vars.push_back(j);
  }

  LinearProgram relaxed = lp;
  relaxed.integrality.assign(lp.num_vars(), false);

  if (integer_vars.empty()) return solve_lp(relaxed);

  struct Node {
    double bound;
    long id;
    int depth;
    std::vector<double> lower;
    std::vector<double> upper;
  };
  const auto worse = [](const Node& a, const Node& b) {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.id > b.id;
  };
  std::priority_queue<Node, std::vector<Node>, decltype(worse)> open(worse);

  const int depth_cap = 10 * static_cast<int>(integer_vars.size());
  const long node_cap = 200000;
  long next_id = 0;
  long explored = 0;

  open.push(Node{-kInf, next_id++, 0, lp.lower, lp.upper});

  bool have_incumbent = false;
  LpSolution incumbent;
  bool root_unbounded = false;

  while (!open.empty()) {
    Node node = open.top();
    open.pop();
    if (have_incumbent && node.bound >= incumbent.objective - 1e-9) continue;
    if (++explored > node_cap) throw SolverStalled("branch-and-bound node limit exceeded", explored);
    if (node.depth > depth_cap) throw SolverStalled("branch-and-bound depth cap exceeded", explored);

    relaxed.lower = node.lower;
    relaxed.upper = node.upper;
    LpSolution relaxation = solve_lp(relaxed);
    if (relaxation.status == SolveStatus::kInfeasible) continue;
    if (relaxation.status == SolveStatus::kUnbounded) {
      if (node.depth == 0) root_unbounded = true;
      break;
    }
    if (have_incumbent && relaxation.objective >= incumbent.objective - 1e-9) continue;

    // Most fractional masked variable.
    std::size_t branch_var = lp.num_vars();
    double worst_frac = kIntegralityTol;
    for (std::size_t j : integer_vars) {
      const double frac = std::abs(relaxation.primal[j] - std::round(relaxation.primal[j]));
      if (frac > worst_frac) {
        worst_frac = frac;
        branch_var = j;
      }
    }
    if (branch_var == lp.num_vars()) {
      if (!have_incumbent || relaxation.objective < incumbent.objective) {
        incumbent = relaxation;
        have_incumbent = true;
      }
      continue;
    }

    Node down{relaxation.objective, next_id++, node.depth + 1, node.lower, node.upper};
    down.upper[branch_var] = 0.0;
    Node up{relaxation.objective, next_id++, node.depth + 1, node.lower, node.upper};
    up.lower[branch_var] = 1.0;
    open.push(std::move(down));
    open.push(std::move(up));
  }

  if (root_unbounded) {
    LpSolution unbounded;
    unbounded.status = SolveStatus::kUnbounded;
    return unbounded;
  }
  if (!have_incumbent) {
    LpSolution infeasible;
    infeasible.status = SolveStatus::kInfeasible;
    return infeasible;
  }
  return incumbent;
}

}  // namespace prescript::simplex
