//! Dense two-phase simplex with Bland's anti-cycling rule, plus a zero-sum
//! matrix-game solver built on it.
//!
//! Problems here are tiny (tens of variables), so a full tableau is the
//! simplest exact approach. All decision variables are nonnegative.

use crate::error::{Result, RscError};

const PIVOT_EPS: f64 = 1e-11;
const FEASIBILITY_EPS: f64 = 1e-9;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    num_vars: usize,
    /// Minimization costs (negated for maximization problems).
    costs: Vec<f64>,
    maximize: bool,
    rows: Vec<(Vec<f64>, Relation, f64)>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

impl LinearProgram {
    pub fn minimize(costs: Vec<f64>) -> Self {
        Self {
            num_vars: costs.len(),
            costs,
            maximize: false,
            rows: Vec::new(),
        }
    }

    pub fn maximize(gains: Vec<f64>) -> Self {
        Self {
            num_vars: gains.len(),
            costs: gains.iter().map(|g| -g).collect(),
            maximize: true,
            rows: Vec::new(),
        }
    }

    pub fn constrain(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        assert_eq!(coeffs.len(), self.num_vars, "constraint width");
        self.rows.push((coeffs, relation, rhs));
        self
    }

    pub fn solve(&self) -> Result<LpSolution> {
        if self.costs.iter().chain(self.rows.iter().flat_map(|r| r.0.iter())).any(|v| !v.is_finite()) {
            return Err(RscError::NonFinite("linear program coefficients".into()));
        }
        let mut tableau = Tableau::build(self);
        tableau.phase_one()?;
        tableau.phase_two(&self.costs)?;
        let x = tableau.primal(self.num_vars);
        let min_obj: f64 = x.iter().zip(&self.costs).map(|(a, c)| a * c).sum();
        Ok(LpSolution {
            objective: if self.maximize { -min_obj } else { min_obj },
            x,
        })
    }
}

struct Tableau {
    /// `m × (n + 1)`; the last column is the right-hand side.
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    num_cols: usize,
    /// Columns at or beyond this index are artificial.
    first_artificial: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.rows.len();
        // Normalise to nonnegative right-hand sides.
        let rows: Vec<(Vec<f64>, Relation, f64)> = lp
            .rows
            .iter()
            .map(|(c, rel, b)| {
                if *b < 0.0 {
                    let flipped = match rel {
                        Relation::Le => Relation::Ge,
                        Relation::Ge => Relation::Le,
                        Relation::Eq => Relation::Eq,
                    };
                    (c.iter().map(|v| -v).collect(), flipped, -b)
                } else {
                    (c.clone(), *rel, *b)
                }
            })
            .collect();
        let num_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let num_artificial = rows.iter().filter(|r| r.1 != Relation::Le).count();
        let n = lp.num_vars;
        let first_artificial = n + num_slack;
        let num_cols = first_artificial + num_artificial;
        let mut a = vec![vec![0.0; num_cols + 1]; m];
        let mut basis = vec![0; m];
        let (mut slack, mut art) = (n, first_artificial);
        for (i, (coeffs, rel, rhs)) in rows.iter().enumerate() {
            a[i][..n].copy_from_slice(coeffs);
            a[i][num_cols] = *rhs;
            match rel {
                Relation::Le => {
                    a[i][slack] = 1.0;
                    basis[i] = slack;
                    slack += 1;
                }
                Relation::Ge => {
                    a[i][slack] = -1.0;
                    slack += 1;
                    a[i][art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
                Relation::Eq => {
                    a[i][art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
            }
        }
        Self {
            a,
            basis,
            num_cols,
            first_artificial,
        }
    }

    fn rhs(&self, i: usize) -> f64 {
        self.a[i][self.num_cols]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.a[row][col];
        self.a[row].iter_mut().for_each(|v| *v /= p);
        let pivot_row = self.a[row].clone();
        for (i, r) in self.a.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                r.iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
                r[col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Runs simplex iterations for `costs` over columns `< allowed`.
    fn optimize(&mut self, costs: &[f64], allowed: usize) -> Result<()> {
        for _ in 0..MAX_PIVOTS {
            // Bland: lowest-index column with negative reduced cost.
            let entering = (0..allowed).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let reduced = costs[j]
                    - self
                        .basis
                        .iter()
                        .enumerate()
                        .map(|(i, &b)| costs[b] * self.a[i][j])
                        .sum::<f64>();
                reduced < -PIVOT_EPS
            });
            let Some(col) = entering else {
                return Ok(());
            };
            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..self.a.len() {
                let coef = self.a[i][col];
                if coef > PIVOT_EPS {
                    let ratio = self.rhs(i) / coef;
                    leaving = match leaving {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            // Ties go to the lowest basic variable index.
                            if ratio < lr - PIVOT_EPS
                                || ((ratio - lr).abs() <= PIVOT_EPS && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leaving else {
                return Err(RscError::Unbounded);
            };
            self.pivot(row, col);
        }
        Err(RscError::NoConvergence("simplex pivot limit reached".into()))
    }

    fn phase_one(&mut self) -> Result<()> {
        if self.first_artificial == self.num_cols {
            return Ok(());
        }
        let costs: Vec<f64> = (0..self.num_cols)
            .map(|j| if j >= self.first_artificial { 1.0 } else { 0.0 })
            .collect();
        self.optimize(&costs, self.num_cols)?;
        let infeasibility: f64 = self
            .basis
            .iter()
            .enumerate()
            .filter(|(_, &b)| b >= self.first_artificial)
            .map(|(i, _)| self.rhs(i))
            .sum();
        if infeasibility > FEASIBILITY_EPS {
            return Err(RscError::Infeasible);
        }
        // Drive remaining (zero-valued) artificials out of the basis; rows
        // where that is impossible are redundant and dropped.
        let mut i = 0;
        while i < self.a.len() {
            if self.basis[i] >= self.first_artificial {
                match (0..self.first_artificial).find(|&j| self.a[i][j].abs() > PIVOT_EPS) {
                    Some(j) => {
                        self.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        self.a.remove(i);
                        self.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
        Ok(())
    }

    fn phase_two(&mut self, costs: &[f64]) -> Result<()> {
        let mut full = costs.to_vec();
        full.resize(self.num_cols, 0.0);
        self.optimize(&full, self.first_artificial)
    }

    fn primal(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < n {
                x[b] = self.rhs(i).max(0.0);
            }
        }
        x
    }
}

/// Solution of a zero-sum game where the row player maximizes.
#[derive(Debug, Clone)]
pub struct GameSolution {
    pub row_strategy: Vec<f64>,
    pub col_strategy: Vec<f64>,
    pub value: f64,
}

/// Solves `max_{x ∈ Δ(rows)} min_{y ∈ Δ(cols)} xᵀ M y` by two small LPs.
pub fn solve_matrix_game(payoff: &[Vec<f64>]) -> Result<GameSolution> {
    let rows = payoff.len();
    let cols = payoff.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 || payoff.iter().any(|r| r.len() != cols) {
        return Err(RscError::Shape("payoff matrix must be non-empty and rectangular".into()));
    }
    // Shift so that every entry is at least one; the game value is then
    // positive and the value variable can be kept nonnegative.
    let min = payoff.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
    let shift = 1.0 - min;

    // Row player: variables (x_1..x_rows, z); maximize z.
    let mut gains = vec![0.0; rows + 1];
    gains[rows] = 1.0;
    let mut lp = LinearProgram::maximize(gains);
    for j in 0..cols {
        let mut c: Vec<f64> = (0..rows).map(|i| payoff[i][j] + shift).collect();
        c.push(-1.0);
        lp.constrain(c, Relation::Ge, 0.0);
    }
    let mut simplex_row = vec![1.0; rows];
    simplex_row.push(0.0);
    lp.constrain(simplex_row, Relation::Eq, 1.0);
    let primal = lp.solve()?;

    // Column player: variables (y_1..y_cols, w); minimize w.
    let mut costs = vec![0.0; cols + 1];
    costs[cols] = 1.0;
    let mut dual = LinearProgram::minimize(costs);
    for row in payoff {
        let mut c: Vec<f64> = row.iter().map(|v| v + shift).collect();
        c.push(-1.0);
        dual.constrain(c, Relation::Le, 0.0);
    }
    let mut simplex_col = vec![1.0; cols];
    simplex_col.push(0.0);
    dual.constrain(simplex_col, Relation::Eq, 1.0);
    let dual = dual.solve()?;

    let clean = |v: &[f64]| {
        let total: f64 = v.iter().sum();
        v.iter().map(|x| x / total).collect::<Vec<_>>()
    };
    Ok(GameSolution {
        row_strategy: clean(&primal.x[..rows]),
        col_strategy: clean(&dual.x[..cols]),
        value: primal.objective - shift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_lp() {
        // max 3x + 5y s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36.
        let mut lp = LinearProgram::maximize(vec![3.0, 5.0]);
        lp.constrain(vec![1.0, 0.0], Relation::Le, 4.0)
            .constrain(vec![0.0, 2.0], Relation::Le, 12.0)
            .constrain(vec![3.0, 2.0], Relation::Le, 18.0);
        let sol = lp.solve().unwrap();
        assert!((sol.objective - 36.0).abs() < 1e-12);
        assert!((sol.x[0] - 2.0).abs() < 1e-12 && (sol.x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + 2y s.t. x + y = 1, y ≥ 0.25.
        let mut lp = LinearProgram::minimize(vec![1.0, 2.0]);
        lp.constrain(vec![1.0, 1.0], Relation::Eq, 1.0)
            .constrain(vec![0.0, 1.0], Relation::Ge, 0.25);
        let sol = lp.solve().unwrap();
        assert!((sol.objective - 1.25).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::minimize(vec![1.0]);
        lp.constrain(vec![1.0], Relation::Le, 1.0).constrain(vec![1.0], Relation::Ge, 2.0);
        assert!(matches!(lp.solve(), Err(RscError::Infeasible)));
        let mut lp = LinearProgram::maximize(vec![1.0, 0.0]);
        lp.constrain(vec![1.0, -1.0], Relation::Le, 1.0);
        assert!(matches!(lp.solve(), Err(RscError::Unbounded)));
    }

    #[test]
    fn degenerate_redundant_rows() {
        // Duplicate equality rows leave an artificial at zero in the basis.
        let mut lp = LinearProgram::minimize(vec![1.0, 1.0]);
        lp.constrain(vec![1.0, 1.0], Relation::Eq, 1.0)
            .constrain(vec![2.0, 2.0], Relation::Eq, 2.0);
        let sol = lp.solve().unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matching_pennies() {
        let g = solve_matrix_game(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        assert!(g.value.abs() < 1e-12);
        assert!((g.row_strategy[0] - 0.5).abs() < 1e-12);
        assert!((g.col_strategy[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rock_scissors_paper_variant() {
        // Value 1/12 with row strategy (1/4, 1/3, 5/12).
        let m = vec![
            vec![0.0, 2.0, -1.0],
            vec![-1.0, 0.0, 1.0],
            vec![1.0, -1.0, 0.0],
        ];
        let g = solve_matrix_game(&m).unwrap();
        assert!((g.value - 1.0 / 12.0).abs() < 1e-12);
        for (x, want) in g.row_strategy.iter().zip([0.25, 1.0 / 3.0, 5.0 / 12.0]) {
            assert!((x - want).abs() < 1e-12);
        }
    }
}
