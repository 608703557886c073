//! Restricted master problem of soft-margin LPBoost.
//!
//! ```text
//! min γ  s.t.  Σ_i u_ij d_i ≤ γ   (j = 1..t)
//!              Σ_i d_i = 1,  0 ≤ d_i ≤ 1/(ν m)
//! ```
//! with `u_ij = y_i h_j(B_i)`. The multipliers of the `t` hypothesis rows are
//! the ensemble weights; the multiplier of the simplex row gives the margin ρ.

use super::{solve_lp, LinearProgram, LpStatus, Relation};
use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MasterSolution {
    pub gamma: f64,
    pub d: Vec<f64>,
    /// Hypothesis weights, nonnegative.
    pub w: Vec<f64>,
    /// Soft margin recovered from the simplex-row multiplier.
    pub rho: f64,
    /// Dual objective reported by the LP solver.
    pub dual_objective: f64,
    /// `ρ − (1/(νm)) Σ_i (ρ − Σ_j w_j u_ij)₊`, the soft-margin primal value at `(w, ρ)`.
    pub soft_margin_objective: f64,
    pub cap: f64,
}

impl MasterSolution {
    /// Gap between the restricted master value and the soft-margin value.
    pub fn duality_gap(&self) -> f64 {
        (self.gamma - self.soft_margin_objective)
            .abs()
            .max((self.gamma - self.dual_objective).abs())
    }

    /// Largest violation of the capped-simplex constraints by `d`.
    pub fn simplex_violation(&self) -> f64 {
        let sum: f64 = self.d.iter().sum();
        self.d
            .iter()
            .fold((sum - 1.0).abs(), |acc, &v| acc.max(-v).max(v - self.cap))
    }
}

/// Solve the master for hypothesis columns `columns[j][i] = y_i h_j(B_i)`.
pub fn solve_restricted_master(columns: &[Vec<f64>], nu: f64) -> Result<MasterSolution> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(invalid("nu", format!("must lie in (0, 1], got {nu}")));
    }
    let t = columns.len();
    if t == 0 {
        return Err(invalid("evals", "no hypotheses"));
    }
    let m = columns[0].len();
    if m == 0 {
        return Err(invalid("evals", "no bags"));
    }
    if let Some(bad) = columns.iter().find(|c| c.len() != m) {
        return Err(Error::LengthMismatch {
            expected: m,
            got: bad.len(),
        });
    }
    let cap = 1.0 / (nu * m as f64);

    // Variables: d_0..d_{m-1}, γ.
    let mut objective = vec![0.0; m + 1];
    objective[m] = 1.0;
    let mut lp = LinearProgram::new(objective);
    for i in 0..m {
        lp.bound(i, 0.0, cap);
    }
    lp.bound(m, f64::NEG_INFINITY, f64::INFINITY);
    for col in columns {
        let mut row = col.clone();
        row.push(-1.0);
        lp.constrain(row, Relation::Le, 0.0);
    }
    let mut simplex_row = vec![1.0; m];
    simplex_row.push(0.0);
    lp.constrain(simplex_row, Relation::Eq, 1.0);

    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Solver(format!(
            "restricted master ended with status {:?}",
            sol.status
        )));
    }
    let d: Vec<f64> = sol.x[..m].iter().map(|v| v.clamp(0.0, cap)).collect();
    let gamma = sol.x[m];
    let w: Vec<f64> = sol.duals[..t].iter().map(|v| v.max(0.0)).collect();
    let rho = -sol.duals[t];

    let soft_margin_objective = rho
        - cap
            * (0..m)
                .map(|i| {
                    let margin: f64 = columns.iter().zip(&w).map(|(c, wj)| wj * c[i]).sum();
                    (rho - margin).max(0.0)
                })
                .sum::<f64>();

    Ok(MasterSolution {
        gamma,
        d,
        w,
        rho,
        dual_objective: sol.dual_objective,
        soft_margin_objective,
        cap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9
    }

    #[test]
    fn box_fully_binding() {
        let s = solve_restricted_master(&[vec![0.5, -0.5]], 1.0).unwrap();
        assert!(close(s.gamma, 0.0));
        assert!(close(s.d[0], 0.5) && close(s.d[1], 0.5));
        assert!(close(s.w[0], 1.0));
        assert!(s.duality_gap() <= 1e-9);
    }

    #[test]
    fn mass_on_worst_bag() {
        let s = solve_restricted_master(&[vec![0.5, -0.5]], 0.5).unwrap();
        assert!(close(s.gamma, -0.5));
        assert!(close(s.d[0], 0.0) && close(s.d[1], 1.0));
        assert!(s.duality_gap() <= 1e-9);
    }

    #[test]
    fn capped_vertex_enumeration() {
        // Oracle: with cap 1/2 and Σd = 1, the vertices of the capped simplex
        // put 1/2 on two bags. Enumerate them.
        let u = [1.0, 1.0, -1.0];
        let mut oracle = f64::INFINITY;
        for a in 0..3 {
            for b in a + 1..3 {
                oracle = oracle.min(0.5 * u[a] + 0.5 * u[b]);
            }
        }
        assert_eq!(oracle, 0.0);
        let s = solve_restricted_master(&[u.to_vec()], 2.0 / 3.0).unwrap();
        assert!(close(s.gamma, oracle));
        assert!(close(s.d[2], 0.5));
        assert!(close(s.d[0] + s.d[1], 0.5));
        let value: f64 = s.d.iter().zip(&u).map(|(d, u)| d * u).sum();
        assert!(close(value, s.gamma));
        assert!(s.simplex_violation() <= 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(solve_restricted_master(&[vec![1.0]], 0.0).is_err());
        assert!(solve_restricted_master(&[vec![1.0]], 1.5).is_err());
        assert!(solve_restricted_master(&[], 0.5).is_err());
        assert!(solve_restricted_master(&[vec![1.0], vec![1.0, 2.0]], 0.5).is_err());
    }

    #[test]
    fn nu_one_forces_uniform() {
        let cols = vec![vec![0.3, -0.2, 0.9, 0.1], vec![-0.4, 0.8, 0.2, 0.0]];
        let s = solve_restricted_master(&cols, 1.0).unwrap();
        assert!(s.d.iter().all(|&v| close(v, 0.25)));
    }

    proptest! {
        #[test]
        fn duality_and_monotonicity(
            m in 2usize..8,
            t in 1usize..6,
            nu in 0.1f64..=1.0,
            raw in prop::collection::vec(-1.0f64..1.0, 64),
        ) {
            let cols: Vec<Vec<f64>> = (0..t)
                .map(|j| (0..m).map(|i| raw[(j * m + i) % raw.len()]).collect())
                .collect();
            let mut prev = f64::NEG_INFINITY;
            for k in 1..=t {
                let s = solve_restricted_master(&cols[..k], nu).unwrap();
                prop_assert!(s.duality_gap() <= 1e-6, "gap {}", s.duality_gap());
                prop_assert!(s.simplex_violation() <= 1e-9);
                prop_assert!(s.w.iter().all(|&w| w >= 0.0));
                prop_assert!((s.w.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
                prop_assert!(s.gamma >= prev - 1e-9);
                prev = s.gamma;
            }
        }

        #[test]
        fn badly_scaled_columns(
            m in 3usize..10,
            t in 5usize..40,
            nu in 0.1f64..=1.0,
            raw in prop::collection::vec((-1.0f64..1.0, 0i32..9), 400),
        ) {
            // Entries spanning nine orders of magnitude, like far-apart
            // Gaussian kernel values.
            let cols: Vec<Vec<f64>> = (0..t)
                .map(|j| (0..m).map(|i| {
                    let (v, e) = raw[(j * m + i) % raw.len()];
                    v * 10f64.powi(-e)
                }).collect())
                .collect();
            let s = solve_restricted_master(&cols, nu).unwrap();
            prop_assert!(s.duality_gap() <= 1e-6, "gap {}", s.duality_gap());
            prop_assert!(s.simplex_violation() <= 1e-9);
            prop_assert!((s.w.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
            let worst = cols
                .iter()
                .map(|c| c.iter().zip(&s.d).map(|(u, d)| u * d).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((worst - s.gamma).abs() <= 1e-9);
        }
    }
}
