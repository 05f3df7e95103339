//! Criterion-specific objectives on top of an information-matrix block.

use serde::{Deserialize, Serialize};

use super::{AffineBlock, ConicProgram};
use crate::criteria::Criterion;
use crate::error::{Error, Result};

/// Where the criterion lives inside a program after reformulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionReformulation {
    pub criterion: Criterion,
    /// Number of regressors `p`.
    pub p: usize,
    /// Auxiliary variables: upper-triangular `Z` entries (A) or `t` (E).
    pub aux_vars: Vec<usize>,
    /// Index of the Schur block (A) or of `M - tI` (E).
    pub aux_block: Option<usize>,
}

impl CriterionReformulation {
    /// Criterion value recovered from the program objective.
    pub fn phi_from_objective(&self, objective: f64) -> f64 {
        let p = self.p as f64;
        match self.criterion {
            Criterion::D => (-objective / p).exp(),
            Criterion::A => p / objective,
            Criterion::E => -objective,
        }
    }
}

/// Installs the objective of `criterion` on the information block `info`:
///
/// * D: `-logdet M`,
/// * A: `tr Z` with `[[M, I], [I, Z]]` PSD,
/// * E: `-t` with `M - tI` PSD.
///
/// All three are minimized.
pub fn reformulate_criterion(
    prog: &mut ConicProgram,
    criterion: Criterion,
    info: &AffineBlock,
) -> Result<CriterionReformulation> {
    if info.num_vars() > prog.num_vars {
        return Err(Error::DimensionMismatch {
            expected: prog.num_vars,
            found: info.num_vars(),
        });
    }
    let p = info.size();
    let mut info = info.clone();
    info.resize_vars(prog.num_vars);
    match criterion {
        Criterion::D => {
            prog.logdet = Some(info);
            Ok(CriterionReformulation {
                criterion,
                p,
                aux_vars: Vec::new(),
                aux_block: None,
            })
        }
        Criterion::A => {
            let mut aux = Vec::with_capacity(p * (p + 1) / 2);
            let mut pairs = Vec::with_capacity(p * (p + 1) / 2);
            for c in 0..p {
                for r in 0..=c {
                    let v = prog.add_variable();
                    if r == c {
                        prog.cost[v] = 1.0;
                    }
                    aux.push(v);
                    pairs.push((r, c, v));
                }
            }
            let mut block = AffineBlock::new(2 * p, prog.num_vars, "schur[M I; I Z]");
            for (r, c, v) in &pairs {
                block.add(*v, p + r, p + c, 1.0);
            }
            for i in 0..p {
                block.add_constant(i, p + i, 1.0);
            }
            let m = info.constant();
            for c in 0..p {
                for r in 0..=c {
                    if m[(r, c)] != 0.0 {
                        block.add_constant(r, c, m[(r, c)]);
                    }
                }
            }
            for var in 0..info.num_vars() {
                for &(r, c, v) in info.entries(var) {
                    block.add(var, r, c, v);
                }
            }
            prog.blocks.push(block);
            Ok(CriterionReformulation {
                criterion,
                p,
                aux_vars: aux,
                aux_block: Some(prog.blocks.len() - 1),
            })
        }
        Criterion::E => {
            let t = prog.add_variable();
            prog.cost[t] = -1.0;
            let mut block = info;
            block.resize_vars(prog.num_vars);
            block.label = "M - tI".into();
            for i in 0..p {
                block.add(t, i, i, -1.0);
            }
            prog.blocks.push(block);
            Ok(CriterionReformulation {
                criterion,
                p,
                aux_vars: vec![t],
                aux_block: Some(prog.blocks.len() - 1),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{solve, SolverOptions, SolverStatus};

    fn fixed(diag: &[f64]) -> (ConicProgram, AffineBlock) {
        // one dummy variable pinned to zero so the program is non-empty
        let mut prog = ConicProgram::new(1);
        prog.add_equality(&[(0, 1.0)], 0.0);
        let mut m = AffineBlock::new(diag.len(), 1, "M");
        for (i, &v) in diag.iter().enumerate() {
            m.add_constant(i, i, v);
        }
        (prog, m)
    }

    #[test]
    fn e_on_fixed_matrix() {
        let (mut prog, m) = fixed(&[3.0, 5.0]);
        let re = reformulate_criterion(&mut prog, Criterion::E, &m).unwrap();
        let sol = solve(&prog, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolverStatus::Optimal, "{}", sol.detail);
        assert!((re.phi_from_objective(sol.objective) - 3.0).abs() < 1e-7);
    }

    #[test]
    fn a_on_identity() {
        let (mut prog, m) = fixed(&[1.0, 1.0, 1.0]);
        let re = reformulate_criterion(&mut prog, Criterion::A, &m).unwrap();
        let sol = solve(&prog, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolverStatus::Optimal, "{}", sol.detail);
        assert!((sol.objective - 3.0).abs() < 1e-7);
        assert!((re.phi_from_objective(sol.objective) - 1.0).abs() < 1e-7);
    }
}
