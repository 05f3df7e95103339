//! Sparse SDPA text export, for cross-checking against external solvers.
//!
//! Equalities become a pair of diagonal (LP) entries.  A log-det objective
//! has no SDPA counterpart; its block is exported as an ordinary PSD
//! constraint and a comment line says so.

use std::fmt::Write as _;

use super::{AffineBlock, ConicProgram};

pub fn write_sdpa(prog: &ConicProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\"polydesign export: {} variables", prog.num_vars);
    let mut blocks: Vec<&AffineBlock> = prog.blocks.iter().collect();
    if let Some(g) = &prog.logdet {
        let _ = writeln!(
            out,
            "* log-det objective on block '{}' exported as a PSD constraint",
            g.label
        );
        blocks.push(g);
    }
    let neq = prog.eq_matrix.nrows();
    let _ = writeln!(out, "{}", prog.num_vars);
    let nblocks = blocks.len() + usize::from(neq > 0);
    let _ = writeln!(out, "{nblocks}");
    let mut sizes: Vec<String> = blocks.iter().map(|b| b.size().to_string()).collect();
    if neq > 0 {
        sizes.push(format!("-{}", 2 * neq));
    }
    let _ = writeln!(out, "{}", sizes.join(" "));
    let costs: Vec<String> = prog.cost.iter().map(|c| format!("{c:e}")).collect();
    let _ = writeln!(out, "{}", costs.join(" "));
    for (k, b) in blocks.iter().enumerate() {
        let blk = k + 1;
        let c = b.constant();
        for col in 0..b.size() {
            for row in 0..=col {
                if c[(row, col)] != 0.0 {
                    // SDPA form is sum F_i x_i - F_0 PSD
                    let _ = writeln!(out, "0 {blk} {} {} {:e}", row + 1, col + 1, -c[(row, col)]);
                }
            }
        }
        for var in 0..prog.num_vars {
            for &(r, cc, v) in b.entries(var) {
                let _ = writeln!(out, "{} {blk} {} {} {v:e}", var + 1, r + 1, cc + 1);
            }
        }
    }
    if neq > 0 {
        let blk = blocks.len() + 1;
        for e in 0..neq {
            let (lo, hi) = (2 * e + 1, 2 * e + 2);
            let rhs = prog.eq_rhs[e];
            if rhs != 0.0 {
                let _ = writeln!(out, "0 {blk} {lo} {lo} {rhs:e}");
                let _ = writeln!(out, "0 {blk} {hi} {hi} {:e}", -rhs);
            }
            for var in 0..prog.num_vars {
                let a = prog.eq_matrix[(e, var)];
                if a != 0.0 {
                    let _ = writeln!(out, "{} {blk} {lo} {lo} {a:e}", var + 1);
                    let _ = writeln!(out, "{} {blk} {hi} {hi} {:e}", var + 1, -a);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_entries() {
        let mut p = ConicProgram::new(2);
        p.cost[1] = -1.0;
        let mut b = AffineBlock::new(2, 2, "b");
        b.add_constant(0, 0, 1.0);
        b.add(1, 0, 1, 0.5);
        p.blocks.push(b);
        p.add_equality(&[(0, 1.0)], 1.0);
        let text = write_sdpa(&p);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "2");
        assert_eq!(lines[2], "2");
        assert_eq!(lines[3], "2 -2");
        assert!(text.contains("0 1 1 1 -1e0"));
        assert!(text.contains("2 1 1 2 5e-1"));
        assert!(text.contains("1 2 1 1 1e0"));
    }
}
