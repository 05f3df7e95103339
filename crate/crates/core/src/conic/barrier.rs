//! Primal barrier path-following with an auxiliary feasibility phase and
//! facial reduction for programs without strictly feasible points.

use nalgebra::{DMatrix, DVector};

use super::{
    kernel_equalities, AffineBlock, ConicProgram, ConicSolution, Entry, ExtraEquality, SolverDiagnostics,
    SolverOptions, SolverStatus,
};
use crate::error::Result;
use crate::linalg;

/// A block in reduced coordinates, coefficients stored per variable.
#[derive(Clone)]
struct Blk {
    m: usize,
    c0: DMatrix<f64>,
    f: Vec<Vec<Entry>>,
}

impl Blk {
    fn from_affine(b: &AffineBlock) -> Blk {
        let nvar = b.num_vars();
        match b.face() {
            None => Blk {
                m: b.size(),
                c0: b.constant().clone(),
                f: (0..nvar).map(|i| b.entries(i).to_vec()).collect(),
            },
            Some(p) => {
                let m = p.ncols();
                let c0 = p.transpose() * b.constant() * p;
                let f = (0..nvar)
                    .map(|i| {
                        if b.entries(i).is_empty() {
                            return Vec::new();
                        }
                        let fi = p.transpose() * b.coefficient_matrix(i) * p;
                        let tol = 1e-15 * fi.amax().max(1e-300);
                        let mut list = Vec::new();
                        for c in 0..m {
                            for r in 0..=c {
                                let v = 0.5 * (fi[(r, c)] + fi[(c, r)]);
                                if v.abs() > tol {
                                    list.push((r, c, v));
                                }
                            }
                        }
                        list
                    })
                    .collect();
                Blk { m, c0, f }
            }
        }
    }

    fn eval(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut s = self.c0.clone();
        for (i, list) in self.f.iter().enumerate() {
            let zi = z[i];
            if zi == 0.0 {
                continue;
            }
            for &(r, c, v) in list {
                s[(r, c)] += zi * v;
                if r != c {
                    s[(c, r)] += zi * v;
                }
            }
        }
        s
    }

    fn adjoint(&self, w: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.f.len(),
            self.f.iter().map(|list| {
                list.iter()
                    .map(|&(r, c, v)| if r == c { v * w[(r, c)] } else { 2.0 * v * w[(r, c)] })
                    .sum()
            }),
        )
    }

    fn with_extra_var(&self, coef: f64) -> Blk {
        let mut f = self.f.clone();
        f.push((0..self.m).map(|r| (r, r, coef)).collect());
        Blk {
            m: self.m,
            c0: self.c0.clone(),
            f,
        }
    }

    /// Adds `weight * (tr(Sinv F_i Sinv F_j))_{ij}` to `h`.
    fn add_hessian(&self, sinv: &DMatrix<f64>, weight: f64, h: &mut DMatrix<f64>) {
        let m = self.m;
        let active: Vec<usize> = (0..self.f.len()).filter(|&i| !self.f[i].is_empty()).collect();
        let mut x = DMatrix::zeros(m, m);
        let mut t = DMatrix::zeros(m, m);
        let mut touched = vec![false; m];
        let mut cols = Vec::with_capacity(m);
        for (ai, &i) in active.iter().enumerate() {
            cols.clear();
            for &(r, c, v) in &self.f[i] {
                {
                    let mut col = x.column_mut(c);
                    col.axpy(v, &sinv.column(r), 1.0);
                }
                if !touched[c] {
                    touched[c] = true;
                    cols.push(c);
                }
                if r != c {
                    let mut col = x.column_mut(r);
                    col.axpy(v, &sinv.column(c), 1.0);
                    if !touched[r] {
                        touched[r] = true;
                        cols.push(r);
                    }
                }
            }
            t.fill(0.0);
            for &c in &cols {
                t.ger(1.0, &x.column(c), &sinv.column(c), 1.0);
            }
            for &j in &active[ai..] {
                let mut acc = 0.0;
                for &(r, c, v) in &self.f[j] {
                    acc += if r == c {
                        v * t[(r, c)]
                    } else {
                        v * (t[(r, c)] + t[(c, r)])
                    };
                }
                h[(i, j)] += weight * acc;
                if i != j {
                    h[(j, i)] += weight * acc;
                }
            }
            for &c in &cols {
                x.column_mut(c).fill(0.0);
                touched[c] = false;
            }
        }
    }
}

/// `(logdet S, S^{-1})` when `S` is positive definite.
fn chol_inv(s: &DMatrix<f64>) -> Option<(f64, DMatrix<f64>)> {
    let ch = s.clone().cholesky()?;
    let logdet = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    if !logdet.is_finite() {
        return None;
    }
    Some((logdet, ch.inverse()))
}

fn chol_logdet(s: &DMatrix<f64>) -> Option<f64> {
    let ch = s.clone().cholesky()?;
    let logdet = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    logdet.is_finite().then_some(logdet)
}

/// Barrier subproblem `t (c'z - logdet G) - sum logdet S_k - log(R^2 - |z - z_c|^2)`
/// over the affine set `z0 + N w`.
struct Problem {
    cost: DVector<f64>,
    logdet: Option<Blk>,
    blocks: Vec<Blk>,
    ball: Option<(DVector<f64>, f64)>,
    null: DMatrix<f64>,
}

struct Counters {
    newton: usize,
    max_newton: usize,
}

enum CenterError {
    Budget,
    Unbounded,
    Stalled(String),
}

impl Problem {
    fn nvar(&self) -> usize {
        self.cost.len()
    }

    fn barrier_parameter(&self) -> f64 {
        self.blocks.iter().map(|b| b.m as f64).sum::<f64>() + if self.ball.is_some() { 1.0 } else { 0.0 }
    }

    fn objective(&self, z: &DVector<f64>) -> f64 {
        let mut f = self.cost.dot(z);
        if let Some(g) = &self.logdet {
            f -= chol_logdet(&g.eval(z)).unwrap_or(f64::NEG_INFINITY);
        }
        f
    }

    fn value(&self, t: f64, z: &DVector<f64>) -> Option<f64> {
        let mut v = t * self.cost.dot(z);
        if let Some(g) = &self.logdet {
            v -= t * chol_logdet(&g.eval(z))?;
        }
        for b in &self.blocks {
            v -= chol_logdet(&b.eval(z))?;
        }
        if let Some((center, r2)) = &self.ball {
            let slack = r2 - (z - center).norm_squared();
            if slack <= 0.0 {
                return None;
            }
            v -= slack.ln();
        }
        Some(v)
    }

    fn feasible(&self, z: &DVector<f64>) -> bool {
        self.value(1.0, z).is_some()
    }

    fn grad_hess(&self, t: f64, z: &DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let n = self.nvar();
        let mut g = &self.cost * t;
        let mut h = DMatrix::zeros(n, n);
        if let Some(gb) = &self.logdet {
            let (_, inv) = chol_inv(&gb.eval(z))?;
            g -= gb.adjoint(&inv) * t;
            gb.add_hessian(&inv, t, &mut h);
        }
        for b in &self.blocks {
            let (_, inv) = chol_inv(&b.eval(z))?;
            g -= b.adjoint(&inv);
            b.add_hessian(&inv, 1.0, &mut h);
        }
        if let Some((center, r2)) = &self.ball {
            let d = z - center;
            let slack = r2 - d.norm_squared();
            if slack <= 0.0 {
                return None;
            }
            g += &d * (2.0 / slack);
            for i in 0..n {
                h[(i, i)] += 2.0 / slack;
            }
            h.ger(4.0 / (slack * slack), &d, &d, 1.0);
        }
        Some((g, h))
    }

    /// Newton centering for fixed `t`, starting from a strictly feasible `z`.
    fn center(
        &self,
        t: f64,
        mut z: DVector<f64>,
        counters: &mut Counters,
    ) -> std::result::Result<DVector<f64>, CenterError> {
        let nt = &self.null;
        if nt.ncols() == 0 {
            return Ok(z);
        }
        let mut stalls = 0;
        loop {
            if counters.newton >= counters.max_newton {
                return Err(CenterError::Budget);
            }
            counters.newton += 1;
            let (g, h) = self
                .grad_hess(t, &z)
                .ok_or_else(|| CenterError::Stalled("iterate left the cone".into()))?;
            let gw = nt.transpose() * &g;
            let hw = linalg::symmetrize(&(nt.transpose() * &h * nt));
            let step =
                newton_direction(&hw, &gw).ok_or_else(|| CenterError::Stalled("singular Newton system".into()))?;
            let dec2 = -gw.dot(&step);
            if !dec2.is_finite() {
                return Err(CenterError::Stalled("non-finite Newton decrement".into()));
            }
            if dec2 <= 1e-10 {
                return Ok(z);
            }
            let dz = nt * &step;
            let f0 = self.value(t, &z).unwrap_or(f64::INFINITY);
            let slope = g.dot(&dz);
            let mut alpha = 1.0;
            let mut accepted = None;
            while alpha > 1e-12 {
                let trial = &z + &dz * alpha;
                if let Some(f1) = self.value(t, &trial) {
                    if f1 <= f0 + 0.01 * alpha * slope {
                        if f1 >= f0 && dec2 < 1e-6 {
                            // no measurable decrease left
                            return Ok(z);
                        }
                        accepted = Some((trial, if f1 < f0 { alpha } else { 0.0 }));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let next = match accepted {
                Some((_, alpha)) if alpha < 1e-3 && dec2 < 1e-6 => return Ok(z),
                Some((z1, alpha)) => {
                    if alpha < 1e-3 {
                        // inaccurate direction: the Hessian is near its conditioning limit
                        stalls += 1;
                        if stalls > 20 {
                            return Err(CenterError::Stalled("line search stalled".into()));
                        }
                    }
                    z1
                }
                None => {
                    // rounding floor: accept the damped step if it stays inside
                    let damped = &z + &dz * (1.0 / (1.0 + dec2.sqrt()));
                    if dec2 < 1e-6 {
                        return Ok(z);
                    }
                    if !self.feasible(&damped) {
                        return Err(CenterError::Stalled("line search failed".into()));
                    }
                    stalls += 1;
                    if stalls > 20 {
                        return Err(CenterError::Stalled("line search stalled".into()));
                    }
                    damped
                }
            };
            if next.amax() > 1e12 {
                return Err(CenterError::Unbounded);
            }
            z = next;
        }
    }

    /// Scaled inverses `S_k^{-1} / t` and `G^{-1}` at `z`, corrected to first order
    /// by one more Newton step so that stationarity holds up to rounding.
    fn duals(&self, t: f64, z: &DVector<f64>) -> (Vec<DMatrix<f64>>, Option<DMatrix<f64>>) {
        let dz = self.newton_step(t, z);
        let corrected = |b: &Blk, scale: f64| -> DMatrix<f64> {
            let s = b.eval(z);
            let Some((_, inv)) = chol_inv(&s) else {
                return DMatrix::zeros(b.m, b.m);
            };
            let plain = &inv / scale;
            let Some(dz) = &dz else {
                return plain;
            };
            let ds = b.eval(&(z + dz)) - &s;
            let lin = &inv * ds * &inv;
            let cand = linalg::symmetrize(&((&inv - lin) / scale));
            // keep the plain inverse if the correction leaves the cone noticeably
            let floor = linalg::min_eigenvalue(&cand);
            if floor < -1e-8 * cand.norm().max(1e-300) {
                plain
            } else {
                cand
            }
        };
        let duals = self.blocks.iter().map(|b| corrected(b, t)).collect();
        let gdual = self.logdet.as_ref().and_then(|g| {
            chol_inv(&g.eval(z))?;
            Some(corrected(g, 1.0))
        });
        (duals, gdual)
    }

    fn newton_step(&self, t: f64, z: &DVector<f64>) -> Option<DVector<f64>> {
        let nt = &self.null;
        if nt.ncols() == 0 {
            return None;
        }
        let (g, h) = self.grad_hess(t, z)?;
        let gw = nt.transpose() * &g;
        let hw = linalg::symmetrize(&(nt.transpose() * &h * nt));
        let step = newton_direction(&hw, &gw)?;
        Some(nt * step)
    }
}

fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = h.clone().cholesky() {
        let d = ch.solve(&(-g));
        if d.iter().all(|v| v.is_finite()) {
            return Some(d);
        }
    }
    let scale = h.diagonal().amax().max(1e-300);
    let mut reg = h.clone();
    for i in 0..reg.nrows() {
        reg[(i, i)] += 1e-13 * scale;
    }
    if let Some(ch) = reg.clone().cholesky() {
        return Some(ch.solve(&(-g)));
    }
    reg.lu().solve(&(-g))
}

enum PhaseOne {
    Feasible(DVector<f64>, f64),
    Reduce(Vec<DMatrix<f64>>, bool, f64),
    Infeasible(f64),
    Trouble(String),
}

struct Working {
    blocks: Vec<AffineBlock>,
    active: Vec<bool>,
    extra: Vec<(DVector<f64>, f64)>,
}

impl Working {
    fn reduced(&self) -> Vec<(usize, Blk)> {
        self.blocks
            .iter()
            .enumerate()
            .filter(|(k, _)| self.active[*k])
            .map(|(k, b)| (k, Blk::from_affine(b)))
            .collect()
    }

    fn add_kernel(&mut self, k: usize, kernel: &DMatrix<f64>) {
        let n = self.blocks[k].num_vars();
        self.extra.extend(kernel_equalities(&self.blocks[k], kernel, n));
        self.blocks[k].restrict(kernel);
    }
}

fn stacked_equalities(prog: &ConicProgram, extra: &[(DVector<f64>, f64)]) -> (DMatrix<f64>, DVector<f64>) {
    let n = prog.num_vars;
    let m0 = prog.eq_matrix.nrows();
    let mut a = DMatrix::zeros(m0 + extra.len(), n);
    let mut b = DVector::zeros(m0 + extra.len());
    a.rows_mut(0, m0).copy_from(&prog.eq_matrix);
    b.rows_mut(0, m0).copy_from(&prog.eq_rhs);
    for (k, (row, rhs)) in extra.iter().enumerate() {
        a.row_mut(m0 + k).copy_from(&row.transpose());
        b[m0 + k] = *rhs;
    }
    (a, b)
}

/// Kernels of principal submatrices that no feasible direction can change.
fn constant_kernels(
    blocks: &[(usize, Blk)],
    z0: &DVector<f64>,
    null: &DMatrix<f64>,
) -> std::result::Result<Vec<(usize, DMatrix<f64>)>, String> {
    let mut out = Vec::new();
    let nw = null.ncols();
    for (k, b) in blocks {
        let m = b.m;
        let mut var = vec![0.0f64; m * m];
        if nw > 0 {
            let mut dirs = vec![DVector::<f64>::zeros(nw); m * m];
            for (i, list) in b.f.iter().enumerate() {
                if list.is_empty() {
                    continue;
                }
                let row = null.row(i);
                for &(r, c, v) in list {
                    dirs[r * m + c].axpy(v, &row.transpose(), 1.0);
                }
            }
            for (slot, d) in var.iter_mut().zip(&dirs) {
                *slot = d.amax();
            }
        }
        let s0 = b.eval(z0);
        let scale = 1.0f64.max(s0.amax());
        let constant = |r: usize, c: usize| {
            let (r, c) = if r <= c { (r, c) } else { (c, r) };
            var[r * m + c] <= 1e-12 * scale
        };
        let mut idx: Vec<usize> = (0..m).filter(|&r| constant(r, r)).collect();
        loop {
            let mut worst = None;
            let mut worst_count = 0;
            for &r in &idx {
                let count = idx.iter().filter(|&&c| !constant(r, c)).count();
                if count > worst_count {
                    worst_count = count;
                    worst = Some(r);
                }
            }
            match worst {
                Some(r) => idx.retain(|&x| x != r),
                None => break,
            }
        }
        if idx.is_empty() {
            continue;
        }
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, c| s0[(idx[a], idx[c])]);
        let (vals, vecs) = linalg::sym_eigen(&sub);
        let top = vals.amax().max(1e-300);
        if vals[0] < -1e-7 * scale {
            return Err(format!("fixed part of a block has eigenvalue {:.3e}", vals[0]));
        }
        let ker: Vec<usize> = (0..vals.len()).filter(|&j| vals[j] <= 1e-7 * top).collect();
        if ker.is_empty() {
            continue;
        }
        let mut kmat = DMatrix::zeros(m, ker.len());
        for (col, &j) in ker.iter().enumerate() {
            for (a, &r) in idx.iter().enumerate() {
                kmat[(r, col)] = vecs[(a, j)];
            }
        }
        out.push((*k, kmat));
    }
    Ok(out)
}

fn phase_one(
    prog: &ConicProgram,
    blocks: &[(usize, Blk)],
    z0: &DVector<f64>,
    null: &DMatrix<f64>,
    opts: &SolverOptions,
    counters: &mut Counters,
) -> PhaseOne {
    let n = prog.num_vars;
    let logdet = prog.logdet.as_ref().map(Blk::from_affine);
    let mut all: Vec<Blk> = blocks.iter().map(|(_, b)| b.clone()).collect();
    if let Some(g) = &logdet {
        all.push(g.clone());
    }
    let lmin = all
        .iter()
        .map(|b| linalg::min_eigenvalue(&b.eval(z0)))
        .fold(f64::INFINITY, f64::min);
    let scale = all.iter().map(|b| b.eval(z0).amax()).fold(1.0f64, f64::max);
    let s0 = if lmin.is_finite() { (lmin - 1.0).min(0.5) } else { 0.0 };
    let mut ext: Vec<Blk> = all.iter().map(|b| b.with_extra_var(-1.0)).collect();
    let mut cap = Blk {
        m: 1,
        c0: DMatrix::from_element(1, 1, 1.0),
        f: vec![Vec::new(); n + 1],
    };
    cap.f[n].push((0, 0, -1.0));
    ext.push(cap);
    let mut cost = DVector::zeros(n + 1);
    cost[n] = -1.0;
    let mut center = DVector::zeros(n + 1);
    center.rows_mut(0, n).copy_from(z0);
    let radius = 1e4 * (1.0 + z0.norm());
    let mut nullx = DMatrix::zeros(n + 1, null.ncols() + 1);
    nullx.view_mut((0, 0), (n, null.ncols())).copy_from(null);
    nullx[(n, null.ncols())] = 1.0;
    let p = Problem {
        cost,
        logdet: None,
        blocks: ext,
        ball: Some((center.clone(), radius * radius)),
        null: nullx,
    };
    let mut z = center;
    z[n] = s0;
    if !p.feasible(&z) {
        return PhaseOne::Trouble("could not build an interior start for phase one".into());
    }
    let eps = opts.fr_tol * scale;
    let param = p.barrier_parameter();
    let mut t = 1.0;
    for _ in 0..opts.max_outer {
        z = match p.center(t, z.clone(), counters) {
            Ok(z1) => z1,
            Err(CenterError::Budget) => return PhaseOne::Trouble("phase one iteration budget".into()),
            Err(CenterError::Unbounded) => return PhaseOne::Trouble("phase one diverged".into()),
            Err(CenterError::Stalled(msg)) => {
                // stalls this deep in phase one mean the margin is at rounding level
                if param / t <= 1e3 * eps && z[n].abs() <= 1e3 * eps {
                    let (duals, _) = p.duals(t, &z);
                    return reduce_from_duals(duals, blocks.len(), logdet.is_some(), z[n]);
                }
                return PhaseOne::Trouble(format!("phase one: {msg}"));
            }
        };
        let s = z[n];
        let gap = param / t;
        if s > 0.0 && s >= 0.5 * (s + gap) {
            return PhaseOne::Feasible(z.rows(0, n).into_owned(), s);
        }
        if s + gap < -eps {
            return PhaseOne::Infeasible(s);
        }
        if gap <= eps {
            let (duals, _) = p.duals(t, &z);
            return reduce_from_duals(duals, blocks.len(), logdet.is_some(), s);
        }
        t *= opts.mu;
    }
    PhaseOne::Trouble("phase one outer iteration limit".into())
}

fn reduce_from_duals(duals: Vec<DMatrix<f64>>, nblocks: usize, has_logdet: bool, margin: f64) -> PhaseOne {
    let eigs: Vec<(DVector<f64>, DMatrix<f64>)> = duals.iter().map(linalg::sym_eigen).collect();
    let top = eigs
        .iter()
        .map(|(v, _)| v.iter().cloned().fold(0.0, f64::max))
        .fold(0.0, f64::max);
    if top <= 0.0 {
        return PhaseOne::Trouble("phase one produced no exposing direction".into());
    }
    let mut kernels = Vec::with_capacity(nblocks);
    let mut touches_logdet = false;
    for (k, (vals, vecs)) in eigs.iter().enumerate() {
        let cols: Vec<usize> = (0..vals.len()).filter(|&j| vals[j] >= 1e-5 * top).collect();
        let mut kmat = DMatrix::zeros(vecs.nrows(), cols.len());
        for (dst, &j) in cols.iter().enumerate() {
            kmat.set_column(dst, &vecs.column(j));
        }
        if k < nblocks {
            kernels.push(kmat);
        } else if has_logdet && k == nblocks && !cols.is_empty() {
            touches_logdet = true;
        }
    }
    PhaseOne::Reduce(kernels, touches_logdet, margin)
}

fn failure(prog: &ConicProgram, status: SolverStatus, detail: String, diag: SolverDiagnostics) -> ConicSolution {
    ConicSolution {
        status,
        z: DVector::zeros(prog.num_vars),
        objective: f64::NAN,
        gap: f64::INFINITY,
        duals: prog.blocks.iter().map(|b| DMatrix::zeros(b.size(), b.size())).collect(),
        logdet_dual: None,
        eq_duals: DVector::zeros(prog.eq_matrix.nrows()),
        extra_equalities: Vec::new(),
        merged_blocks: Vec::new(),
        diagnostics: diag,
        detail,
    }
}

/// Solves `prog`.  Non-optimal outcomes come back as a solution whose
/// `status` and `detail` say what happened; `Err` is reserved for malformed
/// programs.
pub fn solve(prog: &ConicProgram, opts: &SolverOptions) -> Result<ConicSolution> {
    prog.validate()?;
    let n = prog.num_vars;
    let mut diag = SolverDiagnostics::default();
    let mut work = Working {
        blocks: prog.blocks.clone(),
        active: vec![true; prog.blocks.len()],
        extra: Vec::new(),
    };

    let mut merged = Vec::new();
    for a in 0..work.blocks.len() {
        for b in (a + 1)..work.blocks.len() {
            if !(work.active[a] && work.active[b]) {
                continue;
            }
            let tol = 1e-13 * (1.0 + work.blocks[a].constant().amax());
            if work.blocks[a].is_negation_of(&work.blocks[b], tol) {
                let blk = &work.blocks[a];
                for c in 0..blk.size() {
                    for r in 0..=c {
                        let mut row = DVector::zeros(n);
                        for i in 0..n {
                            for &(rr, cc, v) in blk.entries(i) {
                                if rr == r && cc == c {
                                    row[i] += v;
                                }
                            }
                        }
                        let rhs = -blk.constant()[(r, c)];
                        if row.amax() > 0.0 || rhs != 0.0 {
                            work.extra.push((row, rhs));
                        }
                    }
                }
                work.active[a] = false;
                work.active[b] = false;
                merged.push(a);
                merged.push(b);
            }
        }
    }

    let mut counters = Counters {
        newton: 0,
        max_newton: opts.max_newton,
    };
    let start = loop {
        let (a, b) = stacked_equalities(prog, &work.extra);
        let aff = linalg::solve_affine(&a, &b, 1e-12);
        if aff.residual > opts.feas_tol.max(1e-7) * (1.0 + b.amax()) {
            diag.equality_residual = aff.residual;
            return Ok(failure(
                prog,
                SolverStatus::Infeasible,
                format!("equality constraints inconsistent (residual {:.3e})", aff.residual),
                diag,
            ));
        }
        let reduced = work.reduced();
        if diag.facial_reductions < opts.max_facial_reductions {
            match constant_kernels(&reduced, &aff.particular, &aff.null_basis) {
                Ok(found) if !found.is_empty() => {
                    for (k, kmat) in found {
                        work.add_kernel(k, &kmat);
                    }
                    diag.facial_reductions += 1;
                    continue;
                }
                Ok(_) => {}
                Err(msg) => {
                    return Ok(failure(prog, SolverStatus::Infeasible, msg, diag));
                }
            }
        }
        match phase_one(prog, &reduced, &aff.particular, &aff.null_basis, opts, &mut counters) {
            PhaseOne::Feasible(z, margin) => {
                diag.phase_one_margin = margin;
                break (z, aff.null_basis);
            }
            PhaseOne::Infeasible(margin) => {
                diag.phase_one_margin = margin;
                diag.newton_steps = counters.newton;
                return Ok(failure(
                    prog,
                    SolverStatus::Infeasible,
                    format!("no feasible point (phase-one margin {margin:.3e})"),
                    diag,
                ));
            }
            PhaseOne::Reduce(kernels, touches_logdet, margin) => {
                diag.phase_one_margin = margin;
                if touches_logdet {
                    return Ok(failure(
                        prog,
                        SolverStatus::Infeasible,
                        "log-det block is singular on the whole feasible set".into(),
                        diag,
                    ));
                }
                if diag.facial_reductions >= opts.max_facial_reductions {
                    return Ok(failure(
                        prog,
                        SolverStatus::NumericalTrouble,
                        "facial reduction limit reached".into(),
                        diag,
                    ));
                }
                let mut any = false;
                for ((k, _), kmat) in reduced.iter().zip(&kernels) {
                    if kmat.ncols() > 0 {
                        if kmat.ncols() >= work.blocks[*k].reduced_size() {
                            // the block is identically zero on the feasible set
                            let n = work.blocks[*k].num_vars();
                            let eqs = kernel_equalities(&work.blocks[*k], kmat, n);
                            work.extra.extend(eqs);
                            work.active[*k] = false;
                        } else {
                            work.add_kernel(*k, kmat);
                        }
                        any = true;
                    }
                }
                if !any {
                    return Ok(failure(
                        prog,
                        SolverStatus::NumericalTrouble,
                        "degenerate phase one without exposing direction".into(),
                        diag,
                    ));
                }
                diag.facial_reductions += 1;
            }
            PhaseOne::Trouble(msg) => {
                diag.newton_steps = counters.newton;
                return Ok(failure(prog, SolverStatus::NumericalTrouble, msg, diag));
            }
        }
    };

    let (z_start, null) = start;
    let reduced = work.reduced();
    let p = Problem {
        cost: prog.cost.clone(),
        logdet: prog.logdet.as_ref().map(Blk::from_affine),
        blocks: reduced.iter().map(|(_, b)| b.clone()).collect(),
        ball: None,
        null,
    };
    let param = p.barrier_parameter();
    let mut z = z_start;
    let mut t = 1.0;
    let mut status = SolverStatus::MaxIter;
    let mut detail = String::from("outer iteration limit");
    for outer in 0..opts.max_outer {
        diag.outer_iterations = outer + 1;
        match p.center(t, z.clone(), &mut counters) {
            Ok(z1) => z = z1,
            Err(CenterError::Budget) => {
                detail = "Newton step budget exhausted".into();
                break;
            }
            Err(CenterError::Unbounded) => {
                status = SolverStatus::Unbounded;
                detail = "iterates diverge".into();
                break;
            }
            Err(CenterError::Stalled(msg)) => {
                let f = p.objective(&z);
                if param / t <= 1e3 * opts.gap_tol * f.abs().max(1.0) {
                    status = SolverStatus::Optimal;
                    detail = format!("converged at rounding floor ({msg})");
                } else {
                    status = SolverStatus::NumericalTrouble;
                    detail = msg;
                }
                break;
            }
        }
        let f = p.objective(&z);
        if param / t <= opts.gap_tol * f.abs().max(1.0) {
            status = SolverStatus::Optimal;
            detail = "converged".into();
            break;
        }
        t *= opts.mu;
    }
    diag.newton_steps = counters.newton;
    diag.final_barrier_weight = t;

    let (rduals, gdual) = p.duals(t, &z);
    let mut duals: Vec<DMatrix<f64>> = prog.blocks.iter().map(|b| DMatrix::zeros(b.size(), b.size())).collect();
    for ((k, _), d) in reduced.iter().zip(&rduals) {
        let full = match work.blocks[*k].face() {
            Some(pm) => pm * d * pm.transpose(),
            None => d.clone(),
        };
        duals[*k] = full;
    }

    let (a, b) = stacked_equalities(prog, &work.extra);
    let gfull = match (&prog.logdet, &gdual) {
        (Some(g), Some(w)) => Some(match g.face() {
            Some(pm) => pm * w * pm.transpose(),
            None => w.clone(),
        }),
        _ => None,
    };
    let base = stationarity_rhs(prog, gfull.as_ref());
    let (nu, residual) = {
        let plain = equality_multipliers(prog, &a, &base, &duals);
        let active: Vec<usize> = reduced.iter().map(|(k, _)| *k).collect();
        match refine_duals(prog, &work.blocks, &active, &z, &duals, &a, &base, &plain.0) {
            Some((refined, nu, res)) if res < plain.1 => {
                duals = refined;
                (nu, res)
            }
            _ => plain,
        }
    };
    diag.stationarity_residual = residual;
    diag.equality_residual = if a.nrows() > 0 { (&a * &z - &b).amax() } else { 0.0 };
    diag.min_block_eigenvalue = reduced
        .iter()
        .map(|(_, blk)| linalg::min_eigenvalue(&blk.eval(&z)))
        .fold(f64::INFINITY, f64::min);
    diag.complementarity = prog
        .blocks
        .iter()
        .enumerate()
        .map(|(k, blk)| linalg::frob(&blk.eval(&z), &duals[k]))
        .collect();

    let m0 = prog.eq_matrix.nrows();
    let extra_equalities = work
        .extra
        .iter()
        .enumerate()
        .map(|(j, (row, rhs))| ExtraEquality {
            row: row.clone(),
            rhs: *rhs,
            dual: nu[m0 + j],
        })
        .collect();
    let logdet_dual = gfull;
    Ok(ConicSolution {
        status,
        objective: prog.objective(&z),
        gap: param / t,
        z,
        duals,
        logdet_dual,
        eq_duals: nu.rows(0, m0).into_owned(),
        extra_equalities,
        merged_blocks: merged,
        diagnostics: diag,
        detail,
    })
}

fn unpack_sym(u: &DVector<f64>, offset: usize, r: usize) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(r, r);
    let mut col = offset;
    for bb in 0..r {
        for aa in 0..=bb {
            x[(aa, bb)] = u[col];
            x[(bb, aa)] = u[col];
            col += 1;
        }
    }
    x
}

/// Projects every packed symmetric block of `u` onto the PSD cone.
fn clip_blocks(u: &DVector<f64>, sizes: &[usize]) -> DVector<f64> {
    let mut out = u.clone();
    let mut offset = 0;
    for &r in sizes {
        let x = unpack_sym(u, offset, r);
        let (vals, vecs) = linalg::sym_eigen(&x);
        if !vals.is_empty() && vals[0] < 0.0 {
            let clipped = &vecs * DMatrix::from_diagonal(&vals.map(|v| v.max(0.0))) * vecs.transpose();
            let mut col = offset;
            for bb in 0..r {
                for aa in 0..=bb {
                    out[col] = clipped[(aa, bb)];
                    col += 1;
                }
            }
        }
        offset += r * (r + 1) / 2;
    }
    out
}

/// `c - G*(W)`.
fn stationarity_rhs(prog: &ConicProgram, w: Option<&DMatrix<f64>>) -> DVector<f64> {
    let mut r = prog.cost.clone();
    if let (Some(g), Some(w)) = (&prog.logdet, w) {
        r -= g.adjoint(w);
    }
    r
}

/// Least-squares `nu` in `c - G*(W) - sum S_k*(Lambda_k) = A' nu` and the
/// remaining residual.
fn equality_multipliers(
    prog: &ConicProgram,
    a: &DMatrix<f64>,
    base: &DVector<f64>,
    duals: &[DMatrix<f64>],
) -> (DVector<f64>, f64) {
    let mut r = base.clone();
    for (k, b) in prog.blocks.iter().enumerate() {
        r -= b.adjoint(&duals[k]);
    }
    if a.nrows() == 0 {
        return (DVector::zeros(0), r.amax());
    }
    let nu = a
        .transpose()
        .svd(true, true)
        .solve(&r, 1e-12 * a.amax().max(1e-300))
        .unwrap_or_else(|_| DVector::zeros(a.nrows()));
    let res = (a.transpose() * &nu - &r).amax();
    (nu, res)
}

/// Sharpens barrier duals: each `Lambda_k` is confined to the directions
/// where it dominates `S_k(z)` (relative to the largest eigenvalues of
/// each), and the stationarity equations are then solved for the confined
/// duals and `nu` with the smallest change from the barrier estimate.
#[allow(clippy::too_many_arguments)]
fn refine_duals(
    prog: &ConicProgram,
    blocks: &[AffineBlock],
    active: &[usize],
    z: &DVector<f64>,
    duals: &[DMatrix<f64>],
    a: &DMatrix<f64>,
    base: &DVector<f64>,
    nu0: &DVector<f64>,
) -> Option<(Vec<DMatrix<f64>>, DVector<f64>, f64)> {
    let n = prog.num_vars;
    // per block: Y = P U diag(sqrt(mu)) on the confined directions, so that
    // the barrier dual itself is Y Y'
    let mut spans: Vec<(usize, DMatrix<f64>)> = Vec::new();
    for &k in active {
        let blk = &blocks[k];
        let p = blk
            .face()
            .cloned()
            .unwrap_or_else(|| DMatrix::identity(blk.size(), blk.size()));
        let s_red = p.transpose() * blk.eval(z) * &p;
        let l_red = linalg::symmetrize(&(p.transpose() * &duals[k] * &p));
        let (mu, u) = linalg::sym_eigen(&l_red);
        let mu_max = mu.iter().cloned().fold(0.0, f64::max);
        if mu_max <= 0.0 {
            continue;
        }
        let svals: Vec<f64> = (0..mu.len())
            .map(|j| {
                let col = u.column(j);
                col.dot(&(&s_red * col))
            })
            .collect();
        let s_max = svals.iter().cloned().fold(0.0, f64::max).max(1e-300);
        let cols: Vec<usize> = (0..mu.len()).filter(|&j| mu[j] / mu_max > svals[j] / s_max).collect();
        if cols.is_empty() {
            continue;
        }
        // scaled by the barrier eigenvalues, so the correction below is
        // measured relative to the current dual
        let mut ured = DMatrix::zeros(u.nrows(), cols.len());
        for (dst, &j) in cols.iter().enumerate() {
            ured.set_column(dst, &(u.column(j) * mu[j].sqrt()));
        }
        spans.push((k, p * ured));
    }
    let pairs = |r: usize| r * (r + 1) / 2;
    let nx: usize = spans.iter().map(|(_, y)| pairs(y.ncols())).sum();
    let m = a.nrows();
    let mut e = DMatrix::zeros(n, nx + m);
    let mut u0 = DVector::zeros(nx + m);
    let mut offset = 0;
    for (k, y) in &spans {
        let r = y.ncols();
        let blk = &prog.blocks[*k];
        for i in 0..n {
            let entries = blk.entries(i);
            if entries.is_empty() {
                continue;
            }
            let mut bmat = DMatrix::zeros(r, r);
            for &(rr, cc, v) in entries {
                let yr = y.row(rr);
                let yc = y.row(cc);
                bmat.ger(v, &yr.transpose(), &yc.transpose(), 1.0);
                if rr != cc {
                    bmat.ger(v, &yc.transpose(), &yr.transpose(), 1.0);
                }
            }
            let mut col = offset;
            for bb in 0..r {
                for aa in 0..=bb {
                    e[(i, col)] = if aa == bb {
                        bmat[(aa, bb)]
                    } else {
                        bmat[(aa, bb)] + bmat[(bb, aa)]
                    };
                    col += 1;
                }
            }
        }
        let mut col = offset;
        for bb in 0..r {
            for aa in 0..=bb {
                u0[col] = if aa == bb { 1.0 } else { 0.0 };
                col += 1;
            }
        }
        offset += pairs(r);
    }
    if m > 0 {
        e.columns_mut(nx, m).copy_from(&a.transpose());
        u0.rows_mut(nx, m).copy_from(nu0);
    }
    let svd = e.clone().svd(true, true);
    let tol = 1e-13 * svd.singular_values.max();
    let sizes: Vec<usize> = spans.iter().map(|(_, y)| y.ncols()).collect();
    // alternate between the stationarity plane and the PSD cone
    let mut u = u0;
    let target = 1e-10 * base.amax().max(1.0);
    for _ in 0..200 {
        let defect = base - &e * &u;
        u += svd.solve(&defect, tol).ok()?;
        let clipped = clip_blocks(&u, &sizes);
        let res = (base - &e * &clipped).amax();
        u = clipped;
        if res <= target {
            break;
        }
    }

    let mut out: Vec<DMatrix<f64>> = prog.blocks.iter().map(|b| DMatrix::zeros(b.size(), b.size())).collect();
    let mut offset = 0;
    for (k, y) in &spans {
        let r = y.ncols();
        let x = unpack_sym(&u, offset, r);
        out[*k] = y * x * y.transpose();
        offset += pairs(r);
    }
    let nu = u.rows(nx, m).into_owned();
    let res = (base - e * u).amax();
    Some((out, nu, res))
}
