//! Basic closed semi-algebraic design spaces `{x : g_j(x) >= 0}`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polybasis::{MultiIndex, Polynomial, TermRecord};

/// Absolute slack used by [`SemiAlgebraicSet::contains`].
pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub poly: Polynomial,
    pub degree: usize,
    /// `ceil(degree / 2)`.
    pub half_degree: usize,
}

impl Constraint {
    pub fn new(poly: Polynomial) -> Self {
        let degree = poly.degree();
        Constraint {
            poly,
            degree,
            half_degree: degree.div_ceil(2),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SemiAlgebraicSet {
    n: usize,
    constraints: Vec<Constraint>,
    ball_radius: Option<f64>,
}

/// `Some(R)` when `g = R^2 - sum x_i^2` exactly.
fn ball_radius_of(g: &Polynomial) -> Option<f64> {
    let n = g.n();
    if g.num_terms() != n + 1 {
        return None;
    }
    let r2 = g.coeff(&MultiIndex::zero(n));
    if r2 <= 0.0 {
        return None;
    }
    for i in 0..n {
        let mut e = vec![0; n];
        e[i] = 2;
        if g.coeff(&MultiIndex::new(e)) != -1.0 {
            return None;
        }
    }
    Some(r2.sqrt())
}

impl SemiAlgebraicSet {
    pub fn new(n: usize, inequalities: Vec<Polynomial>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("dimension n must be >= 1".into()));
        }
        if inequalities.is_empty() {
            return Err(Error::InvalidInput(
                "a design space needs at least one inequality".into(),
            ));
        }
        for g in &inequalities {
            if g.n() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: g.n(),
                });
            }
        }
        let ball_radius = inequalities.iter().find_map(ball_radius_of);
        Ok(SemiAlgebraicSet {
            n,
            constraints: inequalities.into_iter().map(Constraint::new).collect(),
            ball_radius,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn inequalities(&self) -> impl Iterator<Item = &Polynomial> {
        self.constraints.iter().map(|c| &c.poly)
    }

    pub fn ball_radius(&self) -> Option<f64> {
        self.ball_radius
    }

    /// `max_j v_j`.
    pub fn max_half_degree(&self) -> usize {
        self.constraints.iter().map(|c| c.half_degree).max().unwrap_or(0)
    }

    /// `g_j(x) >= -tol` for every `j`.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.n && self.constraints.iter().all(|c| c.poly.eval(x) >= -tol)
    }

    /// Index pairs `(i, j)` with `g_i = -g_j`, i.e. equality constraints.
    pub fn equality_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut used = vec![false; self.constraints.len()];
        for i in 0..self.constraints.len() {
            for j in (i + 1)..self.constraints.len() {
                if !used[i]
                    && !used[j]
                    && self.constraints[i]
                        .poly
                        .is_negation_of(&self.constraints[j].poly, 1e-14)
                {
                    used[i] = true;
                    used[j] = true;
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Makes sure the set carries a ball constraint `R^2 - |x|^2 >= 0`, appending
/// one built from `radius_hint` when absent.
pub fn validate_archimedean(set: &SemiAlgebraicSet, radius_hint: Option<f64>) -> Result<SemiAlgebraicSet> {
    if set.ball_radius.is_some() {
        return Ok(set.clone());
    }
    match radius_hint {
        Some(r) if r > 0.0 && r.is_finite() => {
            let mut out = set.clone();
            out.constraints.push(Constraint::new(Polynomial::ball(set.n, r)));
            out.ball_radius = Some(r);
            Ok(out)
        }
        Some(r) => Err(Error::InvalidInput(format!("radius hint must be positive, got {r}"))),
        None => Err(Error::MissingCompactnessCertificate),
    }
}

pub fn membership(set: &SemiAlgebraicSet, x: &[f64], tol: f64) -> bool {
    set.contains(x, tol)
}

/// Seeded uniform samples from `[-R, R]^n` kept when inside the set.  Sets
/// with equality constraints are handled by moving each box sample along its
/// ray until the first equality polynomial vanishes.
pub fn sample_points(set: &SemiAlgebraicSet, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let r = set.ball_radius.ok_or(Error::MissingCompactnessCertificate)?;
    if count == 0 {
        return Err(Error::InvalidInput("sample count must be >= 1".into()));
    }
    let pairs = set.equality_pairs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = (1000 * count as u64).max(2_000_000);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0u64;
    while out.len() < count {
        if attempts >= budget {
            return Err(Error::SamplingExhausted {
                attempts,
                accepted: out.len(),
            });
        }
        attempts += 1;
        let x: Vec<f64> = (0..set.n).map(|_| rng.gen_range(-r..=r)).collect();
        let candidate = match pairs.first() {
            None => Some(x),
            Some(&(i, _)) => project_radially(&set.constraints[i].poly, &x, r).and_then(|p| nudge_onto(set, &p)),
        };
        if let Some(p) = candidate {
            if set.contains(&p, 0.0) {
                out.push(p);
            }
        }
    }
    Ok(out)
}

/// Maps `x` back into the set for local searches: sets with equality
/// constraints move `x` along its ray onto the first equality; `None` when
/// the result is not a member.
pub fn project_onto(set: &SemiAlgebraicSet, x: &[f64]) -> Option<Vec<f64>> {
    let p = match (set.equality_pairs().first(), set.ball_radius) {
        (Some(&(i, _)), Some(r)) => {
            project_radially(&set.constraints[i].poly, x, r).and_then(|p| nudge_onto(set, &p))?
        }
        _ => x.to_vec(),
    };
    set.contains(&p, 0.0).then_some(p)
}

/// Point `lambda x` with `g(lambda x) = 0`, `lambda in (0, R / |x|]`.
fn project_radially(g: &Polynomial, x: &[f64], r: f64) -> Option<Vec<f64>> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return None;
    }
    let top = r / norm;
    let at = |lam: f64| g.eval(&x.iter().map(|v| v * lam).collect::<Vec<_>>());
    let steps = 64;
    let mut lo = 0.0;
    let mut flo = at(lo);
    for k in 1..=steps {
        let hi = top * k as f64 / steps as f64;
        let fhi = at(hi);
        if flo == 0.0 {
            return Some(x.iter().map(|v| v * lo).collect());
        }
        if flo.signum() != fhi.signum() {
            let (mut a, mut b, mut fa) = (lo, hi, flo);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let fm = at(m);
                if fm == 0.0 || (b - a) <= f64::EPSILON * b {
                    a = m;
                    break;
                }
                if fm.signum() == fa.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            return Some(x.iter().map(|v| v * a).collect());
        }
        lo = hi;
        flo = fhi;
    }
    None
}

/// Tries neighbouring floating-point scalings until every constraint holds
/// without slack.
fn nudge_onto(set: &SemiAlgebraicSet, p: &[f64]) -> Option<Vec<f64>> {
    if set.contains(p, 0.0) {
        return Some(p.to_vec());
    }
    for k in 1..=8 {
        for sign in [-1.0, 1.0] {
            let s = 1.0 + sign * k as f64 * f64::EPSILON;
            let q: Vec<f64> = p.iter().map(|v| v * s).collect();
            if set.contains(&q, 0.0) {
                return Some(q);
            }
        }
    }
    None
}

/// Moves `x` onto the constraints that are active within `tol` by
/// Gauss-Newton steps of minimal norm. Returns `x` unchanged when the
/// correction exceeds `10 tol` or leaves the set.
pub fn snap_to_active(set: &SemiAlgebraicSet, x: &[f64], tol: f64) -> Vec<f64> {
    let active: Vec<&Polynomial> = set.inequalities().filter(|g| g.eval(x).abs() <= tol).collect();
    if active.is_empty() {
        return x.to_vec();
    }
    let n = set.n();
    let mut z = x.to_vec();
    for _ in 0..20 {
        let res = DVector::from_iterator(active.len(), active.iter().map(|g| g.eval(&z)));
        if res.amax() <= 1e-15 {
            break;
        }
        let jac = DMatrix::from_fn(active.len(), n, |i, j| active[i].gradient(&z)[j]);
        let Ok(step) = jac.svd(true, true).solve(&res, 1e-10) else {
            return x.to_vec();
        };
        for (zi, si) in z.iter_mut().zip(step.iter()) {
            *zi -= si;
        }
    }
    let moved = z.iter().zip(x).fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
    if moved > 10.0 * tol || !set.contains(&z, DEFAULT_MEMBERSHIP_TOL) {
        return x.to_vec();
    }
    z
}

/// File form of a design space.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DesignSpaceRecord {
    pub n: usize,
    pub inequalities: Vec<Vec<TermRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ball_radius: Option<f64>,
}

impl DesignSpaceRecord {
    pub fn from_set(set: &SemiAlgebraicSet) -> Self {
        DesignSpaceRecord {
            n: set.n,
            inequalities: set.inequalities().map(Polynomial::to_records).collect(),
            ball_radius: set.ball_radius,
        }
    }

    /// Builds and validates the set; `ball_radius` acts as the hint.
    pub fn to_set(&self) -> Result<SemiAlgebraicSet> {
        let polys = self
            .inequalities
            .iter()
            .enumerate()
            .map(|(j, recs)| {
                Polynomial::from_records(self.n, recs).map_err(|e| Error::Parse {
                    location: format!("design_space.inequalities[{j}]"),
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let set = SemiAlgebraicSet::new(self.n, polys)?;
        validate_archimedean(&set, self.ball_radius)
    }
}

fn poly(n: usize, terms: &[(&[u32], f64)]) -> Polynomial {
    Polynomial::from_terms(n, terms.iter().map(|(e, c)| (e.to_vec(), *c))).expect("preset polynomial")
}

pub const PRESET_NAMES: [&str; 6] = ["interval", "wynn_polygon", "ellipse_ring", "moon", "folium", "sphere3d"];

/// `[-1, 1]` as `1 - x^2 >= 0`.
pub fn interval() -> SemiAlgebraicSet {
    SemiAlgebraicSet::new(1, vec![Polynomial::ball(1, 1.0)]).expect("preset")
}

/// Wynn's polygon scaled into the unit disk, with the redundant unit ball.
pub fn wynn_polygon() -> SemiAlgebraicSet {
    let s2 = std::f64::consts::SQRT_2;
    let g = vec![
        poly(2, &[(&[1, 0], 1.0), (&[0, 0], s2 / 4.0)]),
        poly(2, &[(&[0, 1], 1.0), (&[0, 0], s2 / 4.0)]),
        poly(2, &[(&[0, 1], 1.0 / 3.0), (&[0, 0], s2 / 3.0), (&[1, 0], -1.0)]),
        poly(2, &[(&[1, 0], 1.0 / 3.0), (&[0, 0], s2 / 3.0), (&[0, 1], -1.0)]),
    ];
    let set = SemiAlgebraicSet::new(2, g).expect("preset");
    validate_archimedean(&set, Some(1.0)).expect("preset")
}

/// `9 x1^2 + 13 x2^2 <= 7.3`, `5 x1^2 + 13 x2^2 >= 2`, plus the unit ball.
pub fn ellipse_ring() -> SemiAlgebraicSet {
    let g = vec![
        poly(2, &[(&[0, 0], 7.3), (&[2, 0], -9.0), (&[0, 2], -13.0)]),
        poly(2, &[(&[2, 0], 5.0), (&[0, 2], 13.0), (&[0, 0], -2.0)]),
    ];
    let set = SemiAlgebraicSet::new(2, g).expect("preset");
    validate_archimedean(&set, Some(1.0)).expect("preset")
}

/// `(x1 + 0.2)^2 + x2^2 <= 0.36`, `(x1 - 0.6)^2 + x2^2 >= 0.16`, plus the
/// ball of radius 0.8.
pub fn moon() -> SemiAlgebraicSet {
    let g = vec![
        // 0.36 - (x1 + 0.2)^2 - x2^2
        poly(2, &[(&[0, 0], 0.32), (&[1, 0], -0.4), (&[2, 0], -1.0), (&[0, 2], -1.0)]),
        // (x1 - 0.6)^2 + x2^2 - 0.16
        poly(2, &[(&[0, 0], 0.2), (&[1, 0], -1.2), (&[2, 0], 1.0), (&[0, 2], 1.0)]),
    ];
    let set = SemiAlgebraicSet::new(2, g).expect("preset");
    validate_archimedean(&set, Some(0.8)).expect("preset")
}

/// `-x1 (x1^2 - 2 x2^2) - (x1^2 + x2^2)^2 >= 0` inside the unit disk.
pub fn folium() -> SemiAlgebraicSet {
    let g = vec![
        poly(
            2,
            &[
                (&[3, 0], -1.0),
                (&[1, 2], 2.0),
                (&[4, 0], -1.0),
                (&[2, 2], -2.0),
                (&[0, 4], -1.0),
            ],
        ),
        Polynomial::ball(2, 1.0),
    ];
    SemiAlgebraicSet::new(2, g).expect("preset")
}

/// Unit sphere in `R^3` as the pair `1 - |x|^2 >= 0`, `|x|^2 - 1 >= 0`.
pub fn sphere3d() -> SemiAlgebraicSet {
    let g = Polynomial::ball(3, 1.0);
    SemiAlgebraicSet::new(3, vec![g.clone(), g.scale(-1.0)]).expect("preset")
}

pub fn preset(name: &str) -> Result<SemiAlgebraicSet> {
    match name {
        "interval" => Ok(interval()),
        "wynn_polygon" => Ok(wynn_polygon()),
        "ellipse_ring" => Ok(ellipse_ring()),
        "moon" => Ok(moon()),
        "folium" => Ok(folium()),
        "sphere3d" => Ok(sphere3d()),
        other => Err(Error::InvalidInput(format!(
            "unknown design space preset '{other}' (expected one of {})",
            PRESET_NAMES.join(", ")
        ))),
    }
}
