//! Strata, stratifications and their sampled validation.
//!
//! A stratum is either implicit (equations = 0, strict inequalities > 0)
//! or parametric (a map from an open box). Tangent spaces come from the
//! Jacobian null space (implicit) or the image of the differential
//! (parametric). Validation checks, at a sample budget:
//!   - declared dimension matches the Jacobian rank at every sample,
//!   - distinct strata do not overlap,
//!   - sampled boundary-limit points of each stratum land within a
//!     coverage tolerance of some stratum declared below it,
//!   - the frontier relation strictly decreases dimension.
//! A pass means "no counterexample found at this budget", nothing more.

use crate::expr::{expr_to_polynomial, CompiledPoly, Expr};
use crate::numeric::{bisect, least_squares_refine, newton_least_norm, NewtonOpts};
use crate::subspace::{nullspace_of, rank_of, Subspace};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// One scalar constraint with a precomputed gradient; polynomial
/// constraints additionally carry compiled f64 forms for hot loops.
#[derive(Clone, Debug)]
pub struct Constraint {
    expr: Expr,
    grad: Vec<Expr>,
    poly: Option<PolyForm>,
}

#[derive(Clone, Debug)]
struct PolyForm {
    value: CompiledPoly,
    grad: Vec<CompiledPoly>,
}

impl Constraint {
    pub fn new(expr: Expr, ambient: usize) -> Constraint {
        let grad = expr.gradient(ambient);
        let poly = expr_to_polynomial(&expr, ambient).ok().map(|p| PolyForm {
            value: p.compile(),
            grad: p.gradient().iter().map(|g| g.compile()).collect(),
        });
        Constraint { expr, grad, poly }
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn eval(&self, x: &[f64]) -> Option<f64> {
        let v = match &self.poly {
            Some(pf) => pf.value.eval(x),
            None => self.expr.eval(x).ok()?,
        };
        v.is_finite().then_some(v)
    }

    pub fn grad_eval(&self, x: &[f64]) -> Option<Vec<f64>> {
        match &self.poly {
            Some(pf) => {
                let g: Vec<f64> = pf.grad.iter().map(|c| c.eval(x)).collect();
                g.iter().all(|v| v.is_finite()).then_some(g)
            }
            None => {
                let mut g = Vec::with_capacity(self.grad.len());
                for d in &self.grad {
                    let v = d.eval(x).ok()?;
                    if !v.is_finite() {
                        return None;
                    }
                    g.push(v);
                }
                Some(g)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum Geometry {
    Implicit { equations: Vec<Constraint>, inequalities: Vec<Constraint> },
    Parametric { maps: Vec<Expr>, jac: Vec<Vec<Expr>>, domain: Vec<(f64, f64)> },
}

#[derive(Clone, Debug)]
pub struct Stratum {
    pub name: String,
    pub ambient: usize,
    pub dim: usize,
    /// Declared, not verified: sampling cannot distinguish components.
    pub connected: bool,
    pub geometry: Geometry,
}

/// A point known to lie on a stratum; parametric strata also remember the
/// parameter that produced it.
#[derive(Clone, Debug)]
pub struct StratumPoint {
    pub x: DVector<f64>,
    pub param: Option<DVector<f64>>,
}

impl Stratum {
    pub fn implicit(
        name: impl Into<String>,
        ambient: usize,
        dim: usize,
        equations: Vec<Expr>,
        inequalities: Vec<Expr>,
    ) -> Stratum {
        Stratum {
            name: name.into(),
            ambient,
            dim,
            connected: true,
            geometry: Geometry::Implicit {
                equations: equations.into_iter().map(|e| Constraint::new(e, ambient)).collect(),
                inequalities: inequalities.into_iter().map(|e| Constraint::new(e, ambient)).collect(),
            },
        }
    }

    /// Single-point stratum via the linear system x_i = c_i.
    pub fn point(name: impl Into<String>, coords: &[f64]) -> Stratum {
        let equations = coords
            .iter()
            .enumerate()
            .map(|(i, &c)| Expr::sub(Expr::var(i), Expr::float(c)))
            .collect();
        Stratum::implicit(name, coords.len(), 0, equations, Vec::new())
    }

    pub fn parametric(
        name: impl Into<String>,
        ambient: usize,
        maps: Vec<Expr>,
        domain: Vec<(f64, f64)>,
    ) -> Stratum {
        assert_eq!(maps.len(), ambient);
        let k = domain.len();
        let jac = maps.iter().map(|m| m.gradient(k)).collect();
        Stratum {
            name: name.into(),
            ambient,
            dim: k,
            connected: true,
            geometry: Geometry::Parametric { maps, jac, domain },
        }
    }

    pub fn codim(&self) -> usize {
        self.ambient - self.dim
    }

    pub fn is_parametric(&self) -> bool {
        matches!(self.geometry, Geometry::Parametric { .. })
    }

    pub fn equations(&self) -> &[Constraint] {
        match &self.geometry {
            Geometry::Implicit { equations, .. } => equations,
            Geometry::Parametric { .. } => &[],
        }
    }

    pub fn inequalities(&self) -> &[Constraint] {
        match &self.geometry {
            Geometry::Implicit { inequalities, .. } => inequalities,
            Geometry::Parametric { .. } => &[],
        }
    }

    /// Residual vector of the defining equations (implicit strata only).
    pub fn eval_equations(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let eqs = self.equations();
        let mut out = DVector::zeros(eqs.len());
        for (i, eq) in eqs.iter().enumerate() {
            out[i] = eq.eval(x.as_slice())?;
        }
        Some(out)
    }

    pub fn eval_eq_jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let eqs = self.equations();
        let mut out = DMatrix::zeros(eqs.len(), self.ambient);
        for (i, eq) in eqs.iter().enumerate() {
            let g = eq.grad_eval(x.as_slice())?;
            for (j, v) in g.iter().enumerate() {
                out[(i, j)] = *v;
            }
        }
        Some(out)
    }

    /// All inequalities strictly positive at `x`; domain failures count as
    /// outside.
    pub fn satisfies_inequalities(&self, x: &DVector<f64>) -> bool {
        self.inequalities().iter().all(|h| h.eval(x.as_slice()).map(|v| v > 0.0).unwrap_or(false))
    }

    pub fn map_point(&self, u: &DVector<f64>) -> Option<DVector<f64>> {
        match &self.geometry {
            Geometry::Parametric { maps, .. } => {
                let mut out = DVector::zeros(self.ambient);
                for (i, m) in maps.iter().enumerate() {
                    let v = m.eval(u.as_slice()).ok()?;
                    if !v.is_finite() {
                        return None;
                    }
                    out[i] = v;
                }
                Some(out)
            }
            Geometry::Implicit { .. } => panic!("map_point on implicit stratum {}", self.name),
        }
    }

    /// Differential of the parametrization: ambient x dim.
    pub fn map_jacobian(&self, u: &DVector<f64>) -> Option<DMatrix<f64>> {
        match &self.geometry {
            Geometry::Parametric { jac, domain, .. } => {
                let mut out = DMatrix::zeros(self.ambient, domain.len());
                for (i, row) in jac.iter().enumerate() {
                    for (j, d) in row.iter().enumerate() {
                        let v = d.eval(u.as_slice()).ok()?;
                        if !v.is_finite() {
                            return None;
                        }
                        out[(i, j)] = v;
                    }
                }
                Some(out)
            }
            Geometry::Implicit { .. } => panic!("map_jacobian on implicit stratum {}", self.name),
        }
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        match &self.geometry {
            Geometry::Parametric { domain, .. } => domain,
            Geometry::Implicit { .. } => &[],
        }
    }

    /// Tangent space at a stratum point.
    pub fn tangent_at(&self, p: &StratumPoint, rank_tol: f64) -> Option<Subspace> {
        match &self.geometry {
            Geometry::Implicit { .. } => {
                let j = self.eval_eq_jacobian(&p.x)?;
                Some(nullspace_of(&j, rank_tol))
            }
            Geometry::Parametric { .. } => {
                let u = p.param.as_ref().expect("parametric point carries its parameter");
                let dj = self.map_jacobian(u)?;
                let cols: Vec<DVector<f64>> = dj.column_iter().map(|c| c.into_owned()).collect();
                Some(Subspace::from_spanning(self.ambient, &cols))
            }
        }
    }

    /// Numerical rank of the defining system at a point.
    pub fn rank_at(&self, p: &StratumPoint, rank_tol: f64) -> Option<usize> {
        match &self.geometry {
            Geometry::Implicit { .. } => Some(rank_of(&self.eval_eq_jacobian(&p.x)?, rank_tol)),
            Geometry::Parametric { .. } => {
                let u = p.param.as_ref().expect("parametric point carries its parameter");
                Some(rank_of(&self.map_jacobian(u)?, rank_tol))
            }
        }
    }

    /// Nearest stratum point reachable from `x` by Newton polish (implicit)
    /// or parameter search (parametric). Inequalities must hold strictly at
    /// the result.
    pub fn project(&self, x: &DVector<f64>) -> Option<StratumPoint> {
        match &self.geometry {
            Geometry::Implicit { .. } => {
                let opts = NewtonOpts::default();
                let sol = newton_least_norm(
                    |p| self.eval_equations(p),
                    |p| self.eval_eq_jacobian(p),
                    x,
                    &opts,
                )?;
                self.satisfies_inequalities(&sol).then(|| StratumPoint { x: sol, param: None })
            }
            Geometry::Parametric { domain, .. } => {
                let u0 = self.scan_nearest_param(x)?;
                let opts = NewtonOpts::default();
                let u = least_squares_refine(
                    |u| self.map_point(u).map(|p| p - x),
                    |u| self.map_jacobian(u),
                    &u0,
                    &opts,
                );
                let inside = u.iter().zip(domain).all(|(v, (lo, hi))| v > lo && v < hi);
                if !inside {
                    return None;
                }
                let p = self.map_point(&u)?;
                Some(StratumPoint { x: p, param: Some(u) })
            }
        }
    }

    /// Coarse grid scan of the parameter domain for the point nearest `x`.
    fn scan_nearest_param(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let domain = self.domain();
        let k = domain.len();
        let per_dim = match k {
            0 => return None,
            1 => 129,
            2 => 33,
            _ => 9,
        };
        let mut best: Option<(f64, DVector<f64>)> = None;
        let mut idx = vec![0usize; k];
        loop {
            let u = DVector::from_fn(k, |j, _| {
                let (lo, hi) = domain[j];
                // keep off the closed faces: the domain is open
                lo + (hi - lo) * (idx[j] as f64 + 0.5) / per_dim as f64
            });
            if let Some(p) = self.map_point(&u) {
                let d = (p - x).norm();
                if best.as_ref().map(|(b, _)| d < *b).unwrap_or(true) {
                    best = Some((d, u));
                }
            }
            // odometer increment over the grid
            let mut j = 0;
            loop {
                if j == k {
                    return best.map(|(_, u)| u);
                }
                idx[j] += 1;
                if idx[j] < per_dim {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
        }
    }

    /// Distance from `x` to the stratum via [`Stratum::project`].
    pub fn distance_to(&self, x: &DVector<f64>) -> Option<f64> {
        self.project(x).map(|p| (p.x - x).norm())
    }

    /// Membership test: some stratum point lies within `tol` of `x`.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        match self.distance_to(x) {
            Some(d) => d <= tol && (!matches!(self.geometry, Geometry::Implicit { .. }) || self.satisfies_inequalities(x)),
            None => false,
        }
    }

    /// Sample points of the stratum inside `sample_box`, deterministically
    /// for a given generator state.
    pub fn sample(&self, rng: &mut ChaCha8Rng, sample_box: &[(f64, f64)], count: usize) -> Vec<StratumPoint> {
        let mut out = Vec::new();
        match &self.geometry {
            Geometry::Implicit { .. } => {
                for _ in 0..count * 40 {
                    if out.len() >= count {
                        break;
                    }
                    let x0 = DVector::from_fn(self.ambient, |i, _| {
                        let (lo, hi) = sample_box[i];
                        rng.gen_range(lo..hi)
                    });
                    if let Some(mut p) = self.project(&x0) {
                        // solver dust on a coordinate that is exactly zero on
                        // a neighboring stratum would sneak past strict sign
                        // inequalities; a residual of 1e-12 on x*y still
                        // allows |x| up to 2e-11 when y is small, so snap at
                        // the membership tolerance and re-filter so samples
                        // never impersonate another stratum
                        for v in p.x.iter_mut() {
                            if v.abs() <= 1e-9 {
                                *v = 0.0;
                            }
                        }
                        if self.satisfies_inequalities(&p.x) && in_box(&p.x, sample_box, 1e-9) {
                            out.push(p);
                        }
                    }
                }
            }
            Geometry::Parametric { domain, .. } => {
                for _ in 0..count * 40 {
                    if out.len() >= count {
                        break;
                    }
                    let u = DVector::from_fn(domain.len(), |j, _| {
                        let (lo, hi) = domain[j];
                        rng.gen_range(lo..hi)
                    });
                    if let Some(x) = self.map_point(&u) {
                        if in_box(&x, sample_box, 1e-9) {
                            out.push(StratumPoint { x, param: Some(u) });
                        }
                    }
                }
            }
        }
        out
    }

    /// Candidate boundary-limit points: places where the stratum closure
    /// leaves the stratum. For implicit strata these solve
    /// {equations = 0, h = 0} for each inequality h; each candidate is kept
    /// only if stratum points exist arbitrarily close to it (verified at a
    /// probe radius). Parametric strata contribute images of domain faces.
    pub fn boundary_samples(
        &self,
        rng: &mut ChaCha8Rng,
        sample_box: &[(f64, f64)],
        attempts: usize,
    ) -> Vec<DVector<f64>> {
        let mut out = Vec::new();
        match &self.geometry {
            Geometry::Implicit { equations, inequalities } => {
                let opts = NewtonOpts::default();
                for (hi_idx, h) in inequalities.iter().enumerate() {
                    for _ in 0..attempts {
                        let x0 = DVector::from_fn(self.ambient, |i, _| {
                            let (lo, hi) = sample_box[i];
                            rng.gen_range(lo..hi)
                        });
                        let f = |p: &DVector<f64>| {
                            let mut v = Vec::with_capacity(equations.len() + 1);
                            for eq in equations {
                                v.push(eq.eval(p.as_slice())?);
                            }
                            v.push(h.eval(p.as_slice())?);
                            Some(DVector::from_vec(v))
                        };
                        let j = |p: &DVector<f64>| {
                            let mut m = DMatrix::zeros(equations.len() + 1, self.ambient);
                            for (r, eq) in equations.iter().enumerate() {
                                let g = eq.grad_eval(p.as_slice())?;
                                for (c, v) in g.iter().enumerate() {
                                    m[(r, c)] = *v;
                                }
                            }
                            let g = h.grad_eval(p.as_slice())?;
                            for (c, v) in g.iter().enumerate() {
                                m[(equations.len(), c)] = *v;
                            }
                            Some(m)
                        };
                        let Some(b) = newton_least_norm(f, j, &x0, &opts) else { continue };
                        if !in_box(&b, sample_box, 1e-9) {
                            continue;
                        }
                        // other inequalities may vanish too (corners) but
                        // must not be violated outright
                        let others_ok = inequalities
                            .iter()
                            .enumerate()
                            .filter(|(k, _)| *k != hi_idx)
                            .all(|(_, g)| g.eval(b.as_slice()).map(|v| v >= -1e-9).unwrap_or(false));
                        if !others_ok {
                            continue;
                        }
                        if self.approaches(&b, rng) {
                            out.push(b);
                        }
                    }
                }
            }
            Geometry::Parametric { domain, .. } => {
                for face_dim in 0..domain.len() {
                    for side in 0..2 {
                        for _ in 0..attempts / 2 + 1 {
                            let u = DVector::from_fn(domain.len(), |j, _| {
                                let (lo, hi) = domain[j];
                                if j == face_dim {
                                    if side == 0 {
                                        lo
                                    } else {
                                        hi
                                    }
                                } else {
                                    rng.gen_range(lo..hi)
                                }
                            });
                            if let Some(x) = self.map_point(&u) {
                                if in_box(&x, sample_box, 1e-9) {
                                    out.push(x);
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// True when stratum points exist at every rung of a shrinking ladder of
    /// probe radii around `b`, i.e. `b` really is a limit of the stratum.
    /// Each witness must sit at its rung's own scale and clear the strict
    /// inequalities by a margin quadratic in the rung. A single fixed probe
    /// cannot tell closure from solver dust: a probe projected toward a
    /// stratum that is not actually there lands on some lower-dimensional
    /// set, where an inequality stalls near sqrt(solver tol) no matter the
    /// radius, while genuine interior values grow with the rung (at most
    /// quadratically for sign cuts and ball exclusions, the forms used
    /// here). Inequalities vanishing to higher order at `b` would need a
    /// steeper margin schedule.
    pub(crate) fn approaches(&self, b: &DVector<f64>, rng: &mut ChaCha8Rng) -> bool {
        let opts = NewtonOpts { max_iters: 60, tol: 1e-14, rank_tol: 1e-9 };
        'rung: for k in 0..5 {
            let r = 0.05 * 0.4f64.powi(k);
            for _ in 0..10 {
                let dir = DVector::from_fn(self.ambient, |_, _| rng.gen_range(-1.0..1.0));
                if dir.norm() < 1e-3 {
                    continue;
                }
                let start = b + dir.normalize() * r;
                let q = if self.is_parametric() {
                    match self.project(&start) {
                        Some(p) => p.x,
                        None => continue,
                    }
                } else {
                    match newton_least_norm(
                        |x| self.eval_equations(x),
                        |x| self.eval_eq_jacobian(x),
                        &start,
                        &opts,
                    ) {
                        Some(q) => q,
                        None => continue,
                    }
                };
                let d = (&q - b).norm();
                let interior = self
                    .inequalities()
                    .iter()
                    .all(|h| h.eval(q.as_slice()).map(|v| v > 0.05 * r * r).unwrap_or(false));
                if d >= 0.25 * r && d <= 3.0 * r && interior {
                    continue 'rung;
                }
            }
            return false;
        }
        true
    }
}

fn in_box(x: &DVector<f64>, sample_box: &[(f64, f64)], slack: f64) -> bool {
    x.iter().zip(sample_box).all(|(v, (lo, hi))| *v >= lo - slack && *v <= hi + slack)
}

#[derive(Clone, Debug)]
pub struct Stratification {
    pub ambient: usize,
    pub strata: Vec<Stratum>,
    /// Pairs (lower, upper) by index: lower lies in the closure of upper.
    pub frontier: Vec<(usize, usize)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IssueKind {
    /// Jacobian rank at a sample contradicts the declared dimension.
    RankMismatch,
    /// A sample of one stratum lies on another.
    Overlap,
    /// A boundary-limit sample is not near any declared lower stratum.
    FrontierGap,
    /// A frontier pair fails to decrease dimension strictly.
    DimensionOrder,
}

#[derive(Clone, Debug)]
pub struct ValidationIssue {
    pub kind: IssueKind,
    pub detail: String,
    pub witness: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
    pub samples_per_stratum: usize,
    pub boundary_samples_checked: usize,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ValidateParams {
    pub samples_per_stratum: usize,
    pub seed: u64,
    pub membership_tol: f64,
    pub coverage_tol: f64,
    pub rank_tol: f64,
}

impl Default for ValidateParams {
    fn default() -> ValidateParams {
        ValidateParams {
            samples_per_stratum: 64,
            seed: 0,
            membership_tol: 1e-9,
            coverage_tol: 1e-6,
            rank_tol: 1e-9,
        }
    }
}

impl Stratification {
    pub fn stratum_index(&self, name: &str) -> Option<usize> {
        self.strata.iter().position(|s| s.name == name)
    }

    /// Indices of strata declared below the given one.
    pub fn lowers_of(&self, upper: usize) -> Vec<usize> {
        self.frontier.iter().filter(|(_, u)| *u == upper).map(|(l, _)| *l).collect()
    }

    pub fn validate(&self, sample_box: &[(f64, f64)], params: &ValidateParams) -> ValidationReport {
        let mut issues = Vec::new();
        let mut boundary_checked = 0;

        for (l, u) in &self.frontier {
            if self.strata[*l].dim >= self.strata[*u].dim {
                issues.push(ValidationIssue {
                    kind: IssueKind::DimensionOrder,
                    detail: format!(
                        "frontier pair ({}, {}) does not decrease dimension",
                        self.strata[*l].name, self.strata[*u].name
                    ),
                    witness: None,
                });
            }
        }

        // per-stratum samples: rank regularity and pairwise disjointness
        for (idx, s) in self.strata.iter().enumerate() {
            let mut rng = stratum_rng(params.seed, idx, 0);
            let samples = s.sample(&mut rng, sample_box, params.samples_per_stratum);
            for p in &samples {
                let expected = match &s.geometry {
                    Geometry::Implicit { .. } => s.codim(),
                    Geometry::Parametric { .. } => s.dim,
                };
                match s.rank_at(p, params.rank_tol) {
                    Some(r) if r == expected => {}
                    Some(r) => issues.push(ValidationIssue {
                        kind: IssueKind::RankMismatch,
                        detail: format!(
                            "stratum {} declares dim {} but the defining system has rank {} at a sample",
                            s.name, s.dim, r
                        ),
                        witness: Some(p.x.iter().copied().collect()),
                    }),
                    None => {}
                }
                for (jdx, other) in self.strata.iter().enumerate() {
                    if jdx == idx {
                        continue;
                    }
                    if other.contains(&p.x, params.membership_tol) {
                        issues.push(ValidationIssue {
                            kind: IssueKind::Overlap,
                            detail: format!("sample of {} also lies on {}", s.name, other.name),
                            witness: Some(p.x.iter().copied().collect()),
                        });
                    }
                }
            }
        }

        // frontier coverage: boundary-limit samples of each stratum must be
        // near some declared lower stratum
        for (idx, s) in self.strata.iter().enumerate() {
            let mut rng = stratum_rng(params.seed, idx, 1);
            let boundary = s.boundary_samples(&mut rng, sample_box, params.samples_per_stratum);
            let lowers = self.lowers_of(idx);
            for b in boundary {
                boundary_checked += 1;
                let covered = lowers.iter().any(|l| {
                    self.strata[*l]
                        .distance_to(&b)
                        .map(|d| d <= params.coverage_tol)
                        .unwrap_or(false)
                });
                if !covered {
                    issues.push(ValidationIssue {
                        kind: IssueKind::FrontierGap,
                        detail: format!(
                            "boundary-limit point of {} is not covered by its declared lower strata",
                            s.name
                        ),
                        witness: Some(b.iter().copied().collect()),
                    });
                }
            }
        }

        ValidationReport {
            issues,
            samples_per_stratum: params.samples_per_stratum,
            boundary_samples_checked: boundary_checked,
        }
    }
}

/// Deterministic per-stratum stream: mixes the seed with the stratum index
/// and a phase tag so adding strata does not shift other streams.
fn stratum_rng(seed: u64, idx: usize, phase: u64) -> ChaCha8Rng {
    let mix = seed
        .wrapping_mul(0x9E3779B97F4A7C15)
        .wrapping_add((idx as u64).wrapping_mul(0xD1B54A32D192ED03))
        .wrapping_add(phase.wrapping_mul(0x94D049BB133111EB));
    ChaCha8Rng::seed_from_u64(mix)
}

/// Find a stratum point at the given distance from `base`, used by wing
/// construction and closure probes: solves {equations = 0, |x - base|^2 = t^2}
/// from `start` (implicit strata only).
pub fn solve_at_distance(
    stratum: &Stratum,
    base: &DVector<f64>,
    t: f64,
    start: &DVector<f64>,
    opts: &NewtonOpts,
) -> Option<StratumPoint> {
    let eqs = stratum.equations();
    let f = |p: &DVector<f64>| {
        let mut v = Vec::with_capacity(eqs.len() + 1);
        for eq in eqs {
            v.push(eq.eval(p.as_slice())?);
        }
        let d = p - base;
        v.push(d.norm_squared() - t * t);
        Some(DVector::from_vec(v))
    };
    let j = |p: &DVector<f64>| {
        let mut m = DMatrix::zeros(eqs.len() + 1, stratum.ambient);
        for (r, eq) in eqs.iter().enumerate() {
            let g = eq.grad_eval(p.as_slice())?;
            for (c, v) in g.iter().enumerate() {
                m[(r, c)] = *v;
            }
        }
        let d = p - base;
        for c in 0..stratum.ambient {
            m[(eqs.len(), c)] = 2.0 * d[c];
        }
        Some(m)
    };
    let x = newton_least_norm(f, j, start, opts)?;
    stratum.satisfies_inequalities(&x).then(|| StratumPoint { x, param: None })
}

/// Sign-change brackets of u -> |map(u) - base| - t along a shifted grid
/// over a one-parameter domain.
fn distance_brackets(
    stratum: &Stratum,
    base: &DVector<f64>,
    t: f64,
    offset: f64,
) -> Vec<(f64, f64)> {
    let domain = stratum.domain();
    if domain.len() != 1 {
        return Vec::new();
    }
    let (lo, hi) = domain[0];
    let dist = |u: f64| -> Option<f64> {
        let p = stratum.map_point(&DVector::from_vec(vec![u]))?;
        Some((p - base).norm() - t)
    };
    let n = 600;
    let mut prev: Option<(f64, f64)> = None;
    let mut brackets = Vec::new();
    for i in 0..=n {
        let u = lo + (hi - lo) * ((i as f64 + offset * 0.999) / (n as f64 + 1.0));
        if let Some(d) = dist(u) {
            if let Some((pu, pd)) = prev {
                if pd.signum() != d.signum() {
                    brackets.push((pu, u));
                }
            }
            prev = Some((u, d));
        } else {
            prev = None;
        }
    }
    brackets
}

fn refine_bracket(
    stratum: &Stratum,
    base: &DVector<f64>,
    t: f64,
    bracket: (f64, f64),
) -> Option<StratumPoint> {
    let dist = |u: f64| -> Option<f64> {
        let p = stratum.map_point(&DVector::from_vec(vec![u]))?;
        Some((p - base).norm() - t)
    };
    let u = bisect(dist, bracket.0, bracket.1, 1e-14)?;
    let uv = DVector::from_vec(vec![u]);
    let x = stratum.map_point(&uv)?;
    Some(StratumPoint { x, param: Some(uv) })
}

/// Parametric analogue of [`solve_at_distance`]: finds a parameter whose
/// image sits at distance `t` from `base`, bracketing the distance function
/// along a grid and bisecting. The grid offset is randomized so different
/// wings can find different crossings.
pub fn solve_at_distance_parametric(
    stratum: &Stratum,
    base: &DVector<f64>,
    t: f64,
    rng: &mut ChaCha8Rng,
) -> Option<StratumPoint> {
    let offset: f64 = rng.gen_range(0.0..1.0);
    let brackets = distance_brackets(stratum, base, t, offset);
    if brackets.is_empty() {
        return None;
    }
    let pick = brackets[rng.gen_range(0..brackets.len())];
    refine_bracket(stratum, base, t, pick)
}

/// Branch-following variant: among all crossings at distance `t`, take the
/// one whose parameter is closest to `near`, so consecutive wing points stay
/// on one branch.
pub fn solve_at_distance_parametric_near(
    stratum: &Stratum,
    base: &DVector<f64>,
    t: f64,
    near: f64,
) -> Option<StratumPoint> {
    // fixed fractional offset keeps the scan away from grid-aligned zeros
    let brackets = distance_brackets(stratum, base, t, 0.437);
    let pick = brackets
        .into_iter()
        .min_by(|a, b| {
            let da = (0.5 * (a.0 + a.1) - near).abs();
            let db = (0.5 * (b.0 + b.1) - near).abs();
            da.partial_cmp(&db).unwrap()
        })?;
    refine_bracket(stratum, base, t, pick)
}
