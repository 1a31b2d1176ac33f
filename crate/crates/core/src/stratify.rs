//! Decomposition of polynomial varieties into candidate strata, plus the
//! condition-driven refinement loop that splits strata at detected bad
//! points until every frontier pair passes, by decreasing dimension.
//!
//! Scope is deliberately desk-scale: one square-free polynomial in at most
//! three variables, with a singular locus that is either a sampled-finite
//! point set or a full coordinate axis. That covers the classical test
//! varieties (coordinate cross, cuspidal curve, pinched surface) without
//! building a general cell decomposition; anything outside this boundary is
//! reported as an explicit unsupported-input error, never guessed at.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conditions::{
    base_grid, scan_bad_locus, CheckParams, ConditionId, ConditionReport, Verdict,
};
use crate::expr::{gcd, parse, square_free, CompiledPoly, Expr, Polynomial, VarTable};
use crate::numeric::{newton_least_norm, NewtonOpts};
use crate::scene::{BasePointSpec, FrontierPair, Scene, SceneError, SceneStratum};
use crate::strata::StratumPoint;

#[derive(Debug, thiserror::Error)]
pub enum StratifyError {
    #[error("the polynomial is constant; there is nothing to stratify")]
    ConstantPolynomial,
    #[error("the polynomial is not square-free; factor out repeated components first")]
    NotSquareFree,
    #[error("ambient dimension {0} is outside the supported range 1..=3")]
    AmbientDim(usize),
    #[error("unsupported singular locus: {0}")]
    UnsupportedSingularLocus(String),
    #[error("unsupported critical locus: {0}")]
    UnsupportedCriticalLocus(String),
    #[error("smooth components are not separable by coordinate half-spaces: {0}")]
    InseparableComponents(String),
    #[error("a function-dependent condition was requested but the scene declares no function")]
    MissingFunction,
    #[error(transparent)]
    Scene(#[from] SceneError),
}

// ---------------------------------------------------------------------------
// expression-string helpers
//
// Generated strata are written back as scene expressions, so every number
// must round-trip through the parser. `{:?}` on f64 prints the shortest
// digits that re-read to the same value.

fn coord(i: usize) -> String {
    format!("x{}", i + 1)
}

fn fmt_f64(v: f64) -> String {
    format!("{:?}", v)
}

/// "(xi - c)", sign-aware; plain coordinate when c is zero.
fn shifted_coord(i: usize, c: f64) -> String {
    if c == 0.0 {
        coord(i)
    } else if c < 0.0 {
        format!("({} + {})", coord(i), fmt_f64(-c))
    } else {
        format!("({} - {})", coord(i), fmt_f64(c))
    }
}

/// "(c - xi)": positive below the cut value.
fn upper_cut(i: usize, c: f64) -> String {
    if c == 0.0 {
        format!("-{}", coord(i))
    } else {
        format!("({} - {})", fmt_f64(c), coord(i))
    }
}

/// Squared distance to a point; strictly positive exactly off that point,
/// so pushing it as an inequality removes one point from a stratum.
fn ball_exclusion(center: &DVector<f64>) -> String {
    let terms: Vec<String> =
        center.iter().enumerate().map(|(i, &c)| format!("{}^2", shifted_coord(i, c))).collect();
    terms.join(" + ")
}

fn point_equations(center: &DVector<f64>) -> Vec<String> {
    center.iter().enumerate().map(|(i, &c)| shifted_coord(i, c)).collect()
}

fn in_box(x: &DVector<f64>, sample_box: &[(f64, f64)], pad: f64) -> bool {
    x.iter().zip(sample_box).all(|(v, (lo, hi))| *v >= lo - pad && *v <= hi + pad)
}

fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    std::cmp::Ordering::Equal
}

fn fnv(parts: &[&[u8]]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for p in parts {
        for &b in *p {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

// ---------------------------------------------------------------------------
// polynomial system solving

/// Newton least-norm from every start; keeps in-box converged solutions,
/// deduplicated and sorted for determinism. Singular systems converge only
/// linearly, hence the generous iteration budget.
fn solve_poly_system(
    system: &[CompiledPoly],
    jac: &[Vec<CompiledPoly>],
    starts: &[DVector<f64>],
    sample_box: &[(f64, f64)],
    dedupe: f64,
) -> Vec<DVector<f64>> {
    let n = sample_box.len();
    let opts = NewtonOpts { max_iters: 90, tol: 1e-11, rank_tol: 1e-9 };
    let f = |x: &DVector<f64>| {
        Some(DVector::from_iterator(system.len(), system.iter().map(|p| p.eval(x.as_slice()))))
    };
    let j = |x: &DVector<f64>| {
        let mut m = DMatrix::zeros(system.len(), n);
        for (i, row) in jac.iter().enumerate() {
            for (jx, p) in row.iter().enumerate() {
                m[(i, jx)] = p.eval(x.as_slice());
            }
        }
        Some(m)
    };
    let mut found: Vec<DVector<f64>> = Vec::new();
    for s in starts {
        let Some(sol) = newton_least_norm(f, j, s, &opts) else { continue };
        if !in_box(&sol, sample_box, 1e-9) {
            continue;
        }
        if found.iter().all(|q| (q - &sol).norm() > dedupe) {
            found.push(sol);
        }
    }
    found.sort_by(lex_cmp);
    found
}

fn grid_starts(sample_box: &[(f64, f64)], per_dim: usize) -> Vec<DVector<f64>> {
    let n = sample_box.len();
    let mut out = Vec::with_capacity(per_dim.pow(n as u32));
    let mut idx = vec![0usize; n];
    loop {
        let p = DVector::from_fn(n, |i, _| {
            let (lo, hi) = sample_box[i];
            lo + (idx[i] as f64 + 0.5) * (hi - lo) / per_dim as f64
        });
        out.push(p);
        let mut carry = 0;
        while carry < n {
            idx[carry] += 1;
            if idx[carry] < per_dim {
                break;
            }
            idx[carry] = 0;
            carry += 1;
        }
        if carry == n {
            return out;
        }
    }
}

fn random_starts(
    sample_box: &[(f64, f64)],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<DVector<f64>> {
    let n = sample_box.len();
    (0..count)
        .map(|_| {
            DVector::from_fn(n, |i, _| {
                let (lo, hi) = sample_box[i];
                rng.gen_range(lo..hi)
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// singular locus

enum Sigma {
    Empty,
    Points(Vec<DVector<f64>>),
    Axis(usize),
}

/// Exact test: does the polynomial vanish identically on a coordinate axis?
/// Substituting zero for every other variable keeps rational arithmetic.
fn vanishes_on_axis(q: &Polynomial, axis: usize) -> bool {
    let zero = BigRational::zero();
    let mut r = q.clone();
    for v in 0..q.n_vars() {
        if v != axis {
            r = r.substitute(v, &zero);
        }
    }
    r.is_zero()
}

/// Coefficient polynomials A, B, C (univariate in the axis variable) of the
/// transverse quadratic part A u^2 + B uv + C v^2 of a surface whose
/// singular locus contains the axis. Terms of transverse degree below two
/// cannot occur then; higher terms do not move the branch-count boundary.
fn slice_quadratic(p: &Polynomial, axis: usize) -> (Polynomial, Polynomial, Polynomial) {
    let n = p.n_vars();
    let trans: Vec<usize> = (0..n).filter(|&j| j != axis).collect();
    let (u, v) = (trans[0], trans[1]);
    let mut a = Polynomial::zero(1);
    let mut b = Polynomial::zero(1);
    let mut c = Polynomial::zero(1);
    for (exps, coef) in p.terms() {
        let (eu, ev, ec) = (exps[u], exps[v], exps[axis]);
        if eu + ev != 2 {
            continue;
        }
        let term = Polynomial::var(1, 0).pow(ec).scale(coef);
        match (eu, ev) {
            (2, 0) => a = a.add(&term),
            (1, 1) => b = b.add(&term),
            (0, 2) => c = c.add(&term),
            _ => unreachable!(),
        }
    }
    (a, b, c)
}

/// Real roots of a univariate polynomial on an interval. The square-free
/// part is isolated first by exact gcd, so every real root is a sign change
/// and plain bisection finds them all, including former double roots.
fn univariate_roots(d: &Polynomial, lo: f64, hi: f64) -> Vec<f64> {
    let sf = {
        let g = gcd(d, &d.partial(0));
        if g.is_constant() {
            d.clone()
        } else {
            d.div_exact(&g).unwrap_or_else(|| d.clone())
        }
    };
    let c = sf.compile();
    let m = 4096usize;
    let mut roots: Vec<f64> = Vec::new();
    let push = |r: f64, roots: &mut Vec<f64>| {
        let r = if r.abs() <= 1e-9 { 0.0 } else { r };
        if roots.iter().all(|q| (q - r).abs() > 1e-9) {
            roots.push(r);
        }
    };
    let mut prev_x = lo;
    let mut prev = c.eval(&[lo]);
    for i in 1..=m {
        let x = lo + (hi - lo) * i as f64 / m as f64;
        let v = c.eval(&[x]);
        if prev == 0.0 {
            push(prev_x, &mut roots);
        } else if v != 0.0 && prev.signum() != v.signum() {
            if let Some(r) = crate::numeric::bisect(|t| Some(c.eval(&[t])), prev_x, x, 1e-13) {
                push(r, &mut roots);
            }
        }
        prev_x = x;
        prev = v;
    }
    if prev == 0.0 {
        push(hi, &mut roots);
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots
}

// ---------------------------------------------------------------------------
// smooth-part sampling and components

struct Dsu(Vec<usize>);

impl Dsu {
    fn new(n: usize) -> Dsu {
        Dsu((0..n).collect())
    }
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        self.0[ra] = rb;
    }
}

/// Parameters of [`initial_decomposition`]. Defaults suit unit-scale boxes;
/// the sampling budget only affects component detection, never the exact
/// singular-locus classification.
#[derive(Clone, Debug)]
pub struct DecomposeParams {
    pub seed: u64,
    /// Target number of smooth-part samples feeding component detection.
    pub smooth_target: usize,
    /// Neighbor-linking radius in the component graph.
    pub link_radius: f64,
    /// Samples closer than this to the singular locus are discarded.
    pub clearance: f64,
}

impl Default for DecomposeParams {
    fn default() -> DecomposeParams {
        DecomposeParams { seed: 0, smooth_target: 320, link_radius: 0.45, clearance: 0.05 }
    }
}

fn sample_smooth(
    p: &CompiledPoly,
    grad: &[CompiledPoly],
    sample_box: &[(f64, f64)],
    clearance_of: &dyn Fn(&DVector<f64>) -> f64,
    params: &DecomposeParams,
) -> Vec<DVector<f64>> {
    let n = sample_box.len();
    let opts = NewtonOpts::default();
    let f = |x: &DVector<f64>| Some(DVector::from_element(1, p.eval(x.as_slice())));
    let j = |x: &DVector<f64>| {
        let mut m = DMatrix::zeros(1, n);
        for (i, g) in grad.iter().enumerate() {
            m[(0, i)] = g.eval(x.as_slice());
        }
        Some(m)
    };
    let per_dim = match n {
        1 => 61,
        2 => 18,
        _ => 8,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(fnv(&[&params.seed.to_le_bytes(), b"smooth"]));
    let mut starts = grid_starts(sample_box, per_dim);
    starts.extend(random_starts(sample_box, params.smooth_target * 2, &mut rng));
    let mut out: Vec<DVector<f64>> = Vec::new();
    for s in &starts {
        if out.len() >= params.smooth_target {
            break;
        }
        let Some(sol) = newton_least_norm(f, j, s, &opts) else { continue };
        if !in_box(&sol, sample_box, 1e-9) || clearance_of(&sol) < params.clearance {
            continue;
        }
        // a vanishing gradient means the walk strayed back into the
        // singular set; such a point is not evidence of a smooth sheet
        let gn: f64 = grad.iter().map(|g| g.eval(sol.as_slice()).powi(2)).sum::<f64>().sqrt();
        if !(gn > 1e-8) {
            continue;
        }
        if out.iter().all(|q| (q - &sol).norm() > 1e-7) {
            out.push(sol);
        }
    }
    out.sort_by(lex_cmp);
    out
}

/// Step from `a` toward `b`, reprojecting onto the variety after every
/// step. The walk succeeds when it gets within two steps of `b` while
/// keeping clearance from the singular locus and making real progress.
/// Any on-variety path between different smooth components has to pass
/// through the singular moat, so the clearance floor is decisive; between
/// points of one component the straight pull plus reprojection tracks the
/// sheet. The step is small against the floor so the walk cannot hop the
/// moat in one projection.
fn walk_connects(
    a: &DVector<f64>,
    b: &DVector<f64>,
    project: &dyn Fn(&DVector<f64>) -> Option<DVector<f64>>,
    clearance_of: &dyn Fn(&DVector<f64>) -> f64,
    floor: f64,
    step: f64,
    sample_box: &[(f64, f64)],
) -> bool {
    let scale = sample_box.iter().map(|(lo, hi)| hi - lo).fold(0.0f64, f64::max);
    let mut c = a.clone();
    let mut dist = (b - &c).norm();
    let budget = (dist / step).ceil() as usize * 4 + 8;
    for _ in 0..budget {
        if dist <= 2.0 * step {
            return true;
        }
        let target = &c + (b - &c) * (step / dist);
        let Some(q) = project(&target) else { return false };
        let nd = (b - &q).norm();
        if clearance_of(&q) < floor
            || !in_box(&q, sample_box, 0.02 * scale)
            || nd > dist - 0.3 * step
        {
            return false;
        }
        c = q;
        dist = nd;
    }
    false
}

/// Samples belong to one component when an on-variety walk connects them.
/// Candidate pairs go in ascending distance so cheap short links union
/// whole sheets before longer pairs are even looked at; a failed walk
/// verdict is cached per component pair since every straddling pair would
/// just fail the same way. Chord-style midpoint shortcuts are deliberately
/// not used: an asymmetric pair straddling a crossing keeps its chord near
/// one of the sheets for most of its length and slips under any workable
/// deviation threshold.
fn link_components(
    samples: &[DVector<f64>],
    p: &CompiledPoly,
    grad: &[CompiledPoly],
    sample_box: &[(f64, f64)],
    clearance_of: &dyn Fn(&DVector<f64>) -> f64,
    params: &DecomposeParams,
) -> Vec<Vec<usize>> {
    let n = sample_box.len();
    let opts = NewtonOpts::default();
    let f = |x: &DVector<f64>| Some(DVector::from_element(1, p.eval(x.as_slice())));
    let j = |x: &DVector<f64>| {
        let mut m = DMatrix::zeros(1, n);
        for (i, g) in grad.iter().enumerate() {
            m[(0, i)] = g.eval(x.as_slice());
        }
        Some(m)
    };
    let project = |x: &DVector<f64>| newton_least_norm(&f, &j, x, &opts);
    let floor = 0.5 * params.clearance;
    let step = 0.25 * floor;
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..samples.len() {
        for k in i + 1..samples.len() {
            let d = (&samples[i] - &samples[k]).norm();
            if d <= params.link_radius {
                pairs.push((i, k, d));
            }
        }
    }
    pairs.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap());
    let mut dsu = Dsu::new(samples.len());
    let mut failed: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (i, k, _) in pairs {
        let (ra, rb) = (dsu.find(i), dsu.find(k));
        if ra == rb || failed.contains(&(ra.min(rb), ra.max(rb))) {
            continue;
        }
        if walk_connects(&samples[i], &samples[k], &project, clearance_of, floor, step, sample_box)
        {
            dsu.union(i, k);
        } else {
            failed.insert((ra.min(rb), ra.max(rb)));
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..samples.len() {
        groups.entry(dsu.find(i)).or_default().push(i);
    }
    let keep_min = if n == 1 { 1 } else { 4 };
    let mut comps: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() >= keep_min).collect();
    comps.sort_by_key(|g| g[0]);
    comps
}

/// One separating inequality (satisfied by all of `a`, violated by all of
/// `b`) built from coordinate half-spaces. Sign cuts through zero win over
/// midpoint cuts on any coordinate: they are exact statements about the
/// variety (the coordinate hyperplane meets a one-sided component only in
/// its frontier, so no interior is lost) and they stay canonical when
/// several components share them. Off-zero midpoint cuts demand a real
/// margin on both sides of the sampled gap.
fn separating_cut(
    a: &[&DVector<f64>],
    b: &[&DVector<f64>],
    n: usize,
    margin: f64,
) -> Option<String> {
    for i in 0..n {
        let (a_min, a_max) = coord_range(a, i);
        let (b_min, b_max) = coord_range(b, i);
        if a_min > 1e-9 && b_max <= 1e-9 {
            return Some(coord(i));
        }
        if a_max < -1e-9 && b_min >= -1e-9 {
            return Some(format!("-{}", coord(i)));
        }
    }
    for i in 0..n {
        let (a_min, a_max) = coord_range(a, i);
        let (b_min, b_max) = coord_range(b, i);
        if a_min - b_max > 2.0 * margin {
            return Some(shifted_coord(i, (a_min + b_max) / 2.0));
        }
        if b_min - a_max > 2.0 * margin {
            return Some(upper_cut(i, (a_max + b_min) / 2.0));
        }
    }
    None
}

fn coord_range(pts: &[&DVector<f64>], i: usize) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in pts {
        lo = lo.min(p[i]);
        hi = hi.max(p[i]);
    }
    (lo, hi)
}

// ---------------------------------------------------------------------------
// initial decomposition

/// Decompose the real zero set of a square-free polynomial in 1..=3
/// variables into candidate strata: smooth components carved apart by
/// coordinate half-spaces, and the singular locus as either isolated points
/// or one coordinate axis broken where the transverse branch structure
/// changes. Frontier relations are discovered by sampled closure probes.
pub fn initial_decomposition(
    p: &Polynomial,
    sample_box: &[(f64, f64)],
    params: &DecomposeParams,
) -> Result<Scene, StratifyError> {
    let n = p.n_vars();
    if n == 0 || n > 3 || sample_box.len() != n {
        return Err(StratifyError::AmbientDim(n));
    }
    if p.is_constant() {
        return Err(StratifyError::ConstantPolynomial);
    }
    if !square_free(p) {
        return Err(StratifyError::NotSquareFree);
    }

    let grads = p.gradient();
    let p_c = p.compile();
    let grads_c: Vec<CompiledPoly> = grads.iter().map(|g| g.compile()).collect();

    // singular locus samples: common zeros of p and its gradient
    let mut system = vec![p.compile()];
    let mut jac = vec![grads.iter().map(|g| g.compile()).collect::<Vec<_>>()];
    for g in &grads {
        system.push(g.compile());
        jac.push((0..n).map(|v| g.partial(v).compile()).collect());
    }
    let per_dim = match n {
        1 => 33,
        2 => 11,
        _ => 7,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(fnv(&[&params.seed.to_le_bytes(), b"singular"]));
    let mut starts = grid_starts(sample_box, per_dim);
    starts.extend(random_starts(sample_box, 96, &mut rng));
    // the Jacobian of [p, grad p] is rank-deficient at its own roots, so
    // Newton converges linearly and stalls: a residual of 1e-11 on a row
    // like -3*x^2 still allows |x| around 2e-6, and quartic rows allow
    // nearly 1e-3. Dedupe and snap at that resolution, not at solver tol.
    let sing = solve_poly_system(&system, &jac, &starts, sample_box, 2e-3);

    // classification: a full coordinate axis is recognized exactly, by
    // rational substitution; otherwise the sampled locus must be finite
    let axes: Vec<usize> = (0..n)
        .filter(|&a| vanishes_on_axis(p, a) && grads.iter().all(|g| vanishes_on_axis(g, a)))
        .collect();
    let sigma = if !axes.is_empty() {
        if axes.len() > 1 {
            return Err(StratifyError::UnsupportedSingularLocus(format!(
                "{} coordinate axes lie in the singular locus",
                axes.len()
            )));
        }
        let a = axes[0];
        for s in &sing {
            let trans: f64 =
                (0..n).filter(|&j| j != a).map(|j| s[j] * s[j]).sum::<f64>().sqrt();
            if trans > 1e-4 {
                return Err(StratifyError::UnsupportedSingularLocus(format!(
                    "a singular point at {:?} lies off the recognized axis",
                    s.as_slice()
                )));
            }
        }
        Sigma::Axis(a)
    } else if sing.is_empty() {
        Sigma::Empty
    } else {
        if sing.len() > 16 {
            return Err(StratifyError::UnsupportedSingularLocus(format!(
                "{} singular points sampled; expected a small isolated set",
                sing.len()
            )));
        }
        // isolated means perturbed restarts fall back onto known points
        let scale = sample_box.iter().map(|(lo, hi)| hi - lo).fold(0.0f64, f64::max);
        for s in &sing {
            for v in 0..n {
                for sgn in [-1.0, 1.0] {
                    let mut start = s.clone();
                    start[v] += sgn * 0.02 * scale;
                    let Some(sol) = ({
                        let f = |x: &DVector<f64>| {
                            Some(DVector::from_iterator(
                                system.len(),
                                system.iter().map(|q| q.eval(x.as_slice())),
                            ))
                        };
                        let jm = |x: &DVector<f64>| {
                            let mut m = DMatrix::zeros(system.len(), n);
                            for (i, row) in jac.iter().enumerate() {
                                for (jx, q) in row.iter().enumerate() {
                                    m[(i, jx)] = q.eval(x.as_slice());
                                }
                            }
                            Some(m)
                        };
                        newton_least_norm(
                            f,
                            jm,
                            &start,
                            &NewtonOpts { max_iters: 90, tol: 1e-11, rank_tol: 1e-9 },
                        )
                    }) else {
                        continue;
                    };
                    if in_box(&sol, sample_box, 1e-6)
                        && sing.iter().all(|q| (q - &sol).norm() > 3e-3)
                    {
                        return Err(StratifyError::UnsupportedSingularLocus(
                            "singular points do not isolate; the locus appears positive-dimensional"
                                .into(),
                        ));
                    }
                }
            }
        }
        Sigma::Points(sing)
    };

    let mut strata: Vec<SceneStratum> = Vec::new();
    let mut base_points: Vec<BasePointSpec> = Vec::new();

    // the singular locus becomes strata first: axis segments between branch
    // breakpoints plus breakpoint points, or plain isolated points
    match &sigma {
        Sigma::Axis(a) => {
            let a = *a;
            let (qa, qb, qc) = slice_quadratic(p, a);
            let four = BigRational::from_integer(BigInt::from(4));
            let disc = qb.mul(&qb).sub(&qa.mul(&qc).scale(&four));
            if disc.is_zero() {
                return Err(StratifyError::UnsupportedSingularLocus(
                    "the transverse quadratic form is degenerate along the whole axis; \
                     branch structure depends on higher-order terms"
                        .into(),
                ));
            }
            let (lo, hi) = sample_box[a];
            let roots = univariate_roots(&disc, lo, hi);
            let letter = ["x", "y", "z"][a];
            let trans: Vec<usize> = (0..n).filter(|&j| j != a).collect();
            let mut bounds = vec![lo];
            bounds.extend(&roots);
            bounds.push(hi);
            let mut seg = 0;
            for w in bounds.windows(2) {
                let (wl, wh) = (w[0], w[1]);
                if wh - wl <= 1e-6 {
                    continue;
                }
                seg += 1;
                let name = if roots == [0.0] {
                    if wh <= 0.0 {
                        format!("{letter}-axis-neg")
                    } else {
                        format!("{letter}-axis-pos")
                    }
                } else {
                    format!("{letter}-axis-seg{seg}")
                };
                let mut ineqs = Vec::new();
                if wl > lo + 1e-12 {
                    ineqs.push(shifted_coord(a, wl));
                }
                if wh < hi - 1e-12 {
                    ineqs.push(upper_cut(a, wh));
                }
                strata.push(SceneStratum {
                    name,
                    dim: Some(1),
                    equations: trans.iter().map(|&j| coord(j)).collect(),
                    inequalities: ineqs,
                    maps: vec![],
                    domain: vec![],
                    connected: true,
                });
            }
            for (k, &r) in roots.iter().enumerate() {
                let mut pt = DVector::zeros(n);
                pt[a] = r;
                let name = if pt.iter().all(|v| *v == 0.0) {
                    "origin".to_string()
                } else {
                    format!("{letter}-axis-pt{}", k + 1)
                };
                strata.push(SceneStratum {
                    name: name.clone(),
                    dim: Some(0),
                    equations: point_equations(&pt),
                    inequalities: vec![],
                    maps: vec![],
                    domain: vec![],
                    connected: true,
                });
                base_points.push(BasePointSpec { stratum: name, point: pt.iter().copied().collect() });
            }
        }
        Sigma::Points(pts) => {
            for (k, pt) in pts.iter().enumerate() {
                // coordinates carry the linear-convergence stall of the
                // singular solve, so the snap radius matches its dedupe
                let snapped = DVector::from_iterator(
                    n,
                    pt.iter().map(|&v| if v.abs() <= 1e-3 { 0.0 } else { v }),
                );
                let name = if snapped.iter().all(|v| *v == 0.0) {
                    "origin".to_string()
                } else {
                    format!("sing-pt{}", k + 1)
                };
                strata.push(SceneStratum {
                    name: name.clone(),
                    dim: Some(0),
                    equations: point_equations(&snapped),
                    inequalities: vec![],
                    maps: vec![],
                    domain: vec![],
                    connected: true,
                });
                base_points
                    .push(BasePointSpec { stratum: name, point: snapped.iter().copied().collect() });
            }
        }
        Sigma::Empty => {}
    }

    // smooth part: sample, link into components, carve apart
    let clearance_of = |x: &DVector<f64>| -> f64 {
        match &sigma {
            Sigma::Axis(a) => {
                (0..n).filter(|j| j != a).map(|j| x[j] * x[j]).sum::<f64>().sqrt()
            }
            Sigma::Points(pts) => {
                pts.iter().map(|q| (q - x).norm()).fold(f64::INFINITY, f64::min)
            }
            Sigma::Empty => f64::INFINITY,
        }
    };
    let samples = sample_smooth(&p_c, &grads_c, sample_box, &clearance_of, params);
    let comps = link_components(&samples, &p_c, &grads_c, sample_box, &clearance_of, params);
    let p_str = p.to_expr().to_string();
    let scale = sample_box.iter().map(|(lo, hi)| hi - lo).fold(0.0f64, f64::max);
    let comp_pts: Vec<Vec<&DVector<f64>>> =
        comps.iter().map(|c| c.iter().map(|&i| &samples[i]).collect()).collect();
    for (k, pts) in comp_pts.iter().enumerate() {
        let mut ineqs: BTreeSet<String> = BTreeSet::new();
        for (k2, other) in comp_pts.iter().enumerate() {
            if k == k2 {
                continue;
            }
            match separating_cut(pts, other, n, 1e-3 * scale) {
                Some(cut) => {
                    ineqs.insert(cut);
                }
                None => {
                    return Err(StratifyError::InseparableComponents(format!(
                        "components {} and {} of the smooth part overlap in every coordinate",
                        k + 1,
                        k2 + 1
                    )))
                }
            }
        }
        let name =
            if comp_pts.len() == 1 { "smooth".to_string() } else { format!("smooth-{}", k + 1) };
        strata.insert(
            k,
            SceneStratum {
                name,
                dim: Some(n - 1),
                equations: vec![p_str.clone()],
                inequalities: ineqs.into_iter().collect(),
                maps: vec![],
                domain: vec![],
                connected: true,
            },
        );
    }

    let mut scene = Scene {
        ambient_dim: n,
        sample_box: Some(sample_box.to_vec()),
        variety: Some(p_str),
        strata,
        frontier: vec![],
        function: None,
        wing_families: vec![],
        base_points,
    };
    scene.frontier = discover_frontier(&scene, params.seed)?;
    Ok(scene)
}

/// Probe every dimension-ordered stratum pair: the pair is a frontier edge
/// when some sampled lower point is an accumulation point of the upper
/// stratum. Edges always go strictly up in dimension, so the result is
/// cycle-free by construction.
fn discover_frontier(scene: &Scene, seed: u64) -> Result<Vec<FrontierPair>, SceneError> {
    let mut probe_scene = scene.clone();
    probe_scene.frontier.clear();
    let built = probe_scene.build()?;
    let strata = &built.stratification.strata;
    let mut out = Vec::new();
    for l in 0..strata.len() {
        for u in 0..strata.len() {
            if strata[l].dim >= strata[u].dim {
                continue;
            }
            let s = fnv(&[
                &seed.to_le_bytes(),
                strata[l].name.as_bytes(),
                strata[u].name.as_bytes(),
                b"frontier",
            ]);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let probes = strata[l].sample(&mut rng, &built.sample_box, 6);
            let hit = probes.iter().enumerate().any(|(i, b)| {
                let mut dir_rng = ChaCha8Rng::seed_from_u64(s ^ (i as u64 + 1));
                strata[u].approaches(&b.x, &mut dir_rng)
            });
            if hit {
                out.push(FrontierPair {
                    lower: strata[l].name.clone(),
                    upper: strata[u].name.clone(),
                });
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// refinement

#[derive(Clone, Debug)]
pub struct RefineParams {
    pub check: CheckParams,
    /// Conditions every frontier pair must satisfy.
    pub conditions: Vec<ConditionId>,
    /// Base points sampled per lower stratum (declared points come first).
    pub bases_per_pair: usize,
    /// Failing bases within this distance merge into one split point.
    pub cluster_radius: f64,
    pub max_rounds: usize,
    /// More split clusters than this in one round means the bad locus is
    /// not a finite point set; point splits would never converge.
    pub max_clusters: usize,
    /// Likewise when more than this fraction of a stratum's bases fail.
    pub max_failing_fraction: f64,
}

impl Default for RefineParams {
    fn default() -> RefineParams {
        RefineParams {
            check: CheckParams::default(),
            conditions: vec![ConditionId::B],
            bases_per_pair: 12,
            cluster_radius: 0.05,
            max_rounds: 5,
            max_clusters: 8,
            max_failing_fraction: 0.25,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FailingBase {
    pub lower: String,
    pub upper: String,
    pub condition: ConditionId,
    pub base: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct SplitRecord {
    pub stratum: String,
    pub center: DVector<f64>,
    pub new_stratum: String,
}

#[derive(Clone, Debug)]
pub struct RoundLog {
    pub round: usize,
    pub pairs_checked: usize,
    pub bases_checked: usize,
    pub failing: Vec<FailingBase>,
    pub splits: Vec<SplitRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RefineStatus {
    /// Every pair passed every requested condition.
    Clean,
    /// Refinement stopped with failures left; the message says why.
    NonConvergence(String),
}

#[derive(Clone, Debug)]
pub struct RefineOutcome {
    pub scene: Scene,
    pub rounds: Vec<RoundLog>,
    pub status: RefineStatus,
}

impl RefineOutcome {
    pub fn is_clean(&self) -> bool {
        self.status == RefineStatus::Clean
    }
}

/// Frontier pairs ordered for the refinement loop: highest-dimensional
/// lower stratum first (certifying top levels before the points below
/// them), names breaking ties for determinism.
fn ordered_pairs(built: &crate::scene::BuiltScene) -> Vec<(usize, usize)> {
    let strata = &built.stratification.strata;
    let mut pairs = built.stratification.frontier.clone();
    pairs.sort_by(|&(l1, u1), &(l2, u2)| {
        strata[l2]
            .dim
            .cmp(&strata[l1].dim)
            .then_with(|| strata[l1].name.cmp(&strata[l2].name))
            .then_with(|| strata[u1].name.cmp(&strata[u2].name))
    });
    pairs
}

/// Run one condition per (pair, condition) job on its own thread and
/// collect in job order, so concurrency never changes the output.
fn run_jobs(
    built: &crate::scene::BuiltScene,
    jobs: &[(usize, usize, ConditionId)],
    bases_of: &BTreeMap<usize, Vec<DVector<f64>>>,
    check: &CheckParams,
) -> Vec<Vec<ConditionReport>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(l, u, c)| {
                let bases = &bases_of[&l];
                scope.spawn(move || scan_bad_locus(c, built, l, u, bases, check))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("condition check panicked")).collect()
    })
}

fn cluster_points(pts: &[DVector<f64>], radius: f64) -> Vec<DVector<f64>> {
    let mut sorted: Vec<&DVector<f64>> = pts.iter().collect();
    sorted.sort_by(|a, b| lex_cmp(a, b));
    let mut seeds: Vec<DVector<f64>> = Vec::new();
    let mut sums: Vec<(DVector<f64>, usize)> = Vec::new();
    for p in sorted {
        match seeds.iter().position(|s| (s - p).norm() <= radius) {
            Some(i) => {
                sums[i].0 += p;
                sums[i].1 += 1;
            }
            None => {
                seeds.push(p.clone());
                sums.push((p.clone(), 1));
            }
        }
    }
    sums.into_iter()
        .map(|(s, c)| {
            DVector::from_iterator(
                s.len(),
                s.iter().map(|v| {
                    let m = v / c as f64;
                    if m.abs() <= 1e-9 {
                        0.0
                    } else {
                        m
                    }
                }),
            )
        })
        .collect()
}

fn fresh_point_name(scene: &Scene, center: &DVector<f64>, round: usize, k: usize) -> String {
    let base = if center.iter().all(|v| *v == 0.0) {
        "origin".to_string()
    } else {
        format!("split-r{round}-{k}")
    };
    if scene.strata.iter().any(|s| s.name == base) {
        format!("{base}-r{round}-{k}")
    } else {
        base
    }
}

/// Remove one point from a stratum (strict ball-exclusion inequality) and
/// add it back as its own point stratum; base points sitting on the removed
/// point follow it.
fn apply_split(scene: &mut Scene, lower: &str, center: &DVector<f64>, new_name: &str) {
    let st = scene.strata.iter_mut().find(|s| s.name == lower).expect("split target exists");
    st.inequalities.push(ball_exclusion(center));
    // removing an interior point disconnects curve strata; never claim
    // connectivity that the split may have destroyed
    st.connected = false;
    scene.strata.push(SceneStratum {
        name: new_name.to_string(),
        dim: Some(0),
        equations: point_equations(center),
        inequalities: vec![],
        maps: vec![],
        domain: vec![],
        connected: true,
    });
    for bp in &mut scene.base_points {
        let d: f64 =
            bp.point.iter().zip(center.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if bp.stratum == lower && d <= 1e-9 {
            bp.stratum = new_name.to_string();
        }
    }
}

/// Check every frontier pair under the requested conditions and split
/// strata at clustered failing base points until clean, the failing locus
/// stops shrinking, or the bad set is visibly not a finite point set.
pub fn refine(scene: &Scene, params: &RefineParams) -> Result<RefineOutcome, StratifyError> {
    if params.conditions.iter().any(|c| c.requires_function()) && scene.function.is_none() {
        return Err(StratifyError::MissingFunction);
    }
    let mut scene = scene.clone();
    let mut rounds: Vec<RoundLog> = Vec::new();
    let mut prev_failing = usize::MAX;
    let mut status: Option<RefineStatus> = None;
    for round in 1..=params.max_rounds {
        let built = scene.build()?;
        let strata = &built.stratification.strata;
        let pairs = ordered_pairs(&built);
        let mut bases_of: BTreeMap<usize, Vec<DVector<f64>>> = BTreeMap::new();
        for &(l, _) in &pairs {
            bases_of
                .entry(l)
                .or_insert_with(|| base_grid(&built, l, params.bases_per_pair, &params.check));
        }
        let jobs: Vec<(usize, usize, ConditionId)> = pairs
            .iter()
            .flat_map(|&(l, u)| params.conditions.iter().map(move |&c| (l, u, c)))
            .collect();
        let reports = run_jobs(&built, &jobs, &bases_of, &params.check);

        let mut failing: Vec<FailingBase> = Vec::new();
        let mut bases_checked = 0;
        let mut worst: Option<(usize, usize, ConditionId, usize, usize)> = None;
        for (&(l, u, c), reps) in jobs.iter().zip(&reports) {
            bases_checked += reps.len();
            let nf = reps.iter().filter(|r| r.verdict == Verdict::Fails).count();
            for r in reps.iter().filter(|r| r.verdict == Verdict::Fails) {
                failing.push(FailingBase {
                    lower: strata[l].name.clone(),
                    upper: strata[u].name.clone(),
                    condition: c,
                    base: r.base.clone(),
                });
            }
            let is_worse = match worst {
                None => nf > 0,
                Some((.., wf, wt)) => nf * wt > wf * reps.len(),
            };
            if is_worse {
                worst = Some((l, u, c, nf, reps.len()));
            }
        }

        if failing.is_empty() {
            rounds.push(RoundLog {
                round,
                pairs_checked: pairs.len(),
                bases_checked,
                failing,
                splits: vec![],
            });
            status = Some(RefineStatus::Clean);
            break;
        }
        if let Some((l, u, c, nf, nt)) = worst {
            if nf as f64 / nt as f64 > params.max_failing_fraction {
                let extent = if nf == nt {
                    "every sampled base point".to_string()
                } else {
                    format!("{nf} of {nt} sampled base points")
                };
                status = Some(RefineStatus::NonConvergence(format!(
                    "round {round}: {extent} of `{}` fail `{c}` against `{}`; the failing locus \
                     covers the stratum, so point splits cannot converge",
                    strata[l].name, strata[u].name
                )));
                rounds.push(RoundLog {
                    round,
                    pairs_checked: pairs.len(),
                    bases_checked,
                    failing,
                    splits: vec![],
                });
                break;
            }
        }
        if failing.len() >= prev_failing {
            status = Some(RefineStatus::NonConvergence(format!(
                "round {round}: the failing count did not decrease ({prev_failing} -> {})",
                failing.len()
            )));
            rounds.push(RoundLog {
                round,
                pairs_checked: pairs.len(),
                bases_checked,
                failing,
                splits: vec![],
            });
            break;
        }
        prev_failing = failing.len();

        let mut by_lower: BTreeMap<String, Vec<DVector<f64>>> = BTreeMap::new();
        for fb in &failing {
            by_lower.entry(fb.lower.clone()).or_default().push(fb.base.clone());
        }
        let mut planned: Vec<(String, DVector<f64>)> = Vec::new();
        for (lower, pts) in &by_lower {
            for c in cluster_points(pts, params.cluster_radius) {
                // cluster means drift off curved strata; pull them back on
                let li = built.stratification.stratum_index(lower).expect("known stratum");
                let center = built.stratification.strata[li]
                    .project(&c)
                    .map(|sp| {
                        DVector::from_iterator(
                            sp.x.len(),
                            sp.x.iter().map(|&v| if v.abs() <= 1e-9 { 0.0 } else { v }),
                        )
                    })
                    .unwrap_or(c);
                planned.push((lower.clone(), center));
            }
        }
        if planned.len() > params.max_clusters {
            status = Some(RefineStatus::NonConvergence(format!(
                "round {round}: {} split clusters exceed the limit of {}; the bad locus is not a \
                 finite point set",
                planned.len(),
                params.max_clusters
            )));
            rounds.push(RoundLog {
                round,
                pairs_checked: pairs.len(),
                bases_checked,
                failing,
                splits: vec![],
            });
            break;
        }
        let mut splits = Vec::new();
        for (k, (lower, center)) in planned.into_iter().enumerate() {
            let new_name = fresh_point_name(&scene, &center, round, k + 1);
            apply_split(&mut scene, &lower, &center, &new_name);
            splits.push(SplitRecord { stratum: lower, center, new_stratum: new_name });
        }
        scene.frontier = discover_frontier(&scene, params.check.seed)?;
        rounds.push(RoundLog {
            round,
            pairs_checked: pairs.len(),
            bases_checked,
            failing,
            splits,
        });
    }
    let status = status.unwrap_or_else(|| {
        RefineStatus::NonConvergence(format!(
            "{} rounds exhausted with failures remaining",
            params.max_rounds
        ))
    });
    Ok(RefineOutcome { scene, rounds, status })
}

// ---------------------------------------------------------------------------
// certification

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CertifyStatus {
    /// Every pair holds every requested condition at every base point.
    Certified,
    /// At least one red verdict, with its witness embedded in the report.
    Refuted,
    Inconclusive,
}

impl std::fmt::Display for CertifyStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CertifyStatus::Certified => "certified",
            CertifyStatus::Refuted => "refuted",
            CertifyStatus::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Clone, Debug)]
pub struct CertifyOutcome {
    pub status: CertifyStatus,
    /// Full pair-by-base-by-condition matrix, in deterministic order.
    pub reports: Vec<ConditionReport>,
}

/// Verdict matrix over every frontier pair, every sampled base point, and
/// every requested condition.
pub fn certify(
    scene: &Scene,
    conditions: &[ConditionId],
    bases_per_pair: usize,
    check: &CheckParams,
) -> Result<CertifyOutcome, StratifyError> {
    if conditions.iter().any(|c| c.requires_function()) && scene.function.is_none() {
        return Err(StratifyError::MissingFunction);
    }
    let built = scene.build()?;
    let pairs = ordered_pairs(&built);
    let mut bases_of: BTreeMap<usize, Vec<DVector<f64>>> = BTreeMap::new();
    for &(l, _) in &pairs {
        bases_of.entry(l).or_insert_with(|| base_grid(&built, l, bases_per_pair, check));
    }
    let jobs: Vec<(usize, usize, ConditionId)> =
        pairs.iter().flat_map(|&(l, u)| conditions.iter().map(move |&c| (l, u, c))).collect();
    let reports: Vec<ConditionReport> =
        run_jobs(&built, &jobs, &bases_of, check).into_iter().flatten().collect();
    let status = if reports.iter().any(|r| r.verdict == Verdict::Fails) {
        CertifyStatus::Refuted
    } else if reports.iter().any(|r| r.verdict == Verdict::Inconclusive) {
        CertifyStatus::Inconclusive
    } else {
        CertifyStatus::Certified
    };
    Ok(CertifyOutcome { status, reports })
}

// ---------------------------------------------------------------------------
// rank partition

/// Split strata so the declared function has constant restriction rank on
/// each: strata whose sampled rank is one get their isolated critical
/// points (Lagrange conditions solved by Newton from a grid) carved out as
/// point strata. A critical set that is visibly not a finite point set is
/// an error, never silently absorbed.
pub fn rank_partition(scene: &Scene, seed: u64) -> Result<Scene, StratifyError> {
    let sf = scene.function.as_ref().ok_or(StratifyError::MissingFunction)?;
    let built = scene.build()?;
    let n = scene.ambient_dim;
    let vars = VarTable::ambient(n);
    let as_scene_err = |what: &str, e: crate::expr::ParseError| {
        StratifyError::Scene(SceneError::Invalid { context: what.into(), message: e.to_string() })
    };
    let fexpr = parse(&sf.value, &vars).map_err(|e| as_scene_err("function.value", e))?;
    let fgrad = fexpr.gradient(n);
    let fhess: Vec<Vec<Expr>> = fgrad.iter().map(|g| g.gradient(n)).collect();

    let mut out = scene.clone();
    let mut any_split = false;
    let sample_box = &built.sample_box;
    for (idx, st) in built.stratification.strata.iter().enumerate() {
        if sf.ranks.contains_key(&st.name) || st.dim == 0 {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(fnv(&[
            &seed.to_le_bytes(),
            st.name.as_bytes(),
            b"rank",
        ]));
        let mut samples = st.sample(&mut rng, sample_box, 24);
        samples.extend(
            built
                .base_points
                .iter()
                .filter(|(i, _)| *i == idx)
                .map(|(_, p)| StratumPoint { x: p.clone(), param: None }),
        );
        let mut generic_rank = 0usize;
        for sp in &samples {
            let Some(tan) = st.tangent_at(sp, 1e-9) else { continue };
            if tan.dim() == 0 {
                continue;
            }
            let mut g = DVector::zeros(n);
            let mut ok = true;
            for (i, ge) in fgrad.iter().enumerate() {
                match ge.eval(sp.x.as_slice()) {
                    Ok(v) if v.is_finite() => g[i] = v,
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok && tan.project(&g).norm() > 1e-7 * g.norm().max(1.0) {
                generic_rank = 1;
                break;
            }
        }
        if generic_rank == 0 {
            continue;
        }
        if st.is_parametric() {
            return Err(StratifyError::UnsupportedCriticalLocus(format!(
                "stratum `{}` is parametric; critical points are searched on implicit strata only",
                st.name
            )));
        }

        // Lagrange system in (x, lambda): the stratum equations, plus the
        // ambient gradient of f lying in the span of the equation gradients
        let eq_src = &scene.strata[idx].equations;
        let mut eqs = Vec::new();
        for s in eq_src {
            eqs.push(parse(s, &vars).map_err(|e| as_scene_err("stratum equation", e))?);
        }
        let egrads: Vec<Vec<Expr>> = eqs.iter().map(|e| e.gradient(n)).collect();
        let ehess: Vec<Vec<Vec<Expr>>> =
            egrads.iter().map(|gs| gs.iter().map(|g| g.gradient(n)).collect()).collect();
        let m = eqs.len();
        let eval_at = |e: &Expr, xs: &[f64]| e.eval(xs).ok().filter(|v| v.is_finite());
        let sys = |y: &DVector<f64>| -> Option<DVector<f64>> {
            let xs = &y.as_slice()[..n];
            let mut v = DVector::zeros(m + n);
            for i in 0..m {
                v[i] = eval_at(&eqs[i], xs)?;
            }
            for i in 0..n {
                let mut gi = eval_at(&fgrad[i], xs)?;
                for j in 0..m {
                    gi -= y[n + j] * eval_at(&egrads[j][i], xs)?;
                }
                v[m + i] = gi;
            }
            Some(v)
        };
        let jac = |y: &DVector<f64>| -> Option<DMatrix<f64>> {
            let xs = &y.as_slice()[..n];
            let mut mat = DMatrix::zeros(m + n, n + m);
            for i in 0..m {
                for j in 0..n {
                    mat[(i, j)] = eval_at(&egrads[i][j], xs)?;
                }
            }
            for i in 0..n {
                for j in 0..n {
                    let mut h = eval_at(&fhess[i][j], xs)?;
                    for k in 0..m {
                        h -= y[n + k] * eval_at(&ehess[k][i][j], xs)?;
                    }
                    mat[(m + i, j)] = h;
                }
                for k in 0..m {
                    mat[(m + i, n + k)] = -eval_at(&egrads[k][i], xs)?;
                }
            }
            Some(mat)
        };
        let per_dim = match n {
            1 => 21,
            2 => 9,
            _ => 6,
        };
        let opts = NewtonOpts { max_iters: 90, tol: 1e-10, rank_tol: 1e-9 };
        let mut crits: Vec<DVector<f64>> = Vec::new();
        for start_x in grid_starts(sample_box, per_dim) {
            let mut y0 = DVector::zeros(n + m);
            y0.rows_mut(0, n).copy_from(&start_x);
            let Some(sol) = newton_least_norm(sys, jac, &y0, &opts) else { continue };
            let x = DVector::from_iterator(
                n,
                sol.as_slice()[..n].iter().map(|&v| if v.abs() <= 1e-9 { 0.0 } else { v }),
            );
            if !in_box(&x, sample_box, 1e-9) || !st.contains(&x, 1e-8) {
                continue;
            }
            if crits.iter().all(|q| (q - &x).norm() > 1e-6) {
                crits.push(x);
            }
        }
        crits.sort_by(lex_cmp);
        if crits.is_empty() {
            continue;
        }
        if crits.len() > 8 {
            return Err(StratifyError::UnsupportedCriticalLocus(format!(
                "{} critical points sampled on `{}`; the critical set appears \
                 positive-dimensional",
                crits.len(),
                st.name
            )));
        }
        for (k, c) in crits.iter().enumerate() {
            let name = if c.iter().all(|v| *v == 0.0)
                && !out.strata.iter().any(|s| s.name == "origin")
            {
                "origin".to_string()
            } else {
                format!("crit-{}-{}", st.name, k + 1)
            };
            apply_split(&mut out, &st.name, c, &name);
            any_split = true;
        }
    }
    if any_split {
        out.frontier = discover_frontier(&out, seed)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_polynomial;
    use crate::strata::ValidateParams;

    fn poly(src: &str, n: usize) -> Polynomial {
        parse_polynomial(src, &VarTable::ambient(n)).unwrap()
    }

    fn unit_box(n: usize) -> Vec<(f64, f64)> {
        vec![(-1.0, 1.0); n]
    }

    fn validate_ok(scene: &Scene) {
        let built = scene.build().unwrap();
        // boundary-limit points of strata cut from the full variety
        // polynomial come out of a singular Newton solve and are located
        // to about 1e-4; the coverage radius has to absorb that
        let params = ValidateParams {
            samples_per_stratum: 200,
            coverage_tol: 5e-4,
            ..ValidateParams::default()
        };
        let report = built.stratification.validate(&built.sample_box, &params);
        assert!(report.is_valid(), "validation issues: {:?}", report.issues);
    }

    #[test]
    fn cross_decomposes_into_four_rays_and_origin() {
        let scene =
            initial_decomposition(&poly("x*y", 2), &unit_box(2), &DecomposeParams::default())
                .unwrap();
        assert_eq!(scene.strata.len(), 5);
        let rays: Vec<&SceneStratum> =
            scene.strata.iter().filter(|s| s.dim == Some(1)).collect();
        assert_eq!(rays.len(), 4);
        let mut cuts: Vec<Vec<String>> = rays.iter().map(|s| s.inequalities.clone()).collect();
        cuts.sort();
        let mut expected = vec![
            vec!["x1".to_string()],
            vec!["-x1".to_string()],
            vec!["x2".to_string()],
            vec!["-x2".to_string()],
        ];
        expected.sort();
        assert_eq!(cuts, expected);
        let origin = scene.strata.iter().find(|s| s.name == "origin").unwrap();
        assert_eq!(origin.equations, vec!["x1", "x2"]);
        // every ray accumulates at the origin and nowhere else
        assert_eq!(scene.frontier.len(), 4);
        assert!(scene.frontier.iter().all(|fp| fp.lower == "origin"));
        validate_ok(&scene);
    }

    #[test]
    fn cusp_decomposes_into_two_branches_and_origin() {
        let scene = initial_decomposition(
            &poly("y^2 - x^3", 2),
            &unit_box(2),
            &DecomposeParams::default(),
        )
        .unwrap();
        assert_eq!(scene.strata.len(), 3);
        let mut cuts: Vec<Vec<String>> = scene
            .strata
            .iter()
            .filter(|s| s.dim == Some(1))
            .map(|s| s.inequalities.clone())
            .collect();
        cuts.sort();
        assert_eq!(cuts, vec![vec!["-x2".to_string()], vec!["x2".to_string()]]);
        assert_eq!(scene.frontier.len(), 2);
        assert!(scene.frontier.iter().all(|fp| fp.lower == "origin"));
        validate_ok(&scene);
    }

    #[test]
    fn pinched_surface_decomposition_recognizes_the_axis() {
        let scene = initial_decomposition(
            &poly("x^2 - z*y^2", 3),
            &unit_box(3),
            &DecomposeParams::default(),
        )
        .unwrap();
        let names: Vec<&str> = scene.strata.iter().map(|s| s.name.as_str()).collect();
        assert!(names.contains(&"z-axis-pos"), "strata: {names:?}");
        assert!(names.contains(&"z-axis-neg"));
        assert!(names.contains(&"origin"));
        // the sheet is connected through the fold line {x = 0, z = 0}, so
        // the smooth part has exactly the two components y > 0 and y < 0
        let smooth: Vec<&SceneStratum> =
            scene.strata.iter().filter(|s| s.name.starts_with("smooth")).collect();
        assert_eq!(smooth.len(), 2, "strata: {names:?}");
        let mut cuts: Vec<Vec<String>> = smooth.iter().map(|s| s.inequalities.clone()).collect();
        cuts.sort();
        assert_eq!(cuts, vec![vec!["-x2".to_string()], vec!["x2".to_string()]]);
        let has = |l: &str, u: &str| {
            scene.frontier.iter().any(|fp| fp.lower == l && fp.upper == u)
        };
        for s in &smooth {
            assert!(has("origin", &s.name));
            assert!(has("z-axis-pos", &s.name), "positive axis lies under the sheet");
            assert!(
                !has("z-axis-neg", &s.name),
                "the sheet does not accumulate on the negative axis"
            );
        }
        assert!(has("origin", "z-axis-pos") && has("origin", "z-axis-neg"));
        validate_ok(&scene);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let e = initial_decomposition(
            &poly("(y - x^2)^2", 2),
            &unit_box(2),
            &DecomposeParams::default(),
        )
        .unwrap_err();
        assert!(matches!(e, StratifyError::NotSquareFree));
        let e = initial_decomposition(&poly("x^2*y", 2), &unit_box(2), &DecomposeParams::default())
            .unwrap_err();
        assert!(matches!(e, StratifyError::NotSquareFree));
        let e = initial_decomposition(&poly("7", 1), &unit_box(1), &DecomposeParams::default())
            .unwrap_err();
        assert!(matches!(e, StratifyError::ConstantPolynomial));
    }

    #[test]
    fn univariate_roots_become_point_strata_with_midpoint_cuts() {
        let scene = initial_decomposition(
            &poly("x*(x - 1)*(x + 1)", 1),
            &unit_box(1),
            &DecomposeParams::default(),
        )
        .unwrap();
        assert_eq!(scene.strata.len(), 3);
        assert!(scene.frontier.is_empty());
        validate_ok(&scene);
    }

    #[test]
    fn smooth_variety_is_a_single_stratum() {
        let scene = initial_decomposition(
            &poly("x^2 + y^2 - 0.25", 2),
            &unit_box(2),
            &DecomposeParams::default(),
        )
        .unwrap();
        assert_eq!(scene.strata.len(), 1);
        assert_eq!(scene.strata[0].name, "smooth");
        assert!(scene.strata[0].inequalities.is_empty());
        assert!(scene.frontier.is_empty());
        validate_ok(&scene);
    }

    const COARSE_PINCH: &str = r#"
ambient_dim = 3
sample_box = [[-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0]]
variety = "x^2 - z*y^2"

[[strata]]
name = "sheet"
dim = 2
equations = ["x^2 - z*y^2"]
inequalities = ["x^2 + y^2"]

[[strata]]
name = "axis"
dim = 1
equations = ["x", "y"]

[[frontier]]
lower = "axis"
upper = "sheet"

[[wing_families]]
name = "horns"
curve = ["u*t^2", "t", "u^2*t^2"]
base = [0.0, 0.0, 0.0]
param_range = [0.5, 2.0]

[[base_points]]
stratum = "axis"
point = [0.0, 0.0, 0.0]
"#;

    #[test]
    fn refine_splits_the_pinch_point_and_certifies() {
        let scene = Scene::from_toml_str(COARSE_PINCH).unwrap();
        let params = RefineParams {
            conditions: vec![ConditionId::B],
            bases_per_pair: 10,
            ..RefineParams::default()
        };
        let out = refine(&scene, &params).unwrap();
        assert!(out.is_clean(), "status: {:?}", out.status);
        assert!(out.rounds.len() <= 2, "rounds: {}", out.rounds.len());
        let splits: Vec<&SplitRecord> = out.rounds.iter().flat_map(|r| &r.splits).collect();
        assert_eq!(splits.len(), 1);
        assert!(splits[0].center.norm() <= 1e-9, "split at {:?}", splits[0].center);
        assert_eq!(splits[0].new_stratum, "origin");
        // the base point declared at the removed point must follow it
        assert!(out
            .scene
            .base_points
            .iter()
            .any(|bp| bp.stratum == "origin" && bp.point.iter().all(|v| *v == 0.0)));
        let cert =
            certify(&out.scene, &[ConditionId::B], 8, &CheckParams::default()).unwrap();
        assert_eq!(cert.status, CertifyStatus::Certified);
    }

    const GRAPH_EDGE: &str = r#"
ambient_dim = 2
sample_box = [[0.25, 2.5], [-0.2, 1.0]]

[[strata]]
name = "edge"
dim = 1
equations = ["y"]
inequalities = ["x"]

[[strata]]
name = "inside"
dim = 2
inequalities = ["y", "x"]

[[frontier]]
lower = "edge"
upper = "inside"

[function]
value = "y^x"
level_form = "x * log(y)"

[function.ranks]
edge = 0

[[wing_families]]
name = "level-curves"
curve = ["b1", "exp(-1 / (t * b1))"]
grid = { t0 = 0.1, ratio = 0.6, count = 8 }

[[base_points]]
stratum = "edge"
point = [1.0, 0.0]

[[base_points]]
stratum = "edge"
point = [0.5, 0.0]

[[base_points]]
stratum = "edge"
point = [2.0, 0.0]
"#;

    #[test]
    fn refine_reports_nonconvergence_when_the_whole_stratum_fails() {
        let scene = Scene::from_toml_str(GRAPH_EDGE).unwrap();
        let params = RefineParams {
            conditions: vec![ConditionId::Wf],
            bases_per_pair: 8,
            ..RefineParams::default()
        };
        let out = refine(&scene, &params).unwrap();
        let RefineStatus::NonConvergence(msg) = &out.status else {
            panic!("expected NonConvergence, got {:?}", out.status);
        };
        assert!(msg.contains("every sampled base point"), "message: {msg}");
        assert_eq!(out.rounds.len(), 1);
        // no split was attempted; the scene comes back structurally intact
        assert_eq!(out.scene.strata.len(), scene.strata.len());
        assert!(out.rounds[0].failing.len() >= 3);
    }

    fn plane_scene(function: &str) -> Scene {
        let text = format!(
            r#"
ambient_dim = 2

[[strata]]
name = "plane"
dim = 2

[function]
value = "{function}"
"#
        );
        Scene::from_toml_str(&text).unwrap()
    }

    #[test]
    fn rank_partition_splits_the_isolated_critical_point() {
        let out = rank_partition(&plane_scene("x^2 + y^2"), 0).unwrap();
        assert_eq!(out.strata.len(), 2);
        let origin = out.strata.iter().find(|s| s.name == "origin").unwrap();
        assert_eq!(origin.equations, vec!["x1", "x2"]);
        let plane = out.strata.iter().find(|s| s.name == "plane").unwrap();
        assert_eq!(plane.inequalities.len(), 1);
        assert!(out.frontier.iter().any(|fp| fp.lower == "origin" && fp.upper == "plane"));
        validate_ok(&out);

        // saddle: same split
        let out = rank_partition(&plane_scene("x*y"), 0).unwrap();
        assert_eq!(out.strata.len(), 2);
        assert!(out.strata.iter().any(|s| s.name == "origin"));
    }

    #[test]
    fn rank_partition_leaves_constant_rank_strata_alone() {
        // constant function: rank zero everywhere, nothing to do
        let out = rank_partition(&plane_scene("5"), 0).unwrap();
        assert_eq!(out.strata.len(), 1);

        // rank one with no critical point in the box
        let out = rank_partition(&plane_scene("x + 2*y"), 0).unwrap();
        assert_eq!(out.strata.len(), 1);

        // the critical point exists but sits outside the stratum
        let text = r#"
ambient_dim = 2

[[strata]]
name = "half"
dim = 2
inequalities = ["(x - 0.5)"]

[function]
value = "x^2 + y^2"
"#;
        let out = rank_partition(&Scene::from_toml_str(text).unwrap(), 0).unwrap();
        assert_eq!(out.strata.len(), 1);

        // an already-split scene stays fixed: the punctured plane has
        // constant rank one, the origin point has rank zero by dimension
        let text = r#"
ambient_dim = 2

[[strata]]
name = "punctured"
dim = 2
inequalities = ["x^2 + y^2"]

[[strata]]
name = "origin"
dim = 0
equations = ["x", "y"]

[[frontier]]
lower = "origin"
upper = "punctured"

[function]
value = "x^2 + y^2"
"#;
        let scene = Scene::from_toml_str(text).unwrap();
        let out = rank_partition(&scene, 0).unwrap();
        assert_eq!(out.strata.len(), 2);
        assert_eq!(out.frontier.len(), 1);
    }

    #[test]
    fn rank_partition_splits_extrema_on_a_curve() {
        let text = r#"
ambient_dim = 2

[[strata]]
name = "circle"
dim = 1
equations = ["x^2 + y^2 - 0.25"]

[function]
value = "y"
"#;
        let out = rank_partition(&Scene::from_toml_str(text).unwrap(), 0).unwrap();
        // the height function on a circle has exactly two critical points
        assert_eq!(out.strata.len(), 3);
        let points: Vec<&SceneStratum> =
            out.strata.iter().filter(|s| s.dim == Some(0)).collect();
        assert_eq!(points.len(), 2);
        assert_eq!(out.frontier.len(), 2);
        validate_ok(&out);
    }

    #[test]
    fn rank_partition_rejects_a_critical_curve() {
        // f = x^2 restricted to the plane is critical on the whole line
        // x = 0; that locus is not a finite point set
        let e = rank_partition(&plane_scene("x^2"), 0).unwrap_err();
        assert!(matches!(e, StratifyError::UnsupportedCriticalLocus(_)), "got {e:?}");
    }
}
