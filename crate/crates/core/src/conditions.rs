//! Regularity condition checks for frontier pairs.
//!
//! Every check has the same shape: approach a base point of the lower
//! stratum along wings on the upper stratum, measure a gap quantity g at
//! each wing point, and classify how g behaves as the approach parameter
//! goes to zero.
//!
//! * `w`: gap between the lower tangent at the nearest lower point and the
//!   upper tangent, divided by the distance; must stay bounded.
//! * `a`: gap between the lower tangent at the base and the upper tangent;
//!   must go to zero.
//! * `b`: the larger of the secant-to-tangent gap and the `a` gap; must go
//!   to zero (the tangent part is what fails on the pinch-point surface,
//!   the secant part is what fails on oscillating graphs).
//! * `af`, `wf`: the same as `a` and `w` with both tangents replaced by
//!   their intersection with the kernel of the function differential.
//!
//! A wing whose gap diverges refutes `w`/`wf`; one bounded away from zero
//! refutes `a`/`b`/`af`. A base where no wing can be constructed holds
//! vacuously: the upper stratum does not accumulate there.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::limits::{
    classify_limit, distance_wing, family_wing, LimitClass, LimitVerdict, Wing, WingSample,
};
use crate::numeric::robust_norm;
use crate::scene::{BuiltScene, FunctionOnSpace, GridSpec, LevelGradient};
use crate::subspace::Subspace;

#[derive(Clone, Copy, Debug)]
pub struct CheckParams {
    /// Approach grid for wings without a declared family grid.
    pub grid: GridSpec,
    /// Distance wings per (pair, base); declared families add wings/4 each.
    pub wings: usize,
    /// |slope| below this counts as flat in the log-log fit.
    pub slope_tol: f64,
    /// A gap bounded away from zero by at least this refutes a
    /// convergence condition with confidence.
    pub gap_tol: f64,
    pub rank_tol: f64,
    pub membership_tol: f64,
    pub seed: u64,
}

impl Default for CheckParams {
    fn default() -> CheckParams {
        CheckParams {
            grid: GridSpec::default(),
            wings: 8,
            slope_tol: 0.1,
            gap_tol: 0.05,
            rank_tol: 1e-9,
            membership_tol: 1e-9,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ConditionId {
    W,
    A,
    B,
    Af,
    Wf,
}

impl ConditionId {
    pub const ALL: [ConditionId; 5] =
        [ConditionId::W, ConditionId::A, ConditionId::B, ConditionId::Af, ConditionId::Wf];

    pub fn requires_function(self) -> bool {
        matches!(self, ConditionId::Af | ConditionId::Wf)
    }

    /// Whether the gap must converge to zero (as opposed to staying
    /// bounded).
    pub fn wants_zero(self) -> bool {
        matches!(self, ConditionId::A | ConditionId::B | ConditionId::Af)
    }
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConditionId::W => "w",
            ConditionId::A => "a",
            ConditionId::B => "b",
            ConditionId::Af => "af",
            ConditionId::Wf => "wf",
        };
        f.write_str(s)
    }
}

impl FromStr for ConditionId {
    type Err = String;

    fn from_str(s: &str) -> Result<ConditionId, String> {
        match s {
            "w" => Ok(ConditionId::W),
            "a" => Ok(ConditionId::A),
            "b" => Ok(ConditionId::B),
            "af" => Ok(ConditionId::Af),
            "wf" => Ok(ConditionId::Wf),
            other => Err(format!("unknown condition `{other}` (expected w, a, b, af or wf)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Verdict::Holds => "holds",
            Verdict::Fails => "fails",
            Verdict::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug)]
pub struct WingReport {
    pub label: String,
    pub param_u: Option<f64>,
    pub samples: Vec<WingSample>,
    pub limit: LimitVerdict,
    pub verdict: Verdict,
}

#[derive(Clone, Debug)]
pub struct ConditionReport {
    pub condition: ConditionId,
    pub lower: String,
    pub upper: String,
    pub base: DVector<f64>,
    pub verdict: Verdict,
    /// Most negative slope among failing wings, or the smallest fitted
    /// slope overall when nothing fails (NaN with no fit at all).
    pub slope: f64,
    /// Largest gap observed over all wings; for a holding `w`/`wf` this
    /// estimates the constant C.
    pub bound: f64,
    /// Sample with the largest gap on a failing wing.
    pub witness: Option<WingSample>,
    pub wings: Vec<WingReport>,
    pub notes: Vec<String>,
}

/// FNV-1a over the identifying data of a wing. The condition id is
/// deliberately not part of the seed: checks of different conditions on the
/// same pair and base must see the identical wings.
fn wing_seed(master: u64, lower: &str, upper: &str, base: &DVector<f64>, idx: u64) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    let eat = |h: &mut u64, b: u8| {
        *h ^= b as u64;
        *h = h.wrapping_mul(0x100000001b3);
    };
    for b in master.to_le_bytes() {
        eat(&mut h, b);
    }
    for b in lower.bytes() {
        eat(&mut h, b);
    }
    eat(&mut h, 0xff);
    for b in upper.bytes() {
        eat(&mut h, b);
    }
    eat(&mut h, 0xff);
    for v in base.iter() {
        for b in v.to_bits().to_le_bytes() {
            eat(&mut h, b);
        }
    }
    for b in idx.to_le_bytes() {
        eat(&mut h, b);
    }
    h
}

/// All wings for a (pair, base): `params.wings` distance wings plus
/// `wings/4` wings per applicable declared family. Wings that cannot be
/// realized are skipped.
pub fn generate_wings(
    scene: &BuiltScene,
    lower_idx: usize,
    upper_idx: usize,
    base: &DVector<f64>,
    params: &CheckParams,
) -> Vec<Wing> {
    let lower = &scene.stratification.strata[lower_idx];
    let upper = &scene.stratification.strata[upper_idx];
    let mut wings = Vec::new();
    for i in 0..params.wings {
        let seed = wing_seed(params.seed, &lower.name, &upper.name, base, i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let Some(w) = distance_wing(upper, base, &params.grid, &mut rng) {
            wings.push(w);
        }
    }
    let per_family = (params.wings / 4).max(1);
    for (fi, fam) in scene.wing_families.iter().enumerate() {
        if !fam.applies_at(base) {
            continue;
        }
        let grid = fam.grid.unwrap_or(params.grid);
        for j in 0..per_family {
            let idx = 1_000 + (fi as u64) * 64 + j as u64;
            let seed = wing_seed(params.seed, &lower.name, &upper.name, base, idx);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            if let Some(w) = family_wing(fam, upper, base, &grid, params.membership_tol, &mut rng)
            {
                wings.push(w);
            }
        }
    }
    wings
}

/// Tangent intersected with the kernel of the function differential.
/// A declared rank of 0 short-circuits to the tangent itself with the
/// identical basis, as does a vanishing gradient.
fn level_tangent(
    f: &FunctionOnSpace,
    stratum_idx: usize,
    tangent: &Subspace,
    x: &[f64],
    rank_tol: f64,
) -> Option<Subspace> {
    if f.ranks.get(&stratum_idx) == Some(&0) {
        return Some(tangent.clone());
    }
    match f.level_gradient(x)? {
        LevelGradient::Zero => Some(tangent.clone()),
        LevelGradient::Dir(w) => Some(tangent.kernel_of_covector(&w, rank_tol)),
    }
}

/// Measure one wing under one condition. Samples that cannot be measured
/// (projection or tangent failure, zero distance) are dropped; the limit
/// classification then decides from what remains.
pub fn measure_wing(
    cond: ConditionId,
    scene: &BuiltScene,
    lower_idx: usize,
    upper_idx: usize,
    base: &DVector<f64>,
    wing: &Wing,
    params: &CheckParams,
) -> WingReport {
    let lower = &scene.stratification.strata[lower_idx];
    let upper = &scene.stratification.strata[upper_idx];
    let f = scene.function.as_ref();

    let base_low = lower.project(base);
    // lower tangent at the base, with levels for af, raw for a and b
    let t_low_base: Option<Subspace> = base_low.as_ref().and_then(|bp| {
        let raw = lower.tangent_at(bp, params.rank_tol)?;
        match cond {
            ConditionId::Af => {
                level_tangent(f?, lower_idx, &raw, bp.x.as_slice(), params.rank_tol)
            }
            _ => Some(raw),
        }
    });

    let mut samples = Vec::new();
    for (t, p) in &wing.points {
        let Some(gap) = (|| -> Option<f64> {
            let t_up_raw = upper.tangent_at(p, params.rank_tol)?;
            let t_up = match cond {
                ConditionId::Af | ConditionId::Wf => {
                    level_tangent(f?, upper_idx, &t_up_raw, p.x.as_slice(), params.rank_tol)?
                }
                _ => t_up_raw,
            };
            match cond {
                ConditionId::A | ConditionId::Af => Some(t_low_base.as_ref()?.delta(&t_up)),
                ConditionId::W | ConditionId::Wf => {
                    let pi = lower.project(&p.x).or_else(|| base_low.clone())?;
                    let d = &p.x - &pi.x;
                    let r = robust_norm(&d);
                    if r == 0.0 {
                        return None;
                    }
                    let t_low_raw = lower.tangent_at(&pi, params.rank_tol)?;
                    let t_low = match cond {
                        ConditionId::Wf => level_tangent(
                            f?,
                            lower_idx,
                            &t_low_raw,
                            pi.x.as_slice(),
                            params.rank_tol,
                        )?,
                        _ => t_low_raw,
                    };
                    Some(t_low.delta(&t_up) / r)
                }
                ConditionId::B => {
                    let pi = lower.project(&p.x).or_else(|| base_low.clone())?;
                    let d = &p.x - &pi.x;
                    if robust_norm(&d) == 0.0 {
                        return None;
                    }
                    let secant = Subspace::line(upper.ambient, &d).delta(&t_up);
                    Some(secant.max(t_low_base.as_ref()?.delta(&t_up)))
                }
            }
        })() else {
            continue;
        };
        samples.push(WingSample {
            t: *t,
            r: robust_norm(&(&p.x - base)),
            g: gap,
            x: p.x.clone(),
        });
    }

    let limit = classify_limit(&samples, params.slope_tol);
    let verdict = wing_verdict(cond, &limit, params.gap_tol);
    WingReport {
        label: wing.label.clone(),
        param_u: wing.param_u,
        samples,
        limit,
        verdict,
    }
}

fn wing_verdict(cond: ConditionId, limit: &LimitVerdict, gap_tol: f64) -> Verdict {
    match limit.class {
        LimitClass::ConvergesToZero => Verdict::Holds,
        LimitClass::Diverges => Verdict::Fails,
        LimitClass::Bounded => {
            if !cond.wants_zero() {
                Verdict::Holds
            } else if limit.bound >= gap_tol {
                Verdict::Fails
            } else {
                Verdict::Inconclusive
            }
        }
        LimitClass::Inconclusive => Verdict::Inconclusive,
    }
}

/// Check one condition for one frontier pair at one base point.
pub fn check_condition(
    cond: ConditionId,
    scene: &BuiltScene,
    lower_idx: usize,
    upper_idx: usize,
    base: &DVector<f64>,
    params: &CheckParams,
) -> ConditionReport {
    let lower = scene.stratification.strata[lower_idx].name.clone();
    let upper = scene.stratification.strata[upper_idx].name.clone();
    let mut report = ConditionReport {
        condition: cond,
        lower,
        upper,
        base: base.clone(),
        verdict: Verdict::Inconclusive,
        slope: f64::NAN,
        bound: f64::NAN,
        witness: None,
        wings: Vec::new(),
        notes: Vec::new(),
    };

    if cond.requires_function() && scene.function.is_none() {
        report.notes.push("condition needs a declared function".into());
        return report;
    }

    let wings = generate_wings(scene, lower_idx, upper_idx, base, params);
    if wings.is_empty() {
        report.verdict = Verdict::Holds;
        report
            .notes
            .push("no approach wings: the upper stratum does not accumulate here, so the condition holds vacuously".into());
        return report;
    }

    report.wings = wings
        .iter()
        .map(|w| measure_wing(cond, scene, lower_idx, upper_idx, base, w, params))
        .collect();

    let mut any_fails = false;
    let mut any_inconclusive = false;
    for w in &report.wings {
        match w.verdict {
            Verdict::Fails => any_fails = true,
            Verdict::Inconclusive => any_inconclusive = true,
            Verdict::Holds => {}
        }
        if w.limit.bound.is_finite() {
            report.bound = report.bound.max(w.limit.bound);
        }
    }
    report.verdict = if any_fails {
        Verdict::Fails
    } else if any_inconclusive {
        Verdict::Inconclusive
    } else {
        Verdict::Holds
    };

    let slope_pool: Vec<f64> = report
        .wings
        .iter()
        .filter(|w| !any_fails || w.verdict == Verdict::Fails)
        .map(|w| w.limit.slope)
        .filter(|s| s.is_finite())
        .collect();
    report.slope = slope_pool.into_iter().fold(f64::NAN, f64::min);

    if any_fails {
        report.witness = report
            .wings
            .iter()
            .filter(|w| w.verdict == Verdict::Fails)
            .flat_map(|w| w.samples.iter())
            .filter(|s| s.g.is_finite())
            .max_by(|a, b| a.g.partial_cmp(&b.g).unwrap())
            .cloned();
    }
    report
}

/// Base points for a locus scan: declared base points on the lower stratum
/// first, then deterministic random samples, deduplicated.
pub fn base_grid(
    scene: &BuiltScene,
    lower_idx: usize,
    count: usize,
    params: &CheckParams,
) -> Vec<DVector<f64>> {
    let lower = &scene.stratification.strata[lower_idx];
    let mut out: Vec<DVector<f64>> = scene
        .base_points
        .iter()
        .filter(|(i, _)| *i == lower_idx)
        .map(|(_, p)| p.clone())
        .collect();
    let seed = wing_seed(params.seed, &lower.name, "base-grid", &DVector::zeros(0), 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in lower.sample(&mut rng, &scene.sample_box, count) {
        if out.iter().all(|q| (q - &p.x).norm() > 1e-6) {
            out.push(p.x);
        }
    }
    out
}

/// Run one condition over many base points; the caller filters verdicts.
pub fn scan_bad_locus(
    cond: ConditionId,
    scene: &BuiltScene,
    lower_idx: usize,
    upper_idx: usize,
    bases: &[DVector<f64>],
    params: &CheckParams,
) -> Vec<ConditionReport> {
    bases
        .iter()
        .map(|b| check_condition(cond, scene, lower_idx, upper_idx, b, params))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Scene;

    fn build(text: &str) -> BuiltScene {
        Scene::from_toml_str(text).unwrap().build().unwrap()
    }

    fn v(coords: &[f64]) -> DVector<f64> {
        DVector::from_vec(coords.to_vec())
    }

    const FLAT_PAIR: &str = r#"
ambient_dim = 3

[[strata]]
name = "spine"
dim = 1
equations = ["x", "z"]

[[strata]]
name = "slab"
dim = 2
equations = ["z - x"]
inequalities = ["x^2 + z^2"]

[[frontier]]
lower = "spine"
upper = "slab"
"#;

    const UMBRELLA: &str = r#"
ambient_dim = 3

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

[[base_points]]
stratum = "axis"
point = [0.0, 0.0, 0.6]

[[base_points]]
stratum = "axis"
point = [0.0, 0.0, -0.6]
"#;

    const KURDYKA: &str = r#"
ambient_dim = 2
sample_box = [[0.05, 3.0], [-1.0, 1.0]]

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
name = "level-wing"
curve = ["b1", "exp(-1/(t*b1))"]
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
    fn flat_pair_holds_every_condition_with_zero_gap() {
        let scene = build(FLAT_PAIR);
        let params = CheckParams::default();
        let base = v(&[0.0, 0.3, 0.0]);
        for cond in [ConditionId::W, ConditionId::A, ConditionId::B] {
            let r = check_condition(cond, &scene, 0, 1, &base, &params);
            assert_eq!(r.verdict, Verdict::Holds, "{cond}: {:?}", r.notes);
            assert!(!r.wings.is_empty());
            for w in &r.wings {
                for s in &w.samples {
                    // w divides rounding noise in the tangent gap by the
                    // approach radius, so flat means small, not zero
                    assert!(s.g <= 1e-6, "{cond} sample gap {}", s.g);
                }
            }
        }
    }

    #[test]
    fn pinch_point_fails_a_b_w_at_origin_only() {
        let scene = build(UMBRELLA);
        let params = CheckParams::default();

        let origin = v(&[0.0, 0.0, 0.0]);
        for cond in [ConditionId::A, ConditionId::B] {
            let r = check_condition(cond, &scene, 1, 0, &origin, &params);
            assert_eq!(r.verdict, Verdict::Fails, "{cond}");
            let w = r.witness.expect("failing check carries a witness");
            // limit gap along a horn with constant u is 1/sqrt(4u^2+1),
            // which ranges over [0.24, 0.71] for u in [0.5, 2]
            assert!(w.g > 0.2 && w.g < 0.8, "{cond} witness gap {}", w.g);
        }
        let r = check_condition(ConditionId::W, &scene, 1, 0, &origin, &params);
        assert_eq!(r.verdict, Verdict::Fails);
        assert!(r.slope < -0.5, "distance gap should diverge, slope {}", r.slope);

        let off = v(&[0.0, 0.0, 0.6]);
        for cond in [ConditionId::A, ConditionId::B, ConditionId::W] {
            let r = check_condition(cond, &scene, 1, 0, &off, &params);
            assert_eq!(r.verdict, Verdict::Holds, "{cond} at z=0.6: {:?}", r.notes);
        }
    }

    #[test]
    fn vacuous_hold_where_the_sheet_does_not_accumulate() {
        let scene = build(UMBRELLA);
        let params = CheckParams::default();
        let r = check_condition(ConditionId::B, &scene, 1, 0, &v(&[0.0, 0.0, -0.6]), &params);
        assert_eq!(r.verdict, Verdict::Holds);
        assert!(r.wings.is_empty());
        assert!(r.notes.iter().any(|n| n.contains("vacuously")));
    }

    #[test]
    fn graph_edge_pair_fails_wf_with_unit_slope_but_holds_w() {
        let scene = build(KURDYKA);
        let params = CheckParams::default();
        let base = v(&[1.0, 0.0]);

        let wf = check_condition(ConditionId::Wf, &scene, 0, 1, &base, &params);
        assert_eq!(wf.verdict, Verdict::Fails);
        assert!((wf.slope + 1.0).abs() < 0.05, "slope {}", wf.slope);
        // along the declared level wing the quotient is exactly
        // 1/(t * x0^2); check every family sample
        for w in wf.wings.iter().filter(|w| w.label == "level-wing") {
            assert!(w.samples.len() >= 6);
            for s in &w.samples {
                let expected = 1.0 / s.t;
                assert!(
                    (s.g / expected - 1.0).abs() < 1e-6,
                    "g {} vs {} at t {}",
                    s.g,
                    expected,
                    s.t
                );
            }
        }

        let w = check_condition(ConditionId::W, &scene, 0, 1, &base, &params);
        assert_eq!(w.verdict, Verdict::Holds);
        assert!(w.bound <= 1e-12, "upper tangent is the whole plane, C = {}", w.bound);
    }

    #[test]
    fn constant_function_makes_wf_collapse_to_w_exactly() {
        let text = format!(
            "{FLAT_PAIR}
[function]
value = \"5\"
"
        );
        let scene = build(&text);
        let params = CheckParams::default();
        let base = v(&[0.0, 0.3, 0.0]);
        let rw = check_condition(ConditionId::W, &scene, 0, 1, &base, &params);
        let rwf = check_condition(ConditionId::Wf, &scene, 0, 1, &base, &params);
        assert_eq!(rw.verdict, rwf.verdict);
        assert_eq!(rw.wings.len(), rwf.wings.len());
        for (a, b) in rw.wings.iter().zip(&rwf.wings) {
            assert_eq!(a.samples.len(), b.samples.len());
            for (sa, sb) in a.samples.iter().zip(&b.samples) {
                assert_eq!(sa.g.to_bits(), sb.g.to_bits(), "gaps must agree bit for bit");
            }
        }
        assert_eq!(rw.bound.to_bits(), rwf.bound.to_bits());
    }

    #[test]
    fn wings_are_deterministic_and_condition_independent() {
        let scene = build(UMBRELLA);
        let params = CheckParams::default();
        let base = v(&[0.0, 0.0, 0.0]);
        let w1 = generate_wings(&scene, 1, 0, &base, &params);
        let w2 = generate_wings(&scene, 1, 0, &base, &params);
        assert_eq!(w1.len(), w2.len());
        for (a, b) in w1.iter().zip(&w2) {
            assert_eq!(a.points.len(), b.points.len());
            for ((ta, pa), (tb, pb)) in a.points.iter().zip(&b.points) {
                assert_eq!(ta, tb);
                assert_eq!(pa.x, pb.x);
            }
        }
    }

    #[test]
    fn scan_isolates_the_bad_base() {
        let scene = build(UMBRELLA);
        let params = CheckParams::default();
        let bases: Vec<DVector<f64>> =
            scene.base_points.iter().map(|(_, p)| p.clone()).collect();
        let reports = scan_bad_locus(ConditionId::B, &scene, 1, 0, &bases, &params);
        let failing: Vec<&ConditionReport> =
            reports.iter().filter(|r| r.verdict == Verdict::Fails).collect();
        assert_eq!(failing.len(), 1);
        assert!(failing[0].base.norm() < 1e-12, "only the origin fails");
    }

    #[test]
    fn oscillating_graph_fails_b_through_the_declared_family_only() {
        // graph of x*sin(1/x): at the flat points x = 1/(pi k) the secant
        // to the origin is horizontal while the tangent has slope -+pi k,
        // so the secant gap tends to 1; the family lands exactly on those
        // points, which no geometric distance grid can do
        let x_of_t = "1/(3.141592653589793*floor(1/t))";
        let text = format!(
            r#"
ambient_dim = 2

[[strata]]
name = "origin"
dim = 0
equations = ["x", "y"]

[[strata]]
name = "wave"
dim = 1
equations = ["y - x*sin(1/x)"]
inequalities = ["x"]

[[frontier]]
lower = "origin"
upper = "wave"

[[wing_families]]
name = "flat-points"
curve = ["{x_of_t}", "({x_of_t}) * sin(1/({x_of_t}))"]
grid = {{ t0 = 0.3, ratio = 0.6, count = 10 }}
"#
        );
        let scene = build(&text);
        let params = CheckParams::default();
        let base = v(&[0.0, 0.0]);

        let b = check_condition(ConditionId::B, &scene, 0, 1, &base, &params);
        assert_eq!(b.verdict, Verdict::Fails);
        let witness = b.witness.unwrap();
        assert!(witness.g >= 0.9, "witness gap {}", witness.g);
        let fam = b.wings.iter().find(|w| w.label == "flat-points").unwrap();
        assert_eq!(fam.verdict, Verdict::Fails);
        assert!(fam.samples.len() >= 8);

        // the zero tangent of a point stratum is inside everything, so w
        // holds here: this pair separates the two conditions
        let w = check_condition(ConditionId::W, &scene, 0, 1, &base, &params);
        assert_eq!(w.verdict, Verdict::Holds);
        assert!(w.bound <= 1e-15);
    }
}
