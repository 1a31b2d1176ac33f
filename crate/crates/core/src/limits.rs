//! Approach wings and decay-rate classification.
//!
//! A *wing* is a discrete path on an upper stratum converging to a base
//! point of a lower stratum, sampled along a geometric grid of approach
//! parameters. Regularity checks measure some gap quantity g at each wing
//! point and ask how g behaves as the parameter goes to zero;
//! [`classify_limit`] answers that question from the samples alone by
//! fitting a power law on the tail.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::numeric::{robust_norm, NewtonOpts};
use crate::scene::{GridSpec, WingFamily};
use crate::strata::{
    solve_at_distance, solve_at_distance_parametric, solve_at_distance_parametric_near, Geometry,
    Stratum, StratumPoint,
};
use crate::subspace::DEFAULT_RANK_TOL;

/// Approach parameters t0 * ratio^i, largest first.
pub fn grid_values(grid: &GridSpec) -> Vec<f64> {
    (0..grid.count).map(|i| grid.t0 * grid.ratio.powi(i as i32)).collect()
}

/// A discrete approach path on a stratum, one point per grid value that
/// could be realized.
#[derive(Clone, Debug)]
pub struct Wing {
    pub label: String,
    /// Family constant u for declared families, None for distance wings.
    pub param_u: Option<f64>,
    /// (approach parameter, point), ordered by decreasing parameter.
    pub points: Vec<(f64, StratumPoint)>,
}

/// One measured point on a wing.
#[derive(Clone, Debug)]
pub struct WingSample {
    /// Approach parameter: sphere radius for distance wings, the declared
    /// parameter for family wings.
    pub t: f64,
    /// Euclidean distance from the base point.
    pub r: f64,
    /// The quantity whose decay is being classified.
    pub g: f64,
    pub x: DVector<f64>,
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let norm = v.norm();
        if norm > 1e-3 && norm <= 1.0 {
            return v / norm;
        }
    }
}

/// Guard against solutions where the variety is thinner than its Jacobian
/// kernel suggests. Near a degenerate collapse (a sheet pinching onto a
/// line) the equations vanish to within tolerance on a tube much wider than
/// the true stratum, and the sphere solver happily stops inside that tube.
/// A genuine stratum point can be left along any tangent direction and
/// projected back with only a second-order correction; a tube point snaps
/// back by the full step.
fn locally_thick(stratum: &Stratum, p: &StratumPoint, t: f64) -> bool {
    if stratum.equations().is_empty() {
        return true;
    }
    let Some(tan) = stratum.tangent_at(p, DEFAULT_RANK_TOL) else {
        return false;
    };
    let delta = 1e-3 * t;
    tan.basis_rows().iter().all(|v| {
        let q = &p.x + v * delta;
        stratum
            .project(&q)
            .map(|pq| robust_norm(&(&pq.x - &q)) <= 0.25 * delta)
            .unwrap_or(false)
    })
}

/// Build a wing by intersecting the stratum with spheres of radius t around
/// `base`. Points continue the branch found at the previous radius; a wing
/// is reported only if more than half of the grid could be realized.
pub fn distance_wing(
    stratum: &Stratum,
    base: &DVector<f64>,
    grid: &GridSpec,
    rng: &mut ChaCha8Rng,
) -> Option<Wing> {
    let ts = grid_values(grid);
    let mut points: Vec<(f64, StratumPoint)> = Vec::new();
    let mut misses = 0usize;
    match &stratum.geometry {
        Geometry::Implicit { .. } => {
            let opts = NewtonOpts::default();
            let mut prev: Option<(f64, DVector<f64>)> = None;
            for &t in &ts {
                let mut starts: Vec<DVector<f64>> = Vec::new();
                if let Some((pt, px)) = &prev {
                    starts.push(base + (px - base) * (t / pt));
                }
                let tries = if prev.is_some() { 3 } else { 12 };
                for _ in 0..tries {
                    starts.push(base + random_unit(rng, stratum.ambient) * t);
                }
                let found = starts.iter().find_map(|s| {
                    solve_at_distance(stratum, base, t, s, &opts)
                        .filter(|p| locally_thick(stratum, p, t))
                });
                match found {
                    Some(p) => {
                        prev = Some((t, p.x.clone()));
                        points.push((t, p));
                    }
                    None => misses += 1,
                }
            }
        }
        Geometry::Parametric { .. } => {
            let mut prev_u: Option<f64> = None;
            for &t in &ts {
                let sol = match prev_u {
                    Some(u0) => solve_at_distance_parametric_near(stratum, base, t, u0),
                    None => solve_at_distance_parametric(stratum, base, t, rng),
                };
                match sol {
                    Some(p) => {
                        prev_u = p.param.as_ref().map(|u| u[0]);
                        points.push((t, p));
                    }
                    None => misses += 1,
                }
            }
        }
    }
    if misses * 2 > ts.len() {
        return None;
    }
    Some(Wing { label: "distance".into(), param_u: None, points })
}

/// Build a wing from a declared approach-curve family. The family constant
/// u is drawn once per wing. Each curve point must genuinely lie on the
/// stratum: equation residuals within `membership_tol` and inequalities
/// strictly positive, so curve points that collapse into the excluded set
/// (e.g. by underflow) are dropped rather than silently measured.
pub fn family_wing(
    family: &WingFamily,
    stratum: &Stratum,
    base: &DVector<f64>,
    grid: &GridSpec,
    membership_tol: f64,
    rng: &mut ChaCha8Rng,
) -> Option<Wing> {
    let grid = family.grid.unwrap_or(*grid);
    let ts = grid_values(&grid);
    let (lo, hi) = family.param_range;
    let u = if hi > lo { rng.gen_range(lo..hi) } else { lo };
    let mut points: Vec<(f64, StratumPoint)> = Vec::new();
    let mut misses = 0usize;
    for &t in &ts {
        let Some(x) = family.at(t, u, base) else {
            misses += 1;
            continue;
        };
        if robust_norm(&(&x - base)) == 0.0 {
            misses += 1;
            continue;
        }
        let accepted = match &stratum.geometry {
            Geometry::Implicit { .. } => {
                let on_eqs = stratum
                    .eval_equations(&x)
                    .map(|v| v.iter().all(|e| e.abs() <= membership_tol))
                    .unwrap_or(false);
                if on_eqs && stratum.satisfies_inequalities(&x) {
                    Some(StratumPoint { x: x.clone(), param: None })
                } else {
                    None
                }
            }
            Geometry::Parametric { .. } => stratum
                .project(&x)
                .filter(|p| (&p.x - &x).norm() <= membership_tol),
        };
        match accepted {
            Some(p) => points.push((t, p)),
            None => misses += 1,
        }
    }
    if misses * 2 > ts.len() {
        return None;
    }
    Some(Wing { label: family.name.clone(), param_u: Some(u), points })
}

/// How a sampled quantity behaves as the approach parameter goes to zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LimitClass {
    ConvergesToZero,
    /// Stays bounded away from both zero and infinity.
    Bounded,
    Diverges,
    /// Too few samples or no clean power law in the tail.
    Inconclusive,
}

#[derive(Clone, Debug)]
pub struct LimitVerdict {
    pub class: LimitClass,
    /// Fitted exponent s in g ~ C * t^s over the tail (NaN when no fit).
    pub slope: f64,
    /// RMS residual of the log-log fit in log units (NaN when no fit).
    pub residual: f64,
    /// Largest observed g.
    pub bound: f64,
    /// Sup of g over the last three samples.
    pub tail: f64,
}

/// Sup of g below which the tail counts as numerically zero. Sits well
/// above the gap noise of exactly-contained tangent pairs divided by the
/// smallest approach radii (about 1e-9), and well below any honest signal:
/// a failing bound must reach the gap tolerance and a diverging quotient is
/// already large at small radii.
pub const TAIL_ZERO: f64 = 1e-7;
/// Log-log fit residual above which no power law is claimed.
pub const MAX_FIT_RESIDUAL: f64 = 0.5;

fn inconclusive(bound: f64, tail: f64) -> LimitVerdict {
    LimitVerdict { class: LimitClass::Inconclusive, slope: f64::NAN, residual: f64::NAN, bound, tail }
}

/// Least-squares line through (log t, log g) on the later half of the
/// samples, where asymptotics dominate. Zero g cannot enter a log fit and is
/// skipped. Returns (slope, rms residual in log units).
fn fit_loglog(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    let half: Vec<(f64, f64)> = pts[pts.len() / 2..]
        .iter()
        .filter(|p| p.1 > 0.0)
        .map(|p| (p.0.ln(), p.1.ln()))
        .collect();
    if half.len() < 3 {
        return None;
    }
    let n = half.len() as f64;
    let mx = half.iter().map(|p| p.0).sum::<f64>() / n;
    let my = half.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx = half.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>();
    let sxy = half.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let residual = (half
        .iter()
        .map(|p| {
            let e = p.1 - (my + slope * (p.0 - mx));
            e * e
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Some((slope, residual))
}

/// Classify the limit of g along a wing from its samples.
///
/// Decision order: samples with non-finite g are dropped; fewer than four
/// left is Inconclusive. A tail envelope below [`TAIL_ZERO`] decides
/// ConvergesToZero outright (the fitted exponent is still reported when the
/// data follows a clean power law, so deep decays keep a measured rate).
/// Otherwise the log-log fit gives a slope: residual above
/// [`MAX_FIT_RESIDUAL`] means no power law (Inconclusive), slope at least
/// `slope_tol` means decay to zero, slope at most `-slope_tol` means
/// divergence, anything in between is Bounded.
pub fn classify_limit(samples: &[WingSample], slope_tol: f64) -> LimitVerdict {
    let mut pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.t > 0.0 && s.g.is_finite() && s.g >= 0.0)
        .map(|s| (s.t, s.g))
        .collect();
    pts.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let bound = pts.iter().map(|p| p.1).fold(f64::NAN, f64::max);
    let tail = pts.iter().rev().take(3).map(|p| p.1).fold(f64::NAN, f64::max);
    if pts.len() < 4 {
        return inconclusive(bound, tail);
    }
    if tail < TAIL_ZERO {
        let (slope, residual) = match fit_loglog(&pts) {
            Some((s, r)) if r <= MAX_FIT_RESIDUAL => (s, r),
            _ => (f64::NAN, f64::NAN),
        };
        return LimitVerdict { class: LimitClass::ConvergesToZero, slope, residual, bound, tail };
    }
    let Some((slope, residual)) = fit_loglog(&pts) else {
        return inconclusive(bound, tail);
    };
    let class = if residual > MAX_FIT_RESIDUAL {
        LimitClass::Inconclusive
    } else if slope >= slope_tol {
        LimitClass::ConvergesToZero
    } else if slope <= -slope_tol {
        LimitClass::Diverges
    } else {
        LimitClass::Bounded
    };
    LimitVerdict { class, slope, residual, bound, tail }
}

/// Render labelled wing samples as CSV. Log columns (natural log, the same
/// scale the slope fit uses) are left empty where the value has no log.
/// Numbers print as shortest round-trip digits; gap values can be subnormal
/// and must not expand to hundreds of decimal places.
pub fn samples_to_csv(wings: &[(String, Vec<WingSample>)]) -> String {
    let lg = |v: f64| {
        if v > 0.0 && v.is_finite() {
            format!("{:?}", v.ln())
        } else {
            String::new()
        }
    };
    let mut out = String::from("wing,t,r,g,log_t,log_g\n");
    for (label, samples) in wings {
        for s in samples {
            out.push_str(&format!(
                "{},{:?},{:?},{:?},{},{}\n",
                label,
                s.t,
                s.r,
                s.g,
                lg(s.t),
                lg(s.g)
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, VarTable};
    use rand::SeedableRng;

    fn synthetic(g_of_t: impl Fn(f64) -> f64) -> Vec<WingSample> {
        grid_values(&GridSpec::default())
            .into_iter()
            .map(|t| WingSample { t, r: t, g: g_of_t(t), x: DVector::zeros(1) })
            .collect()
    }

    #[test]
    fn grid_is_geometric_and_descending() {
        let g = GridSpec { t0: 0.5, ratio: 0.25, count: 5 };
        let vs = grid_values(&g);
        assert_eq!(vs.len(), 5);
        assert!((vs[0] - 0.5).abs() < 1e-15);
        for w in vs.windows(2) {
            assert!((w[1] / w[0] - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn classifies_power_laws() {
        let zero = classify_limit(&synthetic(|t| 3.0 * t), 0.1);
        assert_eq!(zero.class, LimitClass::ConvergesToZero);
        assert!((zero.slope - 1.0).abs() < 1e-9);

        let slow = classify_limit(&synthetic(|t| 5.0 * t.powf(0.3)), 0.1);
        assert_eq!(slow.class, LimitClass::ConvergesToZero);
        assert!((slow.slope - 0.3).abs() < 1e-9);

        let div = classify_limit(&synthetic(|t| 0.01 / t), 0.1);
        assert_eq!(div.class, LimitClass::Diverges);
        assert!((div.slope + 1.0).abs() < 1e-9);

        let flat = classify_limit(&synthetic(|_| 0.7), 0.1);
        assert_eq!(flat.class, LimitClass::Bounded);
        assert!((flat.bound - 0.7).abs() < 1e-15);
        assert!(flat.slope.abs() < 1e-9);

        let nearly_flat = classify_limit(&synthetic(|t| t.powf(0.05)), 0.1);
        assert_eq!(nearly_flat.class, LimitClass::Bounded);
    }

    #[test]
    fn oscillation_with_no_power_law_is_inconclusive() {
        let mut flip = false;
        let samples: Vec<WingSample> = synthetic(|_| 0.0)
            .into_iter()
            .map(|mut s| {
                flip = !flip;
                s.g = if flip { 1.0 } else { 1e-6 };
                s
            })
            .collect();
        let v = classify_limit(&samples, 0.1);
        assert_eq!(v.class, LimitClass::Inconclusive);
        assert!(v.residual > MAX_FIT_RESIDUAL);
    }

    #[test]
    fn tiny_tail_decides_zero_even_without_a_fit() {
        // exp(-1/t) underflows to exactly 0 for small t; a log fit would
        // break on those zeros but the tail envelope already decides
        let v = classify_limit(&synthetic(|t| (-1.0 / t).exp()), 0.1);
        assert_eq!(v.class, LimitClass::ConvergesToZero);
        assert!(v.tail < TAIL_ZERO);
    }

    #[test]
    fn too_few_points_is_inconclusive() {
        let samples: Vec<WingSample> = synthetic(|t| t).into_iter().take(3).collect();
        assert_eq!(classify_limit(&samples, 0.1).class, LimitClass::Inconclusive);
        assert_eq!(classify_limit(&[], 0.1).class, LimitClass::Inconclusive);
    }

    #[test]
    fn distance_wing_matches_circle_geometry() {
        // points of x^2+y^2=1 at distance t from (1,0) sit at
        // x = 1 - t^2/2, |y| = t*sqrt(1 - t^2/4)
        let circle = Stratum::implicit(
            "circle",
            2,
            1,
            vec![parse("x^2 + y^2 - 1", &VarTable::ambient(2)).unwrap()],
            vec![],
        );
        let base = DVector::from_vec(vec![1.0, 0.0]);
        let grid = GridSpec { t0: 0.1, ratio: 0.6, count: 12 };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let wing = distance_wing(&circle, &base, &grid, &mut rng).unwrap();
        assert_eq!(wing.points.len(), 12);
        let branch = wing.points[0].1.x[1].signum();
        for (t, p) in &wing.points {
            assert!(((&p.x - &base).norm() - t).abs() < 1e-9);
            assert!((p.x[0] - (1.0 - t * t / 2.0)).abs() < 1e-9);
            assert!((p.x[1].abs() - t * (1.0 - t * t / 4.0).sqrt()).abs() < 1e-9);
            // continuation keeps one branch
            assert_eq!(p.x[1].signum(), branch);
        }
    }

    #[test]
    fn distance_wing_respects_inequalities() {
        let upper = Stratum::implicit(
            "upper",
            2,
            1,
            vec![parse("x^2 + y^2 - 1", &VarTable::ambient(2)).unwrap()],
            vec![parse("y", &VarTable::ambient(2)).unwrap()],
        );
        let base = DVector::from_vec(vec![1.0, 0.0]);
        let grid = GridSpec { t0: 0.1, ratio: 0.6, count: 10 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let wing = distance_wing(&upper, &base, &grid, &mut rng).unwrap();
        assert!(wing.points.len() >= 8);
        for (_, p) in &wing.points {
            assert!(p.x[1] > 0.0);
        }
    }

    #[test]
    fn parametric_distance_wing_follows_one_branch() {
        let circle = Stratum::parametric(
            "circle",
            2,
            vec![
                parse("cos(x)", &VarTable::ambient(1)).unwrap(),
                parse("sin(x)", &VarTable::ambient(1)).unwrap(),
            ],
            vec![(-3.2, 3.2)],
        );
        let base = DVector::from_vec(vec![1.0, 0.0]);
        let grid = GridSpec { t0: 0.1, ratio: 0.6, count: 10 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let wing = distance_wing(&circle, &base, &grid, &mut rng).unwrap();
        assert_eq!(wing.points.len(), 10);
        let branch = wing.points[0].1.param.as_ref().unwrap()[0].signum();
        for (t, p) in &wing.points {
            assert!(((&p.x - &base).norm() - t).abs() < 1e-7);
            assert_eq!(p.param.as_ref().unwrap()[0].signum(), branch);
        }
    }

    #[test]
    fn family_wing_rejects_points_that_left_the_stratum() {
        // curve (b1, exp(-1/(t*b1))) approaches (b1, 0) inside y > 0; for
        // b1 = 0.5 the last grid value t = 1e-3 underflows to y = 0 exactly
        // and must be dropped, for b1 = 2 it stays representable
        let vars = VarTable::from_names(&["t", "u", "b1", "b2"]);
        let family = WingFamily {
            name: "level".into(),
            curve: vec![parse("b1", &vars).unwrap(), parse("exp(-1/(t*b1))", &vars).unwrap()],
            base: None,
            param_range: (1.0, 1.0),
            grid: Some(GridSpec { t0: 0.1, ratio: 0.1, count: 3 }),
        };
        let upper = Stratum::implicit(
            "upper",
            2,
            2,
            vec![],
            vec![parse("y", &VarTable::ambient(2)).unwrap()],
        );
        let grid = GridSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);

        let near = DVector::from_vec(vec![0.5, 0.0]);
        let wing = family_wing(&family, &upper, &near, &grid, 1e-9, &mut rng).unwrap();
        assert_eq!(wing.points.len(), 2);
        assert!((-1.0f64 / (1e-3 * 0.5)).exp() == 0.0);

        let far = DVector::from_vec(vec![2.0, 0.0]);
        let wing = family_wing(&family, &upper, &far, &grid, 1e-9, &mut rng).unwrap();
        assert_eq!(wing.points.len(), 3);
        // grid rounding puts t one ulp above 1e-3, hence relative tolerance
        let smallest = &wing.points[2].1.x;
        assert!(((smallest[1] - (-500.0f64).exp()) / (-500.0f64).exp()).abs() < 1e-12);
        assert!(smallest[1] > 0.0);
    }

    #[test]
    fn csv_is_deterministic_text() {
        let rows = vec![(
            "a".to_string(),
            vec![
                WingSample { t: 0.5, r: 0.5, g: 1.5, x: DVector::zeros(1) },
                WingSample { t: 0.25, r: 0.25, g: 0.0, x: DVector::zeros(1) },
            ],
        )];
        assert_eq!(
            samples_to_csv(&rows),
            "wing,t,r,g,log_t,log_g\n\
             a,0.5,0.5,1.5,-0.6931471805599453,0.4054651081081644\n\
             a,0.25,0.25,0.0,-1.3862943611198906,\n"
        );
    }
}
