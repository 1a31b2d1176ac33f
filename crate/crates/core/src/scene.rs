//! Scene files: the structured-text input format.
//!
//! A scene declares an ambient dimension, named strata (implicit or
//! parametric), frontier pairs, and optionally a sampling box, a function
//! with declared restriction ranks, approach-curve families, preferred base
//! points and a variety polynomial for the refinement engine. All
//! expressions are kept as source strings, so a scene round-trips through
//! TOML byte-losslessly; [`Scene::build`] parses everything into geometry.
//!
//! ```toml
//! ambient_dim = 3
//!
//! [[strata]]
//! name = "sheet"
//! dim = 2
//! equations = ["x^2 - z*y^2"]
//! inequalities = ["x^2 + y^2"]
//!
//! [[strata]]
//! name = "axis"
//! dim = 1
//! equations = ["x", "y"]
//!
//! [[frontier]]
//! lower = "axis"
//! upper = "sheet"
//! ```
//!
//! Approach-curve families give closed-form wings in the variables `t`
//! (approach parameter), `u` (a per-wing constant drawn from `param_range`)
//! and `b1..bn` (the base point), e.g. `curve = ["u*t^2", "t", "u^2*t^2"]`.

use crate::expr::{parse, parse_polynomial, Expr, Polynomial, VarTable};
use crate::numeric::robust_norm;
use crate::strata::{Stratification, Stratum};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub ambient_dim: usize,
    /// Axis-aligned sampling box; defaults to [-1, 1]^n.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_box: Option<Vec<(f64, f64)>>,
    /// Square-free input polynomial for the refinement engine.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variety: Option<String>,
    pub strata: Vec<SceneStratum>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frontier: Vec<FrontierPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<SceneFunction>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wing_families: Vec<WingFamilySpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub base_points: Vec<BasePointSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneStratum {
    pub name: String,
    /// Required for implicit strata; parametric strata take the domain dim.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub equations: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inequalities: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub maps: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub domain: Vec<(f64, f64)>,
    #[serde(default = "default_true")]
    pub connected: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontierPair {
    pub lower: String,
    pub upper: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFunction {
    pub value: String,
    /// Optional reparametrization with the same level sets (a strictly
    /// monotone function of `value` on the region of interest). Level
    /// tangents only depend on level sets, so when the raw gradient
    /// under- or overflows this form is differentiated instead; where both
    /// gradients are representable they are cross-checked for parallelism.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_form: Option<String>,
    /// Declared rank of the restriction to a stratum. Rank 0 marks the
    /// restriction as constant, which skips gradient evaluation there
    /// (needed where the ambient gradient is singular on the stratum).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub ranks: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WingFamilySpec {
    pub name: String,
    /// Ambient coordinates as expressions in t, u, b1..bn.
    pub curve: Vec<String>,
    /// Restrict the family to one base point (exact match within 1e-9).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<Vec<f64>>,
    /// Range the per-wing constant u is drawn from; defaults to [1, 1].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_range: Option<(f64, f64)>,
    /// Geometric grid override for this family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub t0: f64,
    pub ratio: f64,
    pub count: usize,
}

impl Default for GridSpec {
    /// The standard approach grid: 24 radii from 0.1 shrinking by 0.6.
    fn default() -> GridSpec {
        GridSpec { t0: 0.1, ratio: 0.6, count: 24 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasePointSpec {
    pub stratum: String,
    pub point: Vec<f64>,
}

#[derive(Clone, Debug, thiserror::Error)]
pub enum SceneError {
    #[error("TOML: {0}")]
    Toml(String),
    #[error("in `{context}`: {message}")]
    Invalid { context: String, message: String },
}

fn invalid(context: impl Into<String>, message: impl Into<String>) -> SceneError {
    SceneError::Invalid { context: context.into(), message: message.into() }
}

/// The function under test, with its gradient and declared restriction
/// ranks (by stratum index).
#[derive(Clone, Debug)]
pub struct FunctionOnSpace {
    pub expr: Expr,
    pub grad: Vec<Expr>,
    /// Gradient of the declared level-equivalent form, if any.
    pub level_grad: Option<Vec<Expr>>,
    pub ranks: BTreeMap<usize, usize>,
    pub source: String,
}

/// Direction of steepest ascent up to scale, for level tangent
/// computations.
#[derive(Clone, Debug)]
pub enum LevelGradient {
    /// The function is locally constant here; the level tangent equals the
    /// stratum tangent.
    Zero,
    /// Nonzero gradient direction, rescaled so its largest entry is 1.
    Dir(DVector<f64>),
}

impl FunctionOnSpace {
    fn eval_grad(exprs: &[Expr], x: &[f64]) -> Option<DVector<f64>> {
        let mut out = DVector::zeros(exprs.len());
        for (i, g) in exprs.iter().enumerate() {
            let v = g.eval(x).ok()?;
            if !v.is_finite() {
                return None;
            }
            out[i] = v;
        }
        Some(out)
    }

    /// The gradient direction used for level tangents at `x`. Prefers the
    /// declared level form where it evaluates; when the raw gradient is
    /// also usable the two must be parallel (within 1e-6 after sign
    /// alignment), otherwise the declaration is inconsistent at this point
    /// and no direction is returned.
    pub fn level_gradient(&self, x: &[f64]) -> Option<LevelGradient> {
        let raw = Self::eval_grad(&self.grad, x);
        let level = self.level_grad.as_ref().and_then(|g| Self::eval_grad(g, x));
        let normalize = |w: DVector<f64>| -> LevelGradient {
            let amax = w.amax();
            if amax == 0.0 {
                LevelGradient::Zero
            } else {
                LevelGradient::Dir(w.unscale(amax))
            }
        };
        match (raw, level) {
            (Some(r), Some(l)) => {
                let (rn, ln) = (robust_norm(&r), robust_norm(&l));
                if rn > 0.0 && ln > 0.0 {
                    let u = r.unscale(r.amax());
                    let v = l.unscale(l.amax());
                    let (u, v) = (u.clone().unscale(u.norm()), v.clone().unscale(v.norm()));
                    let gap = (&u - &v).norm().min((&u + &v).norm());
                    if gap > 1e-6 {
                        return None;
                    }
                }
                Some(normalize(l))
            }
            (None, Some(l)) => Some(normalize(l)),
            (Some(r), None) => Some(normalize(r)),
            (None, None) => None,
        }
    }
}

/// A parsed approach-curve family.
#[derive(Clone, Debug)]
pub struct WingFamily {
    pub name: String,
    /// One expression per ambient coordinate over (t, u, b1..bn).
    pub curve: Vec<Expr>,
    pub base: Option<DVector<f64>>,
    pub param_range: (f64, f64),
    pub grid: Option<GridSpec>,
}

impl WingFamily {
    /// Evaluate the curve at approach parameter t with family constant u
    /// relative to a base point.
    pub fn at(&self, t: f64, u: f64, base: &DVector<f64>) -> Option<DVector<f64>> {
        let mut slots = Vec::with_capacity(2 + base.len());
        slots.push(t);
        slots.push(u);
        slots.extend(base.iter().copied());
        let mut out = DVector::zeros(self.curve.len());
        for (i, c) in self.curve.iter().enumerate() {
            let v = c.eval(&slots).ok()?;
            if !v.is_finite() {
                return None;
            }
            out[i] = v;
        }
        Some(out)
    }

    /// Whether the family applies at this base point.
    pub fn applies_at(&self, base: &DVector<f64>) -> bool {
        match &self.base {
            None => true,
            Some(b) => b.len() == base.len() && (b - base).norm() <= 1e-9,
        }
    }
}

/// A scene parsed into geometry, ready for condition checks.
#[derive(Clone, Debug)]
pub struct BuiltScene {
    pub stratification: Stratification,
    pub sample_box: Vec<(f64, f64)>,
    pub function: Option<FunctionOnSpace>,
    pub wing_families: Vec<WingFamily>,
    /// (stratum index, point), each verified to lie on its stratum.
    pub base_points: Vec<(usize, DVector<f64>)>,
    pub variety: Option<Polynomial>,
}

impl Scene {
    pub fn from_toml_str(text: &str) -> Result<Scene, SceneError> {
        toml::from_str(text).map_err(|e| SceneError::Toml(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String, SceneError> {
        toml::to_string_pretty(self).map_err(|e| SceneError::Toml(e.to_string()))
    }

    pub fn build(&self) -> Result<BuiltScene, SceneError> {
        let n = self.ambient_dim;
        if n == 0 || n > 4 {
            return Err(invalid("ambient_dim", "must be between 1 and 4"));
        }
        let vars = VarTable::ambient(n);
        let parse_in = |src: &str, ctx: &str| -> Result<Expr, SceneError> {
            parse(src, &vars).map_err(|e| invalid(ctx, format!("`{src}`: {e}")))
        };

        let sample_box = match &self.sample_box {
            None => vec![(-1.0, 1.0); n],
            Some(b) => {
                if b.len() != n || b.iter().any(|(lo, hi)| !(lo < hi)) {
                    return Err(invalid("sample_box", "needs one (lo, hi) interval per coordinate"));
                }
                b.clone()
            }
        };

        let mut strata = Vec::new();
        for s in &self.strata {
            if self.strata.iter().filter(|o| o.name == s.name).count() > 1 {
                return Err(invalid(&s.name, "duplicate stratum name"));
            }
            let is_parametric = !s.maps.is_empty();
            if is_parametric {
                if !s.equations.is_empty() || !s.inequalities.is_empty() {
                    return Err(invalid(&s.name, "parametric strata cannot carry equations or inequalities"));
                }
                if s.maps.len() != n {
                    return Err(invalid(&s.name, "needs one map per ambient coordinate"));
                }
                let k = s.domain.len();
                if k == 0 || k >= n {
                    return Err(invalid(&s.name, "domain dimension must be positive and below ambient"));
                }
                if s.domain.iter().any(|(lo, hi)| !(lo < hi)) {
                    return Err(invalid(&s.name, "domain intervals must be ordered"));
                }
                if let Some(d) = s.dim {
                    if d != k {
                        return Err(invalid(&s.name, "declared dim contradicts the domain dimension"));
                    }
                }
                let param_vars = VarTable::ambient(k);
                let maps = s
                    .maps
                    .iter()
                    .map(|m| parse(m, &param_vars).map_err(|e| invalid(&s.name, format!("`{m}`: {e}"))))
                    .collect::<Result<Vec<_>, _>>()?;
                strata.push(Stratum::parametric(s.name.clone(), n, maps, s.domain.clone()));
            } else {
                let dim = s.dim.ok_or_else(|| invalid(&s.name, "implicit strata need an explicit dim"))?;
                if dim > n {
                    return Err(invalid(&s.name, "dim exceeds ambient dimension"));
                }
                let equations = s
                    .equations
                    .iter()
                    .map(|e| parse_in(e, &s.name))
                    .collect::<Result<Vec<_>, _>>()?;
                let inequalities = s
                    .inequalities
                    .iter()
                    .map(|e| parse_in(e, &s.name))
                    .collect::<Result<Vec<_>, _>>()?;
                let mut st = Stratum::implicit(s.name.clone(), n, dim, equations, inequalities);
                st.connected = s.connected;
                strata.push(st);
            }
        }

        let names: Vec<String> = strata.iter().map(|s| s.name.clone()).collect();
        let index_of = move |name: &str, ctx: &str| -> Result<usize, SceneError> {
            names
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| invalid(ctx, format!("unknown stratum `{name}`")))
        };

        let mut frontier = Vec::new();
        for f in &self.frontier {
            let lower = index_of(&f.lower, "frontier")?;
            let upper = index_of(&f.upper, "frontier")?;
            if lower == upper {
                return Err(invalid("frontier", "a stratum cannot border itself"));
            }
            frontier.push((lower, upper));
        }

        let function = match &self.function {
            None => None,
            Some(sf) => {
                let expr = parse_in(&sf.value, "function")?;
                let grad = expr.gradient(n);
                let level_grad = match &sf.level_form {
                    None => None,
                    Some(lf) => Some(parse_in(lf, "function.level_form")?.gradient(n)),
                };
                let mut ranks = BTreeMap::new();
                for (name, r) in &sf.ranks {
                    ranks.insert(index_of(name, "function.ranks")?, *r);
                }
                Some(FunctionOnSpace { expr, grad, level_grad, ranks, source: sf.value.clone() })
            }
        };

        let family_vars: VarTable = {
            let mut names: Vec<String> = vec!["t".into(), "u".into()];
            for i in 0..n {
                names.push(format!("b{}", i + 1));
            }
            let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
            VarTable::from_names(&refs)
        };
        let mut wing_families = Vec::new();
        for w in &self.wing_families {
            if w.curve.len() != n {
                return Err(invalid(&w.name, "needs one curve component per ambient coordinate"));
            }
            let curve = w
                .curve
                .iter()
                .map(|c| parse(c, &family_vars).map_err(|e| invalid(&w.name, format!("`{c}`: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            let base = match &w.base {
                None => None,
                Some(b) => {
                    if b.len() != n {
                        return Err(invalid(&w.name, "base has the wrong dimension"));
                    }
                    Some(DVector::from_vec(b.clone()))
                }
            };
            if let Some(g) = &w.grid {
                if !(g.t0 > 0.0) || !(g.ratio > 0.0 && g.ratio < 1.0) || g.count < 4 {
                    return Err(invalid(&w.name, "grid needs t0 > 0, 0 < ratio < 1, count >= 4"));
                }
            }
            let param_range = w.param_range.unwrap_or((1.0, 1.0));
            if param_range.0 > param_range.1 {
                return Err(invalid(&w.name, "param_range must be ordered"));
            }
            wing_families.push(WingFamily {
                name: w.name.clone(),
                curve,
                base,
                param_range,
                grid: w.grid,
            });
        }

        let stratification = Stratification { ambient: n, strata, frontier };

        let mut base_points = Vec::new();
        for bp in &self.base_points {
            let idx = index_of(&bp.stratum, "base_points")?;
            if bp.point.len() != n {
                return Err(invalid("base_points", "point has the wrong dimension"));
            }
            let x = DVector::from_vec(bp.point.clone());
            if !stratification.strata[idx].contains(&x, 1e-9) {
                return Err(invalid(
                    "base_points",
                    format!("point {:?} does not lie on stratum `{}`", bp.point, bp.stratum),
                ));
            }
            base_points.push((idx, x));
        }

        let variety = match &self.variety {
            None => None,
            Some(src) => Some(
                parse_polynomial(src, &vars)
                    .map_err(|e| invalid("variety", format!("`{src}`: {e}")))?,
            ),
        };

        Ok(BuiltScene { stratification, sample_box, function, wing_families, base_points, variety })
    }
}
