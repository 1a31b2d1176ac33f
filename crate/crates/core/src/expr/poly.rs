//! Sparse multivariate polynomials with exact rational coefficients.
//!
//! Terms map exponent vectors to nonzero `BigRational`s; the zero
//! polynomial has no terms. Arithmetic, partial derivatives and gcd are
//! exact. The gcd uses the primitive pseudo-remainder sequence, recursing
//! on the number of variables; degrees here are small (the stratification
//! engine works in at most three variables), so coefficient growth is a
//! non-issue.

use super::{rational_to_f64, BinOp, Expr, UnOp, VarTable};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Polynomial {
    n: usize,
    terms: BTreeMap<Vec<u32>, BigRational>,
}

/// Expression -> polynomial conversion failure.
#[derive(Clone, Debug, thiserror::Error)]
#[error("not a polynomial: {0}")]
pub struct NotPolynomial(pub String);

impl Polynomial {
    pub fn zero(n: usize) -> Polynomial {
        Polynomial { n, terms: BTreeMap::new() }
    }

    pub fn constant(n: usize, c: BigRational) -> Polynomial {
        let mut p = Polynomial::zero(n);
        if !c.is_zero() {
            p.terms.insert(vec![0; n], c);
        }
        p
    }

    pub fn one(n: usize) -> Polynomial {
        Polynomial::constant(n, BigRational::one())
    }

    pub fn var(n: usize, i: usize) -> Polynomial {
        assert!(i < n);
        let mut exps = vec![0; n];
        exps[i] = 1;
        let mut p = Polynomial::zero(n);
        p.terms.insert(exps, BigRational::one());
        p
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|e| e.iter().all(|&k| k == 0))
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &BigRational)> {
        self.terms.iter()
    }

    fn insert(&mut self, exps: Vec<u32>, c: BigRational) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(exps) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                let sum = o.get() + &c;
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.n, other.n);
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.insert(e.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> Polynomial {
        let terms = self.terms.iter().map(|(e, c)| (e.clone(), -c)).collect();
        Polynomial { n: self.n, terms }
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.n, other.n);
        let mut out = Polynomial::zero(self.n);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                let exps: Vec<u32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.insert(exps, c1 * c2);
            }
        }
        out
    }

    pub fn scale(&self, c: &BigRational) -> Polynomial {
        if c.is_zero() {
            return Polynomial::zero(self.n);
        }
        let terms = self.terms.iter().map(|(e, k)| (e.clone(), k * c)).collect();
        Polynomial { n: self.n, terms }
    }

    pub fn pow(&self, k: u32) -> Polynomial {
        let mut out = Polynomial::one(self.n);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    pub fn partial(&self, var: usize) -> Polynomial {
        let mut out = Polynomial::zero(self.n);
        for (e, c) in &self.terms {
            if e[var] == 0 {
                continue;
            }
            let mut exps = e.clone();
            exps[var] -= 1;
            out.insert(exps, c * BigRational::from_integer(e[var].into()));
        }
        out
    }

    /// All partial derivatives, in variable order.
    pub fn gradient(&self) -> Vec<Polynomial> {
        (0..self.n).map(|i| self.partial(i)).collect()
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn degree_in(&self, var: usize) -> u32 {
        self.terms.keys().map(|e| e[var]).max().unwrap_or(0)
    }

    pub fn eval_f64(&self, point: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (e, c) in &self.terms {
            let mut term = rational_to_f64(c);
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    term *= point[i].powi(k as i32);
                }
            }
            acc += term;
        }
        acc
    }

    pub fn eval_rational(&self, point: &[BigRational]) -> BigRational {
        let mut acc = BigRational::zero();
        for (e, c) in &self.terms {
            let mut term = c.clone();
            for (i, &k) in e.iter().enumerate() {
                for _ in 0..k {
                    term *= &point[i];
                }
            }
            acc += term;
        }
        acc
    }

    /// Rebuild an expression tree (sum of monomials, exact constants).
    pub fn to_expr(&self) -> Expr {
        if self.is_zero() {
            return Expr::integer(0);
        }
        let mut acc: Option<Expr> = None;
        for (e, c) in &self.terms {
            let mut term = Expr::rational(c.clone());
            for (i, &k) in e.iter().enumerate() {
                let v = Expr::var(i);
                let factor = match k {
                    0 => continue,
                    1 => v,
                    _ => Expr::pow(v, Expr::integer(k as i64)),
                };
                term = Expr::mul(term, factor);
            }
            acc = Some(match acc {
                None => term,
                Some(prev) => Expr::add(prev, term),
            });
        }
        acc.expect("nonzero polynomial has terms")
    }

    /// Precompute f64 coefficients for hot evaluation loops.
    pub fn compile(&self) -> CompiledPoly {
        CompiledPoly {
            n: self.n,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), rational_to_f64(c))).collect(),
        }
    }

    /// Substitute x_i = sum_j a[i][j] y_j + b[i] (exact).
    pub fn compose_affine(&self, a: &[Vec<BigRational>], b: &[BigRational]) -> Polynomial {
        assert_eq!(a.len(), self.n);
        let m = if self.n == 0 { b.len() } else { a[0].len() };
        let images: Vec<Polynomial> = (0..self.n)
            .map(|i| {
                let mut img = Polynomial::constant(m, b[i].clone());
                for (j, coef) in a[i].iter().enumerate() {
                    img = img.add(&Polynomial::var(m, j).scale(coef));
                }
                img
            })
            .collect();
        let mut out = Polynomial::zero(m);
        for (e, c) in &self.terms {
            let mut term = Polynomial::constant(m, c.clone());
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    term = term.mul(&images[i].pow(k));
                }
            }
            out = out.add(&term);
        }
        out
    }

    /// Substitute a single variable by an exact rational constant,
    /// producing a polynomial in the remaining variables (same indexing,
    /// the substituted variable keeps exponent zero).
    pub fn substitute(&self, var: usize, value: &BigRational) -> Polynomial {
        let mut out = Polynomial::zero(self.n);
        for (e, c) in &self.terms {
            let mut coef = c.clone();
            for _ in 0..e[var] {
                coef *= value;
            }
            let mut exps = e.clone();
            exps[var] = 0;
            out.insert(exps, coef);
        }
        out
    }

    /// View as univariate in `var`: coefficient polynomials by degree,
    /// highest degree last. Coefficients keep the full variable set with
    /// exponent zero in `var`.
    fn univariate_in(&self, var: usize) -> BTreeMap<u32, Polynomial> {
        let mut out: BTreeMap<u32, Polynomial> = BTreeMap::new();
        for (e, c) in &self.terms {
            let d = e[var];
            let mut exps = e.clone();
            exps[var] = 0;
            out.entry(d).or_insert_with(|| Polynomial::zero(self.n)).insert(exps, c.clone());
        }
        out.retain(|_, p| !p.is_zero());
        out
    }

    fn leading_in(&self, var: usize) -> Polynomial {
        let d = self.degree_in(var);
        self.univariate_in(var).remove(&d).unwrap_or_else(|| Polynomial::zero(self.n))
    }

    /// Exact division; `None` when the division leaves a remainder.
    pub fn div_exact(&self, divisor: &Polynomial) -> Option<Polynomial> {
        assert_eq!(self.n, divisor.n);
        if divisor.is_zero() {
            return None;
        }
        let (de, dc) = divisor.terms.iter().next_back().unwrap();
        let mut rem = self.clone();
        let mut quot = Polynomial::zero(self.n);
        while !rem.is_zero() {
            let (re, rc) = rem.terms.iter().next_back().unwrap();
            let exps: Vec<i64> = re.iter().zip(de).map(|(a, b)| *a as i64 - *b as i64).collect();
            if exps.iter().any(|&k| k < 0) {
                return None;
            }
            let exps: Vec<u32> = exps.into_iter().map(|k| k as u32).collect();
            let coef = rc / dc;
            let mut mono = Polynomial::zero(self.n);
            mono.insert(exps.clone(), coef.clone());
            quot.insert(exps, coef);
            rem = rem.sub(&mono.mul(divisor));
        }
        Some(quot)
    }

    /// Pseudo-remainder of self by g with respect to `var`.
    fn pseudo_rem(&self, g: &Polynomial, var: usize) -> Polynomial {
        let dg = g.degree_in(var);
        let lg = g.leading_in(var);
        let mut r = self.clone();
        while !r.is_zero() && r.degree_in(var) >= dg {
            let dr = r.degree_in(var);
            let lr = r.leading_in(var);
            // r <- lg*r - lr*x^(dr-dg)*g kills the leading term
            let shift = Polynomial::var(self.n, var).pow(dr - dg);
            r = lg.mul(&r).sub(&lr.mul(&shift).mul(g));
        }
        r
    }

    /// Content with respect to `var`: gcd of the coefficient polynomials.
    fn content_in(&self, var: usize) -> Polynomial {
        let mut acc = Polynomial::zero(self.n);
        for (_, coef) in self.univariate_in(var) {
            acc = gcd(&acc, &coef);
            if acc.is_constant() && !acc.is_zero() {
                break;
            }
        }
        acc
    }

    /// Normalize to a canonical associate: divide by the leading rational
    /// coefficient (last term in lex order).
    fn normalize(&self) -> Polynomial {
        match self.terms.iter().next_back() {
            None => self.clone(),
            Some((_, c)) => {
                let inv = BigRational::one() / c;
                self.scale(&inv)
            }
        }
    }
}

/// Exact multivariate gcd over the rationals (primitive PRS), returned in
/// normalized form (leading coefficient one). gcd(0, 0) = 0.
pub fn gcd(a: &Polynomial, b: &Polynomial) -> Polynomial {
    assert_eq!(a.n_vars(), b.n_vars());
    if a.is_zero() {
        return b.normalize();
    }
    if b.is_zero() {
        return a.normalize();
    }
    if a.is_constant() || b.is_constant() {
        return Polynomial::one(a.n_vars());
    }
    // main variable: highest index occurring in either
    let var = (0..a.n_vars())
        .rev()
        .find(|&i| a.degree_in(i) > 0 || b.degree_in(i) > 0)
        .expect("non-constant polynomial has a variable");

    let ca = a.content_in(var);
    let cb = b.content_in(var);
    let cont = gcd(&ca, &cb);
    let pa = a.div_exact(&ca).expect("content divides");
    let pb = b.div_exact(&cb).expect("content divides");

    let (mut f, mut g) = if pa.degree_in(var) >= pb.degree_in(var) { (pa, pb) } else { (pb, pa) };
    while !g.is_zero() {
        let r = f.pseudo_rem(&g, var);
        f = g;
        g = if r.is_zero() {
            r
        } else {
            let c = r.content_in(var);
            r.div_exact(&c).expect("content divides")
        };
    }
    let fp = {
        let c = f.content_in(var);
        f.div_exact(&c).expect("content divides")
    };
    cont.mul(&fp).normalize()
}

/// Square-free test over the rationals: gcd(p, all partials) must be
/// constant. Repeated factors of positive degree show up in every partial
/// they survive in.
pub fn square_free(p: &Polynomial) -> bool {
    if p.is_zero() {
        return false;
    }
    let mut g = p.clone();
    for i in 0..p.n_vars() {
        let pi = p.partial(i);
        if pi.is_zero() {
            continue;
        }
        g = gcd(&g, &pi);
        if g.is_constant() {
            return true;
        }
    }
    g.total_degree() == 0
}

/// Compiled form: f64 coefficients, fixed term order.
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    n: usize,
    terms: Vec<(Vec<u32>, f64)>,
}

impl CompiledPoly {
    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (e, c) in &self.terms {
            let mut term = *c;
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    term *= point[i].powi(k as i32);
                }
            }
            acc += term;
        }
        acc
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        let mut first = true;
        // highest lex term first reads naturally
        for (e, c) in self.terms.iter().rev() {
            let neg = c.is_negative();
            let mag = c.abs();
            if first {
                if neg {
                    f.write_str("-")?;
                }
                first = false;
            } else {
                f.write_str(if neg { " - " } else { " + " })?;
            }
            let is_const_term = e.iter().all(|&k| k == 0);
            let coef_is_one = mag.is_one();
            if !coef_is_one || is_const_term {
                if mag.is_integer() {
                    write!(f, "{}", mag.numer())?;
                } else {
                    write!(f, "{}/{}", mag.numer(), mag.denom())?;
                }
                if !is_const_term {
                    f.write_str("*")?;
                }
            }
            let mut first_var = true;
            for (i, &k) in e.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                if !first_var {
                    f.write_str("*")?;
                }
                first_var = false;
                if k == 1 {
                    write!(f, "x{}", i + 1)?;
                } else {
                    write!(f, "x{}^{}", i + 1, k)?;
                }
            }
        }
        Ok(())
    }
}

/// Convert an expression to a polynomial. Allowed: variables, constants,
/// +, -, *, negation, integer powers with non-negative constant exponent,
/// and division by a nonzero constant.
pub fn expr_to_polynomial(e: &Expr, n: usize) -> Result<Polynomial, NotPolynomial> {
    let fail = |e: &Expr| NotPolynomial(e.to_string());
    match e {
        Expr::Var(i) => {
            if *i < n {
                Ok(Polynomial::var(n, *i))
            } else {
                Err(fail(e))
            }
        }
        Expr::Const { exact, .. } => Ok(Polynomial::constant(n, exact.clone())),
        Expr::Un(UnOp::Neg, a) => Ok(expr_to_polynomial(a, n)?.neg()),
        Expr::Un(..) => Err(fail(e)),
        Expr::Bin(op, a, b) => match op {
            BinOp::Add => Ok(expr_to_polynomial(a, n)?.add(&expr_to_polynomial(b, n)?)),
            BinOp::Sub => Ok(expr_to_polynomial(a, n)?.sub(&expr_to_polynomial(b, n)?)),
            BinOp::Mul => Ok(expr_to_polynomial(a, n)?.mul(&expr_to_polynomial(b, n)?)),
            BinOp::Div => {
                let num = expr_to_polynomial(a, n)?;
                match b.is_const() {
                    Some(c) if !c.is_zero() => Ok(num.scale(&(BigRational::one() / c))),
                    _ => Err(fail(e)),
                }
            }
            BinOp::Pow => {
                let base = expr_to_polynomial(a, n)?;
                match b.is_const() {
                    Some(c) if c.is_integer() && !c.is_negative() => {
                        let k = c.to_integer().to_u32().ok_or_else(|| fail(e))?;
                        Ok(base.pow(k))
                    }
                    _ => Err(fail(e)),
                }
            }
        },
    }
}

/// Parse polynomial source text in the expression grammar.
pub fn parse_polynomial(src: &str, vars: &VarTable) -> Result<Polynomial, NotPolynomial> {
    let e = super::parse(src, vars).map_err(|err| NotPolynomial(err.to_string()))?;
    expr_to_polynomial(&e, vars.n_vars())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn p(src: &str, n: usize) -> Polynomial {
        parse_polynomial(src, &VarTable::ambient(n)).unwrap()
    }

    #[test]
    fn ring_axioms_on_random_rational_points() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let polys = [
            p("x^2 - z*y^2", 3),
            p("x*y + z - 1/2", 3),
            p("(x + y + z)^3", 3),
            p("0.25*x - y^4", 3),
        ];
        for _ in 0..50 {
            let point: Vec<BigRational> = (0..3)
                .map(|_| BigRational::new(rng.gen_range(-20i64..20).into(), rng.gen_range(1i64..9).into()))
                .collect();
            for a in &polys {
                for b in &polys {
                    // (a*b)(x) = a(x)*b(x), (a+b)(x) = a(x)+b(x), exact
                    assert_eq!(a.mul(b).eval_rational(&point), a.eval_rational(&point) * b.eval_rational(&point));
                    assert_eq!(a.add(b).eval_rational(&point), a.eval_rational(&point) + b.eval_rational(&point));
                }
            }
        }
    }

    #[test]
    fn no_zero_coefficients_survive() {
        let a = p("x^2 + y", 2);
        let b = p("x^2 - y", 2);
        let d = a.sub(&b); // 2y
        assert_eq!(d.terms().count(), 1);
        let z = a.sub(&a);
        assert!(z.is_zero());
        assert_eq!(z.terms().count(), 0);
    }

    #[test]
    fn gradient_of_umbrella() {
        let umb = p("x^2 - z*y^2", 3);
        let g = umb.gradient();
        assert_eq!(g[0], p("2*x", 3));
        assert_eq!(g[1], p("-2*z*y", 3));
        assert_eq!(g[2], p("-y^2", 3));
    }

    #[test]
    fn exact_division() {
        let a = p("x^2 - y^2", 2);
        let d = p("x - y", 2);
        assert_eq!(a.div_exact(&d).unwrap(), p("x + y", 2));
        assert!(a.div_exact(&p("x - 2*y", 2)).is_none());
    }

    #[test]
    fn gcd_known_cases() {
        // common factor across variables
        assert_eq!(gcd(&p("x^2*y", 2), &p("2*x*y", 2)), p("x*y", 2));
        // coprime despite shared structure
        assert_eq!(gcd(&p("x*y", 2), &p("x + y", 2)), p("1", 2));
        assert_eq!(gcd(&p("x^2 - y^2", 2), &p("x^2 + 2*x*y + y^2", 2)), p("x + y", 2));
        assert_eq!(gcd(&p("y^2 - x^3", 2), &p("3*x^2", 2)), p("1", 2));
        // univariate sanity
        assert_eq!(gcd(&p("x^2 - 1", 1), &p("x^2 - 2*x + 1", 1)), p("x - 1", 1));
        // gcd with zero
        let z = Polynomial::zero(2);
        assert_eq!(gcd(&z, &p("2*x", 2)), p("x", 2));
    }

    #[test]
    fn square_free_detection() {
        assert!(square_free(&p("x*y", 2))); // product of distinct lines
        assert!(square_free(&p("x^2 - z*y^2", 3)));
        assert!(square_free(&p("y^2 - x^3", 2)));
        assert!(square_free(&p("y^2 - x^2", 2)));
        assert!(!square_free(&p("x^2*y", 2)));
        assert!(!square_free(&p("(x + y)^2", 2)));
        assert!(!square_free(&p("(x^2 + y^2 - 1)^2", 2)));
        assert!(!square_free(&p("x^2", 1)));
    }

    #[test]
    fn substitution_and_composition() {
        let umb = p("x^2 - z*y^2", 3);
        // normal slice along the z axis at z = c
        let c = BigRational::new(3.into(), 1.into());
        let slice = umb.substitute(2, &c);
        assert_eq!(slice, p("x^2 - 3*y^2", 3));

        // affine change of variables: swap x and y
        let a = vec![
            vec![BigRational::zero(), BigRational::one(), BigRational::zero()],
            vec![BigRational::one(), BigRational::zero(), BigRational::zero()],
            vec![BigRational::zero(), BigRational::zero(), BigRational::one()],
        ];
        let b = vec![BigRational::zero(), BigRational::zero(), BigRational::zero()];
        assert_eq!(umb.compose_affine(&a, &b), p("y^2 - z*x^2", 3));
    }

    #[test]
    fn compiled_matches_exact_eval() {
        let q = p("x^3*y - 2*x*y + 1/4", 2);
        let cq = q.compile();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let pt = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            assert!((q.eval_f64(&pt) - cq.eval(&pt)).abs() < 1e-12);
        }
    }

    #[test]
    fn display_reparses() {
        for src in ["x^2 - z*y^2", "x*y", "-x + 1/2", "2*x^3*y - y + 7"] {
            let q = p(src, 3);
            let printed = q.to_string();
            assert_eq!(p(&printed, 3), q, "{src} -> {printed}");
        }
    }
}
