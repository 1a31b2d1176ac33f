//! Text grammar for expressions.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | power
//! power  := atom ('^' factor)?          -- right associative
//! atom   := number | name | name '(' expr ')' | '(' expr ')'
//! ```
//!
//! Numbers are decimal literals (`2`, `0.25`, `1e-3`) and are kept exact:
//! `0.1` is the rational 1/10, not the nearest float. Names resolve to
//! variables x1..xn; for n <= 4 the aliases x, y, z, t denote x1..x4.
//! Functions: exp, log, sin, cos, abs, signum, floor.

use super::{Expr, UnOp};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Pow;
use std::fmt;

/// Maps variable names to indices for one parsing context.
#[derive(Clone, Debug)]
pub struct VarTable {
    entries: Vec<(String, usize)>,
    n_vars: usize,
}

const ALIASES: [&str; 4] = ["x", "y", "z", "t"];

impl VarTable {
    /// Variables of an n-dimensional ambient space: x1..xn, with the short
    /// aliases for n <= 4.
    pub fn ambient(n: usize) -> VarTable {
        let mut entries = Vec::new();
        for i in 0..n {
            entries.push((format!("x{}", i + 1), i));
        }
        if n <= 4 {
            for (i, a) in ALIASES.iter().take(n).enumerate() {
                entries.push((a.to_string(), i));
            }
        }
        VarTable { entries, n_vars: n }
    }

    /// Ambient variables plus one extra parameter bound to index n. Used
    /// by approach-curve families, where the expressions see the base
    /// point coordinates and the curve parameter.
    pub fn with_param(n: usize, param: &str) -> VarTable {
        let mut vt = VarTable::ambient(n);
        assert!(
            vt.resolve(param).is_none(),
            "parameter name `{param}` collides with an ambient variable"
        );
        vt.entries.push((param.to_string(), n));
        vt.n_vars = n + 1;
        vt
    }

    /// Table over explicitly named slots, in order. Used by approach-curve
    /// families whose expressions see (t, u, b1..bn) rather than ambient
    /// coordinates.
    pub fn from_names(names: &[&str]) -> VarTable {
        let entries: Vec<(String, usize)> = names.iter().enumerate().map(|(i, n)| (n.to_string(), i)).collect();
        let n_vars = entries.len();
        VarTable { entries, n_vars }
    }

    pub fn resolve(&self, name: &str) -> Option<usize> {
        self.entries.iter().find(|(s, _)| s == name).map(|&(_, i)| i)
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }
}

/// Syntax error with 1-based source position.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.col, self.msg)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(BigRational),
    Name(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Eof,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

type Spanned = (Tok, usize, usize);

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn err(&self, line: usize, col: usize, msg: impl Into<String>) -> ParseError {
        ParseError { line, col, msg: msg.into() }
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.src.get(self.pos).copied()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn tokens(mut self) -> Result<Vec<Spanned>, ParseError> {
        let mut out = Vec::new();
        loop {
            while matches!(self.peek(), Some(b' ' | b'\t' | b'\r' | b'\n')) {
                self.bump();
            }
            let (line, col) = (self.line, self.col);
            let Some(c) = self.peek() else {
                out.push((Tok::Eof, line, col));
                return Ok(out);
            };
            let tok = match c {
                b'+' => {
                    self.bump();
                    Tok::Plus
                }
                b'-' => {
                    self.bump();
                    Tok::Minus
                }
                b'*' => {
                    self.bump();
                    Tok::Star
                }
                b'/' => {
                    self.bump();
                    Tok::Slash
                }
                b'^' => {
                    self.bump();
                    Tok::Caret
                }
                b'(' => {
                    self.bump();
                    Tok::LParen
                }
                b')' => {
                    self.bump();
                    Tok::RParen
                }
                b'0'..=b'9' | b'.' => self.number(line, col)?,
                c if c.is_ascii_alphabetic() || c == b'_' => {
                    let mut name = String::new();
                    while let Some(c) = self.peek() {
                        if c.is_ascii_alphanumeric() || c == b'_' {
                            name.push(c as char);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    Tok::Name(name)
                }
                other => {
                    return Err(self.err(line, col, format!("unexpected character `{}`", other as char)));
                }
            };
            out.push((tok, line, col));
        }
    }

    fn number(&mut self, line: usize, col: usize) -> Result<Tok, ParseError> {
        let mut int_digits = String::new();
        let mut frac_digits = String::new();
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            int_digits.push(self.bump().unwrap() as char);
        }
        if self.peek() == Some(b'.') {
            self.bump();
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                frac_digits.push(self.bump().unwrap() as char);
            }
            if int_digits.is_empty() && frac_digits.is_empty() {
                return Err(self.err(line, col, "malformed number"));
            }
        }
        if int_digits.is_empty() && frac_digits.is_empty() {
            return Err(self.err(line, col, "malformed number"));
        }
        let mut exp: i64 = 0;
        if matches!(self.peek(), Some(b'e' | b'E')) {
            // only a valid exponent suffix consumes the 'e'
            let save = (self.pos, self.line, self.col);
            self.bump();
            let mut sign = 1i64;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                if self.bump() == Some(b'-') {
                    sign = -1;
                }
            }
            let mut digits = String::new();
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                digits.push(self.bump().unwrap() as char);
            }
            if digits.is_empty() {
                (self.pos, self.line, self.col) = save;
            } else {
                exp = sign * digits.parse::<i64>().map_err(|_| self.err(line, col, "exponent out of range"))?;
            }
        }
        let mantissa: BigInt = format!("{int_digits}{frac_digits}")
            .parse()
            .map_err(|_| self.err(line, col, "malformed number"))?;
        let shift = exp - frac_digits.len() as i64;
        if shift.unsigned_abs() > 10_000 {
            return Err(self.err(line, col, "exponent out of range"));
        }
        let ten = BigInt::from(10);
        let value = if shift >= 0 {
            BigRational::from_integer(mantissa * Pow::pow(&ten, shift as u32))
        } else {
            BigRational::new(mantissa, Pow::pow(&ten, (-shift) as u32))
        };
        Ok(Tok::Num(value))
    }
}

struct Parser<'a> {
    toks: Vec<Spanned>,
    at: usize,
    vars: &'a VarTable,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Spanned {
        &self.toks[self.at]
    }

    fn next(&mut self) -> Spanned {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn err_at(&self, msg: impl Into<String>) -> ParseError {
        let (_, line, col) = *self.peek();
        ParseError { line, col, msg: msg.into() }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.term()?;
        loop {
            match self.peek().0 {
                Tok::Plus => {
                    self.next();
                    acc = Expr::add(acc, self.term()?);
                }
                Tok::Minus => {
                    self.next();
                    acc = Expr::sub(acc, self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.factor()?;
        loop {
            match self.peek().0 {
                Tok::Star => {
                    self.next();
                    acc = Expr::mul(acc, self.factor()?);
                }
                Tok::Slash => {
                    self.next();
                    acc = Expr::div(acc, self.factor()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.peek().0 == Tok::Minus {
            self.next();
            return Ok(Expr::neg(self.factor()?));
        }
        if self.peek().0 == Tok::Plus {
            self.next();
            return self.factor();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek().0 == Tok::Caret {
            self.next();
            let exp = self.factor()?;
            return Ok(Expr::pow(base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let (tok, line, col) = self.next();
        match tok {
            Tok::Num(r) => Ok(Expr::rational(r)),
            Tok::LParen => {
                let inner = self.expr()?;
                let (t, ..) = self.next();
                if t != Tok::RParen {
                    return Err(ParseError { line, col, msg: "unclosed parenthesis".into() });
                }
                Ok(inner)
            }
            Tok::Name(name) => {
                if self.peek().0 == Tok::LParen {
                    self.next();
                    let op = match name.as_str() {
                        "exp" => UnOp::Exp,
                        "log" => UnOp::Log,
                        "sin" => UnOp::Sin,
                        "cos" => UnOp::Cos,
                        "abs" => UnOp::Abs,
                        "signum" => UnOp::Signum,
                        "floor" => UnOp::Floor,
                        _ => {
                            return Err(ParseError { line, col, msg: format!("unknown function `{name}`") });
                        }
                    };
                    let arg = self.expr()?;
                    let (t, ..) = self.next();
                    if t != Tok::RParen {
                        return Err(ParseError { line, col, msg: format!("unclosed call to `{name}`") });
                    }
                    Ok(Expr::un(op, arg))
                } else {
                    match self.vars.resolve(&name) {
                        Some(i) => Ok(Expr::Var(i)),
                        None => Err(ParseError { line, col, msg: format!("unknown variable `{name}`") }),
                    }
                }
            }
            Tok::Eof => Err(ParseError { line, col, msg: "unexpected end of input".into() }),
            other => Err(ParseError { line, col, msg: format!("unexpected token {other:?}") }),
        }
    }
}

/// Parse one expression; the whole input must be consumed.
pub fn parse(src: &str, vars: &VarTable) -> Result<Expr, ParseError> {
    let toks = Lexer::new(src).tokens()?;
    let mut p = Parser { toks, at: 0, vars };
    let e = p.expr()?;
    if p.peek().0 != Tok::Eof {
        return Err(p.err_at("unexpected trailing input"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;

    #[test]
    fn literals_are_exact_rationals() {
        let vt = VarTable::ambient(1);
        let e = parse("0.1", &vt).unwrap();
        let r = e.is_const().unwrap();
        assert_eq!(r, &BigRational::new(1.into(), 10.into()));
        let e = parse("2.5e-3", &vt).unwrap();
        assert_eq!(e.is_const().unwrap(), &BigRational::new(1.into(), 400.into()));
        let e = parse("1e3", &vt).unwrap();
        assert_eq!(e.is_const().unwrap(), &BigRational::from_integer(1000.into()));
    }

    #[test]
    fn aliases_match_numbered_variables() {
        let vt = VarTable::ambient(3);
        assert_eq!(parse("z", &vt).unwrap(), parse("x3", &vt).unwrap());
        assert_eq!(parse("x*y", &vt).unwrap(), parse("x1*x2", &vt).unwrap());
        // alias t exists only from dimension 4 up
        assert!(parse("t", &vt).is_err());
        let vt4 = VarTable::ambient(4);
        assert_eq!(parse("t", &vt4).unwrap(), Expr::Var(3));
    }

    #[test]
    fn param_table_binds_extra_variable() {
        let vt = VarTable::with_param(2, "t");
        assert_eq!(parse("t", &vt).unwrap(), Expr::Var(2));
        assert_eq!(parse("x", &vt).unwrap(), Expr::Var(0));
    }

    #[test]
    fn errors_carry_line_and_column() {
        let vt = VarTable::ambient(2);
        let err = parse("x + \n  q * 2", &vt).unwrap_err();
        assert_eq!((err.line, err.col), (2, 3));
        assert!(err.msg.contains("unknown variable"));

        let err = parse("sin(x", &vt).unwrap_err();
        assert!(err.msg.contains("unclosed"));

        let err = parse("x + ", &vt).unwrap_err();
        assert!(err.msg.contains("end of input"));

        let err = parse("x y", &vt).unwrap_err();
        assert!(err.msg.contains("trailing"));
        assert_eq!((err.line, err.col), (1, 3));
    }

    #[test]
    fn precedence_and_associativity() {
        let vt = VarTable::ambient(2);
        let e = parse("x - y - 1", &vt).unwrap();
        assert_eq!(e.eval(&[5.0, 2.0]).unwrap(), 2.0);
        let e = parse("2^3^2", &vt).unwrap(); // right assoc: 2^(3^2)
        assert_eq!(e.eval(&[0.0, 0.0]).unwrap(), 512.0);
        let e = parse("-x^2", &vt).unwrap(); // -(x^2)
        assert_eq!(e.eval(&[3.0, 0.0]).unwrap(), -9.0);
        let e = parse("1/2*x", &vt).unwrap(); // (1/2)*x
        assert_eq!(e.eval(&[4.0, 0.0]).unwrap(), 2.0);
        let e = parse("2^-2", &vt).unwrap();
        assert_eq!(e.eval(&[0.0, 0.0]).unwrap(), 0.25);
    }

    #[test]
    fn constant_folding_keeps_exactness() {
        let vt = VarTable::ambient(1);
        let e = parse("0.1 + 0.2", &vt).unwrap();
        assert_eq!(e.is_const().unwrap(), &BigRational::new(3.into(), 10.into()));
        let e = parse("1 - 3*(1/3)", &vt).unwrap();
        assert!(e.is_const().unwrap().is_zero());
    }
}
