//! Infix grammar for right-hand sides.
//!
//! ```text
//! expr     := term (('+' | '-') term)*
//! term     := unary (('*' | '/') unary)*
//! unary    := '-' unary | power
//! power    := atom ('^' exponent)*
//! exponent := ['-'] number | '(' ['-'] number ['/' integer] ')'
//! atom     := number | name | func '(' expr ')' | '(' expr ')'
//! func     := sqrt | cbrt | sin | cos | exp
//! ```
//!
//! Variables are either the caller-supplied names or, when none are given,
//! `x0`, `x1`, ... . `pi` and `e` are constants unless shadowed by a
//! variable name.

use crate::dynamics::expr::{self, Expr, Rational};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(String),
    Ident(String),
    Op(char),
}

struct Lexer<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
}

fn position(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn err_at(src: &str, offset: usize, message: impl Into<String>) -> Error {
    let (line, column) = position(src, offset);
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

impl<'a> Lexer<'a> {
    fn run(src: &'a str) -> Result<Vec<(Tok, usize)>> {
        let mut lx = Lexer {
            src,
            toks: Vec::new(),
        };
        let bytes = src.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i];
            if c.is_ascii_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() || c == b'.' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                lx.toks.push((Tok::Num(src[start..i].to_string()), start));
            } else if c.is_ascii_alphabetic() || c == b'_' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                lx.toks.push((Tok::Ident(src[start..i].to_string()), start));
            } else if b"+-*/^()".contains(&c) {
                lx.toks.push((Tok::Op(c as char), i));
                i += 1;
            } else {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(err_at(lx.src, i, format!("unexpected character `{ch}`")));
            }
        }
        Ok(lx.toks)
    }
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
    pos: usize,
    names: &'a [String],
    depth: usize,
}

const MAX_DEPTH: usize = 256;
/// Bounds the tree size, and with it the recursion depth of evaluation and
/// differentiation on long operator chains.
const MAX_TOKENS: usize = 4096;

impl<'a> Parser<'a> {
    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.src.len(), |t| t.1)
    }

    fn err(&self, message: impl Into<String>) -> Error {
        err_at(self.src, self.offset(), message)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn eat_op(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: char) -> Result<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{op}`")))
        }
    }

    fn enter(&mut self) -> Result<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.err("expression nested too deeply"));
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            if self.eat_op('+') {
                lhs = expr::add(lhs, self.term()?);
            } else if self.eat_op('-') {
                lhs = expr::sub(lhs, self.term()?);
            } else {
                break;
            }
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat_op('*') {
                lhs = expr::mul(lhs, self.unary()?);
            } else if self.eat_op('/') {
                lhs = expr::div(lhs, self.unary()?);
            } else {
                break;
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat_op('-') {
            self.enter()?;
            let e = expr::neg(self.unary()?);
            self.depth -= 1;
            Ok(e)
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let mut base = self.atom()?;
        while self.eat_op('^') {
            let p = self.exponent()?;
            base = expr::pow(base, p);
        }
        Ok(base)
    }

    fn number(&mut self) -> Result<String> {
        match self.peek() {
            Some(Tok::Num(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err("expected a number")),
        }
    }

    fn exponent(&mut self) -> Result<Rational> {
        let paren = self.eat_op('(');
        let negative = self.eat_op('-');
        let at = self.offset();
        let text = self.number()?;
        let mut r = decimal_to_rational(&text).ok_or_else(|| {
            err_at(self.src, at, format!("exponent `{text}` is not a representable rational"))
        })?;
        if paren && self.eat_op('/') {
            let at = self.offset();
            let den_text = self.number()?;
            let den = den_text
                .parse::<i64>()
                .ok()
                .filter(|d| *d != 0 && *d < 1_000_000_000)
                .ok_or_else(|| err_at(self.src, at, "denominator must be a nonzero integer"))?;
            r = Rational::new(r.num(), r.den().checked_mul(den).ok_or_else(|| {
                err_at(self.src, at, "exponent too large")
            })?)?;
        }
        if negative {
            r = Rational::new(-r.num(), r.den())?;
        }
        if paren {
            self.expect_op(')')?;
        }
        Ok(r)
    }

    fn atom(&mut self) -> Result<Expr> {
        let at = self.offset();
        match self.peek().cloned() {
            Some(Tok::Num(s)) => {
                self.pos += 1;
                let v: f64 = s
                    .parse()
                    .map_err(|_| err_at(self.src, at, format!("invalid number `{s}`")))?;
                if !v.is_finite() {
                    return Err(err_at(self.src, at, format!("number `{s}` overflows")));
                }
                Ok(expr::constant(v))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if let Some(i) = self.names.iter().position(|n| *n == name) {
                    return Ok(expr::var(i));
                }
                if self.names.is_empty() {
                    if let Some(idx) = name.strip_prefix('x') {
                        if !idx.is_empty() && idx.bytes().all(|b| b.is_ascii_digit()) {
                            return idx
                                .parse::<usize>()
                                .ok()
                                .filter(|i| *i < 1 << 16)
                                .map(expr::var)
                                .ok_or_else(|| err_at(self.src, at, "variable index too large"));
                        }
                    }
                }
                let func: Option<fn(Expr) -> Expr> = match name.as_str() {
                    "sqrt" => Some(expr::sqrt),
                    "cbrt" => Some(expr::cbrt),
                    "sin" => Some(expr::sin),
                    "cos" => Some(expr::cos),
                    "exp" => Some(expr::exp),
                    _ => None,
                };
                if let Some(f) = func {
                    self.expect_op('(')?;
                    let arg = self.expr()?;
                    self.expect_op(')')?;
                    return Ok(f(arg));
                }
                match name.as_str() {
                    "pi" => Ok(expr::constant(std::f64::consts::PI)),
                    "e" => Ok(expr::constant(std::f64::consts::E)),
                    _ => Err(err_at(self.src, at, format!("unknown identifier `{name}`"))),
                }
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_op(')')?;
                Ok(e)
            }
            Some(Tok::Op(c)) => Err(self.err(format!("unexpected `{c}`"))),
            None => Err(self.err("unexpected end of expression")),
        }
    }
}

/// Exact rational value of a plain decimal literal such as `2`, `0.5` or
/// `1.25`. Scientific notation is not accepted in exponents.
fn decimal_to_rational(s: &str) -> Option<Rational> {
    let (int, frac) = match s.split_once('.') {
        Some((a, b)) => (a, b),
        None => (s, ""),
    };
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) || int.len() + frac.len() > 15
    {
        return None;
    }
    let digits: i64 = format!("{int}{frac}").parse().ok()?;
    let den = 10i64.checked_pow(frac.len() as u32)?;
    Rational::new(digits, den).ok()
}

/// Parses one expression. `names` lists the variable names in index order;
/// an empty slice selects the `x0, x1, ...` convention.
pub fn parse_expr(src: &str, names: &[String]) -> Result<Expr> {
    let toks = Lexer::run(src)?;
    if toks.len() > MAX_TOKENS {
        return Err(err_at(src, toks[MAX_TOKENS].1, "expression too long"));
    }
    let mut p = Parser {
        src,
        toks,
        pos: 0,
        names,
        depth: 0,
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(p.err("unexpected trailing input"));
    }
    if let Some(c) = first_non_finite(&e) {
        return Err(err_at(src, 0, format!("constant folding produced {c}")));
    }
    Ok(e)
}

fn first_non_finite(e: &Expr) -> Option<f64> {
    if let Expr::Const(c) = e {
        if !c.is_finite() {
            return Some(*c);
        }
    }
    e.children().into_iter().find_map(first_non_finite)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::expr::Expr::*;

    fn p(s: &str) -> Expr {
        parse_expr(s, &[]).unwrap()
    }

    #[test]
    fn precedence_and_unary_minus() {
        assert_eq!(p("-x0^2").eval(&[3.0]).unwrap(), -9.0);
        assert_eq!(p("2 - 3 - 4").eval(&[]).unwrap(), -5.0);
        assert_eq!(p("2 / 4 * 3").eval(&[]).unwrap(), 1.5);
        assert_eq!(p("(x0^2)^(1/3)").eval(&[-8.0]).unwrap(), 4.0);
    }

    #[test]
    fn named_variables() {
        let names = vec!["x".to_string(), "y".to_string()];
        let e = parse_expr("-y - 1.5*x^2 - 0.5*x^3 - 0.1", &names).unwrap();
        assert_eq!(e.eval(&[0.0, 0.0]).unwrap(), -0.1);
        assert!(parse_expr("x0", &names).is_err());
    }

    #[test]
    fn exponents_are_rational() {
        assert!(matches!(p("x0^0.5"), Pow(_, r) if r == Rational::new(1, 2).unwrap()));
        assert!(matches!(p("x0^(-2/3)"), Pow(_, r) if r == Rational::new(-2, 3).unwrap()));
        assert!(matches!(p("x0^-1"), Pow(_, r) if r == Rational::integer(-1)));
        assert!(parse_expr("x0^x1", &[]).is_err());
        assert!(parse_expr("x0^1e3", &[]).is_err());
    }

    #[test]
    fn errors_carry_positions() {
        match parse_expr("1 +\n  * 2", &[]) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 3)),
            other => panic!("{other:?}"),
        }
        assert!(parse_expr("sin x0", &[]).is_err());
        assert!(parse_expr("1e400", &[]).is_err());
        assert!(parse_expr("(x0", &[]).is_err());
        assert!(parse_expr("x0 $", &[]).is_err());
    }

    #[test]
    fn display_reparses_to_same_tree() {
        for s in [
            "1.5 - sqrt(x0)",
            "0.5*x2^2*sin(2*x0) - sin(x0) - 3*x1",
            "-sin(exp(x1^3 + 1)) - x1^2",
            "(x0^2)^(1/3) - x0",
            "-(x0 - 2) / (3 * -x1)",
            "-1e-7 * x0",
        ] {
            let e = p(s);
            assert_eq!(p(&e.to_string()), e, "{s} -> {e}");
        }
    }

    #[test]
    fn deep_nesting_is_rejected_not_overflowed() {
        let s = "(".repeat(10_000) + "1" + &")".repeat(10_000);
        assert!(parse_expr(&s, &[]).is_err());
        let s = "-".repeat(10_000) + "1";
        assert!(parse_expr(&s, &[]).is_err());
    }
}
