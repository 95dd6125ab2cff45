//! A small expression grammar for α.
//!
//! Accepts numbers, `+ - * /`, parentheses, `ln(x)` and `sqrt(x)`. Rational
//! arithmetic stays exact, and `1/ln(p/q)` with rational `p/q` becomes the
//! exact inverse-log form so that μ is exactly `p/q` downstream.

use pinball_core::Alpha;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Val {
    /// Reduced fraction with positive denominator.
    Rat(i128, i128),
    /// `ln(p/q)` with `p/q > 0`.
    Ln(i128, i128),
    /// `1/ln(p/q)`.
    InvLn(i128, i128),
    Float(f64),
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn rat(num: i128, den: i128) -> Option<Val> {
    if den == 0 {
        return None;
    }
    let g = gcd(num, den).max(1);
    let s = if den < 0 { -1 } else { 1 };
    Some(Val::Rat(s * num / g, s * den / g))
}

impl Val {
    fn to_f64(self) -> f64 {
        match self {
            Val::Rat(n, d) => n as f64 / d as f64,
            Val::Ln(n, d) => (n as f64 / d as f64).ln(),
            Val::InvLn(n, d) => 1.0 / (n as f64 / d as f64).ln(),
            Val::Float(x) => x,
        }
    }

    fn rat_op(a: Val, b: Val, f: impl Fn(i128, i128, i128, i128) -> Option<(i128, i128)>) -> Option<Val> {
        match (a, b) {
            (Val::Rat(an, ad), Val::Rat(bn, bd)) => f(an, ad, bn, bd).and_then(|(n, d)| rat(n, d)),
            _ => None,
        }
    }

    fn add(a: Val, b: Val) -> Val {
        Self::rat_op(a, b, |an, ad, bn, bd| {
            Some((
                an.checked_mul(bd)?.checked_add(bn.checked_mul(ad)?)?,
                ad.checked_mul(bd)?,
            ))
        })
        .unwrap_or(Val::Float(a.to_f64() + b.to_f64()))
    }

    fn neg(a: Val) -> Val {
        match a {
            Val::Rat(n, d) => Val::Rat(-n, d),
            _ => Val::Float(-a.to_f64()),
        }
    }

    fn mul(a: Val, b: Val) -> Val {
        Self::rat_op(a, b, |an, ad, bn, bd| Some((an.checked_mul(bn)?, ad.checked_mul(bd)?)))
            .unwrap_or(Val::Float(a.to_f64() * b.to_f64()))
    }

    fn div(a: Val, b: Val) -> Val {
        match (a, b) {
            (Val::Rat(1, 1), Val::Ln(n, d)) => Val::InvLn(n, d),
            (Val::Rat(1, 1), Val::InvLn(n, d)) => Val::Ln(n, d),
            (Val::Rat(..), Val::Rat(0, _)) => Val::Float(a.to_f64() / 0.0),
            _ => Self::rat_op(a, b, |an, ad, bn, bd| Some((an.checked_mul(bd)?, ad.checked_mul(bn)?)))
                .unwrap_or(Val::Float(a.to_f64() / b.to_f64())),
        }
    }

    fn ln(a: Val) -> Val {
        match a {
            Val::Rat(n, d) if n > 0 => Val::Ln(n, d),
            _ => Val::Float(a.to_f64().ln()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok<'a> {
    Num(&'a str),
    Ident(&'a str),
    Op(char),
}

fn tokenize(s: &str) -> Result<Vec<Tok<'_>>, String> {
    let b = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
                i += 1;
            }
            if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                i += 1;
                if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
                    i += 1;
                }
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
            }
            out.push(Tok::Num(&s[start..i]));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < b.len() && b[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push(Tok::Ident(&s[start..i]));
        } else if "+-*/()".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else {
            return Err(format!("unexpected character `{c}`"));
        }
    }
    Ok(out)
}

/// Decimal literal as an exact fraction when it fits, else a float.
fn number(lit: &str) -> Result<Val, String> {
    let x: f64 = lit.parse().map_err(|_| format!("bad number `{lit}`"))?;
    let (mantissa, exp) = match lit.find(['e', 'E']) {
        Some(k) => (
            &lit[..k],
            lit[k + 1..]
                .parse::<i32>()
                .map_err(|_| format!("bad exponent in `{lit}`"))?,
        ),
        None => (lit, 0),
    };
    let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    let digits = format!("{int}{frac}");
    let scale = exp - frac.len() as i32;
    let exact = digits.parse::<i128>().ok().and_then(|n| {
        if scale >= 0 {
            10i128
                .checked_pow(scale as u32)
                .and_then(|p| n.checked_mul(p))
                .and_then(|n| rat(n, 1))
        } else {
            10i128.checked_pow((-scale) as u32).and_then(|p| rat(n, p))
        }
    });
    Ok(exact.unwrap_or(Val::Float(x)))
}

struct Parser<'a> {
    toks: Vec<Tok<'a>>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<Tok<'a>> {
        self.toks.get(self.pos).copied()
    }

    fn next(&mut self) -> Option<Tok<'a>> {
        let t = self.peek();
        self.pos += 1;
        t
    }

    fn expect(&mut self, c: char) -> Result<(), String> {
        match self.next() {
            Some(Tok::Op(o)) if o == c => Ok(()),
            _ => Err(format!("expected `{c}`")),
        }
    }

    fn expr(&mut self) -> Result<Val, String> {
        let mut v = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            self.pos += 1;
            let r = self.term()?;
            v = if c == '+' {
                Val::add(v, r)
            } else {
                Val::add(v, Val::neg(r))
            };
        }
        Ok(v)
    }

    fn term(&mut self) -> Result<Val, String> {
        let mut v = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            self.pos += 1;
            let r = self.unary()?;
            v = if c == '*' { Val::mul(v, r) } else { Val::div(v, r) };
        }
        Ok(v)
    }

    fn unary(&mut self) -> Result<Val, String> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Val::neg(self.unary()?));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Val, String> {
        match self.next() {
            Some(Tok::Num(s)) => number(s),
            Some(Tok::Op('(')) => {
                let v = self.expr()?;
                self.expect(')')?;
                Ok(v)
            }
            Some(Tok::Ident(name)) => {
                self.expect('(')?;
                let v = self.expr()?;
                self.expect(')')?;
                match name {
                    "ln" => Ok(Val::ln(v)),
                    "sqrt" => Ok(Val::Float(v.to_f64().sqrt())),
                    _ => Err(format!("unknown function `{name}`")),
                }
            }
            Some(Tok::Op(c)) => Err(format!("unexpected `{c}`")),
            None => Err("unexpected end of expression".into()),
        }
    }
}

/// Parses an α expression such as `0.5`, `1/2`, `1/ln(2)` or `1/ln(5/2)`.
pub fn parse_alpha(text: &str) -> Result<Alpha, String> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
    };
    if p.toks.is_empty() {
        return Err("empty expression".into());
    }
    let v = p.expr()?;
    if p.pos != p.toks.len() {
        return Err("trailing input".into());
    }
    let alpha = match v {
        Val::Rat(n, d) => match (i64::try_from(n), u64::try_from(d)) {
            (Ok(n), Ok(d)) => Alpha::rational(n, d),
            _ => Alpha::decimal(v.to_f64()),
        },
        Val::InvLn(n, d) => match (u64::try_from(n), u64::try_from(d)) {
            (Ok(n), Ok(d)) => Alpha::inverse_log_ratio(n, d),
            _ => Alpha::decimal(v.to_f64()),
        },
        _ => Alpha::decimal(v.to_f64()),
    };
    alpha.validate().map_err(|e| e.to_string())?;
    Ok(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_forms() {
        assert_eq!(parse_alpha("1/ln(2)").unwrap(), Alpha::inverse_log_ratio(2, 1));
        assert_eq!(parse_alpha("1/ln(2.5)").unwrap(), Alpha::inverse_log_ratio(5, 2));
        assert_eq!(parse_alpha(" 1 / ln( 5/2 ) ").unwrap(), Alpha::inverse_log_ratio(5, 2));
        assert_eq!(parse_alpha("1/ln(2*3)").unwrap(), Alpha::inverse_log_ratio(6, 1));
        assert_eq!(parse_alpha("0.5").unwrap(), Alpha::rational(1, 2));
        assert_eq!(parse_alpha("2/4").unwrap(), Alpha::rational(1, 2));
        assert_eq!(parse_alpha("1").unwrap(), Alpha::rational(1, 1));
        assert_eq!(parse_alpha("1.25e-1").unwrap(), Alpha::rational(1, 8));
        assert_eq!(parse_alpha("1/(1/3)").unwrap(), Alpha::rational(3, 1));
    }

    #[test]
    fn inexact_forms() {
        let g = parse_alpha("(sqrt(5)-1)/2").unwrap();
        assert!(matches!(g, Alpha::Decimal { .. }));
        assert!((g.value() - 0.6180339887498949).abs() < 1e-16);
        let l = parse_alpha("ln(2)").unwrap();
        assert!((l.value() - std::f64::consts::LN_2).abs() < 1e-16);
        assert!(matches!(parse_alpha("2/ln(2)").unwrap(), Alpha::Decimal { .. }));
    }

    #[test]
    fn mu_is_exact_for_inverse_log() {
        assert_eq!(parse_alpha("1/ln(4)").unwrap().mu(), 4.0);
        assert_eq!(parse_alpha("1/ln(3/2)").unwrap().mu_exact(), Some((3, 2)));
    }

    #[test]
    fn rejects() {
        for bad in [
            "",
            "1/",
            "ln 2",
            "foo(2)",
            "1/ln(1)",
            "-1",
            "0",
            "1/0",
            "2)",
            "1 $ 2",
            "1/ln(1/2)",
        ] {
            assert!(parse_alpha(bad).is_err(), "{bad}");
        }
    }
}
