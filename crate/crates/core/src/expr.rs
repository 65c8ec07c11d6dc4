//! Branch formulas over a single variable `x`.
//!
//! Grammar:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := number | 'x' | '(' expr ')' | '-' factor
//! ```
//!
//! The unicode minus sign `−` is accepted wherever `-` is.

use std::fmt;

use crate::error::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    X,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if let Some(t) = p.tokens.get(p.pos) {
            return Err(ParseError::new(t.line, t.col, format!("unexpected {}", t.kind)));
        }
        Ok(e.simplify())
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::X => x,
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
        }
    }

    /// Symbolic derivative with respect to `x`, simplified.
    pub fn derivative(&self) -> Expr {
        use Expr::*;
        let d = match self {
            Const(_) => Const(0.0),
            X => Const(1.0),
            Neg(a) => Neg(Box::new(a.derivative())),
            Add(a, b) => Add(Box::new(a.derivative()), Box::new(b.derivative())),
            Sub(a, b) => Sub(Box::new(a.derivative()), Box::new(b.derivative())),
            Mul(a, b) => Add(
                Box::new(Mul(Box::new(a.derivative()), b.clone())),
                Box::new(Mul(a.clone(), Box::new(b.derivative()))),
            ),
            Div(a, b) => Div(
                Box::new(Sub(
                    Box::new(Mul(Box::new(a.derivative()), b.clone())),
                    Box::new(Mul(a.clone(), Box::new(b.derivative()))),
                )),
                Box::new(Mul(b.clone(), b.clone())),
            ),
        };
        d.simplify()
    }

    /// Replaces every occurrence of `x` with `inner`.
    pub fn substitute(&self, inner: &Expr) -> Expr {
        use Expr::*;
        match self {
            Const(c) => Const(*c),
            X => inner.clone(),
            Neg(a) => Neg(Box::new(a.substitute(inner))),
            Add(a, b) => Add(Box::new(a.substitute(inner)), Box::new(b.substitute(inner))),
            Sub(a, b) => Sub(Box::new(a.substitute(inner)), Box::new(b.substitute(inner))),
            Mul(a, b) => Mul(Box::new(a.substitute(inner)), Box::new(b.substitute(inner))),
            Div(a, b) => Div(Box::new(a.substitute(inner)), Box::new(b.substitute(inner))),
        }
        .simplify()
    }

    pub fn is_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// Returns `(slope, intercept)` when the expression is affine in `x`.
    pub fn as_affine(&self) -> Option<(f64, f64)> {
        use Expr::*;
        match self {
            Const(c) => Some((0.0, *c)),
            X => Some((1.0, 0.0)),
            Neg(a) => a.as_affine().map(|(s, b)| (-s, -b)),
            Add(a, b) => {
                let (s1, b1) = a.as_affine()?;
                let (s2, b2) = b.as_affine()?;
                Some((s1 + s2, b1 + b2))
            }
            Sub(a, b) => {
                let (s1, b1) = a.as_affine()?;
                let (s2, b2) = b.as_affine()?;
                Some((s1 - s2, b1 - b2))
            }
            Mul(a, b) => {
                let (s1, b1) = a.as_affine()?;
                let (s2, b2) = b.as_affine()?;
                if s1 != 0.0 && s2 != 0.0 {
                    None
                } else {
                    Some((s1 * b2 + s2 * b1, b1 * b2))
                }
            }
            Div(a, b) => {
                let (s1, b1) = a.as_affine()?;
                let (s2, b2) = b.as_affine()?;
                if s2 != 0.0 || b2 == 0.0 {
                    None
                } else {
                    Some((s1 / b2, b1 / b2))
                }
            }
        }
    }

    /// Constant folding plus the usual identities for 0 and 1.
    pub fn simplify(self) -> Expr {
        use Expr::*;
        match self {
            Neg(a) => match a.simplify() {
                Const(c) => Const(-c),
                Neg(inner) => *inner,
                other => Neg(Box::new(other)),
            },
            Add(a, b) => match (a.simplify(), b.simplify()) {
                (Const(x), Const(y)) => Const(x + y),
                (Const(0.0), e) | (e, Const(0.0)) => e,
                (l, r) => Add(Box::new(l), Box::new(r)),
            },
            Sub(a, b) => match (a.simplify(), b.simplify()) {
                (Const(x), Const(y)) => Const(x - y),
                (e, Const(0.0)) => e,
                (Const(0.0), e) => Neg(Box::new(e)).simplify(),
                (l, r) => Sub(Box::new(l), Box::new(r)),
            },
            Mul(a, b) => match (a.simplify(), b.simplify()) {
                (Const(x), Const(y)) => Const(x * y),
                (Const(z), _) | (_, Const(z)) if z == 0.0 => Const(0.0),
                (Const(o), e) | (e, Const(o)) if o == 1.0 => e,
                (l, r) => Mul(Box::new(l), Box::new(r)),
            },
            Div(a, b) => match (a.simplify(), b.simplify()) {
                (Const(x), Const(y)) if y != 0.0 => Const(x / y),
                (e, Const(1.0)) => e,
                (Const(0.0), _) => Const(0.0),
                (l, r) => Div(Box::new(l), Box::new(r)),
            },
            e => e,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) if *c < 0.0 => write!(f, "(-{})", -c),
            Expr::Const(c) => write!(f, "{c}"),
            Expr::X => write!(f, "x"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Num(f64),
    X,
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Num(v) => write!(f, "number {v}"),
            TokenKind::X => write!(f, "'x'"),
            TokenKind::Plus => write!(f, "'+'"),
            TokenKind::Minus => write!(f, "'-'"),
            TokenKind::Star => write!(f, "'*'"),
            TokenKind::Slash => write!(f, "'/'"),
            TokenKind::LParen => write!(f, "'('"),
            TokenKind::RParen => write!(f, "')'"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    line: usize,
    col: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut line, mut col) = (1usize, 1usize);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let kind = match c {
            '\n' => {
                line += 1;
                col = 1;
                i += 1;
                continue;
            }
            c if c.is_whitespace() => {
                col += 1;
                i += 1;
                continue;
            }
            '+' => TokenKind::Plus,
            '-' | '−' => TokenKind::Minus,
            '*' | '×' => TokenKind::Star,
            '/' | '÷' => TokenKind::Slash,
            '(' => TokenKind::LParen,
            ')' => TokenKind::RParen,
            'x' => TokenKind::X,
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let v = text
                    .parse::<f64>()
                    .map_err(|_| ParseError::new(tl, tc, format!("malformed number '{text}'")))?;
                col += i - start;
                out.push(Token {
                    kind: TokenKind::Num(v),
                    line: tl,
                    col: tc,
                });
                continue;
            }
            other => {
                return Err(ParseError::new(tl, tc, format!("unexpected character '{other}'")));
            }
        };
        out.push(Token {
            kind,
            line: tl,
            col: tc,
        });
        i += 1;
        col += 1;
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&TokenKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn end_position(&self) -> (usize, usize) {
        self.tokens.last().map(|t| (t.line, t.col + 1)).unwrap_or((1, 1))
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(TokenKind::Plus) => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(TokenKind::Minus) => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(TokenKind::Star) => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(TokenKind::Slash) => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let Some(tok) = self.tokens.get(self.pos).cloned() else {
            let (l, c) = self.end_position();
            return Err(ParseError::new(l, c, "unexpected end of input".into()));
        };
        self.pos += 1;
        match tok.kind {
            TokenKind::Num(v) => Ok(Expr::Const(v)),
            TokenKind::X => Ok(Expr::X),
            TokenKind::Minus => Ok(Expr::Neg(Box::new(self.factor()?))),
            TokenKind::LParen => {
                let e = self.expr()?;
                match self.tokens.get(self.pos) {
                    Some(t) if t.kind == TokenKind::RParen => {
                        self.pos += 1;
                        Ok(e)
                    }
                    Some(t) => Err(ParseError::new(
                        t.line,
                        t.col,
                        format!("expected ')', found {}", t.kind),
                    )),
                    None => {
                        let (l, c) = self.end_position();
                        Err(ParseError::new(l, c, "expected ')'".into()))
                    }
                }
            }
            other => Err(ParseError::new(tok.line, tok.col, format!("unexpected {other}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_halves_x_is_affine() {
        let e = Expr::parse("3*x/2").unwrap();
        assert_eq!(e.as_affine(), Some((1.5, 0.0)));
        assert_eq!(e.derivative().is_const(), Some(1.5));
    }

    #[test]
    fn precedence_and_unary_minus() {
        let e = Expr::parse("1 - 2*x + -(x - 3)/4").unwrap();
        let x = 0.3;
        assert!((e.eval(x) - (1.0 - 2.0 * x + -(x - 3.0) / 4.0)).abs() < 1e-15);
        let e = Expr::parse("1 − 2×x").unwrap();
        assert_eq!(e.as_affine(), Some((-2.0, 1.0)));
    }

    #[test]
    fn quotient_rule() {
        let e = Expr::parse("x*x/(1+x)").unwrap();
        let d = e.derivative();
        for &x in &[0.1, 0.5, 0.9] {
            let exact = (x * x + 2.0 * x) / ((1.0 + x) * (1.0 + x));
            assert!((d.eval(x) - exact).abs() < 1e-12);
        }
        assert!(e.as_affine().is_none());
    }

    #[test]
    fn substitution_composes() {
        let outer = Expr::parse("2*x - 1").unwrap();
        let inner = Expr::parse("x*x").unwrap();
        let c = outer.substitute(&inner);
        assert!((c.eval(0.5) - (-0.5)).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_position() {
        let err = Expr::parse("2*x +\n  (x * )").unwrap_err();
        assert_eq!((err.line, err.col), (2, 8));
        let err = Expr::parse("2*y").unwrap_err();
        assert_eq!((err.line, err.col), (1, 3));
        let err = Expr::parse("(x + 1").unwrap_err();
        assert!(err.message.contains("')'"));
        assert!(Expr::parse("").is_err());
        assert!(Expr::parse("x x").is_err());
    }
}
