//! Tiny expression language for scenario files.
//!
//! Grammar: `+ - * / ^` with usual precedence (`^` binds tightest,
//! right-associative, exponent must be a numeric literal), parentheses,
//! float literals, `pi`, the coordinates `x1 x2 v y4`, the functions
//! `exp ln sin cos sech sqrt abs`, and free identifiers, which become named
//! parameters bound at run time.  Integer exponents map to `powi`, others
//! to `powf`.

use crate::error::{Error, Result};
use crate::fields::ScalarField;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn perr(line: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, col, msg: msg.into() }
}

fn lex(src: &str) -> Result<Vec<Spanned>> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut it = src.chars().peekable();
    while let Some(&c) = it.peek() {
        let (tl, tc) = (line, col);
        let bump = |it: &mut std::iter::Peekable<std::str::Chars>,
                        line: &mut usize,
                        col: &mut usize| {
            let c = it.next().unwrap();
            if c == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            c
        };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump(&mut it, &mut line, &mut col);
            }
            '+' => {
                bump(&mut it, &mut line, &mut col);
                out.push(Spanned { tok: Tok::Plus, line: tl, col: tc });
            }
            '-' => {
                bump(&mut it, &mut line, &mut col);
                out.push(Spanned { tok: Tok::Minus, line: tl, col: tc });
            }
            '*' => {
                bump(&mut it, &mut line, &mut col);
                out.push(Spanned { tok: Tok::Star, line: tl, col: tc });
            }
            '/' => {
                bump(&mut it, &mut line, &mut col);
                out.push(Spanned { tok: Tok::Slash, line: tl, col: tc });
            }
            '^' => {
                bump(&mut it, &mut line, &mut col);
                out.push(Spanned { tok: Tok::Caret, line: tl, col: tc });
            }
            '(' => {
                bump(&mut it, &mut line, &mut col);
                out.push(Spanned { tok: Tok::LParen, line: tl, col: tc });
            }
            ')' => {
                bump(&mut it, &mut line, &mut col);
                out.push(Spanned { tok: Tok::RParen, line: tl, col: tc });
            }
            c if c.is_ascii_digit() || c == '.' => {
                let mut s = String::new();
                while let Some(&d) = it.peek() {
                    if d.is_ascii_digit() || d == '.' {
                        s.push(bump(&mut it, &mut line, &mut col));
                    } else if (d == 'e' || d == 'E')
                        && !s.is_empty()
                        && s.chars().all(|x| x.is_ascii_digit() || x == '.')
                    {
                        // Exponent part: e, E, optionally signed.
                        s.push(bump(&mut it, &mut line, &mut col));
                        if let Some(&sg) = it.peek() {
                            if sg == '+' || sg == '-' {
                                s.push(bump(&mut it, &mut line, &mut col));
                            }
                        }
                    } else {
                        break;
                    }
                }
                let n: f64 = s
                    .parse()
                    .map_err(|_| perr(tl, tc, format!("malformed number `{s}`")))?;
                out.push(Spanned { tok: Tok::Num(n), line: tl, col: tc });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&d) = it.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        s.push(bump(&mut it, &mut line, &mut col));
                    } else {
                        break;
                    }
                }
                out.push(Spanned { tok: Tok::Ident(s), line: tl, col: tc });
            }
            other => {
                return Err(perr(tl, tc, format!("unexpected character `{other}`")));
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Spanned> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn end(&self) -> (usize, usize) {
        self.toks
            .last()
            .map(|t| (t.line, t.col + 1))
            .unwrap_or((1, 1))
    }

    fn expr(&mut self) -> Result<ScalarField> {
        let mut lhs = self.term()?;
        while let Some(t) = self.peek() {
            let op = t.tok.clone();
            match op {
                Tok::Plus => {
                    self.next();
                    lhs = lhs + self.term()?;
                }
                Tok::Minus => {
                    self.next();
                    lhs = lhs - self.term()?;
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<ScalarField> {
        let mut lhs = self.unary()?;
        while let Some(t) = self.peek() {
            let op = t.tok.clone();
            match op {
                Tok::Star => {
                    self.next();
                    lhs = lhs * self.unary()?;
                }
                Tok::Slash => {
                    self.next();
                    lhs = lhs / self.unary()?;
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<ScalarField> {
        if let Some(t) = self.peek() {
            if t.tok == Tok::Minus {
                self.next();
                return Ok(-self.unary()?);
            }
            if t.tok == Tok::Plus {
                self.next();
                return self.unary();
            }
        }
        self.power()
    }

    fn power(&mut self) -> Result<ScalarField> {
        let base = self.atom()?;
        if let Some(t) = self.peek() {
            if t.tok == Tok::Caret {
                let (l, c) = (t.line, t.col);
                self.next();
                // Exponent: numeric literal, optionally signed or
                // parenthesized, so `h^-2` and `h^(-1.5)` both work.
                let expo = self.exponent_literal(l, c)?;
                if expo.fract() == 0.0 && expo.abs() <= i32::MAX as f64 {
                    return Ok(base.powi(expo as i32));
                }
                return Ok(base.powf(expo));
            }
        }
        Ok(base)
    }

    fn exponent_literal(&mut self, l: usize, c: usize) -> Result<f64> {
        let mut sign = 1.0;
        let mut parens = 0usize;
        loop {
            match self.peek().map(|t| t.tok.clone()) {
                Some(Tok::Minus) => {
                    sign = -sign;
                    self.next();
                }
                Some(Tok::Plus) => {
                    self.next();
                }
                Some(Tok::LParen) => {
                    parens += 1;
                    self.next();
                }
                _ => break,
            }
        }
        let n = match self.next() {
            Some(Spanned { tok: Tok::Num(n), .. }) => n,
            other => {
                let (el, ec) = other.map(|t| (t.line, t.col)).unwrap_or((l, c + 1));
                return Err(perr(el, ec, "exponent must be a numeric literal"));
            }
        };
        for _ in 0..parens {
            match self.next() {
                Some(Spanned { tok: Tok::RParen, .. }) => {}
                other => {
                    let (el, ec) = other.map(|t| (t.line, t.col)).unwrap_or(self.end());
                    return Err(perr(el, ec, "expected `)` after exponent"));
                }
            }
        }
        Ok(sign * n)
    }

    fn atom(&mut self) -> Result<ScalarField> {
        let t = match self.next() {
            Some(t) => t,
            None => {
                let (l, c) = self.end();
                return Err(perr(l, c, "unexpected end of expression"));
            }
        };
        match t.tok {
            Tok::Num(n) => Ok(ScalarField::constant(n)),
            Tok::LParen => {
                let inner = self.expr()?;
                match self.next() {
                    Some(Spanned { tok: Tok::RParen, .. }) => Ok(inner),
                    other => {
                        let (el, ec) = other.map(|x| (x.line, x.col)).unwrap_or(self.end());
                        Err(perr(el, ec, "expected `)`"))
                    }
                }
            }
            Tok::Ident(name) => {
                let is_call = matches!(self.peek(), Some(Spanned { tok: Tok::LParen, .. }));
                if is_call {
                    self.next();
                    let arg = self.expr()?;
                    match self.next() {
                        Some(Spanned { tok: Tok::RParen, .. }) => {}
                        other => {
                            let (el, ec) =
                                other.map(|x| (x.line, x.col)).unwrap_or(self.end());
                            return Err(perr(el, ec, "expected `)` after argument"));
                        }
                    }
                    match name.as_str() {
                        "exp" => Ok(arg.exp()),
                        "ln" => Ok(arg.ln()),
                        "sin" => Ok(arg.sin()),
                        "cos" => Ok(arg.cos()),
                        "sech" => Ok(arg.sech()),
                        "sqrt" => Ok(arg.sqrt()),
                        "abs" => Ok(arg.abs()),
                        _ => Err(perr(
                            t.line,
                            t.col,
                            format!(
                                "unknown function `{name}` (available: exp ln sin cos sech sqrt abs)"
                            ),
                        )),
                    }
                } else {
                    match name.as_str() {
                        "pi" => Ok(ScalarField::constant(std::f64::consts::PI)),
                        "x1" => Ok(ScalarField::x1()),
                        "x2" => Ok(ScalarField::x2()),
                        "v" => Ok(ScalarField::v()),
                        "y4" => Ok(ScalarField::y4()),
                        _ => Ok(ScalarField::param(&name)),
                    }
                }
            }
            other => Err(perr(t.line, t.col, format!("unexpected token `{other:?}`"))),
        }
    }
}

/// Parse the scenario expression language into a [`ScalarField`].
pub fn parse_expression(src: &str) -> Result<ScalarField> {
    let toks = lex(src)?;
    if toks.is_empty() {
        return Err(perr(1, 1, "empty expression"));
    }
    let mut p = Parser { toks, pos: 0 };
    let f = p.expr()?;
    if let Some(extra) = p.peek() {
        return Err(perr(
            extra.line,
            extra.col,
            format!("trailing input starting at `{:?}`", extra.tok),
        ));
    }
    Ok(f)
}
