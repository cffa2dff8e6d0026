//! Line-oriented problem-file reader.
//!
//! ```text
//! problem NAME
//! vars x1 x2 ... xn
//! objective EXPR
//! pair (EXPR, EXPR)        # one or more
//! ineq EXPR                # g(x) >= 0, optional, repeatable
//! eq EXPR                  # h(x) = 0, optional, repeatable
//! start NUMBER ...
//! ```
//!
//! `problem` defaults to `unnamed` and `start` to the zero vector when omitted.

use crate::error::ParseError;
use crate::expr::Expr;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64, bool),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    col: usize,
}

fn tokenize(line: &str, lineno: usize) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let simple = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = simple {
            out.push(Token { tok, col });
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            let mut integral = true;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                integral &= chars[i] != '.';
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    integral = false;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value: f64 = text
                .parse()
                .map_err(|_| ParseError::new(lineno, col, format!("malformed number `{text}`")))?;
            out.push(Token {
                tok: Tok::Num(value, integral),
                col,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                col,
            });
            continue;
        }
        return Err(ParseError::new(lineno, col, format!("unexpected character `{c}`")));
    }
    Ok(out)
}

struct ExprParser<'a> {
    toks: &'a [Token],
    pos: usize,
    line: usize,
    end_col: usize,
    nvars: usize,
}

impl<'a> ExprParser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |t| t.col)
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::new(self.line, self.col(), msg)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(Tok::Minus) => {
                self.pos += 1;
                // A negated literal is stored as a negative constant.
                Ok(match self.unary()? {
                    Expr::Const(c) => Expr::Const(-c),
                    e => Expr::Neg(Box::new(e)),
                })
            }
            Some(Tok::Plus) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let mut base = self.primary()?;
        while self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            let negative = if self.peek() == Some(&Tok::Minus) {
                self.pos += 1;
                true
            } else {
                false
            };
            match self.peek() {
                Some(Tok::Num(v, true)) if *v <= i32::MAX as f64 => {
                    let k = *v as i32;
                    self.pos += 1;
                    base = Expr::Pow(Box::new(base), if negative { -k } else { k });
                }
                _ => return Err(self.err("exponent must be an integer literal")),
            }
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let col = self.col();
        match self.peek().cloned() {
            Some(Tok::Num(v, _)) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                let idx = var_index(&name)
                    .ok_or_else(|| ParseError::new(self.line, col, format!("unknown identifier `{name}`")))?;
                if idx >= self.nvars {
                    return Err(ParseError::new(
                        self.line,
                        col,
                        format!("variable `{name}` is not declared"),
                    ));
                }
                Ok(Expr::Var(idx))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            _ => Err(self.err("expected an expression")),
        }
    }
}

/// `xK` with `K >= 1` maps to index `K - 1`.
fn var_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    digits.parse::<usize>().ok().map(|k| k - 1)
}

/// Parsed but not yet compiled problem description.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemText {
    pub name: String,
    pub nvars: usize,
    pub objective: Expr,
    pub pairs: Vec<(Expr, Expr)>,
    pub ineqs: Vec<Expr>,
    pub eqs: Vec<Expr>,
    pub start: Vec<f64>,
}

fn full_expr(toks: &[Token], line: usize, end_col: usize, nvars: usize) -> Result<Expr, ParseError> {
    let mut p = ExprParser {
        toks,
        pos: 0,
        line,
        end_col,
        nvars,
    };
    let e = p.expr()?;
    if p.pos != toks.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

pub fn parse_problem(text: &str) -> Result<ProblemText, ParseError> {
    let mut name: Option<String> = None;
    let mut nvars: Option<usize> = None;
    let mut objective: Option<Expr> = None;
    let mut pairs = Vec::new();
    let mut ineqs = Vec::new();
    let mut eqs = Vec::new();
    let mut start: Option<Vec<f64>> = None;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let toks = tokenize(raw, line)?;
        let Some(first) = toks.first() else { continue };
        let end_col = raw.chars().count() + 1;
        let Tok::Ident(keyword) = &first.tok else {
            return Err(ParseError::new(line, first.col, "expected a keyword"));
        };
        let rest = &toks[1..];
        let need_vars =
            |col: usize| nvars.ok_or_else(|| ParseError::new(line, col, "`vars` must come before expressions"));
        match keyword.as_str() {
            "problem" => {
                if name.is_some() {
                    return Err(ParseError::new(line, first.col, "duplicate `problem` line"));
                }
                match rest {
                    [Token { tok: Tok::Ident(n), .. }] => name = Some(n.clone()),
                    _ => {
                        let col = rest.first().map_or(end_col, |t| t.col);
                        return Err(ParseError::new(line, col, "expected a single problem name"));
                    }
                }
            }
            "vars" => {
                if nvars.is_some() {
                    return Err(ParseError::new(line, first.col, "duplicate `vars` line"));
                }
                if rest.is_empty() {
                    return Err(ParseError::new(line, end_col, "expected at least one variable"));
                }
                for (k, t) in rest.iter().enumerate() {
                    let expected = format!("x{}", k + 1);
                    match &t.tok {
                        Tok::Ident(v) if *v == expected => {}
                        _ => return Err(ParseError::new(line, t.col, format!("expected variable `{expected}`"))),
                    }
                }
                nvars = Some(rest.len());
            }
            "objective" => {
                let n = need_vars(first.col)?;
                if objective.is_some() {
                    return Err(ParseError::new(line, first.col, "duplicate `objective` line"));
                }
                objective = Some(full_expr(rest, line, end_col, n)?);
            }
            "ineq" => {
                let n = need_vars(first.col)?;
                ineqs.push(full_expr(rest, line, end_col, n)?);
            }
            "eq" => {
                let n = need_vars(first.col)?;
                eqs.push(full_expr(rest, line, end_col, n)?);
            }
            "pair" => {
                let n = need_vars(first.col)?;
                let mut p = ExprParser {
                    toks: rest,
                    pos: 0,
                    line,
                    end_col,
                    nvars: n,
                };
                p.expect(Tok::LParen, "`(`")?;
                let a = p.expr()?;
                p.expect(Tok::Comma, "`,`")?;
                let b = p.expr()?;
                p.expect(Tok::RParen, "`)`")?;
                if p.pos != rest.len() {
                    return Err(p.err("unexpected trailing input"));
                }
                pairs.push((a, b));
            }
            "start" => {
                let n = need_vars(first.col)?;
                if start.is_some() {
                    return Err(ParseError::new(line, first.col, "duplicate `start` line"));
                }
                let mut values = Vec::new();
                let mut i = 0;
                while i < rest.len() {
                    let sign = match rest[i].tok {
                        Tok::Minus => {
                            i += 1;
                            -1.0
                        }
                        Tok::Plus => {
                            i += 1;
                            1.0
                        }
                        _ => 1.0,
                    };
                    match rest.get(i) {
                        Some(Token {
                            tok: Tok::Num(v, _), ..
                        }) => values.push(sign * v),
                        Some(t) => return Err(ParseError::new(line, t.col, "expected a number")),
                        None => return Err(ParseError::new(line, end_col, "expected a number")),
                    }
                    i += 1;
                }
                if values.len() != n {
                    return Err(ParseError::new(
                        line,
                        first.col,
                        format!("start has {} values but {n} variables are declared", values.len()),
                    ));
                }
                start = Some(values);
            }
            other => return Err(ParseError::new(line, first.col, format!("unknown keyword `{other}`"))),
        }
    }

    let eof = last_line + 1;
    let nvars = nvars.ok_or_else(|| ParseError::new(eof, 1, "missing `vars` line"))?;
    let objective = objective.ok_or_else(|| ParseError::new(eof, 1, "missing `objective` line"))?;
    if pairs.is_empty() {
        return Err(ParseError::new(eof, 1, "at least one `pair` is required"));
    }
    Ok(ProblemText {
        name: name.unwrap_or_else(|| "unnamed".to_string()),
        nvars,
        objective,
        pairs,
        ineqs,
        eqs,
        start: start.unwrap_or_else(|| vec![0.0; nvars]),
    })
}

/// Parse a single expression over `nvars` variables.
pub fn parse_expr(text: &str, nvars: usize) -> Result<Expr, ParseError> {
    let toks = tokenize(text, 1)?;
    full_expr(&toks, 1, text.chars().count() + 1, nvars)
}
