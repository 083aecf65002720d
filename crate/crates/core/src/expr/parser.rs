//! Recursive-descent parser for chart expressions.
//!
//! Grammar (whitespace-insensitive, byte offsets in errors):
//!
//! ```text
//! expr     := term (('+' | '-') term)*
//! term     := factor (('*' | '/') factor)*
//! factor   := '-' factor | power
//! power    := atom ('^' exponent)?
//! atom     := NUMBER | FUNC '(' expr ')' | COORD | '(' expr ')'
//! exponent := ['-'] NUMBER | '(' ['-'] NUMBER ['/' NUMBER] ')'
//! FUNC     := 'sin' | 'cos' | 'exp' | 'log'
//! ```
//!
//! Exponents must be rational constants: an integer, a ratio of integers, or
//! a short decimal literal (converted exactly, e.g. `0.5` to `1/2`). A `-`
//! applied directly to a numeric literal folds into the constant.

use std::sync::Arc;

use super::{Chart, Expr, ExprError, Node, Ratio};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, String),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

struct Token {
    tok: Tok,
    offset: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let offset = i;
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
            }
            b'+' | b'-' | b'*' | b'/' | b'^' | b'(' | b')' => {
                let tok = match b {
                    b'+' => Tok::Plus,
                    b'-' => Tok::Minus,
                    b'*' => Tok::Star,
                    b'/' => Tok::Slash,
                    b'^' => Tok::Caret,
                    b'(' => Tok::LParen,
                    _ => Tok::RParen,
                };
                out.push(Token { tok, offset });
                i += 1;
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    if i >= bytes.len() || !bytes[i].is_ascii_digit() {
                        return Err(ExprError::Syntax {
                            offset: i.min(bytes.len()),
                            message: "expected digits after decimal point".into(),
                        });
                    }
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
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
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
                    offset: start,
                    message: format!("invalid number literal `{text}`"),
                })?;
                out.push(Token {
                    tok: Tok::Num(value, text.to_string()),
                    offset: start,
                });
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(src[start..i].to_string()),
                    offset: start,
                });
            }
            _ => {
                return Err(ExprError::Syntax {
                    offset,
                    message: format!("unexpected character `{}`", &src[i..].chars().next().unwrap()),
                });
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    chart: &'a Arc<Chart>,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |t| t.offset)
    }

    fn bump(&mut self) -> Option<&Token> {
        let t = self.tokens.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok, what: &str) -> Result<(), ExprError> {
        if self.peek() == Some(tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(ExprError::Syntax {
                offset: self.offset(),
                message: format!("expected {what}"),
            })
        }
    }

    fn expr(&mut self) -> Result<Arc<Node>, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Arc::new(Node::Add(lhs, rhs));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Arc::new(Node::Sub(lhs, rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Arc<Node>, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = Arc::new(Node::Mul(lhs, rhs));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = Arc::new(Node::Div(lhs, rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Arc<Node>, ExprError> {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            // `-` directly on a numeric literal folds into the constant,
            // unless the literal is a power base (`-2^2` means `-(2^2)`).
            if let Some(Tok::Num(v, _)) = self.peek() {
                let followed_by_caret =
                    matches!(self.tokens.get(self.pos + 1).map(|t| &t.tok), Some(Tok::Caret));
                if !followed_by_caret {
                    let v = *v;
                    self.pos += 1;
                    return Ok(Arc::new(Node::Const(-v)));
                }
            }
            let inner = self.factor()?;
            return Ok(Arc::new(Node::Neg(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Arc<Node>, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            let exp = self.exponent()?;
            return Ok(Arc::new(Node::Pow(base, exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Arc<Node>, ExprError> {
        let offset = self.offset();
        let tok = match self.bump() {
            Some(t) => t.tok.clone(),
            None => {
                return Err(ExprError::Syntax {
                    offset,
                    message: "unexpected end of input".into(),
                })
            }
        };
        match tok {
            Tok::Num(v, _) => Ok(Arc::new(Node::Const(v))),
            Tok::LParen => {
                let inner = self.expr()?;
                self.eat(&Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let func: Option<fn(Arc<Node>) -> Node> = match name.as_str() {
                    "sin" => Some(Node::Sin),
                    "cos" => Some(Node::Cos),
                    "exp" => Some(Node::Exp),
                    "log" => Some(Node::Log),
                    _ => None,
                };
                if let Some(ctor) = func {
                    self.eat(&Tok::LParen, "`(` after function name")?;
                    let arg = self.expr()?;
                    self.eat(&Tok::RParen, "`)`")?;
                    return Ok(Arc::new(ctor(arg)));
                }
                match self.chart.index_of(&name) {
                    Some(i) => Ok(Arc::new(Node::Var(i))),
                    None => Err(ExprError::UnknownIdentifier { name, offset }),
                }
            }
            _ => Err(ExprError::Syntax {
                offset,
                message: "expected a number, coordinate, function call, or `(`".into(),
            }),
        }
    }

    /// Exponents are rational constants only.
    fn exponent(&mut self) -> Result<Ratio, ExprError> {
        if self.peek() == Some(&Tok::LParen) {
            self.pos += 1;
            let r = self.signed_ratio(true)?;
            self.eat(&Tok::RParen, "`)` after exponent")?;
            return Ok(r);
        }
        self.signed_ratio(false)
    }

    /// The `p/q` ratio form is only recognized inside parentheses, so that
    /// `y^2/(x + 3)` keeps its ordinary meaning `(y^2)/(x + 3)`.
    fn signed_ratio(&mut self, in_parens: bool) -> Result<Ratio, ExprError> {
        let negative = if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            true
        } else {
            false
        };
        let num = self.exponent_number()?;
        let r = if in_parens && self.peek() == Some(&Tok::Slash) {
            self.pos += 1;
            let (den_off, (_, den_text)) = self.number_token()?;
            let d = ratio_from_literal(&den_text, den_off)?;
            if !d.is_integer() || d.num() == 0 {
                return Err(ExprError::Syntax {
                    offset: den_off,
                    message: "exponent denominator must be a nonzero integer".into(),
                });
            }
            if !num.is_integer() {
                return Err(ExprError::Syntax {
                    offset: den_off,
                    message: "ratio exponents must be integer/integer".into(),
                });
            }
            Ratio::new(num.num(), d.num())
        } else {
            num
        };
        Ok(if negative { Ratio::new(-r.num(), r.den()) } else { r })
    }

    fn number_token(&mut self) -> Result<(usize, (f64, String)), ExprError> {
        let offset = self.offset();
        match self.bump().map(|t| t.tok.clone()) {
            Some(Tok::Num(v, text)) => Ok((offset, (v, text))),
            _ => Err(ExprError::Syntax {
                offset,
                message: "expected a numeric exponent".into(),
            }),
        }
    }

    fn exponent_number(&mut self) -> Result<Ratio, ExprError> {
        let (offset, (_, text)) = self.number_token()?;
        ratio_from_literal(&text, offset)
    }
}

/// Exact conversion of a decimal literal to a rational (`0.5` → `1/2`).
/// Scientific notation is rejected in exponent position.
fn ratio_from_literal(text: &str, offset: usize) -> Result<Ratio, ExprError> {
    if text.contains(['e', 'E']) {
        return Err(ExprError::Syntax {
            offset,
            message: "scientific notation is not allowed in exponents".into(),
        });
    }
    let err = |msg: &str| ExprError::Syntax {
        offset,
        message: msg.into(),
    };
    match text.split_once('.') {
        None => {
            let n: i64 = text.parse().map_err(|_| err("exponent integer out of range"))?;
            Ok(Ratio::integer(n))
        }
        Some((int, frac)) => {
            if frac.len() > 12 {
                return Err(err("exponent has too many decimal digits"));
            }
            let int_part: i64 = if int.is_empty() {
                0
            } else {
                int.parse().map_err(|_| err("exponent integer out of range"))?
            };
            let frac_part: i64 = frac.parse().map_err(|_| err("invalid exponent fraction"))?;
            let den = 10_i64.pow(frac.len() as u32);
            let num = int_part
                .checked_mul(den)
                .and_then(|v| v.checked_add(frac_part))
                .ok_or_else(|| err("exponent out of range"))?;
            Ok(Ratio::new(num, den))
        }
    }
}

/// Parse `source` into an expression over `chart`.
pub fn parse(source: &str, chart: &Arc<Chart>) -> Result<Expr, ExprError> {
    let tokens = lex(source)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        chart,
        end: source.len(),
    };
    let root = parser.expr()?;
    if parser.pos != parser.tokens.len() {
        return Err(ExprError::Syntax {
            offset: parser.offset(),
            message: "unexpected trailing input".into(),
        });
    }
    Ok(Expr::from_root(chart, root))
}
