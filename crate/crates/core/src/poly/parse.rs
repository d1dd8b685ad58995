//! Recursive-descent parser for polynomial text.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := ('+' | '-') unary | power
//! power  := atom ('^' integer)?
//! atom   := number | 'x' integer | 'x' | '(' expr ')'
//! ```
//!
//! Division is accepted only by a nonzero constant. Variables are `x1..xn`;
//! a bare `x` means `x1` when `n == 1`.

use super::{PolyError, Polynomial};

pub fn parse_polynomial(text: &str, nvars: usize) -> Result<Polynomial, PolyError> {
    let mut parser = Parser { chars: text.char_indices().collect(), pos: 0, nvars };
    parser.skip_ws();
    if parser.peek().is_none() {
        return Err(parser.error("empty polynomial"));
    }
    let p = parser.expr()?;
    parser.skip_ws();
    if let Some(c) = parser.peek() {
        return Err(parser.error(&format!("unexpected character '{c}'")));
    }
    Ok(p)
}

/// Largest variable index mentioned in `text` (at least 1).
pub(crate) fn infer_nvars(text: &str) -> usize {
    let bytes = text.as_bytes();
    let mut best = 1;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'x' {
            let start = i + 1;
            let mut j = start;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            if j > start {
                if let Ok(k) = text[start..j].parse::<usize>() {
                    best = best.max(k);
                }
            }
            i = j;
        } else {
            i += 1;
        }
    }
    best
}

struct Parser {
    chars: Vec<(usize, char)>,
    pos: usize,
    nvars: usize,
}

impl Parser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn column(&self) -> usize {
        self.chars.get(self.pos).map(|&(i, _)| i + 1).unwrap_or_else(|| {
            self.chars.last().map(|&(i, c)| i + c.len_utf8() + 1).unwrap_or(1)
        })
    }

    fn error(&self, message: &str) -> PolyError {
        PolyError::Parse { column: self.column(), message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.term()?;
        loop {
            if self.eat('+') {
                acc = &acc + &self.term()?;
            } else if self.eat('-') {
                acc = &acc - &self.term()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.unary()?;
        loop {
            if self.eat('*') {
                acc = &acc * &self.unary()?;
            } else if self.eat('/') {
                let col = self.column();
                let d = self.unary()?;
                let is_const = d.monomials().all(|m| m.is_constant());
                let c = d.constant_term();
                if !is_const {
                    return Err(PolyError::Parse {
                        column: col,
                        message: "non-polynomial term: division by a non-constant".into(),
                    });
                }
                if c == 0.0 {
                    return Err(PolyError::Parse { column: col, message: "division by zero".into() });
                }
                acc = acc.scale(1.0 / c);
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Polynomial, PolyError> {
        if self.eat('-') {
            return Ok(-self.unary()?);
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Polynomial, PolyError> {
        let base = self.atom()?;
        if self.eat('^') {
            self.skip_ws();
            let start = self.pos;
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.error("exponent must be a non-negative integer"));
            }
            if matches!(self.peek(), Some('.') | Some('e') | Some('E')) {
                return Err(self.error("exponent must be a non-negative integer"));
            }
            let digits: String = self.chars[start..self.pos].iter().map(|&(_, c)| c).collect();
            let k: u32 = digits.parse().map_err(|_| self.error("exponent too large"))?;
            return Ok(base.pow(k));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Polynomial, PolyError> {
        self.skip_ws();
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some('x') => self.variable(),
            Some(c) if c.is_alphabetic() => {
                let start = self.pos;
                while matches!(self.peek(), Some(c) if c.is_alphanumeric() || c == '_') {
                    self.pos += 1;
                }
                let name: String = self.chars[start..self.pos].iter().map(|&(_, c)| c).collect();
                self.pos = start;
                Err(self.error(&format!("non-polynomial term: unknown identifier '{name}'")))
            }
            Some(c) => Err(self.error(&format!("unexpected character '{c}'"))),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Polynomial, PolyError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == '.') {
            self.pos += 1;
        }
        if matches!(self.peek(), Some('e') | Some('E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some('+') | Some('-')) {
                self.pos += 1;
            }
            let digits_start = self.pos;
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
            if digits_start == self.pos {
                self.pos = save;
            }
        }
        let text: String = self.chars[start..self.pos].iter().map(|&(_, c)| c).collect();
        let value: f64 = text.parse().map_err(|_| {
            PolyError::Parse { column: self.chars[start].0 + 1, message: format!("invalid number '{text}'") }
        })?;
        Ok(Polynomial::constant(self.nvars, value))
    }

    fn variable(&mut self) -> Result<Polynomial, PolyError> {
        let col = self.column();
        self.pos += 1;
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if matches!(self.peek(), Some(c) if c.is_alphabetic() || c == '_') {
            return Err(PolyError::Parse { column: col, message: "non-polynomial term: unknown identifier".into() });
        }
        let index = if start == self.pos {
            if self.nvars == 1 {
                1
            } else {
                return Err(PolyError::Parse {
                    column: col,
                    message: format!("bare 'x' is ambiguous with {} variables; use x1..x{}", self.nvars, self.nvars),
                });
            }
        } else {
            let digits: String = self.chars[start..self.pos].iter().map(|&(_, c)| c).collect();
            digits.parse::<usize>().unwrap_or(0)
        };
        if index == 0 || index > self.nvars {
            return Err(PolyError::Parse {
                column: col,
                message: format!("variable x{index} out of range for dimension {}", self.nvars),
            });
        }
        Ok(Polynomial::var(self.nvars, index - 1))
    }
}
