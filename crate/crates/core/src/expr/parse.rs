use super::{Expr, Func, ParseError};

/// Parses `text` against `n` upper and `m` lower variables.
pub fn parse(text: &str, n: usize, m: usize) -> Result<Expr, ParseError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        n,
        m,
    };
    p.skip_ws();
    if p.at_end() {
        return Err(p.error("empty expression"));
    }
    let e = p.sum()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.error(format!("unexpected `{}`", p.src[p.pos] as char)));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    n: usize,
    m: usize,
}

impl Parser<'_> {
    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|c| c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.product()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.product()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.product()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(b'-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else if self.eat(b'+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let k = self.exponent()?;
            Ok(Expr::Pow(Box::new(base), k))
        } else {
            Ok(base)
        }
    }

    fn exponent(&mut self) -> Result<i32, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let k = if self.eat(b'(') {
            let k = self.signed_int()?;
            if !self.eat(b')') {
                return Err(self.error("expected `)` after exponent"));
            }
            k
        } else {
            self.signed_int()?
        };
        if self.eat(b'^') {
            let rest = self.exponent()?;
            let rest = u32::try_from(rest).map_err(|_| ParseError::Syntax {
                offset: start,
                message: "negative exponent inside an exponent tower".into(),
            })?;
            return k.checked_pow(rest).ok_or(ParseError::Syntax {
                offset: start,
                message: "exponent overflow".into(),
            });
        }
        Ok(k)
    }

    fn signed_int(&mut self) -> Result<i32, ParseError> {
        self.skip_ws();
        let neg = if self.eat(b'-') {
            true
        } else {
            self.eat(b'+');
            false
        };
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("exponent must be an integer literal"));
        }
        if matches!(self.peek(), Some(b'.' | b'e' | b'E')) {
            return Err(self.error("exponent must be an integer literal"));
        }
        let digits = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        let v: i32 = digits.parse().map_err(|_| ParseError::Syntax {
            offset: start,
            message: "exponent overflow".into(),
        })?;
        Ok(if neg { -v } else { v })
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.sum()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == b'_') {
                    self.pos += 1;
                }
                let ident = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii ident");
                if let Some(f) = Func::from_name(ident) {
                    if !self.eat(b'(') {
                        return Err(self.error(format!("expected `(` after `{ident}`")));
                    }
                    let arg = self.sum()?;
                    if !self.eat(b')') {
                        return Err(self.error("expected `)`"));
                    }
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                self.variable(ident, start)
            }
            Some(c) => Err(self.error(format!("unexpected `{}`", c as char))),
        }
    }

    fn variable(&self, ident: &str, start: usize) -> Result<Expr, ParseError> {
        let (kind, digits) = ident.split_at(1);
        let index = if !digits.is_empty() && digits.bytes().all(|c| c.is_ascii_digit()) {
            digits.parse::<usize>().ok()
        } else {
            None
        };
        let (Some(index), "x" | "y") = (index, kind) else {
            return Err(ParseError::Syntax {
                offset: start,
                message: format!("unknown identifier `{ident}`"),
            });
        };
        let declared = if kind == "x" { self.n } else { self.m };
        if index == 0 || index > declared {
            return Err(ParseError::Index {
                name: ident.to_string(),
                declared,
            });
        }
        Ok(if kind == "x" {
            Expr::X(index - 1)
        } else {
            Expr::Y(index - 1)
        })
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.peek().is_some_and(|c| c.is_ascii_digit()) {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut count = digits(self);
        if self.peek() == Some(b'.') {
            self.pos += 1;
            count += digits(self);
        }
        if count == 0 {
            return Err(ParseError::Syntax {
                offset: start,
                message: "malformed number".into(),
            });
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
                return Err(self.error("malformed exponent in number"));
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii number");
        text.parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| ParseError::Syntax {
                offset: start,
                message: format!("malformed number `{text}`"),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(e: Expr) -> Box<Expr> {
        Box::new(e)
    }

    #[test]
    fn sum_of_squares() {
        let e = parse("x1^2 + y1^2", 1, 1).unwrap();
        assert_eq!(
            e,
            Expr::Add(b(Expr::Pow(b(Expr::X(0)), 2)), b(Expr::Pow(b(Expr::Y(0)), 2)))
        );
    }

    #[test]
    fn product_of_two_parenthesized_sums() {
        let e = parse("(x1^2 - y1 - 1)*(x1^2 + y1^2 - 1)", 1, 1).unwrap();
        let Expr::Mul(l, r) = e else { panic!("expected Mul") };
        assert!(matches!(*l, Expr::Sub(..)));
        assert!(matches!(*r, Expr::Sub(..)));
    }

    #[test]
    fn out_of_range_variable() {
        assert!(matches!(parse("y3", 1, 2), Err(ParseError::Index { .. })));
        assert!(matches!(parse("x5 + 1", 2, 0), Err(ParseError::Index { .. })));
        assert!(matches!(parse("x0", 2, 0), Err(ParseError::Index { .. })));
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        match parse("x1 + * 2", 1, 0) {
            Err(ParseError::Syntax { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("", 1, 1), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("x1^1.5", 1, 1), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("foo(x1)", 1, 1), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("(x1", 1, 1), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn precedence_rules() {
        // unary minus binds looser than ^
        assert_eq!(parse("-x1^2", 1, 0).unwrap(), Expr::Neg(b(Expr::Pow(b(Expr::X(0)), 2))));
        // ^ is right associative over integer literals
        assert_eq!(parse("x1^2^3", 1, 0).unwrap(), Expr::Pow(b(Expr::X(0)), 8));
        assert_eq!(parse("x1^-2", 1, 0).unwrap(), Expr::Pow(b(Expr::X(0)), -2));
        assert_eq!(
            parse("1 - 2 - 3", 0, 0).unwrap(),
            Expr::Sub(b(Expr::Sub(b(Expr::Const(1.0)), b(Expr::Const(2.0)))), b(Expr::Const(3.0)))
        );
        assert_eq!(parse(" 2.5e-1 ", 0, 0).unwrap(), Expr::Const(0.25));
    }
}
