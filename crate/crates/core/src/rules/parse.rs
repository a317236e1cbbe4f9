use thiserror::Error;

use super::{CmpOp, Field, NumExpr, RuleAst};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at byte {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(String),
    LParen,
    RParen,
    LBrack,
    RBrack,
    Dot,
    Plus,
    Minus,
    Star,
    Op(CmpOp),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    start: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |offset, message: &str| ParseError {
        offset,
        message: message.to_owned(),
    };
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let single = |tok| Some((tok, 1));
        let simple = match c {
            b'(' => single(Tok::LParen),
            b')' => single(Tok::RParen),
            b'[' => single(Tok::LBrack),
            b']' => single(Tok::RBrack),
            b'+' => single(Tok::Plus),
            b'-' => single(Tok::Minus),
            b'*' => single(Tok::Star),
            b'<' | b'>' | b'=' | b'!' => {
                let eq = bytes.get(i + 1) == Some(&b'=');
                match (c, eq) {
                    (b'<', false) => Some((Tok::Op(CmpOp::Lt), 1)),
                    (b'<', true) => Some((Tok::Op(CmpOp::Le), 2)),
                    (b'>', false) => Some((Tok::Op(CmpOp::Gt), 1)),
                    (b'>', true) => Some((Tok::Op(CmpOp::Ge), 2)),
                    (b'=', true) => Some((Tok::Op(CmpOp::Eq), 2)),
                    (b'!', true) => Some((Tok::Op(CmpOp::Ne), 2)),
                    _ => return Err(err(start, "expected a comparison operator")),
                }
            }
            _ => None,
        };
        if let Some((tok, width)) = simple {
            out.push(Token { tok, start });
            i += width;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if bytes.get(i) == Some(&b'.') && bytes.get(i + 1).is_some_and(u8::is_ascii_digit) {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if matches!(bytes.get(i), Some(b'e' | b'E')) {
                let mut j = i + 1;
                if matches!(bytes.get(j), Some(b'+' | b'-')) {
                    j += 1;
                }
                if bytes.get(j).is_some_and(u8::is_ascii_digit) {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            out.push(Token {
                tok: Tok::Num(src[start..i].to_owned()),
                start,
            });
        } else if c == b'.' {
            out.push(Token {
                tok: Tok::Dot,
                start,
            });
            i += 1;
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(src[start..i].to_owned()),
                start,
            });
        } else {
            return Err(err(start, "unexpected character"));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.start)
    }

    fn fail<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(ParseError {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<()> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(format!("expected {what}"))
        }
    }

    fn keyword(&mut self, kw: &str) -> bool {
        match self.peek() {
            Some(Tok::Ident(s)) if s.eq_ignore_ascii_case(kw) => {
                self.pos += 1;
                true
            }
            _ => false,
        }
    }

    fn uint(&mut self) -> PResult<usize> {
        if let Some(Tok::Num(text)) = self.peek() {
            if text.bytes().all(|b| b.is_ascii_digit()) {
                if let Ok(n) = text.parse() {
                    self.pos += 1;
                    return Ok(n);
                }
            }
        }
        self.fail("expected a non-negative integer")
    }

    fn or(&mut self) -> PResult<RuleAst> {
        let mut lhs = self.and()?;
        while self.keyword("OR") {
            lhs = RuleAst::or(lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> PResult<RuleAst> {
        let mut lhs = self.not()?;
        while self.keyword("AND") {
            lhs = RuleAst::and(lhs, self.not()?);
        }
        Ok(lhs)
    }

    fn not(&mut self) -> PResult<RuleAst> {
        if self.keyword("NOT") {
            Ok(RuleAst::not(self.not()?))
        } else {
            self.atom()
        }
    }

    fn atom(&mut self) -> PResult<RuleAst> {
        if self.keyword("TRUE") {
            return Ok(RuleAst::Const(true));
        }
        if self.keyword("FALSE") {
            return Ok(RuleAst::Const(false));
        }
        if self.peek() != Some(&Tok::LParen) {
            return self.cmp();
        }
        // "(" opens a number when an operator follows its closing ")"
        if self.paren_opens_number() {
            self.cmp()
        } else {
            self.group()
        }
    }

    fn paren_opens_number(&self) -> bool {
        let mut depth = 0usize;
        for (j, t) in self.toks.iter().enumerate().skip(self.pos) {
            match t.tok {
                Tok::LParen => depth += 1,
                Tok::RParen => {
                    depth -= 1;
                    if depth == 0 {
                        return matches!(
                            self.toks.get(j + 1).map(|t| &t.tok),
                            Some(Tok::Op(_) | Tok::Plus | Tok::Minus | Tok::Star)
                        );
                    }
                }
                _ => {}
            }
        }
        false
    }

    fn group(&mut self) -> PResult<RuleAst> {
        self.expect(Tok::LParen, "'('")?;
        let inner = self.or()?;
        self.expect(Tok::RParen, "')'")?;
        Ok(inner)
    }

    fn cmp(&mut self) -> PResult<RuleAst> {
        let lhs = self.num()?;
        let Some(Tok::Op(op)) = self.peek().cloned() else {
            return self.fail("expected a comparison operator");
        };
        self.pos += 1;
        let rhs = self.num()?;
        Ok(RuleAst::Cmp(op, lhs, rhs))
    }

    fn num(&mut self) -> PResult<NumExpr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    lhs = NumExpr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    lhs = NumExpr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> PResult<NumExpr> {
        let mut lhs = self.factor()?;
        while self.peek() == Some(&Tok::Star) {
            self.pos += 1;
            lhs = NumExpr::Mul(Box::new(lhs), Box::new(self.factor()?));
        }
        Ok(lhs)
    }

    fn literal(&mut self, negate: bool) -> PResult<NumExpr> {
        let Some(Tok::Num(text)) = self.peek() else {
            return self.fail("expected a number");
        };
        match text.parse::<f64>() {
            Ok(x) if x.is_finite() => {
                self.pos += 1;
                Ok(NumExpr::Lit(if negate { -x } else { x }))
            }
            _ => self.fail("number out of range"),
        }
    }

    fn factor(&mut self) -> PResult<NumExpr> {
        match self.peek().cloned() {
            Some(Tok::Minus) => {
                self.pos += 1;
                self.literal(true)
            }
            Some(Tok::Num(_)) => self.literal(false),
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.num()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                match name.as_str() {
                    "feat" => {
                        self.expect(Tok::LBrack, "'['")?;
                        let i = self.uint()?;
                        self.expect(Tok::RBrack, "']'")?;
                        Ok(NumExpr::Field(Field::Feat(i)))
                    }
                    "degree" => Ok(NumExpr::Field(Field::Degree)),
                    "hop" => {
                        self.expect(Tok::LParen, "'('")?;
                        let hop = self.uint()?;
                        self.expect(Tok::RParen, "')'")?;
                        self.expect(Tok::Dot, "'.'")?;
                        let which = match self.peek() {
                            Some(Tok::Ident(s)) if s == "freq" || s == "l1" => s.clone(),
                            _ => return self.fail("expected 'freq' or 'l1'"),
                        };
                        self.pos += 1;
                        self.expect(Tok::LParen, "'('")?;
                        let arg = self.uint()?;
                        self.expect(Tok::RParen, "')'")?;
                        Ok(NumExpr::Field(if which == "freq" {
                            Field::Freq { hop, class: arg }
                        } else {
                            Field::L1 { hop, attr: arg }
                        }))
                    }
                    "I" => {
                        self.expect(Tok::LParen, "'('")?;
                        let inner = self.or()?;
                        self.expect(Tok::RParen, "')'")?;
                        Ok(NumExpr::Indicator(Box::new(inner)))
                    }
                    _ => {
                        self.pos -= 1;
                        self.fail(format!("unknown name '{name}'"))
                    }
                }
            }
            _ => self.fail("expected a number, a field, I(...) or '('"),
        }
    }
}

/// Parses rule text. Whitespace is insignificant; errors carry the byte
/// offset where parsing stopped.
pub fn parse_rule(text: &str) -> Result<RuleAst, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
    };
    let ast = p.or()?;
    if p.pos != p.toks.len() {
        return p.fail("unexpected trailing input");
    }
    Ok(ast)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lit(x: f64) -> NumExpr {
        NumExpr::Lit(x)
    }

    #[test]
    fn conjunction() {
        let ast = parse_rule("hop(1).freq(1) >= 0.5 AND feat[2] > 3.0").unwrap();
        assert_eq!(
            ast,
            RuleAst::and(
                RuleAst::cmp(Field::Freq { hop: 1, class: 1 }, CmpOp::Ge, 0.5),
                RuleAst::cmp(Field::Feat(2), CmpOp::Gt, 3.0),
            )
        );
    }

    #[test]
    fn weighted_indicators() {
        let ast = parse_rule("0.5*I(feat[0] > 1) + 0.3*I(hop(1).freq(0) > 0.8) >= 0.5").unwrap();
        let ind = |r| NumExpr::Indicator(Box::new(r));
        let expected = RuleAst::Cmp(
            CmpOp::Ge,
            NumExpr::Add(
                Box::new(NumExpr::Mul(
                    Box::new(lit(0.5)),
                    Box::new(ind(RuleAst::cmp(Field::Feat(0), CmpOp::Gt, 1.0))),
                )),
                Box::new(NumExpr::Mul(
                    Box::new(lit(0.3)),
                    Box::new(ind(RuleAst::cmp(Field::Freq { hop: 1, class: 0 }, CmpOp::Gt, 0.8))),
                )),
            ),
            lit(0.5),
        );
        assert_eq!(ast, expected);
    }

    #[test]
    fn precedence() {
        let a = || RuleAst::cmp(Field::Degree, CmpOp::Gt, 1.0);
        let b = || RuleAst::cmp(Field::Degree, CmpOp::Lt, 5.0);
        let c = || RuleAst::cmp(Field::Feat(0), CmpOp::Eq, 0.0);
        assert_eq!(
            parse_rule("degree > 1 OR degree < 5 AND NOT feat[0] == 0").unwrap(),
            RuleAst::or(a(), RuleAst::and(b(), RuleAst::not(c())))
        );
        assert_eq!(
            parse_rule("(degree > 1 OR degree < 5) AND feat[0] == 0").unwrap(),
            RuleAst::and(RuleAst::or(a(), b()), c())
        );
    }

    #[test]
    fn parenthesized_numbers() {
        let ast = parse_rule("(degree + 1) * 2 > 4").unwrap();
        let RuleAst::Cmp(CmpOp::Gt, NumExpr::Mul(l, _), _) = ast else {
            panic!("{ast:?}");
        };
        assert!(matches!(*l, NumExpr::Add(..)));
        assert!(parse_rule("((degree + 1) > 2)").is_ok());
        assert!(parse_rule("((degree > 2))").is_ok());
        let deep = format!("{}degree > 1{}", "(".repeat(200), ")".repeat(200));
        assert!(parse_rule(&deep).is_ok());
    }

    #[test]
    fn literals() {
        assert_eq!(
            parse_rule("feat[0] >= -1.25").unwrap(),
            RuleAst::cmp(Field::Feat(0), CmpOp::Ge, -1.25)
        );
        assert_eq!(
            parse_rule("degree < 1e2").unwrap(),
            RuleAst::cmp(Field::Degree, CmpOp::Lt, 100.0)
        );
        assert_eq!(parse_rule("True").unwrap(), RuleAst::Const(true));
        assert_eq!(
            parse_rule("degree - 1 > 0").unwrap(),
            RuleAst::Cmp(
                CmpOp::Gt,
                NumExpr::Sub(Box::new(NumExpr::Field(Field::Degree)), Box::new(lit(1.0))),
                lit(0.0)
            )
        );
    }

    #[test]
    fn error_offsets() {
        assert_eq!(parse_rule("feat[").unwrap_err().offset, 5);
        assert_eq!(parse_rule("degree >").unwrap_err().offset, 8);
        assert_eq!(parse_rule("degree = 1").unwrap_err().offset, 7);
        assert_eq!(parse_rule("degree > 1 AND").unwrap_err().offset, 14);
        assert_eq!(parse_rule("hop(1).mean(0) > 1").unwrap_err().offset, 7);
        assert_eq!(parse_rule("(degree > 1").unwrap_err().offset, 11);
        assert_eq!(parse_rule("(degree + 1 > 2").unwrap_err().offset, 15);
        assert_eq!(parse_rule("degree > 1 degree").unwrap_err().offset, 11);
        assert_eq!(parse_rule("feat[-1] > 0").unwrap_err().offset, 5);
        assert_eq!(parse_rule("x > 1").unwrap_err().offset, 0);
        assert_eq!(parse_rule("").unwrap_err().offset, 0);
        assert_eq!(parse_rule("degree > 1 # c").unwrap_err().offset, 11);
    }
}
