//! Parser for the concrete property syntax.
//!
//! Grammar, loosest-binding first (`!` binds tightest):
//!
//! ```text
//! formula  := or ( '->' formula )?                  (right-associative)
//! or       := and ( '|' and )*
//! and      := until ( '&' until )*
//! until    := unary ( 'U' '<=' number until )?      (right-associative)
//! unary    := '!' unary
//!           | ('F' | 'G') '<=' number '(' formula ')'
//!           | 'true' | 'false'
//!           | '[' number '<=' name '<=' number ']'
//!           | '(' formula ')'
//! ```
//!
//! `a -> b` is sugar for `!a | b` and produces that tree. Numbers may be
//! fractional and atom bounds may be negative.

use thiserror::Error;

use super::Formula;

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}, column {col}: unexpected character {ch:?}")]
    BadChar { line: usize, col: usize, ch: char },
    #[error("line {line}, column {col}: malformed number {text:?}")]
    BadNumber { line: usize, col: usize, text: String },
    #[error("line {line}, column {col}: expected {expected}, found {found}")]
    Unexpected { line: usize, col: usize, expected: &'static str, found: String },
    #[error("syntax error at end of input: expected {expected}")]
    UnexpectedEnd { expected: &'static str },
    #[error("line {line}, column {col}: unknown identifier {name:?} (known states: {known})")]
    UnknownIdent { line: usize, col: usize, name: String, known: String },
    #[error("line {line}, column {col}: atom lower bound {low} exceeds upper bound {high}")]
    EmptyBand { line: usize, col: usize, low: f64, high: f64 },
    #[error("line {line}, column {col}: time bound must be non-negative, got {bound}")]
    NegativeBound { line: usize, col: usize, bound: f64 },
    #[error("input is empty")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number(f64),
    Le,     // <=
    Not,    // !
    And,    // &
    Or,     // |
    Arrow,  // ->
    LParen,
    RParen,
    LBracket,
    RBracket,
}

#[derive(Debug, Clone)]
struct Spanned {
    token: Token,
    line: usize,
    col: usize,
}

fn lex(input: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = input.chars().collect();
    let mut i = 0;
    let mut line = 1usize;
    let mut col = 1usize;
    while i < chars.len() {
        let (l, c) = (line, col);
        let ch = chars[i];
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        match ch {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => advance(1, &mut i, &mut col),
            '!' => {
                tokens.push(Spanned { token: Token::Not, line: l, col: c });
                advance(1, &mut i, &mut col);
            }
            '&' => {
                tokens.push(Spanned { token: Token::And, line: l, col: c });
                advance(1, &mut i, &mut col);
            }
            '|' => {
                tokens.push(Spanned { token: Token::Or, line: l, col: c });
                advance(1, &mut i, &mut col);
            }
            '(' => {
                tokens.push(Spanned { token: Token::LParen, line: l, col: c });
                advance(1, &mut i, &mut col);
            }
            ')' => {
                tokens.push(Spanned { token: Token::RParen, line: l, col: c });
                advance(1, &mut i, &mut col);
            }
            '[' => {
                tokens.push(Spanned { token: Token::LBracket, line: l, col: c });
                advance(1, &mut i, &mut col);
            }
            ']' => {
                tokens.push(Spanned { token: Token::RBracket, line: l, col: c });
                advance(1, &mut i, &mut col);
            }
            '<' => {
                if chars.get(i + 1) == Some(&'=') {
                    tokens.push(Spanned { token: Token::Le, line: l, col: c });
                    advance(2, &mut i, &mut col);
                } else {
                    return Err(ParseError::BadChar { line: l, col: c, ch: '<' });
                }
            }
            '-' => {
                if chars.get(i + 1) == Some(&'>') {
                    tokens.push(Spanned { token: Token::Arrow, line: l, col: c });
                    advance(2, &mut i, &mut col);
                } else if chars.get(i + 1).is_some_and(|d| d.is_ascii_digit() || *d == '.') {
                    let start = i;
                    advance(1, &mut i, &mut col);
                    lex_number_tail(&chars, &mut i, &mut col);
                    let text: String = chars[start..i].iter().collect();
                    let value = text.parse::<f64>().map_err(|_| ParseError::BadNumber {
                        line: l,
                        col: c,
                        text: text.clone(),
                    })?;
                    tokens.push(Spanned { token: Token::Number(value), line: l, col: c });
                } else {
                    return Err(ParseError::BadChar { line: l, col: c, ch: '-' });
                }
            }
            '0'..='9' | '.' => {
                let start = i;
                lex_number_tail(&chars, &mut i, &mut col);
                let text: String = chars[start..i].iter().collect();
                let value = text.parse::<f64>().map_err(|_| ParseError::BadNumber {
                    line: l,
                    col: c,
                    text: text.clone(),
                })?;
                tokens.push(Spanned { token: Token::Number(value), line: l, col: c });
            }
            ch if ch.is_ascii_alphabetic() || ch == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                    col += 1;
                }
                tokens.push(Spanned {
                    token: Token::Ident(chars[start..i].iter().collect()),
                    line: l,
                    col: c,
                });
            }
            other => return Err(ParseError::BadChar { line: l, col: c, ch: other }),
        }
    }
    Ok(tokens)
}

fn lex_number_tail(chars: &[char], i: &mut usize, col: &mut usize) {
    while *i < chars.len()
        && (chars[*i].is_ascii_digit()
            || chars[*i] == '.'
            || chars[*i] == 'e'
            || chars[*i] == 'E'
            || ((chars[*i] == '+' || chars[*i] == '-')
                && *i > 0
                && matches!(chars[*i - 1], 'e' | 'E')))
    {
        *i += 1;
        *col += 1;
    }
}

struct Parser<'a> {
    tokens: Vec<Spanned>,
    pos: usize,
    state_names: &'a [String],
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|s| &s.token)
    }

    fn next(&mut self) -> Option<Spanned> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Token, expected: &'static str) -> Result<(), ParseError> {
        match self.next() {
            Some(s) if s.token == want => Ok(()),
            Some(s) => Err(ParseError::Unexpected {
                line: s.line,
                col: s.col,
                expected,
                found: describe(&s.token),
            }),
            None => Err(ParseError::UnexpectedEnd { expected }),
        }
    }

    fn number(&mut self, expected: &'static str) -> Result<(f64, usize, usize), ParseError> {
        match self.next() {
            Some(Spanned { token: Token::Number(v), line, col }) => Ok((v, line, col)),
            Some(s) => Err(ParseError::Unexpected {
                line: s.line,
                col: s.col,
                expected,
                found: describe(&s.token),
            }),
            None => Err(ParseError::UnexpectedEnd { expected }),
        }
    }

    fn bound(&mut self) -> Result<f64, ParseError> {
        self.expect(Token::Le, "'<=' after temporal operator")?;
        let (bound, line, col) = self.number("time bound")?;
        if bound < 0.0 {
            return Err(ParseError::NegativeBound { line, col, bound });
        }
        Ok(bound)
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.or_level()?;
        if let Some(Token::Arrow) = self.peek() {
            self.pos += 1;
            let rhs = self.formula()?;
            return Ok(Formula::or(Formula::not(lhs), rhs));
        }
        Ok(lhs)
    }

    fn or_level(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.and_level()?;
        while let Some(Token::Or) = self.peek() {
            self.pos += 1;
            let rhs = self.and_level()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_level(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.until_level()?;
        while let Some(Token::And) = self.peek() {
            self.pos += 1;
            let rhs = self.until_level()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn until_level(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.unary()?;
        if let Some(Token::Ident(name)) = self.peek() {
            if name == "U" {
                self.pos += 1;
                let bound = self.bound()?;
                let rhs = self.until_level()?;
                return Ok(Formula::until(bound, lhs, rhs));
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            Some(Token::Not) => {
                self.pos += 1;
                Ok(Formula::not(self.unary()?))
            }
            Some(Token::Ident(name)) if name == "F" || name == "G" => {
                let finally = name == "F";
                self.pos += 1;
                let bound = self.bound()?;
                self.expect(Token::LParen, "'(' after temporal bound")?;
                let inner = self.formula()?;
                self.expect(Token::RParen, "closing ')'")?;
                Ok(if finally {
                    Formula::finally(bound, inner)
                } else {
                    Formula::globally(bound, inner)
                })
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Formula, ParseError> {
        match self.next() {
            Some(Spanned { token: Token::Ident(name), line, col }) => match name.as_str() {
                "true" => Ok(Formula::True),
                "false" => Ok(Formula::False),
                other => Err(ParseError::Unexpected {
                    line,
                    col,
                    expected: "'true', 'false', an atom or a parenthesized formula",
                    found: format!("identifier {other:?}"),
                }),
            },
            Some(Spanned { token: Token::LParen, .. }) => {
                let inner = self.formula()?;
                self.expect(Token::RParen, "closing ')'")?;
                Ok(inner)
            }
            Some(Spanned { token: Token::LBracket, .. }) => self.atom(),
            Some(s) => Err(ParseError::Unexpected {
                line: s.line,
                col: s.col,
                expected: "formula",
                found: describe(&s.token),
            }),
            None => Err(ParseError::UnexpectedEnd { expected: "formula" }),
        }
    }

    fn atom(&mut self) -> Result<Formula, ParseError> {
        let (low, low_line, low_col) = self.number("atom lower bound")?;
        self.expect(Token::Le, "'<=' after atom lower bound")?;
        let (name, line, col) = match self.next() {
            Some(Spanned { token: Token::Ident(name), line, col }) => (name, line, col),
            Some(s) => {
                return Err(ParseError::Unexpected {
                    line: s.line,
                    col: s.col,
                    expected: "state name",
                    found: describe(&s.token),
                })
            }
            None => return Err(ParseError::UnexpectedEnd { expected: "state name" }),
        };
        let var = self
            .state_names
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| ParseError::UnknownIdent {
                line,
                col,
                name: name.clone(),
                known: self.state_names.join(", "),
            })?;
        self.expect(Token::Le, "'<=' after state name")?;
        let (high, ..) = self.number("atom upper bound")?;
        self.expect(Token::RBracket, "closing ']'")?;
        if low > high {
            return Err(ParseError::EmptyBand { line: low_line, col: low_col, low, high });
        }
        Ok(Formula::atom(var, name, low, high))
    }
}

fn describe(tok: &Token) -> String {
    match tok {
        Token::Ident(n) => format!("identifier {n:?}"),
        Token::Number(v) => format!("number {v}"),
        Token::Le => "'<='".into(),
        Token::Not => "'!'".into(),
        Token::And => "'&'".into(),
        Token::Or => "'|'".into(),
        Token::Arrow => "'->'".into(),
        Token::LParen => "'('".into(),
        Token::RParen => "')'".into(),
        Token::LBracket => "'['".into(),
        Token::RBracket => "']'".into(),
    }
}

/// Parse a property against the given state names. Pretty-printing the
/// result and re-parsing it yields an equal tree.
pub fn parse(text: &str, state_names: &[String]) -> Result<Formula, ParseError> {
    let tokens = lex(text)?;
    if tokens.is_empty() {
        return Err(ParseError::Empty);
    }
    let mut parser = Parser { tokens, pos: 0, state_names };
    let phi = parser.formula()?;
    if let Some(s) = parser.next() {
        return Err(ParseError::Unexpected {
            line: s.line,
            col: s.col,
            expected: "end of input",
            found: describe(&s.token),
        });
    }
    Ok(phi)
}
