//! Arithmetic expression sub-language for user-supplied vector fields.
//!
//! Grammar: `+ - * /`, powers via `^` (right-associative), unary minus,
//! parentheses, numeric literals, and identifiers resolving to state
//! variables, parameters, input variables or the builtin time symbol `t`.
//! Expressions are compiled once per run into a flat stack program that the
//! integrator evaluates without allocation.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use super::VectorField;

#[derive(Debug, Error, PartialEq)]
pub enum ExprError {
    #[error("column {col}: unexpected character {ch:?}")]
    BadChar { col: usize, ch: char },
    #[error("column {col}: malformed number {text:?}")]
    BadNumber { col: usize, text: String },
    #[error("column {col}: unknown identifier {name:?}")]
    UnknownIdent { col: usize, name: String },
    #[error("column {col}: expected {expected}, found {found}")]
    Unexpected { col: usize, expected: &'static str, found: String },
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("expression nests too deeply")]
    TooDeep,
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
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

fn lex(input: &str) -> Result<Vec<(usize, Token)>, ExprError> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = input.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let col = i + 1;
        let c = chars[i];
        match c {
            ' ' | '\t' | '\r' | '\n' => i += 1,
            '+' => {
                tokens.push((col, Token::Plus));
                i += 1;
            }
            '-' => {
                tokens.push((col, Token::Minus));
                i += 1;
            }
            '*' => {
                tokens.push((col, Token::Star));
                i += 1;
            }
            '/' => {
                tokens.push((col, Token::Slash));
                i += 1;
            }
            '^' => {
                tokens.push((col, Token::Caret));
                i += 1;
            }
            '(' => {
                tokens.push((col, Token::LParen));
                i += 1;
            }
            ')' => {
                tokens.push((col, Token::RParen));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_digit()
                        || chars[i] == '.'
                        || chars[i] == 'e'
                        || chars[i] == 'E'
                        || ((chars[i] == '+' || chars[i] == '-')
                            && matches!(chars[i - 1], 'e' | 'E')))
                {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let value = text
                    .parse::<f64>()
                    .map_err(|_| ExprError::BadNumber { col, text: text.clone() })?;
                tokens.push((col, Token::Num(value)));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                tokens.push((col, Token::Ident(chars[start..i].iter().collect())));
            }
            other => return Err(ExprError::BadChar { col, ch: other }),
        }
    }
    Ok(tokens)
}

#[derive(Debug, Clone, PartialEq)]
enum Ast {
    Num(f64),
    State(usize),
    Param(usize),
    Input(usize),
    Time,
    Neg(Box<Ast>),
    Add(Box<Ast>, Box<Ast>),
    Sub(Box<Ast>, Box<Ast>),
    Mul(Box<Ast>, Box<Ast>),
    Div(Box<Ast>, Box<Ast>),
    Pow(Box<Ast>, Box<Ast>),
}

/// Identifier namespaces an expression may reference. States shadow
/// parameters, which shadow inputs; the bare name `t` is the time variable
/// unless shadowed.
pub struct Scope<'a> {
    states: HashMap<&'a str, usize>,
    params: HashMap<&'a str, usize>,
    inputs: HashMap<&'a str, usize>,
}

impl<'a> Scope<'a> {
    pub fn new(states: &'a [String], params: &'a [String], inputs: &'a [String]) -> Self {
        let index = |names: &'a [String]| {
            names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect::<HashMap<_, _>>()
        };
        Self { states: index(states), params: index(params), inputs: index(inputs) }
    }

    fn resolve(&self, name: &str) -> Option<Ast> {
        if let Some(&i) = self.states.get(name) {
            Some(Ast::State(i))
        } else if let Some(&i) = self.params.get(name) {
            Some(Ast::Param(i))
        } else if let Some(&i) = self.inputs.get(name) {
            Some(Ast::Input(i))
        } else if name == "t" {
            Some(Ast::Time)
        } else {
            None
        }
    }
}

struct Parser<'a> {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    scope: &'a Scope<'a>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn next(&mut self) -> Option<(usize, Token)> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Ast, ExprError> {
        let mut lhs = self.term()?;
        while let Some(op) = self.peek() {
            let op = match op {
                Token::Plus => Token::Plus,
                Token::Minus => Token::Minus,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = match op {
                Token::Plus => Ast::Add(Box::new(lhs), Box::new(rhs)),
                _ => Ast::Sub(Box::new(lhs), Box::new(rhs)),
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Ast, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.peek() {
            let op = match op {
                Token::Star => Token::Star,
                Token::Slash => Token::Slash,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = match op {
                Token::Star => Ast::Mul(Box::new(lhs), Box::new(rhs)),
                _ => Ast::Div(Box::new(lhs), Box::new(rhs)),
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Ast, ExprError> {
        if let Some(Token::Minus) = self.peek() {
            self.pos += 1;
            return Ok(Ast::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Ast, ExprError> {
        let base = self.atom()?;
        if let Some(Token::Caret) = self.peek() {
            self.pos += 1;
            // Right-associative; the exponent may carry a unary minus.
            let exp = self.unary()?;
            return Ok(Ast::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Ast, ExprError> {
        match self.next() {
            Some((_, Token::Num(v))) => Ok(Ast::Num(v)),
            Some((col, Token::Ident(name))) => self
                .scope
                .resolve(&name)
                .ok_or(ExprError::UnknownIdent { col, name }),
            Some((_, Token::LParen)) => {
                let inner = self.expr()?;
                match self.next() {
                    Some((_, Token::RParen)) => Ok(inner),
                    Some((col, tok)) => Err(ExprError::Unexpected {
                        col,
                        expected: "closing parenthesis",
                        found: format!("{tok:?}"),
                    }),
                    None => Err(ExprError::UnexpectedEnd),
                }
            }
            Some((col, tok)) => Err(ExprError::Unexpected {
                col,
                expected: "number, identifier or parenthesis",
                found: format!("{tok:?}"),
            }),
            None => Err(ExprError::UnexpectedEnd),
        }
    }
}

/// Stack-machine instruction of a compiled expression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Push(f64),
    LoadState(u16),
    LoadParam(u16),
    LoadInput(u16),
    LoadTime,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Neg,
    Dup,
}

/// The compiled form of one expression; evaluated on a fixed-size stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    ops: Vec<Op>,
}

/// Upper bound on the evaluation stack; expressions deeper than this are
/// rejected at compile time.
pub const MAX_STACK: usize = 64;

impl Program {
    pub fn eval(&self, t: f64, state: &[f64], inputs: &[f64], params: &[f64]) -> f64 {
        let mut stack = [0.0f64; MAX_STACK];
        let mut top = 0usize;
        for op in &self.ops {
            match *op {
                Op::Push(v) => {
                    stack[top] = v;
                    top += 1;
                }
                Op::LoadState(i) => {
                    stack[top] = state[i as usize];
                    top += 1;
                }
                Op::LoadParam(i) => {
                    stack[top] = params[i as usize];
                    top += 1;
                }
                Op::LoadInput(i) => {
                    stack[top] = inputs[i as usize];
                    top += 1;
                }
                Op::LoadTime => {
                    stack[top] = t;
                    top += 1;
                }
                Op::Add => {
                    top -= 1;
                    stack[top - 1] += stack[top];
                }
                Op::Sub => {
                    top -= 1;
                    stack[top - 1] -= stack[top];
                }
                Op::Mul => {
                    top -= 1;
                    stack[top - 1] *= stack[top];
                }
                Op::Div => {
                    top -= 1;
                    stack[top - 1] /= stack[top];
                }
                Op::Pow => {
                    top -= 1;
                    stack[top - 1] = stack[top - 1].powf(stack[top]);
                }
                Op::Neg => {
                    stack[top - 1] = -stack[top - 1];
                }
                Op::Dup => {
                    stack[top] = stack[top - 1];
                    top += 1;
                }
            }
        }
        stack[0]
    }
}

fn emit(ast: &Ast, ops: &mut Vec<Op>) {
    match ast {
        Ast::Num(v) => ops.push(Op::Push(*v)),
        Ast::State(i) => ops.push(Op::LoadState(*i as u16)),
        Ast::Param(i) => ops.push(Op::LoadParam(*i as u16)),
        Ast::Input(i) => ops.push(Op::LoadInput(*i as u16)),
        Ast::Time => ops.push(Op::LoadTime),
        Ast::Neg(a) => {
            emit(a, ops);
            ops.push(Op::Neg);
        }
        Ast::Add(a, b) => {
            emit(a, ops);
            emit(b, ops);
            ops.push(Op::Add);
        }
        Ast::Sub(a, b) => {
            emit(a, ops);
            emit(b, ops);
            ops.push(Op::Sub);
        }
        Ast::Mul(a, b) => {
            emit(a, ops);
            emit(b, ops);
            ops.push(Op::Mul);
        }
        Ast::Div(a, b) => {
            emit(a, ops);
            emit(b, ops);
            ops.push(Op::Div);
        }
        Ast::Pow(a, b) => {
            // Squaring a leaf is common in mass-action kinetics; avoid powf.
            if matches!(**b, Ast::Num(e) if e == 2.0) {
                emit(a, ops);
                ops.push(Op::Dup);
                ops.push(Op::Mul);
            } else {
                emit(a, ops);
                emit(b, ops);
                ops.push(Op::Pow);
            }
        }
    }
}

fn stack_need(ops: &[Op]) -> usize {
    let mut depth = 0usize;
    let mut max = 0usize;
    for op in ops {
        match op {
            Op::Push(_)
            | Op::LoadState(_)
            | Op::LoadParam(_)
            | Op::LoadInput(_)
            | Op::LoadTime
            | Op::Dup => {
                depth += 1;
                max = max.max(depth);
            }
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Pow => depth -= 1,
            Op::Neg => {}
        }
    }
    max
}

/// Compile one expression against the given identifier scope.
pub fn compile_expression(text: &str, scope: &Scope<'_>) -> Result<Program, ExprError> {
    let tokens = lex(text)?;
    let mut parser = Parser { tokens, pos: 0, scope };
    let ast = parser.expr()?;
    if let Some((col, tok)) = parser.next() {
        return Err(ExprError::Unexpected {
            col,
            expected: "end of expression",
            found: format!("{tok:?}"),
        });
    }
    let mut ops = Vec::new();
    emit(&ast, &mut ops);
    if stack_need(&ops) > MAX_STACK {
        return Err(ExprError::TooDeep);
    }
    Ok(Program { ops })
}

// ---------------------------------------------------------------------------
// Sum-of-products fast path.
//
// Mass-action right-hand sides are polynomials in the states, parameters and
// inputs. Expanding them into a flat term list avoids per-op dispatch in the
// integrator's hot loop; expressions that do not expand (non-constant
// divisors, fractional powers) fall back to the stack machine.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarCode {
    State(u16),
    Param(u16),
    Input(u16),
    Time,
}

/// Size of the per-evaluation value table (states, then parameters, then
/// inputs, then time, then a constant one). Power of two so masked indexing
/// elides bounds checks; models beyond this fall back to the stack machine.
const MAX_TABLE: usize = 64;

/// Cap on expanded polynomial size; larger expressions keep the stack form.
const MAX_POLY_TERMS: usize = 64;

type Monomials = Vec<(f64, Vec<VarCode>)>;

fn expand_polynomial(ast: &Ast) -> Option<Monomials> {
    match ast {
        Ast::Num(v) => Some(vec![(*v, Vec::new())]),
        Ast::State(i) => Some(vec![(1.0, vec![VarCode::State(*i as u16)])]),
        Ast::Param(i) => Some(vec![(1.0, vec![VarCode::Param(*i as u16)])]),
        Ast::Input(i) => Some(vec![(1.0, vec![VarCode::Input(*i as u16)])]),
        Ast::Time => Some(vec![(1.0, vec![VarCode::Time])]),
        Ast::Neg(a) => {
            let mut terms = expand_polynomial(a)?;
            for term in &mut terms {
                term.0 = -term.0;
            }
            Some(terms)
        }
        Ast::Add(a, b) | Ast::Sub(a, b) => {
            let mut terms = expand_polynomial(a)?;
            let mut rhs = expand_polynomial(b)?;
            if matches!(ast, Ast::Sub(..)) {
                for term in &mut rhs {
                    term.0 = -term.0;
                }
            }
            terms.append(&mut rhs);
            (terms.len() <= MAX_POLY_TERMS).then_some(terms)
        }
        Ast::Mul(a, b) => {
            let lhs = expand_polynomial(a)?;
            let rhs = expand_polynomial(b)?;
            if lhs.len() * rhs.len() > MAX_POLY_TERMS {
                return None;
            }
            let mut terms = Vec::with_capacity(lhs.len() * rhs.len());
            for (ca, va) in &lhs {
                for (cb, vb) in &rhs {
                    let mut vars = va.clone();
                    vars.extend_from_slice(vb);
                    terms.push((ca * cb, vars));
                }
            }
            Some(terms)
        }
        Ast::Div(a, b) => {
            // Only division by a pure constant stays polynomial.
            let divisor = expand_polynomial(b)?;
            if divisor.len() != 1 || !divisor[0].1.is_empty() || divisor[0].0 == 0.0 {
                return None;
            }
            let scale = 1.0 / divisor[0].0;
            let mut terms = expand_polynomial(a)?;
            for term in &mut terms {
                term.0 *= scale;
            }
            Some(terms)
        }
        Ast::Pow(a, b) => {
            let exponent = match **b {
                Ast::Num(e) if e >= 0.0 && e <= 4.0 && e.fract() == 0.0 => e as usize,
                _ => return None,
            };
            let base = expand_polynomial(a)?;
            let mut terms: Monomials = vec![(1.0, Vec::new())];
            for _ in 0..exponent {
                if terms.len() * base.len() > MAX_POLY_TERMS {
                    return None;
                }
                let mut next = Vec::with_capacity(terms.len() * base.len());
                for (ca, va) in &terms {
                    for (cb, vb) in &base {
                        let mut vars = va.clone();
                        vars.extend_from_slice(vb);
                        next.push((ca * cb, vars));
                    }
                }
                terms = next;
            }
            Some(terms)
        }
    }
}

/// Widest padded factor chain the polynomial path accepts; higher-degree
/// monomials fall back to the stack machine.
const MAX_WIDTH: usize = 6;

/// Vector field built from one compiled expression per state equation.
///
/// Polynomial equations are flattened into one term arena whose factors
/// index into a per-evaluation value table (states, parameters, inputs,
/// time, and a constant one used for padding). Every factor chain is padded
/// to a common width so the hot loop is branch-free and fully unrolled.
/// Anything else runs on the stack machine.
pub struct CompiledField {
    state_dim: usize,
    param_dim: usize,
    input_dim: usize,
    /// Common factor-chain width.
    width: usize,
    /// Term index span per equation (empty span for stack equations).
    equation_spans: Vec<(u32, u32)>,
    coefficients: Vec<f64>,
    /// Value-table indices, `width` per term.
    factors: Vec<u16>,
    /// (equation index, program) for non-polynomial equations.
    stack_equations: Vec<(usize, Program)>,
}

impl CompiledField {
    /// Compile one equation per state against a shared scope.
    pub fn compile(
        equations: &[String],
        states: &[String],
        params: &[String],
        inputs: &[String],
    ) -> Result<Self, ExprError> {
        let scope = Scope::new(states, params, inputs);
        let table_len = states.len() + params.len() + inputs.len() + 2;
        let one_slot = (table_len - 1) as u16;
        let slot = |var: VarCode| -> u16 {
            match var {
                VarCode::State(i) => i,
                VarCode::Param(i) => states.len() as u16 + i,
                VarCode::Input(i) => (states.len() + params.len()) as u16 + i,
                VarCode::Time => (table_len - 2) as u16,
            }
        };

        // First pass: expand everything, keeping ASTs for fallbacks.
        let mut expanded: Vec<Result<Monomials, Ast>> = Vec::with_capacity(equations.len());
        for text in equations {
            let tokens = lex(text)?;
            let mut parser = Parser { tokens, pos: 0, scope: &scope };
            let ast = parser.expr()?;
            if let Some((col, tok)) = parser.next() {
                return Err(ExprError::Unexpected {
                    col,
                    expected: "end of expression",
                    found: format!("{tok:?}"),
                });
            }
            let poly = if table_len <= MAX_TABLE { expand_polynomial(&ast) } else { None };
            match poly {
                Some(monomials)
                    if monomials.iter().all(|(_, vars)| vars.len() <= MAX_WIDTH) =>
                {
                    expanded.push(Ok(monomials))
                }
                _ => expanded.push(Err(ast)),
            }
        }
        let width = expanded
            .iter()
            .filter_map(|e| e.as_ref().ok())
            .flat_map(|monomials| monomials.iter().map(|(_, vars)| vars.len()))
            .max()
            .unwrap_or(0);

        let mut field = CompiledField {
            state_dim: states.len(),
            param_dim: params.len(),
            input_dim: inputs.len(),
            width,
            equation_spans: Vec::with_capacity(equations.len()),
            coefficients: Vec::new(),
            factors: Vec::new(),
            stack_equations: Vec::new(),
        };
        for (index, entry) in expanded.into_iter().enumerate() {
            match entry {
                Ok(monomials) => {
                    let term_start = field.coefficients.len() as u32;
                    for (coeff, vars) in monomials {
                        field.coefficients.push(coeff);
                        let mut chain = [one_slot; MAX_WIDTH];
                        for (slot_out, var) in chain.iter_mut().zip(vars) {
                            *slot_out = slot(var);
                        }
                        field.factors.extend_from_slice(&chain[..width]);
                    }
                    field.equation_spans.push((term_start, field.coefficients.len() as u32));
                }
                Err(ast) => {
                    let mut ops = Vec::new();
                    emit(&ast, &mut ops);
                    if stack_need(&ops) > MAX_STACK {
                        return Err(ExprError::TooDeep);
                    }
                    let span = field.coefficients.len() as u32;
                    field.equation_spans.push((span, span));
                    field.stack_equations.push((index, Program { ops }));
                }
            }
        }
        Ok(field)
    }

    #[inline]
    fn eval_width<const W: usize>(&self, table: &[f64; MAX_TABLE], out: &mut [f64]) {
        for (slot, &(term_start, term_end)) in out.iter_mut().zip(&self.equation_spans) {
            let (term_start, term_end) = (term_start as usize, term_end as usize);
            let coefficients = &self.coefficients[term_start..term_end];
            let factors = self.factors[term_start * W..term_end * W].chunks_exact(W);
            let mut sum = 0.0;
            for (&coeff, chain) in coefficients.iter().zip(factors) {
                let mut product = coeff;
                for &index in chain {
                    // The mask proves the index in range so the check folds.
                    product *= table[index as usize & (MAX_TABLE - 1)];
                }
                sum += product;
            }
            *slot = sum;
        }
    }
}

impl VectorField for CompiledField {
    fn eval(&self, t: f64, state: &[f64], inputs: &[f64], params: &[f64], out: &mut [f64]) {
        let mut table = [1.0f64; MAX_TABLE];
        table[..self.state_dim].copy_from_slice(state);
        table[self.state_dim..self.state_dim + self.param_dim].copy_from_slice(params);
        let input_base = self.state_dim + self.param_dim;
        table[input_base..input_base + self.input_dim].copy_from_slice(inputs);
        table[input_base + self.input_dim] = t;

        match self.width {
            // Width zero means every polynomial term is a bare constant.
            0 => {
                for (slot, &(term_start, term_end)) in out.iter_mut().zip(&self.equation_spans) {
                    *slot = self.coefficients[term_start as usize..term_end as usize]
                        .iter()
                        .sum();
                }
            }
            1 => self.eval_width::<1>(&table, out),
            2 => self.eval_width::<2>(&table, out),
            3 => self.eval_width::<3>(&table, out),
            4 => self.eval_width::<4>(&table, out),
            5 => self.eval_width::<5>(&table, out),
            _ => self.eval_width::<6>(&table, out),
        }
        for (index, program) in &self.stack_equations {
            out[*index] = program.eval(t, state, inputs, params);
        }
    }
}

impl fmt::Debug for CompiledField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "CompiledField({} equations, {} on the stack machine)",
            self.equation_spans.len(),
            self.stack_equations.len()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scope_fixture() -> (Vec<String>, Vec<String>, Vec<String>) {
        (
            vec!["x".into(), "y".into()],
            vec!["k1".into(), "k2".into()],
            vec!["u".into()],
        )
    }

    fn eval(text: &str, state: &[f64], inputs: &[f64], params: &[f64], t: f64) -> f64 {
        let (s, p, u) = scope_fixture();
        let scope = Scope::new(&s, &p, &u);
        compile_expression(text, &scope).unwrap().eval(t, state, inputs, params)
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_eq!(eval("1 + 2 * 3", &[0.0; 2], &[0.0], &[0.0; 2], 0.0), 7.0);
        assert_eq!(eval("(1 + 2) * 3", &[0.0; 2], &[0.0], &[0.0; 2], 0.0), 9.0);
        assert_eq!(eval("2 ^ 3 ^ 2", &[0.0; 2], &[0.0], &[0.0; 2], 0.0), 512.0);
        assert_eq!(eval("-2 ^ 2", &[0.0; 2], &[0.0], &[0.0; 2], 0.0), -4.0);
        assert_eq!(eval("2 ^ -1", &[0.0; 2], &[0.0], &[0.0; 2], 0.0), 0.5);
        assert_eq!(eval("6 / 3 / 2", &[0.0; 2], &[0.0], &[0.0; 2], 0.0), 1.0);
        assert_eq!(eval("1 - 2 - 3", &[0.0; 2], &[0.0], &[0.0; 2], 0.0), -4.0);
    }

    #[test]
    fn identifier_resolution() {
        let v = eval("-k1*x*u + 2*k2*y + t", &[1.5, 0.5], &[2.0], &[0.1, 0.3], 4.0);
        let expect = -0.1 * 1.5 * 2.0 + 2.0 * 0.3 * 0.5 + 4.0;
        assert!((v - expect).abs() < 1e-15);
    }

    #[test]
    fn square_peephole_matches_powf() {
        let a = eval("x^2", &[1.7, 0.0], &[0.0], &[0.0; 2], 0.0);
        assert_eq!(a, 1.7 * 1.7);
        let b = eval("x^2.5", &[1.7, 0.0], &[0.0], &[0.0; 2], 0.0);
        assert!((b - 1.7f64.powf(2.5)).abs() < 1e-15);
    }

    #[test]
    fn unknown_identifier_carries_position() {
        let (s, p, u) = scope_fixture();
        let scope = Scope::new(&s, &p, &u);
        match compile_expression("x + foo", &scope) {
            Err(ExprError::UnknownIdent { col, name }) => {
                assert_eq!(col, 5);
                assert_eq!(name, "foo");
            }
            other => panic!("expected unknown identifier, got {other:?}"),
        }
    }

    #[test]
    fn scientific_notation() {
        assert_eq!(eval("1e-3 + 2.5E2", &[0.0; 2], &[0.0], &[0.0; 2], 0.0), 0.001 + 250.0);
    }

    #[test]
    fn trailing_garbage_rejected() {
        let (s, p, u) = scope_fixture();
        let scope = Scope::new(&s, &p, &u);
        assert!(compile_expression("1 + 2)", &scope).is_err());
        assert!(compile_expression("", &scope).is_err());
        assert!(compile_expression("1 +", &scope).is_err());
    }

    #[test]
    fn field_agrees_with_stack_programs() {
        use rand::{Rng, SeedableRng};
        let (s, p, u) = scope_fixture();
        let scope = Scope::new(&s, &p, &u);
        // A mix of polynomial-expandable and fallback expressions.
        let equations = vec![
            "-k1*x*u + 2*k2*y".to_string(),
            "(x + y)^2 * k1 - y/2 + t".to_string(),
            "k1 / (1 + x^2)".to_string(),   // stays on the stack machine
            "x ^ 2.5 + k2".to_string(),     // fractional power: stack machine
        ];
        let field = CompiledField::compile(&equations, &s, &p, &u).unwrap();
        let programs: Vec<Program> =
            equations.iter().map(|eq| compile_expression(eq, &scope).unwrap()).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut out = vec![0.0; 4];
        for _ in 0..500 {
            let state = [rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0)];
            let params = [rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0)];
            let inputs = [rng.gen_range(-1.0..1.0)];
            let t = rng.gen_range(0.0..10.0);
            field.eval(t, &state, &inputs, &params, &mut out[..4]);
            for (k, program) in programs.iter().enumerate() {
                let direct = program.eval(t, &state, &inputs, &params);
                assert!(
                    (out[k] - direct).abs() <= 1e-12 * direct.abs().max(1.0),
                    "equation {k}: {} vs {direct}",
                    out[k]
                );
            }
        }
    }
}
