//! Small expression language for field definitions, with symbolic
//! first and second derivatives.
//!
//! Grammar (usual precedence, `^` right associative and binding tighter
//! than unary minus):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := ('-' | '+') unary | power
//! power := atom ('^' unary)?
//! atom  := number | 'pi' | var | func '(' expr ')' | '(' expr ')'
//! ```
//!
//! Variables are `x1 .. xn`; functions are `exp sin cos tanh sqrt ln`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Tanh,
    Sqrt,
    Ln,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
            Func::Sqrt => "sqrt",
            Func::Ln => "ln",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tanh" => Func::Tanh,
            "sqrt" => Func::Sqrt,
            "ln" => Func::Ln,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Exp => x.exp(),
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tanh => x.tanh(),
            Func::Sqrt => x.sqrt(),
            Func::Ln => x.ln(),
        }
    }
}

/// Expression tree. Variables are zero-based (`Var(0)` is `x1`).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

fn is_const(e: &Expr, c: f64) -> bool {
    matches!(e, Expr::Const(v) if *v == c)
}

fn as_const(e: &Expr) -> Option<f64> {
    match e {
        Expr::Const(v) => Some(*v),
        _ => None,
    }
}

// Simplifying constructors. They only fold identities and constants, so
// evaluation of the result agrees with the unsimplified tree.
fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(v) => Expr::Const(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => Expr::Const(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => Expr::Const(x - y),
        (Some(x), _) if x == 0.0 => neg(b),
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => Expr::Const(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::Const(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        (Some(x), _) if x == -1.0 => neg(b),
        (_, Some(y)) if y == -1.0 => neg(a),
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    if is_const(&a, 0.0) {
        return Expr::Const(0.0);
    }
    if is_const(&b, 1.0) {
        return a;
    }
    Expr::Div(Box::new(a), Box::new(b))
}

fn pow(a: Expr, b: Expr) -> Expr {
    if is_const(&b, 1.0) {
        return a;
    }
    if is_const(&b, 0.0) {
        return Expr::Const(1.0);
    }
    Expr::Pow(Box::new(a), Box::new(b))
}

fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, Box::new(a))
}

impl Expr {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(v) => *v,
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => {
                let base = a.eval(x);
                match **b {
                    Expr::Const(e) if e == e.trunc() && e.abs() < 64.0 => base.powi(e as i32),
                    _ => base.powf(b.eval(x)),
                }
            }
            Expr::Call(f, a) => f.apply(a.eval(x)),
        }
    }

    /// True when the tree does not mention `Var(var)`.
    pub fn is_free_of(&self, var: usize) -> bool {
        match self {
            Expr::Const(_) => true,
            Expr::Var(i) => *i != var,
            Expr::Neg(a) | Expr::Call(_, a) => a.is_free_of(var),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.is_free_of(var) && b.is_free_of(var),
        }
    }

    /// Symbolic partial derivative with respect to `Var(var)`.
    pub fn derivative(&self, var: usize) -> Expr {
        if self.is_free_of(var) {
            return Expr::Const(0.0);
        }
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(i) => Expr::Const(if *i == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.derivative(var)),
            Expr::Add(a, b) => add(a.derivative(var), b.derivative(var)),
            Expr::Sub(a, b) => sub(a.derivative(var), b.derivative(var)),
            Expr::Mul(a, b) => add(
                mul(a.derivative(var), (**b).clone()),
                mul((**a).clone(), b.derivative(var)),
            ),
            Expr::Div(a, b) => {
                let num = sub(
                    mul(a.derivative(var), (**b).clone()),
                    mul((**a).clone(), b.derivative(var)),
                );
                div(num, pow((**b).clone(), Expr::Const(2.0)))
            }
            Expr::Pow(a, b) => {
                if b.is_free_of(var) {
                    // d(f^c) = c f^(c-1) f'
                    let lowered = match as_const(b) {
                        Some(c) => Expr::Const(c - 1.0),
                        None => sub((**b).clone(), Expr::Const(1.0)),
                    };
                    mul(
                        mul((**b).clone(), pow((**a).clone(), lowered)),
                        a.derivative(var),
                    )
                } else {
                    // d(f^g) = f^g (g' ln f + g f'/f)
                    let inner = add(
                        mul(b.derivative(var), call(Func::Ln, (**a).clone())),
                        div(mul((**b).clone(), a.derivative(var)), (**a).clone()),
                    );
                    mul(self.clone(), inner)
                }
            }
            Expr::Call(f, a) => {
                let inner = (**a).clone();
                let outer = match f {
                    Func::Exp => self.clone(),
                    Func::Sin => call(Func::Cos, inner),
                    Func::Cos => neg(call(Func::Sin, inner)),
                    Func::Tanh => sub(
                        Expr::Const(1.0),
                        pow(call(Func::Tanh, inner), Expr::Const(2.0)),
                    ),
                    Func::Sqrt => div(Expr::Const(0.5), self.clone()),
                    Func::Ln => div(Expr::Const(1.0), inner),
                };
                mul(outer, a.derivative(var))
            }
        }
    }

    fn fold_negated_literals(self) -> Expr {
        match self {
            Expr::Neg(a) => match a.fold_negated_literals() {
                Expr::Const(v) => Expr::Const(-v),
                other => Expr::Neg(Box::new(other)),
            },
            Expr::Add(a, b) => Expr::Add(
                Box::new(a.fold_negated_literals()),
                Box::new(b.fold_negated_literals()),
            ),
            Expr::Sub(a, b) => Expr::Sub(
                Box::new(a.fold_negated_literals()),
                Box::new(b.fold_negated_literals()),
            ),
            Expr::Mul(a, b) => Expr::Mul(
                Box::new(a.fold_negated_literals()),
                Box::new(b.fold_negated_literals()),
            ),
            Expr::Div(a, b) => Expr::Div(
                Box::new(a.fold_negated_literals()),
                Box::new(b.fold_negated_literals()),
            ),
            Expr::Pow(a, b) => Expr::Pow(
                Box::new(a.fold_negated_literals()),
                Box::new(b.fold_negated_literals()),
            ),
            Expr::Call(f, a) => Expr::Call(f, Box::new(a.fold_negated_literals())),
            leaf => leaf,
        }
    }
}

/// Fully parenthesised form; parses back to an identical tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => {
                write!(f, "(-{:?})", -v)
            }
            Expr::Const(v) => write!(f, "{v:?}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Op(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    tokens: Vec<(Token, usize)>,
}

impl<'a> Lexer<'a> {
    fn run(src: &'a str) -> Result<Vec<(Token, usize)>> {
        let mut lx = Lexer {
            src,
            tokens: Vec::new(),
        };
        let bytes = src.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i] as char;
            if c.is_ascii_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() || c == '.' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &lx.src[start..i];
                let value: f64 = text.parse().map_err(|_| Error::Parse {
                    position: start,
                    expected: vec!["number".into()],
                })?;
                lx.tokens.push((Token::Number(value), start));
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                lx.tokens
                    .push((Token::Ident(lx.src[start..i].to_string()), start));
            } else if "+-*/^()".contains(c) {
                lx.tokens.push((Token::Op(c), i));
                i += 1;
            } else {
                return Err(Error::Parse {
                    position: i,
                    expected: vec!["operator".into(), "operand".into()],
                });
            }
        }
        lx.tokens.push((Token::End, src.len()));
        Ok(lx.tokens)
    }
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    dim: usize,
}

fn operand_expected() -> Vec<String> {
    ["number", "identifier", "'('", "'-'", "'+'"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].0
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].0.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, op: char) -> Result<()> {
        if *self.peek() == Token::Op(op) {
            self.bump();
            Ok(())
        } else {
            Err(Error::Parse {
                position: self.offset(),
                expected: vec![format!("'{op}'")],
            })
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Token::Op('+') => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Token::Op('-') => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Token::Op('*') => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Token::Op('/') => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Token::Op('-') => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Token::Op('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if *self.peek() == Token::Op('^') {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let position = self.offset();
        match self.bump() {
            Token::Number(v) => Ok(Expr::Const(v)),
            Token::Op('(') => {
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Token::Ident(name) => {
                if name == "pi" {
                    return Ok(Expr::Const(std::f64::consts::PI));
                }
                if let Some(func) = Func::from_name(&name) {
                    self.expect('(')?;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                if let Some(idx) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
                    if idx >= 1 && idx <= self.dim {
                        return Ok(Expr::Var(idx - 1));
                    }
                }
                Err(Error::UnknownIdentifier { name, position })
            }
            _ => Err(Error::Parse {
                position,
                expected: operand_expected(),
            }),
        }
    }
}

/// Parses `text` as an expression in the variables `x1 .. x{dim}`.
pub fn parse_expr(text: &str, dim: usize) -> Result<Expr> {
    if text.trim().is_empty() {
        return Err(Error::Parse {
            position: 0,
            expected: operand_expected(),
        });
    }
    let tokens = Lexer::run(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        dim,
    };
    let expr = parser.expr()?;
    if *parser.peek() != Token::End {
        return Err(Error::Parse {
            position: parser.offset(),
            expected: vec!["operator".into(), "end of input".into()],
        });
    }
    Ok(expr.fold_negated_literals())
}

/// A parsed scalar expression together with its symbolic gradient and
/// Hessian. The Hessian stores one tree per unordered pair, so it is
/// symmetric by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldExpr {
    dim: usize,
    expr: Expr,
    gradient: Vec<Expr>,
    hessian: Vec<Expr>,
}

impl FieldExpr {
    pub fn new(expr: Expr, dim: usize) -> FieldExpr {
        let gradient: Vec<Expr> = (0..dim).map(|i| expr.derivative(i)).collect();
        let mut hessian = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for j in i..dim {
                hessian.push(gradient[i].derivative(j));
            }
        }
        FieldExpr {
            dim,
            expr,
            gradient,
            hessian,
        }
    }

    pub fn parse(text: &str, dim: usize) -> Result<FieldExpr> {
        Ok(FieldExpr::new(parse_expr(text, dim)?, dim))
    }

    pub fn constant(value: f64, dim: usize) -> FieldExpr {
        FieldExpr::new(Expr::Const(value), dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn gradient_expr(&self, i: usize) -> &Expr {
        &self.gradient[i]
    }

    /// Tree for `∂²/∂x_i∂x_j`; the same tree is returned for `(j, i)`.
    pub fn hessian_expr(&self, i: usize, j: usize) -> &Expr {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        // offset of (a, a) in the packed upper triangle
        let diag = (0..a).map(|r| self.dim - r).sum::<usize>();
        &self.hessian[diag + (b - a)]
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.expr.eval(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.gradient.iter().map(|g| g.eval(x)).collect()
    }

    /// Row-major `dim × dim` Hessian.
    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = self.hessian_expr(i, j).eval(x);
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        out
    }

    pub fn is_constant(&self) -> bool {
        (0..self.dim).all(|i| self.expr.is_free_of(i))
    }
}

impl fmt::Display for FieldExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.expr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_at_origin() {
        let e = FieldExpr::parse("exp(-(x1^2+x2^2))", 2).unwrap();
        assert_eq!(e.value(&[0.0, 0.0]), 1.0);
        assert_eq!(e.gradient(&[0.0, 0.0]), vec![0.0, 0.0]);
        let h = e.hessian(&[0.0, 0.0]);
        assert_eq!(h, vec![-2.0, 0.0, 0.0, -2.0]);
    }

    #[test]
    fn malformed_input_reports_offset() {
        match parse_expr("x1 +* 2", 2) {
            Err(Error::Parse { position, expected }) => {
                assert_eq!(position, 4);
                assert!(expected.iter().any(|e| e == "number"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_expr("(x1", 1), Err(Error::Parse { position: 3, .. })));
        assert!(matches!(parse_expr("", 1), Err(Error::Parse { .. })));
        assert!(matches!(parse_expr("x1 x2", 2), Err(Error::Parse { position: 3, .. })));
    }

    #[test]
    fn unknown_identifiers() {
        assert!(matches!(
            parse_expr("x3 + 1", 2),
            Err(Error::UnknownIdentifier { position: 0, .. })
        ));
        assert!(matches!(
            parse_expr("2*foo(x1)", 1),
            Err(Error::UnknownIdentifier { position: 2, .. })
        ));
    }

    #[test]
    fn linear_gradient_is_constant() {
        let e = FieldExpr::parse("0.3*x2", 2).unwrap();
        assert_eq!(e.gradient(&[1.7, -4.0]), vec![0.0, 0.3]);
        assert_eq!(*e.gradient_expr(1), Expr::Const(0.3));
    }

    #[test]
    fn precedence() {
        let e = parse_expr("-2^2", 1).unwrap();
        assert_eq!(e.eval(&[0.0]), -4.0);
        let e = parse_expr("2^3^2", 1).unwrap();
        assert_eq!(e.eval(&[0.0]), 512.0);
        let e = parse_expr("1 - 2 - 3", 1).unwrap();
        assert_eq!(e.eval(&[0.0]), -4.0);
        let e = parse_expr("8/2/2", 1).unwrap();
        assert_eq!(e.eval(&[0.0]), 2.0);
        let e = parse_expr("2*x1^-1", 1).unwrap();
        assert_eq!(e.eval(&[4.0]), 0.5);
        let e = parse_expr("1.5e-3*pi", 1).unwrap();
        assert!((e.eval(&[0.0]) - 1.5e-3 * std::f64::consts::PI).abs() < 1e-18);
    }

    #[test]
    fn hessian_trees_shared() {
        let e = FieldExpr::parse("x1*x2^2*x3 + sin(x1*x3)", 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!(std::ptr::eq(e.hessian_expr(i, j), e.hessian_expr(j, i)));
            }
        }
        // ∂²/∂x1∂x3 = 1*x2^2 ... check one value by hand
        let x = [0.5, 2.0, -1.5];
        let h = e.hessian(&x);
        let s = x[0] * x[2];
        let expect = x[1] * x[1] + s.cos() - s * s.sin();
        assert!((h[2] - expect).abs() < 1e-14);
    }

    #[test]
    fn printed_form_reparses() {
        for text in [
            "exp(-(x1^2+x2^2))",
            "-3.25*x1 + 2/(1+x2^2)",
            "tanh(x1) - sqrt(1 + x2^2)^-0.5",
            "(x1 - -2)^2",
        ] {
            let e = parse_expr(text, 2).unwrap();
            let again = parse_expr(&e.to_string(), 2).unwrap();
            assert_eq!(e, again, "{text} -> {e}");
        }
    }
}
