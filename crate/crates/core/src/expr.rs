//! A calculator grammar for the unary functions that parameterize models,
//! stop rules and payoffs.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-y^2`
//! is `-(y^2)` and `2^-1` is `2^(-1)`. Every expression has at most one free
//! variable; `pi` and `inf` are reserved constants.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryFn {
    Exp,
    Log,
    Sqrt,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryFn {
    Min,
    Max,
    Pow,
    /// `indicator(lo, hi)` is 1 on `lo < y <= hi`, 0 elsewhere.
    Indicator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprAst {
    Num(f64),
    Var,
    Neg(Box<ExprAst>),
    Bin(BinOp, Box<ExprAst>, Box<ExprAst>),
    Call1(UnaryFn, Box<ExprAst>),
    Call2(BinaryFn, Box<ExprAst>, Box<ExprAst>),
}

/// A parsed expression together with the name of its free variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub ast: ExprAst,
    pub var: Option<String>,
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr> {
        parse(text)
    }

    pub fn eval(&self, arg: f64) -> Result<f64> {
        eval(&self.ast, arg)
    }

    /// Constant `indicator` bounds, where the function jumps.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        collect_breakpoints(&self.ast, &mut out);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        print_ast(&self.ast, self.var.as_deref().unwrap_or("y"), f)
    }
}

fn collect_breakpoints(ast: &ExprAst, out: &mut Vec<f64>) {
    match ast {
        ExprAst::Num(_) | ExprAst::Var => {}
        ExprAst::Neg(a) | ExprAst::Call1(_, a) => collect_breakpoints(a, out),
        ExprAst::Bin(_, a, b) => {
            collect_breakpoints(a, out);
            collect_breakpoints(b, out);
        }
        ExprAst::Call2(kind, a, b) => {
            if *kind == BinaryFn::Indicator {
                for bound in [a, b] {
                    if let Ok(v) = eval(bound, f64::NAN) {
                        if v.is_finite() {
                            out.push(v);
                        }
                    }
                }
            }
            collect_breakpoints(a, out);
            collect_breakpoints(b, out);
        }
    }
}

fn print_ast(ast: &ExprAst, var: &str, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match ast {
        ExprAst::Num(v) if v.is_infinite() => write!(f, "inf"),
        ExprAst::Num(v) => write!(f, "{v:?}"),
        ExprAst::Var => write!(f, "{var}"),
        ExprAst::Neg(a) => {
            write!(f, "(-")?;
            print_ast(a, var, f)?;
            write!(f, ")")
        }
        ExprAst::Bin(op, a, b) => {
            let sym = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
                BinOp::Pow => "^",
            };
            write!(f, "(")?;
            print_ast(a, var, f)?;
            write!(f, " {sym} ")?;
            print_ast(b, var, f)?;
            write!(f, ")")
        }
        ExprAst::Call1(func, a) => {
            let name = match func {
                UnaryFn::Exp => "exp",
                UnaryFn::Log => "log",
                UnaryFn::Sqrt => "sqrt",
                UnaryFn::Abs => "abs",
            };
            write!(f, "{name}(")?;
            print_ast(a, var, f)?;
            write!(f, ")")
        }
        ExprAst::Call2(func, a, b) => {
            let name = match func {
                BinaryFn::Min => "min",
                BinaryFn::Max => "max",
                BinaryFn::Pow => "pow",
                BinaryFn::Indicator => "indicator",
            };
            write!(f, "{name}(")?;
            print_ast(a, var, f)?;
            write!(f, ", ")?;
            print_ast(b, var, f)?;
            write!(f, ")")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Op(char),
    End,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    tok: Tok,
    tok_start: usize,
    var: Option<String>,
}

fn syntax(offset: usize, expected: &[&str]) -> Error {
    Error::Syntax {
        offset,
        expected: expected.iter().map(|s| s.to_string()).collect(),
    }
}

const OPERAND: &[&str] = &["number", "name", "'('", "'-'"];

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self> {
        let mut p = Parser {
            src,
            pos: 0,
            tok: Tok::End,
            tok_start: 0,
            var: None,
        };
        p.advance()?;
        Ok(p)
    }

    fn advance(&mut self) -> Result<()> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        self.tok_start = self.pos;
        if self.pos >= bytes.len() {
            self.tok = Tok::End;
            return Ok(());
        }
        let c = bytes[self.pos];
        if c.is_ascii_digit() || c == b'.' {
            let start = self.pos;
            while self.pos < bytes.len() && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.') {
                self.pos += 1;
            }
            if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
                let mut look = self.pos + 1;
                if look < bytes.len() && (bytes[look] == b'+' || bytes[look] == b'-') {
                    look += 1;
                }
                if look < bytes.len() && bytes[look].is_ascii_digit() {
                    self.pos = look;
                    while self.pos < bytes.len() && bytes[self.pos].is_ascii_digit() {
                        self.pos += 1;
                    }
                }
            }
            let text = &self.src[start..self.pos];
            let v: f64 = text.parse().map_err(|_| syntax(start, &["number"]))?;
            self.tok = Tok::Num(v);
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = self.pos;
            while self.pos < bytes.len() && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_') {
                self.pos += 1;
            }
            self.tok = Tok::Name(self.src[start..self.pos].to_string());
        } else if b"+-*/^(),".contains(&c) {
            self.pos += 1;
            self.tok = Tok::Op(c as char);
        } else {
            // Report the offending character, whatever its width.
            return Err(syntax(self.pos, &["number", "name", "operator"]));
        }
        Ok(())
    }

    fn eat(&mut self, op: char) -> Result<bool> {
        if self.tok == Tok::Op(op) {
            self.advance()?;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn expect(&mut self, op: char) -> Result<()> {
        if self.eat(op)? {
            Ok(())
        } else {
            Err(syntax(self.tok_start, &[&format!("'{op}'")]))
        }
    }

    fn expr(&mut self) -> Result<ExprAst> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance()?;
            let rhs = self.term()?;
            lhs = ExprAst::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<ExprAst> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.tok {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.advance()?;
            let rhs = self.unary()?;
            lhs = ExprAst::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<ExprAst> {
        if self.eat('-')? {
            Ok(ExprAst::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<ExprAst> {
        let base = self.primary()?;
        if self.eat('^')? {
            let exp = self.unary()?;
            Ok(ExprAst::Bin(BinOp::Pow, Box::new(base), Box::new(exp)))
        } else {
            Ok(base)
        }
    }

    fn primary(&mut self) -> Result<ExprAst> {
        let start = self.tok_start;
        match self.tok.clone() {
            Tok::Num(v) => {
                self.advance()?;
                Ok(ExprAst::Num(v))
            }
            Tok::Op('(') => {
                self.advance()?;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Name(name) => {
                self.advance()?;
                if self.tok == Tok::Op('(') {
                    self.call(&name, start)
                } else {
                    match name.as_str() {
                        "pi" => Ok(ExprAst::Num(std::f64::consts::PI)),
                        "inf" => Ok(ExprAst::Num(f64::INFINITY)),
                        _ if function_arity(&name).is_some() => Err(syntax(self.tok_start, &["'('"])),
                        _ => match &self.var {
                            Some(v) if *v != name => Err(syntax(start, &[&format!("variable `{v}`")])),
                            Some(_) => Ok(ExprAst::Var),
                            None => {
                                self.var = Some(name);
                                Ok(ExprAst::Var)
                            }
                        },
                    }
                }
            }
            _ => Err(syntax(start, OPERAND)),
        }
    }

    fn call(&mut self, name: &str, start: usize) -> Result<ExprAst> {
        let Some(arity) = function_arity(name) else {
            return Err(syntax(start, &["function name"]));
        };
        self.expect('(')?;
        let a = self.expr()?;
        let out = if arity == 1 {
            let f = match name {
                "exp" => UnaryFn::Exp,
                "log" => UnaryFn::Log,
                "sqrt" => UnaryFn::Sqrt,
                _ => UnaryFn::Abs,
            };
            ExprAst::Call1(f, Box::new(a))
        } else {
            self.expect(',')?;
            let b = self.expr()?;
            let f = match name {
                "min" => BinaryFn::Min,
                "max" => BinaryFn::Max,
                "pow" => BinaryFn::Pow,
                _ => BinaryFn::Indicator,
            };
            ExprAst::Call2(f, Box::new(a), Box::new(b))
        };
        self.expect(')')?;
        Ok(out)
    }
}

fn function_arity(name: &str) -> Option<usize> {
    match name {
        "exp" | "log" | "sqrt" | "abs" => Some(1),
        "min" | "max" | "pow" | "indicator" => Some(2),
        _ => None,
    }
}

pub fn parse(text: &str) -> Result<Expr> {
    let mut p = Parser::new(text)?;
    let ast = p.expr()?;
    if p.tok != Tok::End {
        return Err(syntax(p.tok_start, &["operator", "end of input"]));
    }
    Ok(Expr { ast, var: p.var })
}

fn fault(what: &str, x: f64) -> Error {
    Error::NonFinite(format!("{what} at {x}"))
}

fn eval_node(ast: &ExprAst, y: f64) -> Result<f64> {
    Ok(match ast {
        ExprAst::Num(v) => *v,
        ExprAst::Var => y,
        ExprAst::Neg(a) => -eval_node(a, y)?,
        ExprAst::Bin(op, a, b) => {
            let l = eval_node(a, y)?;
            let r = eval_node(b, y)?;
            match op {
                BinOp::Add => l + r,
                BinOp::Sub => l - r,
                BinOp::Mul => l * r,
                BinOp::Div => {
                    if r == 0.0 {
                        return Err(fault("division by zero", y));
                    }
                    l / r
                }
                BinOp::Pow => l.powf(r),
            }
        }
        ExprAst::Call1(f, a) => {
            let v = eval_node(a, y)?;
            match f {
                UnaryFn::Exp => v.exp(),
                UnaryFn::Log => {
                    if v <= 0.0 {
                        return Err(fault("log of non-positive value", y));
                    }
                    v.ln()
                }
                UnaryFn::Sqrt => {
                    if v < 0.0 {
                        return Err(fault("sqrt of negative value", y));
                    }
                    v.sqrt()
                }
                UnaryFn::Abs => v.abs(),
            }
        }
        ExprAst::Call2(f, a, b) => {
            let l = eval_node(a, y)?;
            let r = eval_node(b, y)?;
            match f {
                BinaryFn::Min => l.min(r),
                BinaryFn::Max => l.max(r),
                BinaryFn::Pow => l.powf(r),
                BinaryFn::Indicator => {
                    if l < y && y <= r {
                        1.0
                    } else {
                        0.0
                    }
                }
            }
        }
    })
}

/// Evaluates `ast` at `arg`. Domain faults and non-finite results are
/// reported as [`Error::NonFinite`].
pub fn eval(ast: &ExprAst, arg: f64) -> Result<f64> {
    let v = eval_node(ast, arg)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(fault("non-finite result", arg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_tree() {
        let e = parse("y - 1").unwrap();
        assert_eq!(
            e.ast,
            ExprAst::Bin(BinOp::Sub, Box::new(ExprAst::Var), Box::new(ExprAst::Num(1.0)))
        );
        assert_eq!(e.var.as_deref(), Some("y"));
    }

    #[test]
    fn power_binds_tighter_than_unary_minus() {
        let e = parse("-y^2").unwrap();
        assert_eq!(e.eval(3.0).unwrap(), -9.0);
        let e = parse("0.5*y^2 - log(y)").unwrap();
        assert!((e.eval(2.0).unwrap() - (2.0 - 2f64.ln())).abs() < 1e-15);
        let e = parse("2^3^2").unwrap();
        assert_eq!(e.eval(0.0).unwrap(), 512.0);
        let e = parse("2^-1").unwrap();
        assert_eq!(e.eval(0.0).unwrap(), 0.5);
    }

    #[test]
    fn malformed_offset() {
        match parse("y ++ 2") {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn eval_examples() {
        assert_eq!(parse("min(y, 3)").unwrap().eval(5.0).unwrap(), 3.0);
        let v = parse("exp(-2*0.5*y)").unwrap().eval(1.0).unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-16);
        assert!(matches!(parse("log(y)").unwrap().eval(0.0), Err(Error::NonFinite(_))));
        assert!(matches!(parse("1/(y-1)").unwrap().eval(1.0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn indicator_and_breakpoints() {
        let e = parse("indicator(1.5, inf)").unwrap();
        assert_eq!(e.eval(1.5).unwrap(), 0.0);
        assert_eq!(e.eval(1.6).unwrap(), 1.0);
        assert_eq!(e.breakpoints(), vec![1.5]);
    }

    #[test]
    fn second_variable_rejected() {
        match parse("x + y") {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constants_and_exponent_literals() {
        let e = parse("2.5e-1 * pi").unwrap();
        assert!((e.eval(0.0).unwrap() - 0.25 * std::f64::consts::PI).abs() < 1e-15);
        assert!(e.var.is_none());
    }

    #[test]
    fn printer_is_fully_parenthesized() {
        let e = parse("1 + y * 2").unwrap();
        assert_eq!(e.to_string(), "(1.0 + (y * 2.0))");
    }
}
