//! A small arithmetic language for scenario files.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, numbers, the constant
//! `pi`, functions `sin cos exp sqrt abs min max` and variables `t`, `x1`,
//! `x2`, `v1 … vm`. `^` is right-associative and binds tighter than unary
//! minus, so `-2^2 = -4`.

use crate::error::{Error, Result};

/// Which variables an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scope {
    pub space_dim: usize,
    pub components: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fun1 {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fun2 {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    T,
    X(usize),
    V(usize),
    Neg(Box<Node>),
    Bin(Op, Box<Node>, Box<Node>),
    Call1(Fun1, Box<Node>),
    Call2(Fun2, Box<Node>, Box<Node>),
}

impl Node {
    fn eval(&self, t: f64, x: &[f64], v: &[f64]) -> f64 {
        match self {
            Node::Num(c) => *c,
            Node::T => t,
            Node::X(i) => x[*i],
            Node::V(i) => v[*i],
            Node::Neg(a) => -a.eval(t, x, v),
            Node::Bin(op, a, b) => {
                let (a, b) = (a.eval(t, x, v), b.eval(t, x, v));
                match op {
                    Op::Add => a + b,
                    Op::Sub => a - b,
                    Op::Mul => a * b,
                    Op::Div => a / b,
                    Op::Pow => a.powf(b),
                }
            }
            Node::Call1(f, a) => {
                let a = a.eval(t, x, v);
                match f {
                    Fun1::Sin => a.sin(),
                    Fun1::Cos => a.cos(),
                    Fun1::Exp => a.exp(),
                    Fun1::Sqrt => a.sqrt(),
                    Fun1::Abs => a.abs(),
                }
            }
            Node::Call2(f, a, b) => {
                let (a, b) = (a.eval(t, x, v), b.eval(t, x, v));
                match f {
                    Fun2::Min => a.min(b),
                    Fun2::Max => a.max(b),
                }
            }
        }
    }
}

/// A parsed scalar expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl Expr {
    pub fn parse(source: &str, scope: Scope) -> Result<Self> {
        let tokens = tokenize(source)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            scope,
        };
        let root = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expr(format!(
                "unexpected {:?} in `{source}`",
                p.tokens[p.pos]
            )));
        }
        Ok(Self {
            source: source.to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &[f64], v: &[f64]) -> f64 {
        self.root.eval(t, x, v)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' | '-' | '*' | '/' | '^' => {
                out.push(Tok::Op(c));
                i += 1;
            }
            '−' => {
                out.push(Tok::Op('-'));
                i += 1;
            }
            '(' => {
                out.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1;
            }
            ',' => {
                out.push(Tok::Comma);
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let value = text
                    .parse::<f64>()
                    .map_err(|_| Error::Expr(format!("bad number `{text}`")))?;
                out.push(Tok::Num(value));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Tok::Ident(chars[start..i].iter().collect()));
            }
            other => return Err(Error::Expr(format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
    scope: Scope,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok) -> Result<()> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            other => Err(Error::Expr(format!("expected {want:?}, found {other:?}"))),
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { Op::Add } else { Op::Sub };
            self.pos += 1;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { Op::Mul } else { Op::Div };
            self.pos += 1;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Node::Bin(Op::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Node::Num(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if let Some(Tok::LParen) = self.peek() {
                    self.pos += 1;
                    self.call(&name)
                } else {
                    self.variable(&name)
                }
            }
            other => Err(Error::Expr(format!("unexpected {other:?}"))),
        }
    }

    fn call(&mut self, name: &str) -> Result<Node> {
        let mut args = vec![self.expr()?];
        while let Some(Tok::Comma) = self.peek() {
            self.pos += 1;
            args.push(self.expr()?);
        }
        self.expect(Tok::RParen)?;
        let f1 = match name {
            "sin" => Some(Fun1::Sin),
            "cos" => Some(Fun1::Cos),
            "exp" => Some(Fun1::Exp),
            "sqrt" => Some(Fun1::Sqrt),
            "abs" => Some(Fun1::Abs),
            _ => None,
        };
        let f2 = match name {
            "min" => Some(Fun2::Min),
            "max" => Some(Fun2::Max),
            _ => None,
        };
        match (f1, f2, args.len()) {
            (Some(f), _, 1) => Ok(Node::Call1(f, Box::new(args.remove(0)))),
            (_, Some(f), 2) => {
                let b = args.pop().unwrap();
                let a = args.pop().unwrap();
                Ok(Node::Call2(f, Box::new(a), Box::new(b)))
            }
            (None, None, _) => Err(Error::Expr(format!("unknown function `{name}`"))),
            (_, _, n) => Err(Error::Expr(format!("`{name}` does not take {n} arguments"))),
        }
    }

    fn variable(&self, name: &str) -> Result<Node> {
        if name == "t" {
            return Ok(Node::T);
        }
        if name == "pi" {
            return Ok(Node::Num(std::f64::consts::PI));
        }
        let indexed = |prefix: &str, limit: usize| -> Option<Result<usize>> {
            let k: usize = name.strip_prefix(prefix)?.parse().ok()?;
            Some(if (1..=limit).contains(&k) {
                Ok(k - 1)
            } else {
                Err(Error::Expr(format!("`{name}` is out of range (1..={limit})")))
            })
        };
        if let Some(k) = indexed("x", self.scope.space_dim) {
            return Ok(Node::X(k?));
        }
        if let Some(k) = indexed("v", self.scope.components) {
            return Ok(Node::V(k?));
        }
        Err(Error::Expr(format!("unknown variable `{name}`")))
    }
}
