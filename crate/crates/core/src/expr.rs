//! A small arithmetic grammar for observables and explicit Jacobians.
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Identifiers: `x`, `y`, `pi`, `e`, and `logjac` (log of the absolute
//! derivative, or of the absolute Jacobian determinant in 2D, at the current
//! point). Functions: `abs ln log exp sqrt sin cos min max`, `ind(a, b)` for
//! the indicator of `a <= x < b`, and `ind2(x0, x1, y0, y1)` for a planar cell.

use std::fmt;

use thiserror::Error;

const MAX_DEPTH: usize = 64;
const MAX_LEN: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("expression error at byte {pos}: {msg}")]
pub struct ExprError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Abs,
    Ln,
    Exp,
    Sqrt,
    Sin,
    Cos,
    Min,
    Max,
    Ind,
    Ind2,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "abs" => Func::Abs,
            "ln" | "log" => Func::Ln,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "min" => Func::Min,
            "max" => Func::Max,
            "ind" => Func::Ind,
            "ind2" => Func::Ind2,
            _ => return None,
        })
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max | Func::Ind => 2,
            Func::Ind2 => 4,
            _ => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Abs => "abs",
            Func::Ln => "ln",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Min => "min",
            Func::Max => "max",
            Func::Ind => "ind",
            Func::Ind2 => "ind2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    X,
    Y,
    LogJac,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// Values an expression can read.
#[derive(Debug, Clone, Copy, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub logjac: f64,
}

/// Parsed expression together with its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
    uses_logjac: bool,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        if src.len() > MAX_LEN {
            return Err(ExprError {
                pos: MAX_LEN,
                msg: "expression too long".into(),
            });
        }
        let mut p = Parser {
            src: src.as_bytes(),
            pos: 0,
            depth: 0,
        };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        let uses_logjac = contains_logjac(&root);
        Ok(Expr {
            source: src.trim().to_string(),
            root,
            uses_logjac,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Whether evaluation reads `logjac`; callers skip computing it otherwise.
    pub fn uses_logjac(&self) -> bool {
        self.uses_logjac
    }

    pub fn eval(&self, at: Point) -> f64 {
        eval(&self.root, &at)
    }

    pub fn eval_x(&self, x: f64) -> f64 {
        self.eval(Point { x, ..Point::default() })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

fn contains_logjac(n: &Node) -> bool {
    match n {
        Node::LogJac => true,
        Node::Num(_) | Node::X | Node::Y => false,
        Node::Neg(a) => contains_logjac(a),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
            contains_logjac(a) || contains_logjac(b)
        }
        Node::Call(_, args) => args.iter().any(contains_logjac),
    }
}

fn eval(n: &Node, at: &Point) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::X => at.x,
        Node::Y => at.y,
        Node::LogJac => at.logjac,
        Node::Neg(a) => -eval(a, at),
        Node::Add(a, b) => eval(a, at) + eval(b, at),
        Node::Sub(a, b) => eval(a, at) - eval(b, at),
        Node::Mul(a, b) => eval(a, at) * eval(b, at),
        Node::Div(a, b) => eval(a, at) / eval(b, at),
        Node::Pow(a, b) => eval(a, at).powf(eval(b, at)),
        Node::Call(f, args) => {
            let v = |i: usize| eval(&args[i], at);
            match f {
                Func::Abs => v(0).abs(),
                Func::Ln => v(0).ln(),
                Func::Exp => v(0).exp(),
                Func::Sqrt => v(0).sqrt(),
                Func::Sin => v(0).sin(),
                Func::Cos => v(0).cos(),
                Func::Min => v(0).min(v(1)),
                Func::Max => v(0).max(v(1)),
                Func::Ind => indicator(at.x >= v(0) && at.x < v(1)),
                Func::Ind2 => indicator(at.x >= v(0) && at.x < v(1) && at.y >= v(2) && at.y < v(3)),
            }
        }
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    depth: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> ExprError {
        ExprError {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn enter(&mut self) -> Result<(), ExprError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            Err(self.err("expression nested too deeply"))
        } else {
            Ok(())
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                break;
            }
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                break;
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        self.enter()?;
        let out = if self.eat(b'-') {
            Node::Neg(Box::new(self.unary()?))
        } else {
            self.power()?
        };
        self.depth -= 1;
        Ok(out)
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            Ok(Node::Pow(Box::new(base), Box::new(self.unary()?)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(_) => Err(self.err("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let mut q = self.pos + 1;
            if q < self.src.len() && matches!(self.src[q], b'+' | b'-') {
                q += 1;
            }
            if q < self.src.len() && self.src[q].is_ascii_digit() {
                while q < self.src.len() && self.src[q].is_ascii_digit() {
                    q += 1;
                }
                self.pos = q;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).map_err(|_| self.err("invalid utf-8"))?;
        text.parse::<f64>().map(Node::Num).map_err(|_| ExprError {
            pos: start,
            msg: format!("invalid number '{text}'"),
        })
    }

    fn ident(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).map_err(|_| self.err("invalid utf-8"))?;
        match name {
            "x" => return Ok(Node::X),
            "y" => return Ok(Node::Y),
            "pi" => return Ok(Node::Num(std::f64::consts::PI)),
            "e" => return Ok(Node::Num(std::f64::consts::E)),
            "logjac" => return Ok(Node::LogJac),
            _ => {}
        }
        let Some(func) = Func::lookup(name) else {
            return Err(ExprError {
                pos: start,
                msg: format!("unknown identifier '{name}'"),
            });
        };
        if !self.eat(b'(') {
            return Err(self.err(&format!("expected '(' after {}", func.name())));
        }
        let mut args = vec![self.expr()?];
        while self.eat(b',') {
            args.push(self.expr()?);
        }
        if !self.eat(b')') {
            return Err(self.err("expected ')'"));
        }
        if args.len() != func.arity() {
            return Err(ExprError {
                pos: start,
                msg: format!("{} takes {} argument(s), got {}", func.name(), func.arity(), args.len()),
            });
        }
        Ok(Node::Call(func, args))
    }
}
