//! Circuit IR: a small line-oriented, QASM-like text format.
//!
//! ```text
//! qir 1;                 // optional version header
//! qubits input;          // register size, integer expression
//! h 0;
//! u(pi/2, 0, pi) 1;
//! cx 0, 1;
//! measure all;           // or: measure 0, 1;
//! ```
//!
//! Built-in programs are a single statement: `builtin qrng;`,
//! `builtin dj <constant0|constant1|balanced_xor>;`, `builtin shor [base];`.
//! Comments run from `//` or `#` to end of line.

use alloc::borrow::ToOwned;
use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::builders::{self, BuildError, DjOracle, ShorLayout};
use crate::circuit::{Circuit, CircuitError};
use crate::shor::{self, ShorError};
use crate::statevec::{Gate, SimError};

pub const IR_VERSION: u32 = 1;
pub const MAX_SOURCE_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IrError {
    #[error("{line}:{column}: syntax error: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{line}:{column}: unknown gate `{name}`")]
    UnknownGate {
        line: usize,
        column: usize,
        name: String,
    },
    #[error("{line}:{column}: undeclared parameter `{name}`")]
    UndeclaredParameter {
        line: usize,
        column: usize,
        name: String,
    },
    #[error("declared parameter `{0}` is never used")]
    UnusedParameter(String),
    #[error("source is {0} bytes, limit is 65536")]
    SourceTooLarge(usize),
    #[error("template kind {declared:?} does not match source ({found:?})")]
    KindMismatch {
        declared: TemplateKind,
        found: TemplateKind,
    },
    #[error("input out of range: {0}")]
    InputOutOfRange(String),
    #[error("{requested} qubits exceeds the limit of {limit}")]
    QubitLimitExceeded { requested: usize, limit: usize },
    #[error(transparent)]
    Shor(#[from] ShorError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

impl From<SimError> for IrError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::QubitLimitExceeded { requested, limit } => {
                IrError::QubitLimitExceeded { requested, limit }
            }
            SimError::ZeroQubits => IrError::InputOutOfRange("circuit needs at least one qubit".into()),
            other => IrError::Circuit(CircuitError::Gate(other)),
        }
    }
}

impl From<BuildError> for IrError {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::Sim(s) => s.into(),
            BuildError::Shor(s) => s.into(),
        }
    }
}

/// SDK the function was written against. Recorded, never executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dialect {
    Qiskit,
    Cirq,
    Qsharp,
    Braket,
}

impl Dialect {
    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "qiskit" => Some(Dialect::Qiskit),
            "cirq" => Some(Dialect::Cirq),
            "qsharp" | "q#" => Some(Dialect::Qsharp),
            "braket" => Some(Dialect::Braket),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TemplateKind {
    Static,
    BuiltinQrng,
    BuiltinDj,
    BuiltinShor,
    Parametric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 2,
        }
    }

    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Rem => '%',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Int(i64),
    Float(f64),
    Pi,
    Param(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Builtin {
    Qrng,
    Dj(DjOracle),
    Shor { base: Option<u64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateName {
    H,
    X,
    Y,
    Z,
    P,
    U,
    Cx,
    Cz,
    Cp,
    Ccx,
    Swap,
}

impl GateName {
    fn from_ident(s: &str) -> Option<Self> {
        Some(match s {
            "h" => GateName::H,
            "x" => GateName::X,
            "y" => GateName::Y,
            "z" => GateName::Z,
            "p" => GateName::P,
            "u" => GateName::U,
            "cx" | "cnot" => GateName::Cx,
            "cz" => GateName::Cz,
            "cp" => GateName::Cp,
            "ccx" => GateName::Ccx,
            "swap" => GateName::Swap,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GateName::H => "h",
            GateName::X => "x",
            GateName::Y => "y",
            GateName::Z => "z",
            GateName::P => "p",
            GateName::U => "u",
            GateName::Cx => "cx",
            GateName::Cz => "cz",
            GateName::Cp => "cp",
            GateName::Ccx => "ccx",
            GateName::Swap => "swap",
        }
    }

    /// (angle count, qubit operand count)
    pub fn arity(self) -> (usize, usize) {
        match self {
            GateName::H | GateName::X | GateName::Y | GateName::Z => (0, 1),
            GateName::P => (1, 1),
            GateName::U => (3, 1),
            GateName::Cx | GateName::Cz | GateName::Swap => (0, 2),
            GateName::Cp => (1, 2),
            GateName::Ccx => (0, 3),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Header(u32),
    Qubits(Expr),
    Gate {
        name: GateName,
        angles: Vec<Expr>,
        qubits: Vec<Expr>,
    },
    MeasureAll,
    Measure(Vec<Expr>),
    Builtin(Builtin),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program {
    pub stmts: Vec<Stmt>,
}

// ---------------------------------------------------------------- lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Sym(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, IrError> {
    let mut out = Vec::new();
    let mut chars = src.char_indices().peekable();
    let (mut line, mut line_start) = (1usize, 0usize);
    while let Some(&(i, c)) = chars.peek() {
        let column = i - line_start + 1;
        if c == '\n' {
            chars.next();
            line += 1;
            line_start = i + 1;
        } else if c.is_whitespace() {
            chars.next();
        } else if c == '#' || (c == '/' && src[i..].starts_with("//")) {
            while let Some(&(_, c)) = chars.peek() {
                if c == '\n' {
                    break;
                }
                chars.next();
            }
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut end = i;
            while let Some(&(j, c)) = chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    end = j + c.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            out.push(Token {
                tok: Tok::Ident(src[i..end].to_owned()),
                line,
                column,
            });
        } else if c.is_ascii_digit() || c == '.' {
            let mut end = i;
            let mut is_float = false;
            let mut prev = ' ';
            while let Some(&(j, c)) = chars.peek() {
                let exp_sign = (c == '+' || c == '-') && (prev == 'e' || prev == 'E');
                if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exp_sign {
                    is_float |= c == '.' || c == 'e' || c == 'E';
                    end = j + 1;
                    prev = c;
                    chars.next();
                } else {
                    break;
                }
            }
            let text = &src[i..end];
            let syntax = |message: String| IrError::Syntax {
                line,
                column,
                message,
            };
            let tok = if is_float {
                Tok::Float(
                    text.parse()
                        .map_err(|_| syntax(format!("bad number `{text}`")))?,
                )
            } else {
                Tok::Int(
                    text.parse()
                        .map_err(|_| syntax(format!("integer `{text}` out of range")))?,
                )
            };
            out.push(Token { tok, line, column });
        } else if ";,()+-*/%".contains(c) {
            chars.next();
            out.push(Token {
                tok: Tok::Sym(c),
                line,
                column,
            });
        } else {
            return Err(IrError::Syntax {
                line,
                column,
                message: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- parser

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    declared: &'a [String],
    used: Vec<bool>,
    eof: (usize, usize),
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn here(&self) -> (usize, usize) {
        self.peek().map(|t| (t.line, t.column)).unwrap_or(self.eof)
    }

    fn err(&self, message: impl Into<String>) -> IrError {
        let (line, column) = self.here();
        IrError::Syntax {
            line,
            column,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn eat_sym(&mut self, c: char) -> bool {
        if matches!(self.peek(), Some(Token { tok: Tok::Sym(s), .. }) if *s == c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, c: char) -> Result<(), IrError> {
        if self.eat_sym(c) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{c}`")))
        }
    }

    fn ident(&mut self) -> Result<String, IrError> {
        match self.next() {
            Some(Token {
                tok: Tok::Ident(s), ..
            }) => Ok(s),
            _ => {
                self.pos -= 1;
                Err(self.err("expected identifier"))
            }
        }
    }

    fn program(&mut self) -> Result<Program, IrError> {
        let mut stmts = Vec::new();
        while self.peek().is_some() {
            stmts.push(self.stmt()?);
        }
        Ok(Program { stmts })
    }

    fn stmt(&mut self) -> Result<Stmt, IrError> {
        let (line, column) = self.here();
        let word = self.ident()?;
        let stmt = match word.as_str() {
            "qir" => match self.next().map(|t| t.tok) {
                Some(Tok::Int(v)) if v == IR_VERSION as i64 => Stmt::Header(IR_VERSION),
                _ => {
                    self.pos -= 1;
                    return Err(self.err("unsupported IR version, expected `qir 1`"));
                }
            },
            "qubits" => Stmt::Qubits(self.expr()?),
            "measure" => {
                if matches!(self.peek(), Some(Token { tok: Tok::Ident(s), .. }) if s == "all") {
                    self.pos += 1;
                    Stmt::MeasureAll
                } else {
                    Stmt::Measure(self.expr_list()?)
                }
            }
            "builtin" => Stmt::Builtin(self.builtin()?),
            other => {
                let name = GateName::from_ident(other).ok_or_else(|| IrError::UnknownGate {
                    line,
                    column,
                    name: other.to_owned(),
                })?;
                let (n_angles, n_qubits) = name.arity();
                let angles = if n_angles > 0 && self.eat_sym('(') {
                    let a = self.expr_list()?;
                    self.expect_sym(')')?;
                    a
                } else {
                    Vec::new()
                };
                if angles.len() != n_angles {
                    return Err(IrError::Syntax {
                        line,
                        column,
                        message: format!("`{other}` takes {n_angles} angle(s), got {}", angles.len()),
                    });
                }
                let qubits = self.expr_list()?;
                if qubits.len() != n_qubits {
                    return Err(IrError::Syntax {
                        line,
                        column,
                        message: format!("`{other}` takes {n_qubits} qubit(s), got {}", qubits.len()),
                    });
                }
                Stmt::Gate {
                    name,
                    angles,
                    qubits,
                }
            }
        };
        self.expect_sym(';')?;
        Ok(stmt)
    }

    fn builtin(&mut self) -> Result<Builtin, IrError> {
        let which = self.ident()?;
        match which.as_str() {
            "qrng" => Ok(Builtin::Qrng),
            "dj" => {
                let oracle_name = self.ident()?;
                DjOracle::from_name(&oracle_name)
                    .map(Builtin::Dj)
                    .ok_or_else(|| self.err(format!("unknown Deutsch-Jozsa oracle `{oracle_name}`")))
            }
            "shor" => match self.peek().map(|t| t.tok.clone()) {
                Some(Tok::Int(b)) if b > 1 => {
                    self.pos += 1;
                    Ok(Builtin::Shor { base: Some(b as u64) })
                }
                Some(Tok::Sym(';')) => Ok(Builtin::Shor { base: None }),
                _ => Err(self.err("expected base > 1 or `;`")),
            },
            other => Err(self.err(format!("unknown builtin `{other}`"))),
        }
    }

    fn expr_list(&mut self) -> Result<Vec<Expr>, IrError> {
        let mut v = alloc::vec![self.expr()?];
        while self.eat_sym(',') {
            v.push(self.expr()?);
        }
        Ok(v)
    }

    fn expr(&mut self) -> Result<Expr, IrError> {
        self.binary(1)
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, IrError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().map(|t| &t.tok) {
                Some(Tok::Sym('+')) => BinOp::Add,
                Some(Tok::Sym('-')) => BinOp::Sub,
                Some(Tok::Sym('*')) => BinOp::Mul,
                Some(Tok::Sym('/')) => BinOp::Div,
                Some(Tok::Sym('%')) => BinOp::Rem,
                _ => break,
            };
            if op.precedence() < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = self.binary(op.precedence() + 1)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, IrError> {
        if self.eat_sym('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        let (line, column) = self.here();
        match self.next().map(|t| t.tok) {
            Some(Tok::Int(v)) => Ok(Expr::Int(v)),
            Some(Tok::Float(v)) => Ok(Expr::Float(v)),
            Some(Tok::Ident(s)) if s == "pi" => Ok(Expr::Pi),
            Some(Tok::Ident(s)) => match self.declared.iter().position(|d| *d == s) {
                Some(i) => {
                    self.used[i] = true;
                    Ok(Expr::Param(s))
                }
                None => Err(IrError::UndeclaredParameter {
                    line,
                    column,
                    name: s,
                }),
            },
            Some(Tok::Sym('(')) => {
                let e = self.expr()?;
                self.expect_sym(')')?;
                Ok(e)
            }
            _ => {
                self.pos -= 1;
                Err(self.err("expected expression"))
            }
        }
    }
}

/// Parses IR source against a list of declared parameter names.
pub fn parse_program(source: &str, declared: &[String]) -> Result<Program, IrError> {
    if source.len() > MAX_SOURCE_BYTES {
        return Err(IrError::SourceTooLarge(source.len()));
    }
    let toks = lex(source)?;
    let lines = source.split('\n').count();
    let last_col = source.rsplit('\n').next().map(|l| l.chars().count() + 1).unwrap_or(1);
    let mut p = Parser {
        toks,
        pos: 0,
        declared,
        used: alloc::vec![false; declared.len()],
        eof: (lines, last_col),
    };
    let prog = p.program()?;
    check_structure(&prog)?;
    if !matches!(prog.stmts.iter().find(|s| !matches!(s, Stmt::Header(_))), Some(Stmt::Builtin(_))) {
        if let Some(i) = p.used.iter().position(|u| !u) {
            return Err(IrError::UnusedParameter(declared[i].clone()));
        }
    }
    Ok(prog)
}

fn check_structure(prog: &Program) -> Result<(), IrError> {
    let err = |message: &str| IrError::Syntax {
        line: 1,
        column: 1,
        message: message.to_owned(),
    };
    let body: Vec<&Stmt> = prog
        .stmts
        .iter()
        .enumerate()
        .filter(|(i, s)| !(*i == 0 && matches!(s, Stmt::Header(_))))
        .map(|(_, s)| s)
        .collect();
    if body.iter().any(|s| matches!(s, Stmt::Header(_))) {
        return Err(err("`qir` header must be the first statement"));
    }
    if body.iter().any(|s| matches!(s, Stmt::Builtin(_))) {
        if body.len() != 1 {
            return Err(err("a `builtin` program must contain only the builtin statement"));
        }
        return Ok(());
    }
    match body.first() {
        Some(Stmt::Qubits(_)) => {}
        _ => return Err(err("program must start with `qubits <n>;`")),
    }
    if body.iter().skip(1).any(|s| matches!(s, Stmt::Qubits(_))) {
        return Err(err("`qubits` may appear only once"));
    }
    let measures = body
        .iter()
        .filter(|s| matches!(s, Stmt::MeasureAll | Stmt::Measure(_)))
        .count();
    if measures != 1 || !matches!(body.last(), Some(Stmt::MeasureAll | Stmt::Measure(_))) {
        return Err(err("program must end with exactly one `measure` statement"));
    }
    Ok(())
}

// ---------------------------------------------------------------- render

fn write_expr(out: &mut String, e: &Expr, parent_prec: u8, right_side: bool) {
    match e {
        Expr::Int(v) => {
            let _ = write!(out, "{v}");
        }
        Expr::Float(v) => {
            let _ = write!(out, "{v:?}");
        }
        Expr::Pi => out.push_str("pi"),
        Expr::Param(s) => out.push_str(s),
        Expr::Neg(inner) => {
            out.push('-');
            write_expr(out, inner, 3, false);
        }
        Expr::Binary(op, l, r) => {
            let prec = op.precedence();
            let paren = prec < parent_prec || (right_side && prec == parent_prec);
            if paren {
                out.push('(');
            }
            write_expr(out, l, prec, false);
            let _ = write!(out, " {} ", op.symbol());
            write_expr(out, r, prec, true);
            if paren {
                out.push(')');
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_expr(&mut s, self, 0, false);
        f.write_str(&s)
    }
}

fn join(exprs: &[Expr]) -> String {
    exprs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ")
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "qir {IR_VERSION};")?;
        for stmt in &self.stmts {
            match stmt {
                Stmt::Header(_) => continue,
                Stmt::Qubits(e) => writeln!(f, "qubits {e};")?,
                Stmt::Gate {
                    name,
                    angles,
                    qubits,
                } => {
                    if angles.is_empty() {
                        writeln!(f, "{} {};", name.as_str(), join(qubits))?
                    } else {
                        writeln!(f, "{}({}) {};", name.as_str(), join(angles), join(qubits))?
                    }
                }
                Stmt::MeasureAll => writeln!(f, "measure all;")?,
                Stmt::Measure(qs) => writeln!(f, "measure {};", join(qs))?,
                Stmt::Builtin(Builtin::Qrng) => writeln!(f, "builtin qrng;")?,
                Stmt::Builtin(Builtin::Dj(o)) => writeln!(f, "builtin dj {};", o.name())?,
                Stmt::Builtin(Builtin::Shor { base: None }) => writeln!(f, "builtin shor;")?,
                Stmt::Builtin(Builtin::Shor { base: Some(b) }) => writeln!(f, "builtin shor {b};")?,
            }
        }
        Ok(())
    }
}

impl Program {
    /// Program without the optional version header, for structural comparison.
    pub fn body(&self) -> impl Iterator<Item = &Stmt> {
        self.stmts.iter().filter(|s| !matches!(s, Stmt::Header(_)))
    }

    fn builtin(&self) -> Option<&Builtin> {
        self.body().find_map(|s| match s {
            Stmt::Builtin(b) => Some(b),
            _ => None,
        })
    }

    fn has_params(&self) -> bool {
        fn expr_has(e: &Expr) -> bool {
            match e {
                Expr::Param(_) => true,
                Expr::Neg(i) => expr_has(i),
                Expr::Binary(_, l, r) => expr_has(l) || expr_has(r),
                _ => false,
            }
        }
        self.body().any(|s| match s {
            Stmt::Qubits(e) => expr_has(e),
            Stmt::Gate { angles, qubits, .. } => angles.iter().chain(qubits).any(expr_has),
            Stmt::Measure(qs) => qs.iter().any(expr_has),
            _ => false,
        })
    }

    pub fn kind(&self) -> TemplateKind {
        match self.builtin() {
            Some(Builtin::Qrng) => TemplateKind::BuiltinQrng,
            Some(Builtin::Dj(_)) => TemplateKind::BuiltinDj,
            Some(Builtin::Shor { .. }) => TemplateKind::BuiltinShor,
            None if self.has_params() => TemplateKind::Parametric,
            None => TemplateKind::Static,
        }
    }
}

/// Canonical text of a program. Always carries the `qir 1;` header.
pub fn render(program: &Program) -> String {
    program.to_string()
}

// ---------------------------------------------------------------- templates

/// A parsed, validated function body.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitTemplate {
    pub source: String,
    pub declared_params: Vec<String>,
    pub dialect: Dialect,
    pub kind: TemplateKind,
    pub program: Program,
}

/// Parses and validates `source`. When `kind` is given it must agree with
/// the kind inferred from the source.
pub fn parse_template(
    source: &str,
    dialect: Dialect,
    kind: Option<TemplateKind>,
    declared_params: &[String],
) -> Result<CircuitTemplate, IrError> {
    if declared_params.len() > 1 {
        return Err(IrError::Syntax {
            line: 1,
            column: 1,
            message: "at most one declared parameter (the request input) is supported".into(),
        });
    }
    let program = parse_program(source, declared_params)?;
    let found = program.kind();
    if let Some(declared) = kind {
        if declared != found {
            return Err(IrError::KindMismatch { declared, found });
        }
    }
    Ok(CircuitTemplate {
        source: source.to_owned(),
        declared_params: declared_params.to_vec(),
        dialect,
        kind: found,
        program,
    })
}

/// A concrete circuit plus what post-processing needs to interpret it.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub circuit: Circuit,
    pub shor: Option<ShorLayout>,
}

enum Value {
    Int(i64),
    Real(f64),
}

struct Env<'a> {
    param: Option<(&'a str, i64)>,
}

impl Env<'_> {
    fn eval(&self, e: &Expr) -> Result<Value, IrError> {
        let oor = |m: &str| IrError::InputOutOfRange(m.to_owned());
        Ok(match e {
            Expr::Int(v) => Value::Int(*v),
            Expr::Float(v) => Value::Real(*v),
            Expr::Pi => Value::Real(PI),
            Expr::Param(name) => match self.param {
                Some((p, v)) if p == name => Value::Int(v),
                _ => return Err(oor("unbound parameter")),
            },
            Expr::Neg(inner) => match self.eval(inner)? {
                Value::Int(v) => Value::Int(v.checked_neg().ok_or_else(|| oor("overflow"))?),
                Value::Real(v) => Value::Real(-v),
            },
            Expr::Binary(op, l, r) => match (self.eval(l)?, self.eval(r)?) {
                (Value::Int(a), Value::Int(b)) => Value::Int(
                    match op {
                        BinOp::Add => a.checked_add(b),
                        BinOp::Sub => a.checked_sub(b),
                        BinOp::Mul => a.checked_mul(b),
                        BinOp::Div => a.checked_div(b),
                        BinOp::Rem => a.checked_rem(b),
                    }
                    .ok_or_else(|| oor("integer overflow or division by zero"))?,
                ),
                (a, b) => {
                    let (a, b) = (a.real(), b.real());
                    Value::Real(match op {
                        BinOp::Add => a + b,
                        BinOp::Sub => a - b,
                        BinOp::Mul => a * b,
                        BinOp::Div => a / b,
                        BinOp::Rem => a % b,
                    })
                }
            },
        })
    }

    fn int(&self, e: &Expr) -> Result<i64, IrError> {
        match self.eval(e)? {
            Value::Int(v) => Ok(v),
            Value::Real(_) => Err(IrError::InputOutOfRange(format!("`{e}` is not an integer expression"))),
        }
    }

    fn index(&self, e: &Expr, num_qubits: usize) -> Result<usize, IrError> {
        let v = self.int(e)?;
        if v < 0 || v as u64 >= num_qubits as u64 {
            return Err(IrError::InputOutOfRange(format!(
                "qubit index `{e}` = {v} outside 0..{num_qubits}"
            )));
        }
        Ok(v as usize)
    }

    fn angle(&self, e: &Expr) -> Result<f64, IrError> {
        let v = self.eval(e)?.real();
        if !v.is_finite() {
            return Err(IrError::InputOutOfRange(format!("angle `{e}` is not finite")));
        }
        Ok(v)
    }
}

impl Value {
    fn real(self) -> f64 {
        match self {
            Value::Int(v) => v as f64,
            Value::Real(v) => v,
        }
    }
}

/// Binds `input` and produces a concrete, validated circuit.
pub fn instantiate(template: &CircuitTemplate, input: i64, max_qubits: usize) -> Result<Instance, IrError> {
    if let Some(b) = template.program.builtin() {
        return instantiate_builtin(b, input, max_qubits);
    }
    let env = Env {
        param: template.declared_params.first().map(|p| (p.as_str(), input)),
    };
    let mut circuit: Option<Circuit> = None;
    for stmt in template.program.body() {
        match stmt {
            Stmt::Qubits(e) => {
                let n = env.int(e)?;
                if n < 1 {
                    return Err(IrError::InputOutOfRange(format!("register size {n} < 1")));
                }
                if n as u64 > max_qubits as u64 {
                    return Err(IrError::QubitLimitExceeded {
                        requested: n as usize,
                        limit: max_qubits,
                    });
                }
                circuit = Some(Circuit::new(n as usize));
            }
            other => {
                let c = circuit.as_mut().ok_or(IrError::Syntax {
                    line: 1,
                    column: 1,
                    message: "missing `qubits`".into(),
                })?;
                let n = c.num_qubits;
                match other {
                    Stmt::Gate {
                        name,
                        angles,
                        qubits,
                    } => {
                        let a: Vec<f64> = angles.iter().map(|e| env.angle(e)).collect::<Result<_, _>>()?;
                        let q: Vec<usize> = qubits.iter().map(|e| env.index(e, n)).collect::<Result<_, _>>()?;
                        let gate = match name {
                            GateName::H => Gate::h(q[0]),
                            GateName::X => Gate::x(q[0]),
                            GateName::Y => Gate::y(q[0]),
                            GateName::Z => Gate::z(q[0]),
                            GateName::P => Gate::p(a[0], q[0]),
                            GateName::U => Gate::u(a[0], a[1], a[2], q[0]),
                            GateName::Cx => Gate::cnot(q[0], q[1]),
                            GateName::Cz => Gate::z(q[1]).controlled_by([q[0]]),
                            GateName::Cp => Gate::p(a[0], q[1]).controlled_by([q[0]]),
                            GateName::Ccx => Gate::x(q[2]).controlled_by([q[0], q[1]]),
                            GateName::Swap => Gate::swap(q[0], q[1]),
                        };
                        gate.validate(n)?;
                        c.push(gate);
                    }
                    Stmt::MeasureAll => {
                        c.measure_all();
                    }
                    Stmt::Measure(qs) => {
                        let q: Vec<usize> = qs.iter().map(|e| env.index(e, n)).collect::<Result<_, _>>()?;
                        c.measure(q);
                    }
                    _ => {}
                }
            }
        }
    }
    let circuit = circuit.ok_or(IrError::Syntax {
        line: 1,
        column: 1,
        message: "missing `qubits`".into(),
    })?;
    circuit.validate()?;
    Ok(Instance { circuit, shor: None })
}

fn positive(input: i64, what: &str) -> Result<usize, IrError> {
    if input < 1 {
        return Err(IrError::InputOutOfRange(format!("{what} must be at least 1, got {input}")));
    }
    Ok(input as usize)
}

fn instantiate_builtin(b: &Builtin, input: i64, max_qubits: usize) -> Result<Instance, IrError> {
    match b {
        Builtin::Qrng => {
            let n = positive(input, "qubit count")?;
            Ok(Instance {
                circuit: builders::build_qrng_circuit(n, max_qubits)?,
                shor: None,
            })
        }
        Builtin::Dj(oracle) => {
            let n = positive(input, "input register size")?;
            Ok(Instance {
                circuit: builders::build_dj_circuit(n, *oracle, max_qubits)?,
                shor: None,
            })
        }
        Builtin::Shor { base } => {
            if input < 0 {
                return Err(ShorError::InvalidN {
                    n: 0,
                    reason: "negative",
                }
                .into());
            }
            let n = input as u64;
            shor::validate_modulus(n)?;
            let a = base.unwrap_or_else(|| shor::default_base(n));
            let (circuit, layout) = builders::build_shor_circuit(n, a, max_qubits)?;
            Ok(Instance {
                circuit,
                shor: Some(layout),
            })
        }
    }
}
