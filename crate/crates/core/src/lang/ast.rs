//! Syntax tree for reward programs.

use std::fmt;

use serde::{Deserialize, Serialize};

/// 1-based position in the program source. Columns count characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub line: u32,
    pub column: u32,
}

impl Span {
    pub const fn new(line: u32, column: u32) -> Self {
        Self { line, column }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    /// Binding strength; all binary operators are left-associative.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Eq => lhs == rhs,
        }
    }
}

/// Built-in functions. There are no user-defined functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Abs,
    Min,
    Max,
    Clamp,
    Where,
    Exp,
    Tanh,
    Sqrt,
    Sign,
}

impl Func {
    pub const ALL: [Func; 9] = [
        Func::Abs,
        Func::Min,
        Func::Max,
        Func::Clamp,
        Func::Where,
        Func::Exp,
        Func::Tanh,
        Func::Sqrt,
        Func::Sign,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
            Func::Clamp => "clamp",
            Func::Where => "where",
            Func::Exp => "exp",
            Func::Tanh => "tanh",
            Func::Sqrt => "sqrt",
            Func::Sign => "sign",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Clamp | Func::Where => 3,
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone)]
pub enum ExprKind {
    Number(f64),
    Ident(String),
    Neg(Box<Expr>),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    /// Only ever the first argument of `where`.
    Compare {
        op: CmpOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Call {
        func: Func,
        args: Vec<Expr>,
    },
}

#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Self { kind, span }
    }

    /// Structural equality: same tree shape, operators, names and
    /// bit-identical literals. Spans are ignored.
    pub fn same_structure(&self, other: &Expr) -> bool {
        match (&self.kind, &other.kind) {
            (ExprKind::Number(a), ExprKind::Number(b)) => a.to_bits() == b.to_bits(),
            (ExprKind::Ident(a), ExprKind::Ident(b)) => a == b,
            (ExprKind::Neg(a), ExprKind::Neg(b)) => a.same_structure(b),
            (
                ExprKind::Binary { op, lhs, rhs },
                ExprKind::Binary {
                    op: op2,
                    lhs: lhs2,
                    rhs: rhs2,
                },
            ) => op == op2 && lhs.same_structure(lhs2) && rhs.same_structure(rhs2),
            (
                ExprKind::Compare { op, lhs, rhs },
                ExprKind::Compare {
                    op: op2,
                    lhs: lhs2,
                    rhs: rhs2,
                },
            ) => op == op2 && lhs.same_structure(lhs2) && rhs.same_structure(rhs2),
            (ExprKind::Call { func, args }, ExprKind::Call { func: f2, args: a2 }) => {
                func == f2
                    && args.len() == a2.len()
                    && args.iter().zip(a2).all(|(x, y)| x.same_structure(y))
            }
            _ => false,
        }
    }

    /// Visits every identifier reference in evaluation order.
    pub fn for_each_ident<'a>(&'a self, f: &mut impl FnMut(&'a str, Span)) {
        match &self.kind {
            ExprKind::Number(_) => {}
            ExprKind::Ident(name) => f(name, self.span),
            ExprKind::Neg(inner) => inner.for_each_ident(f),
            ExprKind::Binary { lhs, rhs, .. } | ExprKind::Compare { lhs, rhs, .. } => {
                lhs.for_each_ident(f);
                rhs.for_each_ident(f);
            }
            ExprKind::Call { args, .. } => args.iter().for_each(|a| a.for_each_ident(f)),
        }
    }

    pub fn depth(&self) -> usize {
        match &self.kind {
            ExprKind::Number(_) | ExprKind::Ident(_) => 1,
            ExprKind::Neg(inner) => 1 + inner.depth(),
            ExprKind::Binary { lhs, rhs, .. } | ExprKind::Compare { lhs, rhs, .. } => {
                1 + lhs.depth().max(rhs.depth())
            }
            ExprKind::Call { args, .. } => 1 + args.iter().map(Expr::depth).max().unwrap_or(0),
        }
    }
}

/// Name of the optional component that overrides summation.
pub const TOTAL_COMPONENT: &str = "total";

#[derive(Debug, Clone)]
pub struct Component {
    pub name: String,
    pub span: Span,
    pub body: Expr,
}

/// A parsed reward program: named components evaluated in declaration order.
#[derive(Debug, Clone)]
pub struct RewardProgram {
    pub components: Vec<Component>,
    pub source: String,
}

impl RewardProgram {
    pub fn has_explicit_total(&self) -> bool {
        self.components.iter().any(|c| c.name == TOTAL_COMPONENT)
    }

    /// Names of the reported components, i.e. everything except `total`.
    pub fn component_names(&self) -> impl Iterator<Item = &str> {
        self.components
            .iter()
            .map(|c| c.name.as_str())
            .filter(|n| *n != TOTAL_COMPONENT)
    }

    pub fn same_structure(&self, other: &RewardProgram) -> bool {
        self.components.len() == other.components.len()
            && self
                .components
                .iter()
                .zip(&other.components)
                .all(|(a, b)| a.name == b.name && a.body.same_structure(&b.body))
    }
}

/// True for names matching `[a-z_][a-z0-9_]*`.
pub fn is_valid_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}
