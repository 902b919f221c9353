use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Pow,
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 6] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Div,
        BinaryOp::Min,
        BinaryOp::Pow,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Min => "min",
            BinaryOp::Pow => "pow",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "+" | "add" => BinaryOp::Add,
            "-" | "sub" => BinaryOp::Sub,
            "*" | "mul" | "×" => BinaryOp::Mul,
            "/" | "div" | "÷" => BinaryOp::Div,
            "min" => BinaryOp::Min,
            "pow" | "^" => BinaryOp::Pow,
            _ => return None,
        })
    }

    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
            BinaryOp::Min => a.min(b),
            BinaryOp::Pow => a.powf(b),
        }
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, BinaryOp::Add | BinaryOp::Mul | BinaryOp::Min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UnaryOp {
    Neg,
    Sqrt,
    Exp,
    Log,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 4] = [UnaryOp::Neg, UnaryOp::Sqrt, UnaryOp::Exp, UnaryOp::Log];

    pub fn symbol(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        UnaryOp::ALL.into_iter().find(|op| op.symbol() == s)
    }

    #[inline]
    pub fn apply(self, a: f64) -> f64 {
        match self {
            UnaryOp::Neg => -a,
            UnaryOp::Sqrt => a.sqrt(),
            UnaryOp::Exp => a.exp(),
            UnaryOp::Log => a.ln(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenKind {
    Binary(BinaryOp),
    Unary(UnaryOp),
    Variable,
    /// A named quantity with a fixed value, e.g. `a_max = 2.6`.
    Parameter(f64),
    /// A placeholder whose value is fitted to the data.
    Constant,
}

/// One entry of a token pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenSpec {
    pub name: String,
    pub kind: TokenKind,
}

/// Conventional name of the constant placeholder token.
pub const CONSTANT_NAME: &str = "const";

impl TokenSpec {
    pub fn binary(op: BinaryOp) -> Self {
        Self {
            name: op.symbol().to_string(),
            kind: TokenKind::Binary(op),
        }
    }

    pub fn unary(op: UnaryOp) -> Self {
        Self {
            name: op.symbol().to_string(),
            kind: TokenKind::Unary(op),
        }
    }

    pub fn variable(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: TokenKind::Variable,
        }
    }

    pub fn parameter(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            kind: TokenKind::Parameter(value),
        }
    }

    pub fn constant() -> Self {
        Self {
            name: CONSTANT_NAME.to_string(),
            kind: TokenKind::Constant,
        }
    }

    pub fn arity(&self) -> usize {
        match self.kind {
            TokenKind::Binary(_) => 2,
            TokenKind::Unary(_) => 1,
            _ => 0,
        }
    }
}
