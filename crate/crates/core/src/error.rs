use thiserror::Error;

use crate::syntax::{Span, ThreadId, Var};
use crate::word::Word;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("{span}: syntax error: {message}")]
    Syntax { span: Span, message: String },

    #[error("{span}: undeclared operator `{name}`")]
    UndeclaredOperator { span: Span, name: String },

    #[error("{span}: operator `{name}` expects {expected} argument(s), found {found}")]
    ArityMismatch {
        span: Span,
        name: String,
        expected: usize,
        found: usize,
    },

    #[error("operator `{0}` is already registered")]
    DuplicateOperator(String),

    #[error("unknown operator `{0}`")]
    UnknownOperator(String),

    #[error("no builtin operator named `{0}`")]
    UnknownBuiltin(String),

    #[error("variable `{0}` has no tier")]
    UnboundVariable(Var),

    #[error("alphabet: {0}")]
    Alphabet(String),

    #[error("stuck configuration: guard of `{construct}` evaluated to {value}, expected tt or ff")]
    StuckGuard { construct: &'static str, value: Word },

    #[error("thread `{0}` is not in the program")]
    NoSuchThread(ThreadId),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("turing machine: {0}")]
    Machine(String),
}
