//! Tiered complexity-flow typing for a multi-threaded while-language over
//! words: type checking and inference, small-step semantics, schedulers,
//! empirical non-interference and growth analysis, and a compiler from
//! clocked Turing machines to typable programs.

pub mod analysis;
pub mod error;
pub mod fixtures;
pub mod ops;
pub mod parser;
pub mod sample;
pub mod sched;
pub mod semantics;
pub mod syntax;
pub mod tm;
pub mod typing;
pub mod word;

pub use error::{Error, Result};
pub use syntax::{Command, Expr, Program, Store, ThreadId, Tier, Var};
pub use word::{Alphabet, Word};
