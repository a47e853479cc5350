//! The bundled example corpus.

use crate::error::Result;
use crate::parser::{parse, SourceFile};
use crate::tm::TmSpec;

pub const ADD: &str = include_str!("../fixtures/add.tier");
pub const MUL: &str = include_str!("../fixtures/mul.tier");
pub const SHUFFLE: &str = include_str!("../fixtures/shuffle.tier");
pub const BINARY_ADD: &str = include_str!("../fixtures/binary_add.tier");
pub const SYNC: &str = include_str!("../fixtures/sync.tier");
pub const CROSSZERO: &str = include_str!("../fixtures/crosszero.tier");
pub const ZRANGE: &str = include_str!("../fixtures/zrange.tier");
pub const TRIANGLE: &str = include_str!("../fixtures/triangle.tier");
pub const EXP: &str = include_str!("../fixtures/exp.tier");
pub const BADD: &str = include_str!("../fixtures/badd.tier");
pub const SPIN: &str = include_str!("../fixtures/spin.tier");
pub const LEAK: &str = include_str!("../fixtures/leak.tier");
pub const GROW: &str = include_str!("../fixtures/grow.tier");
pub const INCR_TM: &str = include_str!("../fixtures/incr.tm");
pub const HALT_TM: &str = include_str!("../fixtures/halt.tm");

/// Programs expected to type-check, by name.
pub const SAFE: [(&str, &str); 9] = [
    ("add", ADD),
    ("mul", MUL),
    ("shuffle", SHUFFLE),
    ("binary_add", BINARY_ADD),
    ("sync", SYNC),
    ("crosszero", CROSSZERO),
    ("zrange", ZRANGE),
    ("triangle", TRIANGLE),
    ("spin", SPIN),
];

/// Programs expected to be rejected, by name.
pub const UNSAFE: [(&str, &str); 4] = [("exp", EXP), ("badd", BADD), ("leak", LEAK), ("grow", GROW)];

pub fn load(text: &str) -> Result<SourceFile> {
    parse(text)
}

pub fn incr_tm() -> TmSpec {
    TmSpec::parse(INCR_TM).expect("fixture parses")
}

pub fn halt_tm() -> TmSpec {
    TmSpec::parse(HALT_TM).expect("fixture parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_fixtures_parse() {
        for (name, text) in SAFE.iter().chain(UNSAFE.iter()) {
            parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        incr_tm();
        halt_tm();
    }
}
