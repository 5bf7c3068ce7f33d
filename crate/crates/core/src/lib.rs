//! Key-gate locking, constrained ATPG on key lines, and a differential fault
//! analysis attack that recovers the key from a fault-injectable oracle.

pub mod atpg;
pub mod attack;
pub mod bench;
pub mod keys;
pub mod locking;
pub mod logic;
pub mod netlist;
pub mod oracle;
pub mod sim;

pub use atpg::{d_algorithm, generate_pattern_set, verify_pattern, AtpgOutcome, Pattern, PatternSet};
pub use attack::{run_attack, AttackReport};
pub use bench::{emit_bench, parse_bench};
pub use keys::{FaultSpec, InjectionMap, KeyVector};
pub use locking::{lock, LockSpec, Locked, Scheme};
pub use logic::{Logic3, Logic5, Polarity};
pub use netlist::{GateKind, NetId, Netlist, Shape};
pub use oracle::{Oracle, ReplayOracle, SimOracle};

/// ISCAS-85 benchmark netlists bundled with the crate.
pub mod circuits {
    pub const C17: &str = include_str!("../circuits/c17.bench");
    pub const C432: &str = include_str!("../circuits/c432.bench");
    pub const C1355: &str = include_str!("../circuits/c1355.bench");
    pub const C1908: &str = include_str!("../circuits/c1908.bench");
    pub const C2670: &str = include_str!("../circuits/c2670.bench");

    pub const ALL: [(&str, &str); 5] = [
        ("c17", C17),
        ("c432", C432),
        ("c1355", C1355),
        ("c1908", C1908),
        ("c2670", C2670),
    ];

    pub fn by_name(name: &str) -> Option<&'static str> {
        ALL.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
    }
}
