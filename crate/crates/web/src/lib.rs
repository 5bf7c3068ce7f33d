//! Browser bindings for the demo page in `www/`.
//!
//! Each exported function takes plain strings and returns JSON. The work is
//! done by the `*_json` functions, which also run natively for tests.

use keyfault::atpg::{generate_pattern_set, Pattern};
use keyfault::attack::{random_keys, run_attack, verify_recovered_key};
use keyfault::bench::{emit_bench, parse_bench_with, ParseOptions};
use keyfault::circuits;
use keyfault::keys::KeyVector;
use keyfault::locking::{lock, LockSpec, Scheme};
use keyfault::logic::Polarity;
use keyfault::netlist::Netlist;
use keyfault::oracle::SimOracle;
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn parse(name: &str, text: &str) -> Result<Netlist, String> {
    parse_bench_with(text, &ParseOptions::named(name)).map_err(|e| e.to_string())
}

fn to_json(v: &impl Serialize) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct LockResult {
    bench: String,
    key: String,
    inputs: usize,
    outputs: usize,
    gates: usize,
    sites: Vec<String>,
    protected_cube: Option<String>,
}

/// Locks `bench` with a seeded hidden key. A `split` of `"s,r"` selects
/// the combined scheme and overrides `key_size`.
pub fn lock_json(bench: &str, scheme: &str, key_size: usize, split: &str, seed: u64) -> Result<String, String> {
    let scheme: Scheme = scheme.parse()?;
    let netlist = parse("circuit", bench)?;
    let spec = if scheme == Scheme::Combined {
        let (s, r) = split.split_once(',').ok_or("combined locks need a split like 4,4")?;
        let n = |x: &str| x.trim().parse::<usize>().map_err(|e| e.to_string());
        LockSpec::combined(n(s)?, n(r)?, seed)
    } else {
        LockSpec::new(scheme, key_size, seed)
    };
    let key = random_keys(spec.key_size, 1, seed).remove(0);
    let locked = lock(&netlist, &spec, &key).map_err(|e| e.to_string())?;
    let shape = locked.netlist.shape();
    to_json(&LockResult {
        bench: emit_bench(&locked.netlist),
        key: key.to_string(),
        inputs: shape.inputs,
        outputs: shape.outputs,
        gates: locked.netlist.gates().len(),
        sites: locked.info.sites,
        protected_cube: locked
            .info
            .protected
            .map(|p| p.cube.iter().map(|v| v.to_char()).collect()),
    })
}

#[derive(Serialize)]
struct PatternRow {
    key_index: usize,
    polarity: Polarity,
    pi: String,
    constraints: String,
    detecting_outputs: Vec<String>,
}

#[derive(Serialize)]
struct PatternResult {
    patterns: Vec<PatternRow>,
    unresolved: Vec<usize>,
}

fn row(netlist: &Netlist, p: &Pattern) -> PatternRow {
    PatternRow {
        key_index: p.key_index,
        polarity: p.polarity,
        pi: p.pi_string(),
        constraints: p.constraints.to_string(),
        detecting_outputs: p
            .detecting_pos
            .iter()
            .map(|&o| netlist.net_name(netlist.outputs()[o]).to_string())
            .collect(),
    }
}

/// One detecting pattern per key bit of a locked netlist.
pub fn patterns_json(locked_bench: &str) -> Result<String, String> {
    let netlist = parse("locked", locked_bench)?;
    if netlist.key_inputs().is_empty() {
        return Err("no key inputs".to_string());
    }
    let set = generate_pattern_set(&netlist, Polarity::Sa1);
    to_json(&PatternResult {
        patterns: set.patterns.iter().map(|p| row(&netlist, p)).collect(),
        unresolved: set.unresolved.into_iter().collect(),
    })
}

/// Attacks a simulated chip holding `hidden_key`; returns the report with a
/// `verified` flag added.
pub fn attack_json(locked_bench: &str, hidden_key: &str) -> Result<String, String> {
    let netlist = parse("locked", locked_bench)?;
    let key: KeyVector = hidden_key.parse().map_err(|e| format!("{e}"))?;
    let oracle = SimOracle::new(netlist.clone(), key).map_err(|e| e.to_string())?;
    let report = run_attack(&netlist, &oracle).map_err(|e| e.to_string())?;
    let verified = match report.recovered() {
        Some(k) => verify_recovered_key(&netlist, &k, &oracle).map_err(|e| e.to_string())?,
        None => false,
    };
    let mut value: serde_json::Value = serde_json::from_str(&report.to_json()).map_err(|e| e.to_string())?;
    value["verified"] = verified.into();
    Ok(value.to_string())
}

/// Text of a bundled benchmark, or an empty string.
#[wasm_bindgen]
pub fn builtin_circuit(name: &str) -> String {
    circuits::by_name(name).unwrap_or_default().to_string()
}

#[wasm_bindgen]
pub fn lock_circuit(bench: &str, scheme: &str, key_size: usize, split: &str, seed: u32) -> Result<String, JsError> {
    lock_json(bench, scheme, key_size, split, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn generate_patterns(locked_bench: &str) -> Result<String, JsError> {
    patterns_json(locked_bench).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn attack(locked_bench: &str, hidden_key: &str) -> Result<String, JsError> {
    attack_json(locked_bench, hidden_key).map_err(|e| JsError::new(&e))
}
