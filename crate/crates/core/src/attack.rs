//! Differential fault analysis on key lines.
//!
//! For a pattern that detects `k_i` stuck at `v` with every other key line at
//! `v`, the chip is queried twice: once with every key line forced to `v`
//! (`C_F`) and once with every line but `k_i` forced (`C_A`). Equal responses
//! mean `k_i = v`; different responses mean `k_i = !v`.
//!
//! Bits without a pattern under the uniform constraints are retried with the
//! bits recovered so far as constraints at their recovered values, and the
//! remaining unresolved key lines left for the search to assign, and then
//! with every other key line left to the search. Recovered
//! lines are left uninjected in both sessions, where they hold exactly the
//! recovered values; lines the search assigned are injected in both.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atpg::{d_algorithm_free_keys, generate_pattern_set_with, AtpgConfig, AtpgError, AtpgOutcome, Pattern, PatternSet};
use crate::keys::{FaultSpec, InjectionMap, KeyVector};
use crate::logic::Polarity;
use crate::netlist::{Netlist, Shape};
use crate::oracle::{Oracle, OracleError, OracleSession};
use crate::sim::{key_words, outputs_packed, VectorBlock};

pub const REPORT_VERSION: u32 = 1;

/// Random vectors used by [`verify_recovered_key`] above 16 inputs.
pub const VERIFY_VECTORS: usize = 10_000;
const VERIFY_EXHAUSTIVE_INPUTS: usize = 16;
const VERIFY_SEED: u64 = 0x6b65_7966;

pub const MAX_RESIDUAL_BITS: usize = 20;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("oracle shape {oracle} does not match netlist shape {netlist}")]
    ShapeMismatch { netlist: Shape, oracle: Shape },
    #[error("response vectors differ in length ({0} vs {1})")]
    ResponseLength(usize, usize),
    #[error("pattern set does not fit the netlist: {0}")]
    BadPatterns(String),
    #[error("{0} key bits are unresolved")]
    Unresolved(usize),
    #[error("{0} residual bits exceed the brute-force limit of {MAX_RESIDUAL_BITS}")]
    TooManyResidual(usize),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Atpg(#[from] AtpgError),
}

/// `injected` when the responses agree, its complement otherwise.
pub fn decide_bit(resp_f: &[bool], resp_a: &[bool], injected: bool) -> Result<bool, AttackError> {
    if resp_f.len() != resp_a.len() {
        return Err(AttackError::ResponseLength(resp_f.len(), resp_a.len()));
    }
    Ok(if resp_f == resp_a { injected } else { !injected })
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BitStatus {
    Recovered,
    Unresolved,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitResolution {
    pub key_index: usize,
    pub status: BitStatus,
    pub value: Option<u8>,
    pub polarity_used: Option<Polarity>,
    /// Input pattern over `0`, `1`, `X`.
    pub pattern: Option<String>,
    /// Constraints the pattern was generated under, when not uniform.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub constraints: Option<String>,
    pub queries_used: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub v: u32,
    pub netlist: String,
    pub key_size: usize,
    pub resolutions: Vec<BitResolution>,
    pub total_queries: u64,
    pub total_patterns: usize,
    pub patterns_sa1: usize,
    pub patterns_sa0: usize,
    pub refinement_rounds: usize,
    /// Present only when every bit is recovered.
    pub recovered_key: Option<String>,
    /// Seconds. Left out of canonical output so reports compare byte for byte.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time: Option<f64>,
}

impl AttackReport {
    pub fn all_recovered(&self) -> bool {
        self.resolutions.iter().all(|r| r.status == BitStatus::Recovered)
    }

    pub fn unresolved(&self) -> Vec<usize> {
        self.resolutions
            .iter()
            .filter(|r| r.status == BitStatus::Unresolved)
            .map(|r| r.key_index)
            .collect()
    }

    pub fn recovered(&self) -> Option<KeyVector> {
        self.all_recovered()
            .then(|| KeyVector::new(self.resolutions.iter().map(|r| r.value == Some(1)).collect()))
    }

    /// Canonical JSON, without wall time.
    pub fn to_json(&self) -> String {
        let mut r = self.clone();
        r.wall_time = None;
        r.to_json_with_timing()
    }

    pub fn to_json_with_timing(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Clone, Debug)]
pub struct AttackOptions {
    pub atpg: AtpgConfig,
    /// Polarity of the first pass; the ATPG falls back to the other one.
    pub polarity: Polarity,
    /// Patterns computed beforehand for the uniform constraints. They do not
    /// depend on the hidden key, so one set can serve many attacks.
    pub patterns: Option<PatternSet>,
    /// Retry unresolved bits with recovered bits as constraints.
    pub refine: bool,
}

impl Default for AttackOptions {
    fn default() -> Self {
        AttackOptions {
            atpg: AtpgConfig::default(),
            polarity: Polarity::Sa1,
            patterns: None,
            refine: true,
        }
    }
}

pub fn run_attack(locked: &Netlist, oracle: &dyn Oracle) -> Result<AttackReport, AttackError> {
    run_attack_with(locked, oracle, &AttackOptions::default())
}

/// Sessions keyed by injection map, opened on first use so that session ids
/// follow the query order.
struct Sessions<'a> {
    oracle: &'a dyn Oracle,
    open: BTreeMap<Vec<(usize, bool)>, OracleSession>,
    queries: u64,
}

impl<'a> Sessions<'a> {
    fn query(&mut self, injection: InjectionMap, pi: &[bool]) -> Result<Vec<bool>, AttackError> {
        let key: Vec<(usize, bool)> = injection.iter().collect();
        if !self.open.contains_key(&key) {
            let s = self.oracle.open_session(injection)?;
            self.open.insert(key.clone(), s);
        }
        let session = self.open.get_mut(&key).unwrap();
        self.queries += 1;
        Ok(self.oracle.query(session, pi)?)
    }

    /// Queries `C_F` and `C_A` for a pattern and decides the bit. Constraint
    /// lines whose value matches an already recovered bit are left
    /// uninjected; the chip holds that value on them anyway.
    fn resolve(&mut self, p: &Pattern, recovered: &[Option<bool>]) -> Result<bool, AttackError> {
        let v = p.polarity.value();
        let pi = p.filled();
        let ca: InjectionMap = p
            .constraints
            .iter()
            .filter(|&(k, c)| recovered[k] != Some(c))
            .collect();
        let mut cf = ca.clone();
        cf.insert(p.key_index, v);
        let resp_f = self.query(cf, &pi)?;
        let resp_a = self.query(ca, &pi)?;
        decide_bit(&resp_f, &resp_a, v)
    }
}

fn check_patterns(locked: &Netlist, set: &PatternSet) -> Result<(), AttackError> {
    let shape = locked.shape();
    for p in &set.patterns {
        if p.key_index >= shape.keys || p.pi.len() != shape.inputs || !p.has_uniform_constraints(shape.keys) {
            return Err(AttackError::BadPatterns(format!("pattern for k{}", p.key_index)));
        }
    }
    Ok(())
}

pub fn run_attack_with(locked: &Netlist, oracle: &dyn Oracle, opts: &AttackOptions) -> Result<AttackReport, AttackError> {
    let start = Clock::start();
    let shape = locked.shape();
    if oracle.shape() != shape {
        return Err(AttackError::ShapeMismatch {
            netlist: shape,
            oracle: oracle.shape(),
        });
    }
    let keys = shape.keys;
    let generated;
    let set = match &opts.patterns {
        Some(s) => {
            check_patterns(locked, s)?;
            s
        }
        None => {
            generated = generate_pattern_set_with(locked, opts.polarity, &opts.atpg);
            &generated
        }
    };

    let mut sessions = Sessions {
        oracle,
        open: BTreeMap::new(),
        queries: 0,
    };
    let mut value: Vec<Option<bool>> = vec![None; keys];
    let mut used: Vec<Option<Pattern>> = vec![None; keys];
    let mut queries = vec![0u64; keys];

    for p in &set.patterns {
        let before = sessions.queries;
        value[p.key_index] = Some(sessions.resolve(p, &vec![None; keys])?);
        queries[p.key_index] = sessions.queries - before;
        used[p.key_index] = Some(p.clone());
    }

    let mut rounds = 0;
    while opts.refine && value.contains(&None) {
        rounds += 1;
        let mut progress = false;
        for i in 0..keys {
            if value[i].is_some() {
                continue;
            }
            // Recovered bits as constraints first, then every other line free.
            let recovered: InjectionMap = (0..keys).filter_map(|k| value[k].map(|v| (k, v))).collect();
            let mut attempts = vec![recovered.clone()];
            if !recovered.is_empty() {
                attempts.push(InjectionMap::empty());
            }
            let attempts = attempts
                .into_iter()
                .flat_map(|c| [(opts.polarity, c.clone()), (opts.polarity.flipped(), c)]);
            for (pol, constraints) in attempts {
                let fault = FaultSpec::new(i, pol);
                let found = match d_algorithm_free_keys(locked, fault, &constraints, opts.atpg.backtrack_limit) {
                    Ok(AtpgOutcome::Detected(p)) => Some(p),
                    Ok(AtpgOutcome::Untestable) | Err(AtpgError::BacktrackLimit { .. }) => None,
                    Err(e) => return Err(e.into()),
                };
                if let Some(p) = found {
                    let before = sessions.queries;
                    value[i] = Some(sessions.resolve(&p, &value)?);
                    queries[i] = sessions.queries - before;
                    used[i] = Some(p);
                    progress = true;
                    break;
                }
            }
        }
        if !progress {
            break;
        }
    }

    let resolutions: Vec<BitResolution> = (0..keys)
        .map(|i| match (&used[i], value[i]) {
            (Some(p), Some(v)) => BitResolution {
                key_index: i,
                status: BitStatus::Recovered,
                value: Some(u8::from(v)),
                polarity_used: Some(p.polarity),
                pattern: Some(p.pi_string()),
                constraints: (!p.has_uniform_constraints(keys)).then(|| p.constraints.to_string()),
                queries_used: queries[i],
            },
            _ => BitResolution {
                key_index: i,
                status: BitStatus::Unresolved,
                value: None,
                polarity_used: None,
                pattern: None,
                constraints: None,
                queries_used: 0,
            },
        })
        .collect();
    let count = |pol: Polarity| used.iter().flatten().filter(|p| p.polarity == pol).count();
    let mut report = AttackReport {
        v: REPORT_VERSION,
        netlist: locked.name().to_string(),
        key_size: keys,
        total_queries: sessions.queries,
        total_patterns: used.iter().flatten().count(),
        patterns_sa1: count(Polarity::Sa1),
        patterns_sa0: count(Polarity::Sa0),
        refinement_rounds: rounds,
        recovered_key: None,
        resolutions,
        wall_time: None,
    };
    report.recovered_key = report.recovered().map(|k| k.to_string());
    report.wall_time = start.elapsed_secs();
    Ok(report)
}

/// Wall clock for reports. `std::time::Instant` panics on bare wasm32, where
/// timing is simply left out.
struct Clock(#[cfg(not(target_arch = "wasm32"))] std::time::Instant);

impl Clock {
    fn start() -> Self {
        Clock(
            #[cfg(not(target_arch = "wasm32"))]
            std::time::Instant::now(),
        )
    }

    fn elapsed_secs(&self) -> Option<f64> {
        #[cfg(not(target_arch = "wasm32"))]
        return Some(self.0.elapsed().as_secs_f64());
        #[cfg(target_arch = "wasm32")]
        None
    }
}

/// Responses of the unlocked chip on a fixed vector set.
pub struct Reference {
    blocks: Vec<VectorBlock>,
    expected: Vec<Vec<u64>>,
}

impl Reference {
    /// Queries an uninjected session: every vector when there are at most 16
    /// inputs, otherwise 10,000 seeded random vectors.
    pub fn collect(oracle: &dyn Oracle) -> Result<Self, AttackError> {
        let shape = oracle.shape();
        let blocks = crate::sim::vector_blocks(shape.inputs, VERIFY_EXHAUSTIVE_INPUTS, VERIFY_VECTORS, VERIFY_SEED);
        let mut session = oracle.open_session(InjectionMap::empty())?;
        let mut expected = Vec::with_capacity(blocks.len());
        for b in &blocks {
            let mut words = vec![0u64; shape.outputs];
            for lane in 0..b.lanes {
                let po = oracle.query(&mut session, &b.lane(lane))?;
                for (w, &bit) in words.iter_mut().zip(&po) {
                    *w |= u64::from(bit) << lane;
                }
            }
            expected.push(words);
        }
        Ok(Reference { blocks, expected })
    }

    pub fn accepts(&self, locked: &Netlist, key: &KeyVector) -> bool {
        let kw = key_words(key.bits());
        self.blocks.iter().zip(&self.expected).all(|(b, exp)| {
            let mask = b.lane_mask();
            outputs_packed(locked, &b.words, &kw)
                .iter()
                .zip(exp)
                .all(|(got, want)| (got ^ want) & mask == 0)
        })
    }
}

/// Whether the locked netlist under `recovered` matches the chip's
/// uninjected responses on the reference vector set.
pub fn verify_recovered_key(locked: &Netlist, recovered: &KeyVector, reference_unlocked: &dyn Oracle) -> Result<bool, AttackError> {
    if reference_unlocked.shape() != locked.shape() {
        return Err(AttackError::ShapeMismatch {
            netlist: locked.shape(),
            oracle: reference_unlocked.shape(),
        });
    }
    if recovered.len() != locked.key_inputs().len() {
        return Err(AttackError::Unresolved(locked.key_inputs().len().abs_diff(recovered.len())));
    }
    Ok(Reference::collect(reference_unlocked)?.accepts(locked, recovered))
}

/// Fills the unresolved bits of `report` by trying every assignment against
/// the chip's uninjected responses. Returns the first accepted key in
/// ascending order of the residual bits read as a binary number (lowest key
/// index least significant).
pub fn brute_force_residual(locked: &Netlist, report: &AttackReport, oracle: &dyn Oracle) -> Result<Option<KeyVector>, AttackError> {
    let residual = report.unresolved();
    if residual.len() > MAX_RESIDUAL_BITS {
        return Err(AttackError::TooManyResidual(residual.len()));
    }
    let reference = Reference::collect(oracle)?;
    let mut bits: Vec<bool> = report.resolutions.iter().map(|r| r.value == Some(1)).collect();
    for n in 0u64..1 << residual.len() {
        for (j, &i) in residual.iter().enumerate() {
            bits[i] = n >> j & 1 == 1;
        }
        let candidate = KeyVector::new(bits.clone());
        if reference.accepts(locked, &candidate) {
            return Ok(Some(candidate));
        }
    }
    Ok(None)
}

/// Seeded random hidden keys, for experiments.
pub fn random_keys(len: usize, count: usize, seed: u64) -> Vec<KeyVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| KeyVector::new((0..len).map(|_| rng.gen()).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::parse_bench;
    use crate::oracle::SimOracle;

    #[test]
    fn decision_rule() {
        assert!(decide_bit(&[true, false], &[true, false], true).unwrap());
        assert!(!decide_bit(&[true, false], &[true, true], true).unwrap());
        assert!(!decide_bit(&[false], &[false], false).unwrap());
        assert!(decide_bit(&[false], &[true], false).unwrap());
        assert!(matches!(decide_bit(&[false], &[], true), Err(AttackError::ResponseLength(1, 0))));
    }

    #[test]
    fn xor_lock() {
        let n = parse_bench("INPUT(a)\nINPUT(keyinput0)\nOUTPUT(y)\ny = XOR(a, keyinput0)").unwrap();
        for k in ["0", "1"] {
            let o = SimOracle::new(n.clone(), k.parse().unwrap()).unwrap();
            let r = run_attack(&n, &o).unwrap();
            assert_eq!(r.resolutions[0].status, BitStatus::Recovered);
            assert_eq!(r.recovered_key.as_deref(), Some(k));
            assert_eq!(r.total_queries, 2);
            assert_eq!(r.total_patterns, 1);
            assert!(verify_recovered_key(&n, &k.parse().unwrap(), &o).unwrap());
            let wrong = if k == "0" { "1" } else { "0" };
            assert!(!verify_recovered_key(&n, &wrong.parse().unwrap(), &o).unwrap());
        }
    }

    #[test]
    fn no_keys() {
        let n = parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(a)").unwrap();
        let o = SimOracle::new(n.clone(), KeyVector::default()).unwrap();
        let r = run_attack(&n, &o).unwrap();
        assert!(r.resolutions.is_empty());
        assert_eq!(r.total_queries, 0);
        assert_eq!(r.recovered_key.as_deref(), Some(""));
    }

    #[test]
    fn shape_mismatch() {
        let n = parse_bench("INPUT(a)\nINPUT(keyinput0)\nOUTPUT(y)\ny = XOR(a, keyinput0)").unwrap();
        let m = parse_bench("INPUT(a)\nINPUT(b)\nINPUT(keyinput0)\nOUTPUT(y)\ny = XOR(a, keyinput0)").unwrap();
        let o = SimOracle::new(m, "1".parse().unwrap()).unwrap();
        assert!(matches!(run_attack(&n, &o), Err(AttackError::ShapeMismatch { .. })));
    }

    #[test]
    fn report_json() {
        let n = parse_bench("INPUT(a)\nINPUT(keyinput0)\nOUTPUT(y)\ny = XOR(a, keyinput0)").unwrap();
        let o = SimOracle::new(n.clone(), "1".parse().unwrap()).unwrap();
        let r = run_attack(&n, &o).unwrap();
        let json = r.to_json();
        assert!(json.contains("\"v\": 1"));
        assert!(!json.contains("wall_time"));
        assert!(r.to_json_with_timing().contains("wall_time"));
        let back = AttackReport::from_json(&json).unwrap();
        assert_eq!(back.to_json(), json);
    }

    #[test]
    fn brute_force_fills_residual() {
        let n = parse_bench("INPUT(a)\nINPUT(b)\nINPUT(keyinput0)\nINPUT(keyinput1)\nOUTPUT(y)\nOUTPUT(z)\ny = XOR(a, keyinput0)\nz = XNOR(b, keyinput1)").unwrap();
        let o = SimOracle::new(n.clone(), "10".parse().unwrap()).unwrap();
        let mut r = run_attack(&n, &o).unwrap();
        r.resolutions[1].status = BitStatus::Unresolved;
        r.resolutions[1].value = None;
        assert_eq!(brute_force_residual(&n, &r, &o).unwrap().unwrap().to_string(), "10");
    }
}
