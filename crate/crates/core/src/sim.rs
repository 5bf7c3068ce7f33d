//! Logic simulation: ternary, five-valued, key-injected and bit-parallel.
//!
//! All simulators are full topological sweeps over the immutable netlist.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::keys::{FaultSpec, InjectionMap, KeyVector};
use crate::logic::{eval3, Logic3, Logic5};
use crate::netlist::Netlist;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("expected {expected} {what} values, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("key index {index} out of range for a {keys}-bit key")]
    KeyIndex { index: usize, keys: usize },
    #[error("fault site k{0} is also constrained, so the fault cannot be activated")]
    ActivationConflict(usize),
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), SimError> {
    if expected == got {
        Ok(())
    } else {
        Err(SimError::Dimension { what, expected, got })
    }
}

fn check_injection(netlist: &Netlist, injection: &InjectionMap) -> Result<(), SimError> {
    let keys = netlist.key_inputs().len();
    match injection.max_index() {
        Some(index) if index >= keys => Err(SimError::KeyIndex { index, keys }),
        _ => Ok(()),
    }
}

/// Ternary values of every net.
pub fn simulate3_nets(netlist: &Netlist, pi: &[Logic3], key: &[Logic3]) -> Result<Vec<Logic3>, SimError> {
    check_len("primary input", netlist.inputs().len(), pi.len())?;
    check_len("key", netlist.key_inputs().len(), key.len())?;
    let mut v = vec![Logic3::X; netlist.num_nets()];
    for (id, &x) in netlist.inputs().iter().zip(pi) {
        v[id.idx()] = x;
    }
    for (id, &x) in netlist.key_inputs().iter().zip(key) {
        v[id.idx()] = x;
    }
    for gate in netlist.gates() {
        v[gate.output.idx()] = eval3(gate.kind, gate.inputs.iter().map(|i| v[i.idx()]));
    }
    Ok(v)
}

/// Primary output values under ternary simulation.
pub fn simulate3(netlist: &Netlist, pi: &[Logic3], key: &[Logic3]) -> Result<Vec<Logic3>, SimError> {
    let v = simulate3_nets(netlist, pi, key)?;
    Ok(netlist.outputs().iter().map(|o| v[o.idx()]).collect())
}

/// Simulates the chip holding `hidden_key` with some key registers forced.
pub fn simulate_injected(
    netlist: &Netlist,
    pi: &[Logic3],
    hidden_key: &KeyVector,
    injection: &InjectionMap,
) -> Result<Vec<Logic3>, SimError> {
    check_len("key", netlist.key_inputs().len(), hidden_key.len())?;
    check_injection(netlist, injection)?;
    let key: Vec<Logic3> = injection
        .apply(hidden_key.bits())
        .into_iter()
        .map(Logic3::from)
        .collect();
    simulate3(netlist, pi, &key)
}

/// Good and faulty ternary net values for a key-line fault. Key lines that are
/// neither the site nor constrained are X.
pub fn simulate_pair_nets(
    netlist: &Netlist,
    pi: &[Logic3],
    fault: FaultSpec,
    constraints: &InjectionMap,
) -> Result<(Vec<Logic3>, Vec<Logic3>), SimError> {
    let keys = netlist.key_inputs().len();
    if fault.key_index >= keys {
        return Err(SimError::KeyIndex {
            index: fault.key_index,
            keys,
        });
    }
    check_injection(netlist, constraints)?;
    if constraints.contains(fault.key_index) {
        return Err(SimError::ActivationConflict(fault.key_index));
    }
    let mut key: Vec<Logic3> = (0..keys)
        .map(|i| constraints.get(i).map_or(Logic3::X, Logic3::from))
        .collect();
    key[fault.key_index] = Logic3::from(fault.activation_value());
    let good = simulate3_nets(netlist, pi, &key)?;
    key[fault.key_index] = Logic3::from(fault.polarity.value());
    let faulty = simulate3_nets(netlist, pi, &key)?;
    Ok((good, faulty))
}

/// Composite good/faulty simulation in D-calculus. The fault site carries
/// `DBar` for sa1 and `D` for sa0.
pub fn simulate5(
    netlist: &Netlist,
    pi: &[Logic3],
    fault: FaultSpec,
    constraints: &InjectionMap,
) -> Result<Vec<Logic5>, SimError> {
    let (good, faulty) = simulate_pair_nets(netlist, pi, fault, constraints)?;
    Ok(netlist
        .outputs()
        .iter()
        .map(|o| Logic5::from_pair(good[o.idx()], faulty[o.idx()]))
        .collect())
}

/// Bit-parallel two-valued simulation; one `u64` carries 64 vectors.
/// Returns the word of every net.
pub fn simulate_packed(netlist: &Netlist, pi: &[u64], key: &[u64]) -> Vec<u64> {
    assert_eq!(pi.len(), netlist.inputs().len(), "primary input width");
    assert_eq!(key.len(), netlist.key_inputs().len(), "key width");
    let mut v = vec![0u64; netlist.num_nets()];
    for (id, &x) in netlist.inputs().iter().zip(pi) {
        v[id.idx()] = x;
    }
    for (id, &x) in netlist.key_inputs().iter().zip(key) {
        v[id.idx()] = x;
    }
    for gate in netlist.gates() {
        v[gate.output.idx()] = gate.kind.eval_word(gate.inputs.iter().map(|i| v[i.idx()]));
    }
    v
}

pub fn outputs_packed(netlist: &Netlist, pi: &[u64], key: &[u64]) -> Vec<u64> {
    let v = simulate_packed(netlist, pi, key);
    netlist.outputs().iter().map(|o| v[o.idx()]).collect()
}

/// Broadcasts a key into packed form.
pub fn key_words(key: &[bool]) -> Vec<u64> {
    key.iter().map(|&b| if b { !0 } else { 0 }).collect()
}

/// A block of up to 64 input vectors in packed form.
#[derive(Clone, Debug)]
pub struct VectorBlock {
    pub words: Vec<u64>,
    /// Lanes in use (the low `lanes` bits).
    pub lanes: u32,
}

impl VectorBlock {
    pub fn lane_mask(&self) -> u64 {
        if self.lanes >= 64 {
            !0
        } else {
            (1u64 << self.lanes) - 1
        }
    }

    /// Unpacks lane `lane` into a vector.
    pub fn lane(&self, lane: u32) -> Vec<bool> {
        self.words.iter().map(|w| w >> lane & 1 == 1).collect()
    }
}

/// Exhaustive enumeration when `width <= exhaustive_limit`, otherwise
/// `random_count` seeded random vectors. Blocks of 64 lanes.
pub fn vector_blocks(width: usize, exhaustive_limit: usize, random_count: usize, seed: u64) -> Vec<VectorBlock> {
    if width <= exhaustive_limit {
        let total: u64 = 1u64 << width;
        let mut blocks = Vec::new();
        let mut base = 0u64;
        while base < total {
            let lanes = (total - base).min(64) as u32;
            let words = (0..width)
                .map(|bit| {
                    let mut w = 0u64;
                    for lane in 0..lanes as u64 {
                        if (base + lane) >> bit & 1 == 1 {
                            w |= 1 << lane;
                        }
                    }
                    w
                })
                .collect();
            blocks.push(VectorBlock { words, lanes });
            base += 64;
        }
        blocks
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blocks = Vec::new();
        let mut left = random_count;
        while left > 0 {
            let lanes = left.min(64) as u32;
            let words = (0..width).map(|_| rng.gen()).collect();
            blocks.push(VectorBlock { words, lanes });
            left -= lanes as usize;
        }
        blocks
    }
}
