//! Key-gate insertion: random (RLL), interference-driven (SLL), single
//! protected pattern stripped functionality (SFLL-lite) and the SFLL+RLL
//! combination.
//!
//! Transforms never rename an existing net. Where a key gate guards net `s`,
//! the gate that used to drive `s` is moved onto a fresh `ll_` net and the key
//! gate takes over `s`, so fanout and output names are unchanged.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::keys::KeyVector;
use crate::logic::Logic3;
use crate::netlist::{key_suffix, Diagnostic, Driver, GateDraft, GateKind, NetId, Netlist, NetlistDraft};
use crate::sim::{key_words, outputs_packed, simulate_packed, vector_blocks};

/// Random vectors used to decide whether a net is observable.
const OBSERVABILITY_VECTORS: usize = 512;

/// Keys up to this width are checked for aliasing: every wrong key must be
/// observable on some vector. Wider keys are not enumerated.
pub const ALIAS_CHECK_MAX_BITS: usize = 10;
const ALIAS_ATTEMPTS: u64 = 16;
const ALIAS_VECTORS: usize = 10_000;
const ALIAS_SEED: u64 = 0x0061_6c69_6173;

#[derive(Copy, Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Scheme {
    #[serde(rename = "rll")]
    Rll,
    #[serde(rename = "sll")]
    Sll,
    #[serde(rename = "sfll")]
    SfllLite,
    #[serde(rename = "combined")]
    Combined,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Rll => "rll",
            Scheme::Sll => "sll",
            Scheme::SfllLite => "sfll",
            Scheme::Combined => "combined",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rll" => Ok(Scheme::Rll),
            "sll" => Ok(Scheme::Sll),
            "sfll" | "sfll-lite" | "sfll_lite" => Ok(Scheme::SfllLite),
            "combined" => Ok(Scheme::Combined),
            other => Err(format!("unknown lock scheme `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LockSpec {
    pub scheme: Scheme,
    pub key_size: usize,
    pub seed: u64,
    /// Over the data inputs; assigned positions are the compared inputs.
    /// SFLL-lite and combined only.
    pub protected_cube: Option<Vec<Logic3>>,
    /// `(sfll_bits, rll_bits)` for [`Scheme::Combined`].
    pub split: Option<(usize, usize)>,
}

impl LockSpec {
    pub fn new(scheme: Scheme, key_size: usize, seed: u64) -> Self {
        LockSpec {
            scheme,
            key_size,
            seed,
            protected_cube: None,
            split: None,
        }
    }

    pub fn combined(sfll_bits: usize, rll_bits: usize, seed: u64) -> Self {
        LockSpec {
            scheme: Scheme::Combined,
            key_size: sfll_bits + rll_bits,
            seed,
            protected_cube: None,
            split: Some((sfll_bits, rll_bits)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum LockError {
    #[error("key size must be at least 1")]
    EmptyKey,
    #[error("key has {got} bits but the lock spec asks for {expected}")]
    KeyLength { expected: usize, got: usize },
    #[error("requested {requested} key gates but only {available} insertion sites are available")]
    KeyTooLarge { requested: usize, available: usize },
    #[error("a {key}-bit comparator needs at least {key} data inputs, netlist has {inputs}")]
    KeyWiderThanInputs { key: usize, inputs: usize },
    #[error("protected cube: {0}")]
    BadCube(String),
    #[error("no gate-driven primary output to protect")]
    NoProtectableOutput,
    #[error("combined lock needs a split whose parts sum to the key size")]
    BadSplit,
    #[error("every placement tried lets wrong key {0} behave like the correct one")]
    KeyAliasing(KeyVector),
    #[error("internal error, locked netlist failed validation: {0:?}")]
    Invalid(Vec<Diagnostic>),
}

/// The protected input pattern of an SFLL-lite lock.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtectedPattern {
    /// Over the data inputs, X on inputs that are not compared.
    pub cube: Vec<Logic3>,
    /// Name of the primary output the perturb/restore units flip.
    pub output: String,
}

/// What a lock transform inserted.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LockInfo {
    /// Original net guarded by each new XOR/XNOR key gate, in key order.
    pub sites: Vec<String>,
    /// `(anchor, placed)` key-index pairs chosen by the SLL heuristic.
    pub interference_pairs: Vec<(usize, usize)>,
    pub protected: Option<ProtectedPattern>,
}

#[derive(Clone, Debug)]
pub struct Locked {
    pub netlist: Netlist,
    pub info: LockInfo,
}

/// Dispatches on `spec.scheme`. Keys of at most [`ALIAS_CHECK_MAX_BITS`] bits
/// are checked with [`aliased_key`]; an aliasing placement is redrawn from a
/// seed derived from `spec.seed`, a bounded number of times.
pub fn lock(netlist: &Netlist, spec: &LockSpec, key: &KeyVector) -> Result<Locked, LockError> {
    let check = key.len() <= ALIAS_CHECK_MAX_BITS && netlist.key_inputs().is_empty();
    let mut attempt = spec.clone();
    let mut last = None;
    for n in 0..ALIAS_ATTEMPTS {
        if n > 0 {
            attempt.seed = spec.seed ^ n.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        }
        let locked = lock_once(netlist, &attempt, key)?;
        if !check {
            return Ok(locked);
        }
        match aliased_key(netlist, &locked, key) {
            None => return Ok(locked),
            Some(wrong) => last = Some(wrong),
        }
    }
    Err(LockError::KeyAliasing(last.expect("at least one attempt")))
}

/// Data-input vectors of the protected pattern, X read as 0.
pub fn protected_vectors(info: &LockInfo) -> Vec<Vec<bool>> {
    info.protected
        .iter()
        .map(|p| p.cube.iter().map(|v| v.to_bool().unwrap_or(false)).collect())
        .collect()
}

/// First wrong key (in order of the flipped bits read as a binary number)
/// under which `locked` matches `original` on every checked vector: all
/// inputs up to 16 data inputs, else 10,000 seeded random vectors, plus the
/// protected pattern. Enumerates all `2^|K| - 1` wrong keys.
pub fn aliased_key(original: &Netlist, locked: &Locked, key: &KeyVector) -> Option<KeyVector> {
    let extra = protected_vectors(&locked.info);
    let k = key.len();
    (1u64..1 << k)
        .map(|n| KeyVector::new((0..k).map(|i| key.get(i) ^ (n >> i & 1 == 1)).collect()))
        .find(|wrong| find_mismatch(original, &[], &locked.netlist, wrong.bits(), ALIAS_VECTORS, &extra, ALIAS_SEED).is_none())
}

fn lock_once(netlist: &Netlist, spec: &LockSpec, key: &KeyVector) -> Result<Locked, LockError> {
    if spec.key_size == 0 {
        return Err(LockError::EmptyKey);
    }
    if key.len() != spec.key_size {
        return Err(LockError::KeyLength {
            expected: spec.key_size,
            got: key.len(),
        });
    }
    match spec.scheme {
        Scheme::Rll => lock_rll(netlist, key, spec.seed),
        Scheme::Sll => lock_sll(netlist, key, spec.seed),
        Scheme::SfllLite => lock_sfll_lite(netlist, key, spec.protected_cube.as_deref(), spec.seed),
        Scheme::Combined => lock_combined(netlist, spec, key),
    }
}

/// Inserts one XOR (key bit 0) or XNOR (key bit 1) key gate per key bit on
/// distinct, randomly chosen observable internal nets.
pub fn lock_rll(netlist: &Netlist, key: &KeyVector, seed: u64) -> Result<Locked, LockError> {
    lock_rll_among(netlist, key, seed, |_| true)
}

/// RLL restricted to sites whose name passes `eligible`.
fn lock_rll_among(
    netlist: &Netlist,
    key: &KeyVector,
    seed: u64,
    eligible: impl Fn(&str) -> bool,
) -> Result<Locked, LockError> {
    if key.is_empty() {
        return Err(LockError::EmptyKey);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates = insertion_candidates(netlist, seed);
    candidates.retain(|&c| eligible(netlist.net_name(c)));
    if candidates.len() < key.len() {
        return Err(LockError::KeyTooLarge {
            requested: key.len(),
            available: candidates.len(),
        });
    }
    candidates.shuffle(&mut rng);
    let sites: Vec<NetId> = candidates[..key.len()].to_vec();

    let mut editor = Editor::new(netlist);
    let mut info = LockInfo::default();
    for (bit, site) in key.bits().iter().zip(&sites) {
        let name = netlist.net_name(*site).to_string();
        editor.insert_key_gate(&name, *bit);
        info.sites.push(name);
    }
    Ok(Locked {
        netlist: editor.finish()?,
        info,
    })
}

/// Like [`lock_rll`], but every key gate after the first is placed in the
/// fanout cone of an earlier one, or on a net whose fanout cone meets it.
/// When no unused observable net remains, key gates stack on an earlier site.
/// Stacked gates alias (flipping both bits cancels); [`lock`] refuses such
/// placements for keys it can enumerate.
pub fn lock_sll(netlist: &Netlist, key: &KeyVector, seed: u64) -> Result<Locked, LockError> {
    if key.is_empty() {
        return Err(LockError::EmptyKey);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates = insertion_candidates(netlist, seed);
    if candidates.is_empty() {
        return Err(LockError::KeyTooLarge {
            requested: key.len(),
            available: 0,
        });
    }
    let cones: Vec<Vec<bool>> = candidates.iter().map(|&c| netlist.fanout_cone(c)).collect();
    let intersects = |a: usize, b: usize| cones[a].iter().zip(&cones[b]).any(|(x, y)| *x && *y);

    let mut used = vec![false; candidates.len()];
    // candidate index per key bit
    let mut chosen: Vec<usize> = Vec::with_capacity(key.len());
    let mut pairs = Vec::new();
    for placed in 0..key.len() {
        if placed == 0 {
            let c = rng.gen_range(0..candidates.len());
            used[c] = true;
            chosen.push(c);
            continue;
        }
        let mut anchors: Vec<usize> = (0..placed).collect();
        anchors.shuffle(&mut rng);
        let mut pick = None;
        for &anchor in &anchors {
            let a = chosen[anchor];
            let in_fanout: Vec<usize> = (0..candidates.len())
                .filter(|&c| !used[c] && cones[a][candidates[c].idx()])
                .collect();
            let pool = if in_fanout.is_empty() {
                (0..candidates.len())
                    .filter(|&c| !used[c] && intersects(a, c))
                    .collect()
            } else {
                in_fanout
            };
            if let Some(&c) = pool.choose(&mut rng) {
                pick = Some((anchor, c));
                break;
            }
        }
        match pick {
            Some((anchor, c)) => {
                used[c] = true;
                chosen.push(c);
                pairs.push((anchor, placed));
            }
            None => {
                let free: Vec<usize> = (0..candidates.len()).filter(|&c| !used[c]).collect();
                if let Some(&c) = free.choose(&mut rng) {
                    // disconnected region: start a new cluster
                    used[c] = true;
                    chosen.push(c);
                } else {
                    let anchor = anchors[0];
                    chosen.push(chosen[anchor]);
                    pairs.push((anchor, placed));
                }
            }
        }
    }

    let mut editor = Editor::new(netlist);
    let mut info = LockInfo {
        interference_pairs: pairs,
        ..Default::default()
    };
    for (bit, &c) in key.bits().iter().zip(&chosen) {
        let name = netlist.net_name(candidates[c]).to_string();
        editor.insert_key_gate(&name, *bit);
        info.sites.push(name);
    }
    Ok(Locked {
        netlist: editor.finish()?,
        info,
    })
}

/// Single-protected-pattern stripped functionality lock. A perturb unit flips
/// one primary output on the protected pattern; a restore unit compares the
/// selected inputs against the key and flips it back when they match.
///
/// Comparator bit `t` is `XNOR(x, k_t)` when `cube_t == key_t` and
/// `XOR(x, k_t)` otherwise, so it fires on `x == cube_t` exactly under the
/// correct key.
pub fn lock_sfll_lite(
    netlist: &Netlist,
    key: &KeyVector,
    protected_cube: Option<&[Logic3]>,
    seed: u64,
) -> Result<Locked, LockError> {
    if key.is_empty() {
        return Err(LockError::EmptyKey);
    }
    let inputs = netlist.inputs().len();
    if key.len() > inputs {
        return Err(LockError::KeyWiderThanInputs {
            key: key.len(),
            inputs,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cube: Vec<Logic3> = match protected_cube {
        Some(c) => {
            if c.len() != inputs {
                return Err(LockError::BadCube(format!(
                    "cube has {} positions, netlist has {inputs} data inputs",
                    c.len()
                )));
            }
            let assigned = c.iter().filter(|v| v.is_known()).count();
            if assigned != key.len() {
                return Err(LockError::BadCube(format!(
                    "cube assigns {assigned} inputs but the key has {} bits",
                    key.len()
                )));
            }
            c.to_vec()
        }
        None => {
            let mut positions: Vec<usize> = (0..inputs).collect();
            positions.shuffle(&mut rng);
            let mut cube = vec![Logic3::X; inputs];
            for &p in &positions[..key.len()] {
                cube[p] = Logic3::from_bool(rng.gen());
            }
            cube
        }
    };
    let protectable: Vec<NetId> = netlist
        .outputs()
        .iter()
        .copied()
        .filter(|o| matches!(netlist.driver(*o), Driver::Gate(_)))
        .collect();
    let Some(&target) = protectable.choose(&mut rng) else {
        return Err(LockError::NoProtectableOutput);
    };

    let mut editor = Editor::new(netlist);
    let mut perturb_terms = Vec::new();
    let mut restore_terms = Vec::new();
    let compared: Vec<(usize, bool)> = cube
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.to_bool().map(|b| (i, b)))
        .collect();
    for (t, &(pos, want)) in compared.iter().enumerate() {
        let input = netlist.net_name(netlist.inputs()[pos]).to_string();
        if want {
            perturb_terms.push(input.clone());
        } else {
            let inv = editor.fresh();
            editor.push(GateKind::Not, &inv, &[&input]);
            perturb_terms.push(inv);
        }
        let k = editor.fresh_key();
        let bit = editor.fresh();
        let kind = if want == key.get(t) {
            GateKind::Xnor
        } else {
            GateKind::Xor
        };
        editor.push(kind, &bit, &[&input, &k]);
        restore_terms.push(bit);
    }
    let perturb = editor.and_all(perturb_terms);
    let restore = editor.and_all(restore_terms);

    let output = netlist.net_name(target).to_string();
    let original = editor.detach(&output);
    let flipped = editor.fresh();
    editor.push(GateKind::Xor, &flipped, &[&original, &perturb]);
    editor.push(GateKind::Xor, &output, &[&flipped, &restore]);

    Ok(Locked {
        netlist: editor.finish()?,
        info: LockInfo {
            protected: Some(ProtectedPattern { cube, output }),
            ..Default::default()
        },
    })
}

/// SFLL-lite on the first `split.0` key bits, then RLL on the remaining ones,
/// both driven by `spec.seed`.
pub fn lock_combined(netlist: &Netlist, spec: &LockSpec, key: &KeyVector) -> Result<Locked, LockError> {
    let (sfll_bits, rll_bits) = spec.split.ok_or(LockError::BadSplit)?;
    if sfll_bits + rll_bits != key.len() || key.is_empty() {
        return Err(LockError::BadSplit);
    }
    let sfll_key = KeyVector::new(key.bits()[..sfll_bits].to_vec());
    let rll_key = KeyVector::new(key.bits()[sfll_bits..].to_vec());
    let mut info = LockInfo::default();
    let mut current = netlist.clone();
    if sfll_bits > 0 {
        let stage = lock_sfll_lite(&current, &sfll_key, spec.protected_cube.as_deref(), spec.seed)?;
        info.protected = stage.info.protected;
        current = stage.netlist;
    }
    if rll_bits > 0 {
        // Only original nets: a key gate on the comparator could cancel a
        // wrong SFLL bit.
        let stage = lock_rll_among(&current, &rll_key, spec.seed, |n| netlist.net(n).is_some())?;
        info.sites = stage.info.sites;
        current = stage.netlist;
    }
    Ok(Locked {
        netlist: current,
        info,
    })
}

/// Gate-driven nets whose flip is visible at some output on random vectors.
/// Existing key inputs take random values.
pub fn insertion_candidates(netlist: &Netlist, seed: u64) -> Vec<NetId> {
    let blocks = vector_blocks(netlist.inputs().len(), 9, OBSERVABILITY_VECTORS, seed ^ 0x6f62_7365_7276);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6b65_7973);
    let keys: Vec<bool> = (0..netlist.key_inputs().len()).map(|_| rng.gen()).collect();
    let key = key_words(&keys);
    let mut observable = vec![false; netlist.num_nets()];
    for block in &blocks {
        let base = simulate_packed(netlist, &block.words, &key);
        let mask = block.lane_mask();
        for gate in netlist.gates() {
            let site = gate.output;
            if observable[site.idx()] {
                continue;
            }
            let mut v = base.clone();
            v[site.idx()] = !v[site.idx()];
            let cone = netlist.fanout_cone(site);
            for g in netlist.gates() {
                if cone[g.output.idx()] && g.output != site {
                    v[g.output.idx()] = g.kind.eval_word(g.inputs.iter().map(|i| v[i.idx()]));
                }
            }
            if netlist
                .outputs()
                .iter()
                .any(|o| (v[o.idx()] ^ base[o.idx()]) & mask != 0)
            {
                observable[site.idx()] = true;
            }
        }
    }
    netlist.internal_nets().filter(|n| observable[n.idx()]).collect()
}

/// Fraction of SLL-chosen key pairs whose key-gate fanout cones intersect.
/// `None` when there are no pairs.
pub fn interference(locked: &Netlist, pairs: &[(usize, usize)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let cone = |k: usize| {
        let root = locked.key_inputs()[k];
        let mut c = locked.fanout_cone(root);
        c[root.idx()] = false;
        c
    };
    let hits = pairs
        .iter()
        .filter(|(a, b)| {
            let (ca, cb) = (cone(*a), cone(*b));
            ca.iter().zip(&cb).any(|(x, y)| *x && *y)
        })
        .count();
    Some(hits as f64 / pairs.len() as f64)
}

/// First input vector on which `locked` under `key` and `original` under
/// `original_key` disagree. Exhaustive up to 16 data inputs, otherwise
/// `random` seeded vectors plus `extra` directed ones.
pub fn find_mismatch(
    original: &Netlist,
    original_key: &[bool],
    locked: &Netlist,
    key: &[bool],
    random: usize,
    extra: &[Vec<bool>],
    seed: u64,
) -> Option<Vec<bool>> {
    let width = original.inputs().len();
    assert_eq!(width, locked.inputs().len(), "data input width");
    let ok = key_words(original_key);
    let lk = key_words(key);
    let mut blocks = vector_blocks(width, 16, random, seed);
    for chunk in extra.chunks(64) {
        let words = (0..width)
            .map(|i| {
                chunk
                    .iter()
                    .enumerate()
                    .fold(0u64, |w, (lane, v)| w | (u64::from(v[i]) << lane))
            })
            .collect();
        blocks.push(crate::sim::VectorBlock {
            words,
            lanes: chunk.len() as u32,
        });
    }
    for block in blocks {
        let a = outputs_packed(original, &block.words, &ok);
        let b = outputs_packed(locked, &block.words, &lk);
        let diff = a
            .iter()
            .zip(&b)
            .fold(0u64, |acc, (x, y)| acc | (x ^ y))
            & block.lane_mask();
        if diff != 0 {
            return Some(block.lane(diff.trailing_zeros()));
        }
    }
    None
}

struct Editor {
    draft: NetlistDraft,
    names: HashSet<String>,
    next_net: usize,
    next_key: u64,
}

impl Editor {
    fn new(netlist: &Netlist) -> Self {
        let draft = netlist.to_draft();
        let mut names: HashSet<String> = draft.inputs.iter().cloned().collect();
        names.extend(draft.gates.iter().map(|g| g.output.clone()));
        let next_key = draft
            .inputs
            .iter()
            .filter_map(|n| key_suffix(n, &draft.key_prefix))
            .max()
            .map_or(0, |m| m + 1);
        Editor {
            draft,
            names,
            next_net: 0,
            next_key,
        }
    }

    fn fresh(&mut self) -> String {
        loop {
            let name = format!("ll_{}", self.next_net);
            self.next_net += 1;
            if self.names.insert(name.clone()) {
                return name;
            }
        }
    }

    fn fresh_key(&mut self) -> String {
        let name = format!("{}{}", self.draft.key_prefix, self.next_key);
        self.next_key += 1;
        self.names.insert(name.clone());
        self.draft.input(name.clone());
        name
    }

    fn push(&mut self, kind: GateKind, output: &str, inputs: &[&str]) {
        self.draft.gates.push(GateDraft::new(kind, output, inputs));
    }

    /// Moves the driver of `net` onto a fresh net and returns its name.
    fn detach(&mut self, net: &str) -> String {
        let fresh = self.fresh();
        let gate = self
            .draft
            .gates
            .iter_mut()
            .find(|g| g.output == net)
            .expect("detach target is gate-driven");
        gate.output = fresh.clone();
        fresh
    }

    fn insert_key_gate(&mut self, site: &str, bit: bool) {
        let moved = self.detach(site);
        let key = self.fresh_key();
        let kind = if bit { GateKind::Xnor } else { GateKind::Xor };
        self.push(kind, site, &[&moved, &key]);
    }

    fn and_all(&mut self, terms: Vec<String>) -> String {
        if terms.len() == 1 {
            return terms.into_iter().next().unwrap();
        }
        let out = self.fresh();
        let refs: Vec<&str> = terms.iter().map(String::as_str).collect();
        self.push(GateKind::And, &out, &refs);
        out
    }

    fn finish(self) -> Result<Netlist, LockError> {
        self.draft.build().map_err(LockError::Invalid)
    }
}
