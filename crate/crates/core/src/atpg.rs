//! Constrained test generation for stuck-at faults on key lines.
//!
//! [`d_algorithm`] is a D-algorithm that tracks the good and the faulty
//! machine separately (the pair form of the D-calculus, so values such as
//! good 1 / faulty X are representable). Every net outside the fault's fanout
//! cone has identical good and faulty values and is stored once.
//!
//! Search state is a trail of component assignments. A decision assigns one
//! unknown component; on conflict the most recent untried decision is
//! flipped. Because each decision is binary over a single component and
//! implications are sound, exhausting the decision stack proves the fault
//! untestable under the given constraints.
//!
//! Decision order:
//! 1. While no primary output carries D or D', pick the D-frontier gate
//!    closest to an output (among those with an X-path) and set one of its
//!    unknown side inputs to the non-controlling value (0 for parity gates).
//! 2. Once an output carries D or D', justify unjustified gates, latest in
//!    topological order first, trying 0 first on the first unknown input.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::keys::{FaultSpec, InjectionMap};
use crate::logic::{eval3, Logic3, Polarity};
use crate::netlist::{Driver, NetId, Netlist, Shape};
use crate::sim::{key_words, outputs_packed, simulate5, SimError};

pub const DEFAULT_BACKTRACK_LIMIT: u64 = 1_000_000;

/// Completions enumerated by [`verify_pattern`] when the D-calculus
/// certificate alone is inconclusive.
const VERIFY_EXHAUSTIVE_X_LIMIT: usize = 20;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct AtpgConfig {
    pub backtrack_limit: u64,
    /// Generate patterns for different key bits on the rayon pool.
    pub parallel: bool,
}

impl Default for AtpgConfig {
    fn default() -> Self {
        AtpgConfig {
            backtrack_limit: DEFAULT_BACKTRACK_LIMIT,
            parallel: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum AtpgError {
    #[error("fault k{key_index}: gave up after {backtracks} backtracks")]
    BacktrackLimit { key_index: usize, backtracks: u64 },
    #[error("fault k{0}: every other key line must be constrained")]
    IncompleteConstraints(usize),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// A test for a stuck-at fault on one key line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pattern {
    pub key_index: usize,
    pub polarity: Polarity,
    /// Over the data inputs; X marks a don't-care.
    pub pi: Vec<Logic3>,
    /// Outputs carrying D or D' under the pattern, ascending.
    pub detecting_pos: Vec<usize>,
    /// Values of every other key line while the pattern was generated.
    pub constraints: InjectionMap,
}

impl Pattern {
    pub fn fault(&self) -> FaultSpec {
        FaultSpec::new(self.key_index, self.polarity)
    }

    pub fn pi_string(&self) -> String {
        self.pi.iter().map(|v| v.to_char()).collect()
    }

    /// Input vector with don't-cares filled with 0.
    pub fn filled(&self) -> Vec<bool> {
        self.pi.iter().map(|v| v.to_bool().unwrap_or(false)).collect()
    }

    /// Whether the constraints are the uniform ones (`all other keys = stuck value`).
    pub fn has_uniform_constraints(&self, keys: usize) -> bool {
        self.constraints == InjectionMap::all_but(keys, self.key_index, self.polarity.value())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AtpgOutcome {
    Detected(Pattern),
    Untestable,
}

/// Runs the D-algorithm with the default backtrack limit.
pub fn d_algorithm(netlist: &Netlist, fault: FaultSpec, constraints: &InjectionMap) -> Result<AtpgOutcome, AtpgError> {
    d_algorithm_with(netlist, fault, constraints, DEFAULT_BACKTRACK_LIMIT)
}

pub fn d_algorithm_with(
    netlist: &Netlist,
    fault: FaultSpec,
    constraints: &InjectionMap,
    backtrack_limit: u64,
) -> Result<AtpgOutcome, AtpgError> {
    let keys = netlist.key_inputs().len();
    if fault.key_index >= keys {
        return Err(SimError::KeyIndex {
            index: fault.key_index,
            keys,
        }
        .into());
    }
    if constraints.contains(fault.key_index) {
        return Err(SimError::ActivationConflict(fault.key_index).into());
    }
    if let Some(index) = constraints.max_index().filter(|&i| i >= keys) {
        return Err(SimError::KeyIndex { index, keys }.into());
    }
    if constraints.len() != keys - 1 {
        return Err(AtpgError::IncompleteConstraints(fault.key_index));
    }
    Search::new(netlist, fault, constraints, backtrack_limit).run()
}

/// Like [`d_algorithm_with`], but key lines missing from `constraints` are
/// search variables. Values the search gives them are added to the
/// pattern's constraints; lines it leaves unassigned do not affect detection.
pub fn d_algorithm_free_keys(
    netlist: &Netlist,
    fault: FaultSpec,
    constraints: &InjectionMap,
    backtrack_limit: u64,
) -> Result<AtpgOutcome, AtpgError> {
    let keys = netlist.key_inputs().len();
    if fault.key_index >= keys {
        return Err(SimError::KeyIndex {
            index: fault.key_index,
            keys,
        }
        .into());
    }
    if constraints.contains(fault.key_index) {
        return Err(SimError::ActivationConflict(fault.key_index).into());
    }
    if let Some(index) = constraints.max_index().filter(|&i| i >= keys) {
        return Err(SimError::KeyIndex { index, keys }.into());
    }
    Search::new(netlist, fault, constraints, backtrack_limit).run()
}

const GOOD: usize = 0;
const FAULTY: usize = 1;

struct Conflict;

struct Decision {
    trail_len: usize,
    net: u32,
    copy: u8,
    value: bool,
    flipped: bool,
}

enum Step {
    Done,
    Fail,
    Decide(NetId, usize, bool),
}

struct Search<'a> {
    netlist: &'a Netlist,
    fault: FaultSpec,
    constraints: &'a InjectionMap,
    limit: u64,
    in_cone: Vec<bool>,
    dist: Vec<usize>,
    val: [Vec<Logic3>; 2],
    trail: Vec<(u32, u8)>,
    queue: VecDeque<(u32, u8)>,
    queued: [Vec<bool>; 2],
    decisions: Vec<Decision>,
    backtracks: u64,
}

impl<'a> Search<'a> {
    fn new(netlist: &'a Netlist, fault: FaultSpec, constraints: &'a InjectionMap, limit: u64) -> Self {
        let n = netlist.num_nets();
        let g = netlist.gates().len();
        let site = netlist.key_inputs()[fault.key_index];
        Search {
            netlist,
            fault,
            constraints,
            limit,
            in_cone: netlist.fanout_cone(site),
            dist: netlist.distance_to_output(),
            val: [vec![Logic3::X; n], vec![Logic3::X; n]],
            trail: Vec::new(),
            queue: VecDeque::new(),
            queued: [vec![false; g], vec![false; g]],
            decisions: Vec::new(),
            backtracks: 0,
        }
    }

    #[inline]
    fn get(&self, net: NetId, copy: usize) -> Logic3 {
        if copy == FAULTY && !self.in_cone[net.idx()] {
            self.val[GOOD][net.idx()]
        } else {
            self.val[copy][net.idx()]
        }
    }

    fn enqueue(&mut self, gate: usize, copy: usize) {
        if !self.queued[copy][gate] {
            self.queued[copy][gate] = true;
            self.queue.push_back((gate as u32, copy as u8));
        }
    }

    fn assign(&mut self, net: NetId, copy: usize, v: Logic3) -> Result<(), Conflict> {
        let copy = if copy == FAULTY && !self.in_cone[net.idx()] {
            GOOD
        } else {
            copy
        };
        let cur = self.val[copy][net.idx()];
        if cur.is_known() {
            return if cur == v { Ok(()) } else { Err(Conflict) };
        }
        self.val[copy][net.idx()] = v;
        self.trail.push((net.0, copy as u8));
        let netlist = self.netlist;
        if let Driver::Gate(g) = netlist.driver(net) {
            self.enqueue(g, copy);
        }
        let shared = copy == GOOD && !self.in_cone[net.idx()];
        for &g in netlist.fanout(net) {
            self.enqueue(g, copy);
            if shared && self.in_cone[netlist.gates()[g].output.idx()] {
                self.enqueue(g, FAULTY);
            }
        }
        Ok(())
    }

    fn imply(&mut self) -> Result<(), Conflict> {
        while let Some((g, copy)) = self.queue.pop_front() {
            let (g, copy) = (g as usize, copy as usize);
            self.queued[copy][g] = false;
            if let Err(c) = self.imply_gate(g, copy) {
                for (g, c) in self.queue.drain(..) {
                    self.queued[c as usize][g as usize] = false;
                }
                return Err(c);
            }
        }
        Ok(())
    }

    fn imply_gate(&mut self, g: usize, copy: usize) -> Result<(), Conflict> {
        let netlist = self.netlist;
        let gate = &netlist.gates()[g];
        if copy == FAULTY && !self.in_cone[gate.output.idx()] {
            return Ok(());
        }
        let forward = eval3(gate.kind, gate.inputs.iter().map(|&i| self.get(i, copy)));
        if forward.is_known() {
            self.assign(gate.output, copy, forward)?;
        }
        let Some(out) = self.get(gate.output, copy).to_bool() else {
            return Ok(());
        };
        let base = out ^ gate.kind.inverting();
        match gate.kind.controlling_value() {
            Some(ctrl) => {
                if base != ctrl {
                    for &i in &gate.inputs {
                        self.assign(i, copy, Logic3::from(!ctrl))?;
                    }
                } else {
                    let mut unknown = None;
                    let mut unknowns = 0;
                    for &i in &gate.inputs {
                        match self.get(i, copy).to_bool() {
                            Some(v) if v == ctrl => return Ok(()),
                            Some(_) => {}
                            None => {
                                unknowns += 1;
                                unknown = Some(i);
                            }
                        }
                    }
                    match (unknowns, unknown) {
                        (0, _) => return Err(Conflict),
                        (1, Some(i)) => self.assign(i, copy, Logic3::from(ctrl))?,
                        _ => {}
                    }
                }
            }
            None if gate.kind.is_parity() => {
                let (a, b) = (gate.inputs[0], gate.inputs[1]);
                match (self.get(a, copy).to_bool(), self.get(b, copy).to_bool()) {
                    (Some(x), None) => self.assign(b, copy, Logic3::from(base ^ x))?,
                    (None, Some(y)) => self.assign(a, copy, Logic3::from(base ^ y))?,
                    _ => {}
                }
            }
            None => self.assign(gate.inputs[0], copy, Logic3::from(base))?,
        }
        Ok(())
    }

    fn undo_to(&mut self, len: usize) {
        while self.trail.len() > len {
            let (net, copy) = self.trail.pop().unwrap();
            self.val[copy as usize][net as usize] = Logic3::X;
        }
    }

    /// Flips the latest untried decision. `Ok(false)` when the space is exhausted.
    fn backtrack(&mut self) -> Result<bool, AtpgError> {
        while let Some(d) = self.decisions.pop() {
            if d.flipped {
                continue;
            }
            self.backtracks += 1;
            if self.backtracks > self.limit {
                return Err(AtpgError::BacktrackLimit {
                    key_index: self.fault.key_index,
                    backtracks: self.backtracks - 1,
                });
            }
            self.undo_to(d.trail_len);
            let value = !d.value;
            self.decisions.push(Decision {
                value,
                flipped: true,
                ..d
            });
            if self.assign(NetId(d.net), d.copy as usize, Logic3::from(value)).is_err() {
                continue;
            }
            return Ok(true);
        }
        Ok(false)
    }

    fn is_error(&self, net: NetId) -> bool {
        match (self.get(net, GOOD).to_bool(), self.get(net, FAULTY).to_bool()) {
            (Some(a), Some(b)) => a != b,
            _ => false,
        }
    }

    fn is_settled_equal(&self, net: NetId) -> bool {
        match (self.get(net, GOOD).to_bool(), self.get(net, FAULTY).to_bool()) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        }
    }

    fn next_step(&self) -> Step {
        let netlist = self.netlist;
        if netlist.outputs().iter().any(|&o| self.is_error(o)) {
            return self.justify();
        }
        let reachable = self.x_path_nets();
        let site = netlist.key_inputs()[self.fault.key_index];
        if !reachable[site.idx()] {
            return Step::Fail;
        }
        // D-frontier: an input carries D or D'.
        if let Some(g) = self.frontier(&reachable, |i| self.is_error(i)) {
            let gate = &netlist.gates()[g];
            let want = gate.kind.controlling_value() == Some(false);
            for &i in &gate.inputs {
                if self.is_error(i) {
                    continue;
                }
                for copy in [GOOD, FAULTY] {
                    if !self.get(i, copy).is_known() {
                        return Step::Decide(i, copy, want);
                    }
                }
            }
        }
        // An input with one known component may still become an error.
        if let Some(g) = self.frontier(&reachable, |i| self.partial(i).is_some()) {
            for &i in &self.netlist.gates()[g].inputs {
                if let Some((copy, known)) = self.partial(i) {
                    return Step::Decide(i, 1 - copy, !known);
                }
            }
        }
        // Unguided: branch on a free source.
        let sources = netlist.inputs().iter().chain(netlist.key_inputs());
        for &s in sources {
            if !self.val[GOOD][s.idx()].is_known() {
                return Step::Decide(s, GOOD, false);
            }
        }
        Step::Fail
    }

    /// In-cone net with exactly one known component: `(known copy, value)`.
    fn partial(&self, net: NetId) -> Option<(usize, bool)> {
        if !self.in_cone[net.idx()] {
            return None;
        }
        match (self.val[GOOD][net.idx()].to_bool(), self.val[FAULTY][net.idx()].to_bool()) {
            (Some(v), None) => Some((GOOD, v)),
            (None, Some(v)) => Some((FAULTY, v)),
            _ => None,
        }
    }

    /// Open gate closest to an output, among those with an X-path and an
    /// input satisfying `pred`. Ties go to the earliest gate.
    fn frontier(&self, reachable: &[bool], pred: impl Fn(NetId) -> bool) -> Option<usize> {
        let mut best: Option<(usize, usize)> = None;
        for (g, gate) in self.netlist.gates().iter().enumerate() {
            let out = gate.output;
            if !reachable[out.idx()] || self.is_error(out) {
                continue;
            }
            if !gate.inputs.iter().any(|&i| pred(i)) {
                continue;
            }
            let d = self.dist[out.idx()];
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, g));
            }
        }
        best.map(|(_, g)| g)
    }

    /// In-cone nets with a path to an output through in-cone nets that are
    /// not settled equal.
    fn x_path_nets(&self) -> Vec<bool> {
        let netlist = self.netlist;
        let open = |n: NetId| self.in_cone[n.idx()] && !self.is_settled_equal(n);
        let mut ok = vec![false; netlist.num_nets()];
        for &o in netlist.outputs() {
            if open(o) {
                ok[o.idx()] = true;
            }
        }
        for gate in netlist.gates().iter().rev() {
            let out = gate.output;
            if ok[out.idx()] || !open(out) {
                continue;
            }
            if netlist
                .fanout(out)
                .iter()
                .any(|&r| ok[netlist.gates()[r].output.idx()])
            {
                ok[out.idx()] = true;
            }
        }
        let site = netlist.key_inputs()[self.fault.key_index];
        ok[site.idx()] = netlist
            .fanout(site)
            .iter()
            .any(|&r| ok[netlist.gates()[r].output.idx()])
            || ok[site.idx()];
        ok
    }

    fn justify(&self) -> Step {
        let netlist = self.netlist;
        for gate in netlist.gates().iter().rev() {
            for copy in [GOOD, FAULTY] {
                if copy == FAULTY && !self.in_cone[gate.output.idx()] {
                    continue;
                }
                if !self.get(gate.output, copy).is_known() {
                    continue;
                }
                let inputs = gate.inputs.iter().map(|&i| self.get(i, copy));
                if eval3(gate.kind, inputs).is_known() {
                    continue;
                }
                let pick = gate
                    .inputs
                    .iter()
                    .copied()
                    .find(|&i| !self.get(i, copy).is_known())
                    .expect("unjustified gate has an unknown input");
                return Step::Decide(pick, copy, false);
            }
        }
        Step::Done
    }

    fn pattern(&self) -> Result<Option<Pattern>, AtpgError> {
        let pi: Vec<Logic3> = self
            .netlist
            .inputs()
            .iter()
            .map(|&i| self.val[GOOD][i.idx()])
            .collect();
        let mut constraints = self.constraints.clone();
        for (k, &net) in self.netlist.key_inputs().iter().enumerate() {
            if k != self.fault.key_index {
                if let Some(v) = self.val[GOOD][net.idx()].to_bool() {
                    constraints.insert(k, v);
                }
            }
        }
        let po = simulate5(self.netlist, &pi, self.fault, &constraints)?;
        let detecting_pos: Vec<usize> = po
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_error())
            .map(|(i, _)| i)
            .collect();
        debug_assert!(!detecting_pos.is_empty(), "justified assignment must certify");
        if detecting_pos.is_empty() {
            return Ok(None);
        }
        Ok(Some(Pattern {
            key_index: self.fault.key_index,
            polarity: self.fault.polarity,
            pi,
            detecting_pos,
            constraints,
        }))
    }

    fn run(mut self) -> Result<AtpgOutcome, AtpgError> {
        let netlist = self.netlist;
        let site = netlist.key_inputs()[self.fault.key_index];
        if self.dist[site.idx()] == usize::MAX {
            return Ok(AtpgOutcome::Untestable);
        }
        let mut init = self
            .assign(site, GOOD, Logic3::from(self.fault.activation_value()))
            .and_then(|_| self.assign(site, FAULTY, Logic3::from(self.fault.polarity.value())));
        for (k, v) in self.constraints.iter() {
            init = init.and_then(|_| self.assign(netlist.key_inputs()[k], GOOD, Logic3::from(v)));
        }
        if init.and_then(|_| self.imply()).is_err() {
            return Ok(AtpgOutcome::Untestable);
        }
        loop {
            match self.next_step() {
                Step::Decide(net, copy, value) => {
                    self.decisions.push(Decision {
                        trail_len: self.trail.len(),
                        net: net.0,
                        copy: copy as u8,
                        value,
                        flipped: false,
                    });
                    let ok = self.assign(net, copy, Logic3::from(value)).is_ok() && self.imply().is_ok();
                    if ok {
                        continue;
                    }
                }
                Step::Done => {
                    if let Some(p) = self.pattern()? {
                        return Ok(AtpgOutcome::Detected(p));
                    }
                }
                Step::Fail => {}
            }
            // conflict or dead end
            loop {
                if !self.backtrack()? {
                    return Ok(AtpgOutcome::Untestable);
                }
                if self.imply().is_ok() {
                    break;
                }
            }
        }
    }
}

/// Patterns for every key bit, at most one each.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PatternSet {
    /// Ascending by key index.
    pub patterns: Vec<Pattern>,
    /// Key indices without a pattern.
    pub unresolved: BTreeSet<usize>,
    /// Subset of `unresolved` where a search hit the backtrack limit rather
    /// than proving untestability.
    pub aborted: BTreeSet<usize>,
}

impl PatternSet {
    pub fn get(&self, key_index: usize) -> Option<&Pattern> {
        self.patterns.iter().find(|p| p.key_index == key_index)
    }

    pub fn count(&self, polarity: Polarity) -> usize {
        self.patterns.iter().filter(|p| p.polarity == polarity).count()
    }
}

/// Outcome for one key bit of [`generate_pattern_set`].
#[derive(Clone, Debug)]
enum BitResult {
    Found(Pattern),
    Unresolved { aborted: bool },
}

/// Tries `(polarity, others = polarity value)` first, then the opposite
/// polarity with the opposite constraints.
fn pattern_for_bit(locked: &Netlist, key_index: usize, polarity: Polarity, limit: u64) -> BitResult {
    let keys = locked.key_inputs().len();
    let mut aborted = false;
    for pol in [polarity, polarity.flipped()] {
        let constraints = InjectionMap::all_but(keys, key_index, pol.value());
        match d_algorithm_with(locked, FaultSpec::new(key_index, pol), &constraints, limit) {
            Ok(AtpgOutcome::Detected(p)) => return BitResult::Found(p),
            Ok(AtpgOutcome::Untestable) => {}
            Err(AtpgError::BacktrackLimit { .. }) => aborted = true,
            Err(e) => unreachable!("well-formed key fault rejected: {e}"),
        }
    }
    BitResult::Unresolved { aborted }
}

pub fn generate_pattern_set(locked: &Netlist, polarity: Polarity) -> PatternSet {
    generate_pattern_set_with(locked, polarity, &AtpgConfig::default())
}

pub fn generate_pattern_set_with(locked: &Netlist, polarity: Polarity, config: &AtpgConfig) -> PatternSet {
    let keys = locked.key_inputs().len();
    let run = |i: usize| pattern_for_bit(locked, i, polarity, config.backtrack_limit);
    let results: Vec<BitResult> = if config.parallel {
        parallel_map(keys, run)
    } else {
        (0..keys).map(run).collect()
    };
    let mut set = PatternSet::default();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            BitResult::Found(p) => set.patterns.push(p),
            BitResult::Unresolved { aborted } => {
                set.unresolved.insert(i);
                if aborted {
                    set.aborted.insert(i);
                }
            }
        }
    }
    set
}

#[cfg(feature = "parallel")]
fn parallel_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(&f).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Whether every completion of the pattern's don't-cares makes each detecting
/// output take complementary values for `k_i = 0` and `k_i = 1`, other key
/// lines held at the pattern's constraints.
///
/// The D-calculus certificate settles most patterns. Otherwise completions are
/// enumerated when there are at most 20 don't-cares; beyond that the answer
/// is a conservative `false`.
pub fn verify_pattern(locked: &Netlist, p: &Pattern) -> bool {
    let shape = locked.shape();
    if p.pi.len() != shape.inputs
        || p.key_index >= shape.keys
        || p.detecting_pos.is_empty()
        || p.detecting_pos.iter().any(|&o| o >= shape.outputs)
    {
        return false;
    }
    let Ok(po) = simulate5(locked, &p.pi, p.fault(), &p.constraints) else {
        return false;
    };
    if p.detecting_pos.iter().all(|&o| po[o].is_error()) {
        return true;
    }
    if (0..shape.keys).any(|k| k != p.key_index && !p.constraints.contains(k)) {
        return false;
    }
    let free: Vec<usize> = (0..p.pi.len()).filter(|&i| !p.pi[i].is_known()).collect();
    if free.len() > VERIFY_EXHAUSTIVE_X_LIMIT {
        return false;
    }
    let mut key = p.constraints.apply(&vec![false; shape.keys]);
    key[p.key_index] = false;
    let k0 = key_words(&key);
    key[p.key_index] = true;
    let k1 = key_words(&key);
    let total = 1u64 << free.len();
    let mut base = 0u64;
    while base < total {
        let lanes = (total - base).min(64);
        let mask = if lanes == 64 { !0 } else { (1u64 << lanes) - 1 };
        let words: Vec<u64> = p
            .pi
            .iter()
            .enumerate()
            .map(|(i, v)| match v.to_bool() {
                Some(true) => !0,
                Some(false) => 0,
                None => {
                    let bit = free.iter().position(|&f| f == i).unwrap();
                    (0..lanes).fold(0u64, |w, lane| w | (((base + lane) >> bit & 1) << lane))
                }
            })
            .collect();
        let a = outputs_packed(locked, &words, &k0);
        let b = outputs_packed(locked, &words, &k1);
        if p.detecting_pos.iter().any(|&o| !(a[o] ^ b[o]) & mask != 0) {
            return false;
        }
        base += 64;
    }
    true
}

/// Pattern file: a `|PI| |PO| |K| <name>` header, then one
/// `P <key_index> <sa0|sa1> <bits> <po,po,...>` line per pattern.
pub fn write_pattern_file(shape: Shape, name: &str, set: &PatternSet) -> String {
    let mut s = format!("{} {} {} {}\n", shape.inputs, shape.outputs, shape.keys, name);
    for p in &set.patterns {
        let pos: Vec<String> = p.detecting_pos.iter().map(|o| o.to_string()).collect();
        let _ = writeln!(s, "P {} {} {} {}", p.key_index, p.polarity, p.pi_string(), pos.join(","));
    }
    s
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("pattern file line {line}: {message}")]
pub struct PatternFileError {
    pub line: usize,
    pub message: String,
}

/// Parses a pattern file and checks it against `shape`. Patterns get the
/// uniform constraints of their polarity; missing key indices are unresolved.
pub fn read_pattern_file(text: &str, shape: Shape) -> Result<(String, PatternSet), PatternFileError> {
    let err = |line: usize, message: String| PatternFileError { line, message };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hl, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(err(hl, "header must be `|PI| |PO| |K| <name>`".into()));
    }
    let nums: Vec<usize> = fields[..3]
        .iter()
        .map(|f| f.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| err(hl, "header counts must be integers".into()))?;
    let declared = Shape {
        inputs: nums[0],
        outputs: nums[1],
        keys: nums[2],
    };
    if declared != shape {
        return Err(err(hl, format!("header shape {declared} does not match netlist shape {shape}")));
    }
    let mut set = PatternSet::default();
    for (ln, line) in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 || f[0] != "P" {
            return Err(err(ln, "expected `P <key> <sa0|sa1> <bits> <pos>`".into()));
        }
        let key_index: usize = f[1].parse().map_err(|_| err(ln, format!("bad key index `{}`", f[1])))?;
        if key_index >= shape.keys {
            return Err(err(ln, format!("key index {key_index} out of range")));
        }
        if set.get(key_index).is_some() {
            return Err(err(ln, format!("second pattern for key index {key_index}")));
        }
        let polarity: Polarity = f[2].parse().map_err(|m| err(ln, m))?;
        let pi: Vec<Logic3> = f[3]
            .chars()
            .map(Logic3::from_char)
            .collect::<Option<_>>()
            .ok_or_else(|| err(ln, format!("bad pattern bits `{}`", f[3])))?;
        if pi.len() != shape.inputs {
            return Err(err(ln, format!("pattern has {} bits, expected {}", pi.len(), shape.inputs)));
        }
        let detecting_pos: Vec<usize> = f[4]
            .split(',')
            .map(|s| s.parse::<usize>().ok().filter(|&o| o < shape.outputs))
            .collect::<Option<_>>()
            .ok_or_else(|| err(ln, format!("bad detecting outputs `{}`", f[4])))?;
        set.patterns.push(Pattern {
            key_index,
            polarity,
            pi,
            detecting_pos,
            constraints: InjectionMap::all_but(shape.keys, key_index, polarity.value()),
        });
    }
    set.patterns.sort_by_key(|p| p.key_index);
    set.unresolved = (0..shape.keys).filter(|&k| set.get(k).is_none()).collect();
    Ok((fields[3].to_string(), set))
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k{} {} {}", self.key_index, self.polarity, self.pi_string())
    }
}
