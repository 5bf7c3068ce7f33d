//! Shared helpers for integration tests: random circuits and brute-force
//! reference answers.

#![allow(dead_code)]

use keyfault::keys::{FaultSpec, InjectionMap, KeyVector};
use keyfault::locking::{lock, LockSpec, Scheme};
use keyfault::netlist::{GateKind, Netlist, NetlistDraft};
use rand::seq::SliceRandom;
use rand::Rng;

/// Random combinational circuit with `inputs` data inputs and `gates` gates.
/// Every gate without fanout becomes an output.
pub fn random_circuit(rng: &mut impl Rng, inputs: usize, gates: usize) -> Netlist {
    let mut d = NetlistDraft::new("rand");
    let mut nets: Vec<String> = (0..inputs).map(|i| format!("i{i}")).collect();
    for n in &nets {
        d.input(n.clone());
    }
    let mut used = vec![false; inputs + gates];
    for g in 0..gates {
        let kind = *GateKind::ALL.choose(rng).unwrap();
        let arity = match kind.arity() {
            (n, Some(m)) if n == m => n,
            (n, _) => rng.gen_range(n..=n + 2),
        };
        let mut picks: Vec<usize> = Vec::new();
        while picks.len() < arity {
            // prefer recent nets so the circuit gets some depth
            let lo = nets.len().saturating_sub(6);
            let p = if rng.gen_bool(0.7) { rng.gen_range(lo..nets.len()) } else { rng.gen_range(0..nets.len()) };
            if !picks.contains(&p) || picks.len() >= nets.len() {
                picks.push(p);
            }
        }
        for &p in &picks {
            used[p] = true;
        }
        let ins: Vec<&str> = picks.iter().map(|&p| nets[p].as_str()).collect();
        let out = format!("g{g}");
        d.gate(kind, out.clone(), &ins);
        nets.push(out);
    }
    let mut any = false;
    for (i, n) in nets.iter().enumerate().skip(inputs) {
        if !used[i] || rng.gen_bool(0.1) {
            d.output(n.clone());
            any = true;
        }
    }
    if !any {
        d.output(nets.last().unwrap().clone());
    }
    d.build().expect("generated circuit is valid")
}

/// A random small circuit locked with a random scheme, or `None` when the
/// lock does not apply (too few candidate sites, for instance).
pub fn random_locked(rng: &mut impl Rng, max_inputs: usize, max_keys: usize) -> Option<(Netlist, Netlist, KeyVector, Scheme)> {
    let inputs = rng.gen_range(2..=max_inputs);
    let gates = rng.gen_range(4..=24);
    let original = random_circuit(rng, inputs, gates);
    let scheme = *[Scheme::Rll, Scheme::Sll, Scheme::SfllLite, Scheme::Combined].choose(rng).unwrap();
    let keys = rng.gen_range(if scheme == Scheme::Combined { 2 } else { 1 }..=max_keys);
    let key = KeyVector::new((0..keys).map(|_| rng.gen()).collect());
    let seed = rng.gen();
    let spec = match scheme {
        Scheme::Combined => LockSpec::combined(keys / 2, keys - keys / 2, seed),
        s => LockSpec::new(s, keys, seed),
    };
    let locked = lock(&original, &spec, &key).ok()?.netlist;
    Some((original, locked, key, scheme))
}

/// Output vector for fully specified input and key.
pub fn eval(n: &Netlist, pi: &[bool], key: &[bool]) -> Vec<bool> {
    let mut v = vec![false; n.num_nets()];
    for (id, &x) in n.inputs().iter().zip(pi) {
        v[id.idx()] = x;
    }
    for (id, &x) in n.key_inputs().iter().zip(key) {
        v[id.idx()] = x;
    }
    for g in n.gates() {
        v[g.output.idx()] = g.kind.eval(g.inputs.iter().map(|i| v[i.idx()]));
    }
    n.outputs().iter().map(|o| v[o.idx()]).collect()
}

pub fn bits(n: u64, width: usize) -> Vec<bool> {
    (0..width).map(|i| n >> i & 1 == 1).collect()
}

/// Whether some input vector (and, for key lines missing from `constraints`,
/// some assignment of them) distinguishes the good machine from the faulty
/// one. Enumerates everything.
pub fn brute_force_testable(n: &Netlist, fault: FaultSpec, constraints: &InjectionMap) -> bool {
    let pis = n.inputs().len();
    let keys = n.key_inputs().len();
    let free: Vec<usize> = (0..keys)
        .filter(|&k| k != fault.key_index && !constraints.contains(k))
        .collect();
    for f in 0u64..1 << free.len() {
        let mut key = constraints.apply(&vec![false; keys]);
        for (j, &k) in free.iter().enumerate() {
            key[k] = f >> j & 1 == 1;
        }
        for p in 0u64..1 << pis {
            let pi = bits(p, pis);
            key[fault.key_index] = fault.activation_value();
            let good = eval(n, &pi, &key);
            key[fault.key_index] = fault.polarity.value();
            if good != eval(n, &pi, &key) {
                return true;
            }
        }
    }
    false
}

/// Random partial constraints on every key line but `exempt`.
pub fn random_constraints(rng: &mut impl Rng, keys: usize, exempt: usize) -> InjectionMap {
    let mut m = InjectionMap::empty();
    for k in (0..keys).filter(|&k| k != exempt) {
        if rng.gen_bool(0.7) {
            m.insert(k, rng.gen());
        }
    }
    m
}

/// Every completion of the pattern's don't-cares makes each detecting output
/// differ between `k_i = 0` and `k_i = 1`.
pub fn brute_force_verify(n: &Netlist, p: &keyfault::atpg::Pattern) -> bool {
    if p.detecting_pos.is_empty() {
        return false;
    }
    let keys = n.key_inputs().len();
    let free: Vec<usize> = (0..p.pi.len()).filter(|&i| !p.pi[i].is_known()).collect();
    let mut key = p.constraints.apply(&vec![false; keys]);
    (0u64..1 << free.len()).all(|c| {
        let mut pi: Vec<bool> = p.pi.iter().map(|v| v.to_bool().unwrap_or(false)).collect();
        for (j, &i) in free.iter().enumerate() {
            pi[i] = c >> j & 1 == 1;
        }
        key[p.key_index] = false;
        let a = eval(n, &pi, &key);
        key[p.key_index] = true;
        let b = eval(n, &pi, &key);
        p.detecting_pos.iter().all(|&o| a[o] != b[o])
    })
}
