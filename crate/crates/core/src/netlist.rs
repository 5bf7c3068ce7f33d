//! Gate-level combinational netlist IR.
//!
//! A [`Netlist`] is immutable once built. Construction goes through a
//! [`NetlistDraft`], a name-based description that [`validate`] checks and
//! [`NetlistDraft::build`] turns into the indexed, topologically ordered IR.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;

use thiserror::Error;

/// Default prefix that marks an input as a key line (`keyinput0`, `keyinput1`, ...).
pub const DEFAULT_KEY_PREFIX: &str = "keyinput";

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NetId(pub u32);

impl NetId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum GateKind {
    And,
    Nand,
    Or,
    Nor,
    Xor,
    Xnor,
    Not,
    Buf,
}

impl GateKind {
    pub const ALL: [GateKind; 8] = [
        GateKind::And,
        GateKind::Nand,
        GateKind::Or,
        GateKind::Nor,
        GateKind::Xor,
        GateKind::Xnor,
        GateKind::Not,
        GateKind::Buf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GateKind::And => "AND",
            GateKind::Nand => "NAND",
            GateKind::Or => "OR",
            GateKind::Nor => "NOR",
            GateKind::Xor => "XOR",
            GateKind::Xnor => "XNOR",
            GateKind::Not => "NOT",
            GateKind::Buf => "BUF",
        }
    }

    /// Case-insensitive lookup. `BUFF` is accepted as an alias of `BUF`.
    pub fn from_name(s: &str) -> Option<GateKind> {
        let upper = s.to_ascii_uppercase();
        let kind = match upper.as_str() {
            "AND" => GateKind::And,
            "NAND" => GateKind::Nand,
            "OR" => GateKind::Or,
            "NOR" => GateKind::Nor,
            "XOR" => GateKind::Xor,
            "XNOR" => GateKind::Xnor,
            "NOT" => GateKind::Not,
            "BUF" | "BUFF" => GateKind::Buf,
            _ => return None,
        };
        Some(kind)
    }

    /// Whether the output is the complement of the underlying AND/OR/XOR/identity.
    pub fn inverting(self) -> bool {
        matches!(
            self,
            GateKind::Nand | GateKind::Nor | GateKind::Xnor | GateKind::Not
        )
    }

    /// Input value that alone determines the output, if the kind has one.
    pub fn controlling_value(self) -> Option<bool> {
        match self {
            GateKind::And | GateKind::Nand => Some(false),
            GateKind::Or | GateKind::Nor => Some(true),
            _ => None,
        }
    }

    pub fn is_parity(self) -> bool {
        matches!(self, GateKind::Xor | GateKind::Xnor)
    }

    /// `(min, max)` number of inputs.
    pub fn arity(self) -> (usize, Option<usize>) {
        match self {
            GateKind::Not | GateKind::Buf => (1, Some(1)),
            GateKind::Xor | GateKind::Xnor => (2, Some(2)),
            _ => (2, None),
        }
    }

    pub fn eval(self, inputs: impl IntoIterator<Item = bool>) -> bool {
        let base = match self {
            GateKind::And | GateKind::Nand => inputs.into_iter().all(|v| v),
            GateKind::Or | GateKind::Nor => inputs.into_iter().any(|v| v),
            GateKind::Xor | GateKind::Xnor => inputs.into_iter().fold(false, |a, v| a ^ v),
            GateKind::Not | GateKind::Buf => inputs.into_iter().next().unwrap_or(false),
        };
        base ^ self.inverting()
    }

    /// Bit-parallel evaluation over 64 lanes.
    pub fn eval_word(self, inputs: impl IntoIterator<Item = u64>) -> u64 {
        let base = match self {
            GateKind::And | GateKind::Nand => inputs.into_iter().fold(!0u64, |a, v| a & v),
            GateKind::Or | GateKind::Nor => inputs.into_iter().fold(0u64, |a, v| a | v),
            GateKind::Xor | GateKind::Xnor => inputs.into_iter().fold(0u64, |a, v| a ^ v),
            GateKind::Not | GateKind::Buf => inputs.into_iter().next().unwrap_or(0),
        };
        if self.inverting() {
            !base
        } else {
            base
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gate {
    pub kind: GateKind,
    pub inputs: Vec<NetId>,
    pub output: NetId,
}

/// What drives a net.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Driver {
    /// Data primary input, by position in [`Netlist::inputs`].
    Input(usize),
    /// Key input, by key index.
    Key(usize),
    /// Gate, by position in [`Netlist::gates`].
    Gate(usize),
}

/// A structural problem in a netlist or `.bench` file.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum Diagnostic {
    #[error("line {line}, column {column}: syntax error: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}, column {column}: unknown gate kind `{kind}`")]
    UnknownGateKind {
        kind: String,
        line: usize,
        column: usize,
    },
    #[error("line {line}: sequential element `{kind}` is not supported; only combinational netlists are accepted")]
    Sequential { kind: String, line: usize },
    #[error("{}gate {kind} driving `{net}` has {got} inputs", line_prefix(*.line))]
    Arity {
        kind: GateKind,
        net: String,
        got: usize,
        line: Option<usize>,
    },
    #[error("{}net `{net}` has more than one driver", line_prefix(*.line))]
    DuplicateDriver { net: String, line: Option<usize> },
    #[error("{}net `{net}` is used but never driven", line_prefix(*.line))]
    UndeclaredNet { net: String, line: Option<usize> },
    #[error("combinational cycle through {}", .nets.join(" -> "))]
    Cycle { nets: Vec<String> },
}

fn line_prefix(line: Option<usize>) -> String {
    match line {
        Some(l) => format!("line {l}: "),
        None => String::new(),
    }
}

/// Name-level description of a netlist, before validation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NetlistDraft {
    pub name: String,
    /// All declared inputs in declaration order, key inputs included.
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub gates: Vec<GateDraft>,
    /// Inputs named `<key_prefix><decimal>` are key inputs.
    pub key_prefix: String,
    /// Source line of each input declaration, parallel to `inputs`.
    pub input_lines: Vec<Option<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GateDraft {
    pub kind: GateKind,
    pub output: String,
    pub inputs: Vec<String>,
    pub line: Option<usize>,
}

impl GateDraft {
    pub fn new(kind: GateKind, output: impl Into<String>, inputs: &[&str]) -> Self {
        GateDraft {
            kind,
            output: output.into(),
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            line: None,
        }
    }
}

/// Returns the numeric suffix if `name` is `<prefix><decimal digits>`.
pub fn key_suffix(name: &str, prefix: &str) -> Option<u64> {
    let rest = name.strip_prefix(prefix)?;
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}

impl NetlistDraft {
    pub fn new(name: impl Into<String>) -> Self {
        NetlistDraft {
            name: name.into(),
            key_prefix: DEFAULT_KEY_PREFIX.to_string(),
            ..Default::default()
        }
    }

    pub fn input(&mut self, name: impl Into<String>) -> &mut Self {
        self.inputs.push(name.into());
        self.input_lines.push(None);
        self
    }

    pub fn output(&mut self, name: impl Into<String>) -> &mut Self {
        self.outputs.push(name.into());
        self
    }

    pub fn gate(&mut self, kind: GateKind, output: impl Into<String>, inputs: &[&str]) -> &mut Self {
        self.gates.push(GateDraft::new(kind, output, inputs));
        self
    }

    pub fn build(&self) -> Result<Netlist, Vec<Diagnostic>> {
        let analysis = analyze(self);
        if !analysis.diagnostics.is_empty() {
            return Err(analysis.diagnostics);
        }
        Ok(assemble(self, &analysis.order))
    }
}

/// Checks every netlist invariant; the result is empty iff `draft` builds.
pub fn validate(draft: &NetlistDraft) -> Vec<Diagnostic> {
    analyze(draft).diagnostics
}

struct Analysis {
    diagnostics: Vec<Diagnostic>,
    order: Vec<usize>,
}

fn analyze(draft: &NetlistDraft) -> Analysis {
    let mut diagnostics = Vec::new();
    let mut driver: HashMap<&str, Driver> = HashMap::new();
    for (i, name) in draft.inputs.iter().enumerate() {
        if driver.insert(name.as_str(), Driver::Input(i)).is_some() {
            diagnostics.push(Diagnostic::DuplicateDriver {
                net: name.clone(),
                line: draft.input_lines.get(i).copied().flatten(),
            });
        }
    }
    for (g, gate) in draft.gates.iter().enumerate() {
        let (lo, hi) = gate.kind.arity();
        let n = gate.inputs.len();
        if n < lo || hi.is_some_and(|h| n > h) {
            diagnostics.push(Diagnostic::Arity {
                kind: gate.kind,
                net: gate.output.clone(),
                got: n,
                line: gate.line,
            });
        }
        if driver.insert(gate.output.as_str(), Driver::Gate(g)).is_some() {
            diagnostics.push(Diagnostic::DuplicateDriver {
                net: gate.output.clone(),
                line: gate.line,
            });
        }
    }
    for gate in &draft.gates {
        for input in &gate.inputs {
            if !driver.contains_key(input.as_str()) {
                diagnostics.push(Diagnostic::UndeclaredNet {
                    net: input.clone(),
                    line: gate.line,
                });
            }
        }
    }
    for out in &draft.outputs {
        if !driver.contains_key(out.as_str()) {
            diagnostics.push(Diagnostic::UndeclaredNet {
                net: out.clone(),
                line: None,
            });
        }
    }

    // Kahn's algorithm, smallest declaration index first, so an already
    // topologically ordered draft keeps its order.
    let n = draft.gates.len();
    let mut pending = vec![0usize; n];
    let mut readers: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (g, gate) in draft.gates.iter().enumerate() {
        for input in &gate.inputs {
            if let Some(Driver::Gate(src)) = driver.get(input.as_str()) {
                pending[g] += 1;
                readers[*src].push(g);
            }
        }
    }
    let mut heap: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&g| pending[g] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    let mut done = vec![false; n];
    while let Some(Reverse(g)) = heap.pop() {
        order.push(g);
        done[g] = true;
        for &r in &readers[g] {
            pending[r] -= 1;
            if pending[r] == 0 {
                heap.push(Reverse(r));
            }
        }
    }
    if order.len() < n {
        diagnostics.extend(find_cycles(draft, &driver, &done));
    }
    Analysis { diagnostics, order }
}

/// Reports one cycle per strongly connected region left over by the sort.
fn find_cycles(draft: &NetlistDraft, driver: &HashMap<&str, Driver>, done: &[bool]) -> Vec<Diagnostic> {
    let n = draft.gates.len();
    let mut removed: Vec<bool> = done.to_vec();
    let mut out = Vec::new();
    let gate_pred = |g: usize, removed: &[bool]| -> Vec<usize> {
        draft.gates[g]
            .inputs
            .iter()
            .filter_map(|i| match driver.get(i.as_str()) {
                Some(Driver::Gate(p)) if !removed[*p] => Some(*p),
                _ => None,
            })
            .collect()
    };
    while let Some(start) = (0..n).find(|&g| !removed[g]) {
        // Every remaining gate has a remaining predecessor or sits downstream
        // of a cycle; walking predecessors must revisit a gate.
        let mut seen: HashMap<usize, usize> = HashMap::new();
        let mut path = Vec::new();
        let mut cur = start;
        let cycle = loop {
            if let Some(&pos) = seen.get(&cur) {
                break path[pos..].to_vec();
            }
            seen.insert(cur, path.len());
            path.push(cur);
            match gate_pred(cur, &removed).first() {
                Some(&p) => cur = p,
                None => {
                    // Downstream of an already reported cycle.
                    removed[cur] = true;
                    break Vec::new();
                }
            }
        };
        if cycle.is_empty() {
            continue;
        }
        let mut nets: Vec<String> = cycle
            .iter()
            .rev()
            .map(|&g| draft.gates[g].output.clone())
            .collect();
        nets.push(nets[0].clone());
        out.push(Diagnostic::Cycle { nets });
        for &g in &cycle {
            removed[g] = true;
        }
        // Drop gates that only depended on the reported cycle.
        loop {
            let mut changed = false;
            for g in 0..n {
                if !removed[g] && gate_pred(g, &removed).is_empty() {
                    removed[g] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }
    out
}

fn assemble(draft: &NetlistDraft, order: &[usize]) -> Netlist {
    let mut net_names: Vec<String> = Vec::new();
    let mut by_name: HashMap<String, NetId> = HashMap::new();
    let mut intern = |name: &str, net_names: &mut Vec<String>| -> NetId {
        *by_name.entry(name.to_string()).or_insert_with(|| {
            net_names.push(name.to_string());
            NetId((net_names.len() - 1) as u32)
        })
    };

    let mut keyed: Vec<(u64, usize, &String)> = Vec::new();
    let mut data: Vec<&String> = Vec::new();
    for (i, name) in draft.inputs.iter().enumerate() {
        match key_suffix(name, &draft.key_prefix) {
            Some(s) => keyed.push((s, i, name)),
            None => data.push(name),
        }
    }
    keyed.sort();

    let inputs: Vec<NetId> = data.iter().map(|n| intern(n, &mut net_names)).collect();
    let key_inputs: Vec<NetId> = keyed.iter().map(|(_, _, n)| intern(n, &mut net_names)).collect();
    let gates: Vec<Gate> = order
        .iter()
        .map(|&g| {
            let gd = &draft.gates[g];
            let inputs = gd.inputs.iter().map(|i| intern(i, &mut net_names)).collect();
            Gate {
                kind: gd.kind,
                inputs,
                output: intern(&gd.output, &mut net_names),
            }
        })
        .collect();
    let outputs: Vec<NetId> = draft.outputs.iter().map(|o| intern(o, &mut net_names)).collect();

    let n = net_names.len();
    let mut driver = vec![Driver::Input(0); n];
    for (i, id) in inputs.iter().enumerate() {
        driver[id.idx()] = Driver::Input(i);
    }
    for (k, id) in key_inputs.iter().enumerate() {
        driver[id.idx()] = Driver::Key(k);
    }
    let mut fanout = vec![Vec::new(); n];
    for (g, gate) in gates.iter().enumerate() {
        driver[gate.output.idx()] = Driver::Gate(g);
        for input in &gate.inputs {
            if fanout[input.idx()].last() != Some(&g) {
                fanout[input.idx()].push(g);
            }
        }
    }
    Netlist {
        name: draft.name.clone(),
        key_prefix: draft.key_prefix.clone(),
        net_names,
        by_name,
        inputs,
        key_inputs,
        outputs,
        gates,
        driver,
        fanout,
    }
}

/// Immutable combinational netlist with gates stored in topological order.
#[derive(Clone, Debug)]
pub struct Netlist {
    name: String,
    key_prefix: String,
    net_names: Vec<String>,
    by_name: HashMap<String, NetId>,
    inputs: Vec<NetId>,
    key_inputs: Vec<NetId>,
    outputs: Vec<NetId>,
    gates: Vec<Gate>,
    driver: Vec<Driver>,
    fanout: Vec<Vec<usize>>,
}

impl Netlist {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn key_prefix(&self) -> &str {
        &self.key_prefix
    }

    /// Data primary inputs (key inputs excluded).
    pub fn inputs(&self) -> &[NetId] {
        &self.inputs
    }

    /// Key inputs; position is the key-bit index.
    pub fn key_inputs(&self) -> &[NetId] {
        &self.key_inputs
    }

    pub fn outputs(&self) -> &[NetId] {
        &self.outputs
    }

    /// Gates in topological order.
    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn num_nets(&self) -> usize {
        self.net_names.len()
    }

    pub fn net_name(&self, id: NetId) -> &str {
        &self.net_names[id.idx()]
    }

    pub fn net(&self, name: &str) -> Option<NetId> {
        self.by_name.get(name).copied()
    }

    pub fn driver(&self, id: NetId) -> Driver {
        self.driver[id.idx()]
    }

    /// Indices of gates reading `id`.
    pub fn fanout(&self, id: NetId) -> &[usize] {
        &self.fanout[id.idx()]
    }

    pub fn shape(&self) -> Shape {
        Shape {
            inputs: self.inputs.len(),
            outputs: self.outputs.len(),
            keys: self.key_inputs.len(),
        }
    }

    /// Nets that are driven by a gate.
    pub fn internal_nets(&self) -> impl Iterator<Item = NetId> + '_ {
        self.gates.iter().map(|g| g.output)
    }

    /// Name-level copy, suitable for editing and rebuilding.
    pub fn to_draft(&self) -> NetlistDraft {
        let name = |id: &NetId| self.net_names[id.idx()].clone();
        let inputs: Vec<String> = self.inputs.iter().chain(&self.key_inputs).map(name).collect();
        NetlistDraft {
            name: self.name.clone(),
            input_lines: vec![None; inputs.len()],
            inputs,
            outputs: self.outputs.iter().map(name).collect(),
            gates: self
                .gates
                .iter()
                .map(|g| GateDraft {
                    kind: g.kind,
                    output: name(&g.output),
                    inputs: g.inputs.iter().map(name).collect(),
                    line: None,
                })
                .collect(),
            key_prefix: self.key_prefix.clone(),
        }
    }

    /// Always empty for a built netlist; kept for symmetry with [`validate`].
    pub fn validate(&self) -> Vec<Diagnostic> {
        validate(&self.to_draft())
    }

    /// Same nets, gates and port orders, compared by name.
    pub fn is_isomorphic(&self, other: &Netlist) -> bool {
        let names = |n: &Netlist, ids: &[NetId]| -> Vec<String> {
            ids.iter().map(|i| n.net_name(*i).to_string()).collect()
        };
        if self.name != other.name
            || names(self, &self.inputs) != names(other, &other.inputs)
            || names(self, &self.key_inputs) != names(other, &other.key_inputs)
            || names(self, &self.outputs) != names(other, &other.outputs)
            || self.gates.len() != other.gates.len()
        {
            return false;
        }
        self.gates.iter().zip(&other.gates).all(|(a, b)| {
            a.kind == b.kind
                && self.net_name(a.output) == other.net_name(b.output)
                && names(self, &a.inputs) == names(other, &b.inputs)
        })
    }

    /// Transitive fanout of `root` (including `root`) as a per-net mask.
    pub fn fanout_cone(&self, root: NetId) -> Vec<bool> {
        let mut mask = vec![false; self.num_nets()];
        mask[root.idx()] = true;
        let mut stack = vec![root];
        while let Some(net) = stack.pop() {
            for &g in self.fanout(net) {
                let out = self.gates[g].output;
                if !mask[out.idx()] {
                    mask[out.idx()] = true;
                    stack.push(out);
                }
            }
        }
        mask
    }

    /// Minimum number of gates between each net and any primary output;
    /// `usize::MAX` for nets that reach no output.
    pub fn distance_to_output(&self) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.num_nets()];
        for o in &self.outputs {
            dist[o.idx()] = 0;
        }
        for gate in self.gates.iter().rev() {
            let d = dist[gate.output.idx()];
            if d == usize::MAX {
                continue;
            }
            for i in &gate.inputs {
                dist[i.idx()] = dist[i.idx()].min(d + 1);
            }
        }
        dist
    }
}

/// Port counts of a netlist.
#[derive(Copy, Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Shape {
    pub inputs: usize,
    pub outputs: usize,
    pub keys: usize,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.inputs, self.outputs, self.keys)
    }
}
