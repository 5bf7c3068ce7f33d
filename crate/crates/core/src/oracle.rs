//! Black-box, fault-injectable chip models.
//!
//! A [`SimOracle`] simulates the locked netlist with a sealed hidden key and
//! records every query in a [`Transcript`]. A [`ReplayOracle`] answers from a
//! recorded transcript, so an attack can be rerun without the key.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use crate::keys::{InjectionMap, KeyVector};
use crate::logic::Logic3;
use crate::netlist::{Netlist, Shape};
use crate::sim::{simulate_injected, SimError};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("hidden key has {got} bits, netlist has {expected} key inputs")]
    KeyWidth { expected: usize, got: usize },
    #[error("query has {got} input bits, expected {expected}")]
    InputWidth { expected: usize, got: usize },
    #[error("injection names key index {index}, chip has {keys} key lines")]
    InjectionIndex { index: usize, keys: usize },
    #[error("session {0} does not belong to this oracle")]
    ForeignSession(u64),
    #[error("transcript exhausted after {0} records")]
    ReplayExhausted(usize),
    #[error("replay record {record}: {message}")]
    ReplayMismatch { record: usize, message: String },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// One injection configuration. Queries through it are counted.
#[derive(Debug)]
pub struct OracleSession {
    id: u64,
    oracle: u64,
    injection: InjectionMap,
    query_count: u64,
}

impl OracleSession {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn injection(&self) -> &InjectionMap {
        &self.injection
    }

    pub fn query_count(&self) -> u64 {
        self.query_count
    }
}

pub trait Oracle: Sync {
    fn shape(&self) -> Shape;

    fn open_session(&self, injection: InjectionMap) -> Result<OracleSession, OracleError>;

    fn query(&self, session: &mut OracleSession, pi: &[bool]) -> Result<Vec<bool>, OracleError>;
}

static NEXT_ORACLE: AtomicU64 = AtomicU64::new(1);

fn check_injection(shape: Shape, injection: &InjectionMap) -> Result<(), OracleError> {
    match injection.max_index() {
        Some(index) if index >= shape.keys => Err(OracleError::InjectionIndex { index, keys: shape.keys }),
        _ => Ok(()),
    }
}

fn check_query(shape: Shape, oracle: u64, session: &OracleSession, pi: &[bool]) -> Result<(), OracleError> {
    if session.oracle != oracle {
        return Err(OracleError::ForeignSession(session.id));
    }
    if pi.len() != shape.inputs {
        return Err(OracleError::InputWidth {
            expected: shape.inputs,
            got: pi.len(),
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub session_id: u64,
    pub injection: InjectionMap,
    pub pi: Vec<bool>,
    pub po: Vec<bool>,
}

/// Ordered query log.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transcript {
    pub name: String,
    pub shape: Shape,
    pub records: Vec<Record>,
}

fn bits(v: &[bool]) -> String {
    v.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("transcript line {line}: {message}")]
pub struct TranscriptError {
    pub line: usize,
    pub message: String,
}

impl Transcript {
    pub fn new(name: &str, shape: Shape) -> Self {
        Transcript {
            name: name.to_string(),
            shape,
            records: Vec::new(),
        }
    }

    /// `|PI| |PO| |K| <name>`, then `<session_id> <injection> <pi> <po>` per record.
    pub fn to_text(&self) -> String {
        let s = self.shape;
        let mut out = format!("{} {} {} {}\n", s.inputs, s.outputs, s.keys, self.name);
        for r in &self.records {
            let _ = writeln!(out, "{} {} {} {}", r.session_id, r.injection, bits(&r.pi), bits(&r.po));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, TranscriptError> {
        let err = |line: usize, message: &str| TranscriptError {
            line,
            message: message.to_string(),
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hl, header) = lines.next().ok_or_else(|| err(1, "missing header"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        let nums: Option<Vec<usize>> = h.iter().take(3).map(|f| f.parse().ok()).collect();
        let (Some(nums), 4) = (nums, h.len()) else {
            return Err(err(hl, "header must be `|PI| |PO| |K| <name>`"));
        };
        let shape = Shape {
            inputs: nums[0],
            outputs: nums[1],
            keys: nums[2],
        };
        let parse_bits = |s: &str, n: usize, ln: usize, what: &str| -> Result<Vec<bool>, TranscriptError> {
            let v: Option<Vec<bool>> = s
                .chars()
                .map(|c| match c {
                    '0' => Some(false),
                    '1' => Some(true),
                    _ => None,
                })
                .collect();
            v.filter(|v| v.len() == n)
                .ok_or_else(|| err(ln, &format!("{what} must be {n} bits of 0/1")))
        };
        let mut records = Vec::new();
        for (ln, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(err(ln, "expected `<session> <injection> <pi> <po>`"));
            }
            let session_id = f[0].parse().map_err(|_| err(ln, "bad session id"))?;
            let injection: InjectionMap = f[1].parse().map_err(|e| err(ln, &format!("{e}")))?;
            if injection.max_index().is_some_and(|i| i >= shape.keys) {
                return Err(err(ln, "injection index out of range"));
            }
            records.push(Record {
                session_id,
                injection,
                pi: parse_bits(f[2], shape.inputs, ln, "input vector")?,
                po: parse_bits(f[3], shape.outputs, ln, "output vector")?,
            });
        }
        Ok(Transcript {
            name: h[3].to_string(),
            shape,
            records,
        })
    }
}

/// Simulation oracle. The hidden key is readable by nothing outside this type.
pub struct SimOracle {
    netlist: Netlist,
    hidden_key: KeyVector,
    tag: u64,
    next_session: AtomicU64,
    transcript: Mutex<Transcript>,
}

impl SimOracle {
    pub fn new(netlist: Netlist, hidden_key: KeyVector) -> Result<Self, OracleError> {
        let expected = netlist.key_inputs().len();
        if hidden_key.len() != expected {
            return Err(OracleError::KeyWidth {
                expected,
                got: hidden_key.len(),
            });
        }
        let transcript = Transcript::new(netlist.name(), netlist.shape());
        Ok(SimOracle {
            netlist,
            hidden_key,
            tag: NEXT_ORACLE.fetch_add(1, Ordering::Relaxed),
            next_session: AtomicU64::new(0),
            transcript: Mutex::new(transcript),
        })
    }

    /// Snapshot of every query answered so far.
    pub fn transcript(&self) -> Transcript {
        self.transcript.lock().unwrap().clone()
    }
}

impl Oracle for SimOracle {
    fn shape(&self) -> Shape {
        self.netlist.shape()
    }

    fn open_session(&self, injection: InjectionMap) -> Result<OracleSession, OracleError> {
        check_injection(self.shape(), &injection)?;
        Ok(OracleSession {
            id: self.next_session.fetch_add(1, Ordering::Relaxed),
            oracle: self.tag,
            injection,
            query_count: 0,
        })
    }

    fn query(&self, session: &mut OracleSession, pi: &[bool]) -> Result<Vec<bool>, OracleError> {
        check_query(self.shape(), self.tag, session, pi)?;
        let pi3: Vec<Logic3> = pi.iter().map(|&b| Logic3::from(b)).collect();
        let po: Vec<bool> = simulate_injected(&self.netlist, &pi3, &self.hidden_key, &session.injection)?
            .into_iter()
            .map(|v| v.to_bool().expect("binary inputs give binary outputs"))
            .collect();
        session.query_count += 1;
        self.transcript.lock().unwrap().records.push(Record {
            session_id: session.id,
            injection: session.injection.clone(),
            pi: pi.to_vec(),
            po: po.clone(),
        });
        Ok(po)
    }
}

/// Answers queries from a transcript, strictly in recorded order. Session ids
/// are issued in the same sequence as the recording oracle, so any deviation
/// from the recorded attack is reported rather than answered.
pub struct ReplayOracle {
    transcript: Transcript,
    tag: u64,
    next_session: AtomicU64,
    cursor: Mutex<usize>,
}

impl ReplayOracle {
    pub fn new(transcript: Transcript) -> Self {
        ReplayOracle {
            transcript,
            tag: NEXT_ORACLE.fetch_add(1, Ordering::Relaxed),
            next_session: AtomicU64::new(0),
            cursor: Mutex::new(0),
        }
    }

    pub fn name(&self) -> &str {
        &self.transcript.name
    }

    /// Records not yet consumed.
    pub fn remaining(&self) -> usize {
        self.transcript.records.len() - *self.cursor.lock().unwrap()
    }
}

impl Oracle for ReplayOracle {
    fn shape(&self) -> Shape {
        self.transcript.shape
    }

    fn open_session(&self, injection: InjectionMap) -> Result<OracleSession, OracleError> {
        check_injection(self.shape(), &injection)?;
        Ok(OracleSession {
            id: self.next_session.fetch_add(1, Ordering::Relaxed),
            oracle: self.tag,
            injection,
            query_count: 0,
        })
    }

    fn query(&self, session: &mut OracleSession, pi: &[bool]) -> Result<Vec<bool>, OracleError> {
        check_query(self.shape(), self.tag, session, pi)?;
        let mut cursor = self.cursor.lock().unwrap();
        let record = *cursor;
        let r = self
            .transcript
            .records
            .get(record)
            .ok_or(OracleError::ReplayExhausted(record))?;
        let mismatch = |message: String| OracleError::ReplayMismatch { record, message };
        if r.session_id != session.id {
            return Err(mismatch(format!("session {} queried, {} recorded", session.id, r.session_id)));
        }
        if r.injection != session.injection {
            return Err(mismatch(format!("injection {} queried, {} recorded", session.injection, r.injection)));
        }
        if r.pi != pi {
            return Err(mismatch(format!("input {} queried, {} recorded", bits(pi), bits(&r.pi))));
        }
        *cursor += 1;
        session.query_count += 1;
        Ok(r.po.clone())
    }
}
