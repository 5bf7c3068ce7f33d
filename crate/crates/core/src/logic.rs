//! Three-valued and five-valued (D-calculus) logic.

use std::fmt;
use std::str::FromStr;

use crate::netlist::GateKind;

/// Ternary value with X as "unknown".
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Default)]
pub enum Logic3 {
    Zero,
    One,
    #[default]
    X,
}

impl Logic3 {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Logic3::One
        } else {
            Logic3::Zero
        }
    }

    pub fn to_bool(self) -> Option<bool> {
        match self {
            Logic3::Zero => Some(false),
            Logic3::One => Some(true),
            Logic3::X => None,
        }
    }

    pub fn is_known(self) -> bool {
        self != Logic3::X
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Self {
        match self {
            Logic3::Zero => Logic3::One,
            Logic3::One => Logic3::Zero,
            Logic3::X => Logic3::X,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Logic3::Zero => '0',
            Logic3::One => '1',
            Logic3::X => 'X',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            '0' => Some(Logic3::Zero),
            '1' => Some(Logic3::One),
            'x' | 'X' | '-' => Some(Logic3::X),
            _ => None,
        }
    }

    /// `true` if `other` is this value or a refinement of it.
    pub fn covers(self, other: Logic3) -> bool {
        self == Logic3::X || self == other
    }
}

impl From<bool> for Logic3 {
    fn from(b: bool) -> Self {
        Logic3::from_bool(b)
    }
}

impl fmt::Display for Logic3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_char())
    }
}

/// X-pessimistic ternary gate evaluation.
pub fn eval3(kind: GateKind, inputs: impl IntoIterator<Item = Logic3>) -> Logic3 {
    let base = match kind {
        GateKind::And | GateKind::Nand | GateKind::Or | GateKind::Nor => {
            let ctrl = kind.controlling_value() == Some(true);
            let mut unknown = false;
            let mut controlled = false;
            for v in inputs {
                match v.to_bool() {
                    Some(b) if b == ctrl => {
                        controlled = true;
                        break;
                    }
                    Some(_) => {}
                    None => unknown = true,
                }
            }
            if controlled {
                Logic3::from_bool(ctrl)
            } else if unknown {
                Logic3::X
            } else {
                Logic3::from_bool(!ctrl)
            }
        }
        GateKind::Xor | GateKind::Xnor => {
            let mut acc = false;
            for v in inputs {
                match v.to_bool() {
                    Some(b) => acc ^= b,
                    None => return Logic3::X,
                }
            }
            Logic3::from_bool(acc)
        }
        GateKind::Not | GateKind::Buf => inputs.into_iter().next().unwrap_or(Logic3::X),
    };
    if kind.inverting() {
        base.not()
    } else {
        base
    }
}

/// Roth's five-valued D-calculus. `D` is good 1 / faulty 0, `DBar` is good 0 / faulty 1.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Default)]
pub enum Logic5 {
    Zero,
    One,
    D,
    DBar,
    #[default]
    X,
}

impl Logic5 {
    /// Combines independent good-circuit and faulty-circuit values.
    pub fn from_pair(good: Logic3, faulty: Logic3) -> Self {
        match (good, faulty) {
            (Logic3::Zero, Logic3::Zero) => Logic5::Zero,
            (Logic3::One, Logic3::One) => Logic5::One,
            (Logic3::One, Logic3::Zero) => Logic5::D,
            (Logic3::Zero, Logic3::One) => Logic5::DBar,
            _ => Logic5::X,
        }
    }

    pub fn good(self) -> Logic3 {
        match self {
            Logic5::Zero | Logic5::DBar => Logic3::Zero,
            Logic5::One | Logic5::D => Logic3::One,
            Logic5::X => Logic3::X,
        }
    }

    pub fn faulty(self) -> Logic3 {
        match self {
            Logic5::Zero | Logic5::D => Logic3::Zero,
            Logic5::One | Logic5::DBar => Logic3::One,
            Logic5::X => Logic3::X,
        }
    }

    /// `D` or `DBar`.
    pub fn is_error(self) -> bool {
        matches!(self, Logic5::D | Logic5::DBar)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Self {
        Logic5::from_pair(self.good().not(), self.faulty().not())
    }
}

impl From<Logic3> for Logic5 {
    fn from(v: Logic3) -> Self {
        Logic5::from_pair(v, v)
    }
}

impl fmt::Display for Logic5 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Logic5::Zero => "0",
            Logic5::One => "1",
            Logic5::D => "D",
            Logic5::DBar => "D'",
            Logic5::X => "X",
        })
    }
}

/// Five-valued gate table, defined by evaluating both circuits separately.
pub fn eval5(kind: GateKind, inputs: &[Logic5]) -> Logic5 {
    let good = eval3(kind, inputs.iter().map(|v| v.good()));
    let faulty = eval3(kind, inputs.iter().map(|v| v.faulty()));
    Logic5::from_pair(good, faulty)
}

/// Stuck-at polarity.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Polarity {
    #[serde(rename = "sa0")]
    Sa0,
    #[serde(rename = "sa1")]
    Sa1,
}

impl Polarity {
    /// The stuck (and injected) value.
    pub fn value(self) -> bool {
        self == Polarity::Sa1
    }

    pub fn from_value(v: bool) -> Self {
        if v {
            Polarity::Sa1
        } else {
            Polarity::Sa0
        }
    }

    pub fn flipped(self) -> Self {
        Polarity::from_value(!self.value())
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Sa0 => "sa0",
            Polarity::Sa1 => "sa1",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sa0" => Ok(Polarity::Sa0),
            "sa1" => Ok(Polarity::Sa1),
            _ => Err(format!("expected `sa0` or `sa1`, found `{s}`")),
        }
    }
}
