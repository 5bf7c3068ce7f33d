//! ISCAS `.bench` reader and writer.
//!
//! ```text
//! # comment
//! INPUT(a)
//! OUTPUT(y)
//! y = NAND(a, b)
//! ```

use std::fmt::Write as _;

use thiserror::Error;

use crate::netlist::{Diagnostic, GateDraft, GateKind, Netlist, NetlistDraft, DEFAULT_KEY_PREFIX};

#[derive(Clone, Debug)]
pub struct ParseOptions {
    /// Netlist name; `.bench` files carry none of their own.
    pub name: String,
    pub key_prefix: String,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            name: "circuit".to_string(),
            key_prefix: DEFAULT_KEY_PREFIX.to_string(),
        }
    }
}

impl ParseOptions {
    pub fn named(name: impl Into<String>) -> Self {
        ParseOptions {
            name: name.into(),
            ..Default::default()
        }
    }
}

/// All diagnostics found in a `.bench` text.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{}", render(.diagnostics))]
pub struct BenchError {
    pub diagnostics: Vec<Diagnostic>,
}

fn render(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n")
}

pub fn parse_bench(text: &str) -> Result<Netlist, BenchError> {
    parse_bench_with(text, &ParseOptions::default())
}

pub fn parse_bench_with(text: &str, opts: &ParseOptions) -> Result<Netlist, BenchError> {
    let draft = parse_draft(text, opts)?;
    draft
        .build()
        .map_err(|diagnostics| BenchError { diagnostics })
}

/// Parses without checking netlist invariants.
pub fn parse_draft(text: &str, opts: &ParseOptions) -> Result<NetlistDraft, BenchError> {
    let mut draft = NetlistDraft::new(opts.name.clone());
    draft.key_prefix = opts.key_prefix.clone();
    let mut diagnostics = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let content = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        if content.trim().is_empty() {
            continue;
        }
        if let Err(d) = parse_line(content, line_no, &mut draft) {
            diagnostics.push(d);
        }
    }
    if diagnostics.is_empty() {
        Ok(draft)
    } else {
        Err(BenchError { diagnostics })
    }
}

struct Cursor<'a> {
    s: &'a str,
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s.as_bytes()[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn column(&self) -> usize {
        self.pos + 1
    }

    fn err(&self, message: impl Into<String>) -> Diagnostic {
        Diagnostic::Syntax {
            line: self.line,
            column: self.column(),
            message: message.into(),
        }
    }

    fn ident(&mut self) -> Result<&'a str, Diagnostic> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() {
            let b = self.s.as_bytes()[self.pos];
            if b.is_ascii_whitespace() || matches!(b, b'(' | b')' | b',' | b'=') {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected a name"));
        }
        Ok(&self.s[start..self.pos])
    }

    fn expect(&mut self, c: u8) -> Result<(), Diagnostic> {
        self.skip_ws();
        if self.pos < self.s.len() && self.s.as_bytes()[self.pos] == c {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected `{}`", c as char)))
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.as_bytes().get(self.pos).copied()
    }

    fn end(&mut self) -> Result<(), Diagnostic> {
        match self.peek() {
            None => Ok(()),
            Some(_) => Err(self.err("unexpected trailing text")),
        }
    }
}

fn parse_line(content: &str, line: usize, draft: &mut NetlistDraft) -> Result<(), Diagnostic> {
    let mut cur = Cursor { s: content, pos: 0, line };
    let first = cur.ident()?;
    if cur.peek() == Some(b'(') {
        let is_input = first.eq_ignore_ascii_case("INPUT");
        if !is_input && !first.eq_ignore_ascii_case("OUTPUT") {
            return Err(Diagnostic::Syntax {
                line,
                column: 1 + content.len() - content.trim_start().len(),
                message: format!("expected INPUT, OUTPUT or an assignment, found `{first}`"),
            });
        }
        cur.expect(b'(')?;
        let name = cur.ident()?.to_string();
        cur.expect(b')')?;
        cur.end()?;
        if is_input {
            draft.inputs.push(name);
            draft.input_lines.push(Some(line));
        } else {
            draft.outputs.push(name);
        }
        return Ok(());
    }
    let output = first.to_string();
    cur.expect(b'=')?;
    cur.skip_ws();
    let kind_col = cur.column();
    let kind_name = cur.ident()?;
    let kind = match GateKind::from_name(kind_name) {
        Some(k) => k,
        None if kind_name.eq_ignore_ascii_case("DFF") => {
            return Err(Diagnostic::Sequential {
                kind: kind_name.to_string(),
                line,
            })
        }
        None => {
            return Err(Diagnostic::UnknownGateKind {
                kind: kind_name.to_string(),
                line,
                column: kind_col,
            })
        }
    };
    cur.expect(b'(')?;
    let mut inputs = vec![cur.ident()?.to_string()];
    loop {
        match cur.peek() {
            Some(b',') => {
                cur.pos += 1;
                inputs.push(cur.ident()?.to_string());
            }
            Some(b')') => {
                cur.pos += 1;
                break;
            }
            _ => return Err(cur.err("expected `,` or `)`")),
        }
    }
    cur.end()?;
    draft.gates.push(GateDraft {
        kind,
        output,
        inputs,
        line: Some(line),
    });
    Ok(())
}

/// Canonical text: name comment, data inputs, key inputs, outputs, then
/// gates in topological order.
pub fn emit_bench(netlist: &Netlist) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {}", netlist.name());
    for id in netlist.inputs().iter().chain(netlist.key_inputs()) {
        let _ = writeln!(s, "INPUT({})", netlist.net_name(*id));
    }
    for id in netlist.outputs() {
        let _ = writeln!(s, "OUTPUT({})", netlist.net_name(*id));
    }
    for gate in netlist.gates() {
        let args: Vec<&str> = gate.inputs.iter().map(|i| netlist.net_name(*i)).collect();
        let _ = writeln!(
            s,
            "{} = {}({})",
            netlist.net_name(gate.output),
            gate.kind,
            args.join(", ")
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_buffer() {
        let n = parse_bench("INPUT(a)\nOUTPUT(y)\ny = BUF(a)").unwrap();
        assert_eq!(n.shape().inputs, 1);
        assert_eq!(n.shape().outputs, 1);
        assert_eq!(n.shape().keys, 0);
        assert_eq!(n.gates().len(), 1);
    }

    #[test]
    fn single_key_gate() {
        let n = parse_bench("INPUT(a)\nINPUT(keyinput0)\nOUTPUT(y)\ny = XOR(a, keyinput0)").unwrap();
        assert_eq!(n.inputs().len(), 1);
        assert_eq!(n.key_inputs().len(), 1);
        assert_eq!(n.net_name(n.key_inputs()[0]), "keyinput0");
    }

    #[test]
    fn canonical_text_is_a_fixed_point() {
        let text = "# circuit\nINPUT(a)\nOUTPUT(y)\ny = BUF(a)\n";
        let n = parse_bench(text).unwrap();
        assert_eq!(emit_bench(&n), text);
    }

    #[test]
    fn comments_case_and_whitespace() {
        let text = "  # header\n input( a )  # trailing\n\nOUTPUT(y)\n y=nand( a ,a )\n";
        let n = parse_bench(text).unwrap();
        assert_eq!(n.gates()[0].kind, GateKind::Nand);
        assert!(emit_bench(&n).contains("y = NAND(a, a)"));
    }

    #[test]
    fn names_are_case_sensitive() {
        let err = parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(A)").unwrap_err();
        assert!(matches!(&err.diagnostics[0], Diagnostic::UndeclaredNet { net, line: Some(3) } if net == "A"));
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_bench("INPUT(a)\nOUTPUT(y)\ny = AND(a a)").unwrap_err();
        assert!(matches!(
            err.diagnostics[0],
            Diagnostic::Syntax { line: 3, column: 11, .. }
        ));
        let err = parse_bench("WIRE(a)").unwrap_err();
        assert!(matches!(err.diagnostics[0], Diagnostic::Syntax { line: 1, column: 1, .. }));
    }

    #[test]
    fn unknown_kind_and_dff() {
        let err = parse_bench("INPUT(a)\nOUTPUT(y)\ny = MUX(a, a)").unwrap_err();
        assert!(matches!(
            &err.diagnostics[0],
            Diagnostic::UnknownGateKind { kind, line: 3, column: 5 } if kind == "MUX"
        ));
        let err = parse_bench("INPUT(a)\nOUTPUT(y)\ny = DFF(a)").unwrap_err();
        assert!(matches!(err.diagnostics[0], Diagnostic::Sequential { line: 3, .. }));
        assert!(err.to_string().contains("combinational"));
    }

    #[test]
    fn duplicate_driver_and_cycle() {
        let err = parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(a)\ny = BUF(a)").unwrap_err();
        assert!(matches!(
            &err.diagnostics[0],
            Diagnostic::DuplicateDriver { net, line: Some(4) } if net == "y"
        ));
        let err = parse_bench("INPUT(a)\nOUTPUT(y)\nn = AND(a, y)\ny = NOT(n)").unwrap_err();
        assert!(matches!(err.diagnostics[0], Diagnostic::Cycle { .. }));
    }

    #[test]
    fn forward_references_are_reordered() {
        let n = parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(n)\nn = BUF(a)").unwrap();
        let text = emit_bench(&n);
        assert!(text.find("n = BUF").unwrap() < text.find("y = NOT").unwrap());
    }

    #[test]
    fn custom_key_prefix() {
        let opts = ParseOptions {
            name: "t".into(),
            key_prefix: "K".into(),
        };
        let n = parse_bench_with("INPUT(a)\nINPUT(K3)\nINPUT(keyinput0)\nOUTPUT(y)\ny = AND(a, K3, keyinput0)", &opts).unwrap();
        assert_eq!(n.key_inputs().len(), 1);
        assert_eq!(n.net_name(n.key_inputs()[0]), "K3");
        assert_eq!(n.inputs().len(), 2);
    }
}
