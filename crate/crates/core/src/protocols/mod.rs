//! Host-side drivers that run the checked-in assembly programs on a
//! [`MachineState`] and move data in and out of the polynomial cache.

pub mod frodo;
pub mod kyber;
pub mod newhope;
pub mod reference;

use std::collections::HashMap;

use thiserror::Error;

use crate::isa::{assemble, AsmError, Program};
use crate::machine::{MachineError, MachineState};

pub use frodo::{frodo_as_plus_e, frodo_sa_plus_e, FrodoShape, Matrix};
pub use kyber::{kyber_as_plus_e, KyberOutput};
pub use newhope::{decode, encode, CpaCiphertext, CpaKeyPair, Message256, NewHope, PublicKey};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error("program `{name}`: {source}")]
    Assembly { name: &'static str, source: AsmError },
    #[error("template: {0}")]
    Template(String),
    #[error("{0}")]
    Config(String),
    #[error("hex import: {0}")]
    Hex(String),
}

/// Checked-in program sources, keyed by file stem.
pub const PROGRAMS: &[(&str, &str)] = &[
    ("newhope1024_as_e", include_str!("../../programs/newhope1024_as_e.sph")),
    ("kyber512_as_e", include_str!("../../programs/kyber512_as_e.sph")),
    ("ntt_power_loop", include_str!("../../programs/ntt_power_loop.sph")),
    ("ntt8_demo", include_str!("../../programs/ntt8_demo.sph")),
    ("newhope_keygen", include_str!("../../programs/newhope_keygen.sph")),
    ("newhope_encrypt", include_str!("../../programs/newhope_encrypt.sph")),
    ("newhope_decrypt", include_str!("../../programs/newhope_decrypt.sph")),
    ("newhope_add", include_str!("../../programs/newhope_add.sph")),
    ("frodo_as", include_str!("../../programs/frodo_as.sph")),
    ("frodo_sa", include_str!("../../programs/frodo_sa.sph")),
    ("frodo_noise", include_str!("../../programs/frodo_noise.sph")),
];

pub fn program_source(name: &str) -> Option<&'static str> {
    PROGRAMS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Expands `$NAME` placeholders and `#if NAME` / `#if !NAME` / `#endif`
/// blocks. A name is true when it is bound to anything other than `0`.
pub fn expand(source: &str, vars: &HashMap<&str, String>) -> Result<String, ProtocolError> {
    let truthy = |name: &str| -> Result<bool, ProtocolError> {
        vars.get(name)
            .map(|v| v != "0")
            .ok_or_else(|| ProtocolError::Template(format!("unbound condition `{name}`")))
    };
    let mut active = vec![true];
    let mut out = String::new();
    for (no, line) in source.lines().enumerate() {
        let trimmed = line.trim_start();
        if let Some(cond) = trimmed.strip_prefix("#if ") {
            let cond = cond.trim();
            let value = match cond.strip_prefix('!') {
                Some(name) => !truthy(name.trim())?,
                None => truthy(cond)?,
            };
            let outer = *active.last().unwrap();
            active.push(outer && value);
            continue;
        }
        if trimmed.trim_end() == "#endif" {
            if active.len() == 1 {
                return Err(ProtocolError::Template(format!("line {}: `#endif` without `#if`", no + 1)));
            }
            active.pop();
            continue;
        }
        if !*active.last().unwrap() {
            continue;
        }
        out.push_str(&substitute(line, vars).map_err(|e| ProtocolError::Template(format!("line {}: {e}", no + 1)))?);
        out.push('\n');
    }
    if active.len() != 1 {
        return Err(ProtocolError::Template("unterminated `#if`".into()));
    }
    Ok(out)
}

fn substitute(line: &str, vars: &HashMap<&str, String>) -> Result<String, String> {
    let mut out = String::with_capacity(line.len());
    let mut rest = line;
    while let Some(at) = rest.find('$') {
        out.push_str(&rest[..at]);
        let tail = &rest[at + 1..];
        let len = tail.find(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).unwrap_or(tail.len());
        let name = &tail[..len];
        match vars.get(name) {
            Some(v) => out.push_str(v),
            None => return Err(format!("unbound placeholder `${name}`")),
        }
        rest = &tail[len..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Expands and assembles a checked-in program.
pub fn build(name: &'static str, vars: &[(&str, String)]) -> Result<Program, ProtocolError> {
    let source = program_source(name).ok_or_else(|| ProtocolError::Config(format!("no program named `{name}`")))?;
    let map: HashMap<&str, String> = vars.iter().cloned().collect();
    let text = expand(source, &map)?;
    assemble(&text).map_err(|source| ProtocolError::Assembly { name, source })
}

/// Loads and runs a program to completion.
pub(crate) fn execute(machine: &mut MachineState, program: &Program) -> Result<(), ProtocolError> {
    machine.load_program(program.clone())?;
    machine.run(None)?;
    Ok(())
}

/// Residues as hex text, three little-endian bytes per coefficient.
pub fn residues_to_hex(values: &[u32]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes().into_iter().take(3)).collect();
    hex::encode(bytes)
}

pub fn residues_from_hex(text: &str) -> Result<Vec<u32>, ProtocolError> {
    let cleaned: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let bytes = hex::decode(cleaned).map_err(|e| ProtocolError::Hex(e.to_string()))?;
    if bytes.len() % 3 != 0 {
        return Err(ProtocolError::Hex(format!("{} bytes is not a whole number of coefficients", bytes.len())));
    }
    Ok(bytes.chunks(3).map(|c| u32::from_le_bytes([c[0], c[1], c[2], 0])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(pairs: &[(&'static str, &str)]) -> HashMap<&'static str, String> {
        pairs.iter().map(|&(k, v)| (k, v.to_string())).collect()
    }

    #[test]
    fn expansion_substitutes_and_gates() {
        let src = "a $X\n#if P\nb $Y_2\n#if !Q\nc\n#endif\n#endif\n# plain comment\n";
        let v = vars(&[("X", "1"), ("Y_2", "7"), ("P", "1"), ("Q", "0")]);
        assert_eq!(expand(src, &v).unwrap(), "a 1\nb 7\nc\n# plain comment\n");
        let v = vars(&[("X", "1"), ("Y_2", "7"), ("P", "0"), ("Q", "0")]);
        assert_eq!(expand(src, &v).unwrap(), "a 1\n# plain comment\n");
    }

    #[test]
    fn expansion_errors() {
        assert!(expand("x $MISSING\n", &HashMap::new()).is_err());
        assert!(expand("#if P\n", &vars(&[("P", "1")])).is_err());
        assert!(expand("#endif\n", &HashMap::new()).is_err());
        assert!(expand("#if NOPE\n#endif\n", &HashMap::new()).is_err());
    }

    #[test]
    fn hex_round_trip() {
        let v = vec![0, 1, 12288, 0xFF_FFFF, 0x12_3456];
        let text = residues_to_hex(&v);
        assert_eq!(&text[24..30], "563412");
        assert_eq!(residues_from_hex(&text).unwrap(), v);
        assert!(residues_from_hex("0102").is_err());
        assert!(residues_from_hex("zz0000").is_err());
    }
}
