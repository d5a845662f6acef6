//! Slot files: `n=<dim>`, `q=<modulus>` and `slot.<id>=<hex>` lines, three
//! little-endian bytes per coefficient. Blank lines and `#` comments are
//! skipped.

use std::fmt::Write;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use sapphire_core::machine::MachineState;
use sapphire_core::protocols::{residues_from_hex, residues_to_hex};

pub fn load(m: &mut MachineState, path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (mut n, mut q) = (None, None);
    let mut slots = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = || format!("{}:{}", path.display(), no + 1);
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}: expected `key=value`", at());
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "n" => n = Some(value.parse::<usize>().with_context(at)?),
            "q" => q = Some(value.parse::<u32>().with_context(at)?),
            _ => {
                let Some(id) = key.strip_prefix("slot.") else {
                    bail!("{}: unknown key `{key}`", at());
                };
                let id: usize = id.parse().with_context(at)?;
                slots.push((id, residues_from_hex(value).with_context(at)?, at()));
            }
        }
    }
    match (n, q) {
        (Some(n), Some(q)) => m.configure(n, q).context("configuring from the slot file")?,
        (None, None) => {}
        _ => bail!("{}: give both `n` and `q` or neither", path.display()),
    }
    for (id, values, at) in slots {
        m.write_slot(id, &values).with_context(|| at)?;
    }
    Ok(())
}

pub fn export(m: &MachineState, ids: &[usize]) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "n={}", m.cache().n())?;
    if let Some(c) = m.config() {
        writeln!(out, "q={}", c.q)?;
    }
    for &id in ids {
        writeln!(out, "slot.{id}={}", residues_to_hex(&m.read_slot(id)?))?;
    }
    Ok(out)
}
