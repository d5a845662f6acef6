//! Module-LWE `A s + e` at rank 2, run from the checked-in listing.

use super::{execute, program_source, ProtocolError};
use crate::isa::{assemble, SeedReg};
use crate::machine::MachineState;

pub const N: usize = 256;
pub const Q: u32 = 7681;
/// Output slots named by the listing.
pub const OUTPUT_SLOTS: [usize; 2] = [24, 25];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KyberOutput {
    pub rows: [Vec<u32>; 2],
}

/// `r0` seeds the matrix, `r1` the secret and error.
pub fn kyber_as_plus_e(
    machine: &mut MachineState,
    matrix_seed: &[u8; 32],
    noise_seed: &[u8; 32],
) -> Result<KyberOutput, ProtocolError> {
    match machine.config() {
        Some(c) if c.n == N && c.q == Q => {}
        other => {
            return Err(ProtocolError::Config(format!(
                "Kyber needs n = {N}, q = {Q}; machine has {}",
                other.map_or("no configuration".to_string(), |c| format!("n = {}, q = {}", c.n, c.q))
            )))
        }
    }
    let source = program_source("kyber512_as_e").expect("listing is embedded");
    let program = assemble(source).map_err(|source| ProtocolError::Assembly { name: "kyber512_as_e", source })?;
    machine.write_seed(SeedReg::R0, *matrix_seed);
    machine.write_seed(SeedReg::R1, *noise_seed);
    execute(machine, &program)?;
    Ok(KyberOutput { rows: [machine.read_slot(OUTPUT_SLOTS[0])?, machine.read_slot(OUTPUT_SLOTS[1])?] })
}
