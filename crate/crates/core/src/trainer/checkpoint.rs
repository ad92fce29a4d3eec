//! Checkpoint directories: `weights.dsw`, `scores.txt` and `rng.bin`.
//!
//! `rng.bin` holds magic `DRNG`, the run seed and the next step as u64 LE;
//! per-step generators are derived from those two values.

use std::fs;
use std::path::Path;

use super::TrainState;
use crate::error::{Error, Result};
use crate::models::{load_params, save_params};
use crate::scheduler::ScoreTable;

pub const WEIGHTS_FILE: &str = "weights.dsw";
pub const SCORES_FILE: &str = "scores.txt";
pub const RNG_FILE: &str = "rng.bin";

const RNG_MAGIC: &[u8; 4] = b"DRNG";

pub fn save_checkpoint(dir: impl AsRef<Path>, state: &TrainState) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_params(dir.join(WEIGHTS_FILE), &state.spec, &state.params)?;
    state.scores.save(dir.join(SCORES_FILE))?;
    let mut blob = Vec::with_capacity(20);
    blob.extend_from_slice(RNG_MAGIC);
    blob.extend_from_slice(&state.seed.to_le_bytes());
    blob.extend_from_slice(&(state.step as u64).to_le_bytes());
    let path = dir.join(RNG_FILE);
    fs::write(&path, blob).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<TrainState> {
    let dir = dir.as_ref();
    let (spec, params) = load_params(dir.join(WEIGHTS_FILE))?;
    let scores = ScoreTable::load(dir.join(SCORES_FILE))?;
    let path = dir.join(RNG_FILE);
    let blob = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if blob.len() != 20 || &blob[..4] != RNG_MAGIC {
        return Err(Error::format(path, "expected 20-byte DRNG blob"));
    }
    let seed = u64::from_le_bytes(blob[4..12].try_into().expect("8 bytes"));
    let step = u64::from_le_bytes(blob[12..20].try_into().expect("8 bytes")) as usize;
    Ok(TrainState {
        spec,
        params,
        scores,
        step,
        seed,
    })
}
