use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DiscoveryState;
use crate::corpus::{read_records, records_to_jsonl};
use crate::error::{Error, Result};
use crate::util;

pub const RECORDS_FILE: &str = "records.jsonl";
pub const STATE_FILE: &str = "state.json";

#[derive(Serialize, Deserialize)]
struct Saved {
    records_sha256: String,
    state: DiscoveryState,
}

/// Write the state into `dir`. Records go first so a crash never leaves a
/// state file pointing at missing records.
pub fn save_checkpoint(state: &DiscoveryState, dir: &Path) -> Result<()> {
    let records = records_to_jsonl(&state.records())?;
    util::write_atomic(&dir.join(RECORDS_FILE), &records)?;
    let saved = Saved { records_sha256: util::sha256_hex(&records), state: state.clone() };
    let mut json = serde_json::to_vec_pretty(&saved)?;
    json.push(b'\n');
    util::write_atomic(&dir.join(STATE_FILE), &json)
}

pub fn load_checkpoint(dir: &Path) -> Result<DiscoveryState> {
    let state_path = dir.join(STATE_FILE);
    let saved: Saved = serde_json::from_str(&util::read_to_string(&state_path)?)
        .map_err(|e| Error::format(&state_path, e.line(), e.to_string()))?;
    let records_path = dir.join(RECORDS_FILE);
    let bytes = std::fs::read(&records_path).map_err(|e| Error::io(&records_path, e))?;
    if util::sha256_hex(&bytes) != saved.records_sha256 {
        return Err(Error::format(&records_path, 1, "records do not match the saved state"));
    }
    let mut state = saved.state;
    state.records = read_records(&records_path)?.into_iter().map(|r| (r.commenter_id.clone(), r)).collect();
    state.validate().map_err(|e| Error::format(&state_path, 1, e.to_string()))?;
    Ok(state)
}
