use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::Value;

use super::SessionState;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Writes `state` as JSON next to `path` and renames it into place, so a
/// crash mid-write leaves the previous checkpoint intact.
pub fn save_checkpoint(state: &SessionState, path: &Path) -> Result<()> {
    let text = serde_json::to_string(state).map_err(|e| Error::Corrupt(e.to_string()))?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    {
        let mut f = fs::File::create(tmp)?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<SessionState> {
    let text = fs::read_to_string(path)?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Error::Corrupt(e.to_string()))?;
    let found = value
        .get("version")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Corrupt("missing version field".into()))?;
    if found != CHECKPOINT_VERSION as u64 {
        return Err(Error::VersionMismatch {
            found: found.min(u32::MAX as u64) as u32,
            expected: CHECKPOINT_VERSION,
        });
    }
    let state: SessionState = serde_json::from_value(value).map_err(|e| Error::Corrupt(e.to_string()))?;
    state.config.validate()?;
    Ok(state)
}
