use std::path::Path;

use super::FederationState;
use crate::error::Result;
use crate::hypernet::write_hypernet;
use crate::model::{write_model, ParamVector};

/// Writes `dir/av_NNNN.txt` for every `(id, model)` pair.
pub fn write_models<'m>(dir: &Path, models: impl IntoIterator<Item = (usize, &'m ParamVector)>) -> Result<()> {
    for (id, m) in models {
        write_model(&dir.join(format!("av_{id:04}.txt")), m)?;
    }
    Ok(())
}

/// Vehicle models under `models/`, regional models under `regions/` and
/// every hypernetwork under `hypernets/`.
pub fn write_fedrav_checkpoint(dir: &Path, state: &FederationState) -> Result<()> {
    write_models(&dir.join("models"), state.av_models())?;
    for (k, m) in state.central_store.iter().enumerate() {
        write_model(&dir.join("regions").join(format!("region_{k:02}.txt")), m)?;
    }
    let hn_dir = dir.join("hypernets");
    for region in &state.regions {
        for (id, hn) in &region.hypernets {
            write_hypernet(&hn_dir.join(format!("av_{id:04}.txt")), hn)?;
        }
    }
    for (k, hn) in state.region_hypernets.iter().enumerate() {
        if let Some(hn) = hn {
            write_hypernet(&hn_dir.join(format!("region_{k:02}.txt")), hn)?;
        }
    }
    Ok(())
}
