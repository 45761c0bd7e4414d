use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, Mlp};
use crate::error::{Error, Result};

/// A network plus its optimizer state, stored as JSON. Floats are written in
/// shortest round-trip form so reloading is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub network: Mlp,
    pub adam: Option<AdamState>,
    pub step: u64,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let network = Mlp::new(ck.network.spec.clone(), ck.network.params.clone())?;
        Ok(Self { network, ..ck })
    }
}
