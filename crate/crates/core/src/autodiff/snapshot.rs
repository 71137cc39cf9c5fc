use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Version-tagged `name -> (shape, values)` map.
///
/// Floats are written in shortest round-trip decimal form and parsed back
/// exactly, so a save/load cycle is bit-identical for finite values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSnapshot {
    pub version: u32,
    pub params: BTreeMap<String, ParamEntry>,
}

impl ParamSnapshot {
    pub fn capture(store: &ParamStore) -> Result<Self> {
        let mut params = BTreeMap::new();
        for (_, p) in store.iter() {
            if let Some(bad) = p.value.data().iter().find(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("parameter '{}' holds {bad}", p.name)));
            }
            params.insert(
                p.name.clone(),
                ParamEntry {
                    shape: p.value.shape().to_vec(),
                    values: p.value.data().to_vec(),
                },
            );
        }
        Ok(ParamSnapshot {
            version: SNAPSHOT_VERSION,
            params,
        })
    }

    /// Overwrites every parameter in `store` from the snapshot. Names and
    /// shapes must match exactly.
    pub fn restore(&self, store: &mut ParamStore) -> Result<()> {
        if self.version != SNAPSHOT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported parameter snapshot version {}",
                self.version
            )));
        }
        if self.params.len() != store.len() {
            return Err(Error::Checkpoint(format!(
                "snapshot has {} parameters, model has {}",
                self.params.len(),
                store.len()
            )));
        }
        for p in store.iter_mut() {
            let entry = self
                .params
                .get(&p.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter '{}'", p.name)))?;
            if entry.shape != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter '{}' has shape {:?} in snapshot, {:?} in model",
                    p.name,
                    entry.shape,
                    p.value.shape()
                )));
            }
            p.value = Tensor::new(entry.shape.clone(), entry.values.clone())
                .map_err(|e| Error::Checkpoint(format!("parameter '{}': {e}", p.name)))?;
        }
        Ok(())
    }
}
