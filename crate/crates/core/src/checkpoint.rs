//! JSON parameter checkpoints: group → parameter name → `{shape, data}`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ParamStore, RealTensor};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    pub groups: BTreeMap<String, BTreeMap<String, RealTensor>>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore, config: Option<serde_json::Value>) -> Self {
        let mut groups: BTreeMap<String, BTreeMap<String, RealTensor>> = BTreeMap::new();
        for (_, p) in store.iter() {
            groups
                .entry(p.group.clone())
                .or_default()
                .insert(p.name.clone(), p.tensor.clone());
        }
        Self {
            version: CHECKPOINT_VERSION,
            config,
            groups,
        }
    }

    /// Overwrites every parameter of `store` with the checkpointed values.
    /// Missing entries, extra entries and shape mismatches are errors.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        let stored: usize = self.groups.values().map(|g| g.len()).sum();
        if stored != store.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {stored} tensors, model has {}",
                store.len()
            )));
        }
        let ids: Vec<_> = store.iter().map(|(id, p)| (id, p.group.clone(), p.name.clone())).collect();
        for (id, group, name) in ids {
            let t = self
                .groups
                .get(&group)
                .and_then(|g| g.get(&name))
                .ok_or_else(|| Error::Format(format!("checkpoint lacks {group}/{name}")))?;
            let t = RealTensor::new(t.shape().to_vec(), t.data().to_vec())?;
            if t.shape() != store.tensor(id).shape() {
                return Err(Error::Format(format!(
                    "{group}/{name}: checkpoint shape {:?}, model shape {:?}",
                    t.shape(),
                    store.tensor(id).shape()
                )));
            }
            *store.tensor_mut(id) = t;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(f)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.register("omega_f", "l0.weight", RealTensor::new(vec![2, 2], vec![0.1, -0.2, 1e-300, 3.0]).unwrap())
            .unwrap();
        s.register("omega_e", "l0.bias", RealTensor::vector(vec![std::f64::consts::PI]))
            .unwrap();
        s
    }

    #[test]
    fn json_round_trip_is_exact() {
        let s = store();
        let ck = Checkpoint::from_store(&s, Some(serde_json::json!({"seed": 3})));
        let text = serde_json::to_string(&ck).unwrap();
        assert!(text.contains("\"version\":1"));
        let back: Checkpoint = serde_json::from_str(&text).unwrap();
        let mut restored = s.clone();
        for (id, _) in s.iter() {
            restored.tensor_mut(id).data_mut().fill(0.0);
        }
        back.restore_into(&mut restored).unwrap();
        assert_eq!(restored, s);
    }

    #[test]
    fn version_is_required() {
        let text = r#"{"groups":{}}"#;
        assert!(serde_json::from_str::<Checkpoint>(text).is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let s = store();
        let mut ck = Checkpoint::from_store(&s, None);
        ck.groups.get_mut("omega_e").unwrap().insert(
            "l0.bias".into(),
            RealTensor::vector(vec![1.0, 2.0]),
        );
        let mut target = s.clone();
        assert!(matches!(ck.restore_into(&mut target), Err(Error::Format(_))));
    }
}
