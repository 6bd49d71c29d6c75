//! JSON fixtures. Floats are written with round-trip precision so a reader
//! in any language sees identical bits.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attention::{AttentionInputs, AttentionShape, NeighborIndex};
use crate::factorized::MessageProblem;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionFixture {
    pub seed: u64,
    pub tau: f64,
    pub inputs: AttentionInputs<f64>,
    pub index: NeighborIndex,
}

impl AttentionFixture {
    pub fn shape(&self) -> AttentionShape {
        self.inputs.shape()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MessageFixture {
    pub seed: u64,
    pub filter_degree: usize,
    pub out_degree: usize,
    pub problem: MessageProblem,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemFixture {
    pub seed: u64,
    pub lattice_constant: f64,
    pub positions: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fixture {
    Attention(AttentionFixture),
    Message(MessageFixture),
    System(SystemFixture),
}

impl Fixture {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Fixture(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Fixture(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?)
            .map_err(|e| Error::Fixture(format!("{}: {e}", path.display())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
