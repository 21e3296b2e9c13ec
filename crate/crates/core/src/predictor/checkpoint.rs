use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::mlp::MlpParams;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Position of a ChaCha8 stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Resumable training state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub params: MlpParams,
    pub adam: AdamState,
    pub rng: RngState,
}

impl Checkpoint {
    pub fn new(params: &MlpParams, adam: &AdamState, rng: &ChaCha8Rng) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            params: params.clone(),
            adam: adam.clone(),
            rng: RngState::capture(rng),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let c: Checkpoint = serde_json::from_reader(file)?;
        if c.format_version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint format {} is not supported (expected {CHECKPOINT_VERSION})",
                c.format_version
            )));
        }
        Ok(c)
    }
}
