//! Path sequences, rendering, and the path-model contract.

pub mod decode;
pub mod external;
pub mod model;
pub mod render;
pub mod sequence;

pub use decode::{generate_path, DecodeConfig, DecodeError, DecodeStrategy, Generated};
pub use external::{serve_protocol, ExternalGenerator, Query};
pub use model::{train_path_model, ModelError, PathModel, TrainConfig, TrainFormat};
pub use render::{render_text, RelationTemplateTable, TemplateError};
pub use sequence::{format_sequence, parse_sequence, FormatMode, PathSequence, SequenceError};

use crate::kg::Concept;
use crate::path::KnowledgePath;

/// Anything that can propose bridging paths and score them.
pub trait PathGenerator: Sync {
    /// Up to `config.num_samples` distinct paths from `head` to `tail`
    /// containing every entity in `required`.
    fn generate(
        &self,
        head: &Concept,
        tail: &Concept,
        required: &[Concept],
        config: &DecodeConfig,
    ) -> Result<Vec<KnowledgePath>, DecodeError>;

    fn perplexity(&self, path: &KnowledgePath) -> Result<f64, ModelError>;
}

impl PathGenerator for PathModel {
    fn generate(
        &self,
        head: &Concept,
        tail: &Concept,
        required: &[Concept],
        config: &DecodeConfig,
    ) -> Result<Vec<KnowledgePath>, DecodeError> {
        Ok(generate_path(self, head, tail, required, config)?
            .into_iter()
            .map(|g| g.path)
            .collect())
    }

    fn perplexity(&self, path: &KnowledgePath) -> Result<f64, ModelError> {
        self.path_perplexity(path)
    }
}
