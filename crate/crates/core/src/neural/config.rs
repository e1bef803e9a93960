use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network dimensions shared by taggers and parsers.
///
/// The defaults are the full-size network: three bidirectional layers of 200
/// units per direction, 100-dimensional word, character and UPOS
/// embeddings, a 100-unit arc MLP and a 50-unit relation MLP.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub hidden_per_direction: usize,
    pub word_dim: usize,
    /// Character embedding size fed to the character recurrent encoder.
    pub char_input_dim: usize,
    /// Size of the per-word character representation.
    pub char_out_dim: usize,
    pub upos_dim: usize,
    pub arc_mlp_dim: usize,
    pub rel_mlp_dim: usize,
    /// Hidden layer of the tagging MLP.
    pub tag_mlp_dim: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            num_layers: 3,
            hidden_per_direction: 200,
            word_dim: 100,
            char_input_dim: 100,
            char_out_dim: 100,
            upos_dim: 100,
            arc_mlp_dim: 100,
            rel_mlp_dim: 50,
            tag_mlp_dim: 100,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    /// A small network for desk-scale runs and tests.
    pub fn tiny() -> Self {
        EncoderConfig {
            num_layers: 1,
            hidden_per_direction: 32,
            word_dim: 24,
            char_input_dim: 12,
            char_out_dim: 16,
            upos_dim: 16,
            arc_mlp_dim: 32,
            rel_mlp_dim: 16,
            tag_mlp_dim: 32,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("num_layers", self.num_layers),
            ("hidden_per_direction", self.hidden_per_direction),
            ("word_dim", self.word_dim),
            ("char_input_dim", self.char_input_dim),
            ("char_out_dim", self.char_out_dim),
            ("upos_dim", self.upos_dim),
            ("arc_mlp_dim", self.arc_mlp_dim),
            ("rel_mlp_dim", self.rel_mlp_dim),
            ("tag_mlp_dim", self.tag_mlp_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{} must be positive", name)));
            }
        }
        Ok(())
    }

    /// Width of a token representation entering the encoder.
    pub fn input_dim(&self, use_upos: bool) -> usize {
        self.word_dim + self.char_out_dim + if use_upos { self.upos_dim } else { 0 }
    }

    pub fn state_dim(&self) -> usize {
        2 * self.hidden_per_direction
    }
}

/// Optimization settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Sentences per mini-batch.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    /// Dropout on embeddings and recurrent outputs.
    pub dropout: f64,
    /// Probability of replacing a singleton word by the unknown word.
    pub word_dropout: f64,
    /// Global gradient-norm clipping threshold.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 16,
            max_epochs: 300,
            patience: 30,
            dropout: 0.33,
            word_dropout: 0.25,
            clip_norm: Some(5.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..=1.0).contains(&self.word_dropout) {
            return Err(Error::Config("dropout rates must lie in [0, 1)".into()));
        }
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// No dropout of any kind; used to check that a model can fit its data.
    pub fn overfit(mut self) -> Self {
        self.dropout = 0.0;
        self.word_dropout = 0.0;
        self
    }
}
