//! `key=value` pipeline configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cae::TrainConfig;
use crate::error::{LdfaError, Result};
use crate::scae::LocalTraining;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ldfa,
    Ltsa,
    Pca,
}

impl FromStr for Mode {
    type Err = LdfaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ldfa" => Ok(Mode::Ldfa),
            "ltsa" => Ok(Mode::Ltsa),
            "pca" => Ok(Mode::Pca),
            _ => Err(LdfaError::Config(format!("unknown mode {s:?} (expected ldfa, ltsa or pca)"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Ldfa => "ldfa",
            Mode::Ltsa => "ltsa",
            Mode::Pca => "pca",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Neighbors per neighborhood (excluding the center).
    pub k: usize,
    /// Layer widths of each local stack, starting with the input dimension.
    /// Empty means `[D, d]`.
    pub widths: Vec<usize>,
    /// Global embedding dimension.
    pub d: usize,
    pub lambda: f64,
    pub learning_rate: f64,
    /// Learning rate of the alignment nets; defaults to `learning_rate`.
    pub align_learning_rate: Option<f64>,
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub align_epochs: usize,
    pub seed: u64,
    pub margin: f64,
    pub mode: Mode,
    /// Train the out-of-sample nets.
    pub oos: bool,
    pub init_scale: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        PipelineConfig {
            k: 10,
            widths: Vec::new(),
            d: 2,
            lambda: t.lambda,
            learning_rate: t.learning_rate,
            align_learning_rate: None,
            pretrain_epochs: t.epochs,
            finetune_epochs: t.epochs,
            align_epochs: t.epochs,
            seed: 0,
            margin: 0.1,
            mode: Mode::Ldfa,
            oos: true,
            init_scale: t.init_scale,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| LdfaError::Parse { line, message: format!("bad value {value:?} for {key}") })
}

impl PipelineConfig {
    /// Parses `key=value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| LdfaError::Parse { line, message: format!("expected key=value, found {content:?}") })?;
            cfg.set(key.trim(), value.trim(), line)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        match key {
            "k" => self.k = parse_value(key, value, line)?,
            "widths" => {
                self.widths = if value.is_empty() {
                    Vec::new()
                } else {
                    value.split(',').map(|w| parse_value(key, w.trim(), line)).collect::<Result<_>>()?
                }
            }
            "d" => self.d = parse_value(key, value, line)?,
            "lambda" => self.lambda = parse_value(key, value, line)?,
            "learning_rate" => self.learning_rate = parse_value(key, value, line)?,
            "align_learning_rate" => self.align_learning_rate = Some(parse_value(key, value, line)?),
            "pretrain_epochs" => self.pretrain_epochs = parse_value(key, value, line)?,
            "finetune_epochs" => self.finetune_epochs = parse_value(key, value, line)?,
            "align_epochs" => self.align_epochs = parse_value(key, value, line)?,
            "seed" => self.seed = parse_value(key, value, line)?,
            "margin" => self.margin = parse_value(key, value, line)?,
            "mode" => self.mode = value.parse()?,
            "oos" => self.oos = parse_value(key, value, line)?,
            "init_scale" => self.init_scale = parse_value(key, value, line)?,
            _ => return Err(LdfaError::Parse { line, message: format!("unknown key {key:?}") }),
        }
        Ok(())
    }

    /// Renders the config in the format accepted by [`PipelineConfig::parse`].
    pub fn to_text(&self) -> String {
        let widths: Vec<String> = self.widths.iter().map(usize::to_string).collect();
        let mut s = format!(
            "k={}\nwidths={}\nd={}\nlambda={}\nlearning_rate={}\n",
            self.k,
            widths.join(","),
            self.d,
            self.lambda,
            self.learning_rate
        );
        if let Some(a) = self.align_learning_rate {
            s += &format!("align_learning_rate={a}\n");
        }
        s += &format!(
            "pretrain_epochs={}\nfinetune_epochs={}\nalign_epochs={}\nseed={}\nmargin={}\nmode={}\noos={}\ninit_scale={}\n",
            self.pretrain_epochs,
            self.finetune_epochs,
            self.align_epochs,
            self.seed,
            self.margin,
            self.mode,
            self.oos,
            self.init_scale
        );
        s
    }

    /// Stack widths for input dimension `input_dim`.
    pub fn layer_widths(&self, input_dim: usize) -> Vec<usize> {
        if self.widths.is_empty() {
            vec![input_dim, self.d]
        } else {
            self.widths.clone()
        }
    }

    /// Checks the config against data of shape `input_dim x n`.
    pub fn validate(&self, input_dim: usize, n: usize) -> Result<()> {
        let err = |m: String| Err(LdfaError::Config(m));
        if self.k == 0 {
            return err("k must be at least 1".into());
        }
        if self.d == 0 {
            return err("d must be at least 1".into());
        }
        if !(self.margin > 0.0 && self.margin < 0.5) {
            return err(format!("margin {} must lie in (0, 0.5)", self.margin));
        }
        if self.mode != Mode::Pca && self.k >= n {
            return err(format!("k = {} needs more than {} samples", self.k, n));
        }
        if self.d >= n {
            return err(format!("d = {} must be below the sample count {n}", self.d));
        }
        match self.mode {
            Mode::Ldfa => {
                let w = self.layer_widths(input_dim);
                if w.len() < 2 {
                    return err("widths needs an input and at least one hidden width".into());
                }
                if w[0] != input_dim {
                    return err(format!("widths start at {} but the data has dimension {input_dim}", w[0]));
                }
                if w.contains(&0) {
                    return err("widths must be positive".into());
                }
                self.local_training().train.validate().map_err(|e| LdfaError::Config(e.to_string()))?;
                self.align_training().validate().map_err(|e| LdfaError::Config(e.to_string()))?;
            }
            Mode::Ltsa => {
                if self.d > self.k {
                    return err(format!("ltsa needs d <= k, got d = {} and k = {}", self.d, self.k));
                }
            }
            Mode::Pca => {
                if self.d > input_dim {
                    return err(format!("pca needs d <= {input_dim}, got {}", self.d));
                }
            }
        }
        Ok(())
    }

    pub fn local_training(&self) -> LocalTraining {
        LocalTraining {
            train: TrainConfig {
                lambda: self.lambda,
                learning_rate: self.learning_rate,
                epochs: self.pretrain_epochs,
                seed: self.seed,
                init_scale: self.init_scale,
            },
            finetune_epochs: self.finetune_epochs,
        }
    }

    /// Schedule of the alignment nets (lambda unused).
    pub fn align_training(&self) -> TrainConfig {
        TrainConfig {
            lambda: 0.0,
            learning_rate: self.align_learning_rate.unwrap_or(self.learning_rate),
            epochs: self.align_epochs,
            seed: self.seed,
            init_scale: self.init_scale,
        }
    }

    /// Schedule of the uniform-net fine-tuning.
    pub fn uniform_training(&self) -> TrainConfig {
        TrainConfig { lambda: 0.0, learning_rate: self.learning_rate, epochs: self.finetune_epochs, seed: self.seed, init_scale: self.init_scale }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_keys_and_round_trips() {
        let text = "# sample\nk = 8\nwidths=10, 6,2\nd=2\nlambda=0.05\nlearning_rate=0.2\nalign_learning_rate=0.5\n\
                    pretrain_epochs=3\nfinetune_epochs=4\nalign_epochs=5\nseed=9\nmargin=0.2\nmode=ltsa\noos=false\ninit_scale=0.1 # trailing\n";
        let cfg = PipelineConfig::parse(text).unwrap();
        assert_eq!(cfg.k, 8);
        assert_eq!(cfg.widths, vec![10, 6, 2]);
        assert_eq!(cfg.mode, Mode::Ltsa);
        assert_eq!(cfg.align_learning_rate, Some(0.5));
        assert!(!cfg.oos);
        assert_eq!(PipelineConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_and_bad_value_are_errors() {
        match PipelineConfig::parse("k=3\nbogus=1\n") {
            Err(LdfaError::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("bogus"));
            }
            other => panic!("{other:?}"),
        }
        assert!(PipelineConfig::parse("k=three").is_err());
        assert!(PipelineConfig::parse("mode=tsne").is_err());
        assert!(PipelineConfig::parse("k").is_err());
    }

    #[test]
    fn validation_rules() {
        let mut cfg = PipelineConfig { widths: vec![4, 3, 2], ..Default::default() };
        assert!(cfg.validate(4, 50).is_ok());
        assert!(cfg.validate(5, 50).is_err());
        assert!(cfg.validate(4, 10).is_err());
        cfg.margin = 0.5;
        assert!(cfg.validate(4, 50).is_err());
        let cfg = PipelineConfig { d: 0, ..Default::default() };
        assert!(cfg.validate(4, 50).is_err());
        let cfg = PipelineConfig { mode: Mode::Pca, d: 5, ..Default::default() };
        assert!(cfg.validate(4, 50).is_err());
        assert_eq!(PipelineConfig::default().layer_widths(7), vec![7, 2]);
    }
}
