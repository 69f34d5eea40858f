//! JSON experiment configuration, schema version 1.
//!
//! Alphabets are declared once under `alphabets` and referenced by name
//! everywhere else. Every object rejects unknown fields.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::error::{CliError, Diagnostic};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    /// CSV file name inside the output directory; defaults to `<kind>.csv`.
    #[serde(default)]
    pub output: Option<String>,
    pub alphabets: BTreeMap<String, AlphabetDecl>,
    pub experiment: Experiment,
}

/// Either a size (symbols `0..size`) or explicit symbol names.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum AlphabetDecl {
    Size(usize),
    Symbols(Vec<String>),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistDecl {
    pub alphabet: String,
    pub probs: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum MatrixDecl {
    /// Only `"hamming"` is accepted.
    Named(String),
    Rows(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistortionDecl {
    pub input: String,
    pub output: String,
    pub matrix: MatrixDecl,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelDecl {
    Bsc {
        flip: f64,
    },
    Matrix {
        input: String,
        output: String,
        rows: Vec<Vec<f64>>,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerDecl {
    Scrambler { seed: u64 },
    Interleaver { seed: u64 },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelDecl {
    Bsc {
        flip: f64,
        #[serde(default)]
        label: Option<String>,
    },
    Identity {
        alphabet: String,
        #[serde(default)]
        label: Option<String>,
    },
    Dmc {
        kernel: KernelDecl,
        #[serde(default)]
        label: Option<String>,
    },
    SlidingWindow {
        window: usize,
        driver: DistDecl,
        kernels: Vec<KernelDecl>,
        #[serde(default)]
        label: Option<String>,
    },
    Switch {
        period: usize,
        kernels: Vec<KernelDecl>,
        #[serde(default)]
        label: Option<String>,
    },
    SourceCode {
        source: DistDecl,
        distortion: DistortionDecl,
        target: f64,
        margin: f64,
        n_family: Vec<usize>,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        label: Option<String>,
    },
    Layered {
        base: Box<ChannelDecl>,
        layers: Vec<LayerDecl>,
        #[serde(default)]
        label: Option<String>,
    },
}

/// Direct-communication certification run before a channel may carry codes.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyDecl {
    pub n_list: Vec<usize>,
    pub trials: usize,
    pub max_excess: f64,
}

/// The source and fidelity a pipe is certified for.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipeDecl {
    pub source: DistDecl,
    pub distortion: DistortionDecl,
    pub target: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
#[allow(clippy::large_enum_variant)]
pub enum Experiment {
    Rd(RdExp),
    Exponent(ExponentExp),
    Source(SourceExp),
    Reliability(ReliabilityExp),
    Separation(SeparationExp),
    Multiuser(MultiuserExp),
    Equivalence(EquivalenceExp),
    SanovCheck(SanovCheckExp),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Rd(_) => "rd",
            Self::Exponent(_) => "exponent",
            Self::Source(_) => "source",
            Self::Reliability(_) => "reliability",
            Self::Separation(_) => "separation",
            Self::Multiuser(_) => "multiuser",
            Self::Equivalence(_) => "equivalence",
            Self::SanovCheck(_) => "sanov-check",
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RdExp {
    pub source: DistDecl,
    pub distortion: DistortionDecl,
    pub d_grid: Vec<f64>,
    #[serde(default)]
    pub tol: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentExp {
    pub source: DistDecl,
    pub distortion: DistortionDecl,
    pub target: f64,
    pub eps_grid: Vec<f64>,
    #[serde(default)]
    pub tol: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceExp {
    pub source: DistDecl,
    pub distortion: DistortionDecl,
    pub target: f64,
    pub rates: Vec<f64>,
    pub n_list: Vec<usize>,
    pub trials: usize,
    /// Codeword letter law; the rate-distortion output marginal when absent.
    #[serde(default)]
    pub codeword_law: Option<DistDecl>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReliabilityExp {
    pub input: DistDecl,
    pub distortion: DistortionDecl,
    pub target: f64,
    pub eps: f64,
    #[serde(default)]
    pub eps_in_distortion: bool,
    pub channels: Vec<ChannelDecl>,
    pub rates: Vec<f64>,
    pub n_list: Vec<usize>,
    pub messages_sampled: usize,
    pub trials_per_message: usize,
    #[serde(default)]
    pub certify: Option<CertifyDecl>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparationExp {
    pub source: DistDecl,
    pub distortion: DistortionDecl,
    pub target: f64,
    pub pipe: PipeDecl,
    pub channels: Vec<ChannelDecl>,
    pub certify: CertifyDecl,
    pub source_margin: f64,
    pub channel_rate: f64,
    pub eps: f64,
    pub n_list: Vec<usize>,
    pub trials: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MediumDecl {
    Parallel {
        users: usize,
        pairs: Vec<(usize, usize)>,
        channels: Vec<ChannelDecl>,
    },
    SharedNoise {
        users: usize,
        pairs: Vec<(usize, usize)>,
        alphabet: String,
        common: f64,
        private: f64,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderDecl {
    Random,
    Constant(u8),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairDecl {
    pub source: DistDecl,
    pub distortion: DistortionDecl,
    pub target: f64,
    /// Exactly one of `rate` and `rate_fraction` (a multiple of `R(D)`).
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default)]
    pub rate_fraction: Option<f64>,
    #[serde(default)]
    pub seed_tag: Option<u64>,
    #[serde(default)]
    pub encoder: Option<EncoderDecl>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Direct,
    Reliable,
    Induction,
    Separation,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InductionDecl {
    pub n: usize,
    pub trials: usize,
    pub threshold: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayloadDecl {
    pub source: DistDecl,
    pub distortion: DistortionDecl,
    pub target: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiSeparationDecl {
    pub payloads: Vec<PayloadDecl>,
    pub certify: CertifyDecl,
    pub source_margin: f64,
    pub channel_margin: f64,
    pub n_list: Vec<usize>,
    pub trials: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiuserExp {
    pub medium: MediumDecl,
    pub pairs: Vec<PairDecl>,
    pub modes: Vec<Mode>,
    pub eps: f64,
    pub n_list: Vec<usize>,
    /// Trials per blocklength in direct mode.
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default)]
    pub messages_sampled: Option<usize>,
    #[serde(default)]
    pub trials_per_message: Option<usize>,
    #[serde(default)]
    pub induction: Option<InductionDecl>,
    #[serde(default)]
    pub separation: Option<MultiSeparationDecl>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquivalencePipeDecl {
    pub source: DistDecl,
    pub distortion: DistortionDecl,
    pub target: f64,
    pub channel: ChannelDecl,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquivalenceExp {
    pub pipe: EquivalencePipeDecl,
    pub payload: PayloadDecl,
    pub certify: CertifyDecl,
    #[serde(default)]
    pub margin: Option<f64>,
    #[serde(default)]
    pub source_fraction: Option<f64>,
    #[serde(default)]
    pub channel_fraction: Option<f64>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub n_list: Option<Vec<usize>>,
    #[serde(default)]
    pub trials: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SanovCheckExp {
    pub source: DistDecl,
    pub distortion: DistortionDecl,
    pub target: f64,
    pub eps: f64,
    pub rate: f64,
    pub n_list: Vec<usize>,
    pub y_types: Vec<DistDecl>,
}

/// Parses `text`, reporting the failing field path and source position.
pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::Schema(vec![Diagnostic::new(
            if path == "." { String::new() } else { path },
            format!("{inner}"),
        )])
    })?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(CliError::Schema(vec![Diagnostic::new(
            "schema_version",
            format!(
                "unsupported version {}, expected {SCHEMA_VERSION}",
                cfg.schema_version
            ),
        )]));
    }
    Ok(cfg)
}
