//! Run configuration: one JSON document describing data, encoding, noise,
//! features, classifier, blocking, baseline, parties, attack and ablation
//! settings. Every seed is derived from the master seed and a component name.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{FieldKind, SynthSpec};
use crate::dp::{DpParams, Mechanism};
use crate::encoding::EncodingParams;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::linkage::BlockingParams;
use crate::nn::{TrainConfig, DEFAULT_HIDDEN};
use crate::seeds::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Records per party.
    pub num_records: usize,
    pub match_fraction: f64,
    pub corruption_rate: f64,
    pub attributes: Vec<FieldKind>,
    /// Labelled training pairs generated per party.
    pub training_pairs: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        let spec = SynthSpec::default();
        DataConfig {
            num_records: spec.num_records,
            match_fraction: spec.match_fraction,
            corruption_rate: spec.corruption_rate,
            attributes: spec.attributes,
            training_pairs: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodingConfig {
    pub q: usize,
    pub l: usize,
    pub k: usize,
    /// Derived from the master seed when absent.
    pub hash_seed: Option<u64>,
    /// Encoded columns; all data attributes when absent.
    pub attributes: Option<Vec<String>>,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig { q: 2, l: 1000, k: 10, hash_seed: None, attributes: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpConfig {
    pub mechanism: Mechanism,
    /// Flip probability. Mutually exclusive with `epsilon`.
    pub p: Option<f64>,
    pub epsilon: Option<f64>,
    /// Maximum q-grams per record; measured on the data when absent.
    pub max_qgrams: Option<usize>,
}

pub const DEFAULT_FLIP_PROB: f64 = 0.01;

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig { mechanism: Mechanism::Blip, p: None, epsilon: None, max_qgrams: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NnConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for NnConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        NnConfig {
            hidden: DEFAULT_HIDDEN.to_vec(),
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockingConfig {
    /// Compare every cross-database pair when false.
    pub enabled: bool,
    pub num_tables: usize,
    pub bits_per_key: usize,
}

impl Default for BlockingConfig {
    fn default() -> Self {
        let b = BlockingParams::default();
        BlockingConfig { enabled: true, num_tables: b.num_tables, bits_per_key: b.bits_per_key }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    pub threshold: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig { threshold: 0.7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartiesConfig {
    pub count: usize,
    /// Fraction of its generated training pairs each party keeps.
    pub sample_fraction: f64,
}

impl Default for PartiesConfig {
    fn default() -> Self {
        PartiesConfig { count: 2, sample_fraction: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub attributes: Vec<String>,
    pub top_k: Vec<usize>,
    /// Size of the generated skewed target and public databases.
    pub num_records: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig { attributes: vec!["first_name".into()], top_k: vec![10, 20, 50, 100], num_records: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub p_values: Vec<f64>,
    pub k_values: Vec<usize>,
    pub party_counts: Vec<usize>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            p_values: vec![0.01, 0.05, 0.1],
            k_values: vec![10, 20, 30],
            party_counts: vec![2, 3, 5, 7, 10],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedsConfig {
    pub master_seed: u64,
}

impl Default for SeedsConfig {
    fn default() -> Self {
        SeedsConfig { master_seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub encoding: EncodingConfig,
    pub dp: DpConfig,
    pub features: FeatureConfig,
    pub nn: NnConfig,
    pub blocking: BlockingConfig,
    pub threshold_baseline: ThresholdConfig,
    pub parties: PartiesConfig,
    pub attack: AttackConfig,
    pub ablation: AblationConfig,
    pub seeds: SeedsConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataConfig::default(),
            encoding: EncodingConfig::default(),
            dp: DpConfig::default(),
            features: FeatureConfig::default(),
            nn: NnConfig::default(),
            blocking: BlockingConfig::default(),
            threshold_baseline: ThresholdConfig::default(),
            parties: PartiesConfig::default(),
            attack: AttackConfig::default(),
            ablation: AblationConfig::default(),
            seeds: SeedsConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.synth_spec().validate()?;
        self.encoding_params().validate()?;
        self.train_config().validate()?;
        self.features.validate()?;
        if let Some(w) = &self.features.weights {
            if w.len() != self.encoding.l {
                return Err(Error::Config(format!(
                    "features.weights has {} entries but the filter length is {}",
                    w.len(),
                    self.encoding.l
                )));
            }
        }
        let schema = self.synth_spec().schema();
        for attr in self.encoding_params().attributes {
            if !schema.contains(&attr) {
                return Err(Error::Config(format!("encoding attribute `{attr}` is not a data column")));
            }
        }
        if self.dp.p.is_some() && self.dp.epsilon.is_some() {
            return Err(Error::Config("set at most one of dp.p and dp.epsilon".into()));
        }
        if let Some(p) = self.dp.p {
            if !(0.0..=0.5).contains(&p) {
                return Err(Error::Config(format!("dp.p {p} outside [0, 0.5]")));
            }
        }
        if let Some(e) = self.dp.epsilon {
            if !(e >= 0.0) {
                return Err(Error::Config(format!("dp.epsilon {e} must be >= 0")));
            }
        }
        if self.dp.max_qgrams == Some(0) {
            return Err(Error::Config("dp.max_qgrams must be positive".into()));
        }
        if self.nn.hidden.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        if self.data.training_pairs == 0 {
            return Err(Error::Config("data.training_pairs must be positive".into()));
        }
        if self.blocking.enabled {
            self.blocking_params().validate(self.encoding.l)?;
        }
        if !(0.0..=1.0).contains(&self.threshold_baseline.threshold) {
            return Err(Error::Config("threshold_baseline.threshold outside [0, 1]".into()));
        }
        if self.parties.count < 2 {
            return Err(Error::Config(format!("parties.count must be >= 2, got {}", self.parties.count)));
        }
        if !(self.parties.sample_fraction > 0.0 && self.parties.sample_fraction <= 1.0) {
            return Err(Error::Config("parties.sample_fraction must lie in (0, 1]".into()));
        }
        if self.attack.top_k.is_empty() || self.attack.top_k.contains(&0) {
            return Err(Error::Config("attack.top_k needs positive entries".into()));
        }
        if self.attack.attributes.is_empty() {
            return Err(Error::Config("attack.attributes must not be empty".into()));
        }
        if self.ablation.p_values.iter().any(|p| !(0.0..=0.5).contains(p))
            || self.ablation.k_values.contains(&0)
            || self.ablation.party_counts.iter().any(|&c| c < 2)
        {
            return Err(Error::Config("ablation grid has out-of-range values".into()));
        }
        Ok(())
    }

    pub fn seed(&self, component: &str) -> u64 {
        derive_seed(self.seeds.master_seed, component)
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            num_records: self.data.num_records,
            match_fraction: self.data.match_fraction,
            corruption_rate: self.data.corruption_rate,
            attributes: self.data.attributes.clone(),
            seed: self.seed("synth"),
        }
    }

    pub fn encoding_params(&self) -> EncodingParams {
        EncodingParams {
            q: self.encoding.q,
            l: self.encoding.l,
            k: self.encoding.k,
            hash_seed: self.encoding.hash_seed.unwrap_or_else(|| self.seed("encoding")),
            attributes: self.encoding.attributes.clone().unwrap_or_else(|| self.synth_spec().schema()),
        }
    }

    /// Noise parameters for one stream; `n` is used when `dp.max_qgrams` is unset.
    pub fn dp_params(&self, n: usize, component: &str) -> Result<DpParams> {
        let n = self.dp.max_qgrams.unwrap_or(n).max(1);
        let k = self.encoding.k;
        let seed = self.seed(component);
        match (self.dp.mechanism, self.dp.epsilon) {
            (Mechanism::None, _) => Ok(DpParams { n, k, ..DpParams::none(seed) }),
            (m, Some(eps)) => DpParams::from_epsilon(m, eps, n, k, seed),
            (m, None) => DpParams::from_p(m, self.dp.p.unwrap_or(DEFAULT_FLIP_PROB), n, k, seed),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.nn.learning_rate,
            epochs: self.nn.epochs,
            batch_size: self.nn.batch_size,
            beta1: self.nn.beta1,
            beta2: self.nn.beta2,
            eps: self.nn.eps,
            init_seed: self.seed("nn/init"),
            shuffle_seed: self.seed("nn/shuffle"),
        }
    }

    pub fn blocking_params(&self) -> BlockingParams {
        BlockingParams {
            num_tables: self.blocking.num_tables,
            bits_per_key: self.blocking.bits_per_key,
            block_seed: self.seed("blocking"),
        }
    }

    /// Short digest of the encoding and feature configuration, embedded in every artifact.
    pub fn fingerprint(&self) -> String {
        #[derive(Serialize)]
        struct Fingerprinted<'a> {
            encoding: EncodingParams,
            features: &'a FeatureConfig,
        }
        let doc = Fingerprinted { encoding: self.encoding_params(), features: &self.features };
        let json = serde_json::to_vec(&doc).expect("config serializes");
        Sha256::digest(&json).iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
