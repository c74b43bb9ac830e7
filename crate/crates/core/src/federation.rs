//! Local model generation by each database owner and federated averaging.
//!
//! Every owner encodes both records of each labelled training pair, perturbs
//! the two filters independently, computes the feature vector and trains a
//! local classifier. The aggregator then averages all local weights once to
//! obtain the global model.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabeledPair};
use crate::dp::{add_dp_noise, DpParams, NoiseStream};
use crate::encoding::{gen_bloom_filter, EncodingParams};
use crate::error::{Error, Result};
use crate::features::{feature_vector, FeatureConfig};
use crate::nn::{init_model, train_model, Example, NeuralModel, TrainConfig, DEFAULT_HIDDEN};

/// One database owner's training records and labelled pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PartyState {
    pub party_id: String,
    pub dataset: Dataset,
    pub training_pairs: Vec<LabeledPair>,
}

/// Parameters every owner agrees on before training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedConfig {
    pub encoding: EncodingParams,
    pub dp: DpParams,
    pub train: TrainConfig,
    pub features: FeatureConfig,
    /// Hidden layer sizes; the input size is the feature count and the output a single unit.
    pub hidden: Vec<usize>,
}

impl SharedConfig {
    pub fn new(encoding: EncodingParams, dp: DpParams, train: TrainConfig, features: FeatureConfig) -> Self {
        SharedConfig { encoding, dp, train, features, hidden: DEFAULT_HIDDEN.to_vec() }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.features.dim()];
        dims.extend(&self.hidden);
        dims.push(1);
        dims
    }

    pub fn validate(&self) -> Result<()> {
        self.encoding.validate()?;
        self.train.validate()?;
        self.features.validate()?;
        if let Some(w) = &self.features.weights {
            if w.len() != self.encoding.l {
                return Err(Error::LengthMismatch { left: self.encoding.l, right: w.len() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalModel {
    pub party_id: String,
    pub model: NeuralModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalModel {
    pub model: NeuralModel,
    /// Contributing party ids, sorted.
    pub contributors: Vec<String>,
    pub round: usize,
}

/// Feature vectors and labels for the party's training pairs, with noise applied.
///
/// Pair `i` perturbs its left filter with record index `2i` and its right one with `2i + 1`.
pub fn training_examples(party: &PartyState, shared: &SharedConfig) -> Result<Vec<Example>> {
    if party.training_pairs.is_empty() {
        return Err(Error::Data(format!("party {} has an empty training set", party.party_id)));
    }
    let index = party.dataset.index();
    let lookup = |id: &str| {
        index.get(id).map(|&i| &party.dataset.records[i]).ok_or_else(|| {
            Error::Data(format!("party {}: training pair references unknown rec_id {id}", party.party_id))
        })
    };
    let seed = shared.dp.noise_seed;
    party
        .training_pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| {
            let x = gen_bloom_filter(lookup(&pair.id_a)?, &shared.encoding)?;
            let y = gen_bloom_filter(lookup(&pair.id_b)?, &shared.encoding)?;
            let x = add_dp_noise(&x, &shared.dp, NoiseStream::new(seed, 2 * i as u64));
            let y = add_dp_noise(&y, &shared.dp, NoiseStream::new(seed, 2 * i as u64 + 1));
            let features = feature_vector(&x, &y, &shared.features)?.values;
            Ok(Example { features, label: pair.label.as_f64() })
        })
        .collect()
}

/// Trains one owner's local model from its own data only.
pub fn run_local_training(party: &PartyState, shared: &SharedConfig) -> Result<NeuralModel> {
    shared.validate()?;
    let examples = training_examples(party, shared)?;
    let init = init_model(&shared.dims(), shared.features.names(), shared.train.init_seed)?;
    train_model(&examples, &shared.train, &init)
}

/// Entrywise unweighted mean of the local models.
///
/// Models are combined in party-id order as `first + Σ (m - first) / d`, so the
/// result does not depend on the order of `models` and averaging identical
/// models reproduces them exactly.
pub fn aggregate(models: &[LocalModel]) -> Result<GlobalModel> {
    let mut sorted: Vec<&LocalModel> = models.iter().collect();
    sorted.sort_by(|a, b| a.party_id.cmp(&b.party_id));
    let first = sorted.first().ok_or_else(|| Error::Data("no local models to aggregate".into()))?;
    let mut seen = HashSet::new();
    for m in &sorted {
        if !seen.insert(m.party_id.as_str()) {
            return Err(Error::Data(format!("party {} contributed twice", m.party_id)));
        }
        m.model.validate()?;
        if m.model.dims() != first.model.dims() {
            return Err(Error::Config(format!(
                "party {} has dims {:?}, expected {:?}",
                m.party_id,
                m.model.dims(),
                first.model.dims()
            )));
        }
        if m.model.feature_order != first.model.feature_order {
            return Err(Error::Config(format!("party {} uses a different feature order", m.party_id)));
        }
        if m.model.fingerprint != first.model.fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: first.model.fingerprint.clone().unwrap_or_default(),
                actual: m.model.fingerprint.clone().unwrap_or_default(),
            });
        }
    }

    let d = sorted.len() as f64;
    let mut global = first.model.clone();
    for (li, layer) in global.layers.iter_mut().enumerate() {
        let base = &first.model.layers[li];
        let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
        for (j, p) in params.enumerate() {
            let at = |m: &LocalModel| {
                let l = &m.model.layers[li];
                if j < l.weights.len() { l.weights[j] } else { l.bias[j - l.weights.len()] }
            };
            let origin = if j < base.weights.len() { base.weights[j] } else { base.bias[j - base.weights.len()] };
            let shift: f64 = sorted.iter().map(|m| at(m) - origin).sum();
            *p = origin + shift / d;
        }
    }
    global.train_meta = first.model.train_meta;
    Ok(GlobalModel {
        model: global,
        contributors: sorted.iter().map(|m| m.party_id.clone()).collect(),
        round: 1,
    })
}

/// Result of one training phase: what each owner sent to the aggregator and the global model.
#[derive(Debug, Clone, PartialEq)]
pub struct FederatedRun {
    pub local_models: Vec<LocalModel>,
    pub global: GlobalModel,
}

/// Trains every party independently (in parallel) and averages the local models.
///
/// `party_shared` yields each party's configuration; all of them must agree on
/// everything except the noise and shuffle seeds.
pub fn run_protocol_training<F>(parties: &[PartyState], party_shared: F) -> Result<FederatedRun>
where
    F: Fn(&PartyState) -> SharedConfig + Sync,
{
    if parties.len() < 2 {
        return Err(Error::Config(format!("federated training needs at least 2 parties, got {}", parties.len())));
    }
    let configs: Vec<SharedConfig> = parties.iter().map(&party_shared).collect();
    let reference = &configs[0];
    for (party, cfg) in parties.iter().zip(&configs) {
        let agrees = cfg.encoding == reference.encoding
            && cfg.features == reference.features
            && cfg.hidden == reference.hidden
            && cfg.dp.mechanism == reference.dp.mechanism
            && cfg.dp.p == reference.dp.p
            && TrainConfig { shuffle_seed: 0, ..cfg.train } == TrainConfig { shuffle_seed: 0, ..reference.train };
        if !agrees {
            return Err(Error::Config(format!("party {} disagrees on the shared parameters", party.party_id)));
        }
    }
    let local_models = parties
        .par_iter()
        .zip(&configs)
        .map(|(party, cfg)| {
            run_local_training(party, cfg).map(|model| LocalModel { party_id: party.party_id.clone(), model })
        })
        .collect::<Result<Vec<_>>>()?;
    let global = aggregate(&local_models)?;
    Ok(FederatedRun { local_models, global })
}
