//! End-to-end runs: synthetic data, encoding with noise, federated training,
//! blocking and classification, and evaluation, either in memory or through
//! artifact files in an output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::attack::{bf_frequencies, pattern_truth, run_attack, skewed_dataset, value_frequencies};
use crate::config::RunConfig;
use crate::data::{
    generate_synthetic, generate_training_set, load_dataset, load_pairs, party_name, save_dataset, save_pairs, Dataset,
    SyntheticData, TrainingSet,
};
use crate::dp::{perturb_database, DpParams};
use crate::encoding::{encode_dataset, max_qgrams, EncodedDatabase, EncodingParams};
use crate::error::{Error, Result};
use crate::federation::{run_protocol_training, FederatedRun, PartyState, SharedConfig};
use crate::linkage::{
    all_pairs, classify_pairs, classify_threshold, evaluate, gen_blocks, CandidatePair, MatchSet, QualityReport,
};
use crate::nn::NeuralModel;
use crate::seeds::derive_seed;

/// Privacy parameters reported with every result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrivacySummary {
    pub mechanism: crate::dp::Mechanism,
    /// `None` when no noise is added (infinite budget).
    pub epsilon: Option<f64>,
    pub p: f64,
    pub n: usize,
    pub k: usize,
}

impl From<&DpParams> for PrivacySummary {
    fn from(dp: &DpParams) -> Self {
        PrivacySummary {
            mechanism: dp.mechanism,
            epsilon: dp.epsilon.is_finite().then_some(dp.epsilon),
            p: dp.effective_p(),
            n: dp.n,
            k: dp.k,
        }
    }
}

/// Wall-clock seconds per phase, in execution order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timings(pub Vec<(String, f64)>);

impl Serialize for Timings {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_map(self.0.iter().map(|(k, v)| (k, v)))
    }
}

impl Timings {
    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        self.0.push((phase.to_owned(), start.elapsed().as_secs_f64()));
        Ok(out)
    }

    pub fn total(&self) -> f64 {
        self.0.iter().map(|(_, s)| s).sum()
    }
}

/// Linkage data for every party plus each party's training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesized {
    pub linkage: SyntheticData,
    pub training: Vec<TrainingSet>,
}

pub fn synthesize(cfg: &RunConfig) -> Result<Synthesized> {
    let spec = cfg.synth_spec();
    let linkage = generate_synthetic(&spec, cfg.parties.count)?;
    let training = (0..cfg.parties.count)
        .map(|p| generate_training_set(&spec, p, cfg.data.training_pairs))
        .collect::<Result<Vec<_>>>()?;
    Ok(Synthesized { linkage, training })
}

/// Largest q-gram count of any record in `datasets`, the `n` of the privacy budget.
pub fn measure_max_qgrams<'a>(cfg: &RunConfig, datasets: impl IntoIterator<Item = &'a Dataset>) -> Result<usize> {
    let enc = cfg.encoding_params();
    datasets.into_iter().try_fold(1, |acc, d| max_qgrams(d, &enc).map(|n| acc.max(n)))
}

/// Each party's training state, keeping `parties.sample_fraction` of its pairs.
pub fn training_parties(cfg: &RunConfig, training: &[TrainingSet]) -> Vec<PartyState> {
    training
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let party_id = party_name(i);
            let keep = ((t.pairs.len() as f64 * cfg.parties.sample_fraction).round() as usize).max(1);
            let training_pairs = if keep >= t.pairs.len() {
                t.pairs.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed(&format!("parties/sample/{party_id}")));
                let mut idx = sample(&mut rng, t.pairs.len(), keep).into_vec();
                idx.sort_unstable();
                idx.into_iter().map(|j| t.pairs[j].clone()).collect()
            };
            PartyState { party_id, dataset: t.dataset.clone(), training_pairs }
        })
        .collect()
}

/// Encodes and perturbs one party's linkage database.
pub fn encode_party(cfg: &RunConfig, dataset: &Dataset, n: usize) -> Result<(EncodedDatabase, DpParams)> {
    let dp = cfg.dp_params(n, &format!("dp/link/{}", dataset.name))?;
    let clean = encode_dataset(dataset, &cfg.encoding_params())?;
    let noisy = perturb_database(&clean, &dp).with_fingerprint(cfg.fingerprint());
    Ok((noisy, dp))
}

/// Trains all local models and the global model.
pub fn train_parties(cfg: &RunConfig, parties: &[PartyState], n: usize) -> Result<FederatedRun> {
    let base = SharedConfig {
        encoding: cfg.encoding_params(),
        dp: cfg.dp_params(n, "dp/train")?,
        train: cfg.train_config(),
        features: cfg.features.clone(),
        hidden: cfg.nn.hidden.clone(),
    };
    let fingerprint = cfg.fingerprint();
    let mut run = run_protocol_training(parties, |p| {
        let mut shared = base.clone();
        shared.dp.noise_seed = derive_seed(base.dp.noise_seed, &p.party_id);
        shared.train.shuffle_seed = derive_seed(base.train.shuffle_seed, &p.party_id);
        shared
    })?;
    for local in &mut run.local_models {
        local.model.fingerprint = Some(fingerprint.clone());
    }
    run.global.model.fingerprint = Some(fingerprint);
    Ok(run)
}

/// Candidates and both classifiers' matches for one pair of databases.
#[derive(Debug, Clone, PartialEq)]
pub struct Linked {
    pub candidates: Vec<CandidatePair>,
    pub dl: MatchSet,
    pub baseline: MatchSet,
}

pub fn link_databases(cfg: &RunConfig, a: &EncodedDatabase, b: &EncodedDatabase, model: &NeuralModel) -> Result<Linked> {
    let candidates =
        if cfg.blocking.enabled { gen_blocks(a, b, &cfg.blocking_params())? } else { all_pairs(a, b) };
    let mut dl = classify_pairs(&candidates, a, b, model, &cfg.features)?;
    let mut baseline = classify_threshold(&candidates, a, b, cfg.threshold_baseline.threshold)?;
    dl.fingerprint = Some(cfg.fingerprint());
    baseline.fingerprint = Some(cfg.fingerprint());
    Ok(Linked { candidates, dl, baseline })
}

/// Summary of one in-memory run over all database pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Experiment {
    pub privacy: PrivacySummary,
    pub parties: usize,
    pub candidates: usize,
    pub dl: QualityReport,
    pub baseline: QualityReport,
    pub timings: Timings,
}

/// Runs synthesis, encoding, training, linkage of every party pair and evaluation in memory.
pub fn run_experiment(cfg: &RunConfig) -> Result<Experiment> {
    cfg.validate()?;
    let mut timings = Timings::default();
    let synth = timings.time("synth", || synthesize(cfg))?;
    let n = measure_max_qgrams(
        cfg,
        synth.linkage.datasets.iter().chain(synth.training.iter().map(|t| &t.dataset)),
    )?;
    let encoded = timings.time("encode", || {
        synth.linkage.datasets.iter().map(|d| encode_party(cfg, d, n)).collect::<Result<Vec<_>>>()
    })?;
    let parties = training_parties(cfg, &synth.training);
    let run = timings.time("train", || train_parties(cfg, &parties, n))?;
    let (mut dl, mut baseline, mut candidates) = (Vec::new(), Vec::new(), 0);
    timings.time("link", || {
        for truth in &synth.linkage.ground_truth {
            let (a, b) = (&encoded[truth.party_a].0, &encoded[truth.party_b].0);
            let linked = link_databases(cfg, a, b, &run.global.model)?;
            candidates += linked.candidates.len();
            dl.push(evaluate(&linked.dl, &truth.pairs, None));
            baseline.push(evaluate(&linked.baseline, &truth.pairs, None));
        }
        Ok(())
    })?;
    Ok(Experiment {
        privacy: PrivacySummary::from(&encoded[0].1),
        parties: cfg.parties.count,
        candidates,
        dl: QualityReport::combine(&dl),
        baseline: QualityReport::combine(&baseline),
        timings,
    })
}

// ---------------------------------------------------------------------------
// Artifact-based phases

/// File locations under the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn dataset(&self, party: usize) -> PathBuf {
        self.root.join("data").join(format!("{}.csv", party_name(party)))
    }

    pub fn truth(&self, a: usize, b: usize) -> PathBuf {
        self.root.join("data").join(format!("truth_{}_{}.csv", party_name(a), party_name(b)))
    }

    pub fn training_records(&self, party: usize) -> PathBuf {
        self.root.join("data").join(format!("train_{}.csv", party_name(party)))
    }

    pub fn training_pairs(&self, party: usize) -> PathBuf {
        self.root.join("data").join(format!("train_pairs_{}.csv", party_name(party)))
    }

    pub fn encoded(&self, party: usize) -> PathBuf {
        self.root.join("encoded").join(format!("{}.csv", party_name(party)))
    }

    pub fn local_model(&self, party: usize) -> PathBuf {
        self.root.join("models").join(format!("local_{}.json", party_name(party)))
    }

    pub fn global_model(&self) -> PathBuf {
        self.root.join("models").join("global.json")
    }

    pub fn matches(&self, classifier: &str, a: usize, b: usize) -> PathBuf {
        self.root.join("links").join(format!("{classifier}_{}_{}.csv", party_name(a), party_name(b)))
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(name)
    }

    pub fn attack_file(&self, name: &str) -> PathBuf {
        self.root.join("attack").join(name)
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn require(path: &Path) -> Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact(path.to_path_buf()))
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn check_fingerprint(expected: &str, actual: Option<&str>) -> Result<()> {
    match actual {
        Some(fp) if fp == expected => Ok(()),
        other => Err(Error::FingerprintMismatch {
            expected: expected.to_owned(),
            actual: other.unwrap_or("none").to_owned(),
        }),
    }
}

fn pairs_of(count: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..count).flat_map(move |a| (a + 1..count).map(move |b| (a, b)))
}

fn rel(layout: &Layout, path: &Path) -> String {
    path.strip_prefix(&layout.root).unwrap_or(path).display().to_string()
}

fn load_linkage_data(cfg: &RunConfig, layout: &Layout) -> Result<Vec<Dataset>> {
    let schema = cfg.synth_spec().schema();
    (0..cfg.parties.count).map(|p| load_dataset(require(&layout.dataset(p))?, &schema)).collect()
}

fn load_training_data(cfg: &RunConfig, layout: &Layout) -> Result<Vec<TrainingSet>> {
    let schema = cfg.synth_spec().schema();
    (0..cfg.parties.count)
        .map(|p| {
            let mut dataset = load_dataset(require(&layout.training_records(p))?, &schema)?;
            dataset.name = party_name(p);
            let pairs = load_pairs(require(&layout.training_pairs(p))?)?;
            Ok(TrainingSet { dataset, pairs })
        })
        .collect()
}

/// `n` over every plaintext file the parties hold.
fn measured_n(cfg: &RunConfig, linkage: &[Dataset], training: &[TrainingSet]) -> Result<usize> {
    measure_max_qgrams(cfg, linkage.iter().chain(training.iter().map(|t| &t.dataset)))
}

/// Writes every party's linkage data, the pairwise ground truth and the training sets.
pub fn cmd_synth(cfg: &RunConfig) -> Result<Value> {
    let layout = Layout::new(&cfg.output_dir);
    let mut timings = Timings::default();
    let synth = timings.time("synth", || synthesize(cfg))?;
    let mut files = Vec::new();
    timings.time("write", || {
        for (p, d) in synth.linkage.datasets.iter().enumerate() {
            let path = layout.dataset(p);
            ensure_parent(&path)?;
            save_dataset(d, &path)?;
            files.push(rel(&layout, &path));
        }
        for t in &synth.linkage.ground_truth {
            let path = layout.truth(t.party_a, t.party_b);
            save_pairs(&t.pairs, &path)?;
            files.push(rel(&layout, &path));
        }
        for (p, t) in synth.training.iter().enumerate() {
            let (records, pairs) = (layout.training_records(p), layout.training_pairs(p));
            save_dataset(&t.dataset, &records)?;
            save_pairs(&t.pairs, &pairs)?;
            files.extend([rel(&layout, &records), rel(&layout, &pairs)]);
        }
        Ok(())
    })?;
    Ok(json!({
        "command": "synth",
        "parties": cfg.parties.count,
        "records_per_party": cfg.data.num_records,
        "true_matches_per_pair": cfg.synth_spec().num_matches(),
        "training_pairs_per_party": cfg.data.training_pairs,
        "files": files,
        "timings": timings,
    }))
}

/// Encodes and perturbs every party's linkage database.
pub fn cmd_encode(cfg: &RunConfig) -> Result<Value> {
    let layout = Layout::new(&cfg.output_dir);
    let mut timings = Timings::default();
    let (linkage, training) =
        timings.time("load", || Ok((load_linkage_data(cfg, &layout)?, load_training_data(cfg, &layout)?)))?;
    let n = measured_n(cfg, &linkage, &training)?;
    let mut privacy = None;
    let mut files = Vec::new();
    timings.time("encode", || {
        for (p, d) in linkage.iter().enumerate() {
            let (db, dp) = encode_party(cfg, d, n)?;
            let path = layout.encoded(p);
            ensure_parent(&path)?;
            db.save(&path)?;
            files.push(rel(&layout, &path));
            privacy = Some(PrivacySummary::from(&dp));
        }
        Ok(())
    })?;
    Ok(json!({
        "command": "encode",
        "fingerprint": cfg.fingerprint(),
        "privacy": privacy,
        "files": files,
        "timings": timings,
    }))
}

/// Trains each party's local model on its own training data and writes the averaged global model.
pub fn cmd_train(cfg: &RunConfig) -> Result<Value> {
    let layout = Layout::new(&cfg.output_dir);
    let mut timings = Timings::default();
    let (linkage, training) =
        timings.time("load", || Ok((load_linkage_data(cfg, &layout)?, load_training_data(cfg, &layout)?)))?;
    let n = measured_n(cfg, &linkage, &training)?;
    let parties = training_parties(cfg, &training);
    let run = timings.time("train", || train_parties(cfg, &parties, n))?;
    let mut files = Vec::new();
    for (p, local) in run.local_models.iter().enumerate() {
        let path = layout.local_model(p);
        ensure_parent(&path)?;
        local.model.save(&path)?;
        files.push(rel(&layout, &path));
    }
    run.global.model.save(layout.global_model())?;
    files.push(rel(&layout, &layout.global_model()));
    let dp = cfg.dp_params(n, "dp/train")?;
    Ok(json!({
        "command": "train",
        "fingerprint": cfg.fingerprint(),
        "privacy": PrivacySummary::from(&dp),
        "dims": run.global.model.dims(),
        "contributors": run.global.contributors,
        "round": run.global.round,
        "training_pairs": parties.iter().map(|p| p.training_pairs.len()).collect::<Vec<_>>(),
        "files": files,
        "timings": timings,
    }))
}

/// Blocks and classifies every pair of encoded databases with the global model and the baseline.
pub fn cmd_link(cfg: &RunConfig) -> Result<Value> {
    let layout = Layout::new(&cfg.output_dir);
    let fingerprint = cfg.fingerprint();
    let mut timings = Timings::default();
    let (encoded, model) = timings.time("load", || {
        let model = NeuralModel::load(require(&layout.global_model())?)?;
        check_fingerprint(&fingerprint, model.fingerprint.as_deref())?;
        let encoded = (0..cfg.parties.count)
            .map(|p| {
                let db = EncodedDatabase::load(layout.encoded(p))?;
                check_fingerprint(&fingerprint, db.fingerprint.as_deref())?;
                Ok(db)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((encoded, model))
    })?;
    let mut rows = Vec::new();
    timings.time("link", || {
        for (a, b) in pairs_of(cfg.parties.count) {
            let linked = link_databases(cfg, &encoded[a], &encoded[b], &model)?;
            let (dl_path, base_path) = (layout.matches("dl", a, b), layout.matches("baseline", a, b));
            ensure_parent(&dl_path)?;
            linked.dl.save(&dl_path)?;
            linked.baseline.save(&base_path)?;
            rows.push(json!({
                "party_a": party_name(a),
                "party_b": party_name(b),
                "candidates": linked.candidates.len(),
                "dl_matches": linked.dl.len(),
                "baseline_matches": linked.baseline.len(),
                "files": [rel(&layout, &dl_path), rel(&layout, &base_path)],
            }));
        }
        Ok(())
    })?;
    Ok(json!({
        "command": "link",
        "fingerprint": fingerprint,
        "blocking": if cfg.blocking.enabled { Some(cfg.blocking_params()) } else { None },
        "threshold": cfg.threshold_baseline.threshold,
        "pairs": rows,
        "timings": timings,
    }))
}

/// Aligned text table of several reports side by side.
pub fn comparison_table(reports: &[(&str, QualityReport)]) -> String {
    let mut out = format!("{:<10}", "metric");
    for (name, _) in reports {
        out.push_str(&format!(" {name:>10}"));
    }
    out.push('\n');
    let counts: [(&str, fn(&QualityReport) -> usize); 3] =
        [("tp", |r| r.tp), ("fp", |r| r.fp), ("fn", |r| r.fn_)];
    for (metric, get) in counts {
        out.push_str(&format!("{metric:<10}"));
        for (_, r) in reports {
            out.push_str(&format!(" {:>10}", get(r)));
        }
        out.push('\n');
    }
    let rates: [(&str, fn(&QualityReport) -> f64); 4] = [
        ("precision", |r| r.precision),
        ("recall", |r| r.recall),
        ("f_measure", |r| r.f_measure),
        ("f_star", |r| r.f_star),
    ];
    for (metric, get) in rates {
        out.push_str(&format!("{metric:<10}"));
        for (_, r) in reports {
            out.push_str(&format!(" {:>10.4}", get(r)));
        }
        out.push('\n');
    }
    out
}

/// Quality of both classifiers over every database pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub dl: QualityReport,
    pub baseline: QualityReport,
    pub per_pair: Vec<PairEvaluation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairEvaluation {
    pub party_a: String,
    pub party_b: String,
    pub dl: QualityReport,
    pub baseline: QualityReport,
}

/// Scores the written match files against the ground truth; returns the summary and a text table.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<(Value, String)> {
    let layout = Layout::new(&cfg.output_dir);
    let fingerprint = cfg.fingerprint();
    let mut timings = Timings::default();
    let evaluation = timings.time("evaluate", || {
        let mut per_pair = Vec::new();
        for (a, b) in pairs_of(cfg.parties.count) {
            let truth = load_pairs(require(&layout.truth(a, b))?)?;
            let score = |classifier: &str| -> Result<QualityReport> {
                let matches = MatchSet::load(layout.matches(classifier, a, b))?;
                check_fingerprint(&fingerprint, matches.fingerprint.as_deref())?;
                Ok(evaluate(&matches, &truth, None))
            };
            per_pair.push(PairEvaluation {
                party_a: party_name(a),
                party_b: party_name(b),
                dl: score("dl")?,
                baseline: score("baseline")?,
            });
        }
        let dl = QualityReport::combine(&per_pair.iter().map(|p| p.dl).collect::<Vec<_>>());
        let baseline = QualityReport::combine(&per_pair.iter().map(|p| p.baseline).collect::<Vec<_>>());
        Ok(Evaluation { dl, baseline, per_pair })
    })?;
    let report_path = layout.report("evaluate.json");
    write_json(&report_path, &evaluation)?;
    let table = comparison_table(&[("dl", evaluation.dl), ("baseline", evaluation.baseline)]);
    let summary = json!({
        "command": "evaluate",
        "fingerprint": fingerprint,
        "dl": evaluation.dl,
        "baseline": evaluation.baseline,
        "per_pair": evaluation.per_pair,
        "files": [rel(&layout, &report_path)],
        "timings": timings,
    });
    Ok((summary, table))
}

/// Inputs of the attack phase; absent files are generated from the config.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttackInputs {
    /// Encoded database under attack.
    pub encoded: Option<PathBuf>,
    /// Plaintext records behind `encoded`, used only to score guesses.
    pub source: Option<PathBuf>,
    /// Public plaintext database the attacker aligns against.
    pub public: Option<PathBuf>,
}

/// Writes the skewed target, its noisy encoding and an independent public sample.
fn prepare_attack_files(cfg: &RunConfig, layout: &Layout) -> Result<(PathBuf, PathBuf, PathBuf)> {
    let attrs = &cfg.attack.attributes;
    let target = skewed_dataset(cfg.attack.num_records, cfg.seed("attack/target"));
    let public = skewed_dataset(cfg.attack.num_records, cfg.seed("attack/public"));
    if let Some(a) = attrs.iter().find(|a| !target.schema.contains(a)) {
        return Err(Error::Config(format!("attack attribute `{a}` is not in the generated data")));
    }
    let enc = EncodingParams { attributes: attrs.clone(), ..cfg.encoding_params() };
    let n = max_qgrams(&target, &enc)?.max(1);
    let dp = cfg.dp_params(n, "dp/attack")?;
    let encoded = perturb_database(&encode_dataset(&target, &enc)?, &dp);
    let paths = (layout.attack_file("encoded.csv"), layout.attack_file("target.csv"), layout.attack_file("public.csv"));
    ensure_parent(&paths.0)?;
    encoded.save(&paths.0)?;
    save_dataset(&target, &paths.1)?;
    save_dataset(&public, &paths.2)?;
    Ok(paths)
}

/// Frequency attack for every configured `top_k`.
pub fn cmd_attack(cfg: &RunConfig, inputs: &AttackInputs) -> Result<Value> {
    let layout = Layout::new(&cfg.output_dir);
    let attrs = &cfg.attack.attributes;
    let mut timings = Timings::default();
    let (encoded_path, source_path, public_path) = match inputs {
        AttackInputs { encoded: None, source: None, public: None } => {
            timings.time("prepare", || prepare_attack_files(cfg, &layout))?
        }
        AttackInputs { encoded: Some(e), source: Some(s), public: Some(p) } => (e.clone(), s.clone(), p.clone()),
        _ => return Err(Error::Config("give all of --encoded, --source and --public, or none".into())),
    };
    let reports = timings.time("attack", || {
        let encoded = EncodedDatabase::load(&encoded_path)?;
        let source = load_dataset(require(&source_path)?, attrs)?;
        let public = load_dataset(require(&public_path)?, attrs)?;
        let truth = pattern_truth(&encoded, &source, attrs)?;
        let bf_table = bf_frequencies(&encoded);
        let value_table = value_frequencies(&public, attrs)?;
        cfg.attack.top_k.iter().map(|&k| run_attack(&bf_table, &value_table, k, &truth)).collect::<Result<Vec<_>>>()
    })?;
    let report_path = layout.report("attack.json");
    write_json(&report_path, &reports)?;
    let privacy = if inputs.encoded.is_none() {
        let target = load_dataset(&source_path, attrs)?;
        let enc = EncodingParams { attributes: attrs.clone(), ..cfg.encoding_params() };
        Some(PrivacySummary::from(&cfg.dp_params(max_qgrams(&target, &enc)?.max(1), "dp/attack")?))
    } else {
        None
    };
    Ok(json!({
        "command": "attack",
        "attributes": attrs,
        "privacy": privacy,
        "encoded": encoded_path.display().to_string(),
        "public": public_path.display().to_string(),
        "reports": reports,
        "files": [rel(&layout, &report_path)],
        "timings": timings,
    }))
}

/// One row of the parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub sweep: String,
    pub value: f64,
    pub epsilon: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub f_star: f64,
    pub baseline_f_measure: f64,
    pub runtime_seconds: f64,
}

impl AblationRow {
    fn new(sweep: &str, value: f64, e: &Experiment) -> Self {
        AblationRow {
            sweep: sweep.to_owned(),
            value,
            epsilon: e.privacy.epsilon,
            precision: e.dl.precision,
            recall: e.dl.recall,
            f_measure: e.dl.f_measure,
            f_star: e.dl.f_star,
            baseline_f_measure: e.baseline.f_measure,
            runtime_seconds: e.timings.total(),
        }
    }
}

/// Sweeps the flip probability, the number of hash functions and the number of parties.
pub fn run_ablation(cfg: &RunConfig) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for &p in &cfg.ablation.p_values {
        let mut c = cfg.clone();
        c.dp.p = Some(p);
        c.dp.epsilon = None;
        rows.push(AblationRow::new("p", p, &run_experiment(&c)?));
    }
    for &k in &cfg.ablation.k_values {
        let mut c = cfg.clone();
        c.encoding.k = k;
        rows.push(AblationRow::new("k", k as f64, &run_experiment(&c)?));
    }
    for &parties in &cfg.ablation.party_counts {
        let mut c = cfg.clone();
        c.parties.count = parties;
        rows.push(AblationRow::new("parties", parties as f64, &run_experiment(&c)?));
    }
    Ok(rows)
}

/// Runs the sweep and writes it as CSV.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<Value> {
    let layout = Layout::new(&cfg.output_dir);
    let mut timings = Timings::default();
    let rows = timings.time("ablate", || run_ablation(cfg))?;
    let path = layout.report("ablation.csv");
    ensure_parent(&path)?;
    let mut writer = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    for row in &rows {
        writer.serialize(row).map_err(|e| Error::csv(&path, e))?;
    }
    writer.flush().map_err(|e| Error::io(&path, e))?;
    Ok(json!({
        "command": "ablate",
        "rows": rows,
        "files": [rel(&layout, &path)],
        "timings": timings,
    }))
}
