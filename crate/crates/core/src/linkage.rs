//! Linkage-unit side: Hamming-LSH blocking, classification of candidate pairs
//! with the global model or a Dice threshold, and linkage-quality metrics.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Label, LabeledPair};
use crate::encoding::{dice, BloomFilter, EncodedDatabase};
use crate::error::{Error, Result};
use crate::features::{feature_vector, FeatureConfig};
use crate::nn::{NeuralModel, MATCH_THRESHOLD};
use crate::seeds::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockingParams {
    /// Number of hash tables (μ).
    pub num_tables: usize,
    /// Sampled bit positions per key (λ).
    pub bits_per_key: usize,
    pub block_seed: u64,
}

impl Default for BlockingParams {
    fn default() -> Self {
        BlockingParams { num_tables: 30, bits_per_key: 10, block_seed: 0 }
    }
}

impl BlockingParams {
    pub fn validate(&self, l: usize) -> Result<()> {
        if self.num_tables == 0 || self.bits_per_key == 0 {
            return Err(Error::Config("blocking needs num_tables >= 1 and bits_per_key >= 1".into()));
        }
        if self.bits_per_key > l {
            return Err(Error::Config(format!(
                "bits_per_key {} exceeds filter length {l}",
                self.bits_per_key
            )));
        }
        Ok(())
    }

    /// Sampled bit positions of table `t`, in ascending order.
    pub fn table_positions(&self, t: usize, l: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.block_seed, &format!("table/{t}")));
        let mut positions = rand::seq::index::sample(&mut rng, l, self.bits_per_key).into_vec();
        positions.sort_unstable();
        positions
    }
}

/// Entry indices of a pair of records, one from each database.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CandidatePair {
    pub a: usize,
    pub b: usize,
}

fn blocking_key(bf: &BloomFilter, positions: &[usize]) -> Vec<u64> {
    let mut key = vec![0u64; positions.len().div_ceil(64)];
    for (j, &p) in positions.iter().enumerate() {
        if bf.get(p) {
            key[j / 64] |= 1 << (j % 64);
        }
    }
    key
}

fn check_lengths(a: &EncodedDatabase, b: &EncodedDatabase) -> Result<usize> {
    match (a.bf_len(), b.bf_len()) {
        (Some(x), Some(y)) if x != y => Err(Error::LengthMismatch { left: x, right: y }),
        (Some(x), _) | (_, Some(x)) => Ok(x),
        (None, None) => Ok(0),
    }
}

/// Candidate pairs sharing a blocking key in at least one table, sorted and deduplicated.
pub fn gen_blocks(a: &EncodedDatabase, b: &EncodedDatabase, bp: &BlockingParams) -> Result<Vec<CandidatePair>> {
    let l = check_lengths(a, b)?;
    if a.is_empty() || b.is_empty() {
        return Ok(Vec::new());
    }
    bp.validate(l)?;
    let per_table: Vec<Vec<CandidatePair>> = (0..bp.num_tables)
        .into_par_iter()
        .map(|t| {
            let positions = bp.table_positions(t, l);
            let mut buckets: HashMap<Vec<u64>, Vec<usize>> = HashMap::new();
            for (j, (_, bf)) in b.entries.iter().enumerate() {
                buckets.entry(blocking_key(bf, &positions)).or_default().push(j);
            }
            let mut pairs = Vec::new();
            for (i, (_, bf)) in a.entries.iter().enumerate() {
                if let Some(js) = buckets.get(&blocking_key(bf, &positions)) {
                    pairs.extend(js.iter().map(|&j| CandidatePair { a: i, b: j }));
                }
            }
            pairs
        })
        .collect();
    let mut all: Vec<CandidatePair> = per_table.into_iter().flatten().collect();
    all.par_sort_unstable();
    all.dedup();
    Ok(all)
}

/// Every cross-database pair, for runs without blocking.
pub fn all_pairs(a: &EncodedDatabase, b: &EncodedDatabase) -> Vec<CandidatePair> {
    (0..a.len()).flat_map(|i| (0..b.len()).map(move |j| CandidatePair { a: i, b: j })).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub id_a: String,
    pub id_b: String,
    pub score: f64,
}

/// Pairs classified as matches, in candidate order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchSet {
    pub pairs: Vec<ScoredPair>,
    pub fingerprint: Option<String>,
}

const FINGERPRINT_PREFIX: &str = "# fingerprint=";
const MATCH_HEADER: &str = "rec_id_a,rec_id_b,score";

impl MatchSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, id_a: &str, id_b: &str) -> bool {
        self.pairs.iter().any(|p| p.id_a == id_a && p.id_b == id_b)
    }

    /// Writes `rec_id_a,rec_id_b,score`, preceded by a `# fingerprint=` line when one is set.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            if let Some(fp) = &self.fingerprint {
                writeln!(out, "{FINGERPRINT_PREFIX}{fp}")?;
            }
            writeln!(out, "{MATCH_HEADER}")?;
            for p in &self.pairs {
                writeln!(out, "{},{},{}", p.id_a, p.id_b, p.score)?;
            }
            out.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let mut fingerprint = None;
        let mut pairs = Vec::new();
        let mut header_seen = false;
        let mut n = 0;
        while let Some(line) = lines.next() {
            n += 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim_end();
            if let Some(fp) = line.strip_prefix(FINGERPRINT_PREFIX) {
                fingerprint = Some(fp.to_owned());
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                if line != MATCH_HEADER {
                    return Err(Error::Data(format!("{}: expected header {MATCH_HEADER}", path.display())));
                }
                header_seen = true;
                continue;
            }
            let bad = || Error::Data(format!("{}: line {n}: expected rec_id_a,rec_id_b,score", path.display()));
            let mut fields = line.split(',');
            let (Some(id_a), Some(id_b), Some(score), None) = (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(bad());
            };
            let score = score.parse().map_err(|_| bad())?;
            pairs.push(ScoredPair { id_a: id_a.to_owned(), id_b: id_b.to_owned(), score });
        }
        if !header_seen {
            return Err(Error::Data(format!("{}: missing header {MATCH_HEADER}", path.display())));
        }
        Ok(MatchSet { pairs, fingerprint })
    }
}

fn entries<'a>(
    c: &CandidatePair,
    a: &'a EncodedDatabase,
    b: &'a EncodedDatabase,
) -> Result<(&'a (String, BloomFilter), &'a (String, BloomFilter))> {
    let x = a.entries.get(c.a).ok_or_else(|| Error::Data(format!("candidate index {} outside {}", c.a, a.party_id)))?;
    let y = b.entries.get(c.b).ok_or_else(|| Error::Data(format!("candidate index {} outside {}", c.b, b.party_id)))?;
    Ok((x, y))
}

fn keep_scored<F>(candidates: &[CandidatePair], a: &EncodedDatabase, b: &EncodedDatabase, score: F) -> Result<MatchSet>
where
    F: Fn(&BloomFilter, &BloomFilter) -> Result<Option<f64>> + Sync,
{
    check_lengths(a, b)?;
    let scored = candidates
        .par_iter()
        .map(|c| {
            let ((ia, x), (ib, y)) = entries(c, a, b)?;
            Ok(score(x, y)?.map(|s| ScoredPair { id_a: ia.clone(), id_b: ib.clone(), score: s }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MatchSet { pairs: scored.into_iter().flatten().collect(), fingerprint: None })
}

/// Scores every candidate with the model; pairs with probability at least 0.5 are matches.
pub fn classify_pairs(
    candidates: &[CandidatePair],
    a: &EncodedDatabase,
    b: &EncodedDatabase,
    model: &NeuralModel,
    features: &FeatureConfig,
) -> Result<MatchSet> {
    if model.feature_order != features.names() {
        return Err(Error::Config("model feature order differs from the configured features".into()));
    }
    keep_scored(candidates, a, b, |x, y| {
        let p = model.forward(&feature_vector(x, y, features)?.values)?;
        Ok((p >= MATCH_THRESHOLD).then_some(p))
    })
}

/// Baseline: a candidate is a match when its Dice coefficient is at least `t`.
pub fn classify_threshold(
    candidates: &[CandidatePair],
    a: &EncodedDatabase,
    b: &EncodedDatabase,
    t: f64,
) -> Result<MatchSet> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Config(format!("similarity threshold {t} outside [0, 1]")));
    }
    keep_scored(candidates, a, b, |x, y| {
        let s = dice(x, y)?;
        Ok((s >= t).then_some(s))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QualityReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub f_star: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl QualityReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        QualityReport {
            tp,
            fp,
            fn_,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f_measure: ratio(2 * tp, 2 * tp + fp + fn_),
            f_star: ratio(tp, tp + fp + fn_),
        }
    }

    /// Sums the counts of several reports, e.g. over all database pairs.
    pub fn combine(reports: &[QualityReport]) -> Self {
        let sum = |f: fn(&QualityReport) -> usize| reports.iter().map(f).sum();
        QualityReport::from_counts(sum(|r| r.tp), sum(|r| r.fp), sum(|r| r.fn_))
    }
}

impl fmt::Display for QualityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>10}", "metric", "value")?;
        for (name, v) in [("tp", self.tp), ("fp", self.fp), ("fn", self.fn_)] {
            writeln!(f, "{name:<10} {v:>10}")?;
        }
        for (name, v) in [
            ("precision", self.precision),
            ("recall", self.recall),
            ("f_measure", self.f_measure),
        ] {
            writeln!(f, "{name:<10} {v:>10.4}")?;
        }
        write!(f, "{:<10} {:>10.4}", "f_star", self.f_star)
    }
}

/// Scores `matches` against the true matches in `truth`.
///
/// With `within` set, only true matches that appear among those candidate id
/// pairs count as false negatives; otherwise every missed true match does.
pub fn evaluate(matches: &MatchSet, truth: &[LabeledPair], within: Option<&HashSet<(String, String)>>) -> QualityReport {
    let true_pairs: HashSet<(&str, &str)> = truth
        .iter()
        .filter(|p| p.label == Label::Match)
        .map(|p| (p.id_a.as_str(), p.id_b.as_str()))
        .collect();
    let predicted: HashSet<(&str, &str)> =
        matches.pairs.iter().map(|p| (p.id_a.as_str(), p.id_b.as_str())).collect();
    let tp = predicted.intersection(&true_pairs).count();
    let fp = predicted.len() - tp;
    let fn_ = true_pairs
        .iter()
        .filter(|p| !predicted.contains(*p))
        .filter(|(x, y)| within.is_none_or(|c| c.contains(&(x.to_string(), y.to_string()))))
        .count();
    QualityReport::from_counts(tp, fp, fn_)
}

/// Id pairs of the candidates, for [`evaluate`] restricted to the blocked pairs.
pub fn candidate_ids(candidates: &[CandidatePair], a: &EncodedDatabase, b: &EncodedDatabase) -> HashSet<(String, String)> {
    candidates
        .iter()
        .map(|c| (a.entries[c.a].0.clone(), b.entries[c.b].0.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_model, Layer};
    use proptest::prelude::*;
    use rand::Rng;

    fn db(name: &str, bfs: &[&str]) -> EncodedDatabase {
        let entries =
            bfs.iter().enumerate().map(|(i, s)| (format!("{name}{i}"), BloomFilter::from_bit_str(s).unwrap())).collect();
        EncodedDatabase::new(name, entries).unwrap()
    }

    fn random_db(name: &str, n: usize, l: usize, seed: u64) -> EncodedDatabase {
        // a few prototypes shared by every database, plus light noise, so blocks collide
        let mut proto_rng = ChaCha8Rng::seed_from_u64(0);
        let protos: Vec<Vec<bool>> = (0..5).map(|_| (0..l).map(|_| proto_rng.random_bool(0.3)).collect()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = (0..n)
            .map(|i| {
                let bits: Vec<bool> = protos[i % 5].iter().map(|&b| b ^ rng.random_bool(0.02)).collect();
                (format!("{name}{i}"), BloomFilter::from_bits(&bits))
            })
            .collect();
        EncodedDatabase::new(name, entries).unwrap()
    }

    fn brute_force_blocks(a: &EncodedDatabase, b: &EncodedDatabase, bp: &BlockingParams) -> Vec<CandidatePair> {
        let l = a.bf_len().unwrap();
        let mut out = std::collections::BTreeSet::new();
        for t in 0..bp.num_tables {
            let positions = bp.table_positions(t, l);
            let key = |bf: &BloomFilter| positions.iter().map(|&p| bf.get(p)).collect::<Vec<bool>>();
            let keys_a: Vec<_> = a.entries.iter().map(|(_, bf)| key(bf)).collect();
            let keys_b: Vec<_> = b.entries.iter().map(|(_, bf)| key(bf)).collect();
            for (i, ka) in keys_a.iter().enumerate() {
                for (j, kb) in keys_b.iter().enumerate() {
                    if ka == kb {
                        out.insert(CandidatePair { a: i, b: j });
                    }
                }
            }
        }
        out.into_iter().collect()
    }

    #[test]
    fn blocking_matches_brute_force() {
        let a = random_db("a", 60, 100, 1);
        let b = random_db("b", 50, 100, 2);
        for (mu, lambda) in [(1, 5), (4, 10), (8, 20), (3, 100)] {
            let bp = BlockingParams { num_tables: mu, bits_per_key: lambda, block_seed: 9 };
            let got = gen_blocks(&a, &b, &bp).unwrap();
            assert_eq!(got, brute_force_blocks(&a, &b, &bp), "mu={mu} lambda={lambda}");
            assert!(lambda == 100 || !got.is_empty());
        }
    }

    #[test]
    fn identical_filters_always_collide() {
        let a = db("a", &["10110", "00001", "11111"]);
        let b = db("b", &["00001", "10110", "01000"]);
        let bp = BlockingParams { num_tables: 3, bits_per_key: 2, block_seed: 4 };
        let c = gen_blocks(&a, &b, &bp).unwrap();
        assert!(c.contains(&CandidatePair { a: 0, b: 1 }));
        assert!(c.contains(&CandidatePair { a: 1, b: 0 }));
    }

    #[test]
    fn full_length_key_is_equality() {
        let a = random_db("a", 30, 40, 3);
        let b = random_db("b", 30, 40, 4);
        let bp = BlockingParams { num_tables: 1, bits_per_key: 40, block_seed: 0 };
        let expected: Vec<CandidatePair> = all_pairs(&a, &b)
            .into_iter()
            .filter(|c| a.entries[c.a].1 == b.entries[c.b].1)
            .collect();
        assert_eq!(gen_blocks(&a, &b, &bp).unwrap(), expected);
    }

    #[test]
    fn more_tables_never_lose_candidates() {
        let a = random_db("a", 40, 80, 5);
        let b = random_db("b", 40, 80, 6);
        let mut prev: HashSet<CandidatePair> = HashSet::new();
        for mu in 1..=6 {
            let bp = BlockingParams { num_tables: mu, bits_per_key: 12, block_seed: 1 };
            let cur: HashSet<CandidatePair> = gen_blocks(&a, &b, &bp).unwrap().into_iter().collect();
            assert!(prev.is_subset(&cur));
            prev = cur;
        }
    }

    #[test]
    fn blocking_errors() {
        let a = db("a", &["1010"]);
        let b = db("b", &["10101"]);
        assert!(gen_blocks(&a, &b, &BlockingParams::default()).is_err());
        let bp = BlockingParams { num_tables: 1, bits_per_key: 5, block_seed: 0 };
        assert!(gen_blocks(&a, &db("c", &["0000"]), &bp).is_err());
    }

    #[test]
    fn threshold_classifier() {
        let a = db("a", &["1100", "1111", "1100"]);
        let b = db("b", &["1010", "1111", "0011"]);
        let pairs = [CandidatePair { a: 0, b: 0 }, CandidatePair { a: 1, b: 1 }, CandidatePair { a: 2, b: 2 }];
        let m = classify_threshold(&pairs, &a, &b, 0.5).unwrap();
        assert!(m.contains("a0", "b0"));
        assert_eq!(m.pairs[0].score, 0.5);
        assert!(m.contains("a1", "b1"));
        assert!(!m.contains("a2", "b2"));
        let strict = classify_threshold(&pairs, &a, &b, 0.7).unwrap();
        assert_eq!(strict.len(), 1);
        assert!(classify_threshold(&pairs, &a, &b, 1.5).is_err());
    }

    #[test]
    fn raising_threshold_never_adds_pairs() {
        let a = random_db("a", 30, 64, 7);
        let b = random_db("b", 30, 64, 8);
        let pairs = all_pairs(&a, &b);
        let mut prev = usize::MAX;
        for t in [0.0, 0.3, 0.5, 0.7, 0.8, 0.9, 1.0] {
            let n = classify_threshold(&pairs, &a, &b, t).unwrap().len();
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn zero_model_accepts_everything() {
        let features = FeatureConfig::default();
        let mut model = init_model(&[15, 4, 1], features.names(), 1).unwrap();
        for l in &mut model.layers {
            *l = Layer::zeros(l.rows, l.cols);
        }
        let a = random_db("a", 5, 32, 1);
        let b = random_db("b", 4, 32, 2);
        let pairs = all_pairs(&a, &b);
        let m = classify_pairs(&pairs, &a, &b, &model, &features).unwrap();
        assert_eq!(m.len(), 20);
        assert!(m.pairs.iter().all(|p| p.score == 0.5));
        assert!(classify_pairs(&[], &a, &b, &model, &features).unwrap().is_empty());
        let fewer = FeatureConfig { enabled: features.enabled[..3].to_vec(), ..features.clone() };
        assert!(classify_pairs(&pairs, &a, &b, &model, &fewer).is_err());
    }

    #[test]
    fn hand_counts() {
        let r = QualityReport::from_counts(8, 2, 2);
        assert_eq!((r.precision, r.recall, r.f_measure), (0.8, 0.8, 0.8));
        assert!((r.f_star - 2.0 / 3.0).abs() < 1e-15);
        let zero = QualityReport::from_counts(0, 0, 0);
        assert_eq!((zero.precision, zero.recall, zero.f_measure, zero.f_star), (0.0, 0.0, 0.0, 0.0));
        let f: f64 = 0.89;
        assert!((f / (2.0 - f) - 0.8018).abs() < 1e-4);
    }

    #[test]
    fn evaluate_counts_blocking_misses() {
        let truth = vec![
            LabeledPair::new("a0", "b0", Label::Match),
            LabeledPair::new("a1", "b1", Label::Match),
            LabeledPair::new("a2", "b2", Label::Match),
            LabeledPair::new("a3", "b9", Label::NonMatch),
        ];
        let pair = |x: &str, y: &str| ScoredPair { id_a: x.into(), id_b: y.into(), score: 0.9 };
        let m = MatchSet { pairs: vec![pair("a0", "b0"), pair("a3", "b9")], fingerprint: None };
        let all = evaluate(&m, &truth, None);
        assert_eq!((all.tp, all.fp, all.fn_), (1, 1, 2));
        let cands: HashSet<(String, String)> =
            [("a0", "b0"), ("a1", "b1"), ("a3", "b9")].iter().map(|(x, y)| (x.to_string(), y.to_string())).collect();
        let within = evaluate(&m, &truth, Some(&cands));
        assert_eq!((within.tp, within.fp, within.fn_), (1, 1, 1));
        let perfect = MatchSet { pairs: vec![pair("a0", "b0"), pair("a1", "b1"), pair("a2", "b2")], fingerprint: None };
        let r = evaluate(&perfect, &truth, None);
        assert_eq!((r.precision, r.recall, r.f_measure, r.f_star), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn match_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = MatchSet {
            pairs: vec![
                ScoredPair { id_a: "a".into(), id_b: "b".into(), score: 0.1 + 0.2 },
                ScoredPair { id_a: "c".into(), id_b: "d".into(), score: 1.0 },
            ],
            fingerprint: Some("abc".into()),
        };
        m.save(&path).unwrap();
        assert_eq!(MatchSet::load(&path).unwrap(), m);
        assert!(matches!(MatchSet::load(dir.path().join("none.csv")), Err(Error::MissingArtifact(_))));
        std::fs::write(&path, "rec_id_a,rec_id_b,score\na,b\n").unwrap();
        assert!(MatchSet::load(&path).is_err());
    }

    #[test]
    fn report_table_lists_every_metric() {
        let text = QualityReport::from_counts(8, 2, 2).to_string();
        for name in ["tp", "fp", "fn", "precision", "recall", "f_measure", "f_star"] {
            assert!(text.lines().any(|l| l.starts_with(name)), "{name}");
        }
    }

    proptest! {
        #[test]
        fn f_star_identity(tp in 0usize..10_000, fp in 0usize..10_000, fn_ in 0usize..10_000) {
            prop_assume!(tp + fp + fn_ > 0);
            let r = QualityReport::from_counts(tp, fp, fn_);
            prop_assert!((r.f_star - r.f_measure / (2.0 - r.f_measure)).abs() < 1e-12);
            prop_assert!(r.f_star <= r.f_measure && r.f_measure <= 1.0);
            for v in [r.precision, r.recall, r.f_measure, r.f_star] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
