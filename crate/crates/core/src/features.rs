//! Similarity and distance features between two Bloom filters.
//!
//! Every feature is a function of the 2×2 contingency counts of the pair
//! (see [`PairCounts`]), except weighted Minkowski, which also needs the
//! positions where the filters differ.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoding::BloomFilter;
use crate::error::{Error, Result};

/// Contingency counts of two equal-length bit vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    /// Both 1.
    pub a: usize,
    /// x = 1, y = 0.
    pub b: usize,
    /// x = 0, y = 1.
    pub c: usize,
    /// Both 0.
    pub d: usize,
    pub l: usize,
}

pub fn pair_counts(x: &BloomFilter, y: &BloomFilter) -> Result<PairCounts> {
    x.check_same_len(y)?;
    let (mut a, mut b, mut c) = (0usize, 0usize, 0usize);
    for (&wx, &wy) in x.words().iter().zip(y.words()) {
        a += (wx & wy).count_ones() as usize;
        b += (wx & !wy).count_ones() as usize;
        c += (!wx & wy).count_ones() as usize;
    }
    let l = x.len();
    Ok(PairCounts { a, b, c, d: l - a - b - c, l })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Jaccard,
    Dice,
    Cosine,
    RussellRao,
    YuleQ,
    SokalSneath,
    SokalMichener,
    RogersTanimoto,
    Hamming,
    BrayCurtis,
    JensenShannon,
    Kulsinski,
    Minkowski,
    SquaredEuclidean,
    WeightedMinkowski,
}

impl FeatureKind {
    /// All features in canonical order.
    pub const ALL: [FeatureKind; 15] = [
        FeatureKind::Jaccard,
        FeatureKind::Dice,
        FeatureKind::Cosine,
        FeatureKind::RussellRao,
        FeatureKind::YuleQ,
        FeatureKind::SokalSneath,
        FeatureKind::SokalMichener,
        FeatureKind::RogersTanimoto,
        FeatureKind::Hamming,
        FeatureKind::BrayCurtis,
        FeatureKind::JensenShannon,
        FeatureKind::Kulsinski,
        FeatureKind::Minkowski,
        FeatureKind::SquaredEuclidean,
        FeatureKind::WeightedMinkowski,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Jaccard => "jaccard",
            FeatureKind::Dice => "dice",
            FeatureKind::Cosine => "cosine",
            FeatureKind::RussellRao => "russell_rao",
            FeatureKind::YuleQ => "yule_q",
            FeatureKind::SokalSneath => "sokal_sneath",
            FeatureKind::SokalMichener => "sokal_michener",
            FeatureKind::RogersTanimoto => "rogers_tanimoto",
            FeatureKind::Hamming => "hamming",
            FeatureKind::BrayCurtis => "bray_curtis",
            FeatureKind::JensenShannon => "jensen_shannon",
            FeatureKind::Kulsinski => "kulsinski",
            FeatureKind::Minkowski => "minkowski",
            FeatureKind::SquaredEuclidean => "squared_euclidean",
            FeatureKind::WeightedMinkowski => "weighted_minkowski",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Order `r` of the Minkowski distances.
    pub minkowski_order: f64,
    /// Per-position weights for weighted Minkowski; `None` means all ones.
    pub weights: Option<Vec<f64>>,
    /// Enabled features, in vector order.
    pub enabled: Vec<FeatureKind>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { minkowski_order: 3.0, weights: None, enabled: FeatureKind::ALL.to_vec() }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.minkowski_order >= 1.0) || !self.minkowski_order.is_finite() {
            return Err(Error::Config(format!(
                "minkowski_order must be a finite number >= 1, got {}",
                self.minkowski_order
            )));
        }
        if self.enabled.is_empty() {
            return Err(Error::Config("at least one feature must be enabled".into()));
        }
        for (i, kind) in self.enabled.iter().enumerate() {
            if self.enabled[..i].contains(kind) {
                return Err(Error::Config(format!("feature `{kind}` enabled twice")));
            }
        }
        if let Some(w) = &self.weights {
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::Config(
                    "weights must be finite, non-negative and not all zero".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.enabled.iter().map(|k| k.name().to_owned()).collect()
    }

    pub fn dim(&self) -> usize {
        self.enabled.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Similarity that is 1 for two empty filters and 0 on any other zero denominator.
fn ratio_or_empty(num: f64, den: f64, both_empty: bool) -> f64 {
    if den == 0.0 {
        if both_empty { 1.0 } else { 0.0 }
    } else {
        num / den
    }
}

fn ratio_or_zero(num: f64, den: f64) -> f64 {
    if den == 0.0 { 0.0 } else { num / den }
}

/// Jensen-Shannon distance between the filters normalized to distributions.
fn jensen_shannon(counts: &PairCounts) -> f64 {
    let x = (counts.a + counts.b) as f64;
    let y = (counts.a + counts.c) as f64;
    match (x == 0.0, y == 0.0) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return std::f64::consts::LN_2.sqrt(),
        _ => {}
    }
    // order the two sides so the result is bitwise symmetric
    let (x, y, b, c) = if x <= y { (x, y, counts.b, counts.c) } else { (y, x, counts.c, counts.b) };
    let (px, qy) = (1.0 / x, 1.0 / y);
    let m = 0.5 * (px + qy);
    let shared = 0.5 * (px * (px / m).ln() + qy * (qy / m).ln());
    let ln2 = std::f64::consts::LN_2;
    let jsd = counts.a as f64 * shared + b as f64 * 0.5 * px * ln2 + c as f64 * 0.5 * qy * ln2;
    jsd.max(0.0).sqrt()
}

fn value(kind: FeatureKind, n: &PairCounts, cfg: &FeatureConfig, x: &BloomFilter, y: &BloomFilter) -> f64 {
    let (a, b, c, d, l) = (n.a as f64, n.b as f64, n.c as f64, n.d as f64, n.l as f64);
    let both_empty = n.a + n.b + n.c == 0;
    let diff = b + c;
    let r = cfg.minkowski_order;
    match kind {
        FeatureKind::Jaccard => ratio_or_empty(a, a + b + c, both_empty),
        FeatureKind::Dice => ratio_or_empty(2.0 * a, 2.0 * a + b + c, both_empty),
        FeatureKind::Cosine => ratio_or_empty(a, ((a + b) * (a + c)).sqrt(), both_empty),
        FeatureKind::RussellRao => a / l,
        FeatureKind::YuleQ => ratio_or_zero(a * d - b * c, a * d + b * c),
        FeatureKind::SokalSneath => ratio_or_empty(a, a + 2.0 * diff, both_empty),
        FeatureKind::SokalMichener => (a + d) / l,
        FeatureKind::RogersTanimoto => (a + d) / (a + d + 2.0 * diff),
        FeatureKind::Hamming => diff / l,
        FeatureKind::BrayCurtis => ratio_or_zero(diff, 2.0 * a + b + c),
        FeatureKind::JensenShannon => jensen_shannon(n),
        FeatureKind::Kulsinski => (diff - a + l) / (diff + l),
        FeatureKind::Minkowski => (diff / l).powf(1.0 / r),
        FeatureKind::SquaredEuclidean => diff / l,
        FeatureKind::WeightedMinkowski => match &cfg.weights {
            None => (diff / l).powf(1.0 / r),
            Some(w) => {
                let mut differing = 0.0;
                for (i, (&wx, &wy)) in x.words().iter().zip(y.words()).enumerate() {
                    let mut bits = wx ^ wy;
                    while bits != 0 {
                        differing += w[i * 64 + bits.trailing_zeros() as usize];
                        bits &= bits - 1;
                    }
                }
                (differing / w.iter().sum::<f64>()).powf(1.0 / r)
            }
        },
    }
}

/// Feature vector of the enabled features, in configured order.
pub fn feature_vector(x: &BloomFilter, y: &BloomFilter, cfg: &FeatureConfig) -> Result<FeatureVector> {
    let counts = pair_counts(x, y)?;
    if let Some(w) = &cfg.weights {
        if w.len() != x.len() {
            return Err(Error::Config(format!(
                "weight vector has {} entries for {}-bit filters",
                w.len(),
                x.len()
            )));
        }
    }
    let values = cfg.enabled.iter().map(|&k| value(k, &counts, cfg, x, y)).collect();
    Ok(FeatureVector { values })
}

/// Loads one weight per line (or comma separated) from a text file.
pub fn load_weights(path: impl AsRef<std::path::Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Data(format!("{}: invalid weight `{t}`", path.display())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bf(s: &str) -> BloomFilter {
        BloomFilter::from_bit_str(s).unwrap()
    }

    fn all(x: &BloomFilter, y: &BloomFilter) -> Vec<f64> {
        feature_vector(x, y, &FeatureConfig::default()).unwrap().values
    }

    fn idx(kind: FeatureKind) -> usize {
        FeatureKind::ALL.iter().position(|&k| k == kind).unwrap()
    }

    #[test]
    fn counts_examples() {
        assert_eq!(pair_counts(&bf("1100"), &bf("1010")).unwrap(), PairCounts { a: 1, b: 1, c: 1, d: 1, l: 4 });
        let x = bf("101101");
        let n = pair_counts(&x, &x).unwrap();
        assert_eq!((n.a, n.b, n.c), (4, 0, 0));
        assert_eq!(pair_counts(&bf("0000"), &bf("0000")).unwrap(), PairCounts { a: 0, b: 0, c: 0, d: 4, l: 4 });
        assert!(pair_counts(&bf("00"), &bf("000")).is_err());
    }

    #[test]
    fn identity_pair() {
        let x = bf("1011001110");
        let v = all(&x, &x);
        for k in [FeatureKind::Jaccard, FeatureKind::Dice, FeatureKind::Cosine] {
            assert_eq!(v[idx(k)], 1.0, "{k}");
        }
        for k in [
            FeatureKind::Hamming,
            FeatureKind::BrayCurtis,
            FeatureKind::SquaredEuclidean,
            FeatureKind::Minkowski,
            FeatureKind::JensenShannon,
            FeatureKind::WeightedMinkowski,
        ] {
            assert_eq!(v[idx(k)], 0.0, "{k}");
        }
    }

    #[test]
    fn hand_counted_pair() {
        let v = all(&bf("1100"), &bf("1010"));
        // JS oracle: P = (1/2, 1/2, 0, 0), Q = (1/2, 0, 1/2, 0), M = (1/2, 1/4, 1/4, 0)
        let kl = |p: &[f64], m: &[f64]| -> f64 {
            p.iter().zip(m).filter(|(p, _)| **p > 0.0).map(|(p, m)| p * (p / m).ln()).sum()
        };
        let (p, q, m) = ([0.5, 0.5, 0.0, 0.0], [0.5, 0.0, 0.5, 0.0], [0.5, 0.25, 0.25, 0.0]);
        let js = (0.5 * kl(&p, &m) + 0.5 * kl(&q, &m)).sqrt();
        let cube_root_half = 0.5f64.powf(1.0 / 3.0);
        let expected = [
            1.0 / 3.0,
            0.5,
            0.5,
            0.25,
            0.0,
            0.2,
            0.5,
            1.0 / 3.0,
            0.5,
            0.5,
            js,
            5.0 / 6.0,
            cube_root_half,
            0.5,
            cube_root_half,
        ];
        for (i, (got, want)) in v.iter().zip(expected).enumerate() {
            assert!((got - want).abs() < 1e-15, "{}: {got} vs {want}", FeatureKind::ALL[i]);
        }
    }

    #[test]
    fn all_zero_pair() {
        let z = bf("0000");
        let v = all(&z, &z);
        let expected = [1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        assert_eq!(v, expected);
    }

    #[test]
    fn one_empty_filter() {
        let v = all(&bf("0000"), &bf("0110"));
        assert_eq!(v[idx(FeatureKind::Jaccard)], 0.0);
        assert_eq!(v[idx(FeatureKind::Cosine)], 0.0);
        assert_eq!(v[idx(FeatureKind::YuleQ)], 0.0);
        assert_eq!(v[idx(FeatureKind::JensenShannon)], std::f64::consts::LN_2.sqrt());
    }

    #[test]
    fn enabled_subset_and_order() {
        let cfg = FeatureConfig {
            enabled: vec![FeatureKind::Hamming, FeatureKind::Dice],
            ..Default::default()
        };
        let v = feature_vector(&bf("1100"), &bf("1010"), &cfg).unwrap();
        assert_eq!(v.values, vec![0.5, 0.5]);
        assert_eq!(cfg.names(), vec!["hamming", "dice"]);
        assert_eq!("yule_q".parse::<FeatureKind>().unwrap(), FeatureKind::YuleQ);
        assert!("nope".parse::<FeatureKind>().is_err());
    }

    #[test]
    fn weight_checks() {
        let cfg = FeatureConfig { weights: Some(vec![1.0; 3]), ..Default::default() };
        assert!(feature_vector(&bf("1100"), &bf("1010"), &cfg).is_err());
        let cfg = FeatureConfig { weights: Some(vec![0.0; 4]), ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = FeatureConfig { minkowski_order: 0.5, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn weights_shift_weighted_minkowski() {
        let cfg = FeatureConfig {
            minkowski_order: 1.0,
            weights: Some(vec![1.0, 3.0, 0.0, 0.0]),
            enabled: vec![FeatureKind::WeightedMinkowski],
        };
        // differing positions 1 and 2: (3 + 0) / 4
        let v = feature_vector(&bf("1100"), &bf("1010"), &cfg).unwrap();
        assert_eq!(v.values, vec![0.75]);
    }

    fn pair_strategy(l: usize) -> impl Strategy<Value = (BloomFilter, BloomFilter)> {
        (
            proptest::collection::vec(any::<bool>(), l),
            proptest::collection::vec(any::<bool>(), l),
        )
            .prop_map(|(x, y)| (BloomFilter::from_bits(&x), BloomFilter::from_bits(&y)))
    }

    proptest! {
        #[test]
        fn symmetric_in_arguments((x, y) in pair_strategy(70)) {
            prop_assert_eq!(all(&x, &y), all(&y, &x));
        }

        #[test]
        fn ranges_and_identities((x, y) in pair_strategy(50)) {
            let v = all(&x, &y);
            for k in [FeatureKind::Jaccard, FeatureKind::Dice, FeatureKind::Cosine, FeatureKind::RussellRao,
                      FeatureKind::SokalSneath, FeatureKind::SokalMichener, FeatureKind::RogersTanimoto,
                      FeatureKind::Hamming, FeatureKind::BrayCurtis, FeatureKind::Minkowski,
                      FeatureKind::SquaredEuclidean, FeatureKind::Kulsinski] {
                prop_assert!((0.0..=1.0).contains(&v[idx(k)]), "{} = {}", k, v[idx(k)]);
            }
            prop_assert!((-1.0..=1.0).contains(&v[idx(FeatureKind::YuleQ)]));
            prop_assert!(v[idx(FeatureKind::JensenShannon)] >= 0.0);
            prop_assert!(v[idx(FeatureKind::JensenShannon)] <= std::f64::consts::LN_2.sqrt() + 1e-15);

            let j = v[idx(FeatureKind::Jaccard)];
            prop_assert!((v[idx(FeatureKind::Dice)] - 2.0 * j / (1.0 + j)).abs() < 1e-15);
            prop_assert_eq!(v[idx(FeatureKind::SquaredEuclidean)], v[idx(FeatureKind::Hamming)]);
            prop_assert_eq!(v[idx(FeatureKind::WeightedMinkowski)], v[idx(FeatureKind::Minkowski)]);

            let unit = FeatureConfig { weights: Some(vec![1.0; 50]), ..Default::default() };
            let w = feature_vector(&x, &y, &unit).unwrap().values;
            prop_assert_eq!(w[idx(FeatureKind::WeightedMinkowski)], v[idx(FeatureKind::Minkowski)]);
        }
    }
}
