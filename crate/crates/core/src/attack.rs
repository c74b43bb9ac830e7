//! Frequency-alignment attack on an encoded database.
//!
//! The attacker ranks the encoded bit patterns and the plaintext values of a
//! public database by frequency, aligns equal-count groups in rank order and
//! guesses that each frequent pattern encodes the value (or one of the values)
//! at the same rank. Guesses are scored against the encoder's own record of
//! which value produced each pattern.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Record};
use crate::encoding::EncodedDatabase;
use crate::error::{Error, Result};

/// Keys with their counts, by count descending and then key ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrequencyTable {
    pub items: Vec<(String, usize)>,
}

impl FrequencyTable {
    pub fn from_keys<I, S>(keys: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for k in keys {
            *counts.entry(k.into()).or_default() += 1;
        }
        let mut items: Vec<(String, usize)> = counts.into_iter().collect();
        // stable sort keeps the lexicographic order within equal counts
        items.sort_by(|a, b| b.1.cmp(&a.1));
        FrequencyTable { items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Counts of identical bit patterns (keyed by their hex form).
pub fn bf_frequencies(db: &EncodedDatabase) -> FrequencyTable {
    FrequencyTable::from_keys(db.entries.iter().map(|(_, bf)| bf.to_hex()))
}

/// Lowercased values of `attrs` in `record`, joined with `|`.
pub fn value_key(record: &Record, attrs: &[String]) -> Result<String> {
    let parts = attrs
        .iter()
        .map(|a| {
            record
                .get(a)
                .map(|v| v.trim().to_lowercase())
                .ok_or_else(|| Error::Data(format!("unknown attribute `{a}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.join("|"))
}

/// Counts of the value tuples of `attrs` over the dataset.
pub fn value_frequencies(db: &Dataset, attrs: &[String]) -> Result<FrequencyTable> {
    if let Some(a) = attrs.iter().find(|a| !db.schema.contains(a)) {
        return Err(Error::Data(format!("unknown attribute `{a}`")));
    }
    let keys = db.records.iter().map(|r| value_key(r, attrs)).collect::<Result<Vec<_>>>()?;
    Ok(FrequencyTable::from_keys(keys))
}

/// Which value produced each encoded pattern, joined through rec_id.
///
/// When distinct values share a pattern the first record's value is kept.
pub fn pattern_truth(encoded: &EncodedDatabase, plain: &Dataset, attrs: &[String]) -> Result<HashMap<String, String>> {
    let index = plain.index();
    let mut truth = HashMap::with_capacity(encoded.len());
    for (id, bf) in &encoded.entries {
        let &i = index
            .get(id.as_str())
            .ok_or_else(|| Error::Data(format!("encoded rec_id {id} not found in plaintext data")))?;
        truth.entry(bf.to_hex()).or_insert(value_key(&plain.records[i], attrs)?);
    }
    Ok(truth)
}

/// Share of the considered patterns in each guess category, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub top_k: usize,
    /// Patterns actually considered: `min(top_k, distinct patterns)`.
    pub considered: usize,
    pub pct_1to1_correct: f64,
    pub pct_1tom_correct: f64,
    pub pct_wrong: f64,
    pub pct_no_guess: f64,
}

impl AttackReport {
    pub fn pct_correct(&self) -> f64 {
        self.pct_1to1_correct + self.pct_1tom_correct
    }
}

/// Maximal runs of equal count, as index ranges into `items`.
fn count_groups(items: &[(String, usize)]) -> Vec<std::ops::Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=items.len() {
        if i == items.len() || items[i].1 != items[start].1 {
            groups.push(start..i);
            start = i;
        }
    }
    groups
}

/// Aligns the top `top_k` entries of both tables group by group.
///
/// A pattern seen once gets no guess. A single pattern aligned with a single
/// value is a 1-1 guess; otherwise every pattern of the group guesses the whole
/// aligned value group (1-m). Patterns beyond the last value group get no guess.
pub fn run_attack(
    bf_table: &FrequencyTable,
    value_table: &FrequencyTable,
    top_k: usize,
    truth: &HashMap<String, String>,
) -> Result<AttackReport> {
    if top_k == 0 {
        return Err(Error::Config("top_k must be at least 1".into()));
    }
    let bfs = &bf_table.items[..top_k.min(bf_table.len())];
    let values = &value_table.items[..top_k.min(value_table.len())];
    let bf_groups = count_groups(bfs);
    let value_groups = count_groups(values);

    let (mut one, mut many, mut wrong, mut none) = (0usize, 0usize, 0usize, 0usize);
    for (g, range) in bf_groups.iter().enumerate() {
        let group = &bfs[range.clone()];
        let Some(vrange) = value_groups.get(g) else {
            none += group.len();
            continue;
        };
        let candidates: HashSet<&str> = values[vrange.clone()].iter().map(|(v, _)| v.as_str()).collect();
        for (pattern, count) in group {
            if *count < 2 {
                none += 1;
                continue;
            }
            let actual = truth.get(pattern).map(String::as_str);
            let hit = actual.is_some_and(|v| candidates.contains(v));
            match (group.len() == 1 && candidates.len() == 1, hit) {
                (true, true) => one += 1,
                (false, true) => many += 1,
                _ => wrong += 1,
            }
        }
    }
    let considered = bfs.len();
    let pct = |n: usize| if considered == 0 { 0.0 } else { 100.0 * n as f64 / considered as f64 };
    let pct_no_guess = if considered == 0 { 100.0 } else { pct(none) };
    Ok(AttackReport {
        top_k,
        considered,
        pct_1to1_correct: pct(one),
        pct_1tom_correct: pct(many),
        pct_wrong: pct(wrong),
        pct_no_guess,
    })
}

/// Pronounceable name built from syllable indices; distinct indices give distinct names.
fn syllable_name(mut n: usize) -> String {
    const SYLLABLES: [&str; 20] = [
        "ka", "lo", "mi", "ra", "te", "su", "no", "vi", "da", "pe", "zu", "ho", "ni", "ba", "go", "fe", "ju", "si",
        "wa", "ly",
    ];
    let mut name = String::new();
    loop {
        name.push_str(SYLLABLES[n % SYLLABLES.len()]);
        n /= SYLLABLES.len();
        if n == 0 {
            break;
        }
        n -= 1;
    }
    name
}

/// Single-attribute (`first_name`) dataset with a heavily skewed value distribution.
///
/// The most frequent value takes 30% of the records, then values with 29, 27,
/// 25, ... down to 3 occurrences, and every remaining record has a unique value.
pub fn skewed_dataset(num_records: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next = 0usize;
    let mut names = Vec::with_capacity(num_records);
    let mut counts = vec![num_records * 3 / 10];
    counts.extend((3..=29).rev().step_by(2));
    for c in counts {
        let c = c.min(num_records - names.len());
        let name = syllable_name(next);
        next += 1;
        names.extend(std::iter::repeat_n(name, c));
    }
    // singletons start far above the frequent names so the two never collide
    let frequent = names.len();
    names.extend((frequent..num_records).map(|i| syllable_name(next + 1_000 + i)));
    names.shuffle(&mut rng);
    let schema = vec!["first_name".to_owned()];
    let records = names
        .into_iter()
        .enumerate()
        .map(|(i, n)| Record { rec_id: format!("s-{i:06}"), attrs: vec![("first_name".to_owned(), n)] })
        .collect();
    Dataset { name: "skewed".into(), schema, records }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{perturb_database, DpParams, Mechanism};
    use crate::encoding::{encode_dataset, BloomFilter, EncodingParams};

    fn bf(s: &str) -> BloomFilter {
        BloomFilter::from_bit_str(s).unwrap()
    }

    fn db(bfs: &[&str]) -> EncodedDatabase {
        EncodedDatabase::new("d", bfs.iter().enumerate().map(|(i, s)| (format!("r{i}"), bf(s))).collect()).unwrap()
    }

    fn table(items: &[(&str, usize)]) -> FrequencyTable {
        FrequencyTable { items: items.iter().map(|(k, c)| (k.to_string(), *c)).collect() }
    }

    fn sums_to_100(r: &AttackReport) -> bool {
        (r.pct_1to1_correct + r.pct_1tom_correct + r.pct_wrong + r.pct_no_guess - 100.0).abs() < 1e-9
    }

    #[test]
    fn frequency_tables() {
        let same = bf_frequencies(&db(&["1010", "1010", "1010"]));
        assert_eq!(same.items, vec![(bf("1010").to_hex(), 3)]);
        let distinct = bf_frequencies(&db(&["1000", "0100", "0010"]));
        assert!(distinct.items.iter().all(|(_, c)| *c == 1));
        let keys: Vec<&str> = distinct.items.iter().map(|(k, _)| k.as_str()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn frequency_table_matches_hash_map_oracle() {
        let data = skewed_dataset(400, 3);
        let attrs = vec!["first_name".to_owned()];
        let table = value_frequencies(&data, &attrs).unwrap();
        let mut oracle: HashMap<String, usize> = HashMap::new();
        for r in &data.records {
            *oracle.entry(r.get("first_name").unwrap().to_lowercase()).or_default() += 1;
        }
        assert_eq!(table.len(), oracle.len());
        for (k, c) in &table.items {
            assert_eq!(oracle[k], *c);
        }
        assert!(table.items.windows(2).all(|w| w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0)));
        assert!(value_frequencies(&data, &["surname".to_owned()]).is_err());
    }

    #[test]
    fn value_keys_join_lowercased_attributes() {
        let r = Record::new("r", [("a", "Peter "), ("b", "SMITH")]);
        assert_eq!(value_key(&r, &["a".into(), "b".into()]).unwrap(), "peter|smith");
        assert_eq!(value_key(&r, &["b".into(), "a".into()]).unwrap(), "smith|peter");
    }

    #[test]
    fn group_alignment_accounting() {
        let bfs = table(&[("A", 5), ("B", 3), ("C", 3), ("D", 2), ("E", 1)]);
        let values = table(&[("x", 9), ("y", 4), ("z", 4), ("w", 1)]);
        let truth: HashMap<String, String> =
            [("A", "x"), ("B", "z"), ("C", "q"), ("D", "u"), ("E", "v")]
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect();
        let r = run_attack(&bfs, &values, 5, &truth).unwrap();
        // A 1-1 correct, B 1-m correct, C wrong, D wrong, E no guess
        assert_eq!(r.considered, 5);
        assert_eq!((r.pct_1to1_correct, r.pct_1tom_correct, r.pct_wrong, r.pct_no_guess), (20.0, 20.0, 40.0, 20.0));
        assert!(sums_to_100(&r));

        let short = run_attack(&bfs, &table(&[("x", 9)]), 5, &truth).unwrap();
        assert_eq!(short.pct_1to1_correct, 20.0);
        assert_eq!(short.pct_no_guess, 80.0);
        assert!(run_attack(&bfs, &values, 0, &truth).is_err());
    }

    #[test]
    fn uniform_data_yields_no_guesses() {
        let bfs = table(&[("A", 1), ("B", 1), ("C", 1)]);
        let values = table(&[("x", 1), ("y", 1), ("z", 1)]);
        let r = run_attack(&bfs, &values, 10, &HashMap::new()).unwrap();
        assert_eq!(r.pct_no_guess, 100.0);
        assert!(sums_to_100(&r));
    }

    #[test]
    fn skewed_dataset_shape() {
        let d = skewed_dataset(1000, 1);
        assert_eq!(d.len(), 1000);
        let t = value_frequencies(&d, &["first_name".into()]).unwrap();
        assert_eq!(t.items[0].1, 300);
        assert_eq!(t.items[1].1, 29);
        assert!(t.items[0].1 >= 10 * t.items[1].1);
        assert_eq!(t.items.iter().filter(|(_, c)| *c == 1).count(), 1000 - 300 - 224);
        assert_eq!(d, skewed_dataset(1000, 1));
    }

    fn attack_at(p: f64, seed: u64) -> AttackReport {
        let plain = skewed_dataset(1000, seed);
        let attrs = vec!["first_name".to_owned()];
        let enc = EncodingParams { q: 2, l: 1000, k: 10, hash_seed: seed, attributes: attrs.clone() };
        let clean = encode_dataset(&plain, &enc).unwrap();
        let noisy = if p == 0.0 {
            clean
        } else {
            perturb_database(&clean, &DpParams::from_p(Mechanism::Blip, p, 10, 10, seed).unwrap())
        };
        let truth = pattern_truth(&noisy, &plain, &attrs).unwrap();
        // the public database is an independent sample from the same distribution
        let public = value_frequencies(&skewed_dataset(1000, seed + 100), &attrs).unwrap();
        run_attack(&bf_frequencies(&noisy), &public, 10, &truth).unwrap()
    }

    #[test]
    fn most_frequent_value_is_reidentified_without_noise() {
        let plain = skewed_dataset(1000, 4);
        let attrs = vec!["first_name".to_owned()];
        let enc = EncodingParams { q: 2, l: 1000, k: 10, hash_seed: 4, attributes: attrs.clone() };
        let encoded = encode_dataset(&plain, &enc).unwrap();
        let truth = pattern_truth(&encoded, &plain, &attrs).unwrap();
        let bfs = bf_frequencies(&encoded);
        let values = value_frequencies(&plain, &attrs).unwrap();
        let top1 = run_attack(&bfs, &values, 1, &truth).unwrap();
        assert_eq!(top1.pct_1to1_correct, 100.0);
        assert_eq!(truth[&bfs.items[0].0], values.items[0].0);
        assert!(attack_at(0.0, 4).pct_correct() > 0.0);
    }

    #[test]
    fn noise_defeats_the_attack() {
        let clean = attack_at(0.0, 5);
        let noisy = attack_at(0.1, 5);
        assert!(noisy.pct_correct() < clean.pct_correct());
        assert_eq!(noisy.pct_no_guess, 100.0);
        assert!(sums_to_100(&noisy) && sums_to_100(&clean));
    }

    #[test]
    fn noised_patterns_are_all_distinct() {
        let plain = skewed_dataset(1000, 6);
        let enc = EncodingParams { q: 2, l: 1000, k: 10, hash_seed: 6, attributes: vec!["first_name".into()] };
        let noisy = perturb_database(
            &encode_dataset(&plain, &enc).unwrap(),
            &DpParams::from_p(Mechanism::Blip, 0.05, 10, 10, 6).unwrap(),
        );
        assert_eq!(bf_frequencies(&noisy).len(), plain.len());
    }

    #[test]
    fn syllable_names_are_distinct() {
        let names: HashSet<String> = (0..5000).map(syllable_name).collect();
        assert_eq!(names.len(), 5000);
    }
}
