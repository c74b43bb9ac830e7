//! q-gram extraction and record-level Bloom filter encoding with double hashing.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::hash::Hasher;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use siphasher::sip128::{Hasher128, SipHasher13};

use crate::data::{Dataset, Record};
use crate::error::{Error, Result};

/// Fixed-length bit vector. Bit `i` lives in word `i / 64` at bit `i % 64`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BloomFilter {
    words: Vec<u64>,
    len: usize,
}

impl BloomFilter {
    pub fn new(len: usize) -> Self {
        BloomFilter { words: vec![0; len.div_ceil(64)], len }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut bf = BloomFilter::new(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                bf.set(i);
            }
        }
        bf
    }

    /// Parses a `0`/`1` string, e.g. `"1100"`.
    pub fn from_bit_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Data(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BloomFilter::from_bits(&bits))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize) {
        debug_assert!(i < self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    pub fn clear(&mut self, i: usize) {
        debug_assert!(i < self.len);
        self.words[i / 64] &= !(1 << (i % 64));
    }

    #[inline]
    pub fn assign(&mut self, i: usize, value: bool) {
        if value {
            self.set(i)
        } else {
            self.clear(i)
        }
    }

    pub fn popcount(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + bit)
            })
        })
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|i| self.get(i))
    }

    pub(crate) fn check_same_len(&self, other: &BloomFilter) -> Result<()> {
        if self.len != other.len {
            return Err(Error::LengthMismatch { left: self.len, right: other.len });
        }
        Ok(())
    }

    /// Uppercase hex, bit 0 being the most significant bit of the first digit.
    pub fn to_hex(&self) -> String {
        assert!(self.len % 4 == 0, "hex encoding needs a length divisible by 4");
        (0..self.len / 4)
            .map(|d| {
                let nibble = (0..4).fold(0u8, |acc, j| acc << 1 | self.get(d * 4 + j) as u8);
                char::from_digit(nibble as u32, 16).unwrap().to_ascii_uppercase()
            })
            .collect()
    }

    pub fn from_hex(hex: &str) -> Result<Self> {
        let mut bf = BloomFilter::new(hex.len() * 4);
        for (d, c) in hex.chars().enumerate() {
            let nibble = c
                .to_digit(16)
                .ok_or_else(|| Error::Data(format!("invalid hex digit {c:?}")))?;
            for j in 0..4 {
                if nibble >> (3 - j) & 1 == 1 {
                    bf.set(d * 4 + j);
                }
            }
        }
        Ok(bf)
    }
}

impl fmt::Debug for BloomFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bits: String = self.bits().map(|b| if b { '1' } else { '0' }).collect();
        write!(f, "BloomFilter({bits})")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncodingParams {
    /// q-gram length in characters.
    pub q: usize,
    /// Bloom filter length in bits.
    pub l: usize,
    /// Number of hash functions.
    pub k: usize,
    pub hash_seed: u64,
    /// Attributes whose q-grams are encoded, in order.
    pub attributes: Vec<String>,
}

impl EncodingParams {
    pub fn validate(&self) -> Result<()> {
        if self.q == 0 || self.l == 0 || self.k == 0 {
            return Err(Error::Config(format!(
                "encoding needs q, l, k >= 1 (got q={}, l={}, k={})",
                self.q, self.l, self.k
            )));
        }
        if self.attributes.is_empty() {
            return Err(Error::Config("encoding needs at least one attribute".into()));
        }
        Ok(())
    }
}

/// Set of contiguous q-character substrings of the lowercased, trimmed value.
/// Values shorter than `q` produce no q-grams.
pub fn qgrams(value: &str, q: usize) -> BTreeSet<String> {
    assert!(q >= 1, "q-gram length must be at least 1");
    let chars: Vec<char> = value.trim().to_lowercase().chars().collect();
    if chars.len() < q {
        return BTreeSet::new();
    }
    chars.windows(q).map(|w| w.iter().collect()).collect()
}

/// Union of the q-gram sets of `attrs` in `record`.
pub fn record_qgrams(record: &Record, attrs: &[String], q: usize) -> Result<BTreeSet<String>> {
    let mut grams = BTreeSet::new();
    for attr in attrs {
        let value = record.get(attr).ok_or_else(|| {
            Error::Data(format!("record {} has no attribute `{attr}`", record.rec_id))
        })?;
        grams.extend(qgrams(value, q));
    }
    Ok(grams)
}

/// The two base hashes used for double hashing; `h2` is forced odd.
pub fn base_hashes(gram: &str, hash_seed: u64) -> (u64, u64) {
    let mut hasher = SipHasher13::new_with_keys(hash_seed, hash_seed.wrapping_add(1));
    hasher.write(gram.as_bytes());
    let h = hasher.finish128();
    (h.h1, h.h2 | 1)
}

/// Positions `(h1 + i * h2) mod l` for `i` in `0..k`.
pub fn hash_positions(gram: &str, l: usize, k: usize, hash_seed: u64) -> impl Iterator<Item = usize> {
    let (h1, h2) = base_hashes(gram, hash_seed);
    (0..k as u128).map(move |i| ((h1 as u128 + i * h2 as u128) % l as u128) as usize)
}

pub fn gen_bloom_filter(record: &Record, params: &EncodingParams) -> Result<BloomFilter> {
    let grams = record_qgrams(record, &params.attributes, params.q)?;
    let mut bf = BloomFilter::new(params.l);
    for gram in &grams {
        for pos in hash_positions(gram, params.l, params.k, params.hash_seed) {
            bf.set(pos);
        }
    }
    Ok(bf)
}

/// Largest q-gram set size over the dataset's records.
pub fn max_qgrams(dataset: &Dataset, params: &EncodingParams) -> Result<usize> {
    dataset
        .records
        .iter()
        .map(|r| record_qgrams(r, &params.attributes, params.q).map(|g| g.len()))
        .try_fold(0, |acc, n| n.map(|n| acc.max(n)))
}

/// Dice coefficient; two all-zero filters score 1.
pub fn dice(x: &BloomFilter, y: &BloomFilter) -> Result<f64> {
    x.check_same_len(y)?;
    let common: u32 = x.words.iter().zip(&y.words).map(|(a, b)| (a & b).count_ones()).sum();
    let total = x.popcount() + y.popcount();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * common as f64 / total as f64)
}

/// Encodes every record of `dataset`, in record order.
pub fn encode_dataset(dataset: &Dataset, params: &EncodingParams) -> Result<EncodedDatabase> {
    params.validate()?;
    let entries = dataset
        .records
        .par_iter()
        .map(|r| gen_bloom_filter(r, params).map(|bf| (r.rec_id.clone(), bf)))
        .collect::<Result<Vec<_>>>()?;
    EncodedDatabase::new(dataset.name.clone(), entries)
}

/// A party's noise-perturbed encoded records, as received by the linkage unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedDatabase {
    pub party_id: String,
    pub entries: Vec<(String, BloomFilter)>,
    /// Fingerprint of the encoding and feature configuration that produced the filters.
    pub fingerprint: Option<String>,
}

const FINGERPRINT_PREFIX: &str = "# fingerprint=";

impl EncodedDatabase {
    pub fn new(party_id: impl Into<String>, entries: Vec<(String, BloomFilter)>) -> Result<Self> {
        let db = EncodedDatabase { party_id: party_id.into(), entries, fingerprint: None };
        db.validate()?;
        Ok(db)
    }

    pub fn with_fingerprint(mut self, fingerprint: impl Into<String>) -> Self {
        self.fingerprint = Some(fingerprint.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.entries.len());
        let mut len = None;
        for (id, bf) in &self.entries {
            if !seen.insert(id.as_str()) {
                return Err(Error::Data(format!("duplicate rec_id {id} in encoded database")));
            }
            match len {
                None => len = Some(bf.len()),
                Some(l) if l != bf.len() => {
                    return Err(Error::LengthMismatch { left: l, right: bf.len() })
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn bf_len(&self) -> Option<usize> {
        self.entries.first().map(|(_, bf)| bf.len())
    }

    pub fn get(&self, rec_id: &str) -> Option<&BloomFilter> {
        self.entries.iter().find(|(id, _)| id == rec_id).map(|(_, bf)| bf)
    }

    /// Map from rec_id to entry position.
    pub fn index(&self) -> HashMap<&str, usize> {
        self.entries.iter().enumerate().map(|(i, (id, _))| (id.as_str(), i)).collect()
    }

    /// Writes `rec_id,HEX` lines, preceded by a `# fingerprint=` line when one is set.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            if let Some(fp) = &self.fingerprint {
                writeln!(out, "{FINGERPRINT_PREFIX}{fp}")?;
            }
            for (id, bf) in &self.entries {
                writeln!(out, "{id},{}", bf.to_hex())?;
            }
            out.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }

    /// Reads an encoded-database file; the party id is the file stem.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut fingerprint = None;
        let mut entries = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim_end();
            if let Some(fp) = line.strip_prefix(FINGERPRINT_PREFIX) {
                fingerprint = Some(fp.to_owned());
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, hex) = line.split_once(',').ok_or_else(|| {
                Error::Data(format!("{}: line {}: expected rec_id,hex", path.display(), n + 1))
            })?;
            let bf = BloomFilter::from_hex(hex)
                .map_err(|e| Error::Data(format!("{}: line {}: {e}", path.display(), n + 1)))?;
            entries.push((id.to_owned(), bf));
        }
        let party_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let db = EncodedDatabase { party_id, entries, fingerprint };
        db.validate()?;
        Ok(db)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(l: usize, k: usize, attrs: &[&str]) -> EncodingParams {
        EncodingParams {
            q: 2,
            l,
            k,
            hash_seed: 42,
            attributes: attrs.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn bigrams_of_names() {
        assert_eq!(qgrams("peter", 2), set(&["pe", "et", "te", "er"]));
        assert_eq!(qgrams("pete", 2), set(&["pe", "et", "te"]));
        assert!(qgrams("", 2).is_empty());
        assert!(qgrams("a", 2).is_empty());
        assert_eq!(qgrams("  PeTe ", 2), qgrams("pete", 2));
        // duplicates collapse
        assert_eq!(qgrams("anana", 2), set(&["an", "na"]));
    }

    #[test]
    fn empty_record_gives_zero_filter() {
        let r = Record::new("r", [("a", ""), ("b", " ")]);
        let bf = gen_bloom_filter(&r, &params(64, 3, &["a", "b"])).unwrap();
        assert_eq!(bf.popcount(), 0);
        assert_eq!(bf.len(), 64);
    }

    #[test]
    fn missing_attribute_is_an_error() {
        let r = Record::new("r", [("a", "peter")]);
        assert!(gen_bloom_filter(&r, &params(64, 3, &["a", "b"])).is_err());
    }

    #[test]
    fn peter_positions_match_oracle() {
        let p = params(12, 2, &["name"]);
        let r = Record::new("r", [("name", "peter")]);
        let bf = gen_bloom_filter(&r, &p).unwrap();

        // oracle: materialize the 8 hash positions directly
        let mut positions = BTreeSet::new();
        let mut raw = 0;
        for g in ["pe", "et", "te", "er"] {
            let (h1, h2) = base_hashes(g, 42);
            for i in 0..2u128 {
                positions.insert(((h1 as u128 + i * h2 as u128) % 12) as usize);
                raw += 1;
            }
        }
        assert_eq!(raw, 8);
        let ones: BTreeSet<usize> = bf.iter_ones().collect();
        assert_eq!(ones, positions);
        assert!(bf.popcount() <= 8);
        assert_eq!(bf.popcount() < 8, positions.len() < raw);
    }

    #[test]
    fn identical_records_identical_filters() {
        let p = params(100, 5, &["a", "b"]);
        let r1 = Record::new("1", [("a", "peter"), ("b", "smith")]);
        let r2 = Record::new("2", [("a", "peter"), ("b", "smith")]);
        assert_eq!(gen_bloom_filter(&r1, &p).unwrap(), gen_bloom_filter(&r2, &p).unwrap());
    }

    #[test]
    fn dice_examples() {
        let x = BloomFilter::from_bit_str("1100").unwrap();
        let y = BloomFilter::from_bit_str("1010").unwrap();
        assert_eq!(dice(&x, &y).unwrap(), 0.5);
        assert_eq!(dice(&x, &x).unwrap(), 1.0);
        let z = BloomFilter::from_bit_str("0011").unwrap();
        assert_eq!(dice(&x, &z).unwrap(), 0.0);
        let zero = BloomFilter::new(4);
        assert_eq!(dice(&zero, &zero).unwrap(), 1.0);
        assert!(dice(&x, &BloomFilter::new(8)).is_err());
    }

    #[test]
    fn hex_layout_is_msb_first() {
        let bf = BloomFilter::from_bit_str("10000000").unwrap();
        assert_eq!(bf.to_hex(), "80");
        let bf = BloomFilter::from_bit_str("00010000").unwrap();
        assert_eq!(bf.to_hex(), "10");
        assert_eq!(BloomFilter::from_hex("A5").unwrap(), BloomFilter::from_bit_str("10100101").unwrap());
        assert!(BloomFilter::from_hex("G0").is_err());
    }

    #[test]
    fn encoded_database_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("party1.bf");
        let db = EncodedDatabase::new(
            "party1",
            vec![
                ("r1".into(), BloomFilter::from_bit_str("10100000").unwrap()),
                ("r2".into(), BloomFilter::from_bit_str("00001111").unwrap()),
            ],
        )
        .unwrap()
        .with_fingerprint("abc");
        db.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "# fingerprint=abc\nr1,A0\nr2,0F\n");
        assert_eq!(EncodedDatabase::load(&path).unwrap(), db);
    }

    #[test]
    fn encoded_database_rejects_duplicates_and_mixed_lengths() {
        let a = BloomFilter::new(8);
        assert!(EncodedDatabase::new("p", vec![("r".into(), a.clone()), ("r".into(), a.clone())]).is_err());
        assert!(EncodedDatabase::new("p", vec![("r".into(), a), ("s".into(), BloomFilter::new(4))]).is_err());
    }

    fn brute_force(values: &[String], p: &EncodingParams) -> BTreeSet<usize> {
        let mut positions = BTreeSet::new();
        for v in values {
            let chars: Vec<char> = v.trim().to_lowercase().chars().collect();
            if chars.len() < p.q {
                continue;
            }
            for start in 0..=chars.len() - p.q {
                let g: String = chars[start..start + p.q].iter().collect();
                let (h1, h2) = base_hashes(&g, p.hash_seed);
                for i in 0..p.k as u128 {
                    positions.insert(((h1 as u128 + i * h2 as u128) % p.l as u128) as usize);
                }
            }
        }
        positions
    }

    proptest! {
        #[test]
        fn matches_brute_force(a in "[a-z ]{0,12}", b in "[a-z]{0,8}", l in 1usize..80, k in 1usize..6) {
            let p = params(l, k, &["a", "b"]);
            let r = Record::new("r", [("a", a.clone()), ("b", b.clone())]);
            let bf = gen_bloom_filter(&r, &p).unwrap();
            let ones: BTreeSet<usize> = bf.iter_ones().collect();
            prop_assert_eq!(ones, brute_force(&[a, b], &p));
        }

        #[test]
        fn popcount_bound_and_attribute_order(a in "[a-z]{0,10}", b in "[a-z]{0,10}", l in 1usize..200, k in 1usize..8) {
            let r = Record::new("r", [("a", a), ("b", b)]);
            let fwd = gen_bloom_filter(&r, &params(l, k, &["a", "b"])).unwrap();
            let rev = gen_bloom_filter(&r, &params(l, k, &["b", "a"])).unwrap();
            prop_assert_eq!(&fwd, &rev);
            let grams = record_qgrams(&r, &["a".into(), "b".into()], 2).unwrap().len();
            prop_assert!(fwd.popcount() <= l.min(k * grams));
        }

        #[test]
        fn adding_qgrams_never_clears_bits(a in "[a-z]{0,10}", extra in "[a-z]{1,6}") {
            let p = params(128, 4, &["a"]);
            let base = gen_bloom_filter(&Record::new("r", [("a", a.clone())]), &p).unwrap();
            let p2 = params(128, 4, &["a", "b"]);
            let grown = gen_bloom_filter(&Record::new("r", [("a", a), ("b", extra)]), &p2).unwrap();
            for i in base.iter_ones() {
                prop_assert!(grown.get(i));
            }
        }

        #[test]
        fn hex_round_trip(bits in proptest::collection::vec(any::<bool>(), 0..40usize)) {
            let n = bits.len() / 4 * 4;
            let bf = BloomFilter::from_bits(&bits[..n]);
            prop_assert_eq!(BloomFilter::from_hex(&bf.to_hex()).unwrap(), bf);
        }
    }
}
