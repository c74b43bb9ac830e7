//! Records, datasets, labelled pairs and the seeded synthetic generator.
//!
//! Record files are comma-separated with a header row whose first column is
//! `rec_id`; the remaining columns are the attributes in schema order. An
//! empty cell is a missing value and is kept as the empty string.

use std::collections::HashSet;
use std::fs::File;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::derive_seed;

pub const REC_ID: &str = "rec_id";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub rec_id: String,
    /// Attribute name and value, in schema order.
    pub attrs: Vec<(String, String)>,
}

impl Record {
    pub fn new<I, K, V>(rec_id: impl Into<String>, attrs: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        Record {
            rec_id: rec_id.into(),
            attrs: attrs.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }

    pub fn get(&self, attr: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(name, _)| name == attr)
            .map(|(_, value)| value.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    pub schema: Vec<String>,
    pub records: Vec<Record>,
}

impl Dataset {
    /// Builds a dataset, checking schema conformance and id uniqueness.
    pub fn new(name: impl Into<String>, schema: Vec<String>, records: Vec<Record>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for record in &records {
            if !seen.insert(record.rec_id.as_str()) {
                return Err(Error::Data(format!("duplicate rec_id {}", record.rec_id)));
            }
            let conforms = record.attrs.len() == schema.len()
                && record.attrs.iter().zip(&schema).all(|((name, _), s)| name == s);
            if !conforms {
                return Err(Error::Data(format!(
                    "record {} does not conform to schema {:?}",
                    record.rec_id, schema
                )));
            }
        }
        Ok(Dataset { name: name.into(), schema, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn find(&self, rec_id: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.rec_id == rec_id)
    }

    /// Index from rec_id to position.
    pub fn index(&self) -> std::collections::HashMap<&str, usize> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.rec_id.as_str(), i))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    NonMatch = 0,
    Match = 1,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        match self {
            Label::Match => 1.0,
            Label::NonMatch => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabeledPair {
    pub id_a: String,
    pub id_b: String,
    pub label: Label,
}

impl LabeledPair {
    pub fn new(id_a: impl Into<String>, id_b: impl Into<String>, label: Label) -> Self {
        LabeledPair { id_a: id_a.into(), id_b: id_b.into(), label }
    }
}

/// Loads a record file. An empty `schema` takes the attribute list from the header.
pub fn load_dataset(path: impl AsRef<Path>, schema: &[String]) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let header = reader.headers().map_err(|e| Error::csv(path, e))?.clone();

    let id_col = header
        .iter()
        .position(|h| h == REC_ID)
        .ok_or_else(|| Error::Data(format!("{}: missing `{REC_ID}` column", path.display())))?;
    let schema: Vec<String> = if schema.is_empty() {
        header.iter().filter(|h| *h != REC_ID).map(str::to_owned).collect()
    } else {
        schema.to_vec()
    };
    let mut columns = Vec::with_capacity(schema.len());
    for attr in &schema {
        let col = header.iter().position(|h| h == attr).ok_or_else(|| {
            Error::Data(format!("{}: missing schema attribute column `{attr}`", path.display()))
        })?;
        columns.push(col);
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (row, result) in reader.records().enumerate() {
        let row_no = row + 2;
        let fields = result.map_err(|e| Error::csv(path, e))?;
        let rec_id = fields.get(id_col).unwrap_or("").to_owned();
        if rec_id.is_empty() {
            return Err(Error::Data(format!("{}: row {row_no}: empty rec_id", path.display())));
        }
        if !seen.insert(rec_id.clone()) {
            return Err(Error::Data(format!("duplicate rec_id {rec_id} (row {row_no})")));
        }
        let attrs = schema
            .iter()
            .zip(&columns)
            .map(|(attr, &col)| (attr.clone(), fields.get(col).unwrap_or("").to_owned()))
            .collect();
        records.push(Record { rec_id, attrs });
    }

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Dataset { name, schema, records })
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header = std::iter::once(REC_ID).chain(dataset.schema.iter().map(String::as_str));
    writer.write_record(header).map_err(|e| Error::csv(path, e))?;
    for record in &dataset.records {
        let row = std::iter::once(record.rec_id.as_str())
            .chain(record.attrs.iter().map(|(_, v)| v.as_str()));
        writer.write_record(row).map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Loads `rec_id_a,rec_id_b,label` rows. Ids are not resolved here.
pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<LabeledPair>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let expected = ["rec_id_a", "rec_id_b", "label"];
    if header.len() < 3 || header.iter().take(3).ne(expected) {
        return Err(Error::Data(format!(
            "{}: expected header rec_id_a,rec_id_b,label",
            path.display()
        )));
    }
    let mut pairs = Vec::new();
    for (row, result) in reader.records().enumerate() {
        let fields = result.map_err(|e| Error::csv(path, e))?;
        let label = match fields.get(2).map(str::trim) {
            Some("1") => Label::Match,
            Some("0") => Label::NonMatch,
            other => {
                return Err(Error::Data(format!(
                    "{}: row {}: invalid label {:?}",
                    path.display(),
                    row + 2,
                    other.unwrap_or("")
                )))
            }
        };
        pairs.push(LabeledPair::new(&fields[0], &fields[1], label));
    }
    Ok(pairs)
}

pub fn save_pairs(pairs: &[LabeledPair], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    writer
        .write_record(["rec_id_a", "rec_id_b", "label"])
        .map_err(|e| Error::csv(path, e))?;
    for pair in pairs {
        let label = if pair.label == Label::Match { "1" } else { "0" };
        writer
            .write_record([pair.id_a.as_str(), pair.id_b.as_str(), label])
            .map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Synthetic data

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    GivenName,
    Surname,
    Street,
    City,
}

impl FieldKind {
    pub fn column(self) -> &'static str {
        match self {
            FieldKind::GivenName => "first_name",
            FieldKind::Surname => "last_name",
            FieldKind::Street => "street",
            FieldKind::City => "city",
        }
    }

    fn sample(self, rng: &mut impl Rng) -> String {
        let pick = |list: &[&str], rng: &mut dyn rand::RngCore| {
            list[rng.random_range(0..list.len())].to_owned()
        };
        match self {
            FieldKind::GivenName => pick(GIVEN_NAMES, rng),
            FieldKind::Surname => pick(SURNAMES, rng),
            FieldKind::City => pick(CITIES, rng),
            FieldKind::Street => {
                let number: u32 = rng.random_range(1..400);
                let name = STREETS[rng.random_range(0..STREETS.len())];
                let suffix = STREET_SUFFIXES[rng.random_range(0..STREET_SUFFIXES.len())];
                format!("{number} {name} {suffix}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub num_records: usize,
    pub match_fraction: f64,
    /// Expected number of single-character edits applied to a matching twin.
    pub corruption_rate: f64,
    pub attributes: Vec<FieldKind>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_records: 1000,
            match_fraction: 0.5,
            corruption_rate: 1.0,
            attributes: vec![
                FieldKind::GivenName,
                FieldKind::Surname,
                FieldKind::Street,
                FieldKind::City,
            ],
            seed: 42,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.match_fraction) {
            return Err(Error::Config(format!(
                "match_fraction {} outside [0, 1]",
                self.match_fraction
            )));
        }
        if !(self.corruption_rate >= 0.0) || !self.corruption_rate.is_finite() {
            return Err(Error::Config(format!(
                "corruption_rate {} must be finite and >= 0",
                self.corruption_rate
            )));
        }
        if self.attributes.is_empty() {
            return Err(Error::Config("synthetic spec needs at least one attribute".into()));
        }
        Ok(())
    }

    pub fn schema(&self) -> Vec<String> {
        self.attributes.iter().map(|k| k.column().to_owned()).collect()
    }

    pub fn num_matches(&self) -> usize {
        (self.match_fraction * self.num_records as f64).round() as usize
    }

    fn sample_entity(&self, rng: &mut impl Rng) -> Vec<String> {
        self.attributes.iter().map(|k| k.sample(rng)).collect()
    }
}

/// True matches between parties `party_a` and `party_b` (0-based, `party_a < party_b`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartyPairTruth {
    pub party_a: usize,
    pub party_b: usize,
    pub pairs: Vec<LabeledPair>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticData {
    pub datasets: Vec<Dataset>,
    pub ground_truth: Vec<PartyPairTruth>,
}

impl SyntheticData {
    pub fn truth_for(&self, party_a: usize, party_b: usize) -> Option<&PartyPairTruth> {
        self.ground_truth
            .iter()
            .find(|t| t.party_a == party_a && t.party_b == party_b)
    }
}

pub fn party_name(index: usize) -> String {
    format!("party{}", index + 1)
}

/// Generates one dataset per party.
///
/// The first party holds `num_matches` source entities; every other party holds an
/// independently corrupted twin of each. The rest of each party's records are
/// distinct entities. Record order is shuffled per party.
pub fn generate_synthetic(spec: &SynthSpec, num_parties: usize) -> Result<SyntheticData> {
    spec.validate()?;
    if num_parties < 2 {
        return Err(Error::Config(format!("need at least 2 parties, got {num_parties}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let schema = spec.schema();
    let n_match = spec.num_matches().min(spec.num_records);

    let sources: Vec<Vec<String>> = (0..n_match).map(|_| spec.sample_entity(&mut rng)).collect();

    let mut datasets = Vec::with_capacity(num_parties);
    // twin_ids[party][entity] = rec_id of that entity's twin in the party
    let mut twin_ids: Vec<Vec<String>> = Vec::with_capacity(num_parties);
    for party in 0..num_parties {
        let mut values: Vec<(Option<usize>, Vec<String>)> = Vec::with_capacity(spec.num_records);
        for (entity, source) in sources.iter().enumerate() {
            let twin = if party == 0 {
                source.clone()
            } else {
                corrupt(source, spec.corruption_rate, &mut rng)
            };
            values.push((Some(entity), twin));
        }
        while values.len() < spec.num_records {
            values.push((None, spec.sample_entity(&mut rng)));
        }
        values.shuffle(&mut rng);

        let mut ids = vec![String::new(); n_match];
        let name = party_name(party);
        let records = values
            .into_iter()
            .enumerate()
            .map(|(i, (entity, vals))| {
                let rec_id = format!("p{}-{:06}", party + 1, i);
                if let Some(e) = entity {
                    ids[e] = rec_id.clone();
                }
                Record { rec_id, attrs: schema.iter().cloned().zip(vals).collect() }
            })
            .collect();
        datasets.push(Dataset { name, schema: schema.clone(), records });
        twin_ids.push(ids);
    }

    let mut ground_truth = Vec::new();
    for a in 0..num_parties {
        for b in a + 1..num_parties {
            let pairs = (0..n_match)
                .map(|e| LabeledPair::new(&twin_ids[a][e], &twin_ids[b][e], Label::Match))
                .collect();
            ground_truth.push(PartyPairTruth { party_a: a, party_b: b, pairs });
        }
    }
    Ok(SyntheticData { datasets, ground_truth })
}

/// A party's labelled training data: records plus pairs over them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingSet {
    pub dataset: Dataset,
    pub pairs: Vec<LabeledPair>,
}

/// Generates a labelled training set for one party, disjoint from the linkage data.
///
/// Half of the pairs are matches (a source and its corrupted twin). Of the
/// non-matches, half are unrelated entities and half share one or two attribute
/// values with the first record, which resembles the non-matches that survive
/// blocking.
pub fn generate_training_set(spec: &SynthSpec, party: usize, num_pairs: usize) -> Result<TrainingSet> {
    spec.validate()?;
    let seed = derive_seed(spec.seed, &format!("training/{party}"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = spec.schema();
    let mut records = Vec::with_capacity(num_pairs * 2);
    let mut pairs = Vec::with_capacity(num_pairs);
    let prefix = format!("t{}", party + 1);
    let push = |vals: Vec<String>, records: &mut Vec<Record>| {
        let rec_id = format!("{prefix}-{:06}", records.len());
        records.push(Record { rec_id: rec_id.clone(), attrs: schema.iter().cloned().zip(vals).collect() });
        rec_id
    };

    for i in 0..num_pairs {
        let first = spec.sample_entity(&mut rng);
        let (second, label) = if i % 2 == 0 {
            (corrupt(&first, spec.corruption_rate, &mut rng), Label::Match)
        } else {
            let mut other = spec.sample_entity(&mut rng);
            if rng.random_bool(0.5) && first.len() > 1 {
                let shared = rng.random_range(1..=2.min(first.len() - 1));
                let mut cols: Vec<usize> = (0..first.len()).collect();
                cols.shuffle(&mut rng);
                for &c in &cols[..shared] {
                    other[c] = first[c].clone();
                }
            }
            if other == first {
                other = spec.sample_entity(&mut rng);
            }
            (other, Label::NonMatch)
        };
        let id_a = push(first, &mut records);
        let id_b = push(second, &mut records);
        pairs.push(LabeledPair { id_a, id_b, label });
    }
    let dataset = Dataset { name: format!("{}-train", party_name(party)), schema, records };
    Ok(TrainingSet { dataset, pairs })
}

/// Applies a zero-truncated Poisson(`rate`) number of single-character edits.
/// The result always differs from `source` when `rate > 0`.
fn corrupt(source: &[String], rate: f64, rng: &mut impl Rng) -> Vec<String> {
    let mut out = source.to_vec();
    if rate <= 0.0 || source.is_empty() {
        return out;
    }
    let poisson = Poisson::new(rate).expect("rate is positive and finite");
    let edits = loop {
        let n = poisson.sample(rng) as usize;
        if n > 0 {
            break n;
        }
    };
    for _ in 0..edits {
        let col = rng.random_range(0..out.len());
        edit_once(&mut out[col], rng);
    }
    if out == source {
        let col = rng.random_range(0..out.len());
        substitute(&mut out[col], rng);
    }
    out
}

fn edit_once(value: &mut String, rng: &mut impl Rng) {
    let len = value.chars().count();
    match rng.random_range(0..3) {
        0 if len > 0 => substitute(value, rng),
        1 if len > 0 => {
            let at = rng.random_range(0..len);
            let mut chars: Vec<char> = value.chars().collect();
            chars.remove(at);
            *value = chars.into_iter().collect();
        }
        _ => {
            let at = rng.random_range(0..=len);
            let mut chars: Vec<char> = value.chars().collect();
            chars.insert(at, random_letter(rng));
            *value = chars.into_iter().collect();
        }
    }
}

fn substitute(value: &mut String, rng: &mut impl Rng) {
    let mut chars: Vec<char> = value.chars().collect();
    if chars.is_empty() {
        chars.push(random_letter(rng));
    } else {
        let at = rng.random_range(0..chars.len());
        let old = chars[at].to_ascii_lowercase();
        let mut new = random_letter(rng);
        while new == old {
            new = random_letter(rng);
        }
        chars[at] = new;
    }
    *value = chars.into_iter().collect();
}

fn random_letter(rng: &mut impl Rng) -> char {
    (b'a' + rng.random_range(0..26u8)) as char
}

const GIVEN_NAMES: &[&str] = &[
    "james", "mary", "john", "patricia", "robert", "jennifer", "michael", "linda", "william",
    "elizabeth", "david", "barbara", "richard", "susan", "joseph", "jessica", "thomas", "sarah",
    "charles", "karen", "christopher", "nancy", "daniel", "lisa", "matthew", "betty", "anthony",
    "margaret", "mark", "sandra", "donald", "ashley", "steven", "kimberly", "paul", "emily",
    "andrew", "donna", "joshua", "michelle", "kenneth", "dorothy", "kevin", "carol", "brian",
    "amanda", "george", "melissa", "timothy", "deborah", "ronald", "stephanie", "edward",
    "rebecca", "jason", "sharon", "jeffrey", "laura", "ryan", "cynthia", "jacob", "kathleen",
    "gary", "amy", "nicholas", "angela", "eric", "shirley", "jonathan", "anna", "stephen",
    "brenda", "larry", "pamela", "justin", "emma", "scott", "nicole", "brandon", "helen",
    "benjamin", "samantha", "samuel", "katherine", "gregory", "christine", "alexander", "debra",
    "frank", "rachel", "patrick", "carolyn", "raymond", "janet", "jack", "catherine", "dennis",
    "maria", "jerry", "heather", "tyler", "diane", "aaron", "ruth", "jose", "julie", "adam",
    "olivia", "nathan", "joyce", "henry", "virginia", "douglas", "victoria", "zachary", "kelly",
    "peter", "lauren", "kyle", "christina",
];

const SURNAMES: &[&str] = &[
    "smith", "johnson", "williams", "brown", "jones", "garcia", "miller", "davis", "rodriguez",
    "martinez", "hernandez", "lopez", "gonzalez", "wilson", "anderson", "thomas", "taylor",
    "moore", "jackson", "martin", "lee", "perez", "thompson", "white", "harris", "sanchez",
    "clark", "ramirez", "lewis", "robinson", "walker", "young", "allen", "king", "wright",
    "scott", "torres", "nguyen", "hill", "flores", "green", "adams", "nelson", "baker", "hall",
    "rivera", "campbell", "mitchell", "carter", "roberts", "gomez", "phillips", "evans",
    "turner", "diaz", "parker", "cruz", "edwards", "collins", "reyes", "stewart", "morris",
    "morales", "murphy", "cook", "rogers", "gutierrez", "ortiz", "morgan", "cooper", "peterson",
    "bailey", "reed", "kelly", "howard", "ramos", "kim", "cox", "ward", "richardson", "watson",
    "brooks", "chavez", "wood", "james", "bennett", "gray", "mendoza", "ruiz", "hughes", "price",
    "alvarez", "castillo", "sanders", "patel", "myers", "long", "ross", "foster", "jimenez",
    "powell", "jenkins", "perry", "russell", "sullivan", "bell", "coleman", "butler",
    "henderson", "barnes", "gonzales", "fisher", "vasquez", "simmons", "romero", "jordan",
    "patterson", "alexander", "hamilton", "graham",
];

const STREETS: &[&str] = &[
    "main", "oak", "pine", "maple", "cedar", "elm", "washington", "lake", "hill", "park",
    "walnut", "spring", "north", "ridge", "church", "willow", "mill", "sunset", "railroad",
    "jackson", "cherry", "highland", "johnson", "center", "lincoln", "meadow", "forest",
    "river", "dogwood", "chestnut", "jefferson", "madison", "franklin", "adams", "hickory",
    "poplar", "birch", "lakeview", "valley", "spruce", "magnolia", "holly", "locust", "sycamore",
    "laurel", "prospect", "academy", "colonial", "evergreen", "bridge", "market", "union",
    "liberty", "broad", "water", "canal", "school", "orchard", "heritage", "harbor",
];

const STREET_SUFFIXES: &[&str] = &["street", "road", "avenue", "drive", "lane", "court"];

const CITIES: &[&str] = &[
    "raleigh", "charlotte", "greensboro", "durham", "winston salem", "fayetteville", "cary",
    "wilmington", "high point", "concord", "asheville", "greenville", "gastonia", "jacksonville",
    "chapel hill", "rocky mount", "burlington", "huntersville", "wilson", "kannapolis", "apex",
    "hickory", "goldsboro", "indian trail", "mooresville", "wake forest", "monroe", "salisbury",
    "new bern", "sanford", "matthews", "holly springs", "thomasville", "cornelius", "garner",
    "asheboro", "statesville", "mint hill", "kernersville", "morrisville",
];
