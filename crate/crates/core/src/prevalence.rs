//! Prevalence histograms: how many distinct symbols were seen exactly `i` times.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse map from multiplicity `i ≥ 1` to the number of symbols `Φ_i ≥ 1`
/// seen exactly that often. `Φ_0` is never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<HistogramRow>", into = "Vec<HistogramRow>")]
pub struct PrevalenceHistogram {
    counts: BTreeMap<u64, u64>,
    sample_size: u64,
}

/// One line of the histogram CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub frequency: u64,
    pub count: u64,
}

impl PrevalenceHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Histogram from `(i, Φ_i)` pairs. Zero counts are dropped; repeated
    /// multiplicities are an error.
    pub fn from_pairs<I: IntoIterator<Item = (u64, u64)>>(pairs: I) -> Result<Self> {
        let mut hist = Self::new();
        for (i, phi) in pairs {
            if i == 0 {
                return Err(Error::parse("multiplicity 0 cannot be observed"));
            }
            if hist.counts.contains_key(&i) {
                return Err(Error::parse(format!("duplicate multiplicity {i}")));
            }
            hist.insert(i, phi)?;
        }
        Ok(hist)
    }

    fn insert(&mut self, i: u64, phi: u64) -> Result<()> {
        if phi == 0 {
            return Ok(());
        }
        let mass = i
            .checked_mul(phi)
            .and_then(|m| m.checked_add(self.sample_size))
            .ok_or_else(|| Error::parse("sample size overflows u64"))?;
        self.sample_size = mass;
        *self.counts.entry(i).or_insert(0) += phi;
        Ok(())
    }

    /// Histogram of per-symbol counts; zero counts are ignored.
    pub fn from_counts<I: IntoIterator<Item = u64>>(counts: I) -> Self {
        let mut tally: BTreeMap<u64, u64> = BTreeMap::new();
        for c in counts.into_iter().filter(|&c| c > 0) {
            *tally.entry(c).or_insert(0) += 1;
        }
        let sample_size = tally.iter().map(|(i, p)| i * p).sum();
        Self { counts: tally, sample_size }
    }

    /// Number of distinct symbols seen exactly `i` times.
    pub fn get(&self, i: u64) -> u64 {
        self.counts.get(&i).copied().unwrap_or(0)
    }

    /// Nonzero `(i, Φ_i)` entries in ascending `i`.
    pub fn iter(&self) -> impl DoubleEndedIterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&i, &p)| (i, p))
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Largest multiplicity present, 0 when empty.
    pub fn max_index(&self) -> u64 {
        self.counts.keys().next_back().copied().unwrap_or(0)
    }

    /// Number of distinct symbols observed, `Σ Φ_i`.
    pub fn observed_count(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Number of observations, `Σ i·Φ_i`.
    pub fn sample_size(&self) -> u64 {
        self.sample_size
    }

    /// Entrywise sum of two histograms (disjoint symbol sets).
    pub fn merged(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        for (i, p) in other.iter() {
            out.insert(i, p)?;
        }
        Ok(out)
    }

    pub fn rows(&self) -> Vec<HistogramRow> {
        self.iter().map(|(frequency, count)| HistogramRow { frequency, count }).collect()
    }

    /// Parse the `frequency,count` CSV format. A zero-byte input is an empty histogram.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.is_empty() {
            return Ok(Self::new());
        }
        if headers.len() != 2 || &headers[0] != "frequency" || &headers[1] != "count" {
            return Err(Error::parse(format!(
                "expected header `frequency,count`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut pairs = Vec::new();
        for row in rdr.deserialize::<HistogramRow>() {
            let row = row?;
            pairs.push((row.frequency, row.count));
        }
        Self::from_pairs(pairs)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file).map_err(|e| match e {
            Error::Parse { msg, .. } => Error::Parse { path: Some(path.to_path_buf()), msg },
            other => other,
        })
    }

    /// Write the `frequency,count` CSV, ascending `i`, LF line endings.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        wtr.write_record(["frequency", "count"])?;
        for row in self.rows() {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ASCII")
    }
}

impl TryFrom<Vec<HistogramRow>> for PrevalenceHistogram {
    type Error = Error;

    fn try_from(rows: Vec<HistogramRow>) -> Result<Self> {
        Self::from_pairs(rows.into_iter().map(|r| (r.frequency, r.count)))
    }
}

impl From<PrevalenceHistogram> for Vec<HistogramRow> {
    fn from(h: PrevalenceHistogram) -> Self {
        h.rows()
    }
}

/// Histogram of a raw sample: `Φ_i` is the number of distinct symbols
/// occurring exactly `i` times.
pub fn build_histogram<T, I>(samples: I) -> PrevalenceHistogram
where
    T: Hash + Eq,
    I: IntoIterator<Item = T>,
{
    let mut per_symbol: HashMap<T, u64> = HashMap::new();
    for s in samples {
        *per_symbol.entry(s).or_insert(0) += 1;
    }
    PrevalenceHistogram::from_counts(per_symbol.into_values())
}

pub fn observed_count(hist: &PrevalenceHistogram) -> u64 {
    hist.observed_count()
}

pub fn sample_size(hist: &PrevalenceHistogram) -> u64 {
    hist.sample_size()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    use crate::test_support::corbet;

    #[test]
    fn bananas() {
        let h = build_histogram("bananas".bytes());
        assert_eq!(h.get(1), 2);
        assert_eq!(h.get(2), 1);
        assert_eq!(h.get(3), 1);
        assert_eq!(h.observed_count(), 4);
        assert_eq!(h.sample_size(), 7);
        assert_eq!(h.max_index(), 3);
    }

    #[test]
    fn empty_sequence() {
        let h = build_histogram(Vec::<u8>::new());
        assert!(h.is_empty());
        assert_eq!(h.observed_count(), 0);
        assert_eq!(h.sample_size(), 0);
        assert_eq!(h.max_index(), 0);
    }

    #[test]
    fn single_entry() {
        let h = PrevalenceHistogram::from_pairs([(3, 5)]).unwrap();
        assert_eq!(observed_count(&h), 5);
        assert_eq!(sample_size(&h), 15);
    }

    #[test]
    fn corbet_totals() {
        let h = corbet();
        assert_eq!(h.observed_count(), 435);
        let direct: u64 = [118, 74, 44, 24, 29, 22, 20, 19, 20, 15, 12, 14, 6, 12, 6]
            .iter()
            .enumerate()
            .map(|(j, c)| (j as u64 + 1) * c)
            .sum();
        assert_eq!(h.sample_size(), direct);
        assert_eq!(h.sample_size(), 2029);
    }

    #[test]
    fn uniform_draws_conserve_mass() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let draws: Vec<u32> = (0..1000).map(|_| rng.random_range(0..100)).collect();
        assert_eq!(build_histogram(draws).sample_size(), 1000);
    }

    #[test]
    fn rejects_zero_multiplicity_and_duplicates() {
        assert!(PrevalenceHistogram::from_pairs([(0, 1)]).is_err());
        assert!(PrevalenceHistogram::from_pairs([(2, 1), (2, 3)]).is_err());
        let h = PrevalenceHistogram::from_pairs([(2, 0)]).unwrap();
        assert!(h.is_empty());
    }

    #[test]
    fn csv_round_trip() {
        let h = corbet();
        let text = h.to_csv_string();
        assert!(text.starts_with("frequency,count\n1,118\n2,74\n"));
        assert!(!text.contains('\r'));
        assert_eq!(PrevalenceHistogram::read_csv(text.as_bytes()).unwrap(), h);
    }

    #[test]
    fn csv_header_only_and_blank() {
        assert!(PrevalenceHistogram::read_csv("frequency,count\n".as_bytes()).unwrap().is_empty());
        assert!(PrevalenceHistogram::read_csv("".as_bytes()).unwrap().is_empty());
        assert!(PrevalenceHistogram::read_csv("a,b\n1,2\n".as_bytes()).is_err());
        assert!(PrevalenceHistogram::read_csv("frequency,count\n1,x\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn permutation_invariant(mut s in proptest::collection::vec(0u8..20, 0..200), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let before = build_histogram(s.iter().copied());
            s.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(build_histogram(s.iter().copied()), before);
        }

        #[test]
        fn size_and_distinct_counts(s in proptest::collection::vec(0u16..50, 0..300)) {
            let h = build_histogram(s.iter().copied());
            prop_assert_eq!(h.sample_size(), s.len() as u64);
            let distinct: std::collections::HashSet<_> = s.iter().collect();
            prop_assert_eq!(h.observed_count(), distinct.len() as u64);
        }
    }
}
