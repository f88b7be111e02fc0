//! Vocabulary statistics: family sizes, mutated-unit ratios, unit lengths,
//! pairwise identity and rank-frequency tables.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::Corpus;
use crate::error::Result;
use crate::matrices::STANDARD_RESIDUES;
use crate::segmenter::Encoder;
use crate::vocabulary::Vocabulary;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VocabStats {
    pub units: usize,
    /// Families with at least two members.
    pub families: usize,
    pub singletons: usize,
    /// Family size (>= 2) to number of families.
    pub family_size_histogram: BTreeMap<usize, usize>,
    pub family_coverage: f64,
    pub mutated_ratio_vocab: f64,
    pub unit_length_mean: f64,
    pub unit_length_var: f64,
    pub observed: Option<ObservedStats>,
}

/// Statistics over unit occurrences in a segmented corpus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservedStats {
    pub occurrences: u64,
    pub mutated_ratio_observed: f64,
    pub observed_length_mean: f64,
    pub observed_length_var: f64,
}

/// Population mean and variance of weighted values.
fn mean_var(values: impl Iterator<Item = (f64, f64)> + Clone) -> (f64, f64) {
    let (w, s) = values.clone().fold((0.0, 0.0), |(w, s), (x, n)| (w + n, s + x * n));
    if w == 0.0 {
        return (0.0, 0.0);
    }
    let mean = s / w;
    let var = values.fold(0.0, |acc, (x, n)| acc + n * (x - mean) * (x - mean)) / w;
    (mean, var)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Occurrence count of every unit in the segmentation of `corpus`.
pub fn unit_counts(vocab: &Vocabulary, corpus: &Corpus) -> Result<Vec<u64>> {
    let encoded = Encoder::new(vocab).encode_corpus(corpus)?;
    let mut counts = vec![0u64; vocab.len()];
    for row in &encoded {
        for &id in row {
            counts[id as usize] += 1;
        }
    }
    Ok(counts)
}

pub fn vocab_stats(vocab: &Vocabulary, corpus: Option<&Corpus>) -> Result<VocabStats> {
    let families = vocab.families();
    let mut histogram = BTreeMap::new();
    let mut in_families = 0;
    let mut singletons = 0;
    for f in &families {
        if f.len() >= 2 {
            *histogram.entry(f.len()).or_insert(0) += 1;
            in_families += f.len();
        } else {
            singletons += 1;
        }
    }
    let units = vocab.len();
    let mutated = vocab.units().iter().filter(|u| u.mut_parent.is_some()).count();
    let (unit_length_mean, unit_length_var) =
        mean_var(vocab.units().iter().map(|u| (u.string.len() as f64, 1.0)));

    let observed = match corpus {
        None => None,
        Some(c) => {
            let counts = unit_counts(vocab, c)?;
            let occurrences: u64 = counts.iter().sum();
            let mutated_occ: u64 = vocab
                .units()
                .iter()
                .filter(|u| u.mut_parent.is_some())
                .map(|u| counts[u.id as usize])
                .sum();
            let weighted = vocab.units().iter().map(|u| (u.string.len() as f64, counts[u.id as usize] as f64));
            let (observed_length_mean, observed_length_var) = mean_var(weighted);
            Some(ObservedStats {
                occurrences,
                mutated_ratio_observed: if occurrences == 0 { 0.0 } else { mutated_occ as f64 / occurrences as f64 },
                observed_length_mean,
                observed_length_var,
            })
        }
    };

    Ok(VocabStats {
        units,
        families: histogram.values().sum(),
        singletons,
        family_size_histogram: histogram,
        family_coverage: ratio(in_families, units),
        mutated_ratio_vocab: ratio(mutated, units),
        unit_length_mean,
        unit_length_var,
        observed,
    })
}

impl VocabStats {
    /// `size,count` rows, the singleton count first as size 1.
    pub fn write_histogram_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "family_size,count")?;
        writeln!(w, "1,{}", self.singletons)?;
        for (size, count) in &self.family_size_histogram {
            writeln!(w, "{size},{count}")?;
        }
        Ok(())
    }

    /// `metric,value` rows.
    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "metric,value")?;
        writeln!(w, "units,{}", self.units)?;
        writeln!(w, "families,{}", self.families)?;
        writeln!(w, "singletons,{}", self.singletons)?;
        writeln!(w, "family_coverage,{}", self.family_coverage)?;
        writeln!(w, "mutated_ratio_vocab,{}", self.mutated_ratio_vocab)?;
        writeln!(w, "unit_length_mean,{}", self.unit_length_mean)?;
        writeln!(w, "unit_length_var,{}", self.unit_length_var)?;
        if let Some(o) = &self.observed {
            writeln!(w, "occurrences,{}", o.occurrences)?;
            writeln!(w, "mutated_ratio_observed,{}", o.mutated_ratio_observed)?;
            writeln!(w, "observed_length_mean,{}", o.observed_length_mean)?;
            writeln!(w, "observed_length_var,{}", o.observed_length_var)?;
        }
        Ok(())
    }
}

/// Fraction of `v1`'s unit strings also present in `v2`. Vocabularies of
/// different sizes are normalized by the smaller one.
pub fn vocab_identity(v1: &Vocabulary, v2: &Vocabulary) -> f64 {
    let shared = v1.units().iter().filter(|u| v2.contains(&u.string)).count();
    let den = if v1.len() == v2.len() {
        v1.len()
    } else {
        log::warn!("comparing vocabularies of sizes {} and {}; normalizing by the smaller", v1.len(), v2.len());
        v1.len().min(v2.len())
    };
    ratio(shared, den)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ZipfRow {
    pub rank: usize,
    pub unit: String,
    pub frequency: u64,
}

/// Units that occur in the segmentation, by descending count then string.
/// Units that never occur are left out.
pub fn zipf_rows(vocab: &Vocabulary, counts: &[u64]) -> Vec<ZipfRow> {
    let mut used: Vec<(u64, &str)> = vocab
        .units()
        .iter()
        .filter(|u| counts[u.id as usize] > 0)
        .map(|u| (counts[u.id as usize], u.string.as_str()))
        .collect();
    used.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
    used.into_iter()
        .enumerate()
        .map(|(i, (frequency, unit))| ZipfRow { rank: i + 1, unit: unit.to_string(), frequency })
        .collect()
}

pub fn zipf_table(vocab: &Vocabulary, corpus: &Corpus) -> Result<Vec<ZipfRow>> {
    Ok(zipf_rows(vocab, &unit_counts(vocab, corpus)?))
}

/// Fraction of unit occurrences whose string is also a unit of `other`.
pub fn shared_usage_ratio(vocab: &Vocabulary, counts: &[u64], other: &Vocabulary) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let shared: u64 = vocab
        .units()
        .iter()
        .filter(|u| other.contains(&u.string))
        .map(|u| counts[u.id as usize])
        .sum();
    shared as f64 / total as f64
}

pub fn write_zipf_csv<W: Write>(rows: &[ZipfRow], mut w: W) -> Result<()> {
    writeln!(w, "rank,unit,frequency")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.rank, r.unit, r.frequency)?;
    }
    Ok(())
}

/// A vocabulary of uniformly random residue strings with the same length
/// multiset as `reference`. When a length has fewer distinct strings than
/// requested, every string of that length is used instead.
pub fn random_vocab(reference: &Vocabulary, seed: u64) -> Result<Vocabulary> {
    let mut by_len: BTreeMap<usize, usize> = BTreeMap::new();
    for u in reference.units() {
        *by_len.entry(u.string.len()).or_insert(0) += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strings = Vec::with_capacity(reference.len());
    for (&len, &want) in &by_len {
        let space = 20f64.powi(len as i32);
        if want as f64 >= space {
            if want as f64 > space {
                log::warn!("only {space} distinct strings of length {len}; {want} requested");
            }
            strings.extend(all_strings(len));
            continue;
        }
        let mut chosen = BTreeSet::new();
        let mut order = Vec::with_capacity(want);
        while order.len() < want {
            let s: String = (0..len).map(|_| STANDARD_RESIDUES[rng.gen_range(0..20)] as char).collect();
            if chosen.insert(s.clone()) {
                order.push(s);
            }
        }
        strings.extend(order);
    }
    let mut v = Vocabulary::from_strings(strings)?;
    v.meta.label = format!("RANDOM(seed {seed})");
    v.meta.vocab_size = v.len();
    Ok(v)
}

fn all_strings(len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|p| STANDARD_RESIDUES.iter().map(move |&r| format!("{p}{}", r as char)))
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocabulary::tests::htgekpy_fragment;

    #[test]
    fn fragment_stats() {
        let v = htgekpy_fragment();
        let s = vocab_stats(&v, None).unwrap();
        let fam = v.family_of(v.id_of("HTGEKPY").unwrap()).unwrap();
        assert_eq!(fam.len(), 3);
        assert_eq!(s.family_size_histogram.get(&3), Some(&1));
        assert_eq!(s.families, 1);
        let mutants = v.units().iter().filter(|u| u.mut_parent.is_some()).count();
        assert_eq!(mutants, 2);
        assert_eq!(s.mutated_ratio_vocab, 2.0 / v.len() as f64);
        assert_eq!(s.family_coverage, 3.0 / v.len() as f64);
        assert_eq!(s.singletons + 3, v.len());
        assert!(s.observed.is_none());
        // restricted to the three family members, two are mutants
        let members = [v.id_of("HTGEKPY").unwrap(), v.id_of("HTGERPY").unwrap(), v.id_of("HTGEKPF").unwrap()];
        let m = members.iter().filter(|&&i| v.get(i).unwrap().mut_parent.is_some()).count();
        assert_eq!(m as f64 / 3.0, 2.0 / 3.0);
    }

    #[test]
    fn no_mutants() {
        let v = Vocabulary::from_alphabet(*b"ACD").unwrap();
        let c = Corpus::from_sequences(["ACDDA"]).unwrap();
        let s = vocab_stats(&v, Some(&c)).unwrap();
        assert_eq!(s.mutated_ratio_vocab, 0.0);
        assert_eq!(s.family_coverage, 0.0);
        assert_eq!(s.singletons, 3);
        assert!(s.family_size_histogram.is_empty());
        let o = s.observed.unwrap();
        assert_eq!(o.occurrences, 5);
        assert_eq!(o.mutated_ratio_observed, 0.0);
        assert_eq!(o.observed_length_mean, 1.0);
        assert_eq!(o.observed_length_var, 0.0);
    }

    #[test]
    fn only_roots_observed() {
        let v = htgekpy_fragment();
        let c = Corpus::from_sequences(["HTGEKPY", "HTGEKPYHTGEKPY"]).unwrap();
        let s = vocab_stats(&v, Some(&c)).unwrap();
        assert_eq!(s.observed.as_ref().unwrap().mutated_ratio_observed, 0.0);
        let c = Corpus::from_sequences(["HTGEKPY", "HTGERPY"]).unwrap();
        let s = vocab_stats(&v, Some(&c)).unwrap();
        assert_eq!(s.observed.unwrap().mutated_ratio_observed, 0.5);
    }

    #[test]
    fn identity_examples() {
        let a = Vocabulary::from_strings(["A", "B", "C", "D"]).unwrap();
        let b = Vocabulary::from_strings(["A", "B", "X", "Y"]).unwrap();
        let d = Vocabulary::from_strings(["E", "F", "G", "H"]).unwrap();
        assert_eq!(vocab_identity(&a, &a), 1.0);
        assert_eq!(vocab_identity(&a, &d), 0.0);
        assert_eq!(vocab_identity(&a, &b), 0.5);
        assert_eq!(vocab_identity(&b, &a), 0.5);
        let small = Vocabulary::from_strings(["A", "B"]).unwrap();
        assert_eq!(vocab_identity(&a, &small), 1.0);
    }

    #[test]
    fn zipf_ordering() {
        let v = Vocabulary::from_alphabet(*b"XYZ").unwrap();
        let counts = [4, 2, 1];
        let rows = zipf_rows(&v, &counts);
        let got: Vec<(usize, &str, u64)> = rows.iter().map(|r| (r.rank, r.unit.as_str(), r.frequency)).collect();
        assert_eq!(got, [(1, "X", 4), (2, "Y", 2), (3, "Z", 1)]);
        let v = Vocabulary::from_alphabet(*b"ZYX").unwrap();
        let rows = zipf_rows(&v, &[3, 3, 3]);
        let names: Vec<&str> = rows.iter().map(|r| r.unit.as_str()).collect();
        assert_eq!(names, ["X", "Y", "Z"]);
        let rows = zipf_rows(&v, &[0, 1, 0]);
        assert_eq!(rows.len(), 1);
        let mut csv = Vec::new();
        write_zipf_csv(&rows, &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), "rank,unit,frequency\n1,Y,1\n");
    }

    #[test]
    fn shared_usage_matches_brute_force() {
        let mut v = Vocabulary::from_alphabet(*b"ACK").unwrap();
        v.push_merge((0, 1)).unwrap();
        v.push_merge((3, 2)).unwrap();
        let other = Vocabulary::from_strings(["A", "AC", "Q"]).unwrap();
        let c = Corpus::from_sequences(["ACKACAK", "KKAC"]).unwrap();
        let counts = unit_counts(&v, &c).unwrap();
        let enc = Encoder::new(&v).encode_corpus(&c).unwrap();
        let (mut shared, mut total) = (0, 0);
        for id in enc.iter().flatten() {
            total += 1;
            if ["A", "AC", "Q"].contains(&v.string(*id)) {
                shared += 1;
            }
        }
        assert_eq!(shared_usage_ratio(&v, &counts, &other), shared as f64 / total as f64);
    }

    #[test]
    fn random_vocab_matches_lengths() {
        let mut reference = Vocabulary::from_alphabet(*b"ACDEFGHIKLMNPQRSTVWY").unwrap();
        for i in 0..30u32 {
            reference.push_merge((i % 20, (i * 7) % 20)).ok();
        }
        let r1 = random_vocab(&reference, 9).unwrap();
        let r2 = random_vocab(&reference, 9).unwrap();
        assert_eq!(r1, r2);
        let lens = |v: &Vocabulary| {
            let mut l: Vec<usize> = v.units().iter().map(|u| u.string.len()).collect();
            l.sort();
            l
        };
        assert_eq!(lens(&r1), lens(&reference));
        assert_ne!(random_vocab(&reference, 10).unwrap().units(), r1.units());
        r1.validate().unwrap();
    }

    #[test]
    fn histogram_csv() {
        let v = htgekpy_fragment();
        let s = vocab_stats(&v, None).unwrap();
        let mut out = Vec::new();
        s.write_histogram_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("family_size,count\n1,{}\n3,1\n", v.len() - 3));
    }
}
