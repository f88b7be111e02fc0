//! Mutation-aware merge training.
//!
//! Each iteration pops the most frequent adjacent pair, merges it into a new
//! unit and, for units of suitable length, enumerates substitution variants
//! of that unit. A variant joins the vocabulary as a mutational child when it
//! is similar enough to the parent under the substitution matrix and when
//! some split of it into two existing units occurs often enough in the
//! current segmentation. Accepted children are merged into the corpus
//! immediately, in enumeration order.

use std::fmt;

use crate::alignment;
use crate::corpus::{Corpus, SegState};
use crate::cutoff::Cutoff;
use crate::error::{Error, Result};
use crate::matrices::SubstitutionMatrix;
use crate::vocabulary::{Pair, UnitId, VocabMeta, Vocabulary};

pub const DEFAULT_VOCAB_SIZE: usize = 3200;
pub const DEFAULT_MIN_MUT_LEN: usize = 3;
pub const DEFAULT_MAX_MUT_LEN: usize = 12;

#[derive(Debug, Clone)]
pub struct TrainerConfig {
    pub vocab_size: usize,
    pub matrix: SubstitutionMatrix,
    pub align_cutoff: Cutoff,
    pub freq_cutoff: Cutoff,
    pub min_mut_len: usize,
    pub max_mut_len: usize,
    pub mutations: bool,
    /// Restrict substitution targets to the twenty standard residues.
    pub standard_targets_only: bool,
}

impl TrainerConfig {
    /// BLOSUM62, a = 0.7, f = 0.05, mutation lengths 3..=12.
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            matrix: SubstitutionMatrix::blosum62(),
            align_cutoff: "0.7".parse().expect("literal"),
            freq_cutoff: "0.05".parse().expect("literal"),
            min_mut_len: DEFAULT_MIN_MUT_LEN,
            max_mut_len: DEFAULT_MAX_MUT_LEN,
            mutations: true,
            standard_targets_only: false,
        }
    }

    pub fn without_mutations(mut self) -> Self {
        self.mutations = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.align_cutoff.is_zero() || self.align_cutoff.as_f64() > 1.0 {
            return Err(Error::Config(format!("alignment cut-off must be in (0, 1], got {}", self.align_cutoff)));
        }
        if self.freq_cutoff.as_f64() > 1.0 {
            return Err(Error::Config(format!("frequency cut-off must be in [0, 1], got {}", self.freq_cutoff)));
        }
        if self.min_mut_len > self.max_mut_len {
            return Err(Error::Config(format!(
                "min mutation length {} exceeds max {}",
                self.min_mut_len, self.max_mut_len
            )));
        }
        Ok(())
    }

    /// `PUMA(Matrix, a, f)`, or `BPE` when mutations are off.
    pub fn label(&self) -> String {
        if self.mutations {
            format!("PUMA({}, {}, {})", self.matrix.name(), self.align_cutoff, self.freq_cutoff)
        } else {
            "BPE".to_string()
        }
    }

    fn meta(&self, fingerprint: u64) -> VocabMeta {
        VocabMeta {
            label: self.label(),
            matrix: self.mutations.then(|| self.matrix.name().to_string()),
            align_cutoff: self.mutations.then_some(self.align_cutoff),
            freq_cutoff: self.mutations.then_some(self.freq_cutoff),
            vocab_size: self.vocab_size,
            mutations: self.mutations,
            min_mut_len: self.min_mut_len,
            max_mut_len: self.max_mut_len,
            standard_targets_only: self.standard_targets_only,
            corpus_fingerprint: format!("{fingerprint:016x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutantCandidate {
    pub parent: String,
    pub candidate: String,
    pub positional_score: i32,
    pub chosen_split: Option<Pair>,
    pub pair_freq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rejection {
    NoValidSplit,
    BelowThreshold { freq: u64, parent_freq: u64 },
    AlreadyPresent,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::NoValidSplit => f.write_str("no-valid-split"),
            Rejection::BelowThreshold { freq, parent_freq } => {
                write!(f, "below-threshold ({freq} vs parent {parent_freq})")
            }
            Rejection::AlreadyPresent => f.write_str("already-present"),
        }
    }
}

/// Substitution options for each position of a parent unit, best first.
#[derive(Debug, Clone)]
pub struct SubstitutionSpace {
    options: Vec<Vec<(u8, i32)>>,
    /// Best achievable score from each position to the end.
    suffix_best: Vec<i32>,
    pub self_score: i32,
}

impl SubstitutionSpace {
    pub fn new(matrix: &SubstitutionMatrix, parent: &[u8], standard_only: bool) -> Result<Self> {
        let mut options = Vec::with_capacity(parent.len());
        for &r in parent {
            let mut opts: Vec<(u8, i32)> = matrix
                .allowed_substitutions(r, standard_only)?
                .into_iter()
                .map(|b| Ok((b, matrix.score(r, b)?)))
                .collect::<Result<_>>()?;
            opts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            options.push(opts);
        }
        let mut suffix_best = vec![0; parent.len() + 1];
        for i in (0..parent.len()).rev() {
            suffix_best[i] = suffix_best[i + 1] + options[i].first().map_or(0, |o| o.1);
        }
        let self_score = alignment::self_score(matrix, parent)?;
        Ok(Self { options, suffix_best, self_score })
    }

    pub fn options(&self, position: usize) -> &[(u8, i32)] {
        &self.options[position]
    }
}

/// Every substitution variant of `parent` whose positional score reaches
/// `cutoff * self_score(parent)`, identity excluded, in depth-first order
/// (positions left to right, options by descending score then residue).
/// Branches that cannot reach the threshold are never expanded.
pub fn similar_variants(
    matrix: &SubstitutionMatrix,
    parent: &[u8],
    cutoff: Cutoff,
    standard_only: bool,
) -> Result<Vec<(Vec<u8>, i32)>> {
    let space = SubstitutionSpace::new(matrix, parent, standard_only)?;
    if space.self_score <= 0 {
        return Ok(Vec::new());
    }
    let need = cutoff.threshold_ceil(space.self_score as i64) as i32;
    let mut out = Vec::new();
    let mut buf = Vec::with_capacity(parent.len());
    dfs(&space, parent, need, 0, 0, &mut buf, &mut out);
    Ok(out)
}

fn dfs(
    space: &SubstitutionSpace,
    parent: &[u8],
    need: i32,
    pos: usize,
    score: i32,
    buf: &mut Vec<u8>,
    out: &mut Vec<(Vec<u8>, i32)>,
) {
    if pos == parent.len() {
        if buf.as_slice() != parent {
            out.push((buf.clone(), score));
        }
        return;
    }
    for &(b, s) in &space.options[pos] {
        // options are sorted, so later ones cannot do better
        if score + s + space.suffix_best[pos + 1] < need {
            break;
        }
        buf.push(b);
        dfs(space, parent, need, pos + 1, score + s, buf, out);
        buf.pop();
    }
}

/// Frequency gate for one similarity-passing candidate.
pub fn validate_candidate(
    parent: &str,
    candidate: &[u8],
    positional_score: i32,
    parent_pair_freq: u64,
    state: &SegState,
    vocab: &Vocabulary,
    freq_cutoff: Cutoff,
) -> std::result::Result<MutantCandidate, Rejection> {
    if vocab.id_of_bytes(candidate).is_some() {
        return Err(Rejection::AlreadyPresent);
    }
    let mut best: Option<(Pair, u64)> = None;
    for k in 1..candidate.len() {
        let Some(left) = vocab.id_of_bytes(&candidate[..k]) else { continue };
        let Some(right) = vocab.id_of_bytes(&candidate[k..]) else { continue };
        let count = state.pair_count((left, right));
        if best.is_none_or(|(_, c)| count > c) {
            best = Some(((left, right), count));
        }
    }
    let Some((split, freq)) = best else {
        return Err(Rejection::NoValidSplit);
    };
    if freq == 0 || !freq_cutoff.admits_count(freq, parent_pair_freq) {
        return Err(Rejection::BelowThreshold { freq, parent_freq: parent_pair_freq });
    }
    Ok(MutantCandidate {
        parent: parent.to_string(),
        candidate: String::from_utf8(candidate.to_vec()).expect("ASCII residues"),
        positional_score,
        chosen_split: Some(split),
        pair_freq: freq,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IterationReport {
    pub pair: Pair,
    pub pair_freq: u64,
    /// The merged unit, new or pre-existing.
    pub unit: UnitId,
    pub new_unit: bool,
    pub similar: usize,
    pub accepted: Vec<MutantCandidate>,
    /// Candidates that had a valid split but failed the gate.
    pub rejected: Vec<(String, Rejection)>,
    pub no_split: usize,
}

pub struct Trainer {
    cfg: TrainerConfig,
    vocab: Vocabulary,
    state: SegState,
    fingerprint: u64,
}

impl Trainer {
    pub fn new(corpus: &Corpus, cfg: TrainerConfig) -> Result<Self> {
        cfg.validate()?;
        if corpus.is_empty() {
            return Err(Error::Config("cannot train on an empty corpus".into()));
        }
        let alphabet = corpus.alphabet();
        if cfg.vocab_size < alphabet.len() {
            return Err(Error::Config(format!(
                "vocabulary size {} is smaller than the alphabet ({} characters)",
                cfg.vocab_size,
                alphabet.len()
            )));
        }
        let vocab = Vocabulary::from_alphabet(alphabet)?;
        let state = SegState::new(corpus, &vocab)?;
        Ok(Self { cfg, vocab, state, fingerprint: corpus.fingerprint() })
    }

    /// Resumes from an existing vocabulary and segmentation.
    pub fn from_parts(vocab: Vocabulary, state: SegState, cfg: TrainerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, vocab, state, fingerprint: 0 })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn state(&self) -> &SegState {
        &self.state
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.cfg
    }

    fn full(&self) -> bool {
        self.vocab.len() >= self.cfg.vocab_size
    }

    /// Runs one merge iteration. Returns `None` once the vocabulary is full
    /// or no adjacent pairs remain.
    pub fn step(&mut self) -> Option<IterationReport> {
        if self.full() {
            return None;
        }
        let (pair, pair_freq) = self.state.pop_max()?;
        let joined = format!("{}{}", self.vocab.string(pair.0), self.vocab.string(pair.1));
        let mut report = IterationReport { pair, pair_freq, ..Default::default() };

        if let Some(existing) = self.vocab.id_of(&joined) {
            self.vocab.push_extra_merge(pair, existing).expect("pair spells the unit");
            self.state.apply_merge(pair, existing, &self.vocab);
            report.unit = existing;
            return Some(report);
        }

        let parent = self.vocab.push_merge(pair).expect("popped pair refers to live units");
        self.state.apply_merge(pair, parent, &self.vocab);
        report.unit = parent;
        report.new_unit = true;

        let len = joined.len();
        if self.cfg.mutations && (self.cfg.min_mut_len..=self.cfg.max_mut_len).contains(&len) && !self.full() {
            self.expand_mutations(&joined, parent, pair_freq, &mut report);
        }
        self.state.compact_heap();
        Some(report)
    }

    fn expand_mutations(&mut self, parent_str: &str, parent: UnitId, pair_freq: u64, report: &mut IterationReport) {
        let variants = match similar_variants(
            &self.cfg.matrix,
            parent_str.as_bytes(),
            self.cfg.align_cutoff,
            self.cfg.standard_targets_only,
        ) {
            Ok(v) => v,
            Err(e) => {
                log::debug!("no mutation search for '{parent_str}': {e}");
                return;
            }
        };
        report.similar = variants.len();
        for (cand, score) in variants {
            if self.full() {
                break;
            }
            match validate_candidate(
                parent_str,
                &cand,
                score,
                pair_freq,
                &self.state,
                &self.vocab,
                self.cfg.freq_cutoff,
            ) {
                Ok(accepted) => {
                    let split = accepted.chosen_split.expect("accepted candidates carry a split");
                    let child = self.vocab.push_mutant(split, parent).expect("split units exist");
                    self.state.apply_merge(split, child, &self.vocab);
                    report.accepted.push(accepted);
                }
                Err(Rejection::NoValidSplit) => report.no_split += 1,
                Err(r) => report.rejected.push((String::from_utf8_lossy(&cand).into_owned(), r)),
            }
        }
    }

    /// Trains until the vocabulary is full or no pairs remain.
    pub fn run(mut self) -> Vocabulary {
        let mut iterations = 0usize;
        while let Some(r) = self.step() {
            iterations += 1;
            if iterations.is_multiple_of(500) {
                log::info!(
                    "iteration {iterations}: {} units, last pair count {}",
                    self.vocab.len(),
                    r.pair_freq
                );
            }
        }
        self.into_vocabulary()
    }

    pub fn into_vocabulary(mut self) -> Vocabulary {
        self.vocab.meta = self.cfg.meta(self.fingerprint);
        self.vocab
    }

    pub fn into_parts(self) -> (Vocabulary, SegState) {
        (self.vocab, self.state)
    }
}

/// Trains a vocabulary on `corpus`.
pub fn train(corpus: &Corpus, cfg: TrainerConfig) -> Result<Vocabulary> {
    Ok(Trainer::new(corpus, cfg)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn variants(parent: &str, a: &str) -> Vec<String> {
        similar_variants(&SubstitutionMatrix::blosum62(), parent.as_bytes(), a.parse().unwrap(), false)
            .unwrap()
            .into_iter()
            .map(|(v, _)| String::from_utf8(v).unwrap())
            .collect()
    }

    #[test]
    fn triple_alanine() {
        assert!(variants("AAA", "0.9").is_empty());
        assert_eq!(variants("AAA", "0.7"), ["AAS", "ASA", "SAA"]);
    }

    #[test]
    fn htgekpy_similarity_set() {
        let v = variants("HTGEKPY", "0.7");
        for want in ["HTGZKPY", "HTGERPY", "HTGEKPF"] {
            assert!(v.iter().any(|s| s == want), "{want} missing");
        }
        assert!(!v.iter().any(|s| s == "ZSGQKPY"));
        assert!(!v.iter().any(|s| s == "HTGEKPY"));
        let m = SubstitutionMatrix::blosum62();
        for s in &v {
            assert!(alignment::similarity(&m, b"HTGEKPY", s.as_bytes()).unwrap() >= 0.7);
        }
    }

    #[test]
    fn unknown_residue_yields_nothing() {
        let m = SubstitutionMatrix::blosum62();
        assert!(similar_variants(&m, b"AUA", "0.7".parse().unwrap(), false).is_err());
        // X has a negative diagonal under BLOSUM62
        assert!(similar_variants(&m, b"XXX", "0.7".parse().unwrap(), false).unwrap().is_empty());
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainerConfig::new(100);
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.label(), "PUMA(BLOSUM62, 0.7, 0.05)");
        cfg.align_cutoff = "0".parse().unwrap();
        assert!(cfg.validate().is_err());
        cfg.align_cutoff = "1.5".parse().unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = TrainerConfig::new(100);
        cfg.freq_cutoff = "1.2".parse().unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = TrainerConfig::new(100);
        cfg.min_mut_len = 13;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn training_errors() {
        let empty = Corpus::default();
        assert!(Trainer::new(&empty, TrainerConfig::new(10)).is_err());
        let c = Corpus::from_sequences(["ABC"]).unwrap();
        assert!(Trainer::new(&c, TrainerConfig::new(2)).is_err());
    }

    #[test]
    fn alphabet_sized_target_stops_immediately() {
        let c = Corpus::from_sequences(["MKLV", "KLM"]).unwrap();
        let v = train(&c, TrainerConfig::new(4)).unwrap();
        assert_eq!(v.len(), 4);
        assert!(v.units().iter().all(|u| u.string.len() == 1));
        assert!(v.merge_sequence().is_empty());
    }

    #[test]
    fn stops_when_pairs_run_out() {
        let c = Corpus::from_sequences(["AB"]).unwrap();
        let v = train(&c, TrainerConfig::new(50).without_mutations()).unwrap();
        let strings: Vec<&str> = v.units().iter().map(|u| u.string.as_str()).collect();
        assert_eq!(strings, ["A", "B", "AB"]);
    }

    #[test]
    fn candidate_gate() {
        let mut v = Vocabulary::from_alphabet(*b"AS").unwrap();
        let aa = v.push_merge((0, 0)).unwrap();
        let aaa = v.push_merge((aa, 0)).unwrap();
        let s = v.id_of("S").unwrap();
        let state = SegState::from_rows(vec![vec![aa, s], vec![aaa], vec![aaa], vec![aaa]], &v);
        let zero = Cutoff::ZERO;
        let half: Cutoff = "0.5".parse().unwrap();
        let check = |cand: &str, f: Cutoff| validate_candidate("AAA", cand.as_bytes(), 9, 3, &state, &v, f);

        let ok = check("AAS", zero).unwrap();
        assert_eq!(ok.chosen_split, Some((aa, s)));
        assert_eq!(ok.pair_freq, 1);
        assert_eq!(check("AAS", half), Err(Rejection::BelowThreshold { freq: 1, parent_freq: 3 }));
        // (S, AA) is a valid split that never occurs
        assert_eq!(check("SAA", zero), Err(Rejection::BelowThreshold { freq: 0, parent_freq: 3 }));
        assert_eq!(check("ASA", zero), Err(Rejection::NoValidSplit));
        assert_eq!(check("AAA", zero), Err(Rejection::AlreadyPresent));
    }

    #[test]
    fn split_ties_prefer_the_shortest_left_part() {
        let mut v = Vocabulary::from_alphabet(*b"KLM").unwrap();
        let (k, l, m) = (0, 1, 2);
        let kl = v.push_merge((k, l)).unwrap();
        let lm = v.push_merge((l, m)).unwrap();
        let state = SegState::from_rows(vec![vec![k, lm], vec![kl, m]], &v);
        let got = validate_candidate("KLL", b"KLM", 0, 1, &state, &v, Cutoff::ZERO).unwrap();
        assert_eq!(got.chosen_split, Some((k, lm)));
    }

    #[test]
    fn accepted_children_are_merged_immediately() {
        let seqs = ["HTGEKPYHTGEKPY"; 40].into_iter().chain(["HTGERPY"; 10]);
        let corpus = Corpus::from_sequences(seqs).unwrap();
        let mut cfg = TrainerConfig::new(200);
        cfg.freq_cutoff = "0.01".parse().unwrap();
        let mut t = Trainer::new(&corpus, cfg).unwrap();
        while let Some(r) = t.step() {
            for a in &r.accepted {
                let id = t.vocab().id_of(&a.candidate).unwrap();
                assert_eq!(t.vocab().get(id).unwrap().mut_parent, Some(r.unit));
                assert_eq!(t.state().pair_count(a.chosen_split.unwrap()), 0);
            }
            assert!(t.state().counts_consistent());
        }
        let v = t.into_vocabulary();
        v.validate().unwrap();
        v.validate_similarity(&SubstitutionMatrix::blosum62(), "0.7".parse().unwrap()).unwrap();
        assert!(v.units().iter().any(|u| u.mut_parent.is_some()), "{v}");
    }
}
