//! Point-mutation analyses over a trained genealogy: the SAME-sibling rate
//! of labeled variants, generation of masked-residue queries that pit a
//! sibling-derived residue against an alternative one, and win rates over
//! the logits a masked language model assigns to those residues.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::matrices::{SubstitutionMatrix, STANDARD_RESIDUES};
use crate::segmenter::{unit_in, Encoder};
use crate::vocabulary::{UnitId, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariantRecord {
    pub seq_id: String,
    pub sequence: String,
    /// 1-based.
    pub pos: usize,
    pub ref_res: u8,
    pub alt: u8,
    pub label: String,
}

impl VariantRecord {
    pub fn mutated(&self) -> Vec<u8> {
        let mut s = self.sequence.clone().into_bytes();
        s[self.pos - 1] = self.alt;
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedRow {
    pub line: usize,
    pub row: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VariantSet {
    pub records: Vec<VariantRecord>,
    pub rejects: Vec<RejectedRow>,
    pub duplicates: usize,
}

impl VariantSet {
    pub fn write_rejects<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "line\trow\treason")?;
        for r in &self.rejects {
            writeln!(w, "{}\t{}\t{}", r.line, r.row.replace('\t', " "), r.reason)?;
        }
        Ok(())
    }
}

const VARIANT_COLUMNS: [&str; 5] = ["seq_id", "pos", "ref", "alt", "label"];

fn single_residue(field: &str) -> Option<u8> {
    match field.trim().as_bytes() {
        [b] if b.is_ascii_alphabetic() => Some(b.to_ascii_uppercase()),
        _ => None,
    }
}

/// Parses a variant table (tab-separated, header naming at least `seq_id`,
/// `pos`, `ref`, `alt`, `label`) against the sequences of `corpus`.
/// Rows that do not match their sequence go to the rejects; repeated
/// `(seq_id, pos, alt)` rows keep the first occurrence. Records come out
/// sorted by sequence id and position.
pub fn parse_variants(text: &str, corpus: &Corpus, path: &str) -> Result<VariantSet> {
    let table_err = |line: usize, msg: String| Error::Table { path: path.to_string(), line, msg };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Err(table_err(1, "empty variant table".into()));
    };
    let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(VARIANT_COLUMNS) {
        *slot = cols
            .iter()
            .position(|c| *c == name)
            .ok_or_else(|| table_err(1, format!("missing column '{name}'")))?;
    }
    let sequences: HashMap<&str, &str> = corpus.records.iter().map(|r| (r.id.as_str(), r.seq_str())).collect();

    let mut set = VariantSet::default();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        let get = |k: usize| fields.get(idx[k]).map(|s| s.trim()).unwrap_or("");
        let reject = |reason: String| RejectedRow { line: lineno, row: line.to_string(), reason };
        let seq_id = get(0);
        let Some(&sequence) = sequences.get(seq_id) else {
            return Err(table_err(lineno, format!("sequence '{seq_id}' not found in the FASTA")));
        };
        let Ok(pos) = get(1).parse::<usize>() else {
            set.rejects.push(reject(format!("position '{}' is not a positive integer", get(1))));
            continue;
        };
        let (Some(ref_res), Some(alt)) = (single_residue(get(2)), single_residue(get(3))) else {
            set.rejects.push(reject("ref and alt must be single residues".into()));
            continue;
        };
        if pos == 0 || pos > sequence.len() {
            set.rejects.push(reject(format!("position {pos} is outside 1..={}", sequence.len())));
            continue;
        }
        let actual = sequence.as_bytes()[pos - 1];
        if actual != ref_res {
            set.rejects.push(reject(format!(
                "reference mismatch: sequence has {} at {pos}, row says {}",
                actual as char, ref_res as char
            )));
            continue;
        }
        if alt == ref_res {
            set.rejects.push(reject("alt equals ref".into()));
            continue;
        }
        if !seen.insert((seq_id.to_string(), pos, alt)) {
            set.duplicates += 1;
            continue;
        }
        set.records.push(VariantRecord {
            seq_id: seq_id.to_string(),
            sequence: sequence.to_string(),
            pos,
            ref_res,
            alt,
            label: get(4).to_string(),
        });
    }
    set.records.sort_by(|a, b| a.seq_id.cmp(&b.seq_id).then(a.pos.cmp(&b.pos)).then(a.alt.cmp(&b.alt)));
    Ok(set)
}

pub fn load_variants(path: impl AsRef<std::path::Path>, corpus: &Corpus) -> Result<VariantSet> {
    let path = path.as_ref();
    let text = crate::error::read_file(path)?;
    parse_variants(&text, corpus, &path.display().to_string())
}

pub fn write_variants_tsv<W: Write>(records: &[VariantRecord], mut w: W) -> Result<()> {
    writeln!(w, "seq_id\tpos\tref\talt\tlabel")?;
    for r in records {
        writeln!(w, "{}\t{}\t{}\t{}\t{}", r.seq_id, r.pos, r.ref_res as char, r.alt as char, r.label)?;
    }
    Ok(())
}

/// `n` uniformly placed substitutions to a uniformly chosen different
/// standard residue, labeled `Random`.
pub fn random_variants(corpus: &Corpus, n: usize, seed: u64) -> Result<Vec<VariantRecord>> {
    if corpus.is_empty() {
        return Err(Error::invalid("cannot sample variants from an empty corpus"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let rec = &corpus.records[rng.gen_range(0..corpus.len())];
        let pos = rng.gen_range(1..=rec.seq.len());
        let ref_res = rec.seq[pos - 1];
        let choices: Vec<u8> = STANDARD_RESIDUES.iter().copied().filter(|&r| r != ref_res).collect();
        let alt = choices[rng.gen_range(0..choices.len())];
        out.push(VariantRecord {
            seq_id: rec.id.clone(),
            sequence: rec.seq_str().to_string(),
            pos,
            ref_res,
            alt,
            label: "Random".into(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LabelRate {
    pub records: usize,
    pub events: usize,
    /// Records whose mutated sequence contains a residue the vocabulary
    /// cannot encode; they count as non-events.
    pub unencodable: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiblingOutcome {
    pub unit_before: UnitId,
    pub unit_after: Option<UnitId>,
    pub event: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SiblingReport {
    pub per_label: BTreeMap<String, LabelRate>,
    /// One outcome per input record, in input order.
    pub outcomes: Vec<SiblingOutcome>,
}

impl SiblingReport {
    pub fn write_rates<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "label\trecords\tevents\tunencodable\trate")?;
        for (label, r) in &self.per_label {
            writeln!(w, "{label}\t{}\t{}\t{}\t{}", r.records, r.events, r.unencodable, r.rate)?;
        }
        Ok(())
    }

    pub fn write_details<W: Write>(&self, vocab: &Vocabulary, records: &[VariantRecord], mut w: W) -> Result<()> {
        writeln!(w, "seq_id\tpos\tref\talt\tlabel\tunit_before\tunit_after\tsame_family")?;
        for (r, o) in records.iter().zip(&self.outcomes) {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.seq_id,
                r.pos,
                r.ref_res as char,
                r.alt as char,
                r.label,
                vocab.string(o.unit_before),
                o.unit_after.map_or("-", |u| vocab.string(u)),
                u8::from(o.event)
            )?;
        }
        Ok(())
    }
}

/// For each record, whether the units covering the mutated position before
/// and after the substitution belong to the same family of size >= 2.
pub fn same_sibling_rate(vocab: &Vocabulary, records: &[VariantRecord]) -> Result<SiblingReport> {
    let enc = Encoder::new(vocab);
    let mut originals: HashMap<&str, Vec<UnitId>> = HashMap::new();
    for r in records {
        if !originals.contains_key(r.seq_id.as_str()) {
            originals.insert(&r.seq_id, enc.encode(r.sequence.as_bytes())?);
        }
    }
    let outcomes: Vec<SiblingOutcome> = records
        .par_iter()
        .map(|r| -> Result<SiblingOutcome> {
            let before = &originals[r.seq_id.as_str()];
            let (u0, _) = unit_in(vocab, before, r.pos).expect("position validated on load");
            let Ok(after) = enc.encode(&r.mutated()) else {
                return Ok(SiblingOutcome { unit_before: u0, unit_after: None, event: false });
            };
            let (u1, _) = unit_in(vocab, &after, r.pos).expect("same length");
            let event = vocab.same_family(u0, u1)? && vocab.family_size(u0)? >= 2;
            Ok(SiblingOutcome { unit_before: u0, unit_after: Some(u1), event })
        })
        .collect::<Result<_>>()?;

    let mut per_label: BTreeMap<String, LabelRate> = BTreeMap::new();
    for (r, o) in records.iter().zip(&outcomes) {
        let e = per_label.entry(r.label.clone()).or_default();
        e.records += 1;
        e.events += usize::from(o.event);
        e.unencodable += usize::from(o.unit_after.is_none());
    }
    for e in per_label.values_mut() {
        e.rate = e.events as f64 / e.records as f64;
    }
    Ok(SiblingReport { per_label, outcomes })
}

/// One masked-residue comparison. Residues are single characters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedQuery {
    pub query_id: String,
    pub sequence: String,
    /// 1-based.
    pub mask_pos: usize,
    pub sib_residue: char,
    pub alt_residue: char,
    pub original_residue: char,
    pub random_residue: char,
    pub unit: String,
    pub sibling: String,
    pub alternative: String,
}

impl MaskedQuery {
    /// The same query with the sibling and alternative roles exchanged.
    pub fn swapped(&self) -> Self {
        let mut q = self.clone();
        std::mem::swap(&mut q.sib_residue, &mut q.alt_residue);
        std::mem::swap(&mut q.sibling, &mut q.alternative);
        q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryOptions {
    /// Alternatives must be vocabulary units.
    pub vocab_constraint: bool,
    /// Alternatives must be inserted after the sibling.
    pub order_constraint: bool,
}

impl Default for QueryOptions {
    fn default() -> Self {
        Self { vocab_constraint: true, order_constraint: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SkipReason {
    NoSingleSubstitutionSibling,
    NoQualifyingAlternative,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkipReason::NoSingleSubstitutionSibling => "no single-substitution sibling",
            SkipReason::NoQualifyingAlternative => "no qualifying alternative",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedOccurrence {
    pub seq_id: String,
    /// 1-based start of the unit occurrence.
    pub start: usize,
    pub unit: String,
    pub sibling: Option<String>,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryBatch {
    pub queries: Vec<MaskedQuery>,
    pub skipped: Vec<SkippedOccurrence>,
    /// Sibling pairs ignored because they differ at more than one position.
    pub multi_substitution_siblings: usize,
}

impl QueryBatch {
    pub fn write_skipped<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "seq_id\tstart\tunit\tsibling\treason")?;
        for s in &self.skipped {
            writeln!(w, "{}\t{}\t{}\t{}\t{}", s.seq_id, s.start, s.unit, s.sibling.as_deref().unwrap_or("-"), s.reason)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct SingleSub {
    sibling: UnitId,
    offset: usize,
    residue: u8,
}

/// Where two equal-length strings differ, if at exactly one offset.
fn single_difference(a: &[u8], b: &[u8]) -> Option<usize> {
    let mut diffs = a.iter().zip(b).enumerate().filter(|(_, (x, y))| x != y).map(|(i, _)| i);
    let first = diffs.next()?;
    diffs.next().is_none().then_some(first)
}

struct AlternativeIndex {
    /// (unit with one offset blanked, offset) to units, by insertion order.
    by_pattern: HashMap<(Vec<u8>, usize), Vec<UnitId>>,
}

impl AlternativeIndex {
    fn new(vocab: &Vocabulary) -> Self {
        let mut by_pattern: HashMap<(Vec<u8>, usize), Vec<UnitId>> = HashMap::new();
        for u in vocab.units() {
            let s = u.string.as_bytes();
            if s.len() < 2 {
                continue;
            }
            for k in 0..s.len() {
                let mut key = s.to_vec();
                key[k] = 0;
                by_pattern.entry((key, k)).or_default().push(u.id);
            }
        }
        Self { by_pattern }
    }

    fn variants_at(&self, unit: &[u8], k: usize) -> &[UnitId] {
        let mut key = unit.to_vec();
        key[k] = 0;
        self.by_pattern.get(&(key, k)).map_or(&[], Vec::as_slice)
    }
}

/// Masked-residue queries for every occurrence of every unit that has a
/// single-substitution SAME-sibling. For unit `u` with sibling `m`
/// differing at one offset, the alternative is the earliest-inserted unit
/// `w` that differs from `u` at that offset only, scores at least as well
/// as the sibling residue under `matrix`, was inserted after `m`, and lies
/// outside `u`'s family. Without the vocabulary constraint the alternative
/// is the best-scoring qualifying residue (ties alphabetical).
pub fn gen_plm_queries(
    vocab: &Vocabulary,
    corpus: &Corpus,
    matrix: &SubstitutionMatrix,
    opts: QueryOptions,
    seed: u64,
) -> Result<QueryBatch> {
    // single-substitution siblings of every unit in a family
    let mut subs: HashMap<UnitId, Vec<SingleSub>> = HashMap::new();
    let mut multi = 0usize;
    for family in vocab.families().into_iter().filter(|f| f.len() >= 2) {
        for &u in &family {
            let us = vocab.string(u).as_bytes();
            let mut list = Vec::new();
            for &m in family.iter().filter(|&&m| m != u) {
                let ms = vocab.string(m).as_bytes();
                match single_difference(us, ms) {
                    Some(offset) => list.push(SingleSub { sibling: m, offset, residue: ms[offset] }),
                    None => multi += 1,
                }
            }
            list.sort_by_key(|s| vocab.units()[s.sibling as usize].insertion_index);
            subs.insert(u, list);
        }
    }
    let index = AlternativeIndex::new(vocab);

    let enc = Encoder::new(vocab);
    let encoded = enc.encode_corpus(corpus)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut batch = QueryBatch { multi_substitution_siblings: multi / 2, ..Default::default() };
    for (rec, ids) in corpus.records.iter().zip(&encoded) {
        let mut start = 1;
        for &u in ids {
            let us = vocab.string(u).as_bytes();
            let here = start;
            start += us.len();
            let Some(list) = subs.get(&u) else { continue };
            if list.is_empty() {
                batch.skipped.push(SkippedOccurrence {
                    seq_id: rec.id.clone(),
                    start: here,
                    unit: vocab.string(u).to_string(),
                    sibling: None,
                    reason: SkipReason::NoSingleSubstitutionSibling,
                });
                continue;
            }
            for s in list {
                let original = us[s.offset];
                let alternative = find_alternative(vocab, matrix, &index, u, s, opts)?;
                let Some((alt_residue, alt_name)) = alternative else {
                    batch.skipped.push(SkippedOccurrence {
                        seq_id: rec.id.clone(),
                        start: here,
                        unit: vocab.string(u).to_string(),
                        sibling: Some(vocab.string(s.sibling).to_string()),
                        reason: SkipReason::NoQualifyingAlternative,
                    });
                    continue;
                };
                let pool: Vec<u8> = STANDARD_RESIDUES
                    .iter()
                    .copied()
                    .filter(|&r| r != original && r != s.residue)
                    .collect();
                let random = pool[rng.gen_range(0..pool.len())];
                batch.queries.push(MaskedQuery {
                    query_id: format!("q{}", batch.queries.len() + 1),
                    sequence: rec.seq_str().to_string(),
                    mask_pos: here + s.offset,
                    sib_residue: s.residue as char,
                    alt_residue: alt_residue as char,
                    original_residue: original as char,
                    random_residue: random as char,
                    unit: vocab.string(u).to_string(),
                    sibling: vocab.string(s.sibling).to_string(),
                    alternative: alt_name,
                });
            }
        }
    }
    Ok(batch)
}

fn find_alternative(
    vocab: &Vocabulary,
    matrix: &SubstitutionMatrix,
    index: &AlternativeIndex,
    u: UnitId,
    sub: &SingleSub,
    opts: QueryOptions,
) -> Result<Option<(u8, String)>> {
    let us = vocab.string(u).as_bytes();
    let original = us[sub.offset];
    let bar = matrix.score(original, sub.residue)?;
    let root = vocab.family_root(u)?;
    if opts.vocab_constraint {
        let sib_index = vocab.units()[sub.sibling as usize].insertion_index;
        for &w in index.variants_at(us, sub.offset) {
            let rec = &vocab.units()[w as usize];
            let r = rec.string.as_bytes()[sub.offset];
            if w == u || r == sub.residue || vocab.family_root(w)? == root {
                continue;
            }
            if opts.order_constraint && rec.insertion_index <= sib_index {
                continue;
            }
            if !matrix.contains(r) || matrix.score(original, r)? < bar {
                continue;
            }
            return Ok(Some((r, rec.string.clone())));
        }
        return Ok(None);
    }
    let mut best: Option<(i32, u8)> = None;
    for &r in STANDARD_RESIDUES {
        if r == original || r == sub.residue {
            continue;
        }
        let score = matrix.score(original, r)?;
        if score < bar {
            continue;
        }
        let mut candidate = us.to_vec();
        candidate[sub.offset] = r;
        if let Some(w) = vocab.id_of_bytes(&candidate) {
            if vocab.family_root(w)? == root {
                continue;
            }
        }
        if best.is_none_or(|(s, b)| score > s || (score == s && r < b)) {
            best = Some((score, r));
        }
    }
    Ok(best.map(|(_, r)| {
        let mut s = us.to_vec();
        s[sub.offset] = r;
        (r, String::from_utf8(s).expect("ASCII"))
    }))
}

pub fn write_queries<W: Write>(queries: &[MaskedQuery], mut w: W) -> Result<()> {
    for q in queries {
        serde_json::to_writer(&mut w, q).map_err(|e| Error::invalid(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_queries<R: BufRead>(r: R) -> Result<Vec<MaskedQuery>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let q: MaskedQuery = serde_json::from_str(&line)
            .map_err(|e| Error::Table { path: "queries".into(), line: i + 1, msg: e.to_string() })?;
        if q.mask_pos == 0 || q.mask_pos > q.sequence.len() {
            return Err(Error::Table { path: "queries".into(), line: i + 1, msg: "mask_pos outside the sequence".into() });
        }
        out.push(q);
    }
    Ok(out)
}

/// Logits at the masked position, keyed by residue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitRecord {
    pub query_id: String,
    pub logits: BTreeMap<char, f64>,
}

pub type LogitTable = HashMap<String, BTreeMap<char, f64>>;

pub fn read_logits<R: BufRead>(r: R) -> Result<LogitTable> {
    let mut out = HashMap::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LogitRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Table { path: "logits".into(), line: i + 1, msg: e.to_string() })?;
        if out.insert(rec.query_id.clone(), rec.logits).is_some() {
            return Err(Error::Table { path: "logits".into(), line: i + 1, msg: format!("duplicate query_id '{}'", rec.query_id) });
        }
    }
    Ok(out)
}

pub fn write_logits<W: Write>(records: &[LogitRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::invalid(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// A mean of wins (1), ties (1/2) and losses (0), kept as half-points so
/// that complementary comparisons sum to exactly one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct WinRate {
    pub comparisons: u64,
    pub half_points: u64,
}

impl WinRate {
    pub fn add(&mut self, a: f64, b: f64) -> f64 {
        let hp = if a > b {
            2
        } else if a == b {
            1
        } else {
            0
        };
        self.comparisons += 1;
        self.half_points += hp;
        hp as f64 / 2.0
    }

    pub fn rate(&self) -> f64 {
        if self.comparisons == 0 {
            f64::NAN
        } else {
            self.half_points as f64 / (2 * self.comparisons) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub query_id: String,
    pub sib_logit: f64,
    pub alt_logit: f64,
    pub win: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WinRateReport {
    /// Sibling residue against the alternative residue.
    pub mutation_vs_alternative: WinRate,
    /// Sibling residue against the original residue, when every query has it.
    pub mutation_vs_original: Option<WinRate>,
    /// Sibling residue against the random residue, when every query has it.
    pub mutation_vs_random: Option<WinRate>,
    pub per_query: Vec<QueryOutcome>,
}

impl WinRateReport {
    pub fn write_summary<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "comparison\tqueries\trate")?;
        let rows = [
            ("mutation_vs_alternative", Some(self.mutation_vs_alternative)),
            ("mutation_vs_original", self.mutation_vs_original),
            ("mutation_vs_random", self.mutation_vs_random),
        ];
        for (name, r) in rows {
            if let Some(r) = r {
                writeln!(w, "{name}\t{}\t{}", r.comparisons, r.rate())?;
            }
        }
        Ok(())
    }

    pub fn write_per_query<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "query_id\tsib_logit\talt_logit\twin")?;
        for q in &self.per_query {
            writeln!(w, "{}\t{}\t{}\t{}", q.query_id, q.sib_logit, q.alt_logit, q.win)?;
        }
        Ok(())
    }
}

pub fn compute_win_rate(queries: &[MaskedQuery], logits: &LogitTable) -> Result<WinRateReport> {
    let mut report = WinRateReport::default();
    let mut original = Some(WinRate::default());
    let mut random = Some(WinRate::default());
    for q in queries {
        let Some(l) = logits.get(&q.query_id) else {
            return Err(Error::invalid(format!("query '{}' has no logits", q.query_id)));
        };
        let get = |r: char| {
            l.get(&r)
                .copied()
                .ok_or_else(|| Error::invalid(format!("query '{}' has no logit for residue {r}", q.query_id)))
        };
        let sib = get(q.sib_residue)?;
        let alt = get(q.alt_residue)?;
        let win = report.mutation_vs_alternative.add(sib, alt);
        report.per_query.push(QueryOutcome { query_id: q.query_id.clone(), sib_logit: sib, alt_logit: alt, win });
        for (acc, residue) in [(&mut original, q.original_residue), (&mut random, q.random_residue)] {
            match (acc.as_mut(), l.get(&residue)) {
                (Some(a), Some(&x)) => {
                    a.add(sib, x);
                }
                _ => *acc = None,
            }
        }
    }
    report.mutation_vs_original = original;
    report.mutation_vs_random = random;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vocabulary, Corpus) {
        // CSK with sibling CSA, and an unrelated CSR inserted later
        let mut v = Vocabulary::from_alphabet(*b"ACEFKLRS").unwrap();
        let id = |v: &Vocabulary, s: &str| v.id_of(s).unwrap();
        v.push_merge((id(&v, "E"), id(&v, "L"))).unwrap();
        let cs = v.push_merge((id(&v, "C"), id(&v, "S"))).unwrap();
        let csk = v.push_merge((cs, id(&v, "K"))).unwrap();
        v.push_mutant((cs, id(&v, "A")), csk).unwrap();
        v.push_merge((id(&v, "A"), id(&v, "F"))).unwrap();
        v.push_merge((cs, id(&v, "R"))).unwrap();
        let c = Corpus::from_records(vec![crate::corpus::Record::new("p1", "ELCSKAF")]).unwrap();
        (v, c)
    }

    #[test]
    fn sibling_event_in_context() {
        let (v, c) = toy();
        let tsv = "seq_id\tpos\tref\talt\tlabel\np1\t5\tK\tA\tBenign\np1\t1\tE\tK\tBenign\n";
        let set = parse_variants(tsv, &c, "t").unwrap();
        assert_eq!(set.records.len(), 2);
        let rep = same_sibling_rate(&v, &set.records).unwrap();
        let b = &rep.per_label["Benign"];
        assert_eq!((b.records, b.events), (2, 1));
        assert_eq!(b.rate, 0.5);
        let o = &rep.outcomes[1];
        assert_eq!((v.string(o.unit_before), v.string(o.unit_after.unwrap())), ("CSK", "CSA"));
        assert!(o.event);
    }

    #[test]
    fn no_families_means_zero() {
        let (_, c) = toy();
        let v = Vocabulary::from_alphabet(*b"ACEFKLRS").unwrap();
        let records = random_variants(&c, 20, 3).unwrap();
        let records: Vec<_> = records.into_iter().filter(|r| v.id_of_bytes(&[r.alt]).is_some()).collect();
        let rep = same_sibling_rate(&v, &records).unwrap();
        assert!(rep.per_label.values().all(|r| r.rate == 0.0));
    }

    #[test]
    fn unencodable_alt_is_a_non_event() {
        let (v, c) = toy();
        let set = parse_variants("seq_id\tpos\tref\talt\tlabel\np1\t5\tK\tW\tX\n", &c, "t").unwrap();
        let rep = same_sibling_rate(&v, &set.records).unwrap();
        assert_eq!(rep.per_label["X"].unencodable, 1);
        assert_eq!(rep.per_label["X"].events, 0);
    }

    #[test]
    fn variant_table_hygiene() {
        let (_, c) = toy();
        let tsv = "label\tseq_id\tpos\tref\talt\n\
                   B\tp1\t5\tK\tA\n\
                   B\tp1\t5\tK\tA\n\
                   B\tp1\t5\tL\tA\n\
                   B\tp1\t9\tK\tA\n\
                   B\tp1\t5\tK\tK\n";
        let set = parse_variants(tsv, &c, "t").unwrap();
        assert_eq!(set.records.len(), 1);
        assert_eq!(set.duplicates, 1);
        assert_eq!(set.rejects.len(), 3);
        assert!(set.rejects[0].reason.contains("mismatch"));
        assert!(parse_variants("seq_id\tpos\tref\talt\n", &c, "t").is_err());
        assert!(parse_variants("seq_id\tpos\tref\talt\tlabel\nzz\t1\tA\tC\tB\n", &c, "t").is_err());
    }

    #[test]
    fn random_variant_rules() {
        let (_, c) = toy();
        let a = random_variants(&c, 50, 11).unwrap();
        assert_eq!(a, random_variants(&c, 50, 11).unwrap());
        assert!(a.iter().all(|r| r.alt != r.ref_res && r.label == "Random"));
        assert!(a.iter().all(|r| r.sequence.as_bytes()[r.pos - 1] == r.ref_res));
        assert!(random_variants(&c, 0, 11).unwrap().is_empty());
        assert!(random_variants(&Corpus::default(), 1, 1).is_err());
    }

    #[test]
    fn csk_query() {
        let (v, c) = toy();
        let m = SubstitutionMatrix::blosum62();
        let batch = gen_plm_queries(&v, &c, &m, QueryOptions::default(), 1).unwrap();
        assert_eq!(batch.queries.len(), 1, "{batch:?}");
        let q = &batch.queries[0];
        assert_eq!(q.sequence, "ELCSKAF");
        assert_eq!(q.mask_pos, 5);
        assert_eq!((q.sib_residue, q.alt_residue, q.original_residue), ('A', 'R', 'K'));
        assert_eq!((q.unit.as_str(), q.sibling.as_str(), q.alternative.as_str()), ("CSK", "CSA", "CSR"));
        assert!(q.random_residue != 'K' && q.random_residue != 'A');
    }

    #[test]
    fn order_and_vocab_constraints() {
        // CSR inserted before the sibling CSA
        let mut v = Vocabulary::from_alphabet(*b"ACEFKLRS").unwrap();
        let id = |v: &Vocabulary, s: &str| v.id_of(s).unwrap();
        let cs = v.push_merge((id(&v, "C"), id(&v, "S"))).unwrap();
        let csk = v.push_merge((cs, id(&v, "K"))).unwrap();
        v.push_merge((cs, id(&v, "R"))).unwrap();
        v.push_mutant((cs, id(&v, "A")), csk).unwrap();
        let c = Corpus::from_sequences(["ELCSKAF"]).unwrap();
        let m = SubstitutionMatrix::blosum62();
        let strict = gen_plm_queries(&v, &c, &m, QueryOptions::default(), 1).unwrap();
        assert!(strict.queries.is_empty());
        assert_eq!(strict.skipped[0].reason, SkipReason::NoQualifyingAlternative);
        let relaxed = QueryOptions { order_constraint: false, ..Default::default() };
        let q = gen_plm_queries(&v, &c, &m, relaxed, 1).unwrap();
        assert_eq!(q.queries[0].alternative, "CSR");
        let free = QueryOptions { vocab_constraint: false, order_constraint: false };
        let q = gen_plm_queries(&v, &c, &m, free, 1).unwrap();
        // K's best non-sibling substitutions under BLOSUM62 are R, Q, E (2 and 1s)
        assert_eq!(q.queries[0].alt_residue, 'R');
        for q in &q.queries {
            assert_ne!(q.alt_residue, q.sib_residue);
        }
    }

    #[test]
    fn multi_substitution_siblings_are_skipped() {
        let mut v = Vocabulary::from_alphabet(*b"ACKRS").unwrap();
        let id = |v: &Vocabulary, s: &str| v.id_of(s).unwrap();
        let cs = v.push_merge((id(&v, "C"), id(&v, "S"))).unwrap();
        let csk = v.push_merge((cs, id(&v, "K"))).unwrap();
        let ak = v.push_merge((id(&v, "A"), id(&v, "K"))).unwrap();
        let ar = v.push_merge((id(&v, "A"), id(&v, "R"))).unwrap();
        v.push_mutant((id(&v, "C"), ar), csk).unwrap();
        let _ = ak;
        let c = Corpus::from_sequences(["CSK"]).unwrap();
        let batch = gen_plm_queries(&v, &c, &SubstitutionMatrix::blosum62(), QueryOptions::default(), 1).unwrap();
        assert!(batch.queries.is_empty());
        assert_eq!(batch.multi_substitution_siblings, 1);
        assert_eq!(batch.skipped[0].reason, SkipReason::NoSingleSubstitutionSibling);
    }

    fn query(id: &str) -> MaskedQuery {
        MaskedQuery {
            query_id: id.into(),
            sequence: "ELCSKAF".into(),
            mask_pos: 5,
            sib_residue: 'A',
            alt_residue: 'R',
            original_residue: 'K',
            random_residue: 'W',
            unit: "CSK".into(),
            sibling: "CSA".into(),
            alternative: "CSR".into(),
        }
    }

    fn logits(entries: &[(&str, &[(char, f64)])]) -> LogitTable {
        entries.iter().map(|(id, l)| (id.to_string(), l.iter().copied().collect())).collect()
    }

    #[test]
    fn win_rate_examples() {
        let qs = [query("a"), query("b"), query("c")];
        let l = logits(&[
            ("a", &[('A', 2.0), ('R', 1.0)]),
            ("b", &[('A', 0.0), ('R', 1.0)]),
            ("c", &[('A', 1.5), ('R', 1.5)]),
        ]);
        let rep = compute_win_rate(&qs, &l).unwrap();
        let wins: Vec<f64> = rep.per_query.iter().map(|q| q.win).collect();
        assert_eq!(wins, [1.0, 0.0, 0.5]);
        assert_eq!(rep.mutation_vs_alternative.rate(), 0.5);
        assert!(rep.mutation_vs_original.is_none());
        assert!(compute_win_rate(&[query("zz")], &l).is_err());
    }

    #[test]
    fn original_and_random_columns() {
        let qs = [query("a")];
        let l = logits(&[("a", &[('A', 2.0), ('R', 1.0), ('K', 3.0), ('W', -1.0)])]);
        let rep = compute_win_rate(&qs, &l).unwrap();
        assert_eq!(rep.mutation_vs_original.unwrap().rate(), 0.0);
        assert_eq!(rep.mutation_vs_random.unwrap().rate(), 1.0);
    }

    #[test]
    fn file_round_trips() {
        let qs = vec![query("a"), query("b")];
        let mut buf = Vec::new();
        write_queries(&qs, &mut buf).unwrap();
        assert_eq!(read_queries(&buf[..]).unwrap(), qs);
        let recs = vec![LogitRecord { query_id: "a".into(), logits: [('A', 0.25), ('R', -1.5)].into_iter().collect() }];
        let mut buf = Vec::new();
        write_logits(&recs, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "{\"query_id\":\"a\",\"logits\":{\"A\":0.25,\"R\":-1.5}}\n");
        let table = read_logits(&buf[..]).unwrap();
        assert_eq!(table["a"][&'R'], -1.5);
        let dup = [buf.clone(), buf].concat();
        assert!(read_logits(&dup[..]).is_err());
    }
}
