//! Unit vocabulary with its genealogy: hierarchical (merge) parents,
//! mutational parents and the ordered merge rules used for segmentation.
//!
//! # File format
//!
//! Newline-delimited JSON. The first line is `{"meta": {...}}`; every further
//! line is one unit record with the keys `id`, `string`, `insertion_index`,
//! `hier_parents`, `mut_parent`, `merge_rule`, in that order and sorted by
//! `insertion_index`. Merges that were applied to the training corpus but did
//! not create a new unit (their result already existed) follow the units as
//! `{"extra_merge": {"at", "left", "right", "result"}}` lines; `at` is the
//! vocabulary size when the merge ran.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alignment;
use crate::cutoff::Cutoff;
use crate::error::{Error, Result};
use crate::matrices::SubstitutionMatrix;

pub type UnitId = u32;
pub type Pair = (UnitId, UnitId);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub id: UnitId,
    pub string: String,
    pub insertion_index: u32,
    pub hier_parents: Option<Pair>,
    pub mut_parent: Option<UnitId>,
    pub merge_rule: Option<Pair>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtraMerge {
    pub at: u32,
    pub left: UnitId,
    pub right: UnitId,
    pub result: UnitId,
}

/// Training configuration echoed into the vocabulary file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabMeta {
    pub label: String,
    pub matrix: Option<String>,
    pub align_cutoff: Option<Cutoff>,
    pub freq_cutoff: Option<Cutoff>,
    pub vocab_size: usize,
    pub mutations: bool,
    pub min_mut_len: usize,
    pub max_mut_len: usize,
    pub standard_targets_only: bool,
    /// FNV-1a 64 of the concatenated training sequences, as 16 hex digits.
    pub corpus_fingerprint: String,
}

impl Default for VocabMeta {
    fn default() -> Self {
        Self {
            label: "custom".into(),
            matrix: None,
            align_cutoff: None,
            freq_cutoff: None,
            vocab_size: 0,
            mutations: false,
            min_mut_len: 0,
            max_mut_len: 0,
            standard_targets_only: false,
            corpus_fingerprint: String::new(),
        }
    }
}

/// One step of the merge replay used by the segmenter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergeStep {
    pub left: UnitId,
    pub right: UnitId,
    pub result: UnitId,
}

#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    pub meta: VocabMeta,
    units: Vec<UnitRecord>,
    extra_merges: Vec<ExtraMerge>,
    index: HashMap<String, UnitId>,
    children: Vec<Vec<UnitId>>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.meta == other.meta && self.units == other.units && self.extra_merges == other.extra_merges
    }
}

impl Vocabulary {
    /// A vocabulary holding one unit per character, in the given order.
    pub fn from_alphabet(alphabet: impl IntoIterator<Item = u8>) -> Result<Self> {
        let mut v = Vocabulary::default();
        for ch in alphabet {
            v.push_unit((ch as char).to_string(), None, None)?;
        }
        Ok(v)
    }

    /// A flat vocabulary of unrelated strings (no merge rules, no genealogy).
    pub fn from_strings<S: Into<String>>(strings: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut v = Vocabulary::default();
        for s in strings {
            v.push_unit(s.into(), None, None)?;
        }
        Ok(v)
    }

    fn push_unit(&mut self, string: String, merge: Option<Pair>, mut_parent: Option<UnitId>) -> Result<UnitId> {
        let id = self.units.len() as UnitId;
        if self.index.contains_key(&string) {
            return Err(Error::VocabInvariant { id, rule: format!("duplicate unit string '{string}'") });
        }
        if string.is_empty() {
            return Err(Error::VocabInvariant { id, rule: "empty unit string".into() });
        }
        self.index.insert(string.clone(), id);
        self.units.push(UnitRecord {
            id,
            string,
            insertion_index: id,
            hier_parents: merge,
            mut_parent,
            merge_rule: merge,
        });
        self.children.push(Vec::new());
        if let Some(p) = mut_parent {
            self.children[p as usize].push(id);
        }
        Ok(id)
    }

    fn concat(&self, (l, r): Pair) -> Result<String> {
        let left = self.get(l)?;
        let right = self.get(r)?;
        Ok(format!("{}{}", left.string, right.string))
    }

    /// Appends the unit produced by merging `pair`.
    pub fn push_merge(&mut self, pair: Pair) -> Result<UnitId> {
        let s = self.concat(pair)?;
        self.push_unit(s, Some(pair), None)
    }

    /// Appends a mutational child of `parent`, produced by merging `split`.
    pub fn push_mutant(&mut self, split: Pair, parent: UnitId) -> Result<UnitId> {
        self.get(parent)?;
        let s = self.concat(split)?;
        self.push_unit(s, Some(split), Some(parent))
    }

    /// Records a merge whose result already exists as a unit.
    pub fn push_extra_merge(&mut self, pair: Pair, result: UnitId) -> Result<()> {
        let s = self.concat(pair)?;
        if self.get(result)?.string != s {
            return Err(Error::VocabInvariant {
                id: result,
                rule: "extra merge does not spell its result".into(),
            });
        }
        self.extra_merges.push(ExtraMerge {
            at: self.units.len() as u32,
            left: pair.0,
            right: pair.1,
            result,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn units(&self) -> &[UnitRecord] {
        &self.units
    }

    pub fn extra_merges(&self) -> &[ExtraMerge] {
        &self.extra_merges
    }

    pub fn get(&self, id: UnitId) -> Result<&UnitRecord> {
        self.units.get(id as usize).ok_or(Error::UnknownUnit(id))
    }

    pub fn string(&self, id: UnitId) -> &str {
        &self.units[id as usize].string
    }

    pub fn id_of(&self, s: &str) -> Option<UnitId> {
        self.index.get(s).copied()
    }

    pub fn id_of_bytes(&self, s: &[u8]) -> Option<UnitId> {
        std::str::from_utf8(s).ok().and_then(|s| self.id_of(s))
    }

    pub fn contains(&self, s: &str) -> bool {
        self.index.contains_key(s)
    }

    pub fn mut_children(&self, id: UnitId) -> &[UnitId] {
        &self.children[id as usize]
    }

    pub fn family_root(&self, id: UnitId) -> Result<UnitId> {
        Ok(self.get(id)?.mut_parent.unwrap_or(id))
    }

    /// The family of `id`: its root plus every mutational child of the root,
    /// in insertion order.
    pub fn family_of(&self, id: UnitId) -> Result<Vec<UnitId>> {
        let root = self.family_root(id)?;
        let mut fam = Vec::with_capacity(1 + self.children[root as usize].len());
        fam.push(root);
        fam.extend_from_slice(&self.children[root as usize]);
        Ok(fam)
    }

    pub fn family_size(&self, id: UnitId) -> Result<usize> {
        let root = self.family_root(id)?;
        Ok(1 + self.children[root as usize].len())
    }

    /// Whether two units share a family.
    pub fn same_family(&self, a: UnitId, b: UnitId) -> Result<bool> {
        Ok(self.family_root(a)? == self.family_root(b)?)
    }

    /// Every family, keyed by root, in root insertion order.
    pub fn families(&self) -> Vec<Vec<UnitId>> {
        self.units
            .iter()
            .filter(|u| u.mut_parent.is_none())
            .map(|u| self.family_of(u.id).expect("root id is valid"))
            .collect()
    }

    /// Merge rules in the order they were applied during training.
    pub fn merge_sequence(&self) -> Vec<MergeStep> {
        let mut out = Vec::with_capacity(self.units.len() + self.extra_merges.len());
        let mut extras = self.extra_merges.iter().peekable();
        for u in &self.units {
            while let Some(e) = extras.next_if(|e| e.at <= u.insertion_index) {
                out.push(MergeStep { left: e.left, right: e.right, result: e.result });
            }
            if let Some((left, right)) = u.merge_rule {
                out.push(MergeStep { left, right, result: u.id });
            }
        }
        out.extend(extras.map(|e| MergeStep { left: e.left, right: e.right, result: e.result }));
        out
    }

    /// Single-character units, sorted.
    pub fn alphabet(&self) -> BTreeSet<u8> {
        self.units
            .iter()
            .filter(|u| u.string.len() == 1)
            .map(|u| u.string.as_bytes()[0])
            .collect()
    }

    /// Checks every structural invariant; used after loading.
    pub fn validate(&self) -> Result<()> {
        let mut seen: HashMap<&str, UnitId> = HashMap::new();
        for (pos, u) in self.units.iter().enumerate() {
            let fail = |rule: String| Error::VocabInvariant { id: u.id, rule };
            if u.id as usize != pos {
                return Err(fail(format!("id is not dense (found at position {pos})")));
            }
            if pos > 0 && u.insertion_index <= self.units[pos - 1].insertion_index {
                return Err(fail("insertion_index is not strictly increasing".into()));
            }
            if u.string.is_empty() || !u.string.bytes().all(|b| b.is_ascii_graphic()) {
                return Err(fail("unit string must be non-empty printable ASCII".into()));
            }
            if let Some(prev) = seen.insert(&u.string, u.id) {
                return Err(fail(format!("duplicate string '{}' (also unit {prev})", u.string)));
            }
            for (what, pair) in [("hier_parents", u.hier_parents), ("merge_rule", u.merge_rule)] {
                if let Some((l, r)) = pair {
                    if l >= u.id || r >= u.id {
                        return Err(fail(format!("{what} must refer to earlier units")));
                    }
                    let joined = format!("{}{}", self.units[l as usize].string, self.units[r as usize].string);
                    if joined != u.string {
                        return Err(fail(format!("{what} spell '{joined}', not '{}'", u.string)));
                    }
                }
            }
            if let Some(p) = u.mut_parent {
                let Some(parent) = self.units.get(p as usize) else {
                    return Err(fail(format!("mut_parent {p} does not exist")));
                };
                if parent.insertion_index >= u.insertion_index {
                    return Err(fail("mut_parent must be inserted earlier".into()));
                }
                if parent.mut_parent.is_some() {
                    return Err(fail("mut_parent must be a family root".into()));
                }
                if parent.string.len() != u.string.len() {
                    return Err(fail("mutational child differs in length from its parent".into()));
                }
            }
        }
        let n = self.units.len() as u32;
        let mut last_at = 0;
        for e in &self.extra_merges {
            let id = e.result;
            if e.at < last_at || e.at > n {
                return Err(Error::VocabInvariant { id, rule: "extra merge out of order".into() });
            }
            last_at = e.at;
            if e.left >= e.at || e.right >= e.at || e.result >= e.at {
                return Err(Error::VocabInvariant { id, rule: "extra merge refers to a later unit".into() });
            }
            let joined = format!("{}{}", self.string(e.left), self.string(e.right));
            if joined != self.string(e.result) {
                return Err(Error::VocabInvariant { id, rule: "extra merge does not spell its result".into() });
            }
        }
        Ok(())
    }

    /// Re-checks that each mutational child passes the similarity gate
    /// against its family root.
    pub fn validate_similarity(&self, matrix: &SubstitutionMatrix, cutoff: Cutoff) -> Result<()> {
        for u in &self.units {
            let Some(p) = u.mut_parent else { continue };
            let root = self.string(p).as_bytes();
            let child = u.string.as_bytes();
            let score = alignment::positional_score(matrix, root, child)?;
            let norm = alignment::self_score(matrix, root)?;
            if !cutoff.admits(score as i64, norm as i64) {
                return Err(Error::VocabInvariant {
                    id: u.id,
                    rule: format!("similarity {score}/{norm} to its root is below {cutoff}"),
                });
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        #[derive(Serialize)]
        struct Header<'a> {
            meta: &'a VocabMeta,
        }
        #[derive(Serialize)]
        struct Extra<'a> {
            extra_merge: &'a ExtraMerge,
        }
        writeln!(w, "{}", serde_json::to_string(&Header { meta: &self.meta }).map_err(json_err)?)?;
        for u in &self.units {
            writeln!(w, "{}", serde_json::to_string(u).map_err(json_err)?)?;
        }
        for e in &self.extra_merges {
            writeln!(w, "{}", serde_json::to_string(&Extra { extra_merge: e }).map_err(json_err)?)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io_at(path, e))?;
        self.write_to(f)
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            meta: VocabMeta,
        }
        #[derive(Deserialize)]
        struct Extra {
            extra_merge: ExtraMerge,
        }
        let mut lines = r.lines().enumerate().filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
        let Some((_, first)) = lines.next() else {
            return Err(Error::VocabFormat { line: 1, msg: "empty vocabulary file".into() });
        };
        let header: Header = serde_json::from_str(&first?)
            .map_err(|e| Error::VocabFormat { line: 1, msg: format!("bad meta header: {e}") })?;
        let mut v = Vocabulary { meta: header.meta, ..Default::default() };
        for (i, line) in lines {
            let line = line?;
            let fmt_err = |e: serde_json::Error| Error::VocabFormat { line: i + 1, msg: e.to_string() };
            if line.trim_start().starts_with("{\"extra_merge\"") {
                let e: Extra = serde_json::from_str(&line).map_err(fmt_err)?;
                v.extra_merges.push(e.extra_merge);
                continue;
            }
            if !v.extra_merges.is_empty() {
                return Err(Error::VocabFormat { line: i + 1, msg: "unit record after extra merges".into() });
            }
            let u: UnitRecord = serde_json::from_str(&line).map_err(fmt_err)?;
            v.units.push(u);
        }
        v.rebuild_indices()?;
        v.validate()?;
        Ok(v)
    }

    fn rebuild_indices(&mut self) -> Result<()> {
        self.index.clear();
        self.children = vec![Vec::new(); self.units.len()];
        for u in &self.units {
            if self.index.insert(u.string.clone(), u.id).is_some() {
                return Err(Error::VocabInvariant { id: u.id, rule: format!("duplicate string '{}'", u.string) });
            }
            if let Some(p) = u.mut_parent {
                match self.children.get_mut(p as usize) {
                    Some(c) => c.push(u.id),
                    None => {
                        return Err(Error::VocabInvariant { id: u.id, rule: format!("mut_parent {p} does not exist") })
                    }
                }
            }
        }
        Ok(())
    }

    /// Loads and validates a vocabulary file. When the meta names a bundled
    /// matrix and an alignment cut-off, the similarity gate is re-checked.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io_at(path, e))?;
        let v = Self::read_from(BufReader::new(f))?;
        if let (Some(name), Some(a)) = (&v.meta.matrix, v.meta.align_cutoff) {
            match SubstitutionMatrix::bundled(name) {
                Ok(m) => v.validate_similarity(&m, a)?,
                Err(_) => log::warn!("matrix '{name}' is not bundled; skipping similarity re-check"),
            }
        }
        Ok(v)
    }
}

impl fmt::Display for Vocabulary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} units)", self.meta.label, self.units.len())
    }
}

fn json_err(e: serde_json::Error) -> Error {
    Error::invalid(format!("serialization failed: {e}"))
}

/// 64-bit FNV-1a over the concatenated sequence bytes.
pub fn fnv1a64<'a>(chunks: impl IntoIterator<Item = &'a [u8]>) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for chunk in chunks {
        for &b in chunk {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    }
    h
}
