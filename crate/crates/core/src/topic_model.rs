//! Class-based TF-IDF over GO terms, with optional smoothing of the
//! document-term matrix along the vocabulary genealogy, and rank
//! correlation of the resulting term similarities against an external
//! embedding space.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::segmenter::Encoder;
use crate::vocabulary::Vocabulary;

/// Sparse vector: (index, value) sorted by index, no explicit zeros.
pub type SparseRow = Vec<(u32, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Aspect {
    MolecularFunction,
    BiologicalProcess,
    CellularComponent,
}

impl Aspect {
    pub const ALL: [Aspect; 3] = [Aspect::MolecularFunction, Aspect::BiologicalProcess, Aspect::CellularComponent];

    pub fn code(self) -> &'static str {
        match self {
            Aspect::MolecularFunction => "MF",
            Aspect::BiologicalProcess => "BP",
            Aspect::CellularComponent => "CC",
        }
    }
}

impl fmt::Display for Aspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Aspect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "MF" | "F" => Ok(Aspect::MolecularFunction),
            "BP" | "P" => Ok(Aspect::BiologicalProcess),
            "CC" | "C" => Ok(Aspect::CellularComponent),
            other => Err(Error::invalid(format!("unknown GO aspect '{other}' (expected MF, BP or CC)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoAnnotation {
    pub protein_id: String,
    pub go_id: String,
    pub aspect: Aspect,
}

/// Parses a tab-separated table with `protein_id`, `go_id` and `aspect`
/// columns (header required, extra columns ignored).
pub fn parse_annotations(text: &str, path: &str) -> Result<Vec<GoAnnotation>> {
    let err = |line: usize, msg: String| Error::Table { path: path.to_string(), line, msg };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Err(err(1, "empty annotation table".into()));
    };
    let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
    let find = |name: &str| cols.iter().position(|c| *c == name).ok_or_else(|| err(1, format!("missing column '{name}'")));
    let (pi, gi, ai) = (find("protein_id")?, find("go_id")?, find("aspect")?);
    let mut out = Vec::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.split('\t').map(str::trim).collect();
        let (Some(p), Some(g), Some(a)) = (f.get(pi), f.get(gi), f.get(ai)) else {
            return Err(err(i + 1, "too few columns".into()));
        };
        let aspect = a.parse().map_err(|e: Error| err(i + 1, e.to_string()))?;
        out.push(GoAnnotation { protein_id: p.to_string(), go_id: g.to_string(), aspect });
    }
    Ok(out)
}

pub fn load_annotations(path: impl AsRef<std::path::Path>) -> Result<Vec<GoAnnotation>> {
    let path = path.as_ref();
    parse_annotations(&crate::error::read_file(path)?, &path.display().to_string())
}

/// Reassigns proteins to annotation rows at random, keeping every term's
/// row count. Used as a null control.
pub fn shuffle_annotations(annotations: &[GoAnnotation], seed: u64) -> Vec<GoAnnotation> {
    let mut proteins: Vec<String> = annotations.iter().map(|a| a.protein_id.clone()).collect();
    proteins.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    annotations
        .iter()
        .zip(proteins)
        .map(|(a, p)| GoAnnotation { protein_id: p, go_id: a.go_id.clone(), aspect: a.aspect })
        .collect()
}

/// Segmented proteins: the "documents" and their term ids.
#[derive(Debug, Clone)]
pub struct Documents {
    pub ids: Vec<String>,
    pub rows: Vec<Vec<u32>>,
    pub term_names: Vec<String>,
}

impl Documents {
    pub fn from_vocab(vocab: &Vocabulary, corpus: &Corpus) -> Result<Self> {
        let rows = Encoder::new(vocab).encode_corpus(corpus)?;
        Ok(Self {
            ids: corpus.records.iter().map(|r| r.id.clone()).collect(),
            rows,
            term_names: vocab.units().iter().map(|u| u.string.clone()).collect(),
        })
    }

    /// Fixed-length segmentation into consecutive `k`-mers; a shorter tail
    /// becomes a term of its own.
    pub fn kmers(corpus: &Corpus, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("k-mer length must be positive".into()));
        }
        let mut names: Vec<String> = Vec::new();
        let mut index: HashMap<Vec<u8>, u32> = HashMap::new();
        let mut rows = Vec::with_capacity(corpus.len());
        for r in &corpus.records {
            let row = r
                .seq
                .chunks(k)
                .map(|chunk| {
                    *index.entry(chunk.to_vec()).or_insert_with(|| {
                        names.push(String::from_utf8_lossy(chunk).into_owned());
                        (names.len() - 1) as u32
                    })
                })
                .collect();
            rows.push(row);
        }
        Ok(Self { ids: corpus.records.iter().map(|r| r.id.clone()).collect(), rows, term_names: names })
    }

    pub fn n_terms(&self) -> usize {
        self.term_names.len()
    }
}

/// Documents that belong to at least one retained class of one aspect.
#[derive(Debug, Clone, PartialEq)]
pub struct DocTermMatrix {
    pub docs: Vec<String>,
    pub n_terms: usize,
    pub rows: Vec<SparseRow>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classes {
    pub aspect: Aspect,
    /// GO ids, sorted.
    pub names: Vec<String>,
    /// Row indices into the document-term matrix, sorted.
    pub members: Vec<Vec<usize>>,
    /// Terms dropped for having fewer than the minimum number of proteins.
    pub dropped: Vec<(String, usize)>,
    /// Annotation rows naming proteins absent from the documents.
    pub unknown_proteins: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassFilter {
    pub min_proteins: usize,
    pub undersample_cap: Option<usize>,
    pub seed: u64,
}

impl Default for ClassFilter {
    fn default() -> Self {
        Self { min_proteins: 100, undersample_cap: None, seed: 0 }
    }
}

fn count_row(row: &[u32]) -> SparseRow {
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for &t in row {
        *counts.entry(t).or_insert(0.0) += 1.0;
    }
    counts.into_iter().collect()
}

/// Builds the class sets of one aspect and the document-term matrix over
/// the proteins that remain in any class. Terms annotated to fewer than
/// `min_proteins` proteins are dropped; terms above `undersample_cap` keep
/// a seeded random subset of that size.
pub fn build_doc_term(
    docs: &Documents,
    annotations: &[GoAnnotation],
    aspect: Aspect,
    filter: ClassFilter,
) -> Result<(DocTermMatrix, Classes)> {
    let position: HashMap<&str, usize> = docs.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut by_term: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    let mut unknown = 0;
    for a in annotations.iter().filter(|a| a.aspect == aspect) {
        match position.get(a.protein_id.as_str()) {
            Some(&i) => {
                by_term.entry(&a.go_id).or_default().insert(i);
            }
            None => unknown += 1,
        }
    }
    if unknown > 0 {
        log::warn!("{unknown} {aspect} annotation rows name proteins that are not in the corpus");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(filter.seed);
    let mut kept: Vec<(String, Vec<usize>)> = Vec::new();
    let mut dropped = Vec::new();
    for (term, members) in by_term {
        if members.len() < filter.min_proteins {
            dropped.push((term.to_string(), members.len()));
            continue;
        }
        let mut members: Vec<usize> = members.into_iter().collect();
        if let Some(cap) = filter.undersample_cap {
            if members.len() > cap {
                members.shuffle(&mut rng);
                members.truncate(cap);
                members.sort_unstable();
            }
        }
        kept.push((term.to_string(), members));
    }
    if kept.is_empty() {
        return Err(Error::invalid(format!(
            "no {aspect} GO term has at least {} annotated proteins",
            filter.min_proteins
        )));
    }

    let used: BTreeSet<usize> = kept.iter().flat_map(|(_, m)| m.iter().copied()).collect();
    let used: Vec<usize> = used.into_iter().collect();
    let row_of: HashMap<usize, usize> = used.iter().enumerate().map(|(r, &d)| (d, r)).collect();
    let rows: Vec<SparseRow> = used.par_iter().map(|&d| count_row(&docs.rows[d])).collect();
    let dtm = DocTermMatrix { docs: used.iter().map(|&d| docs.ids[d].clone()).collect(), n_terms: docs.n_terms(), rows };
    let classes = Classes {
        aspect,
        names: kept.iter().map(|(t, _)| t.clone()).collect(),
        members: kept.into_iter().map(|(_, m)| m.iter().map(|d| row_of[d]).collect()).collect(),
        dropped,
        unknown_proteins: unknown,
    };
    Ok((dtm, classes))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphWeights {
    /// Hierarchical parent and child.
    pub alpha: f64,
    /// Mutational siblings.
    pub beta: f64,
    /// Mutational parent and child.
    pub theta: f64,
}

impl Default for GraphWeights {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 3.0, theta: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Relation {
    Hierarchical,
    MutationalParentChild,
    Siblings,
}

/// Symmetric weighted adjacency over vocabulary units.
#[derive(Debug, Clone, PartialEq)]
pub struct GenealogyGraph {
    pub n: usize,
    pub rows: Vec<SparseRow>,
}

impl GenealogyGraph {
    pub fn weight(&self, i: u32, j: u32) -> f64 {
        let row = &self.rows[i as usize];
        row.binary_search_by_key(&j, |e| e.0).map_or(0.0, |k| row[k].1)
    }

    pub fn edge_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Pairwise genealogical relations of a vocabulary. When two relations
/// link the same pair, siblings win over mutational parent and child,
/// which wins over hierarchical.
pub fn relations(vocab: &Vocabulary) -> BTreeMap<(u32, u32), Relation> {
    let mut rel: BTreeMap<(u32, u32), Relation> = BTreeMap::new();
    let mut put = |a: u32, b: u32, r: Relation| {
        if a == b {
            return;
        }
        let key = (a.min(b), a.max(b));
        let e = rel.entry(key).or_insert(r);
        *e = (*e).max(r);
    };
    for u in vocab.units() {
        if let Some((l, r)) = u.hier_parents {
            put(u.id, l, Relation::Hierarchical);
            put(u.id, r, Relation::Hierarchical);
        }
        if let Some(p) = u.mut_parent {
            put(u.id, p, Relation::MutationalParentChild);
        }
        let kids = vocab.mut_children(u.id);
        for (i, &a) in kids.iter().enumerate() {
            for &b in &kids[i + 1..] {
                put(a, b, Relation::Siblings);
            }
        }
    }
    rel
}

pub fn build_adjacency(vocab: &Vocabulary, w: GraphWeights) -> GenealogyGraph {
    let mut rows: Vec<SparseRow> = vec![Vec::new(); vocab.len()];
    for ((a, b), r) in relations(vocab) {
        let weight = match r {
            Relation::Hierarchical => w.alpha,
            Relation::MutationalParentChild => w.theta,
            Relation::Siblings => w.beta,
        };
        if weight != 0.0 {
            rows[a as usize].push((b, weight));
            rows[b as usize].push((a, weight));
        }
    }
    for row in &mut rows {
        row.sort_by_key(|e| e.0);
    }
    GenealogyGraph { n: vocab.len(), rows }
}

/// `D' = D ((1 - lambda) I + lambda A)`.
pub fn smooth(dtm: &DocTermMatrix, g: &GenealogyGraph, lambda: f64) -> Result<DocTermMatrix> {
    if dtm.n_terms != g.n {
        return Err(Error::invalid(format!(
            "document-term matrix has {} terms but the graph has {} nodes",
            dtm.n_terms, g.n
        )));
    }
    let rows = dtm
        .rows
        .par_iter()
        .map(|row| {
            let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
            for &(t, x) in row {
                *acc.entry(t).or_insert(0.0) += (1.0 - lambda) * x;
            }
            for &(s, x) in row {
                for &(t, a) in &g.rows[s as usize] {
                    *acc.entry(t).or_insert(0.0) += lambda * x * a;
                }
            }
            acc.into_iter().filter(|&(_, v)| v != 0.0).collect()
        })
        .collect();
    Ok(DocTermMatrix { docs: dtm.docs.clone(), n_terms: dtm.n_terms, rows })
}

/// One sparse c-TF-IDF vector per class, natural log.
#[derive(Debug, Clone, PartialEq)]
pub struct CTfIdfModel {
    pub classes: Vec<String>,
    pub vectors: Vec<SparseRow>,
    pub n_terms: usize,
}

pub fn ctfidf(dtm: &DocTermMatrix, classes: &Classes) -> CTfIdfModel {
    let m = dtm.docs.len() as f64;
    let class_freqs: Vec<BTreeMap<u32, f64>> = classes
        .members
        .par_iter()
        .map(|members| {
            let mut f: BTreeMap<u32, f64> = BTreeMap::new();
            for &d in members {
                for &(t, x) in &dtm.rows[d] {
                    *f.entry(t).or_insert(0.0) += x;
                }
            }
            f
        })
        .collect();
    let mut total = vec![0.0f64; dtm.n_terms];
    for f in &class_freqs {
        for (&t, &x) in f {
            total[t as usize] += x;
        }
    }
    let vectors = class_freqs
        .iter()
        .zip(&classes.names)
        .map(|(f, name)| {
            let size: f64 = f.values().sum();
            if size == 0.0 {
                log::warn!("class {name} has no term counts");
                return Vec::new();
            }
            f.iter()
                .filter(|&(&t, &x)| x != 0.0 && total[t as usize] != 0.0)
                .map(|(&t, &x)| (t, (x / size) * (1.0 + m / total[t as usize]).ln()))
                .collect()
        })
        .collect();
    CTfIdfModel { classes: classes.names.clone(), vectors, n_terms: dtm.n_terms }
}

impl CTfIdfModel {
    /// The highest-valued terms of every class: the top `fraction` of the
    /// term space (at least one), ties broken by term name.
    pub fn top_terms(&self, term_names: &[String], fraction: f64) -> Vec<(String, Vec<(String, f64)>)> {
        let k = ((self.n_terms as f64 * fraction).ceil() as usize).max(1);
        self.classes
            .iter()
            .zip(&self.vectors)
            .map(|(c, v)| {
                let mut items: Vec<(&str, f64)> = v.iter().map(|&(t, x)| (term_names[t as usize].as_str(), x)).collect();
                items.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
                (c.clone(), items.into_iter().take(k).map(|(n, x)| (n.to_string(), x)).collect())
            })
            .collect()
    }

    pub fn term_vectors(&self) -> TermVectors {
        TermVectors { terms: self.classes.clone(), vectors: self.vectors.clone() }
    }
}

pub fn write_top_terms<W: Write>(aspect: Aspect, top: &[(String, Vec<(String, f64)>)], mut w: W) -> Result<()> {
    for (class, items) in top {
        for (rank, (unit, value)) in items.iter().enumerate() {
            writeln!(w, "{aspect},{class},{},{unit},{value}", rank + 1)?;
        }
    }
    Ok(())
}

pub const TOP_TERMS_HEADER: &str = "aspect,go_id,rank,unit,value";

/// Named vectors, one per GO term.
#[derive(Debug, Clone, PartialEq)]
pub struct TermVectors {
    pub terms: Vec<String>,
    pub vectors: Vec<SparseRow>,
}

/// Per-protein embeddings: `protein_id` then whitespace-separated decimals,
/// one protein per line, all of one dimension.
pub fn parse_embeddings(text: &str, path: &str) -> Result<HashMap<String, Vec<f64>>> {
    let err = |line: usize, msg: String| Error::Table { path: path.to_string(), line, msg };
    let mut out = HashMap::new();
    let mut dim = None;
    for (i, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        let Some(id) = fields.next() else { continue };
        let v: Vec<f64> = fields
            .map(|f| f.parse::<f64>().map_err(|_| err(i + 1, format!("'{f}' is not a number"))))
            .collect::<Result<_>>()?;
        if v.is_empty() {
            return Err(err(i + 1, format!("protein '{id}' has an empty vector")));
        }
        match dim {
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => {
                return Err(err(i + 1, format!("dimension {} differs from {d}", v.len())));
            }
            _ => {}
        }
        if out.insert(id.to_string(), v).is_some() {
            return Err(err(i + 1, format!("duplicate protein '{id}'")));
        }
    }
    Ok(out)
}

pub fn load_embeddings(path: impl AsRef<std::path::Path>) -> Result<HashMap<String, Vec<f64>>> {
    let path = path.as_ref();
    parse_embeddings(&crate::error::read_file(path)?, &path.display().to_string())
}

pub fn write_embeddings<W: Write>(embeddings: &[(String, Vec<f64>)], mut w: W) -> Result<()> {
    for (id, v) in embeddings {
        write!(w, "{id}")?;
        for x in v {
            write!(w, " {x}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// GO id and its member protein ids.
pub type ClassMembers = (String, Vec<String>);

/// Mean embedding of each class's member proteins. Classes with a member
/// lacking an embedding are skipped and returned separately.
pub fn embed_go_vectors(
    embeddings: &HashMap<String, Vec<f64>>,
    class_members: &[(String, Vec<String>)],
) -> Result<(TermVectors, Vec<ClassMembers>)> {
    let mut dim = None;
    let mut terms = Vec::new();
    let mut vectors = Vec::new();
    let mut skipped = Vec::new();
    for (term, members) in class_members {
        let missing: Vec<String> = members.iter().filter(|p| !embeddings.contains_key(*p)).cloned().collect();
        if !missing.is_empty() || members.is_empty() {
            log::warn!("GO term {term}: {} member proteins lack embeddings; skipped", missing.len());
            skipped.push((term.clone(), missing));
            continue;
        }
        let mut sum: Vec<f64> = Vec::new();
        for p in members {
            let v = &embeddings[p];
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(Error::invalid(format!("embedding of '{p}' has dimension {} instead of {d}", v.len())));
                }
                _ => {}
            }
            if sum.is_empty() {
                sum = vec![0.0; v.len()];
            }
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
        }
        let n = members.len() as f64;
        terms.push(term.clone());
        vectors.push(sum.into_iter().enumerate().map(|(i, s)| (i as u32, s / n)).filter(|e| e.1 != 0.0).collect());
    }
    Ok((TermVectors { terms, vectors }, skipped))
}

fn dot(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    let (mut i, mut j, mut s) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                s += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    s
}

/// Cosine similarities of all pairs `i < j`, row-major.
pub fn cosine_upper_triangle(vectors: &[SparseRow]) -> Vec<f64> {
    let norms: Vec<f64> = vectors.iter().map(|v| dot(v, v).sqrt()).collect();
    (0..vectors.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let norms = &norms;
            (i + 1..vectors.len()).map(move |j| dot(&vectors[i], &vectors[j]) / (norms[i] * norms[j]))
        })
        .collect()
}

/// Ranks starting at 1, tied values sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Spearman correlation between the pairwise cosine similarities of two
/// vector sets over the same terms. Terms with a zero vector on either side
/// are excluded.
pub fn similarity_correlation(a: &TermVectors, b: &TermVectors) -> Result<f64> {
    let ta: BTreeSet<&String> = a.terms.iter().collect();
    let tb: BTreeSet<&String> = b.terms.iter().collect();
    if ta != tb {
        return Err(Error::invalid("vector sets cover different GO terms"));
    }
    let pos_b: HashMap<&String, usize> = b.terms.iter().enumerate().map(|(i, t)| (t, i)).collect();
    let mut va = Vec::new();
    let mut vb = Vec::new();
    for (i, t) in a.terms.iter().enumerate() {
        let j = pos_b[t];
        if a.vectors[i].is_empty() || b.vectors[j].is_empty() {
            log::warn!("GO term {t} has a zero vector; excluded");
            continue;
        }
        va.push(a.vectors[i].clone());
        vb.push(b.vectors[j].clone());
    }
    if va.len() < 3 {
        return Err(Error::invalid(format!("need at least 3 GO terms with non-zero vectors, have {}", va.len())));
    }
    let rho = spearman(&cosine_upper_triangle(&va), &cosine_upper_triangle(&vb));
    if rho.is_nan() {
        return Err(Error::invalid("similarities are constant; correlation undefined"));
    }
    Ok(rho)
}

/// Settings for one c-TF-IDF run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopicParams {
    pub filter: ClassFilter,
    pub lambda: f64,
    pub weights: GraphWeights,
}

impl Default for TopicParams {
    fn default() -> Self {
        Self { filter: ClassFilter::default(), lambda: 0.5, weights: GraphWeights::default() }
    }
}

#[derive(Debug, Clone)]
pub struct AspectModel {
    pub classes: Classes,
    pub dtm: DocTermMatrix,
    pub model: CTfIdfModel,
}

impl AspectModel {
    /// Member protein ids of every retained class.
    pub fn class_members(&self) -> Vec<(String, Vec<String>)> {
        self.classes
            .names
            .iter()
            .zip(&self.classes.members)
            .map(|(n, m)| (n.clone(), m.iter().map(|&d| self.dtm.docs[d].clone()).collect()))
            .collect()
    }
}

/// Class filtering, optional smoothing along `graph`, then c-TF-IDF.
pub fn fit_aspect(
    docs: &Documents,
    graph: Option<&GenealogyGraph>,
    annotations: &[GoAnnotation],
    aspect: Aspect,
    params: TopicParams,
) -> Result<AspectModel> {
    let (dtm, classes) = build_doc_term(docs, annotations, aspect, params.filter)?;
    let model = match graph {
        Some(g) => ctfidf(&smooth(&dtm, g, params.lambda)?, &classes),
        None => ctfidf(&dtm, &classes),
    };
    Ok(AspectModel { classes, dtm, model })
}

/// Correlation of a fitted model's class vectors with embedding means over
/// `members` (GO id and member protein ids), restricted to GO terms present
/// on both sides. Returns the correlation and the number of terms used.
pub fn correlate_with_embeddings(
    fitted: &AspectModel,
    members: &[(String, Vec<String>)],
    embeddings: &HashMap<String, Vec<f64>>,
) -> Result<(f64, usize)> {
    let (ev, _) = embed_go_vectors(embeddings, members)?;
    let tv = fitted.model.term_vectors();
    let common: BTreeSet<&String> = tv.terms.iter().filter(|t| ev.terms.contains(t)).collect();
    let pick = |v: &TermVectors| {
        let (terms, vectors): (Vec<String>, Vec<SparseRow>) =
            v.terms.iter().cloned().zip(v.vectors.iter().cloned()).filter(|(t, _)| common.contains(t)).unzip();
        TermVectors { terms, vectors }
    };
    let rho = similarity_correlation(&pick(&tv), &pick(&ev))?;
    Ok((rho, common.len()))
}
