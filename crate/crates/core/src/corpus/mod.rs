//! FASTA ingestion, dataset filters and the segmented training state.

pub(crate) mod seg_state;

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::Path;

pub use seg_state::{HeapEntry, SegState};

use crate::error::{Error, Result};
use crate::matrices::is_standard;
use crate::vocabulary::fnv1a64;

pub const DEFAULT_MAX_LEN: usize = 3000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub id: String,
    pub seq: Vec<u8>,
}

impl Record {
    pub fn new(id: impl Into<String>, seq: impl Into<Vec<u8>>) -> Self {
        Self { id: id.into(), seq: seq.into() }
    }

    pub fn seq_str(&self) -> &str {
        std::str::from_utf8(&self.seq).expect("sequences are ASCII")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub records: Vec<Record>,
}

impl Corpus {
    /// Builds a corpus from raw strings, naming records `seq1`, `seq2`, ...
    pub fn from_sequences<S: AsRef<str>>(seqs: impl IntoIterator<Item = S>) -> Result<Self> {
        let records = seqs
            .into_iter()
            .enumerate()
            .map(|(i, s)| Record::new(format!("seq{}", i + 1), s.as_ref().trim().to_ascii_uppercase()))
            .collect();
        let c = Corpus { records };
        c.check()?;
        Ok(c)
    }

    pub fn from_records(records: Vec<Record>) -> Result<Self> {
        let c = Corpus { records };
        c.check()?;
        Ok(c)
    }

    fn check(&self) -> Result<()> {
        for r in &self.records {
            if r.seq.is_empty() {
                return Err(Error::invalid(format!("sequence '{}' is empty", r.id)));
            }
            if let Some(&b) = r.seq.iter().find(|b| !b.is_ascii_graphic() || b.is_ascii_lowercase()) {
                return Err(Error::invalid(format!(
                    "sequence '{}' contains invalid character {:?}",
                    r.id, b as char
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The set of characters appearing in any sequence.
    pub fn alphabet(&self) -> BTreeSet<u8> {
        let mut seen = [false; 256];
        for r in &self.records {
            for &b in &r.seq {
                seen[b as usize] = true;
            }
        }
        (0..=255u8).filter(|&b| seen[b as usize]).collect()
    }

    pub fn residue_count(&self) -> usize {
        self.records.iter().map(|r| r.seq.len()).sum()
    }

    pub fn fingerprint(&self) -> u64 {
        fnv1a64(self.records.iter().map(|r| r.seq.as_slice()))
    }

    pub fn get(&self, id: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = crate::error::read_file(path.as_ref())?;
        load_fasta(&text)
    }

    pub fn write_fasta<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            writeln!(w, ">{}", r.id)?;
            for chunk in r.seq.chunks(60) {
                w.write_all(chunk)?;
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    }
}

/// Parses FASTA text. Record ids are the header up to the first whitespace;
/// sequence lines are concatenated, uppercased and stripped of whitespace.
pub fn load_fasta(text: &str) -> Result<Corpus> {
    let mut records: Vec<Record> = Vec::new();
    let mut header_line = 0;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if let Some(header) = line.strip_prefix('>') {
            if let Some(last) = records.last() {
                if last.seq.is_empty() {
                    return Err(Error::Fasta { line: header_line, msg: format!("empty sequence for '{}'", last.id) });
                }
            }
            let id = header.split_whitespace().next().unwrap_or("");
            if id.is_empty() {
                return Err(Error::Fasta { line: lineno, msg: "header without an identifier".into() });
            }
            records.push(Record::new(id, Vec::new()));
            header_line = lineno;
            continue;
        }
        if line.trim().is_empty() || line.starts_with(';') {
            continue;
        }
        let Some(rec) = records.last_mut() else {
            return Err(Error::Fasta { line: lineno, msg: "sequence data before any header".into() });
        };
        for b in line.bytes().filter(|b| !b.is_ascii_whitespace()) {
            if !b.is_ascii_graphic() || b == b'>' {
                return Err(Error::Fasta { line: lineno, msg: format!("invalid character {:?}", b as char) });
            }
            rec.seq.push(b.to_ascii_uppercase());
        }
    }
    if let Some(last) = records.last() {
        if last.seq.is_empty() {
            return Err(Error::Fasta { line: header_line, msg: format!("empty sequence for '{}'", last.id) });
        }
    }
    Ok(Corpus { records })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    TooLong { len: usize, max: usize },
    NonStandard { count: usize },
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::TooLong { len, max } => write!(f, "length {len} exceeds {max}"),
            RejectReason::NonStandard { count } => write!(f, "{count} non-standard residues"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RejectionReport {
    pub rejected: Vec<(String, RejectReason)>,
}

impl RejectionReport {
    /// TSV with columns `id` and `reason`.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "id\treason")?;
        for (id, reason) in &self.rejected {
            writeln!(w, "{id}\t{reason}")?;
        }
        Ok(())
    }
}

/// Drops sequences longer than `max_len` and sequences with more than one
/// residue outside the twenty standard amino acids.
pub fn filter_corpus(corpus: Corpus, max_len: usize) -> (Corpus, RejectionReport) {
    let mut report = RejectionReport::default();
    let mut kept = Vec::with_capacity(corpus.records.len());
    for r in corpus.records {
        if r.seq.len() > max_len {
            report.rejected.push((r.id, RejectReason::TooLong { len: r.seq.len(), max: max_len }));
            continue;
        }
        let nonstandard = r.seq.iter().filter(|&&b| !is_standard(b)).count();
        if nonstandard > 1 {
            report.rejected.push((r.id, RejectReason::NonStandard { count: nonstandard }));
            continue;
        }
        kept.push(r);
    }
    (Corpus { records: kept }, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fasta_basics() {
        let c = load_fasta(">p1\nMK\nLV\n").unwrap();
        assert_eq!(c.records, vec![Record::new("p1", "MKLV")]);
        let c = load_fasta(">a desc here\nmk\n").unwrap();
        assert_eq!(c.records, vec![Record::new("a", "MK")]);
        let c = load_fasta(">a\r\nM K\r\n\n>b\nLL\n").unwrap();
        assert_eq!(c.records, vec![Record::new("a", "MK"), Record::new("b", "LL")]);
    }

    #[test]
    fn fasta_errors() {
        assert!(matches!(load_fasta("MKLV"), Err(Error::Fasta { line: 1, .. })));
        assert!(matches!(load_fasta(">a\n>b\nMK\n"), Err(Error::Fasta { line: 1, .. })));
        assert!(matches!(load_fasta(">a\nMK\n>b\n"), Err(Error::Fasta { line: 3, .. })));
        assert!(load_fasta(">\nMK\n").is_err());
    }

    #[test]
    fn alphabet_is_exact() {
        let c = Corpus::from_sequences(["MKX", "LL"]).unwrap();
        assert_eq!(c.alphabet().into_iter().collect::<Vec<_>>(), b"KLMX".to_vec());
    }

    #[test]
    fn filters() {
        let long = "A".repeat(3001);
        let ok = "A".repeat(3000);
        let c = Corpus::from_sequences([long.as_str(), ok.as_str(), "MKXLV", "MXKXL"]).unwrap();
        let (kept, report) = filter_corpus(c, DEFAULT_MAX_LEN);
        let ids: Vec<&str> = kept.records.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["seq2", "seq3"]);
        assert_eq!(report.rejected.len(), 2);
        assert_eq!(report.rejected[0], ("seq1".into(), RejectReason::TooLong { len: 3001, max: 3000 }));
        assert_eq!(report.rejected[1], ("seq4".into(), RejectReason::NonStandard { count: 2 }));
        let mut tsv = Vec::new();
        report.write_tsv(&mut tsv).unwrap();
        assert_eq!(
            String::from_utf8(tsv).unwrap(),
            "id\treason\nseq1\tlength 3001 exceeds 3000\nseq4\t2 non-standard residues\n"
        );
    }
}
