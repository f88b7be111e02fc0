//! Amino-acid substitution matrices in the NCBI text layout.
//!
//! Four matrices ship with the crate (BLOSUM62, BLOSUM45, PAM70, PAM250).
//! Anything else in the same whitespace-table layout can be read with
//! [`SubstitutionMatrix::parse`].

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// The twenty standard amino acids, in the conventional matrix order.
pub const STANDARD_RESIDUES: &[u8; 20] = b"ARNDCQEGHILKMFPSTWYV";

const STOP: u8 = b'*';
const NO_INDEX: u8 = u8::MAX;

const BLOSUM62: &str = include_str!("../data/BLOSUM62");
const BLOSUM45: &str = include_str!("../data/BLOSUM45");
const PAM70: &str = include_str!("../data/PAM70");
const PAM250: &str = include_str!("../data/PAM250");

/// Names of the bundled matrices.
pub const BUNDLED: [&str; 4] = ["BLOSUM62", "BLOSUM45", "PAM70", "PAM250"];

pub fn is_standard(residue: u8) -> bool {
    STANDARD_RESIDUES.contains(&residue)
}

/// Symmetric integer log-odds table over residue symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubstitutionMatrix {
    name: String,
    symbols: Vec<u8>,
    index: [u8; 256],
    scores: Vec<i32>,
}

impl SubstitutionMatrix {
    /// Loads one of the bundled matrices by (case-insensitive) name.
    pub fn bundled(name: &str) -> Result<Self> {
        let upper = name.to_ascii_uppercase();
        let text = match upper.as_str() {
            "BLOSUM62" => BLOSUM62,
            "BLOSUM45" => BLOSUM45,
            "PAM70" => PAM70,
            "PAM250" => PAM250,
            _ => return Err(Error::Config(format!("no bundled matrix named '{name}'"))),
        };
        Self::parse(&upper, text)
    }

    pub fn blosum62() -> Self {
        Self::bundled("BLOSUM62").expect("bundled BLOSUM62 is valid")
    }

    /// Resolves a bundled name first, then falls back to reading a file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if BUNDLED.iter().any(|b| b.eq_ignore_ascii_case(name_or_path)) {
            return Self::bundled(name_or_path);
        }
        let path = Path::new(name_or_path);
        let text = crate::error::read_file(path)?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or(name_or_path);
        Self::parse(name, &text)
    }

    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut header: Option<(usize, Vec<u8>)> = None;
        let mut rows: Vec<Option<Vec<i32>>> = Vec::new();
        let mut row_lines: Vec<usize> = Vec::new();
        let mut index = [NO_INDEX; 256];

        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::MatrixParse { line: lineno, msg };
            let mut fields = line.split_whitespace();

            let Some((_, symbols)) = &header else {
                let mut symbols = Vec::new();
                for tok in fields {
                    let sym = parse_symbol(tok).map_err(&err)?;
                    if index[sym as usize] != NO_INDEX {
                        return Err(err(format!("duplicate symbol '{}' in header", sym as char)));
                    }
                    index[sym as usize] = symbols.len() as u8;
                    symbols.push(sym);
                }
                if symbols.len() >= NO_INDEX as usize {
                    return Err(err("too many symbols".into()));
                }
                rows = vec![None; symbols.len()];
                row_lines = vec![0; symbols.len()];
                header = Some((lineno, symbols));
                continue;
            };

            let label = fields.next().expect("non-empty line has a first field");
            let sym = parse_symbol(label).map_err(&err)?;
            let slot = index[sym as usize];
            if slot == NO_INDEX {
                return Err(err(format!("row label '{}' is not in the header", sym as char)));
            }
            if rows[slot as usize].is_some() {
                return Err(err(format!("duplicate row for symbol '{}'", sym as char)));
            }
            let mut cells = Vec::with_capacity(symbols.len());
            for tok in fields {
                let v: i32 = tok
                    .parse()
                    .map_err(|_| err(format!("non-integer cell '{tok}'")))?;
                cells.push(v);
            }
            if cells.len() != symbols.len() {
                return Err(err(format!(
                    "row '{}' has {} cells, expected {}",
                    sym as char,
                    cells.len(),
                    symbols.len()
                )));
            }
            rows[slot as usize] = Some(cells);
            row_lines[slot as usize] = lineno;
        }

        let Some((header_line, symbols)) = header else {
            return Err(Error::MatrixParse { line: 0, msg: "no header row".into() });
        };
        let n = symbols.len();
        let mut scores = Vec::with_capacity(n * n);
        for (slot, row) in rows.iter().enumerate() {
            match row {
                Some(cells) => scores.extend_from_slice(cells),
                None => {
                    return Err(Error::MatrixParse {
                        line: header_line,
                        msg: format!("missing row for symbol '{}'", symbols[slot] as char),
                    })
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if scores[i * n + j] != scores[j * n + i] {
                    return Err(Error::MatrixParse {
                        line: row_lines[i].max(row_lines[j]),
                        msg: format!(
                            "asymmetric entry: score({},{})={} but score({},{})={}",
                            symbols[i] as char,
                            symbols[j] as char,
                            scores[i * n + j],
                            symbols[j] as char,
                            symbols[i] as char,
                            scores[j * n + i]
                        ),
                    });
                }
            }
            if is_standard(symbols[i]) && scores[i * n + i] <= 0 {
                return Err(Error::MatrixParse {
                    line: row_lines[i],
                    msg: format!("diagonal score for '{}' is not positive", symbols[i] as char),
                });
            }
        }

        Ok(Self { name: name.to_string(), symbols, index, scores })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    pub fn contains(&self, residue: u8) -> bool {
        self.index[residue as usize] != NO_INDEX
    }

    fn slot(&self, residue: u8) -> Result<usize> {
        match self.index[residue as usize] {
            NO_INDEX => Err(Error::UnknownSymbol(residue as char)),
            i => Ok(i as usize),
        }
    }

    pub fn score(&self, a: u8, b: u8) -> Result<i32> {
        let (i, j) = (self.slot(a)?, self.slot(b)?);
        Ok(self.scores[i * self.symbols.len() + j])
    }

    /// Residues `b` with `score(a, b) >= 0`, in header order. The stop symbol
    /// is never a target; with `standard_only` ambiguity codes are dropped too.
    pub fn allowed_substitutions(&self, a: u8, standard_only: bool) -> Result<Vec<u8>> {
        let i = self.slot(a)?;
        let n = self.symbols.len();
        Ok(self
            .symbols
            .iter()
            .enumerate()
            .filter(|&(j, &b)| {
                b != STOP
                    && (!standard_only || is_standard(b) || b == a)
                    && self.scores[i * n + j] >= 0
            })
            .map(|(_, &b)| b)
            .collect())
    }

    pub fn max_diagonal(&self) -> i32 {
        let n = self.symbols.len();
        (0..n).map(|i| self.scores[i * n + i]).max().unwrap_or(0)
    }

    /// Writes the table back out in the NCBI layout.
    pub fn to_ncbi_string(&self) -> String {
        let width = self
            .scores
            .iter()
            .map(|v| v.to_string().len())
            .max()
            .unwrap_or(1)
            .max(2)
            + 1;
        let mut out = String::new();
        let _ = writeln!(out, "#  {}", self.name);
        out.push(' ');
        for &s in &self.symbols {
            let _ = write!(out, "{:>width$}", s as char);
        }
        out.push('\n');
        let n = self.symbols.len();
        for (i, &s) in self.symbols.iter().enumerate() {
            out.push(s as char);
            for j in 0..n {
                let _ = write!(out, "{:>width$}", self.scores[i * n + j]);
            }
            out.push('\n');
        }
        out
    }

    pub fn symbol_set(&self) -> HashSet<u8> {
        self.symbols.iter().copied().collect()
    }
}

fn parse_symbol(tok: &str) -> std::result::Result<u8, String> {
    match tok.as_bytes() {
        [b] if b.is_ascii_uppercase() || *b == STOP => Ok(*b),
        _ => Err(format!("invalid residue symbol '{tok}'")),
    }
}
