//! Similarity scoring between a parent unit and its substitution variants,
//! plus a plain Needleman-Wunsch global aligner with a linear gap penalty.

use crate::error::{Error, Result};
use crate::matrices::SubstitutionMatrix;

pub const DEFAULT_GAP_PENALTY: i32 = -4;

#[derive(Debug, Clone)]
pub struct AlignParams<'m> {
    pub matrix: &'m SubstitutionMatrix,
    pub gap_penalty: i32,
}

impl<'m> AlignParams<'m> {
    pub fn new(matrix: &'m SubstitutionMatrix, gap_penalty: i32) -> Result<Self> {
        if gap_penalty > 0 {
            return Err(Error::Config(format!("gap penalty must be <= 0, got {gap_penalty}")));
        }
        Ok(Self { matrix, gap_penalty })
    }
}

/// Sum of the diagonal scores of `unit`'s residues.
pub fn self_score(m: &SubstitutionMatrix, unit: &[u8]) -> Result<i32> {
    unit.iter().map(|&r| m.score(r, r)).sum()
}

/// Gapless column-by-column score of two equal-length strings.
pub fn positional_score(m: &SubstitutionMatrix, p: &[u8], q: &[u8]) -> Result<i32> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch { left: p.len(), right: q.len() });
    }
    p.iter().zip(q).map(|(&a, &b)| m.score(a, b)).sum()
}

/// Positional score of `q` against `p`, normalized by `p`'s self-score.
pub fn similarity(m: &SubstitutionMatrix, p: &[u8], q: &[u8]) -> Result<f64> {
    let raw = positional_score(m, p, q)?;
    let norm = self_score(m, p)?;
    if norm <= 0 {
        return Err(Error::NonPositiveSelfScore(String::from_utf8_lossy(p).into_owned()));
    }
    Ok(raw as f64 / norm as f64)
}

/// Maximum global alignment score with a linear gap penalty.
pub fn nw_align(params: &AlignParams<'_>, p: &[u8], q: &[u8]) -> Result<i32> {
    let m = params.matrix;
    let gap = params.gap_penalty;
    for &r in p.iter().chain(q) {
        if !m.contains(r) {
            return Err(Error::UnknownSymbol(r as char));
        }
    }
    // one rolling row over q
    let mut prev: Vec<i32> = (0..=q.len() as i32).map(|j| j * gap).collect();
    let mut cur = vec![0i32; q.len() + 1];
    for (i, &a) in p.iter().enumerate() {
        cur[0] = (i as i32 + 1) * gap;
        for (j, &b) in q.iter().enumerate() {
            let diag = prev[j] + m.score(a, b)?;
            let up = prev[j + 1] + gap;
            let left = cur[j] + gap;
            cur[j + 1] = diag.max(up).max(left);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[q.len()])
}
