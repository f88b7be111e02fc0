//! Encoding sequences with a trained vocabulary.
//!
//! Sequences start as characters and the vocabulary's merge rules are replayed
//! in training order, each rule rewriting all of its adjacent occurrences left
//! to right. Rules whose pair never occurs are skipped, so the cost depends on
//! the sequence rather than on the vocabulary size.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::vocabulary::{Pair, UnitId, Vocabulary};

const NONE: u32 = u32::MAX;

/// Half-open, 1-based residue span: `start <= pos < end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn contains(&self, pos: usize) -> bool {
        self.start <= pos && pos < self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Precomputed merge ranks for one vocabulary.
#[derive(Debug, Clone)]
pub struct Encoder<'v> {
    vocab: &'v Vocabulary,
    chars: [u32; 256],
    /// Rank-sorted (rank, result) rules for each pair.
    rules: HashMap<Pair, Vec<(u32, UnitId)>>,
}

impl<'v> Encoder<'v> {
    pub fn new(vocab: &'v Vocabulary) -> Self {
        let mut chars = [NONE; 256];
        for u in vocab.units() {
            if let [b] = u.string.as_bytes() {
                chars[*b as usize] = u.id;
            }
        }
        let mut rules: HashMap<Pair, Vec<(u32, UnitId)>> = HashMap::new();
        for (rank, step) in vocab.merge_sequence().into_iter().enumerate() {
            rules.entry((step.left, step.right)).or_default().push((rank as u32, step.result));
        }
        Self { vocab, chars, rules }
    }

    pub fn vocab(&self) -> &'v Vocabulary {
        self.vocab
    }

    /// First rule for `pair` ranked after `after` (or any rule when `after` is `None`).
    fn next_rule(&self, pair: Pair, after: Option<u32>) -> Option<(u32, UnitId)> {
        let list = self.rules.get(&pair)?;
        let i = match after {
            None => 0,
            Some(a) => list.partition_point(|&(r, _)| r <= a),
        };
        list.get(i).copied()
    }

    pub fn encode(&self, seq: &[u8]) -> Result<Vec<UnitId>> {
        let mut ids = Vec::with_capacity(seq.len());
        for (i, &b) in seq.iter().enumerate() {
            match self.chars[b as usize] {
                NONE => return Err(Error::OutOfAlphabet { ch: b as char, pos: i + 1 }),
                id => ids.push(id),
            }
        }
        if ids.len() < 2 || self.rules.is_empty() {
            return Ok(ids);
        }

        // rank of the next applicable rule at each adjacency
        let mut ranks: Vec<(u32, UnitId)> = ids
            .windows(2)
            .map(|w| self.next_rule((w[0], w[1]), None).unwrap_or((NONE, NONE)))
            .collect();
        let mut next_ids = Vec::with_capacity(ids.len());
        let mut next_ranks = Vec::with_capacity(ranks.len());
        // old index of each surviving unit, NONE where a merge produced it
        let mut src: Vec<u32> = Vec::with_capacity(ids.len());
        while let Some(&(rank, result)) = ranks.iter().min_by_key(|r| r.0) {
            if rank == NONE {
                break;
            }
            next_ids.clear();
            src.clear();
            let mut i = 0;
            while i < ids.len() {
                if i + 1 < ids.len() && ranks[i].0 == rank {
                    next_ids.push(result);
                    src.push(NONE);
                    i += 2;
                } else {
                    next_ids.push(ids[i]);
                    src.push(i as u32);
                    i += 1;
                }
            }
            next_ranks.clear();
            for j in 0..next_ids.len().saturating_sub(1) {
                let r = if src[j] != NONE && src[j + 1] == src[j] + 1 {
                    ranks[src[j] as usize]
                } else {
                    self.next_rule((next_ids[j], next_ids[j + 1]), Some(rank)).unwrap_or((NONE, NONE))
                };
                next_ranks.push(r);
            }
            std::mem::swap(&mut ids, &mut next_ids);
            std::mem::swap(&mut ranks, &mut next_ranks);
            if ids.len() < 2 {
                break;
            }
        }
        Ok(ids)
    }

    pub fn encode_str(&self, seq: &str) -> Result<Vec<UnitId>> {
        self.encode(seq.as_bytes())
    }

    /// Encodes every record of a corpus, in parallel, preserving order.
    pub fn encode_corpus(&self, corpus: &Corpus) -> Result<Vec<Vec<UnitId>>> {
        corpus
            .records
            .par_iter()
            .map(|r| {
                self.encode(&r.seq).map_err(|e| match e {
                    Error::OutOfAlphabet { ch, pos } => {
                        Error::invalid(format!("sequence '{}': character {ch:?} at {pos} is not in the vocabulary", r.id))
                    }
                    e => e,
                })
            })
            .collect()
    }
}

pub fn encode(vocab: &Vocabulary, seq: &[u8]) -> Result<Vec<UnitId>> {
    Encoder::new(vocab).encode(seq)
}

pub fn decode(vocab: &Vocabulary, ids: &[UnitId]) -> Result<String> {
    let mut out = String::new();
    for &id in ids {
        out.push_str(&vocab.get(id)?.string);
    }
    Ok(out)
}

/// Residue spans of an encoded sequence, in order.
pub fn spans(vocab: &Vocabulary, ids: &[UnitId]) -> Vec<Span> {
    let mut start = 1;
    ids.iter()
        .map(|&id| {
            let end = start + vocab.string(id).len();
            let s = Span { start, end };
            start = end;
            s
        })
        .collect()
}

/// The unit of an encoding that covers 1-based position `pos`.
pub fn unit_in(vocab: &Vocabulary, ids: &[UnitId], pos: usize) -> Option<(UnitId, Span)> {
    let mut start = 1;
    for &id in ids {
        let end = start + vocab.string(id).len();
        if pos >= start && pos < end {
            return Some((id, Span { start, end }));
        }
        start = end;
    }
    None
}

pub fn unit_at(vocab: &Vocabulary, seq: &[u8], pos: usize) -> Result<(UnitId, Span)> {
    if pos == 0 || pos > seq.len() {
        return Err(Error::invalid(format!("position {pos} is outside 1..={}", seq.len())));
    }
    let ids = encode(vocab, seq)?;
    Ok(unit_in(vocab, &ids, pos).expect("encoding tiles the sequence"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::seg_state::merge_row;
    use proptest::prelude::*;

    /// Literal replay of every rule over the whole sequence, in order.
    fn replay(vocab: &Vocabulary, seq: &[u8]) -> Vec<UnitId> {
        let mut ids: Vec<UnitId> = seq.iter().map(|&b| vocab.id_of_bytes(&[b]).unwrap()).collect();
        for step in vocab.merge_sequence() {
            ids = merge_row(&ids, (step.left, step.right), step.result);
        }
        ids
    }

    fn strings(vocab: &Vocabulary, ids: &[UnitId]) -> Vec<String> {
        ids.iter().map(|&i| vocab.string(i).to_string()).collect()
    }

    #[test]
    fn single_merge() {
        let mut v = Vocabulary::from_alphabet(*b"AB").unwrap();
        v.push_merge((0, 1)).unwrap();
        let ids = encode(&v, b"AAB").unwrap();
        assert_eq!(strings(&v, &ids), ["A", "AB"]);
        assert_eq!(decode(&v, &ids).unwrap(), "AAB");
        assert_eq!(encode(&v, b"").unwrap(), Vec::<u32>::new());
        assert_eq!(decode(&v, &[]).unwrap(), "");
        assert!(matches!(decode(&v, &[7]), Err(Error::UnknownUnit(7))));
    }

    #[test]
    fn characters_only() {
        let v = Vocabulary::from_alphabet(*b"KM").unwrap();
        let ids = encode(&v, b"MK").unwrap();
        assert_eq!(strings(&v, &ids), ["M", "K"]);
    }

    #[test]
    fn out_of_alphabet() {
        let v = Vocabulary::from_alphabet(*b"KM").unwrap();
        match encode(&v, b"MKW") {
            Err(Error::OutOfAlphabet { ch: 'W', pos: 3 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    fn csk_vocab() -> Vocabulary {
        let mut v = Vocabulary::from_alphabet(*b"ACEFKLS").unwrap();
        let id = |v: &Vocabulary, s: &str| v.id_of(s).unwrap();
        v.push_merge((id(&v, "E"), id(&v, "L"))).unwrap();
        v.push_merge((id(&v, "C"), id(&v, "S"))).unwrap();
        v.push_merge((id(&v, "CS"), id(&v, "K"))).unwrap();
        v.push_merge((id(&v, "A"), id(&v, "F"))).unwrap();
        v
    }

    #[test]
    fn unit_lookup() {
        let v = csk_vocab();
        let ids = encode(&v, b"ELCSKAF").unwrap();
        assert_eq!(strings(&v, &ids), ["EL", "CSK", "AF"]);
        let (u, span) = unit_at(&v, b"ELCSKAF", 5).unwrap();
        assert_eq!(v.string(u), "CSK");
        assert_eq!(span, Span { start: 3, end: 6 });
        assert_eq!(v.string(unit_at(&v, b"ELCSKAF", 1).unwrap().0), "EL");
        assert_eq!(v.string(unit_at(&v, b"ELCSKAF", 7).unwrap().0), "AF");
        assert!(unit_at(&v, b"ELCSKAF", 0).is_err());
        assert!(unit_at(&v, b"ELCSKAF", 8).is_err());
    }

    #[test]
    fn extra_merges_apply_at_their_rank() {
        let mut v = Vocabulary::from_alphabet(*b"AB").unwrap();
        let ab = v.push_merge((0, 1)).unwrap(); // AB
        let aab = v.push_merge((0, ab)).unwrap(); // AAB
        let aa = v.push_merge((0, 0)).unwrap(); // AA
        let aab_b = v.push_merge((aab, 1)).unwrap(); // AABB
        v.push_extra_merge((aa, 1), aab).unwrap(); // AA+B -> AAB, after AABB exists
        for seq in [&b"AAB"[..], b"AAAB", b"AAABB", b"AABAAB", b"BAAAAB"] {
            assert_eq!(encode(&v, seq).unwrap(), replay(&v, seq), "{:?}", std::str::from_utf8(seq));
        }
        // the extra merge must not be followed by the earlier AAB+B rule
        let ids = encode(&v, b"AAAAB").unwrap();
        assert_eq!(ids, replay(&v, b"AAAAB"));
        let _ = aab_b;
    }

    fn random_vocab(seed: u64, merges: usize) -> Vocabulary {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut v = Vocabulary::from_alphabet(*b"ABC").unwrap();
        for _ in 0..merges {
            let l = rng.gen_range(0..v.len()) as u32;
            let r = rng.gen_range(0..v.len()) as u32;
            let s = format!("{}{}", v.string(l), v.string(r));
            match v.id_of(&s) {
                Some(id) => v.push_extra_merge((l, r), id).unwrap(),
                None => {
                    v.push_merge((l, r)).unwrap();
                }
            }
        }
        v
    }

    proptest! {
        #[test]
        fn encode_matches_literal_replay(seed in any::<u64>(), merges in 0usize..40, seq in "[ABC]{0,40}") {
            let v = random_vocab(seed, merges);
            let ids = encode(&v, seq.as_bytes()).unwrap();
            prop_assert_eq!(&ids, &replay(&v, seq.as_bytes()));
            prop_assert_eq!(decode(&v, &ids).unwrap(), seq.clone());
            let sp = spans(&v, &ids);
            let mut next = 1;
            for s in &sp {
                prop_assert_eq!(s.start, next);
                prop_assert!(!s.is_empty());
                next = s.end;
            }
            prop_assert_eq!(next, seq.len() + 1);
            for pos in 1..=seq.len() {
                let (u, span) = unit_in(&v, &ids, pos).unwrap();
                prop_assert!(span.contains(pos));
                prop_assert_eq!(&seq[span.start - 1..span.end - 1], v.string(u));
            }
        }
    }
}
