use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

use rayon::prelude::*;

use super::Corpus;
use crate::error::Result;
use crate::segmenter;
use crate::vocabulary::{Pair, UnitId, Vocabulary};

/// Rows below this count are rewritten on the calling thread.
const PAR_ROWS: usize = 256;

/// Max-heap entry. Higher counts win; equal counts go to the
/// lexicographically smaller (left, right) string pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeapEntry {
    pub count: u64,
    left: Reverse<Arc<str>>,
    right: Reverse<Arc<str>>,
    pub pair: Pair,
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| self.left.cmp(&other.left))
            .then_with(|| self.right.cmp(&other.right))
            .then_with(|| other.pair.cmp(&self.pair))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The corpus as unit-id rows, with live adjacent-pair counts and a lazily
/// revalidated max-heap over them.
#[derive(Debug, Clone)]
pub struct SegState {
    rows: Vec<Vec<UnitId>>,
    pair_counts: HashMap<Pair, u64>,
    heap: BinaryHeap<HeapEntry>,
    /// Rows that may contain a pair. Entries can be stale, never missing.
    occurrences: HashMap<Pair, Vec<u32>>,
    names: Vec<Arc<str>>,
}

fn count_rows(rows: &[Vec<UnitId>]) -> HashMap<Pair, u64> {
    rows.par_iter()
        .fold(HashMap::new, |mut acc: HashMap<Pair, u64>, row| {
            for w in row.windows(2) {
                *acc.entry((w[0], w[1])).or_default() += 1;
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            if a.len() < b.len() {
                return merge_counts(b, a);
            }
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        })
}

fn merge_counts(mut a: HashMap<Pair, u64>, b: HashMap<Pair, u64>) -> HashMap<Pair, u64> {
    for (k, v) in b {
        *a.entry(k).or_default() += v;
    }
    a
}

/// Replaces every non-overlapping occurrence of `pair`, scanning left to right.
pub(crate) fn merge_row(row: &[UnitId], pair: Pair, new_id: UnitId) -> Vec<UnitId> {
    let mut out = Vec::with_capacity(row.len());
    let mut i = 0;
    while i < row.len() {
        if i + 1 < row.len() && row[i] == pair.0 && row[i + 1] == pair.1 {
            out.push(new_id);
            i += 2;
        } else {
            out.push(row[i]);
            i += 1;
        }
    }
    out
}

fn contains_pair(row: &[UnitId], pair: Pair) -> bool {
    row.windows(2).any(|w| w[0] == pair.0 && w[1] == pair.1)
}

impl SegState {
    /// Segments `corpus` with `vocab` (characters, then any merge rules the
    /// vocabulary already carries) and counts adjacent pairs.
    pub fn new(corpus: &Corpus, vocab: &Vocabulary) -> Result<Self> {
        let encoder = segmenter::Encoder::new(vocab);
        let rows = corpus
            .records
            .par_iter()
            .map(|r| encoder.encode(&r.seq))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_rows(rows, vocab))
    }

    /// Wraps already-segmented rows. Every id must exist in `vocab`.
    pub fn from_rows(rows: Vec<Vec<UnitId>>, vocab: &Vocabulary) -> Self {
        let pair_counts = count_rows(&rows);
        let mut occurrences: HashMap<Pair, Vec<u32>> = HashMap::with_capacity(pair_counts.len());
        for (r, row) in rows.iter().enumerate() {
            for w in row.windows(2) {
                let list = occurrences.entry((w[0], w[1])).or_default();
                if list.last() != Some(&(r as u32)) {
                    list.push(r as u32);
                }
            }
        }
        let mut state = SegState {
            rows,
            pair_counts,
            heap: BinaryHeap::new(),
            occurrences,
            names: Vec::new(),
        };
        state.sync_names(vocab);
        let mut entries: Vec<HeapEntry> = state.pair_counts.iter().map(|(&p, &c)| state.entry(p, c)).collect();
        entries.sort_unstable();
        state.heap = BinaryHeap::from(entries);
        state
    }

    fn sync_names(&mut self, vocab: &Vocabulary) {
        for id in self.names.len()..vocab.len() {
            self.names.push(Arc::from(vocab.string(id as UnitId)));
        }
    }

    fn entry(&self, pair: Pair, count: u64) -> HeapEntry {
        HeapEntry {
            count,
            left: Reverse(Arc::clone(&self.names[pair.0 as usize])),
            right: Reverse(Arc::clone(&self.names[pair.1 as usize])),
            pair,
        }
    }

    pub fn rows(&self) -> &[Vec<UnitId>] {
        &self.rows
    }

    pub fn pair_count(&self, pair: Pair) -> u64 {
        self.pair_counts.get(&pair).copied().unwrap_or(0)
    }

    pub fn pair_counts(&self) -> &HashMap<Pair, u64> {
        &self.pair_counts
    }

    /// Number of heap entries, stale ones included.
    pub fn heap_len(&self) -> usize {
        self.heap.len()
    }

    /// Removes and returns the live pair with the highest count, discarding
    /// stale heap entries on the way.
    pub fn pop_max(&mut self) -> Option<(Pair, u64)> {
        while let Some(top) = self.heap.pop() {
            if self.pair_count(top.pair) == top.count && top.count > 0 {
                return Some((top.pair, top.count));
            }
        }
        None
    }

    /// The live maximum without removing it.
    pub fn peek_max(&mut self) -> Option<(Pair, u64)> {
        let top = self.pop_max()?;
        self.heap.push(self.entry(top.0, top.1));
        Some(top)
    }

    /// Merges every occurrence of `pair` into `new_id` (which must already be
    /// in `vocab`). Returns the number of replacements.
    pub fn apply_merge(&mut self, pair: Pair, new_id: UnitId, vocab: &Vocabulary) -> u64 {
        self.sync_names(vocab);
        let Some(mut candidates) = self.occurrences.remove(&pair) else {
            return 0;
        };
        candidates.sort_unstable();
        candidates.dedup();

        let rows = &self.rows;
        let rewrite = |&r: &u32| {
            let row = &rows[r as usize];
            contains_pair(row, pair).then(|| (r, merge_row(row, pair, new_id)))
        };
        let rewritten: Vec<(u32, Vec<UnitId>)> = if candidates.len() >= PAR_ROWS {
            candidates.par_iter().filter_map(rewrite).collect()
        } else {
            candidates.iter().filter_map(rewrite).collect()
        };

        let mut delta: HashMap<Pair, i64> = HashMap::new();
        let mut replaced = 0u64;
        for (r, new_row) in rewritten {
            let old_row = std::mem::replace(&mut self.rows[r as usize], new_row);
            replaced += (old_row.len() - self.rows[r as usize].len()) as u64;
            for w in old_row.windows(2) {
                *delta.entry((w[0], w[1])).or_default() -= 1;
            }
            for w in self.rows[r as usize].windows(2) {
                let p = (w[0], w[1]);
                *delta.entry(p).or_default() += 1;
                if p.0 == new_id || p.1 == new_id {
                    let list = self.occurrences.entry(p).or_default();
                    if list.last() != Some(&r) {
                        list.push(r);
                    }
                }
            }
        }

        let mut touched: Vec<(Pair, i64)> = delta.into_iter().filter(|&(_, d)| d != 0).collect();
        touched.sort_unstable();
        for (p, d) in touched {
            let count = self.pair_counts.entry(p).or_default();
            *count = (*count as i64 + d) as u64;
            let c = *count;
            if c == 0 {
                self.pair_counts.remove(&p);
                self.occurrences.remove(&p);
            } else {
                let e = self.entry(p, c);
                self.heap.push(e);
            }
        }
        replaced
    }

    /// Brute-force recount of adjacent pairs over the current rows.
    pub fn recount(&self) -> HashMap<Pair, u64> {
        count_rows(&self.rows)
    }

    pub fn counts_consistent(&self) -> bool {
        self.recount() == self.pair_counts
    }

    /// Drops stale heap entries once they outnumber live pairs.
    pub fn compact_heap(&mut self) {
        if self.heap.len() > 4 * self.pair_counts.len() + 1024 {
            let mut entries: Vec<HeapEntry> = self.pair_counts.iter().map(|(&p, &c)| self.entry(p, c)).collect();
            entries.sort_unstable();
            self.heap = BinaryHeap::from(entries);
        }
    }
}
