//! Edit-distance concordance baselines.
//!
//! Three unit-cost sequence distances over activity sequences — LCSD
//! (insert/delete only), Levenshtein (adds substitution), and
//! Damerau-Levenshtein (adds adjacent transposition) — with the
//! sum-length normalization used for baseline comparisons.
//!
//! The Damerau-Levenshtein variant is the unrestricted (Lowrance-Wagner)
//! distance rather than optimal string alignment, so that all three
//! variants are true metrics (OSA violates the triangle inequality).

use std::collections::HashMap;
use std::hash::Hash;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditVariant {
    /// Longest-common-subsequence distance: insertions and deletions.
    Lcsd,
    /// Levenshtein: insertions, deletions, substitutions.
    Ld,
    /// Damerau-Levenshtein: adds adjacent transpositions (unrestricted).
    Dld,
}

/// All edit operations have unit cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EditConfig {
    pub variant: EditVariant,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct BaselineScore {
    /// Minimum distance over the reference pathways.
    pub raw: usize,
    /// `1 − raw / (|walk| + |reference|)` for the minimizing reference,
    /// clamped to [0, 1].
    pub normalized: f64,
    /// Index of the minimizing reference (ties by declaration order).
    pub reference_index: usize,
}

fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn levenshtein<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Unrestricted Damerau-Levenshtein (Lowrance-Wagner).
fn damerau_levenshtein<T: Eq + Hash>(a: &[T], b: &[T]) -> usize {
    let (la, lb) = (a.len(), b.len());
    let inf = la + lb;
    // (la + 2) x (lb + 2) table with a sentinel border row/column.
    let w = lb + 2;
    let mut d = vec![inf; (la + 2) * w];
    for i in 0..=la {
        d[(i + 1) * w + 1] = i;
    }
    for j in 0..=lb {
        d[w + j + 1] = j;
    }
    let mut last_row: HashMap<&T, usize> = HashMap::new();
    for i in 1..=la {
        let mut last_col = 0usize;
        for j in 1..=lb {
            let k = last_row.get(&b[j - 1]).copied().unwrap_or(0);
            let l = last_col;
            let cost = if a[i - 1] == b[j - 1] {
                last_col = j;
                0
            } else {
                1
            };
            let val = (d[i * w + j] + cost)
                .min(d[(i + 1) * w + j] + 1)
                .min(d[i * w + j + 1] + 1)
                .min(d[k * w + l] + (i - k - 1) + 1 + (j - l - 1));
            d[(i + 1) * w + j + 1] = val;
        }
        last_row.insert(&a[i - 1], i);
    }
    d[(la + 1) * w + lb + 1]
}

/// Minimum unit-cost edit distance between two activity sequences.
pub fn edit_distance<T: Eq + Hash>(a: &[T], b: &[T], cfg: EditConfig) -> usize {
    match cfg.variant {
        EditVariant::Lcsd => a.len() + b.len() - 2 * lcs_len(a, b),
        EditVariant::Ld => levenshtein(a, b),
        EditVariant::Dld => damerau_levenshtein(a, b),
    }
}

/// Score a walk against a set of reference pathways: raw minimum
/// distance and its sum-length normalization.
pub fn baseline_score<T: Eq + Hash>(
    walk: &[T],
    references: &[Vec<T>],
    cfg: EditConfig,
) -> BaselineScore {
    assert!(
        !references.is_empty(),
        "baseline_score needs at least one reference pathway"
    );
    let (reference_index, raw) = references
        .iter()
        .map(|r| edit_distance(walk, r, cfg))
        .enumerate()
        .min_by_key(|&(i, d)| (d, i))
        .expect("nonempty references");
    let total = walk.len() + references[reference_index].len();
    let normalized = if total == 0 {
        1.0
    } else {
        (1.0 - raw as f64 / total as f64).clamp(0.0, 1.0)
    };
    BaselineScore {
        raw,
        normalized,
        reference_index,
    }
}
