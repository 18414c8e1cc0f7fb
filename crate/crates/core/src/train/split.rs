use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bins::{bin_edges, bin_index};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Train,
    Val,
    Test,
}

pub const PARTS: [Part; 3] = [Part::Train, Part::Val, Part::Test];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratios: [f64; 3],
    pub seed: u64,
    pub n_bins: usize,
    pub assignment: BTreeMap<String, Part>,
}

impl SplitSpec {
    pub fn part(&self, id: &str) -> Option<Part> {
        self.assignment.get(id).copied()
    }

    pub fn count(&self, part: Part) -> usize {
        self.assignment.values().filter(|p| **p == part).count()
    }
}

/// Largest-remainder apportionment of `n` items; ties go to the earlier part.
pub fn apportion(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let total: f64 = ratios.iter().sum();
    let exact: Vec<f64> = ratios.iter().map(|r| n as f64 * r / total).collect();
    // tolerate representation error such as 10 * 0.7 = 7.000000000000001
    let mut counts: Vec<usize> = exact.iter().map(|x| (x + 1e-9).floor() as usize).collect();
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - counts[a] as f64;
        let fb = exact[b] - counts[b] as f64;
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    [counts[0], counts[1], counts[2]]
}

/// Stratified random split by target bin.
///
/// Items are grouped by the bin of their target over the whole dataset,
/// ordered by id, shuffled per bin with one seeded generator, and cut
/// proportionally.
pub fn stratified_split(items: &[(String, f64)], ratios: [f64; 3], seed: u64, n_bins: usize) -> SplitSpec {
    let edges = bin_edges(n_bins);
    let mut bins: Vec<Vec<&str>> = vec![Vec::new(); n_bins];
    for (id, y) in items {
        bins[bin_index(&edges, *y)].push(id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    for members in &mut bins {
        members.sort_unstable();
        members.shuffle(&mut rng);
        let [tr, va, _] = apportion(members.len(), &ratios);
        for (i, id) in members.iter().enumerate() {
            let part = if i < tr {
                Part::Train
            } else if i < tr + va {
                Part::Val
            } else {
                Part::Test
            };
            assignment.insert(id.to_string(), part);
        }
    }
    SplitSpec {
        ratios,
        seed,
        n_bins,
        assignment,
    }
}
