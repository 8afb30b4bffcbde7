use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EmbeddingDataset;
use crate::error::{Error, Result};

pub const DEFAULT_RATIOS: [f64; 3] = [0.70, 0.15, 0.15];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Disjoint per-client index lists covering the training set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientPartition {
    pub clients: Vec<Vec<usize>>,
}

impl ClientPartition {
    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }
}

/// Integer subset sizes closest to `ratios · n` (largest remainder).
fn target_sizes(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let raw: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut sizes = [0usize; 3];
    for (s, r) in sizes.iter_mut().zip(&raw) {
        *s = r.floor() as usize;
    }
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut left = n - sizes.iter().sum::<usize>();
    for &j in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[j] += 1;
        left -= 1;
    }
    sizes
}

/// Picks among `candidates` the entries maximizing `key`, breaking exact
/// ties uniformly at random.
fn argmax_random<R: Rng>(candidates: &[usize], key: impl Fn(usize) -> (f64, usize), rng: &mut R) -> usize {
    let best = candidates
        .iter()
        .map(|&j| key(j))
        .max_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .expect("non-empty candidates");
    let tied: Vec<usize> = candidates.iter().copied().filter(|&j| key(j) == best).collect();
    tied[rng.random_range(0..tied.len())]
}

struct Assignment {
    assigned: Vec<Option<usize>>,
    capacity: [usize; 3],
    /// Per label, how many more positives each subset should receive.
    wanted: Vec<[f64; 3]>,
    /// Per label, positives not yet assigned.
    remaining: Vec<usize>,
}

impl Assignment {
    fn open(&self) -> Vec<usize> {
        (0..3).filter(|&j| self.capacity[j] > 0).collect()
    }

    fn assign(&mut self, ds: &EmbeddingDataset, i: usize, j: usize) {
        self.assigned[i] = Some(j);
        self.capacity[j] -= 1;
        for &l in &ds.labels()[i] {
            self.wanted[l as usize][j] -= 1.0;
            self.remaining[l as usize] -= 1;
        }
    }
}

/// Iterative stratification into train/validation/test.
///
/// Labels are processed rarest first; each of a label's unassigned samples
/// goes to the subset that still wants the most of that label, then the
/// subset with the most free slots, then a seeded random choice. Subsets
/// never exceed their target size, so sizes match the ratios up to rounding.
/// A final pass of size-preserving swaps evens out per-label counts.
pub fn stratified_split(ds: &EmbeddingDataset, ratios: [f64; 3], seed: u64) -> Result<SplitIndices> {
    if ratios.iter().any(|&r| r.is_nan() || r <= 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::param(format!("split ratios {ratios:?} must be positive and sum to 1")));
    }
    let n = ds.len();
    let n_labels = ds.n_labels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let support = ds.label_support();
    let wanted: Vec<[f64; 3]> = support
        .iter()
        .map(|&c| [ratios[0] * c as f64, ratios[1] * c as f64, ratios[2] * c as f64])
        .collect();
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); n_labels];
    for &i in &order {
        for &l in &ds.labels()[i] {
            by_label[l as usize].push(i);
        }
    }

    let mut state = Assignment {
        assigned: vec![None; n],
        capacity: target_sizes(n, &ratios),
        wanted,
        remaining: support,
    };
    while let Some(label) = (0..n_labels)
        .filter(|&l| state.remaining[l] > 0)
        .min_by_key(|&l| (state.remaining[l], l))
    {
        for &i in &by_label[label] {
            if state.assigned[i].is_some() {
                continue;
            }
            let open = state.open();
            let j = argmax_random(&open, |j| (state.wanted[label][j], state.capacity[j]), &mut rng);
            state.assign(ds, i, j);
        }
    }
    // Samples without labels fill whatever room is left.
    for &i in &order {
        if state.assigned[i].is_none() {
            let open = state.open();
            let j = argmax_random(&open, |j| (state.capacity[j] as f64, 0), &mut rng);
            state.assign(ds, i, j);
        }
    }

    let mut assigned: Vec<usize> = state.assigned.into_iter().map(|a| a.expect("every sample assigned")).collect();
    refine_by_swaps(ds, &mut assigned, &ratios, &order);

    let mut split = SplitIndices {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (i, a) in assigned.into_iter().enumerate() {
        match a {
            0 => split.train.push(i),
            1 => split.val.push(i),
            _ => split.test.push(i),
        }
    }
    Ok(split)
}

const SWAP_CANDIDATES_FROM: usize = 64;
const SWAP_CANDIDATES_TO: usize = 512;

/// Greedy assignment leaves the labels handled last to absorb whatever room
/// is left. This exchanges samples between subsets (sizes stay fixed) while
/// that lowers the summed squared deviation of per-label counts from their
/// targets.
fn refine_by_swaps(ds: &EmbeddingDataset, assigned: &mut [usize], ratios: &[f64; 3], order: &[usize]) {
    let labels = ds.labels();
    let support = ds.label_support();
    let mut dev: Vec<[f64; 3]> = support
        .iter()
        .map(|&c| [-ratios[0] * c as f64, -ratios[1] * c as f64, -ratios[2] * c as f64])
        .collect();
    for (i, &j) in assigned.iter().enumerate() {
        for &l in &labels[i] {
            dev[l as usize][j] += 1.0;
        }
    }
    // Change in the objective when `from_set` moves a -> b and `to_set` moves b -> a.
    let delta = |dev: &[[f64; 3]], from_set: &[u32], to_set: &[u32], a: usize, b: usize| {
        let one_way = |xs: &[u32], ys: &[u32], src: usize, dst: usize| {
            xs.iter()
                .filter(|l| ys.binary_search(l).is_err())
                .map(|&l| 2.0 - 2.0 * (dev[l as usize][src] - dev[l as usize][dst]))
                .sum::<f64>()
        };
        one_way(from_set, to_set, a, b) + one_way(to_set, from_set, b, a)
    };

    for _ in 0..assigned.len() {
        let mut gaps: Vec<(f64, usize, usize, usize)> = Vec::new();
        for (l, d) in dev.iter().enumerate() {
            for a in 0..3 {
                for b in 0..3 {
                    if d[a] - d[b] > 1.0 + 1e-9 {
                        gaps.push((d[a] - d[b], l, a, b));
                    }
                }
            }
        }
        gaps.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2, x.3).cmp(&(y.1, y.2, y.3))));
        let mut best: Option<(f64, usize, usize)> = None;
        for &(_, l, a, b) in &gaps {
            let l = l as u32;
            let pick = |split: usize, has: bool, limit: usize| -> Vec<usize> {
                order
                    .iter()
                    .copied()
                    .filter(|&i| assigned[i] == split && labels[i].binary_search(&l).is_ok() == has)
                    .take(limit)
                    .collect()
            };
            let tos = pick(b, false, SWAP_CANDIDATES_TO);
            for i in pick(a, true, SWAP_CANDIDATES_FROM) {
                for &k in &tos {
                    let d = delta(&dev, &labels[i], &labels[k], a, b);
                    if d < -1e-9 && best.is_none_or(|(bd, _, _)| d < bd) {
                        best = Some((d, i, k));
                    }
                }
            }
            if best.is_some() {
                break;
            }
        }
        let Some((_, i, k)) = best else { break };
        let (a, b) = (assigned[i], assigned[k]);
        for &l in &labels[i] {
            dev[l as usize][a] -= 1.0;
            dev[l as usize][b] += 1.0;
        }
        for &l in &labels[k] {
            dev[l as usize][b] -= 1.0;
            dev[l as usize][a] += 1.0;
        }
        assigned.swap(i, k);
    }
}

/// Seeded shuffle of `train` cut into `n_clients` contiguous slices whose
/// sizes differ by at most one (the first `len % n_clients` get the extra).
pub fn partition_clients(train: &[usize], n_clients: usize, seed: u64) -> Result<ClientPartition> {
    if n_clients == 0 {
        return Err(Error::param("need at least one client"));
    }
    if train.len() < n_clients {
        return Err(Error::TooFewSamples {
            needed: n_clients,
            got: train.len(),
        });
    }
    let mut shuffled = train.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = shuffled.len() / n_clients;
    let extra = shuffled.len() % n_clients;
    let mut clients = Vec::with_capacity(n_clients);
    let mut start = 0;
    for c in 0..n_clients {
        let size = base + usize::from(c < extra);
        clients.push(shuffled[start..start + size].to_vec());
        start += size;
    }
    Ok(ClientPartition { clients })
}
