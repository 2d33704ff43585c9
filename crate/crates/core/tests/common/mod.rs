//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, VecDeque};

use drl_lab::network::{mse_loss, Network, Tensor};
use drl_lab::numerics::Matrix;

/// Loss of `net` on `(x, y)` under mean squared error.
pub fn loss(net: &Network, x: &Tensor, y: &Matrix) -> f64 {
    mse_loss(&net.predict(x).unwrap(), y).unwrap().0
}

fn param(net: &mut Network, layer: usize, bias: bool, i: usize) -> &mut f64 {
    let (w, b) = net.layers_mut()[layer].params_mut().unwrap();
    if bias {
        &mut b.data_mut()[i]
    } else {
        &mut w.data_mut()[i]
    }
}

/// Central finite difference of the loss for every weight and bias, in
/// layer order; pooling layers yield `None`.
pub fn numeric_gradients(net: &Network, x: &Tensor, y: &Matrix, h: f64) -> Vec<Option<(Vec<f64>, Vec<f64>)>> {
    let mut probe = net.clone();
    let mut diff = |l: usize, bias: bool, i: usize| {
        let orig = *param(&mut probe, l, bias, i);
        *param(&mut probe, l, bias, i) = orig + h;
        let up = loss(&probe, x, y);
        *param(&mut probe, l, bias, i) = orig - h;
        let down = loss(&probe, x, y);
        *param(&mut probe, l, bias, i) = orig;
        (up - down) / (2.0 * h)
    };
    let sizes: Vec<_> = net
        .layers()
        .iter()
        .map(|l| l.params().map(|(w, b)| (w.data().len(), b.data().len())))
        .collect();
    sizes
        .into_iter()
        .enumerate()
        .map(|(l, size)| {
            let (nw, nb) = size?;
            let dw = (0..nw).map(|i| diff(l, false, i)).collect();
            let db = (0..nb).map(|i| diff(l, true, i)).collect();
            Some((dw, db))
        })
        .collect()
}

/// `|a - b| <= rel * max(|a|, |b|)` or within the absolute floor.
pub fn close(a: f64, b: f64, rel: f64, floor: f64) -> bool {
    let d = (a - b).abs();
    d <= floor || d <= rel * a.abs().max(b.abs())
}

/// Number of kernel placements along one axis of a padded input.
pub fn placements(dim: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    let padded = dim + 2 * padding;
    (0..padded).step_by(stride.max(1)).filter(|&start| start + kernel <= padded).count()
}

/// Log of every push into a frame ring, with the global time each slot was
/// last written, used to decide validity without looking at the ring.
pub struct PushLog {
    pub capacity: usize,
    pub dones: Vec<bool>,
}

impl PushLog {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, dones: Vec::new() }
    }

    pub fn push(&mut self, done: bool) {
        self.dones.push(done);
    }

    /// Global time of the frame now held in slot `t`.
    pub fn time_of(&self, t: usize) -> Option<usize> {
        let total = self.dones.len();
        if t >= self.capacity || t >= total {
            return None;
        }
        let last_lap = (total - 1 - t) / self.capacity;
        Some(t + last_lap * self.capacity)
    }

    /// A slot may be sampled when its frame and the three before it are
    /// still stored, at least four newer frames exist, and none of the three
    /// earlier frames ended an episode.
    pub fn valid(&self, t: usize) -> bool {
        let Some(g) = self.time_of(t) else { return false };
        let total = self.dones.len();
        let oldest = total.saturating_sub(self.capacity);
        if g < 3 || g - 3 < oldest {
            return false;
        }
        if total - g <= 4 {
            return false;
        }
        !(g - 3..g).any(|k| self.dones[k])
    }
}

/// Exact two-sided signed-rank p-value by enumerating all `2^n` sign
/// assignments of the given ranks.
pub fn sign_flip_p(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len();
    let total: f64 = ranks.iter().sum();
    let centre = total / 2.0;
    let observed = (w_plus - centre).abs();
    let mut extreme = 0u64;
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if (w - centre).abs() >= observed - 1e-9 {
            extreme += 1;
        }
    }
    extreme as f64 / (1u64 << n) as f64
}

/// Two-sided p as twice the smaller tail, capped at 1, by enumeration.
pub fn sign_flip_p_min_tail(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len();
    let (mut lo, mut hi) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if w <= w_plus + 1e-9 {
            lo += 1;
        }
        if w >= w_plus - 1e-9 {
            hi += 1;
        }
    }
    let total = (1u64 << n) as f64;
    (2.0 * lo.min(hi) as f64 / total).min(1.0)
}

/// Average ranks of `|d|` for the non-zero differences, computed by
/// counting rather than sorting.
pub fn midranks_by_counting(abs: &[f64]) -> Vec<f64> {
    abs.iter()
        .map(|&v| {
            let below = abs.iter().filter(|&&u| u < v).count() as f64;
            let equal = abs.iter().filter(|&&u| u == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Shortest move count between two cells of a grid, avoiding `blocked`
/// cells and never passing through `stops` except as the destination.
pub fn bfs(
    height: usize,
    width: usize,
    blocked: &BTreeSet<(usize, usize)>,
    stops: &BTreeSet<(usize, usize)>,
    from: (usize, usize),
    to: (usize, usize),
) -> Option<usize> {
    let mut dist = HashMap::from([(from, 0usize)]);
    let mut queue = VecDeque::from([from]);
    while let Some(c) = queue.pop_front() {
        if c == to {
            return Some(dist[&c]);
        }
        if stops.contains(&c) && c != from {
            continue;
        }
        let steps = [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)];
        for (dr, dc) in steps {
            let (r, col) = (c.0 as isize + dr, c.1 as isize + dc);
            if r < 0 || col < 0 || r >= height as isize || col >= width as isize {
                continue;
            }
            let n = (r as usize, col as usize);
            if blocked.contains(&n) || dist.contains_key(&n) {
                continue;
            }
            dist.insert(n, dist[&c] + 1);
            queue.push_back(n);
        }
    }
    None
}
