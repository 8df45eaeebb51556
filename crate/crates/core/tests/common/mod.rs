//! Test-only oracles, written independently of the library code they check.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxseq::nn::Parameters;
use voxseq::{GridDims, Ordering};

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut impl Rng, len: usize, bound: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
}

/// `|a − n| / max(|a|, |n|, 1e-3)`; the floor keeps near-zero entries from
/// amplifying rounding noise.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn numeric_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic.iter().zip(numeric).map(|(a, n)| rel_err(*a, *n)).fold(0.0, f64::max)
}

/// Central differences of `loss` with respect to every parameter entry.
pub fn numeric_param_grad<P: Parameters>(params: &P, loss: impl Fn(&P) -> f64, h: f64) -> Vec<f64> {
    let flat = params.flatten();
    let with = |values: &[f64]| {
        let mut p = params.clone();
        let mut it = values.iter();
        for slot in p.params_mut() {
            slot.iter_mut().for_each(|v| *v = *it.next().unwrap());
        }
        p
    };
    numeric_grad(|v| loss(&with(v)), &flat, h)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean and count of sequence distances over 6-adjacent pairs, found by
/// visiting every voxel by coordinates and probing its six offsets.
pub fn brute_force_locality(ordering: &Ordering) -> (f64, u64) {
    let dims = ordering.dims();
    let pos = ordering.linear_to_seq();
    let (w, h, d) = (dims.w as i64, dims.h as i64, dims.d as i64);
    let index = |x: i64, y: i64, z: i64| (x + w * (y + h * z)) as usize;
    let mut total: u128 = 0;
    let mut pairs: u64 = 0;
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let here = index(x, y, z);
                for (dx, dy, dz) in [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)] {
                    let (nx, ny, nz) = (x + dx, y + dy, z + dz);
                    if nx < 0 || ny < 0 || nz < 0 || nx >= w || ny >= h || nz >= d {
                        continue;
                    }
                    let there = index(nx, ny, nz);
                    // each unordered pair once
                    if there > here {
                        total += pos[here].abs_diff(pos[there]) as u128;
                        pairs += 1;
                    }
                }
            }
        }
    }
    let mean = if pairs == 0 { 0.0 } else { total as f64 / pairs as f64 };
    (mean, pairs)
}

/// Jaccard loss of mispredicting `mistakes` against foreground `fg`.
fn jaccard_loss(fg: &[bool], mistakes: &[bool]) -> f64 {
    let union = fg.iter().zip(mistakes).filter(|(f, m)| **f || **m).count();
    let wrong = mistakes.iter().filter(|m| **m).count();
    if union == 0 {
        0.0
    } else {
        wrong as f64 / union as f64
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Lovász extension of the (submodular) Jaccard loss: the maximum over all
/// orderings of the greedy chain sum.
pub fn lovasz_jaccard_by_permutations(errors: &[f64], fg: &[bool]) -> f64 {
    let n = errors.len();
    permutations(n)
        .into_iter()
        .map(|perm| {
            let mut set = vec![false; n];
            let mut prev = 0.0;
            let mut acc = 0.0;
            for &i in &perm {
                set[i] = true;
                let cur = jaccard_loss(fg, &set);
                acc += errors[i] * (cur - prev);
                prev = cur;
            }
            acc
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Same extension as a level-set integral, `∫₀^∞ Δ({i : eᵢ ≥ t}) dt`.
pub fn lovasz_jaccard_by_levels(errors: &[f64], fg: &[bool]) -> f64 {
    let mut levels: Vec<f64> = errors.to_vec();
    levels.sort_by(|a, b| a.total_cmp(b));
    levels.dedup();
    let mut prev = 0.0;
    let mut acc = 0.0;
    for &t in &levels {
        let set: Vec<bool> = errors.iter().map(|&e| e >= t).collect();
        acc += (t - prev) * jaccard_loss(fg, &set);
        prev = t;
    }
    acc
}

/// Lovász-softmax on plain arrays: `probs` is `voxels × k`.
pub fn lovasz_softmax_oracle(probs: &[f64], labels: &[u16], k: usize, use_levels: bool) -> f64 {
    let present: Vec<usize> = (0..k).filter(|&c| labels.contains(&(c as u16))).collect();
    if present.is_empty() {
        return 0.0;
    }
    let per_class: f64 = present
        .iter()
        .map(|&c| {
            let fg: Vec<bool> = labels.iter().map(|&l| l as usize == c).collect();
            let errors: Vec<f64> =
                fg.iter().enumerate().map(|(v, &f)| ((f as u8 as f64) - probs[v * k + c]).abs()).collect();
            if use_levels {
                lovasz_jaccard_by_levels(&errors, &fg)
            } else {
                lovasz_jaccard_by_permutations(&errors, &fg)
            }
        })
        .sum();
    per_class / present.len() as f64
}

/// Random simplex rows, `voxels × k`.
pub fn random_probs(rng: &mut impl Rng, voxels: usize, k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(voxels * k);
    for _ in 0..voxels {
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0f64)).collect();
        let s: f64 = raw.iter().sum();
        out.extend(raw.iter().map(|v| v / s));
    }
    out
}

/// Uniformly random valid extent with each axis in `1..=max`.
pub fn random_dims(rng: &mut impl Rng, max: usize) -> GridDims {
    GridDims::spatial(rng.random_range(1..=max), rng.random_range(1..=max), rng.random_range(1..=max)).unwrap()
}
