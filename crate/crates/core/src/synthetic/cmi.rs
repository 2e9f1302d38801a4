//! Counting estimate of conditional mutual information on rendered text.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::render::{render_text, sample_latents};
use super::{LatentGraph, SyntheticWorld};
use crate::seed;

/// Permutation p-values at or below this count as dependent.
pub const CMI_ALPHA: f64 = 0.01;
/// Within-stratum permutations drawn for the null distribution.
pub const CMI_PERMUTATIONS: usize = 199;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmiEstimate {
    /// Miller-Madow corrected estimate, in nats.
    pub cmi: f64,
    /// Mean estimate over permutations of `u_j` within strata of `u_{t-1}`.
    pub null_mean: f64,
    pub p_value: f64,
    pub dependent: bool,
    pub n_samples: usize,
}

fn entropy_mm(counts: &[usize], n: f64) -> (f64, usize) {
    let mut h = 0.0;
    let mut m = 0;
    for &c in counts.iter().filter(|&&c| c > 0) {
        let p = c as f64 / n;
        h -= p * p.ln();
        m += 1;
    }
    (h, m)
}

/// `I(X; Y | Z)` from `(x, y, z)` samples, with the Miller-Madow correction
/// applied to every entropy within each stratum of `z`.
pub fn conditional_mutual_information(samples: &[(usize, usize, usize)]) -> f64 {
    let dim = |f: fn(&(usize, usize, usize)) -> usize| samples.iter().map(f).max().map_or(0, |m| m + 1);
    let (kx, ky, kz) = (dim(|s| s.0), dim(|s| s.1), dim(|s| s.2));
    let mut cz = vec![0usize; kz];
    let mut cx = vec![0usize; kz * kx];
    let mut cy = vec![0usize; kz * ky];
    let mut cxy = vec![0usize; kz * kx * ky];
    for &(x, y, z) in samples {
        cz[z] += 1;
        cx[z * kx + x] += 1;
        cy[z * ky + y] += 1;
        cxy[(z * kx + x) * ky + y] += 1;
    }
    let total = samples.len() as f64;
    let mut cmi = 0.0;
    for z in (0..kz).filter(|&z| cz[z] > 0) {
        let n = cz[z] as f64;
        let (hx, mx) = entropy_mm(&cx[z * kx..(z + 1) * kx], n);
        let (hy, my) = entropy_mm(&cy[z * ky..(z + 1) * ky], n);
        let (hxy, mxy) = entropy_mm(&cxy[z * kx * ky..(z + 1) * kx * ky], n);
        let correction = (mx as f64 - 1.0 + my as f64 - 1.0 - (mxy as f64 - 1.0)) / (2.0 * n);
        cmi += n / total * (hx + hy - hxy + correction);
    }
    cmi
}

/// Renders `graph` `n_samples` times and estimates the dependence of the text
/// of `r_t` on the text of `u_j` given the true latent value of `u_{t-1}`.
///
/// Texts are reduced to their decoded (majority-word) values. Returns `None`
/// below `min_samples`.
pub fn empirical_ci_check(
    world: &SyntheticWorld,
    graph: &LatentGraph,
    j: usize,
    t: usize,
    n_samples: usize,
    min_samples: usize,
    seed: u64,
) -> Option<CmiEstimate> {
    assert!(j + 1 < t && t < graph.len(), "need j <= t-2 and t < n");
    if n_samples < min_samples {
        return None;
    }
    let unknown = world.n_values;
    let mut rng = seed::rng(seed, seed::SYNTHESIS, &["cmi", &j.to_string(), &t.to_string()]);
    let samples: Vec<(usize, usize, usize)> = (0..n_samples)
        .map(|_| {
            let z = sample_latents(graph, world, &mut rng);
            let uj = render_text(z[j], world, &mut rng);
            let rt = render_text(z[t], world, &mut rng);
            (
                world.decode(&uj).unwrap_or(unknown),
                world.decode(&rt).unwrap_or(unknown),
                z[t - 1],
            )
        })
        .collect();
    let cmi = conditional_mutual_information(&samples);
    let (null_mean, p_value) = permutation_test(&samples, cmi, CMI_PERMUTATIONS, &mut rng);
    Some(CmiEstimate {
        cmi,
        null_mean,
        p_value,
        dependent: p_value <= CMI_ALPHA,
        n_samples,
    })
}

/// Shuffles `x` within each stratum of `z` and returns the mean null estimate
/// and the permutation p-value of `observed`.
pub fn permutation_test<R: Rng>(
    samples: &[(usize, usize, usize)],
    observed: f64,
    permutations: usize,
    rng: &mut R,
) -> (f64, f64) {
    let mut strata: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, &(_, _, z)) in samples.iter().enumerate() {
        strata.entry(z).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = strata.into_values().collect();
    groups.sort();
    let mut shuffled = samples.to_vec();
    let mut sum = 0.0;
    let mut at_least = 0usize;
    for _ in 0..permutations {
        for idx in &groups {
            let mut xs: Vec<usize> = idx.iter().map(|&i| samples[i].0).collect();
            xs.shuffle(rng);
            for (&i, x) in idx.iter().zip(xs) {
                shuffled[i].0 = x;
            }
        }
        let v = conditional_mutual_information(&shuffled);
        sum += v;
        at_least += usize::from(v >= observed);
    }
    (
        sum / permutations.max(1) as f64,
        (at_least + 1) as f64 / (permutations + 1) as f64,
    )
}
