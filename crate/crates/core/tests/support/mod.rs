//! Slow reference implementations used to cross-check the streaming code.

#![allow(dead_code)]

use std::f64::consts::PI;

use flowalert::BocpdConfig;
use rand::Rng;

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// Untruncated run-length recursion in linear space. Hypothesis `r` is
/// predicted from the raw last `r` observations with two-pass moments.
pub struct ExactBocpd {
    config: BocpdConfig,
    history: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl ExactBocpd {
    pub fn new(config: BocpdConfig) -> Self {
        Self {
            config,
            history: Vec::new(),
            weights: vec![1.0],
        }
    }

    fn prior_density(&self, x: &[f64]) -> f64 {
        let c = &self.config;
        x.iter()
            .enumerate()
            .map(|(j, &xj)| normal_pdf(xj, c.prior_mean[j], c.prior_var[j].max(c.variance_floor)))
            .product()
    }

    fn run_density(&self, r: usize, x: &[f64]) -> f64 {
        if r == 0 {
            return self.prior_density(x);
        }
        let c = &self.config;
        let data = &self.history[self.history.len() - r..];
        let n = r as f64;
        (0..x.len())
            .map(|j| {
                let mean = data.iter().map(|v| v[j]).sum::<f64>() / n;
                let var = if r >= 2 {
                    data.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    c.prior_var[j]
                };
                normal_pdf(x[j], mean, var.max(c.variance_floor))
            })
            .product()
    }

    /// Returns the full normalised posterior after absorbing `x`.
    pub fn update(&mut self, x: &[f64]) -> Vec<f64> {
        let h = self.config.hazard;
        let total: f64 = self.weights.iter().sum();
        let mut next = vec![h * self.prior_density(x) * total];
        for (r, &w) in self.weights.iter().enumerate() {
            next.push((1.0 - h) * w * self.run_density(r, x));
        }
        let z: f64 = next.iter().sum();
        next.iter_mut().for_each(|w| *w /= z);
        self.history.push(x.to_vec());
        self.weights = next.clone();
        next
    }
}

/// Piecewise-stationary random stream: a few segments with random means and
/// spreads, so both change and no-change hypotheses carry real mass.
pub fn random_stream<R: Rng>(rng: &mut R, len: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let seg = rng.gen_range(5..=40);
        let mean: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.1..0.9)).collect();
        let spread = rng.gen_range(0.005..0.2);
        for _ in 0..seg.min(len - out.len()) {
            out.push(
                mean.iter()
                    .map(|m| m + spread * (rng.gen::<f64>() - 0.5) * 3.4)
                    .collect(),
            );
        }
    }
    out
}

/// Pool-adjacent-violators by repeated full scans: merge the first adjacent
/// violating pair, start over. Returns the fitted value for each input.
pub fn brute_force_pava(pairs: &[(f64, bool)]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..pairs.len()).collect();
    idx.sort_by(|&a, &b| pairs[a].0.total_cmp(&pairs[b].0));
    // Blocks of (members, sum); equal scores start in the same block.
    let mut blocks: Vec<(Vec<usize>, f64)> = Vec::new();
    for &i in &idx {
        let y = if pairs[i].1 { 1.0 } else { 0.0 };
        match blocks.last_mut() {
            Some((members, sum)) if pairs[members[0]].0 == pairs[i].0 => {
                members.push(i);
                *sum += y;
            }
            _ => blocks.push((vec![i], y)),
        }
    }
    let mean = |b: &(Vec<usize>, f64)| b.1 / b.0.len() as f64;
    loop {
        let violation = (0..blocks.len().saturating_sub(1)).find(|&k| mean(&blocks[k]) > mean(&blocks[k + 1]));
        let Some(k) = violation else { break };
        let (members, sum) = blocks.remove(k + 1);
        blocks[k].0.extend(members);
        blocks[k].1 += sum;
    }
    let mut fitted = vec![0.0; pairs.len()];
    for b in &blocks {
        for &i in &b.0 {
            fitted[i] = mean(b);
        }
    }
    fitted
}
