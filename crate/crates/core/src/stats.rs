//! Statistical machinery for the verification harness: one- and two-sample
//! Kolmogorov-Smirnov, the two-sample energy distance with a permutation
//! null, distance correlation, empirical Laplace transforms and small
//! helpers for moment/correlation checks.
//!
//! Permutation tests draw their shuffles from per-permutation ChaCha
//! streams seeded up front, so p-values are reproducible no matter how
//! rayon schedules the work.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=101 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    // Stephens' small-sample correction.
    let lambda = d * (n_eff.sqrt() + 0.12 + 0.11 / n_eff.sqrt());
    kolmogorov_sf(lambda)
}

/// One-sample KS against a CDF. The CDF is evaluated on the sorted sample,
/// left to right, so incrementally-integrated numeric CDFs work.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<TestResult> {
    let n = samples.len();
    if n < 100 {
        return Err(Error::TooFewSamples { n, min: 100 });
    }
    let mut xs = samples.to_vec();
    xs.sort_unstable_by(|a, b| a.partial_cmp(b).expect("NaN in KS sample"));
    let nf = n as f64;
    let mut d = 0.0_f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / nf).max((i + 1) as f64 / nf - f);
    }
    Ok(TestResult { statistic: d, p_value: ks_p_value(d, nf) })
}

/// Two-sample KS with asymptotic p-value at effective size nm/(n+m).
pub fn ks2_test(a: &[f64], b: &[f64]) -> Result<TestResult> {
    let (n, m) = (a.len(), b.len());
    if n < 100 || m < 100 {
        return Err(Error::TooFewSamples { n: n.min(m), min: 100 });
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(|p, q| p.partial_cmp(q).expect("NaN in KS sample"));
    ys.sort_unstable_by(|p, q| p.partial_cmp(q).expect("NaN in KS sample"));
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0_f64;
    while i < n && j < m {
        let x = xs[i];
        let y = ys[j];
        if x <= y {
            i += 1;
        }
        if y <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n as f64) * (m as f64) / ((n + m) as f64);
    Ok(TestResult { statistic: d, p_value: ks_p_value(d, n_eff) })
}

#[inline]
fn dist_f32(p: &[f32], q: &[f32]) -> f32 {
    let mut s = 0.0f32;
    for k in 0..p.len() {
        let d = p[k] - q[k];
        s += d * d;
    }
    s.sqrt()
}

/// Condensed upper-triangle pairwise distance matrix, f32.
struct Condensed {
    n: usize,
    d: Vec<f32>,
    offsets: Vec<usize>,
}

impl Condensed {
    fn build(points: &[f32], dim: usize) -> Self {
        let n = points.len() / dim;
        let mut offsets = Vec::with_capacity(n);
        let mut acc = 0usize;
        for i in 0..n {
            offsets.push(acc.wrapping_sub(i + 1));
            acc += n - i - 1;
        }
        let total = n * (n - 1) / 2;
        let mut d = vec![0.0f32; total];
        // fill row-parallel
        let rows: Vec<(usize, &mut [f32])> = {
            let mut rows = Vec::with_capacity(n);
            let mut rest: &mut [f32] = &mut d;
            for i in 0..n {
                let (head, tail) = rest.split_at_mut(n - i - 1);
                rows.push((i, head));
                rest = tail;
            }
            rows
        };
        rows.into_par_iter().for_each(|(i, row)| {
            let pi = &points[i * dim..(i + 1) * dim];
            for (k, slot) in row.iter_mut().enumerate() {
                let j = i + 1 + k;
                *slot = dist_f32(pi, &points[j * dim..(j + 1) * dim]);
            }
        });
        Condensed { n, d, offsets }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f32 {
        debug_assert!(i < j && j < self.n);
        self.d[self.offsets[i].wrapping_add(j)]
    }

    /// Sum of distances over unordered pairs inside `idx` (ascending).
    fn within_sum(&self, idx: &[u32]) -> f64 {
        let mut s = 0.0f64;
        for (a, &i) in idx.iter().enumerate() {
            let off = self.offsets[i as usize];
            let mut row = 0.0f32;
            let mut cnt = 0u32;
            for &j in &idx[a + 1..] {
                row += self.d[off.wrapping_add(j as usize)];
                cnt += 1;
                if cnt == 4096 {
                    s += row as f64;
                    row = 0.0;
                    cnt = 0;
                }
            }
            s += row as f64;
        }
        s
    }

    fn total_sum(&self) -> f64 {
        self.d.par_chunks(1 << 16).map(|c| c.iter().map(|&v| v as f64).sum::<f64>()).sum()
    }

    fn row_sums(&self) -> Vec<f64> {
        let n = self.n;
        let mut rs = vec![0.0f64; n];
        for i in 0..n {
            let off = self.offsets[i];
            for j in (i + 1)..n {
                let v = self.d[off.wrapping_add(j)] as f64;
                rs[i] += v;
                rs[j] += v;
            }
        }
        rs
    }
}

fn to_f32(points: &[f64]) -> Vec<f32> {
    points.iter().map(|&v| v as f32).collect()
}

/// Two-sample energy distance test with a permutation p-value.
///
/// `a` and `b` are row-major flat arrays of `dim`-dimensional points.
/// The returned p-value is (1 + #{perm >= observed}) / (perms + 1).
pub fn energy_distance_test(
    a: &[f64],
    b: &[f64],
    dim: usize,
    perms: usize,
    rng: &mut impl Rng,
) -> Result<TestResult> {
    if dim == 0 || a.len() % dim != 0 || b.len() % dim != 0 {
        return Err(Error::DimensionMismatch { expected: dim, got: a.len() % dim });
    }
    let n = a.len() / dim;
    let m = b.len() / dim;
    if n < 2 || m < 2 {
        return Err(Error::TooFewSamples { n: n.min(m), min: 2 });
    }
    let mut pooled = Vec::with_capacity(a.len() + b.len());
    pooled.extend_from_slice(a);
    pooled.extend_from_slice(b);
    let pooled = to_f32(&pooled);
    let cond = Condensed::build(&pooled, dim);
    let total = cond.total_sum();

    let e_stat = |sxx: f64, syy: f64| {
        let sxy = total - sxx - syy;
        let (nf, mf) = (n as f64, m as f64);
        2.0 * sxy / (nf * mf) - 2.0 * sxx / (nf * nf) - 2.0 * syy / (mf * mf)
    };

    let idx_x: Vec<u32> = (0..n as u32).collect();
    let idx_y: Vec<u32> = (n as u32..(n + m) as u32).collect();
    let observed = e_stat(cond.within_sum(&idx_x), cond.within_sum(&idx_y));

    let seeds: Vec<u64> = (0..perms).map(|_| rng.random()).collect();
    let exceed: usize = seeds
        .into_par_iter()
        .map(|seed| {
            let mut prng = ChaCha12Rng::seed_from_u64(seed);
            let mut labels: Vec<u32> = (0..(n + m) as u32).collect();
            labels.shuffle(&mut prng);
            let mut lx = labels[..n].to_vec();
            let mut ly = labels[n..].to_vec();
            lx.sort_unstable();
            ly.sort_unstable();
            let e = e_stat(cond.within_sum(&lx), cond.within_sum(&ly));
            usize::from(e >= observed)
        })
        .sum();
    let p = (1 + exceed) as f64 / (perms + 1) as f64;
    Ok(TestResult { statistic: observed, p_value: p })
}

/// Distance-correlation independence test (V-statistic) with a permutation
/// p-value. `x` rows are `dx`-dimensional, `y` rows `dy`-dimensional.
pub fn distance_correlation_test(
    x: &[f64],
    dx: usize,
    y: &[f64],
    dy: usize,
    perms: usize,
    rng: &mut impl Rng,
) -> Result<TestResult> {
    if dx == 0 || dy == 0 || x.len() % dx != 0 || y.len() % dy != 0 {
        return Err(Error::DimensionMismatch { expected: dx, got: x.len() % dx });
    }
    let n = x.len() / dx;
    if y.len() / dy != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() / dy });
    }
    if n < 10 {
        return Err(Error::TooFewSamples { n, min: 10 });
    }
    let xf = to_f32(x);
    let yf = to_f32(y);
    let ca = Condensed::build(&xf, dx);
    let ra = ca.row_sums();
    let ga: f64 = ra.iter().sum();
    let nf = n as f64;

    // quadratic-form pieces for one labeling of y
    let cross = |yp: &[f32], ry: &[f64], gy: f64| -> f64 {
        let sab: f64 = (0..n - 1)
            .into_par_iter()
            .map(|i| {
                let off = ca.offsets[i];
                let pi = &yp[i * dy..(i + 1) * dy];
                let mut s = 0.0f64;
                let mut acc = 0.0f32;
                let mut cnt = 0u32;
                for j in (i + 1)..n {
                    acc += ca.d[off.wrapping_add(j)] * dist_f32(pi, &yp[j * dy..(j + 1) * dy]);
                    cnt += 1;
                    if cnt == 2048 {
                        s += acc as f64;
                        acc = 0.0;
                        cnt = 0;
                    }
                }
                s + acc as f64
            })
            .sum();
        let sab = 2.0 * sab; // ordered pairs
        let dot: f64 = ra.iter().zip(ry).map(|(p, q)| p * q).sum();
        sab / (nf * nf) - 2.0 * dot / (nf * nf * nf) + ga * gy / (nf * nf * nf * nf)
    };

    let cb = Condensed::build(&yf, dy);
    let rb = cb.row_sums();
    let gb: f64 = rb.iter().sum();

    let dcov2 = cross(&yf, &rb, gb);
    let dvar_a = {
        let dot: f64 = ra.iter().map(|v| v * v).sum();
        let saa: f64 = ca.d.par_chunks(1 << 16).map(|c| c.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>()).sum::<f64>() * 2.0;
        saa / (nf * nf) - 2.0 * dot / (nf * nf * nf) + ga * ga / (nf * nf * nf * nf)
    };
    let dvar_b = {
        let dot: f64 = rb.iter().map(|v| v * v).sum();
        let sbb: f64 = cb.d.par_chunks(1 << 16).map(|c| c.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>()).sum::<f64>() * 2.0;
        sbb / (nf * nf) - 2.0 * dot / (nf * nf * nf) + gb * gb / (nf * nf * nf * nf)
    };
    let denom = (dvar_a * dvar_b).sqrt();
    let dcor2 = if denom > 0.0 { (dcov2 / denom).max(0.0) } else { 0.0 };

    let seeds: Vec<u64> = (0..perms).map(|_| rng.random()).collect();
    let exceed: usize = seeds
        .into_iter()
        .map(|seed| {
            let mut prng = ChaCha12Rng::seed_from_u64(seed);
            let mut sigma: Vec<u32> = (0..n as u32).collect();
            sigma.shuffle(&mut prng);
            let mut yp = vec![0.0f32; yf.len()];
            let mut ry = vec![0.0f64; n];
            for (i, &s) in sigma.iter().enumerate() {
                let s = s as usize;
                yp[i * dy..(i + 1) * dy].copy_from_slice(&yf[s * dy..(s + 1) * dy]);
                ry[i] = rb[s];
            }
            usize::from(cross(&yp, &ry, gb) >= dcov2)
        })
        .sum();
    let p = (1 + exceed) as f64 / (perms + 1) as f64;
    Ok(TestResult { statistic: dcor2, p_value: p })
}

/// Mean of exp(-<lambda, x>) with its standard error, per lambda.
pub fn empirical_laplace(
    samples: &[f64],
    dim: usize,
    lambda_grid: &[Vec<f64>],
) -> Result<Vec<(f64, f64)>> {
    if dim == 0 || samples.len() % dim != 0 {
        return Err(Error::DimensionMismatch { expected: dim, got: samples.len() % dim });
    }
    let n = samples.len() / dim;
    if n == 0 {
        return Err(Error::TooFewSamples { n: 0, min: 1 });
    }
    let mut out = Vec::with_capacity(lambda_grid.len());
    for lambda in lambda_grid {
        if lambda.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: lambda.len() });
        }
        let vals: Vec<f64> = samples
            .chunks_exact(dim)
            .map(|row| (-row.iter().zip(lambda).map(|(a, b)| a * b).sum::<f64>()).exp())
            .collect();
        out.push(mean_se(&vals));
    }
    Ok(out)
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn pearson_corr(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// z-score of a correlation under the Fisher transform; |z| <= crit is the
/// "CI of 0 contains r" check.
pub fn corr_fisher_z(r: f64, n: usize) -> f64 {
    let r = r.clamp(-0.999_999, 0.999_999);
    0.5 * ((1.0 + r) / (1.0 - r)).ln() * ((n as f64) - 3.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::replica_rng;
    use rand_distr::StandardNormal;

    #[test]
    fn ks_uniform_self_test_across_seeds() {
        let mut pass = 0;
        for seed in 0..100 {
            let mut rng = replica_rng(2024, 700, seed);
            let xs: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
            let r = ks_test(&xs, |x| x.clamp(0.0, 1.0)).unwrap();
            if r.p_value > 0.01 {
                pass += 1;
            }
        }
        assert!(pass >= 98, "only {pass}/100 uniform KS runs passed");
    }

    #[test]
    fn ks_detects_gross_shift() {
        let mut rng = replica_rng(2024, 701, 0);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>() + 0.2).collect();
        let r = ks_test(&xs, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn ks_too_few_samples() {
        assert!(matches!(ks_test(&[0.5; 50], |x| x), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn energy_null_self_test() {
        let mut pass = 0;
        let trials = 50;
        for seed in 0..trials {
            let mut rng = replica_rng(2024, 702, seed);
            let a: Vec<f64> = (0..200).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let b: Vec<f64> = (0..200).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let r = energy_distance_test(&a, &b, 1, 99, &mut rng).unwrap();
            if r.p_value > 0.01 {
                pass += 1;
            }
        }
        assert!(pass >= trials - 3, "only {pass}/{trials} null energy runs passed");
    }

    #[test]
    fn energy_detects_mean_shift() {
        let mut rng = replica_rng(2024, 703, 0);
        let a: Vec<f64> = (0..600).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let b: Vec<f64> = (0..600).map(|_| rng.sample::<f64, _>(StandardNormal) + 0.5).collect();
        let r = energy_distance_test(&a, &b, 1, 199, &mut rng).unwrap();
        assert!(r.p_value <= 0.01);
    }

    #[test]
    fn energy_dimension_mismatch() {
        let mut rng = replica_rng(2024, 704, 0);
        assert!(energy_distance_test(&[1.0, 2.0, 3.0], &[1.0, 2.0], 2, 10, &mut rng).is_err());
    }

    #[test]
    fn dcor_null_and_dependence() {
        let mut rng = replica_rng(2024, 705, 0);
        let x: Vec<f64> = (0..800).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let y: Vec<f64> = (0..800).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let indep = distance_correlation_test(&x, 1, &y, 1, 199, &mut rng).unwrap();
        assert!(indep.p_value > 0.01);
        // strong dependence: y = x^2 + small noise
        let y2: Vec<f64> =
            x.iter().map(|v| v * v + 0.01 * rng.sample::<f64, _>(StandardNormal)).collect();
        let dep = distance_correlation_test(&x, 1, &y2, 1, 199, &mut rng).unwrap();
        assert!(dep.p_value <= 0.01);
    }

    #[test]
    fn laplace_trivial_cases() {
        let grid = vec![vec![0.0], vec![1.0]];
        let out = empirical_laplace(&[2.0, 2.0, 2.0], 1, &grid).unwrap();
        assert_eq!(out[0], (1.0, 0.0));
        assert!((out[1].0 - (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(out[1].1, 0.0);
    }

    #[test]
    fn condensed_matches_direct() {
        let pts: Vec<f32> = vec![0.0, 0.0, 3.0, 4.0, 1.0, 1.0];
        let c = Condensed::build(&pts, 2);
        assert!((c.get(0, 1) - 5.0).abs() < 1e-6);
        assert!((c.get(0, 2) - 2.0_f32.sqrt()).abs() < 1e-6);
        let rs = c.row_sums();
        assert!((rs[0] - (5.0 + 2.0_f64.sqrt())).abs() < 1e-6);
    }
}
