//! The Z-process Z_i(u) = T_i(u) e^{-rho_i(u)} and everything built on
//! it: the autonomous Z-SDE, independence from the clock limits, the
//! conditional-law kernel K, the semigroup intertwining check and both
//! samplers of the two-sided equality in law.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lamperti::{self, RhoPathBundle};
use crate::lattice::GraphPotentialParams;
use crate::paths::SdeOptions;
use crate::potential::{self, PotentialSample};
use crate::report::{Gate, VerificationReport};
use crate::scalar::Ig;
use crate::stats;
use crate::streams::replica_rng;

/// Z-paths over the u-grid, with the exponential-functional companions
/// (e*, T*, Z*) attached when the underlying bundle carried the
/// conditional noise B*.
#[derive(Debug, Clone)]
pub struct ZPathBundle {
    pub u_grid: Vec<f64>,
    pub z: Vec<Vec<f64>>,
    pub starred: Option<StarredProcesses>,
}

/// e*_i = exp(B*_i(u) + u/2), T*_i = int (e*_i)^2, Z*_i = T*_i / e*_i.
#[derive(Debug, Clone)]
pub struct StarredProcesses {
    pub e_star: Vec<Vec<f64>>,
    pub t_star: Vec<Vec<f64>>,
    pub z_star: Vec<Vec<f64>>,
}

/// Pointwise transform Z = T e^{-rho}; attaches the starred processes when
/// the bundle carries B* (T* accumulated by the same left-endpoint rule
/// the conditional simulator uses).
pub fn z_from_rho(bundle: &RhoPathBundle) -> ZPathBundle {
    let n = bundle.n();
    let len = bundle.u_grid.len();
    let mut z = vec![vec![0.0; len]; n];
    for i in 0..n {
        for k in 0..len {
            z[i][k] = bundle.t_clock[i][k] * (-bundle.rho[i][k]).exp();
        }
    }
    let starred = bundle.b_star.as_ref().map(|b_star| {
        let du: Vec<f64> =
            bundle.u_grid.windows(2).map(|w| w[1] - w[0]).collect();
        let mut e_star = vec![vec![0.0; len]; n];
        let mut t_star = vec![vec![0.0; len]; n];
        let mut z_star = vec![vec![0.0; len]; n];
        for i in 0..n {
            let mut acc = 0.0;
            for k in 0..len {
                let u = bundle.u_grid[k];
                let e = (b_star[i][k] + 0.5 * u).exp();
                e_star[i][k] = e;
                t_star[i][k] = acc;
                z_star[i][k] = acc / e;
                if k + 1 < len {
                    acc += e * e * du[k];
                }
            }
        }
        StarredProcesses { e_star, t_star, z_star }
    });
    ZPathBundle { u_grid: bundle.u_grid.clone(), z, starred }
}

fn z_step(z: f64, theta: f64, du: f64, sq_du: f64, xi: f64) -> f64 {
    // geometric step for the Z dB part (positivity preserved), drift added
    // in natural space
    z * (sq_du * xi - 0.5 * du).exp() + (theta + z) * du
}

/// Independent-coordinate SDE dZ_i = Z_i dB_i + (theta_i + Z_i) du from
/// Z(0) = start (default 0).
pub fn simulate_z_sde(
    theta: &[f64],
    start: Option<&[f64]>,
    rng: &mut impl Rng,
    du: f64,
    u_max: f64,
) -> Result<ZPathBundle> {
    if !(du > 0.0) || !(u_max > 0.0) {
        return Err(Error::InvalidParam("simulate_z_sde needs du > 0 and u_max > 0".into()));
    }
    let n = theta.len();
    let steps = (u_max / du).round() as usize;
    let u_grid: Vec<f64> = (0..=steps).map(|k| k as f64 * du).collect();
    let mut z = vec![Vec::with_capacity(steps + 1); n];
    let sq = du.sqrt();
    for i in 0..n {
        if !(theta[i] > 0.0) {
            return Err(Error::InvalidParam(format!("theta[{i}] must be > 0")));
        }
        let mut zi = match start {
            None => 0.0,
            Some(s) => {
                if !(s[i] >= 0.0) {
                    return Err(Error::InvalidParam(format!("start[{i}] must be >= 0")));
                }
                s[i]
            }
        };
        for _ in 0..=steps {
            z[i].push(zi);
            let xi: f64 = rng.sample(StandardNormal);
            zi = z_step(zi, theta[i], du, sq, xi);
        }
        z[i].truncate(steps + 1);
    }
    Ok(ZPathBundle { u_grid, z, starred: None })
}

/// Endpoint Z(u_max) only.
pub fn z_sde_endpoint(
    theta: &[f64],
    start: &[f64],
    rng: &mut impl Rng,
    du: f64,
    u_max: f64,
) -> Vec<f64> {
    let steps = (u_max / du).round() as usize;
    let sq = du.sqrt();
    theta
        .iter()
        .zip(start)
        .map(|(&th, &z0)| {
            let mut z = z0;
            for _ in 0..steps {
                let xi: f64 = rng.sample(StandardNormal);
                z = z_step(z, th, du, sq, xi);
            }
            z
        })
        .collect()
}

/// Z values at the requested probe times (per coordinate), path not kept.
pub fn z_sde_probe(
    theta: &[f64],
    rng: &mut impl Rng,
    du: f64,
    probes: &[f64],
) -> Vec<Vec<f64>> {
    let u_max = probes.iter().cloned().fold(0.0, f64::max);
    let steps = (u_max / du).round() as usize;
    let sq = du.sqrt();
    theta
        .iter()
        .map(|&th| {
            let mut z = 0.0;
            let mut out = vec![0.0; probes.len()];
            for k in 0..=steps {
                let u = k as f64 * du;
                for (m, &p) in probes.iter().enumerate() {
                    if (u - p).abs() <= 0.5 * du {
                        out[m] = z;
                    }
                }
                let xi: f64 = rng.sample(StandardNormal);
                z = z_step(z, th, du, sq, xi);
            }
            out
        })
        .collect()
}

// ---------------------------------------------------------------------------
// The kernel K and the intertwining
// ---------------------------------------------------------------------------

fn shifted_eta(params: &GraphPotentialParams, z: &[f64], factor: f64) -> Result<GraphPotentialParams> {
    if z.len() != params.n() || z.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParam("z must have length n with entries > 0".into()));
    }
    let eta: Vec<f64> =
        params.eta().iter().zip(z).map(|(e, zi)| e + factor / zi).collect();
    params.with_eta(eta)
}

/// One Monte Carlo draw through the kernel: beta from the potential with
/// eta shifted by 1/z, mapped to (rho, T) = (-log(2 beta z), 1/(2 beta)).
pub fn kernel_draw(
    params: &GraphPotentialParams,
    z: &[f64],
    rng: &mut impl Rng,
    opts: &SdeOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let shifted = shifted_eta(params, z, 1.0)?;
    let s = potential::sample_beta_via_hitting(&shifted, rng, opts)?;
    let rho = s.beta.iter().zip(z).map(|(b, zi)| -(2.0 * b * zi).ln()).collect();
    Ok((rho, s.tau))
}

/// Monte Carlo estimate (mean, standard error) of K(g)(z) with m draws.
pub fn kernel_k(
    params: &GraphPotentialParams,
    z: &[f64],
    g: &dyn Fn(&[f64], &[f64]) -> f64,
    rng: &mut impl Rng,
    m: usize,
    opts: &SdeOptions,
) -> Result<(f64, f64)> {
    let mut vals = Vec::with_capacity(m);
    for _ in 0..m {
        let (rho, t) = kernel_draw(params, z, rng, opts)?;
        vals.push(g(&rho, &t));
    }
    Ok(stats::mean_se(&vals))
}

/// Bounded test functions for the intertwining comparison.
#[derive(Debug, Clone)]
pub enum TestFunction {
    /// exp(-sum_i lambda_i / (2 T_i))
    ExpNegHalfInvT(Vec<f64>),
    /// rho_coord clipped to [lo, hi]
    ClippedRho { coord: usize, lo: f64, hi: f64 },
}

impl TestFunction {
    pub fn eval(&self, rho: &[f64], t: &[f64]) -> f64 {
        match self {
            TestFunction::ExpNegHalfInvT(lambda) => {
                let s: f64 = lambda.iter().zip(t).map(|(l, ti)| l / (2.0 * ti)).sum();
                (-s).exp()
            }
            TestFunction::ClippedRho { coord, lo, hi } => rho[*coord].clamp(*lo, *hi),
        }
    }

    pub fn label(&self) -> String {
        match self {
            TestFunction::ExpNegHalfInvT(lambda) => format!("exp(-<{lambda:?}, 1/(2T)>)"),
            TestFunction::ClippedRho { coord, lo, hi } => format!("clip(rho_{coord}, {lo}, {hi})"),
        }
    }
}

pub fn default_test_suite(n: usize) -> Vec<TestFunction> {
    vec![
        TestFunction::ExpNegHalfInvT(vec![1.0; n]),
        TestFunction::ExpNegHalfInvT(vec![0.5; n]),
        TestFunction::ClippedRho { coord: 0, lo: -3.0, hi: 3.0 },
    ]
}

/// Compare Q_{u0} K g (run the Z-SDE from z, then the kernel) against
/// K P_{u0} g (draw from the kernel at z, then run the opposite-drift
/// system from the general start) for every g in the suite; sides must
/// agree within 3 combined standard errors.
#[allow(clippy::too_many_arguments)]
pub fn verify_intertwining(
    params: &GraphPotentialParams,
    z: &[f64],
    u0: f64,
    suite: &[TestFunction],
    n_rep: usize,
    seed: u64,
    opts: &SdeOptions,
    du: f64,
) -> Result<VerificationReport> {
    const DOM_LHS: u64 = 0x11;
    const DOM_RHS: u64 = 0x12;
    let start = std::time::Instant::now();
    let nf = suite.len();
    let lhs: Vec<Vec<f64>> = (0..n_rep as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, DOM_LHS, r);
            let z_u0 = z_sde_endpoint(params.theta(), z, &mut rng, du, u0);
            let (rho, t) = kernel_draw(params, &z_u0, &mut rng, opts)?;
            Ok(suite.iter().map(|g| g.eval(&rho, &t)).collect())
        })
        .collect::<Result<_>>()?;
    let rhs: Vec<Vec<f64>> = (0..n_rep as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, DOM_RHS, r);
            let (rho0, t0) = kernel_draw(params, z, &mut rng, opts)?;
            // the general-start system can push the clock into a stiff
            // corner; retry with a finer grid before giving up
            let mut du_local = du;
            let mut last_err = None;
            for _ in 0..4 {
                match lamperti::rho_endpoint(params, &mut rng, du_local, u0, Some((&rho0, &t0))) {
                    Ok((rho, t)) => {
                        return Ok(suite.iter().map(|g| g.eval(&rho, &t)).collect());
                    }
                    Err(e @ (Error::SingularMatrix | Error::Overflow(_))) => {
                        last_err = Some(e);
                        du_local *= 0.5;
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(last_err.unwrap())
        })
        .collect::<Result<_>>()?;

    let mut report = VerificationReport::new("intertwining", seed, n_rep as u64);
    for (gi, g) in suite.iter().enumerate() {
        let a: Vec<f64> = lhs.iter().map(|v| v[gi]).collect();
        let b: Vec<f64> = rhs.iter().map(|v| v[gi]).collect();
        let (ma, sa) = stats::mean_se(&a);
        let (mb, sb) = stats::mean_se(&b);
        let combined = (sa * sa + sb * sb).sqrt();
        let zscore = (ma - mb) / combined;
        report.check_with_se(
            format!("Qu.K vs K.Pu for g = {}", g.label()),
            zscore,
            3.0,
            Gate::AbsAtMost,
            combined,
        );
        report.note_last(format!("lhs {ma:.6} rhs {mb:.6}"));
        let _ = nf;
    }
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

// ---------------------------------------------------------------------------
// Conditional law given Z(u0) and independence from the clock limits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ConditionalLawConfig {
    pub u0: f64,
    pub z_center: Vec<f64>,
    /// window half-width as a fraction of z_center (conditioning on a null
    /// event is approximated by binning; bias is O(width))
    pub rel_half_width: f64,
    pub min_hits: usize,
    pub max_forward: usize,
    pub n_reference: usize,
    pub du: f64,
    pub sde: SdeOptions,
    pub alpha: f64,
    pub permutations: usize,
}

impl ConditionalLawConfig {
    pub fn new(u0: f64, z_center: Vec<f64>) -> Self {
        ConditionalLawConfig {
            u0,
            z_center,
            rel_half_width: 0.05,
            min_hits: 500,
            max_forward: 2_000_000,
            n_reference: 2000,
            du: 1e-3,
            sde: SdeOptions::default(),
            alpha: 0.01,
            permutations: 200,
        }
    }
}

/// Forward-simulate (rho, T), keep replicas with Z(u0) inside the window
/// around z_center, and compare beta(u0) = 1/(2 T(u0)) against direct
/// draws from the potential with eta shifted by 1/z_center (energy
/// distance). Also runs the eta + 2/z negative control, which must
/// reject, and records that the conditional spread is nondegenerate.
pub fn verify_conditional_law(
    params: &GraphPotentialParams,
    cfg: &ConditionalLawConfig,
    seed: u64,
) -> Result<VerificationReport> {
    const DOM_FWD: u64 = 0x21;
    const DOM_REF: u64 = 0x22;
    const DOM_NEG: u64 = 0x23;
    const DOM_PERM: u64 = 0x24;
    let start = std::time::Instant::now();
    let n = params.n();
    if cfg.z_center.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: cfg.z_center.len() });
    }
    let lo: Vec<f64> = cfg.z_center.iter().map(|z| z * (1.0 - cfg.rel_half_width)).collect();
    let hi: Vec<f64> = cfg.z_center.iter().map(|z| z * (1.0 + cfg.rel_half_width)).collect();

    let batch = 8192usize;
    let mut hits: Vec<f64> = Vec::new(); // flat, n per hit
    let mut done = 0usize;
    while done < cfg.max_forward && hits.len() / n < cfg.min_hits {
        let take = batch.min(cfg.max_forward - done);
        let found: Vec<Vec<f64>> = (done as u64..(done + take) as u64)
            .into_par_iter()
            .filter_map(|r| {
                let mut rng = replica_rng(seed, DOM_FWD, r);
                let (rho, t) = lamperti::rho_endpoint(params, &mut rng, cfg.du, cfg.u0, None).ok()?;
                for i in 0..n {
                    let z = t[i] * (-rho[i]).exp();
                    if z < lo[i] || z > hi[i] {
                        return None;
                    }
                }
                Some(t.iter().map(|ti| 1.0 / (2.0 * ti)).collect())
            })
            .collect();
        for h in found {
            hits.extend(h);
        }
        done += take;
    }
    let n_hits = hits.len() / n;
    if n_hits < cfg.min_hits {
        return Err(Error::InsufficientHits { hits: n_hits, needed: cfg.min_hits });
    }

    let draw_reference = |domain: u64, factor: f64| -> Result<Vec<f64>> {
        let shifted = shifted_eta(params, &cfg.z_center, factor)?;
        let flat: Vec<Vec<f64>> = (0..cfg.n_reference as u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = replica_rng(seed, domain, r);
                Ok(potential::sample_beta_via_hitting(&shifted, &mut rng, &cfg.sde)?.beta)
            })
            .collect::<Result<_>>()?;
        Ok(flat.into_iter().flatten().collect())
    };
    let reference = draw_reference(DOM_REF, 1.0)?;
    let negative = draw_reference(DOM_NEG, 2.0)?;

    let mut report = VerificationReport::new("conditional-law", seed, done as u64);
    let mut perm_rng = replica_rng(seed, DOM_PERM, 0);
    let main = stats::energy_distance_test(&hits, &reference, n, cfg.permutations, &mut perm_rng)?;
    report.check("beta(u0) | Z-window vs shifted potential (energy)", main.p_value, cfg.alpha, Gate::Above);
    report.note_last(format!(
        "{} hits of {} forward replicas; window half-width {} of z, bias O(width)",
        n_hits, done, cfg.rel_half_width
    ));
    let neg = stats::energy_distance_test(&hits, &negative, n, cfg.permutations, &mut perm_rng)?;
    report.check("negative control eta + 2/z rejects (energy)", neg.p_value, cfg.alpha, Gate::AtMost);

    // nondegenerate conditional spread: Z(u0) pins the conditional law,
    // not the value of beta(u0)
    let first: Vec<f64> = hits.chunks_exact(n).map(|row| row[0]).collect();
    let (m, _) = stats::mean_se(&first);
    let sd = (first.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (first.len() - 1) as f64).sqrt();
    report.check("conditional coefficient of variation", sd / m, 0.05, Gate::Above);
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Distance-correlation independence test between Z(u0) and the clock
/// limits, with the dependent pair (T(u0), T^inf) as negative control.
pub fn verify_independence_z_tinf(
    params: &GraphPotentialParams,
    u0: f64,
    n_rep: usize,
    seed: u64,
    opts: &SdeOptions,
    du: f64,
) -> Result<VerificationReport> {
    const DOM_FWD: u64 = 0x31;
    const DOM_PERM: u64 = 0x32;
    let start = std::time::Instant::now();
    let n = params.n();
    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..n_rep as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, DOM_FWD, r);
            let x = crate::paths::simulate_x(params, &mut rng, opts)?;
            let b = lamperti::clock_change(&x, u0, u0)?;
            let k = b.u_grid.len() - 1;
            let z: Vec<f64> = (0..n).map(|i| b.t_clock[i][k] * (-b.rho[i][k]).exp()).collect();
            let t_u0: Vec<f64> = (0..n).map(|i| b.t_clock[i][k]).collect();
            Ok((z, t_u0, x.tau))
        })
        .collect::<Result<_>>()?;
    let _ = du;
    let z_flat: Vec<f64> = rows.iter().flat_map(|r| r.0.clone()).collect();
    let t_flat: Vec<f64> = rows.iter().flat_map(|r| r.1.clone()).collect();
    let tau_flat: Vec<f64> = rows.iter().flat_map(|r| r.2.clone()).collect();

    let mut report = VerificationReport::new("independence-z-tinf", seed, n_rep as u64);
    let mut rng = replica_rng(seed, DOM_PERM, 0);
    let main = stats::distance_correlation_test(&z_flat, n, &tau_flat, n, 200, &mut rng)?;
    report.check("dcor(Z(u0), T_inf) independent", main.p_value, 0.01, Gate::Above);
    report.note_last(format!("dcor^2 = {:.3e}", main.statistic));
    let neg = stats::distance_correlation_test(&t_flat, n, &tau_flat, n, 200, &mut rng)?;
    report.check("negative control dcor(T(u0), T_inf) rejects", neg.p_value, 0.01, Gate::AtMost);
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

// ---------------------------------------------------------------------------
// Equality in law
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Lhs,
    Rhs,
}

/// One draw of either side of the equality in law at conditioning vector
/// z: LHS carries (beta, alpha), RHS (delta, A).
#[derive(Debug, Clone)]
pub struct EqualityLawDraw {
    pub side: Side,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub z: Vec<f64>,
    pub components: (Vec<f64>, Vec<f64>),
}

/// Two-stage draw: beta from the potential with eta + 1/z, then alpha from
/// the conditional potential with conductances W K_{1/(2 beta)}^{-1},
/// start levels 1/(2 beta_i z_i) and drift eta + W H_beta^{-1} eta.
/// Returns ((2 beta), (2 beta)^2 / (2 alpha)).
pub fn sample_equality_lhs(
    params: &GraphPotentialParams,
    z: &[f64],
    rng: &mut impl Rng,
    opts: &SdeOptions,
) -> Result<EqualityLawDraw> {
    let n = params.n();
    let shifted = shifted_eta(params, z, 1.0)?;
    let beta_sample: PotentialSample = potential::sample_beta_via_hitting(&shifted, rng, opts)?;
    let beta = beta_sample.beta;
    // conditional parameters; the restart identity W~ (T eta) = W H^-1 eta
    // at T = 1/(2 beta) gives eta~ directly
    let rp = potential::restart_params(
        params,
        &beta_sample.tau,
        &vec![f64::INFINITY; n],
        &vec![0.0; n],
    )?;
    let theta_tilde: Vec<f64> = beta.iter().zip(z).map(|(b, zi)| 1.0 / (2.0 * b * zi)).collect();
    let cond = GraphPotentialParams::new(rp.w_tilde.clone(), theta_tilde, rp.eta_tilde.clone())?;
    let alpha = potential::sample_beta_via_hitting(&cond, rng, opts)?.beta;
    let first: Vec<f64> = beta.iter().map(|b| 2.0 * b).collect();
    let second: Vec<f64> =
        first.iter().zip(&alpha).map(|(f, a)| f * f / (2.0 * a)).collect();
    Ok(EqualityLawDraw { side: Side::Lhs, first, second, z: z.to_vec(), components: (beta, alpha) })
}

/// Independent draw: delta from the unshifted potential and per-coordinate
/// A_i ~ Ig(1/(theta_i z_i), 1/z_i^2). Returns (2 delta + A, A + A^2/(2 delta)).
pub fn sample_equality_rhs(
    params: &GraphPotentialParams,
    z: &[f64],
    rng: &mut impl Rng,
    opts: &SdeOptions,
) -> Result<EqualityLawDraw> {
    if z.len() != params.n() || z.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParam("z must have length n with entries > 0".into()));
    }
    let delta = potential::sample_beta_via_hitting(params, rng, opts)?.beta;
    let a: Vec<f64> = params
        .theta()
        .iter()
        .zip(z)
        .map(|(&th, &zi)| Ig { mean: 1.0 / (th * zi), shape: 1.0 / (zi * zi) }.sample(rng))
        .collect();
    let first: Vec<f64> = delta.iter().zip(&a).map(|(d, ai)| 2.0 * d + ai).collect();
    let second: Vec<f64> =
        delta.iter().zip(&a).map(|(d, ai)| ai + ai * ai / (2.0 * d)).collect();
    Ok(EqualityLawDraw { side: Side::Rhs, first, second, z: z.to_vec(), components: (delta, a) })
}

/// Reciprocal rewriting residual: the pair (1/(A + 2 delta), 1/A - 1/(A + 2 delta))
/// must equal (1/first, 1/second) exactly in real arithmetic; returns the
/// largest relative deviation observed on this draw.
pub fn rewriting_residual(draw: &EqualityLawDraw) -> f64 {
    let mut worst = 0.0_f64;
    match draw.side {
        Side::Rhs => {
            let (delta, a) = (&draw.components.0, &draw.components.1);
            for i in 0..delta.len() {
                let direct = 1.0 / a[i] - 1.0 / (a[i] + 2.0 * delta[i]);
                let via = 1.0 / draw.second[i];
                worst = worst.max((direct - via).abs() / via.abs().max(1e-300));
                let d1 = 1.0 / (a[i] + 2.0 * delta[i]);
                let v1 = 1.0 / draw.first[i];
                worst = worst.max((d1 - v1).abs() / v1.abs().max(1e-300));
            }
        }
        Side::Lhs => {
            let (beta, alpha) = (&draw.components.0, &draw.components.1);
            for i in 0..beta.len() {
                let direct = 2.0 * alpha[i] / (4.0 * beta[i] * beta[i]);
                let via = 1.0 / draw.second[i];
                worst = worst.max((direct - via).abs() / via.abs().max(1e-300));
                let d1 = 1.0 / (2.0 * beta[i]);
                let v1 = 1.0 / draw.first[i];
                worst = worst.max((d1 - v1).abs() / v1.abs().max(1e-300));
            }
        }
    }
    worst
}

/// Draw n replicas per side and test the equality in law: per-coordinate
/// two-sample KS on both components, a joint energy-distance test, and the
/// reciprocal rewriting at 1e-12 per draw.
pub fn verify_equality_in_law(
    params: &GraphPotentialParams,
    z: &[f64],
    n_rep: usize,
    seed: u64,
    opts: &SdeOptions,
) -> Result<VerificationReport> {
    const DOM_LHS: u64 = 0x41;
    const DOM_RHS: u64 = 0x42;
    const DOM_PERM: u64 = 0x43;
    let start = std::time::Instant::now();
    let n = params.n();
    let lhs: Vec<EqualityLawDraw> = (0..n_rep as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, DOM_LHS, r);
            sample_equality_lhs(params, z, &mut rng, opts)
        })
        .collect::<Result<_>>()?;
    let rhs: Vec<EqualityLawDraw> = (0..n_rep as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, DOM_RHS, r);
            sample_equality_rhs(params, z, &mut rng, opts)
        })
        .collect::<Result<_>>()?;

    let mut report = VerificationReport::new("equality-in-law", seed, n_rep as u64);
    for i in 0..n {
        let a1: Vec<f64> = lhs.iter().map(|d| d.first[i]).collect();
        let b1: Vec<f64> = rhs.iter().map(|d| d.first[i]).collect();
        let ks1 = stats::ks2_test(&a1, &b1)?;
        report.check(format!("ks first component, coord {i}"), ks1.p_value, 0.01, Gate::Above);
        let a2: Vec<f64> = lhs.iter().map(|d| d.second[i]).collect();
        let b2: Vec<f64> = rhs.iter().map(|d| d.second[i]).collect();
        let ks2 = stats::ks2_test(&a2, &b2)?;
        report.check(format!("ks second component, coord {i}"), ks2.p_value, 0.01, Gate::Above);
    }
    let flat = |draws: &[EqualityLawDraw]| -> Vec<f64> {
        draws
            .iter()
            .flat_map(|d| d.first.iter().chain(d.second.iter()).cloned().collect::<Vec<_>>())
            .collect()
    };
    let mut perm_rng = replica_rng(seed, DOM_PERM, 0);
    let joint = stats::energy_distance_test(&flat(&lhs), &flat(&rhs), 2 * n, 200, &mut perm_rng)?;
    report.check("joint energy distance", joint.p_value, 0.01, Gate::Above);

    let worst = lhs.iter().chain(rhs.iter()).map(rewriting_residual).fold(0.0, f64::max);
    report.check("reciprocal rewriting residual", worst, 1e-12, Gate::AtMost);
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::SquareMatrix;
    use crate::streams::replica_rng;

    fn c1() -> GraphPotentialParams {
        let w = SquareMatrix::from_rows(&[vec![0.0]]).unwrap();
        GraphPotentialParams::new(w, vec![1.0], vec![1.0]).unwrap()
    }

    fn c2() -> GraphPotentialParams {
        let w = SquareMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        GraphPotentialParams::new(w, vec![1.0, 1.0], vec![0.0, 1.0]).unwrap()
    }

    #[test]
    fn z_starts_at_zero_and_matyor_identities_hold_on_conditional_paths() {
        let mut rng = replica_rng(2024, 500, 0);
        let bundle =
            lamperti::simulate_rho_conditional(&[1.0, 1.5], &[0.8, 1.1], &mut rng, 1e-3, 2.0)
                .unwrap();
        let zb = z_from_rho(&bundle);
        assert_eq!(zb.z[0][0], 0.0);
        assert_eq!(zb.z[1][0], 0.0);
        let st = zb.starred.as_ref().unwrap();
        let theta = [1.0, 1.5];
        let t_inf = [0.8, 1.1];
        for i in 0..2 {
            let th2 = theta[i] * theta[i];
            for k in (0..zb.u_grid.len()).step_by(97) {
                let t = bundle.t_clock[i][k];
                // theta^2 T* = T_inf T / (T_inf - T)
                let lhs = th2 * st.t_star[i][k];
                let rhs = t_inf[i] * t / (t_inf[i] - t);
                assert!((lhs - rhs).abs() <= 1e-8 * (1.0 + rhs.abs()), "k={k} {lhs} {rhs}");
                if k > 0 {
                    // 1/T_inf + 1/(theta^2 T*) = 1/T
                    let lhs3 = 1.0 / t_inf[i] + 1.0 / (th2 * st.t_star[i][k]);
                    assert!((lhs3 - 1.0 / t).abs() <= 1e-8 * (1.0 / t), "k={k}");
                    // theta Z* = Z
                    let zs = theta[i] * st.z_star[i][k];
                    assert!((zs - zb.z[i][k]).abs() <= 1e-8 * (1.0 + zb.z[i][k]));
                }
            }
        }
    }

    #[test]
    fn z_sde_coordinates_independent_and_mean_curve() {
        let mut z1 = Vec::new();
        let mut z2 = Vec::new();
        for r in 0..4000 {
            let mut rng = replica_rng(2024, 501, r);
            let z = z_sde_endpoint(&[1.0, 1.0], &[0.0, 0.0], &mut rng, 1e-3, 1.0);
            z1.push(z[0]);
            z2.push(z[1]);
        }
        let corr = stats::pearson_corr(&z1, &z2);
        assert!(stats::corr_fisher_z(corr, z1.len()).abs() <= 2.576, "corr {corr}");
        let (m, se) = stats::mean_se(&z1);
        let expect = std::f64::consts::E - 1.0;
        assert!((m - expect).abs() <= 3.0 * se, "mean {m} expect {expect}");
    }

    #[test]
    fn z_sde_matches_forward_z_law_at_u1() {
        // Theorem-level law equality, small version of the acceptance run
        let params = c1();
        let mut fwd = Vec::new();
        for r in 0..3000 {
            let mut rng = replica_rng(2024, 502, r);
            let (rho, t) = lamperti::rho_endpoint(&params, &mut rng, 1e-3, 1.0, None).unwrap();
            fwd.push(t[0] * (-rho[0]).exp());
        }
        let mut gen = Vec::new();
        for r in 0..3000 {
            let mut rng = replica_rng(2024, 503, r);
            gen.push(z_sde_endpoint(&[1.0], &[0.0], &mut rng, 1e-3, 1.0)[0]);
        }
        let ks = stats::ks2_test(&fwd, &gen).unwrap();
        assert!(ks.p_value > 0.01, "p {}", ks.p_value);
    }

    #[test]
    fn kernel_is_markov_and_matches_laplace() {
        let params = c2();
        let z = [1.0, 1.0];
        let opts = SdeOptions::with_dt(1e-3);
        let mut rng = replica_rng(2024, 504, 0);
        let (one, se1) = kernel_k(&params, &z, &|_, _| 1.0, &mut rng, 400, &opts).unwrap();
        assert_eq!(one, 1.0);
        assert_eq!(se1, 0.0);

        // g = exp(-<lambda, 1/(2T)>) integrates the shifted potential's
        // Laplace transform
        let lambda = [0.7, 1.3];
        let g = move |_: &[f64], t: &[f64]| {
            (-(lambda[0] / (2.0 * t[0]) + lambda[1] / (2.0 * t[1]))).exp()
        };
        let (m, se) = kernel_k(&params, &z, &g, &mut rng, 4000, &opts).unwrap();
        let shifted = shifted_eta(&params, &z, 1.0).unwrap();
        let exact = potential::nu_laplace(&shifted, &lambda).unwrap();
        assert!((m - exact).abs() <= 3.0 * se, "m {m} exact {exact} se {se}");
    }

    #[test]
    fn kernel_linear_functional_matches_quadrature_n1() {
        // g(rho, T) = rho_1 at n=1, W=0: quadrature of -ln(2 b z) against
        // the shifted scalar potential
        let params = c1();
        let z = [1.0];
        let shifted = shifted_eta(&params, &z, 1.0).unwrap();
        let exact = crate::quad::integrate_to_inf(
            &|b: f64| {
                let d = potential::nu_density(&shifted, &[b]).unwrap_or(0.0);
                if d == 0.0 {
                    0.0
                } else {
                    -(2.0 * b * z[0]).ln() * d
                }
            },
            0.0,
            1.0,
            1e-10,
        );
        let opts = SdeOptions::with_dt(5e-4);
        let mut rng = replica_rng(2024, 505, 0);
        let (m, se) = kernel_k(&params, &z, &|rho, _| rho[0], &mut rng, 8000, &opts).unwrap();
        assert!((m - exact).abs() <= 3.0 * se, "m {m} exact {exact} se {se}");
    }

    #[test]
    fn equality_law_rewriting_is_exact_per_draw() {
        let params = c2();
        let opts = SdeOptions::with_dt(1e-3);
        let z = [1.0, 2.0];
        for r in 0..50 {
            let mut rng = replica_rng(2024, 506, r);
            let l = sample_equality_lhs(&params, &z, &mut rng, &opts).unwrap();
            assert!(rewriting_residual(&l) <= 1e-12);
            let d = sample_equality_rhs(&params, &z, &mut rng, &opts).unwrap();
            assert!(rewriting_residual(&d) <= 1e-12);
        }
    }

    #[test]
    fn equality_rhs_a_marginal_is_ig() {
        let params = c2();
        let opts = SdeOptions::with_dt(1e-3);
        let z = [1.0, 2.0];
        let mut a0 = Vec::new();
        for r in 0..4000 {
            let mut rng = replica_rng(2024, 507, r);
            let d = sample_equality_rhs(&params, &z, &mut rng, &opts).unwrap();
            a0.push(d.components.1[0]);
        }
        let law = Ig::new(1.0 / (1.0 * z[0]), 1.0 / (z[0] * z[0])).unwrap();
        let ks = stats::ks_test(&a0, |x| law.cdf(x)).unwrap();
        assert!(ks.p_value > 0.01, "p {}", ks.p_value);
    }

    #[test]
    fn equality_lhs_tilde_params_well_defined() {
        // K_{1/(2 beta)} stays invertible on the support, so the LHS
        // two-stage draw never fails
        let params = c2();
        let opts = SdeOptions::with_dt(1e-3);
        for r in 0..200 {
            let mut rng = replica_rng(2024, 508, r);
            sample_equality_lhs(&params, &[1.0, 2.0], &mut rng, &opts).unwrap();
        }
    }
}
