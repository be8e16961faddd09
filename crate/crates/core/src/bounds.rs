//! Monte Carlo checks of the randomization tail bounds.
//!
//! Candidates are drawn as `ξ ~ CN(0, X1)`, `η ~ CN(0, X2)`. For a user the
//! event of interest is that the candidate's SINR falls below `ρ` times the
//! relaxed SINR; for a constraint it is that the candidate's load exceeds `v`
//! times its mean.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, RngCore};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forms::{ConstraintForm, UserForms};
use crate::matkernel::{inner, psd_part, quad_form, std_complex_normal, CMat, CVec, CnSampler};
use crate::network::stream_rng;

pub const DEFAULT_RHO_GRID: [f64; 5] = [0.01, 0.02, 0.05, 0.1, 0.2];
pub const DEFAULT_V_GRID: [f64; 3] = [2.0, 4.0, 8.0];
pub const DEFAULT_SAMPLES: usize = 100_000;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct TailReport {
    pub grid: Vec<f64>,
    pub empirical: Vec<f64>,
    /// Three-sigma binomial half-widths.
    pub ci_halfwidth: Vec<f64>,
    pub analytic: Vec<f64>,
    pub omega: Option<f64>,
    pub n_samples: usize,
}

impl TailReport {
    /// Grid points where the estimate exceeds the analytic value by more than its half-width.
    pub fn violations(&self) -> Vec<f64> {
        (0..self.grid.len())
            .filter(|&i| self.empirical[i] > self.analytic[i] + self.ci_halfwidth[i])
            .map(|i| self.grid[i])
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("grid_value,empirical,ci_halfwidth,analytic_bound\n");
        for i in 0..self.grid.len() {
            let _ = writeln!(out, "{},{},{},{}", self.grid[i], self.empirical[i], self.ci_halfwidth[i], self.analytic[i]);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Three-sigma normal-approximation half-width of a binomial proportion.
pub fn binomial_halfwidth(p: f64, n: usize) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("grid must be non-empty and strictly increasing".into()));
    }
    Ok(())
}

/// `min{A•X1, Ā•X2} / (A•X1 + Ā•X2)`; pass an empty `x2` for the one-variable scheme.
pub fn omega(x1: &CMat, x2: &CMat, a: &CMat, abar: &CMat) -> Result<f64> {
    let alpha = inner(a, x1);
    let beta = if x2.is_empty() { 0.0 } else { inner(abar, x2) };
    let total = alpha + beta;
    if !(total > 0.0) {
        return Err(Error::Degenerate(format!("signal power A•X1 + Ā•X2 = {total:e}")));
    }
    Ok((alpha.min(beta) / total).clamp(0.0, 0.5))
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho < 0.5) {
        return Err(Error::InvalidArgument(format!("rho must lie in (0, 1/2), got {rho}")));
    }
    Ok(())
}

/// Tail bound for the SINR-shortfall event, clamped to 1.
pub fn lemma1_bound(rho: f64, omega: f64) -> Result<f64> {
    check_rho(rho)?;
    let mut bound = 4.0 * rho / (1.0 - 2.0 * rho);
    if rho < omega / 2.0 {
        bound = bound.min((4.0 * rho / (omega - 2.0 * rho)).powi(2));
    }
    Ok(bound.min(1.0))
}

/// The tighter bound `2ρ/(1-ρ)` available when one slot carries no signal (`ω = 0`).
pub fn lemma1_bound_single_slot(rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok((2.0 * rho / (1.0 - rho)).min(1.0))
}

/// `Pr(|x|² + |y|² <= t)` for independent standard complex normals.
pub fn tail2_closed_form(t: f64) -> f64 {
    -(-t).exp_m1() - t * (-t).exp()
}

/// `Pr(|x|² <= t)`.
pub fn tail1_closed_form(t: f64) -> f64 {
    -(-t).exp_m1()
}

/// Samplers for `CN(0, X1)` and, for the two-slot scheme, `CN(0, X2)`.
struct PairSampler {
    s1: CnSampler,
    s2: Option<CnSampler>,
}

impl PairSampler {
    fn new(x1: &CMat, x2: &CMat) -> Result<Self> {
        let s1 = CnSampler::new(&psd_part(x1))?;
        let s2 = if x2.is_empty() { None } else { Some(CnSampler::new(&psd_part(x2))?) };
        Ok(Self { s1, s2 })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (CVec, CVec) {
        let xi = self.s1.sample(rng);
        let eta = self.s2.as_ref().map_or_else(|| CVec::zeros(0), |s| s.sample(rng));
        (xi, eta)
    }
}

/// Counts `hit(sample, k)` over `n` draws for each of `k < slots` events, in chunks
/// with independent streams so the totals do not depend on the thread count.
fn count_events<R, D, H>(n: usize, slots: usize, rng: &mut R, draw: D, hit: H) -> Vec<usize>
where
    R: RngCore + ?Sized,
    D: Fn(&mut rand_chacha::ChaCha8Rng) -> (CVec, CVec) + Sync,
    H: Fn(&(CVec, CVec), &mut [usize]) + Sync,
{
    let master = rng.next_u64();
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|ch| {
            let mut local = stream_rng(master, &[ch as u64]);
            let mut counts = vec![0usize; slots];
            let len = CHUNK.min(n - ch * CHUNK);
            for _ in 0..len {
                let s = draw(&mut local);
                hit(&s, &mut counts);
            }
            counts
        })
        .reduce(
            || vec![0usize; slots],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

fn report(grid: &[f64], counts: &[usize], analytic: Vec<f64>, omega: Option<f64>, n: usize) -> TailReport {
    let empirical: Vec<f64> = counts.iter().map(|&k| k as f64 / n as f64).collect();
    let ci_halfwidth = empirical.iter().map(|&p| binomial_halfwidth(p, n)).collect();
    TailReport { grid: grid.to_vec(), empirical, ci_halfwidth, analytic, omega, n_samples: n }
}

/// SINR-shortfall tails for each user, sharing one set of draws.
pub fn lemma1_empirical_all<R: RngCore + ?Sized>(
    x1: &CMat,
    x2: &CMat,
    users: &[UserForms],
    rho_grid: &[f64],
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<TailReport>> {
    check_grid(rho_grid)?;
    if n_samples == 0 {
        return Err(Error::InvalidArgument("at least one sample is required".into()));
    }
    let two_slot = !x2.is_empty();
    let mut omegas = Vec::with_capacity(users.len());
    let mut levels = Vec::with_capacity(users.len());
    for uf in users {
        let w = omega(x1, x2, &uf.a, &uf.abar)?;
        let num = inner(&uf.a, x1) + if two_slot { inner(&uf.abar, x2) } else { 0.0 };
        let den = inner(&uf.c, x1) + (if two_slot { inner(&uf.cbar, x2) } else { 0.0 }) + 1.0;
        omegas.push(w);
        levels.push(num / den);
    }
    for &rho in rho_grid {
        check_rho(rho)?;
    }
    let sampler = PairSampler::new(x1, x2)?;
    let slots = users.len() * rho_grid.len();
    let counts = count_events(
        n_samples,
        slots,
        rng,
        |r| sampler.draw(r),
        |(xi, eta), counts| {
            for (u, uf) in users.iter().enumerate() {
                let mut num = quad_form(&uf.a, xi);
                let mut den = quad_form(&uf.c, xi) + 1.0;
                if two_slot {
                    num += quad_form(&uf.abar, eta);
                    den += quad_form(&uf.cbar, eta);
                }
                let sinr = num / den;
                for (k, &rho) in rho_grid.iter().enumerate() {
                    if sinr <= rho * levels[u] {
                        counts[u * rho_grid.len() + k] += 1;
                    }
                }
            }
        },
    );
    users
        .iter()
        .enumerate()
        .map(|(u, _)| {
            let analytic = rho_grid.iter().map(|&rho| lemma1_bound(rho, omegas[u])).collect::<Result<Vec<_>>>()?;
            let c = &counts[u * rho_grid.len()..(u + 1) * rho_grid.len()];
            Ok(report(rho_grid, c, analytic, Some(omegas[u]), n_samples))
        })
        .collect()
}

pub fn lemma1_empirical<R: RngCore + ?Sized>(
    x1: &CMat,
    x2: &CMat,
    uf: &UserForms,
    rho_grid: &[f64],
    n_samples: usize,
    rng: &mut R,
) -> Result<TailReport> {
    let mut reports = lemma1_empirical_all(x1, x2, std::slice::from_ref(uf), rho_grid, n_samples, rng)?;
    Ok(reports.remove(0))
}

/// Load-excess tails of one constraint against the Markov ceiling `1/v`.
pub fn lemma2_empirical<R: RngCore + ?Sized>(
    x1: &CMat,
    x2: &CMat,
    cf: &ConstraintForm,
    v_grid: &[f64],
    n_samples: usize,
    rng: &mut R,
) -> Result<TailReport> {
    check_grid(v_grid)?;
    if let Some(&v) = v_grid.iter().find(|&&v| !(v >= 2.0)) {
        return Err(Error::InvalidArgument(format!("v must be at least 2, got {v}")));
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("at least one sample is required".into()));
    }
    let two_slot = !x2.is_empty();
    let d1 = if two_slot { cf.d.clone() } else { cf.single_form() };
    let mean = inner(&d1, x1) + if two_slot { inner(&cf.dbar, x2) } else { 0.0 };
    if !(mean > 0.0) {
        return Err(Error::Degenerate(format!("constraint mean load {mean:e}")));
    }
    let sampler = PairSampler::new(x1, x2)?;
    let counts = count_events(
        n_samples,
        v_grid.len(),
        rng,
        |r| sampler.draw(r),
        |(xi, eta), counts| {
            let mut load = quad_form(&d1, xi);
            if two_slot {
                load += quad_form(&cf.dbar, eta);
            }
            for (k, &v) in v_grid.iter().enumerate() {
                if load >= v * mean {
                    counts[k] += 1;
                }
            }
        },
    );
    let analytic = v_grid.iter().map(|&v| 1.0 / v).collect();
    Ok(report(v_grid, &counts, analytic, None, n_samples))
}

/// Monte Carlo estimates of `Pr(|x|² <= t)` and `Pr(|x|² + |y|² <= t)` against their closed forms.
pub fn gaussian_tail_reports<R: RngCore + ?Sized>(
    t_grid: &[f64],
    n_samples: usize,
    rng: &mut R,
) -> Result<(TailReport, TailReport)> {
    check_grid(t_grid)?;
    if t_grid[0] < 0.0 {
        return Err(Error::InvalidArgument("t must be nonnegative".into()));
    }
    let m = t_grid.len();
    let counts = count_events(
        n_samples,
        2 * m,
        rng,
        |r| {
            let x = std_complex_normal(r);
            let y = std_complex_normal(r);
            (CVec::from_vec(vec![x]), CVec::from_vec(vec![y]))
        },
        |(x, y), counts| {
            let ex = x[0].norm_sqr();
            let ey = y[0].norm_sqr();
            for (k, &t) in t_grid.iter().enumerate() {
                if ex <= t {
                    counts[k] += 1;
                }
                if ex + ey <= t {
                    counts[m + k] += 1;
                }
            }
        },
    );
    let one = report(t_grid, &counts[..m], t_grid.iter().map(|&t| tail1_closed_form(t)).collect(), None, n_samples);
    let two = report(t_grid, &counts[m..], t_grid.iter().map(|&t| tail2_closed_form(t)).collect(), None, n_samples);
    Ok((one, two))
}

/// The constraint with the largest relative load at `(x1, x2)`.
pub fn tightest_constraint<'a>(cons: &'a [ConstraintForm], x1: &CMat, x2: &CMat) -> Option<&'a ConstraintForm> {
    let rel = |cf: &ConstraintForm| {
        let load = if x2.is_empty() { inner(&cf.single_form(), x1) } else { inner(&cf.d, x1) + inner(&cf.dbar, x2) };
        load / cf.bound
    };
    cons.iter().max_by(|a, b| rel(a).total_cmp(&rel(b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::ConstraintLabel;
    use crate::matkernel::{c, outer, real_diag};
    use crate::network::UserId;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn omega_examples() {
        let one = real_diag(&[1.0]);
        let x = |v: f64| real_diag(&[v]);
        assert!(close(omega(&x(2.0), &x(2.0), &one, &one).unwrap(), 0.5, 1e-15));
        assert_eq!(omega(&x(2.0), &x(0.0), &one, &one).unwrap(), 0.0);
        assert!(close(omega(&x(1.0), &x(3.0), &one, &one).unwrap(), 0.25, 1e-15));
        assert!(omega(&x(0.0), &x(0.0), &one, &one).is_err());
        assert_eq!(omega(&x(1.0), &CMat::zeros(0, 0), &one, &one).unwrap(), 0.0);
    }

    #[test]
    fn lemma1_bound_examples() {
        assert!(close(lemma1_bound(0.1, 0.5).unwrap(), 0.5, 1e-15));
        assert!(close(lemma1_bound(0.1, 0.0).unwrap(), 0.5, 1e-15));
        assert!(close(lemma1_bound_single_slot(0.1).unwrap(), 0.2 / 0.9, 1e-15));
        assert!(lemma1_bound_single_slot(0.1).unwrap() < lemma1_bound(0.1, 0.0).unwrap());
        assert!(lemma1_bound(1e-9, 0.5).unwrap() < 1e-15);
        assert_eq!(lemma1_bound(0.45, 0.5).unwrap(), 1.0);
        assert!(close(lemma1_bound(0.01, 0.5).unwrap(), (0.04f64 / 0.48).powi(2), 1e-15));
        for bad in [0.0, 0.5, -0.1, f64::NAN] {
            assert!(lemma1_bound(bad, 0.3).is_err());
        }
    }

    #[test]
    fn closed_form_tails() {
        assert_eq!(tail2_closed_form(0.0), 0.0);
        assert!(close(tail2_closed_form(1.0), 1.0 - 2.0 * (-1f64).exp(), 1e-15));
        assert!(close(tail2_closed_form(1.0), 0.264241, 1e-6));
        assert!(close(tail1_closed_form(1.0), 1.0 - (-1f64).exp(), 1e-15));
        for i in 1..=100 {
            let t = 0.05 * i as f64;
            assert!(tail2_closed_form(t) <= t * t / 2.0);
            assert!(tail1_closed_form(t) <= t);
        }
    }

    #[test]
    fn gaussian_tails_match_monte_carlo() {
        let mut rng = stream_rng(3, &[]);
        let (one, two) = gaussian_tail_reports(&[0.1, 0.5, 1.0, 2.0], 200_000, &mut rng).unwrap();
        for r in [&one, &two] {
            for i in 0..r.grid.len() {
                assert!((r.empirical[i] - r.analytic[i]).abs() <= r.ci_halfwidth[i].max(1e-12), "{r:?}");
            }
        }
    }

    #[test]
    fn rank_one_constraint_tail_is_exponential() {
        let x1 = real_diag(&[1.0]);
        let cf = ConstraintForm { d: real_diag(&[1.0]), dbar: real_diag(&[1.0]), bound: 1.0, label: ConstraintLabel::Total };
        let r = lemma2_empirical(&x1, &real_diag(&[0.0]), &cf, &[2.0, 4.0, 8.0], 100_000, &mut stream_rng(5, &[])).unwrap();
        assert!((r.empirical[0] - (-2f64).exp()).abs() <= r.ci_halfwidth[0]);
        assert!(r.empirical[0] <= 0.5);
        assert!(r.violations().is_empty());
        assert!(r.empirical.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn lemma2_rejects_bad_inputs() {
        let cf = ConstraintForm { d: real_diag(&[1.0]), dbar: real_diag(&[1.0]), bound: 1.0, label: ConstraintLabel::Total };
        let x = real_diag(&[1.0]);
        let mut rng = stream_rng(0, &[]);
        assert!(lemma2_empirical(&x, &x, &cf, &[1.5], 10, &mut rng).is_err());
        assert!(lemma2_empirical(&x, &x, &cf, &[4.0, 2.0], 10, &mut rng).is_err());
        let zero = real_diag(&[0.0]);
        assert!(lemma2_empirical(&zero, &zero, &cf, &[2.0], 10, &mut rng).is_err());
    }

    #[test]
    fn lemma1_holds_on_a_random_instance() {
        let mut rng = stream_rng(8, &[]);
        let g = CVec::from_fn(3, |_, _| std_complex_normal(&mut rng));
        let h = CVec::from_fn(3, |_, _| std_complex_normal(&mut rng));
        let uf = UserForms {
            user: UserId { group: 0, index: 0 },
            a: outer(&g),
            abar: outer(&h),
            c: real_diag(&[0.3, 0.2, 0.1]),
            cbar: real_diag(&[0.1, 0.2, 0.3]),
        };
        let x1 = outer(&g) + real_diag(&[0.2, 0.2, 0.2]);
        let x2 = outer(&h) * c(0.5, 0.0);
        let r = lemma1_empirical(&x1, &x2, &uf, &DEFAULT_RHO_GRID, 50_000, &mut rng).unwrap();
        assert!(r.violations().is_empty(), "{r:?}");
        assert!(r.omega.unwrap() <= 0.5);
    }

    #[test]
    fn estimates_do_not_depend_on_thread_count() {
        let run = |threads| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
                gaussian_tail_reports(&[0.5, 1.0], 20_000, &mut stream_rng(11, &[])).unwrap()
            })
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let r = TailReport {
            grid: vec![2.0, 4.0],
            empirical: vec![0.1, 0.01],
            ci_halfwidth: vec![0.001, 0.0005],
            analytic: vec![0.5, 0.25],
            omega: None,
            n_samples: 10,
        };
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "grid_value,empirical,ci_halfwidth,analytic_bound");
        assert_eq!(lines[1], "2,0.1,0.001,0.5");
        assert_eq!(lines.len(), 3);
    }
}
