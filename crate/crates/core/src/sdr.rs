//! Max-min SINR relaxations and Gaussian randomization.
//!
//! The relaxed problem is quasi-concave in the target `γ`, so it is solved as
//! a sequence of SDPs
//!
//! ```text
//!   maximize s  s.t.  (A_u - γ C_u)•X1 + (Ā_u - γ C̄_u)•X2 - s >= -κ,
//!                     D_j•X1 + D̄_j•X2 <= b_j,
//! ```
//!
//! with `κ = 1 + γ`, which is strictly feasible for every `γ >= 0`; `γ` is
//! achievable exactly when `s* - κ >= γ`. Every probe yields a witness whose
//! min-SINR ratio lifts the lower end of the bracket, while the probe's dual
//! value caps the upper end.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::{min_sinr, ConstraintForm, UserForms};
use crate::matkernel::{c, herm_eig, hermitian_part, inner, psd_part, spectral_map, CMat, CVec, CnSampler};
use crate::sdp::{solve, SdpProblem, SdpStatus, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Scheme {
    /// One-variable AF beamforming (R1SDR).
    Bf,
    /// Two-slot Alamouti AF beamforming (R2SDR).
    Bfa,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Bf => "bf",
            Scheme::Bfa => "bfa",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SdrOptions {
    /// Relative width of the final bracket `[γ*, γ*(1 + tol_gamma)]`.
    pub tol_gamma: f64,
    pub sdp_tol: f64,
    pub max_probes: usize,
}

impl Default for SdrOptions {
    fn default() -> Self {
        Self { tol_gamma: 1e-3, sdp_tol: 1e-8, max_probes: 100 }
    }
}

#[derive(Debug, Clone)]
pub struct SdrSolution {
    pub scheme: Scheme,
    pub x1: CMat,
    /// `0 x 0` for the one-variable scheme.
    pub x2: CMat,
    /// Min-SINR ratio achieved by the witness `(x1, x2)`.
    pub gamma_star: f64,
    /// Smallest target shown unachievable.
    pub gamma_upper: f64,
    pub status: SdpStatus,
    pub bisection_iters: usize,
}

#[derive(Debug, Clone)]
pub struct BeamformerPair {
    pub w1: CVec,
    /// Empty for the one-variable scheme.
    pub w2: CVec,
    pub min_sinr: f64,
    pub candidate_index: usize,
}

#[derive(Debug, Clone)]
pub struct Feasibility {
    pub feasible: bool,
    pub x1: CMat,
    pub x2: CMat,
    /// Min-SINR ratio of the rescaled witness.
    pub witness_ratio: f64,
    /// Upper bound on the relaxation optimum implied by this probe.
    pub upper: f64,
}

/// The quadratic forms one scheme works with.
struct SchemeForms<'a> {
    users: &'a [UserForms],
    /// Constraint forms per block; for BF the first block carries `2 D`.
    cons: Vec<(CMat, CMat, f64)>,
    n1: usize,
    n2: usize,
}

impl<'a> SchemeForms<'a> {
    fn new(scheme: Scheme, users: &'a [UserForms], cons: &[ConstraintForm]) -> Result<Self> {
        if cons.is_empty() {
            return Err(Error::NoConstraints);
        }
        let n = users.first().map(UserForms::dim).ok_or_else(|| Error::InvalidArgument("no users".into()))?;
        for uf in users {
            if uf.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, got: uf.dim() });
            }
        }
        let cons = cons
            .iter()
            .map(|cf| match scheme {
                Scheme::Bf => (cf.single_form(), CMat::zeros(0, 0), cf.bound),
                Scheme::Bfa => (cf.d.clone(), cf.dbar.clone(), cf.bound),
            })
            .collect();
        let n2 = if scheme == Scheme::Bfa { n } else { 0 };
        Ok(Self { users, cons, n1: n, n2 })
    }

    fn numerator(&self, u: &UserForms, x1: &CMat, x2: &CMat) -> f64 {
        inner(&u.a, x1) + if self.n2 > 0 { inner(&u.abar, x2) } else { 0.0 }
    }

    fn interference(&self, u: &UserForms, x1: &CMat, x2: &CMat) -> f64 {
        inner(&u.c, x1) + if self.n2 > 0 { inner(&u.cbar, x2) } else { 0.0 }
    }

    fn load(&self, j: usize, x1: &CMat, x2: &CMat) -> f64 {
        let (d, dbar, _) = &self.cons[j];
        inner(d, x1) + if self.n2 > 0 { inner(dbar, x2) } else { 0.0 }
    }

    fn ratio(&self, x1: &CMat, x2: &CMat) -> f64 {
        self.users
            .iter()
            .map(|u| self.numerator(u, x1, x2).max(0.0) / (self.interference(u, x1, x2) + 1.0))
            .fold(f64::INFINITY, f64::min)
    }

    /// Projects onto the PSD cone and rescales so the tightest constraint is active.
    fn rescale(&self, x1: &CMat, x2: &CMat) -> (CMat, CMat) {
        let mut x1 = psd_part(x1);
        let mut x2 = if self.n2 > 0 { psd_part(x2) } else { CMat::zeros(0, 0) };
        let k = (0..self.cons.len())
            .filter_map(|j| {
                let load = self.load(j, &x1, &x2);
                (load > 0.0).then(|| self.cons[j].2 / load)
            })
            .fold(f64::INFINITY, f64::min);
        if k.is_finite() {
            x1 *= c(k, 0.0);
            x2 *= c(k, 0.0);
        }
        (x1, x2)
    }

    /// Sum of `D_j / b_j`, positive definite when the constraints bound the power.
    fn normalized_budget(&self) -> (CMat, CMat) {
        let mut d1 = CMat::zeros(self.n1, self.n1);
        let mut d2 = CMat::zeros(self.n2, self.n2);
        for (d, dbar, b) in &self.cons {
            d1 += d * c(1.0 / b, 0.0);
            if self.n2 > 0 {
                d2 += dbar * c(1.0 / b, 0.0);
            }
        }
        (d1, d2)
    }

    /// Per-user weights `C_u•X + 1` of a reference point.
    fn weights(&self, x1: &CMat, x2: &CMat) -> Vec<f64> {
        self.users.iter().map(|u| self.interference(u, x1, x2) + 1.0).collect()
    }

    fn probe(&self, gamma: f64, weights: &[f64], sdp_tol: f64) -> Result<Feasibility> {
        let kappa = 1.0 + gamma;
        let g = c(gamma, 0.0);
        let mut p = SdpProblem::new(self.n1, self.n2)
            .maximize(CMat::zeros(self.n1, self.n1), CMat::zeros(self.n2, self.n2))
            .with_scalars(vec![1.0]);
        for (u, &w) in self.users.iter().zip(weights) {
            let fa = &u.a - &u.c * g;
            let fb = if self.n2 > 0 { &u.abar - &u.cbar * g } else { CMat::zeros(0, 0) };
            p.constrain_with_scalars(fa, fb, vec![-w], Sense::Ge, gamma - kappa * w);
        }
        for (d, dbar, b) in &self.cons {
            p.constrain(d.clone(), dbar.clone(), Sense::Le, *b);
        }
        let r = solve(&p, sdp_tol);
        if r.status != SdpStatus::Optimal {
            return Err(Error::Solver(r.status));
        }
        let (x1, x2) = self.rescale(&r.x1, &r.x2);
        let witness_ratio = self.ratio(&x1, &x2);
        let w_max = weights.iter().cloned().fold(1.0, f64::max);
        let upper = gamma + (r.dual_objective - kappa).max(0.0) * w_max;
        Ok(Feasibility { feasible: witness_ratio >= gamma, x1, x2, witness_ratio, upper })
    }

    /// Interference-free single-user bound: `J max(λ(A, D_s), λ(Ā, D̄_s))`, smallest over users.
    fn gamma_hi(&self) -> Result<f64> {
        let (d1, d2) = self.normalized_budget();
        let j = self.cons.len() as f64;
        let inv_sqrt = |d: &CMat| -> Result<CMat> {
            let eig = herm_eig(d)?;
            if eig.min() <= 1e-12 * eig.max().max(1e-300) {
                return Err(Error::Unbounded);
            }
            Ok(spectral_map(&eig, |l| 1.0 / l.sqrt()))
        };
        let s1 = inv_sqrt(&d1)?;
        let s2 = if self.n2 > 0 { Some(inv_sqrt(&d2)?) } else { None };
        let mut best = f64::INFINITY;
        for u in self.users {
            let mut lam = herm_eig(&hermitian_part(&(&s1 * &u.a * &s1)))?.max();
            if let Some(s2) = &s2 {
                lam = lam.max(herm_eig(&hermitian_part(&(s2 * &u.abar * s2)))?.max());
            }
            best = best.min(j * lam.max(0.0));
        }
        Ok(best)
    }
}

/// Decides whether min-SINR `gamma` is achievable by the relaxation.
pub fn feasibility(
    gamma: f64,
    scheme: Scheme,
    users: &[UserForms],
    cons: &[ConstraintForm],
    sdp_tol: f64,
) -> Result<Feasibility> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!("target SINR must be nonnegative, got {gamma}")));
    }
    let forms = SchemeForms::new(scheme, users, cons)?;
    if gamma == 0.0 {
        return Ok(Feasibility {
            feasible: true,
            x1: CMat::zeros(forms.n1, forms.n1),
            x2: CMat::zeros(forms.n2, forms.n2),
            witness_ratio: 0.0,
            upper: f64::INFINITY,
        });
    }
    forms.probe(gamma, &vec![1.0; users.len()], sdp_tol)
}

pub fn solve_r1sdr(users: &[UserForms], cons: &[ConstraintForm], tol_gamma: f64) -> Result<SdrSolution> {
    solve_sdr(Scheme::Bf, users, cons, &SdrOptions { tol_gamma, ..SdrOptions::default() })
}

pub fn solve_r2sdr(users: &[UserForms], cons: &[ConstraintForm], tol_gamma: f64) -> Result<SdrSolution> {
    solve_sdr(Scheme::Bfa, users, cons, &SdrOptions { tol_gamma, ..SdrOptions::default() })
}

pub fn solve_sdr(scheme: Scheme, users: &[UserForms], cons: &[ConstraintForm], opts: &SdrOptions) -> Result<SdrSolution> {
    if !(opts.tol_gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("tol_gamma must be positive, got {}", opts.tol_gamma)));
    }
    let forms = SchemeForms::new(scheme, users, cons)?;
    let mut hi = forms.gamma_hi()?;

    // Best worst-user signal power first.
    let start = forms.probe(0.0, &vec![1.0; users.len()], opts.sdp_tol)?;
    let mut lo = start.witness_ratio;
    let (mut x1, mut x2) = (start.x1, start.x2);
    let mut iters = 1;
    let mut status = SdpStatus::Optimal;
    let mut lifting = true;
    let mut last_lift = f64::INFINITY;

    while hi > lo * (1.0 + opts.tol_gamma) && lo > 0.0 {
        if iters >= opts.max_probes {
            status = SdpStatus::MaxIter;
            break;
        }
        let gamma = if lifting { lo * (1.0 + opts.tol_gamma) } else { 0.5 * (lo + hi) };
        let f = forms.probe(gamma, &forms.weights(&x1, &x2), opts.sdp_tol)?;
        iters += 1;
        hi = hi.min(f.upper);
        if !f.feasible {
            hi = hi.min(gamma);
        }
        let lift = f.witness_ratio - lo;
        if lift > 0.0 {
            lo = f.witness_ratio;
            x1 = f.x1;
            x2 = f.x2;
        }
        // Fall back to halving the bracket when lifts stop contracting.
        lifting = !lifting || (f.feasible && lift <= 0.8 * last_lift);
        if f.feasible {
            last_lift = lift;
        }
    }
    Ok(SdrSolution { scheme, x1, x2, gamma_star: lo, gamma_upper: hi.max(lo), status, bisection_iters: iters })
}

/// Largest `c > 0` keeping `c w` within every constraint; infinite if no constraint is loaded.
pub fn feasibility_scale(cons: &[ConstraintForm], w1: &CVec, w2: &CVec) -> f64 {
    cons.iter()
        .filter_map(|cf| {
            let load = if w2.is_empty() { cf.load_single(w1) } else { cf.load(w1, w2) };
            (load > 0.0).then(|| (cf.bound / load).sqrt())
        })
        .fold(f64::INFINITY, f64::min)
}

/// Draws `n_cand` candidates from `CN(0, X)`, scales each onto the constraint boundary and keeps the best.
pub fn randomize<R: Rng + ?Sized>(
    sol: &SdrSolution,
    users: &[UserForms],
    cons: &[ConstraintForm],
    n_cand: usize,
    rng: &mut R,
) -> Result<BeamformerPair> {
    if n_cand == 0 {
        return Err(Error::InvalidArgument("at least one candidate is required".into()));
    }
    if cons.is_empty() {
        return Err(Error::NoConstraints);
    }
    let s1 = CnSampler::new(&psd_part(&sol.x1))?;
    let s2 = match sol.scheme {
        Scheme::Bfa => Some(CnSampler::new(&psd_part(&sol.x2))?),
        Scheme::Bf => None,
    };
    let draws: Vec<(CVec, CVec)> = (0..n_cand)
        .map(|_| {
            let w1 = s1.sample(rng);
            let w2 = s2.as_ref().map_or_else(|| CVec::zeros(0), |s| s.sample(rng));
            (w1, w2)
        })
        .collect();
    let scored: Vec<(f64, CVec, CVec)> = draws
        .into_par_iter()
        .map(|(w1, w2)| {
            let k = feasibility_scale(cons, &w1, &w2);
            if !k.is_finite() {
                return (0.0, w1, w2);
            }
            let (w1, w2) = (w1 * c(k, 0.0), w2 * c(k, 0.0));
            (min_sinr(users, &w1, &w2), w1, w2)
        })
        .collect();
    let mut best = 0;
    for (i, cand) in scored.iter().enumerate() {
        if cand.0 > scored[best].0 {
            best = i;
        }
    }
    let (min_sinr, w1, w2) = scored.into_iter().nth(best).expect("n_cand >= 1");
    Ok(BeamformerPair { w1, w2, min_sinr, candidate_index: best })
}

/// Whether `w` meets every constraint within `rel` relative slack.
pub fn is_feasible(cons: &[ConstraintForm], w1: &CVec, w2: &CVec, rel: f64) -> bool {
    cons.iter().all(|cf| {
        let load = if w2.is_empty() { cf.load_single(w1) } else { cf.load(w1, w2) };
        load <= cf.bound * (1.0 + rel)
    })
}
