//! Small dense interior-point solver for complex Hermitian semidefinite programs.
//!
//! Problems have two Hermitian PSD blocks `X1`, `X2`, an optional vector of
//! nonnegative scalar variables `s`, and linear constraints
//!
//! ```text
//!   maximize   F0a • X1 + F0b • X2 + c^T s
//!   subject to Fa_i • X1 + Fb_i • X2 + e_i^T s  (<= | >= | =)  rhs_i
//! ```
//!
//! with `F • X = Re tr(F^H X)`. Inequalities get a nonnegative slack, so
//! internally everything is a standard-form conic program over
//! `H+^n1 x H+^n2 x R+^p`, solved by an infeasible primal-dual path-following
//! method with Nesterov–Todd scaling and a Mehrotra predictor-corrector.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::matkernel::{c, herm_eig_unchecked, hermitian_part, identity, inner, CMat, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct SdpConstraint {
    pub fa: CMat,
    pub fb: CMat,
    /// Coefficients on the scalar variables; empty means all zero.
    pub scalars: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub dims: (usize, usize),
    pub objective: (CMat, CMat),
    pub scalar_objective: Vec<f64>,
    pub constraints: Vec<SdpConstraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    /// The objective is unbounded above (the dual is infeasible).
    Unbounded,
    MaxIter,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct SdpResult {
    pub status: SdpStatus,
    pub x1: CMat,
    pub x2: CMat,
    pub scalars: Vec<f64>,
    /// Primal objective of the returned point.
    pub objective: f64,
    /// Dual objective, an upper bound on the optimum when the dual is feasible.
    pub dual_objective: f64,
    /// Relative duality gap `|p - d| / (1 + |p| + |d|)`.
    pub gap: f64,
    /// Largest constraint violation relative to `1 + |rhs|`.
    pub max_violation: f64,
    pub iterations: usize,
    /// Multipliers in the caller's constraint order and scale.
    pub multipliers: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-7, feas_tol: 1e-9, max_iter: 200 }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, feas_tol: (tol * 0.1).clamp(1e-9, 1e-8), ..Self::default() }
    }
}

impl SdpProblem {
    pub fn new(n1: usize, n2: usize) -> Self {
        Self {
            dims: (n1, n2),
            objective: (CMat::zeros(n1, n1), CMat::zeros(n2, n2)),
            scalar_objective: Vec::new(),
            constraints: Vec::new(),
        }
    }

    pub fn maximize(mut self, f0a: CMat, f0b: CMat) -> Self {
        self.objective = (f0a, f0b);
        self
    }

    /// Adds `p` nonnegative scalar variables with objective weights `weights`.
    pub fn with_scalars(mut self, weights: Vec<f64>) -> Self {
        self.scalar_objective = weights;
        self
    }

    pub fn constrain(&mut self, fa: CMat, fb: CMat, sense: Sense, rhs: f64) {
        self.constraints.push(SdpConstraint { fa, fb, scalars: Vec::new(), sense, rhs });
    }

    pub fn constrain_with_scalars(&mut self, fa: CMat, fb: CMat, scalars: Vec<f64>, sense: Sense, rhs: f64) {
        self.constraints.push(SdpConstraint { fa, fb, scalars, sense, rhs });
    }

    pub fn scalar_count(&self) -> usize {
        self.scalar_objective.len()
    }

    /// `(lhs_i - rhs_i)` in the caller's orientation for a candidate point.
    pub fn constraint_lhs(&self, x1: &CMat, x2: &CMat, s: &[f64]) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|con| {
                let mut v = 0.0;
                if self.dims.0 > 0 {
                    v += inner(&con.fa, x1);
                }
                if self.dims.1 > 0 {
                    v += inner(&con.fb, x2);
                }
                v + con.scalars.iter().zip(s).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    pub fn objective_value(&self, x1: &CMat, x2: &CMat, s: &[f64]) -> f64 {
        let mut v = self.scalar_objective.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
        if self.dims.0 > 0 {
            v += inner(&self.objective.0, x1);
        }
        if self.dims.1 > 0 {
            v += inner(&self.objective.1, x2);
        }
        v
    }

    /// Largest violation of any constraint relative to `1 + |rhs|`.
    pub fn max_violation(&self, x1: &CMat, x2: &CMat, s: &[f64]) -> f64 {
        self.constraint_lhs(x1, x2, s)
            .iter()
            .zip(&self.constraints)
            .map(|(&lhs, con)| {
                let d = lhs - con.rhs;
                let v = match con.sense {
                    Sense::Le => d.max(0.0),
                    Sense::Ge => (-d).max(0.0),
                    Sense::Eq => d.abs(),
                };
                v / (1.0 + con.rhs.abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Hermitian PSD block of the standard-form problem (orthant entries are 1x1 blocks).
#[derive(Debug, Clone)]
struct Block {
    n: usize,
    /// Cost in the minimization form.
    cost: CMat,
    /// One matrix per constraint row; `None` where the row does not touch the block.
    rows: Vec<Option<CMat>>,
}

/// NT scaling data of one block.
struct Scaling {
    /// `W = G G^H`.
    w: CMat,
    g: CMat,
    g_inv: CMat,
    /// Eigenvalues of the scaled point `G^{-1} X G^{-H} = G^H Z G`.
    v: Vec<f64>,
}

struct StandardForm {
    blocks: Vec<Block>,
    b: DVector<f64>,
    /// Row scale factors applied to the caller's constraints.
    row_scale: Vec<f64>,
    /// Block index of each caller block (`None` when dropped by presolve).
    x1_block: Option<usize>,
    x2_block: Option<usize>,
    /// Block indices of the caller's scalar variables.
    scalar_blocks: Vec<usize>,
}

fn is_zero(m: &CMat) -> bool {
    m.iter().all(|z| *z == C64::new(0.0, 0.0))
}

fn scalar_mat(v: f64) -> CMat {
    CMat::from_element(1, 1, c(v, 0.0))
}

fn frob(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

impl StandardForm {
    fn build(p: &SdpProblem) -> Self {
        let m = p.constraints.len();
        let mut blocks = Vec::new();

        // A block that appears nowhere has a zero optimal value and is dropped.
        let mut psd_block = |n: usize, obj: &CMat, pick: &dyn Fn(&SdpConstraint) -> &CMat| -> Option<usize> {
            if n == 0 {
                return None;
            }
            let rows: Vec<Option<CMat>> = p
                .constraints
                .iter()
                .map(|con| {
                    let f = pick(con);
                    (!is_zero(f)).then(|| hermitian_part(f))
                })
                .collect();
            if is_zero(obj) && rows.iter().all(Option::is_none) {
                return None;
            }
            blocks.push(Block { n, cost: -hermitian_part(obj), rows });
            Some(blocks.len() - 1)
        };
        let x1_block = psd_block(p.dims.0, &p.objective.0, &|con| &con.fa);
        let x2_block = psd_block(p.dims.1, &p.objective.1, &|con| &con.fb);

        let mut scalar_blocks = Vec::new();
        for (j, &w) in p.scalar_objective.iter().enumerate() {
            let rows = p
                .constraints
                .iter()
                .map(|con| con.scalars.get(j).filter(|&&a| a != 0.0).map(|&a| scalar_mat(a)))
                .collect();
            blocks.push(Block { n: 1, cost: scalar_mat(-w), rows });
            scalar_blocks.push(blocks.len() - 1);
        }
        for (i, con) in p.constraints.iter().enumerate() {
            let coef = match con.sense {
                Sense::Le => 1.0,
                Sense::Ge => -1.0,
                Sense::Eq => continue,
            };
            let mut rows = vec![None; m];
            rows[i] = Some(scalar_mat(coef));
            blocks.push(Block { n: 1, cost: scalar_mat(0.0), rows });
        }

        // Unit-norm rows.
        let mut row_scale = vec![1.0; m];
        let mut b = DVector::from_iterator(m, p.constraints.iter().map(|con| con.rhs));
        for i in 0..m {
            let norm = blocks
                .iter()
                .filter_map(|blk| blk.rows[i].as_ref())
                .map(|f| frob(f).powi(2))
                .sum::<f64>()
                .sqrt();
            if norm > 0.0 {
                let s = 1.0 / norm;
                row_scale[i] = s;
                b[i] *= s;
                for blk in &mut blocks {
                    if let Some(f) = &mut blk.rows[i] {
                        *f *= c(s, 0.0);
                    }
                }
            }
        }
        Self { blocks, b, row_scale, x1_block, x2_block, scalar_blocks }
    }

    fn rows(&self) -> usize {
        self.b.len()
    }

    /// `A(X)`.
    fn apply(&self, xs: &[CMat]) -> DVector<f64> {
        let mut out = DVector::zeros(self.rows());
        for (blk, x) in self.blocks.iter().zip(xs) {
            for (i, f) in blk.rows.iter().enumerate() {
                if let Some(f) = f {
                    out[i] += inner(f, x);
                }
            }
        }
        out
    }

    /// `A^T(y)` for one block.
    fn adjoint(&self, k: usize, y: &DVector<f64>) -> CMat {
        let blk = &self.blocks[k];
        let mut out = CMat::zeros(blk.n, blk.n);
        for (i, f) in blk.rows.iter().enumerate() {
            if let Some(f) = f {
                out += f * c(y[i], 0.0);
            }
        }
        out
    }

    fn barrier_degree(&self) -> f64 {
        self.blocks.iter().map(|b| b.n as f64).sum()
    }
}

/// Lower Cholesky factor of a Hermitian positive definite matrix.
fn chol(m: &CMat) -> Option<CMat> {
    Cholesky::new(hermitian_part(m)).map(|ch| ch.l())
}

fn lower_solve(l: &CMat, b: &CMat) -> CMat {
    l.solve_lower_triangular(b).expect("Cholesky factor has a positive diagonal")
}

fn nt_scaling(x: &CMat, z: &CMat) -> Option<Scaling> {
    let n = x.nrows();
    if n == 1 {
        let (xv, zv) = (x[(0, 0)].re, z[(0, 0)].re);
        if !(xv > 0.0 && zv > 0.0) {
            return None;
        }
        let g = (xv / zv).powf(0.25);
        return Some(Scaling {
            w: scalar_mat(g * g),
            g: scalar_mat(g),
            g_inv: scalar_mat(1.0 / g),
            v: vec![(xv * zv).sqrt()],
        });
    }
    let l = chol(x)?;
    let k = l.adjoint() * z * &l;
    let eig = herm_eig_unchecked(&k);
    if eig.min() <= 0.0 {
        return None;
    }
    let mut g = &l * &eig.basis;
    let mut g_inv_rows = lower_solve(&l, &identity(n));
    g_inv_rows = eig.basis.adjoint() * g_inv_rows;
    let mut v = Vec::with_capacity(n);
    for (j, &d) in eig.eigenvalues.iter().enumerate() {
        let q = d.powf(0.25);
        g.column_mut(j).scale_mut(1.0 / q);
        g_inv_rows.row_mut(j).scale_mut(q);
        v.push(d.sqrt());
    }
    let w = hermitian_part(&(&g * g.adjoint()));
    Some(Scaling { w, g, g_inv: g_inv_rows, v })
}

/// Cholesky factor of a PD block, or its single entry for a 1x1 block.
enum Factor {
    Scalar(f64),
    Chol(CMat),
}

fn factor(x: &CMat) -> Option<Factor> {
    if x.nrows() == 1 {
        let v = x[(0, 0)].re;
        return (v > 0.0).then_some(Factor::Scalar(v));
    }
    chol(x).map(Factor::Chol)
}

/// Largest `a` keeping `x + a dx` PSD, given a factor of `x`.
fn max_step(fx: &Factor, dx: &CMat) -> f64 {
    let lam_min = match fx {
        Factor::Scalar(v) => dx[(0, 0)].re / v,
        Factor::Chol(l) => {
            let t1 = lower_solve(l, dx);
            let t2 = lower_solve(l, &t1.adjoint());
            hermitian_part(&t2).symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
        }
    };
    if lam_min >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lam_min
    }
}

/// Solves the Hermitian Lyapunov equation `(V S + S V) / 2 = R` for diagonal `V`.
fn lyapunov_diag(v: &[f64], r: &CMat) -> CMat {
    CMat::from_fn(v.len(), v.len(), |i, j| r[(i, j)] * (2.0 / (v[i] + v[j])))
}

struct Direction {
    dy: DVector<f64>,
    dx: Vec<CMat>,
    dz: Vec<CMat>,
}

struct Iterate {
    x: Vec<CMat>,
    z: Vec<CMat>,
    y: DVector<f64>,
}

pub fn solve(p: &SdpProblem, tol: f64) -> SdpResult {
    solve_with(p, &SolverOptions::with_tol(tol))
}

pub fn solve_with(p: &SdpProblem, opts: &SolverOptions) -> SdpResult {
    let sf = StandardForm::build(p);
    let m = sf.rows();
    let nb = sf.blocks.len();

    let mut it = initial_point(&sf);
    let nu = sf.barrier_degree().max(1.0);
    let b_norm = sf.b.norm();
    let c_norm = sf.blocks.iter().map(|blk| frob(&blk.cost).powi(2)).sum::<f64>().sqrt();

    let mut status = SdpStatus::MaxIter;
    let mut iterations = 0;
    let mut stalls = 0;

    for iter in 0..=opts.max_iter {
        iterations = iter;
        let ax = sf.apply(&it.x);
        let rp = &sf.b - &ax;
        let rd: Vec<CMat> = (0..nb)
            .map(|k| hermitian_part(&(&sf.blocks[k].cost - &it.z[k] - sf.adjoint(k, &it.y))))
            .collect();
        let pobj: f64 = sf.blocks.iter().zip(&it.x).map(|(blk, x)| inner(&blk.cost, x)).sum();
        let dobj = sf.b.dot(&it.y);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let pinf = rp.norm() / (1.0 + b_norm);
        let dinf = rd.iter().map(|r| frob(r).powi(2)).sum::<f64>().sqrt() / (1.0 + c_norm);
        let mu = it.x.iter().zip(&it.z).map(|(x, z)| inner(x, z)).sum::<f64>() / nu;

        if gap <= opts.tol && pinf <= opts.feas_tol && dinf <= opts.feas_tol {
            status = SdpStatus::Optimal;
            break;
        }
        // Farkas-type certificates.
        if dobj > 0.0 {
            let aty_z: f64 = (0..nb)
                .map(|k| frob(&(sf.adjoint(k, &it.y) + &it.z[k])).powi(2))
                .sum::<f64>()
                .sqrt();
            if aty_z / dobj < opts.feas_tol && dobj > 1e3 {
                status = SdpStatus::Infeasible;
                break;
            }
        }
        if pobj < 0.0 && -pobj > 1e3 && ax.norm() / -pobj < opts.feas_tol {
            status = SdpStatus::Unbounded;
            break;
        }
        // Complementarity has hit roundoff without meeting the tolerances.
        if stalls > 3 || mu <= 1e-15 * (1.0 + pobj.abs() + dobj.abs()) {
            status = SdpStatus::NumericalFailure;
            break;
        }
        if iter == opts.max_iter {
            break;
        }

        let (Some(fx), Some(fz)) = (
            it.x.iter().map(factor).collect::<Option<Vec<_>>>(),
            it.z.iter().map(factor).collect::<Option<Vec<_>>>(),
        ) else {
            status = SdpStatus::NumericalFailure;
            break;
        };
        let Some(scalings) = (0..nb).map(|k| nt_scaling(&it.x[k], &it.z[k])).collect::<Option<Vec<_>>>() else {
            status = SdpStatus::NumericalFailure;
            break;
        };
        let Some(schur) = schur_factor(&sf, &scalings) else {
            status = SdpStatus::NumericalFailure;
            break;
        };

        // Predictor.
        let rc_aff: Vec<CMat> = it.x.iter().map(|x| -x).collect();
        let aff = direction(&sf, &schur, &scalings, &rp, &rd, &rc_aff);
        let (ap, ad) = step_lengths(&fx, &fz, &aff);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mu_aff = it
            .x
            .iter()
            .zip(&it.z)
            .zip(aff.dx.iter().zip(&aff.dz))
            .map(|((x, z), (dx, dz))| inner(&(x + dx * c(ap, 0.0)), &(z + dz * c(ad, 0.0))))
            .sum::<f64>()
            / nu;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector, in the NT-scaled space.
        let rc: Vec<CMat> = (0..nb)
            .map(|k| {
                let sc = &scalings[k];
                let dxs = &sc.g_inv * &aff.dx[k] * sc.g_inv.adjoint();
                let dzs = sc.g.adjoint() * &aff.dz[k] * &sc.g;
                let prod = &dxs * &dzs;
                let mut rhs = -hermitian_part(&prod);
                for (i, &vi) in sc.v.iter().enumerate() {
                    rhs[(i, i)] += c(sigma * mu - vi * vi, 0.0);
                }
                let s = lyapunov_diag(&sc.v, &rhs);
                hermitian_part(&(&sc.g * s * sc.g.adjoint()))
            })
            .collect();
        let dir = direction(&sf, &schur, &scalings, &rp, &rd, &rc);
        let (ap0, ad0) = step_lengths(&fx, &fz, &dir);
        let tau = 0.9 + 0.09 * ap0.min(ad0).min(1.0);
        let (ap, ad) = ((tau * ap0).min(1.0), (tau * ad0).min(1.0));
        if ap.max(ad) < 1e-12 {
            stalls += 1;
        }
        for k in 0..nb {
            it.x[k] = hermitian_part(&(&it.x[k] + &dir.dx[k] * c(ap, 0.0)));
            it.z[k] = hermitian_part(&(&it.z[k] + &dir.dz[k] * c(ad, 0.0)));
        }
        it.y += &dir.dy * ad;
        if m == 0 && it.x.iter().all(|x| x.is_empty()) {
            status = SdpStatus::Optimal;
            break;
        }
    }

    finish(p, &sf, &it, status, iterations)
}

fn initial_point(sf: &StandardForm) -> Iterate {
    let mut x = Vec::new();
    let mut z = Vec::new();
    for blk in &sf.blocks {
        let n = blk.n as f64;
        let mut xi: f64 = 10f64.max(n.sqrt());
        let mut eta: f64 = 10f64.max(n.sqrt()).max(frob(&blk.cost));
        for (i, f) in blk.rows.iter().enumerate() {
            if let Some(f) = f {
                let fn_ = frob(f);
                xi = xi.max(n * (1.0 + sf.b[i].abs()) / (1.0 + fn_));
                eta = eta.max(fn_);
            }
        }
        let eta = (1.0 + eta) / n.sqrt().max(1.0);
        x.push(identity(blk.n) * c(xi, 0.0));
        z.push(identity(blk.n) * c(eta.max(1.0), 0.0));
    }
    Iterate { x, z, y: DVector::zeros(sf.rows()) }
}

/// Cholesky factor of the Schur complement `M_ij = A_i • W A_j W`.
fn schur_factor(sf: &StandardForm, scalings: &[Scaling]) -> Option<Cholesky<f64, Dyn>> {
    let m = sf.rows();
    let mut mat = DMatrix::<f64>::zeros(m, m);
    for (blk, sc) in sf.blocks.iter().zip(scalings) {
        if blk.n == 1 {
            let w2 = sc.w[(0, 0)].re.powi(2);
            let entries: Vec<(usize, f64)> =
                blk.rows.iter().enumerate().filter_map(|(i, f)| f.as_ref().map(|f| (i, f[(0, 0)].re))).collect();
            for &(i, a) in &entries {
                for &(j, b) in &entries {
                    mat[(i, j)] += a * w2 * b;
                }
            }
            continue;
        }
        let active: Vec<(usize, &CMat)> =
            blk.rows.iter().enumerate().filter_map(|(i, f)| f.as_ref().map(|f| (i, f))).collect();
        for (a, &(j, fj)) in active.iter().enumerate() {
            let wfw = &sc.w * fj * &sc.w;
            for &(i, fi) in &active[..=a] {
                let v = inner(fi, &wfw);
                mat[(i, j)] += v;
                if i != j {
                    mat[(j, i)] += v;
                }
            }
        }
    }
    let scale = (0..m).map(|i| mat[(i, i)]).fold(0.0, f64::max).max(1e-300);
    if let Some(ch) = Cholesky::new(mat.clone()) {
        return Some(ch);
    }
    for i in 0..m {
        mat[(i, i)] += 1e-13 * scale;
    }
    Cholesky::new(mat)
}

fn direction(
    sf: &StandardForm,
    schur: &Cholesky<f64, Dyn>,
    scalings: &[Scaling],
    rp: &DVector<f64>,
    rd: &[CMat],
    rc: &[CMat],
) -> Direction {
    let nb = sf.blocks.len();
    // M dy = rp - A(Rc - W Rd W)
    let mut tmp = Vec::with_capacity(nb);
    for k in 0..nb {
        let w = &scalings[k].w;
        tmp.push(&rc[k] - w * &rd[k] * w);
    }
    let rhs = rp - sf.apply(&tmp);
    let dy = schur.solve(&rhs);
    let mut dx = Vec::with_capacity(nb);
    let mut dz = Vec::with_capacity(nb);
    for k in 0..nb {
        let w = &scalings[k].w;
        let dzk = hermitian_part(&(&rd[k] - sf.adjoint(k, &dy)));
        let dxk = hermitian_part(&(&rc[k] - w * &dzk * w));
        dx.push(dxk);
        dz.push(dzk);
    }
    Direction { dy, dx, dz }
}

/// Unclipped primal and dual step bounds.
fn step_lengths(fx: &[Factor], fz: &[Factor], dir: &Direction) -> (f64, f64) {
    let mut ap = f64::INFINITY;
    let mut ad = f64::INFINITY;
    for k in 0..fx.len() {
        ap = ap.min(max_step(&fx[k], &dir.dx[k]));
        ad = ad.min(max_step(&fz[k], &dir.dz[k]));
    }
    (ap, ad)
}

fn finish(p: &SdpProblem, sf: &StandardForm, it: &Iterate, status: SdpStatus, iterations: usize) -> SdpResult {
    let pick = |blk: Option<usize>, n: usize| blk.map(|k| it.x[k].clone()).unwrap_or_else(|| CMat::zeros(n, n));
    let x1 = pick(sf.x1_block, p.dims.0);
    let x2 = pick(sf.x2_block, p.dims.1);
    let scalars: Vec<f64> = sf.scalar_blocks.iter().map(|&k| it.x[k][(0, 0)].re).collect();
    let multipliers: Vec<f64> = it.y.iter().zip(&sf.row_scale).map(|(y, s)| -y * s).collect();
    let objective = p.objective_value(&x1, &x2, &scalars);
    let dual_objective = -sf.b.dot(&it.y);
    let gap = (objective - dual_objective).abs() / (1.0 + objective.abs() + dual_objective.abs());
    let max_violation = p.max_violation(&x1, &x2, &scalars);
    SdpResult {
        status,
        x1,
        x2,
        scalars,
        objective,
        dual_objective,
        gap,
        max_violation,
        iterations,
        multipliers,
    }
}
