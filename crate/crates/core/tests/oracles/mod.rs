//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relaybf::forms::{build_constraints, build_user_forms, ConstraintForm, UserForms};
use relaybf::matkernel::{c, herm_eig, identity, CMat};
use relaybf::network::{generate_channels, Architecture, NetworkConfig};
use relaybf::sdp::{SdpProblem, Sense};

pub fn random_herm(n: usize, rng: &mut impl Rng) -> CMat {
    let m = CMat::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    (&m + m.adjoint()) * c(0.5, 0.0)
}

pub fn random_psd(n: usize, rng: &mut impl Rng) -> CMat {
    let m = CMat::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    &m * m.adjoint()
}

pub fn block_diag(a: &CMat, b: &CMat) -> CMat {
    let (n1, n2) = (a.nrows(), b.nrows());
    let mut out = CMat::zeros(n1 + n2, n1 + n2);
    out.view_mut((0, 0), (n1, n1)).copy_from(a);
    out.view_mut((n1, n1), (n2, n2)).copy_from(b);
    out
}

/// `max C•X s.t. A_i•X <= b_i, X ⪰ 0` through the dual `min b^T y, sum y_i A_i - C ⪰ 0, y >= 0`.
pub fn dual_barrier_oracle(cost: &CMat, a: &[CMat], b: &[f64]) -> f64 {
    let m = a.len();
    let slack = |y: &DVector<f64>| -> CMat {
        let mut s = -cost.clone();
        for (ai, &yi) in a.iter().zip(y.iter()) {
            s += ai * c(yi, 0.0);
        }
        s
    };
    let barrier = |y: &DVector<f64>, t: f64| -> Option<f64> {
        if y.iter().any(|&v| v <= 0.0) {
            return None;
        }
        let eig = herm_eig(&slack(y)).ok()?;
        if eig.min() <= 0.0 {
            return None;
        }
        let logdet: f64 = eig.eigenvalues.iter().map(|l| l.ln()).sum();
        let logy: f64 = y.iter().map(|v| v.ln()).sum();
        Some(t * b.iter().zip(y.iter()).map(|(bi, yi)| bi * yi).sum::<f64>() - logdet - logy)
    };

    let lmax = herm_eig(cost).unwrap().max().abs();
    let amin = herm_eig(&a[0]).unwrap().min();
    let mut y = DVector::from_element(m, 1.0);
    y[0] = (lmax + 1.0) / amin + 1.0;
    let mut t = 1.0;
    let dim = cost.nrows() + m;
    while (dim as f64) / t > 1e-10 {
        for _ in 0..100 {
            let s = slack(&y);
            let s_inv = s.clone().try_inverse().unwrap();
            let sa: Vec<CMat> = a.iter().map(|ai| &s_inv * ai).collect();
            let mut grad = DVector::zeros(m);
            let mut hess = DMatrix::zeros(m, m);
            for i in 0..m {
                grad[i] = t * b[i] - sa[i].trace().re - 1.0 / y[i];
                for j in 0..m {
                    hess[(i, j)] = (&sa[i] * &sa[j]).trace().re;
                }
                hess[(i, i)] += 1.0 / (y[i] * y[i]);
            }
            let step = -hess.cholesky().unwrap().solve(&grad);
            let decrement = -grad.dot(&step);
            if decrement < 1e-14 {
                break;
            }
            let f0 = barrier(&y, t).unwrap();
            let mut alpha = 1.0;
            loop {
                let cand = &y + &step * alpha;
                if let Some(f) = barrier(&cand, t) {
                    if f <= f0 - 0.25 * alpha * decrement {
                        y = cand;
                        break;
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-14 {
                    break;
                }
            }
        }
        t *= 8.0;
    }
    b.iter().zip(y.iter()).map(|(bi, yi)| bi * yi).sum()
}

pub struct Instance {
    pub problem: SdpProblem,
    pub oracle_cost: CMat,
    pub oracle_rows: Vec<CMat>,
    pub oracle_rhs: Vec<f64>,
}

pub fn random_instance(seed: u64, n1: usize, n2: usize, extra: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c1 = random_herm(n1, &mut rng);
    let c2 = if n2 > 0 { random_herm(n2, &mut rng) } else { CMat::zeros(0, 0) };
    let mut p = SdpProblem::new(n1, n2).maximize(c1.clone(), c2.clone());
    let mut rows = vec![block_diag(&identity(n1), &identity(n2))];
    let mut rhs = vec![rng.random_range(1.0..3.0)];
    p.constrain(identity(n1), identity(n2), Sense::Le, rhs[0]);
    for _ in 0..extra {
        let a1 = random_psd(n1, &mut rng);
        let a2 = if n2 > 0 { random_psd(n2, &mut rng) } else { CMat::zeros(0, 0) };
        let bi = rng.random_range(0.5..2.0);
        p.constrain(a1.clone(), a2.clone(), Sense::Le, bi);
        rows.push(block_diag(&a1, &a2));
        rhs.push(bi);
    }
    Instance { problem: p, oracle_cost: block_diag(&c1, &c2), oracle_rows: rows, oracle_rhs: rhs }
}

pub fn two_relay_instance(seed: u64) -> (Vec<UserForms>, Vec<ConstraintForm>) {
    let mut cfg = NetworkConfig::uniform(Architecture::Distributed, 2, 1, 1, 1.0, 0.25, 0.25).unwrap();
    cfg.total_power_bound = Some(2.0);
    let r = generate_channels(&cfg, seed);
    (build_user_forms(&r, &cfg), build_constraints(&r, &cfg).unwrap())
}

pub fn diag(m: &relaybf::matkernel::CMat) -> [f64; 2] {
    [m[(0, 0)].re, m[(1, 1)].re]
}

pub fn is_diagonal(m: &relaybf::matkernel::CMat) -> bool {
    m[(0, 1)].norm() < 1e-14 && m[(1, 0)].norm() < 1e-14
}

/// With rank-one numerators and diagonal denominators, aligning phases is optimal,
/// so only the four moduli matter; the active budget fixes their scale.
pub struct ModulusObjective {
    a: [f64; 2],
    abar: [f64; 2],
    c: [f64; 2],
    cbar: [f64; 2],
    d: [f64; 2],
    dbar: [f64; 2],
    bound: f64,
}

impl ModulusObjective {
    pub fn new(uf: &UserForms, cf: &ConstraintForm) -> Self {
        for m in [&uf.c, &uf.cbar, &cf.d, &cf.dbar] {
            assert!(is_diagonal(m));
        }
        for m in [&uf.a, &uf.abar] {
            let e = herm_eig(m).unwrap();
            assert!(e.eigenvalues[1].abs() < 1e-12 * e.max());
        }
        let amp = |m: &relaybf::matkernel::CMat| [m[(0, 0)].re.sqrt(), m[(1, 1)].re.sqrt()];
        Self {
            a: amp(&uf.a),
            abar: amp(&uf.abar),
            c: diag(&uf.c),
            cbar: diag(&uf.cbar),
            d: diag(&cf.d),
            dbar: diag(&cf.dbar),
            bound: cf.bound,
        }
    }

    pub fn ratio(&self, r: [f64; 4], two_slot: bool) -> f64 {
        let (p, q) = ([r[0], r[1]], [r[2], r[3]]);
        let dot = |x: [f64; 2], y: [f64; 2]| x[0] * y[0] + x[1] * y[1];
        let sq = |x: [f64; 2]| [x[0] * x[0], x[1] * x[1]];
        let (mut num, mut den, mut load) = (dot(self.a, p).powi(2), dot(self.c, sq(p)), dot(self.d, sq(p)));
        if two_slot {
            num += dot(self.abar, q).powi(2);
            den += dot(self.cbar, sq(q));
            load += dot(self.dbar, sq(q));
        } else {
            load *= 2.0;
        }
        if load <= 0.0 {
            return 0.0;
        }
        let k = self.bound / load;
        k * num / (k * den + 1.0)
    }

    pub fn grid_search(&self, two_slot: bool) -> f64 {
        let n = 24;
        let dims = if two_slot { 4 } else { 2 };
        let mut best = (0.0, [0.0; 4]);
        let mut idx = [0usize; 4];
        loop {
            let mut r = [0.0; 4];
            for k in 0..dims {
                r[k] = idx[k] as f64 / n as f64;
            }
            let v = self.ratio(r, two_slot);
            if v > best.0 {
                best = (v, r);
            }
            let mut k = 0;
            while k < dims {
                idx[k] += 1;
                if idx[k] <= n {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == dims {
                break;
            }
        }
        let mut step = 1.0 / n as f64;
        while step > 1e-9 {
            let mut improved = false;
            for k in 0..dims {
                for sgn in [-1.0, 1.0] {
                    let mut r = best.1;
                    r[k] = (r[k] + sgn * step).max(0.0);
                    let v = self.ratio(r, two_slot);
                    if v > best.0 {
                        best = (v, r);
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best.0
    }
}

