//! SINR and power quadratic forms built from one channel realization.
//!
//! A user's SINR under the two-slot Alamouti relay scheme is
//!
//! ```text
//!   (w1^H A w1 + w2^H Ab w2) / (w1^H C w1 + w2^H Cb w2 + 1)
//! ```
//!
//! where `w1` acts on the relay's received samples and `w2` on their
//! conjugates. For a MIMO relay `w = vec(V)` (columns stacked) and the forms
//! use Kronecker products; for distributed relays `w` is the diagonal of `V`
//! and the forms use elementwise products.
//!
//! Power and interference constraints read
//! `w1^H D w1 + w2^H Db w2 <= b`, with each slot's term weighted by 1/2. The
//! one-variable (beamforming only) scheme uses `A`, `C` and `2 D`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkernel::{
    c, conj_vec, hadamard, kron, kron_mat, outer, quad_form, real_diag, CMat, CVec, C64,
};
use crate::network::{Architecture, ChannelRealization, NetworkConfig, UserId};

#[derive(Debug, Clone)]
pub struct UserForms {
    pub user: UserId,
    pub a: CMat,
    pub abar: CMat,
    pub c: CMat,
    pub cbar: CMat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintLabel {
    Total,
    PerRelay(usize),
    Primal(usize),
}

#[derive(Debug, Clone)]
pub struct ConstraintForm {
    pub d: CMat,
    pub dbar: CMat,
    pub bound: f64,
    pub label: ConstraintLabel,
}

impl UserForms {
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

impl ConstraintForm {
    /// Left-hand side `w1^H D w1 + w2^H Db w2`; an empty `w2` means the slot is unused.
    pub fn load(&self, w1: &CVec, w2: &CVec) -> f64 {
        let mut v = quad_form(&self.d, w1);
        if !w2.is_empty() {
            v += quad_form(&self.dbar, w2);
        }
        v
    }

    /// Left-hand side for the one-variable scheme, `w^H (2 D) w`.
    pub fn load_single(&self, w: &CVec) -> f64 {
        2.0 * quad_form(&self.d, w)
    }

    /// The one-variable form `2 D`.
    pub fn single_form(&self) -> CMat {
        &self.d * c(2.0, 0.0)
    }
}

/// Combines two vectors with `⊗` (MIMO) or `⊙` (distributed).
fn combine(arch: Architecture, a: &CVec, b: &CVec) -> CVec {
    match arch {
        Architecture::Mimo => kron(a, b),
        Architecture::Distributed => hadamard(a, b).expect("channel vectors share the relay count"),
    }
}

fn scaled_outer(v: &CVec, s: f64) -> CMat {
    outer(v) * c(s, 0.0)
}

/// Relay-noise contribution to a user's interference-plus-noise form.
fn relay_noise_form(cfg: &NetworkConfig, g: &CVec) -> CMat {
    match cfg.architecture {
        Architecture::Mimo => kron_mat(&real_diag(&cfg.relay_noise), &outer(g)),
        Architecture::Distributed => {
            let d: Vec<f64> = g.iter().zip(&cfg.relay_noise).map(|(z, s2)| z.norm_sqr() * s2).collect();
            real_diag(&d)
        }
    }
}

pub fn build_user_forms(r: &ChannelRealization, cfg: &NetworkConfig) -> Vec<UserForms> {
    let arch = cfg.architecture;
    let n = cfg.weight_dim();
    cfg.users()
        .into_iter()
        .enumerate()
        .map(|(u, user)| {
            let g = &r.g[u];
            let inv_noise = 1.0 / cfg.user_noise[u];
            let mut a = CMat::zeros(n, n);
            let mut abar = CMat::zeros(n, n);
            let mut cm = CMat::zeros(n, n);
            let mut cbar = CMat::zeros(n, n);
            for (k, f) in r.f.iter().enumerate() {
                let p = cfg.tx_powers[k] * inv_noise;
                let slot1 = scaled_outer(&combine(arch, &conj_vec(f), g), p);
                let slot2 = scaled_outer(&combine(arch, f, g), p);
                if k == user.group {
                    a += slot1;
                    abar += slot2;
                } else {
                    cm += slot1;
                    cbar += slot2;
                }
            }
            let noise = relay_noise_form(cfg, g) * c(inv_noise, 0.0);
            cm += &noise;
            cbar += noise;
            UserForms { user, a, abar, c: cm, cbar }
        })
        .collect()
}

/// Covariance of the relay input vector, `R = sum_k P_k f_k f_k^H + Sigma`.
pub fn relay_input_covariance(r: &ChannelRealization, cfg: &NetworkConfig) -> CMat {
    let mut cov = real_diag(&cfg.relay_noise);
    for (f, &p) in r.f.iter().zip(&cfg.tx_powers) {
        cov += scaled_outer(f, p);
    }
    cov
}

/// Halved per-slot forms of `E|q^H x|^2` where `x` is the relay output.
///
/// Slot 1 amplifies `r` and slot 2 amplifies `conj(r)`, so the second form
/// sees `conj(R)` in place of `R`.
fn probe_forms(cfg: &NetworkConfig, cov: &CMat, q: &CVec) -> (CMat, CMat) {
    let qq = outer(q);
    let (d, dbar) = match cfg.architecture {
        Architecture::Mimo => (kron_mat(&cov.transpose(), &qq), kron_mat(cov, &qq)),
        Architecture::Distributed => (qq.component_mul(&cov.transpose()), qq.component_mul(cov)),
    };
    (d * c(0.5, 0.0), dbar * c(0.5, 0.0))
}

fn unit(n: usize, i: usize) -> CVec {
    let mut e = CVec::zeros(n);
    e[i] = C64::new(1.0, 0.0);
    e
}

pub fn build_constraints(r: &ChannelRealization, cfg: &NetworkConfig) -> Result<Vec<ConstraintForm>> {
    if !cfg.has_constraints() {
        return Err(Error::NoConstraints);
    }
    let l = cfg.relays;
    let cov = relay_input_covariance(r, cfg);
    let per_relay: Vec<(CMat, CMat)> = (0..l).map(|i| probe_forms(cfg, &cov, &unit(l, i))).collect();

    let mut out = Vec::new();
    if let Some(bound) = cfg.total_power_bound {
        let n = cfg.weight_dim();
        let (mut d, mut dbar) = (CMat::zeros(n, n), CMat::zeros(n, n));
        for (pd, pdb) in &per_relay {
            d += pd;
            dbar += pdb;
        }
        out.push(ConstraintForm { d, dbar, bound, label: ConstraintLabel::Total });
    }
    for (i, &bound) in cfg.per_relay_bounds.iter().enumerate() {
        let (d, dbar) = per_relay[i].clone();
        out.push(ConstraintForm { d, dbar, bound, label: ConstraintLabel::PerRelay(i) });
    }
    for (u, (pu, q)) in cfg.primal_users.iter().zip(&r.q).enumerate() {
        let (d, dbar) = probe_forms(cfg, &cov, q);
        out.push(ConstraintForm { d, dbar, bound: pu.interference_bound, label: ConstraintLabel::Primal(u) });
    }
    Ok(out)
}

/// SINR of one user. Pass an empty `w2` for the one-variable scheme.
pub fn sinr_value(uf: &UserForms, w1: &CVec, w2: &CVec) -> f64 {
    let mut num = quad_form(&uf.a, w1);
    let mut den = quad_form(&uf.c, w1) + 1.0;
    if !w2.is_empty() {
        num += quad_form(&uf.abar, w2);
        den += quad_form(&uf.cbar, w2);
    }
    num.max(0.0) / den
}

/// Worst-user SINR.
pub fn min_sinr(users: &[UserForms], w1: &CVec, w2: &CVec) -> f64 {
    users.iter().map(|u| sinr_value(u, w1, w2)).fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkernel::{herm_eig, hermitian_defect, max_abs};
    use crate::network::generate_channels;

    fn scalar_instance() -> (ChannelRealization, NetworkConfig) {
        let mut cfg = NetworkConfig::uniform(Architecture::Distributed, 1, 1, 1, 1.0, 1.0, 1.0).unwrap();
        cfg.total_power_bound = Some(2.0);
        let one = CVec::from_vec(vec![c(1.0, 0.0)]);
        let r = ChannelRealization { f: vec![one.clone()], g: vec![one], q: vec![], seed: 0 };
        (r, cfg)
    }

    fn assert_scalar(m: &CMat, v: f64) {
        assert_eq!(m.shape(), (1, 1));
        assert!((m[(0, 0)] - c(v, 0.0)).norm() < 1e-15, "{m}");
    }

    #[test]
    fn scalar_distributed_forms() {
        let (r, cfg) = scalar_instance();
        let uf = &build_user_forms(&r, &cfg)[0];
        for m in [&uf.a, &uf.abar, &uf.c, &uf.cbar] {
            assert_scalar(m, 1.0);
        }
        let cons = build_constraints(&r, &cfg).unwrap();
        assert_eq!(cons.len(), 1);
        assert_scalar(&cons[0].d, 1.0);
        assert_scalar(&cons[0].dbar, 1.0);
        assert_eq!(cons[0].bound, 2.0);
        assert_eq!(cons[0].label, ConstraintLabel::Total);
    }

    #[test]
    fn scalar_sinr_values() {
        let (r, cfg) = scalar_instance();
        let uf = &build_user_forms(&r, &cfg)[0];
        let one = CVec::from_vec(vec![c(1.0, 0.0)]);
        assert!((sinr_value(uf, &one, &CVec::zeros(0)) - 0.5).abs() < 1e-15);

        let e1 = UserForms {
            user: uf.user,
            a: real_diag(&[1.0, 0.0]),
            abar: CMat::zeros(2, 2),
            c: CMat::zeros(2, 2),
            cbar: CMat::zeros(2, 2),
        };
        let w = CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        assert!((sinr_value(&e1, &w, &CVec::zeros(2)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mimo_signal_form_is_rank_one() {
        let mut cfg = NetworkConfig::uniform(Architecture::Mimo, 2, 2, 4, 1.5, 0.5, 0.25).unwrap();
        cfg.total_power_bound = Some(1.0);
        let r = generate_channels(&cfg, 9);
        for (u, uf) in build_user_forms(&r, &cfg).iter().enumerate() {
            assert_eq!(uf.dim(), 4);
            let e = herm_eig(&uf.a).unwrap();
            let k = uf.user.group;
            let expect = cfg.tx_powers[k] * r.f[k].norm_squared() * r.g[u].norm_squared() / cfg.user_noise[u];
            assert!((e.eigenvalues[0] - expect).abs() < 1e-10 * expect);
            assert!(e.eigenvalues[1].abs() <= 1e-9 * e.eigenvalues[0]);
            let eb = herm_eig(&uf.abar).unwrap();
            assert!(eb.eigenvalues[1].abs() <= 1e-9 * eb.eigenvalues[0]);
        }
    }

    #[test]
    fn forms_are_hermitian_psd() {
        for arch in [Architecture::Mimo, Architecture::Distributed] {
            let mut cfg = NetworkConfig::uniform(arch, 3, 2, 4, 1.0, 0.25, 0.25).unwrap();
            cfg.total_power_bound = Some(2.0);
            cfg.per_relay_bounds = vec![1.0; 3];
            cfg.primal_users = vec![crate::network::PrimalUser { noise: 0.25, interference_bound: 2.0 }; 2];
            let r = generate_channels(&cfg, 4);
            let mut mats: Vec<CMat> = Vec::new();
            for uf in build_user_forms(&r, &cfg) {
                mats.extend([uf.a, uf.abar, uf.c, uf.cbar]);
            }
            let cons = build_constraints(&r, &cfg).unwrap();
            assert_eq!(cons.len(), 1 + 3 + 2);
            for cf in cons {
                mats.extend([cf.d, cf.dbar]);
            }
            for m in mats {
                assert!(hermitian_defect(&m) <= 1e-12 * max_abs(&m).max(1.0));
                let e = herm_eig(&m).unwrap();
                assert!(e.min() >= -1e-9 * e.max().max(1e-300));
            }
        }
    }

    #[test]
    fn distributed_slot_forms_share_moduli() {
        let cfg = NetworkConfig::uniform(Architecture::Distributed, 4, 2, 4, 1.0, 0.25, 0.25).unwrap();
        for seed in 0..5 {
            let r = generate_channels(&cfg, seed);
            for uf in build_user_forms(&r, &cfg) {
                for (x, y) in uf.a.iter().zip(uf.abar.iter()) {
                    assert!((x.norm() - y.norm()).abs() < 1e-12 * x.norm().max(1.0));
                }
                for i in 0..4 {
                    assert!((uf.a[(i, i)] - uf.abar[(i, i)]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn primal_form_vanishes_for_zero_channel() {
        let mut cfg = NetworkConfig::uniform(Architecture::Mimo, 2, 1, 1, 1.0, 1.0, 1.0).unwrap();
        cfg.primal_users = vec![crate::network::PrimalUser { noise: 1.0, interference_bound: 1.0 }];
        let mut r = generate_channels(&cfg, 1);
        r.q[0] = CVec::zeros(2);
        let cons = build_constraints(&r, &cfg).unwrap();
        assert_eq!(cons[0].label, ConstraintLabel::Primal(0));
        assert_eq!(max_abs(&cons[0].d), 0.0);
        assert_eq!(max_abs(&cons[0].dbar), 0.0);
    }

    #[test]
    fn no_constraint_is_rejected() {
        let cfg = NetworkConfig::uniform(Architecture::Mimo, 2, 1, 1, 1.0, 1.0, 1.0).unwrap();
        let r = generate_channels(&cfg, 1);
        assert!(matches!(build_constraints(&r, &cfg), Err(Error::NoConstraints)));
    }

    #[test]
    fn sinr_increases_with_common_scale() {
        let mut cfg = NetworkConfig::uniform(Architecture::Mimo, 3, 2, 4, 1.0, 0.25, 0.25).unwrap();
        cfg.total_power_bound = Some(1.0);
        let r = generate_channels(&cfg, 17);
        let users = build_user_forms(&r, &cfg);
        let mut rng = crate::network::stream_rng(1, &[]);
        let w1 = crate::matkernel::std_complex_normal_vec(9, &mut rng);
        let w2 = crate::matkernel::std_complex_normal_vec(9, &mut rng);
        for uf in &users {
            let vals: Vec<f64> =
                [0.5, 1.0, 2.0].iter().map(|&s| sinr_value(uf, &(&w1 * c(s, 0.0)), &(&w2 * c(s, 0.0)))).collect();
            assert!(vals[0] < vals[1] && vals[1] < vals[2], "{vals:?}");
        }
    }

    #[test]
    fn total_form_is_sum_of_per_relay_forms() {
        let mut cfg = NetworkConfig::uniform(Architecture::Mimo, 3, 2, 2, 1.0, 0.3, 0.25).unwrap();
        cfg.total_power_bound = Some(1.0);
        cfg.per_relay_bounds = vec![1.0; 3];
        let r = generate_channels(&cfg, 2);
        let cons = build_constraints(&r, &cfg).unwrap();
        let mut sum = CMat::zeros(9, 9);
        for cf in &cons[1..] {
            sum += &cf.d;
        }
        assert!(crate::matkernel::frobenius(&(sum - &cons[0].d)) < 1e-12);
    }
}
