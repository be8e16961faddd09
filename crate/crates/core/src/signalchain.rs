//! Physical-layer simulation of the two-slot Alamouti relay scheme.
//!
//! Each transmitter sends an Alamouti block `(s(2m), s(2m+1))`. The relays
//! buffer both received samples `r(2m)`, `r(2m+1)` and forward
//!
//! ```text
//!   x(2m)   = V1 r(2m)   - V2 conj(r(2m+1))
//!   x(2m+1) = V1 r(2m+1) + V2 conj(r(2m))
//! ```
//!
//! so every receiver sees the Alamouti code of its group's symbols through the
//! effective gains `h1 = g^H V1 f`, `h2 = g^H V2 conj(f)`. With `V2 = 0` the
//! chain degenerates to plain beamforming (`x(t) = V1 r(t)`).

use rand::Rng;

use crate::error::{Error, Result};
use crate::matkernel::{c, std_complex_normal, unvec_columns, CMat, CVec, C64};
use crate::network::{Architecture, ChannelRealization, NetworkConfig};

/// Effective channels below this are treated as an unreachable user.
pub const UNDETECTABLE_GAIN: f64 = 1e-15;

/// Alamouti symbol pair of one group, `s(2m)` and `s(2m+1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolBlock(pub C64, pub C64);

/// The 2x2 code matrix `[[s1, s2], [-conj(s2), conj(s1)]]`.
pub fn alamouti_encode(pair: SymbolBlock) -> [[C64; 2]; 2] {
    let SymbolBlock(s1, s2) = pair;
    [[s1, s2], [-s2.conj(), s1.conj()]]
}

/// Gains seen by one receiver.
#[derive(Debug, Clone)]
pub struct EffectiveChannels {
    /// `h1[j]`, `h2[j]`: gain of group `j`'s signal in slot-1 / slot-2 weights.
    pub h1: Vec<C64>,
    pub h2: Vec<C64>,
    /// `u1[c]`, `u2[c]`: gain of relay input noise `c`.
    pub u1: Vec<C64>,
    pub u2: Vec<C64>,
}

impl EffectiveChannels {
    pub fn gain(&self, group: usize) -> f64 {
        self.h1[group].norm_sqr() + self.h2[group].norm_sqr()
    }

    /// Combining matrix `[[h1, -h2], [conj(h2), conj(h1)]]` of group `j`.
    pub fn combining(&self, group: usize) -> [[C64; 2]; 2] {
        let (h1, h2) = (self.h1[group], self.h2[group]);
        [[h1, -h2], [h2.conj(), h1.conj()]]
    }

    /// `sum_{j != k} |h1^j|^2 + |h2^j|^2 + sum_c sigma_c^2 (|u1^c|^2 + |u2^c|^2) + sigma_user^2`, over the signal gain.
    pub fn analytic_sinr(&self, group: usize, relay_noise: &[f64], user_noise: f64) -> f64 {
        let interference: f64 = (0..self.h1.len()).filter(|&j| j != group).map(|j| self.gain(j)).sum();
        let noise: f64 = relay_noise
            .iter()
            .zip(self.u1.iter().zip(&self.u2))
            .map(|(s2, (a, b))| s2 * (a.norm_sqr() + b.norm_sqr()))
            .sum();
        self.gain(group) / (interference + noise + user_noise)
    }
}

/// Received pair `(y(2m), y(2m+1))` split into its desired, interference and noise parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceivedPair {
    pub desired: [C64; 2],
    pub interference: [C64; 2],
    pub noise: [C64; 2],
}

impl ReceivedPair {
    pub fn total(&self) -> [C64; 2] {
        [0, 1].map(|t| self.desired[t] + self.interference[t] + self.noise[t])
    }
}

#[derive(Debug, Clone)]
pub struct BlockOutput {
    /// Relay output vectors `x(2m)`, `x(2m+1)`.
    pub relay_tx: [CVec; 2],
    /// One entry per user, in [`NetworkConfig::users`] order.
    pub received: Vec<ReceivedPair>,
}

/// Relay matrix `V` from a weight vector.
pub fn relay_matrix(arch: Architecture, relays: usize, w: &CVec) -> CMat {
    if w.is_empty() {
        return CMat::zeros(relays, relays);
    }
    match arch {
        Architecture::Mimo => unvec_columns(w, relays),
        Architecture::Distributed => CMat::from_diagonal(w),
    }
}

/// A channel realization with fixed relay weights, ready for block simulation.
#[derive(Debug, Clone)]
pub struct RelayChain<'a> {
    cfg: &'a NetworkConfig,
    r: &'a ChannelRealization,
    v1: CMat,
    v2: CMat,
    /// Signal component of the relay input per group: `sqrt(P_k) f_k`.
    inputs: Vec<CVec>,
    effective: Vec<EffectiveChannels>,
    group_of_user: Vec<usize>,
    noiseless: bool,
}

impl<'a> RelayChain<'a> {
    /// An empty `w2` selects plain beamforming.
    pub fn new(cfg: &'a NetworkConfig, r: &'a ChannelRealization, w1: &CVec, w2: &CVec) -> Result<Self> {
        let n = cfg.weight_dim();
        for w in [w1, w2] {
            if !w.is_empty() && w.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: w.len() });
            }
        }
        let l = cfg.relays;
        let v1 = relay_matrix(cfg.architecture, l, w1);
        let v2 = relay_matrix(cfg.architecture, l, w2);
        let inputs: Vec<CVec> = r.f.iter().zip(&cfg.tx_powers).map(|(f, &p)| f * c(p.sqrt(), 0.0)).collect();
        let effective = r
            .g
            .iter()
            .map(|g| {
                let gv1 = g.adjoint() * &v1;
                let gv2 = g.adjoint() * &v2;
                EffectiveChannels {
                    h1: inputs.iter().map(|x| (&gv1 * x)[0]).collect(),
                    h2: inputs.iter().map(|x| (&gv2 * x.conjugate())[0]).collect(),
                    u1: gv1.iter().copied().collect(),
                    u2: gv2.iter().copied().collect(),
                }
            })
            .collect();
        let group_of_user = cfg.users().iter().map(|u| u.group).collect();
        Ok(Self { cfg, r, v1, v2, inputs, effective, group_of_user, noiseless: false })
    }

    /// Drops relay and receiver noise.
    pub fn noiseless(mut self) -> Self {
        self.noiseless = true;
        self
    }

    pub fn effective(&self, user: usize) -> &EffectiveChannels {
        &self.effective[user]
    }

    pub fn group_of(&self, user: usize) -> usize {
        self.group_of_user[user]
    }

    /// Per-slot relay output `V1 a - V2 conj(b)` for the slot pair `(a, b)`.
    fn forward(&self, first: &CVec, second: &CVec) -> [CVec; 2] {
        let x0 = &self.v1 * first - &self.v2 * second.conjugate();
        let x1 = &self.v1 * second + &self.v2 * first.conjugate();
        [x0, x1]
    }

    /// Runs one Alamouti block through the relays to every user.
    pub fn simulate_block<R: Rng + ?Sized>(&self, symbols: &[SymbolBlock], rng: &mut R) -> BlockOutput {
        let l = self.cfg.relays;
        let groups = self.inputs.len();
        // relay input parts per group and slot
        let sig: Vec<[CVec; 2]> = self
            .inputs
            .iter()
            .zip(symbols)
            .map(|(x, s)| [x * s.0, x * s.1])
            .collect();
        let noise_in: [CVec; 2] = if self.noiseless {
            [CVec::zeros(l), CVec::zeros(l)]
        } else {
            [0, 1].map(|_| {
                CVec::from_fn(l, |i, _| std_complex_normal(rng) * self.cfg.relay_noise[i].sqrt())
            })
        };
        let sig_out: Vec<[CVec; 2]> = sig.iter().map(|[a, b]| self.forward(a, b)).collect();
        let noise_out = self.forward(&noise_in[0], &noise_in[1]);

        let mut relay_tx = noise_out.clone();
        for out in &sig_out {
            relay_tx[0] += &out[0];
            relay_tx[1] += &out[1];
        }

        let received = self
            .r
            .g
            .iter()
            .enumerate()
            .map(|(u, g)| {
                let k = self.group_of_user[u];
                let project = |x: &CVec| g.dotc(x);
                let mut desired = [C64::new(0.0, 0.0); 2];
                let mut interference = [C64::new(0.0, 0.0); 2];
                for j in 0..groups {
                    let part = [project(&sig_out[j][0]), project(&sig_out[j][1])];
                    let dst = if j == k { &mut desired } else { &mut interference };
                    dst[0] += part[0];
                    dst[1] += part[1];
                }
                let mut noise = [project(&noise_out[0]), project(&noise_out[1])];
                if !self.noiseless {
                    let s = self.cfg.user_noise[u].sqrt();
                    noise[0] += std_complex_normal(rng) * s;
                    noise[1] += std_complex_normal(rng) * s;
                }
                ReceivedPair { desired, interference, noise }
            })
            .collect();
        BlockOutput { relay_tx, received }
    }
}

/// Alamouti combining for the target group: returns soft estimates of `(s(2m), s(2m+1))`.
pub fn ml_detect(y: [C64; 2], eff: &EffectiveChannels, group: usize) -> Result<SymbolBlock> {
    let gain = eff.gain(group);
    if gain <= UNDETECTABLE_GAIN {
        return Err(Error::Undetectable(gain));
    }
    let h = eff.combining(group);
    let z = [y[0], y[1].conj()];
    // H^H z
    let e0 = h[0][0].conj() * z[0] + h[1][0].conj() * z[1];
    let e1 = h[0][1].conj() * z[0] + h[1][1].conj() * z[1];
    Ok(SymbolBlock(e0 / gain, (e1 / gain).conj()))
}

/// Gray-mapped unit-power QPSK: bit 0 picks the real sign, bit 1 the imaginary sign.
pub fn qpsk_map(b0: bool, b1: bool) -> C64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    C64::new(if b0 { -s } else { s }, if b1 { -s } else { s })
}

pub fn qpsk_slice(z: C64) -> (bool, bool) {
    (z.re < 0.0, z.im < 0.0)
}

/// Empirical post-combining SINR per user: unit signal power over the mean
/// squared detection error, using the known transmitted symbols.
pub fn empirical_sinr<R: Rng + ?Sized>(chain: &RelayChain<'_>, n_blocks: usize, rng: &mut R) -> Result<Vec<f64>> {
    let users = chain.effective.len();
    let groups = chain.inputs.len();
    let mut err = vec![0.0; users];
    for _ in 0..n_blocks {
        let symbols: Vec<SymbolBlock> = (0..groups)
            .map(|_| SymbolBlock(random_qpsk(rng), random_qpsk(rng)))
            .collect();
        let out = chain.simulate_block(&symbols, rng);
        for (u, rx) in out.received.iter().enumerate() {
            let k = chain.group_of_user[u];
            let est = ml_detect(rx.total(), &chain.effective[u], k)?;
            err[u] += (est.0 - symbols[k].0).norm_sqr() + (est.1 - symbols[k].1).norm_sqr();
        }
    }
    Ok(err.iter().map(|e| 2.0 * n_blocks as f64 / e).collect())
}

fn random_qpsk<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    qpsk_map(rng.random(), rng.random())
}

/// Uncoded QPSK bit error rate per user over `n_blocks` Alamouti blocks (4 bits per block).
///
/// A user whose effective channel vanishes cannot detect anything and is
/// reported at 0.5.
pub fn ber_run<R: Rng + ?Sized>(
    cfg: &NetworkConfig,
    r: &ChannelRealization,
    w1: &CVec,
    w2: &CVec,
    n_blocks: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n_blocks == 0 {
        return Err(Error::InvalidArgument("at least one block is required".into()));
    }
    let chain = RelayChain::new(cfg, r, w1, w2)?;
    ber_with_chain(&chain, n_blocks, rng)
}

pub fn ber_with_chain<R: Rng + ?Sized>(chain: &RelayChain<'_>, n_blocks: usize, rng: &mut R) -> Result<Vec<f64>> {
    let users = chain.effective.len();
    let groups = chain.inputs.len();
    let mut errors = vec![0usize; users];
    let mut dead = vec![false; users];
    for _ in 0..n_blocks {
        let bits: Vec<[bool; 4]> = (0..groups).map(|_| [0; 4].map(|_| rng.random())).collect();
        let symbols: Vec<SymbolBlock> =
            bits.iter().map(|b| SymbolBlock(qpsk_map(b[0], b[1]), qpsk_map(b[2], b[3]))).collect();
        let out = chain.simulate_block(&symbols, rng);
        for (u, rx) in out.received.iter().enumerate() {
            let k = chain.group_of_user[u];
            match ml_detect(rx.total(), &chain.effective[u], k) {
                Ok(est) => {
                    let (a, b) = qpsk_slice(est.0);
                    let (cc, d) = qpsk_slice(est.1);
                    let sent = bits[k];
                    errors[u] += [a, b, cc, d].iter().zip(sent).filter(|(x, y)| **x != *y).count();
                }
                Err(Error::Undetectable(_)) => dead[u] = true,
                Err(e) => return Err(e),
            }
        }
    }
    let total_bits = 4.0 * n_blocks as f64;
    Ok(errors
        .iter()
        .zip(&dead)
        .map(|(&e, &d)| if d { 0.5 } else { e as f64 / total_bits })
        .collect())
}

/// `Q(x)`, the standard normal upper tail.
pub fn q_function(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}
