//! Relay network scenarios and i.i.d. Rayleigh channel draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkernel::{std_complex_normal_vec, CVec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// `L` single-antenna relays, each scaling its own sample.
    Distributed,
    /// One relay with `L` antennas applying a full `L x L` matrix.
    Mimo,
}

/// A protected receiver whose interference power must stay below a ceiling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimalUser {
    pub noise: f64,
    pub interference_bound: f64,
}

/// All powers and noise levels are linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub architecture: Architecture,
    pub relays: usize,
    pub group_sizes: Vec<usize>,
    pub tx_powers: Vec<f64>,
    pub relay_noise: Vec<f64>,
    /// One entry per user, ordered group by group.
    pub user_noise: Vec<f64>,
    pub total_power_bound: Option<f64>,
    /// Empty, or one bound per relay (per antenna for MIMO).
    pub per_relay_bounds: Vec<f64>,
    pub primal_users: Vec<PrimalUser>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UserId {
    pub group: usize,
    pub index: usize,
}

impl NetworkConfig {
    /// Equal group sizes and equal noise everywhere, no constraints yet.
    pub fn uniform(
        architecture: Architecture,
        relays: usize,
        groups: usize,
        users: usize,
        tx_power: f64,
        relay_noise: f64,
        user_noise: f64,
    ) -> Result<Self> {
        if groups == 0 || users % groups != 0 {
            return Err(Error::InvalidConfig(format!(
                "{users} users cannot be split evenly into {groups} groups"
            )));
        }
        let cfg = Self {
            architecture,
            relays,
            group_sizes: vec![users / groups; groups],
            tx_powers: vec![tx_power; groups],
            relay_noise: vec![relay_noise; relays],
            user_noise: vec![user_noise; users],
            total_power_bound: None,
            per_relay_bounds: Vec::new(),
            primal_users: Vec::new(),
        };
        Ok(cfg)
    }

    pub fn groups(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn total_users(&self) -> usize {
        self.group_sizes.iter().sum()
    }

    /// Length of the beamformer vectors `w1`, `w2`.
    pub fn weight_dim(&self) -> usize {
        match self.architecture {
            Architecture::Distributed => self.relays,
            Architecture::Mimo => self.relays * self.relays,
        }
    }

    pub fn users(&self) -> Vec<UserId> {
        self.group_sizes
            .iter()
            .enumerate()
            .flat_map(|(group, &m)| (0..m).map(move |index| UserId { group, index }))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.relays == 0 {
            return bad("relay count must be at least 1".into());
        }
        if self.groups() == 0 || self.group_sizes.iter().any(|&m| m == 0) {
            return bad("every multicast group needs at least one user".into());
        }
        if self.tx_powers.len() != self.groups() {
            return bad(format!("{} transmit powers for {} groups", self.tx_powers.len(), self.groups()));
        }
        if self.relay_noise.len() != self.relays {
            return bad(format!("{} relay noise levels for {} relays", self.relay_noise.len(), self.relays));
        }
        if self.user_noise.len() != self.total_users() {
            return bad(format!(
                "{} user noise levels for {} users",
                self.user_noise.len(),
                self.total_users()
            ));
        }
        if !(self.per_relay_bounds.is_empty() || self.per_relay_bounds.len() == self.relays) {
            return bad(format!(
                "per-relay bounds must be empty or have {} entries, got {}",
                self.relays,
                self.per_relay_bounds.len()
            ));
        }
        let positive = |name: &str, xs: &[f64]| -> Result<()> {
            match xs.iter().find(|&&x| !(x.is_finite() && x > 0.0)) {
                Some(x) => bad(format!("{name} must be finite and positive, got {x}")),
                None => Ok(()),
            }
        };
        positive("transmit power", &self.tx_powers)?;
        positive("relay noise", &self.relay_noise)?;
        positive("user noise", &self.user_noise)?;
        positive("per-relay bound", &self.per_relay_bounds)?;
        if let Some(p0) = self.total_power_bound {
            positive("total power bound", &[p0])?;
        }
        for pu in &self.primal_users {
            positive("primal user noise", &[pu.noise])?;
            positive("interference bound", &[pu.interference_bound])?;
        }
        Ok(())
    }

    pub fn has_constraints(&self) -> bool {
        self.total_power_bound.is_some() || !self.per_relay_bounds.is_empty() || !self.primal_users.is_empty()
    }
}

/// One i.i.d. draw of every channel in the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// Transmitter `k` to relays, one vector per group.
    pub f: Vec<CVec>,
    /// Relays to user, one vector per user in [`NetworkConfig::users`] order.
    pub g: Vec<CVec>,
    /// Relays to primal user.
    pub q: Vec<CVec>,
    pub seed: u64,
}

/// Entries are CN(0, 1), drawn in the order f, g, q so primal-user prefixes are shared.
pub fn generate_channels(config: &NetworkConfig, seed: u64) -> ChannelRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = config.relays;
    let f = (0..config.groups()).map(|_| std_complex_normal_vec(l, &mut rng)).collect();
    let g = (0..config.total_users()).map(|_| std_complex_normal_vec(l, &mut rng)).collect();
    let q = (0..config.primal_users.len()).map(|_| std_complex_normal_vec(l, &mut rng)).collect();
    ChannelRealization { f, g, q, seed }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit seed from a master seed and a path of counters.
pub fn derive_seed(master: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(splitmix64(master), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// Independent random stream for `(master, keys...)`, unaffected by scheduling order.
pub fn stream_rng(master: u64, keys: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(derive_seed(master, keys));
    rng
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
