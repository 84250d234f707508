//! Scenario geometry, 3GPP path loss, Rician small-scale fading, and seeded
//! channel realization generation.
//!
//! Arrays at the base station and the surface are modeled as uniform linear
//! arrays along the y-axis with half-wavelength spacing by default; line-of-
//! sight components are steering-vector outer products derived from the 2D
//! geometry, with unit-modulus entries so that `E[|h|²]` equals the linear
//! path gain for every link entry.

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::model::{ChannelSet, SystemConfig};
use crate::{CMat, Error, Result};

/// Free-space positions of the fixed terminals and the user disks, in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub bs_pos_m: [f64; 2],
    pub ris_pos_m: [f64; 2],
    /// Center of the reflecting-user disk (transmitter side of the surface).
    pub reflect_center_m: [f64; 2],
    /// Center of the transmitting-user disk (far side of the surface).
    pub transmit_center_m: [f64; 2],
    pub user_radius_m: f64,
}

impl Default for GeometrySpec {
    fn default() -> Self {
        Self {
            bs_pos_m: [0.0, -70.0],
            ris_pos_m: [300.0, 0.0],
            reflect_center_m: [300.0, -10.0],
            transmit_center_m: [300.0, 10.0],
            user_radius_m: 3.0,
        }
    }
}

impl GeometrySpec {
    /// [`GeometrySpec::sample_users`] with its own seeded generator stream.
    pub fn sample_users_seeded(&self, k_r: usize, k_t: usize, seed: u64) -> Geometry {
        self.sample_users(k_r, k_t, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Sample user positions uniformly over the two disks: the first `k_r`
    /// users in the reflecting disk, the remaining `k_t` in the transmitting
    /// disk.
    pub fn sample_users(&self, k_r: usize, k_t: usize, rng: &mut impl Rng) -> Geometry {
        let mut user_pos = Vec::with_capacity(k_r + k_t);
        for i in 0..k_r + k_t {
            let center = if i < k_r {
                self.reflect_center_m
            } else {
                self.transmit_center_m
            };
            let r = self.user_radius_m * rng.random::<f64>().sqrt();
            let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
            user_pos.push([center[0] + r * phi.cos(), center[1] + r * phi.sin()]);
        }
        Geometry {
            spec: self.clone(),
            user_pos,
        }
    }
}

/// A geometry with concrete sampled user positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub spec: GeometrySpec,
    pub user_pos: Vec<[f64; 2]>,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        let s = &self.spec;
        let mut ds = vec![dist(s.bs_pos_m, s.ris_pos_m)];
        for &u in &self.user_pos {
            ds.push(dist(s.bs_pos_m, u));
            ds.push(dist(s.ris_pos_m, u));
        }
        if ds.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::InvalidConfig(
                "geometry places two terminals at the same point".into(),
            ));
        }
        Ok(())
    }
}

/// Small-scale fading parameters and the seed of the realization stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FadingSpec {
    /// Rician factor κ ≥ 0; `f64::INFINITY` yields pure line of sight.
    pub rician_kappa: f64,
    /// Seed of this realization's generator stream.
    #[serde(default)]
    pub seed: u64,
    /// Element spacing in wavelengths.
    #[serde(default = "default_spacing")]
    pub antenna_spacing: f64,
}

fn default_spacing() -> f64 {
    0.5
}

impl Default for FadingSpec {
    fn default() -> Self {
        Self {
            rician_kappa: 1.0,
            seed: 0,
            antenna_spacing: default_spacing(),
        }
    }
}

/// 3GPP UMi-style path loss `PL|dB = 41.2 + 28.7·log₁₀(d)` for `d` in meters.
pub fn path_loss_db(d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::NonPositiveDistance(d));
    }
    Ok(41.2 + 28.7 * d.log10())
}

/// Linear power gain `10^(-PL|dB / 10)`.
pub fn path_loss_linear(d: f64) -> Result<f64> {
    Ok(10f64.powf(-path_loss_db(d)? / 10.0))
}

/// ULA steering vector along the y-axis for a link in direction `dir`.
fn steering(n: usize, spacing: f64, from: [f64; 2], to: [f64; 2]) -> Vec<Complex64> {
    let d = dist(from, to);
    let sin_theta = (to[1] - from[1]) / d;
    (0..n)
        .map(|i| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * spacing * i as f64 * sin_theta))
        .collect()
}

struct RicianMix {
    los: f64,
    nlos: f64,
}

fn rician_mix(kappa: f64) -> Result<RicianMix> {
    if !(kappa >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "Rician factor must be nonnegative, got {kappa}"
        )));
    }
    if kappa.is_infinite() {
        return Ok(RicianMix { los: 1.0, nlos: 0.0 });
    }
    Ok(RicianMix {
        los: (kappa / (1.0 + kappa)).sqrt(),
        nlos: (1.0 / (1.0 + kappa)).sqrt(),
    })
}

fn cn01(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draw one channel realization. The result is a pure function of
/// `(geometry, fading, cfg)`: the same seed always yields a bit-identical
/// [`ChannelSet`].
pub fn draw_channels(geom: &Geometry, fading: &FadingSpec, cfg: &SystemConfig) -> Result<ChannelSet> {
    cfg.validate()?;
    geom.validate()?;
    let k = cfg.n_users();
    if geom.user_pos.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "geometry holds {} user positions, config wants {k}",
            geom.user_pos.len()
        )));
    }
    let mix = rician_mix(fading.rician_kappa)?;
    let n_tx = cfg.n_tx;
    let m = cfg.n_cells;
    let s = &geom.spec;
    let mut rng = ChaCha8Rng::seed_from_u64(fading.seed);

    // Direct transmitter→user rows.
    let mut h_rt = CMat::zeros((k, n_tx));
    for (u, &pos) in geom.user_pos.iter().enumerate() {
        let amp = path_loss_linear(dist(s.bs_pos_m, pos))?.sqrt();
        let a_bs = steering(n_tx, fading.antenna_spacing, s.bs_pos_m, pos);
        for t in 0..n_tx {
            h_rt[(u, t)] = amp * (mix.los * a_bs[t] + mix.nlos * cn01(&mut rng));
        }
    }

    // Transmitter→surface (sector 1) matrix.
    let amp_it = path_loss_linear(dist(s.bs_pos_m, s.ris_pos_m))?.sqrt();
    let a_ris_bs = steering(m, fading.antenna_spacing, s.ris_pos_m, s.bs_pos_m);
    let a_bs_ris = steering(n_tx, fading.antenna_spacing, s.bs_pos_m, s.ris_pos_m);
    let mut h_it = CMat::zeros((m, n_tx));
    for i in 0..m {
        for t in 0..n_tx {
            h_it[(i, t)] = amp_it * (mix.los * a_ris_bs[i] * a_bs_ris[t] + mix.nlos * cn01(&mut rng));
        }
    }

    // Surface→user rows (sector-local).
    let mut h_ri = CMat::zeros((k, m));
    for (u, &pos) in geom.user_pos.iter().enumerate() {
        let amp = path_loss_linear(dist(s.ris_pos_m, pos))?.sqrt();
        let a_ris = steering(m, fading.antenna_spacing, s.ris_pos_m, pos);
        for i in 0..m {
            h_ri[(u, i)] = amp * (mix.los * a_ris[i] + mix.nlos * cn01(&mut rng));
        }
    }

    ChannelSet::new(h_rt, h_ri, h_it, cfg.k_r)
}
