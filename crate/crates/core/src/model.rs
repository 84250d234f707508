//! System configuration, surface constraint descriptors, active scattering
//! composition, and SINR / sum-rate / power evaluation.
//!
//! The surface has `M` cells of back-to-back element pairs: sector 1 reflects
//! toward the transmitter side, sector 2 transmits into the opposite
//! half-space. Only the two scattering blocks that carry signal — `Θ_r`
//! (sector 1 → sector 1) and `Θ_t` (sector 1 → sector 2) — are stored; the
//! optimal value of the remaining blocks is zero, so they are represented
//! implicitly.

use ndarray::{s, Array1, ArrayView1};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::matrixtools::matmul;
use crate::{CMat, CVec, Error, Result};

/// Whether the passive impedance network behind the amplifiers is reciprocal.
///
/// Reciprocity forces `Θ_r` symmetric and couples the back-scattering block to
/// `Θ_tᵀ`, which costs reflecting users extra amplified noise and doubles the
/// `‖Θ_t‖²` static power term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reciprocity {
    #[serde(rename = "reciprocal")]
    Reciprocal,
    #[serde(rename = "non-reciprocal")]
    NonReciprocal,
}

/// Inter-cell circuit topology. Group-connected with group size `G`
/// generalizes the other two: `G = 1` is cell-wise single, `G = M` cell-wise
/// fully connected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    #[serde(rename = "cw-single")]
    CwSingle,
    #[serde(rename = "cw-group")]
    CwGroup,
    #[serde(rename = "cw-fully")]
    CwFully,
}

/// All scenario scalars. Powers are stored in dBm and converted to linear
/// watts once, via [`SystemConfig::power_budget`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Transmit antennas at the base station.
    pub n_tx: usize,
    /// Surface cells `M` (element pairs).
    pub n_cells: usize,
    /// Group size `G`; must divide `n_cells`.
    pub group_size: usize,
    /// Reflecting-side users.
    pub k_r: usize,
    /// Transmitting-side users.
    pub k_t: usize,
    /// Total power budget in dBm, split between transmitter and surface.
    pub p_total_dbm: f64,
    /// Fraction of the total budget given to the transmitter.
    pub tx_fraction: f64,
    /// Surface dynamic-noise power in dBm.
    pub sigma_i_dbm: f64,
    /// Per-user receiver noise power in dBm.
    pub sigma_r_dbm: f64,
    pub reciprocity: Reciprocity,
    pub architecture: Architecture,
}

/// Linear-scale powers derived from a [`SystemConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBudget {
    /// Transmit power budget `P_T` in watts.
    pub p_t: f64,
    /// Surface amplification budget `P_A` in watts.
    pub p_a: f64,
    /// Surface dynamic noise power `σ_I²` in watts.
    pub sigma_i_sq: f64,
    /// User noise power `σ_R²` in watts.
    pub sigma_r_sq: f64,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl SystemConfig {
    pub fn n_users(&self) -> usize {
        self.k_r + self.k_t
    }

    /// Number of groups `Ḡ = M / G`.
    pub fn n_groups(&self) -> usize {
        self.n_cells / self.group_size
    }

    pub fn power_budget(&self) -> PowerBudget {
        let total = dbm_to_watts(self.p_total_dbm);
        PowerBudget {
            p_t: self.tx_fraction * total,
            p_a: (1.0 - self.tx_fraction) * total,
            sigma_i_sq: dbm_to_watts(self.sigma_i_dbm),
            sigma_r_sq: dbm_to_watts(self.sigma_r_dbm),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_tx == 0 || self.n_cells == 0 {
            return err("antenna and cell counts must be positive".into());
        }
        if self.group_size == 0 || self.n_cells % self.group_size != 0 {
            return err(format!(
                "group size {} must divide the cell count {}",
                self.group_size, self.n_cells
            ));
        }
        match self.architecture {
            Architecture::CwSingle if self.group_size != 1 => {
                return err("cw-single requires group size 1".into());
            }
            Architecture::CwFully if self.group_size != self.n_cells => {
                return err("cw-fully requires group size equal to the cell count".into());
            }
            _ => {}
        }
        if self.k_r == 0 || self.k_t == 0 {
            return err("both user sectors must be non-empty".into());
        }
        if !(self.tx_fraction > 0.0 && self.tx_fraction < 1.0) {
            return err(format!(
                "tx_fraction must lie in (0, 1), got {}",
                self.tx_fraction
            ));
        }
        if !self.p_total_dbm.is_finite()
            || !self.sigma_i_dbm.is_finite()
            || !self.sigma_r_dbm.is_finite()
        {
            return err("powers must be finite".into());
        }
        Ok(())
    }
}

/// Which half-space a user sits in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sector {
    #[serde(rename = "reflecting")]
    Reflecting,
    #[serde(rename = "transmitting")]
    Transmitting,
}

/// One realization of all links after path loss and fading.
///
/// Rows of `h_rt` are the direct transmitter→user links (K×N_T), rows of
/// `h_ri` the sector-local surface→user links (K×M), and `h_it` is the
/// transmitter→sector-1 matrix (M×N_T). Cross-sector links and the feed into
/// sector 2 are zero by the blockage assumption and are not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h_rt: CMat,
    pub h_ri: CMat,
    pub h_it: CMat,
    pub user_sector: Vec<Sector>,
}

impl ChannelSet {
    pub fn new(h_rt: CMat, h_ri: CMat, h_it: CMat, k_r: usize) -> Result<Self> {
        let k = h_rt.nrows();
        let n_tx = h_rt.ncols();
        let m = h_it.nrows();
        if h_ri.dim() != (k, m) || h_it.ncols() != n_tx {
            return Err(Error::DimensionMismatch(format!(
                "channel dims inconsistent: h_rt {:?}, h_ri {:?}, h_it {:?}",
                h_rt.dim(),
                h_ri.dim(),
                h_it.dim()
            )));
        }
        if k_r == 0 || k_r >= k {
            return Err(Error::InvalidConfig(format!(
                "reflecting user count {k_r} must satisfy 0 < k_r < {k}"
            )));
        }
        let finite = |m: &CMat| m.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        if !finite(&h_rt) || !finite(&h_ri) || !finite(&h_it) {
            return Err(Error::InvalidConfig("channel entries must be finite".into()));
        }
        let user_sector = (0..k)
            .map(|i| {
                if i < k_r {
                    Sector::Reflecting
                } else {
                    Sector::Transmitting
                }
            })
            .collect();
        Ok(Self {
            h_rt,
            h_ri,
            h_it,
            user_sector,
        })
    }

    pub fn n_users(&self) -> usize {
        self.h_rt.nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.h_rt.ncols()
    }

    pub fn n_cells(&self) -> usize {
        self.h_it.nrows()
    }
}

/// Constraint descriptor carried alongside the scattering pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RisDescriptor {
    pub reciprocity: Reciprocity,
    pub group_size: usize,
}

/// The scattering pair `(Θ_r, Θ_t)`, both `M×M` block-diagonal with blocks of
/// the descriptor's group size.
#[derive(Debug, Clone, PartialEq)]
pub struct RisState {
    pub theta_r: CMat,
    pub theta_t: CMat,
    pub descriptor: RisDescriptor,
}

impl RisState {
    pub fn zeros(m: usize, descriptor: RisDescriptor) -> Self {
        Self {
            theta_r: CMat::zeros((m, m)),
            theta_t: CMat::zeros((m, m)),
            descriptor,
        }
    }

    /// Random architecture-feasible state with i.i.d. Gaussian block entries
    /// (reflecting blocks symmetrized when reciprocal). Not power-scaled.
    pub fn random(m: usize, descriptor: RisDescriptor, rng: &mut impl Rng) -> Self {
        let g = descriptor.group_size;
        assert!(g >= 1 && m % g == 0, "group size must divide cell count");
        let mut theta_r = CMat::zeros((m, m));
        let mut theta_t = CMat::zeros((m, m));
        let draw = |rng: &mut dyn rand::RngCore| {
            Complex64::new(
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
            )
        };
        for g0 in (0..m).step_by(g) {
            for i in g0..g0 + g {
                for j in g0..g0 + g {
                    theta_r[(i, j)] = draw(rng);
                    theta_t[(i, j)] = draw(rng);
                }
            }
        }
        if descriptor.reciprocity == Reciprocity::Reciprocal {
            let tr = theta_r.t().to_owned();
            theta_r = (&theta_r + &tr).mapv(|z| z * 0.5);
        }
        Self {
            theta_r,
            theta_t,
            descriptor,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.theta_r.nrows()
    }

    pub fn scale(&mut self, factor: f64) {
        self.theta_r.mapv_inplace(|z| z * factor);
        self.theta_t.mapv_inplace(|z| z * factor);
    }

    pub fn is_zero(&self) -> bool {
        self.theta_r.iter().all(|z| z.norm_sqr() == 0.0)
            && self.theta_t.iter().all(|z| z.norm_sqr() == 0.0)
    }
}

/// Transmit precoder `F = [f_1 … f_K]`, one column per user.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    pub f: CMat,
}

impl Precoder {
    pub fn new(f: CMat) -> Self {
        Self { f }
    }

    pub fn zeros(n_tx: usize, k: usize) -> Self {
        Self {
            f: CMat::zeros((n_tx, k)),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.f.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn column(&self, k: usize) -> ArrayView1<'_, Complex64> {
        self.f.column(k)
    }
}

/// Result of composing the full `2M×2M` scattering matrix from its passive
/// factors and amplifier gains, partitioned into sector blocks.
#[derive(Debug, Clone)]
pub struct ThetaPartition {
    pub full: CMat,
    m: usize,
}

impl ThetaPartition {
    /// Sector block `Θ_{i,j}` for `i, j ∈ {1, 2}` (1-based sector indices).
    pub fn block(&self, i: usize, j: usize) -> CMat {
        assert!((1..=2).contains(&i) && (1..=2).contains(&j));
        let m = self.m;
        self.full
            .slice(s![(i - 1) * m..i * m, (j - 1) * m..j * m])
            .to_owned()
    }

    /// `Θ_r = Θ_{1,1}`.
    pub fn theta_r(&self) -> CMat {
        self.block(1, 1)
    }

    /// `Θ_t = Θ_{2,1}`.
    pub fn theta_t(&self) -> CMat {
        self.block(2, 1)
    }
}

fn max_abs_dev_from_unitary(phi: &CMat) -> f64 {
    let gram = matmul(&phi.t().mapv(|z| z.conj()), phi);
    let n = gram.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Compose `Θ = Φ_IA · diag(amp) · Φ_AI` for a lossless passive network and
/// partition it into the four sector blocks.
///
/// Both factors must be unitary within `1e-8` and all amplification factors
/// strictly positive.
pub fn assemble_theta(phi_ia: &CMat, amp: &Array1<f64>, phi_ai: &CMat) -> Result<ThetaPartition> {
    let n = phi_ia.nrows();
    if phi_ia.dim() != (n, n) || phi_ai.dim() != (n, n) || n % 2 != 0 || n == 0 {
        return Err(Error::DimensionMismatch(
            "scattering factors must be square 2M×2M matrices".into(),
        ));
    }
    if amp.len() != n {
        return Err(Error::DimensionMismatch(
            "amplification vector must have length 2M".into(),
        ));
    }
    if amp.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::NonPositiveAmplification);
    }
    if max_abs_dev_from_unitary(phi_ia) > 1e-8 {
        return Err(Error::NotUnitary("phi_ia"));
    }
    if max_abs_dev_from_unitary(phi_ai) > 1e-8 {
        return Err(Error::NotUnitary("phi_ai"));
    }
    let mut scaled = phi_ia.clone();
    for (j, &a) in amp.iter().enumerate() {
        scaled.column_mut(j).mapv_inplace(|z| z * a);
    }
    let full = matmul(&scaled, phi_ai);
    Ok(ThetaPartition { full, m: n / 2 })
}

/// A violated architecture constraint, reported by [`validate_ris`].
#[derive(Debug, Clone, PartialEq)]
pub enum RisViolation {
    /// Nonzero entry outside the block-diagonal support.
    Sparsity {
        matrix: &'static str,
        row: usize,
        col: usize,
    },
    /// A reflecting block is not symmetric.
    BlockSymmetry { block: usize },
    /// State dimensions or descriptor do not match the configuration.
    Shape(String),
}

impl std::fmt::Display for RisViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RisViolation::Sparsity { matrix, row, col } => {
                write!(f, "sparsity: {matrix}[{row},{col}] outside block support")
            }
            RisViolation::BlockSymmetry { block } => write!(f, "block {block} symmetry"),
            RisViolation::Shape(msg) => write!(f, "shape: {msg}"),
        }
    }
}

const RIS_STRUCTURE_TOL: f64 = 1e-9;

/// Check block-diagonal sparsity and (for reciprocal networks) per-block
/// symmetry of `Θ_r`, at absolute tolerance `1e-9`.
pub fn validate_ris(ris: &RisState, cfg: &SystemConfig) -> std::result::Result<(), RisViolation> {
    let m = cfg.n_cells;
    let g = cfg.group_size;
    if ris.theta_r.dim() != (m, m) || ris.theta_t.dim() != (m, m) {
        return Err(RisViolation::Shape(format!(
            "state is {:?}, config wants {m}x{m}",
            ris.theta_r.dim()
        )));
    }
    if ris.descriptor.group_size != g || ris.descriptor.reciprocity != cfg.reciprocity {
        return Err(RisViolation::Shape(
            "descriptor disagrees with configuration".into(),
        ));
    }
    for (name, theta) in [("theta_r", &ris.theta_r), ("theta_t", &ris.theta_t)] {
        for i in 0..m {
            for j in 0..m {
                if i / g != j / g && theta[(i, j)].norm() > RIS_STRUCTURE_TOL {
                    return Err(RisViolation::Sparsity {
                        matrix: name,
                        row: i,
                        col: j,
                    });
                }
            }
        }
    }
    if cfg.reciprocity == Reciprocity::Reciprocal {
        for block in 0..cfg.n_groups() {
            let g0 = block * g;
            for i in g0..g0 + g {
                for j in g0..g0 + g {
                    if (ris.theta_r[(i, j)] - ris.theta_r[(j, i)]).norm() > RIS_STRUCTURE_TOL {
                        return Err(RisViolation::BlockSymmetry { block: block + 1 });
                    }
                }
            }
        }
    }
    Ok(())
}

/// Effective downlink rows `h_{w,k} = h_{RT,k} + h_{RI,k} Θ_w H_IT` for all
/// users, stacked K×N_T. `w` follows the user's sector.
pub fn effective_channels(ch: &ChannelSet, ris: &RisState) -> CMat {
    let k = ch.n_users();
    let n_tx = ch.n_tx();
    let cascade_r = matmul(&ris.theta_r, &ch.h_it);
    let cascade_t = matmul(&ris.theta_t, &ch.h_it);
    let mut out = CMat::zeros((k, n_tx));
    for u in 0..k {
        let cascade = match ch.user_sector[u] {
            Sector::Reflecting => &cascade_r,
            Sector::Transmitting => &cascade_t,
        };
        let row = &ch.h_rt.row(u).to_owned() + &ch.h_ri.row(u).dot(cascade);
        out.row_mut(u).assign(&row);
    }
    out
}

/// Effective channel of one user.
pub fn effective_channel(cfg: &SystemConfig, ch: &ChannelSet, ris: &RisState, k: usize) -> CVec {
    assert!(k < cfg.n_users() && k < ch.n_users(), "user index out of range");
    let theta = match ch.user_sector[k] {
        Sector::Reflecting => &ris.theta_r,
        Sector::Transmitting => &ris.theta_t,
    };
    &ch.h_rt.row(k).to_owned() + &ch.h_ri.row(k).dot(theta).dot(&ch.h_it)
}

/// Per-user SINR numerators/denominators plus the diagonal gains `h_{w,k}f_k`.
pub(crate) struct SinrBreakdown {
    /// `A_{w,k} = |h_{w,k} f_k|²`.
    pub a: Vec<f64>,
    /// `B_{w,k}`: interference + amplified noise + receiver noise.
    pub b: Vec<f64>,
    /// `h_{w,k} f_k`.
    pub hf: CVec,
}

pub(crate) fn sinr_breakdown(
    budget: &PowerBudget,
    reciprocity: Reciprocity,
    ch: &ChannelSet,
    ris: &RisState,
    f: &Precoder,
    h_eff: &CMat,
) -> SinrBreakdown {
    let k = ch.n_users();
    let gains = matmul(h_eff, &f.f); // (K users) × (K streams)
    let mut a = vec![0.0; k];
    let mut b = vec![0.0; k];
    let mut hf = CVec::zeros(k);
    for u in 0..k {
        hf[u] = gains[(u, u)];
        a[u] = gains[(u, u)].norm_sqr();
        let interference: f64 = (0..k)
            .filter(|&i| i != u)
            .map(|i| gains[(u, i)].norm_sqr())
            .sum();
        let h_ri = ch.h_ri.row(u);
        let dynamic = match ch.user_sector[u] {
            Sector::Reflecting => {
                let mut d = row_mat_norm_sq(&h_ri, &ris.theta_r);
                if reciprocity == Reciprocity::Reciprocal {
                    // reflecting users also hear the back-scattered sector-2
                    // amplifier noise through Θ_tᵀ
                    d += row_mat_t_norm_sq(&h_ri, &ris.theta_t);
                }
                d
            }
            Sector::Transmitting => row_mat_norm_sq(&h_ri, &ris.theta_t),
        };
        b[u] = interference + budget.sigma_i_sq * dynamic + budget.sigma_r_sq;
    }
    SinrBreakdown { a, b, hf }
}

/// `‖h·Θ‖₂²` for a row `h`.
fn row_mat_norm_sq(h: &ArrayView1<'_, Complex64>, theta: &CMat) -> f64 {
    h.dot(theta).iter().map(|z| z.norm_sqr()).sum()
}

/// `‖h·Θᵀ‖₂² = ‖Θ·hᵀ‖₂²` for a row `h`.
fn row_mat_t_norm_sq(h: &ArrayView1<'_, Complex64>, theta: &CMat) -> f64 {
    theta
        .dot(&h.to_owned())
        .iter()
        .map(|z| z.norm_sqr())
        .sum()
}

/// SINR of user `k` under the current precoder and surface state.
pub fn sinr(cfg: &SystemConfig, ch: &ChannelSet, ris: &RisState, f: &Precoder, k: usize) -> f64 {
    sinr_all(cfg, ch, ris, f)[k]
}

/// SINRs of all users.
pub fn sinr_all(cfg: &SystemConfig, ch: &ChannelSet, ris: &RisState, f: &Precoder) -> Vec<f64> {
    let budget = cfg.power_budget();
    let h_eff = effective_channels(ch, ris);
    let terms = sinr_breakdown(&budget, cfg.reciprocity, ch, ris, f, &h_eff);
    terms
        .a
        .iter()
        .zip(terms.b.iter())
        .map(|(a, b)| a / b)
        .collect()
}

/// Sum rate `Σ_k log₂(1 + γ_k)` in bits/s/Hz.
pub fn sum_rate(cfg: &SystemConfig, ch: &ChannelSet, ris: &RisState, f: &Precoder) -> f64 {
    sinr_all(cfg, ch, ris, f)
        .iter()
        .map(|g| (1.0 + g).log2())
        .sum()
}

/// Power radiated and consumed at the surface:
/// `‖Θ_r H F‖² + ‖Θ_t H F‖² + σ_I²(‖Θ_r‖² + c‖Θ_t‖²)` with `c = 2` for
/// reciprocal networks (the coupled back-scattering block re-radiates the
/// sector-2 amplifier noise) and `c = 1` otherwise.
pub fn ris_power_used(cfg: &SystemConfig, ch: &ChannelSet, ris: &RisState, f: &Precoder) -> f64 {
    let budget = cfg.power_budget();
    ris_power_used_linear(&budget, cfg.reciprocity, ch, ris, f)
}

/// Sum rate evaluated against an explicit linear power budget (the solver
/// path, which may override the configured split).
pub(crate) fn sum_rate_linear(
    budget: &PowerBudget,
    reciprocity: Reciprocity,
    ch: &ChannelSet,
    ris: &RisState,
    f: &Precoder,
) -> f64 {
    let h_eff = effective_channels(ch, ris);
    let terms = sinr_breakdown(budget, reciprocity, ch, ris, f, &h_eff);
    terms
        .a
        .iter()
        .zip(terms.b.iter())
        .map(|(a, b)| (1.0 + a / b).log2())
        .sum()
}

pub(crate) fn ris_power_used_linear(
    budget: &PowerBudget,
    reciprocity: Reciprocity,
    ch: &ChannelSet,
    ris: &RisState,
    f: &Precoder,
) -> f64 {
    let hit_f = matmul(&ch.h_it, &f.f);
    let sig_r: f64 = matmul(&ris.theta_r, &hit_f).iter().map(|z| z.norm_sqr()).sum();
    let sig_t: f64 = matmul(&ris.theta_t, &hit_f).iter().map(|z| z.norm_sqr()).sum();
    let fro_r: f64 = ris.theta_r.iter().map(|z| z.norm_sqr()).sum();
    let fro_t: f64 = ris.theta_t.iter().map(|z| z.norm_sqr()).sum();
    let c = match reciprocity {
        Reciprocity::Reciprocal => 2.0,
        Reciprocity::NonReciprocal => 1.0,
    };
    sig_r + sig_t + budget.sigma_i_sq * (fro_r + c * fro_t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub(crate) fn test_config(
        n_tx: usize,
        m: usize,
        g: usize,
        k_r: usize,
        k_t: usize,
        reciprocity: Reciprocity,
    ) -> SystemConfig {
        let architecture = if g == 1 {
            Architecture::CwSingle
        } else if g == m {
            Architecture::CwFully
        } else {
            Architecture::CwGroup
        };
        SystemConfig {
            n_tx,
            n_cells: m,
            group_size: g,
            k_r,
            k_t,
            p_total_dbm: 30.0,
            tx_fraction: 0.99,
            sigma_i_dbm: -90.0,
            sigma_r_dbm: -90.0,
            reciprocity,
            architecture,
        }
    }

    fn random_cmat(rng: &mut impl Rng, rows: usize, cols: usize) -> CMat {
        CMat::from_shape_fn((rows, cols), |_| {
            c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    fn random_unitary(rng: &mut impl Rng, n: usize) -> CMat {
        let a = random_cmat(rng, n, n);
        let na = nalgebra::DMatrix::from_fn(n, n, |i, j| a[(i, j)]);
        let q = na.qr().q();
        CMat::from_shape_fn((n, n), |(i, j)| q[(i, j)])
    }

    fn random_channels(rng: &mut impl Rng, cfg: &SystemConfig) -> ChannelSet {
        ChannelSet::new(
            random_cmat(rng, cfg.n_users(), cfg.n_tx),
            random_cmat(rng, cfg.n_users(), cfg.n_cells),
            random_cmat(rng, cfg.n_cells, cfg.n_tx),
            cfg.k_r,
        )
        .unwrap()
    }

    #[test]
    fn dbm_conversion() {
        assert_abs_diff_eq!(dbm_to_watts(30.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(dbm_to_watts(0.0), 1e-3, epsilon = 1e-18);
        assert_abs_diff_eq!(dbm_to_watts(-90.0), 1e-12, epsilon = 1e-26);
    }

    #[test]
    fn config_validation_catches_bad_fields() {
        let mut cfg = test_config(4, 8, 2, 2, 2, Reciprocity::Reciprocal);
        assert!(cfg.validate().is_ok());
        cfg.group_size = 3;
        assert!(cfg.validate().is_err());
        cfg.group_size = 2;
        cfg.k_t = 0;
        assert!(cfg.validate().is_err());
        cfg.k_t = 2;
        cfg.tx_fraction = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn assemble_theta_identity_factors() {
        let m = 2;
        let n = 2 * m;
        let eye = CMat::eye(n);
        let amp = Array1::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let part = assemble_theta(&eye, &amp, &eye).unwrap();
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { c(amp[i], 0.0) } else { c(0.0, 0.0) };
                assert_eq!(part.full[(i, j)], expect);
            }
        }
        assert_eq!(part.theta_r()[(0, 0)], c(1.0, 0.0));
        assert_eq!(part.theta_t()[(0, 0)], c(0.0, 0.0));
    }

    #[test]
    fn assemble_theta_reciprocal_factors_give_symmetric_theta() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 6;
        let phi_ai = random_unitary(&mut rng, n);
        let phi_ia = phi_ai.t().to_owned();
        let amp = Array1::from_vec((0..n).map(|i| 0.5 + i as f64).collect());
        let part = assemble_theta(&phi_ia, &amp, &phi_ai).unwrap();
        let full_t = part.full.t().to_owned();
        for (a, b) in part.full.iter().zip(full_t.iter()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn assemble_theta_rejects_bad_inputs() {
        let eye = CMat::eye(4);
        let amp = Array1::from_vec(vec![1.0, 1.0, 1.0, 1.0]);
        let skew = &eye * c(2.0, 0.0);
        assert!(matches!(
            assemble_theta(&skew, &amp, &eye),
            Err(Error::NotUnitary("phi_ia"))
        ));
        let bad_amp = Array1::from_vec(vec![1.0, -1.0, 1.0, 1.0]);
        assert!(matches!(
            assemble_theta(&eye, &bad_amp, &eye),
            Err(Error::NonPositiveAmplification)
        ));
    }

    #[test]
    fn assemble_theta_per_cell_expansion() {
        // Cell-wise single connection: each cell i couples ports {i, M+i}
        // only. The sector blocks must then match the scalar expansion
        //   Θ_{r,i} = Φ_IA[i,i]·A_i·Φ_AI[i,i] + Φ_IA[i,M+i]·A_{M+i}·Φ_AI[M+i,i].
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = 3;
        let n = 2 * m;
        let mut phi_ia = CMat::zeros((n, n));
        let mut phi_ai = CMat::zeros((n, n));
        for i in 0..m {
            let u = random_unitary(&mut rng, 2);
            let v = random_unitary(&mut rng, 2);
            for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let (ra, rb) = (if a == 0 { i } else { m + i }, if b == 0 { i } else { m + i });
                phi_ia[(ra, rb)] = u[(a, b)];
                phi_ai[(ra, rb)] = v[(a, b)];
            }
        }
        let amp = Array1::from_vec((0..n).map(|i| 1.0 + 0.25 * i as f64).collect());
        let part = assemble_theta(&phi_ia, &amp, &phi_ai).unwrap();
        let theta_r = part.theta_r();
        let theta_t = part.theta_t();
        for i in 0..m {
            let r_expect = phi_ia[(i, i)] * amp[i] * phi_ai[(i, i)]
                + phi_ia[(i, m + i)] * amp[m + i] * phi_ai[(m + i, i)];
            let t_expect = phi_ia[(m + i, i)] * amp[i] * phi_ai[(i, i)]
                + phi_ia[(m + i, m + i)] * amp[m + i] * phi_ai[(m + i, i)];
            assert!((theta_r[(i, i)] - r_expect).norm() < 1e-12);
            assert!((theta_t[(i, i)] - t_expect).norm() < 1e-12);
        }
    }

    #[test]
    fn effective_channel_zero_theta_is_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let cfg = test_config(3, 4, 1, 1, 1, Reciprocity::NonReciprocal);
        let ch = random_channels(&mut rng, &cfg);
        let ris = RisState::zeros(
            4,
            RisDescriptor {
                reciprocity: cfg.reciprocity,
                group_size: 1,
            },
        );
        for k in 0..2 {
            let h = effective_channel(&cfg, &ch, &ris, k);
            for (a, b) in h.iter().zip(ch.h_rt.row(k).iter()) {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn effective_channel_scalar_case() {
        let cfg = test_config(1, 1, 1, 1, 1, Reciprocity::NonReciprocal);
        let h_rt = array![[c(0.3, -0.2)], [c(-0.1, 0.4)]];
        let h_ri = array![[c(1.5, 0.5)], [c(0.2, -0.7)]];
        let h_it = array![[c(0.8, 0.1)]];
        let ch = ChannelSet::new(h_rt, h_ri, h_it, 1).unwrap();
        let theta = c(0.6, -1.1);
        let mut ris = RisState::zeros(
            1,
            RisDescriptor {
                reciprocity: cfg.reciprocity,
                group_size: 1,
            },
        );
        ris.theta_r[(0, 0)] = theta;
        ris.theta_t[(0, 0)] = theta;
        for k in 0..2 {
            let got = effective_channel(&cfg, &ch, &ris, k)[0];
            let expect = ch.h_rt[(k, 0)] + theta * ch.h_ri[(k, 0)] * ch.h_it[(0, 0)];
            assert!((got - expect).norm() < 1e-14);
        }
    }

    #[test]
    fn effective_channel_linear_in_theta() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let cfg = test_config(2, 4, 4, 1, 1, Reciprocity::NonReciprocal);
        let ch = random_channels(&mut rng, &cfg);
        let desc = RisDescriptor {
            reciprocity: cfg.reciprocity,
            group_size: 4,
        };
        let ris_a = RisState::random(4, desc, &mut rng);
        let ris_b = RisState::random(4, desc, &mut rng);
        let ris_sum = RisState {
            theta_r: &ris_a.theta_r + &ris_b.theta_r,
            theta_t: &ris_a.theta_t + &ris_b.theta_t,
            descriptor: desc,
        };
        for k in 0..2 {
            let lhs = &(&effective_channel(&cfg, &ch, &ris_a, k)
                + &effective_channel(&cfg, &ch, &ris_b, k))
                - &ch.h_rt.row(k).to_owned();
            let rhs = effective_channel(&cfg, &ch, &ris_sum, k);
            for (a, b) in lhs.iter().zip(rhs.iter()) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn sinr_single_user_matched_filter() {
        // K = 1 forces both sectors non-empty, so use one user per sector and
        // give the transmitting user zero channels: the reflecting user then
        // sees a pure single-user link.
        let cfg = test_config(1, 1, 1, 1, 1, Reciprocity::NonReciprocal);
        let budget = cfg.power_budget();
        let h = c(2.0e-6, 1.0e-6);
        let h_rt = array![[h], [c(0.0, 0.0)]];
        let h_ri = array![[c(0.0, 0.0)], [c(0.0, 0.0)]];
        let h_it = array![[c(0.0, 0.0)]];
        let ch = ChannelSet::new(h_rt, h_ri, h_it, 1).unwrap();
        let ris = RisState::zeros(
            1,
            RisDescriptor {
                reciprocity: cfg.reciprocity,
                group_size: 1,
            },
        );
        // f aligned with h^H, ‖f‖² = P_T, second column zero
        let scale = budget.p_t.sqrt() / h.norm();
        let f = Precoder::new(array![[h.conj() * scale, c(0.0, 0.0)]]);
        let got = sinr(&cfg, &ch, &ris, &f, 0);
        let expect = budget.p_t * h.norm_sqr() / budget.sigma_r_sq;
        assert_abs_diff_eq!(got, expect, epsilon = 1e-9 * expect);
    }

    #[test]
    fn sinr_zero_precoder_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let cfg = test_config(2, 2, 1, 1, 1, Reciprocity::Reciprocal);
        let ch = random_channels(&mut rng, &cfg);
        let ris = RisState::random(
            2,
            RisDescriptor {
                reciprocity: Reciprocity::Reciprocal,
                group_size: 1,
            },
            &mut rng,
        );
        let f = Precoder::zeros(2, 2);
        for k in 0..2 {
            assert_eq!(sinr(&cfg, &ch, &ris, &f, k), 0.0);
        }
        assert_eq!(sum_rate(&cfg, &ch, &ris, &f), 0.0);
    }

    #[test]
    fn reciprocal_reflecting_sinr_never_exceeds_non_reciprocal() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let cfg_r = test_config(2, 4, 4, 1, 1, Reciprocity::Reciprocal);
        let cfg_n = test_config(2, 4, 4, 1, 1, Reciprocity::NonReciprocal);
        let ch = random_channels(&mut rng, &cfg_r);
        // identical (Θ_r, Θ_t ≠ 0) evaluated under both reciprocity branches
        let desc_r = RisDescriptor {
            reciprocity: Reciprocity::Reciprocal,
            group_size: 4,
        };
        let mut state = RisState::random(4, desc_r, &mut rng);
        state.scale(1e-3);
        let f = Precoder::new(random_cmat(&mut rng, 2, 2).mapv(|z| z * 10.0));
        let gamma_recip = sinr(&cfg_r, &ch, &state, &f, 0);
        let mut state_n = state.clone();
        state_n.descriptor.reciprocity = Reciprocity::NonReciprocal;
        let gamma_non = sinr(&cfg_n, &ch, &state_n, &f, 0);
        assert!(gamma_recip <= gamma_non);
        // transmitting user unaffected by the branch
        let t_recip = sinr(&cfg_r, &ch, &state, &f, 1);
        let t_non = sinr(&cfg_n, &ch, &state_n, &f, 1);
        assert_abs_diff_eq!(t_recip, t_non, epsilon = 1e-12 * t_non.abs());
    }

    #[test]
    fn sum_rate_two_symmetric_orthogonal_users() {
        let cfg = test_config(2, 1, 1, 1, 1, Reciprocity::NonReciprocal);
        let budget = cfg.power_budget();
        let h = 1e-6;
        let h_rt = array![[c(h, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(h, 0.0)]];
        let h_ri = CMat::zeros((2, 1));
        let h_it = CMat::zeros((1, 2));
        let ch = ChannelSet::new(h_rt, h_ri, h_it, 1).unwrap();
        let ris = RisState::zeros(
            1,
            RisDescriptor {
                reciprocity: cfg.reciprocity,
                group_size: 1,
            },
        );
        let amp = (budget.p_t / 2.0).sqrt();
        let f = Precoder::new(array![
            [c(amp, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(amp, 0.0)]
        ]);
        let g0 = sinr(&cfg, &ch, &ris, &f, 0);
        let g1 = sinr(&cfg, &ch, &ris, &f, 1);
        assert_abs_diff_eq!(g0, g1, epsilon = 1e-12 * g0);
        let total = sum_rate(&cfg, &ch, &ris, &f);
        assert_abs_diff_eq!(total, 2.0 * (1.0 + g0).log2(), epsilon = 1e-10);
    }

    #[test]
    fn ris_power_zero_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cfg = test_config(2, 2, 1, 1, 1, Reciprocity::Reciprocal);
        let ch = random_channels(&mut rng, &cfg);
        let ris = RisState::zeros(
            2,
            RisDescriptor {
                reciprocity: Reciprocity::Reciprocal,
                group_size: 1,
            },
        );
        let f = Precoder::new(random_cmat(&mut rng, 2, 2));
        assert_eq!(ris_power_used(&cfg, &ch, &ris, &f), 0.0);
    }

    #[test]
    fn ris_power_reciprocal_doubles_static_transmit_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let cfg_r = test_config(2, 2, 2, 1, 1, Reciprocity::Reciprocal);
        let cfg_n = test_config(2, 2, 2, 1, 1, Reciprocity::NonReciprocal);
        let ch = random_channels(&mut rng, &cfg_r);
        let f = Precoder::zeros(2, 2);
        let mut ris = RisState::zeros(
            2,
            RisDescriptor {
                reciprocity: Reciprocity::Reciprocal,
                group_size: 2,
            },
        );
        ris.theta_t = random_cmat(&mut rng, 2, 2);
        let p_recip = ris_power_used(&cfg_r, &ch, &ris, &f);
        ris.descriptor.reciprocity = Reciprocity::NonReciprocal;
        let p_non = ris_power_used(&cfg_n, &ch, &ris, &f);
        assert_abs_diff_eq!(p_recip, 2.0 * p_non, epsilon = 1e-12 * p_recip);
    }

    #[test]
    fn ris_power_matches_unpartitioned_form() {
        // Embed (Θ_r, Θ_t) into the full 2M×2M scattering matrix with the
        // eliminated blocks at their optimal values and evaluate the raw
        // constraint ‖Θ H̄_IT F‖² + σ_I²‖Θ‖² directly.
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let m = 3;
        for recip in [Reciprocity::Reciprocal, Reciprocity::NonReciprocal] {
            let cfg = test_config(2, m, m, 1, 1, recip);
            let budget = cfg.power_budget();
            let ch = random_channels(&mut rng, &cfg);
            let desc = RisDescriptor {
                reciprocity: recip,
                group_size: m,
            };
            let ris = RisState::random(m, desc, &mut rng);
            let f = Precoder::new(random_cmat(&mut rng, 2, 2));

            let mut theta_full = CMat::zeros((2 * m, 2 * m));
            for i in 0..m {
                for j in 0..m {
                    theta_full[(i, j)] = ris.theta_r[(i, j)];
                    theta_full[(m + i, j)] = ris.theta_t[(i, j)];
                    if recip == Reciprocity::Reciprocal {
                        // Θ_{1,2} = Θ_{2,1}ᵀ is forced by reciprocity
                        theta_full[(i, m + j)] = ris.theta_t[(j, i)];
                    }
                }
            }
            let mut h_it_bar = CMat::zeros((2 * m, 2));
            h_it_bar.slice_mut(s![0..m, ..]).assign(&ch.h_it);
            let signal: f64 = theta_full
                .dot(&h_it_bar)
                .dot(&f.f)
                .iter()
                .map(|z| z.norm_sqr())
                .sum();
            let fro: f64 = theta_full.iter().map(|z| z.norm_sqr()).sum();
            let raw = signal + budget.sigma_i_sq * fro;
            let modeled = ris_power_used(&cfg, &ch, &ris, &f);
            assert_abs_diff_eq!(raw, modeled, epsilon = 1e-10 * raw.abs());
        }
    }

    #[test]
    fn ris_power_invariant_under_symbol_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let cfg = test_config(3, 2, 2, 1, 1, Reciprocity::NonReciprocal);
        let ch = random_channels(&mut rng, &cfg);
        let ris = RisState::random(
            2,
            RisDescriptor {
                reciprocity: Reciprocity::NonReciprocal,
                group_size: 2,
            },
            &mut rng,
        );
        let f = Precoder::new(random_cmat(&mut rng, 3, 2));
        let u = random_unitary(&mut rng, 2);
        let f_rot = Precoder::new(f.f.dot(&u));
        let p0 = ris_power_used(&cfg, &ch, &ris, &f);
        let p1 = ris_power_used(&cfg, &ch, &ris, &f_rot);
        assert_abs_diff_eq!(p0, p1, epsilon = 1e-10 * p0.abs());
    }

    #[test]
    fn sum_rate_invariant_under_per_user_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cfg = test_config(3, 2, 1, 1, 1, Reciprocity::Reciprocal);
        let ch = random_channels(&mut rng, &cfg);
        let ris = RisState::random(
            2,
            RisDescriptor {
                reciprocity: Reciprocity::Reciprocal,
                group_size: 1,
            },
            &mut rng,
        );
        let f = Precoder::new(random_cmat(&mut rng, 3, 2));
        let mut f_rot = f.f.clone();
        for (k, phase) in [0.7, -2.1].iter().enumerate() {
            let rot = Complex64::from_polar(1.0, *phase);
            f_rot.column_mut(k).mapv_inplace(|z| z * rot);
        }
        let r0 = sum_rate(&cfg, &ch, &ris, &f);
        let r1 = sum_rate(&cfg, &ch, &ris, &Precoder::new(f_rot));
        assert_abs_diff_eq!(r0, r1, epsilon = 1e-10 * r0.max(1.0));
    }

    #[test]
    fn sinr_with_zero_ris_matches_ris_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let cfg = test_config(2, 3, 1, 1, 2, Reciprocity::Reciprocal);
        let ch = random_channels(&mut rng, &cfg);
        let ris = RisState::zeros(
            3,
            RisDescriptor {
                reciprocity: Reciprocity::Reciprocal,
                group_size: 1,
            },
        );
        let budget = cfg.power_budget();
        let f = Precoder::new(random_cmat(&mut rng, 2, 3));
        for k in 0..3 {
            let gamma = sinr(&cfg, &ch, &ris, &f, k);
            // RIS-free: direct rows only
            let hk = ch.h_rt.row(k);
            let a = hk.dot(&f.column(k)).norm_sqr();
            let interf: f64 = (0..3)
                .filter(|&i| i != k)
                .map(|i| hk.dot(&f.column(i)).norm_sqr())
                .sum();
            let expect = a / (interf + budget.sigma_r_sq);
            assert_abs_diff_eq!(gamma, expect, epsilon = 1e-10 * expect.abs());
        }
    }

    #[test]
    fn validate_ris_examples() {
        let cfg1 = test_config(2, 4, 1, 1, 1, Reciprocity::Reciprocal);
        let ok = RisState::zeros(
            4,
            RisDescriptor {
                reciprocity: Reciprocity::Reciprocal,
                group_size: 1,
            },
        );
        assert!(validate_ris(&ok, &cfg1).is_ok());

        let cfg2 = test_config(2, 4, 2, 1, 1, Reciprocity::Reciprocal);
        let desc2 = RisDescriptor {
            reciprocity: Reciprocity::Reciprocal,
            group_size: 2,
        };
        let mut asym = RisState::zeros(4, desc2);
        asym.theta_r[(0, 1)] = c(1.0, 0.0);
        asym.theta_r[(1, 0)] = c(0.5, 0.0);
        assert_eq!(
            validate_ris(&asym, &cfg2),
            Err(RisViolation::BlockSymmetry { block: 1 })
        );

        let mut sparse = RisState::zeros(4, desc2);
        sparse.theta_t[(0, 3)] = c(1e-6, 0.0);
        let report = validate_ris(&sparse, &cfg2).unwrap_err();
        assert!(matches!(report, RisViolation::Sparsity { .. }));
        assert!(report.to_string().contains("sparsity"));
    }
}
