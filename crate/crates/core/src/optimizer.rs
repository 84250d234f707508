//! Joint transmit precoding and surface design by block coordinate descent.
//!
//! The sum-rate objective is lifted with the Lagrangian dual transform
//! (auxiliaries ι) and the quadratic transform (auxiliaries τ), after which
//! each block has a closed-form or budget-constrained closed-form maximizer:
//!
//! - ι*: the current SINRs; τ*: matched ratios of effective gains,
//! - the precoder: a regularized MMSE-like solve with two multipliers found
//!   by grid search over the transmit and amplification budgets,
//! - the surface blocks: convex QCQPs in (half-)vectorized coordinates,
//!   solved by a single multiplier bisection against the amplification
//!   budget. Reciprocal surfaces update `Θ_r` (duplication-matrix
//!   coordinates) and `Θ_t` in turn; non-reciprocal surfaces update both
//!   jointly through per-group stacking.
//!
//! Every accepted step keeps the previous block value as a fallback
//! candidate, so the surrogate objective never decreases and the true sum
//! rate is non-decreasing across sweeps.

use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::s;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrixtools::{
    hermitianize, kron, matmul, unvec, unvech_symmetric, vec_mat, DuplicationMatrix,
    KronRegularizedSolver, RegularizedSolver,
};
use crate::model::{
    self, effective_channels, ris_power_used_linear, sinr_breakdown, ChannelSet, PowerBudget,
    Precoder, Reciprocity, RisDescriptor, RisState, SinrBreakdown, SystemConfig,
};
use crate::{CMat, CVec, Error, Result};

/// Termination and restart controls for [`bcd_solve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Maximum number of full BCD sweeps.
    pub max_sweeps: usize,
    /// Relative sum-rate change below which the loop stops.
    pub tolerance: f64,
    /// Number of random restarts (best final objective wins).
    pub starts: usize,
    /// Seed for the restart initializations.
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 200,
            tolerance: 1e-4,
            starts: 3,
            seed: 0,
        }
    }
}

/// Final multiplier values of the last accepted block updates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub precoder_tx: Option<f64>,
    pub precoder_amp: Option<f64>,
    pub theta_r: Option<f64>,
    pub theta_t: Option<f64>,
    pub theta_joint: Option<f64>,
}

/// Constraint slack of the returned iterate, in watts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSlacks {
    pub tx_power: f64,
    pub ris_power: f64,
}

/// Per-solve diagnostics: objective trace, timings, multipliers, and
/// operation counters scaled by the per-block complexity terms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    /// Sum rate after each completed sweep (bits/s/Hz).
    pub objective_trace: Vec<f64>,
    /// Completed sweeps.
    pub iterations: usize,
    pub converged: bool,
    /// Index of the winning restart.
    pub best_start: usize,
    pub block_timing_ms: BTreeMap<String, f64>,
    pub multipliers: Multipliers,
    /// Slack of the returned iterate.
    pub slacks: ConstraintSlacks,
    /// `[transmit, surface]` power slack after every sweep, in watts.
    pub slack_trace: Vec<[f64; 2]>,
    pub counters: BTreeMap<String, u64>,
}

/// Solver output: the surface state, the precoder, and diagnostics.
#[derive(Debug, Clone)]
pub struct Solution {
    pub ris: RisState,
    pub precoder: Precoder,
    pub report: SolveReport,
}

impl Solution {
    pub fn sum_rate(&self) -> f64 {
        *self.report.objective_trace.last().unwrap_or(&0.0)
    }
}

#[derive(Debug, Default, Clone)]
struct Counters {
    sweeps: u64,
    grid_evals: u64,
    bisect_r: u64,
    bisect_t: u64,
    bisect_joint: u64,
    flops_aux: u64,
    flops_precoder: u64,
    flops_theta: u64,
}

impl Counters {
    fn into_map(self) -> BTreeMap<String, u64> {
        let mut m = BTreeMap::new();
        m.insert("bisect_iters_theta_joint".into(), self.bisect_joint);
        m.insert("bisect_iters_theta_r".into(), self.bisect_r);
        m.insert("bisect_iters_theta_t".into(), self.bisect_t);
        m.insert("model_flops_aux_k2m2".into(), self.flops_aux);
        m.insert("model_flops_precoder".into(), self.flops_precoder);
        m.insert("model_flops_theta".into(), self.flops_theta);
        m.insert("precoder_grid_evals".into(), self.grid_evals);
        m.insert("sweeps".into(), self.sweeps);
        m
    }
}

/// Auxiliary vectors and the assembled quadratic forms of one BCD pass.
#[derive(Debug, Clone)]
pub struct FpWorkspace {
    /// Dual-transform auxiliaries, one per user (equal to the SINRs at the
    /// optimum).
    pub iota: Vec<f64>,
    /// Quadratic-transform auxiliaries.
    pub tau: Vec<Complex64>,
    /// Linear surface coefficients `E_w = C_w − D_w`.
    pub e_r: CMat,
    pub e_t: CMat,
    /// Per-sector user Gramians `Q_w = Σ_k |τ_k|² h_RI,kᴴ h_RI,k`.
    pub q_r: CMat,
    pub q_t: CMat,
    /// `P = H_IT F Fᴴ H_ITᴴ + σ_I² I`.
    pub p: CMat,
    /// Cached `H_IT F`.
    pub hit_f: CMat,
    pub sigma_i_sq: f64,
}

impl FpWorkspace {
    pub fn new(n_users: usize, n_cells: usize, sigma_i_sq: f64) -> Self {
        Self {
            iota: vec![0.0; n_users],
            tau: vec![Complex64::default(); n_users],
            e_r: CMat::zeros((n_cells, n_cells)),
            e_t: CMat::zeros((n_cells, n_cells)),
            q_r: CMat::zeros((n_cells, n_cells)),
            q_t: CMat::zeros((n_cells, n_cells)),
            p: CMat::zeros((n_cells, n_cells)),
            hit_f: CMat::zeros((n_cells, n_users)),
            sigma_i_sq,
        }
    }

    /// ι*_k = γ_k.
    pub fn update_iota(
        &mut self,
        cfg: &SystemConfig,
        ch: &ChannelSet,
        ris: &RisState,
        f: &Precoder,
    ) {
        let budget = cfg.power_budget();
        let h_eff = effective_channels(ch, ris);
        let terms = sinr_breakdown(&budget, cfg.reciprocity, ch, ris, f, &h_eff);
        self.update_iota_from(&terms);
    }

    pub(crate) fn update_iota_from(&mut self, terms: &SinrBreakdown) {
        for (k, (a, b)) in terms.a.iter().zip(terms.b.iter()).enumerate() {
            self.iota[k] = a / b;
        }
    }

    /// τ*_k = √(1+ι_k)·h_{w,k}f_k / (A_{w,k}+B_{w,k}).
    pub fn update_tau(
        &mut self,
        cfg: &SystemConfig,
        ch: &ChannelSet,
        ris: &RisState,
        f: &Precoder,
    ) {
        let budget = cfg.power_budget();
        let h_eff = effective_channels(ch, ris);
        let terms = sinr_breakdown(&budget, cfg.reciprocity, ch, ris, f, &h_eff);
        self.update_tau_from(&terms);
    }

    pub(crate) fn update_tau_from(&mut self, terms: &SinrBreakdown) {
        for k in 0..self.tau.len() {
            let denom = terms.a[k] + terms.b[k];
            self.tau[k] = if denom > 0.0 {
                terms.hf[k] * (1.0 + self.iota[k]).sqrt() / denom
            } else {
                Complex64::default()
            };
        }
    }

    /// Rebuild `E_w`, `Q_w`, `P`, and the cached `H_IT F` for the current
    /// auxiliaries and precoder.
    pub fn refresh_quadratics(&mut self, ch: &ChannelSet, f: &Precoder) {
        let m = ch.n_cells();
        let k = ch.n_users();
        self.hit_f = matmul(&ch.h_it, &f.f);
        self.p = hermitianize(&matmul(&self.hit_f, &self.hit_f.t().mapv(|z| z.conj()).to_owned()));
        for i in 0..m {
            self.p[(i, i)] += Complex64::new(self.sigma_i_sq, 0.0);
        }
        let mut c_r = CMat::zeros((m, m));
        let mut c_t = CMat::zeros((m, m));
        let mut d_r = CMat::zeros((m, m));
        let mut d_t = CMat::zeros((m, m));
        let mut q_r = CMat::zeros((m, m));
        let mut q_t = CMat::zeros((m, m));
        for u in 0..k {
            let tau = self.tau[u];
            let tau_sq = tau.norm_sqr();
            let lin = tau.conj() * (1.0 + self.iota[u]).sqrt();
            let h_ri = ch.h_ri.row(u);
            // column H_IT f_u
            let hit_fu = self.hit_f.column(u);
            // column H_IT F Fᴴ h_RT,uᴴ = hit_f · conj(h_RT,u F)
            let hrt_f = ch.h_rt.row(u).dot(&f.f);
            let v: CVec = self.hit_f.dot(&hrt_f.mapv(|z| z.conj()));
            let (c_w, d_w, q_w) = match ch.user_sector[u] {
                model::Sector::Reflecting => (&mut c_r, &mut d_r, &mut q_r),
                model::Sector::Transmitting => (&mut c_t, &mut d_t, &mut q_t),
            };
            for i in 0..m {
                for j in 0..m {
                    c_w[(i, j)] += lin * hit_fu[i] * h_ri[j];
                    d_w[(i, j)] += tau_sq * v[i] * h_ri[j];
                    q_w[(i, j)] += tau_sq * h_ri[i].conj() * h_ri[j];
                }
            }
        }
        self.e_r = &c_r - &d_r;
        self.e_t = &c_t - &d_t;
        self.q_r = q_r;
        self.q_t = q_t;
    }
}

/// Dual-transform surrogate
/// `f_ι = Σ_k log₂(1+ι_k) − ι_k + (1+ι_k)A_k/(A_k+B_k)`.
pub fn fp_dual_objective(
    cfg: &SystemConfig,
    ch: &ChannelSet,
    ris: &RisState,
    f: &Precoder,
    iota: &[f64],
) -> f64 {
    let budget = cfg.power_budget();
    let h_eff = effective_channels(ch, ris);
    let terms = sinr_breakdown(&budget, cfg.reciprocity, ch, ris, f, &h_eff);
    iota.iter()
        .enumerate()
        .map(|(k, &i)| {
            (1.0 + i).log2() - i + (1.0 + i) * terms.a[k] / (terms.a[k] + terms.b[k])
        })
        .sum()
}

/// Quadratic-transform surrogate
/// `f_τ = Σ_k log₂(1+ι_k) − ι_k + 2√(1+ι_k)·Re{τ_k* h_k f_k} − |τ_k|²(A_k+B_k)`.
pub fn fp_quadratic_objective(
    cfg: &SystemConfig,
    ch: &ChannelSet,
    ris: &RisState,
    f: &Precoder,
    iota: &[f64],
    tau: &[Complex64],
) -> f64 {
    let budget = cfg.power_budget();
    let h_eff = effective_channels(ch, ris);
    let terms = sinr_breakdown(&budget, cfg.reciprocity, ch, ris, f, &h_eff);
    iota.iter()
        .zip(tau.iter())
        .enumerate()
        .map(|(k, (&i, t))| {
            (1.0 + i).log2() - i + 2.0 * (1.0 + i).sqrt() * (t.conj() * terms.hf[k]).re
                - t.norm_sqr() * (terms.a[k] + terms.b[k])
        })
        .sum()
}

const FEAS_REL_TOL: f64 = 1e-6;

fn fro_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Residual amplification budget once static noise re-radiation is paid:
/// `P̄_A = P_A − σ_I²(‖Θ_r‖² + c‖Θ_t‖²)`.
fn residual_signal_budget(budget: &PowerBudget, sigma_i_sq: f64, ris: &RisState) -> f64 {
    let c = match ris.descriptor.reciprocity {
        Reciprocity::Reciprocal => 2.0,
        Reciprocity::NonReciprocal => 1.0,
    };
    budget.p_a - sigma_i_sq * (fro_sq(&ris.theta_r) + c * fro_sq(&ris.theta_t))
}

/// Solve `(A + ridge·I) X = B` column-wise for Hermitian PSD `A`.
fn solve_columns_ridged(a: &CMat, b: &CMat) -> Result<CMat> {
    let n = a.nrows();
    let mut shifted = hermitianize(a);
    let trace: f64 = (0..n).map(|i| shifted[(i, i)].re).sum();
    let ridge = 1e-12 * trace.max(f64::MIN_POSITIVE) / n as f64;
    for i in 0..n {
        shifted[(i, i)] += Complex64::new(ridge, 0.0);
    }
    let chol = crate::matrixtools::to_na(&shifted)
        .cholesky()
        .ok_or(Error::SingularSystem)?;
    let solved = chol.solve(&crate::matrixtools::to_na(b));
    Ok(crate::matrixtools::from_na(&solved))
}

struct PrecoderCandidateCtx<'a> {
    a0: CMat,
    b_amp: CMat,
    rhs: CMat,
    lin_weight: Vec<f64>,
    hbar: &'a CMat,
    theta_hit: CMat,
    p_t: f64,
    p_bar_a: f64,
}

impl PrecoderCandidateCtx<'_> {
    fn objective(&self, f: &CMat) -> f64 {
        let gains = matmul(self.hbar, f);
        let lin: f64 = (0..f.ncols())
            .map(|k| self.lin_weight[k] * gains[(k, k)].re)
            .sum();
        let quad: f64 = f
            .iter()
            .zip(matmul(&self.a0, f).iter())
            .map(|(x, ax)| (x.conj() * ax).re)
            .sum();
        2.0 * lin - quad
    }

    fn feasible(&self, f: &CMat) -> bool {
        if fro_sq(f) > self.p_t * (1.0 + FEAS_REL_TOL) {
            return false;
        }
        let amp = fro_sq(&matmul(&self.theta_hit, f));
        amp <= self.p_bar_a * (1.0 + FEAS_REL_TOL) + 1e-30
    }

    /// Project an infeasible candidate back by uniform scaling; both
    /// constraint quantities are quadratic in the scale, so the result is
    /// feasible with one binding constraint.
    fn project(&self, f: CMat) -> CMat {
        let mut s: f64 = 1.0;
        let tx = fro_sq(&f);
        if tx > self.p_t {
            s = s.min((self.p_t / tx).sqrt());
        }
        let amp = fro_sq(&matmul(&self.theta_hit, &f));
        if amp > self.p_bar_a {
            s = s.min(if amp > 0.0 {
                (self.p_bar_a / amp).sqrt()
            } else {
                1.0
            });
        }
        if s < 1.0 {
            f.mapv(|z| z * s)
        } else {
            f
        }
    }

    fn candidate_raw(&self, l1: f64, l2: f64) -> Result<CMat> {
        let n = self.a0.nrows();
        let mut a = self.a0.clone();
        for i in 0..n {
            a[(i, i)] += Complex64::new(l1, 0.0);
        }
        if l2 != 0.0 {
            a = &a + &self.b_amp.mapv(|z| z * l2);
        }
        solve_columns_ridged(&a, &self.rhs)
    }
}

/// Result of one precoder block update.
#[derive(Debug, Clone)]
pub struct PrecoderUpdate {
    pub precoder: Precoder,
    pub multipliers: Multipliers,
    /// Linear systems solved during the multiplier search (`I_grid`).
    pub candidates_evaluated: u64,
}

/// Precoder block update: the two-multiplier regularized solve of the
/// transformed problem, with `(0,0)` tried first and a logarithmic grid plus
/// one refinement pass otherwise. The previous precoder is always retained as
/// a fallback candidate, so the surrogate objective cannot decrease.
///
/// Fails with [`Error::InfeasibleRisBudget`] when static noise re-radiation
/// alone exceeds the amplification budget.
pub fn update_precoder(
    ws: &FpWorkspace,
    ch: &ChannelSet,
    ris: &RisState,
    budget: &PowerBudget,
    h_eff: &CMat,
    prev: &Precoder,
) -> Result<PrecoderUpdate> {
    let k = ch.n_users();
    let n_tx = ch.n_tx();
    let p_bar_a = residual_signal_budget(budget, ws.sigma_i_sq, ris);
    if p_bar_a < -1e-12 * budget.p_a.max(f64::MIN_POSITIVE) {
        return Err(Error::InfeasibleRisBudget(p_bar_a));
    }
    let p_bar_a = p_bar_a.max(0.0);

    // h̄_k = τ_k* h_{w,k}
    let mut hbar = h_eff.clone();
    for (u, row) in hbar.rows_mut().into_iter().enumerate() {
        let t = ws.tau[u].conj();
        let mut row = row;
        row.mapv_inplace(|z| z * t);
    }
    let hbar_h = hbar.t().mapv(|z| z.conj()).to_owned();
    let a0 = hermitianize(&matmul(&hbar_h, &hbar));
    // stacked surface response [Θ_r; Θ_t]·H_IT
    let m = ch.n_cells();
    let mut theta_stack = CMat::zeros((2 * m, m));
    theta_stack.slice_mut(s![0..m, ..]).assign(&ris.theta_r);
    theta_stack.slice_mut(s![m..2 * m, ..]).assign(&ris.theta_t);
    let theta_hit = matmul(&theta_stack, &ch.h_it);
    let b_amp = hermitianize(&matmul(&theta_hit.t().mapv(|z| z.conj()), &theta_hit));

    let lin_weight: Vec<f64> = ws.iota.iter().map(|i| (1.0 + i).sqrt()).collect();
    let mut rhs = CMat::zeros((n_tx, k));
    for u in 0..k {
        let col = hbar.row(u).mapv(|z| z.conj() * lin_weight[u]);
        rhs.column_mut(u).assign(&col);
    }

    let ctx = PrecoderCandidateCtx {
        a0,
        b_amp,
        rhs,
        lin_weight,
        hbar: &hbar,
        theta_hit,
        p_t: budget.p_t,
        p_bar_a,
    };

    let mut multipliers = Multipliers::default();
    let mut evals: u64 = 1;

    // Unconstrained stationary point first: if feasible it is optimal.
    if let Ok(f0) = ctx.candidate_raw(0.0, 0.0) {
        if ctx.feasible(&f0) {
            multipliers.precoder_tx = Some(0.0);
            multipliers.precoder_amp = Some(0.0);
            return Ok(PrecoderUpdate {
                precoder: Precoder::new(f0),
                multipliers,
                candidates_evaluated: evals,
            });
        }
    }

    let coarse: Vec<f64> = (0..25)
        .map(|i| 1e-8 * 10f64.powf(16.0 * i as f64 / 24.0))
        .collect();
    let mut best: Option<(f64, f64, f64, CMat)> = None; // (obj, l1, l2, F)
    let scan = |l1: f64, l2: f64, best: &mut Option<(f64, f64, f64, CMat)>,
                evals: &mut u64| {
        *evals += 1;
        if let Ok(f_raw) = ctx.candidate_raw(l1, l2) {
            let f = ctx.project(f_raw);
            if ctx.feasible(&f) {
                let obj = ctx.objective(&f);
                if best.as_ref().is_none_or(|(o, ..)| obj > *o) {
                    *best = Some((obj, l1, l2, f));
                }
            }
        }
    };
    for &l1 in &coarse {
        for &l2 in &coarse {
            scan(l1, l2, &mut best, &mut evals);
        }
    }
    if let Some((c1, c2)) = best.as_ref().map(|(_, l1, l2, _)| (*l1, *l2)) {
        // one refinement pass: 9×9 inside a factor-10 window of the best cell
        let refine = |center: f64| -> Vec<f64> {
            (0..9)
                .map(|i| center * 10f64.powf(i as f64 / 4.0 - 1.0))
                .collect()
        };
        for l1 in refine(c1) {
            for &l2 in refine(c2).iter() {
                scan(l1, l2, &mut best, &mut evals);
            }
        }
    }

    let prev_obj = ctx.objective(&prev.f);
    let (precoder, multipliers) = match best {
        Some((obj, l1, l2, f)) if obj > prev_obj => {
            multipliers.precoder_tx = Some(l1);
            multipliers.precoder_amp = Some(l2);
            (Precoder::new(f), multipliers)
        }
        _ => (prev.clone(), multipliers),
    };
    Ok(PrecoderUpdate {
        precoder,
        multipliers,
        candidates_evaluated: evals,
    })
}

/// Outcome of one budgeted QCQP solve.
#[derive(Debug, Clone, Copy)]
pub struct BisectStats {
    pub lambda: f64,
    pub iters: u64,
}

const BUDGET_REL_TOL: f64 = 1e-8;
const LAMBDA_CAP: f64 = (1u64 << 60) as f64;

/// Bisection on the multiplier: `power` must be non-increasing. Returns λ = 0
/// when the unconstrained solution already fits the budget, otherwise drives
/// `|power(λ) − budget|` below `1e-8·budget`.
fn bisect_multiplier(power: impl Fn(f64) -> f64, budget: f64) -> (f64, u64) {
    let mut iters = 0u64;
    if power(0.0) <= budget * (1.0 + 1e-12) {
        return (0.0, iters);
    }
    let mut hi = 1.0f64;
    while power(hi) > budget && hi < LAMBDA_CAP {
        hi *= 2.0;
        iters += 1;
    }
    let mut lo = 0.0f64;
    let mut mid = hi;
    for _ in 0..260 {
        mid = 0.5 * (lo + hi);
        iters += 1;
        let p = power(mid);
        if (p - budget).abs() <= BUDGET_REL_TOL * budget {
            return (mid, iters);
        }
        if p > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (mid, iters)
}

/// Closed-form budgeted QCQP: maximize `2Re{eᴴθ} − θᴴQ̄θ` over
/// `θᴴP̄θ ≤ budget` via `θ(λ) = (Q̄+λP̄)⁻¹e` and multiplier bisection.
pub fn solve_budgeted_qcqp(q: &CMat, p: &CMat, e: &CVec, budget: f64) -> Result<(CVec, BisectStats)> {
    if budget <= 0.0 {
        return Ok((
            CVec::zeros(e.len()),
            BisectStats {
                lambda: 0.0,
                iters: 0,
            },
        ));
    }
    let solver = RegularizedSolver::new(q, p, e)?;
    let (lambda, iters) = bisect_multiplier(|l| solver.power(l), budget);
    Ok((solver.solve(lambda), BisectStats { lambda, iters }))
}

fn solve_budgeted_qcqp_kron(
    q: &CMat,
    p: &CMat,
    e_h: &CMat,
    budget: f64,
) -> Result<(CMat, BisectStats)> {
    if budget <= 0.0 {
        return Ok((
            CMat::zeros(e_h.dim()),
            BisectStats {
                lambda: 0.0,
                iters: 0,
            },
        ));
    }
    let solver = KronRegularizedSolver::new(q, p, e_h)?;
    let (lambda, iters) = bisect_multiplier(|l| solver.power(l), budget);
    Ok((solver.solve(lambda), BisectStats { lambda, iters }))
}

fn block(m: &CMat, g: usize, a: usize, b: usize) -> CMat {
    m.slice(s![a * g..(a + 1) * g, b * g..(b + 1) * g]).to_owned()
}

/// Assemble the reciprocal `Θ_r` QCQP in duplication-matrix coordinates:
/// `Q̄` blocks `Dᵀ(P_{g',g}ᵀ ⊗ Q_{r,g,g'})D`, block-diagonal `P̄` with
/// `Dᵀ(P_{g,g}ᵀ ⊗ I)D`, and the stacked linear term.
pub fn assemble_theta_r_system(ws: &FpWorkspace, g: usize) -> (CMat, CMat, CVec) {
    let m = ws.p.nrows();
    let n_g = m / g;
    let dup = DuplicationMatrix::new(g).expect("group size >= 1");
    let l = dup.vech_len();
    let dim = n_g * l;
    let eye_g = CMat::eye(g);
    let mut q_bar = CMat::zeros((dim, dim));
    let mut p_bar = CMat::zeros((dim, dim));
    let mut e = CVec::zeros(dim);
    for a in 0..n_g {
        for b in 0..n_g {
            let p_ba_t = block(&ws.p, g, b, a).t().to_owned();
            let q_ab = block(&ws.q_r, g, a, b);
            let compressed = dup.compress(&kron(&p_ba_t, &q_ab));
            q_bar
                .slice_mut(s![a * l..(a + 1) * l, b * l..(b + 1) * l])
                .assign(&compressed);
        }
        let p_aa_t = block(&ws.p, g, a, a).t().to_owned();
        let pg = dup.compress(&kron(&p_aa_t, &eye_g));
        p_bar
            .slice_mut(s![a * l..(a + 1) * l, a * l..(a + 1) * l])
            .assign(&pg);
        let e_block = block(&ws.e_r, g, a, a).t().mapv(|z| z.conj()).to_owned();
        let seg = dup.reduce(&vec_mat(&e_block));
        e.slice_mut(s![a * l..(a + 1) * l]).assign(&seg);
    }
    (q_bar, p_bar, e)
}

/// Assemble the reciprocal `Θ_t` QCQP in full vectorization. Diagonal `Q̄`
/// blocks carry the extra `σ_I²·Q_{r,g,g} ⊗ I` term that prices the noise
/// leaked back into the reflecting sector through `Θ_tᵀ`; the constraint form
/// is `(P_{g,g}+σ_I²I)ᵀ ⊗ I`.
pub fn assemble_theta_t_system(ws: &FpWorkspace, g: usize) -> (CMat, CMat, CVec) {
    let m = ws.p.nrows();
    let n_g = m / g;
    let l = g * g;
    let dim = n_g * l;
    let eye_g = CMat::eye(g);
    let mut q_bar = CMat::zeros((dim, dim));
    let mut p_bar = CMat::zeros((dim, dim));
    let mut e = CVec::zeros(dim);
    for a in 0..n_g {
        for b in 0..n_g {
            let p_ba_t = block(&ws.p, g, b, a).t().to_owned();
            let q_ab = block(&ws.q_t, g, a, b);
            let mut blk = kron(&p_ba_t, &q_ab);
            if a == b {
                let q_r_aa = block(&ws.q_r, g, a, a);
                blk = &blk + &kron(&q_r_aa, &eye_g).mapv(|z| z * ws.sigma_i_sq);
            }
            q_bar
                .slice_mut(s![a * l..(a + 1) * l, b * l..(b + 1) * l])
                .assign(&blk);
        }
        let mut p_aa = block(&ws.p, g, a, a);
        for i in 0..g {
            p_aa[(i, i)] += Complex64::new(ws.sigma_i_sq, 0.0);
        }
        let pg = kron(&p_aa.t().to_owned(), &eye_g);
        p_bar
            .slice_mut(s![a * l..(a + 1) * l, a * l..(a + 1) * l])
            .assign(&pg);
        let e_block = block(&ws.e_t, g, a, a).t().mapv(|z| z.conj()).to_owned();
        e.slice_mut(s![a * l..(a + 1) * l]).assign(&vec_mat(&e_block));
    }
    (q_bar, p_bar, e)
}

/// Assemble the non-reciprocal joint QCQP over per-group stacks
/// `[Θ_{r,g}; Θ_{t,g}]`: `Q̄` blocks `P_{g',g}ᵀ ⊗ blkdiag(Q_r, Q_t)` and a
/// shared budget form `P_{g,g}ᵀ ⊗ I_{2G}`.
pub fn assemble_theta_joint_system(ws: &FpWorkspace, g: usize) -> (CMat, CMat, CVec) {
    let m = ws.p.nrows();
    let n_g = m / g;
    let l = 2 * g * g;
    let dim = n_g * l;
    let mut q_bar = CMat::zeros((dim, dim));
    let mut p_bar = CMat::zeros((dim, dim));
    let mut e = CVec::zeros(dim);
    for a in 0..n_g {
        for b in 0..n_g {
            let mut q_ab = CMat::zeros((2 * g, 2 * g));
            q_ab.slice_mut(s![0..g, 0..g]).assign(&block(&ws.q_r, g, a, b));
            q_ab.slice_mut(s![g..2 * g, g..2 * g])
                .assign(&block(&ws.q_t, g, a, b));
            let p_ba_t = block(&ws.p, g, b, a).t().to_owned();
            q_bar
                .slice_mut(s![a * l..(a + 1) * l, b * l..(b + 1) * l])
                .assign(&kron(&p_ba_t, &q_ab));
        }
        let p_aa_t = block(&ws.p, g, a, a).t().to_owned();
        p_bar
            .slice_mut(s![a * l..(a + 1) * l, a * l..(a + 1) * l])
            .assign(&kron(&p_aa_t, &CMat::eye(2 * g)));
        // E_g = [E_{r,g}  E_{t,g}] → segment vec(E_gᴴ)
        let mut e_h = CMat::zeros((2 * g, g));
        e_h.slice_mut(s![0..g, ..])
            .assign(&block(&ws.e_r, g, a, a).t().mapv(|z| z.conj()));
        e_h.slice_mut(s![g..2 * g, ..])
            .assign(&block(&ws.e_t, g, a, a).t().mapv(|z| z.conj()));
        e.slice_mut(s![a * l..(a + 1) * l]).assign(&vec_mat(&e_h));
    }
    (q_bar, p_bar, e)
}

/// Surrogate value of the `Θ_r` block: `2Re{Tr(E_rΘ)} − Tr(PΘᴴQ_rΘ)`.
fn theta_r_objective(ws: &FpWorkspace, theta: &CMat) -> f64 {
    let lin: f64 = matmul(&ws.e_r, theta).diag().iter().map(|z| z.re).sum();
    let x = matmul(&matmul(&ws.q_r, theta), &ws.p);
    let quad: f64 = x
        .iter()
        .zip(theta.iter())
        .map(|(a, t)| (a * t.conj()).re)
        .sum();
    2.0 * lin - quad
}

/// Surrogate value of the reciprocal `Θ_t` block, including the leakage term
/// `−σ_I²·Tr(ΘQ_rᵀΘᴴ)`.
fn theta_t_objective(ws: &FpWorkspace, theta: &CMat) -> f64 {
    let lin: f64 = matmul(&ws.e_t, theta).diag().iter().map(|z| z.re).sum();
    let x = matmul(&matmul(&ws.q_t, theta), &ws.p);
    let quad: f64 = x
        .iter()
        .zip(theta.iter())
        .map(|(a, t)| (a * t.conj()).re)
        .sum();
    let leak_m = matmul(theta, &ws.q_r.t().to_owned());
    let leak: f64 = leak_m
        .iter()
        .zip(theta.iter())
        .map(|(a, t)| (a * t.conj()).re)
        .sum();
    2.0 * lin - quad - ws.sigma_i_sq * leak
}

fn theta_joint_objective(ws: &FpWorkspace, theta_r: &CMat, theta_t: &CMat) -> f64 {
    theta_r_objective(ws, theta_r) + {
        let lin: f64 = matmul(&ws.e_t, theta_t).diag().iter().map(|z| z.re).sum();
        let x = matmul(&matmul(&ws.q_t, theta_t), &ws.p);
        let quad: f64 = x
            .iter()
            .zip(theta_t.iter())
            .map(|(a, t)| (a * t.conj()).re)
            .sum();
        2.0 * lin - quad
    }
}

/// `‖Θ·H_IT F‖²` using the cached product.
fn signal_power(ws: &FpWorkspace, theta: &CMat) -> f64 {
    fro_sq(&matmul(theta, &ws.hit_f))
}

/// Reciprocal `Θ_r` update. Budget: what `Θ_t` leaves of `P_A`.
pub fn update_theta_r(
    ws: &FpWorkspace,
    g: usize,
    budget: &PowerBudget,
    ris: &RisState,
) -> Result<(CMat, BisectStats)> {
    let m = ws.p.nrows();
    let p_a_r =
        budget.p_a - (signal_power(ws, &ris.theta_t) + 2.0 * ws.sigma_i_sq * fro_sq(&ris.theta_t));
    if p_a_r < -1e-9 * budget.p_a.max(f64::MIN_POSITIVE) {
        return Err(Error::InfeasibleRisBudget(p_a_r));
    }
    let p_a_r = p_a_r.max(0.0);
    if p_a_r == 0.0 {
        return Ok((
            CMat::zeros((m, m)),
            BisectStats {
                lambda: 0.0,
                iters: 0,
            },
        ));
    }
    let (q_bar, p_bar, e) = assemble_theta_r_system(ws, g);
    let (theta_vec, stats) = solve_budgeted_qcqp(&q_bar, &p_bar, &e, p_a_r)?;
    let l = g * (g + 1) / 2;
    let mut theta = CMat::zeros((m, m));
    for a in 0..m / g {
        let seg = theta_vec.slice(s![a * l..(a + 1) * l]).to_owned();
        let blk = unvech_symmetric(&seg, g);
        theta
            .slice_mut(s![a * g..(a + 1) * g, a * g..(a + 1) * g])
            .assign(&blk);
    }
    Ok((theta, stats))
}

/// Reciprocal `Θ_t` update. Budget: what `Θ_r` leaves of `P_A`, with the
/// doubled static term folded into the constraint form.
pub fn update_theta_t(
    ws: &FpWorkspace,
    g: usize,
    budget: &PowerBudget,
    ris: &RisState,
) -> Result<(CMat, BisectStats)> {
    let m = ws.p.nrows();
    let p_a_t =
        budget.p_a - (signal_power(ws, &ris.theta_r) + ws.sigma_i_sq * fro_sq(&ris.theta_r));
    if p_a_t < -1e-9 * budget.p_a.max(f64::MIN_POSITIVE) {
        return Err(Error::InfeasibleRisBudget(p_a_t));
    }
    let p_a_t = p_a_t.max(0.0);
    if p_a_t == 0.0 {
        return Ok((
            CMat::zeros((m, m)),
            BisectStats {
                lambda: 0.0,
                iters: 0,
            },
        ));
    }
    let (q_bar, p_bar, e) = assemble_theta_t_system(ws, g);
    let (theta_vec, stats) = solve_budgeted_qcqp(&q_bar, &p_bar, &e, p_a_t)?;
    let l = g * g;
    let mut theta = CMat::zeros((m, m));
    for a in 0..m / g {
        let seg = theta_vec.slice(s![a * l..(a + 1) * l]).to_owned();
        let blk = unvec(&seg, g, g);
        theta
            .slice_mut(s![a * g..(a + 1) * g, a * g..(a + 1) * g])
            .assign(&blk);
    }
    Ok((theta, stats))
}

/// Non-reciprocal joint `(Θ_r, Θ_t)` update against the shared budget `P_A`.
///
/// Fully-connected surfaces (one group) skip the explicit Kronecker assembly:
/// the system factors as `(Q + λI) Θ̃ P = Eᴴ` over the stacked `2M×M`
/// variable, which drops the per-update cost from `O(M⁶)` to `O(M³)`.
pub fn update_theta_joint(
    ws: &FpWorkspace,
    g: usize,
    budget: &PowerBudget,
) -> Result<(CMat, CMat, BisectStats)> {
    let m = ws.p.nrows();
    if budget.p_a <= 0.0 {
        return Ok((
            CMat::zeros((m, m)),
            CMat::zeros((m, m)),
            BisectStats {
                lambda: 0.0,
                iters: 0,
            },
        ));
    }
    if g == m {
        let mut q = CMat::zeros((2 * m, 2 * m));
        q.slice_mut(s![0..m, 0..m]).assign(&ws.q_r);
        q.slice_mut(s![m..2 * m, m..2 * m]).assign(&ws.q_t);
        let mut e_h = CMat::zeros((2 * m, m));
        e_h.slice_mut(s![0..m, ..])
            .assign(&ws.e_r.t().mapv(|z| z.conj()));
        e_h.slice_mut(s![m..2 * m, ..])
            .assign(&ws.e_t.t().mapv(|z| z.conj()));
        let (stacked, stats) = solve_budgeted_qcqp_kron(&q, &ws.p, &e_h, budget.p_a)?;
        let theta_r = stacked.slice(s![0..m, ..]).to_owned();
        let theta_t = stacked.slice(s![m..2 * m, ..]).to_owned();
        return Ok((theta_r, theta_t, stats));
    }
    let (q_bar, p_bar, e) = assemble_theta_joint_system(ws, g);
    let (theta_vec, stats) = solve_budgeted_qcqp(&q_bar, &p_bar, &e, budget.p_a)?;
    let l = 2 * g * g;
    let mut theta_r = CMat::zeros((m, m));
    let mut theta_t = CMat::zeros((m, m));
    for a in 0..m / g {
        let seg = theta_vec.slice(s![a * l..(a + 1) * l]).to_owned();
        let stacked = unvec(&seg, 2 * g, g);
        theta_r
            .slice_mut(s![a * g..(a + 1) * g, a * g..(a + 1) * g])
            .assign(&stacked.slice(s![0..g, ..]));
        theta_t
            .slice_mut(s![a * g..(a + 1) * g, a * g..(a + 1) * g])
            .assign(&stacked.slice(s![g..2 * g, ..]));
    }
    Ok((theta_r, theta_t, stats))
}

fn mrt_precoder(ch: &ChannelSet, p_t: f64) -> Precoder {
    let k = ch.n_users();
    let n_tx = ch.n_tx();
    let mut f = CMat::zeros((n_tx, k));
    for u in 0..k {
        let col = ch.h_rt.row(u).mapv(|z| z.conj());
        f.column_mut(u).assign(&col);
    }
    let norm = fro_sq(&f);
    if norm > 0.0 {
        let s = (p_t / norm).sqrt();
        f.mapv_inplace(|z| z * s);
    } else {
        // degenerate all-zero direct links: spread power uniformly
        let s = (p_t / (n_tx * k) as f64).sqrt();
        f.mapv_inplace(|_| Complex64::new(s, 0.0));
    }
    Precoder::new(f)
}

fn timing_add(map: &mut BTreeMap<String, f64>, key: &str, t0: Instant) {
    *map.entry(key.to_string()).or_insert(0.0) += t0.elapsed().as_secs_f64() * 1e3;
}

struct SweepState {
    ris: RisState,
    precoder: Precoder,
}

#[allow(clippy::too_many_arguments)]
fn run_single_start(
    cfg: &SystemConfig,
    ch: &ChannelSet,
    budget: &PowerBudget,
    opts: &SolveOptions,
    init: Option<SweepState>,
    theta_updates: bool,
    start_seed: u64,
) -> Result<(SweepState, SolveReport)> {
    let m = cfg.n_cells;
    let g = cfg.group_size;
    let k = cfg.n_users();
    let recip = cfg.reciprocity;
    let descriptor = RisDescriptor {
        reciprocity: recip,
        group_size: g,
    };

    let mut state = match init {
        Some(s) => s,
        None => {
            let precoder = mrt_precoder(ch, budget.p_t);
            let ris = if theta_updates && budget.p_a > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(start_seed);
                let mut ris = RisState::random(m, descriptor, &mut rng);
                let used = ris_power_used_linear(budget, recip, ch, &ris, &precoder);
                if used > 0.0 {
                    ris.scale((0.9 * budget.p_a / used).sqrt());
                } else {
                    ris = RisState::zeros(m, descriptor);
                }
                ris
            } else {
                RisState::zeros(m, descriptor)
            };
            SweepState { ris, precoder }
        }
    };

    let mut ws = FpWorkspace::new(k, m, budget.sigma_i_sq);
    let mut counters = Counters::default();
    let mut timing = BTreeMap::new();
    let mut multipliers = Multipliers::default();
    let mut trace: Vec<f64> = Vec::new();
    let mut slack_trace: Vec<[f64; 2]> = Vec::new();
    let mut converged = false;
    let mut best: Option<(f64, SweepState)> = None;

    for _sweep in 0..opts.max_sweeps {
        counters.sweeps += 1;
        // auxiliaries
        let t0 = Instant::now();
        let h_eff = effective_channels(ch, &state.ris);
        let terms = sinr_breakdown(budget, recip, ch, &state.ris, &state.precoder, &h_eff);
        ws.update_iota_from(&terms);
        ws.update_tau_from(&terms);
        counters.flops_aux += (k * k * m * m) as u64;
        timing_add(&mut timing, "aux", t0);

        // precoder
        let t0 = Instant::now();
        let precoder_result =
            update_precoder(&ws, ch, &state.ris, budget, &h_eff, &state.precoder);
        let upd = match precoder_result {
            Ok(out) => out,
            Err(Error::InfeasibleRisBudget(_)) if theta_updates => {
                // static noise re-radiation ate the whole budget: shrink the
                // surface to half the budget and retry once
                let c = match recip {
                    Reciprocity::Reciprocal => 2.0,
                    Reciprocity::NonReciprocal => 1.0,
                };
                let stat = budget.sigma_i_sq
                    * (fro_sq(&state.ris.theta_r) + c * fro_sq(&state.ris.theta_t));
                if stat > 0.0 {
                    state.ris.scale((0.5 * budget.p_a / stat).sqrt());
                }
                let h_eff = effective_channels(ch, &state.ris);
                let terms =
                    sinr_breakdown(budget, recip, ch, &state.ris, &state.precoder, &h_eff);
                ws.update_iota_from(&terms);
                ws.update_tau_from(&terms);
                update_precoder(&ws, ch, &state.ris, budget, &h_eff, &state.precoder)?
            }
            Err(e) => return Err(e),
        };
        counters.grid_evals += upd.candidates_evaluated;
        counters.flops_precoder +=
            (k * (upd.candidates_evaluated as usize * cfg.n_tx.pow(3) + cfg.n_tx * m * m)) as u64;
        state.precoder = upd.precoder;
        if upd.multipliers.precoder_tx.is_some() {
            multipliers.precoder_tx = upd.multipliers.precoder_tx;
            multipliers.precoder_amp = upd.multipliers.precoder_amp;
        }
        timing_add(&mut timing, "precoder", t0);

        // surface blocks
        if theta_updates && budget.p_a > 0.0 {
            let t0 = Instant::now();
            ws.refresh_quadratics(ch, &state.precoder);
            match recip {
                Reciprocity::Reciprocal => {
                    let (cand, stats) = update_theta_r(&ws, g, budget, &state.ris)?;
                    counters.bisect_r += stats.iters;
                    if theta_r_objective(&ws, &cand) >= theta_r_objective(&ws, &state.ris.theta_r)
                    {
                        state.ris.theta_r = cand;
                        multipliers.theta_r = Some(stats.lambda);
                    }
                    let (cand, stats) = update_theta_t(&ws, g, budget, &state.ris)?;
                    counters.bisect_t += stats.iters;
                    if theta_t_objective(&ws, &cand) >= theta_t_objective(&ws, &state.ris.theta_t)
                    {
                        state.ris.theta_t = cand;
                        multipliers.theta_t = Some(stats.lambda);
                    }
                    counters.flops_theta += (m * m * g.pow(4)) as u64
                        + (counters.bisect_r + counters.bisect_t) * (m.pow(3) * g.pow(3)) as u64;
                }
                Reciprocity::NonReciprocal => {
                    let (cand_r, cand_t, stats) = update_theta_joint(&ws, g, budget)?;
                    counters.bisect_joint += stats.iters;
                    if theta_joint_objective(&ws, &cand_r, &cand_t)
                        >= theta_joint_objective(&ws, &state.ris.theta_r, &state.ris.theta_t)
                    {
                        state.ris.theta_r = cand_r;
                        state.ris.theta_t = cand_t;
                        multipliers.theta_joint = Some(stats.lambda);
                    }
                    counters.flops_theta +=
                        counters.bisect_joint * (m.pow(3) * g.pow(3)) as u64;
                }
            }
            timing_add(&mut timing, "theta", t0);
        }

        let rate = model::sum_rate_linear(budget, recip, ch, &state.ris, &state.precoder);
        slack_trace.push([
            budget.p_t - state.precoder.norm_sq(),
            budget.p_a - ris_power_used_linear(budget, recip, ch, &state.ris, &state.precoder),
        ]);
        if best.as_ref().is_none_or(|(r, _)| rate > *r) {
            best = Some((
                rate,
                SweepState {
                    ris: state.ris.clone(),
                    precoder: state.precoder.clone(),
                },
            ));
        }
        let done = trace
            .last()
            .is_some_and(|prev| (rate - prev).abs() < opts.tolerance * prev.abs().max(1e-12));
        trace.push(rate);
        if done {
            converged = true;
            break;
        }
    }

    let (best_rate, best_state) = best.unwrap_or((
        0.0,
        SweepState {
            ris: state.ris.clone(),
            precoder: state.precoder.clone(),
        },
    ));
    // keep the best iterate even if a late sweep dipped within tolerance
    let final_rate = *trace.last().unwrap_or(&0.0);
    let state = if best_rate > final_rate {
        best_state
    } else {
        state
    };

    let slacks = ConstraintSlacks {
        tx_power: budget.p_t - state.precoder.norm_sq(),
        ris_power: budget.p_a
            - ris_power_used_linear(budget, recip, ch, &state.ris, &state.precoder),
    };
    let report = SolveReport {
        iterations: trace.len(),
        objective_trace: trace,
        converged,
        best_start: 0,
        block_timing_ms: timing,
        multipliers,
        slacks,
        slack_trace,
        counters: counters.into_map(),
    };
    Ok((state, report))
}

fn check_dims(cfg: &SystemConfig, ch: &ChannelSet) -> Result<()> {
    if ch.n_users() != cfg.n_users() || ch.n_tx() != cfg.n_tx || ch.n_cells() != cfg.n_cells {
        return Err(Error::DimensionMismatch(format!(
            "channel set ({} users, {} tx, {} cells) does not match config ({}, {}, {})",
            ch.n_users(),
            ch.n_tx(),
            ch.n_cells(),
            cfg.n_users(),
            cfg.n_tx,
            cfg.n_cells
        )));
    }
    let k_r_ch = ch
        .user_sector
        .iter()
        .filter(|s| **s == model::Sector::Reflecting)
        .count();
    if k_r_ch != cfg.k_r {
        return Err(Error::DimensionMismatch(format!(
            "channel set has {k_r_ch} reflecting users, config wants {}",
            cfg.k_r
        )));
    }
    Ok(())
}

/// Joint design with the power split taken from the configuration.
pub fn bcd_solve(
    cfg: &SystemConfig,
    ch: &ChannelSet,
    opts: &SolveOptions,
    init: Option<(RisState, Precoder)>,
) -> Result<Solution> {
    bcd_solve_with_budget(cfg, ch, &cfg.power_budget(), opts, init)
}

/// Joint design under an explicit power budget (used for degenerate budgets
/// such as `P_A = 0` and for the RIS-free reference split).
pub fn bcd_solve_with_budget(
    cfg: &SystemConfig,
    ch: &ChannelSet,
    budget: &PowerBudget,
    opts: &SolveOptions,
    init: Option<(RisState, Precoder)>,
) -> Result<Solution> {
    cfg.validate()?;
    check_dims(cfg, ch)?;
    run_multi_start(cfg, ch, budget, opts, init, true)
}

/// RIS-free fractional-programming precoder reference: the same auxiliary and
/// precoder updates with the surface pinned at zero and no surface block
/// updates at all. Serves as the `no-ris` scheme and the degenerate-budget
/// baseline.
pub fn fp_precoder_baseline(
    cfg: &SystemConfig,
    ch: &ChannelSet,
    budget: &PowerBudget,
    opts: &SolveOptions,
) -> Result<Solution> {
    cfg.validate()?;
    check_dims(cfg, ch)?;
    run_multi_start(cfg, ch, budget, opts, None, false)
}

fn run_multi_start(
    cfg: &SystemConfig,
    ch: &ChannelSet,
    budget: &PowerBudget,
    opts: &SolveOptions,
    init: Option<(RisState, Precoder)>,
    theta_updates: bool,
) -> Result<Solution> {
    let randomized = theta_updates && budget.p_a > 0.0 && init.is_none();
    let starts = if randomized { opts.starts.max(1) } else { 1 };
    let init_state = init.map(|(ris, precoder)| SweepState { ris, precoder });
    let mut best: Option<(f64, usize, SweepState, SolveReport)> = None;
    for start in 0..starts {
        let seed = splitmix64(opts.seed ^ splitmix64(start as u64));
        let init_s = if start == 0 {
            init_state.as_ref().map(|s| SweepState {
                ris: s.ris.clone(),
                precoder: s.precoder.clone(),
            })
        } else {
            None
        };
        let (state, report) =
            run_single_start(cfg, ch, budget, opts, init_s, theta_updates, seed)?;
        let rate = *report.objective_trace.last().unwrap_or(&0.0);
        if best.as_ref().is_none_or(|(r, ..)| rate > *r) {
            best = Some((rate, start, state, report));
        }
    }
    let (_, start, state, mut report) = best.expect("at least one start");
    report.best_start = start;
    Ok(Solution {
        ris: state.ris,
        precoder: state.precoder,
        report,
    })
}

pub(crate) fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive a stream seed from independent components, for reproducible
/// per-realization generator streams.
pub fn derive_seed(components: &[u64]) -> u64 {
    let mut acc = 0x243f6a8885a308d3u64; // arbitrary fixed offset
    for &c in components {
        acc = splitmix64(acc ^ splitmix64(c));
    }
    acc
}
