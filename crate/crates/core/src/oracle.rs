//! Independent reference solvers used to validate the closed-form updates:
//! a projected-gradient QCQP solver and a feasible-point random search over
//! whole (precoder, surface) states.
//!
//! These ship in the library rather than test code so the `oracle-check` CLI
//! subcommand can rerun the validation story on demand. They deliberately
//! avoid the multiplier-bisection path: the gradient solver works in whitened
//! coordinates where the budget ellipsoid becomes a ball and radial scaling
//! is the exact projection.

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::matrixtools::{from_na, from_na_vec, hermitianize, to_na, to_na_vec};
use crate::model::{
    ris_power_used_linear, sum_rate_linear, ChannelSet, Precoder, Reciprocity, RisDescriptor,
    RisState, SystemConfig,
};
use crate::optimizer::{
    assemble_theta_joint_system, assemble_theta_r_system, assemble_theta_t_system, derive_seed,
    solve_budgeted_qcqp, FpWorkspace,
};
use crate::{CMat, CVec, Error, Result};

/// One budgeted QCQP: maximize `2Re{eᴴθ} − θᴴQθ` subject to `θᴴPθ ≤ budget`.
#[derive(Debug, Clone)]
pub struct QcqpInstance {
    /// Hermitian PSD objective form.
    pub q: CMat,
    /// Hermitian PD constraint form.
    pub p: CMat,
    /// Linear term as a column vector (`ē = eᴴ` in row form).
    pub e: CVec,
    pub budget: f64,
}

impl QcqpInstance {
    pub fn new(q: CMat, p: CMat, e: CVec, budget: f64) -> Result<Self> {
        let n = q.nrows();
        if q.dim() != (n, n) || p.dim() != (n, n) || e.len() != n {
            return Err(Error::DimensionMismatch(
                "QCQP instance dimensions inconsistent".into(),
            ));
        }
        if !(budget > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "QCQP budget must be positive, got {budget}"
            )));
        }
        Ok(Self { q, p, e, budget })
    }

    pub fn dim(&self) -> usize {
        self.e.len()
    }

    /// `2Re{eᴴθ} − θᴴQθ`.
    pub fn objective(&self, theta: &CVec) -> f64 {
        let lin: f64 = self
            .e
            .iter()
            .zip(theta.iter())
            .map(|(e, t)| (e.conj() * t).re)
            .sum();
        let quad: f64 = self
            .q
            .dot(theta)
            .iter()
            .zip(theta.iter())
            .map(|(qt, t)| (t.conj() * qt).re)
            .sum();
        2.0 * lin - quad
    }

    /// `θᴴPθ`.
    pub fn constraint_power(&self, theta: &CVec) -> f64 {
        self.p
            .dot(theta)
            .iter()
            .zip(theta.iter())
            .map(|(pt, t)| (t.conj() * pt).re)
            .sum()
    }
}

/// Projected-gradient ascent on a [`QcqpInstance`].
///
/// Works in coordinates `y = Lᴴθ` with `P = LLᴴ`, where the constraint is the
/// ball `‖y‖² ≤ budget` and scaling onto the sphere is the exact Euclidean
/// projection. The step size defaults to `0.9 / λ_max`, with `λ_max`
/// estimated by power iteration on the whitened objective form.
pub fn projected_gradient_solve(
    inst: &QcqpInstance,
    steps: usize,
    step_size: Option<f64>,
) -> Result<CVec> {
    let n = inst.dim();
    let l_full = to_na(&hermitianize(&inst.p))
        .cholesky()
        .ok_or(Error::SingularSystem)?;
    let l = l_full.l();
    // whitened quadratic form L⁻¹ Q L⁻ᴴ and linear term L⁻¹ e
    let linv_q = l
        .solve_lower_triangular(&to_na(&inst.q))
        .ok_or(Error::SingularSystem)?;
    let q_w = hermitianize(&from_na(
        &l.solve_lower_triangular(&linv_q.adjoint())
            .ok_or(Error::SingularSystem)?
            .adjoint(),
    ));
    let e_w = from_na_vec(
        &l.solve_lower_triangular(&to_na_vec(&inst.e))
            .ok_or(Error::SingularSystem)?,
    );

    let step = match step_size {
        Some(s) => s,
        None => {
            // power iteration for the largest eigenvalue
            let mut v = CVec::from_elem(n, Complex64::new(1.0, 0.0));
            let mut lam_max = 0.0f64;
            for _ in 0..100 {
                let w = q_w.dot(&v);
                let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if norm == 0.0 {
                    break;
                }
                lam_max = norm / v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                v = w.mapv(|z| z / norm);
            }
            0.9 / lam_max.max(f64::MIN_POSITIVE)
        }
    };

    let radius = inst.budget.sqrt();
    let mut y = CVec::zeros(n);
    for _ in 0..steps {
        let grad = &e_w - &q_w.dot(&y);
        let mut next = &y + &grad.mapv(|z| z * step);
        let norm_sq: f64 = next.iter().map(|z| z.norm_sqr()).sum();
        if norm_sq > inst.budget {
            let s = radius / norm_sq.sqrt();
            next.mapv_inplace(|z| z * s);
        }
        let delta: f64 = next
            .iter()
            .zip(y.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        y = next;
        if delta <= 1e-13 * radius.max(1.0) {
            break;
        }
    }
    // θ = L⁻ᴴ y
    let theta = l
        .adjoint()
        .solve_upper_triangular(&to_na_vec(&y))
        .ok_or(Error::SingularSystem)?;
    Ok(from_na_vec(&theta))
}

/// Uniform feasible-point search: samples random precoders and surface states
/// rescaled onto the power budgets and returns the best sum rate found.
/// Intended only for tiny instances as a sanity lower bound on the solver.
pub fn random_search_rate(cfg: &SystemConfig, ch: &ChannelSet, samples: usize, seed: u64) -> f64 {
    let budget = cfg.power_budget();
    let descriptor = RisDescriptor {
        reciprocity: cfg.reciprocity,
        group_size: cfg.group_size,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..samples {
        let mut f = CMat::from_shape_fn((cfg.n_tx, cfg.n_users()), |_| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let norm: f64 = f.iter().map(|z| z.norm_sqr()).sum();
        if norm > 0.0 {
            let s = (budget.p_t / norm).sqrt();
            f.mapv_inplace(|z| z * s);
        }
        let precoder = Precoder::new(f);
        let ris = if budget.p_a > 0.0 {
            let mut ris = RisState::random(cfg.n_cells, descriptor, &mut rng);
            let used = ris_power_used_linear(&budget, cfg.reciprocity, ch, &ris, &precoder);
            if used > 0.0 {
                ris.scale((budget.p_a / used).sqrt());
            }
            ris
        } else {
            RisState::zeros(cfg.n_cells, descriptor)
        };
        let rate = sum_rate_linear(&budget, cfg.reciprocity, ch, &ris, &precoder);
        if rate > best {
            best = rate;
        }
    }
    best
}

/// Dimensions and trial count for [`oracle_check`].
#[derive(Debug, Clone)]
pub struct OracleCheckConfig {
    pub m: usize,
    pub g: usize,
    pub k: usize,
    pub trials: usize,
    pub seed: u64,
    /// Gradient iterations per instance.
    pub steps: usize,
}

/// Per-update-type outcome of an oracle comparison run.
#[derive(Debug, Clone)]
pub struct OracleCheckOutcome {
    pub update_type: &'static str,
    pub trials: usize,
    pub max_rel_gap: f64,
}

fn random_workspace(m: usize, k: usize, recip: Reciprocity, seed: u64) -> FpWorkspace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k_r = k / 2 + k % 2;
    let draw =
        |rng: &mut ChaCha8Rng| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
    let n_tx = 2.max(k / 2);
    let h_rt = CMat::from_shape_fn((k, n_tx), |_| draw(&mut rng));
    let h_ri = CMat::from_shape_fn((k, m), |_| draw(&mut rng));
    let h_it = CMat::from_shape_fn((m, n_tx), |_| draw(&mut rng));
    let ch = ChannelSet::new(h_rt, h_ri, h_it, k_r).expect("random channels");
    let f = Precoder::new(CMat::from_shape_fn((n_tx, k), |_| draw(&mut rng)));
    let mut ws = FpWorkspace::new(k, m, 0.1);
    for i in 0..k {
        ws.iota[i] = rng.random::<f64>() * 3.0;
        ws.tau[i] = draw(&mut rng);
    }
    let _ = recip;
    ws.refresh_quadratics(&ch, &f);
    ws
}

/// Build one QCQP instance per update type from a random workspace, choosing
/// budgets that cycle between strongly active, marginal, and inactive
/// constraints.
pub fn random_update_instances(
    m: usize,
    g: usize,
    k: usize,
    seed: u64,
    budget_factor: f64,
) -> Result<Vec<(&'static str, QcqpInstance)>> {
    let mut out = Vec::new();
    let systems = [
        (
            "theta-r-reciprocal",
            assemble_theta_r_system(&random_workspace(m, k, Reciprocity::Reciprocal, seed), g),
        ),
        (
            "theta-t-reciprocal",
            assemble_theta_t_system(
                &random_workspace(m, k, Reciprocity::Reciprocal, derive_seed(&[seed, 1])),
                g,
            ),
        ),
        (
            "theta-joint-non-reciprocal",
            assemble_theta_joint_system(
                &random_workspace(m, k, Reciprocity::NonReciprocal, derive_seed(&[seed, 2])),
                g,
            ),
        ),
    ];
    for (name, (q, p, e)) in systems {
        // reference power at λ = 1 sets the budget scale
        let solver = crate::matrixtools::RegularizedSolver::new(&q, &p, &e)?;
        let budget = budget_factor * solver.power(1.0);
        out.push((name, QcqpInstance::new(q, p, e, budget)?));
    }
    Ok(out)
}

/// Compare the closed-form multiplier solutions against the projected
/// gradient oracle on random instances of every update type.
pub fn oracle_check(cfg: &OracleCheckConfig) -> Result<Vec<OracleCheckOutcome>> {
    let mut gaps: std::collections::BTreeMap<&'static str, f64> = Default::default();
    for trial in 0..cfg.trials {
        let factor = [0.3, 1.0, 3.0][trial % 3];
        let seed = derive_seed(&[cfg.seed, trial as u64]);
        for (name, inst) in random_update_instances(cfg.m, cfg.g, cfg.k, seed, factor)? {
            let (closed, _) = solve_budgeted_qcqp(&inst.q, &inst.p, &inst.e, inst.budget)?;
            let obj_closed = inst.objective(&closed);
            let oracle = projected_gradient_solve(&inst, cfg.steps, None)?;
            let obj_oracle = inst.objective(&oracle);
            let gap = (obj_closed - obj_oracle).abs() / obj_closed.abs().max(1e-12);
            let entry = gaps.entry(name).or_insert(0.0);
            if gap > *entry {
                *entry = gap;
            }
        }
    }
    Ok(gaps
        .into_iter()
        .map(|(update_type, max_rel_gap)| OracleCheckOutcome {
            update_type,
            trials: cfg.trials,
            max_rel_gap,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn pga_zero_linear_term_converges_to_zero() {
        let q = CMat::eye(3);
        let p = CMat::eye(3);
        let e = CVec::zeros(3);
        let inst = QcqpInstance::new(q, p, e, 1.0).unwrap();
        let theta = projected_gradient_solve(&inst, 1000, None).unwrap();
        assert!(theta.iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn pga_one_dimensional_analytic() {
        // unconstrained optimum θ = e/q; truncated to the budget when needed
        let q = array![[c(2.0, 0.0)]];
        let p = array![[c(1.0, 0.0)]];
        let e = array![c(1.0, 0.0)];
        // inactive constraint: θ* = 0.5
        let inst = QcqpInstance::new(q.clone(), p.clone(), e.clone(), 1.0).unwrap();
        let theta = projected_gradient_solve(&inst, 20_000, None).unwrap();
        assert_abs_diff_eq!(theta[0].re, 0.5, epsilon = 1e-6);
        // active constraint: |θ|² ≤ 0.04 → θ = 0.2
        let inst = QcqpInstance::new(q, p, e, 0.04).unwrap();
        let theta = projected_gradient_solve(&inst, 20_000, None).unwrap();
        assert_abs_diff_eq!(theta[0].re, 0.2, epsilon = 1e-6);
    }

    #[test]
    fn pga_matches_closed_form_on_random_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 6;
        let a = CMat::from_shape_fn((n, n), |_| {
            c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let q = a.dot(&a.t().mapv(|z| z.conj()));
        let b = CMat::from_shape_fn((n, n), |_| {
            c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let p = &b.dot(&b.t().mapv(|z| z.conj())) + &CMat::eye(n);
        let e = CVec::from_shape_fn(n, |_| c(rng.random::<f64>(), rng.random::<f64>()));
        let inst = QcqpInstance::new(q, p, e, 0.5).unwrap();
        let (closed, _) = solve_budgeted_qcqp(&inst.q, &inst.p, &inst.e, inst.budget).unwrap();
        let oracle = projected_gradient_solve(&inst, 200_000, None).unwrap();
        let oc = inst.objective(&closed);
        let oo = inst.objective(&oracle);
        assert!(
            (oc - oo).abs() <= 1e-4 * oc.abs().max(1e-12),
            "closed {oc} vs oracle {oo}"
        );
    }

    #[test]
    fn random_search_zero_samples_is_zero() {
        let cfg = SystemConfig {
            n_tx: 2,
            n_cells: 2,
            group_size: 1,
            k_r: 1,
            k_t: 1,
            p_total_dbm: 30.0,
            tx_fraction: 0.99,
            sigma_i_dbm: -90.0,
            sigma_r_dbm: -90.0,
            reciprocity: Reciprocity::Reciprocal,
            architecture: crate::model::Architecture::CwSingle,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut draw =
            |rng: &mut ChaCha8Rng| Complex64::new(rng.random::<f64>(), rng.random::<f64>());
        let ch = ChannelSet::new(
            CMat::from_shape_fn((2, 2), |_| draw(&mut rng)),
            CMat::from_shape_fn((2, 2), |_| draw(&mut rng)),
            CMat::from_shape_fn((2, 2), |_| draw(&mut rng)),
            1,
        )
        .unwrap();
        assert_eq!(random_search_rate(&cfg, &ch, 0, 7), 0.0);
        // and the searched rate is positive once samples are drawn
        assert!(random_search_rate(&cfg, &ch, 10, 7) > 0.0);
    }
}
