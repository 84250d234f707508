use bdris::matrixtools::{kron, vec_mat, KronRegularizedSolver, RegularizedSolver};
use bdris::CMat;
use ndarray::s;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn c(rng: &mut impl Rng) -> Complex64 {
    Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
}

#[test]
fn kron_vs_dense_rank_deficient() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let m = 3;
    // rank-1 PSD blocks like the user Gramians
    let u = CMat::from_shape_fn((m, 1), |_| c(&mut rng));
    let q_r = u.dot(&u.t().mapv(|z| z.conj()));
    let v = CMat::from_shape_fn((m, 1), |_| c(&mut rng));
    let q_t = v.dot(&v.t().mapv(|z| z.conj()));
    let mut q = CMat::zeros((2 * m, 2 * m));
    q.slice_mut(s![0..m, 0..m]).assign(&q_r);
    q.slice_mut(s![m..2 * m, m..2 * m]).assign(&q_t);
    let a = CMat::from_shape_fn((m, m), |_| c(&mut rng));
    let p = &a.dot(&a.t().mapv(|z| z.conj())) + &(CMat::eye(m) * Complex64::new(0.1, 0.0));
    let e_h = CMat::from_shape_fn((2 * m, m), |_| c(&mut rng));

    let fast = KronRegularizedSolver::new(&q, &p, &e_h).unwrap();
    let pt = p.t().to_owned();
    let q_bar = kron(&pt, &q);
    let p_bar = kron(&pt, &CMat::eye(2 * m));
    let e = vec_mat(&e_h);
    let dense = RegularizedSolver::new(&q_bar, &p_bar, &e).unwrap();
    for lam in [1e-6, 1e-3, 0.1, 1.0, 10.0] {
        println!("lam {lam:.1e}: fast {:.6e} dense {:.6e}", fast.power(lam), dense.power(lam));
    }
}
