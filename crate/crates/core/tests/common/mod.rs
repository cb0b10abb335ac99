#![allow(dead_code)]

use rand::Rng as _;
use rand_distr::StandardNormal;
use seqrank::rng::rng_from;
use seqrank::DenseMatrix;

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = rng_from(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal)).unwrap()
}

/// `rows × k` with orthonormal columns.
pub fn orthonormal(rows: usize, k: usize, seed: u64) -> DenseMatrix {
    let s = seqrank::linalg::svd(&gaussian(rows, k, seed)).unwrap();
    s.left_vectors
}

/// `U diag(sigmas) Vᵀ` with random orthonormal factors.
pub fn planted(rows: usize, cols: usize, sigmas: &[f64], seed: u64) -> DenseMatrix {
    let k = sigmas.len();
    let u = orthonormal(rows, k, seed);
    let v = orthonormal(cols, k, seed.wrapping_add(1_000_003));
    let mut out = DenseMatrix::zeros(rows, cols);
    for (i, s) in sigmas.iter().enumerate() {
        out.add_outer(*s, &u.column(i), &v.column(i)).unwrap();
    }
    out
}

pub fn rel_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm()
}

pub fn vec_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn jacobi_eigenvalues(s: &DenseMatrix) -> Vec<f64> {
    let n = s.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| s.row(i).to_vec()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * diag {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - sn * akq;
                    a[k][q] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - sn * aqk;
                    a[q][k] = sn * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Singular values via the Gram matrix of the shorter side.
pub fn oracle_singular_values(m: &DenseMatrix) -> Vec<f64> {
    let g = if m.rows() <= m.cols() { m.gram() } else { m.transpose().gram() };
    jacobi_eigenvalues(&g).into_iter().map(|l| l.max(0.0).sqrt()).collect()
}

/// Top singular triple by power iteration on `MᵀM`.
pub fn power_top(m: &DenseMatrix, iters: usize) -> (f64, Vec<f64>, Vec<f64>) {
    let mut v = vec![1.0; m.cols()];
    for (i, x) in v.iter_mut().enumerate() {
        *x += 0.01 * i as f64;
    }
    for _ in 0..iters {
        let u = m.matvec(&v).unwrap();
        let w = m.tr_matvec(&u).unwrap();
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.iter().map(|x| x / n).collect();
    }
    let mv = m.matvec(&v).unwrap();
    let sigma = mv.iter().map(|x| x * x).sum::<f64>().sqrt();
    let u = mv.iter().map(|x| x / sigma).collect();
    (sigma, u, v)
}
