//! Smallest eigenpairs of the symmetric pencil `W φ = λ A φ` with diagonal `A`.
//!
//! With `D = A^{1/2}` the pencil is equivalent to the standard problem
//! `S y = λ y`, `S = D⁻¹ W D⁻¹`, `φ = D⁻¹ y`. Small problems are solved densely;
//! larger ones run Lanczos with full reorthogonalization on the shift-inverted
//! operator `(S + δ)⁻¹ = D (W + δ A)⁻¹ D`, locking converged pairs and
//! restarting until a fresh deflated run finds nothing below the k-th value.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::envelope::EnvelopeCholesky;
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Relative Ritz residual at which a pair counts as converged.
    pub tolerance: f64,
    /// Cap on the total number of Lanczos steps.
    pub max_iterations: usize,
    /// Problems with at most this many unknowns use the dense solver.
    pub dense_threshold: usize,
    /// Seed for Lanczos start vectors.
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 1000,
            dense_threshold: 1000,
            seed: 0,
        }
    }
}

/// Eigenpairs of `S`, eigenvalues ascending, eigenvectors orthonormal columns.
pub(crate) struct Pairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

pub(crate) fn smallest(w: &CsrMatrix, mass: &[f64], k: usize, opts: &EigenOptions) -> Result<Pairs> {
    if w.n() <= opts.dense_threshold {
        Ok(dense_smallest(w, mass, k))
    } else {
        shift_invert_smallest(w, mass, k, opts)
    }
}

fn dense_smallest(w: &CsrMatrix, mass: &[f64], k: usize) -> Pairs {
    let n = w.n();
    let dinv: Vec<f64> = mass.iter().map(|a| 1.0 / a.sqrt()).collect();
    let mut s = DMatrix::zeros(n, n);
    for (i, j, v) in w.triplets() {
        s[(i, j)] += v * dinv[i] * dinv[j];
    }
    // Exact symmetry so the QR iteration sees a symmetric matrix.
    let s = (&s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    sorted_prefix(eig.eigenvalues.as_slice(), &eig.eigenvectors, k)
}

fn sorted_prefix(values: &[f64], vectors: &DMatrix<f64>, k: usize) -> Pairs {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order.truncate(k);
    Pairs {
        values: order.iter().map(|&i| values[i]).collect(),
        vectors: DMatrix::from_fn(vectors.nrows(), order.len(), |r, c| vectors[(r, order[c])]),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Two passes of classical Gram–Schmidt against `basis`.
fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(w, b);
            axpy(w, -c, b);
        }
    }
}

/// Shift-inverted operator `x ↦ D (W + δA)⁻¹ D x`.
struct ShiftInvert {
    chol: EnvelopeCholesky,
    d: Vec<f64>,
}

impl ShiftInvert {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = x.iter().zip(&self.d).map(|(a, b)| a * b).collect();
        self.chol.solve_in_place(&mut y);
        y.iter_mut().zip(&self.d).for_each(|(a, b)| *a *= b);
        y
    }
}

struct Run {
    pairs: Vec<(f64, Vec<f64>)>,
    steps: usize,
}

/// One Lanczos run deflated against `locked`, returning converged Ritz pairs
/// among the `want` largest.
fn lanczos_run(
    op: &ShiftInvert,
    locked: &[Vec<f64>],
    want: usize,
    max_steps: usize,
    tol: f64,
    rng: &mut ChaCha8Rng,
) -> Run {
    let n = op.d.len();
    let limit = max_steps.min(n - locked.len());
    let mut q: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    orthogonalize(&mut q, locked);
    let qn = dot(&q, &q).sqrt();
    if limit == 0 || qn == 0.0 {
        return Run {
            pairs: Vec::new(),
            steps: 0,
        };
    }
    q.iter_mut().for_each(|x| *x /= qn);

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut last_check = 0;
    loop {
        let mut w = op.apply(&q);
        let a = dot(&w, &q);
        axpy(&mut w, -a, &q);
        if let (Some(&b), Some(prev)) = (beta.last(), basis.last()) {
            axpy(&mut w, -b, prev);
        }
        basis.push(q);
        alpha.push(a);
        orthogonalize(&mut w, locked);
        orthogonalize(&mut w, &basis);
        let b = dot(&w, &w).sqrt();
        let m = basis.len();

        let scale = alpha.iter().fold(0.0f64, |s, x| s.max(x.abs()));
        let exhausted = b <= 1e-13 * scale || m >= limit;
        let due = m >= want && m - last_check >= (m / 10).max(5);
        if exhausted || due {
            last_check = m;
            let t = DMatrix::from_fn(m, m, |i, j| {
                if i == j {
                    alpha[i]
                } else if i + 1 == j {
                    beta[i]
                } else if j + 1 == i {
                    beta[j]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
            let top = want.min(m);
            let converged: Vec<usize> = order[..top]
                .iter()
                .copied()
                .filter(|&i| {
                    (b * eig.eigenvectors[(m - 1, i)]).abs() <= tol * eig.eigenvalues[i].abs()
                })
                .collect();
            if converged.len() == top || exhausted {
                let pairs = converged
                    .into_iter()
                    .map(|i| {
                        let mut v = vec![0.0; n];
                        for (j, qj) in basis.iter().enumerate() {
                            axpy(&mut v, eig.eigenvectors[(j, i)], qj);
                        }
                        let vn = dot(&v, &v).sqrt();
                        v.iter_mut().for_each(|x| *x /= vn);
                        (eig.eigenvalues[i], v)
                    })
                    .collect();
                return Run { pairs, steps: m };
            }
        }
        beta.push(b);
        q = w.into_iter().map(|x| x / b).collect();
    }
}

fn shift_invert_smallest(
    w: &CsrMatrix,
    mass: &[f64],
    k: usize,
    opts: &EigenOptions,
) -> Result<Pairs> {
    let n = w.n();
    let d: Vec<f64> = mass.iter().map(|a| a.sqrt()).collect();
    // Shift well below the spectrum relative to its upper scale.
    let scale = (0..n)
        .map(|i| w.get(i, i) / mass[i])
        .fold(0.0f64, f64::max);
    let delta = 1e-6 * scale.max(f64::MIN_POSITIVE);
    let shifted = w.add_diagonal(&mass.iter().map(|a| delta * a).collect::<Vec<_>>());
    let op = ShiftInvert {
        chol: EnvelopeCholesky::factor(&shifted)?,
        d,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut locked: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut steps = 0;
    let no_convergence = |steps, got: usize| Error::NoConvergence {
        iterations: steps,
        converged: got.min(k),
        wanted: k,
    };

    while locked.len() < k {
        if steps >= opts.max_iterations {
            return Err(no_convergence(steps, locked.len()));
        }
        let basis: Vec<Vec<f64>> = locked.iter().map(|p| p.1.clone()).collect();
        let run = lanczos_run(
            &op,
            &basis,
            k - locked.len(),
            opts.max_iterations - steps,
            opts.tolerance,
            &mut rng,
        );
        steps += run.steps;
        if run.pairs.is_empty() && run.steps == 0 {
            return Err(no_convergence(steps, locked.len()));
        }
        locked.extend(run.pairs);
    }

    // A fresh run deflated against everything found must not turn up a value
    // beyond the current k-th; otherwise a (near-)multiple pair was missed.
    loop {
        locked.sort_by(|a, b| b.0.total_cmp(&a.0));
        if locked.len() >= n {
            break;
        }
        let kth = locked[k - 1].0;
        let basis: Vec<Vec<f64>> = locked.iter().map(|p| p.1.clone()).collect();
        let run = lanczos_run(
            &op,
            &basis,
            1,
            opts.max_iterations.saturating_sub(steps).max(1),
            opts.tolerance,
            &mut rng,
        );
        steps += run.steps;
        match run.pairs.into_iter().next() {
            Some((theta, v)) if theta > kth * (1.0 + 1e-9) => locked.push((theta, v)),
            Some(_) => break,
            None if steps >= opts.max_iterations => return Err(no_convergence(steps, locked.len())),
            None => {}
        }
    }
    locked.truncate(k);

    // Rayleigh–Ritz with S on the locked subspace.
    let y = DMatrix::from_fn(n, k, |r, c| locked[c].1[r]);
    let mut sy = DMatrix::zeros(n, k);
    let mut buf = vec![0.0; n];
    for c in 0..k {
        let x: Vec<f64> = (0..n).map(|r| y[(r, c)] / op.d[r]).collect();
        w.mul_vec(&x, &mut buf);
        for r in 0..n {
            sy[(r, c)] = buf[r] / op.d[r];
        }
    }
    let h = y.tr_mul(&sy);
    let h = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(h);
    let rotated = &y * &eig.eigenvectors;
    Ok(sorted_prefix(eig.eigenvalues.as_slice(), &rotated, k))
}
