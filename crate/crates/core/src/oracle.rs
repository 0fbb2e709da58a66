//! Brute-force numerical optimizer used to cross-check the analytic solvers.
//!
//! The USD problem is posed over `E₀ = W₁X₀W₁†` and `E₁ = W₀X₁W₀†`, where
//! `W_i` spans the kernel of `ρ_i`, so the error-free conditions hold by
//! construction. The remaining constraints `X₀, X₁, I − E₀ − E₁ ⪰ 0` are
//! handled by a log-barrier path-following method with damped Newton steps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::certificate::hermitian_basis;
use crate::error::Result;
use crate::fidelity::{lift, require_disjoint_supports};
use crate::linalg::{
    eigh, support_decomposition, CVector, ComplexMatrix, HermitianMatrix, C64, DEFAULT_RANK_CUTOFF,
};
use crate::problem::{failure_probability, validate_problem, Povm, UsdProblem};

pub const DEFAULT_RESTARTS: usize = 16;
pub const DEFAULT_MAX_ITERS: usize = 5000;

/// Duality-gap bound `m/t` at which the path is considered followed to the end.
const GAP_TARGET: f64 = 1e-9;
/// Newton decrement `λ²/2` below which a centering step stops.
const CENTERING_TOL: f64 = 1e-11;
const BARRIER_GROWTH: f64 = 10.0;
const ARMIJO: f64 = 0.25;

/// Restart count, iteration cap and seed for the oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleSettings {
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            restarts: DEFAULT_RESTARTS,
            max_iters: DEFAULT_MAX_ITERS,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub best_povm: Povm,
    pub best_q: f64,
    /// Newton steps taken by the winning restart.
    pub iterations: usize,
    pub converged: bool,
    pub restarts_used: usize,
}

/// Multi-start barrier optimization of the success probability.
pub fn oracle_optimize(
    p: &UsdProblem,
    restarts: usize,
    max_iters: usize,
    seed: u64,
) -> Result<OracleResult> {
    validate_problem(p).into_result()?;
    require_disjoint_supports(p, DEFAULT_RANK_CUTOFF)?;
    let model = Model::new(p)?;
    let restarts = restarts.max(1);

    let mut best: Option<(f64, Run)> = None;
    for r in 0..restarts {
        let start = model.start(r, seed);
        let run = model.follow_path(start, max_iters);
        let povm = model.povm(&run.x);
        let q = failure_probability(p, &povm).q;
        if best.as_ref().is_none_or(|(bq, _)| q < *bq) {
            best = Some((q, run));
        }
    }
    let (_, run) = best.expect("at least one restart");
    let best_povm = model.povm(&run.x);
    let best_q = failure_probability(p, &best_povm).q.clamp(0.0, 1.0);
    Ok(OracleResult {
        best_povm,
        best_q,
        iterations: run.iterations,
        converged: run.converged,
        restarts_used: restarts,
    })
}

struct Run {
    x: Vec<f64>,
    iterations: usize,
    converged: bool,
}

struct Model {
    dim: usize,
    /// Hermitian basis of the `X₀` block (size `k₁`).
    basis0: Vec<ComplexMatrix>,
    /// Hermitian basis of the `X₁` block (size `k₀`).
    basis1: Vec<ComplexMatrix>,
    /// Every coordinate lifted to the full space: `E₀ + E₁ = Σ x_i lifted_i`.
    lifted: Vec<ComplexMatrix>,
    /// Gradient of the success probability.
    gain: Vec<f64>,
    kernel1: Vec<CVector>,
    kernel0: Vec<CVector>,
}

/// Inverse and log-determinant of one barrier block.
struct Block {
    inverse: ComplexMatrix,
    logdet: f64,
}

impl Model {
    fn new(p: &UsdProblem) -> Result<Self> {
        let dim = p.dim();
        let kernel1 = support_decomposition(p.rho1(), DEFAULT_RANK_CUTOFF)?.kernel_basis;
        let kernel0 = support_decomposition(p.rho0(), DEFAULT_RANK_CUTOFF)?.kernel_basis;
        let basis0 = hermitian_basis(kernel1.len());
        let basis1 = hermitian_basis(kernel0.len());
        let mut lifted = Vec::with_capacity(basis0.len() + basis1.len());
        let mut gain = Vec::with_capacity(lifted.capacity());
        for b in &basis0 {
            let l = lift(b, &kernel1, dim);
            gain.push(p.eta0 * l.trace_product(p.rho0()).re);
            lifted.push(l);
        }
        for b in &basis1 {
            let l = lift(b, &kernel0, dim);
            gain.push(p.eta1 * l.trace_product(p.rho1()).re);
            lifted.push(l);
        }
        Ok(Self {
            dim,
            basis0,
            basis1,
            lifted,
            gain,
            kernel1,
            kernel0,
        })
    }

    fn n0(&self) -> usize {
        self.basis0.len()
    }

    fn n(&self) -> usize {
        self.lifted.len()
    }

    /// Number of barrier terms, i.e. the total matrix size under `logdet`.
    fn barrier_weight(&self) -> f64 {
        (self.kernel1.len() + self.kernel0.len() + self.dim) as f64
    }

    fn start(&self, restart: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(
            seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(restart as u64)),
        );
        let mut x = Vec::with_capacity(self.n());
        for (k, basis) in [
            (self.kernel1.len(), &self.basis0),
            (self.kernel0.len(), &self.basis1),
        ] {
            let block = if restart == 0 || k == 0 {
                ComplexMatrix::identity(k).scale(0.25)
            } else {
                random_block(k, &mut rng)
            };
            x.extend(basis.iter().map(|b| b.trace_product(&block).re));
        }
        x
    }

    fn block_matrix(basis: &[ComplexMatrix], coords: &[f64], k: usize) -> ComplexMatrix {
        basis
            .iter()
            .zip(coords)
            .fold(ComplexMatrix::zeros(k), |acc, (b, &w)| &acc + &b.scale(w))
    }

    fn x0(&self, x: &[f64]) -> ComplexMatrix {
        Self::block_matrix(&self.basis0, &x[..self.n0()], self.kernel1.len())
    }

    fn x1(&self, x: &[f64]) -> ComplexMatrix {
        Self::block_matrix(&self.basis1, &x[self.n0()..], self.kernel0.len())
    }

    fn slack(&self, x: &[f64]) -> ComplexMatrix {
        let used = self
            .lifted
            .iter()
            .zip(x)
            .fold(ComplexMatrix::zeros(self.dim), |acc, (l, &w)| {
                &acc + &l.scale(w)
            });
        &ComplexMatrix::identity(self.dim) - &used
    }

    fn povm(&self, x: &[f64]) -> Povm {
        let e0 = HermitianMatrix::hermitian_part(&lift(&self.x0(x), &self.kernel1, self.dim));
        let e1 = HermitianMatrix::hermitian_part(&lift(&self.x1(x), &self.kernel0, self.dim));
        Povm::from_conclusive(e0, e1)
    }

    /// The three barrier blocks, or `None` outside the open feasible set.
    fn blocks(&self, x: &[f64]) -> Option<[Block; 3]> {
        Some([
            block(&self.x0(x))?,
            block(&self.x1(x))?,
            block(&self.slack(x))?,
        ])
    }

    fn objective(&self, t: f64, x: &[f64], blocks: &[Block; 3]) -> f64 {
        let gain: f64 = self.gain.iter().zip(x).map(|(g, xi)| g * xi).sum();
        -t * gain - blocks.iter().map(|b| b.logdet).sum::<f64>()
    }

    fn gradient_and_hessian(&self, t: f64, blocks: &[Block; 3]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let n0 = self.n0();
        // M⁻¹A_i for each coordinate and each block it enters
        let own: Vec<ComplexMatrix> = (0..n)
            .map(|i| {
                if i < n0 {
                    &blocks[0].inverse * &self.basis0[i]
                } else {
                    &blocks[1].inverse * &self.basis1[i - n0]
                }
            })
            .collect();
        let shared: Vec<ComplexMatrix> =
            self.lifted.iter().map(|l| &blocks[2].inverse * l).collect();

        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n * n];
        for i in 0..n {
            grad[i] = -t * self.gain[i] - own[i].trace().re + shared[i].trace().re;
            for j in 0..=i {
                let mut h = shared[i].trace_product(&shared[j]).re;
                if (i < n0) == (j < n0) {
                    h += own[i].trace_product(&own[j]).re;
                }
                hess[i * n + j] = h;
                hess[j * n + i] = h;
            }
        }
        (grad, hess)
    }

    fn follow_path(&self, mut x: Vec<f64>, max_iters: usize) -> Run {
        let n = self.n();
        let mut iterations = 0;
        if n == 0 {
            return Run {
                x,
                iterations,
                converged: true,
            };
        }
        let weight = self.barrier_weight();
        let mut t = 1.0;
        loop {
            let centered = self.center(t, &mut x, &mut iterations, max_iters);
            if !centered || weight / t < GAP_TARGET {
                return Run {
                    x,
                    iterations,
                    converged: centered,
                };
            }
            t *= BARRIER_GROWTH;
        }
    }

    /// Damped Newton minimization of the barrier objective at fixed `t`.
    fn center(&self, t: f64, x: &mut Vec<f64>, iterations: &mut usize, max_iters: usize) -> bool {
        let n = self.n();
        while *iterations < max_iters {
            let Some(blocks) = self.blocks(x) else {
                return false;
            };
            let f = self.objective(t, x, &blocks);
            let (grad, hess) = self.gradient_and_hessian(t, &blocks);
            let Some(step) = newton_direction(&hess, &grad, n) else {
                return false;
            };
            *iterations += 1;
            let slope: f64 = grad.iter().zip(&step).map(|(g, s)| g * s).sum();
            if -slope / 2.0 <= CENTERING_TOL {
                return true;
            }
            let mut s = 1.0;
            loop {
                if -s * slope <= 1e-14 * f.abs().max(1.0) {
                    // the predicted decrease is below the rounding of the objective
                    return true;
                }
                let trial: Vec<f64> = x.iter().zip(&step).map(|(xi, di)| xi + s * di).collect();
                if let Some(tb) = self.blocks(&trial) {
                    if self.objective(t, &trial, &tb) <= f + ARMIJO * s * slope {
                        *x = trial;
                        break;
                    }
                }
                s *= 0.5;
            }
        }
        false
    }
}

fn block(m: &ComplexMatrix) -> Option<Block> {
    if m.dim() == 0 {
        return Some(Block {
            inverse: ComplexMatrix::zeros(0),
            logdet: 0.0,
        });
    }
    let es = eigh(&HermitianMatrix::hermitian_part(m)).ok()?;
    if es.min() <= 0.0 {
        return None;
    }
    let inverse = es.reconstruct_with(|l| 1.0 / l).into_matrix();
    let logdet = es.eigenvalues.iter().map(|l| l.ln()).sum();
    Some(Block { inverse, logdet })
}

fn random_block(k: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    let g = ComplexMatrix::from_fn(k, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im)
    });
    let gram = HermitianMatrix::hermitian_part(&(&g * &g.adjoint()));
    let top = eigh(&gram).map(|es| es.max()).unwrap_or(1.0).max(1e-300);
    &gram.as_matrix().scale(0.2 / top) + &ComplexMatrix::identity(k).scale(0.05)
}

/// Solves `H d = −g` by Cholesky, adding diagonal jitter if `H` is numerically singular.
fn newton_direction(hess: &[f64], grad: &[f64], n: usize) -> Option<Vec<f64>> {
    let scale = (0..n).map(|i| hess[i * n + i]).fold(0.0, f64::max);
    let mut jitter = 0.0;
    for _ in 0..8 {
        if let Some(l) = cholesky(hess, n, jitter) {
            let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
            return Some(cholesky_solve(&l, n, &rhs));
        }
        jitter = if jitter == 0.0 {
            1e-14 * scale
        } else {
            jitter * 100.0
        };
    }
    None
}

fn cholesky(a: &[f64], n: usize, jitter: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            if i == j {
                sum += jitter;
            }
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}
