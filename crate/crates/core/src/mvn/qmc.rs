//! Randomized quasi-Monte Carlo for lower-orthant MVN probabilities in any
//! dimension: Genz's separation-of-variables transform with
//! expected-value variable reordering, evaluated on randomly shifted rank-1
//! lattices (fast component-by-component construction) with a tent
//! periodization and antithetic pairs. Lattice sizes roughly double each
//! round; rounds are combined by their error estimates, each being three
//! standard errors across the random shifts.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use rand::Rng as _;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::normal::{norm_cdf, norm_pdf, norm_ppf};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

const SHIFTS: usize = 12;
const FIRST_SIZE: u64 = 1_009;

/// Cholesky factor of a correlation matrix after reordering the variates so
/// that the most constrained ones come first.
struct Reordered {
    chol: DMatrix<f64>,
    upper: Vec<f64>,
}

fn reorder(corr: &DMatrix<f64>, upper: &[f64]) -> Result<Reordered> {
    let q = upper.len();
    let mut c = corr.clone();
    let mut b = upper.to_vec();
    let mut l = DMatrix::<f64>::zeros(q, q);
    let mut y = vec![0.0; q];
    for j in 0..q {
        // pick the variate with the smallest conditional probability
        let mut best = j;
        let mut best_p = f64::INFINITY;
        for i in j..q {
            let s2 = c[(i, i)] - (0..j).map(|k| l[(i, k)] * l[(i, k)]).sum::<f64>();
            let s = s2.max(1e-300).sqrt();
            let shift: f64 = (0..j).map(|k| l[(i, k)] * y[k]).sum();
            let p = norm_cdf((b[i] - shift) / s);
            if p < best_p {
                best_p = p;
                best = i;
            }
        }
        if best != j {
            c.swap_rows(j, best);
            c.swap_columns(j, best);
            l.swap_rows(j, best);
            b.swap(j, best);
        }
        let s2 = c[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
        if s2 <= 1e-14 {
            return Err(Error::SingularMatrix);
        }
        let s = s2.sqrt();
        l[(j, j)] = s;
        for i in (j + 1)..q {
            let v = c[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
            l[(i, j)] = v / s;
        }
        // truncated-normal mean of the chosen variate
        let shift: f64 = (0..j).map(|k| l[(j, k)] * y[k]).sum();
        let bj = (b[j] - shift) / s;
        let pj = norm_cdf(bj);
        y[j] = if pj > 1e-300 { -norm_pdf(bj) / pj } else { bj };
    }
    Ok(Reordered { chol: l, upper: b })
}

/// Integrand of the separated form at a point of the unit cube of dimension q-1.
fn integrand(r: &Reordered, w: &[f64], y: &mut [f64]) -> f64 {
    let q = r.upper.len();
    let mut f = 1.0;
    for i in 0..q {
        let shift: f64 = (0..i).map(|k| r.chol[(i, k)] * y[k]).sum();
        let e = norm_cdf((r.upper[i] - shift) / r.chol[(i, i)]);
        f *= e;
        if f == 0.0 {
            return 0.0;
        }
        if i + 1 < q {
            y[i] = norm_ppf((w[i] * e).clamp(1e-300, 1.0 - 1e-16));
        }
    }
    f
}

fn is_prime(n: u64) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0)
}

fn prime_at_most(n: u64) -> u64 {
    (2..=n.max(2)).rev().find(|&p| is_prime(p)).unwrap_or(2)
}

fn pow_mod(base: u64, mut exp: u64, m: u64) -> u64 {
    let (mut b, mut r, m) = (u128::from(base) % u128::from(m), 1u128, u128::from(m));
    while exp > 0 {
        if exp & 1 == 1 {
            r = r * b % m;
        }
        b = b * b % m;
        exp >>= 1;
    }
    r as u64
}

fn primitive_root(p: u64) -> u64 {
    let pm = p - 1;
    let mut factors = Vec::new();
    let (mut x, mut d) = (pm, 2);
    while d * d <= x {
        if x % d == 0 {
            factors.push(d);
            while x % d == 0 {
                x /= d;
            }
        }
        d += 1;
    }
    if x > 1 {
        factors.push(x);
    }
    (2..p).find(|&r| factors.iter().all(|&f| pow_mod(r, pm / f, p) != 1)).unwrap_or(1)
}

/// Generating vector of an n-point rank-1 lattice (n prime) built one
/// component at a time to minimize the worst-case error for product
/// weights, with the circulant structure handled by FFTs.
fn cbc_generator(dim: usize, n: u64) -> Vec<u64> {
    let mut z = vec![1u64; dim];
    let m = ((n - 1) / 2) as usize;
    if dim < 2 || m < 2 {
        return z;
    }
    let g = primitive_root(n);
    let mut perm = vec![1u64; m];
    for j in 1..m {
        perm[j] = perm[j - 1] * g % n;
    }
    for v in &mut perm {
        *v = (*v).min(n - *v);
    }
    // second Bernoulli polynomial at the permuted lattice points
    let c: Vec<f64> = perm
        .iter()
        .map(|&v| {
            let x = v as f64 / n as f64;
            x * x - x + 1.0 / 6.0
        })
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut fc: Vec<Complex<f64>> = c.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fwd.process(&mut fc);
    let mut prod = vec![1.0f64; m];
    let mut w = 0usize;
    for (s, zs) in z.iter_mut().enumerate().skip(1) {
        let gamma = if s == 1 { 1.0 } else { 0.8f64.powi(s as i32 - 2) };
        let rotated = c[..=w].iter().rev().chain(c[w + 1..].iter().rev());
        for (p, r) in prod.iter_mut().zip(rotated) {
            *p *= 1.0 + gamma * r;
        }
        let mut buf: Vec<Complex<f64>> = prod.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fwd.process(&mut buf);
        for (a, b) in buf.iter_mut().zip(&fc) {
            *a *= b;
        }
        inv.process(&mut buf);
        w = (0..m).min_by(|&a, &b| buf[a].re.total_cmp(&buf[b].re)).unwrap_or(0);
        *zs = perm[w];
    }
    z
}

type GeneratorCache = Mutex<HashMap<(usize, u64), Arc<Vec<u64>>>>;

fn generator(dim: usize, n: u64) -> Arc<Vec<u64>> {
    static CACHE: OnceLock<GeneratorCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(z) = cache.lock().unwrap_or_else(|e| e.into_inner()).get(&(dim, n)) {
        return z.clone();
    }
    let z = Arc::new(cbc_generator(dim, n));
    cache.lock().unwrap_or_else(|e| e.into_inner()).insert((dim, n), z.clone());
    z
}

/// Mean of the integrand over one shifted lattice, with antithetic pairs.
fn lattice_mean(r: &Reordered, z: &[u64], n: u64, shift: &[f64], y: &mut [f64]) -> f64 {
    let dim = z.len();
    let mut w = vec![0.0; dim];
    let mut wa = vec![0.0; dim];
    let mut acc = 0.0;
    for k in 0..n {
        for d in 0..dim {
            let x = ((k * z[d] % n) as f64 / n as f64 + shift[d]).fract();
            let t = (2.0 * x - 1.0).abs();
            w[d] = t;
            wa[d] = 1.0 - t;
        }
        acc += 0.5 * (integrand(r, &w, y) + integrand(r, &wa, y));
    }
    acc / n as f64
}

/// Lower-orthant probability P(Z <= upper) for Z ~ N(0, corr).
pub fn qmc_cdf(corr: &DMatrix<f64>, upper: &[f64], abs_tol: f64, max_evals: usize, seed: u64) -> Result<(f64, f64)> {
    let q = upper.len();
    if upper.contains(&f64::NEG_INFINITY) {
        return Ok((0.0, 0.0));
    }
    let reordered = reorder(corr, upper)?;
    let dim = q - 1;
    let mut rng = rng_from_seed(seed);
    let mut y = vec![0.0; q];
    let per_point = 2 * SHIFTS;
    let mut target = FIRST_SIZE.min((max_evals / per_point).max(2) as u64);
    let (mut estimate, mut error, mut evals) = (0.0, f64::INFINITY, 0usize);
    loop {
        let n = prime_at_most(target);
        let z = generator(dim, n);
        let means: Vec<f64> = (0..SHIFTS)
            .map(|_| {
                let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
                lattice_mean(&reordered, &z, n, &shift, &mut y)
            })
            .collect();
        evals += per_point * n as usize;
        let mean = means.iter().sum::<f64>() / SHIFTS as f64;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (SHIFTS as f64 * (SHIFTS as f64 - 1.0));
        let round_err = 3.0 * var.sqrt();
        if error.is_infinite() {
            (estimate, error) = (mean, round_err);
        } else {
            let wt = 1.0 / (1.0 + (round_err / error).powi(2));
            estimate += wt * (mean - estimate);
            error = wt.sqrt() * round_err;
        }
        if error <= abs_tol {
            return Ok((estimate.clamp(0.0, 1.0), error));
        }
        // double the lattice, or spend what is left of the budget on a last round
        let room = (max_evals.saturating_sub(evals) / per_point) as u64;
        if room < target {
            return Err(Error::AccuracyNotMet { estimate: estimate.clamp(0.0, 1.0), error, tol: abs_tol, evals });
        }
        target = (2 * target).min(room);
    }
}
