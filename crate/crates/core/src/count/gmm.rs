//! Two-dimensional Gaussian mixtures fitted by EM, with BIC model selection.

use num_complex::Complex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, domain};
use crate::scalar::Scalar;

/// 2x2 symmetric matrix `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cov2<T> {
    pub xx: T,
    pub xy: T,
    pub yy: T,
}

impl<T: Scalar> Cov2<T> {
    pub fn det(&self) -> T {
        self.xx * self.yy - self.xy * self.xy
    }

    /// `(larger, smaller)` eigenvalue.
    pub fn eigenvalues(&self) -> (T, T) {
        let two = T::lit(2.0);
        let mid = (self.xx + self.yy) / two;
        let rad = (((self.xx - self.yy) / two).powi(2) + self.xy * self.xy).sqrt();
        (mid + rad, mid - rad)
    }

    /// Raise every eigenvalue to at least `floor`, keeping eigenvectors.
    /// This is also the maximum-likelihood covariance under that constraint.
    pub fn clamped(&self, floor: T) -> Self {
        let (l1, l2) = self.eigenvalues();
        if l2 >= floor {
            return *self;
        }
        let scale = self.xx.abs().max(self.yy.abs()).max(floor);
        if self.xy.abs() <= T::epsilon() * scale {
            return Self { xx: self.xx.max(floor), xy: T::zero(), yy: self.yy.max(floor) };
        }
        // eigenvector of l1, picked from the better-conditioned row
        let (vx, vy) = if (l1 - self.xx).abs() > (l1 - self.yy).abs() {
            (self.xy, l1 - self.xx)
        } else {
            (l1 - self.yy, self.xy)
        };
        let norm = (vx * vx + vy * vy).sqrt();
        let (ux, uy) = (vx / norm, vy / norm);
        let (a, b) = (l1.max(floor), l2.max(floor));
        // a u u^T + b w w^T with w = (-uy, ux)
        Self {
            xx: a * ux * ux + b * uy * uy,
            xy: (a - b) * ux * uy,
            yy: a * uy * uy + b * ux * ux,
        }
    }
}

/// Mixture of `L` bivariate normals over the I/Q plane.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams<T> {
    pub weights: Vec<T>,
    pub means: Vec<Complex<T>>,
    pub covariances: Vec<Cov2<T>>,
}

impl<T: Scalar> GmmParams<T> {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    /// Per component: `ln pi - ln 2pi - ln|Sigma|/2` and the inverse
    /// covariance entries `(xx, xy, yy)`.
    fn constants(&self) -> Vec<(T, T, T, T)> {
        let ln_2pi = T::lit((2.0 * std::f64::consts::PI).ln());
        let half = T::lit(0.5);
        self.covariances
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| {
                let det = c.det();
                (w.ln() - ln_2pi - half * det.ln(), c.yy / det, -c.xy / det, c.xx / det)
            })
            .collect()
    }

    /// Total log-likelihood and per-point responsibilities (`n x L`, row-major).
    pub fn e_step(&self, points: &[Complex<T>]) -> (T, Vec<T>) {
        let l = self.components();
        let consts = self.constants();
        let half = T::lit(0.5);
        let mut resp = vec![T::zero(); points.len() * l];
        let mut ll = T::zero();
        for (x, row) in points.iter().zip(resp.chunks_mut(l)) {
            let mut max = T::neg_infinity();
            for ((o, &(k, ixx, ixy, iyy)), m) in row.iter_mut().zip(&consts).zip(&self.means) {
                let (dx, dy) = (x.re - m.re, x.im - m.im);
                *o = k - half * (ixx * dx * dx + T::lit(2.0) * ixy * dx * dy + iyy * dy * dy);
                max = max.max(*o);
            }
            let mut sum = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            let inv = sum.recip();
            for v in row.iter_mut() {
                *v *= inv;
            }
            ll += max + sum.ln();
        }
        (ll, resp)
    }

    pub fn log_likelihood(&self, points: &[Complex<T>]) -> T {
        self.e_step(points).0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    /// Stop once the log-likelihood gain of an iteration drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Independent seeded starts; the best final log-likelihood is kept.
    pub restarts: usize,
    pub cov_floor: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 200, restarts: 3, cov_floor: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit<T> {
    pub params: GmmParams<T>,
    pub log_likelihood: T,
    /// Log-likelihood at every E-step of the winning start.
    pub history: Vec<T>,
    /// Iterations of the winning start in which an emptied component was
    /// re-seeded (the log-likelihood may drop there).
    pub reseeded: Vec<usize>,
}

fn sample_cov<T: Scalar>(points: &[Complex<T>], w: Option<&[T]>, mean: Complex<T>, total: T) -> Cov2<T> {
    let mut c = Cov2 { xx: T::zero(), xy: T::zero(), yy: T::zero() };
    for (i, x) in points.iter().enumerate() {
        let g = w.map_or(T::one(), |w| w[i]);
        let d = x - mean;
        c.xx += g * d.re * d.re;
        c.xy += g * d.re * d.im;
        c.yy += g * d.im * d.im;
    }
    Cov2 { xx: c.xx / total, xy: c.xy / total, yy: c.yy / total }
}

/// k-means++ seeding: the first mean uniformly, then each next one with
/// probability proportional to its squared distance to the nearest chosen mean.
fn kmeans_pp<T: Scalar, R: Rng>(points: &[Complex<T>], l: usize, rng: &mut R) -> Vec<Complex<T>> {
    let mut means = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| (p - means[0]).norm_sqr().as_f64()).collect();
    while means.len() < l {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if u < *d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        let m = points[pick];
        means.push(m);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min((p - m).norm_sqr().as_f64());
        }
    }
    means
}

fn fit_once<T: Scalar>(points: &[Complex<T>], l: usize, seed: u64, opts: &EmOptions) -> GmmFit<T> {
    let n = points.len();
    let nf = T::lit(n as f64);
    let floor = T::lit(opts.cov_floor);
    let global_mean = points.iter().fold(Complex::new(T::zero(), T::zero()), |a, p| a + p) / nf;
    let global_cov = sample_cov(points, None, global_mean, nf).clamped(floor);
    let mut rng = rng::seeded(seed);
    let mut params = GmmParams {
        weights: vec![T::one() / T::lit(l as f64); l],
        means: if l == 1 { vec![global_mean] } else { kmeans_pp(points, l, &mut rng) },
        covariances: vec![global_cov; l],
    };
    let mut history = Vec::new();
    let mut reseeded = Vec::new();
    let min_mass = T::lit(1e-10);
    for iter in 0..=opts.max_iter {
        let (ll, resp) = params.e_step(points);
        let converged = history.last().is_some_and(|&prev: &T| (ll - prev).as_f64() < opts.tol);
        history.push(ll);
        if converged || iter == opts.max_iter {
            break;
        }
        let mut emptied = false;
        for c in 0..l {
            let w: Vec<T> = resp.iter().skip(c).step_by(l).copied().collect();
            let mass: T = w.iter().copied().sum();
            if mass < min_mass {
                emptied = true;
                // farthest point from every other component mean
                let far = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        let d = params
                            .means
                            .iter()
                            .enumerate()
                            .filter(|(j, _)| *j != c)
                            .map(|(_, m)| (p - m).norm_sqr())
                            .fold(T::infinity(), T::min);
                        (i, d)
                    })
                    .fold((0, T::neg_infinity()), |best, cur| if cur.1 > best.1 { cur } else { best })
                    .0;
                params.means[c] = points[far];
                params.covariances[c] = global_cov;
                params.weights[c] = T::one() / nf;
                continue;
            }
            let mean = points.iter().zip(&w).fold(Complex::new(T::zero(), T::zero()), |a, (p, g)| a + p * *g) / mass;
            params.means[c] = mean;
            params.covariances[c] = sample_cov(points, Some(&w), mean, mass).clamped(floor);
            params.weights[c] = mass / nf;
        }
        if emptied {
            let s: T = params.weights.iter().copied().sum();
            for w in &mut params.weights {
                *w /= s;
            }
            reseeded.push(iter);
        }
    }
    let log_likelihood = *history.last().unwrap();
    GmmFit { params, log_likelihood, history, reseeded }
}

/// Fit an `l`-component mixture by EM from k-means++ starts.
pub fn gmm_fit_em<T: Scalar>(points: &[Complex<T>], l: usize, seed: u64, opts: &EmOptions) -> Result<GmmFit<T>> {
    if l == 0 {
        return Err(Error::domain("mixture needs at least one component"));
    }
    if points.len() < l {
        return Err(Error::domain(format!("{} points cannot support {l} components", points.len())));
    }
    // a single component has a closed-form fit, so restarts are redundant
    let starts = if l == 1 { 1 } else { opts.restarts.max(1) };
    let mut best: Option<GmmFit<T>> = None;
    for s in 0..starts {
        let fit = fit_once(points, l, rng::derive_seed(seed, domain::GMM, (l * 64 + s) as u64), opts);
        if best.as_ref().is_none_or(|b| fit.log_likelihood > b.log_likelihood) {
            best = Some(fit);
        }
    }
    Ok(best.unwrap())
}

/// Free parameters of an `l`-component bivariate full-covariance mixture:
/// `l - 1` weights, `2l` mean coordinates, `3l` covariance entries.
pub fn free_parameters(l: usize) -> usize {
    6 * l - 1
}

/// `-2 ln L + p ln n`; lower is better.
pub fn bic_score(log_likelihood: f64, l: usize, n_points: usize) -> f64 {
    -2.0 * log_likelihood + free_parameters(l) as f64 * (n_points as f64).ln()
}
