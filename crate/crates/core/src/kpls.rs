//! Kriging with partial-least-squares kernel reduction.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Columns whose spread is below this are treated as constant.
const MIN_SCALE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KplsConfig {
    pub components: usize,
    pub theta_bounds: (f64, f64),
    pub multistart: usize,
    pub nugget_start: f64,
    pub nugget_max: f64,
    pub simplex_iters: u64,
}

impl Default for KplsConfig {
    fn default() -> Self {
        KplsConfig {
            components: 2,
            theta_bounds: (1e-6, 1e2),
            multistart: 8,
            nugget_start: 1e-10,
            nugget_max: 1e-6,
            simplex_iters: 200,
        }
    }
}

impl KplsConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.theta_bounds;
        if self.components == 0 {
            return Err(Error::Config("at least one PLS component is required".into()));
        }
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::Config(format!("invalid theta bounds ({lo}, {hi})")));
        }
        if self.multistart == 0 {
            return Err(Error::Config("multistart must be positive".into()));
        }
        if !(self.nugget_start > 0.0 && self.nugget_start <= self.nugget_max) {
            return Err(Error::Config("need 0 < nugget_start ≤ nugget_max".into()));
        }
        Ok(())
    }
}

/// Per-column centering and scaling; constant columns map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Zero marks a dropped column.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Standardizer {
        let n = rows.len() as f64;
        let d = rows[0].len();
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in scale.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        for s in &mut scale {
            *s = s.sqrt();
            if *s < MIN_SCALE {
                *s = 0.0;
            }
        }
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| if *s == 0.0 { 0.0 } else { (v - m) / s })
            .collect()
    }
}

/// NIPALS PLS1 weight vectors, one per component, each of unit norm.
/// Stops early when the deflated cross-covariance vanishes.
pub fn pls_fit(x: &DMatrix<f64>, y: &DVector<f64>, h: usize) -> Vec<DVector<f64>> {
    let mut xl = x.clone();
    let mut yl = y.add_scalar(-y.mean());
    let mut weights = Vec::with_capacity(h);
    let tol = 1e-10 * (1.0 + x.norm() * y.norm());
    for _ in 0..h {
        let c = xl.tr_mul(&yl);
        let norm = c.norm();
        if norm <= tol {
            break;
        }
        let w = c / norm;
        let t = &xl * &w;
        let tt = t.dot(&t);
        if tt <= 0.0 {
            break;
        }
        let p = xl.tr_mul(&t) / tt;
        xl -= &t * p.transpose();
        yl -= &t * (t.dot(&yl) / tt);
        weights.push(w);
    }
    weights
}

/// Pairwise per-component weighted squared distances of the training rows.
struct Distances {
    /// `[l][i * n + j]`
    per_component: Vec<Vec<f64>>,
    n: usize,
}

fn weighted_sq(a: &[f64], b: &[f64], w2: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(w2)
        .map(|((x, y), w)| w * (x - y) * (x - y))
        .sum()
}

impl Distances {
    fn new(rows: &[Vec<f64>], w2: &[Vec<f64>]) -> Distances {
        let n = rows.len();
        let per_component = w2
            .iter()
            .map(|w| {
                let mut d = vec![0.0; n * n];
                for i in 0..n {
                    for j in i + 1..n {
                        let v = weighted_sq(&rows[i], &rows[j], w);
                        d[i * n + j] = v;
                        d[j * n + i] = v;
                    }
                }
                d
            })
            .collect();
        Distances { per_component, n }
    }

    fn correlation(&self, theta: &[f64], nugget: f64) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |i, j| {
            let e: f64 = theta
                .iter()
                .zip(&self.per_component)
                .map(|(t, d)| t * d[i * n + j])
                .sum();
            let r = (-e).exp();
            if i == j {
                r + nugget
            } else {
                r
            }
        })
    }
}

/// Closed-form parts of the concentrated likelihood at one θ.
#[derive(Debug, Clone)]
struct Profile {
    chol: Cholesky<f64, Dyn>,
    nugget: f64,
    beta: f64,
    sigma2: f64,
    alpha: DVector<f64>,
    rinv_one: DVector<f64>,
    one_rinv_one: f64,
    log_likelihood: f64,
}

fn profile(dist: &Distances, y: &DVector<f64>, theta: &[f64], cfg: &KplsConfig) -> Option<Profile> {
    let n = y.len();
    let mut nugget = cfg.nugget_start;
    let chol = loop {
        if let Some(c) = dist.correlation(theta, nugget).cholesky() {
            break c;
        }
        nugget *= 10.0;
        if nugget > cfg.nugget_max * (1.0 + 1e-9) {
            return None;
        }
    };
    let ones = DVector::from_element(n, 1.0);
    let rinv_one = chol.solve(&ones);
    let rinv_y = chol.solve(y);
    let one_rinv_one = rinv_one.sum();
    let beta = rinv_y.sum() / one_rinv_one;
    let resid = y.add_scalar(-beta);
    let alpha = chol.solve(&resid);
    let sigma2 = (resid.dot(&alpha) / n as f64).max(0.0);
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let log_likelihood = if sigma2 > 0.0 {
        -0.5 * (n as f64 * sigma2.ln() + log_det)
    } else {
        f64::INFINITY
    };
    Some(Profile {
        chol,
        nugget,
        beta,
        sigma2,
        alpha,
        rinv_one,
        one_rinv_one,
        log_likelihood,
    })
}

/// Negative concentrated log-likelihood over `log10 θ`, clamped to bounds.
#[derive(Clone, Copy)]
struct Objective<'a> {
    dist: &'a Distances,
    y: &'a DVector<f64>,
    cfg: &'a KplsConfig,
}

impl Objective<'_> {
    fn theta(&self, log_theta: &[f64]) -> Vec<f64> {
        let (lo, hi) = self.cfg.theta_bounds;
        log_theta
            .iter()
            .map(|v| 10f64.powf(*v).clamp(lo, hi))
            .collect()
    }
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        Ok(match profile(self.dist, self.y, &self.theta(p), self.cfg) {
            Some(pr) if pr.log_likelihood.is_finite() => -pr.log_likelihood,
            _ => f64::MAX,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl Prediction {
    pub fn std_dev(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

#[derive(Debug, Clone)]
enum Fit {
    /// All targets equal.
    Constant(f64),
    Kriging {
        rows: Vec<Vec<f64>>,
        /// Squared PLS weights, one vector per component.
        w2: Vec<Vec<f64>>,
        theta: Vec<f64>,
        profile: Box<Profile>,
    },
}

#[derive(Debug, Clone)]
pub struct KplsModel {
    standardizer: Standardizer,
    /// PLS weight vectors over the standardized columns.
    weights: Vec<Vec<f64>>,
    y: Vec<f64>,
    fit: Fit,
    dropped_duplicates: usize,
}

/// Diagnostics dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub n: usize,
    pub d: usize,
    pub h: usize,
    pub theta: Vec<f64>,
    pub sigma2: f64,
    pub beta: f64,
    pub nugget: f64,
    pub log_likelihood: Option<f64>,
    pub degenerate: bool,
    pub dropped_duplicates: usize,
}

impl KplsModel {
    /// Fits on `rows` (semantic vectors) and targets `y`.
    pub fn fit(rows: &[Vec<f64>], y: &[f64], cfg: &KplsConfig) -> Result<KplsModel> {
        cfg.validate()?;
        if rows.len() != y.len() {
            return Err(Error::Dimension {
                expected: rows.len(),
                got: y.len(),
            });
        }
        let d = rows.first().map_or(0, Vec::len);
        if d == 0 {
            return Err(Error::Fit("semantic vectors are empty".into()));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                got: bad.len(),
            });
        }
        if rows.iter().flatten().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::Fit("non-finite training data".into()));
        }
        // Keep the first occurrence of each distinct row.
        let mut keep: Vec<usize> = Vec::with_capacity(rows.len());
        for i in 0..rows.len() {
            match keep.iter().find(|&&k| rows[k] == rows[i]) {
                Some(&k) if y[k] != y[i] => {
                    log::warn!("duplicate semantic vector with conflicting fitness; keeping the first")
                }
                Some(_) => {}
                None => keep.push(i),
            }
        }
        let dropped_duplicates = rows.len() - keep.len();
        let raw: Vec<Vec<f64>> = keep.iter().map(|&i| rows[i].clone()).collect();
        let y: Vec<f64> = keep.iter().map(|&i| y[i]).collect();
        let n = y.len();
        if n < 2 {
            return Err(Error::Fit(format!("need at least 2 distinct rows, have {n}")));
        }
        let standardizer = Standardizer::fit(&raw);
        let std_rows: Vec<Vec<f64>> = raw.iter().map(|r| standardizer.apply(r)).collect();

        let y_min = y.iter().copied().fold(f64::INFINITY, f64::min);
        let y_max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let constant = KplsModel {
            standardizer: standardizer.clone(),
            weights: vec![],
            y: y.clone(),
            fit: Fit::Constant(y[0]),
            dropped_duplicates,
        };
        if y_max - y_min <= f64::EPSILON * y_max.abs().max(1.0) {
            return Ok(constant);
        }
        let live = standardizer.scale.iter().filter(|&&s| s > 0.0).count();
        let h = cfg.components.min(n - 1).min(live);
        let xm = DMatrix::from_fn(n, d, |i, j| std_rows[i][j]);
        let yv = DVector::from_vec(y.clone());
        let weights: Vec<Vec<f64>> = pls_fit(&xm, &yv, h)
            .into_iter()
            .map(|w| w.iter().copied().collect())
            .collect();
        if weights.is_empty() {
            log::warn!("targets are uncorrelated with every semantic dimension; predicting the mean");
            return Ok(KplsModel {
                fit: Fit::Constant(yv.mean()),
                ..constant
            });
        }
        let w2: Vec<Vec<f64>> = weights
            .iter()
            .map(|w| w.iter().map(|v| v * v).collect())
            .collect();
        let dist = Distances::new(&std_rows, &w2);
        let objective = Objective {
            dist: &dist,
            y: &yv,
            cfg,
        };
        let (lo, hi) = (cfg.theta_bounds.0.log10(), cfg.theta_bounds.1.log10());
        let h = weights.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for k in 0..cfg.multistart {
            let start = if cfg.multistart == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * k as f64 / (cfg.multistart - 1) as f64
            };
            let seed = vec![start; h];
            let mut simplex = vec![seed.clone()];
            let step = 0.1 * (hi - lo);
            for l in 0..h {
                let mut v = seed.clone();
                v[l] += if start + step <= hi { step } else { -step };
                simplex.push(v);
            }
            let solver = NelderMead::new(simplex)
                .with_sd_tolerance(1e-8)
                .map_err(|e| Error::Fit(e.to_string()))?;
            let result = Executor::new(objective, solver)
                .configure(|s| s.max_iters(cfg.simplex_iters))
                .run()
                .map_err(|e| Error::Fit(e.to_string()))?;
            let state = result.state();
            let cost = state.get_best_cost();
            if let Some(p) = state.get_best_param() {
                if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                    best = Some((cost, p.clone()));
                }
            }
        }
        let (cost, log_theta) = best.ok_or_else(|| Error::Fit("likelihood search failed".into()))?;
        let theta = objective.theta(&log_theta);
        let pr = profile(&dist, &yv, &theta, cfg).filter(|_| cost < f64::MAX).ok_or_else(|| {
            Error::Fit(format!(
                "correlation matrix not positive definite with nugget up to {}",
                cfg.nugget_max
            ))
        })?;
        Ok(KplsModel {
            standardizer,
            weights,
            y,
            fit: Fit::Kriging {
                rows: std_rows,
                w2,
                theta,
                profile: Box::new(pr),
            },
            dropped_duplicates,
        })
    }

    pub fn dim(&self) -> usize {
        self.standardizer.mean.len()
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self.fit, Fit::Constant(_))
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    /// PLS weight vectors over standardized columns (empty when degenerate).
    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn theta(&self) -> &[f64] {
        match &self.fit {
            Fit::Kriging { theta, .. } => theta,
            Fit::Constant(_) => &[],
        }
    }

    pub fn sigma2(&self) -> f64 {
        match &self.fit {
            Fit::Kriging { profile, .. } => profile.sigma2,
            Fit::Constant(_) => 0.0,
        }
    }

    pub fn beta(&self) -> f64 {
        match &self.fit {
            Fit::Kriging { profile, .. } => profile.beta,
            Fit::Constant(c) => *c,
        }
    }

    pub fn nugget(&self) -> f64 {
        match &self.fit {
            Fit::Kriging { profile, .. } => profile.nugget,
            Fit::Constant(_) => 0.0,
        }
    }

    /// Lower Cholesky factor of the regularized correlation matrix.
    pub fn cholesky_factor(&self) -> Option<DMatrix<f64>> {
        match &self.fit {
            Fit::Kriging { profile, .. } => Some(profile.chol.l()),
            Fit::Constant(_) => None,
        }
    }

    /// Correlation between two raw semantic vectors, without the nugget
    /// term that applies at coincident inputs.
    pub fn correlation(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.check_dim(a)?;
        self.check_dim(b)?;
        Ok(match &self.fit {
            Fit::Kriging { w2, theta, .. } => {
                let (sa, sb) = (self.standardizer.apply(a), self.standardizer.apply(b));
                let e: f64 = theta.iter().zip(w2).map(|(t, w)| t * weighted_sq(&sa, &sb, w)).sum();
                (-e).exp()
            }
            Fit::Constant(_) => 1.0,
        })
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        self.check_dim(x)?;
        let Fit::Kriging {
            rows,
            w2,
            theta,
            profile: p,
        } = &self.fit
        else {
            let Fit::Constant(c) = self.fit else { unreachable!() };
            return Ok(Prediction {
                mean: c,
                variance: 0.0,
            });
        };
        let sx = self.standardizer.apply(x);
        // The nugget belongs to the kernel at coincident inputs, so a
        // training point reproduces its target exactly with zero variance.
        if let Some(i) = rows.iter().position(|row| *row == sx) {
            return Ok(Prediction {
                mean: self.y[i],
                variance: 0.0,
            });
        }
        let r = DVector::from_iterator(
            rows.len(),
            rows.iter().map(|row| {
                let e: f64 = theta.iter().zip(w2).map(|(t, w)| t * weighted_sq(&sx, row, w)).sum();
                (-e).exp()
            }),
        );
        let mean = p.beta + r.dot(&p.alpha);
        let rinv_r = p.chol.solve(&r);
        let u = 1.0 - p.rinv_one.dot(&r);
        let variance = p.sigma2 * (1.0 - r.dot(&rinv_r) + u * u / p.one_rinv_one);
        Ok(Prediction {
            mean,
            variance: variance.max(0.0),
        })
    }

    pub fn expected_improvement(&self, x: &[f64], f_best: f64) -> Result<f64> {
        let p = self.predict(x)?;
        Ok(expected_improvement(p.mean, p.std_dev(), f_best))
    }

    pub fn summary(&self) -> ModelSummary {
        let log_likelihood = match &self.fit {
            Fit::Kriging { profile, .. } => Some(profile.log_likelihood),
            Fit::Constant(_) => None,
        };
        ModelSummary {
            n: self.n(),
            d: self.dim(),
            h: self.weights.len(),
            theta: self.theta().to_vec(),
            sigma2: self.sigma2(),
            beta: self.beta(),
            nugget: self.nugget(),
            log_likelihood,
            degenerate: self.is_degenerate(),
            dropped_duplicates: self.dropped_duplicates,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).expect("summary serializes")
    }
}

/// Expected improvement over `f_best` for maximization.
pub fn expected_improvement(mean: f64, std_dev: f64, f_best: f64) -> f64 {
    let gain = mean - f_best;
    if std_dev <= 0.0 {
        return gain.max(0.0);
    }
    let normal = Normal::standard();
    let z = gain / std_dev;
    (gain * normal.cdf(z) + std_dev * normal.pdf(z)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    /// Gaussian elimination with partial pivoting.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    /// Kernel written straight from its definition on raw inputs.
    fn oracle_corr(model: &KplsModel, a: &[f64], b: &[f64]) -> f64 {
        let st = model.standardizer();
        let z = |x: &[f64], j: usize| if st.scale[j] == 0.0 { 0.0 } else { (x[j] - st.mean[j]) / st.scale[j] };
        let mut e = 0.0;
        for (t, w) in model.theta().iter().zip(model.weights()) {
            let s: f64 = (0..a.len()).map(|j| (w[j] * z(a, j) - w[j] * z(b, j)).powi(2)).sum();
            e += t * s;
        }
        (-e).exp()
    }

    /// Ordinary kriging through the bordered (Lagrangian) system, solved
    /// densely: `R λ + m 1 = r`, `1ᵀ λ = 1`.
    fn oracle_predict(model: &KplsModel, rows: &[Vec<f64>], y: &[f64], x: &[f64]) -> (f64, f64) {
        let n = rows.len();
        let nug = model.nugget();
        let mut a = vec![vec![0.0; n + 1]; n + 1];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = oracle_corr(model, &rows[i], &rows[j]) + if i == j { nug } else { 0.0 };
            }
            a[i][n] = 1.0;
            a[n][i] = 1.0;
        }
        let r: Vec<f64> = rows
            .iter()
            .map(|row| oracle_corr(model, row, x) + if row.as_slice() == x { nug } else { 0.0 })
            .collect();
        let mut rhs = r.clone();
        rhs.push(1.0);
        let sol = dense_solve(a.clone(), rhs);
        let (lambda, m) = (&sol[..n], sol[n]);
        let mean: f64 = lambda.iter().zip(y).map(|(l, v)| l * v).sum();
        // σ² from its own dense solves.
        let rmat: Vec<Vec<f64>> = a[..n].iter().map(|row| row[..n].to_vec()).collect();
        let rinv_y = dense_solve(rmat.clone(), y.to_vec());
        let rinv_1 = dense_solve(rmat.clone(), vec![1.0; n]);
        let beta = rinv_y.iter().sum::<f64>() / rinv_1.iter().sum::<f64>();
        let resid: Vec<f64> = y.iter().map(|v| v - beta).collect();
        let rinv_res = dense_solve(rmat, resid.clone());
        let sigma2 = resid.iter().zip(&rinv_res).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        let lr: f64 = lambda.iter().zip(&r).map(|(l, v)| l * v).sum();
        (mean, sigma2 * (1.0 - lr - m))
    }

    fn random_1d(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = stream(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64 + 0.05 * rng.random::<f64>()]).collect();
        let y = rows.iter().map(|r| (6.0 * r[0]).sin() + 0.1 * rng.random::<f64>()).collect();
        (rows, y)
    }

    #[test]
    fn single_informative_axis() {
        let x = DMatrix::from_row_slice(4, 2, &[-1.0, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![-1.0, -1.0, 1.0, 1.0]);
        let w = pls_fit(&x, &y, 1);
        assert_eq!(w.len(), 1);
        assert!((w[0][0].abs() - 1.0).abs() < 1e-8);
        assert!(w[0][1].abs() < 1e-8);
        // y is explained after one component, so a second cannot be found.
        assert_eq!(pls_fit(&x, &y, 2).len(), 1);
    }

    #[test]
    fn first_direction_matches_power_iteration() {
        // The first PLS weight maximizes cov(Xw, y)², i.e. it is the
        // dominant eigenvector of Xᵀy yᵀX.
        let mut rng = stream(42);
        let (n, d) = (20, 50);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] - 2.0 * r[7] + 0.3 * r[11] + 0.1 * rng.random::<f64>()).collect();
        let st = Standardizer::fit(&rows);
        let z: Vec<Vec<f64>> = rows.iter().map(|r| st.apply(r)).collect();
        let ym = y.iter().sum::<f64>() / n as f64;
        let yc: Vec<f64> = y.iter().map(|v| v - ym).collect();
        let xty: Vec<f64> = (0..d).map(|j| (0..n).map(|i| z[i][j] * yc[i]).sum()).collect();
        let mut v = vec![1.0; d];
        for _ in 0..50 {
            let dot: f64 = xty.iter().zip(&v).map(|(a, b)| a * b).sum();
            v = xty.iter().map(|a| a * dot).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.iter_mut().for_each(|a| *a /= norm);
        }
        let xm = DMatrix::from_fn(n, d, |i, j| z[i][j]);
        let w = &pls_fit(&xm, &DVector::from_vec(y), 2)[0];
        let cos: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!((cos.abs() - 1.0).abs() < 1e-10, "{cos}");
    }

    #[test]
    fn later_components_are_unit_and_scores_orthogonal() {
        let mut rng = stream(7);
        let rows: Vec<Vec<f64>> = (0..15).map(|_| (0..6).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] * r[1] + r[2]).collect();
        let xm = DMatrix::from_fn(15, 6, |i, j| rows[i][j] - 0.5);
        let w = pls_fit(&xm, &DVector::from_vec(y), 3);
        assert_eq!(w.len(), 3);
        for wl in &w {
            assert!((wl.norm() - 1.0).abs() < 1e-12);
        }
        // NIPALS weights are mutually orthogonal.
        assert!(w[0].dot(&w[1]).abs() < 1e-10);
        assert!(w[1].dot(&w[2]).abs() < 1e-10);
    }

    #[test]
    fn constant_column_gets_zero_weight() {
        let mut rng = stream(3);
        let rows: Vec<Vec<f64>> = (0..12).map(|_| vec![rng.random::<f64>(), 0.7, rng.random::<f64>()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] + r[2] * r[2]).collect();
        let model = KplsModel::fit(&rows, &y, &KplsConfig::default()).unwrap();
        assert_eq!(model.standardizer().scale[1], 0.0);
        for w in model.weights() {
            assert_eq!(w[1], 0.0);
        }
    }

    #[test]
    fn two_point_interpolation_and_midpoint_oracle() {
        let rows = vec![vec![0.0], vec![1.0]];
        let y = vec![0.0, 1.0];
        let model = KplsModel::fit(&rows, &y, &KplsConfig::default()).unwrap();
        let p = model.predict(&[0.0]).unwrap();
        assert!(p.mean.abs() < 1e-6, "{p:?}");
        assert!(p.variance <= 1e-6);
        let mid = model.predict(&[0.5]).unwrap();
        let (mean, var) = oracle_predict(&model, &rows, &y, &[0.5]);
        assert!((mid.mean - mean).abs() < 1e-8, "{} vs {mean}", mid.mean);
        assert!((mid.variance - var.max(0.0)).abs() < 1e-8);
    }

    #[test]
    fn random_one_dimensional_model_matches_dense_solve() {
        for seed in 0..4 {
            let (rows, y) = random_1d(10, seed);
            let model = KplsModel::fit(&rows, &y, &KplsConfig::default()).unwrap();
            let mut rng = stream(seed + 100);
            for _ in 0..10 {
                let x = [rng.random_range(-0.2..1.2)];
                let p = model.predict(&x).unwrap();
                let (mean, var) = oracle_predict(&model, &rows, &y, &x);
                assert!((p.mean - mean).abs() < 1e-8, "mean {} vs {mean}", p.mean);
                assert!((p.variance - var.max(0.0)).abs() < 1e-8, "var {} vs {var}", p.variance);
            }
        }
    }

    #[test]
    fn interpolates_training_points() {
        let mut rng = stream(9);
        let rows: Vec<Vec<f64>> = (0..25).map(|_| (0..8).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>().sin()).collect();
        let model = KplsModel::fit(&rows, &y, &KplsConfig::default()).unwrap();
        let range = y.iter().copied().fold(f64::MIN, f64::max) - y.iter().copied().fold(f64::MAX, f64::min);
        for (r, v) in rows.iter().zip(&y) {
            let p = model.predict(r).unwrap();
            assert!((p.mean - v).abs() <= 1e-6 * range, "{} vs {v}", p.mean);
            assert!(p.variance <= 1e-6 * model.sigma2());
        }
    }

    #[test]
    fn cholesky_reconstructs_correlation() {
        let (rows, y) = random_1d(12, 5);
        let model = KplsModel::fit(&rows, &y, &KplsConfig::default()).unwrap();
        let l = model.cholesky_factor().unwrap();
        let rr = &l * l.transpose();
        for i in 0..rows.len() {
            for j in 0..rows.len() {
                let expected = model.correlation(&rows[i], &rows[j]).unwrap() + if i == j { model.nugget() } else { 0.0 };
                assert!((rr[(i, j)] - expected).abs() < 1e-8);
                assert_eq!(
                    model.correlation(&rows[i], &rows[j]).unwrap(),
                    model.correlation(&rows[j], &rows[i]).unwrap()
                );
            }
            assert_eq!(model.correlation(&rows[i], &rows[i]).unwrap(), 1.0);
        }
        let (lo, hi) = KplsConfig::default().theta_bounds;
        assert!(model.theta().iter().all(|t| (lo..=hi).contains(t)));
    }

    #[test]
    fn far_points_revert_to_prior() {
        let (rows, y) = random_1d(10, 1);
        let model = KplsModel::fit(&rows, &y, &KplsConfig::default()).unwrap();
        let p = model.predict(&[1e4]).unwrap();
        assert!((p.mean - model.beta()).abs() < 1e-9);
        let Fit::Kriging { profile, .. } = &model.fit else { panic!() };
        let expected = model.sigma2() * (1.0 + 1.0 / profile.one_rinv_one);
        assert!((p.variance - expected).abs() < 1e-9 * expected.max(1.0));
    }

    #[test]
    fn constant_targets_give_degenerate_model() {
        let rows = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.5, 0.5]];
        let model = KplsModel::fit(&rows, &[0.7; 3], &KplsConfig::default()).unwrap();
        assert!(model.is_degenerate());
        let p = model.predict(&[9.0, -3.0]).unwrap();
        assert_eq!(p.mean, 0.7);
        assert_eq!(p.variance, 0.0);
        assert!(model.summary().degenerate);
    }

    #[test]
    fn duplicates_keep_first_and_errors_are_reported() {
        let rows = vec![vec![0.0], vec![1.0], vec![0.0], vec![2.0]];
        let y = vec![0.0, 1.0, 5.0, 0.5];
        let model = KplsModel::fit(&rows, &y, &KplsConfig::default()).unwrap();
        assert_eq!(model.n(), 3);
        assert_eq!(model.summary().dropped_duplicates, 1);
        assert!(model.predict(&[0.0]).unwrap().mean.abs() < 1e-6);
        assert!(matches!(model.predict(&[0.0, 1.0]), Err(Error::Dimension { .. })));
        assert!(KplsModel::fit(&[vec![1.0], vec![1.0]], &[0.0, 1.0], &KplsConfig::default()).is_err());
        assert!(KplsModel::fit(&[vec![1.0]], &[0.0, 1.0], &KplsConfig::default()).is_err());
    }

    #[test]
    fn prediction_ignores_row_order() {
        let mut rng = stream(12);
        let rows: Vec<Vec<f64>> = (0..15).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] - r[3] * r[1]).collect();
        let a = KplsModel::fit(&rows, &y, &KplsConfig::default()).unwrap();
        let perm: Vec<usize> = (0..15).map(|i| (i * 7) % 15).collect();
        let rows_p: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let y_p: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let b = KplsModel::fit(&rows_p, &y_p, &KplsConfig::default()).unwrap();
        for _ in 0..10 {
            let x: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            let (pa, pb) = (a.predict(&x).unwrap(), b.predict(&x).unwrap());
            assert!((pa.mean - pb.mean).abs() < 1e-6);
            assert!((pa.variance - pb.variance).abs() < 1e-6);
        }
    }

    #[test]
    fn summary_json_has_diagnostics() {
        let (rows, y) = random_1d(8, 2);
        let model = KplsModel::fit(&rows, &y, &KplsConfig::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&model.to_json()).unwrap();
        for key in ["theta", "sigma2", "beta", "h", "n", "d", "log_likelihood"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["n"], 8);
    }

    #[test]
    fn ei_closed_forms() {
        assert!((expected_improvement(0.5, 1.0, 0.5) - 0.398_942_280_401_432_7).abs() < 1e-12);
        assert_eq!(expected_improvement(0.3, 0.0, 0.5), 0.0);
        assert_eq!(expected_improvement(0.8, 0.0, 0.5), 0.8 - 0.5);
        let (rows, y) = random_1d(10, 3);
        let model = KplsModel::fit(&rows, &y, &KplsConfig::default()).unwrap();
        let best = y.iter().copied().fold(f64::MIN, f64::max);
        for r in &rows {
            assert!(model.expected_improvement(r, best).unwrap() < 1e-4);
        }
    }

    #[test]
    fn ei_matches_monte_carlo() {
        let mut rng = stream(77);
        for _ in 0..10 {
            let mu = rng.random_range(-1.0..1.0);
            let s = rng.random_range(0.05..1.0);
            let best = rng.random_range(-1.0..1.0);
            let m = 200_000;
            let samples: Vec<f64> = (0..m)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (mu + s * z - best).max(0.0)
                })
                .collect();
            let mean = samples.iter().sum::<f64>() / m as f64;
            let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
            let se = (var / m as f64).sqrt();
            let ei = expected_improvement(mu, s, best);
            assert!((ei - mean).abs() <= 3.0 * se + 1e-6, "ei {ei} mc {mean} se {se}");
        }
    }

    proptest! {
        #[test]
        fn ei_nonnegative_and_monotone_in_sigma(
            mu in -3.0f64..3.0,
            best in -3.0f64..3.0,
            s1 in 0.0f64..3.0,
            ds in 0.0f64..3.0,
        ) {
            let a = expected_improvement(mu, s1, best);
            let b = expected_improvement(mu, s1 + ds, best);
            prop_assert!(a >= 0.0);
            prop_assert!(b + 1e-12 >= a);
        }

        #[test]
        fn variance_is_never_negative(seed in any::<u64>(), x in -2.0f64..3.0) {
            let (rows, y) = random_1d(6, seed);
            let model = KplsModel::fit(&rows, &y, &KplsConfig::default()).unwrap();
            prop_assert!(model.predict(&[x]).unwrap().variance >= 0.0);
        }
    }
}
