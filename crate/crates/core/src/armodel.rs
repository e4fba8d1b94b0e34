//! AR(p) parameters, the conditional likelihood, least-squares fitting and
//! pole analysis.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::TimeSeries;

/// One point `(a_1..a_p, σ²)` in AR parameter space.
///
/// Serialized as `{"order": p, "coefficients": [...], "noise_variance": σ²}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ARParamsRepr", try_from = "ARParamsRepr")]
pub struct ARParams {
    pub coefficients: Vec<f64>,
    pub noise_variance: f64,
}

#[derive(Serialize, Deserialize)]
struct ARParamsRepr {
    order: usize,
    coefficients: Vec<f64>,
    noise_variance: f64,
}

impl From<ARParams> for ARParamsRepr {
    fn from(p: ARParams) -> Self {
        ARParamsRepr {
            order: p.coefficients.len(),
            coefficients: p.coefficients,
            noise_variance: p.noise_variance,
        }
    }
}

impl TryFrom<ARParamsRepr> for ARParams {
    type Error = Error;

    fn try_from(r: ARParamsRepr) -> Result<Self> {
        if r.order != r.coefficients.len() {
            return Err(Error::invalid(format!(
                "order {} does not match {} coefficients",
                r.order,
                r.coefficients.len()
            )));
        }
        ARParams::new(r.coefficients, r.noise_variance)
    }
}

impl ARParams {
    pub fn new(coefficients: Vec<f64>, noise_variance: f64) -> Result<Self> {
        let p = ARParams {
            coefficients,
            noise_variance,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.coefficients.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("AR coefficients must be finite"));
        }
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::invalid(format!(
                "noise variance must be positive and finite, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }

    /// AR(p) parameters whose characteristic roots are the given poles.
    /// Complex poles must come in conjugate pairs.
    pub fn from_poles(poles: &[(f64, f64)], noise_variance: f64) -> Result<Self> {
        // expand Π (z − r_k) = z^p − a_1 z^{p−1} − … − a_p
        let mut poly: Vec<(f64, f64)> = vec![(1.0, 0.0)];
        for &(re, im) in poles {
            let mut next = vec![(0.0, 0.0); poly.len() + 1];
            for (i, &(cr, ci)) in poly.iter().enumerate() {
                next[i].0 += cr;
                next[i].1 += ci;
                next[i + 1].0 -= cr * re - ci * im;
                next[i + 1].1 -= cr * im + ci * re;
            }
            poly = next;
        }
        if poly.iter().any(|c| c.1.abs() > 1e-9) {
            return Err(Error::invalid(
                "complex poles must appear in conjugate pairs",
            ));
        }
        ARParams::new(poly[1..].iter().map(|c| -c.0).collect(), noise_variance)
    }

    /// Poles `r·e^{±i2πξ}` for each `(r, ξ)` pair.
    pub fn from_resonances(resonances: &[(f64, f64)], noise_variance: f64) -> Result<Self> {
        let poles: Vec<(f64, f64)> = resonances
            .iter()
            .flat_map(|&(r, f)| {
                let w = 2.0 * PI * f;
                [(r * w.cos(), r * w.sin()), (r * w.cos(), -r * w.sin())]
            })
            .collect();
        ARParams::from_poles(&poles, noise_variance)
    }
}

/// Lagged regression data: row `i` is `[x_{τ−1}, …, x_{τ−p}]` and
/// `y_i = x_τ` for `τ = p + i` (zero-based).
#[derive(Debug, Clone, PartialEq)]
pub struct DesignData {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl DesignData {
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn order(&self) -> usize {
        self.x.ncols()
    }

    pub fn gram(&self) -> Gram {
        Gram {
            xtx: self.x.transpose() * &self.x,
            xty: self.x.transpose() * &self.y,
            yty: self.y.dot(&self.y),
            n_rows: self.n_rows(),
        }
    }
}

/// Design rows for order `p`; zero rows when the series has at most `p` samples.
pub(crate) fn design_rows(values: &[f64], p: usize) -> DesignData {
    let rows = values.len().saturating_sub(p);
    let x = DMatrix::from_fn(rows, p, |i, k| values[p + i - 1 - k]);
    let y = DVector::from_iterator(rows, values.iter().skip(p).copied());
    DesignData { x, y }
}

pub fn design_matrix(ts: &TimeSeries, p: usize) -> Result<DesignData> {
    if ts.len() < p + 2 {
        return Err(Error::SeriesTooShort {
            len: ts.len(),
            needed: p + 2,
            context: format!("design matrix of order {p}"),
        });
    }
    Ok(design_rows(ts.values(), p))
}

/// Sufficient statistics `(XᵀX, Xᵀy, yᵀy, rows)` of a design. Statistics of
/// disjoint segments add.
#[derive(Debug, Clone, PartialEq)]
pub struct Gram {
    pub xtx: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
    pub n_rows: usize,
}

impl Gram {
    pub fn zeros(p: usize) -> Self {
        Gram {
            xtx: DMatrix::zeros(p, p),
            xty: DVector::zeros(p),
            yty: 0.0,
            n_rows: 0,
        }
    }

    pub fn order(&self) -> usize {
        self.xty.len()
    }

    pub fn add(&mut self, other: &Gram) {
        self.xtx += &other.xtx;
        self.xty += &other.xty;
        self.yty += other.yty;
        self.n_rows += other.n_rows;
    }

    /// `‖y − Xa‖²`, clamped at zero against cancellation.
    pub fn rss(&self, a: &DVector<f64>) -> f64 {
        let v = self.yty - 2.0 * a.dot(&self.xty) + (&self.xtx * a).dot(a);
        v.max(0.0)
    }

    /// Conditional log-likelihood from the sufficient statistics.
    pub fn log_likelihood(&self, a: &DVector<f64>, noise_variance: f64) -> f64 {
        let n = self.n_rows as f64;
        -0.5 * n * (2.0 * PI * noise_variance).ln() - self.rss(a) / (2.0 * noise_variance)
    }
}

/// `Σ_τ [−½ log(2πσ²) − (x_τ − aᵀx_{τ−1})² / (2σ²)]` over the regression rows,
/// treating the first `p` samples as fixed context.
pub fn conditional_log_likelihood(theta: &ARParams, ts: &TimeSeries) -> Result<f64> {
    if !(theta.noise_variance > 0.0) {
        return Err(Error::invalid("noise variance must be positive"));
    }
    let p = theta.order();
    if ts.len() < p + 2 {
        return Err(Error::SeriesTooShort {
            len: ts.len(),
            needed: p + 2,
            context: format!("conditional likelihood of order {p}"),
        });
    }
    Ok(segment_log_likelihood(theta, ts.values()))
}

/// Same sum as [`conditional_log_likelihood`] without length checks; zero
/// when the segment has no regression rows.
pub(crate) fn segment_log_likelihood(theta: &ARParams, values: &[f64]) -> f64 {
    let p = theta.order();
    let s2 = theta.noise_variance;
    let log_norm = -0.5 * (2.0 * PI * s2).ln();
    (p..values.len())
        .map(|t| {
            let pred: f64 = theta
                .coefficients
                .iter()
                .enumerate()
                .map(|(k, a)| a * values[t - 1 - k])
                .sum();
            let r = values[t] - pred;
            log_norm - r * r / (2.0 * s2)
        })
        .sum()
}

/// Conditional least squares (the conditional maximum-likelihood point).
///
/// The noise variance uses the number of regression rows `T − p` as divisor.
pub fn fit_ase(ts: &TimeSeries, p: usize) -> Result<ARParams> {
    if ts.len() < 2 * p + 2 {
        return Err(Error::SeriesTooShort {
            len: ts.len(),
            needed: 2 * p + 2,
            context: format!("least-squares fit of order {p}"),
        });
    }
    let design = design_rows(ts.values(), p);
    let rows = design.n_rows() as f64;
    if p == 0 {
        let s2 = design.y.dot(&design.y) / rows;
        return ARParams::new(vec![], s2.max(f64::MIN_POSITIVE));
    }

    let qr = design.x.clone().qr();
    let r = qr.r();
    let diag_max = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if !(diag_max > 0.0) || (0..p).any(|i| r[(i, i)].abs() <= 1e-10 * diag_max) {
        return Err(Error::RankDeficient { order: p });
    }
    let qty = qr.q().transpose() * &design.y;
    let a = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient { order: p })?;
    let resid = &design.y - &design.x * &a;
    let s2 = resid.dot(&resid) / rows;
    ARParams::new(a.iter().copied().collect(), s2.max(f64::MIN_POSITIVE))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stability {
    pub stable: bool,
    /// Moduli of the roots of `z^p − a_1 z^{p−1} − … − a_p`, largest first.
    pub pole_moduli: Vec<f64>,
}

impl Stability {
    pub fn max_modulus(&self) -> f64 {
        self.pole_moduli.first().copied().unwrap_or(0.0)
    }
}

/// Pole moduli from the eigenvalues of the companion matrix.
pub fn stability_check(theta: &ARParams) -> Stability {
    let p = theta.order();
    let mut moduli: Vec<f64> = match p {
        0 => vec![],
        1 => vec![theta.coefficients[0].abs()],
        _ => {
            let mut c = DMatrix::<f64>::zeros(p, p);
            for (k, a) in theta.coefficients.iter().enumerate() {
                c[(0, k)] = *a;
            }
            for i in 1..p {
                c[(i, i - 1)] = 1.0;
            }
            c.complex_eigenvalues().iter().map(|z| z.norm()).collect()
        }
    };
    moduli.sort_by(|a, b| b.total_cmp(a));
    Stability {
        stable: moduli.iter().all(|m| *m < 1.0),
        pole_moduli: moduli,
    }
}
