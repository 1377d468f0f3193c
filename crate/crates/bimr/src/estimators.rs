//! Core estimators and hypothesis tests: OLS, TSLS, pseudo-residuals,
//! Pearson correlation with the Fisher z test, and the valid-set decision.
//!
//! Sample-level routines run on a [`Dataset`]; each also has a population
//! twin computed from a [`MomentMatrix`], which tests use as an exact oracle.

use nalgebra::{Cholesky, DMatrix, DVector};
use statrs::function::erf::erfc;

use crate::dataset::{check_subset, Dataset};
use crate::error::{Error, Result};
use crate::model::{Direction, MomentMatrix};

/// Numerical zero threshold for the weak-instrument guard. Statistical
/// decisions never use this; they go through the Fisher z test.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Result of a Pearson correlation test with the Fisher transformation.
#[derive(Debug, Clone, Copy)]
pub struct CorrelationTest {
    pub r: f64,
    /// `atanh(r) * sqrt(n - 3)`, standard normal under the null.
    pub z_stat: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub reject: bool,
}

/// Least-squares slope `Cov(x, y) / Var(x)` on centered data.
pub fn ols_estimate(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::TooFewObservations { min: 2, got: x.len() });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    if sxx <= 0.0 {
        return Err(Error::ZeroVariance("x"));
    }
    Ok(sxy / sxx)
}

/// Pearson correlation coefficient between two sequences.
pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::TooFewObservations { min: 2, got: a.len() });
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    let mut sab = 0.0;
    for (&p, &q) in a.iter().zip(b) {
        saa += (p - ma) * (p - ma);
        sbb += (q - mb) * (q - mb);
        sab += (p - ma) * (q - mb);
    }
    if saa <= 0.0 {
        return Err(Error::ZeroVariance("first sequence"));
    }
    if sbb <= 0.0 {
        return Err(Error::ZeroVariance("second sequence"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Tests H0: rho = 0 via `z = atanh(r) * sqrt(n - 3)` against the standard
/// normal, two-sided.
pub fn fisher_z_test(r: f64, n: usize, alpha: f64) -> Result<CorrelationTest> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    if n <= 3 {
        return Err(Error::TooFewObservations { min: 4, got: n });
    }
    if !r.is_finite() || r.abs() >= 1.0 {
        return Err(Error::SaturatedCorrelation);
    }
    let z_stat = r.atanh() * ((n - 3) as f64).sqrt();
    let p_value = erfc(z_stat.abs() / std::f64::consts::SQRT_2);
    Ok(CorrelationTest {
        r,
        z_stat,
        p_value,
        reject: p_value < alpha,
    })
}

/// Pearson correlation of two sequences followed by the Fisher z test.
pub fn correlation_test(a: &[f64], b: &[f64], alpha: f64) -> Result<CorrelationTest> {
    fisher_z_test(pearson_correlation(a, b)?, a.len(), alpha)
}

/// TSLS slope plus the first-stage signal `x'Px` (same sum scale as the
/// input moments), needed by the plug-in variance correction.
struct TslsFit {
    omega: f64,
    x_px: f64,
}

/// TSLS from second moments: first stage solves `zz * b = zx`, then
/// `omega = (b'zy) / (b'zx)`.
///
/// `sxx` scales the weak-instrument guard; it is the (co)moment of the
/// exposure with itself.
fn tsls_from_moments(
    zz: DMatrix<f64>,
    zx: DVector<f64>,
    zy: DVector<f64>,
    sxx: f64,
) -> Result<TslsFit> {
    if sxx <= 0.0 {
        return Err(Error::ZeroVariance("exposure"));
    }
    let chol = Cholesky::new(zz).ok_or(Error::SingularInstruments)?;
    let b = chol.solve(&zx);
    let x_px = b.dot(&zx);
    if !x_px.is_finite() || x_px <= DEFAULT_TOLERANCE * sxx {
        return Err(Error::WeakInstruments);
    }
    Ok(TslsFit {
        omega: b.dot(&zy) / x_px,
        x_px,
    })
}

fn gather(m: &DMatrix<f64>, subset: &[usize]) -> DMatrix<f64> {
    let p = subset.len();
    DMatrix::from_fn(p, p, |r, c| m[(subset[r], subset[c])])
}

fn gather_vec(v: &[f64], subset: &[usize]) -> DVector<f64> {
    DVector::from_iterator(subset.len(), subset.iter().map(|&j| v[j]))
}

/// Two-stage least-squares estimate of the effect of x on y using the
/// genotype columns in `subset` as instruments.
pub fn tsls_estimate(ds: &Dataset, subset: &[usize]) -> Result<f64> {
    tsls_estimate_directed(ds, subset, Direction::XToY)
}

/// TSLS with the exposure/outcome roles chosen by `direction`
/// (`YToX` regresses x on instrumented y).
pub fn tsls_estimate_directed(ds: &Dataset, subset: &[usize], direction: Direction) -> Result<f64> {
    Ok(tsls_fit(ds, subset, direction)?.omega)
}

fn tsls_fit(ds: &Dataset, subset: &[usize], direction: Direction) -> Result<TslsFit> {
    check_subset(subset, ds.g())?;
    let c = ds.cross_products();
    let zz = gather(&c.gg, subset);
    match direction {
        Direction::XToY => tsls_from_moments(zz, gather_vec(&c.gx, subset), gather_vec(&c.gy, subset), c.xx),
        Direction::YToX => tsls_from_moments(zz, gather_vec(&c.gy, subset), gather_vec(&c.gx, subset), c.yy),
    }
}

/// Pseudo-residual `y - x * omega` where `omega` is the TSLS slope over
/// `subset`. Length n.
pub fn pseudo_residual(ds: &Dataset, subset: &[usize]) -> Result<Vec<f64>> {
    let omega = tsls_estimate(ds, subset)?;
    Ok(ds
        .y()
        .iter()
        .zip(ds.x())
        .map(|(&y, &x)| y - x * omega)
        .collect())
}

/// Correlation between the pseudo-residual over `subset` and variant `j`,
/// computed from cached cross-products (identical, up to rounding, to
/// materializing the residual and calling [`pearson_correlation`]).
pub fn pseudo_residual_correlation(ds: &Dataset, subset: &[usize], j: usize) -> Result<f64> {
    Ok(pseudo_residual_test(ds, subset, j, 0.5)?.r)
}

/// Tests `corr(PR over subset, G_j) = 0`.
///
/// The residual uses the estimated slope, which adds
/// `Cov(X, G_j)^2 / (Var(Xhat_subset) * Var(G_j))` to the asymptotic
/// variance of the sample correlation. The z statistic is rescaled by that
/// factor, so the test holds its nominal level; without the rescaling, true
/// instrument sets are rejected far more often than alpha.
pub fn pseudo_residual_test(
    ds: &Dataset,
    subset: &[usize],
    j: usize,
    alpha: f64,
) -> Result<CorrelationTest> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    if j >= ds.g() {
        return Err(Error::IndexOutOfRange {
            index: j,
            num_variants: ds.g(),
        });
    }
    let fit = tsls_fit(ds, subset, Direction::XToY)?;
    let c = ds.cross_products();
    let omega = fit.omega;
    let s_pr_g = c.gy[j] - omega * c.gx[j];
    let s_pr_pr = c.yy - 2.0 * omega * c.xy + omega * omega * c.xx;
    let s_gg = c.gg[(j, j)];
    if s_pr_pr <= 0.0 {
        return Err(Error::ZeroVariance("pseudo-residual"));
    }
    if s_gg <= 0.0 {
        return Err(Error::ZeroVariance("genotype column"));
    }
    let r = (s_pr_g / (s_pr_pr * s_gg).sqrt()).clamp(-1.0, 1.0);
    if r.abs() >= 1.0 {
        return Err(Error::SaturatedCorrelation);
    }
    let n = ds.n();
    if n <= 3 {
        return Err(Error::TooFewObservations { min: 4, got: n });
    }
    let plug_in_variance = 1.0 + c.gx[j] * c.gx[j] / (fit.x_px * s_gg);
    let z_stat = r.atanh() * ((n - 3) as f64).sqrt() / plug_in_variance.sqrt();
    let p_value = erfc(z_stat.abs() / std::f64::consts::SQRT_2);
    Ok(CorrelationTest {
        r,
        z_stat,
        p_value,
        reject: p_value < alpha,
    })
}

/// Decides whether `subset` behaves as a valid instrument set: true iff for
/// every j in the subset, the (plug-in corrected) correlation test fails to
/// reject `corr(PR over subset \ {j}, G_j) = 0` at level `alpha`.
pub fn valid_set_test(ds: &Dataset, subset: &[usize], alpha: f64) -> Result<bool> {
    check_subset(subset, ds.g())?;
    if subset.len() < 2 {
        return Err(Error::InvalidSubset(
            "the valid-set test needs at least two variants".into(),
        ));
    }
    for (pos, &j) in subset.iter().enumerate() {
        let mut loo = subset.to_vec();
        loo.remove(pos);
        if pseudo_residual_test(ds, &loo, j, alpha)?.reject {
            return Ok(false);
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// Population twins
// ---------------------------------------------------------------------------

/// Large-sample limit of the TSLS slope computed from exact population
/// covariances. Equals the true effect for any valid instrument subset.
pub fn tsls_population(m: &MomentMatrix, subset: &[usize]) -> Result<f64> {
    check_subset(subset, m.num_variants())?;
    let p = subset.len();
    let zz = DMatrix::from_fn(p, p, |r, c| m.cov_gg(subset[r], subset[c]));
    let zx = DVector::from_iterator(p, subset.iter().map(|&j| m.cov_gx(j)));
    let zy = DVector::from_iterator(p, subset.iter().map(|&j| m.cov_gy(j)));
    Ok(tsls_from_moments(zz, zx, zy, m.var_x())?.omega)
}

/// Population covariance between the pseudo-residual over `subset` and
/// variant `j`.
pub fn pseudo_residual_population_cov(m: &MomentMatrix, subset: &[usize], j: usize) -> Result<f64> {
    if j >= m.num_variants() {
        return Err(Error::IndexOutOfRange {
            index: j,
            num_variants: m.num_variants(),
        });
    }
    let omega = tsls_population(m, subset)?;
    Ok(m.cov_gy(j) - omega * m.cov_gx(j))
}

/// Population correlation between the pseudo-residual over `subset` and
/// variant `j`.
pub fn pseudo_residual_population_corr(m: &MomentMatrix, subset: &[usize], j: usize) -> Result<f64> {
    let omega = tsls_population(m, subset)?;
    let cov = m.cov_gy(j) - omega * m.cov_gx(j);
    let var_pr = m.var_y() - 2.0 * omega * m.cov_xy() + omega * omega * m.var_x();
    let var_g = m.cov_gg(j, j);
    if var_pr <= 0.0 || var_g <= 0.0 {
        return Err(Error::ZeroVariance("population pseudo-residual"));
    }
    Ok(cov / (var_pr * var_g).sqrt())
}
