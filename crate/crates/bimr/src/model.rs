//! Structural model parameters and the exact population-moment oracle.
//!
//! The data-generating process is the simultaneous pair
//!
//! ```text
//! U = G'gamma_u + e1
//! X = Y*beta_yx + G'gamma_x + U*gamma_xu + e2
//! Y = X*beta_xy + G'gamma_y + U*gamma_yu + e3
//! ```
//!
//! which, for `beta_xy * beta_yx != 1`, solves in closed form with the
//! reduction factor `delta = 1 / (1 - beta_xy * beta_yx)`. Every covariance
//! among (G, U, X, Y) follows from that reduced form; [`population_moments`]
//! assembles the full matrix so tests can check estimators against exact
//! values instead of sampled ones.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Causal direction between the two phenotypes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    XToY,
    YToX,
}

impl Direction {
    pub fn flipped(self) -> Self {
        match self {
            Direction::XToY => Direction::YToX,
            Direction::YToX => Direction::XToY,
        }
    }
}

/// Ground-truth structural coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta_xy: f64,
    pub beta_yx: f64,
    pub gamma_x: Vec<f64>,
    pub gamma_y: Vec<f64>,
    pub gamma_u: Vec<f64>,
    pub gamma_xu: f64,
    pub gamma_yu: f64,
    pub variant_variances: Vec<f64>,
    /// Variances of (e1, e2, e3).
    pub noise_variances: [f64; 3],
}

/// The feedback loop gain may not sit on the non-identifiable manifold.
pub const LOOP_GAIN_MARGIN: f64 = 1e-6;

impl ModelParams {
    pub fn num_variants(&self) -> usize {
        self.gamma_x.len()
    }

    /// Reduction factor `1 / (1 - beta_xy * beta_yx)`.
    pub fn delta(&self) -> f64 {
        1.0 / (1.0 - self.beta_xy * self.beta_yx)
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.num_variants();
        for (len, what) in [
            (self.gamma_y.len(), "gamma_y"),
            (self.gamma_u.len(), "gamma_u"),
            (self.variant_variances.len(), "variant_variances"),
        ] {
            if len != g {
                return Err(Error::InvalidParams(format!(
                    "{what} has length {len}, expected {g}"
                )));
            }
        }
        if g < 2 {
            return Err(Error::InvalidParams(format!(
                "need at least two variants, got {g}"
            )));
        }
        if (self.beta_xy * self.beta_yx - 1.0).abs() <= LOOP_GAIN_MARGIN {
            return Err(Error::InvalidParams(
                "beta_xy * beta_yx is too close to 1; the reduction factor diverges".into(),
            ));
        }
        if self.variant_variances.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidParams(
                "variant variances must be strictly positive".into(),
            ));
        }
        if self.noise_variances.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidParams(
                "noise variances must be strictly positive".into(),
            ));
        }
        let all = self
            .gamma_x
            .iter()
            .chain(&self.gamma_y)
            .chain(&self.gamma_u)
            .chain([&self.beta_xy, &self.beta_yx, &self.gamma_xu, &self.gamma_yu]);
        for v in all {
            if !v.is_finite() {
                return Err(Error::InvalidParams("non-finite coefficient".into()));
            }
        }
        Ok(())
    }

    /// Reduced-form coefficient of variant `k` in X: `gamma_x[k] + gamma_y[k]*beta_yx`.
    pub fn reduced_x(&self, k: usize) -> f64 {
        self.gamma_x[k] + self.gamma_y[k] * self.beta_yx
    }

    /// Reduced-form coefficient of variant `k` in Y: `gamma_y[k] + gamma_x[k]*beta_xy`.
    pub fn reduced_y(&self, k: usize) -> f64 {
        self.gamma_y[k] + self.gamma_x[k] * self.beta_xy
    }

    /// Reduced-form confounder loading on X: `gamma_xu + gamma_yu*beta_yx`.
    pub fn reduced_xu(&self) -> f64 {
        self.gamma_xu + self.gamma_yu * self.beta_yx
    }

    /// Reduced-form confounder loading on Y: `gamma_yu + gamma_xu*beta_xy`.
    pub fn reduced_yu(&self) -> f64 {
        self.gamma_yu + self.gamma_xu * self.beta_xy
    }

    /// Net effect of variant `k` on X through both the direct and the
    /// confounder channel.
    pub fn effective_x(&self, k: usize) -> f64 {
        self.gamma_x[k] + self.gamma_xu * self.gamma_u[k]
    }

    /// Net effect of variant `k` on Y through both the direct and the
    /// confounder channel.
    pub fn effective_y(&self, k: usize) -> f64 {
        self.gamma_y[k] + self.gamma_yu * self.gamma_u[k]
    }
}

/// Which variants are truly valid instruments, per direction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityLabels {
    pub valid_for_xy: Vec<usize>,
    pub valid_for_yx: Vec<usize>,
}

impl ValidityLabels {
    pub fn validate(&self, g: usize) -> Result<()> {
        for &j in self.valid_for_xy.iter().chain(&self.valid_for_yx) {
            if j >= g {
                return Err(Error::IndexOutOfRange {
                    index: j,
                    num_variants: g,
                });
            }
        }
        if self
            .valid_for_xy
            .iter()
            .any(|j| self.valid_for_yx.contains(j))
        {
            return Err(Error::InvalidParams(
                "validity label sets must be disjoint".into(),
            ));
        }
        Ok(())
    }

    pub fn valid_for(&self, direction: Direction) -> &[usize] {
        match direction {
            Direction::XToY => &self.valid_for_xy,
            Direction::YToX => &self.valid_for_yx,
        }
    }
}

/// Exact population covariance matrix over (G_1..G_g, U, X, Y).
#[derive(Debug, Clone)]
pub struct MomentMatrix {
    g: usize,
    m: DMatrix<f64>,
}

impl MomentMatrix {
    pub fn num_variants(&self) -> usize {
        self.g
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    fn iu(&self) -> usize {
        self.g
    }
    fn ix(&self) -> usize {
        self.g + 1
    }
    fn iy(&self) -> usize {
        self.g + 2
    }

    pub fn cov_gg(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }
    pub fn cov_gu(&self, j: usize) -> f64 {
        self.m[(j, self.iu())]
    }
    pub fn cov_gx(&self, j: usize) -> f64 {
        self.m[(j, self.ix())]
    }
    pub fn cov_gy(&self, j: usize) -> f64 {
        self.m[(j, self.iy())]
    }
    pub fn var_u(&self) -> f64 {
        self.m[(self.iu(), self.iu())]
    }
    pub fn var_x(&self) -> f64 {
        self.m[(self.ix(), self.ix())]
    }
    pub fn var_y(&self) -> f64 {
        self.m[(self.iy(), self.iy())]
    }
    pub fn cov_xy(&self) -> f64 {
        self.m[(self.ix(), self.iy())]
    }
    pub fn cov_ux(&self) -> f64 {
        self.m[(self.iu(), self.ix())]
    }
    pub fn cov_uy(&self) -> f64 {
        self.m[(self.iu(), self.iy())]
    }

    /// Exchanges the roles of X and Y (used by swap-symmetry checks).
    pub fn swapped_phenotypes(&self) -> MomentMatrix {
        let mut m = self.m.clone();
        m.swap_rows(self.ix(), self.iy());
        m.swap_columns(self.ix(), self.iy());
        MomentMatrix { g: self.g, m }
    }
}

/// Population covariance matrix implied by `params`, treating variants as
/// mutually independent with variances `params.variant_variances`.
pub fn population_moments(params: &ModelParams) -> Result<MomentMatrix> {
    let g = params.num_variants();
    let mut sigma_g = DMatrix::zeros(g, g);
    for j in 0..g {
        sigma_g[(j, j)] = params.variant_variances[j];
    }
    population_moments_with_genotype_cov(params, &sigma_g)
}

/// Population covariance matrix for an arbitrary genotype covariance
/// `sigma_g` (the simulator uses this for its dependent-variant scenarios).
pub fn population_moments_with_genotype_cov(
    params: &ModelParams,
    sigma_g: &DMatrix<f64>,
) -> Result<MomentMatrix> {
    params.validate()?;
    let g = params.num_variants();
    if sigma_g.nrows() != g || sigma_g.ncols() != g {
        return Err(Error::InvalidParams(format!(
            "genotype covariance is {}x{}, expected {g}x{g}",
            sigma_g.nrows(),
            sigma_g.ncols()
        )));
    }
    let delta = params.delta();
    if !delta.is_finite() {
        return Err(Error::InvalidParams("non-finite reduction factor".into()));
    }
    let (s1, s2, s3) = (
        params.noise_variances[0],
        params.noise_variances[1],
        params.noise_variances[2],
    );
    let a_xu = params.reduced_xu();
    let a_yu = params.reduced_yu();
    // Reduced form: X = delta * (a_x'G + a_xu*e1 + e2 + beta_yx*e3), Y alike.
    let a_x: Vec<f64> = (0..g)
        .map(|k| params.reduced_x(k) + a_xu * params.gamma_u[k])
        .collect();
    let a_y: Vec<f64> = (0..g)
        .map(|k| params.reduced_y(k) + a_yu * params.gamma_u[k])
        .collect();

    let quad = |a: &[f64], b: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..g {
            for j in 0..g {
                s += a[i] * sigma_g[(i, j)] * b[j];
            }
        }
        s
    };
    let sg_dot = |a: &[f64], j: usize| -> f64 { (0..g).map(|i| a[i] * sigma_g[(i, j)]).sum() };

    let dim = g + 3;
    let (iu, ix, iy) = (g, g + 1, g + 2);
    let mut m = DMatrix::zeros(dim, dim);
    for i in 0..g {
        for j in 0..g {
            m[(i, j)] = sigma_g[(i, j)];
        }
    }
    for j in 0..g {
        let gu = sg_dot(&params.gamma_u, j);
        let gx = delta * sg_dot(&a_x, j);
        let gy = delta * sg_dot(&a_y, j);
        m[(j, iu)] = gu;
        m[(iu, j)] = gu;
        m[(j, ix)] = gx;
        m[(ix, j)] = gx;
        m[(j, iy)] = gy;
        m[(iy, j)] = gy;
    }
    m[(iu, iu)] = quad(&params.gamma_u, &params.gamma_u) + s1;
    let cov_ux = delta * (quad(&params.gamma_u, &a_x) + a_xu * s1);
    let cov_uy = delta * (quad(&params.gamma_u, &a_y) + a_yu * s1);
    m[(iu, ix)] = cov_ux;
    m[(ix, iu)] = cov_ux;
    m[(iu, iy)] = cov_uy;
    m[(iy, iu)] = cov_uy;
    m[(ix, ix)] = delta * delta * (quad(&a_x, &a_x) + a_xu * a_xu * s1 + s2 + params.beta_yx * params.beta_yx * s3);
    m[(iy, iy)] = delta * delta * (quad(&a_y, &a_y) + a_yu * a_yu * s1 + params.beta_xy * params.beta_xy * s2 + s3);
    let cov_xy = delta
        * delta
        * (quad(&a_x, &a_y) + a_xu * a_yu * s1 + params.beta_xy * s2 + params.beta_yx * s3);
    m[(ix, iy)] = cov_xy;
    m[(iy, ix)] = cov_xy;

    Ok(MomentMatrix { g, m })
}

/// Variance-ordering condition needed for direction identification:
/// `beta_xy^2 * Var(X) < Var(Y)` and `beta_yx^2 * Var(Y) <= Var(X)`.
pub fn variance_ordering_holds(params: &ModelParams, moments: &MomentMatrix) -> bool {
    let vx = moments.var_x();
    let vy = moments.var_y();
    params.beta_xy * params.beta_xy * vx < vy && params.beta_yx * params.beta_yx * vy <= vx
}

/// Shared unit-test fixture: five variants, both causal directions at 0.6,
/// pleiotropy on variants 1, 3, 4, a confounder loaded on both phenotypes,
/// unit variances all around. Valid instruments are variants 0 and 2, for
/// the x-to-y direction only.
#[cfg(test)]
pub(crate) mod fixtures {
    use super::ModelParams;

    pub(crate) fn reference_params() -> ModelParams {
        ModelParams {
            beta_xy: 0.6,
            beta_yx: 0.6,
            gamma_x: vec![1.0, 1.0, 1.0, 1.8, 1.2],
            gamma_y: vec![0.0, 0.5, 0.0, 0.6, 0.3],
            gamma_u: vec![0.0; 5],
            gamma_xu: 1.0,
            gamma_yu: 1.0,
            variant_variances: vec![1.0; 5],
            noise_variances: [1.0, 1.0, 1.0],
        }
    }
}
