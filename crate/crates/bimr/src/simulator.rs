//! Synthetic data generation: scenario construction, coefficient drawing
//! with rejection sampling, and SNP-style genotype simulation.
//!
//! Scenario `S(a, b, g)` has `a` variants valid for the x-to-y direction,
//! `b` valid for y-to-x, and `g - a - b` invalid ones violating the
//! exclusion restriction (a direct path to the outcome), the randomness
//! assumption (a loading on the confounder), or both. Genotypes are
//! binomial allele doses with minor allele frequency drawn uniformly from
//! (0.1, 0.5); the simultaneous phenotype pair is solved in closed form
//! through the reduction factor, never by fixed-point iteration.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{
    population_moments_with_genotype_cov, variance_ordering_holds, ModelParams, ValidityLabels,
};
use nalgebra::DMatrix;
use rand_distr::StandardNormal;

/// Attempts before coefficient rejection sampling gives up.
pub const REJECTION_BUDGET: usize = 10_000;

/// Minimum cross-ratio of effective variant effects; draws closer to the
/// non-identifiable proportional geometry are rejected.
pub const GENERIC_GUARD: f64 = 0.01;

/// Scenario descriptor `S(a, b, g)` plus sampling controls.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n_valid_xy: usize,
    pub n_valid_yx: usize,
    pub n_total: usize,
    pub sample_size: usize,
    /// When false, the y-to-x effect is forced to zero.
    pub bidirectional: bool,
    /// When true, the second valid x-to-y variant is generated as a linear
    /// function of the first plus independent noise.
    pub correlated_valid: bool,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(a: usize, b: usize, g: usize, sample_size: usize, seed: u64) -> Self {
        Self {
            n_valid_xy: a,
            n_valid_yx: b,
            n_total: g,
            sample_size,
            bidirectional: b > 0,
            correlated_valid: false,
            seed,
        }
    }

    pub fn label(&self) -> String {
        format!(
            "S({},{},{})",
            self.n_valid_xy, self.n_valid_yx, self.n_total
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_total < 2 {
            return Err(Error::InvalidScenario(
                "need at least two genetic variants".into(),
            ));
        }
        if self.n_valid_xy + self.n_valid_yx > self.n_total {
            return Err(Error::InvalidScenario(format!(
                "{} + {} valid variants exceed the total {}",
                self.n_valid_xy, self.n_valid_yx, self.n_total
            )));
        }
        if self.sample_size < 4 {
            return Err(Error::InvalidScenario(
                "sample size must be at least 4".into(),
            ));
        }
        if !self.bidirectional && self.n_valid_yx > 0 {
            return Err(Error::InvalidScenario(
                "a one-directional scenario cannot have valid y-to-x instruments".into(),
            ));
        }
        if self.correlated_valid && self.n_valid_xy < 2 {
            return Err(Error::InvalidScenario(
                "the correlated-valid mode needs at least two valid x-to-y variants".into(),
            ));
        }
        Ok(())
    }
}

/// Marginal law of one genotype column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GenotypeLaw {
    /// Allele dose in {0, 1, 2}: binomial with two trials.
    Snp { maf: f64 },
    /// Centered Gaussian, for variances a dose variable cannot reach.
    Gaussian { variance: f64 },
    /// `loading * parent + e` with unit-variance Gaussian `e`.
    Dependent { parent: usize, loading: f64 },
}

/// A drawn scenario: structural coefficients, ground-truth labels, and the
/// genotype laws (including the dependent pair, when present).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioDraw {
    pub params: ModelParams,
    pub labels: ValidityLabels,
    pub laws: Vec<GenotypeLaw>,
    pub dependent_pair: Option<(usize, usize)>,
}

/// Ground-truth sidecar written next to a simulated dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub schema_version: u32,
    pub scenario: ScenarioSpec,
    pub params: ModelParams,
    pub labels: ValidityLabels,
    pub genotype_laws: Vec<GenotypeLaw>,
    pub dependent_pair: Option<(usize, usize)>,
}

impl GroundTruth {
    pub fn new(scenario: ScenarioSpec, draw: &ScenarioDraw) -> Self {
        Self {
            schema_version: 1,
            scenario,
            params: draw.params.clone(),
            labels: draw.labels.clone(),
            genotype_laws: draw.laws.clone(),
            dependent_pair: draw.dependent_pair,
        }
    }
}

/// Uniform draw from `[-1, -0.5] U [0.5, 1]`.
fn draw_loading<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let magnitude = rng.random_range(0.5..1.0);
    if rng.random::<bool>() {
        magnitude
    } else {
        -magnitude
    }
}

fn snp_variance(maf: f64) -> f64 {
    2.0 * maf * (1.0 - maf)
}

/// Covariance matrix of the genotype columns implied by their laws.
pub fn genotype_covariance(laws: &[GenotypeLaw]) -> Result<DMatrix<f64>> {
    let g = laws.len();
    let mut m = DMatrix::zeros(g, g);
    for (j, law) in laws.iter().enumerate() {
        match *law {
            GenotypeLaw::Snp { maf } => m[(j, j)] = snp_variance(maf),
            GenotypeLaw::Gaussian { variance } => m[(j, j)] = variance,
            GenotypeLaw::Dependent { parent, loading } => {
                if parent >= j {
                    return Err(Error::InvalidScenario(
                        "a dependent variant must follow its parent".into(),
                    ));
                }
                let vp = m[(parent, parent)];
                m[(j, j)] = loading * loading * vp + 1.0;
                m[(j, parent)] = loading * vp;
                m[(parent, j)] = loading * vp;
            }
        }
    }
    Ok(m)
}

/// Derives genotype laws from marginal variances alone: dose variables where
/// the variance is reachable (v <= 0.5), Gaussian columns otherwise.
pub fn laws_from_variances(variances: &[f64]) -> Vec<GenotypeLaw> {
    variances
        .iter()
        .map(|&v| {
            if v <= 0.5 {
                GenotypeLaw::Snp {
                    maf: (1.0 - (1.0 - 2.0 * v).max(0.0).sqrt()) / 2.0,
                }
            } else {
                GenotypeLaw::Gaussian { variance: v }
            }
        })
        .collect()
}

/// Draws structural coefficients for a scenario, rejection-sampling until
/// the reduction factor is finite, the variance ordering holds, and every
/// cross-direction or invalid variant pair clears the generic-geometry
/// guard.
pub fn draw_scenario_params<R: Rng + ?Sized>(
    spec: &ScenarioSpec,
    rng: &mut R,
) -> Result<ScenarioDraw> {
    spec.validate()?;
    let g = spec.n_total;
    let a = spec.n_valid_xy;
    let b = spec.n_valid_yx;
    let labels = ValidityLabels {
        valid_for_xy: (0..a).collect(),
        valid_for_yx: (a..a + b).collect(),
    };

    for _ in 0..REJECTION_BUDGET {
        let beta_xy = draw_loading(rng);
        let beta_yx = if spec.bidirectional {
            draw_loading(rng)
        } else {
            0.0
        };
        let mut gamma_x = vec![0.0; g];
        let mut gamma_y = vec![0.0; g];
        let mut gamma_u = vec![0.0; g];
        for j in 0..a {
            gamma_x[j] = draw_loading(rng);
        }
        for j in a..a + b {
            gamma_y[j] = draw_loading(rng);
        }
        for j in a + b..g {
            // Violation type: direct path, confounder loading, or both.
            match rng.random_range(0..3u8) {
                0 => {
                    gamma_x[j] = draw_loading(rng);
                    gamma_y[j] = draw_loading(rng);
                }
                1 => {
                    gamma_x[j] = draw_loading(rng);
                    gamma_u[j] = draw_loading(rng);
                }
                _ => {
                    gamma_x[j] = draw_loading(rng);
                    gamma_y[j] = draw_loading(rng);
                    gamma_u[j] = draw_loading(rng);
                }
            }
        }
        let gamma_xu = draw_loading(rng);
        let gamma_yu = draw_loading(rng);

        let mut laws: Vec<GenotypeLaw> = (0..g)
            .map(|_| GenotypeLaw::Snp {
                maf: rng.random_range(0.1..0.5),
            })
            .collect();
        let mut dependent_pair = None;
        if spec.correlated_valid {
            let parent = labels.valid_for_xy[0];
            let child = labels.valid_for_xy[1];
            laws[child] = GenotypeLaw::Dependent {
                parent,
                loading: draw_loading(rng),
            };
            dependent_pair = Some((parent, child));
        }
        let sigma_g = genotype_covariance(&laws)?;

        let params = ModelParams {
            beta_xy,
            beta_yx,
            gamma_x,
            gamma_y,
            gamma_u,
            gamma_xu,
            gamma_yu,
            variant_variances: (0..g).map(|j| sigma_g[(j, j)]).collect(),
            noise_variances: [1.0, 1.0, 1.0],
        };
        if params.validate().is_err() {
            continue;
        }
        let moments = match population_moments_with_genotype_cov(&params, &sigma_g) {
            Ok(m) => m,
            Err(_) => continue,
        };
        if !variance_ordering_holds(&params, &moments) {
            continue;
        }
        if !generic_guard_holds(&params, &labels) {
            continue;
        }
        return Ok(ScenarioDraw {
            params,
            labels,
            laws,
            dependent_pair,
        });
    }
    Err(Error::RejectionBudgetExhausted(REJECTION_BUDGET))
}

/// Rejects coefficient draws whose effective variant effects are close to
/// proportional for some pair that is not valid-for-the-same-direction;
/// those geometries make an invalid pair indistinguishable from a valid one.
fn generic_guard_holds(params: &ModelParams, labels: &ValidityLabels) -> bool {
    let g = params.num_variants();
    let same_direction = |i: usize, j: usize| {
        (labels.valid_for_xy.contains(&i) && labels.valid_for_xy.contains(&j))
            || (labels.valid_for_yx.contains(&i) && labels.valid_for_yx.contains(&j))
    };
    for i in 0..g {
        for j in i + 1..g {
            if same_direction(i, j) {
                continue;
            }
            let cross = params.effective_x(i) * params.effective_y(j)
                - params.effective_y(i) * params.effective_x(j);
            if cross.abs() < GENERIC_GUARD {
                return false;
            }
        }
    }
    true
}

/// Raw draws retained by [`generate_with_internals`] so tests can verify the
/// structural equations on the exact generated values.
#[derive(Debug, Clone)]
pub struct SimInternals {
    pub x_raw: Vec<f64>,
    pub y_raw: Vec<f64>,
    pub u: Vec<f64>,
    pub eps1: Vec<f64>,
    pub eps2: Vec<f64>,
    pub eps3: Vec<f64>,
    pub genotypes_raw: Vec<Vec<f64>>,
}

/// Generates a dataset of `n` observations from a drawn scenario.
pub fn generate_dataset<R: Rng + ?Sized>(
    draw: &ScenarioDraw,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    Ok(generate_with_internals(&draw.params, &draw.laws, n, rng)?.0)
}

/// Generates a dataset directly from model parameters, deriving genotype
/// laws from the variant variances.
pub fn generate_from_params<R: Rng + ?Sized>(
    params: &ModelParams,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    let laws = laws_from_variances(&params.variant_variances);
    Ok(generate_with_internals(params, &laws, n, rng)?.0)
}

/// Full generation pass that also returns the raw draws.
pub fn generate_with_internals<R: Rng + ?Sized>(
    params: &ModelParams,
    laws: &[GenotypeLaw],
    n: usize,
    rng: &mut R,
) -> Result<(Dataset, SimInternals)> {
    params.validate()?;
    let g = params.num_variants();
    if laws.len() != g {
        return Err(Error::InvalidParams(format!(
            "{} genotype laws for {} variants",
            laws.len(),
            g
        )));
    }
    if n < 4 {
        return Err(Error::TooFewObservations { min: 4, got: n });
    }

    // Columns first, in index order, so a fixed seed yields a bit-identical
    // dataset regardless of downstream use.
    let mut genotypes_raw: Vec<Vec<f64>> = Vec::with_capacity(g);
    for law in laws {
        let col = match *law {
            GenotypeLaw::Snp { maf } => (0..n)
                .map(|_| {
                    let mut dose = 0.0;
                    if rng.random::<f64>() < maf {
                        dose += 1.0;
                    }
                    if rng.random::<f64>() < maf {
                        dose += 1.0;
                    }
                    dose
                })
                .collect::<Vec<f64>>(),
            GenotypeLaw::Gaussian { variance } => {
                let sd = variance.sqrt();
                (0..n)
                    .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
            GenotypeLaw::Dependent { parent, loading } => {
                if parent >= genotypes_raw.len() {
                    return Err(Error::InvalidScenario(
                        "a dependent variant must follow its parent".into(),
                    ));
                }
                let parent_col = genotypes_raw[parent].clone();
                parent_col
                    .iter()
                    .map(|&p| loading * p + rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
        };
        genotypes_raw.push(col);
    }

    let sd = params.noise_variances.map(f64::sqrt);
    let eps1: Vec<f64> = (0..n).map(|_| sd[0] * rng.sample::<f64, _>(StandardNormal)).collect();
    let eps2: Vec<f64> = (0..n).map(|_| sd[1] * rng.sample::<f64, _>(StandardNormal)).collect();
    let eps3: Vec<f64> = (0..n).map(|_| sd[2] * rng.sample::<f64, _>(StandardNormal)).collect();

    let delta = params.delta();
    let mut u = vec![0.0; n];
    let mut x_raw = vec![0.0; n];
    let mut y_raw = vec![0.0; n];
    for i in 0..n {
        let mut gu = 0.0;
        let mut gx = 0.0;
        let mut gy = 0.0;
        for j in 0..g {
            let v = genotypes_raw[j][i];
            gu += params.gamma_u[j] * v;
            gx += params.gamma_x[j] * v;
            gy += params.gamma_y[j] * v;
        }
        let ui = gu + eps1[i];
        // Structural right-hand sides without the phenotype feedback terms.
        let rx = gx + params.gamma_xu * ui + eps2[i];
        let ry = gy + params.gamma_yu * ui + eps3[i];
        u[i] = ui;
        x_raw[i] = delta * (rx + params.beta_yx * ry);
        y_raw[i] = delta * (ry + params.beta_xy * rx);
    }

    let dataset = Dataset::new(x_raw.clone(), y_raw.clone(), genotypes_raw.clone(), None)?;
    Ok((
        dataset,
        SimInternals {
            x_raw,
            y_raw,
            u,
            eps1,
            eps2,
            eps3,
            genotypes_raw,
        },
    ))
}

/// Deterministic per-replication seed derivation (splitmix-style mix).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
