//! Step II: assign discovered instruments to a causal direction and compute
//! the final TSLS effects.
//!
//! For a valid instrument the ratio `|corr(G_j, Y)| / |corr(G_j, X)|` is
//! below one exactly when the instrument drives the exposure of the x-to-y
//! relationship; the variance-ordering assumption makes the ratio land on
//! the other side for the reverse direction. Assignment is per variant by
//! default; a per-set majority vote is available for robustness studies.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::discovery::IVSetCollection;
use crate::error::{Error, Result};
use crate::estimators::tsls_estimate_directed;
use crate::model::{Direction, MomentMatrix};

/// Per-direction effect estimates and the instrument assignment behind them.
/// An absent estimate means no instrument was assigned to that direction,
/// i.e. the data shows a one-directional model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimates {
    pub beta_hat_xy: Option<f64>,
    pub beta_hat_yx: Option<f64>,
    pub assigned_xy: Vec<usize>,
    pub assigned_yx: Vec<usize>,
}

/// How variants of one discovered set are mapped to directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AssignmentPolicy {
    /// Each variant is classified by its own ratio.
    #[default]
    PerVariant,
    /// A whole set follows the majority of its variants' ratios.
    PerSetMajority,
}

/// Side observations from the assignment pass.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DirectionNotes {
    /// Variants dropped because their exposure correlation sat below the
    /// tolerance (irrelevant instruments).
    pub dropped: Vec<usize>,
    /// Indices (into the input collection) of sets whose variants
    /// disagreed on direction under per-variant assignment.
    pub mixed_sets: Vec<usize>,
    /// Indices of sets whose unanimous direction coincided with another
    /// set's. Two kept clusters only coexist because their union failed the
    /// valid-set test, so a shared direction flags a spurious cluster; the
    /// data cannot say which one.
    pub same_side_sets: Vec<usize>,
}

/// `|corr(G_j, Y)| / |corr(G_j, X)|`. Errors when the denominator
/// correlation is below `tolerance`.
pub fn direction_ratio(ds: &Dataset, j: usize, tolerance: f64) -> Result<f64> {
    if j >= ds.g() {
        return Err(Error::IndexOutOfRange {
            index: j,
            num_variants: ds.g(),
        });
    }
    let c = ds.cross_products();
    let s_gg = c.gg[(j, j)];
    if s_gg <= 0.0 {
        return Err(Error::ZeroVariance("genotype column"));
    }
    if c.xx <= 0.0 || c.yy <= 0.0 {
        return Err(Error::ZeroVariance("phenotype"));
    }
    let corr_x = c.gx[j] / (s_gg * c.xx).sqrt();
    let corr_y = c.gy[j] / (s_gg * c.yy).sqrt();
    if corr_x.abs() <= tolerance {
        return Err(Error::IrrelevantInstrument(j));
    }
    Ok(corr_y.abs() / corr_x.abs())
}

/// Population twin of [`direction_ratio`], exact from the moment matrix.
pub fn direction_ratio_population(m: &MomentMatrix, j: usize, tolerance: f64) -> Result<f64> {
    if j >= m.num_variants() {
        return Err(Error::IndexOutOfRange {
            index: j,
            num_variants: m.num_variants(),
        });
    }
    let corr_x = m.cov_gx(j) / (m.cov_gg(j, j) * m.var_x()).sqrt();
    let corr_y = m.cov_gy(j) / (m.cov_gg(j, j) * m.var_y()).sqrt();
    if corr_x.abs() <= tolerance {
        return Err(Error::IrrelevantInstrument(j));
    }
    Ok(corr_y.abs() / corr_x.abs())
}

/// Ratio strictly below one means the x-to-y direction; a ratio of exactly
/// one goes to y-to-x, matching the strict/non-strict split of the
/// variance-ordering assumption.
fn classify(ratio: f64) -> Direction {
    if ratio < 1.0 {
        Direction::XToY
    } else {
        Direction::YToX
    }
}

/// Assigns every variant of every discovered set to a direction and computes
/// the final TSLS effect per direction. Irrelevant variants are dropped with
/// a note rather than aborting; TSLS failures on an assembled direction
/// propagate.
///
/// Two discovered clusters assigned unanimously to the same side contradict
/// the cluster structure (their union failed the valid-set test, which rules
/// out one shared direction); the conflict is recorded in the notes, and all
/// variants still enter the pooled estimate of their assigned side.
pub fn infer_direction_effects(
    ds: &Dataset,
    collection: &IVSetCollection,
    policy: AssignmentPolicy,
    tolerance: f64,
) -> Result<(EffectEstimates, DirectionNotes)> {
    collection.validate(ds.g())?;
    let mut notes = DirectionNotes::default();
    let mut assigned_xy = Vec::new();
    let mut assigned_yx = Vec::new();
    // Per-set unanimous (or majority, under that policy) direction.
    let mut set_sides: Vec<Option<Direction>> = Vec::new();
    let mut assignments: Vec<Vec<(usize, Direction)>> = Vec::new();

    for (set_idx, set) in collection.sets.iter().enumerate() {
        let mut votes: Vec<(usize, Direction)> = Vec::with_capacity(set.len());
        for &j in set {
            match direction_ratio(ds, j, tolerance) {
                Ok(ratio) => votes.push((j, classify(ratio))),
                Err(Error::IrrelevantInstrument(_)) => notes.dropped.push(j),
                Err(e) => return Err(e),
            }
        }
        if votes.is_empty() {
            set_sides.push(None);
            assignments.push(Vec::new());
            continue;
        }
        let n_xy = votes.iter().filter(|(_, d)| *d == Direction::XToY).count();
        if n_xy != 0 && n_xy != votes.len() {
            notes.mixed_sets.push(set_idx);
        }
        match policy {
            AssignmentPolicy::PerVariant => {
                set_sides.push(if n_xy == votes.len() {
                    Some(Direction::XToY)
                } else if n_xy == 0 {
                    Some(Direction::YToX)
                } else {
                    None
                });
                assignments.push(votes);
            }
            AssignmentPolicy::PerSetMajority => {
                // Ties follow the non-strict side, like the boundary ratio.
                let majority = if n_xy * 2 > votes.len() {
                    Direction::XToY
                } else {
                    Direction::YToX
                };
                set_sides.push(Some(majority));
                assignments.push(votes.into_iter().map(|(j, _)| (j, majority)).collect());
            }
        }
    }

    if assignments.len() == 2 {
        if let (Some(a), Some(b)) = (set_sides[0], set_sides[1]) {
            if a == b {
                notes.same_side_sets.extend([0, 1]);
            }
        }
    }

    for votes in assignments {
        for (j, d) in votes {
            match d {
                Direction::XToY => assigned_xy.push(j),
                Direction::YToX => assigned_yx.push(j),
            }
        }
    }

    assigned_xy.sort_unstable();
    assigned_yx.sort_unstable();
    let beta_hat_xy = if assigned_xy.is_empty() {
        None
    } else {
        Some(tsls_estimate_directed(ds, &assigned_xy, Direction::XToY)?)
    };
    let beta_hat_yx = if assigned_yx.is_empty() {
        None
    } else {
        Some(tsls_estimate_directed(ds, &assigned_yx, Direction::YToX)?)
    };
    Ok((
        EffectEstimates {
            beta_hat_xy,
            beta_hat_yx,
            assigned_xy,
            assigned_yx,
        },
        notes,
    ))
}
