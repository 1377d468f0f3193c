//! Observed data: two phenotypes and a genotype matrix.
//!
//! A [`Dataset`] is immutable after construction. All variables are centered
//! to zero mean once, at construction, so every downstream covariance formula
//! is intercept-free. Cross-products between all columns are cached lazily;
//! estimators run on those sums instead of re-scanning the raw columns.

use std::io::{Read, Write};
use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Minimum number of observations (the Fisher z test needs n > 3).
pub const MIN_OBSERVATIONS: usize = 4;

/// Sums of products over the centered columns: `gg[i][j] = sum g_i g_j`,
/// `gx[j] = sum g_j x`, and so on. Correlations and least-squares fits
/// are ratios of these, so the 1/(n-1) factor is never needed.
#[derive(Debug, Clone)]
pub(crate) struct CrossProducts {
    pub gg: DMatrix<f64>,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
}

/// n observations of phenotypes x, y and a genotype matrix with g variants.
#[derive(Debug)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    genotypes: Vec<Vec<f64>>,
    variant_names: Vec<String>,
    cross: OnceLock<CrossProducts>,
}

impl Clone for Dataset {
    fn clone(&self) -> Self {
        Self {
            x: self.x.clone(),
            y: self.y.clone(),
            genotypes: self.genotypes.clone(),
            variant_names: self.variant_names.clone(),
            cross: OnceLock::new(),
        }
    }
}

fn center(values: &mut [f64]) {
    // Two passes: the second removes the residual of the first mean estimate,
    // keeping empirical means far below the 1e-9 construction invariant even
    // for n = 10^6.
    for _ in 0..2 {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        for v in values.iter_mut() {
            *v -= mean;
        }
    }
}

fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

impl Dataset {
    /// Builds a dataset, centering every column to zero mean.
    ///
    /// `variant_names` defaults to `G_1..G_g` when absent.
    pub fn new(
        x: Vec<f64>,
        y: Vec<f64>,
        genotypes: Vec<Vec<f64>>,
        variant_names: Option<Vec<String>>,
    ) -> Result<Self> {
        Self::build(x, y, genotypes, variant_names, true)
    }

    /// Builds a dataset from data that is already centered; no centering pass
    /// is applied. Intended for ingesting pre-centered files.
    pub fn new_precentered(
        x: Vec<f64>,
        y: Vec<f64>,
        genotypes: Vec<Vec<f64>>,
        variant_names: Option<Vec<String>>,
    ) -> Result<Self> {
        Self::build(x, y, genotypes, variant_names, false)
    }

    fn build(
        mut x: Vec<f64>,
        mut y: Vec<f64>,
        mut genotypes: Vec<Vec<f64>>,
        variant_names: Option<Vec<String>>,
        do_center: bool,
    ) -> Result<Self> {
        let n = x.len();
        if y.len() != n {
            return Err(Error::LengthMismatch(n, y.len()));
        }
        if n < MIN_OBSERVATIONS {
            return Err(Error::TooFewObservations {
                min: MIN_OBSERVATIONS,
                got: n,
            });
        }
        let g = genotypes.len();
        if g < 2 {
            return Err(Error::TooFewVariants(g));
        }
        for col in &genotypes {
            if col.len() != n {
                return Err(Error::LengthMismatch(n, col.len()));
            }
        }
        check_finite(&x, "phenotype x")?;
        check_finite(&y, "phenotype y")?;
        for col in &genotypes {
            check_finite(col, "genotype column")?;
        }
        let variant_names = match variant_names {
            Some(names) => {
                if names.len() != g {
                    return Err(Error::LengthMismatch(g, names.len()));
                }
                names
            }
            None => (1..=g).map(|i| format!("G_{i}")).collect(),
        };
        if do_center {
            center(&mut x);
            center(&mut y);
            for col in &mut genotypes {
                center(col);
            }
        }
        Ok(Self {
            x,
            y,
            genotypes,
            variant_names,
            cross: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Number of genetic variants.
    pub fn g(&self) -> usize {
        self.genotypes.len()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn genotype(&self, j: usize) -> &[f64] {
        &self.genotypes[j]
    }

    pub fn variant_names(&self) -> &[String] {
        &self.variant_names
    }

    /// Returns a copy with the roles of x and y exchanged.
    pub fn swap_phenotypes(&self) -> Dataset {
        Dataset {
            x: self.y.clone(),
            y: self.x.clone(),
            genotypes: self.genotypes.clone(),
            variant_names: self.variant_names.clone(),
            cross: OnceLock::new(),
        }
    }

    pub(crate) fn cross_products(&self) -> &CrossProducts {
        self.cross.get_or_init(|| {
            let g = self.g();
            let mut gg = DMatrix::zeros(g, g);
            for i in 0..g {
                for j in i..g {
                    let s = dot(&self.genotypes[i], &self.genotypes[j]);
                    gg[(i, j)] = s;
                    gg[(j, i)] = s;
                }
            }
            let gx = self.genotypes.iter().map(|c| dot(c, &self.x)).collect();
            let gy = self.genotypes.iter().map(|c| dot(c, &self.y)).collect();
            CrossProducts {
                gg,
                gx,
                gy,
                xx: dot(&self.x, &self.x),
                yy: dot(&self.y, &self.y),
                xy: dot(&self.x, &self.y),
            }
        })
    }

    /// Reads the CSV interchange format: header `x,y,<name>,...`, one
    /// observation per row. Data is centered unless `center` is false.
    pub fn read_csv<R: Read>(reader: R, center: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 {
            return Err(Error::MalformedCsv(
                "header must start with columns `x,y`".into(),
            ));
        }
        if headers.get(0) != Some("x") || headers.get(1) != Some("y") {
            return Err(Error::MalformedCsv(format!(
                "expected header to start with `x,y`, got `{},{}`",
                headers.get(0).unwrap_or(""),
                headers.get(1).unwrap_or("")
            )));
        }
        let g = headers.len() - 2;
        let names: Vec<String> = headers.iter().skip(2).map(str::to_owned).collect();
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); g];
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != headers.len() {
                return Err(Error::MalformedCsv(format!(
                    "row {} has {} fields, expected {}",
                    line + 2,
                    record.len(),
                    headers.len()
                )));
            }
            let parse = |field: &str| -> Result<f64> {
                field.trim().parse::<f64>().map_err(|_| {
                    Error::MalformedCsv(format!("row {}: `{field}` is not a number", line + 2))
                })
            };
            x.push(parse(&record[0])?);
            y.push(parse(&record[1])?);
            for (j, col) in cols.iter_mut().enumerate() {
                col.push(parse(&record[j + 2])?);
            }
        }
        Self::build(x, y, cols, Some(names), center)
    }

    /// Writes the CSV interchange format (stored, i.e. centered, values).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["x".to_string(), "y".to_string()];
        header.extend(self.variant_names.iter().cloned());
        wtr.write_record(&header)?;
        for i in 0..self.n() {
            let mut row = Vec::with_capacity(2 + self.g());
            row.push(format_value(self.x[i]));
            row.push(format_value(self.y[i]));
            for col in &self.genotypes {
                row.push(format_value(col[i]));
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn format_value(v: f64) -> String {
    // Round-trippable so re-reading the file reproduces the dataset exactly.
    format!("{}", v)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Checks indices form a valid, strictly increasing subset of `0..g`.
pub(crate) fn check_subset(subset: &[usize], g: usize) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    for &j in subset {
        if j >= g {
            return Err(Error::IndexOutOfRange {
                index: j,
                num_variants: g,
            });
        }
    }
    for w in subset.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::InvalidSubset(
                "indices must be strictly increasing".into(),
            ));
        }
    }
    Ok(())
}
