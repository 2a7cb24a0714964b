//! Factor spaces, approximate designs, distances between design points,
//! information-matrix assembly and design comparison.

use std::cmp::Ordering;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::FisherMatrix;
use crate::model::ModelSpec;

/// Tolerance on `|sum(w) - 1|` accepted when constructing a design.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Renormalization trigger after merging or deleting points.
pub const RENORMALIZE_TOL: f64 = 1e-14;

/// The design region: `k` continuous intervals followed by finite level sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpace {
    continuous: Vec<(f64, f64)>,
    discrete: Vec<Vec<f64>>,
}

impl FactorSpace {
    /// Validates the bounds and sorts each discrete level set ascending.
    pub fn new(continuous: Vec<(f64, f64)>, discrete: Vec<Vec<f64>>) -> Result<Self> {
        for (i, &(lo, hi)) in continuous.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidSpace(format!(
                    "continuous factor {} needs finite bounds with lower < upper, got [{lo}, {hi}]",
                    i + 1
                )));
            }
        }
        let mut sorted = Vec::with_capacity(discrete.len());
        for (j, levels) in discrete.into_iter().enumerate() {
            let mut levels = levels;
            if levels.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSpace(format!(
                    "discrete factor {} has a non-finite level",
                    continuous.len() + j + 1
                )));
            }
            levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = levels.len();
            levels.dedup();
            if levels.len() != n || n < 2 {
                return Err(Error::InvalidSpace(format!(
                    "discrete factor {} needs at least two distinct levels",
                    continuous.len() + j + 1
                )));
            }
            sorted.push(levels);
        }
        if continuous.is_empty() && sorted.is_empty() {
            return Err(Error::InvalidSpace("at least one factor is required".into()));
        }
        Ok(Self {
            continuous,
            discrete: sorted,
        })
    }

    /// Purely continuous box.
    pub fn continuous(bounds: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(bounds, Vec::new())
    }

    /// Number of continuous factors.
    pub fn k(&self) -> usize {
        self.continuous.len()
    }

    /// Total number of factors.
    pub fn dim(&self) -> usize {
        self.continuous.len() + self.discrete.len()
    }

    pub fn continuous_bounds(&self) -> &[(f64, f64)] {
        &self.continuous
    }

    pub fn discrete_levels(&self) -> &[Vec<f64>] {
        &self.discrete
    }

    /// `(min, max)` of factor `i`, for either kind.
    pub fn range(&self, i: usize) -> (f64, f64) {
        if i < self.k() {
            self.continuous[i]
        } else {
            let l = &self.discrete[i - self.k()];
            (l[0], l[l.len() - 1])
        }
    }

    /// Number of discrete level combinations (as a float to survive overflow).
    pub fn combination_count(&self) -> f64 {
        self.discrete.iter().map(|l| l.len() as f64).product()
    }

    /// All discrete level combinations in odometer order (last factor fastest).
    pub fn combinations(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::with_capacity(self.discrete.len())];
        for levels in &self.discrete {
            let mut next = Vec::with_capacity(out.len() * levels.len());
            for prefix in &out {
                for &l in levels {
                    let mut c = prefix.clone();
                    c.push(l);
                    next.push(c);
                }
            }
            out = next;
        }
        out
    }

    /// Nearest declared level of discrete factor `i` (ties go to the lower level).
    pub fn snap_level(&self, i: usize, value: f64) -> f64 {
        let levels = &self.discrete[i - self.k()];
        let mut best = levels[0];
        let mut best_dist = (value - best).abs();
        for &l in &levels[1..] {
            let d = (value - l).abs();
            if d < best_dist {
                best = l;
                best_dist = d;
            }
        }
        best
    }

    /// Checks that `x` lies in the region: continuous coordinates inside
    /// their interval (with absolute slack `tol`) and discrete coordinates on
    /// a declared level exactly.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        let k = self.k();
        x[..k]
            .iter()
            .zip(&self.continuous)
            .all(|(v, &(lo, hi))| *v >= lo - tol && *v <= hi + tol)
            && x[k..]
                .iter()
                .zip(&self.discrete)
                .all(|(v, levels)| levels.contains(v))
    }

    /// Clamps continuous coordinates into the box and snaps discrete ones.
    pub fn project(&self, x: &mut [f64]) {
        let k = self.k();
        for (v, &(lo, hi)) in x[..k].iter_mut().zip(&self.continuous) {
            *v = v.clamp(lo, hi);
        }
        for i in k..self.dim() {
            x[i] = self.snap_level(i, x[i]);
        }
    }
}

/// A point of the design region; the first `k` coordinates are continuous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint(pub Vec<f64>);

impl DesignPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl From<Vec<f64>> for DesignPoint {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl std::ops::Deref for DesignPoint {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// An approximate design: distinct points with weights on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    points: Vec<DesignPoint>,
    weights: Vec<f64>,
}

impl Design {
    pub fn new(points: Vec<DesignPoint>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidDesign("design has no points".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::InvalidDesign(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let d = points[0].dim();
        if points.iter().any(|p| p.dim() != d) {
            return Err(Error::InvalidDesign("points have differing dimensions".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidDesign("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidDesign(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { points, weights })
    }

    /// Like [`Design::new`] but rescales the weights to sum to one first.
    pub fn normalized(points: Vec<DesignPoint>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidDesign("weights must have a positive sum".into()));
        }
        Self::new(points, weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(points: Vec<DesignPoint>) -> Result<Self> {
        let m = points.len();
        Self::new(points, vec![1.0 / m as f64; m])
    }

    pub(crate) fn from_parts_unchecked(points: Vec<DesignPoint>, weights: Vec<f64>) -> Self {
        Self { points, weights }
    }

    pub fn points(&self) -> &[DesignPoint] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, DesignPoint::dim)
    }

    /// Points with positive weight only, renormalized.
    pub fn support(&self) -> Design {
        let (points, weights): (Vec<_>, Vec<_>) = self
            .points
            .iter()
            .zip(&self.weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(p, w)| (p.clone(), *w))
            .unzip();
        let mut d = Design::from_parts_unchecked(points, weights);
        d.renormalize();
        d
    }

    /// Rescales weights when their sum drifts from one by more than `1e-14`.
    pub(crate) fn renormalize(&mut self) {
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > RENORMALIZE_TOL && total > 0.0 {
            self.weights.iter_mut().for_each(|w| *w /= total);
        }
    }

    /// Points sorted by descending weight, ties broken by ascending coordinates.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.weights[b]
                .partial_cmp(&self.weights[a])
                .unwrap_or(Ordering::Equal)
                .then_with(|| lex_cmp(&self.points[a], &self.points[b]))
        });
        idx
    }

    /// Writes the design as CSV: header `x1,...,xd,weight`, 15 significant
    /// digits, rows in [`Design::canonical_order`].
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim()).map(|i| format!("x{i}")).collect();
        header.push("weight".into());
        w.write_record(&header).map_err(io_err)?;
        for i in self.canonical_order() {
            let mut row: Vec<String> = self.points[i].iter().map(|v| format_sig(*v, 15)).collect();
            row.push(format_sig(self.weights[i], 15));
            w.write_record(&row).map_err(io_err)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    /// Reads a design CSV. The header must be `x1,...,xd,weight`; weights are
    /// validated (they must already sum to one within `1e-12` after parsing,
    /// up to the rounding of 15-digit output, which is renormalized away).
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(input);
        let header = rdr.headers().map_err(io_err)?.clone();
        let ncol = header.len();
        if ncol < 2 || &header[ncol - 1] != "weight" {
            return Err(Error::Parse("design CSV header must end with `weight`".into()));
        }
        for (i, h) in header.iter().take(ncol - 1).enumerate() {
            if h != format!("x{}", i + 1) {
                return Err(Error::Parse(format!(
                    "design CSV column {} should be `x{}`, found `{h}`",
                    i + 1,
                    i + 1
                )));
            }
        }
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (row_no, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(io_err)?;
            let vals = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("design CSV row {}: {e}", row_no + 1)))?;
            if vals.len() != ncol {
                return Err(Error::Parse(format!(
                    "design CSV row {} has {} fields, expected {ncol}",
                    row_no + 1,
                    vals.len()
                )));
            }
            weights.push(vals[ncol - 1]);
            points.push(DesignPoint(vals[..ncol - 1].to_vec()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDesign(format!("weights sum to {total}, not 1")));
        }
        Design::normalized(points, weights)
    }

    pub fn from_csv_str(s: &str) -> Result<Self> {
        Self::read_csv(s.as_bytes())
    }

    /// Checks every point against the factor space.
    pub fn check_in(&self, space: &FactorSpace) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if p.dim() != space.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "point {} has {} coordinates, factor space has {}",
                    i + 1,
                    p.dim(),
                    space.dim()
                )));
            }
            if !space.contains(p, 1e-9) {
                return Err(Error::InvalidDesign(format!(
                    "point {} ({:?}) lies outside the factor space",
                    i + 1,
                    p.coords()
                )));
            }
        }
        Ok(())
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Formats `v` with `digits` significant digits in the style of C's `%.{digits}g`.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -5 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        return format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, v)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// How distances between design points are measured when merging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    /// Per-factor differences divided by the factor range `b_l - a_l`.
    Normalized,
    /// Infinite when any discrete coordinate differs; Euclidean on the
    /// continuous part otherwise.
    DiscreteBlocking,
}

impl std::str::FromStr for DistanceMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Self::Euclidean),
            "normalized" => Ok(Self::Normalized),
            "discrete-blocking" => Ok(Self::DiscreteBlocking),
            other => Err(Error::Parse(format!("unknown distance metric `{other}`"))),
        }
    }
}

pub fn distance(a: &[f64], b: &[f64], metric: DistanceMetric, space: &FactorSpace) -> f64 {
    let k = space.k();
    match metric {
        DistanceMetric::Euclidean => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt(),
        DistanceMetric::Normalized => a
            .iter()
            .zip(b)
            .enumerate()
            .map(|(l, (x, y))| {
                let (lo, hi) = space.range(l);
                ((x - y) / (hi - lo)).powi(2)
            })
            .sum::<f64>()
            .sqrt(),
        DistanceMetric::DiscreteBlocking => {
            if a[k..] != b[k..] {
                return f64::INFINITY;
            }
            a[..k]
                .iter()
                .zip(&b[..k])
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt()
        }
    }
}

/// Repeatedly fuses the first pair (in ascending `(i, j)` order) closer than
/// `delta` into its midpoint carrying the summed weight, until all pairs are
/// at least `delta` apart. Merged discrete coordinates are snapped to the
/// nearest declared level.
pub fn merge_close_points(
    design: &Design,
    space: &FactorSpace,
    metric: DistanceMetric,
    delta: f64,
) -> Design {
    let mut points: Vec<Vec<f64>> = design.points.iter().map(|p| p.0.clone()).collect();
    let mut weights = design.weights.clone();
    'scan: loop {
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                if distance(&points[i], &points[j], metric, space) < delta {
                    let merged: Vec<f64> = points[i]
                        .iter()
                        .zip(&points[j])
                        .enumerate()
                        .map(|(l, (a, b))| {
                            let mid = 0.5 * (a + b);
                            if l >= space.k() && l < space.dim() {
                                space.snap_level(l, mid)
                            } else {
                                mid
                            }
                        })
                        .collect();
                    points[i] = merged;
                    weights[i] += weights[j];
                    points.remove(j);
                    weights.remove(j);
                    continue 'scan;
                }
            }
        }
        break;
    }
    let mut out = Design::from_parts_unchecked(points.into_iter().map(DesignPoint).collect(), weights);
    out.renormalize();
    out
}

/// `F(xi) = sum_i w_i F_{x_i}`.
pub fn information_matrix(design: &Design, model: &ModelSpec) -> Result<FisherMatrix> {
    let p = model.num_params();
    let mut f = FisherMatrix::zeros(p);
    for (i, (x, w)) in design.points.iter().zip(&design.weights).enumerate() {
        if x.dim() != model.dim() {
            return Err(Error::DimensionMismatch(format!(
                "point {} has {} coordinates but the model expects {}",
                i + 1,
                x.dim(),
                model.dim()
            )));
        }
        let fx = model.fisher_at_point(x).map_err(|e| match e {
            Error::InfeasiblePoint { .. } => Error::InfeasiblePoint { index: i },
            other => other,
        })?;
        f.add_scaled(*w, &fx);
    }
    Ok(f)
}

/// `log |F(xi)|`, `-inf` when singular.
pub fn design_log_det(design: &Design, model: &ModelSpec) -> Result<f64> {
    Ok(information_matrix(design, model)?.log_det())
}

/// `(|F(a)| / |F(b)|)^(1/p)`, computed in log space.
pub fn relative_efficiency(a: &Design, b: &Design, model: &ModelSpec) -> Result<f64> {
    let lb = design_log_det(b, model)?;
    if !lb.is_finite() {
        return Err(Error::SingularReference);
    }
    let la = design_log_det(a, model)?;
    if !la.is_finite() {
        return Ok(0.0);
    }
    Ok(((la - lb) / model.num_params() as f64).exp())
}
