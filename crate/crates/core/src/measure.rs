//! Weighted atomic measures and the Hilbert space of grid-sampled functions.
//!
//! A [`GridMeasure`] is a finite atomic measure `λ = Σ_j w_j δ_{t_j}` with
//! strictly increasing atoms and positive weights. Functions sampled on the
//! atoms live in `L²(λ)`; [`inner`] and [`norm`] give the induced inner
//! product and norm. Vectors remember which measure they were built on and
//! cross-measure operations are rejected instead of silently re-sampled.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

static NEXT_MEASURE_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone)]
pub struct GridMeasure {
    points: Vec<f64>,
    weights: Vec<f64>,
    label: String,
    total_mass: f64,
    id: u64,
}

impl GridMeasure {
    pub fn new(points: Vec<f64>, weights: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Invalid("measure needs at least one atom".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::Invalid(format!(
                "{} points vs {} weights",
                points.len(),
                weights.len()
            )));
        }
        if points.windows(2).any(|p| !(p[0] < p[1])) {
            return Err(Error::Invalid("atoms must be strictly increasing".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Invalid("non-finite atom".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Invalid("weights must be positive and finite".into()));
        }
        let total_mass = compensated_sum(weights.iter().copied());
        Ok(Self {
            points,
            weights,
            label: label.into(),
            total_mass,
            id: NEXT_MEASURE_ID.fetch_add(1, Ordering::Relaxed),
        })
    }

    /// Equal weight `w` on every atom.
    pub fn uniform(points: Vec<f64>, w: f64, label: impl Into<String>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![w; n], label)
    }

    /// Regular grid `t_j = a + jΔ`, `j = 1..=t_count`, with common weight
    /// `Δ = (b − a)/t_count`.
    pub fn regular(a: f64, b: f64, t_count: usize, label: impl Into<String>) -> Result<Self> {
        if !(a < b) || t_count == 0 {
            return Err(Error::Invalid("regular grid needs a < b and T >= 1".into()));
        }
        let dt = (b - a) / t_count as f64;
        let points = (1..=t_count).map(|j| a + j as f64 * dt).collect();
        Self::uniform(points, dt, label)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub(crate) fn id(&self) -> u64 {
        self.id
    }

    /// Common weight when all weights are equal (relative tolerance 1e-12).
    pub fn common_weight(&self) -> Option<f64> {
        let w0 = self.weights[0];
        if self
            .weights
            .iter()
            .all(|w| (w - w0).abs() <= 1e-12 * w0.abs())
        {
            Some(w0)
        } else {
            None
        }
    }

    /// Two-column text table `point weight`, one atom per line.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for (p, w) in self.points.iter().zip(&self.weights) {
            out.push_str(&format!("{p:.17e} {w:.17e}\n"));
        }
        out
    }

    pub fn from_table(table: &str, label: impl Into<String>) -> Result<Self> {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (lineno, line) in table.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split_whitespace();
            let (Some(p), Some(w)) = (cols.next(), cols.next()) else {
                return Err(Error::Parse(format!("line {}: need two columns", lineno + 1)));
            };
            points.push(
                p.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?,
            );
            weights.push(
                w.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?,
            );
        }
        Self::new(points, weights, label)
    }
}

/// A function sampled on the atoms of one specific measure.
#[derive(Debug, Clone)]
pub struct HilbertVector {
    values: Vec<f64>,
    measure_id: u64,
}

impl HilbertVector {
    pub fn new(values: Vec<f64>, m: &GridMeasure) -> Result<Self> {
        if values.len() != m.len() {
            return Err(Error::Alignment(format!(
                "{} values vs {} atoms",
                values.len(),
                m.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite sample value".into()));
        }
        Ok(Self {
            values,
            measure_id: m.id(),
        })
    }

    pub fn from_fn(m: &GridMeasure, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(m.points().iter().map(|&t| f(t)).collect(), m)
    }

    pub fn zeros(m: &GridMeasure) -> Self {
        Self {
            values: vec![0.0; m.len()],
            measure_id: m.id(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn check(&self, m: &GridMeasure) -> Result<()> {
        if self.measure_id != m.id() {
            return Err(Error::Alignment(
                "vector was built on a different measure".into(),
            ));
        }
        Ok(())
    }

    /// `self += a * other` (same measure required).
    pub fn axpy(&mut self, a: f64, other: &HilbertVector) -> Result<()> {
        if self.measure_id != other.measure_id {
            return Err(Error::Alignment("axpy across measures".into()));
        }
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        for x in &mut self.values {
            *x *= a;
        }
    }
}

/// `⟨f, g⟩ = Σ_j w_j f(t_j) g(t_j)` with compensated accumulation.
pub fn inner(f: &HilbertVector, g: &HilbertVector, m: &GridMeasure) -> Result<f64> {
    f.check(m)?;
    g.check(m)?;
    Ok(compensated_sum(
        m.weights()
            .iter()
            .zip(f.values().iter().zip(g.values()))
            .map(|(w, (a, b))| w * a * b),
    ))
}

pub fn norm(f: &HilbertVector, m: &GridMeasure) -> Result<f64> {
    Ok(inner(f, f, m)?.max(0.0).sqrt())
}

/// Neumaier-compensated summation.
pub(crate) fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prob_measure(t: usize) -> GridMeasure {
        let points = (0..t).map(|j| j as f64).collect();
        GridMeasure::uniform(points, 1.0 / t as f64, "prob").unwrap()
    }

    #[test]
    fn constant_one_has_unit_mass() {
        let m = prob_measure(100);
        let one = HilbertVector::from_fn(&m, |_| 1.0).unwrap();
        assert!((inner(&one, &one, &m).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn disjoint_indicators_are_orthogonal() {
        let m = prob_measure(10);
        let mut a = HilbertVector::zeros(&m);
        let mut b = HilbertVector::zeros(&m);
        a.values_mut()[2] = 1.0;
        b.values_mut()[7] = 1.0;
        assert_eq!(inner(&a, &b, &m).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_feature_mass_matches_closed_form() {
        // ∫ exp(-(t-θ)²/σ²) dt = √π σ, approximated on a wide fine grid.
        let sigma = 0.7;
        let m = GridMeasure::regular(-30.0, 30.0, 60_000, "fine").unwrap();
        let phi = HilbertVector::from_fn(&m, |t| (-(t * t) / (2.0 * sigma * sigma)).exp()).unwrap();
        let got = inner(&phi, &phi, &m).unwrap();
        let want = std::f64::consts::PI.sqrt() * sigma;
        assert!((got - want).abs() / want < 1e-3, "got {got}, want {want}");
    }

    #[test]
    fn norm_squares_to_inner() {
        let m = prob_measure(57);
        let f = HilbertVector::from_fn(&m, |t| (0.3 * t).sin() + 0.1 * t).unwrap();
        let n = norm(&f, &m).unwrap();
        let ip = inner(&f, &f, &m).unwrap();
        assert!((n * n - ip).abs() <= 1e-12 * ip.abs());
    }

    #[test]
    fn cross_measure_rejected() {
        let m1 = prob_measure(5);
        let m2 = prob_measure(5);
        let f = HilbertVector::zeros(&m1);
        let g = HilbertVector::zeros(&m2);
        assert!(inner(&f, &g, &m1).is_err());
        assert!(inner(&f, &f, &m2).is_err());
    }

    #[test]
    fn table_roundtrip() {
        let m = GridMeasure::new(vec![0.5, 1.25, 9.0], vec![0.1, 0.2, 0.3], "t").unwrap();
        let back = GridMeasure::from_table(&m.to_table(), "t").unwrap();
        assert_eq!(m.points(), back.points());
        assert_eq!(m.weights(), back.weights());
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(GridMeasure::new(vec![0.0, 0.0], vec![1.0, 1.0], "x").is_err());
        assert!(GridMeasure::new(vec![1.0, 0.0], vec![1.0, 1.0], "x").is_err());
        assert!(GridMeasure::new(vec![0.0, 1.0], vec![1.0, -1.0], "x").is_err());
        assert!(GridMeasure::new(vec![0.0, 1.0], vec![1.0], "x").is_err());
    }
}
