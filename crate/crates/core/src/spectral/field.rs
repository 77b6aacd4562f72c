use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};

use super::BasisSpec;

/// Coefficient vector over a [`BasisSpec`]: `φ = Σ_k c_k e_k`.
#[derive(Debug, Clone)]
pub struct SpectralField {
    coeffs: Vec<f64>,
    basis: Arc<BasisSpec>,
}

/// Samples on the quadrature grid of a [`BasisSpec`], row-major.
#[derive(Debug, Clone)]
pub struct GridField {
    values: Vec<f64>,
    basis: Arc<BasisSpec>,
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.basis, &other.basis) && self.coeffs == other.coeffs
    }
}

impl SpectralField {
    pub fn new(basis: Arc<BasisSpec>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.m() {
            return Err(Error::ShapeMismatch(format!(
                "{} coefficients for a basis of {} modes",
                coeffs.len(),
                basis.m()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(invalid("spectral coefficients must be finite"));
        }
        Ok(Self { coeffs, basis })
    }

    pub(crate) fn from_raw(basis: Arc<BasisSpec>, coeffs: Vec<f64>) -> Self {
        debug_assert_eq!(coeffs.len(), basis.m());
        Self { coeffs, basis }
    }

    pub fn zeros(basis: Arc<BasisSpec>) -> Self {
        let m = basis.m();
        Self::from_raw(basis, vec![0.0; m])
    }

    /// `amplitude · e_index`.
    pub fn mode(basis: Arc<BasisSpec>, index: usize, amplitude: f64) -> Result<Self> {
        let mut f = Self::zeros(basis);
        let len = f.coeffs.len();
        *f.coeffs.get_mut(index).ok_or(Error::IndexOutOfRange { index, len })? = amplitude;
        Ok(f)
    }

    /// Coefficients of the constant function `value` (only mode 0 is non-zero).
    pub fn constant(basis: Arc<BasisSpec>, value: f64) -> Self {
        let mut f = Self::zeros(basis);
        f.coeffs[0] = value * f.basis.domain().volume().sqrt();
        f
    }

    pub fn basis(&self) -> &Arc<BasisSpec> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn same_basis(&self, other: &SpectralField) -> bool {
        Arc::ptr_eq(&self.basis, &other.basis)
    }

    /// `π_r` applied to this field: coefficients past `r` are zeroed.
    pub fn truncate(&self, r: usize) -> SpectralField {
        let mut out = self.clone();
        for c in out.coeffs.iter_mut().skip(r) {
            *c = 0.0;
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> SpectralField {
        let coeffs = self.coeffs.iter().map(|c| c * factor).collect();
        Self::from_raw(self.basis.clone(), coeffs)
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        Self::from_raw(self.basis.clone(), coeffs)
    }

    pub fn add(&self, other: &SpectralField) -> SpectralField {
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a + b)
            .collect();
        Self::from_raw(self.basis.clone(), coeffs)
    }

    /// Plain `H` inner product of coefficient vectors.
    pub fn dot(&self, other: &SpectralField) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    /// Values on the quadrature grid by fast cosine synthesis.
    pub fn evaluate(&self) -> GridField {
        let mut values = Vec::new();
        self.basis.synthesize_into(&self.coeffs, &mut values);
        GridField {
            values,
            basis: self.basis.clone(),
        }
    }

    /// Reference path: `Σ_k c_k e_k(x_q)` summed directly at every node.
    pub fn evaluate_direct(&self) -> GridField {
        let grid = self.basis.grid();
        let values = (0..grid.len())
            .map(|q| {
                let x = grid.point(q);
                self.coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c * self.basis.eval_mode(i, &x))
                    .sum()
            })
            .collect();
        GridField {
            values,
            basis: self.basis.clone(),
        }
    }

    /// `∂_i φ` on the grid for every axis, evaluated as exact sine series.
    pub fn gradient_evaluate(&self) -> Vec<GridField> {
        (0..self.basis.dim())
            .map(|axis| {
                let mut values = Vec::new();
                self.basis
                    .synthesize_derivative_into(&self.coeffs, axis, &mut values);
                GridField {
                    values,
                    basis: self.basis.clone(),
                }
            })
            .collect()
    }
}

impl GridField {
    pub fn new(basis: Arc<BasisSpec>, values: Vec<f64>) -> Result<Self> {
        if values.len() != basis.grid().len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                basis.grid().len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("grid values must be finite"));
        }
        Ok(Self { values, basis })
    }

    pub(crate) fn from_raw(basis: Arc<BasisSpec>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), basis.grid().len());
        Self { values, basis }
    }

    pub fn constant(basis: Arc<BasisSpec>, value: f64) -> Self {
        let n = basis.grid().len();
        Self::from_raw(basis, vec![value; n])
    }

    /// Samples `f` at every node.
    pub fn from_fn(basis: Arc<BasisSpec>, f: impl Fn(&[f64]) -> f64) -> Self {
        let grid = basis.grid();
        let values = (0..grid.len()).map(|q| f(&grid.point(q))).collect();
        Self::from_raw(basis, values)
    }

    pub fn basis(&self) -> &Arc<BasisSpec> {
        &self.basis
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        Self::from_raw(self.basis.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// Midpoint-rule integral over the domain.
    pub fn integrate(&self) -> f64 {
        self.basis.grid().weight * self.values.iter().sum::<f64>()
    }

    /// Midpoint-rule `L²` inner product.
    pub fn inner(&self, other: &GridField) -> f64 {
        self.basis.grid().weight
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `π_m` by quadrature: `c_k = (values, e_k)` for `k < m`, zero beyond.
    pub fn project(&self, m: usize) -> Result<SpectralField> {
        if m > self.basis.m() {
            return Err(invalid(format!(
                "target mode count {m} exceeds basis size {}",
                self.basis.m()
            )));
        }
        let mut coeffs = Vec::new();
        let mut scratch = Vec::new();
        self.basis
            .analyze_into(&self.values, &mut scratch, &mut coeffs);
        for c in coeffs.iter_mut().skip(m) {
            *c = 0.0;
        }
        Ok(SpectralField::from_raw(self.basis.clone(), coeffs))
    }

    /// Reference path for [`GridField::project`]: direct quadrature sums.
    pub fn project_direct(&self) -> SpectralField {
        let grid = self.basis.grid();
        let mut coeffs = vec![0.0; self.basis.m()];
        for q in 0..grid.len() {
            let x = grid.point(q);
            for (i, c) in coeffs.iter_mut().enumerate() {
                *c += grid.weight * self.values[q] * self.basis.eval_mode(i, &x);
            }
        }
        SpectralField::from_raw(self.basis.clone(), coeffs)
    }

    /// Spectral `∂_axis` of a field that is a cosine series along `axis`.
    pub fn cosine_derivative(&self, axis: usize) -> GridField {
        let grid = self.basis.grid();
        let n = grid.shape[axis];
        let length = self.basis.domain().lengths()[axis];
        let mut buf = self.values.clone();
        let t = &self.basis.transforms;
        t.cos_analysis(&mut buf, axis);
        super::transform::for_each_lane(&mut buf, &grid.shape, axis, |lane| {
            for (k, v) in lane.iter_mut().enumerate() {
                let amp = if k == 0 { 1.0 } else { 2.0 } / n as f64;
                *v *= -amp * k as f64 * PI / length;
            }
        });
        t.sin_synthesis(&mut buf, axis);
        Self::from_raw(self.basis.clone(), buf)
    }
}

impl BasisSpec {
    /// Grid values of `Σ c_k e_k` into `out`.
    pub(crate) fn synthesize_into(&self, coeffs: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.grid().len(), 0.0);
        for (i, c) in coeffs.iter().enumerate() {
            out[self.dense_index(i)] = c * self.norm_factor(i);
        }
        for axis in 0..self.dim() {
            self.transforms.cos_synthesis(out, axis);
        }
    }

    /// Grid values of `Σ c_k ∂_axis e_k` into `out`.
    pub(crate) fn synthesize_derivative_into(&self, coeffs: &[f64], axis: usize, out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.grid().len(), 0.0);
        let w = PI / self.domain().lengths()[axis];
        for (i, c) in coeffs.iter().enumerate() {
            let k = self.mode(i)[axis] as f64;
            out[self.dense_index(i)] = -c * self.norm_factor(i) * k * w;
        }
        for a in 0..self.dim() {
            if a == axis {
                self.transforms.sin_synthesis(out, a);
            } else {
                self.transforms.cos_synthesis(out, a);
            }
        }
    }

    /// Quadrature coefficients `(values, e_k)` for every retained mode.
    pub(crate) fn analyze_into(&self, values: &[f64], scratch: &mut Vec<f64>, coeffs: &mut Vec<f64>) {
        scratch.clear();
        scratch.extend_from_slice(values);
        for axis in 0..self.dim() {
            self.transforms.cos_analysis(scratch, axis);
        }
        let w = self.grid().weight;
        coeffs.clear();
        coeffs.extend(
            (0..self.m()).map(|i| w * self.norm_factor(i) * scratch[self.dense_index(i)]),
        );
    }
}

/// Free-function form of [`SpectralField::evaluate`].
pub fn evaluate(field: &SpectralField) -> GridField {
    field.evaluate()
}

/// Free-function form of [`GridField::project`].
pub fn project(values: &GridField, m: usize) -> Result<SpectralField> {
    values.project(m)
}

/// Free-function form of [`SpectralField::gradient_evaluate`].
pub fn gradient_evaluate(field: &SpectralField) -> Vec<GridField> {
    field.gradient_evaluate()
}
