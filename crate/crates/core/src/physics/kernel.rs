//! Interaction kernel `J`, its sampled tables, and restricted convolution
//! `(J∗φ)(x) = ∫_D J(x−y) φ(y) dy` by the midpoint rule.
//!
//! Tables hold `J(j·h)` for offsets `j_i ∈ [−N_i, N_i]`, where `N_i` is the
//! grid size along axis `i`, so every node-to-node difference is covered.
//! The `fft_padded` backend zero-pads to `2N_i` per axis; no difference
//! index wraps, so it reproduces the direct sum up to round-off.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::spectral::{BasisSpec, GridField};

/// Grids up to this many nodes use the direct sum under [`ConvolutionBackend::Auto`].
const AUTO_DIRECT_MAX_NODES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `J(x) = amplitude · exp(−|x|² / (2 width²))`.
    Gaussian { amplitude: f64, width: f64 },
    /// `J ≡ level`.
    Constant { level: f64 },
    /// Samples on the offset lattice of a specific basis grid.
    Table(KernelTable),
}

/// Kernel samples at offsets `j·spacing`, `j_i ∈ [−(shape_i−1)/2, (shape_i−1)/2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelTable {
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    /// Row-major, first offset is the most negative one.
    pub values: Vec<f64>,
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Gaussian { amplitude, width } => {
                if !(amplitude.is_finite() && width.is_finite() && *width > 0.0) {
                    return Err(invalid("gaussian kernel needs finite amplitude and positive width"));
                }
            }
            KernelSpec::Constant { level } => {
                if !level.is_finite() {
                    return Err(invalid("constant kernel level must be finite"));
                }
            }
            KernelSpec::Table(t) => {
                let n: usize = t.shape.iter().product();
                if t.shape.is_empty()
                    || t.shape.iter().any(|s| s % 2 == 0)
                    || t.values.len() != n
                    || t.spacing.len() != t.shape.len()
                {
                    return Err(Error::ShapeMismatch(
                        "kernel table needs odd extents and one value per offset".into(),
                    ));
                }
                if t.values.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("kernel table values must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Pointwise value for the analytic families.
    pub fn eval(&self, x: &[f64]) -> Option<f64> {
        match self {
            KernelSpec::Gaussian { amplitude, width } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                Some(amplitude * (-r2 / (2.0 * width * width)).exp())
            }
            KernelSpec::Constant { level } => Some(*level),
            KernelSpec::Table(_) => None,
        }
    }

    /// Pointwise gradient for the analytic families.
    pub fn eval_grad(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self {
            KernelSpec::Gaussian { width, .. } => {
                let j = self.eval(x)?;
                Some(x.iter().map(|v| -v / (width * width) * j).collect())
            }
            KernelSpec::Constant { .. } => Some(vec![0.0; x.len()]),
            KernelSpec::Table(_) => None,
        }
    }

    /// `‖J‖_{L¹(ℝ^d)}` in closed form, where one exists.
    pub fn l1_norm_whole_space(&self, dim: usize) -> Option<f64> {
        match self {
            KernelSpec::Gaussian { amplitude, width } => {
                Some(amplitude.abs() * (2.0 * PI).powf(dim as f64 / 2.0) * width.powi(dim as i32))
            }
            _ => None,
        }
    }
}

/// Selects how `J∗φ` is evaluated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvolutionBackend {
    #[default]
    Auto,
    Direct,
    FftPadded,
}

/// Sampled `J`, `∇J` and the padded spectrum used by the FFT backend.
pub struct KernelTables {
    basis: Arc<BasisSpec>,
    half: Vec<usize>,
    table_shape: Vec<usize>,
    values: Vec<f64>,
    grad: Vec<Vec<f64>>,
    l1_norm: f64,
    grad_l1_norm: f64,
    padded: PaddedSpectrum,
}

impl std::fmt::Debug for KernelTables {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelTables")
            .field("table_shape", &self.table_shape)
            .field("l1_norm", &self.l1_norm)
            .field("grad_l1_norm", &self.grad_l1_norm)
            .finish()
    }
}

struct PaddedSpectrum {
    shape: Vec<usize>,
    spectrum: Vec<Complex<f64>>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

/// Scratch space for one caller of [`KernelTables::convolve_into`].
#[derive(Default)]
pub struct ConvolutionWorkspace {
    buf: Vec<Complex<f64>>,
    lane: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

/// Samples `spec` on the offset lattice of `basis` and tabulates `‖J‖_{L¹}`,
/// `‖∇J‖_{L¹}` over the difference box `Π [−L_i, L_i]`.
pub fn kernel_table(spec: &KernelSpec, basis: &Arc<BasisSpec>) -> Result<KernelTables> {
    spec.validate()?;
    let grid = basis.grid();
    let dim = grid.dim();
    let half: Vec<usize> = grid.shape.clone();
    let table_shape: Vec<usize> = half.iter().map(|n| 2 * n + 1).collect();
    let total: usize = table_shape.iter().product();

    let offset = |flat: usize| -> Vec<f64> {
        let mut rest = flat;
        let mut x = vec![0.0; dim];
        for axis in (0..dim).rev() {
            let j = rest % table_shape[axis];
            rest /= table_shape[axis];
            x[axis] = (j as f64 - half[axis] as f64) * grid.spacing[axis];
        }
        x
    };

    let (values, grad) = match spec {
        KernelSpec::Table(t) => {
            if t.shape != table_shape {
                return Err(Error::ShapeMismatch(format!(
                    "kernel table shape {:?} does not match the required {:?}",
                    t.shape, table_shape
                )));
            }
            for (s, h) in t.spacing.iter().zip(&grid.spacing) {
                if (s - h).abs() > 1e-9 * h {
                    return Err(Error::ShapeMismatch(format!(
                        "kernel table spacing {s} does not match grid spacing {h}"
                    )));
                }
            }
            // Evenness by construction: average each sample with its mirror.
            let values: Vec<f64> = (0..total)
                .map(|i| 0.5 * (t.values[i] + t.values[total - 1 - i]))
                .collect();
            let grad = finite_difference_gradient(&values, &table_shape, &grid.spacing);
            (values, grad)
        }
        _ => {
            let mut values = Vec::with_capacity(total);
            let mut grad = vec![Vec::with_capacity(total); dim];
            for i in 0..total {
                let x = offset(i);
                values.push(spec.eval(&x).expect("analytic kernel"));
                for (axis, g) in spec.eval_grad(&x).expect("analytic kernel").into_iter().enumerate() {
                    grad[axis].push(g);
                }
            }
            (values, grad)
        }
    };
    if values.iter().chain(grad.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(invalid("kernel samples are not finite"));
    }

    // Trapezoid weights over [−L_i, L_i]: half weight on the outermost offsets.
    let weight_of = |flat: usize| -> f64 {
        let mut rest = flat;
        let mut w = 1.0;
        for axis in (0..dim).rev() {
            let j = rest % table_shape[axis];
            rest /= table_shape[axis];
            let edge = j == 0 || j == table_shape[axis] - 1;
            w *= grid.spacing[axis] * if edge { 0.5 } else { 1.0 };
        }
        w
    };
    let mut l1_norm = 0.0;
    let mut grad_l1_norm = 0.0;
    for i in 0..total {
        let w = weight_of(i);
        l1_norm += w * values[i].abs();
        grad_l1_norm += w * grad.iter().map(|g| g[i] * g[i]).sum::<f64>().sqrt();
    }

    let padded = PaddedSpectrum::new(&values, &table_shape, &half);
    Ok(KernelTables {
        basis: basis.clone(),
        half,
        table_shape,
        values,
        grad,
        l1_norm,
        grad_l1_norm,
        padded,
    })
}

fn finite_difference_gradient(values: &[f64], shape: &[usize], spacing: &[f64]) -> Vec<Vec<f64>> {
    let dim = shape.len();
    (0..dim)
        .map(|axis| {
            let stride: usize = shape[axis + 1..].iter().product();
            let n = shape[axis];
            let h = spacing[axis];
            (0..values.len())
                .map(|i| {
                    let j = (i / stride) % n;
                    if n == 1 {
                        0.0
                    } else if j == 0 {
                        (values[i + stride] - values[i]) / h
                    } else if j == n - 1 {
                        (values[i] - values[i - stride]) / h
                    } else {
                        (values[i + stride] - values[i - stride]) / (2.0 * h)
                    }
                })
                .collect()
        })
        .collect()
}

impl PaddedSpectrum {
    fn new(values: &[f64], table_shape: &[usize], half: &[usize]) -> Self {
        let dim = half.len();
        let shape: Vec<usize> = half.iter().map(|n| 2 * n).collect();
        let total: usize = shape.iter().product();
        let mut spectrum = vec![Complex::new(0.0, 0.0); total];
        // Place J(j) at j mod 2N for |j| ≤ N−1.
        let table_total: usize = table_shape.iter().product();
        'entries: for t in 0..table_total {
            let mut rest = t;
            let mut flat = 0;
            let mut idx = vec![0usize; dim];
            for axis in (0..dim).rev() {
                let j = (rest % table_shape[axis]) as isize - half[axis] as isize;
                rest /= table_shape[axis];
                if j.unsigned_abs() >= half[axis] {
                    continue 'entries;
                }
                idx[axis] = j.rem_euclid(shape[axis] as isize) as usize;
            }
            for axis in 0..dim {
                flat = flat * shape[axis] + idx[axis];
            }
            spectrum[flat] = Complex::new(values[t], 0.0);
        }
        let mut planner = FftPlanner::new();
        let forward: Vec<Arc<dyn Fft<f64>>> = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse: Vec<Arc<dyn Fft<f64>>> = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        let mut ws = ConvolutionWorkspace::default();
        fft_nd(&mut spectrum, &shape, &forward, &mut ws.lane, &mut ws.scratch);
        Self {
            shape,
            spectrum,
            forward,
            inverse,
        }
    }
}

fn fft_nd(
    buf: &mut [Complex<f64>],
    shape: &[usize],
    plans: &[Arc<dyn Fft<f64>>],
    lane: &mut Vec<Complex<f64>>,
    scratch: &mut Vec<Complex<f64>>,
) {
    for (axis, plan) in plans.iter().enumerate() {
        let len = shape[axis];
        let stride: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        scratch.resize(plan.get_inplace_scratch_len(), Complex::new(0.0, 0.0));
        if stride == 1 {
            plan.process_with_scratch(buf, scratch);
            continue;
        }
        lane.resize(len, Complex::new(0.0, 0.0));
        for o in 0..outer {
            for i in 0..stride {
                let base = o * len * stride + i;
                for j in 0..len {
                    lane[j] = buf[base + j * stride];
                }
                plan.process_with_scratch(lane, scratch);
                for j in 0..len {
                    buf[base + j * stride] = lane[j];
                }
            }
        }
    }
}

impl KernelTables {
    pub fn basis(&self) -> &Arc<BasisSpec> {
        &self.basis
    }

    /// Shape of the offset table, `2N_i + 1` per axis.
    pub fn table_shape(&self) -> &[usize] {
        &self.table_shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn gradient(&self, axis: usize) -> &[f64] {
        &self.grad[axis]
    }

    /// Quadrature estimate of `‖J‖_{L¹}` over the difference box.
    pub fn l1_norm(&self) -> f64 {
        self.l1_norm
    }

    /// Quadrature estimate of `‖∇J‖_{L¹}` over the difference box.
    pub fn grad_l1_norm(&self) -> f64 {
        self.grad_l1_norm
    }

    /// Sample at integer offset `j` (each `|j_i| ≤ N_i`).
    pub fn at(&self, j: &[isize]) -> f64 {
        self.values[self.table_flat(j)]
    }

    fn table_flat(&self, j: &[isize]) -> usize {
        j.iter()
            .enumerate()
            .fold(0, |acc, (axis, &ji)| acc * self.table_shape[axis] + (ji + self.half[axis] as isize) as usize)
    }

    pub fn resolve(&self, backend: ConvolutionBackend) -> ConvolutionBackend {
        match backend {
            ConvolutionBackend::Auto if self.basis.grid().len() <= AUTO_DIRECT_MAX_NODES => {
                ConvolutionBackend::Direct
            }
            ConvolutionBackend::Auto => ConvolutionBackend::FftPadded,
            other => other,
        }
    }

    /// `J∗φ` on the grid.
    pub fn convolve(&self, phi: &GridField, backend: ConvolutionBackend) -> Result<GridField> {
        if phi.values().len() != self.basis.grid().len() {
            return Err(Error::ShapeMismatch(
                "field grid does not match the kernel tables".into(),
            ));
        }
        let mut out = Vec::new();
        let mut ws = ConvolutionWorkspace::default();
        self.convolve_into(phi.values(), &mut out, backend, &mut ws);
        Ok(GridField::from_raw(phi.basis().clone(), out))
    }

    /// `(∂_axis J)∗φ` on the grid by the direct sum.
    pub fn convolve_gradient(&self, phi: &GridField, axis: usize) -> GridField {
        let mut out = Vec::new();
        self.direct_sum(&self.grad[axis], phi.values(), &mut out);
        GridField::from_raw(phi.basis().clone(), out)
    }

    pub(crate) fn convolve_into(
        &self,
        phi: &[f64],
        out: &mut Vec<f64>,
        backend: ConvolutionBackend,
        ws: &mut ConvolutionWorkspace,
    ) {
        match self.resolve(backend) {
            ConvolutionBackend::FftPadded => self.fft_sum(phi, out, ws),
            _ => self.direct_sum(&self.values, phi, out),
        }
    }

    fn direct_sum(&self, table: &[f64], phi: &[f64], out: &mut Vec<f64>) {
        let grid = self.basis.grid();
        let w = grid.weight;
        let n = grid.len();
        out.clear();
        out.resize(n, 0.0);
        if grid.dim() == 1 {
            let h = self.half[0];
            for (q, o) in out.iter_mut().enumerate() {
                let row = &table[q + h + 1 - n..q + h + 1];
                // row[p'] = J(q − p) with p = n − 1 − p'
                let s: f64 = row.iter().rev().zip(phi).map(|(j, f)| j * f).sum();
                *o = w * s;
            }
            return;
        }
        let dim = grid.dim();
        let mut qi = vec![0usize; dim];
        let mut pi = vec![0usize; dim];
        for (q, o) in out.iter_mut().enumerate() {
            grid.unravel(q, &mut qi);
            let mut s = 0.0;
            for (p, f) in phi.iter().enumerate() {
                grid.unravel(p, &mut pi);
                let mut t = 0;
                for axis in 0..dim {
                    t = t * self.table_shape[axis] + (qi[axis] + self.half[axis] - pi[axis]);
                }
                s += table[t] * f;
            }
            *o = w * s;
        }
    }

    fn fft_sum(&self, phi: &[f64], out: &mut Vec<f64>, ws: &mut ConvolutionWorkspace) {
        let grid = self.basis.grid();
        let pad = &self.padded;
        let total: usize = pad.shape.iter().product();
        let dim = grid.dim();
        ws.buf.clear();
        ws.buf.resize(total, Complex::new(0.0, 0.0));
        let mut qi = vec![0usize; dim];
        let flat_padded = |qi: &[usize]| -> usize {
            qi.iter().enumerate().fold(0, |acc, (axis, &j)| acc * pad.shape[axis] + j)
        };
        for (q, f) in phi.iter().enumerate() {
            grid.unravel(q, &mut qi);
            ws.buf[flat_padded(&qi)] = Complex::new(*f, 0.0);
        }
        fft_nd(&mut ws.buf, &pad.shape, &pad.forward, &mut ws.lane, &mut ws.scratch);
        for (b, k) in ws.buf.iter_mut().zip(&pad.spectrum) {
            *b *= k;
        }
        fft_nd(&mut ws.buf, &pad.shape, &pad.inverse, &mut ws.lane, &mut ws.scratch);
        let scale = grid.weight / total as f64;
        out.clear();
        out.resize(grid.len(), 0.0);
        for (q, o) in out.iter_mut().enumerate() {
            grid.unravel(q, &mut qi);
            *o = scale * ws.buf[flat_padded(&qi)].re;
        }
    }
}

/// Free-function form of [`KernelTables::convolve`].
pub fn convolve(tables: &KernelTables, phi: &GridField, backend: ConvolutionBackend) -> Result<GridField> {
    tables.convolve(phi, backend)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_basis, Domain, SpectralField};

    fn basis(lengths: Vec<f64>, m: usize) -> Arc<BasisSpec> {
        build_basis(&Domain::new(lengths).unwrap(), m, 2.0).unwrap()
    }

    #[test]
    fn constant_kernel_norms() {
        for dim in 1..=2 {
            let b = basis(vec![1.0; dim], 4);
            let t = kernel_table(&KernelSpec::Constant { level: 3.0 }, &b).unwrap();
            assert!((t.l1_norm() - 3.0 * 2f64.powi(dim as i32)).abs() < 1e-12);
            assert_eq!(t.grad_l1_norm(), 0.0);
        }
    }

    #[test]
    fn narrow_gaussian_mass() {
        let b = basis(vec![1.0], 32);
        let spec = KernelSpec::Gaussian {
            amplitude: 2.0,
            width: 0.05,
        };
        let t = kernel_table(&spec, &b).unwrap();
        let exact = spec.l1_norm_whole_space(1).unwrap();
        assert!((t.l1_norm() - exact).abs() < 0.01 * exact);
        // ∫|J'| = 2 J(0) for a unimodal kernel.
        assert!((t.grad_l1_norm() - 4.0).abs() < 0.02 * 4.0);
    }

    #[test]
    fn tables_are_even() {
        let b = basis(vec![1.0, 0.7], 6);
        let t = kernel_table(
            &KernelSpec::Gaussian {
                amplitude: 1.0,
                width: 0.3,
            },
            &b,
        )
        .unwrap();
        let v = t.values();
        let n = v.len();
        for i in 0..n {
            assert_eq!(v[i], v[n - 1 - i]);
        }
    }

    #[test]
    fn asymmetric_table_is_symmetrised() {
        let b = basis(vec![1.0], 2);
        let shape = vec![2 * b.grid().shape[0] + 1];
        let mut values = vec![0.0; shape[0]];
        values[0] = 2.0;
        let t = kernel_table(
            &KernelSpec::Table(KernelTable {
                shape,
                spacing: b.grid().spacing.clone(),
                values,
            }),
            &b,
        )
        .unwrap();
        assert_eq!(t.values()[0], 1.0);
        assert_eq!(*t.values().last().unwrap(), 1.0);
    }

    #[test]
    fn wrong_table_shape_rejected() {
        let b = basis(vec![1.0], 4);
        let bad = KernelSpec::Table(KernelTable {
            shape: vec![5],
            spacing: b.grid().spacing.clone(),
            values: vec![0.0; 5],
        });
        assert!(matches!(kernel_table(&bad, &b), Err(Error::ShapeMismatch(_))));
        let even = KernelSpec::Table(KernelTable {
            shape: vec![4],
            spacing: vec![0.1],
            values: vec![0.0; 4],
        });
        assert!(kernel_table(&even, &b).is_err());
    }

    #[test]
    fn constant_kernel_convolution_is_mass() {
        let b = basis(vec![1.0, 1.0], 6);
        let t = kernel_table(&KernelSpec::Constant { level: 1.5 }, &b).unwrap();
        let phi = SpectralField::new(b.clone(), (0..6).map(|i| 0.2 * i as f64 + 0.1).collect())
            .unwrap()
            .evaluate();
        let mass = phi.integrate();
        for backend in [ConvolutionBackend::Direct, ConvolutionBackend::FftPadded] {
            let c = t.convolve(&phi, backend).unwrap();
            for v in c.values() {
                assert!((v - 1.5 * mass).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn delta_kernel_is_identity() {
        for lengths in [vec![1.0], vec![1.0, 2.0]] {
            let b = basis(lengths, 5);
            let shape: Vec<usize> = b.grid().shape.iter().map(|n| 2 * n + 1).collect();
            let total: usize = shape.iter().product();
            let mut values = vec![0.0; total];
            values[total / 2] = 1.0 / b.grid().weight;
            let t = kernel_table(
                &KernelSpec::Table(KernelTable {
                    shape,
                    spacing: b.grid().spacing.clone(),
                    values,
                }),
                &b,
            )
            .unwrap();
            let phi = GridField::from_fn(b.clone(), |x| x.iter().map(|v| v.sin()).sum());
            for backend in [ConvolutionBackend::Direct, ConvolutionBackend::FftPadded] {
                let c = t.convolve(&phi, backend).unwrap();
                for (a, e) in c.values().iter().zip(phi.values()) {
                    assert!((a - e).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn backends_agree_in_3d() {
        let b = basis(vec![1.0, 0.8, 1.2], 10);
        let t = kernel_table(
            &KernelSpec::Gaussian {
                amplitude: 1.0,
                width: 0.25,
            },
            &b,
        )
        .unwrap();
        let phi = GridField::from_fn(b.clone(), |x| (3.0 * x[0]).cos() + x[1] * x[2]);
        let d = t.convolve(&phi, ConvolutionBackend::Direct).unwrap();
        let f = t.convolve(&phi, ConvolutionBackend::FftPadded).unwrap();
        let scale = d.max_abs();
        for (a, e) in d.values().iter().zip(f.values()) {
            assert!((a - e).abs() <= 1e-9 * scale);
        }
    }
}
