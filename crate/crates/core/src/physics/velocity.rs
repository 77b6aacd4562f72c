use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::spectral::{build_basis, BasisSpec, GridField};

/// Relative tolerance for the divergence and no-slip sanity checks.
const ADMISSIBILITY_TOL: f64 = 1e-8;

/// Nodes per axis of the dense sampling used for `‖u‖_{L∞}`.
const SUP_SAMPLES: usize = 257;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocitySpec {
    #[default]
    Zero,
    /// `u = (∂₂ψ, −∂₁ψ)` with `ψ = amplitude · Π sin²(πx_i/L_i)`; two dimensions only.
    StreamVortex { amplitude: f64 },
}

impl VelocitySpec {
    pub fn is_zero(&self) -> bool {
        match self {
            VelocitySpec::Zero => true,
            VelocitySpec::StreamVortex { amplitude } => *amplitude == 0.0,
        }
    }

    /// Pointwise value.
    pub fn eval(&self, lengths: &[f64], x: &[f64]) -> Vec<f64> {
        match self {
            VelocitySpec::Zero => vec![0.0; x.len()],
            VelocitySpec::StreamVortex { amplitude } => {
                let (l1, l2) = (lengths[0], lengths[1]);
                let (s1, s2) = ((PI * x[0] / l1).sin(), (PI * x[1] / l2).sin());
                let u1 = amplitude * (PI / l2) * s1 * s1 * (2.0 * PI * x[1] / l2).sin();
                let u2 = -amplitude * (PI / l1) * (2.0 * PI * x[0] / l1).sin() * s2 * s2;
                vec![u1, u2]
            }
        }
    }
}

/// Sampled velocity plus its admissibility measurements.
#[derive(Debug, Clone)]
pub struct VelocityField {
    /// One grid field per axis; `None` for the zero field.
    components: Option<Vec<GridField>>,
    sup_norm: f64,
    max_divergence: f64,
    boundary_trace: f64,
}

impl VelocityField {
    pub fn components(&self) -> Option<&[GridField]> {
        self.components.as_deref()
    }

    /// `‖u‖_{L∞}`, sampled on a dense lattice including the grid nodes.
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    /// Largest `|div u|` from spectral differentiation of the sampled components.
    pub fn max_divergence(&self) -> f64 {
        self.max_divergence
    }

    /// Largest `|u|` on the boundary.
    pub fn boundary_trace(&self) -> f64 {
        self.boundary_trace
    }
}

/// Samples `spec` on the quadrature grid and checks `div u = 0` and `u|_Γ = 0`.
pub fn velocity_eval(spec: &VelocitySpec, basis: &Arc<BasisSpec>) -> Result<VelocityField> {
    if spec.is_zero() {
        return Ok(VelocityField {
            components: None,
            sup_norm: 0.0,
            max_divergence: 0.0,
            boundary_trace: 0.0,
        });
    }
    let VelocitySpec::StreamVortex { amplitude } = spec else {
        unreachable!()
    };
    if !amplitude.is_finite() {
        return Err(invalid("stream vortex amplitude must be finite"));
    }
    if basis.dim() != 2 {
        return Err(invalid("stream_vortex is defined for two dimensions only"));
    }
    let lengths = basis.domain().lengths().to_vec();
    let sample = |b: &Arc<BasisSpec>| -> Vec<GridField> {
        (0..2)
            .map(|axis| GridField::from_fn(b.clone(), |x| spec.eval(&lengths, x)[axis]))
            .collect()
    };
    let components = sample(basis);

    // The components carry frequency 2 per axis, so measure the divergence on
    // a grid with at least eight nodes per axis even when the basis is tiny.
    let probe = if basis.grid().shape.iter().all(|&n| n >= 8) {
        basis.clone()
    } else {
        build_basis(basis.domain(), 1, 8.0)?
    };
    let probe_u = if Arc::ptr_eq(&probe, basis) {
        components.clone()
    } else {
        sample(&probe)
    };
    let div: Vec<f64> = {
        let d1 = probe_u[0].cosine_derivative(0);
        let d2 = probe_u[1].cosine_derivative(1);
        d1.values().iter().zip(d2.values()).map(|(a, b)| a + b).collect()
    };
    let max_divergence = div.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let norm = |x: &[f64]| spec.eval(&lengths, x).iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut sup_norm = 0.0f64;
    for q in 0..basis.grid().len() {
        sup_norm = sup_norm.max(norm(&basis.grid().point(q)));
    }
    let step = |axis: usize| lengths[axis] / (SUP_SAMPLES - 1) as f64;
    let mut boundary_trace = 0.0f64;
    for i in 0..SUP_SAMPLES {
        for j in 0..SUP_SAMPLES {
            let x = [i as f64 * step(0), j as f64 * step(1)];
            let v = norm(&x);
            sup_norm = sup_norm.max(v);
            if i == 0 || j == 0 || i == SUP_SAMPLES - 1 || j == SUP_SAMPLES - 1 {
                boundary_trace = boundary_trace.max(v);
            }
        }
    }

    let bound = ADMISSIBILITY_TOL * sup_norm;
    if max_divergence > bound {
        return Err(Error::AssumptionViolation {
            assumption: "i",
            reason: format!("max |div u| = {max_divergence:e} exceeds {bound:e}"),
        });
    }
    if boundary_trace > bound {
        return Err(Error::AssumptionViolation {
            assumption: "i",
            reason: format!("boundary trace {boundary_trace:e} exceeds {bound:e}"),
        });
    }
    Ok(VelocityField {
        components: Some(components),
        sup_norm,
        max_divergence,
        boundary_trace,
    })
}
