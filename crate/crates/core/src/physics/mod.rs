//! Kernel, potential and velocity data, and the chemical potential
//! `μ = aφ − J∗φ + F′(φ)` built from them.

mod kernel;
mod potential;
mod velocity;

pub use kernel::{
    convolve, kernel_table, ConvolutionBackend, ConvolutionWorkspace, KernelSpec, KernelTable,
    KernelTables,
};
pub use potential::{potential_eval, PotentialMode};
pub use velocity::{velocity_eval, VelocityField, VelocitySpec};

use crate::error::{Error, Result};
use crate::spectral::{GridField, SpectralField};

/// `c0` at or below this is treated as zero, so `a ≡ 1` is rejected despite rounding.
pub const C0_FLOOR: f64 = 1e-12;

/// `a(x) = ∫_D J(x−y) dy`.
pub fn coefficient_a(tables: &KernelTables) -> Result<GridField> {
    let ones = GridField::constant(tables.basis().clone(), 1.0);
    let a = tables.convolve(&ones, ConvolutionBackend::Direct)?;
    if a.min() < 0.0 {
        return Err(Error::AssumptionViolation {
            assumption: "iii",
            reason: format!("a(x) takes the negative value {}", a.min()),
        });
    }
    Ok(a)
}

/// `c0 = min a − 1`, which must be strictly positive.
pub fn validate_c0(a: &GridField) -> Result<f64> {
    let c0 = a.min() - 1.0;
    if !(c0 > C0_FLOOR) {
        return Err(Error::AssumptionViolation {
            assumption: "iv",
            reason: format!("c0 nonpositive: min a = {} gives c0 = {c0}", a.min()),
        });
    }
    Ok(c0)
}

/// `(μ on the grid, π_m μ)` for the state `phi`.
pub fn chemical_potential(
    phi: &SpectralField,
    tables: &KernelTables,
    a: &GridField,
    mode: PotentialMode,
    backend: ConvolutionBackend,
) -> Result<(GridField, SpectralField)> {
    let grid_phi = phi.evaluate();
    let conv = tables.convolve(&grid_phi, backend)?;
    let values: Vec<f64> = grid_phi
        .values()
        .iter()
        .zip(a.values())
        .zip(conv.values())
        .map(|((p, a), c)| a * p - c + mode.derivative(*p))
        .collect();
    let mu = GridField::new(phi.basis().clone(), values).map_err(|_| Error::BlowUp {
        step: 0,
        reason: "non-finite chemical potential".into(),
    })?;
    let mu_m = mu.project(phi.basis().m())?;
    Ok((mu, mu_m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_basis, Domain};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn gaussian() -> KernelSpec {
        KernelSpec::Gaussian {
            amplitude: 6.0,
            width: 0.2,
        }
    }

    #[test]
    fn constant_kernel_a_and_c0() {
        let b = build_basis(&Domain::unit(1).unwrap(), 6, 2.0).unwrap();
        for (level, ok) in [(2.5, true), (1.0, false), (0.0, false)] {
            let t = kernel_table(&KernelSpec::Constant { level }, &b).unwrap();
            let a = coefficient_a(&t).unwrap();
            for v in a.values() {
                assert!((v - level).abs() < 1e-13);
            }
            assert_eq!(validate_c0(&a).is_ok(), ok);
        }
        let t = kernel_table(&KernelSpec::Constant { level: 2.5 }, &b).unwrap();
        assert!((validate_c0(&coefficient_a(&t).unwrap()).unwrap() - 1.5).abs() < 1e-13);
    }

    #[test]
    fn negative_kernel_is_flagged() {
        let b = build_basis(&Domain::unit(1).unwrap(), 4, 2.0).unwrap();
        let t = kernel_table(&KernelSpec::Constant { level: -1.0 }, &b).unwrap();
        assert!(matches!(coefficient_a(&t), Err(Error::AssumptionViolation { .. })));
    }

    #[test]
    fn narrow_gaussian_a_matches_refined_quadrature() {
        let b = build_basis(&Domain::unit(1).unwrap(), 32, 2.0).unwrap();
        let spec = KernelSpec::Gaussian {
            amplitude: 1.0,
            width: 0.03,
        };
        let a = coefficient_a(&kernel_table(&spec, &b).unwrap()).unwrap();
        let mass = spec.l1_norm_whole_space(1).unwrap();
        // Exact a(x) = mass · [Φ((1−x)/w) − Φ(−x/w)], by a fine midpoint rule.
        let oracle = |x: f64| {
            let n = 200_000;
            let h = 1.0 / n as f64;
            (0..n)
                .map(|i| spec.eval(&[x - (i as f64 + 0.5) * h]).unwrap() * h)
                .sum::<f64>()
        };
        let grid = b.grid();
        for q in [0, grid.len() / 2, grid.len() - 1] {
            let x = grid.point(q)[0];
            assert!((a.values()[q] - oracle(x)).abs() < 0.02 * mass);
        }
        assert!((a.values()[grid.len() / 2] - mass).abs() < 1e-6);
        assert!(a.values()[0] < 0.75 * mass);
    }

    #[test]
    fn scale_consistency_of_c0() {
        let b = build_basis(&Domain::unit(2).unwrap(), 6, 2.0).unwrap();
        let a = coefficient_a(&kernel_table(&gaussian(), &b).unwrap()).unwrap();
        let scaled = KernelSpec::Gaussian {
            amplitude: 18.0,
            width: 0.2,
        };
        let a3 = coefficient_a(&kernel_table(&scaled, &b).unwrap()).unwrap();
        assert!((a3.min() - 1.0 - (3.0 * a.min() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn constant_state_potential() {
        let b = build_basis(&Domain::unit(1).unwrap(), 8, 2.0).unwrap();
        let t = kernel_table(&gaussian(), &b).unwrap();
        let a = coefficient_a(&t).unwrap();
        for s in [0.0, 0.7, -1.3] {
            let phi = SpectralField::constant(b.clone(), s);
            let (mu, _) =
                chemical_potential(&phi, &t, &a, PotentialMode::Quartic, ConvolutionBackend::Direct)
                    .unwrap();
            for v in mu.values() {
                assert!((v - (s * s * s - s)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn chemical_potential_matches_dense_quadrature() {
        let b = build_basis(&Domain::unit(1).unwrap(), 8, 2.0).unwrap();
        let spec = gaussian();
        let t = kernel_table(&spec, &b).unwrap();
        let a = coefficient_a(&t).unwrap();
        let coeffs: Vec<f64> = (0..8).map(|k| 0.4 * ((k * 5 % 7) as f64 - 3.0) / (k + 1) as f64).collect();
        let phi = SpectralField::new(b.clone(), coeffs).unwrap();
        let (_, mu_m) =
            chemical_potential(&phi, &t, &a, PotentialMode::Quartic, ConvolutionBackend::Direct).unwrap();

        // Oracle: the same discrete operator, with every integral as an
        // explicit sum at the basis grid nodes and pointwise mode evaluation.
        let grid = b.grid();
        let xs: Vec<f64> = (0..grid.len()).map(|q| grid.point(q)[0]).collect();
        let phi_at = |x: f64| (0..8).map(|k| phi.coeffs()[k] * b.eval_mode(k, &[x])).sum::<f64>();
        let phis: Vec<f64> = xs.iter().map(|&x| phi_at(x)).collect();
        let mu: Vec<f64> = xs
            .iter()
            .zip(&phis)
            .map(|(&x, &p)| {
                let (mut conv, mut av) = (0.0, 0.0);
                for (&y, &py) in xs.iter().zip(&phis) {
                    let j = spec.eval(&[x - y]).unwrap() * grid.weight;
                    conv += j * py;
                    av += j;
                }
                av * p - conv + p * p * p - p
            })
            .collect();
        for k in 0..8 {
            let c: f64 = xs.iter().zip(&mu).map(|(&x, &v)| grid.weight * v * b.eval_mode(k, &[x])).sum();
            assert!((mu_m.coeffs()[k] - c).abs() < 1e-8);
        }
    }

    fn random_field(b: &Arc<crate::spectral::BasisSpec>, seed: &[f64]) -> SpectralField {
        SpectralField::new(b.clone(), seed.to_vec()).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn convolution_is_symmetric_and_bounded(
            c1 in proptest::collection::vec(-1.0f64..1.0, 9),
            c2 in proptest::collection::vec(-1.0f64..1.0, 9),
        ) {
            let b = build_basis(&Domain::new(vec![1.0, 0.8]).unwrap(), 9, 2.0).unwrap();
            let t = kernel_table(&gaussian(), &b).unwrap();
            let f = random_field(&b, &c1).evaluate();
            let g = random_field(&b, &c2).evaluate();
            let jf = t.convolve(&f, ConvolutionBackend::FftPadded).unwrap();
            let jg = t.convolve(&g, ConvolutionBackend::Direct).unwrap();
            let lhs = jf.inner(&g);
            let rhs = f.inner(&jg);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
            prop_assert!(jf.inner(&jf).sqrt() <= t.l1_norm() * f.inner(&f).sqrt() * (1.0 + 1e-9));
        }

        #[test]
        fn gradient_of_convolution(c in proptest::collection::vec(-1.0f64..1.0, 8)) {
            // ∇(J∗φ)(x) = Σ_y ∇J(x−y) φ(y) w holds exactly for the sampled sum,
            // so compare the table gradient sum against an analytic x-derivative.
            let b = build_basis(&Domain::unit(1).unwrap(), 8, 2.0).unwrap();
            let spec = gaussian();
            let t = kernel_table(&spec, &b).unwrap();
            let f = random_field(&b, &c).evaluate();
            let grad_conv = t.convolve_gradient(&f, 0);
            let grid = b.grid();
            let h = 1e-5;
            for q in 0..grid.len() {
                let x = grid.point(q)[0];
                let conv_at = |x: f64| -> f64 {
                    (0..grid.len())
                        .map(|p| spec.eval(&[x - grid.point(p)[0]]).unwrap() * f.values()[p] * grid.weight)
                        .sum()
                };
                let fd = (conv_at(x + h) - conv_at(x - h)) / (2.0 * h);
                prop_assert!((fd - grad_conv.values()[q]).abs() < 1e-8 * (1.0 + fd.abs()));
            }
        }
    }
}
