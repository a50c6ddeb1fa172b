use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::qsim::{AngleSource, CircuitTemplate, Measurement, ZObservable};

fn check_rotation_slots(circuit: &CircuitTemplate, source_is_param: bool) -> Result<()> {
    for gate in circuit.gates() {
        let slotted = match gate.angle_source() {
            Some(AngleSource::Param(_)) => source_is_param,
            Some(AngleSource::Input(_)) => !source_is_param,
            _ => false,
        };
        if slotted && !gate.is_pauli_rotation() {
            return Err(Error::UnsupportedTemplate(
                "parameter-shift gradients require every slotted gate to be an RX/RY/RZ rotation"
                    .into(),
            ));
        }
    }
    Ok(())
}

fn shift_jacobian(
    circuit: &CircuitTemplate,
    params: &[f64],
    inputs: &[f64],
    observables: &[ZObservable],
    shift_params: bool,
    measurement: Measurement,
) -> Result<Vec<Vec<f64>>> {
    check_rotation_slots(circuit, shift_params)?;
    let n_cols = if shift_params {
        params.len()
    } else {
        inputs.len()
    };
    let mut jacobian = vec![vec![0.0; n_cols]; observables.len()];
    let mut shifted: Vec<f64> = if shift_params {
        params.to_vec()
    } else {
        inputs.to_vec()
    };
    for k in 0..n_cols {
        let original = shifted[k];

        shifted[k] = original + FRAC_PI_2;
        let plus = if shift_params {
            circuit.run(&shifted, inputs)?
        } else {
            circuit.run(params, &shifted)?
        };
        let plus = measurement.features(&plus, observables)?;

        shifted[k] = original - FRAC_PI_2;
        let minus = if shift_params {
            circuit.run(&shifted, inputs)?
        } else {
            circuit.run(params, &shifted)?
        };
        let minus = measurement.features(&minus, observables)?;

        shifted[k] = original;
        for (j, _) in observables.iter().enumerate() {
            jacobian[j][k] = 0.5 * (plus[j] - minus[j]);
        }
    }
    Ok(jacobian)
}

/// Parameter-shift Jacobian under an explicit measurement mode; shifts the
/// quantum parameters when `shift_params`, the encoder inputs otherwise.
pub fn shift_jacobian_with(
    circuit: &CircuitTemplate,
    params: &[f64],
    inputs: &[f64],
    observables: &[ZObservable],
    shift_params: bool,
    measurement: Measurement,
) -> Result<Vec<Vec<f64>>> {
    shift_jacobian(circuit, params, inputs, observables, shift_params, measurement)
}

/// Exact Jacobian of `<M_j>` with respect to the trainable quantum
/// parameters via the parameter-shift rule:
/// `d<M>/d(theta_k) = (<M>(theta_k + pi/2) - <M>(theta_k - pi/2)) / 2`.
///
/// Every trainable gate must be a single-parameter Pauli rotation.
pub fn parameter_shift_jacobian(
    circuit: &CircuitTemplate,
    params: &[f64],
    inputs: &[f64],
    observables: &[ZObservable],
) -> Result<Vec<Vec<f64>>> {
    shift_jacobian(circuit, params, inputs, observables, true, Measurement::Exact)
}

/// Same rule applied to the encoder input angles. Valid because encoder
/// slots sit on angle-encoding rotations.
pub fn input_shift_jacobian(
    circuit: &CircuitTemplate,
    params: &[f64],
    inputs: &[f64],
    observables: &[ZObservable],
) -> Result<Vec<Vec<f64>>> {
    shift_jacobian(circuit, params, inputs, observables, false, Measurement::Exact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::Gate;

    fn single_rx() -> CircuitTemplate {
        CircuitTemplate::new(
            1,
            vec![Gate::Rx {
                wire: 0,
                angle: AngleSource::Param(0),
            }],
            0,
            0,
        )
        .unwrap()
    }

    fn finite_difference(circuit: &CircuitTemplate, params: &[f64], k: usize, h: f64) -> f64 {
        let obs = ZObservable::single(0);
        let mut p = params.to_vec();
        p[k] = params[k] + h;
        let plus = circuit.run(&p, &[]).unwrap().expectation_z(&obs).unwrap();
        p[k] = params[k] - h;
        let minus = circuit.run(&p, &[]).unwrap().expectation_z(&obs).unwrap();
        (plus - minus) / (2.0 * h)
    }

    #[test]
    fn gradient_zero_at_stationary_point() {
        let circuit = single_rx();
        let jac =
            parameter_shift_jacobian(&circuit, &[0.0], &[], &[ZObservable::single(0)]).unwrap();
        assert!(jac[0][0].abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        // <Z> = cos(theta) in the half-angle convention, gradient -sin(theta)
        let circuit = single_rx();
        let theta = std::f64::consts::FRAC_PI_2;
        let jac =
            parameter_shift_jacobian(&circuit, &[theta], &[], &[ZObservable::single(0)]).unwrap();
        assert!((jac[0][0] + theta.sin()).abs() < 1e-12);
        let fd = finite_difference(&circuit, &[theta], 0, 1e-5);
        assert!((jac[0][0] - fd).abs() < 1e-5);
    }

    #[test]
    fn disjoint_wires_give_block_diagonal_jacobian() {
        let circuit = CircuitTemplate::new(
            2,
            vec![
                Gate::Rx {
                    wire: 0,
                    angle: AngleSource::Param(0),
                },
                Gate::Ry {
                    wire: 1,
                    angle: AngleSource::Param(1),
                },
            ],
            0,
            0,
        )
        .unwrap();
        let obs = [ZObservable::single(0), ZObservable::single(1)];
        let jac = parameter_shift_jacobian(&circuit, &[0.7, 1.3], &[], &obs).unwrap();
        assert!(jac[0][1].abs() < 1e-10);
        assert!(jac[1][0].abs() < 1e-10);
        assert!(jac[0][0].abs() > 1e-3);
        assert!(jac[1][1].abs() > 1e-3);
    }

    #[test]
    fn trainable_phase_gate_rejected() {
        let circuit = CircuitTemplate::new(
            1,
            vec![Gate::Phase {
                wire: 0,
                angle: AngleSource::Param(0),
            }],
            0,
            0,
        )
        .unwrap();
        let err = parameter_shift_jacobian(&circuit, &[0.5], &[], &[ZObservable::single(0)]);
        assert!(matches!(err, Err(Error::UnsupportedTemplate(_))));
    }
}
