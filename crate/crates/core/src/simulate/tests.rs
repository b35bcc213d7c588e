use nalgebra::{DMatrix, SymmetricEigen};

use super::*;
use crate::certificates::{assemble_centralized, CertOptions, GainObjective, GainTarget};
use crate::model::{Dfsm, ExoDims, ModeDynamics};
use std::collections::BTreeMap;

fn scalar_model(a: f64, b: f64, c: f64) -> SubsystemModel {
    SubsystemModel::lti(
        0,
        DMatrix::from_element(1, 1, a),
        DMatrix::from_element(1, 1, b),
        DMatrix::from_element(1, 1, c),
    )
    .unwrap()
}

/// w = d, z = y.
fn passthrough(n: usize) -> Interconnection {
    let mut m_c = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        m_c[(k, n + k)] = 1.0;
        m_c[(n + k, k)] = 1.0;
    }
    let dims = ExoDims {
        n_d: n,
        n_z: n,
        ..Default::default()
    };
    Interconnection::new(dims, m_c, DMatrix::zeros(1, 1), vec![]).unwrap()
}

fn expm_sym(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let e = SymmetricEigen::new(a.clone());
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|l| (l * t).exp()));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

#[test]
fn stable_mode_matches_matrix_exponential() {
    let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, 0.3, -2.0]);
    let m = SubsystemModel::lti(0, a.clone(), DMatrix::zeros(2, 1), DMatrix::zeros(1, 2)).unwrap();
    let (models, ic) = isolated(&m).unwrap();
    let x0 = DVector::from_vec(vec![1.0, -0.5]);
    let cfg = SimConfig::new(1e-3, 3.0, 1000);
    let traj = simulate(&models, &ic, &Inputs::zero(&ic), std::slice::from_ref(&x0), &[0], &cfg).unwrap();
    let want = expm_sym(&a, 3.0) * &x0;
    assert!((&traj.last().x[0] - &want).amax() < 1e-10);
    let sigma = -SymmetricEigen::new(a).eigenvalues.max();
    assert!(traj.last().x[0].norm() <= x0.norm() * (-sigma * 3.0).exp() * (1.0 + 1e-9));
}

#[test]
fn three_state_machine_cycles_with_period_three() {
    let mode = ModeDynamics::new(-DMatrix::identity(1, 1), DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)).unwrap();
    let modes: BTreeMap<i64, ModeDynamics> = [0, 1, 2].into_iter().map(|p| (p, mode.clone())).collect();
    let m = SubsystemModel::new(0, modes, Dfsm::three_state_example()).unwrap();
    let (models, ic) = isolated(&m).unwrap();
    let inputs = Inputs::new(|_| DVector::zeros(0), |_| vec![1]);
    let cfg = SimConfig::new(0.01, 0.09, 1);
    let traj = simulate(&models, &ic, &inputs, &[DVector::zeros(1)], &[1], &cfg).unwrap();
    let q: Vec<i64> = traj.samples.iter().map(|s| s.q[0]).collect();
    assert_eq!(q, vec![1, 2, 3, 1, 2, 3, 1, 2, 3, 1]);
    assert_eq!(traj.jumps.len(), 9);
    // Mealy output of the state being left
    assert_eq!(traj.jumps[0].before.p[0], 1);
    assert_eq!(traj.jumps[1].before.p[0], 0);
}

#[test]
fn halving_the_step_shows_fourth_order() {
    let a = DMatrix::from_row_slice(2, 2, &[-0.5, 2.0, -2.0, -0.5]);
    let m = SubsystemModel::lti(0, a, DMatrix::from_row_slice(2, 1, &[1.0, 0.0]), DMatrix::from_row_slice(1, 2, &[0.0, 1.0]))
        .unwrap();
    let models = vec![m];
    let ic = passthrough(1);
    let inputs = Inputs::new(|t| DVector::from_element(1, (3.0 * t).sin()), |_| vec![]);
    let end = |dt: f64| {
        let cfg = SimConfig::new(dt, 2.0, 1_000_000);
        simulate(&models, &ic, &inputs, &[DVector::from_vec(vec![1.0, 0.0])], &[0], &cfg)
            .unwrap()
            .last()
            .x[0]
            .clone()
    };
    let (x1, x2, x4) = (end(0.1), end(0.05), end(0.025));
    let ratio = (&x1 - &x2).norm() / (&x2 - &x4).norm();
    assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn interconnection_holds_at_every_sample() {
    let models = vec![scalar_model(-1.0, 1.0, 2.0).with_id(0), scalar_model(-3.0, 1.0, 1.0).with_id(1)];
    // w1 = d, w2 = y1, z = y2
    let m_c = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    let ic = Interconnection::new(
        ExoDims {
            n_d: 1,
            n_z: 1,
            ..Default::default()
        },
        m_c.clone(),
        DMatrix::zeros(2, 2),
        vec![],
    )
    .unwrap();
    let inputs = Inputs::new(|t| DVector::from_element(1, t.cos()), |_| vec![]);
    let cfg = SimConfig::new(1e-2, 2.0, 10);
    let x0 = vec![DVector::from_element(1, 0.5), DVector::from_element(1, -0.2)];
    let traj = simulate(&models, &ic, &inputs, &x0, &[0, 0], &cfg).unwrap();
    for s in &traj.samples {
        let y = DVector::from_vec(vec![2.0 * s.x[0][0], s.x[1][0]]);
        assert!((&s.y - &y).amax() <= 1e-12);
        let yd = DVector::from_vec(vec![s.y[0], s.y[1], s.d[0]]);
        let wz = &m_c * yd;
        assert!((wz[0] - s.w[0]).abs() <= 1e-9 && (wz[1] - s.w[1]).abs() <= 1e-9 && (wz[2] - s.z[0]).abs() <= 1e-9);
    }
}

fn chain_certificate() -> (Vec<SubsystemModel>, Interconnection, crate::certificates::CertificateSet) {
    let models = vec![scalar_model(-1.0, 1.0, 1.0)];
    let ic = passthrough(1);
    let cp = assemble_centralized(&models, &ic, &GainObjective::minimize(GainTarget::ContinuousL2), &CertOptions::default())
        .unwrap();
    let cert = cp.solve(&models, &ic, 1e-9).unwrap().certificate.unwrap();
    (models, ic, cert)
}

#[test]
fn certified_chain_dissipates_along_sinusoids() {
    let (models, ic, cert) = chain_certificate();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let freq = rng.random_range(0.1..3.0);
        let inputs = Inputs::new(move |t| DVector::from_element(1, (freq * t + phase).sin()), |_| vec![]);
        let x0 = DVector::from_element(1, rng.random_range(-1.0..1.0));
        let traj = simulate(&models, &ic, &inputs, &[x0], &[0], &SimConfig::new(1e-3, 5.0, 100)).unwrap();
        let report = audit_dissipation(&models, &ic, &traj, &cert, 1e-3).unwrap();
        assert!(report.passed(), "{report}");
    }
}

#[test]
fn corrupted_storage_fails_the_audit() {
    let (models, ic, mut cert) = chain_certificate();
    cert.subsystems[0].storage = cert.subsystems[0].storage.scaled(-1.0);
    let traj = simulate(
        &models,
        &ic,
        &Inputs::zero(&ic),
        &[DVector::from_element(1, 1.0)],
        &[0],
        &SimConfig::new(1e-3, 3.0, 100),
    )
    .unwrap();
    let report = audit_dissipation(&models, &ic, &traj, &cert, 1e-3).unwrap();
    assert!(!report.passed());
    assert!(report.local_slack[0] > 0.1);
}

#[test]
fn lyapunov_function_decreases_without_input() {
    let (models, ic, cert) = chain_certificate();
    let traj = simulate(
        &models,
        &ic,
        &Inputs::zero(&ic),
        &[DVector::from_element(1, 2.0)],
        &[0],
        &SimConfig::new(1e-3, 20.0, 100),
    )
    .unwrap();
    let report = audit_stability(&traj, &cert.storages(), 1e-9, 1e-3);
    assert!(report.passed(), "{report}");
}

#[test]
fn chain_gain_is_bounded_and_nearly_attained() {
    let models = vec![scalar_model(-1.0, 1.0, 1.0)];
    let ic = passthrough(1);
    let cfg = GainTrialConfig {
        trials: 16,
        horizon: 10.0,
        dt: 1e-2,
        bandwidth: 3.0,
        ..Default::default()
    };
    let report = empirical_gain(&models, &ic, 1.0, &cfg).unwrap();
    assert!(report.passed, "{report:?}");
    // slow sinusoid: |G(jω)| = 1/√(1+ω²) ≈ 1
    let inputs = Inputs::new(|t| DVector::from_element(1, (0.05 * t).sin()), |_| vec![]);
    let traj = simulate(&models, &ic, &inputs, &[DVector::zeros(1)], &[0], &SimConfig::new(1e-2, 200.0, 100)).unwrap();
    let (ez, ed) = traj.io_energy();
    let ratio = (ez / ed).sqrt();
    assert!((0.9..=1.05).contains(&ratio), "{ratio}");
}

#[test]
fn zero_output_gives_zero_ratios() {
    let models = vec![scalar_model(-1.0, 1.0, 0.0)];
    let ic = passthrough(1);
    let cfg = GainTrialConfig {
        trials: 4,
        horizon: 2.0,
        dt: 1e-2,
        ..Default::default()
    };
    let report = empirical_gain(&models, &ic, 0.0, &cfg).unwrap();
    assert!(report.ratios.iter().all(|&r| r == 0.0));
}

#[test]
fn divergence_is_reported_not_raised() {
    let m = scalar_model(50.0, 0.0, 0.0);
    let (models, ic) = isolated(&m).unwrap();
    let traj = simulate(
        &models,
        &ic,
        &Inputs::zero(&ic),
        &[DVector::from_element(1, 1.0)],
        &[0],
        &SimConfig::new(1e-2, 5.0, 1),
    )
    .unwrap();
    assert!(traj.diverged.is_some());
}

#[test]
fn csv_has_one_row_per_sample() {
    let m = scalar_model(-1.0, 1.0, 1.0);
    let models = vec![m];
    let ic = passthrough(1);
    let traj = simulate(&models, &ic, &Inputs::zero(&ic), &[DVector::zeros(1)], &[0], &SimConfig::new(0.1, 1.0, 2)).unwrap();
    let mut buf = Vec::new();
    traj.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,x0_0,q0,p0,w0,y0,d0,z0,u0");
    assert_eq!(text.lines().count(), traj.samples.len() + 1);
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
