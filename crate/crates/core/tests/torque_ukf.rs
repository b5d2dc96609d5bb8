use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use sensorless_core::actuation::MotorParams;
use sensorless_core::rbd::{
    self, parse_model, Configuration, Contact, RobotModel, SpatialForce, Transform,
};
use sensorless_core::ukf::{
    joint_torque_from_state, StateLayout, TorqueUkf, TorqueUkfConfig, UkfInputs, UkfMeasurement,
};

const LEG: &str = r#"<robot name="leg">
  <link name="hip"><inertial><origin xyz="0 0 0.05"/><mass value="2"/><inertia ixx="0.02" ixy="0" ixz="0" iyy="0.02" iyz="0" izz="0.01"/></inertial></link>
  <link name="thigh"><inertial><origin xyz="0.01 0 -0.15"/><mass value="1.5"/><inertia ixx="0.012" ixy="0" ixz="0" iyy="0.012" iyz="0" izz="0.002"/></inertial></link>
  <link name="shank"><inertial><origin xyz="0 0.01 -0.15"/><mass value="1.0"/><inertia ixx="0.008" ixy="0" ixz="0" iyy="0.008" iyz="0" izz="0.001"/></inertial></link>
  <link name="foot"><inertial><origin xyz="0.03 0 -0.03"/><mass value="0.5"/><inertia ixx="0.001" ixy="0" ixz="0" iyy="0.002" iyz="0" izz="0.002"/></inertial></link>
  <joint name="root" type="floating"><parent link="world"/><child link="hip"/></joint>
  <joint name="hip_pitch" type="revolute"><parent link="hip"/><child link="thigh"/><axis xyz="0 1 0"/></joint>
  <joint name="knee" type="revolute"><parent link="thigh"/><child link="shank"/><origin xyz="0 0 -0.3"/><axis xyz="0 1 0"/></joint>
  <joint name="ankle" type="revolute"><parent link="shank"/><child link="foot"/><origin xyz="0 0 -0.3"/><axis xyz="1 0 0"/></joint>
  <frame name="sole" link="foot"><origin xyz="0.03 0 -0.06"/></frame>
  <frame name="imu" link="hip"><origin xyz="0.02 0 0.1" rpy="0 0 1.5707963267948966"/></frame>
</robot>"#;

fn floating() -> Arc<RobotModel> {
    Arc::new(parse_model(LEG).unwrap())
}

fn fixed() -> Arc<RobotModel> {
    let doc = LEG.replace(
        r#"name="root" type="floating""#,
        r#"name="root" type="fixed""#,
    );
    Arc::new(parse_model(&doc).unwrap())
}

fn motors(n: usize) -> Vec<MotorParams> {
    vec![MotorParams::default(); n]
}

fn config(ft: &[&str]) -> TorqueUkfConfig {
    TorqueUkfConfig::standard(ft.iter().map(|s| s.to_string()).collect(), "foot", "imu")
}

/// Accelerometer reading of a still IMU under gravity.
fn still_accelerometer(
    model: &RobotModel,
    imu_rotation_in_base: &nalgebra::Matrix3<f64>,
) -> Vector3<f64> {
    -(imu_rotation_in_base.transpose() * model.gravity())
}

#[test]
fn static_equilibrium_is_stationary() {
    let model = floating();
    let n = model.dof();
    let s = DVector::from_vec(vec![-0.4, 0.8, 0.1]);
    let q = Configuration::new(Transform::identity(), s.clone());
    let sole = model.frame("sole").unwrap();
    let mut accel = DVector::zeros(6 + n);
    accel.fixed_rows_mut::<3>(0).copy_from(&(-model.gravity()));
    // Ground wrench that cancels the base rows, then the joint torques holding the pose.
    let free = rbd::rnea_full(&model, &q, &DVector::zeros(6 + n), &accel, &[]).unwrap();
    let j = rbd::frame_jacobian(&model, &q, &sole);
    let jb = j.view((0, 0), (6, 6)).transpose();
    let f = jb.lu().solve(&free.rows(0, 6).into_owned()).unwrap();
    let wrench = SpatialForce(Vector6::from_iterator(f.iter().copied()));
    let held = rbd::rnea_full(
        &model,
        &q,
        &DVector::zeros(6 + n),
        &accel,
        &[Contact {
            frame: sole,
            wrench,
        }],
    )
    .unwrap();
    assert!(held.rows(0, 6).amax() < 1e-9);

    let mut ukf = TorqueUkf::new(model.clone(), motors(n), config(&["sole"])).unwrap();
    let l = ukf.layout();
    let imu = model.frame("imu").unwrap().offset;
    ukf.set_block(l.motor_torque(), held.rows(6, n).as_slice());
    ukf.set_block(l.ft(), f.as_slice());
    ukf.set_block(
        l.acc(),
        still_accelerometer(&model, &imu.rotation).as_slice(),
    );
    let inputs = UkfInputs {
        joint_positions: &s,
        base_linear_velocity: Vector3::zeros(),
    };
    let mut x = ukf.mean().clone();
    for _ in 0..100 {
        let next = ukf.process_model(&x, &inputs, 1e-3).unwrap();
        assert!(next.rows(0, n).amax() < 1e-9);
        x = next;
    }
}

#[test]
fn hanging_leg_matches_forward_dynamics() {
    let model = fixed();
    let n = model.dof();
    let ukf = TorqueUkf::new(model.clone(), motors(n), config(&[])).unwrap();
    let l = ukf.layout();
    let imu = model.frame("imu").unwrap().offset;
    for (s, sd) in [
        (vec![0.3, -0.5, 0.2], vec![0.0, 0.0, 0.0]),
        (vec![-1.0, 1.2, -0.4], vec![0.7, -1.3, 2.0]),
    ] {
        let s = DVector::from_vec(s);
        let mut x = DVector::zeros(l.dim());
        x.rows_mut(0, n).copy_from_slice(&sd);
        x.rows_mut(l.acc(), 3)
            .copy_from(&still_accelerometer(&model, &imu.rotation));
        let inputs = UkfInputs {
            joint_positions: &s,
            base_linear_velocity: Vector3::zeros(),
        };
        let sdd = ukf.process_acceleration(&x, &inputs).unwrap();
        let q = Configuration::new(Transform::identity(), s.clone());
        let mut nu = DVector::zeros(6 + n);
        nu.rows_mut(6, n).copy_from_slice(&sd);
        let fd = rbd::forward_dynamics(&model, &q, &nu, &DVector::zeros(n), &[]).unwrap();
        assert!((&sdd - fd.rows(6, n)).amax() < 1e-9, "{sdd} {fd}");
    }
}

#[test]
fn torque_estimate_is_motor_minus_friction() {
    let layout = StateLayout { n: 2, n_ft: 0 };
    let mut x = DVector::zeros(layout.dim());
    x.rows_mut(layout.motor_torque(), 2)
        .copy_from_slice(&[1.0, 2.0]);
    x.rows_mut(layout.friction(), 2)
        .copy_from_slice(&[0.5, -0.5]);
    assert_eq!(joint_torque_from_state(&layout, &x).as_slice(), &[0.5, 2.5]);
    assert_eq!(layout.dim(), 2 * 3 + 6 + 6);
    assert_eq!(StateLayout { n: 8, n_ft: 2 }.dim(), 48);
}

/// Swings the fixed-base leg under known torques and feeds exact measurements.
fn swing(ukf: &mut TorqueUkf, steps: usize, friction: Option<f64>) -> Vec<f64> {
    let model = ukf.model().clone();
    let n = model.dof();
    let dt = 1e-3;
    let imu = model.frame("imu").unwrap().offset;
    let acc = still_accelerometer(&model, &imu.rotation);
    let mut s = DVector::from_vec(vec![0.2, 0.4, 0.0]);
    let mut sd = DVector::<f64>::zeros(n);
    let gain = MotorParams::default().gain();
    let mut errors = Vec::new();
    for k in 0..steps {
        let t = k as f64 * dt;
        let tau = DVector::from_vec(vec![
            3.0 * (2.0 * t).sin(),
            1.5 * (3.0 * t).cos(),
            0.3 * t.sin(),
        ]);
        let q = Configuration::new(Transform::identity(), s.clone());
        let mut nu = DVector::zeros(6 + n);
        nu.rows_mut(6, n).copy_from(&sd);
        let a = rbd::forward_dynamics(&model, &q, &nu, &tau, &[]).unwrap();
        sd += a.rows(6, n) * dt;
        s += &sd * dt;
        let tau_f = DVector::from_element(n, friction.unwrap_or(0.0));
        let meas = UkfMeasurement {
            joint_velocity: sd.clone(),
            currents: (&tau + &tau_f) / gain,
            friction: friction.map(|_| tau_f.clone()),
            friction_std: None,
            ft: vec![],
            accelerometer: acc,
            gyroscope: Vector3::zeros(),
        };
        let inputs = UkfInputs {
            joint_positions: &s,
            base_linear_velocity: Vector3::zeros(),
        };
        ukf.step(&inputs, &meas, dt).unwrap();
        errors.push((ukf.joint_torque_estimate() - &tau).amax());
    }
    errors
}

#[test]
fn estimate_converges_on_consistent_data() {
    let model = fixed();
    let n = model.dof();
    let mut ukf = TorqueUkf::new(model, motors(n), config(&[])).unwrap();
    let errors = swing(&mut ukf, 3000, Some(0.4));
    let late = errors[1000..].iter().cloned().fold(0.0, f64::max);
    assert!(late < 0.05, "late error {late}");
}

#[test]
fn masked_friction_channel_is_not_fused() {
    let model = fixed();
    let n = model.dof();
    let base = TorqueUkf::new(model, motors(n), config(&[])).unwrap();
    let z = |f: Option<DVector<f64>>| UkfMeasurement {
        joint_velocity: DVector::zeros(n),
        currents: DVector::zeros(n),
        friction: f,
        friction_std: None,
        ft: vec![],
        accelerometer: Vector3::zeros(),
        gyroscope: Vector3::zeros(),
    };
    let full = base
        .stack_measurement(&z(Some(DVector::from_element(n, 1.0))))
        .unwrap();
    let masked = base.stack_measurement(&z(None)).unwrap();
    assert_eq!(full.len(), masked.len() + n);

    let mut with = base.clone();
    let mut without = base.clone();
    let s = DVector::zeros(n);
    let inputs = UkfInputs {
        joint_positions: &s,
        base_linear_velocity: Vector3::zeros(),
    };
    with.step(&inputs, &z(Some(DVector::from_element(n, 5.0))), 1e-3)
        .unwrap();
    without.step(&inputs, &z(None), 1e-3).unwrap();
    let l = base.layout();
    assert!(with.mean().rows(l.friction(), n).min() > 1.0);
    // Unmeasured friction moves only through its correlation with the motor torque.
    assert!(without.mean().rows(l.friction(), n).amax() < 0.5);
}

#[test]
fn bad_schedule_is_rejected() {
    let model = fixed();
    let n = model.dof();
    let mut ukf = TorqueUkf::new(model, motors(n), config(&[])).unwrap();
    let s = DVector::zeros(n);
    let inputs = UkfInputs {
        joint_positions: &s,
        base_linear_velocity: Vector3::zeros(),
    };
    let meas = UkfMeasurement {
        joint_velocity: DVector::zeros(n),
        currents: DVector::zeros(n),
        friction: None,
        friction_std: None,
        ft: vec![],
        accelerometer: Vector3::zeros(),
        gyroscope: Vector3::zeros(),
    };
    assert!(ukf.step(&inputs, &meas, 5e-3).is_err());
}

#[test]
fn covariance_stays_positive_semidefinite() {
    let model = fixed();
    let n = model.dof();
    let mut ukf = TorqueUkf::new(model, motors(n), config(&[])).unwrap();
    swing(&mut ukf, 20_000, None);
    let p: &DMatrix<f64> = &ukf.filter.cov;
    assert!((p - p.transpose()).amax() < 1e-9);
    assert!(p.clone().symmetric_eigenvalues().min() > -1e-9);
}

#[test]
fn propagation_keeps_constant_blocks() {
    let model = fixed();
    let n = model.dof();
    let ukf = TorqueUkf::new(model, motors(n), config(&[])).unwrap();
    let l = ukf.layout();
    let x = DVector::from_fn(l.dim(), |i, _| ((i * 7 % 11) as f64 - 5.0) * 0.3);
    let s = DVector::from_vec(vec![0.1, 0.2, 0.3]);
    let inputs = UkfInputs {
        joint_positions: &s,
        base_linear_velocity: Vector3::new(0.1, 0.0, -0.2),
    };
    let next = ukf.process_model(&x, &inputs, 1e-3).unwrap();
    assert_eq!(next.rows(n, l.dim() - n), x.rows(n, l.dim() - n));
}

#[test]
fn measurement_model_examples() {
    let model = fixed();
    let n = model.dof();
    let ukf = TorqueUkf::new(model, motors(n), config(&[])).unwrap();
    let l = ukf.layout();
    let mut x = DVector::zeros(l.dim());
    assert_eq!(ukf.measurement_model(&x, true), DVector::zeros(3 * n + 6));
    x[l.motor_torque()] = 10.0;
    x[l.friction()] = 1.5;
    let z = ukf.measurement_model(&x, true);
    assert!((z[n] - 1.0).abs() < 1e-15);
    let tau = joint_torque_from_state(&l, &x);
    assert!((tau[0] - 8.5).abs() < 1e-15);
    assert!((MotorParams::default().gain() * z[n] - x[l.friction()] - tau[0]).abs() < 1e-12);
}

#[test]
fn masked_friction_variance_grows() {
    let model = fixed();
    let n = model.dof();
    let mut ukf = TorqueUkf::new(model, motors(n), config(&[])).unwrap();
    let l = ukf.layout();
    let before = ukf.filter.cov[(l.friction(), l.friction())];
    let s = DVector::zeros(n);
    let inputs = UkfInputs {
        joint_positions: &s,
        base_linear_velocity: Vector3::zeros(),
    };
    let meas = UkfMeasurement {
        joint_velocity: DVector::zeros(n),
        currents: DVector::zeros(n),
        friction: None,
        friction_std: None,
        ft: vec![],
        accelerometer: Vector3::zeros(),
        gyroscope: Vector3::zeros(),
    };
    let mut last = before;
    for _ in 0..5 {
        ukf.step(&inputs, &meas, 1e-3).unwrap();
        let v = ukf.filter.cov[(l.friction(), l.friction())];
        assert!(v > last * 0.999, "{v} after {last}");
        last = v;
    }
}

#[test]
fn zero_noise_self_consistency_contracts() {
    let model = fixed();
    let n = model.dof();
    let mut cfg = config(&[]);
    let zero = |mut b: sensorless_core::ukf::BlockNoise, v: f64| {
        b.joint_velocity = v;
        b.motor_torque = v;
        b.friction = v;
        b.ft_force = v;
        b.ft_torque = v;
        b.ext_force = v;
        b.ext_torque = v;
        b.accelerometer = v;
        b.gyroscope = v;
        b
    };
    cfg.process = zero(cfg.process, 0.0);
    cfg.measurement = zero(cfg.measurement, 1e-6);
    let mut ukf = TorqueUkf::new(model.clone(), motors(n), cfg).unwrap();
    let l = ukf.layout();
    let imu = model.frame("imu").unwrap().offset;
    let mut truth = DVector::zeros(l.dim());
    truth
        .rows_mut(l.motor_torque(), n)
        .copy_from_slice(&[2.0, -1.0, 0.5]);
    truth
        .rows_mut(l.friction(), n)
        .copy_from_slice(&[0.3, 0.2, -0.1]);
    truth
        .rows_mut(l.acc(), 3)
        .copy_from(&still_accelerometer(&model, &imu.rotation));
    ukf.set_block(l.acc(), truth.rows(l.acc(), 3).as_slice());
    let mut s = DVector::from_vec(vec![0.2, 0.4, 0.0]);
    let initial = (ukf.mean() - &truth).rows(0, 3 * n).amax();
    let mut errors = Vec::new();
    for _ in 0..400 {
        let inputs = UkfInputs {
            joint_positions: &s,
            base_linear_velocity: Vector3::zeros(),
        };
        truth = ukf.process_model(&truth, &inputs, 1e-3).unwrap();
        let z = ukf.measurement_model(&truth, true);
        let meas = UkfMeasurement {
            joint_velocity: z.rows(0, n).into_owned(),
            currents: z.rows(n, n).into_owned(),
            friction: Some(z.rows(2 * n, n).into_owned()),
            friction_std: None,
            ft: vec![],
            accelerometer: truth.fixed_rows::<3>(l.acc()).into_owned(),
            gyroscope: Vector3::zeros(),
        };
        ukf.step(&inputs, &meas, 1e-3).unwrap();
        s += truth.rows(0, n) * 1e-3;
        // The external wrench is only seen through n joint rows, so its
        // null-space part is unobservable; score the observable blocks.
        errors.push((ukf.mean() - &truth).rows(0, 3 * n).amax());
    }
    // Contraction down to the round-off floor, then it stays there.
    let peak = |r: std::ops::Range<usize>| errors[r].iter().cloned().fold(0.0, f64::max);
    assert!(peak(0..10) < 1e-3 * initial);
    assert!(peak(10..400) < 1e-6, "{}", peak(10..400));
}
