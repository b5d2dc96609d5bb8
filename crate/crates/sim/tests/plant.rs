use nalgebra::{DVector, Vector3};
use sensorless_core::actuation::ScvParams;
use sensorless_sim::config::{NoiseConfig, PlantConfig, Transmission};
use sensorless_sim::events::{ObjectAction, ObjectEvent, Push};
use sensorless_sim::humanoid;
use sensorless_sim::plant::{GroundTruth, Plant, PlantError};

fn frictionless() -> ScvParams {
    ScvParams::new(0.0, 0.0, 0.1, 0.0).unwrap()
}

fn hanging(transmission: Transmission, dt: f64) -> Plant {
    let mut c = PlantConfig {
        fixed_base: true,
        transmission,
        dt,
        sensor_period: dt,
        noise: NoiseConfig::noiseless(),
        ..PlantConfig::default()
    };
    c.actuator.friction = frictionless();
    c.frames.soles.clear();
    Plant::from_config(c).unwrap()
}

/// Joint PD around the nominal posture with rough gravity feedforward.
fn hold_currents(plant: &Plant, s0: &DVector<f64>) -> DVector<f64> {
    let x = plant.state();
    DVector::from_fn(s0.len(), |k, _| {
        let tau = 400.0 * (s0[k] - x.s[k]) - 8.0 * x.sd[k];
        tau / plant.actuators()[k].motor.gain()
    })
}

fn run_standing(plant: &mut Plant, seconds: f64) -> Vec<GroundTruth> {
    let s0 = humanoid::nominal_joint_positions(plant.model());
    let steps = (seconds / plant.config().sensor_period).round() as usize;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let i = hold_currents(plant, &s0);
        plant.advance(&i).unwrap();
        out.push(plant.sense().unwrap().1);
    }
    out
}

#[test]
fn rigid_hanging_robot_conserves_energy() {
    let mut p = hanging(Transmission::Rigid, 1e-3);
    let n = p.model().dof();
    let e0 = p.mechanical_energy();
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        p.advance(&DVector::zeros(n)).unwrap();
        worst = worst.max((p.mechanical_energy() - e0).abs());
    }
    assert!(p.state().sd.amax() > 0.5, "the legs should swing");
    let drift = worst / e0.abs();
    assert!(drift < 1e-6, "relative drift {drift:e}");
}

#[test]
fn undamped_elastic_transmission_conserves_energy() {
    let mut c = PlantConfig {
        fixed_base: true,
        noise: NoiseConfig::noiseless(),
        ..PlantConfig::default()
    };
    c.actuator.friction = frictionless();
    c.actuator.damping = 0.0;
    c.frames.soles.clear();
    let mut p = Plant::from_config(c).unwrap();
    let n = p.model().dof();
    let e0 = p.mechanical_energy();
    for _ in 0..500 {
        p.advance(&DVector::zeros(n)).unwrap();
    }
    let drift = (p.mechanical_energy() - e0).abs() / e0.abs();
    assert!(drift < 1e-7, "relative drift {drift:e}");
}

#[test]
fn transmission_torque_follows_the_spring_law() {
    let mut p = Plant::from_config(PlantConfig::default()).unwrap();
    let log = run_standing(&mut p, 0.05);
    let g = log.last().unwrap();
    for (k, a) in p.actuators().iter().enumerate() {
        let r = a.motor.ratio;
        let expect =
            a.stiffness * (g.theta[k] / r - g.s[k]) + a.damping * (g.theta_dot[k] / r - g.sd[k]);
        assert!((g.tau[k] - expect).abs() < 1e-9 * (1.0 + expect.abs()));
    }
}

#[test]
fn noiseless_encoders_read_the_true_angles() {
    let mut c = PlantConfig {
        noise: NoiseConfig::noiseless(),
        ..PlantConfig::default()
    };
    c.seed = 3;
    let mut p = Plant::from_config(c).unwrap();
    let s0 = humanoid::nominal_joint_positions(p.model());
    for _ in 0..20 {
        let i = hold_currents(&p, &s0);
        p.advance(&i).unwrap();
        let (b, g) = p.sense().unwrap();
        assert_eq!(b.joint_positions, g.s);
        assert_eq!(b.motor_positions, g.theta);
        assert_eq!(b.currents, g.currents);
    }
}

#[test]
fn standing_robot_feet_carry_its_weight() {
    let mut p = Plant::from_config(PlantConfig::default()).unwrap();
    let log = run_standing(&mut p, 1.5);
    let weight = p.model().total_mass() * 9.81;
    let tail = &log[log.len() - 200..];
    let fz: f64 = tail
        .iter()
        .map(|g| g.contact_wrenches.iter().map(|w| w[2]).sum::<f64>())
        .sum::<f64>()
        / tail.len() as f64;
    assert!((fz - weight).abs() < 0.005 * weight, "fz {fz} vs {weight}");
    let com = log.last().unwrap().com;
    assert!(com.z > 0.4, "robot should remain upright: {com}");
    let r = p.state().base.rotation;
    assert!((r.transpose() * r - nalgebra::Matrix3::identity()).amax() < 1e-12);
}

#[test]
fn zero_push_and_flat_object_leave_the_trajectory_unchanged() {
    let base = {
        let mut p = Plant::from_config(PlantConfig::default()).unwrap();
        run_standing(&mut p, 0.3)
    };
    let mut p = Plant::from_config(PlantConfig::default()).unwrap();
    p.apply_disturbance(Push {
        start: 0.05,
        duration: 0.1,
        frame: humanoid::PUSH_FRAME.into(),
        force: [0.0; 3],
        torque: [0.0; 3],
    })
    .unwrap();
    p.object_event(ObjectEvent {
        time: 0.1,
        foot: "l_sole".into(),
        height: 0.0,
        action: ObjectAction::Insert,
        ramp: 0.05,
    })
    .unwrap();
    let other = run_standing(&mut p, 0.3);
    assert_eq!(base, other);
}

#[test]
fn push_moves_the_center_of_mass() {
    let mut p = Plant::from_config(PlantConfig::default()).unwrap();
    p.apply_disturbance(Push {
        start: 0.2,
        duration: 0.2,
        frame: humanoid::PUSH_FRAME.into(),
        force: [30.0, 0.0, 0.0],
        torque: [0.0; 3],
    })
    .unwrap();
    let log = run_standing(&mut p, 0.5);
    let before = log[199].com;
    let during = log[399].com;
    assert!(during.x - before.x > 1e-3, "{before} -> {during}");
    assert_eq!(
        log[300].external.fixed_rows::<3>(0).into_owned(),
        Vector3::new(30.0, 0.0, 0.0)
    );
}

#[test]
fn object_lifts_one_foot() {
    let mut p = Plant::from_config(PlantConfig::default()).unwrap();
    p.object_event(ObjectEvent {
        time: 0.05,
        foot: "l_sole".into(),
        height: 0.02,
        action: ObjectAction::Insert,
        ramp: 0.2,
    })
    .unwrap();
    run_standing(&mut p, 0.5);
    let q = p.state().configuration();
    let left = sensorless_core::rbd::frame_pose(p.model(), &q, &p.model().frame("l_sole").unwrap());
    let right =
        sensorless_core::rbd::frame_pose(p.model(), &q, &p.model().frame("r_sole").unwrap());
    assert!(left.translation.z - right.translation.z > 0.015);
}

#[test]
fn ramped_removal_lowers_the_foot_back() {
    let mut p = Plant::from_config(PlantConfig::default()).unwrap();
    let insert = ObjectEvent {
        time: 0.05,
        foot: "l_sole".into(),
        height: 0.02,
        action: ObjectAction::Insert,
        ramp: 0.2,
    };
    p.object_event(insert.clone()).unwrap();
    p.object_event(ObjectEvent {
        time: 0.4,
        action: ObjectAction::Remove,
        ramp: 0.3,
        ..insert
    })
    .unwrap();
    let lift = |p: &Plant| {
        let q = p.state().configuration();
        let z = |f: &str| {
            sensorless_core::rbd::frame_pose(p.model(), &q, &p.model().frame(f).unwrap())
                .translation
                .z
        };
        z("l_sole") - z("r_sole")
    };
    run_standing(&mut p, 0.4);
    let raised = lift(&p);
    run_standing(&mut p, 0.15);
    let halfway = lift(&p);
    run_standing(&mut p, 0.6);
    let lowered = lift(&p);
    assert!(raised > 0.015, "{raised}");
    assert!(halfway < raised - 0.003 && halfway > lowered, "{halfway}");
    assert!(lowered.abs() < 0.003, "{lowered}");
}

#[test]
fn invalid_events_are_rejected() {
    let mut p = Plant::from_config(PlantConfig::default()).unwrap();
    let push = Push {
        start: 0.0,
        duration: 0.1,
        frame: "nowhere".into(),
        force: [1.0, 0.0, 0.0],
        torque: [0.0; 3],
    };
    assert!(matches!(p.apply_disturbance(push), Err(PlantError::Frame(f)) if f == "nowhere"));
    let remove = ObjectEvent {
        time: 0.2,
        foot: "r_sole".into(),
        height: 0.03,
        action: ObjectAction::Remove,
        ramp: 0.0,
    };
    assert!(matches!(
        p.object_event(remove.clone()),
        Err(PlantError::Event(_))
    ));
    p.object_event(ObjectEvent {
        time: 0.1,
        action: ObjectAction::Insert,
        ..remove.clone()
    })
    .unwrap();
    p.object_event(remove).unwrap();
    let bad_foot = ObjectEvent {
        time: 0.1,
        foot: "torso".into(),
        height: 0.03,
        action: ObjectAction::Insert,
        ramp: 0.0,
    };
    assert!(matches!(
        p.object_event(bad_foot),
        Err(PlantError::Frame(_))
    ));
}

#[test]
fn bad_configuration_is_rejected() {
    let c = PlantConfig {
        friction_scale: -0.3,
        ..PlantConfig::default()
    };
    assert!(matches!(Plant::from_config(c), Err(PlantError::Config(_))));
    let c = PlantConfig {
        dt: 3e-4,
        ..PlantConfig::default()
    };
    assert!(matches!(Plant::from_config(c), Err(PlantError::Config(_))));
    let c = PlantConfig {
        model_path: Some("/does/not/exist.urdf".into()),
        ..PlantConfig::default()
    };
    assert!(matches!(
        Plant::from_config(c),
        Err(PlantError::ModelFile { .. })
    ));
}

#[test]
fn same_seed_same_sensors() {
    let run = || {
        let mut p = Plant::from_config(PlantConfig {
            seed: 11,
            ..PlantConfig::default()
        })
        .unwrap();
        let s0 = humanoid::nominal_joint_positions(p.model());
        let mut out = Vec::new();
        for _ in 0..30 {
            let i = hold_currents(&p, &s0);
            p.advance(&i).unwrap();
            out.push(p.sense().unwrap().0);
        }
        out
    };
    assert_eq!(run(), run());
}

#[test]
fn sensor_noise_has_the_configured_spread() {
    let mut p = Plant::from_config(PlantConfig {
        seed: 5,
        ..PlantConfig::default()
    })
    .unwrap();
    let noise = p.config().noise;
    let (_, g) = p.sense().unwrap();
    let n = 100_000;
    let (mut i_sq, mut f_sq, mut w_sq) = (0.0, 0.0, 0.0);
    for _ in 0..n {
        let (b, _) = p.sense().unwrap();
        i_sq += (b.currents[0] - g.currents[0]).powi(2);
        f_sq += (b.ft[0][0] - g.contact_wrenches[0][0]).powi(2);
        w_sq += (b.imu[0].gyro.x - g.twist[3]).powi(2);
    }
    for (sq, std) in [
        (i_sq, noise.current_std),
        (f_sq, noise.force_std),
        (w_sq, noise.gyro_std),
    ] {
        let est = (sq / n as f64).sqrt();
        assert!((est / std - 1.0).abs() < 0.05, "{est} vs {std}");
    }
}

#[test]
fn quantized_encoders_stay_within_half_a_count() {
    let mut p = Plant::from_config(PlantConfig::default()).unwrap();
    p.advance(&DVector::zeros(p.model().dof())).unwrap();
    let (b, g) = p.sense().unwrap();
    let lsb = sensorless_core::velocity_kf::encoder_lsb(12);
    for k in 0..p.model().dof() {
        assert!((b.joint_positions[k] - g.s[k]).abs() <= 0.5 * lsb + 1e-15);
    }
}
