use nalgebra::{DMatrix, DVector, Matrix3xX, Rotation3, Unit, Vector3};

use super::model::{FrameRef, JointType, RobotModel};
use super::spatial::{skew, SpatialForce, SpatialMotion, Transform};
use super::RbdError;

/// Configuration `q = (ᴬH_B, s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    pub base: Transform,
    pub s: DVector<f64>,
}

impl Configuration {
    pub fn new(base: Transform, s: DVector<f64>) -> Self {
        Self { base, s }
    }

    pub fn neutral(model: &RobotModel) -> Self {
        Self::new(Transform::identity(), DVector::zeros(model.dof()))
    }
}

/// A wrench acting on the robot, expressed in (and about the origin of) the
/// frame it is attached to.
#[derive(Clone, Copy, Debug)]
pub struct Contact {
    pub frame: FrameRef,
    pub wrench: SpatialForce,
}

pub(crate) fn check_dims(
    model: &RobotModel,
    q: &Configuration,
    nu: Option<&DVector<f64>>,
) -> Result<(), RbdError> {
    if q.s.len() != model.dof() {
        return Err(RbdError::Dimension(format!(
            "joint position has length {}, model has {} DOFs",
            q.s.len(),
            model.dof()
        )));
    }
    if let Some(nu) = nu {
        if nu.len() != model.nv() {
            return Err(RbdError::Dimension(format!(
                "velocity has length {}, expected {}",
                nu.len(),
                model.nv()
            )));
        }
    }
    Ok(())
}

/// Parent-to-child transforms `ᵖH_i` of every link (identity for the base).
pub(crate) fn local_transforms(model: &RobotModel, s: &DVector<f64>) -> Vec<Transform> {
    let mut out = Vec::with_capacity(model.links().len());
    out.push(Transform::identity());
    for link in &model.links()[1..] {
        let joint = &model.joints()[link.joint.expect("non-root link has a joint")];
        let t = match (joint.kind, joint.dof) {
            (JointType::Revolute, Some(k)) => {
                let rot = Rotation3::from_axis_angle(&Unit::new_unchecked(joint.axis), s[k]);
                Transform::new(
                    joint.origin.rotation * rot.matrix(),
                    joint.origin.translation,
                )
            }
            _ => joint.origin,
        };
        out.push(t);
    }
    out
}

/// Motion subspace of the joint feeding link `i`, in link coordinates.
pub(crate) fn joint_subspace(model: &RobotModel, i: usize) -> Option<(usize, SpatialMotion)> {
    let joint = &model.joints()[model.links()[i].joint?];
    joint
        .dof
        .map(|k| (k, SpatialMotion::new(Vector3::zeros(), joint.axis)))
}

/// World poses `ᴬH_i` of every link.
pub fn forward_kinematics(model: &RobotModel, q: &Configuration) -> Vec<Transform> {
    let local = local_transforms(model, &q.s);
    world_from_local(model, &q.base, &local)
}

pub(crate) fn world_from_local(
    model: &RobotModel,
    base: &Transform,
    local: &[Transform],
) -> Vec<Transform> {
    let mut world: Vec<Transform> = Vec::with_capacity(local.len());
    world.push(*base);
    for (i, link) in model.links().iter().enumerate().skip(1) {
        let p = link.parent.unwrap();
        let w = world[p].compose(&local[i]);
        world.push(w);
    }
    world
}

pub fn frame_pose(model: &RobotModel, q: &Configuration, frame: &FrameRef) -> Transform {
    forward_kinematics(model, q)[frame.link].compose(&frame.offset)
}

/// Link twists in link coordinates.
pub(crate) fn link_velocities(
    model: &RobotModel,
    local: &[Transform],
    nu: &DVector<f64>,
) -> Vec<SpatialMotion> {
    let mut v = Vec::with_capacity(local.len());
    v.push(SpatialMotion(nu.fixed_rows::<6>(0).into_owned()));
    for (i, link) in model.links().iter().enumerate().skip(1) {
        let mut vi = local[i].motion_from_parent(&v[link.parent.unwrap()]);
        if let Some((k, s)) = joint_subspace(model, i) {
            vi += s * nu[6 + k];
        }
        v.push(vi);
    }
    v
}

/// Body Jacobian of a frame: `ᶠv_{A,F} = J ν`, linear rows first, expressed in the frame.
pub fn frame_jacobian(model: &RobotModel, q: &Configuration, frame: &FrameRef) -> DMatrix<f64> {
    let world = forward_kinematics(model, q);
    jacobian_from_world(model, &world, frame)
}

pub(crate) fn jacobian_from_world(
    model: &RobotModel,
    world: &[Transform],
    frame: &FrameRef,
) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(6, model.nv());
    let f_inv = world[frame.link].compose(&frame.offset).inverse();
    let fx_b = f_inv.compose(&world[0]).motion_matrix();
    j.fixed_view_mut::<6, 6>(0, 0).copy_from(&fx_b);
    let mut l = Some(frame.link);
    while let Some(i) = l {
        if let Some((k, s)) = joint_subspace(model, i) {
            let col = f_inv.compose(&world[i]).motion_to_parent(&s);
            j.fixed_view_mut::<6, 1>(0, 6 + k).copy_from(&col.0);
        }
        l = model.links()[i].parent;
    }
    j
}

pub fn frame_velocity(
    model: &RobotModel,
    q: &Configuration,
    nu: &DVector<f64>,
    frame: &FrameRef,
) -> SpatialMotion {
    let local = local_transforms(model, &q.s);
    let v = link_velocities(model, &local, nu);
    frame.offset.motion_from_parent(&v[frame.link])
}

/// `J̇ ν` for a frame: its spatial acceleration when `ν̇ = 0`, in frame coordinates.
pub fn frame_bias_acceleration(
    model: &RobotModel,
    q: &Configuration,
    nu: &DVector<f64>,
    frame: &FrameRef,
) -> SpatialMotion {
    let local = local_transforms(model, &q.s);
    let v = link_velocities(model, &local, nu);
    let mut a = vec![SpatialMotion::zero(); local.len()];
    for (i, link) in model.links().iter().enumerate().skip(1) {
        let mut ai = local[i].motion_from_parent(&a[link.parent.unwrap()]);
        if let Some((k, s)) = joint_subspace(model, i) {
            ai += v[i].cross_motion(&(s * nu[6 + k]));
        }
        a[i] = ai;
    }
    frame.offset.motion_from_parent(&a[frame.link])
}

/// World poses and link twists (link coordinates) in one pass.
pub fn link_states(
    model: &RobotModel,
    q: &Configuration,
    nu: &DVector<f64>,
) -> (Vec<Transform>, Vec<SpatialMotion>) {
    let local = local_transforms(model, &q.s);
    let v = link_velocities(model, &local, nu);
    (world_from_local(model, &q.base, &local), v)
}

/// Spatial acceleration `J ν̇ + J̇ ν` of a frame, in frame coordinates.
pub fn frame_acceleration(
    model: &RobotModel,
    q: &Configuration,
    nu: &DVector<f64>,
    nu_dot: &DVector<f64>,
    frame: &FrameRef,
) -> SpatialMotion {
    let local = local_transforms(model, &q.s);
    let v = link_velocities(model, &local, nu);
    let mut a = vec![SpatialMotion(nu_dot.fixed_rows::<6>(0).into_owned()); local.len()];
    for (i, link) in model.links().iter().enumerate().skip(1) {
        let mut ai = local[i].motion_from_parent(&a[link.parent.unwrap()]);
        if let Some((k, s)) = joint_subspace(model, i) {
            ai += s * nu_dot[6 + k] + v[i].cross_motion(&(s * nu[6 + k]));
        }
        a[i] = ai;
    }
    frame.offset.motion_from_parent(&a[frame.link])
}

/// World position of the center of mass.
pub fn center_of_mass(model: &RobotModel, q: &Configuration) -> Vector3<f64> {
    let world = forward_kinematics(model, q);
    com_from_world(model, &world)
}

pub(crate) fn com_from_world(model: &RobotModel, world: &[Transform]) -> Vector3<f64> {
    let mut acc = Vector3::zeros();
    for (link, w) in model.links().iter().zip(world) {
        acc += w.transform_point(&link.inertia.com) * link.inertia.mass;
    }
    acc / model.total_mass()
}

/// `ᴬṗ_com = J_com ν` (world coordinates).
pub fn com_jacobian(model: &RobotModel, q: &Configuration) -> Matrix3xX<f64> {
    let world = forward_kinematics(model, q);
    let mut out = Matrix3xX::zeros(model.nv());
    for (i, link) in model.links().iter().enumerate() {
        let j = jacobian_from_world(
            model,
            &world,
            &FrameRef {
                link: i,
                offset: Transform::identity(),
            },
        );
        let c = skew(&link.inertia.com);
        let point = j.rows(0, 3) - c * j.rows(3, 3);
        out += world[i].rotation * point * link.inertia.mass;
    }
    out / model.total_mass()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rbd::model::{JointSpec, LinkSpec};
    use crate::rbd::spatial::exp_so3;
    use approx::assert_relative_eq;
    use nalgebra::{Matrix3, Matrix4, Vector6};

    fn link(name: &str, com: [f64; 3]) -> LinkSpec {
        LinkSpec {
            name: name.into(),
            mass: 1.0,
            com: Vector3::from(com),
            inertia: Matrix3::from_diagonal(&Vector3::new(0.02, 0.03, 0.01)),
        }
    }

    fn revolute(
        name: &str,
        parent: &str,
        child: &str,
        xyz: [f64; 3],
        rpy: [f64; 3],
        axis: [f64; 3],
    ) -> JointSpec {
        JointSpec {
            name: name.into(),
            kind: JointType::Revolute,
            parent: parent.into(),
            child: child.into(),
            origin: Transform::from_xyz_rpy(Vector3::from(xyz), Vector3::from(rpy)),
            axis: Vector3::from(axis).normalize(),
            limits: None,
        }
    }

    fn three_link() -> RobotModel {
        RobotModel::from_specs(
            "arm",
            vec![
                link("base", [0.0, 0.0, 0.1]),
                link("a", [0.1, 0.0, 0.0]),
                link("b", [0.0, 0.2, 0.0]),
                link("c", [0.05, 0.0, -0.1]),
            ],
            vec![
                revolute(
                    "j1",
                    "base",
                    "a",
                    [0.0, 0.0, 0.2],
                    [0.1, 0.0, 0.3],
                    [0.0, 0.0, 1.0],
                ),
                revolute(
                    "j2",
                    "a",
                    "b",
                    [0.3, 0.0, 0.0],
                    [0.0, 0.2, 0.0],
                    [0.0, 1.0, 0.0],
                ),
                revolute(
                    "j3",
                    "b",
                    "c",
                    [0.0, 0.25, 0.05],
                    [0.0, 0.0, -0.4],
                    [1.0, 1.0, 0.0],
                ),
            ],
            vec![],
            Vector3::new(0.0, 0.0, -9.81),
        )
        .unwrap()
    }

    fn homogeneous(t: &Transform) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&t.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t.translation);
        m
    }

    fn rot_axis(axis: Vector3<f64>, angle: f64) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&exp_so3(&(axis * angle)));
        m
    }

    #[test]
    fn zero_configuration_is_product_of_origins() {
        let m = three_link();
        let world = forward_kinematics(&m, &Configuration::neutral(&m));
        let mut acc = Transform::identity();
        for i in 1..4 {
            acc = acc.compose(&m.joints()[i - 1].origin);
            assert_relative_eq!(world[i].rotation, acc.rotation, epsilon = 1e-14);
            assert_relative_eq!(world[i].translation, acc.translation, epsilon = 1e-14);
        }
    }

    #[test]
    fn quarter_turn_about_z() {
        let m = RobotModel::from_specs(
            "one",
            vec![link("base", [0.0; 3]), link("a", [0.0; 3])],
            vec![revolute(
                "j",
                "base",
                "a",
                [0.0; 3],
                [0.0; 3],
                [0.0, 0.0, 1.0],
            )],
            vec![],
            Vector3::zeros(),
        )
        .unwrap();
        let q = Configuration::new(
            Transform::identity(),
            DVector::from_element(1, std::f64::consts::FRAC_PI_2),
        );
        let w = forward_kinematics(&m, &q);
        assert_relative_eq!(w[1].rotation * Vector3::x(), Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn matches_homogeneous_matrix_chain() {
        let m = three_link();
        let base =
            Transform::from_xyz_rpy(Vector3::new(0.4, -0.1, 0.9), Vector3::new(0.3, -0.2, 1.0));
        let s = DVector::from_vec(vec![0.7, -1.2, 2.1]);
        let w = forward_kinematics(&m, &Configuration::new(base, s.clone()));
        let mut chain = homogeneous(&base);
        for k in 0..3 {
            let j = &m.joints()[k];
            chain = chain * homogeneous(&j.origin) * rot_axis(j.axis, s[k]);
            assert_relative_eq!(homogeneous(&w[k + 1]), chain, epsilon = 1e-12);
        }
    }

    /// Moves the configuration along generalized velocity `nu` for time `h`.
    fn displace(q: &Configuration, nu: &DVector<f64>, h: f64) -> Configuration {
        let v = Vector6::from_iterator(nu.rows(0, 6).iter().copied());
        // Exact SE(3) exponential of a constant body twist, integrated finely.
        let steps = 64;
        let dt = h / steps as f64;
        let mut base = q.base;
        for _ in 0..steps {
            let w = v.fixed_rows::<3>(3).into_owned();
            let lin = v.fixed_rows::<3>(0).into_owned();
            let half = Transform::new(exp_so3(&(w * dt * 0.5)), Vector3::zeros());
            let t = base.compose(&half).rotation * lin * dt;
            base = Transform::new(base.rotation * exp_so3(&(w * dt)), base.translation + t);
        }
        Configuration::new(base, &q.s + nu.rows(6, q.s.len()) * h)
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let m = three_link();
        let q = Configuration::new(
            Transform::from_xyz_rpy(Vector3::new(0.1, 0.2, 0.3), Vector3::new(-0.4, 0.5, 0.2)),
            DVector::from_vec(vec![0.3, -0.8, 1.4]),
        );
        let frame = FrameRef {
            link: 3,
            offset: Transform::from_xyz_rpy(
                Vector3::new(0.02, -0.03, 0.1),
                Vector3::new(0.0, 0.3, 0.0),
            ),
        };
        let j = frame_jacobian(&m, &q, &frame);
        let h = 1e-7;
        for k in 0..m.nv() {
            let mut e = DVector::zeros(m.nv());
            e[k] = 1.0;
            let fp = frame_pose(&m, &displace(&q, &e, h), &frame);
            let fm = frame_pose(&m, &displace(&q, &e, -h), &frame);
            let f0 = frame_pose(&m, &q, &frame);
            let lin = f0.rotation.transpose() * (fp.translation - fm.translation) / (2.0 * h);
            let dr = fm.rotation.transpose() * fp.rotation;
            let ang = Vector3::new(
                dr[(2, 1)] - dr[(1, 2)],
                dr[(0, 2)] - dr[(2, 0)],
                dr[(1, 0)] - dr[(0, 1)],
            ) / (4.0 * h);
            for r in 0..3 {
                assert!((j[(r, k)] - lin[r]).abs() < 1e-6, "lin {r},{k}");
                assert!((j[(3 + r, k)] - ang[r]).abs() < 1e-6, "ang {r},{k}");
            }
        }
    }

    #[test]
    fn velocity_agrees_with_jacobian_and_com_jacobian() {
        let m = three_link();
        let q = Configuration::new(
            Transform::from_xyz_rpy(Vector3::new(0.1, 0.2, 0.3), Vector3::new(-0.4, 0.5, 0.2)),
            DVector::from_vec(vec![0.3, -0.8, 1.4]),
        );
        let nu = DVector::from_vec(vec![0.1, -0.2, 0.3, 0.5, -0.4, 0.2, 1.0, -2.0, 0.5]);
        let frame = FrameRef {
            link: 2,
            offset: Transform::from_translation(Vector3::new(0.0, 0.1, 0.0)),
        };
        let v = frame_velocity(&m, &q, &nu, &frame);
        assert_relative_eq!(
            frame_jacobian(&m, &q, &frame) * &nu,
            DVector::from_column_slice(v.0.as_slice()),
            epsilon = 1e-12
        );

        let h = 1e-6;
        let cp = center_of_mass(&m, &displace(&q, &nu, h));
        let cm = center_of_mass(&m, &displace(&q, &nu, -h));
        assert_relative_eq!(
            com_jacobian(&m, &q) * &nu,
            (cp - cm) / (2.0 * h),
            epsilon = 1e-6
        );
    }

    #[test]
    fn bias_acceleration_matches_jacobian_derivative() {
        let m = three_link();
        let q = Configuration::new(
            Transform::identity(),
            DVector::from_vec(vec![0.3, -0.8, 1.4]),
        );
        let nu = DVector::from_vec(vec![0.1, -0.2, 0.3, 0.5, -0.4, 0.2, 1.0, -2.0, 0.5]);
        let frame = FrameRef {
            link: 3,
            offset: Transform::from_translation(Vector3::new(0.1, 0.0, 0.0)),
        };
        let h = 1e-6;
        let jp = frame_jacobian(&m, &displace(&q, &nu, h), &frame);
        let jm = frame_jacobian(&m, &displace(&q, &nu, -h), &frame);
        let jdot_nu = (jp - jm) / (2.0 * h) * &nu;
        let bias = frame_bias_acceleration(&m, &q, &nu, &frame);
        assert_relative_eq!(
            DVector::from_column_slice(bias.0.as_slice()),
            jdot_nu,
            epsilon = 1e-6
        );
    }

    #[test]
    fn frame_acceleration_is_jacobian_plus_bias() {
        let m = three_link();
        let q = Configuration::new(
            Transform::identity(),
            DVector::from_vec(vec![0.3, -0.8, 1.4]),
        );
        let nu = DVector::from_vec(vec![0.1, -0.2, 0.3, 0.5, -0.4, 0.2, 1.0, -2.0, 0.5]);
        let nu_dot = DVector::from_vec(vec![0.7, 0.1, -0.3, 0.2, 0.9, -1.1, 3.0, 0.4, -2.5]);
        let frame = FrameRef {
            link: 3,
            offset: Transform::from_translation(Vector3::new(0.1, 0.0, 0.0)),
        };
        let a = frame_acceleration(&m, &q, &nu, &nu_dot, &frame);
        let expected = frame_jacobian(&m, &q, &frame) * &nu_dot
            + DVector::from_column_slice(frame_bias_acceleration(&m, &q, &nu, &frame).0.as_slice());
        assert_relative_eq!(
            DVector::from_column_slice(a.0.as_slice()),
            expected,
            epsilon = 1e-12
        );
        let (world, twists) = link_states(&m, &q, &nu);
        assert_eq!(world, forward_kinematics(&m, &q));
        assert_eq!(
            twists[3],
            frame_velocity(
                &m,
                &q,
                &nu,
                &FrameRef {
                    link: 3,
                    offset: Transform::identity()
                }
            )
        );
    }
}
