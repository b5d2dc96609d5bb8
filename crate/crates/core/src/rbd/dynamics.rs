use nalgebra::{DMatrix, DVector, Matrix6, Vector3, Vector6};

use super::kinematics::{
    check_dims, com_from_world, jacobian_from_world, joint_subspace, link_velocities,
    local_transforms, world_from_local, Configuration, Contact,
};
use super::model::{BaseType, FrameRef, RobotModel};
use super::spatial::SpatialMotion;
use super::RbdError;

/// Generalized force `M α^g + C − Σ J_kᵀ f_k` for proper acceleration `accel`.
///
/// The first six entries are the base wrench (zero for a consistent floating
/// base motion), the remaining `n` are joint torques.
pub fn rnea_full(
    model: &RobotModel,
    q: &Configuration,
    nu: &DVector<f64>,
    accel: &DVector<f64>,
    contacts: &[Contact],
) -> Result<DVector<f64>, RbdError> {
    check_dims(model, q, Some(nu))?;
    if accel.len() != model.nv() {
        return Err(RbdError::Dimension(format!(
            "acceleration has length {}, expected {}",
            accel.len(),
            model.nv()
        )));
    }
    let links = model.links();
    for c in contacts {
        if c.frame.link >= links.len() {
            return Err(RbdError::UnknownFrame(format!(
                "link index {}",
                c.frame.link
            )));
        }
    }
    let local = local_transforms(model, &q.s);
    let v = link_velocities(model, &local, nu);
    let mut a = Vec::with_capacity(links.len());
    let mut f = Vec::with_capacity(links.len());
    for (i, link) in links.iter().enumerate() {
        let ai = match link.parent {
            None => SpatialMotion(accel.fixed_rows::<6>(0).into_owned()),
            Some(p) => {
                let mut ai = local[i].motion_from_parent(&a[p]);
                if let Some((k, s)) = joint_subspace(model, i) {
                    ai += s * accel[6 + k] + v[i].cross_motion(&(s * nu[6 + k]));
                }
                ai
            }
        };
        let inertia = &link.inertia;
        f.push(inertia.apply(&ai) + v[i].cross_force(&inertia.apply(&v[i])));
        a.push(ai);
    }
    for c in contacts {
        f[c.frame.link] = f[c.frame.link] - c.frame.offset.force_to_parent(&c.wrench);
    }
    let mut out = DVector::zeros(model.nv());
    for i in (1..links.len()).rev() {
        if let Some((k, s)) = joint_subspace(model, i) {
            out[6 + k] = s.dot(&f[i]);
        }
        let fp = local[i].force_to_parent(&f[i]);
        let p = links[i].parent.unwrap();
        f[p] += fp;
    }
    out.fixed_rows_mut::<6>(0).copy_from(&f[0].0);
    Ok(out)
}

/// Joint torques `τ` of the inverse dynamics (rows `6..` of [`rnea_full`]).
pub fn rnea(
    model: &RobotModel,
    q: &Configuration,
    nu: &DVector<f64>,
    accel: &DVector<f64>,
    contacts: &[Contact],
) -> Result<DVector<f64>, RbdError> {
    let full = rnea_full(model, q, nu, accel, contacts)?;
    Ok(full.rows(6, model.dof()).into_owned())
}

/// Mass matrix by the composite-rigid-body algorithm.
pub fn mass_matrix(model: &RobotModel, q: &Configuration) -> Result<DMatrix<f64>, RbdError> {
    check_dims(model, q, None)?;
    let local = local_transforms(model, &q.s);
    Ok(crba(model, &local))
}

fn crba(model: &RobotModel, local: &[crate::rbd::Transform]) -> DMatrix<f64> {
    let links = model.links();
    let xf: Vec<Matrix6<f64>> = local.iter().map(|t| t.force_matrix()).collect();
    let mut ic: Vec<Matrix6<f64>> = links.iter().map(|l| l.inertia.to_matrix()).collect();
    for i in (1..links.len()).rev() {
        let p = links[i].parent.unwrap();
        let add = xf[i] * ic[i] * xf[i].transpose();
        ic[p] += add;
    }
    let mut m = DMatrix::zeros(model.nv(), model.nv());
    m.fixed_view_mut::<6, 6>(0, 0).copy_from(&ic[0]);
    for i in 1..links.len() {
        let Some((k, s)) = joint_subspace(model, i) else {
            continue;
        };
        let mut f: Vector6<f64> = ic[i] * s.0;
        m[(6 + k, 6 + k)] = s.0.dot(&f);
        let mut j = i;
        while let Some(p) = links[j].parent {
            f = xf[j] * f;
            j = p;
            if let Some((kk, sj)) = joint_subspace(model, j) {
                let val = sj.0.dot(&f);
                m[(6 + k, 6 + kk)] = val;
                m[(6 + kk, 6 + k)] = val;
            }
        }
        for r in 0..6 {
            m[(r, 6 + k)] = f[r];
            m[(6 + k, r)] = f[r];
        }
    }
    m
}

/// Terms of `M α^g + C = B τ + Σ J_kᵀ f_k`.
///
/// `bias` is the Coriolis/centrifugal vector only: in proper-acceleration
/// form gravity enters through the base acceleration. `gravity` is the
/// generalized gravity force `G(q)` of the coordinate-acceleration form
/// `M ν̇ + C + G = B τ + Σ J_kᵀ f_k`, i.e. the inverse dynamics at rest with
/// zero coordinate acceleration.
#[derive(Clone, Debug)]
pub struct DynamicsTerms {
    pub mass_matrix: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub gravity: DVector<f64>,
    pub jacobians: Vec<DMatrix<f64>>,
    pub selection: DMatrix<f64>,
}

impl DynamicsTerms {
    pub fn compute(
        model: &RobotModel,
        q: &Configuration,
        nu: &DVector<f64>,
        frames: &[FrameRef],
    ) -> Result<Self, RbdError> {
        check_dims(model, q, Some(nu))?;
        let nv = model.nv();
        let n = model.dof();
        let local = local_transforms(model, &q.s);
        let mass_matrix = crba(model, &local);
        let bias = rnea_full(model, q, nu, &DVector::zeros(nv), &[])?;
        let gravity = rnea_full(
            model,
            q,
            &DVector::zeros(nv),
            &base_gravity_offset(model, q).map(|g| -g),
            &[],
        )?;
        let world = world_from_local(model, &q.base, &local);
        let jacobians = frames
            .iter()
            .map(|f| jacobian_from_world(model, &world, f))
            .collect();
        let mut selection = DMatrix::zeros(nv, n);
        selection.view_mut((6, 0), (n, n)).fill_with_identity();
        Ok(Self {
            mass_matrix,
            bias,
            gravity,
            jacobians,
            selection,
        })
    }

    pub fn n(&self) -> usize {
        self.mass_matrix.nrows() - 6
    }

    pub fn m_b(&self) -> DMatrix<f64> {
        self.mass_matrix.view((0, 0), (6, 6)).into_owned()
    }

    pub fn m_bs(&self) -> DMatrix<f64> {
        self.mass_matrix.view((0, 6), (6, self.n())).into_owned()
    }

    pub fn m_sb(&self) -> DMatrix<f64> {
        self.mass_matrix.view((6, 0), (self.n(), 6)).into_owned()
    }

    pub fn m_s(&self) -> DMatrix<f64> {
        let n = self.n();
        self.mass_matrix.view((6, 6), (n, n)).into_owned()
    }
}

/// `[ᴮR_A ᴬg; 0; 0]`, the difference between coordinate and proper acceleration.
fn base_gravity_offset(model: &RobotModel, q: &Configuration) -> DVector<f64> {
    let mut g = DVector::zeros(model.nv());
    let gb: Vector3<f64> = q.base.rotation.transpose() * model.gravity();
    g.fixed_rows_mut::<3>(0).copy_from(&gb);
    g
}

/// Converts a proper acceleration into `ν̇`.
pub fn coordinate_acceleration(
    model: &RobotModel,
    q: &Configuration,
    proper: &DVector<f64>,
) -> DVector<f64> {
    proper + base_gravity_offset(model, q)
}

/// Converts `ν̇` into a proper acceleration.
pub fn proper_acceleration(
    model: &RobotModel,
    q: &Configuration,
    nu_dot: &DVector<f64>,
) -> DVector<f64> {
    nu_dot - base_gravity_offset(model, q)
}

/// Proper acceleration produced by joint torques `tau` and contact wrenches.
///
/// For a fixed-base model the base is held still: its coordinate acceleration
/// is zero and only the joint block is solved.
pub fn forward_dynamics(
    model: &RobotModel,
    q: &Configuration,
    nu: &DVector<f64>,
    tau: &DVector<f64>,
    contacts: &[Contact],
) -> Result<DVector<f64>, RbdError> {
    check_dims(model, q, Some(nu))?;
    let n = model.dof();
    if tau.len() != n {
        return Err(RbdError::Dimension(format!(
            "torque has length {}, expected {n}",
            tau.len()
        )));
    }
    let local = local_transforms(model, &q.s);
    let m = crba(model, &local);
    match model.base_type() {
        BaseType::Floating => {
            let mut rhs = -rnea_full(model, q, nu, &DVector::zeros(model.nv()), contacts)?;
            let mut joint_rows = rhs.rows_mut(6, n);
            joint_rows += tau;
            m.cholesky()
                .map(|c| c.solve(&rhs))
                .ok_or_else(|| RbdError::Numerical("mass matrix is not positive definite".into()))
        }
        BaseType::Fixed => {
            let mut accel = base_gravity_offset(model, q).map(|g| -g);
            let h = rnea_full(model, q, nu, &accel, contacts)?;
            let rhs = tau - h.rows(6, n);
            let ms = m.view((6, 6), (n, n)).into_owned();
            let sdd = ms.cholesky().map(|c| c.solve(&rhs)).ok_or_else(|| {
                RbdError::Numerical("joint mass matrix is not positive definite".into())
            })?;
            accel.rows_mut(6, n).copy_from(&sdd);
            Ok(accel)
        }
    }
}

pub fn kinetic_energy(model: &RobotModel, q: &Configuration, nu: &DVector<f64>) -> f64 {
    let local = local_transforms(model, &q.s);
    let v = link_velocities(model, &local, nu);
    model
        .links()
        .iter()
        .zip(&v)
        .map(|(l, vi)| l.inertia.kinetic_energy(vi))
        .sum()
}

/// Gravitational potential energy relative to the world origin.
pub fn potential_energy(model: &RobotModel, q: &Configuration) -> f64 {
    let local = local_transforms(model, &q.s);
    let world = world_from_local(model, &q.base, &local);
    -model.total_mass() * model.gravity().dot(&com_from_world(model, &world))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rbd::model::{JointSpec, JointType, LinkSpec};
    use crate::rbd::spatial::{exp_so3, SpatialForce, Transform};
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn link(name: &str, mass: f64, com: [f64; 3], diag: [f64; 3]) -> LinkSpec {
        LinkSpec {
            name: name.into(),
            mass,
            com: Vector3::from(com),
            inertia: Matrix3::from_diagonal(&Vector3::from(diag)),
        }
    }

    fn joint(
        name: &str,
        kind: JointType,
        parent: &str,
        child: &str,
        xyz: [f64; 3],
        axis: [f64; 3],
    ) -> JointSpec {
        JointSpec {
            name: name.into(),
            kind,
            parent: parent.into(),
            child: child.into(),
            origin: Transform::from_translation(Vector3::from(xyz)),
            axis: Vector3::from(axis),
            limits: None,
        }
    }

    fn pendulum() -> RobotModel {
        RobotModel::from_specs(
            "pendulum",
            vec![
                link("support", 1.0, [0.0; 3], [0.1; 3]),
                link("bob", 1.0, [0.0, 1.0, 0.0], [1e-3; 3]),
            ],
            vec![
                joint(
                    "weld",
                    JointType::Fixed,
                    "world",
                    "support",
                    [0.0; 3],
                    [1.0, 0.0, 0.0],
                ),
                joint(
                    "hinge",
                    JointType::Revolute,
                    "support",
                    "bob",
                    [0.0; 3],
                    [1.0, 0.0, 0.0],
                ),
            ],
            vec![],
            Vector3::new(0.0, 0.0, -9.81),
        )
        .unwrap()
    }

    const L1: f64 = 0.7;
    const LC1: f64 = 0.3;
    const LC2: f64 = 0.45;
    const M1: f64 = 2.0;
    const M2: f64 = 1.3;
    const I1: f64 = 0.09;
    const I2: f64 = 0.05;
    const G: f64 = 9.81;

    fn planar_arm() -> RobotModel {
        RobotModel::from_specs(
            "arm",
            vec![
                link("ground", 1.0, [0.0; 3], [0.1; 3]),
                link("upper", M1, [LC1, 0.0, 0.0], [0.01, 0.08, I1]),
                link("fore", M2, [LC2, 0.0, 0.0], [0.02, 0.04, I2]),
            ],
            vec![
                joint(
                    "weld",
                    JointType::Fixed,
                    "world",
                    "ground",
                    [0.0; 3],
                    [1.0, 0.0, 0.0],
                ),
                joint(
                    "shoulder",
                    JointType::Revolute,
                    "ground",
                    "upper",
                    [0.0; 3],
                    [0.0, 0.0, 1.0],
                ),
                joint(
                    "elbow",
                    JointType::Revolute,
                    "upper",
                    "fore",
                    [L1, 0.0, 0.0],
                    [0.0, 0.0, 1.0],
                ),
            ],
            vec![],
            Vector3::new(0.0, -G, 0.0),
        )
        .unwrap()
    }

    /// Two-link planar arm torques from the Lagrangian in closed form.
    fn lagrangian_arm(q: [f64; 2], qd: [f64; 2], qdd: [f64; 2]) -> [f64; 2] {
        let (c2, s2) = (q[1].cos(), q[1].sin());
        let m11 = M1 * LC1 * LC1 + I1 + M2 * (L1 * L1 + LC2 * LC2 + 2.0 * L1 * LC2 * c2) + I2;
        let m12 = M2 * (LC2 * LC2 + L1 * LC2 * c2) + I2;
        let m22 = M2 * LC2 * LC2 + I2;
        let h = M2 * L1 * LC2 * s2;
        let g1 = (M1 * LC1 + M2 * L1) * G * q[0].cos() + M2 * LC2 * G * (q[0] + q[1]).cos();
        let g2 = M2 * LC2 * G * (q[0] + q[1]).cos();
        [
            m11 * qdd[0] + m12 * qdd[1] - h * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]) + g1,
            m12 * qdd[0] + m22 * qdd[1] + h * qd[0] * qd[0] + g2,
        ]
    }

    /// Floating tree with a branch and a fixed joint.
    fn floating_tree() -> RobotModel {
        let mut j2 = joint(
            "j2",
            JointType::Revolute,
            "a",
            "b",
            [0.0, 0.0, -0.3],
            [0.0, 1.0, 0.0],
        );
        j2.origin =
            Transform::from_xyz_rpy(Vector3::new(0.0, 0.05, -0.3), Vector3::new(0.2, -0.1, 0.4));
        RobotModel::from_specs(
            "tree",
            vec![
                link("base", 5.0, [0.01, 0.0, 0.05], [0.1, 0.08, 0.05]),
                link("a", 1.5, [0.0, 0.0, -0.15], [0.02, 0.02, 0.004]),
                link("b", 1.0, [0.02, 0.0, -0.1], [0.01, 0.012, 0.003]),
                link("tip", 0.3, [0.0, 0.0, -0.02], [1e-3, 1e-3, 5e-4]),
                link("c", 2.0, [0.0, 0.0, 0.1], [0.03, 0.02, 0.01]),
            ],
            vec![
                joint(
                    "j1",
                    JointType::Revolute,
                    "base",
                    "a",
                    [0.0, 0.1, 0.0],
                    [0.0, 1.0, 0.0],
                ),
                j2,
                joint(
                    "glue",
                    JointType::Fixed,
                    "b",
                    "tip",
                    [0.05, 0.0, -0.2],
                    [1.0, 0.0, 0.0],
                ),
                joint(
                    "j3",
                    JointType::Revolute,
                    "base",
                    "c",
                    [0.0, 0.0, 0.1],
                    [0.6, 0.0, 0.8],
                ),
            ],
            vec![],
            Vector3::new(0.0, 0.0, -9.81),
        )
        .unwrap()
    }

    fn random_state(model: &RobotModel, rng: &mut ChaCha8Rng) -> (Configuration, DVector<f64>) {
        let mut r = || rng.random_range(-1.0..1.0);
        let base = Transform::new(
            exp_so3(&Vector3::new(r(), r(), r())),
            Vector3::new(r(), r(), r()),
        );
        let s = DVector::from_fn(model.dof(), |_, _| r());
        let nu = DVector::from_fn(model.nv(), |_, _| r());
        (Configuration::new(base, s), nu)
    }

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_everything_gives_zero_torque() {
        let mut m = floating_tree();
        m = RobotModel::from_specs(
            "tree",
            m.links()
                .iter()
                .map(|l| LinkSpec {
                    name: l.name.clone(),
                    mass: l.inertia.mass,
                    com: l.inertia.com,
                    inertia: l.inertia.inertia_com,
                })
                .collect(),
            vec![joint(
                "j",
                JointType::Revolute,
                "base",
                "a",
                [0.0; 3],
                [0.0, 1.0, 0.0],
            )]
            .into_iter()
            .chain([
                joint(
                    "k",
                    JointType::Revolute,
                    "a",
                    "b",
                    [0.0; 3],
                    [1.0, 0.0, 0.0],
                ),
                joint("l", JointType::Fixed, "b", "tip", [0.0; 3], [1.0, 0.0, 0.0]),
                joint(
                    "m",
                    JointType::Revolute,
                    "base",
                    "c",
                    [0.0; 3],
                    [0.0, 0.0, 1.0],
                ),
            ])
            .collect(),
            vec![],
            Vector3::zeros(),
        )
        .unwrap();
        let q = Configuration::neutral(&m);
        let z = DVector::zeros(m.nv());
        assert_eq!(rnea(&m, &q, &z, &z, &[]).unwrap(), DVector::zeros(m.dof()));
    }

    #[test]
    fn pendulum_holding_torque() {
        let m = pendulum();
        let q = Configuration::neutral(&m);
        let z = DVector::zeros(m.nv());
        let accel = proper_acceleration(&m, &q, &z);
        let tau = rnea(&m, &q, &z, &accel, &[]).unwrap();
        assert!((tau[0] - 9.81).abs() < 1e-12 * 9.81);
        for theta in [0.3, -1.1, 2.5] {
            let q = Configuration::new(Transform::identity(), DVector::from_element(1, theta));
            let tau = rnea(&m, &q, &z, &accel, &[]).unwrap();
            let expected = 9.81 * theta.cos();
            assert!((tau[0] - expected).abs() <= 1e-9 * expected.abs().max(1e-12));
        }
    }

    #[test]
    fn pendulum_at_rest_at_bottom_does_not_accelerate() {
        let m = pendulum();
        let q = Configuration::new(
            Transform::identity(),
            DVector::from_element(1, -std::f64::consts::FRAC_PI_2),
        );
        let z = DVector::zeros(m.nv());
        let a = forward_dynamics(&m, &q, &z, &DVector::zeros(1), &[]).unwrap();
        assert!(a[6].abs() < 1e-12);
    }

    #[test]
    fn two_link_arm_matches_lagrangian() {
        let m = planar_arm();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let mut r = || rng.random_range(-2.0..2.0);
            let (q, qd, qdd) = ([r(), r()], [r(), r()], [r(), r()]);
            let cfg = Configuration::new(Transform::identity(), DVector::from_column_slice(&q));
            let mut nu = DVector::zeros(8);
            nu.rows_mut(6, 2).copy_from_slice(&qd);
            let mut acc = DVector::zeros(8);
            acc.rows_mut(6, 2).copy_from_slice(&qdd);
            let proper = proper_acceleration(&m, &cfg, &acc);
            let tau = rnea(&m, &cfg, &nu, &proper, &[]).unwrap();
            let oracle = lagrangian_arm(q, qd, qdd);
            for k in 0..2 {
                assert!(
                    (tau[k] - oracle[k]).abs() <= 1e-9 * oracle[k].abs().max(1.0),
                    "{} vs {}",
                    tau[k],
                    oracle[k]
                );
            }
        }
    }

    #[test]
    fn single_body_mass_matrix_is_spatial_inertia() {
        let m = RobotModel::from_specs(
            "box",
            vec![link("b", 2.0, [0.1, -0.2, 0.05], [0.3, 0.2, 0.1])],
            vec![],
            vec![],
            Vector3::new(0.0, 0.0, -9.81),
        )
        .unwrap();
        let mm = mass_matrix(&m, &Configuration::neutral(&m)).unwrap();
        assert_relative_eq!(
            mm,
            DMatrix::from_column_slice(6, 6, m.links()[0].inertia.to_matrix().as_slice())
        );
    }

    #[test]
    fn mass_matrix_columns_match_unit_acceleration_rnea() {
        let m = floating_tree();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (q, _) = random_state(&m, &mut rng);
        let zero_g = RobotModel::clone(&m);
        let mm = mass_matrix(&zero_g, &q).unwrap();
        let z = DVector::zeros(m.nv());
        for k in 0..m.nv() {
            let mut e = DVector::zeros(m.nv());
            e[k] = 1.0;
            // Proper acceleration needs no gravity bookkeeping: rnea with zero
            // velocity is exactly M times the input.
            let col = rnea_full(&m, &q, &z, &e, &[]).unwrap();
            assert_relative_eq!(mm.column(k).into_owned(), col, epsilon = 1e-12);
        }
        assert_relative_eq!(mm.clone(), mm.transpose(), epsilon = 1e-10);
        assert!(mm.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn gravity_vector_is_rest_inverse_dynamics() {
        let m = floating_tree();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (q, nu) = random_state(&m, &mut rng);
        let terms = DynamicsTerms::compute(&m, &q, &nu, &[]).unwrap();
        let z = DVector::zeros(m.nv());
        let rest = rnea_full(&m, &q, &z, &proper_acceleration(&m, &q, &z), &[]).unwrap();
        assert_relative_eq!(terms.gravity, rest, epsilon = 1e-12);
        // C vanishes at zero velocity in proper-acceleration form.
        let at_rest = DynamicsTerms::compute(&m, &q, &z, &[]).unwrap();
        assert!(at_rest.bias.amax() < 1e-14);
        // The partition reassembles.
        assert_eq!(terms.m_b().shape(), (6, 6));
        assert_relative_eq!(terms.m_bs(), terms.m_sb().transpose(), epsilon = 1e-12);
        assert_eq!(terms.m_s().shape(), (3, 3));
    }

    #[test]
    fn forward_dynamics_inverts_rnea() {
        let m = floating_tree();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sole = FrameRef {
            link: m.link_index("tip").unwrap(),
            offset: Transform::from_translation(Vector3::new(0.0, 0.0, -0.05)),
        };
        for _ in 0..10 {
            let (q, nu) = random_state(&m, &mut rng);
            let contacts = [Contact {
                frame: sole,
                wrench: SpatialForce(nalgebra::Vector6::from_iterator(
                    random_vec(6, &mut rng).iter().map(|x| 20.0 * x),
                )),
            }];
            let tau = random_vec(m.dof(), &mut rng) * 10.0;
            let a = forward_dynamics(&m, &q, &nu, &tau, &contacts).unwrap();
            let back = rnea_full(&m, &q, &nu, &a, &contacts).unwrap();
            let scale = tau.amax().max(1.0);
            assert!(back.rows(0, 6).amax() < 1e-8 * scale);
            assert!((back.rows(6, m.dof()) - &tau).amax() < 1e-8 * scale);
        }
    }

    #[test]
    fn free_fall_has_zero_proper_acceleration() {
        let m = floating_tree();
        let q = Configuration::new(
            Transform::from_xyz_rpy(Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.3, 0.2, -0.5)),
            DVector::from_vec(vec![0.2, -0.4, 0.9]),
        );
        let z = DVector::zeros(m.nv());
        let a = forward_dynamics(&m, &q, &z, &DVector::zeros(3), &[]).unwrap();
        assert!(a.amax() < 1e-12);
        let coord = coordinate_acceleration(&m, &q, &a);
        let g_base = q.base.rotation.transpose() * m.gravity();
        assert_relative_eq!(
            coord.fixed_rows::<3>(0).into_owned(),
            g_base,
            epsilon = 1e-12
        );
    }

    fn curve(q: &Configuration, nu: &DVector<f64>, t: f64) -> Configuration {
        let lin = Vector3::new(nu[0], nu[1], nu[2]);
        let w = Vector3::new(nu[3], nu[4], nu[5]);
        let base = Transform::new(
            q.base.rotation * exp_so3(&(w * t)),
            q.base.translation + q.base.rotation * lin * t,
        );
        Configuration::new(base, &q.s + nu.rows(6, q.s.len()) * t)
    }

    #[test]
    fn power_balance() {
        let m = floating_tree();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let foot = FrameRef {
            link: m.link_index("tip").unwrap(),
            offset: Transform::from_translation(Vector3::new(0.02, 0.01, -0.05)),
        };
        for _ in 0..5 {
            let (q, nu) = random_state(&m, &mut rng);
            let tau = random_vec(m.dof(), &mut rng) * 5.0;
            let wrench = SpatialForce(nalgebra::Vector6::from_iterator(
                random_vec(6, &mut rng).iter().map(|x| 10.0 * x),
            ));
            let contacts = [Contact {
                frame: foot,
                wrench,
            }];
            let a = forward_dynamics(&m, &q, &nu, &tau, &contacts).unwrap();
            let nu_dot = coordinate_acceleration(&m, &q, &a);
            let energy = |t: f64| {
                let qt = curve(&q, &nu, t);
                let nut = &nu + &nu_dot * t;
                kinetic_energy(&m, &qt, &nut) + potential_energy(&m, &qt)
            };
            let h = 1e-3;
            let de = (-energy(2.0 * h) + 8.0 * energy(h) - 8.0 * energy(-h) + energy(-2.0 * h))
                / (12.0 * h);
            let j = crate::rbd::frame_jacobian(&m, &q, &foot);
            let power = nu.rows(6, m.dof()).dot(&tau)
                + (j * &nu).dot(&DVector::from_column_slice(wrench.0.as_slice()));
            assert!(
                (de - power).abs() < 1e-8 * power.abs().max(1.0),
                "{de} vs {power}"
            );
        }
    }

    #[test]
    fn rnea_is_affine_in_acceleration() {
        let m = floating_tree();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (q, nu) = random_state(&m, &mut rng);
        let (a1, a2) = (random_vec(m.nv(), &mut rng), random_vec(m.nv(), &mut rng));
        let z = DVector::zeros(m.nv());
        let r = |a: &DVector<f64>| rnea(&m, &q, &nu, a, &[]).unwrap();
        let lhs = r(&(&a1 * 2.0 - &a2 * 0.5));
        let rhs = r(&a1) * 2.0 - r(&a2) * 0.5 + r(&z) * (1.0 - 2.0 + 0.5);
        assert_relative_eq!(lhs, rhs, epsilon = 1e-10);
    }

    #[test]
    fn dimension_errors_are_reported() {
        let m = floating_tree();
        let q = Configuration::neutral(&m);
        let bad = DVector::zeros(3);
        assert!(matches!(
            rnea(&m, &q, &bad, &bad, &[]),
            Err(RbdError::Dimension(_))
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn state() -> impl Strategy<Value = (u64, [f64; 6])> {
            (any::<u64>(), prop::array::uniform6(-3.0..3.0f64))
        }

        proptest! {
            #[test]
            fn arm_matches_lagrangian_everywhere((_, x) in state()) {
                let m = planar_arm();
                let cfg = Configuration::new(Transform::identity(), DVector::from_row_slice(&x[..2]));
                let mut nu = DVector::zeros(8);
                nu.rows_mut(6, 2).copy_from_slice(&x[2..4]);
                let mut acc = DVector::zeros(8);
                acc.rows_mut(6, 2).copy_from_slice(&x[4..]);
                let tau = rnea(&m, &cfg, &nu, &proper_acceleration(&m, &cfg, &acc), &[]).unwrap();
                let oracle = lagrangian_arm([x[0], x[1]], [x[2], x[3]], [x[4], x[5]]);
                for k in 0..2 {
                    prop_assert!((tau[k] - oracle[k]).abs() <= 1e-9 * oracle[k].abs().max(1.0));
                }
            }

            #[test]
            fn mass_matrix_is_symmetric_positive_definite((seed, _) in state()) {
                let m = floating_tree();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (q, nu) = random_state(&m, &mut rng);
                let mm = mass_matrix(&m, &q).unwrap();
                prop_assert!((&mm - mm.transpose()).amax() < 1e-12);
                prop_assert!(mm.clone().cholesky().is_some());
                let ke = kinetic_energy(&m, &q, &nu);
                prop_assert!((ke - 0.5 * nu.dot(&(&mm * &nu))).abs() < 1e-10 * ke.max(1.0));
            }
        }
    }
}
