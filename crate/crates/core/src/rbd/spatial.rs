//! Spatial vector algebra.
//!
//! All 6-vectors are stored linear-first: a motion vector is `[v; ω]` and a
//! force vector is `[f; n]`. A `Transform` is the homogeneous transform
//! `ᴬH_B` that maps coordinates of frame `B` into frame `A`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{Matrix3, Matrix6, Rotation3, Vector3, Vector6};

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation matrix `exp([w]×)`.
pub fn exp_so3(w: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::new(*w).into_inner()
}

/// Rotation from URDF roll-pitch-yaw angles: `Rz(yaw) Ry(pitch) Rx(roll)`.
pub fn rpy_to_matrix(rpy: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::from_euler_angles(rpy.x, rpy.y, rpy.z).into_inner()
}

/// Spatial motion vector (twist or acceleration), linear part first.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct SpatialMotion(pub Vector6<f64>);

/// Spatial force vector (wrench), force part first.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct SpatialForce(pub Vector6<f64>);

macro_rules! spatial_common {
    ($t:ident) => {
        impl $t {
            pub fn new(linear: Vector3<f64>, angular: Vector3<f64>) -> Self {
                Self(Vector6::new(
                    linear.x, linear.y, linear.z, angular.x, angular.y, angular.z,
                ))
            }

            pub fn zero() -> Self {
                Self(Vector6::zeros())
            }

            pub fn linear(&self) -> Vector3<f64> {
                self.0.fixed_rows::<3>(0).into_owned()
            }

            pub fn angular(&self) -> Vector3<f64> {
                self.0.fixed_rows::<3>(3).into_owned()
            }
        }

        impl Add for $t {
            type Output = $t;
            fn add(self, rhs: $t) -> $t {
                $t(self.0 + rhs.0)
            }
        }

        impl AddAssign for $t {
            fn add_assign(&mut self, rhs: $t) {
                self.0 += rhs.0;
            }
        }

        impl Sub for $t {
            type Output = $t;
            fn sub(self, rhs: $t) -> $t {
                $t(self.0 - rhs.0)
            }
        }

        impl Neg for $t {
            type Output = $t;
            fn neg(self) -> $t {
                $t(-self.0)
            }
        }

        impl Mul<f64> for $t {
            type Output = $t;
            fn mul(self, rhs: f64) -> $t {
                $t(self.0 * rhs)
            }
        }
    };
}

spatial_common!(SpatialMotion);
spatial_common!(SpatialForce);

impl SpatialMotion {
    /// Motion cross product `self ×ₘ m`.
    pub fn cross_motion(&self, m: &SpatialMotion) -> SpatialMotion {
        let (v, w) = (self.linear(), self.angular());
        let (ml, mw) = (m.linear(), m.angular());
        SpatialMotion::new(w.cross(&ml) + v.cross(&mw), w.cross(&mw))
    }

    /// Force cross product `self ×* f`.
    pub fn cross_force(&self, f: &SpatialForce) -> SpatialForce {
        let (v, w) = (self.linear(), self.angular());
        let (fl, fn_) = (f.linear(), f.angular());
        SpatialForce::new(w.cross(&fl), w.cross(&fn_) + v.cross(&fl))
    }

    /// Power pairing with a wrench.
    pub fn dot(&self, f: &SpatialForce) -> f64 {
        self.0.dot(&f.0)
    }
}

/// Homogeneous transform `ᴬH_B`: `p_A = R p_B + t`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Transform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Transform {
    fn default() -> Self {
        Self::identity()
    }
}

impl Transform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(Matrix3::identity(), t)
    }

    pub fn from_xyz_rpy(xyz: Vector3<f64>, rpy: Vector3<f64>) -> Self {
        Self::new(rpy_to_matrix(&rpy), xyz)
    }

    /// Composition `ᴬH_C = ᴬH_B · ᴮH_C`.
    pub fn compose(&self, other: &Transform) -> Transform {
        Transform::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Transform {
        let rt = self.rotation.transpose();
        Transform::new(rt, -(rt * self.translation))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `ᴬv = ᴬX_B ᴮv`.
    pub fn motion_to_parent(&self, m: &SpatialMotion) -> SpatialMotion {
        let w = self.rotation * m.angular();
        let v = self.rotation * m.linear() + self.translation.cross(&w);
        SpatialMotion::new(v, w)
    }

    /// `ᴮv = ᴮX_A ᴬv`.
    pub fn motion_from_parent(&self, m: &SpatialMotion) -> SpatialMotion {
        let rt = self.rotation.transpose();
        let w = m.angular();
        SpatialMotion::new(rt * (m.linear() - self.translation.cross(&w)), rt * w)
    }

    /// `ᴬf = ᴬX*_B ᴮf`.
    pub fn force_to_parent(&self, f: &SpatialForce) -> SpatialForce {
        let fl = self.rotation * f.linear();
        let n = self.rotation * f.angular() + self.translation.cross(&fl);
        SpatialForce::new(fl, n)
    }

    /// `ᴮf = ᴮX*_A ᴬf`.
    pub fn force_from_parent(&self, f: &SpatialForce) -> SpatialForce {
        let rt = self.rotation.transpose();
        let fl = f.linear();
        SpatialForce::new(rt * fl, rt * (f.angular() - self.translation.cross(&fl)))
    }

    /// 6×6 motion transform `ᴬX_B`.
    pub fn motion_matrix(&self) -> Matrix6<f64> {
        let mut x = Matrix6::zeros();
        let r = self.rotation;
        x.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        x.fixed_view_mut::<3, 3>(0, 3)
            .copy_from(&(skew(&self.translation) * r));
        x.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
        x
    }

    /// 6×6 force transform `ᴬX*_B = ᴬX_B⁻ᵀ`.
    pub fn force_matrix(&self) -> Matrix6<f64> {
        let mut x = Matrix6::zeros();
        let r = self.rotation;
        x.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        x.fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&(skew(&self.translation) * r));
        x.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
        x
    }
}

/// Rigid-body inertia expressed in a body frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialInertia {
    pub mass: f64,
    /// Center of mass in the body frame.
    pub com: Vector3<f64>,
    /// Rotational inertia about the center of mass, body-frame axes.
    pub inertia_com: Matrix3<f64>,
}

impl SpatialInertia {
    pub fn new(mass: f64, com: Vector3<f64>, inertia_com: Matrix3<f64>) -> Self {
        Self {
            mass,
            com,
            inertia_com,
        }
    }

    /// Momentum `I v` of the body moving with twist `v`.
    pub fn apply(&self, v: &SpatialMotion) -> SpatialForce {
        let (lin, w) = (v.linear(), v.angular());
        let p = (lin + w.cross(&self.com)) * self.mass;
        let h = self.inertia_com * w + self.com.cross(&p);
        SpatialForce::new(p, h)
    }

    pub fn to_matrix(&self) -> Matrix6<f64> {
        let m = self.mass;
        let cx = skew(&self.com);
        let mut out = Matrix6::zeros();
        out.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(Matrix3::identity() * m));
        out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-cx * m));
        out.fixed_view_mut::<3, 3>(3, 0).copy_from(&(cx * m));
        out.fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&(self.inertia_com - cx * cx * m));
        out
    }

    pub fn kinetic_energy(&self, v: &SpatialMotion) -> f64 {
        0.5 * v.dot(&self.apply(v))
    }
}
