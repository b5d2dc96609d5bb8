use std::collections::{HashMap, VecDeque};

use nalgebra::{Matrix3, Vector3};

use super::spatial::{SpatialInertia, Transform};
use super::RbdError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JointType {
    Revolute,
    Fixed,
    Floating,
}

/// How the root link is attached to the inertial frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaseType {
    Floating,
    /// The root is welded to the world; the 6 base coordinates stay in the
    /// generalized vectors but must be held at zero velocity by the caller.
    Fixed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkSpec {
    pub name: String,
    pub mass: f64,
    pub com: Vector3<f64>,
    /// Rotational inertia about the COM in link axes.
    pub inertia: Matrix3<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointSpec {
    pub name: String,
    pub kind: JointType,
    pub parent: String,
    pub child: String,
    pub origin: Transform,
    pub axis: Vector3<f64>,
    pub limits: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameSpec {
    pub name: String,
    pub link: String,
    pub transform: Transform,
}

#[derive(Clone, Debug)]
pub struct Link {
    pub name: String,
    pub inertia: SpatialInertia,
    pub parent: Option<usize>,
    /// Index into `RobotModel::joints` of the joint connecting this link to its parent.
    pub joint: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Joint {
    pub name: String,
    pub kind: JointType,
    pub parent: usize,
    pub child: usize,
    /// Pose of the joint frame (= child link frame at zero angle) in the parent link.
    pub origin: Transform,
    pub axis: Vector3<f64>,
    pub limits: Option<(f64, f64)>,
    pub dof: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct SensorFrame {
    pub name: String,
    pub link: usize,
    /// `ᴸH_S`, pose of the frame in its parent link.
    pub transform: Transform,
}

pub const WORLD: &str = "world";

/// Immutable kinematic tree. Links are stored parent-before-child with the
/// floating base at index 0.
#[derive(Clone, Debug)]
pub struct RobotModel {
    name: String,
    links: Vec<Link>,
    joints: Vec<Joint>,
    frames: Vec<SensorFrame>,
    gravity: Vector3<f64>,
    base: BaseType,
    dof_joints: Vec<usize>,
}

impl RobotModel {
    pub fn from_specs(
        name: impl Into<String>,
        links: Vec<LinkSpec>,
        joints: Vec<JointSpec>,
        frames: Vec<FrameSpec>,
        gravity: Vector3<f64>,
    ) -> Result<Self, RbdError> {
        if links.is_empty() {
            return Err(RbdError::Structure("model has no links".into()));
        }
        let mut by_name = HashMap::new();
        for (i, l) in links.iter().enumerate() {
            if by_name.insert(l.name.as_str(), i).is_some() {
                return Err(RbdError::Structure(format!("duplicate link `{}`", l.name)));
            }
            validate_link(l)?;
        }

        let mut base = BaseType::Floating;
        let mut root_link: Option<usize> = None;
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); links.len()];
        let mut has_parent = vec![false; links.len()];
        let mut joint_names = HashMap::new();
        for (j, spec) in joints.iter().enumerate() {
            if joint_names.insert(spec.name.as_str(), j).is_some() {
                return Err(RbdError::Structure(format!(
                    "duplicate joint `{}`",
                    spec.name
                )));
            }
            let child = *by_name.get(spec.child.as_str()).ok_or_else(|| {
                RbdError::Structure(format!(
                    "joint `{}` references missing child link `{}`",
                    spec.name, spec.child
                ))
            })?;
            if has_parent[child] {
                return Err(RbdError::Structure(format!(
                    "link `{}` has more than one parent joint",
                    spec.child
                )));
            }
            has_parent[child] = true;
            if spec.parent == WORLD {
                if root_link.is_some() {
                    return Err(RbdError::Structure("more than one root joint".into()));
                }
                base = match spec.kind {
                    JointType::Floating => BaseType::Floating,
                    JointType::Fixed => BaseType::Fixed,
                    JointType::Revolute => {
                        return Err(RbdError::Structure(format!(
                            "root joint `{}` must be floating or fixed",
                            spec.name
                        )))
                    }
                };
                root_link = Some(child);
                continue;
            }
            if spec.kind == JointType::Floating {
                return Err(RbdError::Structure(format!(
                    "floating joint `{}` is not attached to `{WORLD}`",
                    spec.name
                )));
            }
            let parent = *by_name.get(spec.parent.as_str()).ok_or_else(|| {
                RbdError::Structure(format!(
                    "joint `{}` references missing parent link `{}`",
                    spec.name, spec.parent
                ))
            })?;
            if spec.kind == JointType::Revolute && (spec.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(RbdError::Validation(format!(
                    "joint `{}` axis is not unit norm",
                    spec.name
                )));
            }
            children[parent].push(j);
        }

        let root = match root_link {
            Some(r) => r,
            None => {
                let orphans: Vec<usize> = (0..links.len()).filter(|&i| !has_parent[i]).collect();
                match orphans.as_slice() {
                    [r] => *r,
                    [] => return Err(RbdError::Structure("kinematic loop: no root link".into())),
                    _ => {
                        return Err(RbdError::Structure(format!(
                            "{} links have no parent joint",
                            orphans.len()
                        )))
                    }
                }
            }
        };

        // Breadth-first ordering from the root.
        let mut order = Vec::with_capacity(links.len());
        let mut new_index = vec![usize::MAX; links.len()];
        let mut incoming: Vec<Option<usize>> = vec![None; links.len()];
        let mut queue = VecDeque::from([root]);
        while let Some(l) = queue.pop_front() {
            if new_index[l] != usize::MAX {
                return Err(RbdError::Structure(format!(
                    "kinematic loop through link `{}`",
                    links[l].name
                )));
            }
            new_index[l] = order.len();
            order.push(l);
            for &j in &children[l] {
                let c = by_name[joints[j].child.as_str()];
                incoming[c] = Some(j);
                queue.push_back(c);
            }
        }
        if order.len() != links.len() {
            let unreachable: Vec<&str> = (0..links.len())
                .filter(|&i| new_index[i] == usize::MAX)
                .map(|i| links[i].name.as_str())
                .collect();
            return Err(RbdError::Structure(format!(
                "links not reachable from root: {}",
                unreachable.join(", ")
            )));
        }

        let mut out_links = Vec::with_capacity(links.len());
        let mut out_joints = Vec::new();
        let mut dof_joints = Vec::new();
        for &old in &order {
            let spec = &links[old];
            let (parent, joint) = match incoming[old] {
                None => (None, None),
                Some(j) => {
                    let js = &joints[j];
                    let parent = new_index[by_name[js.parent.as_str()]];
                    let dof = match js.kind {
                        JointType::Revolute => {
                            dof_joints.push(out_joints.len());
                            Some(dof_joints.len() - 1)
                        }
                        _ => None,
                    };
                    out_joints.push(Joint {
                        name: js.name.clone(),
                        kind: js.kind,
                        parent,
                        child: out_links.len(),
                        origin: js.origin,
                        axis: js.axis,
                        limits: js.limits,
                        dof,
                    });
                    (Some(parent), Some(out_joints.len() - 1))
                }
            };
            out_links.push(Link {
                name: spec.name.clone(),
                inertia: SpatialInertia::new(spec.mass, spec.com, spec.inertia),
                parent,
                joint,
            });
        }

        let mut out_frames = Vec::with_capacity(frames.len());
        let mut frame_names = HashMap::new();
        for f in frames {
            if frame_names.insert(f.name.clone(), ()).is_some()
                || by_name.contains_key(f.name.as_str())
            {
                return Err(RbdError::Structure(format!(
                    "duplicate frame name `{}`",
                    f.name
                )));
            }
            let link = *by_name.get(f.link.as_str()).ok_or_else(|| {
                RbdError::Structure(format!(
                    "frame `{}` attached to missing link `{}`",
                    f.name, f.link
                ))
            })?;
            out_frames.push(SensorFrame {
                name: f.name,
                link: new_index[link],
                transform: f.transform,
            });
        }

        Ok(Self {
            name: name.into(),
            links: out_links,
            joints: out_joints,
            frames: out_frames,
            gravity,
            base,
            dof_joints,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn frames(&self) -> &[SensorFrame] {
        &self.frames
    }

    pub fn gravity(&self) -> Vector3<f64> {
        self.gravity
    }

    pub fn base_type(&self) -> BaseType {
        self.base
    }

    /// Number of actuated joint coordinates `n`.
    pub fn dof(&self) -> usize {
        self.dof_joints.len()
    }

    /// Size of the generalized velocity, `6 + n`.
    pub fn nv(&self) -> usize {
        6 + self.dof()
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.inertia.mass).sum()
    }

    /// Joint of the `k`-th actuated coordinate.
    pub fn dof_joint(&self, k: usize) -> &Joint {
        &self.joints[self.dof_joints[k]]
    }

    pub fn joint_names(&self) -> Vec<&str> {
        self.dof_joints
            .iter()
            .map(|&j| self.joints[j].name.as_str())
            .collect()
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    pub fn dof_index(&self, joint_name: &str) -> Option<usize> {
        self.dof_joints
            .iter()
            .position(|&j| self.joints[j].name == joint_name)
    }

    /// Resolves a sensor frame or link name to `(link, ᴸH_F)`.
    pub fn frame(&self, name: &str) -> Result<FrameRef, RbdError> {
        if let Some(f) = self.frames.iter().position(|f| f.name == name) {
            let fr = &self.frames[f];
            return Ok(FrameRef {
                link: fr.link,
                offset: fr.transform,
            });
        }
        self.link_index(name)
            .map(|link| FrameRef {
                link,
                offset: Transform::identity(),
            })
            .ok_or_else(|| RbdError::UnknownFrame(name.to_string()))
    }

    /// Depth of the deepest link (root has depth 0).
    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.links.len()];
        for i in 1..self.links.len() {
            depth[i] = depth[self.links[i].parent.unwrap()] + 1;
        }
        depth.into_iter().max().unwrap_or(0)
    }

    /// Whether link `ancestor` lies on the path from the root to `link` (inclusive).
    pub fn is_ancestor(&self, ancestor: usize, mut link: usize) -> bool {
        loop {
            if link == ancestor {
                return true;
            }
            match self.links[link].parent {
                Some(p) => link = p,
                None => return false,
            }
        }
    }
}

/// A frame rigidly attached to a link.
#[derive(Clone, Copy, Debug)]
pub struct FrameRef {
    pub link: usize,
    pub offset: Transform,
}

fn validate_link(l: &LinkSpec) -> Result<(), RbdError> {
    if !(l.mass > 0.0) || !l.mass.is_finite() {
        return Err(RbdError::Validation(format!(
            "link `{}` has nonpositive mass {}",
            l.name, l.mass
        )));
    }
    let asym = (l.inertia - l.inertia.transpose()).amax();
    if asym > 1e-12 * l.inertia.amax().max(1.0) {
        return Err(RbdError::Validation(format!(
            "link `{}` inertia is not symmetric",
            l.name
        )));
    }
    let min_eig = l.inertia.symmetric_eigenvalues().min();
    if !(min_eig > 0.0) {
        return Err(RbdError::Validation(format!(
            "link `{}` inertia is not positive definite",
            l.name
        )));
    }
    if !l.com.iter().all(|c| c.is_finite()) {
        return Err(RbdError::Validation(format!(
            "link `{}` has non-finite center of mass",
            l.name
        )));
    }
    Ok(())
}
