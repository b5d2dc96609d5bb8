//! Parser for the strict URDF subset used by the robot fixtures.
//!
//! Accepted elements: `robot`, `gravity`, `link`, `inertial`, `origin`,
//! `mass`, `inertia`, `joint`, `parent`, `child`, `axis`, `limit` and
//! `frame`. Anything else is rejected with its line number.

use nalgebra::{Matrix3, Vector3};
use roxmltree::{Document, Node};

use super::model::{FrameSpec, JointSpec, JointType, LinkSpec, RobotModel};
use super::spatial::Transform;
use super::RbdError;

const DEFAULT_GRAVITY: [f64; 3] = [0.0, 0.0, -9.81];

pub fn parse_model(document: &str) -> Result<RobotModel, RbdError> {
    let doc = Document::parse(document).map_err(|e| RbdError::Parse {
        line: e.pos().row,
        message: e.to_string(),
    })?;
    let root = doc.root_element();
    if root.tag_name().name() != "robot" {
        return Err(parse_err(&doc, root, "root element must be <robot>"));
    }
    let name = root.attribute("name").unwrap_or("robot").to_string();

    let mut links = Vec::new();
    let mut joints = Vec::new();
    let mut frames = Vec::new();
    let mut gravity = Vector3::from(DEFAULT_GRAVITY);
    for node in root.children().filter(Node::is_element) {
        match node.tag_name().name() {
            "link" => links.push(parse_link(&doc, node)?),
            "joint" => joints.push(parse_joint(&doc, node)?),
            "frame" => frames.push(parse_frame(&doc, node)?),
            "gravity" => gravity = vec3_attr(&doc, node, "xyz")?.unwrap_or(gravity),
            other => {
                return Err(parse_err(
                    &doc,
                    node,
                    &format!("unsupported element <{other}>"),
                ))
            }
        }
    }
    RobotModel::from_specs(name, links, joints, frames, gravity)
}

fn parse_err(doc: &Document, node: Node, message: &str) -> RbdError {
    RbdError::Parse {
        line: doc.text_pos_at(node.range().start).row,
        message: message.to_string(),
    }
}

fn required<'a>(doc: &Document, node: Node<'a, 'a>, attr: &str) -> Result<&'a str, RbdError> {
    node.attribute(attr).ok_or_else(|| {
        parse_err(
            doc,
            node,
            &format!("<{}> is missing attribute `{attr}`", node.tag_name().name()),
        )
    })
}

fn number(doc: &Document, node: Node, attr: &str, text: &str) -> Result<f64, RbdError> {
    let v: f64 = text.trim().parse().map_err(|_| {
        parse_err(
            doc,
            node,
            &format!("attribute `{attr}` is not a number: `{text}`"),
        )
    })?;
    if !v.is_finite() {
        return Err(parse_err(
            doc,
            node,
            &format!("attribute `{attr}` is not finite"),
        ));
    }
    Ok(v)
}

fn number_attr(doc: &Document, node: Node, attr: &str) -> Result<f64, RbdError> {
    let text = required(doc, node, attr)?;
    number(doc, node, attr, text)
}

fn vec3_attr(doc: &Document, node: Node, attr: &str) -> Result<Option<Vector3<f64>>, RbdError> {
    let Some(text) = node.attribute(attr) else {
        return Ok(None);
    };
    let parts: Vec<&str> = text.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(parse_err(
            doc,
            node,
            &format!("attribute `{attr}` needs three components"),
        ));
    }
    let mut v = Vector3::zeros();
    for (i, p) in parts.iter().enumerate() {
        v[i] = number(doc, node, attr, p)?;
    }
    Ok(Some(v))
}

fn parse_origin(doc: &Document, node: Node) -> Result<Transform, RbdError> {
    check_no_children(doc, node)?;
    let xyz = vec3_attr(doc, node, "xyz")?.unwrap_or_else(Vector3::zeros);
    let rpy = vec3_attr(doc, node, "rpy")?.unwrap_or_else(Vector3::zeros);
    Ok(Transform::from_xyz_rpy(xyz, rpy))
}

fn check_no_children(doc: &Document, node: Node) -> Result<(), RbdError> {
    match node.children().find(Node::is_element) {
        Some(c) => Err(parse_err(
            doc,
            c,
            &format!("unsupported element <{}>", c.tag_name().name()),
        )),
        None => Ok(()),
    }
}

fn parse_link(doc: &Document, node: Node) -> Result<LinkSpec, RbdError> {
    let name = required(doc, node, "name")?.to_string();
    let mut inertial = None;
    for child in node.children().filter(Node::is_element) {
        match child.tag_name().name() {
            "inertial" if inertial.is_none() => inertial = Some(parse_inertial(doc, child)?),
            "inertial" => return Err(parse_err(doc, child, "duplicate <inertial>")),
            other => {
                return Err(parse_err(
                    doc,
                    child,
                    &format!("unsupported element <{other}>"),
                ))
            }
        }
    }
    let (mass, com, inertia) = inertial.ok_or_else(|| {
        RbdError::Validation(format!(
            "link `{name}` has no <inertial> (mass must be positive)"
        ))
    })?;
    Ok(LinkSpec {
        name,
        mass,
        com,
        inertia,
    })
}

fn parse_inertial(
    doc: &Document,
    node: Node,
) -> Result<(f64, Vector3<f64>, Matrix3<f64>), RbdError> {
    let mut origin = Transform::identity();
    let mut mass = None;
    let mut inertia = None;
    for child in node.children().filter(Node::is_element) {
        match child.tag_name().name() {
            "origin" => origin = parse_origin(doc, child)?,
            "mass" => {
                check_no_children(doc, child)?;
                mass = Some(number_attr(doc, child, "value")?)
            }
            "inertia" => {
                check_no_children(doc, child)?;
                let g = |a| number_attr(doc, child, a);
                let (ixx, ixy, ixz, iyy, iyz, izz) = (
                    g("ixx")?,
                    g("ixy")?,
                    g("ixz")?,
                    g("iyy")?,
                    g("iyz")?,
                    g("izz")?,
                );
                inertia = Some(Matrix3::new(ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz));
            }
            other => {
                return Err(parse_err(
                    doc,
                    child,
                    &format!("unsupported element <{other}>"),
                ))
            }
        }
    }
    let mass = mass.ok_or_else(|| parse_err(doc, node, "<inertial> is missing <mass>"))?;
    let inertia = inertia.ok_or_else(|| parse_err(doc, node, "<inertial> is missing <inertia>"))?;
    // Inertia is given in the inertial frame; rotate it into link axes.
    let r = origin.rotation;
    Ok((mass, origin.translation, r * inertia * r.transpose()))
}

fn parse_joint(doc: &Document, node: Node) -> Result<JointSpec, RbdError> {
    let name = required(doc, node, "name")?.to_string();
    let kind = match required(doc, node, "type")? {
        "revolute" | "continuous" => JointType::Revolute,
        "fixed" => JointType::Fixed,
        "floating" => JointType::Floating,
        other => {
            return Err(parse_err(
                doc,
                node,
                &format!("unsupported joint type `{other}`"),
            ))
        }
    };
    let mut parent = None;
    let mut child_link = None;
    let mut origin = Transform::identity();
    let mut axis = Vector3::x();
    let mut limits = None;
    for child in node.children().filter(Node::is_element) {
        match child.tag_name().name() {
            "parent" => {
                check_no_children(doc, child)?;
                parent = Some(required(doc, child, "link")?.to_string())
            }
            "child" => {
                check_no_children(doc, child)?;
                child_link = Some(required(doc, child, "link")?.to_string())
            }
            "origin" => origin = parse_origin(doc, child)?,
            "axis" => {
                check_no_children(doc, child)?;
                axis = vec3_attr(doc, child, "xyz")?
                    .ok_or_else(|| parse_err(doc, child, "<axis> is missing attribute `xyz`"))?
            }
            "limit" => {
                check_no_children(doc, child)?;
                let lower = number_attr(doc, child, "lower")?;
                let upper = number_attr(doc, child, "upper")?;
                if lower > upper {
                    return Err(parse_err(doc, child, "joint limit lower > upper"));
                }
                limits = Some((lower, upper));
            }
            other => {
                return Err(parse_err(
                    doc,
                    child,
                    &format!("unsupported element <{other}>"),
                ))
            }
        }
    }
    Ok(JointSpec {
        name,
        kind,
        parent: parent.ok_or_else(|| parse_err(doc, node, "<joint> is missing <parent>"))?,
        child: child_link.ok_or_else(|| parse_err(doc, node, "<joint> is missing <child>"))?,
        origin,
        axis,
        limits,
    })
}

fn parse_frame(doc: &Document, node: Node) -> Result<FrameSpec, RbdError> {
    let name = required(doc, node, "name")?.to_string();
    let link = required(doc, node, "link")?.to_string();
    let mut transform = Transform::identity();
    for child in node.children().filter(Node::is_element) {
        match child.tag_name().name() {
            "origin" => transform = parse_origin(doc, child)?,
            other => {
                return Err(parse_err(
                    doc,
                    child,
                    &format!("unsupported element <{other}>"),
                ))
            }
        }
    }
    Ok(FrameSpec {
        name,
        link,
        transform,
    })
}
