//! The two-link, eight-cable tensegrity hopper.
//!
//! Body 0 is the frame link: a cross with four cable attachments. Body 1 is the
//! leg link: a rod whose two endpoints are the other cable nodes. Every frame
//! attachment is cabled to both leg endpoints, giving eight cables.
//!
//! Node order, used by observations and trajectory exports: frame attachments
//! 0–3, then leg endpoints (bottom, top) as nodes 4–5.

use std::sync::Arc;

use nalgebra::{Matrix3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    AttachmentRef, CableSpec, ContactParams, RigidBodySpec, RigidBodyState, Vec3, WorldSpec,
    WorldState,
};
use crate::error::{Error, Result};

pub const NUM_FRAME_ATTACHMENTS: usize = 4;
pub const NUM_LEG_ENDPOINTS: usize = 2;
pub const NUM_NODES: usize = NUM_FRAME_ATTACHMENTS + NUM_LEG_ENDPOINTS;
pub const NUM_CABLES: usize = NUM_FRAME_ATTACHMENTS * NUM_LEG_ENDPOINTS;
pub const OBS_DIM: usize = NUM_CABLES + NUM_NODES * 3 * 2;
pub const ACT_DIM: usize = NUM_CABLES;

pub const FRAME_BODY: usize = 0;
pub const LEG_BODY: usize = 1;

/// Physical and numerical parameters of the hopper. None of these values are
/// published for the original robot; all are configurable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HopperParams {
    pub frame_mass: f64,
    pub leg_mass: f64,
    /// Frame attachment points relative to the frame's geometric center (m).
    pub frame_attachments: [[f64; 3]; NUM_FRAME_ATTACHMENTS],
    /// Leg endpoints (bottom, top) relative to the leg's center of mass (m).
    pub leg_endpoints: [[f64; 3]; NUM_LEG_ENDPOINTS],
    /// Frame center of mass relative to its geometric center (m).
    pub frame_com_offset: [f64; 3],
    /// Cross-section radius used for link inertia (m).
    pub link_radius: f64,
    pub cable_stiffness: f64,
    pub cable_damping: f64,
    pub cable_rest_length: f64,
    pub rest_length_bounds: [f64; 2],
    pub actuation_rate_limit: f64,
    pub ground_stiffness: f64,
    pub ground_damping: f64,
    pub friction_coefficient: f64,
    pub friction_regularization_velocity: f64,
    pub gravity: [f64; 3],
    /// Physics substeps per control step.
    pub substeps: usize,
}

impl Default for HopperParams {
    fn default() -> Self {
        Self {
            frame_mass: 1.0,
            leg_mass: 0.1,
            frame_attachments: [
                [0.3, 0.0, 0.0],
                [-0.3, 0.0, 0.0],
                [0.0, 0.3, 0.0],
                [0.0, -0.3, 0.0],
            ],
            leg_endpoints: [[0.0, 0.0, -0.4], [0.0, 0.0, 0.4]],
            frame_com_offset: [0.01, 0.005, 0.0],
            link_radius: 0.01,
            cable_stiffness: 500.0,
            cable_damping: 5.0,
            cable_rest_length: 0.45,
            rest_length_bounds: [0.05, 2.0],
            actuation_rate_limit: 1.0,
            ground_stiffness: 2e4,
            ground_damping: 500.0,
            friction_coefficient: 0.8,
            friction_regularization_velocity: 0.1,
            gravity: [0.0, 0.0, -9.81],
            substeps: 10,
        }
    }
}

/// Resolved geometry: body-frame attachment offsets (about each center of mass),
/// cable routing and mass properties.
#[derive(Clone, Debug, PartialEq)]
pub struct HopperGeometry {
    pub frame_attachment_offsets: [Vec3; NUM_FRAME_ATTACHMENTS],
    pub leg_endpoints: [Vec3; NUM_LEG_ENDPOINTS],
    /// (frame attachment, leg endpoint) per cable.
    pub cable_routing: [(usize, usize); NUM_CABLES],
    pub frame_mass: f64,
    pub leg_mass: f64,
    pub cable_template: CableSpec,
    /// Unit normal of the frame plane in the frame body frame.
    pub frame_normal: Vec3,
}

/// The fixed-order 44-vector `[cable lengths, node positions, node velocities]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    values: [f64; OBS_DIM],
}

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn cable_lengths(&self) -> &[f64] {
        &self.values[..NUM_CABLES]
    }

    pub fn node_positions(&self) -> &[f64] {
        &self.values[NUM_CABLES..NUM_CABLES + 3 * NUM_NODES]
    }

    pub fn node_velocities(&self) -> &[f64] {
        &self.values[NUM_CABLES + 3 * NUM_NODES..]
    }
}

#[derive(Clone, Debug)]
pub struct Hopper {
    params: HopperParams,
    geometry: HopperGeometry,
    spec: Arc<WorldSpec>,
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

/// Inertia about the origin of a thin rod from `a` to `b` with the given radius.
fn rod_inertia(mass: f64, a: Vec3, b: Vec3, radius: f64) -> Matrix3<f64> {
    let axis = b - a;
    let length = axis.norm();
    let u = axis / length;
    let mid = (a + b) * 0.5;
    let uu = u * u.transpose();
    let about_center = (Matrix3::identity() - uu) * (mass * (length * length / 12.0 + radius * radius / 4.0))
        + uu * (mass * radius * radius / 2.0);
    // parallel axis shift from the rod center to the origin
    about_center + (Matrix3::identity() * mid.norm_squared() - mid * mid.transpose()) * mass
}

impl Hopper {
    pub fn build(params: HopperParams) -> Result<Self> {
        let p = &params;
        if !(p.frame_mass > 0.0 && p.leg_mass > 0.0) {
            return Err(Error::config("link masses must be positive"));
        }
        if p.leg_mass >= p.frame_mass {
            return Err(Error::config(format!(
                "leg mass ({}) must be smaller than frame mass ({})",
                p.leg_mass, p.frame_mass
            )));
        }
        if !(p.link_radius > 0.0) {
            return Err(Error::config("link radius must be positive"));
        }
        if p.substeps == 0 {
            return Err(Error::config("substeps must be >= 1"));
        }

        let com = vec3(p.frame_com_offset);
        let frame_offsets = p.frame_attachments.map(|a| vec3(a) - com);
        let leg_endpoints = p.leg_endpoints.map(vec3);
        let leg_length = (leg_endpoints[1] - leg_endpoints[0]).norm();
        if !(leg_length > 0.0) {
            return Err(Error::config("leg endpoints must be distinct"));
        }

        let normal = (frame_offsets[0] - frame_offsets[1]).cross(&(frame_offsets[2] - frame_offsets[3]));
        if !(normal.norm() > 1e-9) {
            return Err(Error::config("frame attachments must span a plane"));
        }
        let frame_normal = normal.normalize();

        // Frame inertia about its center of mass: four equal arms from the geometric
        // center to each attachment.
        let center = -com;
        let arm_mass = p.frame_mass / NUM_FRAME_ATTACHMENTS as f64;
        let frame_inertia = frame_offsets
            .iter()
            .map(|a| rod_inertia(arm_mass, center, *a, p.link_radius))
            .fold(Matrix3::zeros(), |acc, i| acc + i);
        let leg_inertia = rod_inertia(p.leg_mass, leg_endpoints[0], leg_endpoints[1], p.link_radius);

        let frame = RigidBodySpec::new(p.frame_mass, frame_inertia, frame_offsets.to_vec())?;
        let leg = RigidBodySpec::new(p.leg_mass, leg_inertia, leg_endpoints.to_vec())?;

        let cable_template = CableSpec {
            endpoint_a: AttachmentRef::new(FRAME_BODY, 0),
            endpoint_b: AttachmentRef::new(LEG_BODY, 0),
            stiffness: p.cable_stiffness,
            damping: p.cable_damping,
            rest_length_init: p.cable_rest_length,
            rest_length_bounds: p.rest_length_bounds,
            actuation_rate_limit: p.actuation_rate_limit,
        };
        let mut cable_routing = [(0, 0); NUM_CABLES];
        for (i, route) in cable_routing.iter_mut().enumerate() {
            *route = (i / NUM_LEG_ENDPOINTS, i % NUM_LEG_ENDPOINTS);
        }
        let cables = cable_routing
            .iter()
            .map(|&(f, l)| CableSpec {
                endpoint_a: AttachmentRef::new(FRAME_BODY, f),
                endpoint_b: AttachmentRef::new(LEG_BODY, l),
                ..cable_template.clone()
            })
            .collect();

        let contact = ContactParams {
            ground_stiffness: p.ground_stiffness,
            ground_damping: p.ground_damping,
            friction_coefficient: p.friction_coefficient,
            friction_regularization_velocity: p.friction_regularization_velocity,
        };
        let spec = WorldSpec::new(vec![frame, leg], cables, Some(contact), vec3(p.gravity))?;

        let geometry = HopperGeometry {
            frame_attachment_offsets: frame_offsets,
            leg_endpoints,
            cable_routing,
            frame_mass: p.frame_mass,
            leg_mass: p.leg_mass,
            cable_template,
            frame_normal,
        };
        debug_assert_eq!(NUM_NODES * 3 * 2 + NUM_CABLES, OBS_DIM);
        Ok(Self {
            params,
            geometry,
            spec: Arc::new(spec),
        })
    }

    pub fn params(&self) -> &HopperParams {
        &self.params
    }

    pub fn geometry(&self) -> &HopperGeometry {
        &self.geometry
    }

    pub fn world_spec(&self) -> &Arc<WorldSpec> {
        &self.spec
    }

    /// Nominal standing pose: leg vertical with its center at the origin, frame
    /// horizontal with its geometric center at the leg midpoint, everything at rest.
    pub fn nominal_world(&self) -> WorldState {
        let leg_mid = (self.geometry.leg_endpoints[0] + self.geometry.leg_endpoints[1]) * 0.5;
        let frame_position = leg_mid + vec3(self.params.frame_com_offset);
        let bodies = vec![
            RigidBodyState::at_rest(frame_position, UnitQuaternion::identity()),
            RigidBodyState::at_rest(Vec3::zeros(), UnitQuaternion::identity()),
        ];
        WorldState::new(Arc::clone(&self.spec), bodies).expect("hopper body list matches its spec")
    }

    /// The nominal pose translated so that its lowest node sits `height` above the ground.
    pub fn world_at_height(&self, height: f64) -> Result<WorldState> {
        if !(height >= 0.0 && height.is_finite()) {
            return Err(Error::config(format!("drop height must be >= 0, got {height}")));
        }
        let mut world = self.nominal_world();
        let lowest = self
            .node_kinematics(&world)
            .iter()
            .map(|(p, _)| p.z)
            .fold(f64::INFINITY, f64::min);
        let shift = Vec3::new(0.0, 0.0, height - lowest);
        for body in world.bodies_mut() {
            body.position += shift;
        }
        world.refresh_cables();
        Ok(world)
    }

    /// Resets `world` to the nominal pose dropped from `height`, at rest with initial
    /// rest lengths and zero time.
    pub fn set_initial_drop(&self, world: &mut WorldState, height: f64) -> Result<()> {
        *world = self.world_at_height(height)?;
        Ok(())
    }

    /// World position and velocity of each node in observation order.
    pub fn node_kinematics(&self, world: &WorldState) -> [(Vec3, Vec3); NUM_NODES] {
        std::array::from_fn(|node| {
            let at = if node < NUM_FRAME_ATTACHMENTS {
                AttachmentRef::new(FRAME_BODY, node)
            } else {
                AttachmentRef::new(LEG_BODY, node - NUM_FRAME_ATTACHMENTS)
            };
            world.attachment(at)
        })
    }

    pub fn observation(&self, world: &WorldState) -> Observation {
        let mut values = [0.0; OBS_DIM];
        for (slot, cable) in values.iter_mut().zip(world.cables()) {
            *slot = cable.length();
        }
        let nodes = self.node_kinematics(world);
        let (positions, velocities) = values[NUM_CABLES..].split_at_mut(3 * NUM_NODES);
        for (i, (p, v)) in nodes.iter().enumerate() {
            positions[3 * i..3 * i + 3].copy_from_slice(p.as_slice());
            velocities[3 * i..3 * i + 3].copy_from_slice(v.as_slice());
        }
        Observation { values }
    }

    /// Acute angle (degrees) between the leg axis and the world vertical.
    pub fn leg_tilt(&self, world: &WorldState) -> f64 {
        let leg = &world.bodies()[LEG_BODY];
        let axis = leg.orientation * (self.geometry.leg_endpoints[1] - self.geometry.leg_endpoints[0]);
        angle_to_vertical(axis)
    }

    /// Acute angle (degrees) between the frame plane normal and the world vertical.
    pub fn frame_tilt(&self, world: &WorldState) -> f64 {
        let frame = &world.bodies()[FRAME_BODY];
        angle_to_vertical(frame.orientation * self.geometry.frame_normal)
    }
}

/// Line-to-vertical angle in degrees, folded into [0, 90].
fn angle_to_vertical(axis: Vec3) -> f64 {
    axis.xy().norm().atan2(axis.z.abs()).to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn default_hopper() -> Hopper {
        Hopper::build(HopperParams::default()).unwrap()
    }

    fn rotate_all(world: &mut WorldState, rotation: UnitQuaternion<f64>) {
        for body in world.bodies_mut() {
            body.position = rotation * body.position;
            body.orientation = rotation * body.orientation;
        }
        world.refresh_cables();
    }

    #[test]
    fn dimensions() {
        assert_eq!(OBS_DIM, 44);
        assert_eq!(ACT_DIM, 8);
        let hopper = default_hopper();
        let obs = hopper.observation(&hopper.nominal_world());
        assert_eq!(obs.as_slice().len(), 44);
    }

    #[test]
    fn routing_covers_each_pair_once() {
        let hopper = default_hopper();
        let routes: HashSet<_> = hopper.geometry().cable_routing.iter().copied().collect();
        assert_eq!(routes.len(), 8);
        assert_eq!(hopper.world_spec().cables().len(), 8);
    }

    #[test]
    fn nominal_cable_lengths_are_equal() {
        let hopper = default_hopper();
        let world = hopper.nominal_world();
        let obs = hopper.observation(&world);
        for l in obs.cable_lengths() {
            assert!((l - 0.5).abs() < 1e-12, "{l}");
        }
    }

    #[test]
    fn cable_lengths_match_node_distances() {
        let hopper = default_hopper();
        let mut world = hopper.world_at_height(0.3).unwrap();
        rotate_all(&mut world, UnitQuaternion::from_euler_angles(0.2, -0.1, 0.7));
        world.bodies_mut()[LEG_BODY].orientation =
            UnitQuaternion::from_euler_angles(0.05, 0.1, 0.0) * world.bodies()[LEG_BODY].orientation;
        world.refresh_cables();
        let obs = hopper.observation(&world);
        let nodes = hopper.node_kinematics(&world);
        for (i, &(f, l)) in hopper.geometry().cable_routing.iter().enumerate() {
            let d = (nodes[f].0 - nodes[NUM_FRAME_ATTACHMENTS + l].0).norm();
            assert!((obs.cable_lengths()[i] - d).abs() < 1e-12);
        }
    }

    #[test]
    fn observation_at_rest_and_translated() {
        let hopper = default_hopper();
        let base = hopper.world_at_height(0.5).unwrap();
        let obs = hopper.observation(&base);
        assert!(obs.node_velocities().iter().all(|&v| v == 0.0));

        let mut lifted = base.clone();
        for body in lifted.bodies_mut() {
            body.position.z += 1.0;
        }
        lifted.refresh_cables();
        let up = hopper.observation(&lifted);
        for (i, (a, b)) in obs.node_positions().iter().zip(up.node_positions()).enumerate() {
            let expected = if i % 3 == 2 { 1.0 } else { 0.0 };
            assert!((b - a - expected).abs() < 1e-12);
        }
        for (a, b) in obs.cable_lengths().iter().zip(up.cable_lengths()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(obs.node_velocities(), up.node_velocities());
    }

    #[test]
    fn tilt_metrics() {
        let hopper = default_hopper();
        let world = hopper.nominal_world();
        assert_eq!(hopper.leg_tilt(&world), 0.0);
        assert_eq!(hopper.frame_tilt(&world), 0.0);

        let mut leaning = world.clone();
        leaning.bodies_mut()[LEG_BODY].orientation =
            UnitQuaternion::from_axis_angle(&Vec3::y_axis(), 20f64.to_radians());
        assert!((hopper.leg_tilt(&leaning) - 20.0).abs() < 1e-9);
        assert_eq!(hopper.frame_tilt(&leaning), 0.0);

        let mut tipped = world.clone();
        rotate_all(&mut tipped, UnitQuaternion::from_axis_angle(&Vec3::x_axis(), 25f64.to_radians()));
        assert!((hopper.leg_tilt(&tipped) - 25.0).abs() < 1e-9);
        assert!((hopper.frame_tilt(&tipped) - 25.0).abs() < 1e-9);

        // Upside down folds back to zero.
        let mut flipped = world;
        rotate_all(&mut flipped, UnitQuaternion::from_axis_angle(&Vec3::x_axis(), std::f64::consts::PI));
        assert!(hopper.leg_tilt(&flipped) < 1e-9);
    }

    #[test]
    fn tilt_is_yaw_invariant() {
        let hopper = default_hopper();
        let mut world = hopper.nominal_world();
        rotate_all(&mut world, UnitQuaternion::from_euler_angles(0.3, 0.1, 0.0));
        let (leg, frame) = (hopper.leg_tilt(&world), hopper.frame_tilt(&world));
        for yaw in [0.4, 1.7, -2.9] {
            let mut spun = world.clone();
            rotate_all(&mut spun, UnitQuaternion::from_axis_angle(&Vec3::z_axis(), yaw));
            assert!((hopper.leg_tilt(&spun) - leg).abs() < 1e-9);
            assert!((hopper.frame_tilt(&spun) - frame).abs() < 1e-9);
        }
    }

    #[test]
    fn initial_drop_heights() {
        let hopper = default_hopper();
        for height in [1.0, 0.1, 0.0] {
            let world = hopper.world_at_height(height).unwrap();
            let lowest = hopper
                .node_kinematics(&world)
                .iter()
                .map(|(p, _)| p.z)
                .fold(f64::INFINITY, f64::min);
            assert!((lowest - height).abs() < 1e-12);
        }
        let mut world = hopper.nominal_world();
        hopper.set_initial_drop(&mut world, 0.7).unwrap();
        let once = world.clone();
        hopper.set_initial_drop(&mut world, 0.7).unwrap();
        assert_eq!(world, once);
        assert!(hopper.set_initial_drop(&mut world, -0.1).is_err());
    }

    #[test]
    fn rejects_heavy_leg() {
        let params = HopperParams {
            leg_mass: 1.0,
            ..Default::default()
        };
        assert!(matches!(Hopper::build(params), Err(Error::Config(_))));
    }
}
