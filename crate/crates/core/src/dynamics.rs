//! Fixed-step rigid-body dynamics for cable-connected bodies.
//!
//! Each body is a rigid link with a set of body-frame attachment points. Bodies
//! interact only through tension-only spring-damper cables strung between
//! attachments, plus gravity and a compliant ground plane at `z = 0` that acts
//! on every attachment point.
//!
//! Integration is semi-implicit Euler:
//!
//! ```text
//! v  = v₀ + (F / m) Δt
//! ω_b = ω_b₀ + I⁻¹ (τ_b − ω_b₀ × I ω_b₀) Δt       (body frame)
//! x  = x₀ + v Δt
//! q  = exp(ω Δt) ⊗ q₀                             (then renormalized)
//! ```
//!
//! Positions use the *updated* velocities, which keeps the scheme symplectic for
//! the conservative part of the system.

use std::sync::Arc;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Cables shorter than this are treated as degenerate (no force direction).
const DEGENERATE_CABLE_LENGTH: f64 = 1e-12;

/// Pose and twist of one rigid body. Angular velocity is expressed in the world frame.
#[derive(Clone, Debug, PartialEq)]
pub struct RigidBodyState {
    pub position: Vec3,
    pub orientation: UnitQuaternion<f64>,
    pub linear_velocity: Vec3,
    pub angular_velocity: Vec3,
}

impl RigidBodyState {
    pub fn at_rest(position: Vec3, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation,
            linear_velocity: Vec3::zeros(),
            angular_velocity: Vec3::zeros(),
        }
    }

    fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
            && self.linear_velocity.iter().all(|v| v.is_finite())
            && self.angular_velocity.iter().all(|v| v.is_finite())
    }
}

/// Mass properties and attachment points of a rigid body.
///
/// The body origin is its center of mass. Attachments are fixed at construction;
/// their indices are the stable identifiers used by [`CableSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct RigidBodySpec {
    mass: f64,
    inertia: Matrix3<f64>,
    inverse_inertia: Matrix3<f64>,
    attachments: Vec<Vec3>,
}

impl RigidBodySpec {
    pub fn new(mass: f64, inertia: Matrix3<f64>, attachments: Vec<Vec3>) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::config(format!("body mass must be positive, got {mass}")));
        }
        let asymmetry = (inertia - inertia.transpose()).abs().max();
        if !inertia.iter().all(|v| v.is_finite()) || asymmetry > 1e-12 * inertia.abs().max() {
            return Err(Error::config("inertia tensor must be finite and symmetric"));
        }
        let min_eigen = inertia.symmetric_eigenvalues().min();
        if min_eigen <= 0.0 {
            return Err(Error::config(format!(
                "inertia tensor must be positive definite (smallest eigenvalue {min_eigen})"
            )));
        }
        let inverse_inertia = inertia
            .try_inverse()
            .ok_or_else(|| Error::config("inertia tensor is singular"))?;
        if attachments.iter().any(|a| !a.iter().all(|v| v.is_finite())) {
            return Err(Error::config("attachment offsets must be finite"));
        }
        Ok(Self {
            mass,
            inertia,
            inverse_inertia,
            attachments,
        })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn inertia(&self) -> &Matrix3<f64> {
        &self.inertia
    }

    pub fn attachments(&self) -> &[Vec3] {
        &self.attachments
    }
}

/// One end of a cable: an attachment point on a specific body.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AttachmentRef {
    pub body: usize,
    pub attachment: usize,
}

impl AttachmentRef {
    pub fn new(body: usize, attachment: usize) -> Self {
        Self { body, attachment }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CableSpec {
    pub endpoint_a: AttachmentRef,
    pub endpoint_b: AttachmentRef,
    /// N/m
    pub stiffness: f64,
    /// N·s/m
    pub damping: f64,
    pub rest_length_init: f64,
    /// `[min, max]` in meters.
    pub rest_length_bounds: [f64; 2],
    /// Maximum rest-length change speed in m/s.
    pub actuation_rate_limit: f64,
}

impl CableSpec {
    pub fn validate(&self) -> Result<()> {
        if self.endpoint_a == self.endpoint_b {
            return Err(Error::config("cable endpoints must differ"));
        }
        if !(self.stiffness >= 0.0 && self.stiffness.is_finite()) {
            return Err(Error::config("cable stiffness must be >= 0"));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return Err(Error::config("cable damping must be >= 0"));
        }
        let [min, max] = self.rest_length_bounds;
        if !(min > 0.0 && min <= max && max.is_finite()) {
            return Err(Error::config(format!(
                "rest length bounds must satisfy 0 < min <= max, got [{min}, {max}]"
            )));
        }
        if !(self.rest_length_init >= min && self.rest_length_init <= max) {
            return Err(Error::config(format!(
                "initial rest length {} outside bounds [{min}, {max}]",
                self.rest_length_init
            )));
        }
        if !(self.actuation_rate_limit > 0.0 && self.actuation_rate_limit.is_finite()) {
            return Err(Error::config("actuation rate limit must be > 0"));
        }
        Ok(())
    }

    pub fn clamp_rest_length(&self, value: f64) -> f64 {
        value.clamp(self.rest_length_bounds[0], self.rest_length_bounds[1])
    }
}

/// Mutable per-cable state. Rest lengths are clamped to the `CableSpec` bounds on every write.
#[derive(Clone, Debug, PartialEq)]
pub struct CableState {
    rest_length: f64,
    rest_length_target: f64,
    length: f64,
    length_rate: f64,
}

impl CableState {
    fn initial(spec: &CableSpec) -> Self {
        Self {
            rest_length: spec.rest_length_init,
            rest_length_target: spec.rest_length_init,
            length: 0.0,
            length_rate: 0.0,
        }
    }

    pub fn rest_length(&self) -> f64 {
        self.rest_length
    }

    pub fn rest_length_target(&self) -> f64 {
        self.rest_length_target
    }

    /// Current geometric length, refreshed from body kinematics by the stepper.
    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn length_rate(&self) -> f64 {
        self.length_rate
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactParams {
    pub ground_stiffness: f64,
    pub ground_damping: f64,
    pub friction_coefficient: f64,
    pub friction_regularization_velocity: f64,
}

impl ContactParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.ground_stiffness,
            self.ground_damping,
            self.friction_coefficient,
        ];
        if fields.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::config("contact parameters must be finite and >= 0"));
        }
        if !(self.friction_regularization_velocity > 0.0
            && self.friction_regularization_velocity.is_finite())
        {
            return Err(Error::config("friction regularization velocity must be > 0"));
        }
        Ok(())
    }
}

/// Immutable description of a world: bodies, cables, ground contact and gravity.
///
/// `contact = None` disables the ground entirely.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldSpec {
    bodies: Vec<RigidBodySpec>,
    cables: Vec<CableSpec>,
    contact: Option<ContactParams>,
    gravity: Vec3,
}

impl WorldSpec {
    pub fn new(
        bodies: Vec<RigidBodySpec>,
        cables: Vec<CableSpec>,
        contact: Option<ContactParams>,
        gravity: Vec3,
    ) -> Result<Self> {
        for (i, cable) in cables.iter().enumerate() {
            cable.validate()?;
            for end in [cable.endpoint_a, cable.endpoint_b] {
                let valid = bodies
                    .get(end.body)
                    .is_some_and(|b| end.attachment < b.attachments.len());
                if !valid {
                    return Err(Error::config(format!(
                        "cable {i} references missing attachment {end:?}"
                    )));
                }
            }
        }
        if let Some(contact) = &contact {
            contact.validate()?;
        }
        if !gravity.iter().all(|v| v.is_finite()) {
            return Err(Error::config("gravity must be finite"));
        }
        Ok(Self {
            bodies,
            cables,
            contact,
            gravity,
        })
    }

    pub fn bodies(&self) -> &[RigidBodySpec] {
        &self.bodies
    }

    pub fn cables(&self) -> &[CableSpec] {
        &self.cables
    }

    pub fn contact(&self) -> Option<&ContactParams> {
        self.contact.as_ref()
    }

    pub fn gravity(&self) -> Vec3 {
        self.gravity
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Wrench {
    pub force: Vec3,
    pub torque: Vec3,
}

/// Full simulation state. The body and cable lists always match the `WorldSpec` lists.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    spec: Arc<WorldSpec>,
    bodies: Vec<RigidBodyState>,
    cables: Vec<CableState>,
    time: f64,
    degenerate_cable_events: u64,
}

impl WorldState {
    pub fn new(spec: Arc<WorldSpec>, bodies: Vec<RigidBodyState>) -> Result<Self> {
        if bodies.len() != spec.bodies.len() {
            return Err(Error::Dimension {
                what: "body states",
                expected: spec.bodies.len(),
                actual: bodies.len(),
            });
        }
        if let Some(bad) = bodies.iter().position(|b| !b.is_finite()) {
            return Err(Error::config(format!("body {bad} has a non-finite state")));
        }
        let cables = spec.cables.iter().map(CableState::initial).collect();
        let mut world = Self {
            spec,
            bodies,
            cables,
            time: 0.0,
            degenerate_cable_events: 0,
        };
        world.refresh_cables();
        Ok(world)
    }

    pub fn spec(&self) -> &Arc<WorldSpec> {
        &self.spec
    }

    pub fn bodies(&self) -> &[RigidBodyState] {
        &self.bodies
    }

    /// Direct pose access for resets and test pose injection. Call
    /// [`WorldState::refresh_cables`] afterwards if cable lengths are read.
    pub fn bodies_mut(&mut self) -> &mut [RigidBodyState] {
        &mut self.bodies
    }

    pub fn cables(&self) -> &[CableState] {
        &self.cables
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn degenerate_cable_events(&self) -> u64 {
        self.degenerate_cable_events
    }

    pub fn set_rest_length_target(&mut self, cable: usize, target: f64) {
        self.cables[cable].rest_length_target = self.spec.cables[cable].clamp_rest_length(target);
    }

    /// Restores every cable to its initial rest length, zeroing time.
    pub fn reset_actuation(&mut self) {
        for (state, spec) in self.cables.iter_mut().zip(&self.spec.cables) {
            state.rest_length = spec.rest_length_init;
            state.rest_length_target = spec.rest_length_init;
        }
        self.time = 0.0;
    }

    /// World position and velocity of an attachment.
    pub fn attachment(&self, at: AttachmentRef) -> (Vec3, Vec3) {
        attachment_kinematics(
            &self.bodies[at.body],
            &self.spec.bodies[at.body],
            at.attachment,
        )
    }

    /// Recomputes cable lengths and length rates from the current body kinematics.
    /// Returns the unit direction from endpoint a to endpoint b, or zero when degenerate.
    pub fn refresh_cables(&mut self) -> Vec<Vec3> {
        let spec = Arc::clone(&self.spec);
        spec.cables
            .iter()
            .zip(self.cables.iter_mut())
            .map(|(cable, state)| {
                let (pa, va) = attachment_kinematics(
                    &self.bodies[cable.endpoint_a.body],
                    &spec.bodies[cable.endpoint_a.body],
                    cable.endpoint_a.attachment,
                );
                let (pb, vb) = attachment_kinematics(
                    &self.bodies[cable.endpoint_b.body],
                    &spec.bodies[cable.endpoint_b.body],
                    cable.endpoint_b.attachment,
                );
                let delta = pb - pa;
                let length = delta.norm();
                state.length = length;
                if length < DEGENERATE_CABLE_LENGTH {
                    state.length_rate = 0.0;
                    Vec3::zeros()
                } else {
                    let dir = delta / length;
                    state.length_rate = dir.dot(&(vb - va));
                    dir
                }
            })
            .collect()
    }

    /// Current tension of every cable, from the most recently refreshed lengths.
    pub fn tensions(&self) -> Vec<f64> {
        self.spec
            .cables
            .iter()
            .zip(&self.cables)
            .map(|(spec, state)| {
                cable_tension(
                    state.length,
                    state.length_rate,
                    state.rest_length,
                    spec.stiffness,
                    spec.damping,
                )
            })
            .collect()
    }

    pub fn linear_momentum(&self) -> Vec3 {
        self.bodies
            .iter()
            .zip(&self.spec.bodies)
            .map(|(state, spec)| state.linear_velocity * spec.mass)
            .sum()
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.bodies
            .iter()
            .zip(&self.spec.bodies)
            .map(|(state, spec)| {
                let omega_body = state.orientation.inverse_transform_vector(&state.angular_velocity);
                0.5 * spec.mass * state.linear_velocity.norm_squared()
                    + 0.5 * omega_body.dot(&(spec.inertia * omega_body))
            })
            .sum()
    }

    /// Σ ½ k max(0, l − l₀)² over all cables, from the refreshed lengths.
    pub fn elastic_energy(&self) -> f64 {
        self.spec
            .cables
            .iter()
            .zip(&self.cables)
            .map(|(spec, state)| {
                let stretch = (state.length - state.rest_length).max(0.0);
                0.5 * spec.stiffness * stretch * stretch
            })
            .sum()
    }
}

/// Tension of a tension-only linear spring-damper. Never negative; zero when slack.
pub fn cable_tension(
    length: f64,
    length_rate: f64,
    rest_length: f64,
    stiffness: f64,
    damping: f64,
) -> f64 {
    if length > rest_length {
        (stiffness * (length - rest_length) + damping * length_rate).max(0.0)
    } else {
        0.0
    }
}

/// World position and velocity of a body-frame attachment point.
///
/// Attachment indices are validated when the [`WorldSpec`] is built, so this
/// panics only on a direct call with an out-of-range index.
pub fn attachment_kinematics(
    body: &RigidBodyState,
    spec: &RigidBodySpec,
    attachment_index: usize,
) -> (Vec3, Vec3) {
    let offset = body.orientation * spec.attachments[attachment_index];
    (
        body.position + offset,
        body.linear_velocity + body.angular_velocity.cross(&offset),
    )
}

/// Penalty ground force on a point. The ground plane is `z = 0`; the normal force
/// is non-adhesive and friction is Coulomb, regularized linearly at low slip speed.
pub fn contact_force(node_position: &Vec3, node_velocity: &Vec3, params: &ContactParams) -> Vec3 {
    let z = node_position.z;
    if z >= 0.0 {
        return Vec3::zeros();
    }
    let normal = (-params.ground_stiffness * z - params.ground_damping * node_velocity.z).max(0.0);
    let slip = Vec3::new(node_velocity.x, node_velocity.y, 0.0);
    let slip_speed = slip.norm();
    let friction = if slip_speed > 0.0 {
        -slip * (params.friction_coefficient * normal
            / slip_speed.max(params.friction_regularization_velocity))
    } else {
        Vec3::zeros()
    };
    Vec3::new(friction.x, friction.y, normal)
}

/// Sums gravity, cable and contact forces on every body. Torques are about each
/// body's center of mass. Refreshes cable lengths as a side effect.
pub fn accumulate_wrenches(world: &mut WorldState) -> Vec<Wrench> {
    let directions = world.refresh_cables();
    let spec = Arc::clone(&world.spec);
    let gravity = spec.gravity;

    let mut wrenches: Vec<Wrench> = spec
        .bodies
        .iter()
        .map(|b| Wrench {
            force: gravity * b.mass,
            torque: Vec3::zeros(),
        })
        .collect();

    for ((cable, state), dir) in spec.cables.iter().zip(&world.cables).zip(&directions) {
        if state.length < DEGENERATE_CABLE_LENGTH {
            world.degenerate_cable_events += 1;
            continue;
        }
        let tension = cable_tension(
            state.length,
            state.length_rate,
            state.rest_length,
            cable.stiffness,
            cable.damping,
        );
        if tension == 0.0 {
            continue;
        }
        let pull = dir * tension;
        for (end, force) in [(cable.endpoint_a, pull), (cable.endpoint_b, -pull)] {
            let body = &world.bodies[end.body];
            let offset = body.orientation * spec.bodies[end.body].attachments[end.attachment];
            let w = &mut wrenches[end.body];
            w.force += force;
            w.torque += offset.cross(&force);
        }
    }

    if let Some(contact) = &spec.contact {
        for ((body, body_spec), w) in world.bodies.iter().zip(&spec.bodies).zip(&mut wrenches) {
            for local in &body_spec.attachments {
                let offset = body.orientation * local;
                let position = body.position + offset;
                if position.z >= 0.0 {
                    continue;
                }
                let velocity = body.linear_velocity + body.angular_velocity.cross(&offset);
                let force = contact_force(&position, &velocity, contact);
                w.force += force;
                w.torque += offset.cross(&force);
            }
        }
    }

    wrenches
}

/// Advances the world by one semi-implicit Euler step of length `dt`.
pub fn integrate(world: &mut WorldState, wrenches: &[Wrench], dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::usage(format!("time step must be positive, got {dt}")));
    }
    if wrenches.len() != world.bodies.len() {
        return Err(Error::Dimension {
            what: "wrenches",
            expected: world.bodies.len(),
            actual: wrenches.len(),
        });
    }
    let spec = Arc::clone(&world.spec);

    for ((body, body_spec), wrench) in world.bodies.iter_mut().zip(&spec.bodies).zip(wrenches) {
        body.linear_velocity += wrench.force * (dt / body_spec.mass);

        let rotation = body.orientation;
        let omega = rotation.inverse_transform_vector(&body.angular_velocity);
        let torque = rotation.inverse_transform_vector(&wrench.torque);
        let gyroscopic = omega.cross(&(body_spec.inertia * omega));
        let omega = omega + body_spec.inverse_inertia * (torque - gyroscopic) * dt;
        body.angular_velocity = rotation * omega;

        body.position += body.linear_velocity * dt;
        let increment = UnitQuaternion::from_scaled_axis(body.angular_velocity * dt);
        body.orientation = UnitQuaternion::new_normalize((increment * rotation).into_inner());
    }

    for (state, cable) in world.cables.iter_mut().zip(&spec.cables) {
        let max_change = cable.actuation_rate_limit * dt;
        let change = (state.rest_length_target - state.rest_length).clamp(-max_change, max_change);
        state.rest_length = cable.clamp_rest_length(state.rest_length + change);
    }

    world.time += dt;

    if let Some(bad) = world.bodies.iter().position(|b| !b.is_finite()) {
        return Err(Error::SimulationFault {
            time: world.time,
            reason: format!("body {bad} state became non-finite"),
        });
    }
    Ok(())
}

/// One control step: `substeps` rounds of wrench accumulation and integration
/// with `dt = control_dt / substeps`. Cable lengths reflect the final state.
pub fn step_physics(world: &mut WorldState, control_dt: f64, substeps: usize) -> Result<()> {
    if substeps == 0 {
        return Err(Error::usage("substeps must be >= 1"));
    }
    let dt = control_dt / substeps as f64;
    for _ in 0..substeps {
        let wrenches = accumulate_wrenches(world);
        integrate(world, &wrenches, dt)?;
    }
    world.refresh_cables();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    macro_rules! assert_close {
        ($a:expr, $b:expr, $tol:expr) => {{
            let (a, b): (f64, f64) = ($a, $b);
            assert!((a - b).abs() <= $tol, "{a} vs {b} (tol {})", $tol);
        }};
    }

    fn point_body(mass: f64, attachments: Vec<Vec3>) -> RigidBodySpec {
        RigidBodySpec::new(mass, Matrix3::identity() * 0.01, attachments).unwrap()
    }

    fn contact(mu: f64) -> ContactParams {
        ContactParams {
            ground_stiffness: 1e4,
            ground_damping: 0.0,
            friction_coefficient: mu,
            friction_regularization_velocity: 0.01,
        }
    }

    fn single_body_world(gravity: Vec3) -> WorldState {
        let spec = WorldSpec::new(vec![point_body(1.0, vec![])], vec![], None, gravity).unwrap();
        WorldState::new(
            Arc::new(spec),
            vec![RigidBodyState::at_rest(Vec3::new(0.0, 0.0, 10.0), UnitQuaternion::identity())],
        )
        .unwrap()
    }

    fn two_body_cable(rest: f64) -> WorldState {
        let bodies = vec![
            point_body(1.0, vec![Vec3::new(0.1, 0.0, 0.0)]),
            point_body(0.1, vec![Vec3::new(0.0, 0.0, 0.2)]),
        ];
        let cable = CableSpec {
            endpoint_a: AttachmentRef::new(0, 0),
            endpoint_b: AttachmentRef::new(1, 0),
            stiffness: 100.0,
            damping: 1.0,
            rest_length_init: rest,
            rest_length_bounds: [0.05, 2.0],
            actuation_rate_limit: 0.5,
        };
        let spec = WorldSpec::new(bodies, vec![cable], None, Vec3::zeros()).unwrap();
        WorldState::new(
            Arc::new(spec),
            vec![
                RigidBodyState::at_rest(Vec3::zeros(), UnitQuaternion::identity()),
                RigidBodyState::at_rest(Vec3::new(1.0, 0.3, 0.0), UnitQuaternion::identity()),
            ],
        )
        .unwrap()
    }

    #[test]
    fn tension_examples() {
        assert_close!(cable_tension(1.2, 0.0, 1.0, 100.0, 0.0), 20.0, 1e-12);
        assert_eq!(cable_tension(0.8, 5.0, 1.0, 100.0, 10.0), 0.0);
        assert_close!(cable_tension(1.1, -0.5, 1.0, 100.0, 10.0), 5.0, 1e-12);
        // Fast retraction cannot make a taut cable push.
        assert_eq!(cable_tension(1.1, -5.0, 1.0, 100.0, 10.0), 0.0);
    }

    #[test]
    fn attachment_kinematics_examples() {
        let spec = point_body(1.0, vec![Vec3::new(0.0, 0.0, 0.4), Vec3::new(0.3, 0.0, 0.0), Vec3::x()]);
        let rest = RigidBodyState::at_rest(Vec3::zeros(), UnitQuaternion::identity());
        let (p, v) = attachment_kinematics(&rest, &spec, 0);
        assert_eq!(p, Vec3::new(0.0, 0.0, 0.4));
        assert_eq!(v, Vec3::zeros());

        let moving = RigidBodyState {
            position: Vec3::new(1.0, 0.0, 0.0),
            orientation: UnitQuaternion::identity(),
            linear_velocity: Vec3::new(0.0, 1.0, 0.0),
            angular_velocity: Vec3::new(0.0, 0.0, 1.0),
        };
        let (p, v) = attachment_kinematics(&moving, &spec, 1);
        assert_close!((p - Vec3::new(1.3, 0.0, 0.0)).norm(), 0.0, 1e-15);
        assert_close!((v - Vec3::new(0.0, 1.3, 0.0)).norm(), 0.0, 1e-15);

        let turned = RigidBodyState::at_rest(
            Vec3::zeros(),
            UnitQuaternion::from_axis_angle(&Vec3::z_axis(), std::f64::consts::FRAC_PI_2),
        );
        let (p, _) = attachment_kinematics(&turned, &spec, 2);
        assert_close!((p - Vec3::new(0.0, 1.0, 0.0)).norm(), 0.0, 1e-15);
    }

    #[test]
    fn contact_examples() {
        let params = contact(0.8);
        assert_eq!(
            contact_force(&Vec3::new(0.0, 0.0, 0.1), &Vec3::new(1.0, 2.0, -3.0), &params),
            Vec3::zeros()
        );
        let f = contact_force(&Vec3::new(0.0, 0.0, -0.001), &Vec3::zeros(), &params);
        assert_close!(f.z, 10.0, 1e-12);
        assert_eq!((f.x, f.y), (0.0, 0.0));

        let f = contact_force(&Vec3::new(0.0, 0.0, -0.001), &Vec3::new(0.5, 0.0, 0.0), &params);
        assert_close!(f.z, 10.0, 1e-12);
        assert_close!(f.x, -8.0, 1e-12);
        assert_eq!(f.y, 0.0);

        // Below the regularization speed friction scales linearly with slip.
        let f = contact_force(&Vec3::new(0.0, 0.0, -0.001), &Vec3::new(0.005, 0.0, 0.0), &params);
        assert_close!(f.x, -4.0, 1e-12);
    }

    #[test]
    fn contact_is_not_adhesive() {
        let params = ContactParams {
            ground_damping: 100.0,
            ..contact(0.8)
        };
        // Leaving the ground fast: damping would pull down, clamp keeps it at zero.
        let f = contact_force(&Vec3::new(0.0, 0.0, -0.001), &Vec3::new(0.0, 0.0, 1.0), &params);
        assert_eq!(f, Vec3::zeros());
    }

    #[test]
    fn slack_world_without_gravity_has_zero_wrenches() {
        let mut world = two_body_cable(2.0);
        for w in accumulate_wrenches(&mut world) {
            assert_eq!(w, Wrench::default());
        }
    }

    #[test]
    fn taut_cable_forces_cancel() {
        let mut world = two_body_cable(0.5);
        let w = accumulate_wrenches(&mut world);
        assert!(w[0].force.norm() > 0.0);
        assert_eq!(w[0].force + w[1].force, Vec3::zeros());
    }

    #[test]
    fn gravity_wrenches_are_mass_times_g() {
        let mut world = two_body_cable(2.0);
        let spec = WorldSpec::new(
            world.spec().bodies().to_vec(),
            world.spec().cables().to_vec(),
            None,
            Vec3::new(0.0, 0.0, -9.81),
        )
        .unwrap();
        world = WorldState::new(Arc::new(spec), world.bodies().to_vec()).unwrap();
        let w = accumulate_wrenches(&mut world);
        assert_close!(w[0].force.z, -9.81, 1e-15);
        assert_close!(w[1].force.z, -0.981, 1e-15);
        assert_eq!(w[0].torque, Vec3::zeros());
    }

    #[test]
    fn degenerate_cable_is_counted_not_nan() {
        let bodies = vec![point_body(1.0, vec![Vec3::zeros()]), point_body(1.0, vec![Vec3::zeros()])];
        let cable = CableSpec {
            endpoint_a: AttachmentRef::new(0, 0),
            endpoint_b: AttachmentRef::new(1, 0),
            stiffness: 100.0,
            damping: 0.0,
            rest_length_init: 0.1,
            rest_length_bounds: [0.05, 1.0],
            actuation_rate_limit: 1.0,
        };
        let spec = WorldSpec::new(bodies, vec![cable], None, Vec3::zeros()).unwrap();
        let at_origin = RigidBodyState::at_rest(Vec3::zeros(), UnitQuaternion::identity());
        let mut world = WorldState::new(Arc::new(spec), vec![at_origin.clone(), at_origin]).unwrap();
        let w = accumulate_wrenches(&mut world);
        assert_eq!(world.degenerate_cable_events(), 1);
        assert!(w.iter().all(|w| w.force == Vec3::zeros()));
    }

    #[test]
    fn free_fall_single_step() {
        let mut world = single_body_world(Vec3::new(0.0, 0.0, -9.81));
        let w = accumulate_wrenches(&mut world);
        integrate(&mut world, &w, 0.001).unwrap();
        let body = &world.bodies()[0];
        assert_close!(body.linear_velocity.z, -0.00981, 1e-15);
        assert_close!(10.0 - body.position.z, 9.81e-6, 1e-15);
    }

    #[test]
    fn zero_wrench_is_fixed_point() {
        let mut world = single_body_world(Vec3::zeros());
        let before = world.bodies().to_vec();
        integrate(&mut world, &[Wrench::default()], 0.01).unwrap();
        assert_eq!(world.bodies(), &before[..]);
        assert_close!(world.time(), 0.01, 0.0);
    }

    #[test]
    fn rest_length_tracks_target_with_rate_limit() {
        let mut world = two_body_cable(1.0);
        world.set_rest_length_target(0, 1.2);
        integrate(&mut world, &[Wrench::default(); 2], 0.001).unwrap();
        assert_close!(world.cables()[0].rest_length(), 1.0005, 1e-15);

        world.set_rest_length_target(0, 99.0);
        assert_eq!(world.cables()[0].rest_length_target(), 2.0);
        world.set_rest_length_target(0, -1.0);
        assert_eq!(world.cables()[0].rest_length_target(), 0.05);
    }

    #[test]
    fn substeps_preserve_velocity_change() {
        let mut one = single_body_world(Vec3::new(0.0, 0.0, -9.81));
        let mut ten = one.clone();
        step_physics(&mut one, 0.001, 1).unwrap();
        step_physics(&mut ten, 0.001, 10).unwrap();
        assert_close!(one.bodies()[0].linear_velocity.z, -0.00981, 1e-15);
        assert_close!(ten.bodies()[0].linear_velocity.z, -0.00981, 1e-15);
        let dz = one.bodies()[0].position.z - ten.bodies()[0].position.z;
        // Semi-implicit Euler over n substeps drops g·dt²·(n+1)/(2n).
        assert_close!(dz, -9.81e-6 * (1.0 - 11.0 / 20.0), 1e-12);
    }

    #[test]
    fn single_substep_equals_integrate() {
        let mut a = two_body_cable(0.5);
        let mut b = a.clone();
        step_physics(&mut a, 0.001, 1).unwrap();
        let w = accumulate_wrenches(&mut b);
        integrate(&mut b, &w, 0.001).unwrap();
        b.refresh_cables();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_state_is_a_fault() {
        let mut world = single_body_world(Vec3::zeros());
        let w = [Wrench {
            force: Vec3::new(f64::INFINITY, 0.0, 0.0),
            torque: Vec3::zeros(),
        }];
        assert!(matches!(integrate(&mut world, &w, 0.001), Err(Error::SimulationFault { .. })));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(RigidBodySpec::new(0.0, Matrix3::identity(), vec![]).is_err());
        assert!(RigidBodySpec::new(1.0, Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0)), vec![]).is_err());
        let mut cable = CableSpec {
            endpoint_a: AttachmentRef::new(0, 0),
            endpoint_b: AttachmentRef::new(0, 0),
            stiffness: 1.0,
            damping: 0.0,
            rest_length_init: 0.5,
            rest_length_bounds: [0.1, 1.0],
            actuation_rate_limit: 1.0,
        };
        assert!(cable.validate().is_err());
        cable.endpoint_b = AttachmentRef::new(0, 7);
        let err = WorldSpec::new(vec![point_body(1.0, vec![Vec3::zeros()])], vec![cable], None, Vec3::zeros());
        assert!(err.is_err());
        assert!(integrate(&mut single_body_world(Vec3::zeros()), &[Wrench::default()], 0.0).is_err());
        assert!(step_physics(&mut single_body_world(Vec3::zeros()), 0.001, 0).is_err());
    }
}
