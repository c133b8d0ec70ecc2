//! Rotation-group utilities and static Cosserat rod kinematics.

mod rod;
mod so3;

pub(crate) use rod::integrate_span;
pub use rod::{
    arc_pose, constant_curvature_arc, integrate_rod, rod_rhs, BeamParams, BeamSection, ForceField,
    NoLoad, Pose, RodDerivative, RodState, DEFAULT_ROD_STEPS,
};
pub use so3::{hat, rot_exp, rot_log, vee, Rotation, LOG_ANGLE_LIMIT, ORTHONORMAL_TOL};
