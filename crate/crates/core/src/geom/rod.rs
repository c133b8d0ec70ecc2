//! Static Cosserat rod: state, right-hand side and fixed-step integration.
//!
//! The undeformed rod runs along the local x axis. Internal force `n` and
//! moment `m` are expressed in the global frame.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::so3::{hat, Rotation};
use crate::error::{Error, Result};

pub const DEFAULT_ROD_STEPS: usize = 200;

/// Cross-section state at one arclength station.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RodState {
    pub position: Vector3<f64>,
    pub rotation: Rotation,
    pub force: Vector3<f64>,
    pub moment: Vector3<f64>,
}

impl RodState {
    /// Unloaded cross-section at `position` with orientation `rotation`.
    pub fn at_rest(position: Vector3<f64>, rotation: Rotation) -> Self {
        RodState {
            position,
            rotation,
            force: Vector3::zeros(),
            moment: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|x| x.is_finite())
            && self.rotation.matrix().iter().all(|x| x.is_finite())
            && self.force.iter().all(|x| x.is_finite())
            && self.moment.iter().all(|x| x.is_finite())
    }
}

/// Position and orientation only.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub rotation: Rotation,
}

/// Geometry and material of a rectangular beam. `thickness` is measured
/// along the local y axis (the bending direction inside the channel plane),
/// `width` along local z.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamSection {
    pub length: f64,
    pub width: f64,
    pub thickness: f64,
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
}

impl Default for BeamSection {
    fn default() -> Self {
        BeamSection {
            length: 0.08,
            width: 8e-3,
            thickness: 2e-3,
            youngs_modulus: 12e6,
            poisson_ratio: 0.45,
        }
    }
}

/// Stiffness description consumed by [`rod_rhs`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamParams {
    pub length: f64,
    pub k_se: Matrix3<f64>,
    pub k_bt: Matrix3<f64>,
    /// Reference linear strain in the local frame.
    pub v_star: Vector3<f64>,
    k_se_inv: Matrix3<f64>,
    k_bt_inv: Matrix3<f64>,
}

impl BeamParams {
    /// Validates that both stiffness matrices are symmetric positive definite
    /// and caches their inverses.
    pub fn new(length: f64, k_se: Matrix3<f64>, k_bt: Matrix3<f64>) -> Result<Self> {
        Self::with_reference_strain(length, k_se, k_bt, Vector3::x())
    }

    pub fn with_reference_strain(
        length: f64,
        k_se: Matrix3<f64>,
        k_bt: Matrix3<f64>,
        v_star: Vector3<f64>,
    ) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "beam length {length} must be positive"
            )));
        }
        let k_se_inv = spd_inverse(&k_se, "K_se")?;
        let k_bt_inv = spd_inverse(&k_bt, "K_bt")?;
        if v_star.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("v_star must be finite".into()));
        }
        Ok(BeamParams {
            length,
            k_se,
            k_bt,
            v_star,
            k_se_inv,
            k_bt_inv,
        })
    }

    /// Isotropic rectangular section: `K_se = diag(EA, GA, GA)`,
    /// `K_bt = diag(GJ, E I_y, E I_z)`.
    pub fn from_section(section: &BeamSection) -> Result<Self> {
        let BeamSection {
            length,
            width: w,
            thickness: t,
            youngs_modulus: e,
            poisson_ratio: nu,
        } = *section;
        if !(w > 0.0 && t > 0.0 && e > 0.0) || !(-1.0 < nu && nu < 0.5) {
            return Err(Error::InvalidParams(format!(
                "invalid beam section {section:?}"
            )));
        }
        let g = e / (2.0 * (1.0 + nu));
        let area = w * t;
        let (short, long) = if t < w { (t, w) } else { (w, t) };
        // thin rectangle torsion constant
        let j = long * short.powi(3) / 3.0 * (1.0 - 0.63 * short / long);
        let i_y = t * w.powi(3) / 12.0;
        let i_z = w * t.powi(3) / 12.0;
        let k_se = Matrix3::from_diagonal(&Vector3::new(e * area, g * area, g * area));
        let k_bt = Matrix3::from_diagonal(&Vector3::new(g * j, e * i_y, e * i_z));
        Self::new(length, k_se, k_bt)
    }

    /// In-plane bending stiffness `E I_z`.
    pub fn bending_stiffness(&self) -> f64 {
        self.k_bt[(2, 2)]
    }
}

fn spd_inverse(k: &Matrix3<f64>, name: &str) -> Result<Matrix3<f64>> {
    if (k - k.transpose()).amax() > 1e-12 * k.amax() {
        return Err(Error::InvalidParams(format!("{name} is not symmetric")));
    }
    let chol = k
        .cholesky()
        .ok_or_else(|| Error::InvalidParams(format!("{name} is not positive definite")))?;
    Ok(chol.inverse())
}

/// Distributed force per unit length acting on the rod, global frame.
pub trait ForceField {
    fn force(&self, s: f64, state: &RodState) -> Vector3<f64>;
}

impl<F> ForceField for F
where
    F: Fn(f64, &RodState) -> Vector3<f64>,
{
    fn force(&self, s: f64, state: &RodState) -> Vector3<f64> {
        self(s, state)
    }
}

/// The zero force field.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoLoad;

impl ForceField for NoLoad {
    fn force(&self, _s: f64, _state: &RodState) -> Vector3<f64> {
        Vector3::zeros()
    }
}

/// Arclength derivative of a [`RodState`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RodDerivative {
    pub dp: Vector3<f64>,
    pub dr: Matrix3<f64>,
    pub dn: Vector3<f64>,
    pub dm: Vector3<f64>,
}

/// Static Cosserat equations:
///
/// ```text
/// P' = R (K_se^-1 R^T n + v*)
/// R' = R (K_bt^-1 R^T m)^
/// n' = -rho
/// m' = -P' x n
/// ```
pub fn rod_rhs<F: ForceField + ?Sized>(
    s: f64,
    state: &RodState,
    params: &BeamParams,
    rho: &F,
) -> RodDerivative {
    let r = state.rotation.matrix();
    let dp = r * (params.k_se_inv * r.transpose() * state.force + params.v_star);
    let u = params.k_bt_inv * r.transpose() * state.moment;
    RodDerivative {
        dp,
        dr: r * hat(&u),
        dn: -rho.force(s, state),
        dm: -dp.cross(&state.force),
    }
}

#[derive(Clone, Copy)]
struct Raw {
    p: Vector3<f64>,
    r: Matrix3<f64>,
    n: Vector3<f64>,
    m: Vector3<f64>,
}

impl Raw {
    fn from_state(s: &RodState) -> Self {
        Raw {
            p: s.position,
            r: *s.rotation.matrix(),
            n: s.force,
            m: s.moment,
        }
    }

    fn to_state(self) -> RodState {
        RodState {
            position: self.p,
            rotation: Rotation::from_matrix_unchecked(self.r),
            force: self.n,
            moment: self.m,
        }
    }

    fn step(&self, d: &RodDerivative, h: f64) -> Raw {
        Raw {
            p: self.p + d.dp * h,
            r: self.r + d.dr * h,
            n: self.n + d.dn * h,
            m: self.m + d.dm * h,
        }
    }
}

/// Fixed-step RK4 from `s = 0` to `s = L`. Returns `n_steps + 1` states at
/// `s_i = i L / n_steps`; the rotation is projected back onto SO(3) after
/// every step.
pub fn integrate_rod<F: ForceField + ?Sized>(
    initial: &RodState,
    params: &BeamParams,
    rho: &F,
    n_steps: usize,
) -> Result<Vec<RodState>> {
    if n_steps < 2 {
        return Err(Error::InvalidInput(format!(
            "n_steps = {n_steps}, need at least 2"
        )));
    }
    integrate_span(
        initial,
        params,
        rho,
        0.0,
        params.length / n_steps as f64,
        n_steps,
    )
}

/// RK4 over `n_steps` steps of size `h` starting at arclength `s0`.
pub(crate) fn integrate_span<F: ForceField + ?Sized>(
    initial: &RodState,
    params: &BeamParams,
    rho: &F,
    s0: f64,
    h: f64,
    n_steps: usize,
) -> Result<Vec<RodState>> {
    let f = |s: f64, x: &Raw| rod_rhs(s, &x.to_state(), params, rho);

    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(*initial);
    let mut x = Raw::from_state(initial);
    for i in 0..n_steps {
        let s = s0 + i as f64 * h;
        let k1 = f(s, &x);
        let k2 = f(s + 0.5 * h, &x.step(&k1, 0.5 * h));
        let k3 = f(s + 0.5 * h, &x.step(&k2, 0.5 * h));
        let k4 = f(s + h, &x.step(&k3, h));
        let h6 = h / 6.0;
        x = Raw {
            p: x.p + (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp) * h6,
            r: x.r + (k1.dr + 2.0 * k2.dr + 2.0 * k3.dr + k4.dr) * h6,
            n: x.n + (k1.dn + 2.0 * k2.dn + 2.0 * k3.dn + k4.dn) * h6,
            m: x.m + (k1.dm + 2.0 * k2.dm + 2.0 * k3.dm + k4.dm) * h6,
        };
        if x.r.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: i + 1 });
        }
        x.r = *Rotation::project(&x.r).matrix();
        let state = x.to_state();
        if !state.is_finite() {
            return Err(Error::Divergence { step: i + 1 });
        }
        out.push(state);
    }
    Ok(out)
}

/// Pose at arclength `s` along a planar arc of signed curvature `kappa`
/// that starts at the origin heading along +x and turns about +z.
pub fn arc_pose(kappa: f64, s: f64) -> Pose {
    let angle = kappa * s;
    let position = if kappa == 0.0 {
        Vector3::new(s, 0.0, 0.0)
    } else {
        let half = 0.5 * angle;
        // (1 - cos a) / kappa written to avoid cancellation at small a
        Vector3::new(angle.sin() / kappa, 2.0 * half.sin().powi(2) / kappa, 0.0)
    };
    Pose {
        position,
        rotation: Rotation::about_z(angle),
    }
}

/// `n_steps + 1` poses of a constant-curvature arc of length `length`.
pub fn constant_curvature_arc(kappa: f64, length: f64, n_steps: usize) -> Result<Vec<Pose>> {
    if !(length > 0.0) {
        return Err(Error::InvalidInput(format!(
            "arc length {length} must be positive"
        )));
    }
    if n_steps == 0 {
        return Err(Error::InvalidInput("arc needs at least one step".into()));
    }
    let h = length / n_steps as f64;
    Ok((0..=n_steps)
        .map(|i| arc_pose(kappa, i as f64 * h))
        .collect())
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    fn params() -> BeamParams {
        BeamParams::from_section(&BeamSection {
            length: 0.1,
            ..BeamSection::default()
        })
        .unwrap()
    }

    #[test]
    fn unloaded_rod_derivative() {
        let p = params();
        let st = RodState::at_rest(Vector3::zeros(), Rotation::identity());
        let d = rod_rhs(0.0, &st, &p, &NoLoad);
        assert_eq!(d.dp, p.v_star);
        assert_eq!(d.dr, Matrix3::zeros());
        assert_eq!(d.dn, Vector3::zeros());
        assert_eq!(d.dm, Vector3::zeros());
    }

    #[test]
    fn constant_distributed_force_sets_force_derivative() {
        let c = Vector3::new(0.5, -2.0, 0.25);
        let rho = move |_s: f64, _st: &RodState| c;
        let st = RodState {
            position: Vector3::new(0.01, 0.0, 0.0),
            rotation: Rotation::about_z(0.2),
            force: Vector3::new(1.0, 0.1, 0.0),
            moment: Vector3::new(0.0, 0.0, 1e-3),
        };
        for s in [0.0, 0.03, 0.1] {
            assert_eq!(rod_rhs(s, &st, &params(), &rho).dn, -c);
        }
    }

    #[test]
    fn moment_derivative_matches_componentwise_cross_product() {
        let p = params();
        let st = RodState {
            position: Vector3::zeros(),
            rotation: super::super::rot_exp(&Vector3::new(0.1, -0.3, 0.7)),
            force: Vector3::new(1.5, -0.4, 0.2),
            moment: Vector3::new(1e-4, 2e-4, -3e-4),
        };
        let d = rod_rhs(0.0, &st, &p, &NoLoad);
        let (a, b) = (d.dp, st.force);
        let cross = Vector3::new(
            a.y * b.z - a.z * b.y,
            a.z * b.x - a.x * b.z,
            a.x * b.y - a.y * b.x,
        );
        assert_relative_eq!(d.dm, -cross, epsilon = 1e-15);
    }

    #[test]
    fn singular_stiffness_rejected() {
        let k = Matrix3::from_diagonal(&Vector3::new(1.0, 0.0, 1.0));
        assert!(matches!(
            BeamParams::new(0.1, k, Matrix3::identity()),
            Err(Error::InvalidParams(_))
        ));
        assert!(BeamParams::new(0.0, Matrix3::identity(), Matrix3::identity()).is_err());
    }

    #[test]
    fn straight_rod_reaches_length_along_x() {
        let p = params();
        let st = RodState::at_rest(Vector3::zeros(), Rotation::identity());
        let traj = integrate_rod(&st, &p, &NoLoad, DEFAULT_ROD_STEPS).unwrap();
        assert_eq!(traj.len(), DEFAULT_ROD_STEPS + 1);
        let end = traj.last().unwrap().position;
        assert_relative_eq!(end, Vector3::new(0.1, 0.0, 0.0), epsilon = 1e-9);
    }

    #[test]
    fn tip_loaded_cantilever_keeps_constant_force() {
        let p = params();
        let st = RodState {
            position: Vector3::zeros(),
            rotation: Rotation::identity(),
            force: Vector3::new(0.0, -0.02, 0.0),
            moment: Vector3::new(0.0, 0.0, 2e-3),
        };
        let traj = integrate_rod(&st, &p, &NoLoad, 64).unwrap();
        for s in &traj {
            assert_eq!(s.force, st.force);
        }
    }

    #[test]
    fn too_few_steps_rejected() {
        let st = RodState::at_rest(Vector3::zeros(), Rotation::identity());
        assert!(integrate_rod(&st, &params(), &NoLoad, 1).is_err());
    }

    #[test]
    fn nan_load_reports_divergence_step() {
        let rho = |s: f64, _st: &RodState| {
            if s > 0.05 {
                Vector3::new(f64::NAN, 0.0, 0.0)
            } else {
                Vector3::zeros()
            }
        };
        let st = RodState::at_rest(Vector3::zeros(), Rotation::identity());
        match integrate_rod(&st, &params(), &rho, 10) {
            // step 6 spans s in (0.05, 0.06]
            Err(Error::Divergence { step }) => assert_eq!(step, 6),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn arc_endpoints() {
        let straight = constant_curvature_arc(0.0, 0.1, 10).unwrap();
        assert_eq!(
            straight.last().unwrap().position,
            Vector3::new(0.1, 0.0, 0.0)
        );

        let bent = constant_curvature_arc(20.0, 0.1, 10).unwrap();
        let end = bent.last().unwrap().position;
        assert_relative_eq!(end.x, 2.0f64.sin() / 20.0, epsilon = 1e-15);
        assert_relative_eq!(end.y, (1.0 - 2.0f64.cos()) / 20.0, epsilon = 1e-15);
        assert_relative_eq!(end.x, 0.045465, epsilon = 1e-6);
        assert_relative_eq!(end.y, 0.070807, epsilon = 1e-6);
        assert_relative_eq!(
            *bent.last().unwrap().rotation.matrix(),
            *Rotation::about_z(2.0).matrix()
        );
    }

    #[test]
    fn arc_chord_length() {
        let (kappa, len) = (60.0, 0.1);
        let arc = constant_curvature_arc(kappa, len, 100).unwrap();
        let chord = arc.last().unwrap().position.norm();
        assert_relative_eq!(
            chord,
            2.0 * (kappa * len / 2.0).sin() / kappa,
            epsilon = 1e-9
        );
    }

    #[test]
    fn arc_rejects_nonpositive_length() {
        assert!(constant_curvature_arc(1.0, 0.0, 10).is_err());
    }
}
