//! Dual-beam channel deformation under an imposed curvature.
//!
//! The lower beam follows a prescribed constant-curvature arc. The upper
//! beam is a Cosserat rod clamped to the lower one at both ends with the
//! undeformed offset `h0`, loaded by compression-only sidewall springs. Its
//! unknown base loads are found by shooting: Levenberg–Marquardt on the
//! six end-pose residuals, seeded by a multiple-shooting solve.

mod lm;
mod segments;

use std::io::Write;
use std::path::Path;

use nalgebra::{DVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{
    arc_pose, integrate_rod, rot_log, BeamParams, BeamSection, Pose, RodState, Rotation,
    DEFAULT_ROD_STEPS,
};

/// Largest curvature magnitude the channel model is validated for, m^-1.
pub const MAX_CURVATURE: f64 = 60.0;

/// Quadratic compression-only sidewall law, force per unit length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SidewallModel {
    /// N/m per m of displacement.
    pub c1: f64,
    /// N/m per m^2 of displacement.
    pub c2: f64,
    pub active: bool,
}

impl SidewallModel {
    pub fn inactive() -> Self {
        SidewallModel {
            active: false,
            ..Self::default()
        }
    }
}

impl Default for SidewallModel {
    fn default() -> Self {
        SidewallModel {
            c1: 0.0,
            c2: 2.0e8,
            active: true,
        }
    }
}

/// Distributed sidewall reaction for a compression `delta` (m). Sidewalls
/// carry no tension, so negative displacements give zero force.
pub fn sidewall_force(delta: f64, model: &SidewallModel) -> f64 {
    if !model.active || !(delta > 0.0) {
        return 0.0;
    }
    model.c1 * delta + model.c2 * delta * delta
}

/// Which side of the lower beam the upper beam sits on, in the global frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mount {
    /// Upper beam on the +y side.
    #[default]
    Above,
    /// Mirror image across the x axis: upper beam on the -y side.
    Below,
}

impl Mount {
    fn sign(self) -> f64 {
        match self {
            Mount::Above => 1.0,
            Mount::Below => -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelConfig {
    pub beam: BeamParams,
    /// Nominal channel height, m.
    pub h0: f64,
    pub sidewall: SidewallModel,
    pub n_steps: usize,
    pub mount: Mount,
    /// Base position of the lower beam.
    pub origin: Vector3<f64>,
}

impl ChannelConfig {
    pub fn new(
        section: &BeamSection,
        h0: f64,
        sidewall: SidewallModel,
        n_steps: usize,
    ) -> Result<Self> {
        if !(h0 > 0.0 && h0.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "channel height {h0} must be positive"
            )));
        }
        if n_steps < 2 {
            return Err(Error::InvalidParams(format!(
                "n_steps = {n_steps}, need at least 2"
            )));
        }
        Ok(ChannelConfig {
            beam: BeamParams::from_section(section)?,
            h0,
            sidewall,
            n_steps,
            mount: Mount::Above,
            origin: Vector3::zeros(),
        })
    }

    pub fn without_sidewalls(mut self) -> Self {
        self.sidewall.active = false;
        self
    }

    /// Signed in-plane curvature of the lower beam for a wrap curvature
    /// `kappa`: the lower beam always bends away from the upper beam.
    fn lower_curvature(&self, kappa: f64) -> f64 {
        -self.mount.sign() * kappa
    }

    fn lower_pose(&self, kappa: f64, s: f64) -> Pose {
        let mut pose = arc_pose(self.lower_curvature(kappa), s);
        pose.position += self.origin;
        pose
    }

    fn upper_offset(&self, lower: &Pose) -> Vector3<f64> {
        lower.rotation.matrix().column(1) * (self.mount.sign() * self.h0)
    }

    /// Separation of a point from the lower beam, along the lower beam's
    /// normal towards the upper beam.
    fn separation(&self, lower: &Pose, point: &Vector3<f64>) -> f64 {
        self.mount.sign() * (point - lower.position).dot(&lower.rotation.matrix().column(1))
    }
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig::new(
            &BeamSection::default(),
            1e-3,
            SidewallModel::default(),
            DEFAULT_ROD_STEPS,
        )
        .expect("default channel configuration is valid")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Convergence threshold on the end-pose residual norm (m and rad).
    pub tol: f64,
    pub max_iterations: usize,
    pub initial_damping: f64,
    /// Relative forward-difference step for the Jacobian.
    pub fd_step: f64,
    /// Largest curvature increment between warm-started solves, m^-1.
    pub continuation_step: f64,
    /// Number of matched segments used to seed the single shot.
    pub segments: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iterations: 100,
            initial_damping: 1e-3,
            fd_step: 1e-7,
            continuation_step: 1.0,
            segments: 8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ChannelSolution {
    pub kappa: f64,
    pub h0: f64,
    pub lower: Vec<Pose>,
    pub upper: Vec<RodState>,
    /// Arclength of every node, m.
    pub arclength: Vec<f64>,
    /// Beam separation at every node along the lower beam normal, m.
    pub distance: Vec<f64>,
    /// Upper beam base force and moment, global frame.
    pub base_loads: Vector6<f64>,
    pub residual_norm: f64,
    /// Iterations spent on the final continuation stage.
    pub iterations: usize,
}

impl ChannelSolution {
    pub fn min_height(&self) -> f64 {
        min_height(self)
    }
}

struct Shot {
    upper: Vec<RodState>,
    residual: Vector6<f64>,
}

/// Sidewall reaction on the upper beam, along the lower beam normal.
fn sidewall_load(kappa: f64, cfg: &ChannelConfig) -> impl Fn(f64, &RodState) -> Vector3<f64> + '_ {
    let sign = cfg.mount.sign();
    move |s: f64, st: &RodState| {
        if !cfg.sidewall.active {
            return Vector3::zeros();
        }
        let lower = cfg.lower_pose(kappa, s);
        let delta = cfg.h0 - cfg.separation(&lower, &st.position);
        let f = sidewall_force(delta, &cfg.sidewall);
        lower.rotation.matrix().column(1) * (sign * f)
    }
}

fn shoot(guess: &Vector6<f64>, kappa: f64, cfg: &ChannelConfig) -> Result<Shot> {
    if guess.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("shooting guess must be finite".into()));
    }
    let base = cfg.lower_pose(kappa, 0.0);
    let start = RodState {
        position: base.position + cfg.upper_offset(&base),
        rotation: base.rotation,
        force: guess.fixed_rows::<3>(0).into_owned(),
        moment: guess.fixed_rows::<3>(3).into_owned(),
    };
    let upper = integrate_rod(&start, &cfg.beam, &sidewall_load(kappa, cfg), cfg.n_steps)?;

    let end = upper.last().expect("trajectory is non-empty");
    let target = cfg.lower_pose(kappa, cfg.beam.length);
    let dp = end.position - (target.position + cfg.upper_offset(&target));
    let dr = rot_log(&Rotation::from_matrix_unchecked(
        end.rotation.matrix() * target.rotation.matrix().transpose(),
    ))?;
    let mut residual = Vector6::zeros();
    residual.fixed_rows_mut::<3>(0).copy_from(&dp);
    residual.fixed_rows_mut::<3>(3).copy_from(&dr);
    Ok(Shot { upper, residual })
}

/// End-pose mismatch of the upper beam for base loads `guess = (n(0), m(0))`:
/// position error followed by the axis-angle of `R_u(L) R_target(L)^T`.
pub fn boundary_residual(
    guess: &Vector6<f64>,
    kappa: f64,
    cfg: &ChannelConfig,
) -> Result<Vector6<f64>> {
    Ok(shoot(guess, kappa, cfg)?.residual)
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(0.0..=MAX_CURVATURE).contains(&kappa) {
        return Err(Error::CurvatureRange {
            kappa,
            min: 0.0,
            max: MAX_CURVATURE,
        });
    }
    Ok(())
}

/// Solves the channel at a single curvature, starting from the unloaded
/// configuration and stepping the curvature up by at most
/// `opts.continuation_step`.
pub fn solve_channel(
    kappa: f64,
    cfg: &ChannelConfig,
    opts: &SolverOptions,
) -> Result<ChannelSolution> {
    check_kappa(kappa)?;
    let unloaded = shoot(&Vector6::zeros(), 0.0, cfg)?.upper;
    continue_from(0.0, unloaded, kappa, cfg, opts)
}

/// Like [`solve_channel`] but continues from a previously converged solution.
pub fn solve_channel_from(
    warm: &ChannelSolution,
    kappa: f64,
    cfg: &ChannelConfig,
    opts: &SolverOptions,
) -> Result<ChannelSolution> {
    check_kappa(kappa)?;
    continue_from(warm.kappa, warm.upper.clone(), kappa, cfg, opts)
}

/// Sequential sweep, each solve warm-started from the previous one.
pub fn sweep_channel(
    kappas: &[f64],
    cfg: &ChannelConfig,
    opts: &SolverOptions,
) -> Result<Vec<ChannelSolution>> {
    let mut out: Vec<ChannelSolution> = Vec::with_capacity(kappas.len());
    for &k in kappas {
        let sol = match out.last() {
            Some(prev) => solve_channel_from(prev, k, cfg, opts)?,
            None => solve_channel(k, cfg, opts)?,
        };
        out.push(sol);
    }
    Ok(out)
}

fn continue_from(
    k_start: f64,
    warm: Vec<RodState>,
    kappa: f64,
    cfg: &ChannelConfig,
    opts: &SolverOptions,
) -> Result<ChannelSolution> {
    const MAX_HALVINGS: u32 = 12;
    let mut k_done = k_start;
    let mut warm = warm;
    let mut step = opts.continuation_step.max(f64::EPSILON);
    let mut halvings = 0;
    loop {
        let remaining = kappa - k_done;
        let k = if remaining.abs() <= step {
            kappa
        } else {
            k_done + step.copysign(remaining)
        };
        match solve_stage(k, k_done, &warm, cfg, opts) {
            Ok(sol) if k == kappa => return Ok(sol),
            Ok(sol) => {
                k_done = k;
                warm = sol.upper;
                // recover towards the nominal step after a successful stage
                step = (2.0 * step).min(opts.continuation_step);
            }
            Err(
                Error::NonConvergence { .. }
                | Error::Divergence { .. }
                | Error::DegenerateRotation { .. },
            ) if halvings < MAX_HALVINGS => {
                halvings += 1;
                step *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
}

fn solve_stage(
    kappa: f64,
    warm_kappa: f64,
    warm: &[RodState],
    cfg: &ChannelConfig,
    opts: &SolverOptions,
) -> Result<ChannelSolution> {
    let seg = segments::Segmentation::new(cfg, opts.segments);
    let sc = segments::Scales::new(cfg);
    let z0 = segments::nodes_from_trajectory(warm, warm_kappa, cfg, &seg, &sc)?;
    let seed = segments::solve(z0, kappa, cfg, &seg, &sc, opts)?;
    if !seed.converged {
        return Err(Error::NonConvergence {
            kappa,
            residual: seed.residual,
            iterations: seed.iterations,
        });
    }
    let guess = seed.base_loads;

    // Single-shot polish in units natural to an O(h0) deflection: axial
    // force EA h0 / L, shear force EI h0 / L^3, moment EI h0 / L^2, end
    // position error h0 and end rotation error h0 / L.
    let len = cfg.beam.length;
    let ei = cfg.beam.bending_stiffness();
    let ea = cfg.beam.k_se[(0, 0)];
    let h0 = cfg.h0;
    let shear = ei * h0 / len.powi(3);
    let moment = ei * h0 / (len * len);
    let scale = Vector6::new(ea * h0 / len, shear, shear, moment, moment, moment);
    let res_scale = Vector6::new(h0, h0, h0, h0 / len, h0 / len, h0 / len);
    let to_raw = |z: &DVector<f64>| Vector6::from_iterator(z.iter().copied()).component_mul(&scale);
    let scaled_residual = |z: &DVector<f64>| -> Result<DVector<f64>> {
        let r = boundary_residual(&to_raw(z), kappa, cfg)?.component_div(&res_scale);
        Ok(DVector::from_iterator(6, r.iter().copied()))
    };
    let raw_norm = |r: &DVector<f64>| {
        Vector6::from_iterator(r.iter().copied())
            .component_mul(&res_scale)
            .norm()
    };
    let z0 = DVector::from_iterator(6, guess.component_div(&scale).iter().copied());
    let out = lm::solve(
        z0,
        scaled_residual,
        raw_norm,
        opts.tol,
        lm::LmSettings {
            max_iterations: opts.max_iterations,
            initial_damping: opts.initial_damping,
            fd_step: opts.fd_step,
        },
    )?;
    let residual_norm = raw_norm(&out.residual);
    if !out.converged {
        return Err(Error::NonConvergence {
            kappa,
            residual: residual_norm,
            iterations: seed.iterations + out.iterations,
        });
    }
    let base_loads = to_raw(&out.x);
    let shot = shoot(&base_loads, kappa, cfg)?;
    let iterations = seed.iterations + out.iterations;
    Ok(assemble(
        kappa,
        cfg,
        shot.upper,
        base_loads,
        residual_norm,
        iterations,
    ))
}

fn assemble(
    kappa: f64,
    cfg: &ChannelConfig,
    upper: Vec<RodState>,
    base_loads: Vector6<f64>,
    residual_norm: f64,
    iterations: usize,
) -> ChannelSolution {
    let h = cfg.beam.length / cfg.n_steps as f64;
    let arclength: Vec<f64> = (0..=cfg.n_steps).map(|i| i as f64 * h).collect();
    let lower: Vec<Pose> = arclength
        .iter()
        .map(|&s| cfg.lower_pose(kappa, s))
        .collect();
    let distance = lower
        .iter()
        .zip(&upper)
        .map(|(l, u)| cfg.separation(l, &u.position))
        .collect();
    ChannelSolution {
        kappa,
        h0: cfg.h0,
        lower,
        upper,
        arclength,
        distance,
        base_loads,
        residual_norm,
        iterations,
    }
}

/// Smallest beam separation over all nodes.
pub fn min_height(sol: &ChannelSolution) -> f64 {
    sol.distance.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `(s, distance)` for every node.
pub fn distance_profile(sol: &ChannelSolution) -> Vec<(f64, f64)> {
    sol.arclength
        .iter()
        .copied()
        .zip(sol.distance.iter().copied())
        .collect()
}

pub const SWEEP_CSV_HEADER: &str = "kappa,min_height_m,residual_norm,iterations";
pub const PROFILE_CSV_HEADER: &str = "s_m,distance_m";

pub fn write_sweep_csv<W: Write>(mut w: W, sols: &[ChannelSolution]) -> std::io::Result<()> {
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    for s in sols {
        writeln!(
            w,
            "{},{:e},{:e},{}",
            s.kappa,
            min_height(s),
            s.residual_norm,
            s.iterations
        )?;
    }
    Ok(())
}

pub fn write_profile_csv<W: Write>(mut w: W, sol: &ChannelSolution) -> std::io::Result<()> {
    writeln!(w, "{PROFILE_CSV_HEADER}")?;
    for (s, d) in distance_profile(sol) {
        writeln!(w, "{s:e},{d:e}")?;
    }
    Ok(())
}

pub fn save_sweep_csv(path: &Path, sols: &[ChannelSolution]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_sweep_csv(std::io::BufWriter::new(file), sols).map_err(|e| Error::io(path, e))
}

pub fn save_profile_csv(path: &Path, sol: &ChannelSolution) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_profile_csv(std::io::BufWriter::new(file), sol).map_err(|e| Error::io(path, e))
}
