//! Per-trajectory statistics for return classification (winding number
//! around the stable axis, maximal height, jump direction) plus grid sweeps
//! over cross-sections.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrator::{run_plane_event, OutcomeTag, PlaneSpec, RunBounds, TubeSpec};
use crate::integrator::{CaptureSpec, EventSpec, PeriodicOrbit, ReturnOutcome, Surface, Trajectory};
use crate::math::{cross, cross2, dot, dot2, norm2, normalize, scale, sub, Vec2, Vec3};
use crate::system::{classify_equilibrium, vector_field, EquilibriumInfo, EquilibriumType, Params, State};

/// Section-plane coordinates: (x, y) on planes of constant z, (y, z) on
/// planes of constant x.
pub fn section_coords(surface: &Surface, s: &State) -> Vec2 {
    match surface {
        Surface::ZPlane(_) => [s.x, s.y],
        Surface::XPlane(_) => [s.y, s.z],
    }
}

pub fn section_lift(surface: &Surface, q: &Vec2) -> State {
    match surface {
        Surface::ZPlane(z0) => State::new(q[0], q[1], *z0),
        Surface::XPlane(x0) => State::new(*x0, q[0], q[1]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Jump {
    /// The segment visited the far attracting branch (min x < -2/3).
    Left,
    Right,
}

/// Summary of one return segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryStats {
    /// Cumulative rotation of the projected segment, in full turns.
    pub winding: f64,
    /// Integer part of the winding.
    pub turns: i64,
    /// Maximal y-coordinate along the segment.
    pub y_max: f64,
    pub jump: Jump,
    /// Count of oriented section crossings observed during the run.
    pub crossings: u32,
}

/// Projection frame for winding computations: orthonormal axes (u, n)
/// spanning the rotation plane, centered at the equilibrium. The normal is
/// oriented so that the linearized flow winds positively.
#[derive(Debug, Clone)]
pub struct WindingFrame {
    pub center: Vec3,
    pub u: Vec3,
    pub n: Vec3,
}

impl WindingFrame {
    pub fn from_equilibrium(eq: &EquilibriumInfo) -> Result<Self> {
        if eq.type_tag != EquilibriumType::SaddleFocus {
            return Err(Error::NotSaddleFocus);
        }
        let u = eq.unstable_plane[0];
        let s = eq.stable_eigvec;
        let mut n = normalize(&cross(&u, &s)).ok_or(Error::ProjectionDegenerate)?;
        // The pair rotates the plane from Re w toward -Im w; flip n when
        // needed so that rotation is counted positively.
        let e2 = eq.unstable_plane[1];
        if dot(&n, &e2) > 0.0 {
            n = scale(&n, -1.0);
        }
        Ok(WindingFrame { center: eq.location.to_array(), u, n })
    }

    pub fn project(&self, s: &State) -> Vec2 {
        let v = sub(&s.to_array(), &self.center);
        [dot(&v, &self.u), dot(&v, &self.n)]
    }
}

const PROJECTION_EPS: f64 = 1e-14;

/// Cumulative rotation (in turns) of a state sequence projected onto the
/// frame's (u, n)-plane; increments accumulate atan2-style in (-pi, pi].
pub fn winding_of_states(states: &[State], frame: &WindingFrame) -> Result<f64> {
    let mut total = 0.0;
    let mut prev: Option<Vec2> = None;
    for s in states {
        let q = frame.project(s);
        if norm2(&q) < PROJECTION_EPS {
            return Err(Error::ProjectionDegenerate);
        }
        if let Some(p) = prev {
            total += cross2(&p, &q).atan2(dot2(&p, &q));
        }
        prev = Some(q);
    }
    Ok(total / std::f64::consts::TAU)
}

/// Winding and number of turns of a trajectory around the stable axis.
pub fn winding_number(traj: &Trajectory, eq: &EquilibriumInfo) -> Result<(f64, i64)> {
    let frame = WindingFrame::from_equilibrium(eq)?;
    let w = winding_of_states(&traj.states, &frame)?;
    Ok((w, w.floor() as i64))
}

/// Left iff the segment dips below the fold at x = -2/3.
pub fn jump_direction(traj: &Trajectory) -> Jump {
    if traj.coord_extremum(0, false) < -2.0 / 3.0 {
        Jump::Left
    } else {
        Jump::Right
    }
}

/// Maximal height (y-coordinate) along the trajectory, mesh plus
/// step-interpolant samples.
pub fn max_height(traj: &Trajectory) -> f64 {
    traj.coord_extremum(1, true)
}

/// Coefficients (a, b, -nu) of the vector-field tangency line
/// {a x + b y = -nu} on the plane z = 0, where dz/dt vanishes.
pub fn tangency_line(p: &Params) -> (f64, f64, f64) {
    (p.a, p.b, -p.nu)
}

/// dz/dt evaluated at a point (u, v) of the z = 0 plane; positive on the
/// side the tangency line separates off.
pub fn zdot_on_section(p: &Params, q: &Vec2) -> f64 {
    vector_field(p, &State::new(q[0], q[1], 0.0))[2]
}

/// Rectangular sampling window on a section.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// (nodes along u, nodes along v), both >= 2.
    pub resolution: (usize, usize),
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.resolution.0 < 2 || self.resolution.1 < 2 {
            return Err(Error::InvalidParams("grid resolution must be >= 2".into()));
        }
        if !(self.u_min < self.u_max) || !(self.v_min < self.v_max) {
            return Err(Error::InvalidParams("grid window is degenerate".into()));
        }
        Ok(())
    }

    pub fn node(&self, i: usize, j: usize) -> Vec2 {
        let (nu, nv) = self.resolution;
        [
            self.u_min + (self.u_max - self.u_min) * i as f64 / (nu - 1) as f64,
            self.v_min + (self.v_max - self.v_min) * j as f64 / (nv - 1) as f64,
        ]
    }

    pub fn n_cells(&self) -> usize {
        self.resolution.0 * self.resolution.1
    }
}

/// Result of one grid cell: outcome (stats filled for returned cells) plus
/// the last oriented crossing seen during the run.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub point: Vec2,
    pub outcome: ReturnOutcome,
    pub last_hit: Option<Vec2>,
}

/// Classify every grid node on the section. Cells are emitted row-major
/// (v-outer, u-inner), independent of any internal parallelism.
pub fn grid_sweep(
    p: &Params,
    section: &EventSpec,
    grid: &GridSpec,
    gamma: &PeriodicOrbit,
) -> Result<Vec<CellResult>> {
    p.validate()?;
    section.validate()?;
    grid.validate()?;
    let eq = classify_equilibrium(p)?;
    let frame = WindingFrame::from_equilibrium(&eq).ok();
    let capture = CaptureSpec::default();
    let (n_u, n_v) = grid.resolution;
    let cells: Vec<CellResult> = (0..n_u * n_v)
        .into_par_iter()
        .map(|idx| {
            let (j, i) = (idx / n_u, idx % n_u);
            let q = grid.node(i, j);
            sweep_cell(p, section, &q, gamma, capture, frame.as_ref())
        })
        .collect();
    Ok(cells)
}

pub(crate) fn sweep_cell(
    p: &Params,
    section: &EventSpec,
    q: &Vec2,
    gamma: &PeriodicOrbit,
    capture: CaptureSpec,
    frame: Option<&WindingFrame>,
) -> CellResult {
    let s0 = section_lift(&section.surface, q);
    let f = |y: &Vec3| vector_field(p, &State::from_array(y));
    let plane = PlaneSpec::from_event(section);
    let bounds = RunBounds { escape_radius: section.escape_radius, t_max: section.t_max };
    let tube = TubeSpec::from_orbit(gamma, capture.tube_radius, capture.dwell_periods);
    let res = match run_plane_event(
        &f,
        s0,
        crate::integrator::Direction::Forward,
        Some(&plane),
        &bounds,
        Some(&tube),
        true,
    ) {
        Ok(r) => r,
        Err(_) => {
            // Step-size underflow: report as an unbounded (unusable) cell.
            return CellResult {
                point: *q,
                outcome: ReturnOutcome { tag: OutcomeTag::Unbounded, hit: None, stats: None },
                last_hit: None,
            };
        }
    };
    let mut outcome = res.outcome();
    if outcome.tag == OutcomeTag::Returned {
        let traj = res.traj.as_ref().expect("recorded");
        outcome.stats = segment_stats(traj, frame, res.crossings);
    }
    CellResult {
        point: *q,
        outcome,
        last_hit: res.last_hit.map(|(s, _)| section_coords(&section.surface, &s)),
    }
}

/// Stats of a completed return segment; None when the winding frame is
/// unavailable or the projection degenerates.
pub(crate) fn segment_stats(
    traj: &Trajectory,
    frame: Option<&WindingFrame>,
    crossings: u32,
) -> Option<TrajectoryStats> {
    let frame = frame?;
    let winding = winding_of_states(&traj.states, frame).ok()?;
    Some(TrajectoryStats {
        winding,
        turns: winding.floor() as i64,
        y_max: max_height(traj),
        jump: jump_direction(traj),
        crossings,
    })
}

/// Captured-area fraction of a sweep; used by grid-convergence checks.
pub fn captured_fraction(cells: &[CellResult]) -> f64 {
    if cells.is_empty() {
        return 0.0;
    }
    let captured = cells.iter().filter(|c| c.outcome.tag == OutcomeTag::Captured).count();
    captured as f64 / cells.len() as f64
}
