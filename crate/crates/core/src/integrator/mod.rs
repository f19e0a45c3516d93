//! Adaptive, error-controlled integration of the slow-fast flow with
//! oriented section-crossing events, escape detection, capture by the
//! small-amplitude periodic orbit, and periodic-orbit location.

mod dopri5;

pub use dopri5::{ATOL, H_MAX, H_MIN, RTOL};
#[cfg(test)]
pub(crate) use dopri5::fixed_step_run;
pub(crate) use dopri5::Stepper;

use crate::error::{Error, Result};
use crate::math::{axpy, cross, dot, norm, normalize, scale, sub, Vec3};
use crate::system::{classify_equilibrium, vector_field, EquilibriumType, Params, State};

/// Tolerance on the surface function at a refined crossing.
const G_TOL: f64 = 1e-12;
/// Seeds closer to the section than this count as "on" it, so the departure
/// is not mistaken for a crossing when a run restarts from a refined hit.
const SEED_DEADBAND: f64 = 1e-10;
/// Interior samples per accepted step when scanning for sign changes.
const N_SUB: usize = 8;
const BISECT_MAX: usize = 80;

/// Default capture tube around the periodic orbit and required dwell,
/// measured in orbit periods.
pub const TUBE_RADIUS: f64 = 0.05;
pub const TUBE_DWELL_PERIODS: f64 = 3.0;

/// Named section surfaces: planes of constant x or constant z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Surface {
    XPlane(f64),
    ZPlane(f64),
}

impl Surface {
    pub fn g(&self, s: &Vec3) -> f64 {
        match self {
            Surface::XPlane(x0) => s[0] - x0,
            Surface::ZPlane(z0) => s[2] - z0,
        }
    }

    fn plane(&self) -> (Vec3, f64) {
        match self {
            Surface::XPlane(x0) => ([1.0, 0.0, 0.0], *x0),
            Surface::ZPlane(z0) => ([0.0, 0.0, 1.0], *z0),
        }
    }
}

/// Crossing orientation, read against the forward vector field: the sign of
/// dg/dt where t is the system's own (forward) time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Increasing,
    Decreasing,
    Any,
}

impl Orientation {
    fn admits(&self, rate: f64) -> bool {
        match self {
            Orientation::Increasing => rate > 0.0,
            Orientation::Decreasing => rate < 0.0,
            Orientation::Any => rate != 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn sign(&self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

/// Stopping conditions for one run: the oriented section crossing to wait
/// for, plus escape and timeout bounds.
#[derive(Debug, Clone)]
pub struct EventSpec {
    pub surface: Surface,
    pub orientation: Orientation,
    /// Stop at this oriented crossing (1 = first).
    pub count: usize,
    pub escape_radius: f64,
    pub t_max: f64,
    /// When set, crossings only count after |g| has exceeded this value at
    /// least once. Suppresses the trivial re-crossing at departure when the
    /// seed lies on (or near) the section.
    pub arm_radius: Option<f64>,
}

impl EventSpec {
    pub fn new(surface: Surface, orientation: Orientation, count: usize) -> Self {
        EventSpec {
            surface,
            orientation,
            count,
            escape_radius: 10.0,
            t_max: 600.0,
            arm_radius: None,
        }
    }

    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn with_arm_radius(mut self, r: f64) -> Self {
        self.arm_radius = Some(r);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidParams("event count must be >= 1".into()));
        }
        if !(self.escape_radius > 0.0) || !(self.t_max > 0.0) {
            return Err(Error::InvalidParams(
                "escape_radius and t_max must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeTag {
    Returned,
    Captured,
    Unbounded,
    Timeout,
}

/// Classified result of one return attempt.
#[derive(Debug, Clone)]
pub struct ReturnOutcome {
    pub tag: OutcomeTag,
    /// Present iff tag == Returned: the crossing state and its time.
    pub hit: Option<(State, f64)>,
    pub stats: Option<crate::sections::TrajectoryStats>,
}

/// Time-stamped solution mesh with per-step dense-output segments.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    segments: Vec<Segment>,
}

#[derive(Debug, Clone)]
struct Segment {
    t0: f64,
    h: f64,
    cont: [Vec3; 5],
}

impl Trajectory {
    fn new(t0: f64, s0: State) -> Self {
        Trajectory {
            times: vec![t0],
            states: vec![s0],
            segments: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn first(&self) -> &State {
        &self.states[0]
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("trajectory is never empty")
    }

    /// Dense-output evaluation at any time covered by the mesh.
    pub fn interpolate(&self, t: f64) -> Option<State> {
        if self.segments.is_empty() {
            return None;
        }
        let forward = self.segments[0].h > 0.0;
        let t_begin = self.times[0];
        let t_end = self.last_time();
        let inside = if forward {
            (t_begin..=t_end).contains(&t)
        } else {
            (t_end..=t_begin).contains(&t)
        };
        if !inside {
            return None;
        }
        // Binary search for the segment containing t.
        let mut lo = 0usize;
        let mut hi = self.segments.len();
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            let starts_after = if forward {
                self.segments[mid].t0 <= t
            } else {
                self.segments[mid].t0 >= t
            };
            if starts_after {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let seg = &self.segments[lo];
        let theta = ((t - seg.t0) / seg.h).clamp(0.0, 1.0);
        // Mesh times evaluate to the stored states exactly: theta lands on
        // 0 or 1 there and the interpolant is exact at step ends.
        Some(State::from_array(&dopri5::eval_dense(&seg.cont, theta)))
    }

    /// Per-segment extremum scan of one coordinate (0 = x, 1 = y, 2 = z):
    /// mesh values plus interior samples of each step interpolant.
    pub fn coord_extremum(&self, coord: usize, maximize: bool) -> f64 {
        let pick = |a: f64, b: f64| if maximize { a.max(b) } else { a.min(b) };
        let mut best = self.states[0].to_array()[coord];
        for s in &self.states[1..] {
            best = pick(best, s.to_array()[coord]);
        }
        for seg in &self.segments {
            for k in 1..4 {
                let v = dopri5::eval_dense(&seg.cont, 0.25 * k as f64)[coord];
                best = pick(best, v);
            }
        }
        best
    }
}

/// Internal event plane: g(s) = normal . s - offset. Generalizes the public
/// surfaces so the periodic-orbit section can reuse the same machinery.
#[derive(Clone)]
pub(crate) struct PlaneSpec {
    pub normal: Vec3,
    pub offset: f64,
    pub orientation: Orientation,
    pub count: usize,
    pub arm_radius: Option<f64>,
}

impl PlaneSpec {
    pub(crate) fn from_event(ev: &EventSpec) -> Self {
        let (normal, offset) = ev.surface.plane();
        PlaneSpec {
            normal,
            offset,
            orientation: ev.orientation,
            count: ev.count,
            arm_radius: ev.arm_radius,
        }
    }

    fn g(&self, y: &Vec3) -> f64 {
        dot(&self.normal, y) - self.offset
    }
}

pub(crate) struct RunBounds {
    pub escape_radius: f64,
    pub t_max: f64,
}

pub(crate) struct TubeSpec<'a> {
    pub samples: &'a [State],
    pub radius: f64,
    pub dwell_time: f64,
}

impl<'a> TubeSpec<'a> {
    pub fn from_orbit(gamma: &'a PeriodicOrbit, radius: f64, dwell_periods: f64) -> Self {
        TubeSpec {
            samples: &gamma.samples,
            radius,
            dwell_time: dwell_periods * gamma.period,
        }
    }
}

struct TubeMonitor<'a> {
    spec: &'a TubeSpec<'a>,
    bb_lo: Vec3,
    bb_hi: Vec3,
    enter_t: Option<f64>,
}

impl<'a> TubeMonitor<'a> {
    fn new(spec: &'a TubeSpec<'a>) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for s in spec.samples {
            let v = s.to_array();
            for i in 0..3 {
                lo[i] = lo[i].min(v[i]);
                hi[i] = hi[i].max(v[i]);
            }
        }
        for i in 0..3 {
            lo[i] -= spec.radius;
            hi[i] += spec.radius;
        }
        TubeMonitor { spec, bb_lo: lo, bb_hi: hi, enter_t: None }
    }

    /// Returns true once the state has stayed inside the tube for the
    /// required dwell time. `t_abs` must be monotone increasing.
    fn poll(&mut self, t_abs: f64, y: &Vec3) -> bool {
        let in_box = (0..3).all(|i| y[i] >= self.bb_lo[i] && y[i] <= self.bb_hi[i]);
        if !in_box {
            self.enter_t = None;
            return false;
        }
        let r2 = self.spec.radius * self.spec.radius;
        let mut d2 = f64::INFINITY;
        for s in self.spec.samples {
            let d = sub(&s.to_array(), y);
            let dd = dot(&d, &d);
            if dd < d2 {
                d2 = dd;
                if d2 <= r2 {
                    break;
                }
            }
        }
        if d2 <= r2 {
            match self.enter_t {
                None => {
                    self.enter_t = Some(t_abs);
                    false
                }
                Some(t0) => t_abs - t0 >= self.spec.dwell_time,
            }
        } else {
            self.enter_t = None;
            false
        }
    }
}

pub(crate) struct RunResult {
    pub tag: OutcomeTag,
    pub hit: Option<(State, f64)>,
    pub last_hit: Option<(State, f64)>,
    pub crossings: u32,
    pub traj: Option<Trajectory>,
    pub end_state: State,
    pub end_time: f64,
}

impl RunResult {
    pub fn outcome(&self) -> ReturnOutcome {
        ReturnOutcome {
            tag: self.tag,
            hit: if self.tag == OutcomeTag::Returned { self.hit } else { None },
            stats: None,
        }
    }
}

fn sign_of(g: f64) -> i8 {
    if g > 0.0 {
        1
    } else if g < 0.0 {
        -1
    } else {
        0
    }
}

/// Core driver: integrate `f` from `s0` until the count-th oriented plane
/// crossing, escape, capture, or timeout, whichever comes first.
pub(crate) fn run_plane_event<F: Fn(&Vec3) -> Vec3>(
    f: &F,
    s0: State,
    dir: Direction,
    plane: Option<&PlaneSpec>,
    bounds: &RunBounds,
    tube: Option<&TubeSpec>,
    record: bool,
) -> Result<RunResult> {
    let dsign = dir.sign();
    let t_limit = bounds.t_max * dsign;
    let y0 = s0.to_array();
    let mut stepper = Stepper::new(f, y0, dsign);
    let mut traj = record.then(|| Trajectory::new(0.0, s0));
    let mut monitor = tube.map(TubeMonitor::new);

    let mut last_sign: i8 = plane.map_or(0, |p| {
        let g0 = p.g(&y0);
        if g0.abs() < SEED_DEADBAND {
            0
        } else {
            sign_of(g0)
        }
    });
    let mut armed = plane.map_or(true, |p| match p.arm_radius {
        Some(r) => p.g(&y0).abs() > r,
        None => true,
    });
    let mut crossings: u32 = 0;
    let mut last_hit: Option<(State, f64)> = None;

    loop {
        let rec = stepper.step(t_limit)?;
        // 1. Section crossings inside this step, in time order.
        if let Some(pl) = plane {
            let mut theta_prev = 0.0f64;
            for j in 1..=N_SUB {
                let theta = j as f64 / N_SUB as f64;
                let y_th = rec.eval(theta);
                let g_th = pl.g(&y_th);
                let s_th = sign_of(g_th);
                if s_th != 0 {
                    if last_sign != 0 && s_th != last_sign {
                        // Refine the crossing by bisection on the interpolant.
                        let (theta_c, y_c) = refine_crossing(pl, &rec, theta_prev, theta, last_sign);
                        let t_c = rec.t0 + theta_c * rec.h;
                        let rate = dot(&pl.normal, &f(&y_c));
                        if armed && pl.orientation.admits(rate) {
                            crossings += 1;
                            let hit_state = State::from_array(&y_c);
                            last_hit = Some((hit_state, t_c));
                            if crossings as usize >= pl.count {
                                if let Some(tr) = traj.as_mut() {
                                    tr.segments.push(Segment { t0: rec.t0, h: rec.h, cont: rec.cont });
                                    tr.times.push(t_c);
                                    tr.states.push(hit_state);
                                }
                                return Ok(RunResult {
                                    tag: OutcomeTag::Returned,
                                    hit: Some((hit_state, t_c)),
                                    last_hit,
                                    crossings,
                                    traj,
                                    end_state: hit_state,
                                    end_time: t_c,
                                });
                            }
                        }
                    }
                    last_sign = s_th;
                    theta_prev = theta;
                }
                if let (Some(r), false) = (pl.arm_radius, armed) {
                    if g_th.abs() > r {
                        armed = true;
                    }
                }
            }
        }
        if let Some(tr) = traj.as_mut() {
            tr.segments.push(Segment { t0: rec.t0, h: rec.h, cont: rec.cont });
            tr.times.push(stepper.t);
            tr.states.push(State::from_array(&rec.y1));
        }
        let end_state = State::from_array(&rec.y1);
        // 2. Escape.
        if !end_state.is_finite() || norm(&rec.y1) > bounds.escape_radius {
            return Ok(RunResult {
                tag: OutcomeTag::Unbounded,
                hit: None,
                last_hit,
                crossings,
                traj,
                end_state,
                end_time: stepper.t,
            });
        }
        // 3. Capture by the periodic orbit.
        if let Some(mon) = monitor.as_mut() {
            if mon.poll(stepper.t.abs(), &rec.y1) {
                return Ok(RunResult {
                    tag: OutcomeTag::Captured,
                    hit: None,
                    last_hit,
                    crossings,
                    traj,
                    end_state,
                    end_time: stepper.t,
                });
            }
        }
        // 4. Timeout.
        if stepper.t == t_limit {
            return Ok(RunResult {
                tag: OutcomeTag::Timeout,
                hit: None,
                last_hit,
                crossings,
                traj,
                end_state,
                end_time: stepper.t,
            });
        }
    }
}

fn refine_crossing(
    pl: &PlaneSpec,
    rec: &dopri5::StepRecord,
    mut theta_a: f64,
    mut theta_b: f64,
    sign_a: i8,
) -> (f64, Vec3) {
    let mut theta_m = theta_b;
    let mut y_m = rec.eval(theta_m);
    for _ in 0..BISECT_MAX {
        theta_m = 0.5 * (theta_a + theta_b);
        y_m = rec.eval(theta_m);
        let g_m = pl.g(&y_m);
        if g_m.abs() < G_TOL {
            return (theta_m, y_m);
        }
        if sign_of(g_m) == sign_a {
            theta_a = theta_m;
        } else {
            theta_b = theta_m;
        }
    }
    (theta_m, y_m)
}

/// Integrate the slow-fast flow from `s0` until the event resolves.
pub fn integrate(
    p: &Params,
    s0: &State,
    dir: Direction,
    ev: &EventSpec,
) -> Result<(Trajectory, ReturnOutcome)> {
    p.validate()?;
    ev.validate()?;
    let f = |y: &Vec3| vector_field(p, &State::from_array(y));
    let plane = PlaneSpec::from_event(ev);
    let bounds = RunBounds { escape_radius: ev.escape_radius, t_max: ev.t_max };
    let res = run_plane_event(&f, *s0, dir, Some(&plane), &bounds, None, true)?;
    let outcome = res.outcome();
    Ok((res.traj.expect("trajectory was recorded"), outcome))
}

/// A located attracting periodic orbit.
#[derive(Debug, Clone)]
pub struct PeriodicOrbit {
    pub anchor: State,
    pub period: f64,
    pub samples: Vec<State>,
    /// Contraction factor of the local section map for a small transported
    /// perturbation; < 1 for an attracting orbit.
    pub floquet_proxy: f64,
}

const ORBIT_SEED_OFFSET: f64 = 1e-3;
const ORBIT_TRANSIENT: f64 = 200.0;
const ORBIT_RETURN_TOL: f64 = 1e-10;
const ORBIT_RETURN_PLATEAU: f64 = 1e-8;
const ORBIT_MAX_RETURNS: usize = 300;
const ORBIT_MAX_CYCLE: usize = 32;
const ORBIT_RETURN_TMAX: f64 = 100.0;
const FLOQUET_OFFSET: f64 = 1e-6;
/// Reject spurious micro-returns when the section iteration stalls on a
/// near-section point.
const MIN_PERIOD: f64 = 1e-3;
/// Seed phases tried around the unstable plane. At parameters far past the
/// manifold tangency most rays escape to large-amplitude motion; a few
/// phases still land in the small orbit's basin.
const ORBIT_SEED_PHASES: usize = 16;
/// Amplitude box separating the small-amplitude orbit from large-amplitude
/// mixed-mode attractors (which dip below the far fold and climb past the
/// x = 1/3 reinjection point).
const SMALL_X_MAX: f64 = 0.25;
const SMALL_X_MIN: f64 = -0.5;
const SETTLE_PROBE_TIME: f64 = 40.0;
/// Continuation fallback: step in nu while tracking the orbit.
const ORBIT_CONT_STEP: f64 = 2e-4;
/// Spatial spacing of the stored orbit samples.
const SAMPLE_SPACING: f64 = 2e-3;

/// Locate the small-amplitude attracting periodic orbit born from the Hopf
/// bifurcation. Seeds 1e-3 off the equilibrium in the unstable plane (several
/// phases), burns a transient, validates that the settled motion is small,
/// then detects a cycle of the local section map through the equilibrium.
/// When every seed escapes to large-amplitude motion, the orbit is tracked
/// up from smaller nu by continuation.
pub fn find_periodic_orbit(p: &Params) -> Result<PeriodicOrbit> {
    let eq = classify_equilibrium(p)?;
    if eq.type_tag != EquilibriumType::SaddleFocus {
        return Err(Error::NotCaptured);
    }
    let loc = eq.location.to_array();
    for k in 0..ORBIT_SEED_PHASES {
        let th = std::f64::consts::TAU * k as f64 / ORBIT_SEED_PHASES as f64;
        let dir = axpy(
            &scale(&eq.unstable_plane[0], th.cos()),
            th.sin(),
            &eq.unstable_plane[1],
        );
        let seed = State::from_array(&axpy(&loc, ORBIT_SEED_OFFSET, &dir));
        if let Some(settled) = settle_small(p, &seed) {
            if let Ok(orbit) = cycle_from_settled(p, &loc, &settled, &eq.unstable_plane[0]) {
                return Ok(orbit);
            }
        }
    }
    // Continuation fallback: find a nu where the direct seeding captures,
    // then walk the orbit up to the requested parameters.
    let nu_target = p.nu;
    for k in (1..8).rev() {
        let nu_base = nu_target * k as f64 / 8.0;
        let pb = p.with_nu(nu_base);
        let Ok(eq_b) = classify_equilibrium(&pb) else { continue };
        if eq_b.type_tag != EquilibriumType::SaddleFocus {
            continue;
        }
        let seed = State::from_array(&axpy(
            &eq_b.location.to_array(),
            ORBIT_SEED_OFFSET,
            &eq_b.unstable_plane[0],
        ));
        let Some(mut settled) = settle_small(&pb, &seed) else { continue };
        let mut nu = nu_base;
        let mut on_track = true;
        while nu < nu_target && on_track {
            nu = (nu + ORBIT_CONT_STEP).min(nu_target);
            match settle_small(&p.with_nu(nu), &settled) {
                Some(s) => settled = s,
                None => on_track = false,
            }
        }
        if on_track {
            if let Ok(orbit) = cycle_from_settled(p, &loc, &settled, &eq.unstable_plane[0]) {
                return Ok(orbit);
            }
        }
    }
    Err(Error::NotCaptured)
}

/// Transient plus amplitude probe: returns the settled state when the motion
/// stays inside the small-amplitude box.
fn settle_small(p: &Params, seed: &State) -> Option<State> {
    let f = |y: &Vec3| vector_field(p, &State::from_array(y));
    let bounds = RunBounds { escape_radius: 10.0, t_max: ORBIT_TRANSIENT };
    let res = run_plane_event(&f, *seed, Direction::Forward, None, &bounds, None, false).ok()?;
    if res.tag != OutcomeTag::Timeout {
        return None;
    }
    let probe = RunBounds { escape_radius: 10.0, t_max: SETTLE_PROBE_TIME };
    let pr = run_plane_event(&f, res.end_state, Direction::Forward, None, &probe, None, true).ok()?;
    if pr.tag != OutcomeTag::Timeout {
        return None;
    }
    let traj = pr.traj.expect("recorded");
    let x_max = traj.coord_extremum(0, true);
    let x_min = traj.coord_extremum(0, false);
    (x_max < SMALL_X_MAX && x_min > SMALL_X_MIN).then_some(pr.end_state)
}

/// Detect an m-cycle of the section map through the equilibrium and package
/// it as a periodic orbit.
fn cycle_from_settled(
    p: &Params,
    eq_location: &Vec3,
    settled: &State,
    plane_hint: &Vec3,
) -> Result<PeriodicOrbit> {
    let f = |y: &Vec3| vector_field(p, &State::from_array(y));
    let ft = f(&settled.to_array());
    let n = normalize(&ft).ok_or(Error::NotCaptured)?;
    let plane = PlaneSpec {
        normal: n,
        offset: dot(&n, eq_location),
        orientation: Orientation::Increasing,
        count: 1,
        arm_radius: None,
    };
    let leg = RunBounds { escape_radius: 10.0, t_max: ORBIT_RETURN_TMAX };

    let mut hits: Vec<(Vec3, f64)> = Vec::new();
    let mut cur = *settled;
    let mut cycle: Option<(usize, usize)> = None; // (index of anchor hit, m)
    'outer: for _ in 0..ORBIT_MAX_RETURNS {
        let r = run_plane_event(&f, cur, Direction::Forward, Some(&plane), &leg, None, false)?;
        let Some((hit, t_hit)) = r.hit else {
            return Err(Error::NotCaptured);
        };
        hits.push((hit.to_array(), t_hit));
        cur = hit;
        let k = hits.len() - 1;
        for m in 1..=ORBIT_MAX_CYCLE.min(k) {
            let d = norm(&sub(&hits[k].0, &hits[k - m].0));
            if d < ORBIT_RETURN_TOL {
                let period: f64 = hits[k - m + 1..=k].iter().map(|h| h.1).sum();
                if period > MIN_PERIOD {
                    cycle = Some((k, m));
                    break 'outer;
                }
            }
        }
    }
    // Plateau fallback near the refinement noise floor.
    if cycle.is_none() {
        let k = hits.len().saturating_sub(1);
        'plateau: for m in 1..=ORBIT_MAX_CYCLE.min(k) {
            let d = norm(&sub(&hits[k].0, &hits[k - m].0));
            if d < ORBIT_RETURN_PLATEAU {
                let period: f64 = hits[k - m + 1..=k].iter().map(|h| h.1).sum();
                if period > MIN_PERIOD {
                    cycle = Some((k, m));
                    break 'plateau;
                }
            }
        }
    }
    let Some((k, m)) = cycle else {
        return Err(Error::NotCaptured);
    };
    let anchor_v = hits[k].0;
    let period: f64 = hits[k - m + 1..=k].iter().map(|h| h.1).sum();
    let anchor = State::from_array(&anchor_v);

    // The orbit must itself stay in the small-amplitude box.
    let one_period = RunBounds { escape_radius: 10.0, t_max: period };
    let samp = run_plane_event(&f, anchor, Direction::Forward, None, &one_period, None, true)?;
    let traj = samp.traj.expect("recorded");
    if traj.coord_extremum(0, true) >= SMALL_X_MAX || traj.coord_extremum(0, false) <= SMALL_X_MIN {
        return Err(Error::NotCaptured);
    }
    let samples = downsample_states(&traj.states, SAMPLE_SPACING);

    // Transport a small in-plane perturbation once around the cycle.
    let e = in_plane_direction(&n, plane_hint);
    let mut tp = State::from_array(&axpy(&anchor_v, FLOQUET_OFFSET, &e));
    let mut ok = true;
    for _ in 0..m {
        match run_plane_event(&f, tp, Direction::Forward, Some(&plane), &leg, None, false)?.hit {
            Some((h, _)) => tp = h,
            None => {
                ok = false;
                break;
            }
        }
    }
    let floquet_proxy = if ok { tp.dist(&anchor) / FLOQUET_OFFSET } else { f64::INFINITY };
    Ok(PeriodicOrbit { anchor, period, samples, floquet_proxy })
}

fn downsample_states(states: &[State], spacing: f64) -> Vec<State> {
    let mut out: Vec<State> = Vec::new();
    for s in states {
        if out.last().map_or(true, |l| l.dist(s) >= spacing) {
            out.push(*s);
        }
    }
    if out.len() < 2 {
        out = states.to_vec();
    }
    out
}

fn in_plane_direction(n: &Vec3, hint: &Vec3) -> Vec3 {
    let c = cross(n, hint);
    if let Some(e) = normalize(&c) {
        return e;
    }
    for fallback in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]] {
        if let Some(e) = normalize(&cross(n, &fallback)) {
            return e;
        }
    }
    [0.0, 0.0, 1.0]
}

/// Capture rule: inside a tube of `tube_radius` around the orbit for
/// `dwell_periods` consecutive periods without triggering the section event.
#[derive(Debug, Clone, Copy)]
pub struct CaptureSpec {
    pub tube_radius: f64,
    pub dwell_periods: f64,
}

impl Default for CaptureSpec {
    fn default() -> Self {
        CaptureSpec { tube_radius: TUBE_RADIUS, dwell_periods: TUBE_DWELL_PERIODS }
    }
}

/// Integrate with the section event armed while monitoring distance to the
/// periodic orbit; Captured preempts the other outcomes once the trajectory
/// has dwelt inside the tube long enough.
pub fn classify_capture(
    p: &Params,
    s0: &State,
    section: &EventSpec,
    gamma: &PeriodicOrbit,
) -> Result<(Trajectory, ReturnOutcome)> {
    classify_capture_with(p, s0, section, gamma, CaptureSpec::default())
}

pub fn classify_capture_with(
    p: &Params,
    s0: &State,
    section: &EventSpec,
    gamma: &PeriodicOrbit,
    capture: CaptureSpec,
) -> Result<(Trajectory, ReturnOutcome)> {
    p.validate()?;
    section.validate()?;
    let f = |y: &Vec3| vector_field(p, &State::from_array(y));
    let plane = PlaneSpec::from_event(section);
    let bounds = RunBounds { escape_radius: section.escape_radius, t_max: section.t_max };
    let tube = TubeSpec::from_orbit(gamma, capture.tube_radius, capture.dwell_periods);
    let res = run_plane_event(&f, *s0, Direction::Forward, Some(&plane), &bounds, Some(&tube), true)?;
    let outcome = res.outcome();
    Ok((res.traj.expect("trajectory was recorded"), outcome))
}

/// Streaming variant used by grid sweeps: identical classification but the
/// trajectory mesh is not retained. Returns the run summary.
pub(crate) fn classify_capture_summary(
    p: &Params,
    s0: &State,
    section: &EventSpec,
    gamma: Option<&PeriodicOrbit>,
    capture: CaptureSpec,
) -> Result<RunResult> {
    let f = |y: &Vec3| vector_field(p, &State::from_array(y));
    let plane = PlaneSpec::from_event(section);
    let bounds = RunBounds { escape_radius: section.escape_radius, t_max: section.t_max };
    let tube = gamma.map(|g| TubeSpec::from_orbit(g, capture.tube_radius, capture.dwell_periods));
    run_plane_event(&f, *s0, Direction::Forward, Some(&plane), &bounds, tube.as_ref(), false)
}

/// Locate the next oriented crossing of an arbitrary plane
/// {s : normal . s = offset}, or None if the run escapes or times out first.
pub fn next_plane_crossing(
    p: &Params,
    s0: &State,
    normal: Vec3,
    offset: f64,
    orientation: Orientation,
    t_max: f64,
) -> Result<Option<(State, f64)>> {
    let f = |y: &Vec3| vector_field(p, &State::from_array(y));
    let plane = PlaneSpec { normal, offset, orientation, count: 1, arm_radius: None };
    let bounds = RunBounds { escape_radius: 10.0, t_max };
    let res = run_plane_event(&f, *s0, Direction::Forward, Some(&plane), &bounds, None, false)?;
    Ok(res.hit)
}

/// Advance the flow for a plain time interval (no events); returns the final
/// state. Used for transients.
pub fn advance(p: &Params, s0: &State, dir: Direction, t: f64) -> Result<State> {
    let f = |y: &Vec3| vector_field(p, &State::from_array(y));
    let bounds = RunBounds { escape_radius: 10.0, t_max: t };
    let res = run_plane_event(&f, *s0, dir, None, &bounds, None, false)?;
    Ok(res.end_state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_params(nu: f64) -> Params {
        Params::new(0.01, nu, -0.3, -1.0, 1.0).unwrap()
    }

    #[test]
    fn event_refinement_hits_surface() {
        // x' = 1 through the plane x = 0.5.
        let f = |_: &Vec3| [1.0, 0.0, 0.0];
        let plane = PlaneSpec {
            normal: [1.0, 0.0, 0.0],
            offset: 0.5,
            orientation: Orientation::Increasing,
            count: 1,
            arm_radius: None,
        };
        let bounds = RunBounds { escape_radius: 10.0, t_max: 5.0 };
        let res =
            run_plane_event(&f, State::new(0.0, 0.0, 0.0), Direction::Forward, Some(&plane), &bounds, None, true)
                .unwrap();
        assert_eq!(res.tag, OutcomeTag::Returned);
        let (hit, t) = res.hit.unwrap();
        assert!((hit.x - 0.5).abs() < 1e-12, "|g| = {}", (hit.x - 0.5).abs());
        assert!((t - 0.5).abs() < 1e-9);
        // Crossing time lies strictly inside the run.
        assert!(t > 0.0 && t < 5.0);
    }

    #[test]
    fn orientation_filter_skips_wrong_way_crossings() {
        // Circular motion in (x, z): crosses z = 0 in both directions.
        let f = |y: &Vec3| [-y[2], 0.0, y[0]];
        let plane = PlaneSpec {
            normal: [0.0, 0.0, 1.0],
            offset: 0.0,
            orientation: Orientation::Decreasing,
            count: 1,
            arm_radius: None,
        };
        let bounds = RunBounds { escape_radius: 10.0, t_max: 20.0 };
        let res =
            run_plane_event(&f, State::new(1.0, 0.0, 0.0), Direction::Forward, Some(&plane), &bounds, None, false)
                .unwrap();
        // First decreasing crossing is at t = pi (x = -1), not t = 0.
        let (hit, t) = res.hit.unwrap();
        assert!((t - std::f64::consts::PI).abs() < 1e-6);
        assert!((hit.x + 1.0).abs() < 1e-6);
    }

    #[test]
    fn seed_on_section_does_not_count_departure() {
        // z' = -1 from z = 0: the seed sits on the section and leaves
        // downward; that must not count as a Decreasing crossing.
        let f = |_: &Vec3| [0.0, 0.0, -1.0];
        let plane = PlaneSpec {
            normal: [0.0, 0.0, 1.0],
            offset: 0.0,
            orientation: Orientation::Decreasing,
            count: 1,
            arm_radius: None,
        };
        let bounds = RunBounds { escape_radius: 10.0, t_max: 3.0 };
        let res =
            run_plane_event(&f, State::new(0.0, 0.0, 0.0), Direction::Forward, Some(&plane), &bounds, None, false)
                .unwrap();
        assert_eq!(res.tag, OutcomeTag::Timeout);
        assert_eq!(res.crossings, 0);
    }

    #[test]
    fn escape_detection() {
        let f = |y: &Vec3| [y[0], 0.0, 0.0];
        let bounds = RunBounds { escape_radius: 10.0, t_max: 50.0 };
        let res =
            run_plane_event(&f, State::new(1.0, 0.0, 0.0), Direction::Forward, None, &bounds, None, false).unwrap();
        assert_eq!(res.tag, OutcomeTag::Unbounded);
        assert!(norm(&res.end_state.to_array()) > 10.0);
    }

    #[test]
    fn trajectory_mesh_times_strictly_monotone_and_interp_exact() {
        let p = base_params(0.00870134);
        let ev = EventSpec::new(Surface::XPlane(0.0), Orientation::Any, 1).with_t_max(2.0);
        let (traj, _) = integrate(&p, &State::new(0.3, 0.12, 0.05), Direction::Forward, &ev).unwrap();
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        for (i, &t) in traj.times.iter().enumerate() {
            let s = traj.interpolate(t).unwrap();
            assert_eq!(s, traj.states[i], "mesh point {i} not reproduced exactly");
        }
    }

    #[test]
    fn backward_run_times_decrease() {
        let p = base_params(0.00870134);
        let ev = EventSpec::new(Surface::ZPlane(-5.0), Orientation::Any, 1).with_t_max(1.0);
        let (traj, _) = integrate(&p, &State::new(0.3, 0.12, 0.05), Direction::Backward, &ev).unwrap();
        assert!(traj.times.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn deterministic_meshes() {
        let p = base_params(0.00802);
        let ev = EventSpec::new(Surface::XPlane(0.0), Orientation::Any, 1).with_t_max(5.0);
        let s0 = State::new(0.3, 0.117, 0.06);
        let (t1, _) = integrate(&p, &s0, Direction::Forward, &ev).unwrap();
        let (t2, _) = integrate(&p, &s0, Direction::Forward, &ev).unwrap();
        assert_eq!(t1.times, t2.times);
        assert!(t1
            .states
            .iter()
            .zip(&t2.states)
            .all(|(a, b)| a == b));
    }

    #[test]
    fn gamma_exists_and_is_attracting_at_tangency_parameters() {
        let p = base_params(0.00648);
        let gamma = find_periodic_orbit(&p).unwrap();
        assert!(gamma.period > 0.0);
        // Small amplitude: the orbit stays well below the outer branches.
        let max_x = gamma.samples.iter().map(|s| s.x.abs()).fold(0.0, f64::max);
        assert!(max_x < 0.2, "orbit |x| reaches {max_x}");
        assert!(gamma.floquet_proxy < 1.0, "floquet proxy {}", gamma.floquet_proxy);
        // Re-integration from the anchor for one period closes up.
        let back = advance(&p, &gamma.anchor, Direction::Forward, gamma.period).unwrap();
        assert!(back.dist(&gamma.anchor) < 1e-8, "closure gap {}", back.dist(&gamma.anchor));
    }

    #[test]
    fn capture_from_point_on_orbit() {
        let p = base_params(0.00648);
        let gamma = find_periodic_orbit(&p).unwrap();
        let section = EventSpec::new(Surface::XPlane(0.27), Orientation::Any, 1)
            .with_t_max(100.0)
            .with_arm_radius(0.05);
        let (_, out) = classify_capture(&p, &gamma.anchor, &section, &gamma).unwrap();
        assert_eq!(out.tag, OutcomeTag::Captured);
    }

    #[test]
    fn forward_backward_consistency_near_fold() {
        // Round trips are only well-conditioned where the fast contraction
        // is weak, i.e. |x| small; strong contraction amplifies the reverse
        // leg's local errors by exp(|f_x| t / eps).
        let p = base_params(0.00870134);
        let seeds = [
            State::new(0.02, 0.001, 0.01),
            State::new(-0.03, 0.002, -0.01),
            State::new(0.05, 0.0, 0.02),
        ];
        for s0 in seeds {
            let fwd = advance(&p, &s0, Direction::Forward, 1.0).unwrap();
            let back = advance(&p, &fwd, Direction::Backward, 1.0).unwrap();
            assert!(
                back.dist(&s0) < 1e-7,
                "round trip from {:?} drifted {}",
                s0,
                back.dist(&s0)
            );
        }
    }
}
