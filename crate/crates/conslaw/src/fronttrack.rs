//! Wave-front tracking: exact evolution of piecewise constant data under a
//! polygonal (piecewise linear) approximation of the flux. Every jump in
//! the data resolves into finitely many fronts through grid-level envelope
//! constructions, and fronts interact through an event queue processed in
//! time order.

use crate::error::{Error, Result};
use crate::flux::{detect_inflections, FluxModel, Piece};
use crate::pwfun::PiecewiseConstantFn;
use serde::Serialize;
use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Hard cap on the number of value-grid nodes.
pub const GRID_CAP: usize = 1_000_000;

/// Default cap on processed collisions.
pub const EVENT_CAP: usize = 2_000_000;

/// Guard band for time and position coincidence tests.
pub const GUARD: f64 = 1e-12;

/// The flux sampled on a finite value grid; between nodes it is linear, so
/// solutions starting on the grid stay on the grid forever.
#[derive(Debug, Clone)]
pub struct PolygonalFlux {
    grid: Vec<f64>,
    fvals: Vec<f64>,
}

impl PolygonalFlux {
    /// Sample `m` on a uniform grid of spacing `dv` spanning all
    /// `key_values` with one spacing of margin, augmented with the key
    /// values themselves, the flux knots, and the inflection values.
    pub fn polygonalize(m: &FluxModel, key_values: &[f64], dv: f64, extra: &[f64]) -> Result<Self> {
        if !(dv > 0.0) {
            return Err(Error::InvalidFlux(format!("bad grid spacing {}", dv)));
        }
        if key_values.is_empty() {
            return Err(Error::InvalidFlux("no key values to polygonalize around".into()));
        }
        let (mlo, mhi) = m.range();
        let vmin = key_values.iter().cloned().fold(f64::INFINITY, f64::min);
        let vmax = key_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = (vmin - dv).max(mlo);
        let hi = (vmax + dv).min(mhi);
        let n_uniform = ((hi - lo) / dv).ceil() as usize;
        if n_uniform + key_values.len() + extra.len() > GRID_CAP {
            return Err(Error::GridTooLarge {
                cap: GRID_CAP,
                requested: n_uniform + key_values.len() + extra.len(),
            });
        }
        let mut grid: Vec<f64> = Vec::with_capacity(n_uniform + 64);
        for i in 0..=n_uniform {
            grid.push((lo + dv * i as f64).min(hi));
        }
        grid.extend(key_values.iter().cloned());
        grid.extend(extra.iter().filter(|v| **v >= lo && **v <= hi));
        for k in m.knots() {
            if k > lo && k < hi {
                grid.push(k);
            }
        }
        for v in detect_inflections(m).values() {
            if v > lo && v < hi {
                grid.push(v);
            }
        }
        grid.sort_by(f64::total_cmp);
        let merge_tol = dv * 1e-9;
        grid.dedup_by(|a, b| (*a - *b).abs() <= merge_tol);
        let mut fvals = Vec::with_capacity(grid.len());
        for &v in &grid {
            fvals.push(m.eval(v, 0)?);
        }
        Ok(PolygonalFlux { grid, fvals })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn value(&self, idx: usize) -> f64 {
        self.grid[idx]
    }

    pub fn fval(&self, idx: usize) -> f64 {
        self.fvals[idx]
    }

    /// Index of the grid node nearest to `v`.
    pub fn nearest_index(&self, v: f64) -> usize {
        let i = self.grid.partition_point(|&g| g < v);
        if i == 0 {
            0
        } else if i >= self.grid.len() {
            self.grid.len() - 1
        } else if (v - self.grid[i - 1]) <= (self.grid[i] - v) {
            i - 1
        } else {
            i
        }
    }

    /// Chord slope of the polygonal flux between two nodes.
    pub fn chord(&self, i: usize, j: usize) -> f64 {
        (self.fvals[j] - self.fvals[i]) / (self.grid[j] - self.grid[i])
    }

    /// Centered slope at a node: the mean of the two adjacent chords, or
    /// the one-sided chord at the grid ends. This is the characteristic
    /// speed assigned to a grid value.
    pub fn d_centered(&self, idx: usize) -> f64 {
        let n = self.grid.len();
        if n < 2 {
            return 0.0;
        }
        if idx == 0 {
            self.chord(0, 1)
        } else if idx + 1 >= n {
            self.chord(n - 2, n - 1)
        } else {
            (self.fvals[idx + 1] - self.fvals[idx - 1]) / (self.grid[idx + 1] - self.grid[idx - 1])
        }
    }

    /// Admissible fan between node `i` (left state) and node `j` (right
    /// state): hull edges as `(left_index, right_index, speed)` ordered by
    /// increasing speed. Collinear nodes merge into a single front.
    pub fn fan_between(&self, i: usize, j: usize) -> Vec<(usize, usize, f64)> {
        if i == j {
            return Vec::new();
        }
        let (lo, hi, lower) = if i < j { (i, j, true) } else { (j, i, false) };
        // Monotone chain over nodes lo..=hi; lower hull for an upward jump,
        // upper hull for a downward one.
        let mut hull: Vec<usize> = Vec::new();
        for k in lo..=hi {
            let (xk, yk) = (self.grid[k], self.fvals[k]);
            while hull.len() >= 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                let cross = (self.grid[b] - self.grid[a]) * (yk - self.fvals[a])
                    - (self.fvals[b] - self.fvals[a]) * (xk - self.grid[a]);
                let pop = if lower { cross <= 0.0 } else { cross >= 0.0 };
                if pop {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(k);
        }
        let mut fronts = Vec::with_capacity(hull.len() - 1);
        if lower {
            for e in hull.windows(2) {
                fronts.push((e[0], e[1], self.chord(e[0], e[1])));
            }
        } else {
            for e in hull.windows(2).rev() {
                fronts.push((e[1], e[0], self.chord(e[0], e[1])));
            }
        }
        fronts
    }

    /// The polygonal flux as a first-class flux model (linear pieces).
    pub fn to_flux_model(&self) -> Result<FluxModel> {
        let mut pieces = Vec::with_capacity(self.grid.len() - 1);
        for k in 0..self.grid.len() - 1 {
            pieces.push(Piece {
                lo: self.grid[k],
                hi: self.grid[k + 1],
                coeffs: vec![self.fvals[k], self.chord(k, k + 1)],
            });
        }
        FluxModel::new_c0(pieces)
    }
}

/// One front: a straight discontinuity line in the (x, t) plane carrying
/// the jump between two grid values.
#[derive(Debug, Clone, Serialize)]
pub struct FrontRec {
    pub id: usize,
    pub born: f64,
    pub died: Option<f64>,
    /// Reference point of the trajectory x(t) = x0 + speed (t - t0).
    pub x0: f64,
    pub t0: f64,
    pub speed: f64,
    /// Grid index of the state on the left / right.
    pub li: usize,
    pub ri: usize,
}

impl FrontRec {
    pub fn pos(&self, t: f64) -> f64 {
        self.x0 + self.speed * (t - self.t0)
    }
}

/// A resolved interaction: the fronts that met and the fronts that left.
#[derive(Debug, Clone, Serialize)]
pub struct Collision {
    pub time: f64,
    pub x: f64,
    pub incoming: Vec<usize>,
    pub outgoing: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    pos: f64,
    left: usize,
    right: usize,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.pos.total_cmp(&other.pos))
            .then(self.left.cmp(&other.left))
            .then(self.right.cmp(&other.right))
    }
}

/// Event-driven simulation state.
pub struct FrontTracker {
    pub pf: PolygonalFlux,
    pub time: f64,
    fronts: Vec<FrontRec>,
    next: Vec<Option<usize>>,
    prev: Vec<Option<usize>>,
    head: Option<usize>,
    queue: BinaryHeap<Reverse<Event>>,
    pub log: Vec<Collision>,
    pub event_cap: usize,
    /// Grid index of the zero background state.
    pub background: usize,
    support: (f64, f64),
}

/// Build the initial front configuration from compactly supported data.
/// Every jump of the (grid-quantised) datum is resolved into its fan.
pub fn init_sim(pf: PolygonalFlux, datum: &PiecewiseConstantFn) -> Result<FrontTracker> {
    let datum = datum.normalized();
    let background = pf.nearest_index(0.0);
    let mut tracker = FrontTracker {
        pf,
        time: 0.0,
        fronts: Vec::new(),
        next: Vec::new(),
        prev: Vec::new(),
        head: None,
        queue: BinaryHeap::new(),
        log: Vec::new(),
        event_cap: EVENT_CAP,
        background,
        support: datum.support(),
    };

    // Quantised value indices, padded with the background on both sides.
    let mut idxs: Vec<usize> = vec![background];
    for &v in datum.values() {
        let idx = tracker.pf.nearest_index(v);
        if *idxs.last().unwrap() != idx {
            idxs.push(idx);
        } else {
            idxs.push(idx);
        }
    }
    idxs.push(background);

    let bps = datum.breakpoints();
    let mut last: Option<usize> = None;
    for k in 0..idxs.len() - 1 {
        let (a, b) = (idxs[k], idxs[k + 1]);
        if a == b {
            continue;
        }
        let x = bps[k.min(bps.len() - 1)];
        for (li, ri, speed) in tracker.pf.fan_between(a, b) {
            let id = tracker.alloc_front(0.0, x, 0.0, speed, li, ri);
            tracker.link_after(last, id);
            last = Some(id);
        }
    }
    // Predict collisions between fans born at neighbouring jumps.
    let mut cur = tracker.head;
    while let Some(id) = cur {
        if let Some(nid) = tracker.next[id] {
            tracker.predict(id, nid);
        }
        cur = tracker.next[id];
    }
    Ok(tracker)
}

impl FrontTracker {
    fn alloc_front(&mut self, born: f64, x0: f64, t0: f64, speed: f64, li: usize, ri: usize) -> usize {
        let id = self.fronts.len();
        self.fronts.push(FrontRec {
            id,
            born,
            died: None,
            x0,
            t0,
            speed,
            li,
            ri,
        });
        self.next.push(None);
        self.prev.push(None);
        id
    }

    fn link_after(&mut self, after: Option<usize>, id: usize) {
        match after {
            None => {
                self.next[id] = self.head;
                if let Some(h) = self.head {
                    self.prev[h] = Some(id);
                }
                self.head = Some(id);
            }
            Some(a) => {
                self.next[id] = self.next[a];
                self.prev[id] = Some(a);
                if let Some(n) = self.next[a] {
                    self.prev[n] = Some(id);
                }
                self.next[a] = Some(id);
            }
        }
    }

    fn unlink(&mut self, id: usize) {
        let (p, n) = (self.prev[id], self.next[id]);
        match p {
            Some(p) => self.next[p] = n,
            None => self.head = n,
        }
        if let Some(n) = n {
            self.prev[n] = p;
        }
        self.prev[id] = None;
        self.next[id] = None;
    }

    fn alive(&self, id: usize) -> bool {
        self.fronts[id].died.is_none()
    }

    fn predict(&mut self, a: usize, b: usize) {
        let fa = &self.fronts[a];
        let fb = &self.fronts[b];
        let rel = fa.speed - fb.speed;
        if rel <= 1e-14 {
            return;
        }
        let xa = fa.pos(self.time);
        let xb = fb.pos(self.time);
        let dt = ((xb - xa) / rel).max(0.0);
        let time = self.time + dt;
        let pos = fa.pos(time);
        self.queue.push(Reverse(Event { time, pos, left: a, right: b }));
    }

    fn event_valid(&self, ev: &Event) -> bool {
        self.alive(ev.left) && self.alive(ev.right) && self.next[ev.left] == Some(ev.right)
    }

    /// Time of the next interaction, if any.
    pub fn next_event_time(&mut self) -> Option<f64> {
        while let Some(Reverse(ev)) = self.queue.peek().copied() {
            if self.event_valid(&ev) {
                return Some(ev.time);
            }
            self.queue.pop();
        }
        None
    }

    /// Process exactly one interaction (the earliest pending one).
    /// Returns false when no interaction is left.
    pub fn step_event(&mut self) -> Result<bool> {
        let ev = loop {
            match self.queue.pop() {
                None => return Ok(false),
                Some(Reverse(ev)) => {
                    if self.event_valid(&ev) {
                        break ev;
                    }
                }
            }
        };
        if self.log.len() >= self.event_cap {
            return Err(Error::EventStorm { cap: self.event_cap, time: ev.time });
        }
        let te = ev.time;
        let xe = ev.pos;
        let guard = GUARD * (1.0 + xe.abs());

        // Gather every front meeting (te, xe), walking out in both
        // directions; simultaneous multi-front coalescence resolves as one
        // interaction between the outermost states.
        let mut members = vec![ev.left, ev.right];
        while let Some(p) = self.prev[members[0]] {
            if (self.fronts[p].pos(te) - xe).abs() <= guard {
                members.insert(0, p);
            } else {
                break;
            }
        }
        while let Some(n) = self.next[*members.last().unwrap()] {
            if (self.fronts[n].pos(te) - xe).abs() <= guard {
                members.push(n);
            } else {
                break;
            }
        }

        let left_state = self.fronts[members[0]].li;
        let right_state = self.fronts[*members.last().unwrap()].ri;
        let outer_left = self.prev[members[0]];
        let outer_right = self.next[*members.last().unwrap()];

        for &id in &members {
            self.fronts[id].died = Some(te);
            self.unlink(id);
        }
        self.time = te;

        let fan = self.pf.fan_between(left_state, right_state);
        let mut outgoing = Vec::with_capacity(fan.len());
        let mut last = outer_left;
        for (li, ri, speed) in fan {
            let id = self.alloc_front(te, xe, te, speed, li, ri);
            self.link_after(last, id);
            outgoing.push(id);
            last = Some(id);
        }
        self.log.push(Collision { time: te, x: xe, incoming: members, outgoing: outgoing.clone() });

        match (outgoing.first(), outgoing.last()) {
            (Some(&f), Some(&l)) => {
                if let Some(ol) = outer_left {
                    self.predict(ol, f);
                }
                if let Some(or) = outer_right {
                    self.predict(l, or);
                }
            }
            _ => {
                if let (Some(ol), Some(or)) = (outer_left, outer_right) {
                    self.predict(ol, or);
                }
            }
        }
        Ok(true)
    }

    /// Advance the simulation clock to `t`, processing all interactions on
    /// the way.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        if t < self.time {
            return Err(Error::InvalidScenario(format!(
                "cannot rewind from {} to {}",
                self.time, t
            )));
        }
        while let Some(tn) = self.next_event_time() {
            if tn > t {
                break;
            }
            self.step_event()?;
        }
        self.time = t;
        Ok(())
    }

    pub fn fronts(&self) -> &[FrontRec] {
        &self.fronts
    }

    pub fn alive_ids(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.head;
        while let Some(id) = cur {
            out.push(id);
            cur = self.next[id];
        }
        out
    }

    /// The solution profile at the current time as a step function.
    pub fn trace(&self) -> PiecewiseConstantFn {
        self.trace_mapped(|idx| self.pf.value(idx))
    }

    /// The profile with each grid value replaced by `map(index)`, shifted
    /// so the background maps to zero (step functions here always vanish
    /// outside their support). Differences between values, and hence any
    /// variation measure, are unaffected by the shift.
    pub fn trace_mapped(&self, map: impl Fn(usize) -> f64) -> PiecewiseConstantFn {
        let ids = self.alive_ids();
        if ids.is_empty() {
            let (a, b) = self.support;
            return PiecewiseConstantFn::new(vec![a, b.max(a + 1.0)], vec![0.0]).unwrap();
        }
        let zero = map(self.background);
        let mut bps: Vec<f64> = Vec::with_capacity(ids.len() + 2);
        let mut vals: Vec<f64> = Vec::with_capacity(ids.len() + 1);
        let mut prev_x = f64::NEG_INFINITY;
        for (k, &id) in ids.iter().enumerate() {
            let x = self.fronts[id].pos(self.time);
            if k == 0 {
                bps.push(x);
            } else if x > prev_x {
                bps.push(x);
                vals.push(map(self.fronts[id].li) - zero);
            } else {
                // Coincident fronts (e.g. a contact stack): the state
                // between them has zero width, so it does not appear in the
                // profile at all.
                continue;
            }
            prev_x = x;
        }
        if bps.len() == 1 {
            // All fronts coincide; the profile is the background.
            let (a, b) = self.support;
            return PiecewiseConstantFn::new(vec![a, b.max(a + 1.0)], vec![0.0]).unwrap();
        }
        PiecewiseConstantFn::new(bps, vals).unwrap().normalized()
    }

    /// Exact characteristic-speed profile f' composed with the solution.
    pub fn trace_velocity_exact(&self, m: &FluxModel) -> Result<PiecewiseConstantFn> {
        // Precompute f' on the grid so the trace map stays infallible.
        let mut slopes = Vec::with_capacity(self.pf.len());
        for i in 0..self.pf.len() {
            slopes.push(m.eval(self.pf.value(i), 1)?);
        }
        Ok(self.trace_mapped(|idx| slopes[idx]))
    }

    /// Characteristic-speed profile under the polygonal flux (centered
    /// slopes at the grid nodes).
    pub fn trace_velocity_polygonal(&self) -> PiecewiseConstantFn {
        self.trace_mapped(|idx| self.pf.d_centered(idx))
    }

    pub fn mass(&self) -> f64 {
        self.trace().integral()
    }

    pub fn total_variation(&self) -> f64 {
        self.trace().total_variation()
    }

    /// Check every front ever created against the chord condition of the
    /// polygonal flux; returns the worst signed violation (positive means
    /// inadmissible by that amount).
    pub fn worst_admissibility_violation(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for f in &self.fronts {
            let (li, ri) = (f.li, f.ri);
            let (lo, hi) = if li < ri { (li, ri) } else { (ri, li) };
            let f_l = self.pf.fval(li);
            let v_l = self.pf.value(li);
            for k in lo + 1..hi {
                let dev = self.pf.fval(k) - (f_l + f.speed * (self.pf.value(k) - v_l));
                let viol = if li < ri { -dev } else { dev };
                worst = worst.max(viol);
            }
        }
        if worst == f64::NEG_INFINITY {
            0.0
        } else {
            worst
        }
    }
}
