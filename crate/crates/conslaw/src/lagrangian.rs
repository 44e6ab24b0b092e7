//! Characteristic tracking on top of a completed front-tracking run: each
//! initial point carries its datum value along the polygonal characteristic
//! speed, starts riding a front when one sweeps over it, hops to the
//! matching outgoing front at collisions, and dies when the interaction
//! expels its value.

use crate::error::Result;
use crate::fronttrack::FrontTracker;
use crate::pwfun::PiecewiseConstantFn;
use serde::Serialize;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PathSeg {
    pub t0: f64,
    pub x0: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PathStatus {
    Free,
    Riding,
    Dead,
}

/// One tracked characteristic.
#[derive(Debug, Clone, Serialize)]
pub struct CharPath {
    /// Initial position (the label).
    pub y: f64,
    /// Length of initial data represented by this label.
    pub weight: f64,
    /// Carried value (a grid value).
    pub w: f64,
    pub widx: usize,
    pub segs: Vec<PathSeg>,
    /// Time at which the characteristic ceases to exist, if it does.
    pub death: Option<f64>,
    pub status: PathStatus,
    /// Front currently ridden.
    pub riding: Option<usize>,
}

impl CharPath {
    /// Position at time `t` (frozen at the death point afterwards).
    pub fn position(&self, t: f64) -> f64 {
        let t_eff = match self.death {
            Some(d) => t.min(d),
            None => t,
        };
        let seg = match self.segs.iter().rev().find(|s| s.t0 <= t_eff + 1e-15) {
            Some(s) => s,
            None => &self.segs[0],
        };
        seg.x0 + seg.speed * (t_eff - seg.t0)
    }

    pub fn alive_at(&self, t: f64) -> bool {
        match self.death {
            Some(d) => d >= t,
            None => true,
        }
    }
}

/// Labels with weights covering the support of the datum: every piece is
/// split into cells no wider than `span / resolution`, and each cell is
/// represented by its midpoint.
pub fn default_y_grid(datum: &PiecewiseConstantFn, resolution: usize) -> Vec<(f64, f64)> {
    let (a, b) = datum.support();
    let max_w = (b - a) / resolution.max(1) as f64;
    let bps = datum.breakpoints();
    let mut out = Vec::new();
    for i in 0..bps.len() - 1 {
        let (lo, hi) = (bps[i], bps[i + 1]);
        let n = ((hi - lo) / max_w).ceil().max(1.0) as usize;
        let w = (hi - lo) / n as f64;
        for k in 0..n {
            out.push((lo + w * (k as f64 + 0.5), w));
        }
    }
    out
}

/// Trace every label through the full event history of `sim` up to the
/// simulation's current time.
pub fn track_characteristics(
    sim: &FrontTracker,
    datum: &PiecewiseConstantFn,
    y_grid: &[(f64, f64)],
) -> Result<Vec<CharPath>> {
    let horizon = sim.time;
    let fronts = sim.fronts();
    let vtol = 1e-12 * (1.0 + sim.pf.value(sim.pf.len() - 1).abs());

    let mut paths: Vec<CharPath> = y_grid
        .iter()
        .map(|&(y, weight)| {
            let widx = sim.pf.nearest_index(datum.eval(y));
            CharPath {
                y,
                weight,
                w: sim.pf.value(widx),
                widx,
                segs: vec![PathSeg { t0: 0.0, x0: y, speed: sim.pf.d_centered(widx) }],
                death: None,
                status: PathStatus::Free,
                riding: None,
            }
        })
        .collect();

    // Event horizon times, grouped: the log is chronological.
    let mut times: Vec<f64> = vec![0.0];
    for c in &sim.log {
        if c.time > *times.last().unwrap() {
            times.push(c.time);
        }
    }
    if horizon > *times.last().unwrap() {
        times.push(horizon);
    }

    let value_interval = |fid: usize| -> (f64, f64) {
        let f = &fronts[fid];
        let (a, b) = (sim.pf.value(f.li), sim.pf.value(f.ri));
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    };

    for win in times.windows(2) {
        let (ta, tb) = (win[0], win[1]);
        if !(tb > ta) {
            continue;
        }
        // Fronts alive on the open interval (ta, tb).
        let mut alive: Vec<usize> = fronts
            .iter()
            .filter(|f| f.born <= ta + 1e-15 && f.died.map_or(true, |d| d > ta + 1e-15))
            .map(|f| f.id)
            .collect();
        let tm = 0.5 * (ta + tb);
        alive.sort_by(|&a, &b| fronts[a].pos(tm).total_cmp(&fronts[b].pos(tm)));
        let pos_at = |fid: usize, t: f64| fronts[fid].pos(t);

        for p in paths.iter_mut() {
            if p.status != PathStatus::Free {
                continue;
            }
            // A free path can be swept over at most once per interval:
            // afterwards it rides until the next event.
            let x = p.position(ta);
            let speed = p.segs.last().unwrap().speed;
            let slot = alive.partition_point(|&fid| pos_at(fid, ta) < x);
            let mut best: Option<(f64, usize)> = None;
            if slot < alive.len() {
                let fid = alive[slot];
                let rel = speed - fronts[fid].speed;
                if rel > 1e-14 {
                    let tc = ta + (pos_at(fid, ta) - x) / rel;
                    if tc <= tb + 1e-12 {
                        best = Some((tc.min(tb), fid));
                    }
                }
            }
            if slot > 0 {
                let fid = alive[slot - 1];
                let rel = fronts[fid].speed - speed;
                if rel > 1e-14 {
                    let tc = ta + (x - pos_at(fid, ta)) / rel;
                    if tc <= tb + 1e-12 && best.map_or(true, |(bt, _)| tc < bt) {
                        best = Some((tc.min(tb), fid));
                    }
                }
            }
            if let Some((tc, fid)) = best {
                p.status = PathStatus::Riding;
                p.riding = Some(fid);
                p.segs.push(PathSeg {
                    t0: tc,
                    x0: pos_at(fid, tc),
                    speed: fronts[fid].speed,
                });
            }
        }

        // Hand riding paths over across the collisions at time tb.
        for c in sim.log.iter().filter(|c| (c.time - tb).abs() <= 1e-15) {
            for p in paths.iter_mut() {
                let fid = match (p.status, p.riding) {
                    (PathStatus::Riding, Some(fid)) => fid,
                    _ => continue,
                };
                if !c.incoming.contains(&fid) {
                    continue;
                }
                // Outgoing front whose value interval keeps the path alive;
                // prefer strict containment over an endpoint match.
                let mut chosen: Option<usize> = None;
                for &og in &c.outgoing {
                    let (lo, hi) = value_interval(og);
                    if p.w > lo + vtol && p.w < hi - vtol {
                        chosen = Some(og);
                        break;
                    }
                    if chosen.is_none() && p.w >= lo - vtol && p.w <= hi + vtol {
                        chosen = Some(og);
                    }
                }
                match chosen {
                    Some(og) => {
                        p.riding = Some(og);
                        p.segs.push(PathSeg { t0: tb, x0: c.x, speed: fronts[og].speed });
                    }
                    None => {
                        p.status = PathStatus::Dead;
                        p.riding = None;
                        p.death = Some(tb);
                        p.segs.push(PathSeg { t0: tb, x0: c.x, speed: 0.0 });
                    }
                }
            }
        }
    }
    Ok(paths)
}

/// Initial measure of labels whose characteristic still exists at time `t`.
pub fn survival_measure(paths: &[CharPath], t: f64) -> f64 {
    paths
        .iter()
        .filter(|p| p.alive_at(t))
        .map(|p| p.weight)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::FluxModel;
    use crate::fronttrack::{init_sim, PolygonalFlux};

    fn burgers_box(dv: f64, horizon: f64) -> (FrontTracker, PiecewiseConstantFn) {
        let m = FluxModel::burgers(-0.5, 1.5);
        let datum = PiecewiseConstantFn::new(vec![0.0, 1.0], vec![1.0]).unwrap();
        let pf = PolygonalFlux::polygonalize(&m, &[0.0, 1.0], dv, &[]).unwrap();
        let mut sim = init_sim(pf, &datum).unwrap();
        sim.advance_to(horizon).unwrap();
        (sim, datum)
    }

    #[test]
    fn dam_break_paths_ride_the_shock() {
        let (sim, datum) = burgers_box(0.05, 1.0);
        let grid = default_y_grid(&datum, 64);
        let paths = track_characteristics(&sim, &datum, &grid).unwrap();
        // Before the rarefaction reaches the shock nothing dies.
        assert!(paths.iter().all(|p| p.death.is_none()));
        // Labels near the right edge have been absorbed by the shock and
        // move at its speed 1/2.
        let last = paths.last().unwrap();
        assert_eq!(last.status, PathStatus::Riding);
        let x1 = last.position(1.0);
        assert!((x1 - 1.5).abs() < 1e-9, "x = {}", x1);
        // Labels near the left edge are still free with speed about 1.
        let first = paths.first().unwrap();
        assert_eq!(first.status, PathStatus::Free);
    }

    #[test]
    fn paths_stay_free_until_a_front_arrives() {
        // Short horizon: labels deep in the expanding wedge have not met
        // the shock yet, so they are free and alive.
        let (sim, datum) = burgers_box(0.05, 0.4);
        let grid = default_y_grid(&datum, 128);
        let paths = track_characteristics(&sim, &datum, &grid).unwrap();
        for p in paths.iter().filter(|p| p.y < 0.5) {
            assert_eq!(p.status, PathStatus::Free, "y = {}", p.y);
        }
        assert!(paths.iter().all(|p| p.death.is_none()));
        let total: f64 = paths.iter().map(|p| p.weight).sum();
        assert!((survival_measure(&paths, 0.4) - total).abs() < 1e-12);
    }

    #[test]
    fn merged_shock_keeps_interior_value_alive() {
        // Two merging shocks: the outgoing jump 1 -> 0 still contains the
        // middle value 1/2, so no label is expelled by the merge itself.
        let m = FluxModel::burgers(-0.5, 1.5);
        let datum = PiecewiseConstantFn::new(
            vec![0.0, 1.0, 2.0],
            vec![1.0, 0.5],
        )
        .unwrap();
        let pf = PolygonalFlux::polygonalize(&m, &[0.0, 1.0, 0.5], 0.05, &[]).unwrap();
        let mut sim = init_sim(pf, &datum).unwrap();
        sim.advance_to(2.5).unwrap();
        let grid = default_y_grid(&datum, 256);
        let paths = track_characteristics(&sim, &datum, &grid).unwrap();
        let mid_alive = paths
            .iter()
            .filter(|p| (p.w - 0.5).abs() < 1e-12)
            .all(|p| p.death.is_none());
        assert!(mid_alive);
    }

    #[test]
    fn shock_erosion_kills_absorbed_labels() {
        // Dam-break decay: after t = 2 the rarefaction erodes the shock,
        // expelling the carried value 1; label deaths follow.
        let (sim, datum) = burgers_box(0.02, 6.0);
        let grid = default_y_grid(&datum, 256);
        let paths = track_characteristics(&sim, &datum, &grid).unwrap();
        let deaths = paths.iter().filter(|p| p.death.is_some()).count();
        assert!(deaths > 0, "no label ever died");
        for p in paths.iter().filter_map(|p| p.death) {
            assert!(p >= 2.0 - 0.1, "death before erosion starts: {}", p);
        }
        // Survival measure is nonincreasing in time.
        let mut prev = f64::INFINITY;
        for k in 0..=30 {
            let f = survival_measure(&paths, 6.0 * k as f64 / 30.0);
            assert!(f <= prev + 1e-12);
            prev = f;
        }
        assert!(survival_measure(&paths, 6.0) < survival_measure(&paths, 0.0));
    }

    #[test]
    fn paths_do_not_cross() {
        let m = FluxModel::cubic(-1.0, 1.0);
        let datum = PiecewiseConstantFn::new(
            vec![0.0, 0.4, 0.8, 1.3],
            vec![0.7, -0.5, 0.6],
        )
        .unwrap();
        let pf = PolygonalFlux::polygonalize(&m, &[0.0, 0.7, -0.5, 0.6], 0.02, &[]).unwrap();
        let mut sim = init_sim(pf, &datum).unwrap();
        sim.advance_to(2.0).unwrap();
        let grid = default_y_grid(&datum, 200);
        let paths = track_characteristics(&sim, &datum, &grid).unwrap();
        for t in [0.3, 0.9, 1.5, 2.0] {
            let xs: Vec<f64> = paths
                .iter()
                .filter(|p| p.alive_at(t))
                .map(|p| p.position(t))
                .collect();
            for w in xs.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "crossing at t = {}: {} > {}", t, w[0], w[1]);
            }
        }
    }
}
