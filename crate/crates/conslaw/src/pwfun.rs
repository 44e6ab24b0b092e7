//! Compactly supported piecewise constant functions, their total variation,
//! gauge (generalised) variation, and the undulation decomposition that
//! peels a nonnegative profile into nested monotone humps.

use crate::error::{Error, Result};
use crate::flux::Gauge;
use serde::Serialize;

/// A piecewise constant function vanishing outside `[breakpoints[0],
/// breakpoints[n]]`, taking `values[i]` on `(breakpoints[i], breakpoints[i+1])`.
#[derive(Debug, Clone, Serialize)]
pub struct PiecewiseConstantFn {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseConstantFn {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() != values.len() + 1 {
            return Err(Error::InvalidPwfun(format!(
                "{} breakpoints for {} values",
                breakpoints.len(),
                values.len()
            )));
        }
        if values.is_empty() {
            return Err(Error::InvalidPwfun("empty function".into()));
        }
        for w in breakpoints.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::InvalidPwfun(format!(
                    "breakpoints not increasing at {}",
                    w[0]
                )));
            }
        }
        Ok(PiecewiseConstantFn { breakpoints, values })
    }

    /// Merge equal neighbouring pieces and drop zero tails.
    pub fn normalized(&self) -> PiecewiseConstantFn {
        let mut bps = vec![self.breakpoints[0]];
        let mut vals: Vec<f64> = Vec::new();
        for i in 0..self.values.len() {
            if let Some(&last) = vals.last() {
                if last == self.values[i] {
                    *bps.last_mut().unwrap() = self.breakpoints[i + 1];
                    continue;
                }
            }
            vals.push(self.values[i]);
            bps.push(self.breakpoints[i + 1]);
        }
        while vals.first() == Some(&0.0) && vals.len() > 1 {
            vals.remove(0);
            bps.remove(0);
        }
        while vals.last() == Some(&0.0) && vals.len() > 1 {
            vals.pop();
            bps.pop();
        }
        PiecewiseConstantFn { breakpoints: bps, values: vals }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.breakpoints[0] || x >= *self.breakpoints.last().unwrap() {
            return 0.0;
        }
        let i = self.breakpoints.partition_point(|&b| b <= x) - 1;
        self.values[i.min(self.values.len() - 1)]
    }

    pub fn integral(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.values.len() {
            s += self.values[i] * (self.breakpoints[i + 1] - self.breakpoints[i]);
        }
        s
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Total variation on the whole line, including the jumps from and to
    /// the zero background at the edges of the support.
    pub fn total_variation(&self) -> f64 {
        let mut tv = self.values[0].abs();
        for w in self.values.windows(2) {
            tv += (w[1] - w[0]).abs();
        }
        tv + self.values.last().unwrap().abs()
    }

    /// Apply a map value-wise (breakpoints are kept).
    pub fn map_values(&self, g: impl Fn(f64) -> f64) -> PiecewiseConstantFn {
        PiecewiseConstantFn {
            breakpoints: self.breakpoints.clone(),
            values: self.values.iter().map(|&v| g(v)).collect(),
        }
    }

    /// One sample per piece plus the zero background on both sides; this is
    /// the exhaustive candidate list for variation over point partitions.
    pub fn sample_sequence(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.values.len() + 2);
        s.push(0.0);
        s.extend_from_slice(&self.values);
        s.push(0.0);
        s
    }
}

/// One hump produced by the undulation decomposition.
#[derive(Debug, Clone, Serialize)]
pub struct Undulation {
    /// Index of the parent undulation whose support strictly contains this
    /// one, if any.
    pub parent: Option<usize>,
    pub height: f64,
    /// Position of the (leftmost) peak.
    pub peak: f64,
    /// Support of the hump.
    pub x_lo: f64,
    pub x_hi: f64,
    /// The hump itself: increasing up to the peak, then decreasing.
    pub profile: PiecewiseConstantFn,
}

#[derive(Debug, Clone, Serialize)]
pub struct UndulationTree {
    pub nodes: Vec<Undulation>,
}

impl UndulationTree {
    pub fn heights(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.height).collect()
    }

    pub fn count_above(&self, h: f64) -> usize {
        self.nodes.iter().filter(|n| n.height > h).count()
    }

    /// Sum of gauge values of the heights.
    pub fn gauge_height_sum(&self, phi: &impl Gauge) -> f64 {
        self.nodes.iter().map(|n| phi.eval(n.height)).sum()
    }
}

/// Peel a nonnegative step function into humps: each pass extracts the
/// largest unimodal profile through the current leftmost maximum (the
/// running-minimum hull on each side of the peak) and recurses on the rest.
/// The profiles sum back to the input exactly and supports are nested or
/// disjoint.
pub fn decompose_undulations(u: &PiecewiseConstantFn) -> Result<UndulationTree> {
    let min = u.min_value();
    if min < 0.0 {
        return Err(Error::NegativeInput { min });
    }
    let u = u.normalized();
    let bps = u.breakpoints().to_vec();
    let mut rest: Vec<f64> = u.values().to_vec();
    let mut nodes: Vec<Undulation> = Vec::new();

    loop {
        let mut peak_idx = 0usize;
        let mut peak_val = 0.0f64;
        for (i, &v) in rest.iter().enumerate() {
            if v > peak_val {
                peak_val = v;
                peak_idx = i;
            }
        }
        if peak_val <= 0.0 {
            break;
        }
        // Unimodal hull through the peak: running minima away from it.
        let n = rest.len();
        let mut hull = vec![0.0; n];
        hull[peak_idx] = peak_val;
        let mut run = peak_val;
        for i in (0..peak_idx).rev() {
            run = run.min(rest[i]);
            hull[i] = run;
        }
        run = peak_val;
        for i in peak_idx + 1..n {
            run = run.min(rest[i]);
            hull[i] = run;
        }
        let first = hull.iter().position(|&v| v > 0.0).unwrap();
        let last = hull.iter().rposition(|&v| v > 0.0).unwrap();
        let x_lo = bps[first];
        let x_hi = bps[last + 1];
        let parent = nodes
            .iter()
            .enumerate()
            .rev()
            .find(|(_, nd)| nd.x_lo <= x_lo && x_hi <= nd.x_hi)
            .map(|(i, _)| i);
        let profile = PiecewiseConstantFn::new(bps.clone(), hull.clone())?.normalized();
        nodes.push(Undulation {
            parent,
            height: peak_val,
            peak: 0.5 * (bps[peak_idx] + bps[peak_idx + 1]),
            x_lo,
            x_hi,
            profile,
        });
        for i in 0..n {
            rest[i] -= hull[i];
        }
    }
    Ok(UndulationTree { nodes })
}

/// Gauge variation of a sampled sequence: the supremum over subsequences
/// i_1 < ... < i_k of sum phi(|s_{j+1} - s_j|), by dynamic programming.
///
/// With `sign` +1 (resp. -1) only positive (resp. negative) increments
/// count; with 0 the absolute value is used.
pub fn gauge_variation_of_samples(samples: &[f64], phi: &impl Gauge, sign: i8) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let inc = |from: f64, to: f64| -> f64 {
        let d = to - from;
        let arg = match sign {
            0 => d.abs(),
            s if s > 0 => d.max(0.0),
            _ => (-d).max(0.0),
        };
        phi.eval(arg)
    };
    // best[i]: best chain ending at sample i (a chain may start anywhere).
    let mut best = vec![0.0f64; n];
    let mut answer = 0.0f64;
    for i in 1..n {
        let mut b = 0.0f64;
        for j in 0..i {
            let cand = best[j] + inc(samples[j], samples[i]);
            if cand > b {
                b = cand;
            }
        }
        best[i] = b;
        if b > answer {
            answer = b;
        }
    }
    answer
}

/// Gauge total variation of a step function over all point partitions.
pub fn gauge_tv(u: &PiecewiseConstantFn, phi: &impl Gauge) -> f64 {
    gauge_variation_of_samples(&u.sample_sequence(), phi, 0)
}

/// Positive / negative gauge variation of a step function.
pub fn signed_gauge_tv(u: &PiecewiseConstantFn, phi: &impl Gauge, positive: bool) -> f64 {
    gauge_variation_of_samples(&u.sample_sequence(), phi, if positive { 1 } else { -1 })
}

/// Gauge variation along one fixed partition (no supremum): consecutive
/// increments only.
pub fn gauge_variation_fixed_partition(samples: &[f64], phi: &impl Gauge, sign: i8) -> f64 {
    let mut s = 0.0;
    for w in samples.windows(2) {
        let d = w[1] - w[0];
        let arg = match sign {
            0 => d.abs(),
            v if v > 0 => d.max(0.0),
            _ => (-d).max(0.0),
        };
        s += phi.eval(arg);
    }
    s
}

/// If the decreasing rearrangement of `a` weakly majorises `b` (prefix sums
/// of `a` dominate those of `b`), then sum phi(a_k) >= sum phi(b_k) for
/// convex nondecreasing phi with phi(0) = 0. Returns the two sums after
/// verifying the majorisation hypothesis.
pub fn majorization_bound(
    a: &[f64],
    b: &[f64],
    phi: &impl Gauge,
) -> Result<(f64, f64)> {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| y.total_cmp(x));
    b.sort_by(|x, y| y.total_cmp(x));
    let mut pa = 0.0;
    let mut pb = 0.0;
    let tol = 1e-12
        * (1.0 + a.iter().map(|v| v.abs()).sum::<f64>() + b.iter().map(|v| v.abs()).sum::<f64>());
    for k in 0..a.len().max(b.len()) {
        pa += a.get(k).copied().unwrap_or(0.0);
        pb += b.get(k).copied().unwrap_or(0.0);
        if pa + tol < pb {
            return Err(Error::CheckFailure(format!(
                "majorisation fails at prefix {}: {} < {}",
                k + 1,
                pa,
                pb
            )));
        }
    }
    let sa: f64 = a.iter().map(|&x| phi.eval(x)).sum();
    let sb: f64 = b.iter().map(|&x| phi.eval(x)).sum();
    Ok((sa, sb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::PowerGauge;

    fn steps(vals: &[f64]) -> PiecewiseConstantFn {
        let bps: Vec<f64> = (0..=vals.len()).map(|i| i as f64).collect();
        PiecewiseConstantFn::new(bps, vals.to_vec()).unwrap()
    }

    #[test]
    fn tv_includes_edge_jumps() {
        let u = steps(&[1.0, 2.0, 1.0, 3.0]);
        assert_eq!(u.total_variation(), 8.0);
    }

    #[test]
    fn decomposition_heights_and_reconstruction() {
        let u = steps(&[1.0, 2.0, 1.0, 3.0]);
        let tree = decompose_undulations(&u).unwrap();
        let mut hs = tree.heights();
        hs.sort_by(f64::total_cmp);
        assert_eq!(hs, vec![1.0, 3.0]);
        assert_eq!(u.total_variation(), 2.0 * tree.heights().iter().sum::<f64>());
        // Profiles sum back to u.
        for x in [0.5, 1.5, 2.5, 3.5] {
            let s: f64 = tree.nodes.iter().map(|n| n.profile.eval(x)).sum();
            assert_eq!(s, u.eval(x));
        }
    }

    #[test]
    fn decomposition_rejects_negative() {
        let u = steps(&[1.0, -0.5, 2.0]);
        assert!(matches!(
            decompose_undulations(&u),
            Err(Error::NegativeInput { .. })
        ));
    }

    #[test]
    fn nested_supports() {
        // A small dip inside a big hump: the peeled profiles nest.
        let u = steps(&[2.0, 3.0, 2.0, 5.0, 2.0]);
        let tree = decompose_undulations(&u).unwrap();
        assert_eq!(tree.nodes.len(), 2);
        let mut hs = tree.heights();
        hs.sort_by(f64::total_cmp);
        assert_eq!(hs, vec![1.0, 5.0]);
        assert_eq!(tree.nodes[0].parent, None);
        for nd in &tree.nodes[1..] {
            let p = &tree.nodes[nd.parent.unwrap()];
            assert!(p.x_lo <= nd.x_lo && nd.x_hi <= p.x_hi);
        }
    }

    #[test]
    fn gauge_tv_square_example() {
        let u = steps(&[1.0]);
        let g = PowerGauge { p: 2.0 };
        assert_eq!(gauge_tv(&u, &g), 2.0);
    }

    #[test]
    fn gauge_tv_prefers_coarse_partitions() {
        // Monotone staircase: with a convex gauge the single big jump wins.
        let u = steps(&[1.0, 2.0, 3.0]);
        let g = PowerGauge { p: 2.0 };
        // Up 3 in one step (9) plus down 3 (9).
        assert_eq!(gauge_tv(&u, &g), 18.0);
    }

    #[test]
    fn gauge_tv_matches_brute_force() {
        let phi = PowerGauge { p: 2.0 };
        let vals = [0.5, 1.25, 0.75, 2.0, 0.25, 1.5];
        let u = steps(&vals);
        let samples = u.sample_sequence();
        // Enumerate all subsequences, accumulating left to right like the DP.
        let n = samples.len();
        let mut best = 0.0f64;
        for mask in 1u32..(1 << n) {
            let mut prev: Option<f64> = None;
            let mut acc = 0.0;
            for (i, &s) in samples.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    if let Some(p) = prev {
                        acc += phi.eval((s - p).abs());
                    }
                    prev = Some(s);
                }
            }
            if acc > best {
                best = acc;
            }
        }
        assert_eq!(gauge_tv(&u, &phi), best);
    }

    #[test]
    fn gauge_tv_bounded_by_twice_height_sum() {
        let u = steps(&[1.0, 0.5, 2.0, 1.5, 3.0, 0.5]);
        let phi = PowerGauge { p: 2.0 };
        let tree = decompose_undulations(&u).unwrap();
        let lhs = gauge_tv(&u, &phi);
        let rhs = 2.0 * tree.gauge_height_sum(&phi);
        assert!(lhs <= rhs + 1e-12, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn signed_variation_splits() {
        let u = steps(&[1.0, 3.0]);
        let phi = PowerGauge { p: 1.0 };
        assert_eq!(signed_gauge_tv(&u, &phi, true), 3.0);
        assert_eq!(signed_gauge_tv(&u, &phi, false), 3.0);
    }

    #[test]
    fn majorization_holds_for_peeled_heights() {
        let phi = PowerGauge { p: 2.0 };
        let a = [3.0, 2.0, 1.0];
        let b = [2.5, 2.0, 1.5];
        let (sa, sb) = majorization_bound(&a, &b, &phi).unwrap();
        assert!(sa >= sb);
        assert!(majorization_bound(&[1.0, 1.0], &[3.0], &phi).is_err());
    }

    #[test]
    fn normalization_merges_and_trims() {
        let u = PiecewiseConstantFn::new(
            vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            vec![0.0, 2.0, 2.0, 1.0, 0.0],
        )
        .unwrap()
        .normalized();
        assert_eq!(u.values(), &[2.0, 1.0]);
        assert_eq!(u.breakpoints(), &[1.0, 3.0, 4.0]);
        assert_eq!(u.integral(), 5.0);
    }
}
