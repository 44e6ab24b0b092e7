//! Builders for benchmark instances with closed-form reference values:
//! a box train under a power-law flux, a Cantor-type interpolation family,
//! a sawtooth flux block with an exactly computable dissipation mass, and
//! a flux with a single flat inflection driving slow logarithmic
//! oscillation growth.
//!
//! Reference quantities are computed by series arithmetic only, never by
//! the solver, so solver-versus-reference comparisons are genuine checks.

use crate::error::{Error, Result};
use crate::flux::{conjugate_point, FluxModel};
use crate::pwfun::PiecewiseConstantFn;

/// Box train datum under f(u) = u^(p+1): box n has height
/// a_n = [1/(n ln^2(1+n))]^(1/p) and width (p+1) a_n^p, with gap a_n^p to
/// the next box so that nothing interacts before t = 1.
#[derive(Debug, Clone)]
pub struct BoxTrain {
    pub flux: FluxModel,
    pub datum: PiecewiseConstantFn,
    pub p: u32,
    /// Box heights a_n.
    pub heights: Vec<f64>,
    /// Box widths L_n = (p+1) a_n^p.
    pub widths: Vec<f64>,
    /// Left edges x_n.
    pub lefts: Vec<f64>,
}

impl BoxTrain {
    /// Closed-form 2 sum a_n^q: the gauge variation of u(1) with the
    /// gauge x^q, each box contributing one full rise and one full fall.
    pub fn reference_sum(&self, q: f64) -> f64 {
        2.0 * self.heights.iter().map(|a| a.powf(q)).sum::<f64>()
    }

    pub fn reference_partial(&self, q: f64, n_boxes: usize) -> f64 {
        2.0 * self.heights[..n_boxes.min(self.heights.len())]
            .iter()
            .map(|a| a.powf(q))
            .sum::<f64>()
    }

    /// x-interval containing everything emitted by the first `n` boxes up
    /// to time 1 (right edge ends where box n's shock sits at t = 1).
    pub fn window(&self, n_boxes: usize) -> (f64, f64) {
        let k = n_boxes.min(self.heights.len()) - 1;
        let right = self.lefts[k] + self.widths[k] + self.heights[k].powi(self.p as i32);
        (self.lefts[0] - 1.0, right)
    }
}

pub fn build_box_train(p: u32, n_boxes: usize) -> Result<BoxTrain> {
    if p < 1 || n_boxes < 1 {
        return Err(Error::InvalidScenario("need p >= 1 and at least one box".into()));
    }
    let mut heights = Vec::with_capacity(n_boxes);
    let mut widths = Vec::with_capacity(n_boxes);
    let mut lefts = Vec::with_capacity(n_boxes);
    let mut x = 0.0;
    for n in 1..=n_boxes {
        let nf = n as f64;
        let a = (1.0 / (nf * (1.0 + nf).ln().powi(2))).powf(1.0 / p as f64);
        let l = (p as f64 + 1.0) * a.powi(p as i32);
        heights.push(a);
        widths.push(l);
        lefts.push(x);
        x += l + a.powi(p as i32);
    }
    let mut breakpoints = Vec::with_capacity(2 * n_boxes);
    let mut values = Vec::with_capacity(2 * n_boxes - 1);
    for n in 0..n_boxes {
        breakpoints.push(lefts[n]);
        breakpoints.push(lefts[n] + widths[n]);
        values.push(heights[n]);
        if n + 1 < n_boxes {
            values.push(0.0);
        }
    }
    let datum = PiecewiseConstantFn::new(breakpoints, values)?.normalized();
    let flux = FluxModel::power(p + 1, -0.5, heights[0] + 0.5)?;
    Ok(BoxTrain { flux, datum, p, heights, widths, lefts })
}

/// One refinement level of the Cantor-type interpolation: sample points
/// of the piecewise affine function and the indices of the current-level
/// component endpoints within them.
#[derive(Debug, Clone)]
pub struct CantorLevel {
    pub xs: Vec<f64>,
    pub vs: Vec<f64>,
    /// Indices into xs/vs of the 2^(n+1) component endpoints, in order.
    pub boundary: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct CantorFamily {
    pub p: f64,
    pub alpha: f64,
    pub levels: Vec<CantorLevel>,
}

impl CantorFamily {
    /// Sum of p-th powers of the drops between consecutive component
    /// endpoints at level `n` (1-based); closed form n * alpha^p.
    pub fn boundary_negative_variation(&self, n: usize) -> f64 {
        let lvl = &self.levels[n - 1];
        let mut acc = 0.0;
        for w in lvl.boundary.windows(2) {
            let drop = lvl.vs[w[0]] - lvl.vs[w[1]];
            if drop > 0.0 {
                acc += drop.powf(self.p);
            }
        }
        acc
    }
}

/// Start from the identity on [0,1] and, on each connected component
/// [a,b] of the current Cantor stage, insert interior nodes at thirds
/// with values u(a) + (1±alpha)/2 (u(b)-u(a)), alpha = 2^((p-1)/p) - 1.
/// Each kept third rises by a factor 2^(-1/p) of the parent rise, so the
/// sum of rises^p over components stays exactly 1 at every level.
pub fn build_cantor(p: f64, n_levels: usize) -> Result<CantorFamily> {
    if !(p > 1.0) {
        return Err(Error::InvalidScenario("cantor family needs p > 1".into()));
    }
    if n_levels > 20 {
        return Err(Error::GridTooLarge { cap: 20, requested: n_levels });
    }
    let alpha = 2f64.powf((p - 1.0) / p) - 1.0;
    // Components as (x_a, x_b, v_a, v_b); node set grows monotonically.
    let mut comps = vec![(0.0, 1.0, 0.0, 1.0)];
    let mut nodes: Vec<(f64, f64)> = vec![(0.0, 0.0), (1.0, 1.0)];
    let mut levels = Vec::with_capacity(n_levels);
    for _ in 0..n_levels {
        let mut next = Vec::with_capacity(2 * comps.len());
        for &(a, b, va, vb) in &comps {
            let h = b - a;
            let dv = vb - va;
            let p1 = a + h / 3.0;
            let p2 = a + 2.0 * h / 3.0;
            let v1 = va + 0.5 * (1.0 + alpha) * dv;
            let v2 = va + 0.5 * (1.0 - alpha) * dv;
            nodes.push((p1, v1));
            nodes.push((p2, v2));
            next.push((a, p1, va, v1));
            next.push((p2, b, v2, vb));
        }
        comps = next;
        let mut sorted = nodes.clone();
        sorted.sort_by(|u, v| u.0.total_cmp(&v.0));
        let xs: Vec<f64> = sorted.iter().map(|n| n.0).collect();
        let vs: Vec<f64> = sorted.iter().map(|n| n.1).collect();
        let mut boundary = Vec::with_capacity(2 * comps.len());
        for &(a, b, _, _) in &comps {
            for e in [a, b] {
                let i = xs.partition_point(|&x| x < e);
                debug_assert!(xs[i] == e);
                boundary.push(i);
            }
        }
        levels.push(CantorLevel { xs, vs, boundary });
    }
    Ok(CantorFamily { p, alpha, levels })
}

/// Sawtooth flux block: f = 0 on [0, L] and [2L, 3L], and L/a quadratic
/// teeth of height h and width a on [L, 2L] (f'' alternates +k, -k, +k on
/// quarter-teeth with k = 16 h / a^2, so f is C^1 and each tooth
/// contributes exactly 2h to the integral of |f'|).
#[derive(Debug, Clone)]
pub struct SawtoothBlock {
    pub flux: FluxModel,
    pub datum: PiecewiseConstantFn,
    pub h: f64,
    pub a: f64,
    pub l: f64,
    pub teeth: usize,
    /// Datum box width A = h/L keeping the standing jump at x = 0 alive
    /// on [0, 1].
    pub width: f64,
}

impl SawtoothBlock {
    /// Closed-form transversal dissipation mass of the standing jump
    /// (0, 3L) over unit time.
    pub fn reference_mass(&self) -> f64 {
        2.0 * self.h * self.l / self.a
    }
}

pub fn teeth_flux(h: f64, a: f64, l: f64) -> Result<FluxModel> {
    if !(h > 0.0 && a > 0.0 && l > 0.0) {
        return Err(Error::InvalidScenario("teeth flux needs positive h, a, L".into()));
    }
    let teeth = (l / a).round() as usize;
    if !(teeth >= 1 && ((teeth as f64) * a - l).abs() < 1e-12 * l) {
        return Err(Error::InvalidScenario("tooth width must divide L".into()));
    }
    let k = 16.0 * h / (a * a);
    let mut knots = vec![0.0, l];
    let mut d2 = vec![0.0];
    for t in 0..teeth {
        let base = l + a * t as f64;
        knots.extend([base + 0.25 * a, base + 0.75 * a, base + a]);
        d2.extend([k, -k, k]);
    }
    knots.push(3.0 * l);
    d2.push(0.0);
    FluxModel::from_d2_steps(&knots, &d2, 0.0, 0.0)
}

/// The block at layer n of the layered family: L = 2^-n, a = 8^-n,
/// h = a^n.
pub fn build_sawtooth_block(n: u32) -> Result<SawtoothBlock> {
    if n == 0 || n > 4 {
        return Err(Error::InvalidScenario("layer must be in 1..=4".into()));
    }
    let l = 2f64.powi(-(n as i32));
    let a = 8f64.powi(-(n as i32));
    let h = a.powi(n as i32);
    build_sawtooth_custom(h, a, l)
}

pub fn build_sawtooth_custom(h: f64, a: f64, l: f64) -> Result<SawtoothBlock> {
    let flux = teeth_flux(h, a, l)?;
    let width = h / l;
    let datum = PiecewiseConstantFn::new(vec![0.0, width], vec![3.0 * l])?;
    let teeth = (l / a).round() as usize;
    Ok(SawtoothBlock { flux, datum, h, a, l, teeth, width })
}

/// Parameters of one layer of the flat-inflection construction.
#[derive(Debug, Clone)]
pub struct FlatInflectionLayer {
    pub a: f64,
    pub b: f64,
    pub eps: f64,
    /// Box width d = f'(w*) - f'(a_prev), the speed gap closed at t = 1.
    pub d: f64,
    /// Conjugate of -2a, expected near (1 + (sqrt(10)-3)) a.
    pub conj_2a: f64,
    /// Magnitude of the conjugate of a_prev, expected near 2a.
    pub conj_prev: f64,
    /// Interaction-time bounds entering the oscillation estimate.
    pub dt1: f64,
    pub dt2: f64,
    /// Block count floor(1 / (n^2 d)) of the (untruncated) datum.
    pub block_count: f64,
}

/// Flux with f'' = eps_n on (-a_{n-1}, -2a_n) and b_n on (-2a_n, -a_n)
/// per layer, extended oddly, zero inside (-a_K, a_K); f' is even with
/// all derivatives of order >= 2 vanishing at the inflection 0 as the
/// depth grows.
#[derive(Debug, Clone)]
pub struct FlatInflection {
    pub flux: FluxModel,
    /// a_0 = 1 followed by the chosen a_n per layer.
    pub scales: Vec<f64>,
    pub layers: Vec<FlatInflectionLayer>,
}

impl FlatInflection {
    /// Datum for the single-block run of layer `n` (1-based): background
    /// -a_{n-1} on a wide box, a_{n-1} on (0, d_n). All wave speeds agree
    /// to within ~d_n, so a modest margin keeps the support-edge waves
    /// away from the oscillating packet.
    pub fn layer_datum(&self, n: usize, margin: f64) -> Result<PiecewiseConstantFn> {
        let a_prev = self.scales[n - 1];
        let d = self.layers[n - 1].d;
        PiecewiseConstantFn::new(
            vec![-margin, 0.0, d, margin],
            vec![-a_prev, a_prev, -a_prev],
        )
    }
}

fn flat_inflection_flux(scales: &[f64], eps: &[f64], b: &[f64]) -> Result<FluxModel> {
    let k = eps.len();
    let mut knots = Vec::with_capacity(4 * k + 2);
    let mut d2 = Vec::with_capacity(4 * k + 1);
    for n in 0..k {
        knots.push(-scales[n]);
        d2.push(eps[n]);
        knots.push(-2.0 * scales[n + 1]);
        d2.push(b[n]);
    }
    knots.push(-scales[k]);
    d2.push(0.0);
    for n in (0..k).rev() {
        knots.push(scales[n + 1]);
        d2.push(-b[n]);
        knots.push(2.0 * scales[n + 1]);
        d2.push(-eps[n]);
    }
    knots.push(scales[0]);
    FluxModel::from_d2_steps(&knots, &d2, 0.0, 0.0)
}

/// Conjugate data of layer n (1-based) on a built flux.
fn layer_conjugates(m: &FluxModel, scales: &[f64], n: usize) -> Result<(f64, f64)> {
    let c2 = conjugate_point(m, 0.0, -2.0 * scales[n])?;
    let cp = -conjugate_point(m, 0.0, scales[n - 1])?;
    Ok((c2, cp))
}

const ALPHA_STAR: f64 = 0.16227766016837952; // sqrt(10) - 3

fn layer_ok(m: &FluxModel, scales: &[f64], n: usize) -> Result<bool> {
    let a = scales[n];
    let (c2, cp) = layer_conjugates(m, scales, n)?;
    let sandwich = a < c2 && c2 < cp && cp < 2.0 * a;
    if !sandwich {
        return Ok(false);
    }
    // The tangency ratios must sit near their limits: conj(-2a) near
    // (1 + (sqrt(10)-3)) a and conj(a_prev) near 2a, and the speed-gap
    // denominators must stay bounded away from zero.
    let alpha_n = c2 / a - 1.0;
    let beta_n = 2.0 - cp / a;
    if !((alpha_n - ALPHA_STAR).abs() < 0.5 * ALPHA_STAR && 1.0 - alpha_n - beta_n > 0.1) {
        return Ok(false);
    }
    // The interaction-time bounds must stay below 1 so that the
    // logarithmic oscillation estimate has content.
    let (dt1, dt2) = layer_dts(m, scales, n, cp, c2)?;
    Ok(dt2 > 0.0 && dt1 + dt2 < 0.85)
}

fn layer_dts(m: &FluxModel, scales: &[f64], n: usize, cp: f64, c2: f64) -> Result<(f64, f64)> {
    let v_prev = m.eval(scales[n - 1], 1)?;
    let v_2a = m.eval(2.0 * scales[n], 1)?;
    let v_cp = m.eval(cp, 1)?;
    let v_c2 = m.eval(c2, 1)?;
    // The first numerator is a difference of nearly equal slopes at deep
    // layers; clamp rounding noise to the known sign.
    let dt1 = ((v_2a - v_prev) / (v_cp - v_2a)).max(0.0);
    Ok((dt1, (v_cp - v_prev) / (v_c2 - v_cp)))
}

/// Greedy layer-by-layer parameter search: pick a_n (starting from
/// 0.9 min(1/3, e^(1-n)) a_{n-1}, backing off by factors of 10), then
/// eps_n = a_n^(n+2) e^(-n) / 2, and keep the candidate if the conjugate
/// sandwich holds on the flux truncated at this layer.
pub fn build_flat_inflection(depth: usize) -> Result<FlatInflection> {
    if depth == 0 || depth > 4 {
        return Err(Error::InvalidScenario("depth must be in 1..=4".into()));
    }
    let mut scales = vec![1.0];
    let mut eps = Vec::with_capacity(depth);
    let mut b = Vec::with_capacity(depth);
    for n in 1..=depth {
        let prev = scales[n - 1];
        // 0.135 keeps the conjugate ratios near their limits (the
        // interaction-time bound grows roughly like 2.5x the scale
        // ratio); the exponential factor enforces the scale-decay
        // condition with slack.
        let mut cand = 0.9 * prev * 0.135f64.min((-((n as f64) - 1.0)).exp());
        let mut accepted = false;
        for _ in 0..6 {
            scales.push(cand);
            b.push(cand.powi(n as i32));
            eps.push(0.5 * cand.powi(n as i32 + 2) * (-(n as f64)).exp());
            let m = flat_inflection_flux(&scales, &eps, &b)?;
            if layer_ok(&m, &scales, n)? {
                accepted = true;
                break;
            }
            scales.pop();
            b.pop();
            eps.pop();
            cand /= 10.0;
        }
        if !accepted {
            return Err(Error::ParameterSearch(format!(
                "no admissible scale found for layer {}",
                n
            )));
        }
    }
    let flux = flat_inflection_flux(&scales, &eps, &b)?;
    let mut layers = Vec::with_capacity(depth);
    for n in 1..=depth {
        let (c2, cp) = layer_conjugates(&flux, &scales, n)?;
        let d = flux.eval(cp, 1)? - flux.eval(scales[n - 1], 1)?;
        let (dt1, dt2) = layer_dts(&flux, &scales, n, cp, c2)?;
        let block_count = (1.0 / ((n * n) as f64 * d)).floor();
        layers.push(FlatInflectionLayer {
            a: scales[n],
            b: b[n - 1],
            eps: eps[n - 1],
            d,
            conj_2a: c2,
            conj_prev: cp,
            dt1,
            dt2,
            block_count,
        });
    }
    let inst = FlatInflection { flux, scales, layers };
    validate_flat_inflection(&inst)?;
    Ok(inst)
}

/// The parameter conditions the construction relies on, checked on the
/// built flux:
/// 1. sum eps_n < 1, sum a_n^n < 1, eps_n < a_n^n;
/// 2. conjugate sandwich a_n < (-2a_n)* < |a_{n-1}*| < 2a_n per layer;
/// 3. tangency ratios near their limits with the speed-gap denominator
///    bounded below;
/// 4. ln(a_n / a_{n+1}) > n;
/// 5. ln(a_n^(n+2) / eps_n) > n.
pub fn validate_flat_inflection(inst: &FlatInflection) -> Result<()> {
    let k = inst.layers.len();
    let sum_eps: f64 = inst.layers.iter().map(|l| l.eps).sum();
    let sum_b: f64 = inst.layers.iter().map(|l| l.b).sum();
    if !(sum_eps < 1.0 && sum_b < 1.0) {
        return Err(Error::CheckFailure("condition 1: curvature sums reach 1".into()));
    }
    for (i, l) in inst.layers.iter().enumerate() {
        let n = i + 1;
        let a = l.a;
        if !(l.eps < l.b) {
            return Err(Error::CheckFailure(format!("condition 1: eps >= a^n at layer {}", n)));
        }
        if !(a < l.conj_2a && l.conj_2a < l.conj_prev && l.conj_prev < 2.0 * a) {
            return Err(Error::CheckFailure(format!(
                "condition 2: conjugate sandwich fails at layer {}",
                n
            )));
        }
        let alpha_n = l.conj_2a / a - 1.0;
        let beta_n = 2.0 - l.conj_prev / a;
        if !((alpha_n - ALPHA_STAR).abs() < 0.5 * ALPHA_STAR && 1.0 - alpha_n - beta_n > 0.1) {
            return Err(Error::CheckFailure(format!(
                "condition 3: tangency ratios out of range at layer {}",
                n
            )));
        }
        if n < k {
            let ratio = inst.scales[n] / inst.scales[n + 1];
            if !(ratio.ln() > n as f64) {
                return Err(Error::CheckFailure(format!(
                    "condition 4: scale decay too slow at layer {}",
                    n
                )));
            }
        }
        if !((a.powi(n as i32 + 2) / l.eps).ln() > n as f64) {
            return Err(Error::CheckFailure(format!(
                "condition 5: eps too large at layer {}",
                n
            )));
        }
    }
    Ok(())
}
