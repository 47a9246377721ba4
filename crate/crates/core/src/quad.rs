//! Quadrature infrastructure: composite Gauss-Legendre panels graded toward the
//! poles, an adaptive integrator for one-off integrals with endpoint or interior
//! log singularities, and product-integration moments against ln|t-s| used by the
//! singular operator assembly.

use std::collections::HashMap;
use std::sync::Mutex;
use thiserror::Error;

pub const PANEL_ORDER: usize = 8;

/// Gauss order used on refinement sub-cells by the singular operator assembly.
pub const CELL_ORDER: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum QuadError {
    #[error("node count {0} must be a positive multiple of {}", 2 * PANEL_ORDER)]
    BadNodeCount(usize),
    #[error("grading exponent {0} must be >= 1")]
    BadGrading(f64),
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on P_q.
pub fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    for i in 0..(q + 1) / 2 {
        // Chebyshev initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_q and P_q' by recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=q {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = q as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[q - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[q - 1 - i] = w;
    }
    (nodes, weights)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel {
    pub a: f64,
    pub b: f64,
}

/// Composite Gauss-Legendre grid on (0, π) with panels graded toward both poles.
///
/// `PANEL_ORDER` nodes per panel; no endpoint nodes. The 2D log-moment tables used
/// by the operator assembly are built lazily per cell and cached.
pub struct QuadratureGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub panels: Vec<Panel>,
    pub grading: f64,
    /// Reference Gauss rule on [-1,1] of order `PANEL_ORDER`.
    pub ref_nodes: Vec<f64>,
    pub ref_weights: Vec<f64>,
    cell_cache: Mutex<HashMap<CellKey, Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct CellKey {
    pa: usize,
    pb: usize,
    depth: u8,
    ix: u32,
    iy: u32,
    /// 1 for ln|φ-ψ| moments, 2 for ln²|φ-ψ|.
    power: u8,
}

impl QuadratureGrid {
    /// Build a grid with `n` nodes (multiple of 2*PANEL_ORDER) and the given grading
    /// exponent toward 0 and π (1 = uniform panels).
    pub fn build(n: usize, grading: f64) -> Result<Self, QuadError> {
        if n == 0 || n % (2 * PANEL_ORDER) != 0 {
            return Err(QuadError::BadNodeCount(n));
        }
        if grading < 1.0 {
            return Err(QuadError::BadGrading(grading));
        }
        let half_panels = n / (2 * PANEL_ORDER);
        let mut bounds = Vec::with_capacity(2 * half_panels + 1);
        for i in 0..=half_panels {
            let t = i as f64 / half_panels as f64;
            bounds.push(std::f64::consts::FRAC_PI_2 * t.powf(grading));
        }
        for i in (0..half_panels).rev() {
            let t = i as f64 / half_panels as f64;
            bounds.push(std::f64::consts::PI - std::f64::consts::FRAC_PI_2 * t.powf(grading));
        }
        let (xg, wg) = gauss_legendre(PANEL_ORDER);
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut panels = Vec::with_capacity(2 * half_panels);
        for w in bounds.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            for k in 0..PANEL_ORDER {
                nodes.push(mid + half * xg[k]);
                weights.push(half * wg[k]);
            }
            panels.push(Panel { a, b });
        }
        Ok(Self {
            nodes,
            weights,
            panels,
            grading,
            ref_nodes: xg,
            ref_weights: wg,
            cell_cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Index of the panel containing node `k`.
    pub fn panel_of_node(&self, k: usize) -> usize {
        k / PANEL_ORDER
    }

    /// Nodes of panel `p` as a slice.
    pub fn panel_nodes(&self, p: usize) -> &[f64] {
        &self.nodes[p * PANEL_ORDER..(p + 1) * PANEL_ORDER]
    }

    /// Weight row approximating f ↦ ∫_0^π f(s) ln|t-s| ds from node values.
    /// Panels at index distance ≤ 1 from `t` get exact product-integration
    /// weights; farther panels use the plain rule on the smooth integrand.
    pub fn log_row(&self, t: f64) -> Vec<f64> {
        let mut row = vec![0.0; self.len()];
        let pt = self.locate_panel(t);
        for (p, panel) in self.panels.iter().enumerate() {
            let near = pt.map_or(false, |pc| p.abs_diff(pc) <= 1);
            let sl = p * PANEL_ORDER..(p + 1) * PANEL_ORDER;
            if near {
                let w = log_moments_1d(t, panel.a, panel.b, self.panel_nodes(p));
                row[sl].copy_from_slice(&w);
            } else {
                for k in sl {
                    row[k] = self.weights[k] * (t - self.nodes[k]).abs().ln();
                }
            }
        }
        row
    }

    fn locate_panel(&self, t: f64) -> Option<usize> {
        self.panels
            .iter()
            .position(|p| t >= p.a && t <= p.b)
    }

    /// 2D product-integration moments ∫∫_cell λ_a(φ) λ_b(ψ) ln|φ-ψ| dφ dψ for a
    /// dyadic sub-cell of the panel pair (pa, pb), where λ are the Lagrange
    /// cardinals on the cell's own CELL_ORDER Gauss nodes (which the caller uses
    /// as kernel sample points). Returned row-major (a over φ, b over ψ), cached
    /// per cell. `px`/`py` must be exactly those canonical points; they are
    /// passed only to keep callers honest and are re-derived on a cache miss.
    pub fn cell_log_moments_local(
        &self,
        pa: usize,
        pb: usize,
        depth: u8,
        ix: u32,
        iy: u32,
        px: &[f64],
        py: &[f64],
    ) -> Vec<f64> {
        self.cell_moments_impl(pa, pb, depth, ix, iy, px, py, 1)
    }

    /// Same as [`Self::cell_log_moments_local`] with weight ln²|φ-ψ|.
    pub fn cell_log2_moments_local(
        &self,
        pa: usize,
        pb: usize,
        depth: u8,
        ix: u32,
        iy: u32,
        px: &[f64],
        py: &[f64],
    ) -> Vec<f64> {
        self.cell_moments_impl(pa, pb, depth, ix, iy, px, py, 2)
    }

    #[allow(clippy::too_many_arguments)]
    fn cell_moments_impl(
        &self,
        pa: usize,
        pb: usize,
        depth: u8,
        ix: u32,
        iy: u32,
        px: &[f64],
        py: &[f64],
        power: u8,
    ) -> Vec<f64> {
        let key = CellKey {
            pa,
            pb,
            depth,
            ix,
            iy,
            power,
        };
        if let Some(v) = self.cell_cache.lock().unwrap().get(&key) {
            return v.clone();
        }
        let (ax, bx) = dyadic(self.panels[pa], depth, ix);
        let (ay, by) = dyadic(self.panels[pb], depth, iy);
        let mut v = lam_cell_2d(ax, bx, ay, by, px, py, power);
        // the continuum object is symmetric for the diagonal square cells
        if pa == pb && ix == iy {
            let m = px.len();
            for a in 0..m {
                for b in (a + 1)..m {
                    let s = 0.5 * (v[a * m + b] + v[b * m + a]);
                    v[a * m + b] = s;
                    v[b * m + a] = s;
                }
            }
        }
        self.cell_cache.lock().unwrap().insert(key, v.clone());
        v
    }
}

/// Sub-interval `i` of 2^depth dyadic pieces of a panel.
pub fn dyadic(panel: Panel, depth: u8, i: u32) -> (f64, f64) {
    let parts = (1u32 << depth) as f64;
    let h = (panel.b - panel.a) / parts;
    (panel.a + h * i as f64, panel.a + h * (i as f64 + 1.0))
}

/// Antiderivative of u^l ln|u|: u^{l+1}/(l+1) (ln|u| - 1/(l+1)).
fn anti_log(u: f64, l: usize) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        let lp = (l + 1) as f64;
        u.powi(l as i32 + 1) / lp * (u.abs().ln() - 1.0 / lp)
    }
}

/// Antiderivative of u^l ln²|u|:
/// u^{l+1} (ln²|u|/(l+1) - 2 ln|u|/(l+1)² + 2/(l+1)³).
fn anti_log2(u: f64, l: usize) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        let lp = (l + 1) as f64;
        let lg = u.abs().ln();
        u.powi(l as i32 + 1) * (lg * lg / lp - 2.0 * lg / (lp * lp) + 2.0 / (lp * lp * lp))
    }
}

/// Product-integration weights w_k with Σ w_k f(nodes_k) ≈ ∫_a^b f(s) ln^p|t-s| ds
/// (p = 1 or 2), exact when f is the polynomial interpolant on `nodes`. Uses the
/// monomial basis in (s - t), whose moments have closed-form antiderivatives.
pub fn log_power_moments_1d(t: f64, a: f64, b: f64, nodes: &[f64], power: u8) -> Vec<f64> {
    let q = nodes.len();
    let anti = |u: f64, l: usize| -> f64 {
        if power == 1 {
            anti_log(u, l)
        } else {
            anti_log2(u, l)
        }
    };
    let mom: Vec<f64> = (0..q).map(|l| anti(b - t, l) - anti(a - t, l)).collect();
    let s: Vec<f64> = nodes.iter().map(|&x| x - t).collect();
    let mut out = vec![0.0; q];
    let mut poly = vec![0.0; q];
    for k in 0..q {
        // expand Π_{j≠k} (u - s_j) in ascending powers of u
        poly.iter_mut().for_each(|c| *c = 0.0);
        poly[0] = 1.0;
        let mut deg = 0;
        let mut denom = 1.0;
        for (j, &sj) in s.iter().enumerate() {
            if j == k {
                continue;
            }
            denom *= s[k] - sj;
            deg += 1;
            for l in (1..=deg).rev() {
                poly[l] = poly[l - 1] - sj * poly[l];
            }
            poly[0] *= -sj;
        }
        let mut acc = 0.0;
        for l in 0..q {
            acc += poly[l] * mom[l];
        }
        out[k] = acc / denom;
    }
    out
}

/// Convenience alias for the ln weights.
pub fn log_moments_1d(t: f64, a: f64, b: f64, nodes: &[f64]) -> Vec<f64> {
    log_power_moments_1d(t, a, b, nodes, 1)
}

/// Polynomial interpolation value and derivative at x through (xs, ys).
pub fn lagrange_eval_deriv(xs: &[f64], ys: &[f64], x: f64) -> (f64, f64) {
    let q = xs.len();
    let mut f = 0.0;
    let mut df = 0.0;
    for j in 0..q {
        let mut lj = 1.0;
        let mut dlj = 0.0;
        for (i, &xi) in xs.iter().enumerate() {
            if i != j {
                let den = xs[j] - xi;
                dlj = dlj * (x - xi) / den + lj / den;
                lj *= (x - xi) / den;
            }
        }
        f += ys[j] * lj;
        df += ys[j] * dlj;
    }
    (f, df)
}

/// Lagrange cardinal values l_j(pts) for cardinals on `nodes`.
pub fn cardinal_matrix(nodes: &[f64], pts: &[f64]) -> Vec<Vec<f64>> {
    let q = nodes.len();
    let mut out = vec![vec![0.0; pts.len()]; q];
    for j in 0..q {
        for (m, &x) in pts.iter().enumerate() {
            let mut v = 1.0;
            for (i, &ni) in nodes.iter().enumerate() {
                if i != j {
                    v *= (x - ni) / (nodes[j] - ni);
                }
            }
            out[j][m] = v;
        }
    }
    out
}

/// 2D moments ∫_ax^bx ∫_ay^by λ_a(φ) λ_b(ψ) ln^p|φ-ψ| dψ dφ, flattened row-major.
/// Inner integral by exact product weights; outer by composite Gauss graded
/// geometrically toward the cell ends, where the inner integral has x ln x kinks.
fn lam_cell_2d(ax: f64, bx: f64, ay: f64, by: f64, nx: &[f64], ny: &[f64], power: u8) -> Vec<f64> {
    let q1 = nx.len();
    let q2 = ny.len();
    let (xg, wg) = gauss_legendre(16);
    let mut out = vec![0.0; q1 * q2];
    // geometric grading toward both cell ends
    let mut pts = vec![ax, bx];
    let len = bx - ax;
    let mut frac = 0.5;
    for _ in 0..14 {
        pts.push(ax + len * frac);
        pts.push(bx - len * frac);
        frac *= 0.35;
    }
    pts.sort_by(|u, v| u.partial_cmp(v).unwrap());
    pts.dedup();
    for w in pts.windows(2) {
        let (sa, sb) = (w[0], w[1]);
        let mid = 0.5 * (sa + sb);
        let half = 0.5 * (sb - sa);
        for g in 0..16 {
            let phi = mid + half * xg[g];
            let wphi = half * wg[g];
            let ck = log_power_moments_1d(phi, ay, by, ny, power);
            for a in 0..q1 {
                let mut la = 1.0;
                for (i, &ni) in nx.iter().enumerate() {
                    if i != a {
                        la *= (phi - ni) / (nx[a] - ni);
                    }
                }
                let f = wphi * la;
                for b in 0..q2 {
                    out[a * q2 + b] += f * ck[b];
                }
            }
        }
    }
    out
}

/// Adaptive integration by interval bisection with an embedded two-level Gauss
/// error estimate. Deterministic; handles endpoint log singularities by geometric
/// refinement. `split_at` marks interior singular points to pre-split on.
pub fn adaptive_integrate<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    split_at: &[f64],
) -> f64 {
    let mut cuts: Vec<f64> = vec![a, b];
    for &s in split_at {
        if s > a && s < b {
            cuts.push(s);
        }
    }
    cuts.sort_by(|u, v| u.partial_cmp(v).unwrap());
    cuts.dedup();
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += adapt_rec(f, w[0], w[1], tol, 0);
    }
    total
}

fn gauss_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, xg: &[f64], wg: &[f64]) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut s = 0.0;
    for k in 0..xg.len() {
        s += wg[k] * f(mid + half * xg[k]);
    }
    half * s
}

fn adapt_rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    thread_local! {
        static RULE: (Vec<f64>, Vec<f64>) = gauss_legendre(12);
    }
    RULE.with(|(xg, wg)| {
        let whole = gauss_panel(f, a, b, xg, wg);
        let mid = 0.5 * (a + b);
        let left = gauss_panel(f, a, mid, xg, wg);
        let right = gauss_panel(f, mid, b, xg, wg);
        let two = left + right;
        let err = (two - whole).abs();
        if err <= tol.max(1e-16 * two.abs()) || depth >= 52 || (b - a) < 1e-15 {
            two
        } else {
            adapt_rec(f, a, mid, 0.5 * tol, depth + 1) + adapt_rec(f, mid, b, 0.5 * tol, depth + 1)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_weights_measure_interval() {
        let g = QuadratureGrid::build(64, 1.0).unwrap();
        let total: f64 = g.weights.iter().sum();
        assert!((total - PI).abs() < 1e-13);
        assert!(g.nodes.windows(2).all(|w| w[0] < w[1]));
        assert!(g.nodes[0] > 0.0 && *g.nodes.last().unwrap() < PI);
    }

    #[test]
    fn grid_integrates_sine_exactly_enough() {
        let g = QuadratureGrid::build(128, 2.0).unwrap();
        let s: f64 = g
            .nodes
            .iter()
            .zip(&g.weights)
            .map(|(&x, &w)| w * x.sin())
            .sum();
        assert!((s - 2.0).abs() < 1e-12, "got {s}");
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(QuadratureGrid::build(60, 1.0).is_err());
        assert!(QuadratureGrid::build(64, 0.5).is_err());
    }

    #[test]
    fn log_row_integrates_log_kernel() {
        // ∫_0^π sin(s) ln|t-s| ds against adaptive reference
        let g = QuadratureGrid::build(64, 1.0).unwrap();
        let t = 1.234567;
        let row = g.log_row(t);
        let approx: f64 = row
            .iter()
            .zip(&g.nodes)
            .map(|(&c, &s)| c * s.sin())
            .sum();
        let reference = adaptive_integrate(
            &|s: f64| s.sin() * (t - s).abs().ln(),
            0.0,
            PI,
            1e-14,
            &[t],
        );
        assert!(
            (approx - reference).abs() < 1e-11,
            "approx={approx} ref={reference}"
        );
    }

    #[test]
    fn log_convergence_outpaces_plain_rule() {
        // the log-aware rule must beat the plain rule by a wide margin on a
        // log-singular integrand
        let t = PI / 2.0;
        let f = |s: f64| s.sin();
        let reference =
            adaptive_integrate(&|s: f64| f(s) * (t - s).abs().ln(), 0.0, PI, 1e-15, &[t]);
        let g = QuadratureGrid::build(64, 1.0).unwrap();
        let log_err = (g
            .log_row(t)
            .iter()
            .zip(&g.nodes)
            .map(|(&c, &s)| c * f(s))
            .sum::<f64>()
            - reference)
            .abs();
        let plain_err = (g
            .nodes
            .iter()
            .zip(&g.weights)
            .map(|(&s, &w)| w * f(s) * (t - s).abs().ln())
            .sum::<f64>()
            - reference)
            .abs();
        assert!(
            plain_err > 50.0 * log_err,
            "plain={plain_err} log={log_err}"
        );
    }

    #[test]
    fn adaptive_handles_log_endpoint() {
        // ∫_0^1 ln s ds = -1
        let v = adaptive_integrate(&|s: f64| s.ln(), 0.0, 1.0, 1e-13, &[]);
        assert!((v + 1.0).abs() < 1e-11, "got {v}");
    }

    #[test]
    fn gauss_nodes_match_known_order_two() {
        let (x, w) = gauss_legendre(2);
        assert!((x[1] - 1.0 / 3.0_f64.sqrt()).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15);
    }

    fn cell_points(g: &QuadratureGrid, p: usize) -> Vec<f64> {
        let (xg, _) = gauss_legendre(CELL_ORDER);
        let Panel { a, b } = g.panels[p];
        xg.iter().map(|&t| 0.5 * (a + b) + 0.5 * (b - a) * t).collect()
    }

    #[test]
    fn cell_moments_symmetric_on_self_panel() {
        let g = QuadratureGrid::build(64, 2.0).unwrap();
        let px = cell_points(&g, 3);
        let m = g.cell_log_moments_local(3, 3, 0, 0, 0, &px, &px);
        let q = CELL_ORDER;
        let mut asym = 0.0_f64;
        for p in 0..q {
            for k in 0..q {
                asym = asym.max((m[p * q + k] - m[k * q + p]).abs());
            }
        }
        assert!(asym < 1e-12, "asym={asym}");
    }

    #[test]
    fn cell_moments_reproduce_smooth_log_integrals() {
        let g = QuadratureGrid::build(64, 1.0).unwrap();
        let p = 4;
        let px = cell_points(&g, p);
        let q = CELL_ORDER;
        let f: Vec<f64> = px.iter().map(|&x| x.sin()).collect();
        let h: Vec<f64> = px.iter().map(|&x| x.cos()).collect();
        let (a, b) = (g.panels[p].a, g.panels[p].b);
        for power in [1u8, 2] {
            let m = if power == 1 {
                g.cell_log_moments_local(p, p, 0, 0, 0, &px, &px)
            } else {
                g.cell_log2_moments_local(p, p, 0, 0, 0, &px, &px)
            };
            let mut approx = 0.0;
            for i in 0..q {
                for k in 0..q {
                    approx += f[i] * h[k] * m[i * q + k];
                }
            }
            let outer = |phi: f64| {
                adaptive_integrate(
                    &|s: f64| {
                        let lg = (phi - s).abs().ln();
                        phi.sin() * s.cos() * if power == 1 { lg } else { lg * lg }
                    },
                    a,
                    b,
                    1e-14,
                    &[phi],
                )
            };
            let reference = adaptive_integrate(&outer, a, b, 1e-12, &[]);
            assert!(
                (approx - reference).abs() < 1e-9,
                "power={power}: approx={approx} ref={reference}"
            );
        }
    }
}
