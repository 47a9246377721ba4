//! Nyström discretization of the 2x2-block operator acting on latitude functions,
//! one discrete operator per angular mode n, symmetrized through the square roots
//! of the spectral measures. The diagonal log singularity of the self-surface
//! kernels is handled by hierarchical sub-cell product integration: cells touching
//! the diagonal are subdivided until the connection-formula splitting of F_n is
//! numerically benign there, then integrated against exact ln|φ-ψ| moments; all
//! other cells use plain tensor Gauss. The mode-n quadratic form is independent of
//! Ω (the ν factors cancel between kernel and measure), so the expensive kernel
//! integration happens once per mode and each Ω only rescales by node values of ν.

use crate::eigen::{symmetric_eigen, SymMatrix};
use crate::kernels::KernelContext;
use crate::quad::{cardinal_matrix, dyadic, gauss_legendre, PANEL_ORDER};
use crate::specfun::{fn_series, hyp_fn_split, kernel_prefactor, x_switch};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("omega {omega} outside the admissible window ({lo}, {hi})")]
    OmegaOutsideWindow { omega: f64, lo: f64, hi: f64 },
    #[error("mode must satisfy n >= 1")]
    BadMode,
}

/// Relative margin of the window kept away from both endpoints, where the
/// measures degenerate.
pub const WINDOW_MARGIN: f64 = 1e-6;

/// Local Gauss order inside sub-cells.
const CELL_ORDER: usize = 10;
const MAX_DEPTH: u8 = 6;

/// Splitting is trusted only while the connection series varies slowly across a
/// cell: 2n·u ≤ 1 keeps the log-coefficient within a factor e of constant.
fn u_gate(n: u32) -> f64 {
    0.5 / n.max(1) as f64
}

/// Self-surface kernel evaluations for one surface.
struct SelfGeom<'a> {
    ctx: &'a KernelContext,
    i: usize,
}

impl SelfGeom<'_> {
    fn r(&self, t: f64) -> f64 {
        self.ctx.config.radius(self.i, t)
    }
    fn dr(&self, t: f64) -> f64 {
        self.ctx.config.radius_deriv(self.i, t)
    }
    fn d(&self) -> f64 {
        self.ctx.config.d(self.i)
    }
    /// Measure density g(t) = sin t · r(t)².
    fn g(&self, t: f64) -> f64 {
        let r = self.r(t);
        t.sin() * r * r
    }
    /// (R, u) with u = 1 - x computed cancellation-free.
    fn r_u(&self, phi: f64, psi: f64) -> (f64, f64) {
        let ri = self.r(phi);
        let rj = self.r(psi);
        let dz = self.d() * (phi.cos() - psi.cos());
        let s = ri + rj;
        let q = ri - rj;
        let r = s * s + dz * dz;
        (r, (q * q + dz * dz) / r)
    }
    /// ln((1-x)/(φ-ψ)²) by divided differences; finite on the diagonal.
    fn ln_factor(&self, phi: f64, psi: f64, r: f64) -> f64 {
        if phi == psi {
            let dr = self.dr(phi);
            let d = self.d();
            ((dr * dr + d * d * phi.sin() * phi.sin()) / r).ln()
        } else {
            let q1 = (self.r(phi) - self.r(psi)) / (phi - psi);
            let q2 = self.d() * (phi.cos() - psi.cos()) / (phi - psi);
            ((q1 * q1 + q2 * q2) / r).ln()
        }
    }
    fn pref(&self, n: u32, phi: f64, psi: f64, r: f64) -> f64 {
        kernel_prefactor(n)
            * ((n as f64 - 1.0) * (self.r(phi) * self.r(psi)).ln() - (n as f64 + 0.5) * r.ln())
                .exp()
    }
    /// Plain kernel value G^n(φ,ψ) = pref · F_n(x), off the diagonal.
    fn g_plain(&self, n: u32, phi: f64, psi: f64) -> f64 {
        let (r, u) = self.r_u(phi, psi);
        let x = (1.0 - u).clamp(0.0, 1.0 - 1e-16);
        let f = if x <= x_switch(n) {
            fn_series(n, x).map(|v| v.0)
        } else {
            hyp_fn_split(n, x).map(|(fr, fl, _)| fr + fl * u.max(1e-300).ln())
        }
        .unwrap_or(f64::NAN);
        self.pref(n, phi, psi, r) * f
    }
    /// Split kernel parts (G_S, G_L) with G = G_S + 2 G_L ln|φ-ψ|.
    fn g_split(&self, n: u32, phi: f64, psi: f64) -> (f64, f64) {
        let (r, u) = self.r_u(phi, psi);
        let x = (1.0 - u).clamp(1e-300, 1.0);
        let (f_reg, f_log, _) = hyp_fn_split(n, x).unwrap_or((f64::NAN, f64::NAN, 0));
        let pref = self.pref(n, phi, psi, r);
        let gs = pref * (f_reg + f_log * self.ln_factor(phi, psi, r));
        (gs, pref * f_log)
    }
}

/// Ω-free symmetric quadratic form of the mode-n operator in the coordinates
/// v_k = h(φ_k). Block (i,j) approximates
/// ±√(d_i d_j) ∫∫ G^n_{ij}(φ,ψ) g_i(φ) g_j(ψ) l_p(φ) l_k(ψ) dφ dψ.
pub struct ModalOperator {
    pub n: u32,
    pub n_nodes: usize,
    form: SymMatrix,
}

impl ModalOperator {
    /// Assemble the Ω-free form (the expensive step; parallel over rows/blocks).
    pub fn build(ctx: &KernelContext, n: u32) -> Result<Self, SpectralError> {
        if n == 0 {
            return Err(SpectralError::BadMode);
        }
        let nn = ctx.n_nodes();
        let mut form = SymMatrix::zeros(2 * nn);
        let d = [ctx.config.d1, ctx.config.d2];
        let g: [Vec<f64>; 2] = [
            (0..nn)
                .map(|k| ctx.sin_nodes[k] * ctx.r[0][k] * ctx.r[0][k])
                .collect(),
            (0..nn)
                .map(|k| ctx.sin_nodes[k] * ctx.r[1][k] * ctx.r[1][k])
                .collect(),
        ];

        // far-field entries: all (i,j) with i != j; non-near panel pairs for i == j
        for i in 0..2 {
            for j in i..2 {
                let sgn = if i == j { 1.0 } else { -1.0 };
                let fac = sgn * (d[i] * d[j]).sqrt();
                let rows: Vec<Vec<f64>> = (0..nn)
                    .into_par_iter()
                    .map(|p| {
                        let mut row = vec![0.0; nn];
                        let pa = ctx.grid.panel_of_node(p);
                        for k in 0..nn {
                            if i == j && pa.abs_diff(ctx.grid.panel_of_node(k)) <= 1 {
                                continue; // near blocks handled below
                            }
                            let ri = ctx.r[i][p];
                            let rj = ctx.r[j][k];
                            let dz = d[i] * ctx.cos_nodes[p] - d[j] * ctx.cos_nodes[k];
                            let s = ri + rj;
                            let q = ri - rj;
                            let r = s * s + dz * dz;
                            let u = (q * q + dz * dz) / r;
                            let x = (1.0 - u).clamp(0.0, 1.0 - 1e-16);
                            let f = if x <= x_switch(n) {
                                fn_series(n, x).map(|v| v.0)
                            } else {
                                hyp_fn_split(n, x)
                                    .map(|(fr, fl, _)| fr + fl * u.max(1e-300).ln())
                            }
                            .unwrap_or(f64::NAN);
                            let pref = kernel_prefactor(n)
                                * ((n as f64 - 1.0) * (ri * rj).ln()
                                    - (n as f64 + 0.5) * r.ln())
                                .exp();
                            row[k] = fac
                                * ctx.grid.weights[p]
                                * ctx.grid.weights[k]
                                * g[i][p]
                                * g[j][k]
                                * pref
                                * f;
                        }
                        row
                    })
                    .collect();
                for (p, row) in rows.iter().enumerate() {
                    for (k, &v) in row.iter().enumerate() {
                        if v != 0.0 {
                            form.set(i * nn + p, j * nn + k, v);
                            form.set(j * nn + k, i * nn + p, v);
                        }
                    }
                }
            }
        }

        // near blocks: self-surface panel pairs at index distance <= 1
        let n_panels = ctx.grid.panels.len();
        for i in 0..2 {
            let pairs: Vec<(usize, usize)> = (0..n_panels)
                .flat_map(|pa| [(pa, pa), (pa, pa + 1)])
                .filter(|&(_, pb)| pb < n_panels)
                .collect();
            let blocks: Vec<((usize, usize), Vec<f64>)> = pairs
                .par_iter()
                .map(|&(pa, pb)| {
                    let geom = SelfGeom { ctx, i };
                    ((pa, pb), near_block(ctx, &geom, n, pa, pb))
                })
                .collect();
            for ((pa, pb), blk) in blocks {
                let q = PANEL_ORDER;
                for a in 0..q {
                    for b in 0..q {
                        let p = pa * q + a;
                        let k = pb * q + b;
                        let v = d[i] * blk[a * q + b];
                        form.add(i * nn + p, i * nn + k, v);
                        if pa != pb {
                            form.add(i * nn + k, i * nn + p, v);
                        }
                    }
                }
            }
        }

        // enforce exact symmetry (construction is symmetric up to quadrature
        // noise in the cell moments)
        for p in 0..2 * nn {
            for k in (p + 1)..2 * nn {
                let v = 0.5 * (form.get(p, k) + form.get(k, p));
                form.set(p, k, v);
                form.set(k, p, v);
            }
        }
        Ok(Self { n, n_nodes: nn, form })
    }

    /// Rescale by the measure square roots at Ω. Rejects Ω within
    /// `WINDOW_MARGIN`·gap of either window endpoint.
    pub fn at(&self, ctx: &KernelContext, omega: f64) -> Result<DiscreteOperator, SpectralError> {
        let w = &ctx.window;
        let lo = w.omega_bar_2 + WINDOW_MARGIN * w.gap;
        let hi = w.omega_bar_1 - WINDOW_MARGIN * w.gap;
        if !(omega >= lo && omega <= hi) {
            return Err(SpectralError::OmegaOutsideWindow { omega, lo, hi });
        }
        let nn = self.n_nodes;
        let nu = [ctx.nu_nodes(0, omega), ctx.nu_nodes(1, omega)];
        if nu[0].iter().chain(nu[1].iter()).any(|&v| v <= 0.0) {
            return Err(SpectralError::OmegaOutsideWindow { omega, lo, hi });
        }
        let scale = [1.0, (ctx.config.d2 / ctx.config.d1).sqrt()];
        let mut sqrt_measure = [vec![0.0; nn], vec![0.0; nn]];
        let mut denom = vec![0.0; 2 * nn];
        for j in 0..2 {
            for k in 0..nn {
                let gk = ctx.sin_nodes[k] * ctx.r[j][k] * ctx.r[j][k];
                let root = (ctx.grid.weights[k] * gk * nu[j][k]).sqrt();
                sqrt_measure[j][k] = scale[j] * root;
                denom[j * nn + k] = root;
            }
        }
        let mut matrix = SymMatrix::zeros(2 * nn);
        for p in 0..2 * nn {
            for k in 0..2 * nn {
                matrix.set(p, k, self.form.get(p, k) / (denom[p] * denom[k]));
            }
        }
        Ok(DiscreteOperator {
            n: self.n,
            omega,
            matrix,
            sqrt_measure,
            nu,
            n_nodes: nn,
        })
    }
}

/// Near-diagonal block over panels (pa, pb) of the ν-free quadratic form for a
/// self-surface pair, as a PANEL_ORDER² row-major block of panel node indices.
fn near_block(ctx: &KernelContext, geom: &SelfGeom, n: u32, pa: usize, pb: usize) -> Vec<f64> {
    let q = PANEL_ORDER;
    let na = ctx.grid.panel_nodes(pa).to_vec();
    let nb = ctx.grid.panel_nodes(pb).to_vec();
    let mut block = vec![0.0; q * q];
    let (xg, wg) = gauss_legendre(CELL_ORDER);
    let gate = u_gate(n);
    let mut stack: Vec<(u8, u32, u32)> = vec![(0, 0, 0)];
    while let Some((depth, ix, iy)) = stack.pop() {
        let (ax, bx) = dyadic(ctx.grid.panels[pa], depth, ix);
        let (ay, by) = dyadic(ctx.grid.panels[pb], depth, iy);
        let touches = bx >= ay && by >= ax;
        let mut umax: f64 = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                let phi = ax + (bx - ax) * a as f64 / 3.0;
                let psi = ay + (by - ay) * b as f64 / 3.0;
                umax = umax.max(geom.r_u(phi, psi).1);
            }
        }
        if touches && umax > gate && depth < MAX_DEPTH {
            for jx in 0..2u32 {
                for jy in 0..2u32 {
                    stack.push((depth + 1, 2 * ix + jx, 2 * iy + jy));
                }
            }
            continue;
        }
        let m = CELL_ORDER;
        let px: Vec<f64> = xg.iter().map(|&t| 0.5 * (ax + bx) + 0.5 * (bx - ax) * t).collect();
        let wx: Vec<f64> = wg.iter().map(|&w| 0.5 * (bx - ax) * w).collect();
        let py: Vec<f64> = xg.iter().map(|&t| 0.5 * (ay + by) + 0.5 * (by - ay) * t).collect();
        let wy: Vec<f64> = wg.iter().map(|&w| 0.5 * (by - ay) * w).collect();
        let la = cardinal_matrix(&na, &px);
        let lb = cardinal_matrix(&nb, &py);
        let gx: Vec<f64> = px.iter().map(|&t| geom.g(t)).collect();
        let gy: Vec<f64> = py.iter().map(|&t| geom.g(t)).collect();

        // effective local weights applied to the kernel samples
        let mut kernel_w = vec![0.0; m * m];
        if touches && umax <= gate {
            let lam = ctx.grid.cell_log_moments_local(pa, pb, depth, ix, iy, &px, &py);
            for a in 0..m {
                for b in 0..m {
                    let (gs, gl) = geom.g_split(n, px[a], py[b]);
                    kernel_w[a * m + b] =
                        (wx[a] * wy[b] * gs + lam[a * m + b] * 2.0 * gl) * gx[a] * gy[b];
                }
            }
        } else {
            // separated cells, and the max-depth fallback on pole-corner cells
            // whose entries are density-suppressed
            for a in 0..m {
                for b in 0..m {
                    let mut phi = px[a];
                    let psi = py[b];
                    if (phi - psi).abs() < 1e-14 {
                        phi += 1e-11 * (bx - ax).max(1e-8);
                    }
                    kernel_w[a * m + b] =
                        wx[a] * wy[b] * geom.g_plain(n, phi, psi) * gx[a] * gy[b];
                }
            }
        }
        for p in 0..q {
            for k in 0..q {
                let mut acc = 0.0;
                for a in 0..m {
                    let lpa = la[p][a];
                    for b in 0..m {
                        acc += lpa * lb[k][b] * kernel_w[a * m + b];
                    }
                }
                block[p * q + k] += acc;
            }
        }
    }
    block
}

/// The symmetric 2N x 2N discrete operator at fixed (n, Ω), with the weight data
/// mapping eigenvectors back to latitude functions.
pub struct DiscreteOperator {
    pub n: u32,
    pub omega: f64,
    pub matrix: SymMatrix,
    /// u = D h per surface block (the d2/d1 inner-product factor folded into
    /// block 1).
    pub sqrt_measure: [Vec<f64>; 2],
    pub nu: [Vec<f64>; 2],
    pub n_nodes: usize,
}

/// Largest eigenvalue with its back-mapped eigenfunction components.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda: f64,
    pub second_lambda: f64,
    /// Sign convention: the largest-magnitude h1 component is positive.
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    /// Measure-scaled coordinates (unit vector in the discrete weighted norm).
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub normalized: bool,
}

impl EigenPair {
    /// Componentwise sign structure of the top eigenvector: h1 ≥ -tol, h2 ≤ tol
    /// with tol = tol_factor · max|H|.
    pub fn sign_pattern_ok(&self, tol_factor: f64) -> bool {
        let mx = self
            .h1
            .iter()
            .chain(self.h2.iter())
            .fold(0.0_f64, |m, &v| m.max(v.abs()));
        let tol = tol_factor * mx;
        self.h1.iter().all(|&v| v >= -tol) && self.h2.iter().all(|&v| v <= tol)
    }

    pub fn eigengap(&self) -> f64 {
        self.lambda - self.second_lambda
    }
}

/// Build the mode-n operator and evaluate it at Ω in one call.
pub fn assemble(
    n: u32,
    omega: f64,
    ctx: &KernelContext,
) -> Result<DiscreteOperator, SpectralError> {
    ModalOperator::build(ctx, n)?.at(ctx, omega)
}

/// Largest eigenpair via the dense symmetric solver, mapped back to latitude
/// functions and normalized in the weighted norm.
pub fn largest_eigenpair(op: &DiscreteOperator) -> EigenPair {
    let dec = symmetric_eigen(&op.matrix);
    let (lambda, u) = dec.largest();
    let second_lambda = dec.second_largest();
    let nn = op.n_nodes;
    let mut u1 = u[..nn].to_vec();
    let mut u2 = u[nn..].to_vec();
    let mut h1: Vec<f64> = (0..nn).map(|k| u1[k] / op.sqrt_measure[0][k]).collect();
    let mut h2: Vec<f64> = (0..nn).map(|k| u2[k] / op.sqrt_measure[1][k]).collect();
    let imax = h1
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    if h1[imax] < 0.0 {
        for v in h1
            .iter_mut()
            .chain(h2.iter_mut())
            .chain(u1.iter_mut())
            .chain(u2.iter_mut())
        {
            *v = -*v;
        }
    }
    EigenPair {
        lambda,
        second_lambda,
        h1,
        h2,
        u1,
        u2,
        normalized: true,
    }
}

/// λ'(Ω) from the eigenpair: λ (Σ u1²/ν1 − Σ u2²/ν2). Differentiating 1/ν_{2,Ω}
/// in Ω flips the sign of the inner-surface block, so the second term enters with
/// a minus; λ(Ω) is U-shaped on the window and increasing on its upper part.
pub fn eigenvalue_derivative(op: &DiscreteOperator, pair: &EigenPair) -> f64 {
    let nn = op.n_nodes;
    let mut s = 0.0;
    for k in 0..nn {
        s += pair.u1[k] * pair.u1[k] / op.nu[0][k];
        s -= pair.u2[k] * pair.u2[k] / op.nu[1][k];
    }
    pair.lambda * s
}

/// One row of an eigen sweep.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepRow {
    pub n: u32,
    pub omega: f64,
    pub lambda: f64,
    pub gap_to_second: f64,
    pub sign_ok: bool,
}

/// λ_n(Ω) table with monotonicity verdicts over the swept grids.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SpectralReport {
    pub rows: Vec<SweepRow>,
    /// Strictly decreasing in n at each fixed swept Ω.
    pub decreasing_in_n: bool,
    /// Strictly increasing in Ω at each fixed swept n (holds on the upper part
    /// of the window).
    pub increasing_in_omega: bool,
}

/// Sweep λ_n(Ω) over the given mode and Ω lists.
pub fn eigen_sweep(
    n_list: &[u32],
    omega_list: &[f64],
    ctx: &KernelContext,
) -> Result<SpectralReport, SpectralError> {
    let mut rows = Vec::new();
    for &n in n_list {
        let modal = ModalOperator::build(ctx, n)?;
        for &om in omega_list {
            let op = modal.at(ctx, om)?;
            let pair = largest_eigenpair(&op);
            rows.push(SweepRow {
                n,
                omega: om,
                lambda: pair.lambda,
                gap_to_second: pair.eigengap(),
                sign_ok: pair.sign_pattern_ok(1e-8),
            });
        }
    }
    let lam_at = |n: u32, om: f64| -> f64 {
        rows.iter()
            .find(|r| r.n == n && r.omega == om)
            .map(|r| r.lambda)
            .unwrap()
    };
    let mut decreasing = true;
    for &om in omega_list {
        let mut prev = f64::INFINITY;
        for &n in n_list {
            let lam = lam_at(n, om);
            if lam >= prev {
                decreasing = false;
            }
            prev = lam;
        }
    }
    let mut increasing = true;
    for &n in n_list {
        let mut prev = f64::NEG_INFINITY;
        for &om in omega_list {
            let lam = lam_at(n, om);
            if lam <= prev {
                increasing = false;
            }
            prev = lam;
        }
    }
    Ok(SpectralReport {
        rows,
        decreasing_in_n: decreasing,
        increasing_in_omega: increasing,
    })
}

/// Endpoint behavior report for an eigenfunction.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BoundaryReport {
    /// Extrapolated endpoint magnitude relative to max |H|.
    pub endpoint_defect: f64,
    /// Fitted constant in |h| ≤ C (sin^{n-1} φ + sin^{1/2} φ).
    pub envelope_constant: f64,
    /// Largest ratio of |h| to the fitted envelope over all nodes.
    pub envelope_excess: f64,
    pub passed: bool,
}

/// Verify the Dirichlet endpoint behavior and the sin-power envelope: quadratic
/// extrapolation from the three nodes nearest each pole must vanish relative to
/// max |H|, and no node may exceed the envelope fitted on mid-latitudes by more
/// than a fixed factor.
pub fn boundary_decay_check(
    pair: &EigenPair,
    n: u32,
    ctx: &KernelContext,
    tol_endpoint: f64,
) -> BoundaryReport {
    let nodes = &ctx.grid.nodes;
    let nn = nodes.len();
    let hmax = pair
        .h1
        .iter()
        .chain(pair.h2.iter())
        .fold(0.0_f64, |m, &v| m.max(v.abs()));
    let extrap = |h: &[f64], at_zero: bool| -> f64 {
        let idx: [usize; 3] = if at_zero {
            [0, 1, 2]
        } else {
            [nn - 1, nn - 2, nn - 3]
        };
        let target = if at_zero { 0.0 } else { std::f64::consts::PI };
        let (x0, x1, x2) = (nodes[idx[0]], nodes[idx[1]], nodes[idx[2]]);
        let (y0, y1, y2) = (h[idx[0]], h[idx[1]], h[idx[2]]);
        let l0 = (target - x1) * (target - x2) / ((x0 - x1) * (x0 - x2));
        let l1 = (target - x0) * (target - x2) / ((x1 - x0) * (x1 - x2));
        let l2 = (target - x0) * (target - x1) / ((x2 - x0) * (x2 - x1));
        l0 * y0 + l1 * y1 + l2 * y2
    };
    let mut endpoint_defect = 0.0_f64;
    for h in [&pair.h1, &pair.h2] {
        endpoint_defect = endpoint_defect
            .max(extrap(h, true).abs())
            .max(extrap(h, false).abs());
    }
    endpoint_defect /= hmax.max(1e-300);

    let env = |phi: f64| phi.sin().powi(n as i32 - 1) + phi.sin().sqrt();
    let mut c_fit = 0.0_f64;
    for (k, &phi) in nodes.iter().enumerate() {
        if phi > std::f64::consts::FRAC_PI_4 && phi < 3.0 * std::f64::consts::FRAC_PI_4 {
            let e = env(phi);
            c_fit = c_fit.max(pair.h1[k].abs() / e).max(pair.h2[k].abs() / e);
        }
    }
    let mut excess = 0.0_f64;
    for (k, &phi) in nodes.iter().enumerate() {
        let bound = c_fit * env(phi);
        if bound > 0.0 {
            excess = excess
                .max(pair.h1[k].abs() / bound)
                .max(pair.h2[k].abs() / bound);
        }
    }
    BoundaryReport {
        endpoint_defect,
        envelope_constant: c_fit,
        envelope_excess: excess,
        passed: endpoint_defect <= tol_endpoint && excess <= 3.0,
    }
}

/// Discrete Hilbert-Schmidt norm sup_{ij} (∫∫ |K^n_{ij}|² dμ_i dμ_j)^{1/2}. The
/// squared-log diagonal uses the same sub-cell refinement with ln and ln² moments;
/// ν between nodes is interpolated panel-wise from its node values.
pub fn hilbert_schmidt_norm(ctx: &KernelContext, n: u32, omega: f64) -> f64 {
    let nn = ctx.n_nodes();
    let nu = [ctx.nu_nodes(0, omega), ctx.nu_nodes(1, omega)];
    let mut worst = 0.0_f64;
    for i in 0..2 {
        for j in 0..2 {
            let mut total = 0.0;
            // node-pair part (far pairs for i == j, everything for i != j)
            for p in 0..nn {
                let pa = ctx.grid.panel_of_node(p);
                for k in 0..nn {
                    if i == j && pa.abs_diff(ctx.grid.panel_of_node(k)) <= 1 {
                        continue;
                    }
                    let ri = ctx.r[i][p];
                    let rj = ctx.r[j][k];
                    let dz =
                        ctx.config.d(i) * ctx.cos_nodes[p] - ctx.config.d(j) * ctx.cos_nodes[k];
                    let s = ri + rj;
                    let qd = ri - rj;
                    let r = s * s + dz * dz;
                    let u = (qd * qd + dz * dz) / r;
                    let x = (1.0 - u).clamp(0.0, 1.0 - 1e-16);
                    let f = if x <= x_switch(n) {
                        fn_series(n, x).map(|v| v.0)
                    } else {
                        hyp_fn_split(n, x).map(|(fr, fl, _)| fr + fl * u.max(1e-300).ln())
                    }
                    .unwrap_or(f64::NAN);
                    let pref = kernel_prefactor(n)
                        * ((n as f64 - 1.0) * (ri * rj).ln() - (n as f64 + 0.5) * r.ln()).exp();
                    let gval = pref * f;
                    let gp = ctx.sin_nodes[p] * ri * ri;
                    let gk = ctx.sin_nodes[k] * rj * rj;
                    total += ctx.grid.weights[p] * ctx.grid.weights[k] * gval * gval * gp * gk
                        / (nu[i][p] * nu[j][k]);
                }
            }
            if i == j {
                let geom = SelfGeom { ctx, i };
                let n_panels = ctx.grid.panels.len();
                for pa in 0..n_panels {
                    for pb in [pa, pa + 1] {
                        if pb >= n_panels {
                            continue;
                        }
                        let v = hs_near_block(ctx, &geom, n, pa, pb, &nu[i]);
                        total += if pa == pb { v } else { 2.0 * v };
                    }
                }
            }
            worst = worst.max(total.max(0.0).sqrt());
        }
    }
    worst
}

fn hs_near_block(
    ctx: &KernelContext,
    geom: &SelfGeom,
    n: u32,
    pa: usize,
    pb: usize,
    nu_nodes: &[f64],
) -> f64 {
    let (xg, wg) = gauss_legendre(CELL_ORDER);
    let q = PANEL_ORDER;
    let nu_at = |panel: usize, t: f64| -> f64 {
        let nodes = ctx.grid.panel_nodes(panel);
        let vals = &nu_nodes[panel * q..(panel + 1) * q];
        let l = cardinal_matrix(nodes, &[t]);
        (0..q).map(|jj| l[jj][0] * vals[jj]).sum()
    };
    let gate = u_gate(n);
    let mut total = 0.0;
    let mut stack: Vec<(u8, u32, u32)> = vec![(0, 0, 0)];
    while let Some((depth, ix, iy)) = stack.pop() {
        let (ax, bx) = dyadic(ctx.grid.panels[pa], depth, ix);
        let (ay, by) = dyadic(ctx.grid.panels[pb], depth, iy);
        let touches = bx >= ay && by >= ax;
        let mut umax: f64 = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                let phi = ax + (bx - ax) * a as f64 / 3.0;
                let psi = ay + (by - ay) * b as f64 / 3.0;
                umax = umax.max(geom.r_u(phi, psi).1);
            }
        }
        if touches && umax > gate && depth < MAX_DEPTH {
            for jx in 0..2u32 {
                for jy in 0..2u32 {
                    stack.push((depth + 1, 2 * ix + jx, 2 * iy + jy));
                }
            }
            continue;
        }
        let m = CELL_ORDER;
        let px: Vec<f64> = xg.iter().map(|&t| 0.5 * (ax + bx) + 0.5 * (bx - ax) * t).collect();
        let wx: Vec<f64> = wg.iter().map(|&w| 0.5 * (bx - ax) * w).collect();
        let py: Vec<f64> = xg.iter().map(|&t| 0.5 * (ay + by) + 0.5 * (by - ay) * t).collect();
        let wy: Vec<f64> = wg.iter().map(|&w| 0.5 * (by - ay) * w).collect();
        let dx: Vec<f64> = px.iter().map(|&t| geom.g(t) / nu_at(pa, t)).collect();
        let dy: Vec<f64> = py.iter().map(|&t| geom.g(t) / nu_at(pb, t)).collect();
        if touches && umax <= gate {
            let lam = ctx.grid.cell_log_moments_local(pa, pb, depth, ix, iy, &px, &py);
            let lam2 = ctx
                .grid
                .cell_log2_moments_local(pa, pb, depth, ix, iy, &px, &py);
            for a in 0..m {
                for b in 0..m {
                    let (gs, gl) = geom.g_split(n, px[a], py[b]);
                    let dd = dx[a] * dy[b];
                    // (gs + 2 gl L)² = gs² + 4 gs gl L + 4 gl² L², L = ln|φ-ψ|
                    total += wx[a] * wy[b] * gs * gs * dd;
                    total += lam[a * m + b] * 4.0 * gs * gl * dd;
                    total += lam2[a * m + b] * 4.0 * gl * gl * dd;
                }
            }
        } else {
            for a in 0..m {
                for b in 0..m {
                    let mut phi = px[a];
                    let psi = py[b];
                    if (phi - psi).abs() < 1e-14 {
                        phi += 1e-11 * (bx - ax).max(1e-8);
                    }
                    let gval = geom.g_plain(n, phi, psi);
                    total += wx[a] * wy[b] * gval * gval * dx[a] * dy[b];
                }
            }
        }
    }
    total
}

/// Apply the discrete mode-n operator to latitude functions at the grid nodes:
/// g = D^{-1} S (D h). Used by the analytic linearization of the functional.
pub fn apply_operator(op: &DiscreteOperator, h1: &[f64], h2: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let nn = op.n_nodes;
    let mut v = vec![0.0; 2 * nn];
    for k in 0..nn {
        v[k] = h1[k] * op.sqrt_measure[0][k];
        v[nn + k] = h2[k] * op.sqrt_measure[1][k];
    }
    let w = op.matrix.matvec(&v);
    let g1 = (0..nn).map(|k| w[k] / op.sqrt_measure[0][k]).collect();
    let g2 = (0..nn).map(|k| w[nn + k] / op.sqrt_measure[1][k]).collect();
    (g1, g2)
}

/// Top eigenvalue of the unsymmetrized Nyström matrix M = D^{-1/2} S D^{1/2}
/// (the plain kernel/weights/ν discretization) by deterministic power iteration
/// started from the symmetric top eigenvector. Diagonal scaling preserves the
/// spectrum; this verifies it numerically.
pub fn unsymmetrized_top_eigenvalue(op: &DiscreteOperator, pair: &EigenPair) -> f64 {
    let nn = op.n_nodes;
    let d: Vec<f64> = op.sqrt_measure[0]
        .iter()
        .chain(op.sqrt_measure[1].iter())
        .copied()
        .collect();
    let mut v: Vec<f64> = (0..2 * nn)
        .map(|k| {
            let u = if k < nn { pair.u1[k] } else { pair.u2[k - nn] };
            u / d[k]
        })
        .collect();
    let mut lambda = 0.0;
    for _ in 0..200 {
        let dv: Vec<f64> = (0..2 * nn).map(|k| v[k] * d[k]).collect();
        let sdv = op.matrix.matvec(&dv);
        let w: Vec<f64> = (0..2 * nn).map(|k| sdv[k] / d[k]).collect();
        let num: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        let den: f64 = v.iter().map(|a| a * a).sum();
        let new_lambda = num / den;
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        for (vk, wk) in v.iter_mut().zip(&w) {
            *vk = wk / norm;
        }
        if (new_lambda - lambda).abs() <= 1e-14 * new_lambda.abs() {
            return new_lambda;
        }
        lambda = new_lambda;
    }
    lambda
}
