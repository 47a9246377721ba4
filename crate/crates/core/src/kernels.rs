//! The geometric kernel family: R_{i,j}, the hypergeometric kernels H^n_{i,j},
//! the tangential-velocity functions ν_{i,Ω}, and the angular-velocity window
//! (Ω̄₂, Ω̄₁) whose positivity-gap is the spectral condition.
//!
//! Surfaces are indexed 0 (outer) and 1 (inner) throughout the crate.

use crate::profiles::PatchPairConfig;
use crate::quad::{adaptive_integrate, QuadratureGrid};
use crate::specfun::{self, hyp_fn, kernel_prefactor};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("kernel is singular on the diagonal of a self-surface pair")]
    DiagonalSingularity,
    #[error("argument outside [0, pi]")]
    OutOfRange,
    #[error("special function failure: {0}")]
    SpecFun(#[from] specfun::SpecFunError),
}

/// R_{i,j}(φ,ψ) = (r_i(φ) + r_j(ψ))² + (d_i cos φ - d_j cos ψ)².
pub fn r_ij(cfg: &PatchPairConfig, i: usize, j: usize, phi: f64, psi: f64) -> f64 {
    let sum = cfg.radius(i, phi) + cfg.radius(j, psi);
    let dz = cfg.d(i) * phi.cos() - cfg.d(j) * psi.cos();
    sum * sum + dz * dz
}

/// Numerically stable split of the kernel argument: returns (R, u) with
/// u = 1 - x = ((r_i - r_j)² + Δz²) / R computed without cancellation.
pub fn r_and_u(cfg: &PatchPairConfig, i: usize, j: usize, phi: f64, psi: f64) -> (f64, f64) {
    let ri = cfg.radius(i, phi);
    let rj = cfg.radius(j, psi);
    let dz = cfg.d(i) * phi.cos() - cfg.d(j) * psi.cos();
    let sum = ri + rj;
    let dif = ri - rj;
    let r = sum * sum + dz * dz;
    (r, (dif * dif + dz * dz) / r)
}

/// H^n_{i,j}(φ,ψ) = c_n sin ψ · r_i^{n-1}(φ) r_j^{n+1}(ψ) / R^{n+1/2} · F_n(x),
/// x = 4 r_i r_j / R. Singular on the diagonal when i = j.
pub fn h_n(
    cfg: &PatchPairConfig,
    i: usize,
    j: usize,
    n: u32,
    phi: f64,
    psi: f64,
) -> Result<f64, KernelError> {
    if !(0.0..=std::f64::consts::PI).contains(&phi) || !(0.0..=std::f64::consts::PI).contains(&psi)
    {
        return Err(KernelError::OutOfRange);
    }
    if i == j && (phi - psi).abs() < 1e-14 && phi > 0.0 && phi < std::f64::consts::PI {
        return Err(KernelError::DiagonalSingularity);
    }
    let (r, u) = r_and_u(cfg, i, j, phi, psi);
    let x = (1.0 - u).clamp(0.0, 1.0 - 1e-16);
    let f = hyp_fn(n, x)?.value;
    let ri = cfg.radius(i, phi);
    let rj = cfg.radius(j, psi);
    Ok(kernel_prefactor(n) * psi.sin() * ri.powi(n as i32 - 1) * rj.powi(n as i32 + 1)
        / r.powf(n as f64 + 0.5)
        * f)
}

/// ∫_0^π H^1_{i,j}(φ,ψ) dψ by adaptive quadrature, split at the diagonal for
/// the self-surface pair (the integrand has a logarithmic singularity there).
pub fn h1_integral(cfg: &PatchPairConfig, i: usize, j: usize, phi: f64) -> f64 {
    let splits = if i == j { vec![phi] } else { vec![] };
    let f = |psi: f64| -> f64 {
        if i == j && (phi - psi).abs() < 1e-15 {
            return 0.0; // never hit by the open rules; belt and braces
        }
        let (r, u) = r_and_u(cfg, i, j, phi, psi);
        let x = (1.0 - u).clamp(0.0, 1.0 - 1e-16);
        let fval = hyp_fn(1, x).map(|h| h.value).unwrap_or(f64::NAN);
        0.25 * psi.sin() * cfg.radius(j, psi).powi(2) / r.powf(1.5) * fval
    };
    adaptive_integrate(&f, 0.0, std::f64::consts::PI, 1e-12, &splits)
}

/// The ν-generating function A_i(φ) = d1 ∫ H^1_{i,0} dψ - d2 ∫ H^1_{i,1} dψ,
/// so that ν_{1,Ω} = A_0 - Ω and ν_{2,Ω} = Ω - A_1.
pub fn a_gen(cfg: &PatchPairConfig, i: usize, phi: f64) -> f64 {
    cfg.d1 * h1_integral(cfg, i, 0, phi) - cfg.d2 * h1_integral(cfg, i, 1, phi)
}

/// ν_{i,Ω}(φ) = (-1)^i (A_i(φ) - Ω) with i in {0, 1} (paper indices i+1).
pub fn nu(cfg: &PatchPairConfig, i: usize, omega: f64, phi: f64) -> f64 {
    let a = a_gen(cfg, i, phi);
    if i == 0 {
        a - omega
    } else {
        omega - a
    }
}

/// α₁ for the ellipsoid of horizontal semiaxis `a` and vertical semiaxis `d1`:
/// (a² d1 / 4) ∫_0^∞ ds / ((a²+s)² √(d1²+s)), by the analytic antiderivative,
/// with a series branch near the sphere limit where the closed form cancels.
pub fn alpha1(a: f64, d1: f64) -> f64 {
    assert!(a > 0.0 && d1 > 0.0);
    let c = a * a - d1 * d1;
    if c.abs() <= 0.05 * d1 * d1 {
        // (a² d1/2) Σ_k (k+1)(-c)^k / ((3+2k) d1^{3+2k})
        let mut sum = 0.0;
        let mut pw = 1.0 / (d1 * d1 * d1);
        for k in 0..60 {
            let term = (k as f64 + 1.0) / (3.0 + 2.0 * k as f64) * pw;
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
            pw *= -c / (d1 * d1);
        }
        0.5 * a * a * d1 * sum
    } else if c > 0.0 {
        let sc = c.sqrt();
        0.5 * a * a * d1 * ((sc / d1).atan() / (2.0 * c * sc) - d1 / (2.0 * c * a * a))
    } else {
        let k = (-c).sqrt();
        0.5 * a * a * d1 * (d1 / (2.0 * k * k * a * a) + ((d1 - k) / (d1 + k)).ln() / (4.0 * k * k * k))
    }
}

/// The angular-velocity window endpoints with their latitude arguments.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct OmegaWindow {
    pub omega_bar_1: f64,
    pub omega_bar_2: f64,
    pub gap: f64,
    pub argmin_phi_1: f64,
    pub argmax_phi_2: f64,
}

impl OmegaWindow {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.omega_bar_1 + self.omega_bar_2)
    }

    pub fn spectral_condition_holds(&self) -> bool {
        self.gap > 0.0
    }
}

const SCAN_POINTS: usize = 1024;

/// Ω̄₁ = inf_φ A_0(φ), Ω̄₂ = sup_φ A_1(φ): Chebyshev-spaced scan over [0, π]
/// refined by local parabolic interpolation around the discrete extremum.
pub fn omega_window(cfg: &PatchPairConfig) -> OmegaWindow {
    let phis: Vec<f64> = (0..SCAN_POINTS)
        .map(|k| {
            std::f64::consts::FRAC_PI_2
                * (1.0 - (std::f64::consts::PI * k as f64 / (SCAN_POINTS - 1) as f64).cos())
        })
        .collect();
    let a0: Vec<f64> = phis.par_iter().map(|&p| a_gen(cfg, 0, p)).collect();
    let a1: Vec<f64> = phis.par_iter().map(|&p| a_gen(cfg, 1, p)).collect();

    let (min_idx, _) = a0
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    let (max_idx, _) = a1
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();

    let (phi1, om1) = refine_extremum(&phis, &a0, min_idx, true, &|p| a_gen(cfg, 0, p));
    let (phi2, om2) = refine_extremum(&phis, &a1, max_idx, false, &|p| a_gen(cfg, 1, p));
    OmegaWindow {
        omega_bar_1: om1,
        omega_bar_2: om2,
        gap: om1 - om2,
        argmin_phi_1: phi1,
        argmax_phi_2: phi2,
    }
}

/// Parabolic vertex through the discrete extremum and its neighbors, then a
/// direct re-evaluation; keeps the better of grid and vertex values.
fn refine_extremum(
    phis: &[f64],
    vals: &[f64],
    idx: usize,
    minimize: bool,
    f: &dyn Fn(f64) -> f64,
) -> (f64, f64) {
    if idx == 0 || idx + 1 == phis.len() {
        return (phis[idx], vals[idx]);
    }
    let (x0, x1, x2) = (phis[idx - 1], phis[idx], phis[idx + 1]);
    let (y0, y1, y2) = (vals[idx - 1], vals[idx], vals[idx + 1]);
    let d1 = (y1 - y0) / (x1 - x0);
    let d2 = (y2 - y1) / (x2 - x1);
    let curv = (d2 - d1) / (x2 - x0);
    if curv.abs() < 1e-300 {
        return (x1, y1);
    }
    let vertex = 0.5 * (x0 + x1 - d1 / curv);
    if !(x0..=x2).contains(&vertex) {
        return (x1, y1);
    }
    let fv = f(vertex);
    let better = if minimize { fv < y1 } else { fv > y1 };
    if better {
        (vertex, fv)
    } else {
        (x1, y1)
    }
}

/// Immutable evaluation context: configuration + quadrature grid + cached
/// node-level geometry, ν-generators, and the window.
pub struct KernelContext {
    pub config: PatchPairConfig,
    pub grid: QuadratureGrid,
    /// r_j at grid nodes, per surface.
    pub r: [Vec<f64>; 2],
    /// r_j' at grid nodes, per surface.
    pub dr: [Vec<f64>; 2],
    pub sin_nodes: Vec<f64>,
    pub cos_nodes: Vec<f64>,
    /// A_i(φ_k) at grid nodes, per surface (see [`a_gen`]).
    pub a_nodes: [Vec<f64>; 2],
    pub window: OmegaWindow,
}

impl KernelContext {
    pub fn new(config: PatchPairConfig, grid: QuadratureGrid) -> Self {
        let nodes = grid.nodes.clone();
        let r = [
            nodes.iter().map(|&p| config.radius(0, p)).collect(),
            nodes.iter().map(|&p| config.radius(1, p)).collect(),
        ];
        let dr = [
            nodes.iter().map(|&p| config.radius_deriv(0, p)).collect(),
            nodes.iter().map(|&p| config.radius_deriv(1, p)).collect(),
        ];
        let sin_nodes = nodes.iter().map(|p| p.sin()).collect();
        let cos_nodes = nodes.iter().map(|p| p.cos()).collect();
        let a_nodes = [
            nodes.par_iter().map(|&p| a_gen(&config, 0, p)).collect(),
            nodes.par_iter().map(|&p| a_gen(&config, 1, p)).collect(),
        ];
        let window = omega_window(&config);
        Self {
            config,
            grid,
            r,
            dr,
            sin_nodes,
            cos_nodes,
            a_nodes,
            window,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.grid.len()
    }

    /// ν_{i,Ω} at all grid nodes.
    pub fn nu_nodes(&self, i: usize, omega: f64) -> Vec<f64> {
        self.a_nodes[i]
            .iter()
            .map(|&a| if i == 0 { a - omega } else { omega - a })
            .collect()
    }

    /// ν_{i,Ω}(φ) at an arbitrary latitude (recomputes the kernel integrals).
    pub fn nu_at(&self, i: usize, omega: f64, phi: f64) -> f64 {
        nu(&self.config, i, omega, phi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::make_ellipsoid_sphere_config;
    use std::f64::consts::PI;

    #[test]
    fn r_ij_trivial_points() {
        let cfg = make_ellipsoid_sphere_config(1.5, 2.0, 1.0).unwrap();
        // poles: r0 = 0 so R = (d1 - d2)^2
        let v = r_ij(&cfg, 0, 1, 0.0, 0.0);
        assert!((v - 1.0).abs() < 1e-14);
        // inner surface, opposite poles
        let v = r_ij(&cfg, 1, 1, 0.0, PI);
        assert!((v - 4.0).abs() < 1e-14);
        // sphere same point: (2 d2 sin φ)²
        let phi = 0.7;
        let v = r_ij(&cfg, 1, 1, phi, phi);
        assert!((v - (2.0 * phi.sin()).powi(2)).abs() < 1e-13);
    }

    #[test]
    fn h_n_diagonal_guard() {
        let cfg = make_ellipsoid_sphere_config(1.5, 2.0, 1.0).unwrap();
        assert_eq!(
            h_n(&cfg, 0, 0, 2, 1.0, 1.0).unwrap_err(),
            KernelError::DiagonalSingularity
        );
        assert!(h_n(&cfg, 0, 1, 2, 1.0, 1.0).is_ok());
    }

    #[test]
    fn h_n_decreasing_in_mode() {
        let cfg = make_ellipsoid_sphere_config(1.5, 2.0, 1.0).unwrap();
        for (phi, psi) in [(0.9, 1.4), (PI / 3.0, PI / 4.0), (2.0, 2.6)] {
            let mut prev = f64::INFINITY;
            for n in 1..=12 {
                let v = h_n(&cfg, 0, 0, n, phi, psi).unwrap();
                assert!(v >= 0.0);
                assert!(v < prev, "H^n not decreasing at n={n}");
                prev = v;
            }
        }
    }

    #[test]
    fn sphere_self_velocity_is_one_third() {
        // d ∫ H^1 dψ = 1/3 on a ball, independent of latitude
        let cfg = make_ellipsoid_sphere_config(1.5, 2.0, 1.0).unwrap();
        for phi in [0.3, 1.0, PI / 2.0, 2.5] {
            let v = cfg.d2 * h1_integral(&cfg, 1, 1, phi);
            assert!(
                (v - 1.0 / 3.0).abs() < 1e-9,
                "phi={phi}: got {v}, want 1/3"
            );
        }
    }

    #[test]
    fn alpha1_sphere_limit_and_monotone_decay() {
        assert!((alpha1(1.0, 1.0) - 1.0 / 6.0).abs() < 1e-12);
        // a -> large at fixed d1: alpha1 decreasing to 0
        let mut prev = alpha1(1.0, 2.0);
        for k in 1..8 {
            let a = 2.0_f64.powi(k);
            let v = alpha1(a, 2.0);
            assert!(v < prev && v > 0.0);
            prev = v;
        }
    }

    #[test]
    fn alpha1_branch_consistency() {
        // series vs closed form near the switch
        for a in [0.96, 1.04] {
            let d1 = 1.0;
            let series = {
                let c = a * a - d1 * d1;
                let mut sum = 0.0;
                let mut pw = 1.0;
                for k in 0..200 {
                    sum += (k as f64 + 1.0) / (3.0 + 2.0 * k as f64) * pw;
                    pw *= -c;
                }
                0.5 * a * a * sum
            };
            assert!((alpha1(a, d1) - series).abs() < 1e-13);
        }
    }

    #[test]
    fn nu_matches_closed_form_on_preset() {
        let cfg = make_ellipsoid_sphere_config(1.5, 2.0, 1.0).unwrap();
        let al = alpha1(1.5, 2.0);
        let omega = 0.1;
        for phi in [0.4, 1.1, PI / 2.0, 2.2] {
            let v1 = nu(&cfg, 0, omega, phi);
            let cf1 = 2.0 * al
                - (1.0 / 3.0) / (4.0 * phi.cos().powi(2) + 2.25 * phi.sin().powi(2)).powf(1.5)
                - omega;
            assert!((v1 - cf1).abs() < 1e-7, "nu1 phi={phi}: {v1} vs {cf1}");
            let v2 = nu(&cfg, 1, omega, phi);
            let cf2 = omega - 2.0 * al + 1.0 / 3.0;
            assert!((v2 - cf2).abs() < 1e-7, "nu2 phi={phi}: {v2} vs {cf2}");
        }
    }

    #[test]
    fn window_matches_closed_form_prolate() {
        // prolate: d1 > a: inf of A_0 at the equator
        let cfg = make_ellipsoid_sphere_config(1.5, 2.0, 1.0).unwrap();
        let w = omega_window(&cfg);
        let al = alpha1(1.5, 2.0);
        let om2_cf = 2.0 * al - 1.0 / 3.0;
        let om1_cf = 2.0 * al - 1.0 / (3.0 * 1.5_f64.powi(3));
        assert!((w.omega_bar_2 - om2_cf).abs() < 1e-7, "{} vs {om2_cf}", w.omega_bar_2);
        assert!((w.omega_bar_1 - om1_cf).abs() < 1e-7, "{} vs {om1_cf}", w.omega_bar_1);
        assert!(w.gap > 0.0);
        assert!((w.argmin_phi_1 - PI / 2.0).abs() < 1e-2);
    }
}
