//! Location of the bifurcation angular velocities: for each fold m, the unique
//! solution of λ_m(Ω_m) = 1 on the upper part of the window, found by bisection
//! on the monotone bracket [Ω_mid, Ω̄₁ - ε·gap]. Also the transversality quantity
//! (the weighted mass difference of the eigenfunction components) and the kernel
//! one-dimensionality margin 1 - λ_{2m}(Ω_m).

use crate::kernels::KernelContext;
use crate::spectral::{
    largest_eigenpair, EigenPair, ModalOperator, SpectralError, WINDOW_MARGIN,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BifurcationError {
    /// λ_m at the window midpoint is already ≥ 1: the fold is below the
    /// operational threshold and no root is bracketed on the monotone side.
    #[error("mode {m} below threshold: lambda at the window midpoint is {lambda_mid} >= 1")]
    BelowThreshold { m: u32, lambda_mid: f64 },
    /// λ_m stays < 1 all the way to the admissible upper edge.
    #[error("mode {m} not bracketed: lambda at the upper edge is {lambda_hi} < 1")]
    NotBracketed { m: u32, lambda_hi: f64 },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// A located bifurcation point with its diagnostics.
#[derive(Debug, Clone)]
pub struct BifurcationPoint {
    pub m: u32,
    pub omega_m: f64,
    pub eigenpair: EigenPair,
    /// |λ_m(Ω_m) - 1| at the accepted iterate.
    pub residual: f64,
    /// Transversality quantity Q_m (weighted mass difference).
    pub transversality_q: f64,
    /// 1 - λ_{2m}(Ω_m); positive when the kernel within the fold class is
    /// one-dimensional.
    pub kernel_margin: f64,
    /// Fraction of the sin³-weighted mass carried by the inner component.
    pub inner_mass_fraction: f64,
    pub bisection_iterations: u32,
}

/// Solve λ_m(Ω) = 1 by bisection on [Ω_mid, Ω̄₁ - ε·gap], where λ_m is strictly
/// increasing; converges to |λ - 1| ≤ tol.
pub fn find_omega_m(
    m: u32,
    ctx: &KernelContext,
    tol: f64,
) -> Result<BifurcationPoint, BifurcationError> {
    let modal = ModalOperator::build(ctx, m)?;
    let w = &ctx.window;
    let mut lo = w.midpoint();
    let mut hi = w.omega_bar_1 - WINDOW_MARGIN * w.gap;
    let lam = |om: f64| -> Result<f64, BifurcationError> {
        Ok(largest_eigenpair(&modal.at(ctx, om)?).lambda)
    };
    let lam_lo = lam(lo)?;
    if lam_lo >= 1.0 {
        return Err(BifurcationError::BelowThreshold {
            m,
            lambda_mid: lam_lo,
        });
    }
    let lam_hi = lam(hi)?;
    if lam_hi < 1.0 {
        return Err(BifurcationError::NotBracketed {
            m,
            lambda_hi: lam_hi,
        });
    }
    let mut iterations = 0u32;
    let max_iter = ((w.gap / tol).log2().ceil() as u32).saturating_add(2);
    let mut omega = 0.5 * (lo + hi);
    let mut lam_mid = lam(omega)?;
    while (lam_mid - 1.0).abs() > tol && iterations < max_iter {
        if lam_mid < 1.0 {
            lo = omega;
        } else {
            hi = omega;
        }
        omega = 0.5 * (lo + hi);
        lam_mid = lam(omega)?;
        iterations += 1;
    }
    let op = modal.at(ctx, omega)?;
    let eigenpair = largest_eigenpair(&op);
    let residual = (eigenpair.lambda - 1.0).abs();
    let transversality_q = transversality(ctx, &eigenpair);
    let inner_mass_fraction = inner_mass_fraction(ctx, &eigenpair);
    // kernel one-dimensionality within the fold class: λ_{2m}(Ω_m) < 1
    let op2 = ModalOperator::build(ctx, 2 * m)?.at(ctx, omega)?;
    let kernel_margin = 1.0 - largest_eigenpair(&op2).lambda;
    Ok(BifurcationPoint {
        m,
        omega_m: omega,
        eigenpair,
        residual,
        transversality_q,
        kernel_margin,
        inner_mass_fraction,
        bisection_iterations: iterations,
    })
}

/// Ω_m for every fold in [m_min, m_max]; folds whose λ at the midpoint is
/// already ≥ 1 are reported in the second list, other failures likewise.
pub fn omega_sequence(
    m_min: u32,
    m_max: u32,
    ctx: &KernelContext,
    tol: f64,
) -> (Vec<BifurcationPoint>, Vec<(u32, BifurcationError)>) {
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for m in m_min..=m_max {
        match find_omega_m(m, ctx, tol) {
            Ok(p) => points.push(p),
            Err(e) => skipped.push((m, e)),
        }
    }
    (points, skipped)
}

/// Q_m = ∫ h1² sin φ r1² dφ - (d2/d1) ∫ h2² sin φ r2² dφ for a normalized
/// eigenpair; nonvanishing Q_m certifies the transversality condition.
pub fn transversality(ctx: &KernelContext, pair: &EigenPair) -> f64 {
    let nn = ctx.n_nodes();
    let mut q = 0.0;
    for k in 0..nn {
        let w = ctx.grid.weights[k] * ctx.sin_nodes[k];
        q += w * ctx.r[0][k] * ctx.r[0][k] * pair.h1[k] * pair.h1[k];
        q -= (ctx.config.d2 / ctx.config.d1)
            * w
            * ctx.r[1][k]
            * ctx.r[1][k]
            * pair.h2[k]
            * pair.h2[k];
    }
    q
}

/// Degeneracy detector for the transversality quantity: true when |Q| clears
/// the threshold, false for (synthetically) degenerate pairs.
pub fn transversality_nondegenerate(q: f64, threshold: f64) -> bool {
    q.abs() > threshold
}

/// Fraction ∫ h2² sin³ / (∫ h1² sin³ + ∫ h2² sin³): decays along the fold range
/// as the mass concentrates on the outer component.
pub fn inner_mass_fraction(ctx: &KernelContext, pair: &EigenPair) -> f64 {
    let nn = ctx.n_nodes();
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for k in 0..nn {
        let w = ctx.grid.weights[k] * ctx.sin_nodes[k].powi(3);
        m1 += w * pair.h1[k] * pair.h1[k];
        m2 += w * pair.h2[k] * pair.h2[k];
    }
    m2 / (m1 + m2)
}
