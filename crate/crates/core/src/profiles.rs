//! Stationary revolution profiles r0(φ) on [0, π] and numerical certification of
//! the geometric non-degeneracy hypotheses: two-sided sin bounds, equatorial
//! symmetry, interface separation, and the interaction bound strictly below one.

use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("invalid profile parameter: {0}")]
    BadParameter(String),
    #[error("profile table: {0}")]
    BadTable(String),
    #[error("csv parse error at line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("configuration rejected: {0}")]
    BadConfig(String),
}

/// Generating curve of an axisymmetric surface, parametrized as
/// (r0(φ) e^{iθ}, d cos φ) with r0(0) = r0(π) = 0.
#[derive(Debug, Clone)]
pub enum RevolutionProfile {
    /// r0(φ) = a sin φ (ellipsoid with horizontal semiaxes a; the vertical
    /// semiaxis is the d carried by the configuration).
    Ellipsoid { a: f64 },
    /// r0(φ) = radius · sin φ with d = radius: a ball.
    Sphere { radius: f64 },
    /// Monotone cubic interpolant of sampled (φ, r) data, endpoint values
    /// clamped to zero.
    Tabulated(Pchip),
}

impl RevolutionProfile {
    pub fn ellipsoid(a: f64) -> Result<Self, ProfileError> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(ProfileError::BadParameter(format!(
                "ellipsoid semiaxis must be positive, got {a}"
            )));
        }
        Ok(Self::Ellipsoid { a })
    }

    pub fn sphere(radius: f64) -> Result<Self, ProfileError> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(ProfileError::BadParameter(format!(
                "sphere radius must be positive, got {radius}"
            )));
        }
        Ok(Self::Sphere { radius })
    }

    /// Build from samples (φ strictly increasing within [0, π]). Endpoints are
    /// clamped to r = 0; missing endpoints are added.
    pub fn tabulated(samples: Vec<(f64, f64)>) -> Result<Self, ProfileError> {
        Pchip::new(samples).map(Self::Tabulated)
    }

    /// Load a tabulated profile from two-column CSV `phi,r` with a header row.
    pub fn from_csv(path: &Path) -> Result<Self, ProfileError> {
        let text = fs::read_to_string(path)?;
        let mut samples = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if idx == 0 {
                continue; // header
            }
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let phi: f64 = parts
                .next()
                .ok_or(ProfileError::Csv {
                    line: idx + 1,
                    msg: "missing phi".into(),
                })?
                .trim()
                .parse()
                .map_err(|e| ProfileError::Csv {
                    line: idx + 1,
                    msg: format!("phi: {e}"),
                })?;
            let r: f64 = parts
                .next()
                .ok_or(ProfileError::Csv {
                    line: idx + 1,
                    msg: "missing r".into(),
                })?
                .trim()
                .parse()
                .map_err(|e| ProfileError::Csv {
                    line: idx + 1,
                    msg: format!("r: {e}"),
                })?;
            samples.push((phi, r));
        }
        Self::tabulated(samples)
    }

    /// r0(φ).
    pub fn radius(&self, phi: f64) -> f64 {
        match self {
            Self::Ellipsoid { a } => a * phi.sin(),
            Self::Sphere { radius } => radius * phi.sin(),
            Self::Tabulated(p) => p.eval(phi),
        }
    }

    /// r0'(φ).
    pub fn radius_deriv(&self, phi: f64) -> f64 {
        match self {
            Self::Ellipsoid { a } => a * phi.cos(),
            Self::Sphere { radius } => radius * phi.cos(),
            Self::Tabulated(p) => p.deriv(phi),
        }
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(self, Self::Tabulated(_))
    }
}

/// Fritsch-Carlson monotone cubic Hermite interpolant with endpoint values
/// clamped to zero and endpoint slopes from one-sided 3-point stencils.
#[derive(Debug, Clone)]
pub struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl Pchip {
    fn new(mut samples: Vec<(f64, f64)>) -> Result<Self, ProfileError> {
        if samples.len() < 4 {
            return Err(ProfileError::BadTable(format!(
                "need at least 4 samples, got {}",
                samples.len()
            )));
        }
        for w in samples.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(ProfileError::BadTable(
                    "phi values must be strictly increasing".into(),
                ));
            }
        }
        let eps = 1e-12;
        if samples[0].0 < -eps || samples.last().unwrap().0 > std::f64::consts::PI + eps {
            return Err(ProfileError::BadTable("phi outside [0, pi]".into()));
        }
        if samples.iter().any(|&(_, r)| r < 0.0) {
            return Err(ProfileError::BadTable("negative radius sample".into()));
        }
        // clamp or add endpoint zeros
        if samples[0].0 > eps {
            samples.insert(0, (0.0, 0.0));
        } else {
            samples[0] = (0.0, 0.0);
        }
        if samples.last().unwrap().0 < std::f64::consts::PI - eps {
            samples.push((std::f64::consts::PI, 0.0));
        } else {
            *samples.last_mut().unwrap() = (std::f64::consts::PI, 0.0);
        }
        let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let ys: Vec<f64> = samples.iter().map(|s| s.1).collect();
        let n = xs.len();
        let mut d = vec![0.0; n - 1];
        let mut h = vec![0.0; n - 1];
        for i in 0..n - 1 {
            h[i] = xs[i + 1] - xs[i];
            d[i] = (ys[i + 1] - ys[i]) / h[i];
        }
        let mut slopes = vec![0.0; n];
        // one-sided 3-point endpoint slopes
        slopes[0] = three_point_slope(xs[0], xs[1], xs[2], ys[0], ys[1], ys[2]);
        slopes[n - 1] = three_point_slope(
            xs[n - 1],
            xs[n - 2],
            xs[n - 3],
            ys[n - 1],
            ys[n - 2],
            ys[n - 3],
        );
        for i in 1..n - 1 {
            if d[i - 1] * d[i] <= 0.0 {
                slopes[i] = 0.0;
            } else {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                slopes[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
            }
        }
        // Fritsch-Carlson limiting on interior intervals
        for i in 0..n - 1 {
            if d[i] == 0.0 {
                slopes[i] = 0.0;
                slopes[i + 1] = 0.0;
            } else {
                let alpha = slopes[i] / d[i];
                let beta = slopes[i + 1] / d[i];
                let s = alpha * alpha + beta * beta;
                if s > 9.0 {
                    let tau = 3.0 / s.sqrt();
                    slopes[i] = tau * alpha * d[i];
                    slopes[i + 1] = tau * beta * d[i];
                }
            }
        }
        Ok(Self { xs, ys, slopes })
    }

    fn segment(&self, x: f64) -> usize {
        match self
            .xs
            .binary_search_by(|v| v.partial_cmp(&x).unwrap())
        {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.xs.len() - 2),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (h00, h10, h01, h11) = hermite_basis(t);
        h00 * self.ys[i] + h10 * h * self.slopes[i] + h01 * self.ys[i + 1] + h11 * h * self.slopes[i + 1]
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let dh00 = (6.0 * t * t - 6.0 * t) / h;
        let dh10 = 3.0 * t * t - 4.0 * t + 1.0;
        let dh01 = -(6.0 * t * t - 6.0 * t) / h;
        let dh11 = 3.0 * t * t - 2.0 * t;
        dh00 * self.ys[i] + dh10 * self.slopes[i] + dh01 * self.ys[i + 1] + dh11 * self.slopes[i + 1]
    }
}

fn hermite_basis(t: f64) -> (f64, f64, f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        2.0 * t3 - 3.0 * t2 + 1.0,
        t3 - 2.0 * t2 + t,
        -2.0 * t3 + 3.0 * t2,
        t3 - t2,
    )
}

fn three_point_slope(x0: f64, x1: f64, x2: f64, y0: f64, y1: f64, y2: f64) -> f64 {
    // derivative at x0 of the quadratic through the three points
    let h1 = x1 - x0;
    let h2 = x2 - x0;
    let d1 = (y1 - y0) / h1;
    let d2 = (y2 - y0) / h2;
    (d1 * h2 - d2 * h1) / (h2 - h1)
}

/// Grid certification of the profile hypotheses.
#[derive(Debug, Clone, serde::Serialize)]
pub struct HypothesisReport {
    /// Two-sided constant in C^{-1} sin φ ≤ r0(φ) ≤ C sin φ.
    pub chord_constant_c: f64,
    /// Grid minimum of (r1(φ) - r2(ψ))² + (d1 cos φ - d2 cos ψ)².
    pub separation_delta: f64,
    /// Grid maximum of 4 r1(φ) r2(ψ) / R_{1,2}(φ, ψ); < 1 when separated.
    pub interaction_bound_delta_bar: f64,
    /// Max |r0(π-φ) - r0(φ)| over both profiles.
    pub symmetry_defect: f64,
    /// Change of the finite-difference second-derivative estimate under halving
    /// the step; zero for analytic profile kinds.
    pub regularity_defect: f64,
    pub grid_size: usize,
    pub passing: bool,
}

/// The full stationary configuration: outer and inner revolution profiles with
/// their vertical semi-axes d1 > d2, plus the certified hypothesis report.
#[derive(Debug, Clone)]
pub struct PatchPairConfig {
    pub d1: f64,
    pub d2: f64,
    pub outer: RevolutionProfile,
    pub inner: RevolutionProfile,
    pub validated: HypothesisReport,
}

impl PatchPairConfig {
    pub const DEFAULT_GRID: usize = 512;

    pub fn new(
        d1: f64,
        d2: f64,
        outer: RevolutionProfile,
        inner: RevolutionProfile,
        grid_size: usize,
    ) -> Result<Self, ProfileError> {
        if !(d1 > d2 && d2 > 0.0) {
            return Err(ProfileError::BadConfig(format!(
                "need d1 > d2 > 0, got d1={d1}, d2={d2}"
            )));
        }
        let validated = validate_hypotheses(d1, d2, &outer, &inner, grid_size);
        Ok(Self {
            d1,
            d2,
            outer,
            inner,
            validated,
        })
    }

    pub fn profile(&self, i: usize) -> &RevolutionProfile {
        if i == 0 {
            &self.outer
        } else {
            &self.inner
        }
    }

    pub fn d(&self, i: usize) -> f64 {
        if i == 0 {
            self.d1
        } else {
            self.d2
        }
    }

    /// r0,i(φ) for surface index i in {0 (outer), 1 (inner)}.
    pub fn radius(&self, i: usize, phi: f64) -> f64 {
        self.profile(i).radius(phi)
    }

    pub fn radius_deriv(&self, i: usize, phi: f64) -> f64 {
        self.profile(i).radius_deriv(phi)
    }
}

/// Outer ellipsoid (semiaxes a, a, d1) around an inner ball of radius d2.
/// Requires d1 > d2 > 0 and a > d2.
pub fn make_ellipsoid_sphere_config(
    a: f64,
    d1: f64,
    d2: f64,
) -> Result<PatchPairConfig, ProfileError> {
    if !(a > d2) {
        return Err(ProfileError::BadConfig(format!(
            "need a > d2 for the ellipsoid/ball pair, got a={a}, d2={d2}"
        )));
    }
    let cfg = PatchPairConfig::new(
        d1,
        d2,
        RevolutionProfile::ellipsoid(a)?,
        RevolutionProfile::sphere(d2)?,
        2048,
    )?;
    if !cfg.validated.passing {
        return Err(ProfileError::BadConfig(
            "hypothesis certification failed for the preset".into(),
        ));
    }
    Ok(cfg)
}

/// Numerical certification of the hypotheses by grid search (a check, not a
/// proof). The separation minimum is sharpened by parabolic refinement around
/// the discrete minimizer.
pub fn validate_hypotheses(
    d1: f64,
    d2: f64,
    outer: &RevolutionProfile,
    inner: &RevolutionProfile,
    grid_size: usize,
) -> HypothesisReport {
    let g = grid_size.max(64);
    let phis: Vec<f64> = (0..=g)
        .map(|k| std::f64::consts::PI * k as f64 / g as f64)
        .collect();

    // (H2): two-sided sin bound on interior points
    let mut c = 1.0_f64;
    for prof in [outer, inner] {
        for &phi in &phis[1..g] {
            let s = phi.sin();
            let r = prof.radius(phi);
            if r <= 0.0 {
                c = f64::INFINITY;
                break;
            }
            c = c.max(r / s).max(s / r);
        }
    }

    // (H3): equatorial symmetry
    let mut sym = 0.0_f64;
    for prof in [outer, inner] {
        for &phi in &phis {
            sym = sym.max((prof.radius(std::f64::consts::PI - phi) - prof.radius(phi)).abs());
        }
    }

    // (H4): interface separation and the interaction bound
    let sep_fn = |phi: f64, psi: f64| {
        let dr = outer.radius(phi) - inner.radius(psi);
        let dz = d1 * phi.cos() - d2 * psi.cos();
        dr * dr + dz * dz
    };
    let mut sep = f64::INFINITY;
    let mut arg = (0usize, 0usize);
    let mut delta_bar = 0.0_f64;
    for (ip, &phi) in phis.iter().enumerate() {
        for (iq, &psi) in phis.iter().enumerate() {
            let v = sep_fn(phi, psi);
            if v < sep {
                sep = v;
                arg = (ip, iq);
            }
            let r1 = outer.radius(phi);
            let r2 = inner.radius(psi);
            let sum = r1 + r2;
            let dz = d1 * phi.cos() - d2 * psi.cos();
            let rij = sum * sum + dz * dz;
            if rij > 0.0 {
                delta_bar = delta_bar.max(4.0 * r1 * r2 / rij);
            }
        }
    }
    // parabolic refinement of the separation minimum in both directions
    let sep = refine_min_2d(&sep_fn, &phis, arg, sep);

    // (H1): C² defect for tabulated profiles via second differences at two steps
    let mut reg = 0.0_f64;
    for prof in [outer, inner] {
        if prof.is_analytic() {
            continue;
        }
        let h = std::f64::consts::PI / g as f64;
        for &phi in &phis[2..g.saturating_sub(1)] {
            let d2h = (prof.radius(phi + h) - 2.0 * prof.radius(phi) + prof.radius(phi - h))
                / (h * h);
            let hh = 0.5 * h;
            let d2h2 = (prof.radius(phi + hh) - 2.0 * prof.radius(phi) + prof.radius(phi - hh))
                / (hh * hh);
            reg = reg.max((d2h - d2h2).abs());
        }
    }

    let endpoint_zero = outer.radius(0.0).abs().max(outer.radius(std::f64::consts::PI).abs())
        .max(inner.radius(0.0).abs())
        .max(inner.radius(std::f64::consts::PI).abs());

    let passing = sep > 0.0
        && sym <= 1e-10
        && c.is_finite()
        && delta_bar < 1.0
        && endpoint_zero <= 1e-14;

    HypothesisReport {
        chord_constant_c: c,
        separation_delta: sep,
        interaction_bound_delta_bar: delta_bar,
        symmetry_defect: sym,
        regularity_defect: reg,
        grid_size: g,
        passing,
    }
}

fn refine_min_2d<F: Fn(f64, f64) -> f64>(
    f: &F,
    phis: &[f64],
    arg: (usize, usize),
    grid_min: f64,
) -> f64 {
    let refine_axis = |c: f64, lo: f64, hi: f64, eval: &dyn Fn(f64) -> f64| -> f64 {
        // golden-ish ternary refinement inside [lo, hi]
        let mut a = lo;
        let mut b = hi;
        for _ in 0..60 {
            let m1 = a + (b - a) / 3.0;
            let m2 = b - (b - a) / 3.0;
            if eval(m1) < eval(m2) {
                b = m2;
            } else {
                a = m1;
            }
        }
        let m = 0.5 * (a + b);
        if eval(m) < eval(c) {
            m
        } else {
            c
        }
    };
    let (ip, iq) = arg;
    let lo_p = phis[ip.saturating_sub(1)];
    let hi_p = phis[(ip + 1).min(phis.len() - 1)];
    let lo_q = phis[iq.saturating_sub(1)];
    let hi_q = phis[(iq + 1).min(phis.len() - 1)];
    let mut p = phis[ip];
    let mut q = phis[iq];
    for _ in 0..4 {
        p = refine_axis(p, lo_p, hi_p, &|x| f(x, q));
        q = refine_axis(q, lo_q, hi_q, &|y| f(p, y));
    }
    grid_min.min(f(p, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn preset_validates() {
        let cfg = make_ellipsoid_sphere_config(1.5, 2.0, 1.0).unwrap();
        assert!(cfg.validated.passing);
        assert!(cfg.validated.separation_delta > 0.0);
        assert!(cfg.validated.interaction_bound_delta_bar < 1.0);
        assert!(cfg.validated.symmetry_defect <= 1e-12);
    }

    #[test]
    fn preset_rejects_bad_parameters() {
        assert!(make_ellipsoid_sphere_config(1.0, 2.0, 1.0).is_err()); // a = d2
        assert!(make_ellipsoid_sphere_config(1.5, 1.0, 1.0).is_err()); // d1 = d2
    }

    #[test]
    fn touching_spheres_fail_separation() {
        let outer = RevolutionProfile::sphere(1.0).unwrap();
        let inner = RevolutionProfile::sphere(1.0).unwrap();
        // d1 must exceed d2 for construction; use barely distinct d and identical radii:
        let cfg = PatchPairConfig::new(1.0 + 1e-12, 1.0, outer, inner, 128).unwrap();
        assert!(cfg.validated.separation_delta < 1e-10);
        assert!(!cfg.validated.passing);
    }

    #[test]
    fn asymmetric_table_fails() {
        let mut samples = Vec::new();
        for k in 0..=32 {
            let phi = PI * k as f64 / 32.0;
            let bump = if phi < PI / 2.0 { 1.1 } else { 1.0 };
            samples.push((phi, bump * phi.sin()));
        }
        let prof = RevolutionProfile::tabulated(samples).unwrap();
        let inner = RevolutionProfile::sphere(0.3).unwrap();
        let cfg = PatchPairConfig::new(1.5, 0.3, prof, inner, 128).unwrap();
        assert!(cfg.validated.symmetry_defect > 1e-10);
        assert!(!cfg.validated.passing);
    }

    #[test]
    fn separation_matches_dense_grid_oracle() {
        // brute-force 2000-interval grid minimum as the oracle
        let cfg = make_ellipsoid_sphere_config(1.2, 1.3, 1.0).unwrap();
        let mut oracle = f64::INFINITY;
        let g = 2000usize;
        for ip in 0..=g {
            let phi = PI * ip as f64 / g as f64;
            let r1 = 1.2 * phi.sin();
            let z1 = 1.3 * phi.cos();
            for iq in 0..=g {
                let psi = PI * iq as f64 / g as f64;
                let dr = r1 - psi.sin();
                let dz = z1 - psi.cos();
                oracle = oracle.min(dr * dr + dz * dz);
            }
        }
        let rel = (cfg.validated.separation_delta - oracle).abs() / oracle;
        assert!(rel < 1e-6, "sep={} oracle={oracle}", cfg.validated.separation_delta);
    }

    #[test]
    fn pchip_reproduces_sine_profile() {
        let samples: Vec<(f64, f64)> = (0..=64)
            .map(|k| {
                let phi = PI * k as f64 / 64.0;
                (phi, phi.sin())
            })
            .collect();
        let p = RevolutionProfile::tabulated(samples).unwrap();
        for k in 1..64 {
            let phi = PI * (k as f64 + 0.37) / 64.0;
            assert!((p.radius(phi) - phi.sin()).abs() < 2e-5);
            assert!((p.radius_deriv(phi) - phi.cos()).abs() < 2e-3);
        }
        assert_eq!(p.radius(0.0), 0.0);
        assert_eq!(p.radius(PI), 0.0);
    }

    #[test]
    fn arc_chord_estimate_for_preset() {
        // C^{-1}(φ-ψ)² ≤ (r(ψ)-r(φ))² + d²(cos φ - cos ψ)² ≤ C(φ-ψ)²
        let cfg = make_ellipsoid_sphere_config(1.5, 2.0, 1.0).unwrap();
        for (prof, d) in [(&cfg.outer, cfg.d1), (&cfg.inner, cfg.d2)] {
            let mut cmax: f64 = 1.0;
            for ip in 0..=160 {
                let phi = PI * ip as f64 / 160.0;
                for iq in 0..ip {
                    let psi = PI * iq as f64 / 160.0;
                    let dr = prof.radius(phi) - prof.radius(psi);
                    let dz = d * (phi.cos() - psi.cos());
                    let lhs = dr * dr + dz * dz;
                    let gap2 = (phi - psi) * (phi - psi);
                    cmax = cmax.max(lhs / gap2).max(gap2 / lhs);
                }
            }
            assert!(cmax.is_finite() && cmax < 30.0, "chord constant blew up: {cmax}");
        }
    }
}
