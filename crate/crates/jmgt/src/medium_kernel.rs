//! Medium parameters, memory kernels, kernel-assumption checks and regime
//! classification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::adaptive_quad;

/// Relative tolerance of the criticality test |b − τc²| ≤ tol·τc².
pub const CRITICAL_TOL: f64 = 1e-12;

/// Physical constants of the medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumParams {
    /// Relaxation time τ.
    pub tau: f64,
    /// Sound speed c.
    pub c: f64,
    /// Diffusivity b = δ + τc².
    pub b: f64,
    /// Nonlinearity coefficient k.
    pub k: f64,
    /// Friction coefficient, fixed to 1.
    pub alpha: f64,
}

impl MediumParams {
    pub fn new(tau: f64, c: f64, b: f64, k: f64) -> Result<Self> {
        let p = MediumParams {
            tau,
            c,
            b,
            k,
            alpha: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Critical medium b = τc².
    pub fn critical(tau: f64, c: f64, k: f64) -> Result<Self> {
        Self::new(tau, c, tau * c * c, k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !(ok(self.tau) && ok(self.c) && ok(self.b)) {
            return Err(Error::InvalidParams(format!(
                "tau, c, b must be positive and finite (tau={}, c={}, b={})",
                self.tau, self.c, self.b
            )));
        }
        if !self.k.is_finite() || !self.alpha.is_finite() {
            return Err(Error::InvalidParams("k and alpha must be finite".into()));
        }
        Ok(())
    }

    /// Sound diffusivity δ = b − τc².
    pub fn delta(&self) -> f64 {
        self.b - self.tau * self.c * self.c
    }

    /// χ = α − c²τ/b.
    pub fn chi(&self) -> f64 {
        self.alpha - self.c * self.c * self.tau / self.b
    }

    pub fn is_critical(&self) -> bool {
        self.delta().abs() <= CRITICAL_TOL * self.tau * self.c * self.c
    }
}

/// Tabulated kernel samples with a monotone cubic (Fritsch–Carlson) interpolant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tabulated {
    pub r: Vec<f64>,
    pub g: Vec<f64>,
    slopes: Vec<f64>,
}

impl Tabulated {
    pub fn new(r: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        if r.len() != g.len() {
            return Err(Error::InvalidKernel("r and g lengths differ".into()));
        }
        if r.len() < 3 {
            return Err(Error::InsufficientData(format!(
                "tabulated kernel needs at least 3 samples, got {}",
                r.len()
            )));
        }
        if r.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidKernel(
                "tabulated r samples must be strictly increasing".into(),
            ));
        }
        if r[0] < 0.0 || r.iter().chain(&g).any(|x| !x.is_finite()) {
            return Err(Error::InvalidKernel("samples must be finite with r ≥ 0".into()));
        }
        let slopes = fritsch_carlson(&r, &g);
        Ok(Tabulated { r, g, slopes })
    }

    fn locate(&self, x: f64) -> usize {
        match self.r.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(self.r.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.r.len() - 2),
        }
    }

    /// Interpolant value and first two derivatives. Zero beyond the last sample,
    /// constant extrapolation below the first.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let n = self.r.len();
        if x > self.r[n - 1] {
            return (0.0, 0.0, 0.0);
        }
        if x < self.r[0] {
            return (self.g[0], 0.0, 0.0);
        }
        let i = self.locate(x);
        let h = self.r[i + 1] - self.r[i];
        let t = (x - self.r[i]) / h;
        let (y0, y1, d0, d1) = (self.g[i], self.g[i + 1], self.slopes[i], self.slopes[i + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let v = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
        let dv = ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * h * d0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * h * d1)
            / h;
        let ddv = ((12.0 * t - 6.0) * y0
            + (6.0 * t - 4.0) * h * d0
            + (-12.0 * t + 6.0) * y1
            + (6.0 * t - 2.0) * h * d1)
            / (h * h);
        (v, dv, ddv)
    }
}

fn fritsch_carlson(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let del: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        if del[i - 1] * del[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let mut s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s * d0 <= 0.0 {
            s = 0.0;
        } else if d0 * d1 <= 0.0 && s.abs() > 3.0 * d0.abs() {
            s = 3.0 * d0;
        }
        s
    };
    d[0] = if n > 2 { end(h[0], h[1], del[0], del[1]) } else { del[0] };
    d[n - 1] = if n > 2 {
        end(h[n - 2], h[n - 3], del[n - 2], del[n - 3])
    } else {
        del[0]
    };
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelKind {
    /// g(r) = m·c²·e^{−r/τ_g}.
    Exponential { m: f64, tau_g: f64 },
    Tabulated(Tabulated),
}

/// Memory kernel g. The sound speed enters the exponential form, so it is
/// fixed at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryKernel {
    pub kind: KernelKind,
    /// Sound speed used by the exponential form m·c²·e^{−r/τ_g}.
    pub c: f64,
    /// Decay-ratio bound ζ in g′ ≤ −ζg (exact for exponential kernels,
    /// measured for tabulated ones; non-positive means no admissible ζ).
    pub zeta: f64,
}

impl MemoryKernel {
    pub fn exponential(m: f64, tau_g: f64, c: f64) -> Result<Self> {
        if !(tau_g.is_finite() && tau_g > 0.0) {
            return Err(Error::InvalidKernel(format!("tau_g must be positive, got {tau_g}")));
        }
        if !(m.is_finite() && m >= 0.0) {
            return Err(Error::InvalidKernel(format!("m must be non-negative, got {m}")));
        }
        Ok(MemoryKernel {
            kind: KernelKind::Exponential { m, tau_g },
            c,
            zeta: 1.0 / tau_g,
        })
    }

    pub fn tabulated(r: Vec<f64>, g: Vec<f64>, c: f64) -> Result<Self> {
        let t = Tabulated::new(r, g)?;
        let mut k = MemoryKernel {
            kind: KernelKind::Tabulated(t),
            c,
            zeta: 0.0,
        };
        k.zeta = k.probe_zeta().0;
        Ok(k)
    }

    /// Reads a two-column CSV (r, g); lines starting with `#` and a
    /// non-numeric header line are skipped.
    pub fn from_csv_str(text: &str, c: f64) -> Result<Self> {
        let mut r = Vec::new();
        let mut g = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split([',', ';', '\t']).map(str::trim).collect();
            if cols.len() < 2 {
                return Err(Error::InvalidKernel(format!("line {}: expected two columns", ln + 1)));
            }
            match (cols[0].parse::<f64>(), cols[1].parse::<f64>()) {
                (Ok(a), Ok(b)) => {
                    r.push(a);
                    g.push(b);
                }
                _ if r.is_empty() && ln == 0 => continue,
                _ => {
                    return Err(Error::InvalidKernel(format!(
                        "line {}: non-numeric entry",
                        ln + 1
                    )))
                }
            }
        }
        Self::tabulated(r, g, c)
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self.kind, KernelKind::Exponential { .. })
    }

    /// (m, τ_g) for exponential kernels.
    pub fn exponential_params(&self) -> Option<(f64, f64)> {
        match self.kind {
            KernelKind::Exponential { m, tau_g } => Some((m, tau_g)),
            _ => None,
        }
    }

    pub fn g(&self, r: f64) -> f64 {
        match &self.kind {
            KernelKind::Exponential { m, tau_g } => m * self.c * self.c * (-r / tau_g).exp(),
            KernelKind::Tabulated(t) => t.eval(r).0,
        }
    }

    pub fn dg(&self, r: f64) -> f64 {
        match &self.kind {
            KernelKind::Exponential { tau_g, .. } => -self.g(r) / tau_g,
            KernelKind::Tabulated(t) => t.eval(r).1,
        }
    }

    /// −g′, using −g′ = g/τ_g for exponential kernels.
    pub fn neg_dg(&self, r: f64) -> f64 {
        -self.dg(r)
    }

    /// g″, using g″ = g/τ_g² for exponential kernels.
    pub fn d2g(&self, r: f64) -> f64 {
        match &self.kind {
            KernelKind::Exponential { tau_g, .. } => self.g(r) / (tau_g * tau_g),
            KernelKind::Tabulated(t) => t.eval(r).2,
        }
    }

    pub fn g0(&self) -> f64 {
        self.g(0.0)
    }

    /// Support length beyond which g is negligible (or zero).
    pub fn horizon(&self) -> f64 {
        match &self.kind {
            KernelKind::Exponential { tau_g, .. } => 25.0 * tau_g,
            KernelKind::Tabulated(t) => *t.r.last().unwrap(),
        }
    }

    /// ∫₀^∞ g(r) dr: closed form for exponential kernels, adaptive
    /// quadrature of the interpolant otherwise.
    pub fn integral(&self) -> f64 {
        match &self.kind {
            KernelKind::Exponential { m, tau_g } => m * self.c * self.c * tau_g,
            KernelKind::Tabulated(t) => self.integral_between(0.0, *t.r.last().unwrap()),
        }
    }

    /// ∫_a^b g(r) dr by adaptive quadrature, panel by panel over samples.
    pub fn integral_between(&self, a: f64, b: f64) -> f64 {
        match &self.kind {
            KernelKind::Exponential { m, tau_g } => {
                m * self.c * self.c * tau_g * ((-a / tau_g).exp() - (-b / tau_g).exp())
            }
            KernelKind::Tabulated(t) => {
                let mut cuts: Vec<f64> = vec![a];
                cuts.extend(t.r.iter().copied().filter(|&x| x > a && x < b));
                cuts.push(b.min(*t.r.last().unwrap()).max(a));
                cuts.windows(2)
                    .map(|w| adaptive_quad(|x| t.eval(x).0, w[0], w[1], 1e-13))
                    .sum()
            }
        }
    }

    /// ∫_r^∞ g.
    pub fn tail_integral(&self, r: f64) -> f64 {
        match &self.kind {
            KernelKind::Exponential { tau_g, .. } => self.g(r) * tau_g,
            KernelKind::Tabulated(t) => {
                let end = *t.r.last().unwrap();
                if r >= end {
                    0.0
                } else {
                    self.integral_between(r, end)
                }
            }
        }
    }

    /// Smallest −g′/g over the probe grid with a finite-difference
    /// uncertainty subtracted, and the witness point.
    fn probe_zeta(&self) -> (f64, Option<f64>) {
        match &self.kind {
            KernelKind::Exponential { tau_g, .. } => (1.0 / tau_g, None),
            KernelKind::Tabulated(t) => {
                let (d2, d1) = sample_derivatives(&t.r, &t.g);
                let mut best = f64::INFINITY;
                let mut at = None;
                for i in 0..t.r.len() {
                    if t.g[i] <= 0.0 {
                        continue;
                    }
                    let unc = (d2[i] - d1[i]).abs();
                    let z = (-d2[i] - unc) / t.g[i];
                    if z < best {
                        best = z;
                        at = Some(t.r[i]);
                    }
                }
                (best, at)
            }
        }
    }
}

/// Second-order and first-order one-sided/centred derivative estimates at the
/// sample points.
fn sample_derivatives(r: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = r.len();
    let mut d2 = vec![0.0; n];
    let mut d1 = vec![0.0; n];
    for i in 0..n {
        let (a, b, c) = if i == 0 {
            (0, 1, 2)
        } else if i == n - 1 {
            (n - 3, n - 2, n - 1)
        } else {
            (i - 1, i, i + 1)
        };
        let (x0, x1, x2) = (r[a], r[b], r[c]);
        let x = r[i];
        let l0 = ((x - x1) + (x - x2)) / ((x0 - x1) * (x0 - x2));
        let l1 = ((x - x0) + (x - x2)) / ((x1 - x0) * (x1 - x2));
        let l2 = ((x - x0) + (x - x1)) / ((x2 - x0) * (x2 - x1));
        d2[i] = l0 * g[a] + l1 * g[b] + l2 * g[c];
        d1[i] = if i + 1 < n {
            (g[i + 1] - g[i]) / (r[i + 1] - r[i])
        } else {
            (g[i] - g[i - 1]) / (r[i] - r[i - 1])
        };
    }
    (d2, d1)
}

/// Outcome of one kernel assumption.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionCheck {
    pub pass: bool,
    /// Probe point where the check is tightest or fails.
    pub witness: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelReport {
    pub g1: AssumptionCheck,
    pub g2: AssumptionCheck,
    pub g3: AssumptionCheck,
    pub g4: AssumptionCheck,
    /// c² − ∫g when G2 holds.
    pub c_g_sq: Option<f64>,
    pub zeta_best: f64,
}

impl KernelReport {
    pub fn all_pass(&self) -> bool {
        self.g1.pass && self.g2.pass && self.g3.pass && self.g4.pass
    }
}

/// Checks G1–G4 for `kernel` in a medium with sound speed `params.c`.
pub fn validate_assumptions(kernel: &MemoryKernel, params: &MediumParams) -> Result<KernelReport> {
    let c2 = params.c * params.c;
    match &kernel.kind {
        KernelKind::Exponential { m, tau_g } => {
            if !(*tau_g > 0.0) {
                return Err(Error::InvalidKernel("tau_g must be positive".into()));
            }
            let integral = kernel.integral();
            let _ = m;
            let g2 = integral < c2;
            Ok(KernelReport {
                g1: AssumptionCheck {
                    pass: true,
                    witness: None,
                    detail: "smooth exponential".into(),
                },
                g2: AssumptionCheck {
                    pass: g2,
                    witness: None,
                    detail: format!("∫g = {integral:.6e}, c² = {c2:.6e}"),
                },
                g3: AssumptionCheck {
                    pass: true,
                    witness: None,
                    detail: format!("g′ = −g/τ_g, ζ = {}", 1.0 / tau_g),
                },
                g4: AssumptionCheck {
                    pass: true,
                    witness: None,
                    detail: "g″ = g/τ_g² ≥ 0".into(),
                },
                c_g_sq: g2.then_some(c2 - integral),
                zeta_best: 1.0 / tau_g,
            })
        }
        KernelKind::Tabulated(t) => {
            let n = t.r.len();
            let (d2, _) = sample_derivatives(&t.r, &t.g);
            let scale = t.g.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(f64::MIN_POSITIVE);
            let finite = d2.iter().all(|d| d.is_finite());
            let g1 = AssumptionCheck {
                pass: finite,
                witness: d2.iter().position(|d| !d.is_finite()).map(|i| t.r[i]),
                detail: "difference quotients finite".into(),
            };
            let neg = t.g.iter().position(|&v| v < 0.0);
            let integral = kernel.integral();
            let g2pass = neg.is_none() && integral < c2;
            let g2 = AssumptionCheck {
                pass: g2pass,
                witness: neg.map(|i| t.r[i]),
                detail: format!("min g ≥ 0: {}, ∫g = {integral:.6e}, c² = {c2:.6e}", neg.is_none()),
            };
            let (zeta, at) = kernel.probe_zeta();
            let g3 = AssumptionCheck {
                pass: zeta > 0.0,
                witness: at,
                detail: format!("sup ζ on probe grid = {zeta:.6e}"),
            };
            let mut worst = f64::INFINITY;
            let mut wat = None;
            for i in 1..n - 1 {
                let (h0, h1) = (t.r[i] - t.r[i - 1], t.r[i + 1] - t.r[i]);
                let dd = 2.0
                    * ((t.g[i + 1] - t.g[i]) / h1 - (t.g[i] - t.g[i - 1]) / h0)
                    / (h0 + h1);
                if dd < worst {
                    worst = dd;
                    wat = Some(t.r[i]);
                }
            }
            let g4 = AssumptionCheck {
                pass: worst >= -1e-10 * scale,
                witness: wat,
                detail: format!("min second difference = {worst:.6e}"),
            };
            Ok(KernelReport {
                g1,
                g2,
                g3,
                g4,
                c_g_sq: g2pass.then_some(c2 - integral),
                zeta_best: zeta,
            })
        }
    }
}

/// c_g² = c² − ∫₀^∞ g.
pub fn effective_speed_sq(kernel: &MemoryKernel, params: &MediumParams) -> Result<f64> {
    let c2 = params.c * params.c;
    let i = kernel.integral();
    if i >= c2 {
        return Err(Error::Domain(format!("∫g = {i} ≥ c² = {c2}")));
    }
    Ok(c2 - i)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Subcritical,
    Critical,
    SupercriticalChiNegative,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Classification {
    pub regime: Regime,
    pub chi: f64,
    pub delta: f64,
}

/// Regime from the sign of b − τc². The kernel does not enter the
/// classification itself; it is accepted for interface symmetry.
pub fn classify_regime(params: &MediumParams, _kernel: &MemoryKernel) -> Classification {
    let regime = if params.is_critical() {
        Regime::Critical
    } else if params.delta() > 0.0 {
        Regime::Subcritical
    } else {
        Regime::SupercriticalChiNegative
    };
    Classification {
        regime,
        chi: params.chi(),
        delta: params.delta(),
    }
}

/// Derived kernel constants used throughout.
#[derive(Debug, Clone, Copy)]
pub struct KernelConstants {
    /// c_g².
    pub cg2: f64,
    /// G = c² − c_g² = ∫g.
    pub big_g: f64,
    /// g(0).
    pub g0: f64,
    /// 1/τ_g for exponential kernels.
    pub mu: f64,
}

impl KernelConstants {
    pub fn new(kernel: &MemoryKernel, params: &MediumParams) -> Result<Self> {
        let cg2 = effective_speed_sq(kernel, params)?;
        let mu = kernel.exponential_params().map(|(_, tg)| 1.0 / tg).unwrap_or(f64::NAN);
        Ok(KernelConstants {
            cg2,
            big_g: params.c * params.c - cg2,
            g0: kernel.g0(),
            mu,
        })
    }
}
