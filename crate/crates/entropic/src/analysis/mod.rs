//! From c-function points to physics: scale setting, infinite-volume and
//! continuum extrapolation, and the two model fits.

pub mod bessel;
pub mod lm;
pub mod scale;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neq::{CFunctionPoint, Normalization};
pub use bessel::bessel_k1;
pub use lm::{levenberg_marquardt, LmOptions, LmOutcome};
pub use scale::{scale_lookup, ScaleRow, SCALE_TABLE};

/// Reference results for the 3D Z2 gauge theory; shipped for comparison
/// only, never used as defaults for fits.
pub mod reference {
    pub const ANSATZ_A: (f64, f64) = (0.33, 0.03);
    pub const ANSATZ_ALPHA: (f64, f64) = (0.360, 0.019);
    pub const ANSATZ_CHI2_RED: f64 = 0.82;
    pub const POWER_B: (f64, f64) = (0.360, 0.009);
    pub const POWER_C: (f64, f64) = (0.48, 0.02);
    pub const POWER_CHI2_RED: f64 = 1.02;
    pub const THERMO_M_OVER_TC: (f64, f64) = (1.31, 0.02);
    pub const THERMO_CHI2_RED: f64 = 1.87;
}

/// Default fit windows in x = l m_g.
pub const ANSATZ_WINDOW: FitWindow = FitWindow { min: Some(0.84), max: None };
pub const POWERLAW_WINDOW: FitWindow = FitWindow { min: None, max: Some(1.26) };

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl FitWindow {
    pub fn contains(&self, x: f64) -> bool {
        self.min.is_none_or(|m| x >= m) && self.max.is_none_or(|m| x <= m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelId {
    ThermoExp,
    AnsatzBessel,
    PowerLaw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelId,
    pub param_names: Vec<String>,
    pub params: Vec<f64>,
    pub errors: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub chi2: f64,
    pub dof: usize,
    pub chi2_red: f64,
    pub fit_range: (f64, f64),
    pub n_points: usize,
    pub converged: bool,
    pub iterations: usize,
    pub degenerate: bool,
}

impl FitResult {
    fn from_outcome(model: ModelId, names: Vec<String>, out: LmOutcome, xs: &[f64]) -> Self {
        let n = out.params.len();
        let dof = xs.len().saturating_sub(n);
        let covariance: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| out.covariance[(i, j)]).collect()).collect();
        FitResult {
            model,
            param_names: names,
            errors: (0..n).map(|i| out.covariance[(i, i)].max(0.0).sqrt()).collect(),
            params: out.params,
            covariance,
            chi2: out.chi2,
            dof,
            chi2_red: if dof > 0 { out.chi2 / dof as f64 } else { 0.0 },
            fit_range: (
                xs.iter().copied().fold(f64::INFINITY, f64::min),
                xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ),
            n_points: xs.len(),
            converged: out.converged,
            iterations: out.iterations,
            degenerate: out.degenerate,
        }
    }

    pub fn param(&self, name: &str) -> Option<(f64, f64)> {
        self.param_names.iter().position(|n| n == name).map(|i| (self.params[i], self.errors[i]))
    }
}

pub fn thermo_model(l: f64, c: f64, a: f64, m: f64) -> f64 {
    c + a * (-m * l).exp()
}

/// A x K_1(2 alpha x), i.e. A x times the t-integral over [0, inf).
pub fn ansatz_model(x: f64, a: f64, alpha: f64) -> f64 {
    a * x * bessel_k1(2.0 * alpha * x)
}

pub fn powerlaw_model(x: f64, b: f64, c: f64) -> f64 {
    b * x.powf(-c)
}

fn check_points(points: &[DataPoint]) -> Result<()> {
    if let Some(p) = points.iter().find(|p| !(p.sigma > 0.0) || !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::Fit(format!("bad data point {p:?}: need finite x, y and sigma > 0")));
    }
    Ok(())
}

/// Points of one (beta, l) group at several spatial sizes L.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermoGroup {
    pub label: String,
    pub points: Vec<DataPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermoValue {
    pub label: String,
    pub c: f64,
    pub error: f64,
    /// False for groups with fewer than three volumes, passed through from
    /// their largest volume.
    pub extrapolated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermoResult {
    /// Parameters [M, c_1, A_1, c_2, A_2, ...] over the fitted groups.
    pub fit: Option<FitResult>,
    pub values: Vec<ThermoValue>,
}

/// Global fit of c_g + A_g exp(-M L) with one shared M. `m_start` is the
/// starting value of M in the units of x.
pub fn thermo_extrapolate(groups: &[ThermoGroup], m_start: f64) -> Result<ThermoResult> {
    let mut fitted = Vec::new();
    let mut values = Vec::new();
    for g in groups {
        check_points(&g.points)?;
        if g.points.is_empty() {
            return Err(Error::Fit(format!("group {} has no points", g.label)));
        }
        let mut volumes: Vec<f64> = g.points.iter().map(|p| p.x).collect();
        volumes.sort_by(f64::total_cmp);
        volumes.dedup();
        if volumes.len() >= 3 {
            fitted.push(g);
        } else {
            let last = g.points.iter().max_by(|a, b| a.x.total_cmp(&b.x)).unwrap();
            values.push(ThermoValue { label: g.label.clone(), c: last.y, error: last.sigma, extrapolated: false });
        }
    }
    if fitted.is_empty() {
        return Ok(ThermoResult { fit: None, values });
    }
    let mut start = vec![m_start];
    let mut names = vec!["M".to_string()];
    for g in &fitted {
        let lo = g.points.iter().min_by(|a, b| a.x.total_cmp(&b.x)).unwrap();
        let hi = g.points.iter().max_by(|a, b| a.x.total_cmp(&b.x)).unwrap();
        start.push(hi.y);
        start.push((lo.y - hi.y) * (m_start * lo.x).exp());
        names.push(format!("c[{}]", g.label));
        names.push(format!("A[{}]", g.label));
    }
    let residuals = |p: &[f64]| {
        let mut r = Vec::new();
        for (k, g) in fitted.iter().enumerate() {
            for d in &g.points {
                r.push((thermo_model(d.x, p[1 + 2 * k], p[2 + 2 * k], p[0]) - d.y) / d.sigma);
            }
        }
        r
    };
    let out = levenberg_marquardt(residuals, &start, LmOptions::default())?;
    let xs: Vec<f64> = fitted.iter().flat_map(|g| g.points.iter().map(|p| p.x)).collect();
    let fit = FitResult::from_outcome(ModelId::ThermoExp, names, out, &xs);
    for (k, g) in fitted.iter().enumerate() {
        values.push(ThermoValue {
            label: g.label.clone(),
            c: fit.params[1 + 2 * k],
            error: fit.errors[1 + 2 * k],
            extrapolated: true,
        });
    }
    Ok(ThermoResult { fit: Some(fit), values })
}

fn window_points(points: &[DataPoint], window: FitWindow) -> Vec<DataPoint> {
    points.iter().copied().filter(|p| window.contains(p.x)).collect()
}

/// Fit of A x K_1(2 alpha x) inside `window`, started from `start`.
pub fn fit_ansatz(points: &[DataPoint], window: FitWindow, start: (f64, f64)) -> Result<FitResult> {
    let pts = window_points(points, window);
    check_points(&pts)?;
    if let Some(p) = pts.iter().find(|p| p.x <= 0.0) {
        return Err(Error::Fit(format!("Ansatz needs x > 0, got {}", p.x)));
    }
    let residuals = |p: &[f64]| pts.iter().map(|d| (ansatz_model(d.x, p[0], p[1]) - d.y) / d.sigma).collect::<Vec<_>>();
    let out = levenberg_marquardt(residuals, &[start.0, start.1], LmOptions::default())?;
    let xs: Vec<f64> = pts.iter().map(|p| p.x).collect();
    Ok(FitResult::from_outcome(ModelId::AnsatzBessel, vec!["A".into(), "alpha".into()], out, &xs))
}

/// Fit of B / x^c inside `window`; the start comes from a weighted
/// straight line in log-log.
pub fn fit_powerlaw(points: &[DataPoint], window: FitWindow) -> Result<FitResult> {
    let pts = window_points(points, window);
    check_points(&pts)?;
    if let Some(p) = pts.iter().find(|p| p.x <= 0.0) {
        return Err(Error::InvalidArgument(format!("power law needs x > 0, got {}", p.x)));
    }
    let logs: Vec<DataPoint> = pts
        .iter()
        .filter(|p| p.y > 0.0)
        .map(|p| DataPoint { x: p.x.ln(), y: p.y.ln(), sigma: p.sigma / p.y })
        .collect();
    let start = match weighted_line(&logs) {
        Some(line) => [line.intercept.exp(), -line.slope],
        None => [pts.iter().map(|p| p.y).sum::<f64>() / pts.len().max(1) as f64, 0.5],
    };
    let residuals = |p: &[f64]| pts.iter().map(|d| (powerlaw_model(d.x, p[0], p[1]) - d.y) / d.sigma).collect::<Vec<_>>();
    let out = levenberg_marquardt(residuals, &start, LmOptions::default())?;
    let xs: Vec<f64> = pts.iter().map(|p| p.x).collect();
    Ok(FitResult::from_outcome(ModelId::PowerLaw, vec!["B".into(), "c".into()], out, &xs))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub intercept: f64,
    pub slope: f64,
    pub intercept_error: f64,
    pub slope_error: f64,
    pub chi2: f64,
}

/// Weighted least-squares straight line; None with fewer than two
/// distinct abscissae.
pub fn weighted_line(points: &[DataPoint]) -> Option<Line> {
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let w = 1.0 / (p.sigma * p.sigma);
        s += w;
        sx += w * p.x;
        sy += w * p.y;
        sxx += w * p.x * p.x;
        sxy += w * p.x * p.y;
    }
    let det = s * sxx - sx * sx;
    if points.len() < 2 || !(det > 1e-14 * s * sxx) {
        return None;
    }
    let intercept = (sxx * sy - sx * sxy) / det;
    let slope = (s * sxy - sx * sy) / det;
    let chi2 = points.iter().map(|p| ((intercept + slope * p.x - p.y) / p.sigma).powi(2)).sum();
    Some(Line { intercept, slope, intercept_error: (sxx / det).sqrt(), slope_error: (s / det).sqrt(), chi2 })
}

/// One lattice spacing's value at the target x, under both abscissa
/// conventions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuumInput {
    pub a: f64,
    pub back: f64,
    pub mid: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuumResult {
    /// Mid-point extrapolation.
    pub value: f64,
    pub stat: f64,
    /// |mid - backward| of the two extrapolations.
    pub syst: f64,
    pub total: f64,
    pub back_value: f64,
    pub back_stat: f64,
    pub n_spacings: usize,
    pub extrapolated: bool,
}

/// Linear-in-a extrapolation to a = 0 under both abscissa conventions.
pub fn continuum_extrapolate(inputs: &[ContinuumInput]) -> Result<ContinuumResult> {
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("no lattice spacings".into()));
    }
    let mut spacings: Vec<f64> = inputs.iter().map(|i| i.a).collect();
    spacings.sort_by(f64::total_cmp);
    spacings.dedup();
    if spacings.len() < 2 {
        let i = inputs[0];
        return Ok(ContinuumResult {
            value: i.mid,
            stat: i.error,
            syst: (i.mid - i.back).abs(),
            total: i.error.hypot(i.mid - i.back),
            back_value: i.back,
            back_stat: i.error,
            n_spacings: 1,
            extrapolated: false,
        });
    }
    let line = |f: fn(&ContinuumInput) -> f64| {
        let pts: Vec<DataPoint> = inputs.iter().map(|i| DataPoint { x: i.a, y: f(i), sigma: i.error }).collect();
        weighted_line(&pts).ok_or_else(|| Error::Fit("degenerate continuum data".into()))
    };
    let mid = line(|i| i.mid)?;
    let back = line(|i| i.back)?;
    let syst = (mid.intercept - back.intercept).abs();
    Ok(ContinuumResult {
        value: mid.intercept,
        stat: mid.intercept_error,
        syst,
        total: mid.intercept_error.hypot(syst),
        back_value: back.intercept,
        back_stat: back.intercept_error,
        n_spacings: spacings.len(),
        extrapolated: true,
    })
}

/// Linear interpolation of (x, y, sigma) data at `x`; errors are
/// interpolated the same way.
pub fn interpolate_at(points: &[DataPoint], x: f64) -> Result<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x));
    if let Some(p) = pts.iter().find(|p| p.x == x) {
        return Ok((p.y, p.sigma));
    }
    let w = pts
        .windows(2)
        .find(|w| w[0].x < x && x < w[1].x)
        .ok_or_else(|| Error::InvalidArgument(format!("x = {x} outside the data range")))?;
    let t = (x - w[0].x) / (w[1].x - w[0].x);
    Ok((w[0].y + t * (w[1].y - w[0].y), w[0].sigma + t * (w[1].sigma - w[0].sigma)))
}

/// c-function points of one lattice spacing `a` (in the physical unit of x).
#[derive(Clone, Debug, PartialEq)]
pub struct SpacingSeries {
    pub a: f64,
    pub points: Vec<CFunctionPoint>,
}

/// Interpolates every spacing's series to `x_target` (backward points at
/// l a, mid-point ones at (l + 1/2) a) and extrapolates to a = 0.
pub fn continuum_at(series: &[SpacingSeries], x_target: f64) -> Result<ContinuumResult> {
    let mut inputs = Vec::new();
    for s in series {
        let back: Vec<DataPoint> =
            s.points.iter().map(|p| DataPoint { x: p.abscissa_backward * s.a, y: p.value, sigma: p.error }).collect();
        let mid: Vec<DataPoint> =
            s.points.iter().map(|p| DataPoint { x: p.abscissa_mid * s.a, y: p.value_mid, sigma: p.error_mid }).collect();
        let (b, be) = interpolate_at(&back, x_target)?;
        let (m, me) = interpolate_at(&mid, x_target)?;
        inputs.push(ContinuumInput { a: s.a, back: b, mid: m, error: be.max(me) });
    }
    continuum_extrapolate(&inputs)
}

/// Divides values and errors by C_2^CFT.
pub fn normalize_cfunction(points: &[CFunctionPoint], c2_cft: Option<f64>) -> Result<Vec<CFunctionPoint>> {
    let c = c2_cft.ok_or_else(|| {
        Error::InvalidArgument("C_2^CFT not set; supply it as analysis.c2_cft in the run config".into())
    })?;
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("C_2^CFT must be positive, got {c}")));
    }
    points
        .iter()
        .map(|p| {
            if p.normalization.is_some() {
                return Err(Error::InvalidArgument("point is already normalized".into()));
            }
            Ok(CFunctionPoint {
                value: p.value / c,
                error: p.error / c,
                value_mid: p.value_mid / c,
                error_mid: p.error_mid / c,
                normalization: Some(Normalization { c2_cft: c, raw: [p.value, p.error, p.value_mid, p.error_mid] }),
                ..p.clone()
            })
        })
        .collect()
}

pub fn denormalize_cfunction(points: &[CFunctionPoint]) -> Vec<CFunctionPoint> {
    points
        .iter()
        .map(|p| match &p.normalization {
            Some(n) => CFunctionPoint {
                value: n.raw[0],
                error: n.raw[1],
                value_mid: n.raw[2],
                error_mid: n.raw[3],
                normalization: None,
                ..p.clone()
            },
            None => p.clone(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(f: impl Fn(f64) -> f64, xs: &[f64], sigma: f64) -> Vec<DataPoint> {
        xs.iter().map(|&x| DataPoint { x, y: f(x), sigma }).collect()
    }

    #[test]
    fn exact_powerlaw_recovered() {
        let xs = [0.2, 0.4, 0.6, 0.8, 1.0, 1.2];
        let fit = fit_powerlaw(&pts(|x| powerlaw_model(x, 0.36, 0.48), &xs, 0.01), POWERLAW_WINDOW).unwrap();
        assert!((fit.params[0] - 0.36).abs() < 1e-8 && (fit.params[1] - 0.48).abs() < 1e-8);
        assert!(fit.chi2_red < 1e-12);
        assert!(fit_powerlaw(&pts(|x| x, &[0.0, 1.0], 0.1), FitWindow::default()).is_err());
    }

    #[test]
    fn exact_ansatz_recovered() {
        let xs = [0.9, 1.2, 1.5, 2.0, 2.5, 3.0];
        let fit = fit_ansatz(&pts(|x| ansatz_model(x, 0.33, 0.36), &xs, 0.001), ANSATZ_WINDOW, (0.5, 0.5)).unwrap();
        assert!((fit.params[0] - 0.33).abs() < 1e-7 && (fit.params[1] - 0.36).abs() < 1e-7, "{:?}", fit.params);
    }

    #[test]
    fn thermo_flat_data() {
        let g = ThermoGroup { label: "g".into(), points: pts(|_| 0.5, &[4.0, 6.0, 8.0, 10.0], 0.01) };
        let r = thermo_extrapolate(&[g], 1.0).unwrap();
        let fit = r.fit.unwrap();
        assert!((r.values[0].c - 0.5).abs() < 1e-8);
        assert!(fit.degenerate);
    }

    #[test]
    fn thermo_single_volume_passes_through() {
        let g = ThermoGroup { label: "one".into(), points: pts(|_| 0.7, &[8.0], 0.02) };
        let r = thermo_extrapolate(&[g], 1.0).unwrap();
        assert!(r.fit.is_none());
        assert_eq!((r.values[0].c, r.values[0].extrapolated), (0.7, false));
    }

    #[test]
    fn continuum_linear_and_constant() {
        let inputs: Vec<ContinuumInput> = [0.1, 0.125, 1.0 / 6.0]
            .iter()
            .map(|&a| ContinuumInput { a, back: 0.4 + 0.3 * a, mid: 0.45 + 0.3 * a, error: 0.01 })
            .collect();
        let r = continuum_extrapolate(&inputs).unwrap();
        assert!((r.value - 0.45).abs() < 1e-12 && (r.back_value - 0.4).abs() < 1e-12);
        assert!((r.syst - 0.05).abs() < 1e-12);
        let one = continuum_extrapolate(&inputs[..1]).unwrap();
        assert!(!one.extrapolated);
    }

    #[test]
    fn interpolation() {
        let d = pts(|x| 2.0 * x, &[0.0, 1.0, 2.0], 0.1);
        assert_eq!(interpolate_at(&d, 1.5).unwrap().0, 3.0);
        assert!(interpolate_at(&d, 3.0).is_err());
    }

    #[test]
    fn windows() {
        assert!(ANSATZ_WINDOW.contains(0.84) && !ANSATZ_WINDOW.contains(0.8));
        assert!(POWERLAW_WINDOW.contains(1.26) && !POWERLAW_WINDOW.contains(1.3));
    }
}
