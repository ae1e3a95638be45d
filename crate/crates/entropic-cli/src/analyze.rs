//! `analyze`: thermodynamic and continuum extrapolation, normalization,
//! model fits and plots.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::Result;
use entropic::analysis::{
    ansatz_model, continuum_at, fit_ansatz, fit_powerlaw, normalize_cfunction, powerlaw_model, reference, scale_lookup,
    thermo_extrapolate, ContinuumResult, DataPoint, FitResult, SpacingSeries, ThermoGroup, ThermoResult,
};
use entropic::neq::CFunctionPoint;
use serde::Serialize;

use crate::config::RunConfig;
use crate::plot::{render, sample_curve, Series};
use crate::table::{read_mg_table, write_points};

#[derive(Debug, Serialize)]
pub struct ContinuumRow {
    pub l_tc: f64,
    #[serde(flatten)]
    pub result: ContinuumResult,
}

#[derive(Debug, Serialize)]
pub struct AnalysisReport {
    pub thermo: ThermoResult,
    pub continuum: Vec<ContinuumRow>,
    pub normalized: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ansatz: Option<FitResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub powerlaw: Option<FitResult>,
    pub warnings: Vec<String>,
}

fn key(p: &CFunctionPoint) -> String {
    format!("beta={} l={}", p.beta, p.l)
}

/// Infinite-volume points: one per (beta, l), from the global fit where a
/// group has three or more volumes and from the largest volume otherwise.
fn infinite_volume(points: &[CFunctionPoint], m_start: f64) -> Result<(ThermoResult, Vec<CFunctionPoint>)> {
    let mut groups: BTreeMap<String, Vec<&CFunctionPoint>> = BTreeMap::new();
    for p in points {
        groups.entry(key(p)).or_default().push(p);
    }
    let thermo_groups: Vec<ThermoGroup> = groups
        .iter()
        .map(|(k, ps)| ThermoGroup {
            label: k.clone(),
            points: ps.iter().map(|p| DataPoint { x: p.n_s as f64, y: p.value, sigma: p.error }).collect(),
        })
        .collect();
    let thermo = thermo_extrapolate(&thermo_groups, m_start)?;
    let mut out = Vec::new();
    for v in &thermo.values {
        let ps = &groups[&v.label];
        let big = ps.iter().max_by_key(|p| p.n_s).unwrap();
        let ratio = if big.value != 0.0 { big.value_mid / big.value } else { 1.0 };
        out.push(CFunctionPoint {
            value: v.c,
            error: v.error,
            value_mid: v.c * ratio,
            error_mid: v.error * ratio.abs(),
            ..(*big).clone()
        });
    }
    Ok((thermo, out))
}

pub fn analyze(cfg: &RunConfig, points: &[CFunctionPoint], out: &Path, mg_axis: bool) -> Result<AnalysisReport> {
    fs::create_dir_all(out)?;
    let mut warnings = Vec::new();
    let a = &cfg.analysis;
    let (thermo, mut inf) = infinite_volume(points, a.thermo_m_start)?;
    for v in thermo.values.iter().filter(|v| !v.extrapolated) {
        warnings.push(format!("{}: fewer than three volumes, not extrapolated", v.label));
    }
    write_points(&out.join("extrapolated.csv"), &inf)?;

    let mut continuum = Vec::new();
    let mut by_beta: BTreeMap<usize, Vec<CFunctionPoint>> = BTreeMap::new();
    for p in &inf {
        match entropic::analysis::scale::n_tau_c_of_beta(p.beta) {
            Some(nt) => by_beta.entry(nt).or_default().push(p.clone()),
            None if !a.continuum_targets.is_empty() => {
                warnings.push(format!("beta={} is not in the scale table; left out of the continuum limit", p.beta))
            }
            None => {}
        }
    }
    let series: Vec<SpacingSeries> =
        by_beta.into_iter().map(|(nt, points)| SpacingSeries { a: scale_lookup(nt).unwrap().1, points }).collect();
    for &x in &a.continuum_targets {
        match continuum_at(&series, x) {
            Ok(result) => {
                if !result.extrapolated {
                    warnings.push(format!("l T_c = {x}: single spacing, passed through"));
                }
                continuum.push(ContinuumRow { l_tc: x, result });
            }
            Err(e) => warnings.push(format!("l T_c = {x}: {e}")),
        }
    }

    let normalized = a.c2_cft.is_some();
    if normalized {
        inf = normalize_cfunction(&inf, a.c2_cft)?;
    } else {
        warnings.push("analysis.c2_cft not set; values are not normalized".into());
    }

    let mut ansatz = None;
    let mut powerlaw = None;
    let (xlabel, xs): (&str, Vec<f64>) = if let Some(path) = &a.mg_table {
        let table = read_mg_table(path)?;
        let mut xs = Vec::new();
        for p in inf.iter_mut() {
            match table.iter().find(|(b, _)| *b == p.beta) {
                Some(&(_, amg)) => {
                    p.l_mg = Some(p.l as f64 * amg);
                    p.l_mg_mid = Some((p.l as f64 + 0.5) * amg);
                    xs.push(p.l as f64 * amg);
                }
                None => anyhow::bail!("m_g table has no entry for beta = {}", p.beta),
            }
        }
        let data: Vec<DataPoint> =
            inf.iter().zip(&xs).map(|(p, &x)| DataPoint { x, y: p.value, sigma: p.error }).collect();
        let fit_or_warn = |r: entropic::Result<FitResult>, name: &str, w: &mut Vec<String>| match r {
            Ok(f) => Some(f),
            Err(e) => {
                w.push(format!("{name} fit: {e}"));
                None
            }
        };
        ansatz = fit_or_warn(
            fit_ansatz(&data, a.ansatz_window(), (a.ansatz_start[0], a.ansatz_start[1])),
            "Ansatz",
            &mut warnings,
        );
        powerlaw = fit_or_warn(fit_powerlaw(&data, a.powerlaw_window()), "power-law", &mut warnings);
        ("l m_g", xs)
    } else if mg_axis {
        anyhow::bail!(crate::ConfigError("l m_g axis requested but analysis.mg_table is not set".into()));
    } else if inf.iter().all(|p| p.l_tc.is_some()) {
        ("l T_c", inf.iter().map(|p| p.l_tc.unwrap()).collect())
    } else {
        ("l / a", inf.iter().map(|p| p.l as f64).collect())
    };

    let pts: Vec<(f64, f64, f64)> = inf.iter().zip(&xs).map(|(p, &x)| (x, p.value, p.error)).collect();
    let (lo, hi) = pts.iter().fold((f64::INFINITY, 0.0f64), |(l, h), p| (l.min(p.0), h.max(p.0)));
    let mut curves = Vec::new();
    if xlabel == "l m_g" && lo.is_finite() && hi > 0.0 {
        let lo = lo.max(1e-3);
        if let Some(f) = &ansatz {
            let (pa, al) = (f.params[0], f.params[1]);
            curves.push(sample_curve("Ansatz fit", move |x| ansatz_model(x, pa, al), lo, hi, false));
        }
        if let Some(f) = &powerlaw {
            let (pb, pc) = (f.params[0], f.params[1]);
            curves.push(sample_curve("power-law fit", move |x| powerlaw_model(x, pb, pc), lo, hi, false));
        }
        let (ra, ralpha) = (reference::ANSATZ_A.0, reference::ANSATZ_ALPHA.0);
        curves.push(sample_curve("reference Ansatz", move |x| ansatz_model(x, ra, ralpha), lo, hi, true));
        let (rb, rc) = (reference::POWER_B.0, reference::POWER_C.0);
        curves.push(sample_curve("reference power law", move |x| powerlaw_model(x, rb, rc), lo, hi, true));
    }
    let ylabel = if normalized { "C_2 / C_2^CFT" } else { "C_n" };
    let svg = render("entropic c-function", xlabel, ylabel, &[Series { label: "infinite volume".into(), points: pts }], &curves);
    fs::write(out.join("cfunction.svg"), svg)?;

    let report = AnalysisReport { thermo, continuum, normalized, ansatz, powerlaw, warnings };
    fs::write(out.join("analysis.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}
