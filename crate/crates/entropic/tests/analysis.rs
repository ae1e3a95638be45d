use entropic::analysis::lm::numeric_jacobian;
use entropic::analysis::{
    ansatz_model, bessel_k1, continuum_extrapolate, fit_ansatz, fit_powerlaw, powerlaw_model, thermo_extrapolate,
    thermo_model, ContinuumInput, DataPoint, FitWindow, ThermoGroup,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn noisy(xs: &[f64], f: impl Fn(f64) -> f64, rel: f64, seed: u64) -> Vec<DataPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    xs.iter()
        .map(|&x| {
            let y = f(x);
            let z: f64 = StandardNormal.sample(&mut rng);
            DataPoint { x, y: y + rel * y * z, sigma: rel * y }
        })
        .collect()
}

fn within(name: &str, got: (f64, f64), truth: f64, k: f64) {
    assert!((got.0 - truth).abs() <= k * got.1, "{name} = {} +- {}, injected {truth}", got.0, got.1);
}

#[test]
fn ansatz_fit_recovers_injected_parameters() {
    let xs: Vec<f64> = (0..14).map(|k| 0.9 + 0.15 * k as f64).collect();
    let pts = noisy(&xs, |x| ansatz_model(x, 0.33, 0.36), 0.02, 1);
    let f = fit_ansatz(&pts, FitWindow { min: Some(0.84), max: None }, (0.3, 0.4)).unwrap();
    within("A", f.param("A").unwrap(), 0.33, 2.0);
    within("alpha", f.param("alpha").unwrap(), 0.36, 2.0);
    assert!(f.converged && f.chi2_red < 3.0);
}

#[test]
fn powerlaw_fit_recovers_injected_parameters() {
    let xs: Vec<f64> = (0..10).map(|k| 0.3 + 0.1 * k as f64).collect();
    let pts = noisy(&xs, |x| powerlaw_model(x, 0.36, 0.48), 0.02, 2);
    let f = fit_powerlaw(&pts, FitWindow { min: None, max: Some(1.26) }).unwrap();
    assert_eq!(f.n_points, 10);
    within("B", f.param("B").unwrap(), 0.36, 2.0);
    within("c", f.param("c").unwrap(), 0.48, 2.0);
}

#[test]
fn thermodynamic_fit_recovers_mass_and_limits() {
    let m = 0.3;
    let groups: Vec<ThermoGroup> = [(0.5, 0.4), (0.3, -0.2), (0.2, 0.3)]
        .iter()
        .enumerate()
        .map(|(g, &(c, a))| ThermoGroup {
            label: format!("g{g}"),
            points: noisy(&[6.0, 8.0, 10.0, 12.0, 16.0], |l| thermo_model(l, c, a, m), 0.002, 10 + g as u64),
        })
        .collect();
    let r = thermo_extrapolate(&groups, 0.1).unwrap();
    let fit = r.fit.unwrap();
    within("M", (fit.params[0], fit.errors[0]), m, 2.0);
    for (v, c) in r.values.iter().zip([0.5, 0.3, 0.2]) {
        assert!(v.extrapolated);
        within(&v.label, (v.c, v.error), c, 2.0);
    }
}

#[test]
fn continuum_limit_of_linear_data() {
    let inputs: Vec<ContinuumInput> = [0.25, 1.0 / 6.0, 0.125, 0.1]
        .iter()
        .map(|&a| ContinuumInput { a, back: 0.4 + 0.8 * a, mid: 0.4 + 0.5 * a, error: 1e-3 })
        .collect();
    let r = continuum_extrapolate(&inputs).unwrap();
    assert!((r.value - 0.4).abs() < 1e-12 && (r.back_value - 0.4).abs() < 1e-12);
    assert!(r.syst < 1e-12 && r.extrapolated && r.n_spacings == 4);
}

#[test]
fn numeric_jacobian_matches_analytic_derivatives() {
    let xs = [0.3, 0.7, 1.1, 2.0];
    let residuals = |p: &[f64]| xs.iter().map(|&x| powerlaw_model(x, p[0], p[1])).collect::<Vec<f64>>();
    let p = [0.36, 0.48];
    let j = numeric_jacobian(&residuals, &p);
    for (i, &x) in xs.iter().enumerate() {
        let d_b = x.powf(-p[1]);
        let d_c = -p[0] * x.powf(-p[1]) * x.ln();
        assert!((j[(i, 0)] - d_b).abs() < 1e-6 * d_b.abs().max(1.0));
        assert!((j[(i, 1)] - d_c).abs() < 1e-6 * d_c.abs().max(1.0));
    }
}

/// Adaptive Simpson quadrature.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
}

#[test]
fn bessel_k1_matches_quadrature() {
    // K1(b) = int_0^inf exp(-b cosh u) cosh u du.
    for k in 0..=40 {
        let b = 0.1 * (200.0f64).powf(k as f64 / 40.0);
        let upper = (60.0 / b).acosh().max(1.0) + 1.0;
        let q = simpson(&|u: f64| (-b * u.cosh()).exp() * u.cosh(), 0.0, upper, 1e-14 * bessel_k1(b));
        assert!((bessel_k1(b) - q).abs() < 1e-8 * q, "b = {b}: {} vs {q}", bessel_k1(b));
    }
}
