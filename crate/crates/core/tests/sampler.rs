use bohmvar::parse_state;
use bohmvar::quadrature::{integrate, sample_equilibrium, EquilibriumSampler, IntegrationScheme};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use statrs::function::gamma::gamma_lr;

const BINS: usize = 20;
const N: usize = 100_000;

fn chi_square(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut counts = [0usize; BINS];
    for &x in samples {
        let bin = ((cdf(x) * BINS as f64) as usize).min(BINS - 1);
        counts[bin] += 1;
    }
    let expected = samples.len() as f64 / BINS as f64;
    let stat = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let critical = ChiSquared::new((BINS - 1) as f64).unwrap().inverse_cdf(0.999);
    (stat, critical)
}

fn first_axis(d: &str, sampler: &EquilibriumSampler) -> Vec<f64> {
    let psi = parse_state(d).unwrap();
    sample_equilibrium(&psi, N, sampler).unwrap().into_iter().map(|p| p[0]).collect()
}

#[test]
fn ground_state_histogram() {
    let xs = first_axis("ho1d:n=0", &EquilibriumSampler::default());
    let normal = Normal::new(0.0, 0.5f64.sqrt()).unwrap();
    let (stat, critical) = chi_square(&xs, |x| normal.cdf(x));
    assert!(stat < critical, "χ² {stat} ≥ {critical}");
}

#[test]
fn excited_state_histogram() {
    // |ψ₁|² = 2x²e^{−x²}/√π, so x² ~ Gamma(3/2, 1) with a symmetric sign
    let xs = first_axis("ho1d:n=1", &EquilibriumSampler { seed: 11, ..Default::default() });
    let cdf = |x: f64| 0.5 + 0.5 * x.signum() * gamma_lr(1.5, x * x);
    let (stat, critical) = chi_square(&xs, cdf);
    assert!(stat < critical, "χ² {stat} ≥ {critical}");
}

#[test]
fn angular_state_marginal_histogram() {
    // the x-marginal of |(x + iy)e^{−r²/2}|²/π is (x² + 1/2)e^{−x²}/√π
    let xs = first_axis("ho2d_angular:l=1", &EquilibriumSampler { seed: 5, ..Default::default() });
    let normal = Normal::new(0.0, 0.5f64.sqrt()).unwrap();
    let cdf = |x: f64| 0.5 * normal.cdf(x) + 0.5 * (0.5 + 0.5 * x.signum() * gamma_lr(1.5, x * x));
    let (stat, critical) = chi_square(&xs, cdf);
    assert!(stat < critical, "χ² {stat} ≥ {critical}");
}

#[test]
fn sample_mean_error_scales_as_inverse_root_n() {
    let psi = parse_state("ho1d:n=1").unwrap();
    let f = |x: &[f64]| (1.3 * x[0]).cos();
    let exact = integrate(|x| f(x) * psi.density(x), &psi, &IntegrationScheme::default())
        .unwrap()
        .value;
    let sizes = [1_000usize, 10_000, 100_000];
    let seeds = 40;
    let mut logs = vec![];
    for &n in &sizes {
        let mse: f64 = (0..seeds)
            .map(|s| {
                let sampler = EquilibriumSampler {
                    seed: 1000 + s,
                    ..Default::default()
                };
                let xs = sample_equilibrium(&psi, n, &sampler).unwrap();
                let mean = xs.iter().map(|x| f(x)).sum::<f64>() / n as f64;
                (mean - exact).powi(2)
            })
            .sum::<f64>()
            / seeds as f64;
        logs.push(((n as f64).ln(), 0.5 * mse.ln()));
    }
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / 3.0;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / 3.0;
    let slope = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / logs.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope + 0.5).abs() <= 0.15, "slope {slope}, points {logs:?}");
}
