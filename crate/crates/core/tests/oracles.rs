//! Monte Carlo and closed-form checks that need longer runs than the unit tests.

use sidlab::density::{density_distance, GridDensity, GridSpec};
use sidlab::exit::{first_exit, Domain, DomainSpec};
use sidlab::occupation::OccupationMeasure;
use sidlab::potentials::PotentialSpec;
use sidlab::sde::{deterministic_flow, frozen_flow, simulate_frozen, simulate_self_interacting, BrownianSource, FlowConfig, Frozen, SimConfig};

fn quad(c: f64) -> PotentialSpec {
    PotentialSpec::quadratic(vec![0.0], c).unwrap()
}

#[test]
fn frozen_ou_stationary_variance() {
    // dY = σ dB − (ρ + α) Y dt has stationary variance σ²/(2(ρ+α))
    let (v, w) = (quad(1.0), quad(1.0));
    let sigma = 0.8;
    let cfg = SimConfig::new(sigma, 1e-2, 20_000.0, vec![0.0], 17);
    let path = simulate_frozen(&v, &w, &[0.0], &cfg, 0).unwrap();
    let tail = &path.points[1000..];
    let n = tail.len() as f64;
    let mean = tail.iter().sum::<f64>() / n;
    let var = tail.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let exact = sigma * sigma / 4.0;
    assert!((var / exact - 1.0).abs() < 0.05, "variance {var} vs {exact}");
}

#[test]
fn weak_euler_error_is_first_order() {
    // E[Y_1] = y0·e^{−2}; the replica mean error should halve with dt
    let (v, w) = (quad(1.0), quad(1.0));
    let replicas = 10_000;
    let mut errors = Vec::new();
    let dts = [1e-2, 5e-3, 2.5e-3];
    for dt in dts {
        let cfg = SimConfig::new(0.01, dt, 1.0, vec![1.0], 5);
        let mean = (0..replicas)
            .map(|r| simulate_frozen(&v, &w, &[0.0], &cfg, r).unwrap().final_position[0])
            .sum::<f64>()
            / replicas as f64;
        errors.push((mean - (-2.0f64).exp()).abs());
    }
    let order = (errors[0] / errors[2]).ln() / (dts[0] / dts[2]).ln();
    assert!(order >= 0.8, "errors {errors:?}, observed order {order}");
}

#[test]
fn time_average_converges_to_minimizer() {
    let (v, w) = (quad(1.0), quad(1.0));
    let t_end = 2_000.0;
    let cfg = SimConfig::new(1.0, 1e-2, t_end, vec![1.5], 23).with_auto_stride();
    let path = simulate_self_interacting(&v, &w, &cfg, 0, |_| false).unwrap();
    let mu: OccupationMeasure = path.occupation.unwrap();
    let avg = mu.mean()[0];
    assert!(avg.abs() <= 5.0 / t_end.sqrt(), "time average {avg}");
}

#[test]
fn frozen_exit_time_matches_quadrature() {
    // Mean exit time from 0 of dY = σ dB − 2Y dt on (−1, 1):
    // a ∫₀¹ e^{aU(y)} ∫₀^y e^{−aU(z)} dz dy with U = y², a = 2/σ², by adaptive quadrature.
    const EXACT_MEAN: f64 = 6.349001549203872;
    let (v, w) = (quad(1.0), quad(1.0));
    let sigma: f64 = 0.8;
    let dt = (sigma * sigma / 100.0).min(1e-3);
    let domain = Domain::new(DomainSpec::Interval { lo: -1.0, hi: 1.0 }, &v, &w, &[0.0]).unwrap();
    let cfg = SimConfig::new(sigma, dt, 1.0, vec![0.0], 41);
    let replicas = 400;
    let taus: Vec<f64> = (0..replicas)
        .map(|r| {
            let mut y = Frozen::new(&v, &w, &[0.0], &cfg).unwrap();
            let mut noise = BrownianSource::new(cfg.master_seed, r, 1, dt);
            let rec = first_exit(&mut y, &mut noise, &domain, 1e4, r).unwrap();
            assert!(!rec.timed_out);
            rec.tau
        })
        .collect();
    let n = replicas as f64;
    let mean = taus.iter().sum::<f64>() / n;
    let se = (taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt();
    // discrete monitoring misses excursions and biases τ up by O(√dt)
    let tol = 3.0 * se + 0.05 * EXACT_MEAN;
    assert!((mean - EXACT_MEAN).abs() <= tol, "mean {mean} ± {se} vs {EXACT_MEAN}");
}

#[test]
fn flow_terminal_distance_shrinks_with_horizon() {
    let (v, w) = (PotentialSpec::quadratic(vec![0.3], 1.0).unwrap(), quad(1.0));
    let d: Vec<f64> = [5.0, 10.0, 20.0]
        .into_iter()
        .map(|t| {
            let mut cfg = FlowConfig::new(t, 1e-3);
            cfg.max_halvings = 6;
            deterministic_flow(&v, &w, &[2.0], &cfg, None).unwrap().terminal_distance
        })
        .collect();
    assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
}

#[test]
fn frozen_flow_from_ball_boundary_stays_inside() {
    let v = PotentialSpec::quadratic_diag(vec![0.0, 0.0], vec![1.0, 4.0]).unwrap();
    let w = PotentialSpec::quadratic(vec![0.0, 0.0], 1.0).unwrap();
    let ball = Domain::new(DomainSpec::Ball { center: vec![0.0, 0.0], radius: 1.0 }, &v, &w, &[0.0, 0.0]).unwrap();
    for z in ball.boundary_samples(16).unwrap() {
        let path = frozen_flow(&v, &w, &[0.0, 0.0], &z, &FlowConfig::new(5.0, 1e-3), Some(&ball)).unwrap();
        assert_eq!(path.stays_in, Some(true), "start {z:?}");
    }
}

#[test]
fn gaussian_w2_identities() {
    let g = GridSpec::new(-8.0, 8.0, 4001).unwrap();
    let a = GridDensity::gaussian(g, 0.0, 0.5).unwrap();
    let b = GridDensity::gaussian(g, 0.5, 0.5).unwrap();
    let c = GridDensity::gaussian(g, 0.0, 0.6).unwrap();
    let (_, shift) = density_distance(&a, &b).unwrap();
    let (_, spread) = density_distance(&a, &c).unwrap();
    assert!((shift - 0.5).abs() <= 1e-3, "{shift}");
    assert!((spread - 0.1).abs() <= 1e-3, "{spread}");
}
