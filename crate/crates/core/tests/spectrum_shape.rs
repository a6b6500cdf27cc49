//! Shape of the noise spectra across antenna spacings (fig2 parameters).

use sdmimo_core::experiments::{builtin, run_experiment, ExperimentOutput};
use sdmimo_core::noise_spectrum::{crossover_width_deg, Pipeline};

fn widths() -> Vec<(f64, f64, f64)> {
    let spec = builtin("fig2").unwrap();
    let u0 = spec.scenario.theta0.sin();
    let ExperimentOutput::Spectrum(points) = run_experiment(&spec).unwrap().output else {
        panic!("spectrum output")
    };
    points
        .iter()
        .map(|p| {
            let sim = crossover_width_deg(
                &p.run.curve(Pipeline::OneBit, true),
                &p.run.curve(Pipeline::SigmaDelta, true),
                u0,
            );
            (p.d_over_lambda, sim, p.crossover_deg)
        })
        .collect()
}

#[test]
fn sigma_delta_advantage_widens_and_in_sector_power_drops_with_oversampling() {
    let spec = builtin("fig2").unwrap();
    let ExperimentOutput::Spectrum(points) = run_experiment(&spec).unwrap().output else {
        panic!("spectrum output")
    };
    for pair in points.windows(2) {
        assert!(pair[1].d_over_lambda < pair[0].d_over_lambda);
        assert!(pair[1].crossover_deg > pair[0].crossover_deg);
        assert!(pair[1].pq_sd_sector < pair[0].pq_sd_sector);
        assert!(pair[1].pq_onebit_sector > pair[0].pq_onebit_sector);
    }
    for p in &points {
        assert!(p.pq_sd_sector < p.pq_onebit_sector, "d/λ = {}", p.d_over_lambda);
    }
}

/// Reported widths are about 40°, 80°, 150° and 180° for d/λ = 1/2, 1/4, 1/8, 1/16.
#[test]
fn crossover_widths_match_reported_values() {
    let reported = [40.0, 80.0, 150.0, 180.0];
    let got = widths();
    for w in got.windows(2) {
        assert!(w[1].1 >= w[0].1, "simulated widths not monotone: {got:?}");
    }
    let misses: Vec<String> = got
        .iter()
        .zip(reported)
        .filter(|((_, sim, _), want)| (sim - want).abs() > 15.0)
        .map(|((d, sim, ana), want)| {
            format!("d/λ={d}: simulated {sim:.1}°, analytic {ana:.1}°, reported {want}°")
        })
        .collect();
    assert!(misses.is_empty(), "{misses:?}");
}
