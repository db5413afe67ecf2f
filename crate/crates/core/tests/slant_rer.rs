use proptest::prelude::*;
use rer_core::slant::EsfInterpolation;
use rer_core::*;

fn chip(angle: f64) -> EdgeChipSpec {
    EdgeChipSpec {
        slant_angle: angle,
        ..Default::default()
    }
}

fn blurred(spec: &EdgeChipSpec, s0: f64, s1: f64, k: usize) -> ImageGrid {
    let p = BlurPipeline::new(s0, s1, k).unwrap();
    render_blurred_chip(spec, &p, RadiusRule::Auto).unwrap()
}

/// Standard normal CDF by composite Simpson integration from 0.
fn phi(z: f64) -> f64 {
    let n = 4000;
    let h = z / n as f64;
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(0.0) + pdf(z);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(i as f64 * h);
    }
    0.5 + s * h / 3.0
}

/// Edge response of a Gaussian of width `sigma` integrated over a unit
/// pixel, using `∫Φ(t/σ)dt = tΦ(t/σ) + σφ(t/σ)`.
fn pixel_esf(x: f64, sigma: f64) -> f64 {
    let pdf = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let prim = |t: f64| t * phi(t / sigma) + sigma * pdf(t / sigma);
    prim(x + 0.5) - prim(x - 0.5)
}

#[test]
fn recovers_slant_angle() {
    for angle in [2.0, 5.0, 10.0] {
        let line = locate_edge(&render_edge_chip(&chip(angle)).unwrap()).unwrap();
        assert!((line.angle - angle).abs() < 0.05, "{angle}: {}", line.angle);
        let line = locate_edge(&blurred(&chip(angle), 1.5, 0.0, 1)).unwrap();
        assert!((line.angle - angle).abs() < 0.05, "{angle}: {}", line.angle);
    }
}

#[test]
fn vertical_edge_offsets_are_constant() {
    let line = locate_edge(&blurred(&chip(0.0), 2.0, 0.0, 1)).unwrap();
    let first = line.per_row_offsets[0];
    for v in &line.per_row_offsets {
        assert!((v - first).abs() < 1e-3);
    }
    assert!(line.angle.abs() < 1e-9);
}

#[test]
fn flat_chip_is_a_measurement_error() {
    let flat = ImageGrid::filled(32, 32, 0.4).unwrap();
    assert!(matches!(locate_edge(&flat), Err(Error::Measurement(_))));
    assert!(matches!(measure_rer(&flat), Err(Error::Measurement(_))));
}

#[test]
fn unblurred_transition_within_one_pixel() {
    let m = measure_esf(&render_edge_chip(&chip(5.0)).unwrap(), &MeasureConfig::default()).unwrap();
    let last_low = m
        .bin_positions
        .iter()
        .zip(&m.esf_values)
        .filter(|(_, &v)| v < 0.05)
        .map(|(&x, _)| x)
        .fold(f64::MIN, f64::max);
    let first_high = m
        .bin_positions
        .iter()
        .zip(&m.esf_values)
        .filter(|(_, &v)| v > 0.95)
        .map(|(&x, _)| x)
        .fold(f64::MAX, f64::min);
    assert!(first_high - last_low <= 1.0, "{last_low} .. {first_high}");
}

#[test]
fn blurred_esf_follows_normal_cdf() {
    let m = measure_esf(&blurred(&chip(5.0), 2.0, 0.0, 1), &MeasureConfig::default()).unwrap();
    let mut worst: f64 = 0.0;
    for (&x, &v) in m.bin_positions.iter().zip(&m.esf_values) {
        if x.abs() <= 12.0 {
            worst = worst.max((v - phi(x / 2.0)).abs());
        }
    }
    assert!(worst < 0.01, "max deviation {worst}");
}

#[test]
fn interior_bins_are_populated() {
    let m = measure_esf(&blurred(&chip(5.0), 1.0, 0.0, 1), &MeasureConfig::default()).unwrap();
    for (&x, &c) in m.bin_positions.iter().zip(&m.bin_counts) {
        if x.abs() <= 30.0 {
            assert!(c > 0, "empty bin at {x}");
        }
    }
}

#[test]
fn unit_blur_after_binning_matches_pixel_integrated_oracle() {
    // σ_eff = 1 from σ0 = σ1 = √2 at twice the resolution
    let rer = measure_rer(&blurred(&chip(5.0), 2f64.sqrt(), 2f64.sqrt(), 2)).unwrap();
    let oracle = pixel_esf(0.5, 1.0) - pixel_esf(-0.5, 1.0);
    assert!((oracle - 0.36875).abs() < 5e-5, "{oracle}");
    assert!((rer - oracle).abs() < 0.005, "{rer} vs {oracle}");
    // the bare erf model sits above both by about 0.014
    let model = rer_erf_model(1.0).unwrap();
    assert!(model - rer > 0.008, "{model} vs {rer}");
}

#[test]
fn wide_blur_matches_slope_model() {
    let rer = measure_rer(&blurred(&chip(5.0), 3.0, 0.0, 1)).unwrap();
    assert!((rer - 0.1330).abs() < 0.005, "{rer}");
}

#[test]
fn two_stage_equals_quadrature_single_stage() {
    let two = measure_rer(&blurred(&chip(5.0), 3.0, 4.0, 1)).unwrap();
    let one = measure_rer(&blurred(&chip(5.0), 5.0, 0.0, 1)).unwrap();
    assert!((two - one).abs() < 0.005, "{two} vs {one}");
}

#[test]
fn binning_rescales_blur() {
    let binned = measure_rer(&blurred(&chip(5.0), 4.0, 0.0, 2)).unwrap();
    let direct = measure_rer(&blurred(&chip(5.0), 2.0, 0.0, 1)).unwrap();
    assert!((binned - direct).abs() < 0.01, "{binned} vs {direct}");
}

#[test]
fn cubic_interpolation_agrees_for_smooth_edges() {
    let image = blurred(&chip(5.0), 2.0, 0.0, 1);
    let lin = measure_esf(&image, &MeasureConfig::default()).unwrap().rer;
    let cub = measure_esf(
        &image,
        &MeasureConfig {
            interpolation: EsfInterpolation::Cubic,
            ..Default::default()
        },
    )
    .unwrap()
    .rer;
    assert!((lin - cub).abs() < 2e-3, "{lin} vs {cub}");
}

#[test]
fn affine_rescaling_power_of_two_is_bit_exact() {
    let image = blurred(&chip(5.0), 1.3, 0.0, 1);
    let base = measure_rer(&image).unwrap();
    for gain in [0.25, 2.0, 8.0] {
        assert_eq!(measure_rer(&image.map(|v| v * gain)).unwrap(), base);
    }
}

#[test]
fn rer_is_monotone_in_blur_on_binned_chips() {
    let spec = EdgeChipSpec {
        width: 96,
        height: 96,
        ..chip(5.0)
    };
    let mut prev = f64::INFINITY;
    for i in 0..24 {
        let sigma = 0.25 + i as f64 * (6.0 - 0.25) / 23.0;
        // split the pre-binning blur evenly over both stages
        let pre = sigma * 2.0 / 2f64.sqrt();
        let rer = measure_rer(&blurred(&spec, pre, pre, 2)).unwrap();
        assert!(rer <= prev + 1e-12, "σ {sigma}: {rer} > {prev}");
        prev = rer;
    }
}

#[test]
fn unblurred_edge_sits_at_zero_blur_bound() {
    let rer = measure_rer(&render_edge_chip(&chip(5.0)).unwrap()).unwrap();
    // The pixel footprint turns the step into a unit ramp, and quarter-pixel
    // bins average it over ±1/8 px: at ±½ the ramp loses 1/32 on each side.
    assert!((rer - (1.0 - 1.0 / 16.0)).abs() < 0.005, "{rer}");
    assert!(rer <= 1.0 + 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn affine_invariance(gain in 0.01f64..100.0, shift in -10.0f64..10.0, negate: bool, sigma in 0.3f64..3.0) {
        let image = blurred(&EdgeChipSpec { width: 64, height: 64, ..chip(5.0) }, sigma, 0.0, 1);
        let a = measure_rer(&image).unwrap();
        // offsets far above the gain discard input bits before measurement
        let gain = if negate { -gain } else { gain };
        let offset = gain * shift;
        let b = measure_rer(&image.map(|v| gain * v + offset)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
    }

    #[test]
    fn mirror_symmetry(sigma in 0.3f64..4.0, angle in 1.0f64..15.0) {
        let image = blurred(&EdgeChipSpec { width: 64, height: 64, ..chip(angle) }, sigma, 0.0, 1);
        let a = measure_rer(&image).unwrap();
        let b = measure_rer(&image.mirror_horizontal()).unwrap();
        prop_assert!((a - b).abs() <= 1e-6, "{} vs {}", a, b);
    }

    #[test]
    fn rer_is_bounded(sigma in 0.0f64..5.0, k in 1usize..4, angle in 1.0f64..20.0, offset in -0.5f64..0.5) {
        let spec = EdgeChipSpec { width: 48, height: 48, slant_angle: angle, edge_offset: offset, ..Default::default() };
        let rer = measure_rer(&blurred(&spec, sigma, 0.0, k)).unwrap();
        prop_assert!(rer > 0.0 && rer <= 1.0 + 1e-6, "{}", rer);
    }
}
