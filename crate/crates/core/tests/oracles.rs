//! Module outputs checked against independently computed values.

use std::path::Path;

use lfdepth::diffusion::{solve_poisson, SolverConfig, SplatImage, WeightMaps};
use lfdepth::epi_edges::{process_epi, EdgeParams, FilterBank};
use lfdepth::eval::{compute_metrics, reprojection_error};
use lfdepth::gradient::GradientField;
use lfdepth::io::{decode_pfm, encode_pfm};
use lfdepth::synth::{presets, render};
use lfdepth::{DisparityMap, EpiAxis, Image};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn sobel_is_exact_on_linear_ramps_including_borders() {
    let (a, b) = (0.013, -0.007);
    let img = Image::from_fn(11, 7, 3, |x, y, px| {
        px[0] = 0.3 + a * x as f64 + b * y as f64;
    });
    let g = GradientField::of_image(&img);
    for y in 0..7 {
        for x in 0..11 {
            let [gx, gy] = g.at_pixel(x, y);
            assert!((gx - a).abs() < 1e-12 && (gy - b).abs() < 1e-12, "({x},{y}): {gx} {gy}");
        }
    }
}

#[test]
fn bank_orientations_are_evenly_spaced() {
    let bank = FilterBank::new(17, 2.0).unwrap();
    for (k, &o) in bank.orientations().iter().enumerate() {
        assert!((o - (-2.0 + 0.25 * k as f64)).abs() < 1e-12);
    }
}

#[test]
fn on_bin_plane_yields_exact_bank_disparity() {
    let (lf, _) = render(&presets::textured_plane(48, 9, 1.0), 5).unwrap();
    let params = EdgeParams::default();
    let bank = params.bank().unwrap();
    let mut seen = 0;
    for row in [12, 24, 36] {
        let epi = lf.extract_epi(EpiAxis::Horizontal, row).unwrap();
        for l in process_epi(&epi, &bank, &params).visible {
            if l.x_top.min(l.x_bottom) > 4.0 && l.x_top.max(l.x_bottom) < 43.0 {
                assert_eq!(l.disparity, 1.0, "line at {}", l.center_x());
                seen += 1;
            }
        }
    }
    assert!(seen > 5);
}

/// Weighted chain constrained at both ends: node values follow the cumulative
/// resistance, with each data term acting as a resistor `1/λ_d` to its target.
#[test]
fn chain_solution_matches_series_resistance() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 40;
    let lambda_s: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..5.0)).collect();
    let mut lambda_d = vec![0.0; n];
    lambda_d[0] = 50.0;
    lambda_d[n - 1] = 80.0;
    let mut values = vec![0.0; n];
    values[n - 1] = 2.0;
    let mut occupied = vec![false; n];
    occupied[0] = true;
    occupied[n - 1] = true;
    let splat = SplatImage {
        width: n,
        height: 1,
        values,
        occupied,
        owner: vec![None; n],
    };
    let weights = WeightMaps {
        width: n,
        height: 1,
        lambda_d,
        lambda_s: lambda_s.clone(),
    };
    let cfg = SolverConfig {
        residual_tol: 1e-13,
        ..Default::default()
    };
    let (d, _) = solve_poisson(&splat, &weights, &cfg).unwrap();

    let resist: Vec<f64> = (0..n - 1).map(|i| 1.0 / lambda_s[i].min(lambda_s[i + 1])).collect();
    let total: f64 = 1.0 / 50.0 + resist.iter().sum::<f64>() + 1.0 / 80.0;
    let mut acc = 1.0 / 50.0;
    for i in 0..n {
        let expect = 2.0 * acc / total;
        assert!((d.get(i, 0) - expect).abs() < 1e-9, "node {i}: {} vs {expect}", d.get(i, 0));
        if i + 1 < n {
            acc += resist[i];
        }
    }
}

#[test]
fn ground_truth_reprojects_without_error() {
    // integer disparity keeps the bilinear warp exact
    let (lf, gt) = render(&presets::textured_plane(40, 5, 1.0), 2).unwrap();
    let err = reprojection_error(&lf, &gt).unwrap();
    let (w, h) = (40, 40);
    // views shift by up to 2 px
    let mut worst: f64 = 0.0;
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            worst = worst.max(err[y * w + x]);
        }
    }
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn unit_disparity_error_is_at_least_the_lag_one_gap() {
    let (lf, gt) = render(&presets::textured_plane(48, 3, 0.0), 6).unwrap();
    let wrong = gt.map_values(|d| d + 1.0);
    let err = reprojection_error(&lf, &wrong).unwrap();
    // with three views per axis every warp is off by exactly one pixel
    let img = lf.central_rgb();
    let (mut gap, mut total, mut n) = (0.0, 0.0, 0.0);
    for y in 4..44 {
        for x in 4..44 {
            let lag = |dx: isize, dy: isize| {
                let (u, v) = ((x as isize + dx) as usize, (y as isize + dy) as usize);
                (0..3).map(|c| (img.get(x, y, c) - img.get(u, v, c)).abs()).sum::<f64>() / 3.0
            };
            gap += (lag(1, 0) + lag(-1, 0) + lag(0, 1) + lag(0, -1)) / 4.0;
            total += err[y * 48 + x];
            n += 1.0;
        }
    }
    assert!(total / n >= 0.9 * gap / n, "error {} vs lag-1 gap {}", total / n, gap / n);
}

/// Block matching between the views on either side of the center along s.
/// Both sides are interpolated by the same fraction, which avoids the pull
/// toward whole-pixel shifts of one-sided matching.
#[test]
fn rendered_parallax_matches_ground_truth() {
    let spec = presets::two_plane(64, 5, 0.2, 1.1);
    let (lf, gt) = render(&spec, 4).unwrap();
    let c = lf.central_lab();
    let left = lf.lab(lf.s_center() - 1, lf.t_center());
    let right = lf.lab(lf.s_center() + 1, lf.t_center());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    while checked < 50 {
        let x = rng.random_range(8..56);
        let y = rng.random_range(8..56);
        let truth = gt.get(x, y);
        // keep patches that stay on one layer in both side views
        let flat = (-5..=5).all(|dy: isize| {
            (-5..=5).all(|dx: isize| {
                (gt.get((x as isize + dx) as usize, (y as isize + dy) as usize) - truth).abs() < 1e-9
            })
        });
        // horizontal structure is what s-parallax can be matched on
        let textured = (-2..=2).any(|dy: isize| {
            let v = (y as isize + dy) as usize;
            (0..3).any(|ch| (c.get(x - 2, v, ch) - c.get(x + 2, v, ch)).abs() > 0.05)
        });
        if !flat || !textured {
            continue;
        }
        let cost = |d: f64| {
            let mut s = 0.0;
            for dy in -2..=2 {
                for dx in -2..=2 {
                    let (u, v) = (x as f64 + dx as f64, y as f64 + dy as f64);
                    for ch in 0..3 {
                        let diff = left.bilinear(u - d, v, ch) - right.bilinear(u + d, v, ch);
                        s += diff * diff;
                    }
                }
            }
            s
        };
        let best = (-200..=200)
            .map(|k| k as f64 * 0.01)
            .min_by(|a, b| cost(*a).total_cmp(&cost(*b)))
            .unwrap();
        assert!((best - truth).abs() <= 0.1, "({x},{y}) matched {best}, truth {truth}");
        checked += 1;
    }
}

#[test]
fn pfm_encoding_is_bit_exact_with_reference() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/ref_3x2.pfm");
    let reference = std::fs::read(&path).unwrap();
    let mut map = DisparityMap::from_fn(3, 2, |x, y| x as f64 + 10.0 * y as f64 - 0.25);
    map.invalidate(2, 1);
    assert_eq!(encode_pfm(&map), reference);

    let back = decode_pfm(&reference, &path).unwrap();
    assert!(!back.is_valid(2, 1));
    assert_eq!(back.get(1, 1), 10.75);
    assert_eq!(back.get(0, 0), -0.25);
}

#[test]
fn metrics_of_a_constant_offset() {
    let gt = DisparityMap::from_fn(20, 10, |x, y| 0.05 * x as f64 - 0.1 * y as f64);
    let pred = gt.map_values(|d| d - 0.3);
    let m = compute_metrics(&pred, &gt, &[]).unwrap();
    assert!((m.mse_x100 - 9.0).abs() < 1e-9);
    assert!((m.rmse - 0.3).abs() < 1e-12);
    assert!((m.q25 - 0.3).abs() < 1e-12 && (m.q50 - 0.3).abs() < 1e-12);
}
