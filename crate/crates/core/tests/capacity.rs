use mlc_ssk::capacity::{estimate_capacities, find_design_snr};
use mlc_ssk::ssk_channel::SskConfig;
use mlc_ssk::Error;

#[test]
fn seeds_agree_within_four_standard_errors() {
    for (nr, db) in [(1, 3.29), (4, -5.61)] {
        let c = SskConfig::new(16, nr, db).unwrap();
        let a = estimate_capacities(&c, 100_000, 1).unwrap();
        let b = estimate_capacities(&c, 100_000, 2).unwrap();
        assert_ne!(a.total_capacity, b.total_capacity);
        let pairs = a
            .level_capacity
            .iter()
            .zip(&a.level_std_error)
            .zip(b.level_capacity.iter().zip(&b.level_std_error))
            .chain(std::iter::once((
                (&a.total_capacity, &a.total_std_error),
                (&b.total_capacity, &b.total_std_error),
            )));
        for ((ca, sa), (cb, sb)) in pairs {
            assert!((ca - cb).abs() <= 4.0 * (sa * sa + sb * sb).sqrt(), "{ca} vs {cb}");
        }
    }
}

#[test]
fn standard_error_scales_as_inverse_root_frames() {
    let c = SskConfig::new(16, 2, 0.0).unwrap();
    let small = estimate_capacities(&c, 10_000, 7).unwrap();
    let large = estimate_capacities(&c, 1_000_000, 7).unwrap();
    let ratios = small
        .level_std_error
        .iter()
        .zip(&large.level_std_error)
        .chain(std::iter::once((&small.total_std_error, &large.total_std_error)));
    for (s, l) in ratios {
        let r = s / l;
        assert!((r / 10.0 - 1.0).abs() <= 0.2, "ratio {r}");
    }
}

#[test]
fn chain_is_monotone_within_three_standard_errors() {
    for (nr, db) in [(1, 0.0), (2, 5.0), (4, -8.0)] {
        let c = SskConfig::new(16, nr, db).unwrap();
        let r = estimate_capacities(&c, 100_000, 3).unwrap();
        let mut chain: Vec<(f64, f64)> = r
            .subset_capacity
            .iter()
            .copied()
            .zip(r.subset_std_error.iter().copied())
            .collect();
        chain.push((r.total_capacity, r.total_std_error));
        for w in chain.windows(2) {
            let ((a, sa), (b, sb)) = (w[0], w[1]);
            assert!(a <= b + 3.0 * (sa * sa + sb * sb).sqrt());
        }
    }
}

#[test]
fn telescoping_is_exact_for_many_configs() {
    for (nt, nr, db) in [
        (2, 1, 0.0),
        (4, 3, -2.0),
        (8, 1, 10.0),
        (16, 4, -6.87),
        (32, 2, 20.0),
        (64, 1, 3.0),
    ] {
        let c = SskConfig::new(nt, nr, db).unwrap();
        let r = estimate_capacities(&c, 10_000, 11).unwrap();
        let sum: f64 = r.level_capacity.iter().sum();
        assert!(
            (sum - r.total_capacity).abs() <= 1e-12 * r.total_capacity.abs().max(1e-300),
            "{nt}x{nr}"
        );
    }
}

#[test]
fn design_snr_search_brackets_the_target() {
    let c = SskConfig::new(4, 1, 0.0).unwrap();
    let db = find_design_snr(&c, 1.0, 0.05, 20_000, 5).unwrap();
    let r = estimate_capacities(&c.with_snr(db), 20_000, 5).unwrap();
    assert!(
        (r.total_capacity - 1.0).abs() < 0.03,
        "{db} dB gives {}",
        r.total_capacity
    );
    // Unreachable within the search window.
    let unreachable = find_design_snr(&SskConfig::new(4, 1, 0.0).unwrap(), 1.9999999, 0.05, 10_000, 5);
    assert!(matches!(unreachable, Err(Error::OutOfRange(_))), "{unreachable:?}");
}

#[test]
fn same_seed_same_report() {
    let c = SskConfig::new(8, 2, 1.0).unwrap();
    assert_eq!(
        estimate_capacities(&c, 20_000, 9).unwrap(),
        estimate_capacities(&c, 20_000, 9).unwrap()
    );
}
