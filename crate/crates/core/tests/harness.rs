use scma_core::harness::{
    emit_csv, parse_csv, run_trial, sweep, ReceiverOptions, SweepSpec, CSV_HEADER,
};
use scma_core::model::SystemConfig;

fn small() -> SweepSpec {
    SweepSpec {
        symbols: 40,
        ..Default::default()
    }
}

#[test]
fn trials_are_reproducible() {
    let cfg = small().config(0.25).unwrap();
    let opts = ReceiverOptions::default();
    let a = run_trial(&cfg, 17.5, 42, &opts).unwrap();
    let b = run_trial(&cfg, 17.5, 42, &opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.total_bits, 12 * 40 * 2 * 2);
}

#[test]
fn high_snr_sparse_link_decodes_cleanly() {
    let cfg = SystemConfig::from_sparsity(2, 3, 0.1, 100).unwrap();
    let r = run_trial(&cfg, 30.0, 5, &ReceiverOptions::default()).unwrap();
    assert!(!r.diverged);
    assert_eq!(r.id_error_rate, 0.0);
    assert_eq!(r.bit_errors, 0);
}

#[test]
fn csv_round_trip() {
    let res = sweep(&small(), &[0.25], &[15.0, 20.0], 2, 1, 3, &ReceiverOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let meta = emit_csv(&res, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    let rows = parse_csv(&path).unwrap();
    assert_eq!(rows.len(), res.points.len());
    for (row, p) in rows.iter().zip(&res.points) {
        assert_eq!(row.ber, p.ber);
        assert_eq!(row.ci95, p.ci95);
        assert_eq!(row.mean_iters, p.mean_iters);
        assert_eq!(row.snr_db, p.snr_db);
    }
    assert!(meta.exists());
}

#[test]
fn sweep_matches_individual_trials() {
    let spec = small();
    let opts = ReceiverOptions::default();
    let res = sweep(&spec, &[0.2], &[17.5], 3, 2, 11, &opts).unwrap();
    let cfg = spec.config(0.2).unwrap();
    let p = &res.points[0];
    let mut total = 0.0;
    for t in &p.results {
        let again = run_trial(&cfg, 17.5, t.seed, &opts).unwrap();
        assert_eq!(&again, t);
        total += t.ber;
    }
    assert_eq!(p.ber, total / 3.0);
}

#[test]
fn snr_points_share_trial_seeds() {
    let res = sweep(&small(), &[0.25], &[10.0, 20.0], 2, 1, 8, &ReceiverOptions::default()).unwrap();
    let seeds = |i: usize| res.points[i].results.iter().map(|t| t.seed).collect::<Vec<_>>();
    assert_eq!(seeds(0), seeds(1));
}
