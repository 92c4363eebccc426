use std::path::Path;

use proptest::prelude::*;

use ghzconf::adversary::{AttackKind, AttackPlan, EveBasis};
use ghzconf::channel::PartyId;
use ghzconf::harness::report::CSV_COLUMNS;
use ghzconf::harness::{
    aggregate, emit_report, load_scenario, parse_csv, run_trials, ConfigError, ReportFormat, RunMode, RunStats,
    ScenarioConfig, TrialStats,
};

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn loads_minimal_file_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "s.toml", "scheme = 1\nparties = 4\nrounds = 50\nsample_ratio = 0.1\nseed = 3\n");
    let c = load_scenario(&p).unwrap();
    assert_eq!((c.parties, c.rounds, c.trials, c.seed), (4, 50, 1, 3));
    assert_eq!(c.thresholds.z, 0.02);
}

#[test]
fn reports_offending_link() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "s.toml",
        "scheme = 1\nparties = 3\nrounds = 50\nsample_ratio = 0.1\nseed = 3\n\
         [[links]]\nfrom = 0\nto = 1\np_t = 0.9\n[[links]]\nfrom = 0\nto = 2\np_t = 1.5\n",
    );
    let err = load_scenario(&p).unwrap_err();
    assert_eq!(err.paths(), vec!["links[1].p_t"]);
    assert!(err.to_string().contains("links[1].p_t"));
}

#[test]
fn missing_seed_and_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "s.toml", "scheme = 1\nparties = 3\nrounds = 50\nsample_ratio = 0.1\n");
    assert_eq!(load_scenario(&p).unwrap_err().paths(), vec!["seed"]);
    assert!(matches!(
        load_scenario(&dir.path().join("absent.toml")),
        Err(ConfigError::Io { .. })
    ));
}

#[test]
fn identical_seed_gives_identical_stats() {
    let mut c = ScenarioConfig::sifted(3, 3000, 0.25, 77).with_trials(5);
    c.network.links[0].q_depol = 0.05;
    let a = run_trials(&c, RunMode::Conference).unwrap();
    let b = run_trials(&c, RunMode::Conference).unwrap();
    assert_eq!(a, b);
    c.seed = 78;
    let other = run_trials(&c, RunMode::Conference).unwrap();
    assert_ne!(a.trials, other.trials);
}

#[test]
fn attacked_trials_are_recorded_as_aborts() {
    let mut c = ScenarioConfig::sifted(3, 4000, 0.25, 5).with_trials(3);
    c.attacks = AttackPlan::single(PartyId(0), PartyId(2), AttackKind::InterceptResend(EveBasis::Z));
    let s = run_trials(&c, RunMode::KeyGen).unwrap();
    assert!(s.all_aborted());
    assert!(s.trials.iter().all(|t| t.raw_key_len == 0 && t.qber_z == Some(0.0)));
    assert!(s.trials.iter().all(|t| t.eve_mi.is_some()));
}

#[test]
fn hundred_trials_csv_round_trip() {
    let c = ScenarioConfig::sifted(3, 200, 0.054, 9).with_trials(100);
    let stats = run_trials(&c, RunMode::KeyGen).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    emit_report(&stats, ReportFormat::Csv, Some(&out)).unwrap();
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
    assert_eq!(text.lines().count(), 1 + 100 + 1);

    let rows = parse_csv(&text).unwrap();
    let (agg, trials): (Vec<TrialStats>, Vec<TrialStats>) = rows.into_iter().partition(|t| t.trial.is_none());
    let again = aggregate(&trials);
    let agg = &agg[0];
    assert_eq!(again.kept_z, agg.kept_z);
    assert_eq!(again.rounds, stats.aggregate.rounds);
    assert!((again.empirical_rate - agg.empirical_rate).abs() < 1e-12);
    assert!((again.predicted_rate - agg.predicted_rate).abs() < 1e-12);
    for (x, y) in [(again.qber_z, agg.qber_z), (again.qber_x, agg.qber_x)] {
        assert!((x.unwrap() - y.unwrap()).abs() < 1e-12);
    }
}

#[test]
fn quantum_key_report_fields() {
    let mut c = ScenarioConfig::quantum_key(4, 300, 0.2, 12).with_trials(2);
    c.message_rounds = 2;
    let stats = run_trials(&c, RunMode::QuantumKey).unwrap();
    for t in &stats.trials {
        assert_eq!(t.scheme, 2);
        assert_eq!(t.bit_accuracy, Some(1.0));
        assert!(t.qber_z.is_none());
        assert!(t.min_key_fidelity.unwrap() > 1.0 - 1e-9);
    }
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.toml");
    emit_report(&stats, ReportFormat::Text, Some(&out)).unwrap();
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.matches("[[trial]]").count(), 3);
}

fn arbitrary_row() -> impl Strategy<Value = TrialStats> {
    (
        1u64..1000,
        0.0f64..1.0,
        prop::option::of(0.0f64..1.0),
        prop::option::of(0.0f64..1.0),
        prop::option::of(0.0f64..1.0),
        0u64..100,
    )
        .prop_map(|(rounds, frac, qz, fid, mi, samples)| TrialStats {
            trial: None,
            scheme: 1,
            parties: 3,
            rounds,
            kept_z: (rounds as f64 * frac) as u64,
            kept_x_samples: samples,
            z_samples: samples,
            raw_key_len: 0,
            empirical_rate: frac,
            predicted_rate: 0.343,
            qber_z: qz,
            qber_x: qz.map(|q| 1.0 - q),
            min_key_fidelity: fid,
            bit_accuracy: fid,
            eve_mi: mi,
            aborted: false,
        })
}

proptest! {
    #[test]
    fn aggregation_ignores_row_order(
        rows in prop::collection::vec(arbitrary_row(), 1..20),
        perm_seed in any::<u64>(),
    ) {
        let rows: Vec<TrialStats> = rows
            .into_iter()
            .enumerate()
            .map(|(i, mut r)| { r.trial = Some(i); r })
            .collect();
        let mut shuffled = rows.clone();
        // Deterministic Fisher-Yates driven by the generated seed.
        let mut s = perm_seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(aggregate(&rows), aggregate(&shuffled));
        prop_assert_eq!(RunStats::from_trials(rows), RunStats::from_trials(shuffled));
    }
}

#[test]
fn default_sweep_grid_within_three_sigma() {
    let base = ScenarioConfig::sifted(3, 20_000, 0.054, 2026);
    let cells = ghzconf::harness::run_sweep(&base).unwrap();
    assert_eq!(cells.len(), 36);
    for c in &cells {
        assert!(c.within_3sigma, "{c:?}");
    }
}

#[test]
fn shipped_scenarios_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            load_scenario(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 6);
}
