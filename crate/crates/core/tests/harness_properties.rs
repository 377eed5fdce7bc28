use compressed_pushsum::compression::CompressionSpec;
use compressed_pushsum::harness::output::{load_rows, read_rows, write_rows};
use compressed_pushsum::harness::{
    sweep_consensus, ExperimentConfig, GammaPolicy, Manifest, RunStatus, Setup, SweepRow,
    TopologySpec, TraceRow,
};
use compressed_pushsum::pushsum::exact_pushsum_round;
use proptest::prelude::*;

fn status() -> impl Strategy<Value = RunStatus> {
    prop_oneof![
        Just(RunStatus::Running),
        Just(RunStatus::Converged),
        Just(RunStatus::BudgetExhausted),
        Just(RunStatus::Diverged),
        Just(RunStatus::Completed),
    ]
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e300f64..1e300, -1.0f64..1.0, Just(0.0)]
}

fn trace_row() -> impl Strategy<Value = TraceRow> {
    (
        any::<u64>(),
        finite(),
        finite(),
        any::<u64>(),
        prop::option::of(finite()),
        status(),
        prop::option::of(finite()),
        prop::option::of(finite()),
    )
        .prop_map(|(t, psi_z, psi_x, bits_cum, objective, status, objective_mean, objective_agent0)| TraceRow {
            t,
            psi_z,
            psi_x,
            bits_cum,
            objective,
            status,
            objective_mean,
            objective_agent0,
        })
}

fn sweep_row() -> impl Strategy<Value = SweepRow> {
    (
        1usize..10_000,
        0.0f64..=1.0,
        prop_oneof![Just("omega".to_string()), Just("theorem1".to_string()), Just("manual:1".to_string())],
        prop::option::of(any::<u64>()),
        status(),
        any::<u64>(),
        0.0f64..=1.0,
    )
        .prop_map(|(n, omega, gamma_policy, rounds_to_eps, status, seed, gamma)| SweepRow {
            n,
            omega,
            gamma_policy,
            rounds_to_eps,
            status,
            seed,
            gamma,
        })
}

proptest! {
    #[test]
    fn trace_csv_round_trips(rows in prop::collection::vec(trace_row(), 0..20)) {
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        let back: Vec<TraceRow> = read_rows(buf.as_slice()).unwrap();
        prop_assert_eq!(back, rows);
    }

    #[test]
    fn sweep_csv_round_trips(rows in prop::collection::vec(sweep_row(), 0..20)) {
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        let back: Vec<SweepRow> = read_rows(buf.as_slice()).unwrap();
        prop_assert_eq!(back, rows);
    }
}

#[test]
fn identity_with_unit_gamma_matches_direct_pushsum() {
    let mut cfg = ExperimentConfig::consensus(TopologySpec::Ring { n: 8 }, CompressionSpec::identity());
    cfg.gamma = GammaPolicy::Manual { value: 1.0 };
    cfg.d = 5;
    cfg.rounds = Some(300);
    cfg.stop_at_eps = false;
    let setup = Setup::new(cfg).unwrap();
    let run = setup.run(4).unwrap();
    let mut state = setup.initial_state(4).unwrap();
    let mut bits = 0;
    for row in &run.trace[1..] {
        let tr = exact_pushsum_round(&mut state, &setup.mixing).unwrap();
        bits += tr.bits_sent;
        assert_eq!(row.t, tr.t);
        assert_eq!(row.bits_cum, bits);
        assert!((row.psi_z - tr.psi_z).abs() <= 1e-10 * tr.psi_z.max(1e-300).max(row.psi_z));
    }
    for (a, b) in run.final_state.z.iter().zip(&state.z) {
        assert!((a - b).abs() <= 1e-10);
    }
}

#[test]
fn replayed_runs_write_identical_files() {
    let mut cfg = ExperimentConfig::consensus(TopologySpec::Ring { n: 6 }, CompressionSpec::rand(0.3));
    cfg.d = 10;
    cfg.rounds = Some(500);
    cfg.seeds = vec![1, 2];
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        Setup::new(cfg.clone()).unwrap().run_to_dir(d.path(), "").unwrap();
    }
    for name in ["seed1.csv", "seed2.csv", "manifest.json"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between replays");
    }
    let manifest = Manifest::load(&dirs[0].path().join("manifest.json")).unwrap();
    assert_eq!(manifest.config_hash, cfg.hash());
    assert_eq!(manifest.seeds, vec![1, 2]);
    let rows: Vec<TraceRow> = load_rows(&dirs[0].path().join("seed1.csv")).unwrap();
    assert_eq!(rows[0].t, 0);
}

#[test]
fn manifest_records_the_spectral_profile() {
    let mut cfg = ExperimentConfig::consensus(TopologySpec::Ring { n: 10 }, CompressionSpec::top(0.2));
    cfg.gamma = GammaPolicy::Theorem1;
    cfg.d = 10;
    cfg.rounds = Some(10);
    let dir = tempfile::tempdir().unwrap();
    Setup::new(cfg).unwrap().run_to_dir(dir.path(), "").unwrap();
    let m = Manifest::load(&dir.path().join("manifest.json")).unwrap();
    assert!(m.spectral.delta.unwrap() > 0.0);
    assert!(m.spectral.kappa.unwrap() > 0.0);
    assert_eq!(m.spectral.phi.as_ref().unwrap().len(), 10);
    assert!(m.rho.unwrap() < 1.0);
}

#[test]
fn more_bandwidth_never_slows_consensus_down() {
    let omegas = [0.05, 0.1, 0.25, 0.5, 1.0];
    let mut base = ExperimentConfig::consensus(TopologySpec::Ring { n: 10 }, CompressionSpec::top(0.1));
    base.d = 20;
    base.eps = 1e-4;
    base.rounds = Some(200_000);
    let res = sweep_consensus(&[10, 16], &omegas, &[GammaPolicy::Omega], &base).unwrap();
    for n in [10, 16] {
        let rounds: Vec<u64> = omegas
            .iter()
            .map(|&w| {
                let row = res.get(n, w, "omega").next().unwrap();
                assert_eq!(row.status, RunStatus::Converged, "n={n} ω={w}");
                row.rounds_to_eps.unwrap()
            })
            .collect();
        // A cell may exceed its left neighbour, but never a cell two steps to its left.
        for i in 0..rounds.len() {
            for j in i + 2..rounds.len() {
                assert!(rounds[j] <= rounds[i], "n={n}: {rounds:?}");
            }
        }
        assert!(rounds[rounds.len() - 1] < rounds[0]);
    }
}
