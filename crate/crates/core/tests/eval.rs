use rand::Rng;
use vot::eval::{
    build_suite, export_trajectory, metrics_csv, read_metrics_csv, read_trajectory_csv, run_suite,
    softspl, spl, success_rate, trajectory_csv, vo_error_csv, vo_error_report, EpisodeResult,
    Estimator, MetricsReport, NavConfig, Suite,
};
use vot::geometry::GoalVector;
use vot::io::read_netpbm;
use vot::training::{collect, CollectConfig};
use vot::world::{ActionId, EpisodeParams, FloorParams, NoiseModel, RenderConfig};

fn result(success: bool, shortest: f64, path: f64, d_goal: f64, d_init: f64) -> EpisodeResult {
    EpisodeResult {
        success,
        path_length: path,
        shortest,
        d_init,
        d_goal,
        steps: 0,
        collisions: 0,
        trajectory: Vec::new(),
        estimated: Vec::new(),
        goal_trace: Vec::new(),
        actions: Vec::new(),
        motions: Vec::new(),
    }
}

fn suite(n: usize) -> Suite {
    build_suite(FloorParams::default(), &[201, 202], n, 9, EpisodeParams::default()).unwrap()
}

fn nav(noise: NoiseModel) -> NavConfig {
    NavConfig { noise, threads: 1, ..NavConfig::default() }
}

#[test]
fn spl_and_softspl_hand_cases() {
    let rs = [result(true, 2.0, 4.0, 0.1, 2.0), result(true, 3.0, 3.0, 0.1, 3.0)];
    assert_eq!(spl(&rs), 0.75);
    assert_eq!(success_rate(&rs), 1.0);
    let soft = [result(false, 2.0, 4.0, 1.0, 4.0)];
    assert_eq!(softspl(&soft), 0.375);
    assert_eq!(spl(&soft), 0.0);
    // Ending further away than the start gives no credit.
    assert_eq!(softspl(&[result(false, 2.0, 4.0, 5.0, 4.0)]), 0.0);
    // A path shorter than the geodesic cannot score above 1.
    assert_eq!(spl(&[result(true, 2.0, 1.5, 0.0, 2.0)]), 1.0);
    assert_eq!(spl(&[]), 0.0);
}

#[test]
fn spl_never_exceeds_success_rate() {
    let mut rng = vot::rng::stream(44, 0);
    for _ in 0..1000 {
        let n = rng.gen_range(1..20);
        let rs: Vec<EpisodeResult> = (0..n)
            .map(|_| {
                let l = rng.gen_range(0.1..10.0);
                let d0 = rng.gen_range(0.1..10.0);
                result(rng.gen_bool(0.6), l, rng.gen_range(0.0..20.0), rng.gen_range(0.0..12.0), d0)
            })
            .collect();
        assert!(spl(&rs) <= success_rate(&rs) + 1e-15);
        assert!((0.0..=1.0).contains(&softspl(&rs)));
    }
}

#[test]
fn oracle_paths_coincide_and_goal_trace_matches_composition() {
    let s = suite(6);
    let results = run_suite(&s, &Estimator::Oracle, &nav(NoiseModel::default())).unwrap();
    for ((p, spec, _), r) in s.episodes.iter().zip(&results) {
        assert_eq!(r.trajectory.len(), r.estimated.len());
        for (t, e) in r.trajectory.iter().zip(&r.estimated) {
            assert!((t.position - e.position).norm() < 1e-9);
        }
        assert!(r.success, "plan {p}");
        for (g, e) in r.goal_trace.iter().zip(&r.estimated) {
            assert!((g.0 - e.to_local(spec.goal)).norm() < 1e-9);
        }
    }
}

#[test]
fn drift_accounting_for_a_noisy_blind_agent() {
    let s = suite(4);
    let results = run_suite(&s, &Estimator::Nominal, &nav(NoiseModel::default())).unwrap();
    let mut drifted = false;
    for ((_, spec, _), r) in s.episodes.iter().zip(&results) {
        // Composing the per-step estimates from the start reproduces the
        // final estimated goal vector.
        let mut g = GoalVector(spec.start.to_local(spec.goal));
        for (_, _, est) in &r.motions {
            g = vot::geometry::update_goal(g, *est);
        }
        assert!((g.0 - r.goal_trace.last().unwrap().0).norm() < 1e-9);
        assert_eq!(r.motions.len() + 1, r.trajectory.len());
        let last = r.trajectory.len() - 1;
        drifted |= (r.trajectory[last].position - r.estimated[last].position).norm() > 1e-6;
    }
    assert!(drifted);
}

#[test]
fn suites_are_deterministic_across_thread_counts() {
    let s = suite(6);
    let one = run_suite(&s, &Estimator::Nominal, &nav(NoiseModel::default())).unwrap();
    let again = run_suite(&s, &Estimator::Nominal, &nav(NoiseModel::default())).unwrap();
    let three = run_suite(&s, &Estimator::Nominal, &NavConfig { threads: 3, ..nav(NoiseModel::default()) }).unwrap();
    assert_eq!(one, again);
    assert_eq!(one, three);
    let rebuilt = suite(6);
    assert_eq!(s.episodes, rebuilt.episodes);
}

#[test]
fn trajectory_export_round_trips() {
    let s = suite(2);
    let results = run_suite(&s, &Estimator::Nominal, &nav(NoiseModel::default())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (i, ((p, spec, _), r)) in s.episodes.iter().zip(&results).enumerate() {
        let plan = &s.plans[*p];
        let stem = format!("ep{i}");
        export_trajectory(dir.path(), &stem, plan, spec.goal, r, 6).unwrap();
        let img = read_netpbm(&dir.path().join(format!("{stem}.ppm"))).unwrap();
        assert_eq!((img.width, img.height), (plan.width() * 6, plan.height() * 6));
        let text = std::fs::read_to_string(dir.path().join(format!("{stem}.csv"))).unwrap();
        assert_eq!(text, trajectory_csv(r));
        let poses = read_trajectory_csv(&text).unwrap();
        assert_eq!(poses.len(), r.trajectory.len());
        for ((t, e), (t0, e0)) in poses.iter().zip(r.trajectory.iter().zip(&r.estimated)) {
            assert!((t.position - t0.position).norm() < 1e-9 && (t.heading - t0.heading).abs() < 1e-9);
            assert!((e.position - e0.position).norm() < 1e-9 && (e.heading - e0.heading).abs() < 1e-9);
        }
    }
    assert!(read_trajectory_csv("h\n1,2,3\n").is_err());
}

#[test]
fn oracle_vo_errors_are_zero() {
    let cfg = CollectConfig { render: RenderConfig::with_size(16, 8), ..CollectConfig::default() };
    let data = collect(&cfg, &[5], 60, 1).unwrap();
    let rows = vo_error_report(&data, &Estimator::Oracle).unwrap();
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r.summary.mean == 0.0 && r.summary.p90 == 0.0));
    let csv = vo_error_csv(&rows);
    assert_eq!(csv.lines().count(), 10);
    let nominal = vo_error_report(&data, &Estimator::Nominal).unwrap();
    let fwd_z = nominal.iter().find(|r| r.action == ActionId::Forward && r.channel == "xi_z").unwrap();
    assert!(fwd_z.summary.mean > 0.0);
    assert!(fwd_z.summary.median <= fwd_z.summary.p90);
}

#[test]
fn metrics_csv_round_trips_bit_exactly() {
    let s = suite(4);
    let results = run_suite(&s, &Estimator::Nominal, &nav(NoiseModel::default())).unwrap();
    let reports = vec![
        MetricsReport::from_results("none", &results),
        MetricsReport { subset: "odd".into(), success: 0.1 + 0.2, spl: 1.0 / 3.0, ..MetricsReport::from_results("x", &results) },
    ];
    let text = metrics_csv(&reports);
    let back = read_metrics_csv(&text).unwrap();
    assert_eq!(back.len(), 2);
    for (a, b) in reports.iter().zip(&back) {
        assert_eq!(a.subset, b.subset);
        assert_eq!(a.success.to_bits(), b.success.to_bits());
        assert_eq!(a.spl.to_bits(), b.spl.to_bits());
        assert_eq!(a.softspl.to_bits(), b.softspl.to_bits());
        assert_eq!(a.d_goal_mean.to_bits(), b.d_goal_mean.to_bits());
        assert_eq!(a.episodes, b.episodes);
    }
    assert_eq!(metrics_csv(&back), text);
}
