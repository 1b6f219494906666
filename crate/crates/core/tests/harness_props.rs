mod common;

use disentangle::environments::{generate_scenario, Method, ScenarioSpec};
use disentangle::harness::{
    self, bootstrap_ci, read_trials, render_map_svg, render_success_chart, success_rate, summarize, CountKey,
    Execution, ExperimentConfig, HarnessError, ResultsTable,
};
use disentangle::{FailureMap, Mode, Vec3};
use proptest::prelude::*;

#[test]
fn bootstrap_seven_of_ten_matches_reference() {
    let outcomes: Vec<bool> = (0..10).map(|i| i < 7).collect();
    for seed in [0u64, 1, 42, 9_999] {
        let (lo, hi) = bootstrap_ci(&outcomes, 1000, 0.95, seed);
        let (rlo, rhi) = common::bootstrap_reference(&outcomes, 1000, 0.95, seed);
        assert!((lo - rlo).abs() <= 1e-12 && (hi - rhi).abs() <= 1e-12, "({lo}, {hi}) vs ({rlo}, {rhi})");
        assert!(lo <= 0.7 && 0.7 <= hi);
    }
}

#[test]
fn degenerate_bootstrap() {
    assert_eq!(bootstrap_ci(&[true; 9], 1000, 0.95, 5), (1.0, 1.0));
    assert_eq!(bootstrap_ci(&[false; 9], 1000, 0.95, 5), (0.0, 0.0));
}

#[test]
fn ci_width_shrinks_with_more_trials() {
    let pattern = |n: usize| -> Vec<bool> { (0..n).map(|i| i % 2 == 0).collect() };
    for seed in 0..10u64 {
        let (a, b) = bootstrap_ci(&pattern(10), 1000, 0.95, seed);
        let (c, d) = bootstrap_ci(&pattern(100), 1000, 0.95, seed);
        assert!(d - c < b - a, "seed {seed}: width {} at 100 vs {} at 10", d - c, b - a);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn bootstrap_matches_reference_and_brackets_mean(
        outcomes in prop::collection::vec(any::<bool>(), 1..60),
        seed in any::<u64>(),
    ) {
        let (lo, hi) = bootstrap_ci(&outcomes, 200, 0.95, seed);
        let (rlo, rhi) = common::bootstrap_reference(&outcomes, 200, 0.95, seed);
        prop_assert!((lo - rlo).abs() <= 1e-12 && (hi - rhi).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&lo) && lo <= hi && hi <= 1.0);
        let m = success_rate(&outcomes);
        prop_assert!(lo <= m + 0.5 && m - 0.5 <= hi);
    }
}

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        Mode::TwoD,
        vec![0, 10],
        6,
        vec![
            Method::probabilistic(),
            Method::Hard { tau: 0.01 },
            Method::Hard { tau: 0.02 },
            Method::Epsilon { epsilon: 0.4 },
        ],
    );
    cfg.budget = 4;
    cfg.base_seed = 17;
    cfg.resamples = 200;
    cfg.dumps = true;
    cfg
}

#[test]
fn experiment_tables_are_consistent() {
    let cfg = small_config();
    let out = harness::run_experiment(&cfg, Execution::Parallel).unwrap();
    assert_eq!(out.trials.len(), cfg.counts.len() * cfg.methods.len() * cfg.trials);

    // free space: every method succeeds with its first path
    for m in &cfg.methods {
        let r = out.results.get(Mode::TwoD, CountKey::Count(0), &m.label(), 1).unwrap();
        assert_eq!(r.success_rate, 1.0, "{}", m.label());
    }

    let keys = [CountKey::Count(0), CountKey::Count(10), CountKey::All];
    for key in keys {
        for m in &cfg.methods {
            let mut prev = 0.0;
            for b in 1..=cfg.budget {
                let r = out.results.get(Mode::TwoD, key, &m.label(), b).unwrap();
                assert!(r.success_rate >= prev, "success within b must not fall");
                assert!(0.0 <= r.ci_lo && r.ci_lo <= r.success_rate && r.success_rate <= r.ci_hi && r.ci_hi <= 1.0);
                let expected = match key {
                    CountKey::All => cfg.trials * cfg.counts.len(),
                    _ => cfg.trials,
                };
                assert_eq!(r.trials, expected);
                prev = r.success_rate;
            }
        }
    }

    // per-trial rows reproduce the per-cell rates
    for m in &cfg.methods {
        for &count in &cfg.counts {
            let outcomes: Vec<bool> = out
                .trials
                .iter()
                .filter(|t| t.method == m.label() && t.obstacles == count)
                .map(|t| t.success && t.paths_executed <= 2)
                .collect();
            let r = out.results.get(Mode::TwoD, CountKey::Count(count), &m.label(), 2).unwrap();
            assert_eq!(r.success_rate, success_rate(&outcomes));
        }
    }

    // written artifacts read back identically and plot into parseable SVG
    let dir = tempfile::tempdir().unwrap();
    out.write_to(dir.path()).unwrap();
    assert_eq!(harness::load_results(dir.path()).unwrap(), out.results);
    let trials = read_trials(std::fs::File::open(dir.path().join("trials.csv")).unwrap()).unwrap();
    assert_eq!(trials, out.trials);
    let files = harness::plot_dir(dir.path()).unwrap();
    assert!(!files.is_empty());
    for f in files {
        let text = std::fs::read_to_string(&f).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", f.display()));
        assert_eq!(doc.root_element().tag_name().name(), "svg");
    }
}

#[test]
fn summary_echoes_table_with_ascending_counts() {
    let cfg = small_config();
    let out = harness::run_experiment(
        &ExperimentConfig {
            dumps: false,
            ..cfg.clone()
        },
        Execution::Sequential,
    )
    .unwrap();
    let text = summarize(&out.results);
    let header = text.lines().find(|l| l.starts_with("| method")).unwrap();
    assert_eq!(header, "| method | n=0 | n=10 | n=all |");
    for m in &cfg.methods {
        let line = text.lines().find(|l| l.starts_with(&format!("| {} |", m.label()))).unwrap();
        for key in [CountKey::Count(0), CountKey::Count(10), CountKey::All] {
            let r = out.results.at_budget(Mode::TwoD, key, &m.label()).unwrap();
            assert!(line.contains(&format!("{} [{}, {}]", r.success_rate, r.ci_lo, r.ci_hi)));
        }
    }
    assert!(text.contains("### sensitivity"));
    assert!(text.lines().any(|l| l.starts_with("- n=0 Hard: spread")));
}

#[test]
fn single_row_table_gives_single_cell_report() {
    let cfg = ExperimentConfig {
        budget: 1,
        ..ExperimentConfig::new(Mode::TwoD, vec![0], 1, vec![Method::probabilistic()])
    };
    let out = harness::run_experiment(&cfg, Execution::Sequential).unwrap();
    assert_eq!(out.trials.len(), 1);
    assert_eq!(out.results.rows.len(), 1);
    let text = summarize(&out.results);
    let rows: Vec<&str> = text.lines().filter(|l| l.starts_with("| Probabilistic")).collect();
    assert_eq!(rows, ["| Probabilistic | 1 [1, 1] |"]);
}

#[test]
fn csv_round_trip_rejects_wrong_schema() {
    let err = ResultsTable::read_csv("mode,obstacles\n".as_bytes()).unwrap_err();
    assert!(matches!(err, HarnessError::Schema { .. }));
}

/// Field rectangles of the map raster as (center x, center y, darkness).
fn field_cells(svg: &str) -> Vec<(f64, f64, f64)> {
    let doc = roxmltree::Document::parse(svg).unwrap();
    let group = doc
        .descendants()
        .find(|n| n.attribute("shape-rendering") == Some("crispEdges"))
        .unwrap();
    group
        .children()
        .filter(|n| n.has_tag_name("rect"))
        .map(|n| {
            let a = |k: &str| n.attribute(k).unwrap().parse::<f64>().unwrap();
            let fill = n.attribute("fill").unwrap();
            let g: f64 = fill.trim_start_matches("rgb(").split(',').next().unwrap().parse().unwrap();
            let w = a("width");
            (a("x") + w / 2.0, a("y") + a("height") / 2.0, (255.0 - g) * w)
        })
        .collect()
}

#[test]
fn empty_map_renders_a_uniform_field() {
    let env = generate_scenario(&ScenarioSpec::new(Mode::TwoD, 5), 3).unwrap();
    let svg = render_map_svg(&FailureMap::default(), &env, None).unwrap();
    assert!(field_cells(&svg).is_empty());
    assert_eq!(roxmltree::Document::parse(&svg).unwrap().root_element().tag_name().name(), "svg");
}

#[test]
fn one_record_darkens_the_far_side() {
    let env = generate_scenario(&ScenarioSpec::new(Mode::TwoD, 0), 3).unwrap();
    let map = FailureMap::default()
        .record_failure(Vec3::planar(0.0, 0.0), Vec3::planar(1.0, 0.0), None)
        .unwrap();
    let svg = render_map_svg(&map, &env, None).unwrap();
    let center = 300.0;
    let (ahead, behind) = field_cells(&svg).iter().fold((0.0, 0.0), |(a, b), &(x, _, d)| {
        if x > center {
            (a + d, b)
        } else {
            (a, b + d)
        }
    });
    assert!(ahead > 2.0 * behind, "ahead {ahead} vs behind {behind}");
}

#[test]
fn three_dimensional_maps_are_rejected_and_charts_parse() {
    let env = generate_scenario(&ScenarioSpec::new(Mode::ThreeD, 2), 3).unwrap();
    assert!(matches!(
        render_map_svg(&FailureMap::default(), &env, None),
        Err(HarnessError::UnsupportedMode(Mode::ThreeD))
    ));
    let cfg = ExperimentConfig {
        budget: 3,
        ..ExperimentConfig::new(Mode::TwoD, vec![0], 2, vec![Method::probabilistic(), Method::Epsilon { epsilon: 0.4 }])
    };
    let out = harness::run_experiment(&cfg, Execution::Sequential).unwrap();
    let chart = render_success_chart(&out.results, Mode::TwoD, CountKey::Count(0)).unwrap();
    roxmltree::Document::parse(&chart).unwrap();
    assert!(render_success_chart(&out.results, Mode::TwoD, CountKey::Count(7)).is_none());
}

#[test]
fn invalid_configs_are_rejected() {
    let base = ExperimentConfig::new(Mode::TwoD, vec![1], 1, vec![Method::probabilistic()]);
    for bad in [
        ExperimentConfig { trials: 0, ..base.clone() },
        ExperimentConfig { budget: 0, ..base.clone() },
        ExperimentConfig { counts: vec![1, 1], ..base.clone() },
        ExperimentConfig { methods: vec![], ..base.clone() },
    ] {
        assert!(matches!(harness::run_experiment(&bad, Execution::Sequential), Err(HarnessError::Config(_))));
    }
}
