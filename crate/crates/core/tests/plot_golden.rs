use std::path::{Path, PathBuf};

use sblab::cli::{cmd_plot, PlotArgs};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn render(input: &str, title: &str, seed: u64) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.svg");
    cmd_plot(&PlotArgs {
        input: fixture(input),
        output: Some(out.clone()),
        seed,
        title: Some(title.into()),
    })
    .unwrap();
    std::fs::read(out).unwrap()
}

#[test]
fn trajectory_fans_match_golden() {
    for name in ["traj_2d", "traj_1d", "empty"] {
        let golden = std::fs::read(fixture(&format!("golden_{name}.svg"))).unwrap();
        assert!(render(&format!("{name}.csv"), name, 11) == golden, "{name} differs from its golden file");
    }
}

#[test]
fn metrics_curve_matches_golden() {
    let golden = std::fs::read(fixture("golden_metrics.svg")).unwrap();
    assert!(render("run", "run", 0) == golden);
}

#[test]
fn seed_changes_the_drawn_subset() {
    assert!(render("traj_2d.csv", "t", 11) != render("traj_2d.csv", "t", 12));
    // with fewer paths than the cap, the seed is irrelevant
    assert!(render("traj_1d.csv", "t", 11) == render("traj_1d.csv", "t", 12));
}

#[test]
fn malformed_csv_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "path_id,k,x_0\n0,0,1.0\n0,2,1.0\n").unwrap();
    let err = cmd_plot(&PlotArgs {
        input: bad,
        output: None,
        seed: 0,
        title: None,
    })
    .unwrap_err();
    assert!(matches!(err, sblab::Error::Format { .. }), "{err}");
    assert_eq!(err.exit_code(), 4);
}
