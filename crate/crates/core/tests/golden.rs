//! Reference solves of the versioned fixture scenes.

use std::path::{Path, PathBuf};

use cmaxloc_core::synthbench::read_scene;
use cmaxloc_core::{solve, SolverConfig, VotingMode};
use serde::Deserialize;

#[derive(Deserialize)]
struct Tolerance {
    alpha_rad: f64,
    translation_m: f64,
}

#[derive(Deserialize)]
struct Case {
    scene: String,
    voting: String,
    alpha: f64,
    translation: [f64; 3],
    consensus_point_ids: Vec<usize>,
    consensus_line_ids: Vec<usize>,
    translation_cardinality: usize,
}

#[derive(Deserialize)]
struct Golden {
    schema: String,
    tolerance: Tolerance,
    cases: Vec<Case>,
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/v1")
}

#[test]
fn fixture_solves_match_the_reference_run() {
    let text = std::fs::read_to_string(fixtures().join("expected.json")).unwrap();
    let golden: Golden = serde_json::from_str(&text).unwrap();
    assert_eq!(golden.schema, "cmaxloc.golden/v1");
    for case in &golden.cases {
        let scene = read_scene(&fixtures().join(&case.scene)).unwrap();
        let voting_mode = match case.voting.as_str() {
            "prioritized" => VotingMode::Prioritized,
            "dimension-wise" => VotingMode::DimensionWise,
            other => panic!("unknown voting mode {other}"),
        };
        let config = SolverConfig {
            voting_mode,
            ..SolverConfig::default()
        };
        let r = solve(
            &scene.points,
            &scene.lines,
            &scene.prior,
            &scene.config.camera,
            &config,
            false,
        )
        .unwrap();
        let label = format!("{} / {}", case.scene, case.voting);
        assert!(
            (r.alpha - case.alpha).abs() <= golden.tolerance.alpha_rad,
            "{label}: alpha {}",
            r.alpha
        );
        for i in 0..3 {
            assert!(
                (r.pose.translation[i] - case.translation[i]).abs()
                    <= golden.tolerance.translation_m,
                "{label}: t {:?}",
                r.pose.translation
            );
        }
        assert_eq!(r.consensus_point_ids, case.consensus_point_ids, "{label}");
        assert_eq!(r.consensus_line_ids, case.consensus_line_ids, "{label}");
        assert_eq!(
            r.translation_cardinality, case.translation_cardinality,
            "{label}"
        );
    }
}

#[test]
fn prioritized_fixture_solves_recover_the_true_pose() {
    for name in ["points_50_outliers_50.json", "mixed_50_outliers_30.json"] {
        let scene = read_scene(&fixtures().join(name)).unwrap();
        let r = solve(
            &scene.points,
            &scene.lines,
            &scene.prior,
            &scene.config.camera,
            &SolverConfig::default(),
            false,
        )
        .unwrap();
        let err = cmaxloc_core::pose_error(&r.pose, &scene.true_pose);
        assert!(
            err.translation < 0.1 && err.rotation_deg < 0.5,
            "{name}: {err:?}"
        );
        let inliers: Vec<usize> = (0..scene.points.len())
            .filter(|&i| scene.point_inlier[i])
            .collect();
        assert!(
            inliers.iter().all(|i| r.consensus_point_ids.contains(i)),
            "{name}"
        );
    }
}
