use std::path::Path;

use sparse_imager::experiment::{
    bundled_scenario, compare_runs, export_vectors, read_pgm, read_vector_csv, render_heatmap,
    run_scenario, run_scenario_file, Artifact, RunManifest, RunOptions, RunReport, Scenario, BUNDLED,
};
use sparse_imager::linalg::{norm_inf, C64};
use sparse_imager::resolution::compute_vicinities;
use sparse_imager::solver::{split_solution, SolveResult};
use sparse_imager::Error;

const TINY: &str = r#"{
  "version": 1,
  "name": "tiny",
  "description": "Two sources on a small grid with a few noise collector columns.",
  "seed": 3,
  "imaging": {
    "planar": {
      "receivers": 5, "frequencies": 5, "aperture_ratio": 1.0, "bandwidth_ratio": 1.0,
      "range": 15.0, "rows": 11, "cols": 11, "spacing": 1.0
    }
  },
  "scene": [
    {"pixel": [2, 3], "amplitude": [1.0, 0.0]},
    {"pixel": [8, 7], "amplitude": [0.0, -1.0]}
  ],
  "snr_db": 20.0,
  "collector": {"kind": "unscreened", "sigma": 40},
  "solver": {"max_iters": 3000},
  "gamma": {"trials": 3},
  "outputs": ["image_csv", "collector_csv", "diagnostics", "heatmap_l1", "heatmap_l2", "sources", "matrix_bin", "collector_bin"]
}"#;

fn run_bundled(name: &str, dir: &Path) -> RunReport {
    let (s, hash) = bundled_scenario(name).unwrap();
    run_scenario(
        &s,
        &hash,
        &RunOptions {
            out_dir: dir.to_path_buf(),
            seed: None,
        },
    )
    .unwrap()
}

fn assert_complete(m: &RunManifest) {
    assert!(!m.artifacts.is_empty());
    for path in m.artifacts.values() {
        let len = std::fs::metadata(path).unwrap().len();
        assert!(len > 0, "{} is empty", path.display());
    }
}

fn rows_of(path: &Path) -> usize {
    read_vector_csv(path).unwrap().len()
}

#[test]
fn bundled_scenarios_parse_and_validate() {
    assert_eq!(BUNDLED.len(), 13);
    for (name, text) in BUNDLED {
        let s = Scenario::from_json(text).unwrap();
        assert_eq!(&s.name, name);
        assert!(s.description.contains("approximate"));
        let (_, hash) = bundled_scenario(name).unwrap();
        assert_eq!(hash.len(), 64);
    }
}

#[test]
fn malformed_json_reports_line_and_column() {
    let text = "{\n  \"version\": 1,\n  \"name\": \"x\",,\n}";
    match Scenario::from_json(text) {
        Err(Error::ScenarioParse { line, column, .. }) => {
            assert_eq!(line, 3);
            assert_eq!(column, 15);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn semantic_errors_name_the_field() {
    let bad_rows = TINY.replace("\"rows\": 11", "\"rows\": 0");
    let err = Scenario::from_json(&bad_rows).unwrap_err().to_string();
    assert!(err.contains("imaging"), "{err}");

    let off_grid = TINY.replace("[8, 7]", "[80, 7]");
    let err = Scenario::from_json(&off_grid).unwrap_err().to_string();
    assert!(err.contains("scene"), "{err}");

    let unknown = TINY.replace("\"seed\": 3", "\"seed\": 3, \"colour\": 1");
    let err = Scenario::from_json(&unknown).unwrap_err().to_string();
    assert!(err.contains("colour"), "{err}");
}

#[test]
fn heatmap_examples() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("z.pgm");
    render_heatmap(&[C64::new(0.0, 0.0); 12], 3, 4, &path).unwrap();
    let (rows, cols, px) = read_pgm(&path).unwrap();
    assert_eq!((rows, cols), (3, 4));
    assert!(px.iter().all(|&p| p == 0));

    let mut v = vec![C64::new(0.0, 0.0); 12];
    v[6] = C64::new(0.0, -2.0);
    render_heatmap(&v, 3, 4, &path).unwrap();
    let (_, _, px) = read_pgm(&path).unwrap();
    assert_eq!(px.iter().filter(|&&p| p == 255).count(), 1);
    assert_eq!(px[6], 255);
    assert!(std::fs::read(&path).unwrap().starts_with(b"P5 4 3 255\n"));

    // 255 * 0.5 + 0.5 = 128 exactly, so the half rounds up
    let w = [C64::new(1.0, 0.0), C64::new(0.5, 0.0)];
    render_heatmap(&w, 1, 2, &path).unwrap();
    assert_eq!(read_pgm(&path).unwrap().2, vec![255, 128]);

    assert!(matches!(
        render_heatmap(&w, 2, 2, &path),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn export_without_collector_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let result = SolveResult {
        solution: vec![C64::new(1.0, 2.0), C64::new(0.0, 0.0)],
        dual: vec![],
        residual_l2: 0.0,
        iterations: 1,
        converged: true,
        residual_history: vec![],
    };
    let paths = export_vectors(&result, 2, &dir.path().join("run"), &serde_json::json!({"k": 2})).unwrap();
    let text = std::fs::read_to_string(&paths.collector_csv).unwrap();
    assert_eq!(text, "index,real,imag,magnitude\r\n");
    assert_eq!(read_vector_csv(&paths.image_csv).unwrap(), result.solution);
    let (image, noise) = split_solution(&result, 2).unwrap();
    assert_eq!(image.len(), 2);
    assert!(noise.is_empty());
}

#[test]
fn tiny_run_is_complete_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("tiny.json");
    std::fs::write(&file, TINY).unwrap();
    let run = |sub: &str| {
        run_scenario_file(
            &file,
            &RunOptions {
                out_dir: dir.path().join(sub),
                seed: None,
            },
        )
        .unwrap()
    };
    let a = run("a");
    let b = run("b");
    assert_complete(&a.manifest);
    assert_eq!(a.manifest.artifacts.len(), 8);
    assert!(a.manifest_path.exists());
    assert_eq!(RunManifest::load(&a.manifest_path).unwrap().diagnostics, a.manifest.diagnostics);
    for (art, path) in &a.manifest.artifacts {
        let other = &b.manifest.artifacts[art];
        assert_eq!(std::fs::read(path).unwrap(), std::fs::read(other).unwrap(), "{art:?}");
    }
    assert_eq!(rows_of(&a.manifest.artifacts[&Artifact::ImageCsv]), 121);
    assert_eq!(rows_of(&a.manifest.artifacts[&Artifact::CollectorCsv]), 40);
    let d = &a.manifest.diagnostics;
    assert_eq!(d.gamma.as_ref().unwrap().trials, 3);
    assert_eq!(d.sources, 2);

    let reseeded = run_scenario_file(
        &file,
        &RunOptions {
            out_dir: dir.path().join("c"),
            seed: Some(4),
        },
    )
    .unwrap();
    assert_ne!(reseeded.manifest.diagnostics.data_norm, d.data_norm);

    let report = compare_runs(&a.manifest, &b.manifest).unwrap();
    for m in &report.metrics {
        if m.a != 0.0 {
            assert_eq!(m.ratio, Some(1.0), "{}", m.name);
        }
    }
}

#[test]
fn compare_rejects_different_grids() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("tiny.json");
    std::fs::write(&file, TINY).unwrap();
    let opts = |s: &str| RunOptions {
        out_dir: dir.path().join(s),
        seed: None,
    };
    let a = run_scenario_file(&file, &opts("a")).unwrap();
    std::fs::write(&file, TINY.replace("\"rows\": 11", "\"rows\": 12")).unwrap();
    let b = run_scenario_file(&file, &opts("b")).unwrap();
    assert!(matches!(
        compare_runs(&a.manifest, &b.manifest),
        Err(Error::Incompatible(_))
    ));
}

#[test]
fn fig2_scenarios_recover_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let top = run_bundled("fig2_top", dir.path());
    assert_complete(&top.manifest);
    let d = &top.manifest.diagnostics;
    assert!(d.exact_recovery && d.spurious == 0 && d.overlap_free);
    assert!(std::fs::read(&top.manifest.artifacts[&Artifact::HeatmapL1])
        .unwrap()
        .starts_with(b"P5 61 61 255\n"));

    let bottom = run_bundled("fig2_bottom", dir.path());
    let d = &bottom.manifest.diagnostics;
    assert!(d.exact_recovery, "{:?}", d.max_error);
    assert_eq!(d.sources, 8);
    assert!(d.migration_peaks < 8, "{}", d.migration_peaks);
}

#[test]
fn fig3_scenarios_run() {
    let dir = tempfile::tempdir().unwrap();
    for name in [
        "fig3_half_half",
        "fig3_half_quarter",
        "fig3_quarter_half",
        "fig3_quarter_quarter",
    ] {
        let r = run_bundled(name, dir.path());
        assert_complete(&r.manifest);
        assert_eq!(r.manifest.diagnostics.recovered_fraction, 1.0, "{name}");
    }
}

#[test]
fn fig4_collector_run_keeps_the_image_near_the_sources() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_bundled("fig4", dir.path());
    assert_complete(&r.manifest);
    assert_eq!(rows_of(&r.manifest.artifacts[&Artifact::ImageCsv]), 3721);
    assert_eq!(rows_of(&r.manifest.artifacts[&Artifact::CollectorCsv]), 12000);
    let d = &r.manifest.diagnostics;
    assert_eq!(d.recovered_fraction, 1.0);

    let k = r.prepared.k();
    let image = &r.result.solution[..k];
    let support = r.prepared.support();
    let vmap = compute_vicinities(&r.prepared.sensing.matrix, &support, support.len()).unwrap();
    let grass = (0..k)
        .filter(|&i| !vmap.contains(i))
        .map(|i| image[i].norm())
        .fold(0.0, f64::max);
    let weakest = support.iter().map(|&j| r.prepared.rho[j].norm()).fold(f64::INFINITY, f64::min);
    assert!(grass < 0.5 * weakest, "grass {grass} vs weakest source {weakest}");
    assert!(norm_inf(image) <= 2.0 * norm_inf(&r.prepared.rho));
}

#[test]
fn fig5_and_fig6_larger_data_makes_plain_l1_worse() {
    let dir = tempfile::tempdir().unwrap();
    let fig5 = run_bundled("fig5", dir.path());
    assert_complete(&fig5.manifest);

    let small = run_bundled("fig6_625", dir.path());
    let large = run_bundled("fig6_1369", dir.path());
    let report = compare_runs(&small.manifest, &large.manifest).unwrap();
    let inc = report.metric("incoherent_remainder").unwrap();
    assert!(inc.b > inc.a, "{inc:?}");
    assert!(inc.b > large.manifest.diagnostics.true_l1);
}

#[test]
fn fig7_collector_runs_recover_every_source_vicinity() {
    let dir = tempfile::tempdir().unwrap();
    let small = run_bundled("fig7_625", dir.path());
    let large = run_bundled("fig7_1369", dir.path());
    for r in [&small, &large] {
        assert_complete(&r.manifest);
        let d = &r.manifest.diagnostics;
        assert!(d.recovery.iter().all(|s| s.ratio >= 0.5), "{:?}", d.recovery);
    }
    let report = compare_runs(&small.manifest, &large.manifest).unwrap();
    assert_eq!(report.metric("recovered_fraction").unwrap().ratio, Some(1.0));
}

#[test]
fn fig8_runs_with_overlapping_vicinities() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_bundled("fig8", dir.path());
    assert_complete(&r.manifest);
    let d = &r.manifest.diagnostics;
    assert_eq!(d.sources, 8);
    assert!(!d.overlap_free);
    assert!(d.converged);
}
