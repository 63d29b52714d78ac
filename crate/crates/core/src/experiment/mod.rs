//! Reproducible experiment driver: scenarios, pipeline and artifacts.

mod compare;
mod output;
mod pipeline;
mod scenario;

pub use compare::{compare_runs, ComparisonReport, PairedMetric};
pub use output::{
    export_vectors, read_pgm, read_vector_csv, render_heatmap, with_suffix, write_json,
    write_source_overlay, write_vector_csv, ExportedPaths,
};
pub use pipeline::{
    analyze, count_peaks, gamma_settings, prepare, run_scenario, run_scenario_file, solve_prepared,
    solver_settings, CollectorInfo, Diagnostics, GammaSummary, GridShape, Prepared, RunManifest,
    RunOptions, RunReport, SolveInfo, SourceRecovery, COHERENCE_SAMPLES, SPURIOUS_LEVEL,
};
pub use scenario::{
    content_hash, Artifact, CollectorSpec, GammaSpec, Imaging, Scenario, SolverSpec, SourceSpec,
    TauSpec, SCENARIO_VERSION,
};

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        /// Scenario files shipped with the library, by name.
        pub const BUNDLED: &[(&str, &str)] = &[
            $(($name, include_str!(concat!("../../scenarios/", $name, ".json")))),*
        ];
    };
}

bundled!(
    "fig2_top",
    "fig2_bottom",
    "fig3_half_half",
    "fig3_half_quarter",
    "fig3_quarter_half",
    "fig3_quarter_quarter",
    "fig4",
    "fig5",
    "fig6_625",
    "fig6_1369",
    "fig7_625",
    "fig7_1369",
    "fig8",
);

/// Parses a bundled scenario; the second value is its content hash.
pub fn bundled_scenario(name: &str) -> crate::error::Result<(Scenario, String)> {
    let (_, text) = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| crate::error::Error::InvalidConfig(format!("no bundled scenario `{name}`")))?;
    Ok((Scenario::from_json(text)?, content_hash(text.as_bytes())))
}
