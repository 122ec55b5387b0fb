//! Experiment orchestration: simulate, filter, analyze, emit artifacts,
//! and persist run metadata with content hashes.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use riccati_rank_core::diagnostics::{self, DiagnosticsFrame};
use riccati_rank_core::gramian::{uniform_observability_scan, ObservabilityScan};
use riccati_rank_core::kalman::{run_filter, FilterRun};
use riccati_rank_core::lyapunov::{qr_exponents, LyapunovResult};
use riccati_rank_core::spectral::{autonomous_nullspace_check, AutonomousNullspace};
use riccati_rank_core::system::{SystemSpec, RNG_ALGORITHM};
use riccati_rank_core::Trajectory;

use crate::config::{Experiment, RunConfig};
use crate::report::{self, ArtifactWriter, Series};
use crate::CliError;

/// Derivation constant for the observation-noise stream.
pub const NOISE_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// In-memory results of one experiment, before any files are written.
pub struct PipelineOutput {
    pub spec: SystemSpec,
    pub trajectory: Trajectory,
    pub lyapunov: LyapunovResult,
    pub run: FilterRun,
    pub frames: Vec<DiagnosticsFrame>,
    pub scan: ObservabilityScan,
    pub nullspace: Option<AutonomousNullspace>,
    pub noise_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RngMetadata {
    pub algorithm: String,
    pub seed: u64,
    pub noise_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GramianSummary {
    pub overall_min: f64,
    pub warn: bool,
    pub scanned_steps: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollapseSummary {
    pub eps: f64,
    /// First checkpoint at which the collapsed count reached `d - d0`.
    pub first_step_at_bound: Option<usize>,
    pub final_eps_rank: usize,
}

/// Everything a reader needs to audit one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub schema_version: u32,
    pub experiment: String,
    pub config: RunConfig,
    pub rng: RngMetadata,
    pub d0_measured: usize,
    /// Unstable-count implied by the constructed spectrum, when one was
    /// prescribed.
    pub d0_target: Option<usize>,
    pub exponents: Vec<f64>,
    pub gramian: GramianSummary,
    pub collapse: CollapseSummary,
    pub checks: Vec<CheckOutcome>,
    pub wall_seconds: f64,
    pub artifacts: Vec<ArtifactRecord>,
}

impl RunMetadata {
    pub fn all_checks_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn core_err(e: riccati_rank_core::Error) -> CliError {
    CliError::Numerical(e.to_string())
}

/// Run the full pipeline in memory: Lyapunov sweep, truth simulation,
/// filtering, per-checkpoint diagnostics, observability scan, and (for a
/// constant propagator) the autonomous null-space profile.
pub fn run_pipeline(config: &RunConfig) -> Result<PipelineOutput, CliError> {
    config.validate()?;
    let spec = config.to_system_spec()?;
    let noise_seed = spec.seed ^ NOISE_SEED_SALT;

    let lyapunov = qr_exponents(&spec, spec.horizon).map_err(core_err)?;
    let x0 = spec.sample_initial_state(noise_seed).map_err(core_err)?;
    let trajectory = spec.simulate_truth(&x0, noise_seed.wrapping_add(1)).map_err(core_err)?;

    let checkpoints = config.checkpoint_steps();
    let run = run_filter(&spec, &trajectory, &checkpoints).map_err(core_err)?;

    let frames: Vec<DiagnosticsFrame> = run
        .snapshots
        .iter()
        .map(|snap| {
            let state = &run.states[snap.step - 1];
            diagnostics::frame_at(snap, &state.forecast_cov, &state.analysis_cov, lyapunov.d0, config.eps)
        })
        .collect::<Result<_, _>>()
        .map_err(core_err)?;

    // Observability spot checks on up to ten windows across the run.
    let window_last = spec.horizon.saturating_sub(spec.state_dim).max(1);
    let stride = (window_last / 10).max(1);
    let scan_steps: Vec<usize> = (0..10).map(|k| 1 + k * stride).filter(|&n| n <= window_last).collect();
    let scan = uniform_observability_scan(&spec, &scan_steps).map_err(core_err)?;

    let nullspace = if matches!(config.experiment, Experiment::Aut30) {
        Some(autonomous_nullspace_check(&spec).map_err(core_err)?)
    } else {
        None
    };

    Ok(PipelineOutput { spec, trajectory, lyapunov, run, frames, scan, nullspace, noise_seed })
}

fn health_checks(config: &RunConfig, out: &PipelineOutput) -> Vec<CheckOutcome> {
    let mut checks = Vec::new();

    let worst_gain = out
        .run
        .metrics
        .iter()
        .map(|m| m.gain_identity_residual)
        .fold(0.0f64, f64::max);
    checks.push(CheckOutcome {
        name: "gain-identity".into(),
        passed: worst_gain <= 1e-9,
        detail: format!("max relative residual {worst_gain:.3e} (bound 1e-9)"),
    });

    let deltas: Vec<f64> = out.run.metrics.iter().map(|m| m.analysis_norm).collect();
    let (first, second) = deltas.split_at(deltas.len() / 2);
    let max_first = first.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
    let max_second = second.iter().cloned().fold(0.0f64, f64::max);
    checks.push(CheckOutcome {
        name: "bounded-covariance".into(),
        passed: max_second <= 10.0 * max_first,
        detail: format!("half-max ratio {:.3}", max_second / max_first),
    });

    let m_norms: Vec<f64> = out.run.metrics.iter().map(|m| m.m_norm).collect();
    let m_peak = m_norms.iter().cloned().fold(0.0f64, f64::max);
    checks.push(CheckOutcome {
        name: "closure-product-bounded".into(),
        passed: m_peak < 1e8,
        detail: format!("max closure norm {m_peak:.3e}"),
    });

    checks.push(CheckOutcome {
        name: "observability-scan".into(),
        passed: !out.scan.warn,
        detail: format!("min Gramian eigenvalue {:.3e}", out.scan.overall_min),
    });

    let d = out.spec.state_dim;
    let d0 = out.lyapunov.d0;
    if d0 < d {
        if let Some(last) = out.frames.last() {
            checks.push(CheckOutcome {
                name: "rank-collapse".into(),
                passed: last.eps_rank_delta >= d - d0,
                detail: format!(
                    "final collapsed count {} (bound {})",
                    last.eps_rank_delta,
                    d - d0
                ),
            });
            checks.push(CheckOutcome {
                name: "stable-restriction".into(),
                passed: last.restriction_delta <= config.eps && last.restriction_sigma <= config.eps,
                detail: format!(
                    "final restrictions {:.3e} / {:.3e} (eps {:.1e})",
                    last.restriction_delta, last.restriction_sigma, config.eps
                ),
            });
        }
    }
    if let Some(ns) = &out.nullspace {
        checks.push(CheckOutcome {
            name: "autonomous-nullspace".into(),
            passed: ns.restriction_delta <= config.eps,
            detail: format!("restriction onto stable space {:.3e}", ns.restriction_delta),
        });
    }
    checks
}

fn emit_artifacts(
    config: &RunConfig,
    out: &PipelineOutput,
    writer: &mut ArtifactWriter,
) -> Result<(), CliError> {
    let d = out.spec.state_dim;
    writer.write("diagnostics.csv", &report::diagnostics_csv(&out.frames, d))?;
    writer.write("exponents.csv", &report::exponents_csv(&out.lyapunov.history, d))?;
    writer.write("filter.csv", &report::filter_csv(&out.run.metrics))?;
    writer.write("gramian_scan.csv", &report::gramian_csv(&out.scan.per_step))?;
    if let Some(ns) = &out.nullspace {
        writer.write("autonomous.csv", &report::autonomous_csv(&ns.per_direction))?;
    }

    if config.emit_svg {
        let eig_series: Vec<Series> = (0..d)
            .map(|j| Series {
                name: if j < 12 { format!("eig {}", j + 1) } else { String::new() },
                points: out
                    .frames
                    .iter()
                    .map(|f| (f.step as f64, f.delta_eigs[j]))
                    .collect(),
            })
            .collect();
        writer.write(
            "eigenvalues.svg",
            &report::svg_line_plot(
                "analysis covariance eigenvalues",
                "step",
                "eigenvalue",
                &eig_series,
                true,
            ),
        )?;

        let proj_series: Vec<Series> = (0..d)
            .map(|j| Series {
                name: if j < 12 { format!("dir {}", j + 1) } else { String::new() },
                points: out
                    .frames
                    .iter()
                    .map(|f| (f.step as f64, f.proj_norms[j]))
                    .collect(),
            })
            .collect();
        writer.write(
            "projections.svg",
            &report::svg_line_plot(
                "projection norms onto propagator directions",
                "step",
                "norm",
                &proj_series,
                true,
            ),
        )?;

        let mut exp_series = vec![Series {
            name: "measured".into(),
            points: out
                .lyapunov
                .exponents
                .iter()
                .enumerate()
                .map(|(j, v)| ((j + 1) as f64, *v))
                .collect(),
        }];
        if let Some(spectrum) = &out.spec.spectrum {
            let mut targets: Vec<f64> = spectrum.iter().map(|s| s.abs().ln()).collect();
            targets.sort_by(|a, b| b.partial_cmp(a).unwrap());
            exp_series.push(Series {
                name: "target".into(),
                points: targets.iter().enumerate().map(|(j, v)| ((j + 1) as f64, *v)).collect(),
            });
        }
        writer.write(
            "exponents.svg",
            &report::svg_line_plot("Lyapunov exponents", "index", "exponent", &exp_series, false),
        )?;

        if let Some(ns) = &out.nullspace {
            let series = [Series {
                name: "projection".into(),
                points: ns
                    .per_direction
                    .iter()
                    .enumerate()
                    .map(|(j, v)| ((j + 1) as f64, *v))
                    .collect(),
            }];
            writer.write(
                "autonomous.svg",
                &report::svg_line_plot(
                    "restriction per eigendirection of the transposed propagator",
                    "eigendirection",
                    "norm",
                    &series,
                    true,
                ),
            )?;
        }
    }
    Ok(())
}

/// Run one experiment and write its artifacts under `out_dir`. Partial
/// outputs are removed on error.
pub fn run(config: &RunConfig, out_dir: &Path) -> Result<RunMetadata, CliError> {
    let start = Instant::now();
    let mut writer = ArtifactWriter::new(out_dir)?;
    match run_to_writer(config, &mut writer, start) {
        Ok(meta) => Ok(meta),
        Err(e) => {
            writer.discard_all();
            Err(e)
        }
    }
}

fn run_to_writer(
    config: &RunConfig,
    writer: &mut ArtifactWriter,
    start: Instant,
) -> Result<RunMetadata, CliError> {
    let out = run_pipeline(config)?;
    emit_artifacts(config, &out, writer)?;

    let checks = health_checks(config, &out);
    let d = out.spec.state_dim;
    let d0 = out.lyapunov.d0;
    let collapse = CollapseSummary {
        eps: config.eps,
        first_step_at_bound: out
            .frames
            .iter()
            .find(|f| d0 < d && f.eps_rank_delta >= d - d0)
            .map(|f| f.step),
        final_eps_rank: out.frames.last().map(|f| f.eps_rank_delta).unwrap_or(0),
    };
    let d0_target = out.spec.spectrum.as_ref().map(|s| s.iter().filter(|v| v.abs() >= 1.0).count());

    let mut metadata = RunMetadata {
        schema_version: crate::config::SCHEMA_VERSION,
        experiment: config.experiment.name().to_string(),
        config: config.clone(),
        rng: RngMetadata {
            algorithm: RNG_ALGORITHM.into(),
            seed: out.spec.seed,
            noise_seed: out.noise_seed,
        },
        d0_measured: d0,
        d0_target,
        exponents: out.lyapunov.exponents.clone(),
        gramian: GramianSummary {
            overall_min: out.scan.overall_min,
            warn: out.scan.warn,
            scanned_steps: out.scan.per_step.iter().map(|(n, _)| *n).collect(),
        },
        collapse,
        checks,
        wall_seconds: start.elapsed().as_secs_f64(),
        artifacts: Vec::new(),
    };

    metadata.artifacts = writer
        .hashes()?
        .into_iter()
        .map(|(path, sha256)| ArtifactRecord { path, sha256 })
        .collect();
    let json = serde_json::to_string_pretty(&metadata)
        .map_err(|e| CliError::Io(format!("metadata serialization: {e}")))?;
    writer.write("metadata.json", &json)?;
    Ok(metadata)
}

/// Run the same configuration across several seeds, each into its own
/// subdirectory; parallelism is capped by the `RICCATI_RANK_THREADS`
/// environment variable.
pub fn run_sweep(
    config: &RunConfig,
    seeds: &[u64],
    out_dir: &Path,
) -> Result<Vec<RunMetadata>, CliError> {
    let cap = std::env::var("RICCATI_RANK_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        });

    let mut results: Vec<Option<Result<RunMetadata, CliError>>> = Vec::new();
    results.resize_with(seeds.len(), || None);
    for chunk_start in (0..seeds.len()).step_by(cap) {
        let chunk_end = (chunk_start + cap).min(seeds.len());
        let outcomes: Vec<(usize, Result<RunMetadata, CliError>)> = std::thread::scope(|scope| {
            let handles: Vec<_> = (chunk_start..chunk_end)
                .map(|idx| {
                    let seed = seeds[idx];
                    let mut cfg = config.clone();
                    cfg.system.seed = seed;
                    let dir = out_dir.join(format!("seed-{seed:04}"));
                    scope.spawn(move || (idx, run(&cfg, &dir)))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
        });
        for (idx, outcome) in outcomes {
            results[idx] = Some(outcome);
        }
    }
    results
        .into_iter()
        .map(|r| r.expect("all seeds scheduled"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{preset_nonaut30, Experiment, GeneratorName, SystemConfig};
    use crate::config::{BoundsConfig, Delta0Config, RunConfig, SCHEMA_VERSION};

    fn tiny_config(seed: u64) -> RunConfig {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            experiment: Experiment::Custom,
            checkpoints: Some(vec![5, 10, 20, 40, 60]),
            eps: 1e-6,
            emit_svg: true,
            output_dir: None,
            system: SystemConfig {
                state_dim: 4,
                obs_dim: 2,
                horizon: 60,
                seed,
                generator: GeneratorName::RotatedDiagonal,
                spectrum: Some(vec![1.4, 1.1, 0.7, 0.4]),
                bounds: BoundsConfig { c_a: 1.4, c_h: 1.0, c_q: 1.0 },
                delta0: Delta0Config::default(),
                explicit: None,
            },
        }
    }

    #[test]
    fn pipeline_produces_consistent_shapes() {
        let config = tiny_config(11);
        let out = run_pipeline(&config).unwrap();
        assert_eq!(out.frames.len(), 5);
        assert_eq!(out.lyapunov.exponents.len(), 4);
        assert_eq!(out.run.states.len(), 60);
        assert_eq!(out.lyapunov.d0, 2);
    }

    #[test]
    fn run_writes_artifacts_and_checks_pass() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(11);
        let meta = run(&config, dir.path()).unwrap();
        assert!(meta.all_checks_passed(), "{:#?}", meta.checks);
        for name in ["diagnostics.csv", "exponents.csv", "filter.csv", "metadata.json"] {
            assert!(dir.path().join(name).exists(), "{name} missing");
        }
        // Hash list covers every artifact except the metadata itself.
        assert!(meta.artifacts.iter().any(|a| a.path == "diagnostics.csv"));
    }

    #[test]
    fn failed_runs_leave_no_partial_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(11);
        // Invalid: checkpoint past the horizon.
        config.checkpoints = Some(vec![10_000]);
        assert!(run(&config, dir.path()).is_err());
        let leftover: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert!(leftover.is_empty(), "partial outputs left behind: {leftover:?}");
    }

    #[test]
    fn sweep_runs_each_seed_in_its_own_directory() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(0);
        let metas = run_sweep(&config, &[3, 4], dir.path()).unwrap();
        assert_eq!(metas.len(), 2);
        assert!(dir.path().join("seed-0003/diagnostics.csv").exists());
        assert!(dir.path().join("seed-0004/diagnostics.csv").exists());
    }

    #[test]
    fn nonaut_preset_pipeline_matches_target_split() {
        let config = preset_nonaut30(42);
        let out = run_pipeline(&config).unwrap();
        assert_eq!(out.lyapunov.d0, 14, "exponents {:?}", out.lyapunov.exponents);
    }
}
