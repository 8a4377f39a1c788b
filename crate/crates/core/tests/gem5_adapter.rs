mod common;

use std::path::{Path, PathBuf};

use common::{cfg, space};
use dse_core::dsdb::{metric, ResultSource};
use dse_core::evaluator::*;

const STATS: &str = include_str!("../../../data/fixtures/stats.txt");
const MCPAT: &str = include_str!("../../../data/fixtures/mcpat.txt");

fn job(runs: &Path) -> Gem5JobSpec {
    Gem5JobSpec {
        binary_path: PathBuf::from("gem5.opt"),
        config_script: PathBuf::from("configs/l2.py"),
        workload: PathBuf::from("matmul"),
        flag_template: Gem5JobSpec::identity_flags(&space()),
        stats_path: PathBuf::from("m5out/stats.txt"),
        mcpat_output_path: PathBuf::from("mcpat.txt"),
        stats_key: DEFAULT_STATS_KEY.into(),
        mcpat_command: None,
        runs_dir: runs.to_path_buf(),
        live: false,
    }
}

#[test]
fn fixtures_parse_to_expected_values() {
    assert_eq!(parse_gem5_stats(STATS, DEFAULT_STATS_KEY).unwrap(), 0.1375);
    let p = parse_mcpat(MCPAT).unwrap();
    assert_eq!(p.runtime_dynamic, 0.05);
    assert_eq!(p.gate_leakage, 0.01);
    assert_eq!(p.subthreshold_leakage, 0.02);
}

#[test]
fn offline_backend_reads_job_directory() {
    let dir = tempfile::tempdir().unwrap();
    let spec = job(dir.path());
    let set = cfg("1MiB", "8", "32", "12", "LRURP");
    let work = spec.workdir(&set);
    std::fs::create_dir_all(work.join("m5out")).unwrap();
    std::fs::write(work.join("m5out/stats.txt"), STATS).unwrap();
    std::fs::write(work.join("mcpat.txt"), MCPAT).unwrap();

    let backend = Gem5Backend::new(spec, space()).unwrap();
    let r = backend.evaluate(&set).unwrap();
    assert_eq!(r.perf, 1.0 - 0.1375);
    assert_eq!(r.cost, 0.05 + 0.01 + 0.02);
    assert_eq!(r.source, ResultSource::Gem5);
    assert_eq!(r.components[metric::MISS_RATE], 0.1375);

    let other = cfg("2MiB", "8", "32", "12", "LRURP");
    assert!(matches!(backend.evaluate(&other), Err(EvalError::Io(_))));
}

#[test]
fn unmapped_parameters_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = job(dir.path());
    spec.flag_template.remove("l2_policy");
    assert_eq!(
        Gem5Backend::new(spec, space()).err(),
        Some(EvalError::UnmappedParam("l2_policy".into()))
    );
}

#[test]
fn command_line_follows_parameter_order() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = job(dir.path());
    spec.flag_template.insert("l2_size".into(), "l2_size_flag".into());
    let argv = build_gem5_command(&spec, &space(), &cfg("1MiB", "8", "32", "12", "LRURP")).unwrap();
    assert_eq!(
        argv,
        [
            "gem5.opt",
            "configs/l2.py",
            "--cmd=matmul",
            "--l2_size_flag=1MiB",
            "--l2_assoc=8",
            "--l2_mshrs=32",
            "--l2_mshr_tgts=12",
            "--l2_policy=LRURP",
        ]
    );
}

#[cfg(unix)]
fn script(path: &Path, body: &str) {
    use std::os::unix::fs::PermissionsExt;
    std::fs::write(path, format!("#!/bin/sh\nset -e\n{body}")).unwrap();
    std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o755)).unwrap();
}

#[cfg(unix)]
#[test]
fn live_mode_runs_simulator_and_power_model() {
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("fake-gem5");
    // Records its arguments and writes a stats dump into the working dir.
    script(
        &bin,
        "mkdir -p m5out\n\
         echo \"$@\" > argv.txt\n\
         echo 'system.l2cache.overallMissRate::total 0.25 # rate' > m5out/stats.txt\n",
    );
    let mcpat = dir.path().join("fake-mcpat");
    script(
        &mcpat,
        "test -f \"$2\"\n\
         printf '  Total L2s:\\n  Device Type= x\\n    Subthreshold Leakage = 0.5 W\\n    Gate Leakage = 0.25 W\\n    Runtime Dynamic = 0.125 W\\n' > \"$1/mcpat.txt\"\n",
    );

    let mut spec = job(&dir.path().join("runs"));
    spec.binary_path = bin;
    spec.mcpat_command = Some(vec![
        mcpat.display().to_string(),
        "{workdir}".into(),
        "{stats}".into(),
    ]);
    spec.live = true;
    let set = cfg("512KiB", "4", "16", "8", "FIFO");
    let backend = Gem5Backend::new(spec.clone(), space()).unwrap();
    let r = backend.evaluate(&set).unwrap();
    assert_eq!(r.perf, 0.75);
    assert_eq!(r.cost, 0.875);
    let argv = std::fs::read_to_string(spec.workdir(&set).join("argv.txt")).unwrap();
    assert!(argv.contains("--l2_policy=FIFO"));
    assert!(argv.contains("--cmd=matmul"));

    let mut failing = spec;
    failing.binary_path = dir.path().join("missing-binary");
    let backend = Gem5Backend::new(failing, space()).unwrap();
    assert!(matches!(backend.evaluate(&set), Err(EvalError::Subprocess { .. })));
}

#[test]
fn malformed_outputs_surface_as_errors() {
    assert!(matches!(
        parse_gem5_stats("system.l2cache.overallMissRate::total nan\n", DEFAULT_STATS_KEY),
        Err(EvalError::StatsValue { .. })
    ));
    assert!(matches!(
        parse_gem5_stats("system.l2cache.overallMissRate::cpu.data 0.1\n", DEFAULT_STATS_KEY),
        Err(EvalError::StatsKeyMissing(_))
    ));
    assert!(matches!(
        parse_mcpat("  Total L2s:\n    Runtime Dynamic = lots W\n"),
        Err(EvalError::McpatValue { .. })
    ));
}
