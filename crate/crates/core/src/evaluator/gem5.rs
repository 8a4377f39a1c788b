//! gem5 + McPAT adapter.
//!
//! Each configuration gets its own working directory `runs/<canonical key>/`.
//! When `live` is off the adapter only reads the stats and McPAT files that
//! are already in that directory; when on, it first runs gem5 (and the
//! optional McPAT command) there.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::design_space::{DesignSpace, ParametersSet, Violation};
use crate::dsdb::{EvalResult, ResultSource};

use super::{EvalError, EvaluatorBackend};

/// Suffix matched against stat names to find the L2 miss rate.
pub const DEFAULT_STATS_KEY: &str = "l2cache.overallMissRate::total";

fn default_stats_key() -> String {
    DEFAULT_STATS_KEY.to_string()
}

fn default_runs_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gem5JobSpec {
    pub binary_path: PathBuf,
    pub config_script: PathBuf,
    pub workload: PathBuf,
    /// Parameter name to command-line flag name (without leading dashes).
    pub flag_template: BTreeMap<String, String>,
    /// Relative paths resolve against the job's working directory.
    pub stats_path: PathBuf,
    pub mcpat_output_path: PathBuf,
    #[serde(default = "default_stats_key")]
    pub stats_key: String,
    /// Run per job after gem5. `{workdir}` and `{stats}` are substituted.
    #[serde(default)]
    pub mcpat_command: Option<Vec<String>>,
    #[serde(default = "default_runs_dir")]
    pub runs_dir: PathBuf,
    #[serde(default)]
    pub live: bool,
}

impl Gem5JobSpec {
    /// Flag mapping where every parameter is passed under its own name.
    pub fn identity_flags(space: &DesignSpace) -> BTreeMap<String, String> {
        space
            .params()
            .iter()
            .map(|p| (p.name().to_string(), p.name().to_string()))
            .collect()
    }

    pub fn unmapped_params(&self, space: &DesignSpace) -> Vec<String> {
        space
            .params()
            .iter()
            .filter(|p| !self.flag_template.contains_key(p.name()))
            .map(|p| p.name().to_string())
            .collect()
    }

    pub fn workdir(&self, set: &ParametersSet) -> PathBuf {
        self.runs_dir.join(set.canonical_key())
    }
}

/// `[binary, config_script, --cmd=<workload>, --<flag>=<value>...]`, flags
/// in parameter order. Pure.
pub fn build_gem5_command(
    spec: &Gem5JobSpec,
    space: &DesignSpace,
    set: &ParametersSet,
) -> Result<Vec<String>, EvalError> {
    let mut argv = vec![
        spec.binary_path.display().to_string(),
        spec.config_script.display().to_string(),
        format!("--cmd={}", spec.workload.display()),
    ];
    for p in space.params() {
        let flag = spec
            .flag_template
            .get(p.name())
            .ok_or_else(|| EvalError::UnmappedParam(p.name().to_string()))?;
        let value = set
            .get(p.name())
            .ok_or_else(|| EvalError::InvalidSet(vec![Violation::MissingParam(p.name().into())]))?;
        argv.push(format!("--{flag}={value}"));
    }
    Ok(argv)
}

fn key_matches(name: &str, key: &str) -> bool {
    name == key
        || name
            .strip_suffix(key)
            .is_some_and(|head| head.ends_with('.'))
}

/// Extracts the miss rate from a gem5 `stats.txt` dump. The first line
/// whose stat name equals `key` or ends with `.<key>` wins.
pub fn parse_gem5_stats(text: &str, key: &str) -> Result<f64, EvalError> {
    for line in text.lines() {
        let content = line.split('#').next().unwrap_or("");
        let mut fields = content.split_whitespace();
        let (Some(name), Some(value)) = (fields.next(), fields.next()) else {
            continue;
        };
        if !key_matches(name, key) {
            continue;
        }
        return match value.parse::<f64>() {
            Ok(v) if v.is_finite() && (0.0..=1.0).contains(&v) => Ok(v),
            _ => Err(EvalError::StatsValue {
                key: name.to_string(),
                value: value.to_string(),
            }),
        };
    }
    Err(EvalError::StatsKeyMissing(key.to_string()))
}

/// Minimal stats dump carrying one miss rate, in gem5's layout.
pub fn render_gem5_stats(miss_rate: f64) -> String {
    format!(
        "\n---------- Begin Simulation Statistics ----------\n\
         simSeconds                                   0.000412                       # Number of seconds simulated (Second)\n\
         system.l2cache.overallMissRate::total    {miss_rate:<width$} # miss rate for overall accesses ((Count/Count))\n\
         ---------- End Simulation Statistics   ----------\n",
        width = 30
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McpatPower {
    pub runtime_dynamic: f64,
    pub gate_leakage: f64,
    pub subthreshold_leakage: f64,
}

impl McpatPower {
    pub fn total(&self) -> f64 {
        self.runtime_dynamic + self.gate_leakage + self.subthreshold_leakage
    }
}

fn indent(line: &str) -> usize {
    line.len() - line.trim_start().len()
}

/// Reads the three L2 power figures from the `Total L2s` block of a McPAT
/// report.
pub fn parse_mcpat(text: &str) -> Result<McpatPower, EvalError> {
    let mut lines = text.lines();
    let header_indent = loop {
        let line = lines.next().ok_or(EvalError::McpatBlockMissing)?;
        if line.trim_start().starts_with("Total L2s") {
            break indent(line);
        }
    };

    let mut fields: [Option<f64>; 3] = [None; 3];
    const NAMES: [&str; 3] = ["Runtime Dynamic", "Gate Leakage", "Subthreshold Leakage"];
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        // The block runs until the next section header at the same depth;
        // `Device Type=` lines sit at the header's indent.
        if indent(line) <= header_indent && !line.contains('=') {
            break;
        }
        let Some((name, value)) = line.split_once('=') else {
            continue;
        };
        let Some(slot) = NAMES.iter().position(|n| *n == name.trim()) else {
            continue;
        };
        if fields[slot].is_some() {
            continue;
        }
        let value = value.trim();
        let number = value.strip_suffix('W').unwrap_or(value).trim();
        fields[slot] = Some(number.parse().map_err(|_| EvalError::McpatValue {
            field: NAMES[slot],
            value: value.to_string(),
        })?);
    }

    let get = |i: usize| fields[i].ok_or(EvalError::McpatFieldMissing(NAMES[i]));
    Ok(McpatPower {
        runtime_dynamic: get(0)?,
        gate_leakage: get(1)?,
        subthreshold_leakage: get(2)?,
    })
}

/// A McPAT-style report with only the processor header and the L2 block.
pub fn render_mcpat(power: &McpatPower) -> String {
    format!(
        "McPAT (version 1.3 of Feb, 2015) results (current print level is 2)\n\
         *****************************************************************************************\n\
         \x20 Technology 22 nm\n\
         \x20 Total L2s:\n\
         \x20 Device Type= ITRS high performance device type\n\
         \x20     Area = 3.13 mm^2\n\
         \x20     Peak Dynamic = 0.61 W\n\
         \x20     Subthreshold Leakage = {} W\n\
         \x20     Subthreshold Leakage with power gating = 0.001 W\n\
         \x20     Gate Leakage = {} W\n\
         \x20     Runtime Dynamic = {} W\n\
         \n\
         \x20 Total First Level Directory:\n\
         \x20     Runtime Dynamic = 0 W\n",
        power.subthreshold_leakage, power.gate_leakage, power.runtime_dynamic
    )
}

pub struct Gem5Backend {
    spec: Gem5JobSpec,
    space: DesignSpace,
}

impl Gem5Backend {
    pub fn new(spec: Gem5JobSpec, space: DesignSpace) -> Result<Self, EvalError> {
        if let Some(p) = spec.unmapped_params(&space).into_iter().next() {
            return Err(EvalError::UnmappedParam(p));
        }
        Ok(Gem5Backend { spec, space })
    }

    pub fn spec(&self) -> &Gem5JobSpec {
        &self.spec
    }

    fn resolve(workdir: &Path, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            workdir.join(path)
        }
    }

    fn run(argv: &[String], workdir: &Path) -> Result<(), EvalError> {
        let command = argv.join(" ");
        let (program, args) = argv.split_first().ok_or_else(|| EvalError::Subprocess {
            command: command.clone(),
            message: "empty command".into(),
        })?;
        let out = Command::new(program)
            .args(args)
            .current_dir(workdir)
            .output()
            .map_err(|e| EvalError::Subprocess {
                command: command.clone(),
                message: e.to_string(),
            })?;
        if !out.status.success() {
            let stderr = String::from_utf8_lossy(&out.stderr);
            return Err(EvalError::Subprocess {
                command,
                message: format!("{} {}", out.status, stderr.trim()),
            });
        }
        Ok(())
    }
}

impl EvaluatorBackend for Gem5Backend {
    fn name(&self) -> &str {
        "gem5"
    }

    fn evaluate(&self, set: &ParametersSet) -> Result<EvalResult, EvalError> {
        let violations = self.space.validate(set);
        if !violations.is_empty() {
            return Err(EvalError::InvalidSet(violations));
        }
        let workdir = self.spec.workdir(set);
        let stats_path = Self::resolve(&workdir, &self.spec.stats_path);
        let mcpat_path = Self::resolve(&workdir, &self.spec.mcpat_output_path);

        if self.spec.live {
            std::fs::create_dir_all(&workdir).map_err(|e| EvalError::Io(e.to_string()))?;
            let argv = build_gem5_command(&self.spec, &self.space, set)?;
            Self::run(&argv, &workdir)?;
            if let Some(template) = &self.spec.mcpat_command {
                let argv: Vec<String> = template
                    .iter()
                    .map(|a| {
                        a.replace("{workdir}", &workdir.display().to_string())
                            .replace("{stats}", &stats_path.display().to_string())
                    })
                    .collect();
                Self::run(&argv, &workdir)?;
            }
        }

        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|e| EvalError::Io(format!("{}: {e}", p.display())))
        };
        let miss = parse_gem5_stats(&read(&stats_path)?, &self.spec.stats_key)?;
        let power = parse_mcpat(&read(&mcpat_path)?)?;
        Ok(EvalResult::from_components(
            miss,
            power.runtime_dynamic,
            power.gate_leakage,
            power.subthreshold_leakage,
            ResultSource::Gem5,
        ))
    }
}
