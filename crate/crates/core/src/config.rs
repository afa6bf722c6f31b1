//! Structured-text (TOML) input files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::ExperimentConfig;
use crate::mdp::{build_benchmark, BenchmarkParams, FiniteMdpSpec, MdpSchedule, Segment};

/// A system description: exactly one of `benchmark`, `spec` or `segments`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpecSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<BenchmarkParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<FiniteMdpSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<Segment>>,
    /// Path to another file holding one of the above.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec_file: Option<PathBuf>,
}

impl SpecSource {
    pub fn benchmark(params: BenchmarkParams) -> Self {
        SpecSource { benchmark: Some(params), ..Default::default() }
    }

    /// Resolves to a schedule; relative `spec_file` paths are taken from `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<MdpSchedule> {
        let given = [self.benchmark.is_some(), self.spec.is_some(), self.segments.is_some(), self.spec_file.is_some()]
            .iter()
            .filter(|x| **x)
            .count();
        if given != 1 {
            return Err(Error::invalid("give exactly one of [benchmark], [spec], [[segments]] or spec_file"));
        }
        if let Some(p) = &self.benchmark {
            return Ok(build_benchmark(p)?.into());
        }
        if let Some(s) = &self.spec {
            return Ok(s.clone().into());
        }
        if let Some(segs) = &self.segments {
            return MdpSchedule::new(segs.clone());
        }
        let path = base_dir.join(self.spec_file.as_ref().expect("counted above"));
        load_spec(&path)
    }
}

fn parent_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))
}

/// Loads a spec file.
pub fn load_spec(path: &Path) -> Result<MdpSchedule> {
    let src: SpecSource = toml::from_str(&read(path)?)?;
    if src.spec_file.is_some() {
        return Err(Error::invalid("spec files may not reference other spec files"));
    }
    src.resolve(&parent_dir(path))
}

/// Loads a homogeneous spec; rejects piecewise schedules.
pub fn load_homogeneous_spec(path: &Path) -> Result<FiniteMdpSpec> {
    let sched = load_spec(path)?;
    if !sched.is_homogeneous() {
        return Err(Error::invalid("this operation needs a time-homogeneous spec"));
    }
    Ok(sched.segments()[0].spec.clone())
}

/// An experiment file: grid settings plus the system description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentFile {
    #[serde(flatten)]
    pub experiment: ExperimentConfig,
    #[serde(flatten)]
    pub source: SpecSource,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

pub fn load_experiment(path: &Path) -> Result<(ExperimentFile, MdpSchedule)> {
    let file: ExperimentFile = toml::from_str(&read(path)?)?;
    let schedule = file.source.resolve(&parent_dir(path))?;
    Ok((file, schedule))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::Target;
    use std::io::Write;

    #[test]
    fn benchmark_spec_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "[benchmark]\nstay_prob = 0.5\n").unwrap();
        let sched = load_spec(f.path()).unwrap();
        assert_eq!(sched.state_count(), 33);
    }

    #[test]
    fn dense_spec_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            r#"[spec]
state_count = 2
kernel0 = [0.9, 0.1, 0.2, 0.8]
kernel1 = [0.5, 0.5, 0.5, 0.5]
outcome_mean = [[0.0, 1.0], [2.0, 3.0]]
noise_sd = 1.0
initial_dist = [1.0, 0.0]
"#
        )
        .unwrap();
        let spec = load_homogeneous_spec(f.path()).unwrap();
        assert_eq!(spec.kernel(0).get(1, 0), 0.2);
        assert_eq!(spec.outcome_mean(1, 1), 3.0);
    }

    #[test]
    fn bad_kernel_is_reported() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            r#"[spec]
state_count = 2
kernel0 = [0.9, 0.2, 0.2, 0.8]
kernel1 = [0.5, 0.5, 0.5, 0.5]
outcome_mean = [[0.0, 1.0], [2.0, 3.0]]
noise_sd = 1.0
initial_dist = [1.0, 0.0]
"#
        )
        .unwrap();
        assert!(matches!(load_spec(f.path()), Err(Error::Parse(_))));
    }

    #[test]
    fn ambiguous_source_rejected() {
        let src = SpecSource {
            benchmark: Some(BenchmarkParams::default()),
            spec_file: Some("x.toml".into()),
            ..Default::default()
        };
        assert!(src.resolve(Path::new(".")).is_err());
        assert!(SpecSource::default().resolve(Path::new(".")).is_err());
    }

    #[test]
    fn experiment_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        fs::write(
            &path,
            r#"
target = "gate"
horizons = [400, 800]
reps = 5
output = "out.csv"

[designs]
block_lengths = [40, 80]
burn_in = 0

[benchmark]
noise_sd = 2.0
"#,
        )
        .unwrap();
        let (file, sched) = load_experiment(&path).unwrap();
        assert_eq!(file.experiment.target, Target::Gate);
        assert_eq!(file.output, Some(PathBuf::from("out.csv")));
        assert_eq!(sched.segments()[0].spec.noise_sd(), 2.0);
    }
}
