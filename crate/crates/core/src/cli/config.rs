use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use super::CliError;
use crate::cell::{Model, DEFAULT_ALPHAS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Voronoi,
    Crofton,
    Both,
}

impl ModelChoice {
    pub fn models(self) -> Vec<Model> {
        match self {
            ModelChoice::Voronoi => vec![Model::Voronoi],
            ModelChoice::Crofton => vec![Model::Crofton],
            ModelChoice::Both => vec![Model::Voronoi, Model::Crofton],
        }
    }
}

impl FromStr for ModelChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "voronoi" => Ok(ModelChoice::Voronoi),
            "crofton" => Ok(ModelChoice::Crofton),
            "both" => Ok(ModelChoice::Both),
            other => Err(format!("unknown model '{other}' (voronoi, crofton, both)")),
        }
    }
}

impl fmt::Display for ModelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelChoice::Voronoi => "voronoi",
            ModelChoice::Crofton => "crofton",
            ModelChoice::Both => "both",
        })
    }
}

/// Run parameters. Every field is echoed into the summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub model: ModelChoice,
    pub r_values: Vec<f64>,
    pub replicates: u64,
    pub master_seed: u64,
    pub alphas: Vec<f64>,
    pub etas: Vec<f64>,
    /// Defect-measure samples per replicate; 0 picks `max(10⁴, 100 · germs)`.
    pub mc_defect_samples: usize,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses the machine parallelism.
    pub workers: usize,
    pub no_timestamp: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelChoice::Voronoi,
            r_values: vec![10.0, 20.0, 50.0],
            replicates: 100,
            master_seed: 1,
            alphas: DEFAULT_ALPHAS.to_vec(),
            etas: vec![0.1, 0.25, 0.5],
            mc_defect_samples: 0,
            output_dir: PathBuf::from("out"),
            workers: 0,
            no_timestamp: false,
        }
    }
}

pub const PRESETS: [&str; 3] = ["voronoi-sweep", "crofton-sweep", "duality"];

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self, CliError> {
        let base = ExperimentConfig::default();
        Ok(match name {
            "voronoi-sweep" => ExperimentConfig {
                model: ModelChoice::Voronoi,
                r_values: vec![10.0, 20.0, 50.0, 100.0, 200.0],
                replicates: 300,
                ..base
            },
            "crofton-sweep" => ExperimentConfig {
                model: ModelChoice::Crofton,
                r_values: vec![10.0, 30.0, 100.0, 300.0, 1000.0],
                replicates: 300,
                ..base
            },
            "duality" => ExperimentConfig {
                model: ModelChoice::Voronoi,
                r_values: vec![2.0, 5.0, 10.0, 20.0],
                replicates: 250,
                ..base
            },
            other => {
                return Err(CliError::Usage(format!(
                    "unknown preset '{other}' (one of {})",
                    PRESETS.join(", ")
                )))
            }
        })
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are ignored;
    /// lists are comma separated.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("line {}: expected key = value", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| CliError::Usage(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "model" => self.model = value.parse()?,
            "r_values" | "r" => self.r_values = parse_list(value)?,
            "replicates" => self.replicates = parse_num(value)?,
            "master_seed" | "seed" => self.master_seed = parse_num(value)?,
            "alphas" => self.alphas = parse_list(value)?,
            "etas" => self.etas = parse_list(value)?,
            "mc_defect_samples" => self.mc_defect_samples = parse_num(value)?,
            "output_dir" | "out" => self.output_dir = PathBuf::from(value),
            "workers" => self.workers = parse_num(value)?,
            "no_timestamp" => self.no_timestamp = parse_num(value)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: String| Err(CliError::Usage(m));
        if self.r_values.is_empty() {
            return fail("r_values is empty".into());
        }
        if self.r_values.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return fail(format!("r_values must be positive: {:?}", self.r_values));
        }
        if self.r_values.windows(2).any(|w| w[0] >= w[1]) {
            return fail(format!("r_values must be strictly increasing: {:?}", self.r_values));
        }
        if self.replicates == 0 {
            return fail("replicates must be at least 1".into());
        }
        if self.alphas.iter().any(|a| !(0.0..2.0 / 3.0).contains(a)) {
            return fail(format!("alphas must lie in [0, 2/3): {:?}", self.alphas));
        }
        if self.etas.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return fail(format!("etas must be positive: {:?}", self.etas));
        }
        if self.mc_defect_samples != 0 && self.mc_defect_samples < 1000 {
            return fail("mc_defect_samples must be 0 (auto) or at least 1000".into());
        }
        Ok(())
    }
}

fn parse_num<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    s.trim().parse().map_err(|e| format!("bad value '{s}': {e}"))
}

pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(parse_num)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_key_value_text() {
        let mut c = ExperimentConfig::default();
        c.apply_text(
            "# sweep\nmodel = crofton\nr_values = 10, 30,100\nreplicates=7 # inline\nseed = 42\nno_timestamp = true\n",
        )
        .unwrap();
        assert_eq!(c.model, ModelChoice::Crofton);
        assert_eq!(c.r_values, vec![10.0, 30.0, 100.0]);
        assert_eq!((c.replicates, c.master_seed, c.no_timestamp), (7, 42, true));
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_input() {
        let mut c = ExperimentConfig::default();
        assert!(c.apply_text("colour = blue").is_err());
        assert!(c.apply_text("replicates").is_err());
        assert!(c.apply_text("replicates = many").is_err());
        c.r_values = vec![20.0, 10.0];
        assert!(c.validate().is_err());
        c.r_values = vec![10.0];
        c.alphas = vec![0.7];
        assert!(c.validate().is_err());
        c.alphas = vec![0.5];
        c.replicates = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn presets_validate() {
        for p in PRESETS {
            ExperimentConfig::preset(p).unwrap().validate().unwrap();
        }
        assert!(ExperimentConfig::preset("nope").is_err());
    }
}
