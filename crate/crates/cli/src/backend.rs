use std::path::PathBuf;

use clap::{Args, ValueEnum};
use semcost::sensor::Noise;
use semcost::{FixtureBackend, FixtureRecord, HttpBackend, HttpConfig, MockBackend, SensorBackend, SensorError};
use serde::{Deserialize, Serialize};

pub type DynBackend = Box<dyn SensorBackend + Send>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    Mock,
    Fixture,
    Http,
}

#[derive(Debug, Clone, Args)]
pub struct BackendOpts {
    #[arg(long, value_enum, default_value = "mock")]
    pub backend: BackendChoice,
    /// Fixture file(s) for `--backend fixture`.
    #[arg(long = "fixtures")]
    pub fixtures: Vec<PathBuf>,
    #[arg(long, default_value = "https://api.openai.com")]
    pub base_url: String,
    #[arg(long, default_value = "gpt-3.5-turbo")]
    pub model: String,
}

impl BackendOpts {
    pub fn mock() -> Self {
        BackendOpts {
            backend: BackendChoice::Mock,
            fixtures: Vec::new(),
            base_url: HttpConfig::default().base_url,
            model: HttpConfig::default().model,
        }
    }

    pub fn http_config(&self) -> HttpConfig {
        HttpConfig {
            base_url: self.base_url.clone(),
            model: self.model.clone(),
            ..HttpConfig::default()
        }
    }

    pub fn build(&self, noise: Option<(Noise, u64)>) -> Result<DynBackend, SensorError> {
        build(self.backend, &self.fixtures, &self.http_config(), noise)
    }
}

pub fn load_fixtures(paths: &[PathBuf]) -> Result<Vec<FixtureRecord>, SensorError> {
    let mut records = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(p)
            .map_err(|e| SensorError::Config(format!("reading {}: {e}", p.display())))?;
        let mut r: Vec<FixtureRecord> = serde_json::from_str(&text)
            .map_err(|e| SensorError::Config(format!("fixture file {}: {e}", p.display())))?;
        records.append(&mut r);
    }
    Ok(records)
}

pub fn build(
    choice: BackendChoice,
    fixtures: &[PathBuf],
    http: &HttpConfig,
    noise: Option<(Noise, u64)>,
) -> Result<DynBackend, SensorError> {
    if noise.is_some() && choice != BackendChoice::Mock {
        return Err(SensorError::Config("noise is only available with the mock backend".into()));
    }
    Ok(match choice {
        BackendChoice::Mock => match noise {
            Some((n, seed)) => Box::new(MockBackend::construction().with_noise(n, seed)),
            None => Box::new(MockBackend::construction()),
        },
        BackendChoice::Fixture => {
            if fixtures.is_empty() {
                return Err(SensorError::Config("--backend fixture needs --fixtures FILE".into()));
            }
            Box::new(FixtureBackend::new(load_fixtures(fixtures)?))
        }
        BackendChoice::Http => Box::new(HttpBackend::from_env(http.clone())?),
    })
}
