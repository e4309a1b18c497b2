#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use whichcountry_core::engine::{Engine, EngineConfig};
use whichcountry_core::evalkit::DatasetManifest;
use whichcountry_core::synth::{generate, SynthConfig, SynthCorpus};
use whichcountry_core::training::build_configured_profiles;

/// Small synthetic corpus with every profile kind built; shared by the
/// tests of one binary and removed with the process's temp directory.
pub struct Corpus {
    _dir: tempfile::TempDir,
    pub paths: SynthCorpus,
}

impl Corpus {
    pub fn root(&self) -> &Path {
        &self.paths.root
    }

    pub fn config(&self) -> EngineConfig {
        EngineConfig::load(&self.paths.config).unwrap()
    }

    pub fn engine(&self) -> Engine {
        Engine::from_config(&self.config()).unwrap()
    }

    pub fn query(&self) -> DatasetManifest {
        DatasetManifest::load(&self.paths.query).unwrap()
    }

    pub fn query_path(&self, k: usize) -> PathBuf {
        self.query().items[k].path.clone()
    }
}

pub fn synth_config() -> SynthConfig {
    SynthConfig {
        width: 256,
        train_per_country: 2,
        query_per_country: 2,
        dev_per_country: 1,
        ..SynthConfig::default()
    }
}

pub fn corpus() -> &'static Corpus {
    static CORPUS: OnceLock<Corpus> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let paths = generate(&dir.path().join("corpus"), &synth_config()).unwrap();
        let config = EngineConfig::load(&paths.config).unwrap();
        build_configured_profiles(&config, &DatasetManifest::load(&paths.train).unwrap()).unwrap();
        Corpus { _dir: dir, paths }
    })
}

/// Structural JSON equality with a relative tolerance on numbers.
pub fn json_close(a: &serde_json::Value, b: &serde_json::Value, tol: f64, at: &str) -> Result<(), String> {
    use serde_json::Value;
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            if (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0) {
                Ok(())
            } else {
                Err(format!("{at}: {x} != {y}"))
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                return Err(format!("{at}: length {} != {}", x.len(), y.len()));
            }
            for (i, (p, q)) in x.iter().zip(y).enumerate() {
                json_close(p, q, tol, &format!("{at}[{i}]"))?;
            }
            Ok(())
        }
        (Value::Object(x), Value::Object(y)) => {
            let kx: Vec<_> = x.keys().collect();
            let ky: Vec<_> = y.keys().collect();
            if kx != ky {
                return Err(format!("{at}: keys {kx:?} != {ky:?}"));
            }
            for (k, p) in x {
                json_close(p, &y[k], tol, &format!("{at}.{k}"))?;
            }
            Ok(())
        }
        _ if a == b => Ok(()),
        _ => Err(format!("{at}: {a} != {b}")),
    }
}
