use std::path::{Path, PathBuf};

use ates_core::datagen::{DataGenSettings, ReturnTempSettings};
use ates_core::mpc::{heating_return_temp, OcpConfig};
use ates_core::plant::PlantParams;
use ates_core::sysid::Method;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkbenchConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Full plant parameter set; the reference plant for `seed` when absent.
    #[serde(default)]
    pub plant: Option<PlantParams>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub identification: IdentificationConfig,
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(default)]
    pub mpc: MpcConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub n_train: usize,
    pub n_val: usize,
    #[serde(default)]
    pub generation: DataGenSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentificationConfig {
    pub sigma: usize,
    pub p_max: usize,
    pub method: Method,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationConfig {
    pub horizon: usize,
    pub n_windows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcConfig {
    #[serde(default)]
    pub ocp: OcpConfig,
    /// CSV with `t_s,demand_W`; the built-in heating day when absent.
    #[serde(default)]
    pub demand_profile: Option<PathBuf>,
    pub steps: usize,
    pub transient_steps: usize,
    #[serde(default = "heating_return_temp")]
    pub return_temp: ReturnTempSettings,
}

impl Default for WorkbenchConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("ates-out"),
            plant: None,
            data: DataConfig::default(),
            identification: IdentificationConfig::default(),
            validation: ValidationConfig::default(),
            mpc: MpcConfig::default(),
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { n_train: 2900, n_val: 820, generation: DataGenSettings::default() }
    }
}

impl Default for IdentificationConfig {
    fn default() -> Self {
        Self { sigma: 3, p_max: 50, method: Method::CorLs }
    }
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self { horizon: 720, n_windows: 100 }
    }
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self { ocp: OcpConfig::default(), demand_profile: None, steps: 1440, transient_steps: 120, return_temp: heating_return_temp() }
    }
}

impl WorkbenchConfig {
    /// Reads `path` (or starts from the defaults) and applies `key.path=value`
    /// overrides; values are parsed as JSON and fall back to plain strings.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => serde_json::to_value(Self::default()).expect("default config serialises"),
        };
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: Self = serde_json::from_value(doc).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn plant_params(&self) -> PlantParams {
        self.plant.clone().unwrap_or_else(|| PlantParams::reference(self.seed))
    }

    pub fn check(&self) -> Result<(), CliError> {
        let id = &self.identification;
        if id.sigma == 0 || id.sigma > id.p_max {
            return Err(CliError::Config(format!("need 1 <= sigma <= P, got sigma = {}, P = {}", id.sigma, id.p_max)));
        }
        let plant = self.plant_params();
        if !(plant.dt > 0.0) {
            return Err(CliError::Config(format!("dt must be positive, got {}", plant.dt)));
        }
        plant.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.mpc.ocp.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.data.n_train == 0 || self.data.n_val == 0 {
            return Err(CliError::Config("dataset sizes must be positive".into()));
        }
        if self.validation.horizon == 0 || self.validation.n_windows == 0 {
            return Err(CliError::Config("validation horizon and window count must be positive".into()));
        }
        if let Some(p) = &self.mpc.demand_profile {
            if !p.is_file() {
                return Err(CliError::Config(format!("demand profile {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, without the output directory.
    pub fn hash(&self) -> String {
        let mut doc = serde_json::to_value(self).expect("config serialises");
        doc.as_object_mut().expect("config is an object").remove("output_dir");
        sha256_hex(doc.to_string().as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn apply_override(doc: &mut Value, entry: &str) -> Result<(), CliError> {
    let (key, raw) = entry.split_once('=').ok_or_else(|| CliError::Config(format!("override `{entry}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = match node {
            Value::Object(m) => m,
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut().expect("just set")
            }
            _ => return Err(CliError::Config(format!("`{key}`: `{part}` is not inside an object"))),
        };
        if i + 1 == parts.len() {
            obj.insert((*part).to_owned(), value);
            return Ok(());
        }
        node = obj.entry((*part).to_owned()).or_insert(Value::Null);
    }
    Err(CliError::Config(format!("empty override key in `{entry}`")))
}
