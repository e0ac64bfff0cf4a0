use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which model an observation belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelVariant {
    Baseline,
    Sil,
    Til,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 3] = [ModelVariant::Baseline, ModelVariant::Sil, ModelVariant::Til];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelVariant::Baseline => "baseline",
            ModelVariant::Sil => "SIL",
            ModelVariant::Til => "TIL",
        }
    }

    /// Name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelVariant::Baseline => "EDT",
            ModelVariant::Sil => "EDT-SIL",
            ModelVariant::Til => "EDT-TIL",
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" | "edt" => Ok(ModelVariant::Baseline),
            "sil" | "edt-sil" => Ok(ModelVariant::Sil),
            "til" | "edt-til" => Ok(ModelVariant::Til),
            other => Err(Error::Config(format!("unknown model variant '{other}'"))),
        }
    }
}

