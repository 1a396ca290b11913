use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Line-of-sight classification of a received satellite signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "LOS")]
    Los,
    #[serde(rename = "NLOS")]
    Nlos,
}

impl Label {
    pub fn is_nlos(self) -> bool {
        self == Label::Nlos
    }

    /// `0.0` for LOS, `1.0` for NLOS.
    pub fn as_target(self) -> f64 {
        match self {
            Label::Los => 0.0,
            Label::Nlos => 1.0,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Los => "LOS",
            Label::Nlos => "NLOS",
        })
    }
}

impl FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "LOS" | "los" => Ok(Label::Los),
            "NLOS" | "nlos" => Ok(Label::Nlos),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}
