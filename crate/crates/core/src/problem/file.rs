//! JSON problem files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    compile_functional, BlockAlphabets, FunctionalLaw, Metrics, ModelError, ProblemSpec,
    SideInfoLaw, SourceLaw,
};

/// On-disk layout of a problem. Unknown fields are rejected.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(rename = "L")]
    pub block_len: usize,
    pub alphabet_sizes: AlphabetSizes,
    pub source: SourceSection,
    pub vending: Vending,
    pub distortion: Vec<f64>,
    pub cost: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphabetSizes {
    #[serde(rename = "X")]
    pub x: Vec<usize>,
    #[serde(rename = "A")]
    pub a: Vec<usize>,
    #[serde(rename = "Y")]
    pub y: Vec<usize>,
    #[serde(rename = "Xhat")]
    pub xhat: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub px: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum Vending {
    Kernel {
        kernels: Vec<Vec<f64>>,
    },
    Functional {
        z_size: usize,
        pz: Vec<f64>,
        f: Vec<Vec<usize>>,
        g: Vec<Vec<usize>>,
    },
}

impl ProblemFile {
    pub fn into_spec(self) -> Result<ProblemSpec, ModelError> {
        let s = self.alphabet_sizes;
        if s.x.len() != self.block_len {
            return Err(ModelError::Alphabets(format!(
                "L = {} but X has {} slots",
                self.block_len,
                s.x.len()
            )));
        }
        let alphabets = BlockAlphabets::new(s.x, s.a, s.y, s.xhat)?;
        let side_info = match self.vending {
            Vending::Kernel { kernels } => SideInfoLaw::Kernel { tables: kernels },
            Vending::Functional { z_size, pz, f, g } => {
                SideInfoLaw::Functional(FunctionalLaw { z_size, pz, f, g })
            }
        };
        let px = match (self.source.px, &side_info) {
            (Some(px), _) => px,
            // Derived from (pz, f) when omitted; a malformed law leaves it
            // empty so `validate` reports both problems.
            (None, SideInfoLaw::Functional(law)) => compile_functional(law, &alphabets)
                .map(|c| c.source.px)
                .unwrap_or_default(),
            (None, SideInfoLaw::Kernel { .. }) => Vec::new(),
        };
        Ok(ProblemSpec {
            alphabets,
            source: SourceLaw { px },
            side_info,
            metrics: Metrics {
                distortion: self.distortion,
                cost: self.cost,
            },
        })
    }

    pub fn from_spec(spec: &ProblemSpec) -> Self {
        let al = &spec.alphabets;
        let vending = match &spec.side_info {
            SideInfoLaw::Kernel { tables } => Vending::Kernel {
                kernels: tables.clone(),
            },
            SideInfoLaw::Functional(law) => Vending::Functional {
                z_size: law.z_size,
                pz: law.pz.clone(),
                f: law.f.clone(),
                g: law.g.clone(),
            },
        };
        ProblemFile {
            block_len: al.block_len(),
            alphabet_sizes: AlphabetSizes {
                x: al.x_sizes().to_vec(),
                a: al.a_sizes().to_vec(),
                y: al.y_sizes().to_vec(),
                xhat: al.xhat_sizes().to_vec(),
            },
            source: SourceSection {
                px: Some(spec.source.px.clone()),
            },
            vending,
            distortion: spec.metrics.distortion.clone(),
            cost: spec.metrics.cost.clone(),
        }
    }
}

impl ProblemSpec {
    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str::<ProblemFile>(text)?.into_spec()
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ProblemFile::from_spec(self)).expect("plain data serializes")
    }
}
