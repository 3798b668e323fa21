//! Single-file JSON storage for a trained reduced model.
//!
//! Floating-point arrays are stored as base64 of little-endian `f64` bytes so a
//! round trip is bitwise exact.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::EstimatorData;
use crate::fem::AffineSystem;
use crate::rb::{Provenance, ReducedBasis, ReducedModel};

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EncodedArray {
    rows: usize,
    cols: usize,
    /// Column-major.
    data: String,
}

fn encode(rows: usize, cols: usize, values: &[f64]) -> EncodedArray {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    EncodedArray {
        rows,
        cols,
        data: STANDARD.encode(bytes),
    }
}

fn decode(array: &EncodedArray) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(&array.data)
        .map_err(|e| Error::Artifact(format!("bad base64 payload: {e}")))?;
    if bytes.len() != 8 * array.rows * array.cols {
        return Err(Error::Artifact(format!(
            "payload holds {} bytes, expected {}x{} doubles",
            bytes.len(),
            array.rows,
            array.cols
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn encode_matrix(m: &DMatrix<f64>) -> EncodedArray {
    encode(m.nrows(), m.ncols(), m.as_slice())
}

fn decode_matrix(a: &EncodedArray) -> Result<DMatrix<f64>> {
    Ok(DMatrix::from_vec(a.rows, a.cols, decode(a)?))
}

fn encode_vector(v: &DVector<f64>) -> EncodedArray {
    encode(v.len(), 1, v.as_slice())
}

fn decode_vector(a: &EncodedArray) -> Result<DVector<f64>> {
    if a.cols != 1 {
        return Err(Error::Artifact(format!("expected a column vector, got {} columns", a.cols)));
    }
    Ok(DVector::from_vec(decode(a)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    format_version: u32,
    /// Hash of the full-order system the model was trained on.
    pub system_hash: String,
    pub num_components: usize,
    pub dim: usize,
    pub provenance: Vec<Provenance>,
    reduced_components: Vec<EncodedArray>,
    reduced_load: EncodedArray,
    estimator_load_load: f64,
    estimator_load_component: EncodedArray,
    estimator_component_component: EncodedArray,
    basis: Vec<EncodedArray>,
}

/// Everything restored from an artifact.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub basis: ReducedBasis,
    pub model: ReducedModel,
    pub estimator: EstimatorData,
}

impl ModelArtifact {
    pub fn new(
        system: &AffineSystem,
        basis: &ReducedBasis,
        model: &ReducedModel,
        estimator: &EstimatorData,
    ) -> Result<Self> {
        let n = basis.len();
        if model.dim() != n || estimator.dim != n {
            return Err(Error::Artifact(format!(
                "inconsistent sizes: basis {n}, model {}, estimator {}",
                model.dim(),
                estimator.dim
            )));
        }
        Ok(ModelArtifact {
            format_version: FORMAT_VERSION,
            system_hash: system.config_hash(),
            num_components: model.num_components(),
            dim: n,
            provenance: basis.provenance().to_vec(),
            reduced_components: model.reduced_components.iter().map(encode_matrix).collect(),
            reduced_load: encode_vector(&model.reduced_load),
            estimator_load_load: estimator.load_load,
            estimator_load_component: encode_vector(&estimator.load_component),
            estimator_component_component: encode_matrix(&estimator.component_component),
            basis: basis.vectors().iter().map(encode_vector).collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let artifact: ModelArtifact = serde_json::from_reader(file)?;
        if artifact.format_version != FORMAT_VERSION {
            return Err(Error::Artifact(format!(
                "unsupported format version {}",
                artifact.format_version
            )));
        }
        Ok(artifact)
    }

    /// Fails unless the artifact was built on a system with the same configuration.
    pub fn check_compatible(&self, system: &AffineSystem) -> Result<()> {
        let hash = system.config_hash();
        if hash != self.system_hash {
            return Err(Error::Artifact(format!(
                "artifact was trained on system {}, not {}",
                &self.system_hash[..12.min(self.system_hash.len())],
                &hash[..12]
            )));
        }
        Ok(())
    }

    pub fn restore(&self, system: &AffineSystem) -> Result<LoadedModel> {
        self.check_compatible(system)?;
        let vectors = self.basis.iter().map(decode_vector).collect::<Result<Vec<_>>>()?;
        let basis = ReducedBasis::from_vectors(vectors, self.provenance.clone(), system)?;
        let model = ReducedModel {
            reduced_components: self
                .reduced_components
                .iter()
                .map(decode_matrix)
                .collect::<Result<_>>()?,
            reduced_load: decode_vector(&self.reduced_load)?,
        };
        let estimator = EstimatorData {
            num_components: self.num_components,
            dim: self.dim,
            load_load: self.estimator_load_load,
            load_component: decode_vector(&self.estimator_load_component)?,
            component_component: decode_matrix(&self.estimator_component_component)?,
        };
        if model.dim() != self.dim || model.num_components() != self.num_components {
            return Err(Error::Artifact("reduced matrices do not match the header".into()));
        }
        Ok(LoadedModel {
            basis,
            model,
            estimator,
        })
    }
}
