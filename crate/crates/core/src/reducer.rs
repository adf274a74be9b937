//! A fitted dimensionality reducer of either kind behind one interface.

use serde::{Deserialize, Serialize};

use crate::autoenc::AeModel;
use crate::error::Result;
use crate::numeric::Matrix;
use crate::pca::PcaModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pca,
    Ae,
}

impl std::str::FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(Method::Pca),
            "ae" => Ok(Method::Ae),
            other => Err(crate::Error::Config(format!("unknown method {other:?}, expected pca or ae"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Pca => "pca",
            Method::Ae => "ae",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "lowercase")]
pub enum Reducer {
    Pca(PcaModel),
    Ae(AeModel),
}

impl Reducer {
    pub fn method(&self) -> Method {
        match self {
            Reducer::Pca(_) => Method::Pca,
            Reducer::Ae(_) => Method::Ae,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Reducer::Pca(m) => m.m(),
            Reducer::Ae(m) => m.input_dim(),
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            Reducer::Pca(m) => m.p(),
            Reducer::Ae(m) => m.latent_dim(),
        }
    }

    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Reducer::Pca(m) => m.encode(x),
            Reducer::Ae(m) => m.encode(x),
        }
    }

    pub fn decode(&self, z: &Matrix) -> Result<Matrix> {
        match self {
            Reducer::Pca(m) => m.decode(z),
            Reducer::Ae(m) => m.decode(z),
        }
    }

    pub fn reconstruct(&self, x: &Matrix) -> Result<Matrix> {
        self.decode(&self.encode(x)?)
    }
}

impl From<PcaModel> for Reducer {
    fn from(m: PcaModel) -> Self {
        Reducer::Pca(m)
    }
}

impl From<AeModel> for Reducer {
    fn from(m: AeModel) -> Self {
        Reducer::Ae(m)
    }
}
