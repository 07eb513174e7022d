//! Per-step verification of Koopman trajectory models.
//!
//! The model is an encoder, a linear latent map `K` and a decoder. The
//! prediction for step `t` is `decoder(K^t(encoder(x)))`, checked against the
//! `t`-fold iterate of the quadratic map. Each step becomes its own chained
//! network, so no step ever sees the others.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::quadratic_flow;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::partitioner::{verify_domain, PartitionConfig};
use crate::report::CoverageReport;
use crate::verifier::Reference;

#[derive(Clone, Debug)]
pub struct KoopmanModel {
    pub encoder: Network,
    pub k: Network,
    pub decoder: Network,
    /// Last predicted step.
    pub horizon: usize,
}

impl KoopmanModel {
    pub fn new(encoder: Network, k: Network, decoder: Network, horizon: usize) -> Result<Self> {
        let lift = encoder.m();
        if k.n() != lift || k.m() != lift || decoder.n() != lift {
            return Err(Error::InvalidNetwork(format!(
                "latent sizes disagree: encoder {}→{}, K {}→{}, decoder {}→{}",
                encoder.n(),
                encoder.m(),
                k.n(),
                k.m(),
                decoder.n(),
                decoder.m()
            )));
        }
        if decoder.m() != encoder.n() {
            return Err(Error::InvalidNetwork("decoder must return to the state space".into()));
        }
        Ok(KoopmanModel { encoder, k, decoder, horizon })
    }

    /// Loads `<prefix>_encoder.json`, `<prefix>_k.json` and
    /// `<prefix>_decoder.json`; the horizon comes from the encoder metadata.
    pub fn load(dir: &Path, prefix: &str) -> Result<Self> {
        let load = |part: &str| Network::load(&dir.join(format!("{prefix}_{part}.json")));
        let encoder = load("encoder")?;
        let horizon = encoder
            .meta
            .get("horizon")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::InvalidNetwork("encoder metadata lacks `horizon`".into()))?;
        Self::new(encoder, load("k")?, load("decoder")?, horizon as usize)
    }

    /// `decoder ∘ K^t ∘ encoder` as one network.
    pub fn step_network(&self, t: usize) -> Result<Network> {
        let mut parts = vec![&self.encoder];
        parts.extend(std::iter::repeat(&self.k).take(t));
        parts.push(&self.decoder);
        Network::chain(&parts)
    }

    pub fn predict(&self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        let mut z = self.encoder.forward(x)?;
        for _ in 0..t {
            z = self.k.forward(&z)?;
        }
        self.decoder.forward(&z)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub t: usize,
    pub report: CoverageReport,
}

/// Verifies steps `0..=horizon` one after another.
pub fn verify_koopman(
    model: &KoopmanModel,
    epsilon: f64,
    steps: impl IntoIterator<Item = usize>,
    config: &PartitionConfig,
) -> Result<Vec<StepReport>> {
    steps
        .into_iter()
        .map(|t| {
            if t > model.horizon {
                return Err(Error::Config(format!("step {t} beyond horizon {}", model.horizon)));
            }
            let sys = quadratic_flow(t);
            let domain = sys.domain.clone();
            let config = PartitionConfig { system: sys.name.clone(), ..config.clone() };
            let report = verify_domain(Reference::analytic(sys), model.step_network(t)?, &domain, epsilon, &config)?;
            Ok(StepReport { t, report })
        })
        .collect()
}
