//! Dense feed-forward networks and their JSON weight format.
//!
//! ```json
//! {"version": 1, "n": 1, "m": 1,
//!  "layers": [
//!    {"weight": [[0.5], [-1.0]], "bias": [0.0, 0.1], "activation": "relu"},
//!    {"weight": [[1.0, 2.0]], "activation": "identity"}],
//!  "meta": {"horizon": 50}}
//! ```
//!
//! `bias` may be omitted (bias-free layer); `leaky_relu` layers carry a
//! `slope` in (0, 1). `meta` is kept verbatim.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Identity,
}

impl Activation {
    pub fn apply(self, y: f64) -> f64 {
        match self {
            Activation::Relu => y.max(0.0),
            Activation::LeakyRelu(s) => {
                if y >= 0.0 {
                    y
                } else {
                    s * y
                }
            }
            Activation::Identity => y,
        }
    }
}

/// `y = σ(W x + b)` with `W` stored row-major (`out × in`).
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    weight: Vec<f64>,
    rows: usize,
    cols: usize,
    bias: Option<Vec<f64>>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weight: Vec<Vec<f64>>, bias: Option<Vec<f64>>, activation: Activation) -> Result<Self> {
        let rows = weight.len();
        let cols = weight.first().map_or(0, |r| r.len());
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidNetwork("empty weight matrix".into()));
        }
        if let Some(i) = weight.iter().position(|r| r.len() != cols) {
            return Err(Error::InvalidNetwork(format!(
                "weight row {i} has {} entries, expected {cols}",
                weight[i].len()
            )));
        }
        if let Some(b) = &bias {
            if b.len() != rows {
                return Err(Error::InvalidNetwork(format!(
                    "bias has {} entries for {rows} outputs",
                    b.len()
                )));
            }
        }
        if let Activation::LeakyRelu(s) = activation {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::InvalidNetwork(format!(
                    "leaky_relu slope {s} outside (0, 1)"
                )));
            }
        }
        let flat: Vec<f64> = weight.into_iter().flatten().collect();
        let finite = flat.iter().chain(bias.iter().flatten()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidNetwork("non-finite parameter".into()));
        }
        Ok(Layer { weight: flat, rows, cols, bias, activation })
    }

    pub fn in_dim(&self) -> usize {
        self.cols
    }

    pub fn out_dim(&self) -> usize {
        self.rows
    }

    /// Row `i` of the weight matrix.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.weight[i * self.cols..(i + 1) * self.cols]
    }

    pub fn weight(&self, i: usize, k: usize) -> f64 {
        self.weight[i * self.cols + k]
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    pub fn bias_at(&self, i: usize) -> f64 {
        self.bias.as_ref().map_or(0.0, |b| b[i])
    }

    /// `W x + b` without the activation.
    pub fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| {
                let s: f64 = self.row(i).iter().zip(x).map(|(w, x)| w * x).sum();
                s + self.bias_at(i)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::InvalidNetwork("no layers".into()));
        };
        if last.activation != Activation::Identity {
            return Err(Error::InvalidNetwork(
                "the last layer must use the identity activation".into(),
            ));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::InvalidNetwork(format!(
                    "layer {k} outputs {} values but layer {} expects {}",
                    pair[0].out_dim(),
                    k + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Network { layers, meta: BTreeMap::new() })
    }

    pub fn n(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn m(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n() {
            return Err(Error::Dimension(format!(
                "network expects {} inputs, got {}",
                self.n(),
                x.len()
            )));
        }
        let mut h = x.to_vec();
        for layer in &self.layers {
            h = layer.pre_activation(&h);
            if layer.activation != Activation::Identity {
                for v in &mut h {
                    *v = layer.activation.apply(*v);
                }
            }
        }
        Ok(h)
    }

    /// Output `j` only; still evaluates every hidden layer.
    pub fn forward_output(&self, j: usize, x: &[f64]) -> Result<f64> {
        Ok(self.forward(x)?[j])
    }

    /// Sequential composition `nets[k] ∘ … ∘ nets[0]`.
    pub fn chain(nets: &[&Network]) -> Result<Network> {
        let layers: Vec<Layer> = nets.iter().flat_map(|n| n.layers.iter().cloned()).collect();
        let mut out = Network::new(layers)?;
        if let Some(first) = nets.first() {
            out.meta = first.meta.clone();
        }
        Ok(out)
    }

    pub fn from_json(src: &str) -> Result<Self> {
        let file: WeightFile = serde_json::from_str(src).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        file.into_network()
    }

    pub fn to_json(&self) -> String {
        let file = WeightFile::from_network(self);
        let mut s = serde_json::to_string(&file).expect("weight file serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&src)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightFile {
    version: u32,
    n: usize,
    m: usize,
    layers: Vec<LayerFile>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    meta: BTreeMap<String, serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    weight: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias: Option<Vec<f64>>,
    activation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slope: Option<f64>,
}

impl WeightFile {
    fn into_network(self) -> Result<Network> {
        if self.version != FORMAT_VERSION {
            return Err(Error::InvalidNetwork(format!(
                "unsupported weight format version {}",
                self.version
            )));
        }
        let layers = self
            .layers
            .into_iter()
            .enumerate()
            .map(|(k, l)| {
                let act = match (l.activation.as_str(), l.slope) {
                    ("relu", None) => Activation::Relu,
                    ("identity", None) => Activation::Identity,
                    ("leaky_relu", Some(s)) => Activation::LeakyRelu(s),
                    ("leaky_relu", None) => {
                        return Err(Error::InvalidNetwork(format!("layer {k}: leaky_relu needs a slope")))
                    }
                    (a @ ("relu" | "identity"), Some(_)) => {
                        return Err(Error::InvalidNetwork(format!("layer {k}: {a} takes no slope")))
                    }
                    (other, _) => {
                        return Err(Error::InvalidNetwork(format!(
                            "layer {k}: unknown activation `{other}`"
                        )))
                    }
                };
                Layer::new(l.weight, l.bias, act)
                    .map_err(|e| Error::InvalidNetwork(format!("layer {k}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut net = Network::new(layers)?;
        if net.n() != self.n || net.m() != self.m {
            return Err(Error::InvalidNetwork(format!(
                "header says {}→{}, layers give {}→{}",
                self.n,
                self.m,
                net.n(),
                net.m()
            )));
        }
        net.meta = self.meta;
        Ok(net)
    }

    fn from_network(net: &Network) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| {
                let (activation, slope) = match l.activation {
                    Activation::Relu => ("relu", None),
                    Activation::LeakyRelu(s) => ("leaky_relu", Some(s)),
                    Activation::Identity => ("identity", None),
                };
                LayerFile {
                    weight: (0..l.rows).map(|i| l.row(i).to_vec()).collect(),
                    bias: l.bias.clone(),
                    activation: activation.to_string(),
                    slope,
                }
            })
            .collect();
        WeightFile {
            version: FORMAT_VERSION,
            n: net.n(),
            m: net.m(),
            layers,
            meta: net.meta.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relu_then_id(act: Activation) -> Network {
        Network::new(vec![
            Layer::new(vec![vec![1.0]], Some(vec![0.0]), act).unwrap(),
            Layer::new(vec![vec![1.0]], None, Activation::Identity).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn forward_examples() {
        let id = Network::new(vec![Layer::new(vec![vec![2.0]], Some(vec![0.0]), Activation::Identity).unwrap()])
            .unwrap();
        assert_eq!(id.forward(&[1.0]).unwrap(), vec![2.0]);
        assert_eq!(relu_then_id(Activation::Relu).forward(&[-3.0]).unwrap(), vec![0.0]);
        let leaky = relu_then_id(Activation::LeakyRelu(0.01)).forward(&[-3.0]).unwrap();
        assert!((leaky[0] + 0.03).abs() < 1e-15);
        assert!(id.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut net = Network::new(vec![
            Layer::new(
                vec![vec![0.1, -1.0 / 3.0], vec![std::f64::consts::PI, 1e-300]],
                Some(vec![0.7, -2.5e-17]),
                Activation::LeakyRelu(0.01),
            )
            .unwrap(),
            Layer::new(vec![vec![1.0 / 7.0, 2.0]], None, Activation::Identity).unwrap(),
        ])
        .unwrap();
        net.meta.insert("horizon".into(), serde_json::json!(50));
        let back = Network::from_json(&net.to_json()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn minimal_file_and_rejections() {
        let ok = r#"{"version":1,"n":1,"m":1,"layers":[{"weight":[[2.0]],"activation":"identity"}]}"#;
        assert_eq!(Network::from_json(ok).unwrap().layers().len(), 1);
        let zero_slope = r#"{"version":1,"n":1,"m":1,"layers":[
            {"weight":[[1.0]],"activation":"leaky_relu","slope":0.0},
            {"weight":[[1.0]],"activation":"identity"}]}"#;
        assert!(Network::from_json(zero_slope).is_err());
        let bad_chain = r#"{"version":1,"n":1,"m":1,"layers":[
            {"weight":[[1.0],[2.0]],"activation":"relu"},
            {"weight":[[1.0]],"activation":"identity"}]}"#;
        assert!(matches!(Network::from_json(bad_chain), Err(Error::InvalidNetwork(_))));
        let relu_head = r#"{"version":1,"n":1,"m":1,"layers":[{"weight":[[1.0]],"activation":"relu"}]}"#;
        assert!(Network::from_json(relu_head).is_err());
        let err = Network::from_json("{\"version\":1,\n\"n\":}").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn chain_matches_composition() {
        let a = relu_then_id(Activation::Relu);
        let b = Network::new(vec![Layer::new(vec![vec![-2.0]], Some(vec![1.0]), Activation::Identity).unwrap()])
            .unwrap();
        let ab = Network::chain(&[&a, &b]).unwrap();
        for x in [-1.5, 0.0, 0.25, 3.0] {
            let want = b.forward(&a.forward(&[x]).unwrap()).unwrap();
            assert_eq!(ab.forward(&[x]).unwrap(), want);
        }
        let wide = Network::new(vec![Layer::new(vec![vec![1.0, 1.0]], None, Activation::Identity).unwrap()])
            .unwrap();
        assert!(Network::chain(&[&a, &wide]).is_err());
    }
}
