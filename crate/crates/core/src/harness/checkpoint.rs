//! Versioned JSON checkpoints.
//!
//! Floats are written in shortest round-trip form and parsed with exact
//! rounding, so a loaded model reproduces the saved one bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Algorithm, Trained};
use crate::env::{Action, EnvState};
use crate::error::{Error, Result};
use crate::nn::{Dense, Network, NetworkSpec};
use crate::tabular::{BucketSpec, QTable};

pub const CHECKPOINT_VERSION: u64 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Network {
        online: Network,
        target: Option<Network>,
    },
    QTable {
        buckets: BucketSpec,
        table: QTable,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub algorithm: Algorithm,
    pub model: Model,
}

impl Checkpoint {
    pub fn from_trained(algorithm: Algorithm, trained: &Trained) -> Self {
        let model = match trained {
            Trained::Tabular(q) => Model::QTable {
                buckets: q.config.buckets.clone(),
                table: q.table.clone(),
            },
            Trained::Deep(agent) => Model::Network {
                online: agent.online().clone(),
                target: Some(agent.target().clone()),
            },
        };
        Self { algorithm, model }
    }

    pub fn greedy(&self, state: &EnvState) -> Result<Action> {
        let index = match &self.model {
            Model::Network { online, .. } => crate::tabular::argmax(&online.predict(&state.to_array())?),
            Model::QTable { buckets, table } => {
                table.greedy_action(&crate::tabular::bucketize(state, buckets)).index()
            }
        };
        Action::from_index(index).ok_or_else(|| Error::CheckpointShape("model has more than two actions".into()))
    }
}

#[derive(Serialize, Deserialize)]
struct Document {
    format_version: u64,
    algorithm: String,
    model: ModelDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ModelDoc {
    Network {
        spec: NetworkSpec,
        parameter_count: usize,
        online: Vec<LayerDoc>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<Vec<LayerDoc>>,
    },
    QTable {
        dims: [usize; 4],
        bounds: [(f64, f64); 4],
        actions: usize,
        values: Vec<f64>,
    },
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

fn layers_doc(net: &Network) -> Vec<LayerDoc> {
    net.layers()
        .iter()
        .map(|l| LayerDoc {
            rows: l.out_dim,
            cols: l.in_dim,
            weights: l.weights.clone(),
            bias: l.bias.clone(),
        })
        .collect()
}

fn network_from_doc(spec: &NetworkSpec, layers: Vec<LayerDoc>) -> Result<Network> {
    let layers = layers
        .into_iter()
        .map(|l| Dense {
            in_dim: l.cols,
            out_dim: l.rows,
            weights: l.weights,
            bias: l.bias,
        })
        .collect();
    Network::from_layers(spec.clone(), layers).map_err(|e| Error::CheckpointShape(e.to_string()))
}

pub fn render_checkpoint(ckpt: &Checkpoint) -> Result<String> {
    let model = match &ckpt.model {
        Model::Network { online, target } => ModelDoc::Network {
            spec: online.spec().clone(),
            parameter_count: online.param_count(),
            online: layers_doc(online),
            target: target.as_ref().map(layers_doc),
        },
        Model::QTable { buckets, table } => ModelDoc::QTable {
            dims: table.dims(),
            bounds: buckets.bounds,
            actions: table.action_count(),
            values: table.values().to_vec(),
        },
    };
    let doc = Document {
        format_version: CHECKPOINT_VERSION,
        algorithm: ckpt.algorithm.name().to_string(),
        model,
    };
    let mut text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::CheckpointParse(format!("cannot encode checkpoint: {e}")))?;
    text.push('\n');
    Ok(text)
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::CheckpointParse(e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::CheckpointParse("missing format_version".into()))?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let doc: Document =
        serde_json::from_value(value).map_err(|e| Error::CheckpointParse(e.to_string()))?;
    let algorithm: Algorithm = doc
        .algorithm
        .parse()
        .map_err(|e: Error| Error::CheckpointParse(e.to_string()))?;

    let model = match doc.model {
        ModelDoc::Network {
            spec,
            parameter_count,
            online,
            target,
        } => {
            if spec.param_count() != parameter_count {
                return Err(Error::CheckpointShape(format!(
                    "declared {parameter_count} parameters, spec implies {}",
                    spec.param_count()
                )));
            }
            Model::Network {
                online: network_from_doc(&spec, online)?,
                target: target.map(|t| network_from_doc(&spec, t)).transpose()?,
            }
        }
        ModelDoc::QTable {
            dims,
            bounds,
            actions,
            values,
        } => {
            let buckets =
                BucketSpec::new(dims, bounds).map_err(|e| Error::CheckpointShape(e.to_string()))?;
            let table = QTable::from_values(dims, actions, values)
                .map_err(|e| Error::CheckpointShape(e.to_string()))?;
            Model::QTable { buckets, table }
        }
    };
    Ok(Checkpoint { algorithm, model })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, render_checkpoint(ckpt)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvParams;
    use crate::nn::Head;
    use crate::RunRng;
    use rand::{Rng, SeedableRng};

    fn net_checkpoint(spec: &NetworkSpec) -> Checkpoint {
        let online = Network::build(spec, 17).unwrap();
        let target = Network::build(spec, 18).unwrap();
        Checkpoint {
            algorithm: Algorithm::Dqn,
            model: Model::Network {
                online,
                target: Some(target),
            },
        }
    }

    #[test]
    fn network_round_trip_is_bit_exact() {
        for spec in [
            NetworkSpec::cartpole(),
            NetworkSpec::new(4, vec![8, 5], 2, Head::DuelingMax),
        ] {
            let ckpt = net_checkpoint(&spec);
            let loaded = parse_checkpoint(&render_checkpoint(&ckpt).unwrap()).unwrap();
            assert_eq!(loaded, ckpt);
            let (Model::Network { online: a, .. }, Model::Network { online: b, .. }) =
                (&ckpt.model, &loaded.model)
            else {
                unreachable!()
            };
            let mut rng = RunRng::seed_from_u64(1);
            for _ in 0..100 {
                let x: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
                let qa = a.predict(&x).unwrap();
                let qb = b.predict(&x).unwrap();
                assert_eq!(
                    qa.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                    qb.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
                );
            }
        }
    }

    #[test]
    fn declares_parameter_count() {
        let text = render_checkpoint(&net_checkpoint(&NetworkSpec::cartpole())).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["model"]["parameter_count"], 770);
        assert_eq!(v["format_version"], 1);
    }

    #[test]
    fn qtable_round_trip() {
        let buckets = BucketSpec::cartpole(&EnvParams::default());
        let values = (0..36).map(|i| (i as f64 * 0.37).sin()).collect();
        let ckpt = Checkpoint {
            algorithm: Algorithm::QTable,
            model: Model::QTable {
                buckets,
                table: QTable::from_values([1, 1, 6, 3], 2, values).unwrap(),
            },
        };
        assert_eq!(parse_checkpoint(&render_checkpoint(&ckpt).unwrap()).unwrap(), ckpt);
    }

    #[test]
    fn distinct_failure_modes() {
        let text = render_checkpoint(&net_checkpoint(&NetworkSpec::cartpole())).unwrap();

        let truncated = &text[..text.len() / 2];
        assert!(matches!(parse_checkpoint(truncated), Err(Error::CheckpointParse(_))));

        let future = text.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
        assert!(matches!(
            parse_checkpoint(&future),
            Err(Error::CheckpointVersion { found: 2, supported: 1 })
        ));

        let miscounted = text.replacen("\"parameter_count\": 770", "\"parameter_count\": 771", 1);
        assert!(matches!(parse_checkpoint(&miscounted), Err(Error::CheckpointShape(_))));

        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["model"]["online"][0]["weights"].as_array_mut().unwrap().pop();
        let short = serde_json::to_string(&v).unwrap();
        assert!(matches!(parse_checkpoint(&short), Err(Error::CheckpointShape(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let ckpt = net_checkpoint(&NetworkSpec::cartpole());
        save_checkpoint(&ckpt, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ckpt);
        assert!(matches!(
            load_checkpoint(&dir.path().join("missing.json")),
            Err(Error::Io { .. })
        ));
    }
}
