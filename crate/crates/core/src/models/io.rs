use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{LogisticModel, ModelError, PercentileMap, RiskModel, Tree, TreeEnsembleModel, TreeNode};

pub const MODEL_FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LogisticDoc {
    version: u64,
    kind: String,
    features: Vec<String>,
    intercept: f64,
    coefficients: Vec<f64>,
    percentiles: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleDoc {
    version: u64,
    kind: String,
    features: Vec<String>,
    base_score: f64,
    learning_rate_applied: bool,
    trees: Vec<Vec<NodeDoc>>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum NodeDoc {
    Split {
        feature: String,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        leaf: f64,
    },
}

fn corrupt(e: impl std::fmt::Display) -> ModelError {
    ModelError::CorruptModel(e.to_string())
}

/// Writes the versioned JSON document followed by a newline.
pub fn save_model<W: Write>(model: &RiskModel, mut sink: W) -> Result<(), ModelError> {
    let json = match model {
        RiskModel::Logistic(m) => serde_json::to_string(&LogisticDoc {
            version: MODEL_FORMAT_VERSION,
            kind: "logistic".into(),
            features: m.features.clone(),
            intercept: m.intercept,
            coefficients: m.coefficients.clone(),
            percentiles: m.percentiles.as_ref().map(|p| p.scores().to_vec()),
        }),
        RiskModel::Ensemble(m) => serde_json::to_string(&EnsembleDoc {
            version: MODEL_FORMAT_VERSION,
            kind: "ensemble".into(),
            features: m.features.clone(),
            base_score: m.base_score,
            learning_rate_applied: m.learning_rate_applied,
            trees: m
                .trees
                .iter()
                .map(|t| {
                    t.nodes
                        .iter()
                        .map(|n| match *n {
                            TreeNode::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            } => NodeDoc::Split {
                                feature: m.features[feature].clone(),
                                threshold,
                                left,
                                right,
                            },
                            TreeNode::Leaf { value } => NodeDoc::Leaf { leaf: value },
                        })
                        .collect()
                })
                .collect(),
        }),
    }
    .map_err(corrupt)?;
    sink.write_all(json.as_bytes())?;
    sink.write_all(b"\n")?;
    Ok(())
}

pub fn load_model<R: Read>(mut source: R) -> Result<RiskModel, ModelError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let value: Value = serde_json::from_str(&text).map_err(corrupt)?;
    let version = value
        .get("version")
        .ok_or_else(|| ModelError::CorruptModel("missing version".into()))?;
    if version.as_u64() != Some(MODEL_FORMAT_VERSION) {
        return Err(ModelError::UnknownModelVersion(version.to_string()));
    }
    match value.get("kind").and_then(Value::as_str) {
        Some("logistic") => {
            let doc: LogisticDoc = serde_json::from_value(value).map_err(corrupt)?;
            let mut m = LogisticModel::new(doc.features, doc.coefficients, doc.intercept)?;
            if let Some(p) = doc.percentiles {
                m = m.with_percentiles(PercentileMap::from_sorted(p)?);
            }
            Ok(RiskModel::Logistic(m))
        }
        Some("ensemble") => {
            let doc: EnsembleDoc = serde_json::from_value(value).map_err(corrupt)?;
            let index_of = |name: &str| {
                doc.features
                    .iter()
                    .position(|f| f == name)
                    .ok_or_else(|| ModelError::CorruptModel(format!("tree references unknown feature {name:?}")))
            };
            let mut trees = Vec::with_capacity(doc.trees.len());
            for nodes in &doc.trees {
                let nodes = nodes
                    .iter()
                    .map(|n| {
                        Ok(match n {
                            NodeDoc::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            } => TreeNode::Split {
                                feature: index_of(feature)?,
                                threshold: *threshold,
                                left: *left,
                                right: *right,
                            },
                            NodeDoc::Leaf { leaf } => TreeNode::Leaf { value: *leaf },
                        })
                    })
                    .collect::<Result<Vec<_>, ModelError>>()?;
                trees.push(Tree { nodes });
            }
            let mut m = TreeEnsembleModel::new(doc.features, doc.base_score, trees)?;
            m.learning_rate_applied = doc.learning_rate_applied;
            Ok(RiskModel::Ensemble(m))
        }
        other => Err(ModelError::CorruptModel(format!("unknown model kind {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip(model: &RiskModel) -> Vec<u8> {
        let mut first = Vec::new();
        save_model(model, &mut first).unwrap();
        let loaded = load_model(first.as_slice()).unwrap();
        assert_eq!(&loaded, model);
        let mut second = Vec::new();
        save_model(&loaded, &mut second).unwrap();
        assert_eq!(first, second);
        first
    }

    #[test]
    fn frozen_model_round_trips() {
        round_trip(&LogisticModel::frozen_survey().into());
    }

    #[test]
    fn ensemble_round_trips_awkward_floats() {
        let m = TreeEnsembleModel::new(
            vec!["a".into(), "b c".into()],
            -3.141592653589793,
            vec![
                Tree::stump(1, 0.1 + 0.2, -1e-300, 5e-324),
                Tree {
                    nodes: vec![
                        TreeNode::Split {
                            feature: 0,
                            threshold: -0.0,
                            left: 1,
                            right: 2,
                        },
                        TreeNode::Leaf { value: 1.0 / 3.0 },
                        TreeNode::Split {
                            feature: 1,
                            threshold: 1e17,
                            left: 3,
                            right: 4,
                        },
                        TreeNode::Leaf { value: f64::MAX },
                        TreeNode::Leaf { value: -2.5 },
                    ],
                },
            ],
        )
        .unwrap();
        let bytes = round_trip(&m.into());
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with(r#"{"version":1,"kind":"ensemble","features":["a","b c"]"#));
        assert!(text.contains(r#"{"feature":"b c","threshold":0.30000000000000004,"left":1,"right":2}"#));
    }

    #[test]
    fn logistic_without_percentiles() {
        let m = LogisticModel::new(vec!["x".into()], vec![0.5], -1.0).unwrap();
        let bytes = round_trip(&m.into());
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            "{\"version\":1,\"kind\":\"logistic\",\"features\":[\"x\"],\"intercept\":-1.0,\"coefficients\":[0.5],\"percentiles\":null}\n"
        );
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let mut buf = Vec::new();
        save_model(&LogisticModel::frozen_survey().into(), &mut buf).unwrap();
        buf.truncate(buf.len() / 2);
        assert!(matches!(load_model(buf.as_slice()), Err(ModelError::CorruptModel(_))));
        assert!(matches!(load_model(&b""[..]), Err(ModelError::CorruptModel(_))));
    }

    #[test]
    fn unknown_version() {
        let doc = r#"{"version":"99","kind":"logistic","features":[],"intercept":0.0,"coefficients":[],"percentiles":null}"#;
        assert!(matches!(load_model(doc.as_bytes()), Err(ModelError::UnknownModelVersion(v)) if v == "\"99\""));
        let doc = doc.replace("\"99\"", "2");
        assert!(matches!(load_model(doc.as_bytes()), Err(ModelError::UnknownModelVersion(_))));
    }

    #[test]
    fn structural_errors_are_corrupt() {
        let cases = [
            r#"{"version":1,"kind":"forest"}"#,
            r#"{"version":1,"kind":"logistic","features":["a"],"intercept":0.0,"coefficients":[],"percentiles":null}"#,
            r#"{"version":1,"kind":"ensemble","features":["a"],"base_score":0.0,"learning_rate_applied":true,"trees":[[{"feature":"z","threshold":1.0,"left":1,"right":2},{"leaf":0.0},{"leaf":1.0}]]}"#,
            r#"{"version":1,"kind":"ensemble","features":["a"],"base_score":0.0,"learning_rate_applied":true,"trees":[[{"feature":"a","threshold":1.0,"left":0,"right":1},{"leaf":0.0}]]}"#,
            r#"{"version":1,"kind":"logistic","features":["a"],"intercept":0.0,"coefficients":[1.0],"percentiles":[0.5,0.1]}"#,
        ];
        for doc in cases {
            assert!(matches!(load_model(doc.as_bytes()), Err(ModelError::CorruptModel(_))), "{doc}");
        }
    }
}
