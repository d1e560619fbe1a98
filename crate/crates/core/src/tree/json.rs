//! JSON family documents.
//!
//! ```json
//! {"horizon": 1, "lambda": 0.05,
//!  "nodes": [{"id": "root", "parent": null, "t": 0, "p": 1.0}, ...],
//!  "models": [{"theta": "a", "prices": {"root": 100, ...}}],
//!  "claims": {"a": {"u": 20, "d": 0}}}
//! ```

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{ClaimFamily, ModelFamily, NodeSpec, PriceField, ScenarioTree, TreeError};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: String,
    parent: Option<String>,
    t: usize,
    p: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    theta: String,
    prices: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilyDoc {
    horizon: usize,
    lambda: f64,
    nodes: Vec<NodeDoc>,
    models: Vec<ModelDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    claims: Option<BTreeMap<String, HashMap<String, f64>>>,
}

/// A parsed family document; claims are optional so the same schema serves
/// generated families awaiting a payoff.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyDocument {
    pub family: ModelFamily,
    pub claims: Option<ClaimFamily>,
}

pub fn load_family(bytes: &[u8]) -> Result<ModelFamily, TreeError> {
    load_document(bytes).map(|d| d.family)
}

pub fn load_document(bytes: &[u8]) -> Result<FamilyDocument, TreeError> {
    let doc: FamilyDoc =
        serde_json::from_slice(bytes).map_err(|e| TreeError::SchemaError(e.to_string()))?;
    let specs = doc
        .nodes
        .into_iter()
        .map(|n| NodeSpec {
            id: n.id,
            parent: n.parent,
            t: n.t,
            p: n.p,
        })
        .collect();
    let tree = ScenarioTree::new(doc.horizon, specs)?;
    let mut fields = Vec::with_capacity(doc.models.len());
    for (k, model) in doc.models.into_iter().enumerate() {
        for id in model.prices.keys() {
            tree.lookup(id).map_err(|_| {
                TreeError::InvariantViolation(format!(
                    "models[{k}] ({:?}) prices unknown node {id:?}",
                    model.theta
                ))
            })?;
        }
        let mut prices = Vec::with_capacity(tree.len());
        for node in tree.nodes() {
            match model.prices.get(&node.id) {
                Some(&v) => prices.push(v),
                None => {
                    return Err(TreeError::InvariantViolation(format!(
                        "models[{k}] ({:?}) has no price for node {:?}",
                        model.theta, node.id
                    )))
                }
            }
        }
        fields.push(PriceField::new(&tree, model.theta, prices)?);
    }
    let family = ModelFamily::new(tree, fields, doc.lambda)?;
    let claims = match doc.claims {
        None => None,
        Some(maps) => {
            let maps: HashMap<String, HashMap<String, f64>> = maps.into_iter().collect();
            Some(ClaimFamily::from_maps(&family, &maps)?)
        }
    };
    Ok(FamilyDocument { family, claims })
}

/// Serialises a family (and optionally its claims) as pretty JSON.
pub fn save_family(family: &ModelFamily, claims: Option<&ClaimFamily>) -> String {
    let tree = family.tree();
    let nodes = tree
        .nodes()
        .iter()
        .map(|n| NodeDoc {
            id: n.id.clone(),
            parent: n.parent.map(|p| tree.id(p).to_string()),
            t: n.t,
            p: n.branch_prob,
        })
        .collect();
    let models = family
        .fields()
        .iter()
        .map(|f| ModelDoc {
            theta: f.theta.clone(),
            prices: (0..tree.len())
                .map(|n| (tree.id(n).to_string(), f.at(n)))
                .collect(),
        })
        .collect();
    let claims = claims.map(|c| {
        c.thetas()
            .iter()
            .enumerate()
            .map(|(k, theta)| {
                let leaves = tree
                    .leaves()
                    .iter()
                    .zip(c.values(k))
                    .map(|(&l, &v)| (tree.id(l).to_string(), v))
                    .collect();
                (theta.clone(), leaves)
            })
            .collect()
    });
    let doc = FamilyDoc {
        horizon: tree.horizon(),
        lambda: family.lambda(),
        nodes,
        models,
        claims,
    };
    serde_json::to_string_pretty(&doc).expect("family documents always serialise")
}
