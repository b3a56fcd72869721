//! Tree and feature-vector files.
//!
//! Tree JSON: `{"n": 3, "nodes": [{"t": 10, "v": 0, "l": 1, "r": 2}, {"c": 1}, {"c": 2}]}`
//! with the root first. Features are a JSON array of integers or CSV
//! integers (any mix of rows and columns, read row-major).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DecisionTree, Node};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum JsonNode {
    Internal { t: u64, v: u64, l: usize, r: usize },
    Leaf { c: u64 },
}

#[derive(Serialize, Deserialize)]
struct JsonTree {
    n: usize,
    nodes: Vec<JsonNode>,
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Parse { line: e.line(), reason: e.to_string() }
}

pub fn parse_tree_json(text: &str) -> Result<DecisionTree> {
    let j: JsonTree = serde_json::from_str(text).map_err(json_err)?;
    let nodes = j
        .nodes
        .into_iter()
        .map(|n| match n {
            JsonNode::Internal { t, v, l, r } => Node::Internal { t, v, l, r },
            JsonNode::Leaf { c } => Node::Leaf { c },
        })
        .collect();
    DecisionTree::new(j.n, nodes)
}

pub fn tree_to_json(tree: &DecisionTree) -> String {
    let j = JsonTree {
        n: tree.n,
        nodes: tree
            .nodes
            .iter()
            .map(|n| match *n {
                Node::Internal { t, v, l, r } => JsonNode::Internal { t, v, l, r },
                Node::Leaf { c } => JsonNode::Leaf { c },
            })
            .collect(),
    };
    serde_json::to_string_pretty(&j).expect("tree serializes")
}

pub fn parse_features_json(text: &str) -> Result<Vec<u64>> {
    serde_json::from_str(text).map_err(json_err)
}

pub fn parse_features_csv(text: &str) -> Result<Vec<u64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        for field in rec.iter().filter(|f| !f.is_empty()) {
            let v = field.parse::<u64>().map_err(|e| Error::Parse { line, reason: format!("{field:?}: {e}") })?;
            out.push(v);
        }
    }
    Ok(out)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))
}

pub fn load_tree(path: impl AsRef<Path>) -> Result<DecisionTree> {
    parse_tree_json(&read(path.as_ref())?)
}

/// JSON when the file starts with `[`, CSV otherwise.
pub fn load_features(path: impl AsRef<Path>) -> Result<Vec<u64>> {
    let text = read(path.as_ref())?;
    if text.trim_start().starts_with('[') {
        parse_features_json(&text)
    } else {
        parse_features_csv(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::super::sparse;
    use super::*;
    use crate::sharing::Prng;
    use rand::SeedableRng;

    #[test]
    fn tree_json_roundtrip() {
        let t = sparse(4, 5, 19, 16, &mut Prng::seed_from_u64(1)).unwrap();
        assert_eq!(parse_tree_json(&tree_to_json(&t)).unwrap(), t);
        let stump = parse_tree_json(r#"{"n": 2, "nodes": [{"t": 10, "v": 1, "l": 1, "r": 2}, {"c": 7}, {"c": 9}]}"#).unwrap();
        assert_eq!(stump.evaluate(&[0, 3]).unwrap(), 7);
    }

    #[test]
    fn tree_json_errors_carry_lines() {
        let e = parse_tree_json("{\n\"n\": 2,\n\"nodes\": [oops]}").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e:?}");
        let e = parse_tree_json(r#"{"n": 1, "nodes": [{"t": 1, "v": 0, "l": 1, "r": 9}, {"c": 0}]}"#).unwrap_err();
        assert!(matches!(e, Error::InvalidTree(_)));
    }

    #[test]
    fn features_both_formats() {
        assert_eq!(parse_features_json("[1, 2, 3]").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_features_csv("1, 2,3\n4\n").unwrap(), vec![1, 2, 3, 4]);
        let e = parse_features_csv("1,2\n3,x\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e:?}");
        assert!(parse_features_json("[1, -2]").is_err());
    }
}
