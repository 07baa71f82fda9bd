//! `EVOMAIL-GRAPH v1`: node records, then edge records, one JSON value per line.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Edge, GraphError, HeteroGraph, Node};
use crate::records::{read_records, write_records};

const HEADER: &str = "EVOMAIL-GRAPH v1";

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum GraphRecord {
    Meta { feature_dim: usize },
    Node(Node),
    Edge(Edge),
}

pub fn write_graph(path: &Path, graph: &HeteroGraph) -> Result<(), GraphError> {
    let records = std::iter::once(GraphRecord::Meta {
        feature_dim: graph.feature_dim(),
    })
    .chain(graph.nodes().iter().cloned().map(GraphRecord::Node))
    .chain(graph.edges().iter().cloned().map(GraphRecord::Edge));
    write_records(path, HEADER, records).map_err(|e| GraphError::File(e.to_string()))
}

pub fn read_graph(path: &Path) -> Result<HeteroGraph, GraphError> {
    let records: Vec<GraphRecord> =
        read_records(path, HEADER).map_err(|e| GraphError::File(e.to_string()))?;
    let mut dim = None;
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for r in records {
        match r {
            GraphRecord::Meta { feature_dim } => dim = Some(feature_dim),
            GraphRecord::Node(n) => nodes.push(n),
            GraphRecord::Edge(e) => edges.push(e),
        }
    }
    let dim = dim.ok_or_else(|| GraphError::File("missing meta record".into()))?;
    HeteroGraph::new(nodes, edges, dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{NodeKind, RelationKind};
    use crate::ingest::Label;
    use crate::linalg::SparseVec;

    #[test]
    fn round_trip_is_lossless() {
        let mut a = Node::new(0, NodeKind::Email, "e0".into(), "Hi there".into());
        a.features = SparseVec::from_pairs(8, [(1, 0.1 + 0.2), (7, -1e-300)]);
        a.label = Some(Label::Spam);
        let mut b = Node::new(1, NodeKind::Domain, "x.com".into(), "x.com".into());
        b.features = SparseVec::from_pairs(8, [(3, 1.0)]);
        let g = HeteroGraph::new(
            vec![a, b],
            vec![Edge::new(0, 1, RelationKind::HostedOn, std::f64::consts::PI)],
            8,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.txt");
        write_graph(&p, &g).unwrap();
        assert_eq!(read_graph(&p).unwrap(), g);
    }
}
