//! The clinical target dependency structure: which targets inform which.

use ahp_clinical::TargetKind;
use serde::{Deserialize, Serialize};

use crate::error::ImputerError;
use crate::Result;

/// Directed acyclic source-to-dependent edges over the seven targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyGraph {
    edges: Vec<(TargetKind, TargetKind)>,
}

impl DependencyGraph {
    /// The published clinical dependency structure: Diagnose informs
    /// everything; type, direction, eye, and misalignment feed the more
    /// specific measurements; the two continuous targets have no dependents.
    pub fn clinical() -> Self {
        use TargetKind::*;
        let edges = vec![
            (Diagnose, AhpType),
            (Diagnose, AhpDirection),
            (Diagnose, Eye),
            (Diagnose, EyeMisalignment),
            (Diagnose, AhpDegree),
            (Diagnose, Pd),
            (AhpType, AhpDirection),
            (AhpType, AhpDegree),
            (AhpDirection, AhpDegree),
            (Eye, EyeMisalignment),
            (Eye, Pd),
            (EyeMisalignment, Pd),
        ];
        DependencyGraph { edges }
    }

    pub fn new(edges: Vec<(TargetKind, TargetKind)>) -> Result<Self> {
        let graph = DependencyGraph { edges };
        graph.check_acyclic()?;
        Ok(graph)
    }

    pub fn edges(&self) -> &[(TargetKind, TargetKind)] {
        &self.edges
    }

    /// D(i): the source targets that influence `target`.
    pub fn sources_of(&self, target: TargetKind) -> Vec<TargetKind> {
        self.edges
            .iter()
            .filter(|(_, dst)| *dst == target)
            .map(|(src, _)| *src)
            .collect()
    }

    pub fn dependents_of(&self, source: TargetKind) -> Vec<TargetKind> {
        self.edges
            .iter()
            .filter(|(src, _)| *src == source)
            .map(|(_, dst)| *dst)
            .collect()
    }

    pub fn check_acyclic(&self) -> Result<()> {
        // Kahn: repeatedly remove zero-in-degree nodes
        let mut indegree = [0usize; 7];
        for (_, dst) in &self.edges {
            indegree[dst.index()] += 1;
        }
        let mut removed = [false; 7];
        let mut count = 0;
        loop {
            let next = TargetKind::ALL
                .iter()
                .position(|t| !removed[t.index()] && indegree[t.index()] == 0);
            match next {
                Some(i) => {
                    let node = TargetKind::ALL[i];
                    removed[i] = true;
                    count += 1;
                    for (src, dst) in &self.edges {
                        if *src == node {
                            indegree[dst.index()] -= 1;
                        }
                    }
                }
                None => break,
            }
        }
        if count == 7 {
            Ok(())
        } else {
            Err(ImputerError::CyclicGraph)
        }
    }
}

impl Default for DependencyGraph {
    fn default() -> Self {
        Self::clinical()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use TargetKind::*;

    #[test]
    fn golden_edges_match_the_published_structure() {
        let g = DependencyGraph::clinical();
        let expected: Vec<(TargetKind, Vec<TargetKind>)> = vec![
            (Diagnose, vec![AhpType, AhpDirection, Eye, EyeMisalignment, AhpDegree, Pd]),
            (AhpType, vec![AhpDirection, AhpDegree]),
            (AhpDirection, vec![AhpDegree]),
            (Eye, vec![EyeMisalignment, Pd]),
            (EyeMisalignment, vec![Pd]),
        ];
        for (source, dependents) in expected {
            assert_eq!(g.dependents_of(source), dependents, "{source:?}");
        }
        assert_eq!(g.edges().len(), 12);
    }

    #[test]
    fn continuous_targets_have_no_dependents() {
        let g = DependencyGraph::clinical();
        assert!(g.dependents_of(Pd).is_empty());
        assert!(g.dependents_of(AhpDegree).is_empty());
        assert!(g.sources_of(Diagnose).is_empty());
    }

    #[test]
    fn sources_are_derived_from_edges() {
        let g = DependencyGraph::clinical();
        assert_eq!(g.sources_of(AhpDegree), vec![Diagnose, AhpType, AhpDirection]);
        assert_eq!(g.sources_of(Pd), vec![Diagnose, Eye, EyeMisalignment]);
    }

    #[test]
    fn the_clinical_graph_is_acyclic_and_cycles_are_rejected() {
        assert!(DependencyGraph::clinical().check_acyclic().is_ok());
        let cyclic = DependencyGraph::new(vec![
            (AhpType, AhpDirection),
            (AhpDirection, AhpDegree),
            (AhpDegree, AhpType),
        ]);
        assert!(matches!(cyclic, Err(ImputerError::CyclicGraph)));
    }
}
