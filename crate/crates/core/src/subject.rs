//! Subject taxonomy, subject-weight annotations and the subject DAG model.
//!
//! The taxonomy is closed: fifteen subjects in a fixed canonical order. That
//! order is the tie-breaker for every decision in the crate (top-k cuts,
//! repair of predicted edges, final-node choice, prompt listing order).

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Number of subjects in the taxonomy.
pub const NUM_SUBJECTS: usize = 15;

/// Upper bound on the number of subjects kept in one graph.
pub const MAX_DAG_NODES: usize = 5;

/// Tolerance for "weights sum to one".
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Subject {
    Math,
    Physics,
    Chemistry,
    Law,
    Engineering,
    Economics,
    Health,
    Psychology,
    Business,
    Biology,
    Philosophy,
    ComputerScience,
    History,
    Medicine,
    Other,
}

impl Subject {
    /// All subjects in canonical order.
    pub const ALL: [Subject; NUM_SUBJECTS] = [
        Subject::Math,
        Subject::Physics,
        Subject::Chemistry,
        Subject::Law,
        Subject::Engineering,
        Subject::Economics,
        Subject::Health,
        Subject::Psychology,
        Subject::Business,
        Subject::Biology,
        Subject::Philosophy,
        Subject::ComputerScience,
        Subject::History,
        Subject::Medicine,
        Subject::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Subject> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Subject::Math => "Math",
            Subject::Physics => "Physics",
            Subject::Chemistry => "Chemistry",
            Subject::Law => "Law",
            Subject::Engineering => "Engineering",
            Subject::Economics => "Economics",
            Subject::Health => "Health",
            Subject::Psychology => "Psychology",
            Subject::Business => "Business",
            Subject::Biology => "Biology",
            Subject::Philosophy => "Philosophy",
            Subject::ComputerScience => "Computer Science",
            Subject::History => "History",
            Subject::Medicine => "Medicine",
            Subject::Other => "Other",
        }
    }
}

/// Case-insensitive lookup of a canonical subject name.
pub fn parse_subject(name: &str) -> Result<Subject> {
    let trimmed = name.trim();
    Subject::ALL
        .iter()
        .copied()
        .find(|s| s.name().eq_ignore_ascii_case(trimmed))
        .ok_or_else(|| Error::UnknownSubject(name.to_string()))
}

impl FromStr for Subject {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_subject(s)
    }
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Subject {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Subject {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_subject(&s).map_err(serde::de::Error::custom)
    }
}

/// A question's weight distribution over subjects.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubjectWeights(BTreeMap<Subject, f64>);

impl SubjectWeights {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I: IntoIterator<Item = (Subject, f64)>>(pairs: I) -> Self {
        Self(pairs.into_iter().collect())
    }

    pub fn insert(&mut self, subject: Subject, weight: f64) {
        self.0.insert(subject, weight);
    }

    pub fn get(&self, subject: Subject) -> Option<f64> {
        self.0.get(&subject).copied()
    }

    pub fn contains(&self, subject: Subject) -> bool {
        self.0.contains_key(&subject)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Entries in canonical subject order.
    pub fn iter(&self) -> impl Iterator<Item = (Subject, f64)> + '_ {
        self.0.iter().map(|(s, w)| (*s, *w))
    }

    pub fn subjects(&self) -> impl Iterator<Item = Subject> + '_ {
        self.0.keys().copied()
    }

    pub fn total(&self) -> f64 {
        self.0.values().sum()
    }

    /// Rescales the weights to sum to one. Fails on an empty or all-zero map.
    pub fn normalized(&self) -> Result<SubjectWeights> {
        let total = self.total();
        if self.is_empty() || !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidWeights(format!(
                "cannot normalize weights summing to {total}"
            )));
        }
        Ok(Self(self.0.iter().map(|(s, w)| (*s, w / total)).collect()))
    }

    /// Subject with the largest weight; ties go to the canonical order.
    pub fn dominant(&self) -> Option<Subject> {
        let mut best: Option<(Subject, f64)> = None;
        for (s, w) in self.iter() {
            if best.is_none_or(|(_, bw)| w > bw) {
                best = Some((s, w));
            }
        }
        best.map(|(s, _)| s)
    }

    pub fn is_finalized(&self) -> bool {
        !self.is_empty()
            && self.iter().all(|(_, w)| (0.0..=1.0).contains(&w))
            && (self.total() - 1.0).abs() <= WEIGHT_SUM_TOLERANCE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DagNode {
    pub subject: Subject,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DagEdge {
    pub src: Subject,
    pub dst: Subject,
    pub score: f64,
}

/// Subject DAG: the routing blueprint for one question.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SDag {
    pub nodes: Vec<DagNode>,
    pub edges: Vec<DagEdge>,
}

impl SDag {
    pub fn contains(&self, subject: Subject) -> bool {
        self.nodes.iter().any(|n| n.subject == subject)
    }

    pub fn score(&self, subject: Subject) -> Option<f64> {
        self.nodes
            .iter()
            .find(|n| n.subject == subject)
            .map(|n| n.score)
    }

    pub fn subjects(&self) -> Vec<Subject> {
        self.nodes.iter().map(|n| n.subject).collect()
    }

    pub fn in_degree(&self, subject: Subject) -> usize {
        self.edges.iter().filter(|e| e.dst == subject).count()
    }

    pub fn out_degree(&self, subject: Subject) -> usize {
        self.edges.iter().filter(|e| e.src == subject).count()
    }

    /// Sources of edges pointing at `subject`, in canonical order.
    pub fn predecessors(&self, subject: Subject) -> Vec<Subject> {
        let set: BTreeSet<Subject> = self
            .edges
            .iter()
            .filter(|e| e.dst == subject)
            .map(|e| e.src)
            .collect();
        set.into_iter().collect()
    }

    pub fn has_edge(&self, src: Subject, dst: Subject) -> bool {
        self.edges.iter().any(|e| e.src == src && e.dst == dst)
    }

    /// Binary adjacency over the full taxonomy, indexed by canonical position.
    pub fn adjacency(&self) -> [[bool; NUM_SUBJECTS]; NUM_SUBJECTS] {
        let mut a = [[false; NUM_SUBJECTS]; NUM_SUBJECTS];
        for e in &self.edges {
            a[e.src.index()][e.dst.index()] = true;
        }
        a
    }

    /// Kahn's algorithm, smallest canonical subject first among ready nodes.
    /// Returns `None` when the graph has a cycle or dangling edges.
    pub fn topological_order(&self) -> Option<Vec<Subject>> {
        let subjects: BTreeSet<Subject> = self.nodes.iter().map(|n| n.subject).collect();
        let mut indeg: BTreeMap<Subject, usize> = subjects.iter().map(|s| (*s, 0)).collect();
        let edges: BTreeSet<(Subject, Subject)> =
            self.edges.iter().map(|e| (e.src, e.dst)).collect();
        for (src, dst) in &edges {
            if !subjects.contains(src) || !subjects.contains(dst) {
                return None;
            }
            *indeg.get_mut(dst).expect("checked above") += 1;
        }
        let mut ready: BTreeSet<Subject> = indeg
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(s, _)| *s)
            .collect();
        let mut order = Vec::with_capacity(subjects.len());
        while let Some(s) = ready.pop_first() {
            order.push(s);
            for (_, dst) in edges.iter().filter(|(src, _)| *src == s) {
                let d = indeg.get_mut(dst).expect("checked above");
                *d -= 1;
                if *d == 0 {
                    ready.insert(*dst);
                }
            }
        }
        (order.len() == subjects.len()).then_some(order)
    }
}

/// Builds the supervision graph from a finalized annotation.
///
/// Entries below `threshold` are dropped, as is `Other`. If more than
/// [`MAX_DAG_NODES`] subjects survive, the heaviest five are kept. Survivors
/// are renormalized; those strictly above the mean `1/k` are dominant, the
/// rest supporting, and every supporting subject points at every dominant
/// one. When nothing exceeds the mean, all maximum-weight subjects become
/// dominant and the graph has no edges.
pub fn build_ground_truth_dag(weights: &SubjectWeights, threshold: f64) -> Result<SDag> {
    if weights.is_empty() {
        return Err(Error::InvalidWeights("empty subject weights".into()));
    }
    if (weights.total() - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::InvalidWeights(format!(
            "weights sum to {}, expected 1",
            weights.total()
        )));
    }

    let mut survivors: Vec<(Subject, f64)> = weights
        .iter()
        .filter(|(s, w)| *w >= threshold && *s != Subject::Other)
        .collect();
    if survivors.is_empty() {
        return Err(Error::EmptyAfterThreshold { threshold });
    }
    if survivors.len() > MAX_DAG_NODES {
        // heaviest first, canonical order among equals
        survivors.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        survivors.truncate(MAX_DAG_NODES);
        survivors.sort_by_key(|(s, _)| *s);
    }

    let total: f64 = survivors.iter().map(|(_, w)| w).sum();
    let renorm: Vec<(Subject, f64)> = survivors.iter().map(|(s, w)| (*s, w / total)).collect();
    let k = renorm.len() as f64;
    let mean = 1.0 / k;

    // Renormalization can leave an exactly-average weight a few ulps above 1/k.
    let mut dominant: Vec<bool> = renorm.iter().map(|(_, w)| *w > mean + 1e-12).collect();
    if !dominant.iter().any(|d| *d) {
        let max = renorm.iter().map(|(_, w)| *w).fold(f64::MIN, f64::max);
        dominant = renorm.iter().map(|(_, w)| *w >= max - 1e-12).collect();
    }

    let nodes = renorm
        .iter()
        .map(|(s, w)| DagNode {
            subject: *s,
            score: *w,
        })
        .collect();
    let mut edges = Vec::new();
    for (i, (src, _)) in renorm.iter().enumerate() {
        if dominant[i] {
            continue;
        }
        for (j, (dst, _)) in renorm.iter().enumerate() {
            if dominant[j] {
                edges.push(DagEdge {
                    src: *src,
                    dst: *dst,
                    score: 1.0,
                });
            }
        }
    }
    Ok(SDag { nodes, edges })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Empty,
    TooManyNodes(usize),
    DuplicateNode(Subject),
    DuplicateEdge(Subject, Subject),
    SelfLoop(Subject),
    DanglingEdge(Subject, Subject),
    Cycle,
    NodeScoreOutOfRange(Subject, f64),
    EdgeScoreOutOfRange(Subject, Subject, f64),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

/// Reports every violated structural invariant of `g`.
pub fn validate_dag(g: &SDag) -> ValidationReport {
    let mut violations = Vec::new();
    if g.nodes.is_empty() {
        violations.push(Violation::Empty);
    }
    if g.nodes.len() > MAX_DAG_NODES {
        violations.push(Violation::TooManyNodes(g.nodes.len()));
    }
    let mut seen = BTreeSet::new();
    for n in &g.nodes {
        if !seen.insert(n.subject) {
            violations.push(Violation::DuplicateNode(n.subject));
        }
        if !in_unit(n.score) {
            violations.push(Violation::NodeScoreOutOfRange(n.subject, n.score));
        }
    }
    let mut seen_edges = BTreeSet::new();
    let mut dangling = false;
    for e in &g.edges {
        if e.src == e.dst {
            violations.push(Violation::SelfLoop(e.src));
        }
        if !seen_edges.insert((e.src, e.dst)) {
            violations.push(Violation::DuplicateEdge(e.src, e.dst));
        }
        if !seen.contains(&e.src) || !seen.contains(&e.dst) {
            violations.push(Violation::DanglingEdge(e.src, e.dst));
            dangling = true;
        }
        if !in_unit(e.score) {
            violations.push(Violation::EdgeScoreOutOfRange(e.src, e.dst, e.score));
        }
    }
    if !dangling && has_cycle(g) {
        violations.push(Violation::Cycle);
    }
    ValidationReport { violations }
}

fn has_cycle(g: &SDag) -> bool {
    // self-loops count as cycles too
    let subjects: Vec<Subject> = g.nodes.iter().map(|n| n.subject).collect::<BTreeSet<_>>().into_iter().collect();
    let mut indeg: BTreeMap<Subject, usize> = subjects.iter().map(|s| (*s, 0)).collect();
    let edges: BTreeSet<(Subject, Subject)> = g.edges.iter().map(|e| (e.src, e.dst)).collect();
    for (_, dst) in &edges {
        if let Some(d) = indeg.get_mut(dst) {
            *d += 1;
        }
    }
    let mut queue: VecDeque<Subject> = indeg
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(s, _)| *s)
        .collect();
    let mut visited = 0;
    while let Some(s) = queue.pop_front() {
        visited += 1;
        for (_, dst) in edges.iter().filter(|(src, _)| *src == s) {
            if let Some(d) = indeg.get_mut(dst) {
                *d -= 1;
                if *d == 0 {
                    queue.push_back(*dst);
                }
            }
        }
    }
    visited != subjects.len()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Profiling,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Profiling => "profiling",
        }
    }
}

/// One multiple-choice question as stored in the JSONL datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub options: Vec<String>,
    pub gold: String,
    #[serde(default)]
    pub subjects: Option<SubjectWeights>,
    #[serde(default)]
    pub split: Option<Split>,
}

/// Option label for position `i` (A, B, ...).
pub fn option_label(i: usize) -> String {
    char::from(b'A' + (i as u8)).to_string()
}

impl QuestionRecord {
    /// Question text with lettered options, as shown to every agent.
    pub fn prompt_text(&self) -> String {
        let mut s = self.question.clone();
        for (i, opt) in self.options.iter().enumerate() {
            s.push('\n');
            s.push_str(&option_label(i));
            s.push_str(". ");
            s.push_str(opt);
        }
        s
    }

    pub fn check(&self) -> Result<()> {
        if self.options.len() > 26 {
            return Err(Error::InvalidDataset(format!(
                "{}: more than 26 options",
                self.id
            )));
        }
        if !self.options.is_empty() {
            let known = (0..self.options.len()).any(|i| option_label(i) == self.gold);
            if !known {
                return Err(Error::InvalidDataset(format!(
                    "{}: gold `{}` does not label an option",
                    self.id, self.gold
                )));
            }
        }
        Ok(())
    }
}

/// Checks per-record invariants and id uniqueness.
pub fn check_dataset(records: &[QuestionRecord]) -> Result<()> {
    let mut ids = BTreeSet::new();
    for r in records {
        r.check()?;
        if !ids.insert(r.id.as_str()) {
            return Err(Error::InvalidDataset(format!("duplicate id `{}`", r.id)));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(pairs: &[(Subject, f64)]) -> SubjectWeights {
        SubjectWeights::from_pairs(pairs.iter().copied())
    }

    fn node(s: Subject, score: f64) -> DagNode {
        DagNode { subject: s, score }
    }

    fn edge(src: Subject, dst: Subject) -> DagEdge {
        DagEdge { src, dst, score: 1.0 }
    }

    #[test]
    fn parses_subjects() {
        assert_eq!(parse_subject("math").unwrap(), Subject::Math);
        assert_eq!(
            parse_subject("Computer Science").unwrap(),
            Subject::ComputerScience
        );
        assert_eq!(parse_subject("  computer science ").unwrap(), Subject::ComputerScience);
        assert!(matches!(
            parse_subject("Astrology"),
            Err(Error::UnknownSubject(_))
        ));
        for s in Subject::ALL {
            assert_eq!(parse_subject(s.name()).unwrap(), s);
            assert_eq!(parse_subject(&s.name().to_uppercase()).unwrap(), s);
            assert_eq!(Subject::from_index(s.index()), Some(s));
        }
    }

    #[test]
    fn ground_truth_single_dominant() {
        let g = build_ground_truth_dag(
            &w(&[
                (Subject::Math, 0.5),
                (Subject::Physics, 0.3),
                (Subject::Biology, 0.2),
            ]),
            0.1,
        )
        .unwrap();
        assert_eq!(g.subjects(), vec![Subject::Math, Subject::Physics, Subject::Biology]);
        assert_eq!(
            g.edges,
            vec![edge(Subject::Physics, Subject::Math), edge(Subject::Biology, Subject::Math)]
        );
    }

    #[test]
    fn ground_truth_drops_below_threshold() {
        let g = build_ground_truth_dag(
            &w(&[
                (Subject::Chemistry, 0.6),
                (Subject::Math, 0.25),
                (Subject::Biology, 0.10),
                (Subject::History, 0.05),
            ]),
            0.1,
        )
        .unwrap();
        assert!(!g.contains(Subject::History));
        assert!((g.score(Subject::Chemistry).unwrap() - 0.6 / 0.95).abs() < 1e-12);
        assert!((g.score(Subject::Math).unwrap() - 0.25 / 0.95).abs() < 1e-12);
        assert!((g.score(Subject::Biology).unwrap() - 0.10 / 0.95).abs() < 1e-12);
        assert_eq!(
            g.edges,
            vec![
                edge(Subject::Math, Subject::Chemistry),
                edge(Subject::Biology, Subject::Chemistry)
            ]
        );
    }

    #[test]
    fn ground_truth_all_equal_promotes_everyone() {
        let g = build_ground_truth_dag(&w(&[(Subject::Physics, 0.5), (Subject::Math, 0.5)]), 0.1)
            .unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn ground_truth_drops_other() {
        let g = build_ground_truth_dag(
            &w(&[(Subject::Other, 0.5), (Subject::Law, 0.3), (Subject::History, 0.2)]),
            0.1,
        )
        .unwrap();
        assert_eq!(g.subjects(), vec![Subject::Law, Subject::History]);
        assert!((g.score(Subject::Law).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(g.edges, vec![edge(Subject::History, Subject::Law)]);
    }

    #[test]
    fn ground_truth_errors() {
        assert!(matches!(
            build_ground_truth_dag(&w(&[(Subject::Other, 1.0)]), 0.1),
            Err(Error::EmptyAfterThreshold { .. })
        ));
        assert!(matches!(
            build_ground_truth_dag(&SubjectWeights::new(), 0.1),
            Err(Error::InvalidWeights(_))
        ));
        assert!(matches!(
            build_ground_truth_dag(&w(&[(Subject::Math, 0.4)]), 0.1),
            Err(Error::InvalidWeights(_))
        ));
    }

    #[test]
    fn validate_examples() {
        let single = SDag {
            nodes: vec![node(Subject::Math, 1.0)],
            edges: vec![],
        };
        assert!(validate_dag(&single).is_valid());

        let cyclic = SDag {
            nodes: vec![node(Subject::Math, 0.5), node(Subject::Law, 0.5)],
            edges: vec![edge(Subject::Math, Subject::Law), edge(Subject::Law, Subject::Math)],
        };
        assert!(validate_dag(&cyclic).violations.contains(&Violation::Cycle));

        let big = SDag {
            nodes: Subject::ALL[..6].iter().map(|s| node(*s, 0.1)).collect(),
            edges: vec![],
        };
        assert!(validate_dag(&big)
            .violations
            .contains(&Violation::TooManyNodes(6)));
    }

    #[test]
    fn validate_reports_structure_faults() {
        let g = SDag {
            nodes: vec![node(Subject::Math, 1.5), node(Subject::Math, 0.2)],
            edges: vec![
                edge(Subject::Math, Subject::Math),
                edge(Subject::Math, Subject::Law),
            ],
        };
        let v = validate_dag(&g).violations;
        assert!(v.contains(&Violation::DuplicateNode(Subject::Math)));
        assert!(v.contains(&Violation::SelfLoop(Subject::Math)));
        assert!(v.contains(&Violation::DanglingEdge(Subject::Math, Subject::Law)));
        assert!(v.contains(&Violation::NodeScoreOutOfRange(Subject::Math, 1.5)));
        assert!(validate_dag(&SDag::default()).violations.contains(&Violation::Empty));
    }

    #[test]
    fn topological_order_is_canonical() {
        let g = SDag {
            nodes: vec![
                node(Subject::Biology, 0.2),
                node(Subject::Physics, 0.3),
                node(Subject::Math, 0.5),
            ],
            edges: vec![edge(Subject::Physics, Subject::Math), edge(Subject::Biology, Subject::Math)],
        };
        assert_eq!(
            g.topological_order().unwrap(),
            vec![Subject::Physics, Subject::Biology, Subject::Math]
        );
    }

    #[test]
    fn record_checks() {
        let mut r = QuestionRecord {
            id: "q1".into(),
            question: "What is 2+2?".into(),
            options: vec!["3".into(), "4".into()],
            gold: "B".into(),
            subjects: None,
            split: None,
        };
        assert!(r.check().is_ok());
        assert_eq!(r.prompt_text(), "What is 2+2?\nA. 3\nB. 4");
        r.gold = "C".into();
        assert!(r.check().is_err());
        r.gold = "A".into();
        assert!(check_dataset(&[r.clone(), r]).is_err());
    }

    fn weight_vector() -> impl Strategy<Value = SubjectWeights> {
        proptest::collection::btree_map(0usize..NUM_SUBJECTS, 0.001f64..1.0, 1..=NUM_SUBJECTS)
            .prop_map(|m| {
                let total: f64 = m.values().sum();
                SubjectWeights::from_pairs(
                    m.into_iter()
                        .map(|(i, v)| (Subject::from_index(i).unwrap(), v / total)),
                )
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn ground_truth_is_bipartite_dag(weights in weight_vector()) {
            match build_ground_truth_dag(&weights, 0.1) {
                Ok(g) => {
                    prop_assert!(validate_dag(&g).is_valid());
                    let total: f64 = g.nodes.iter().map(|n| n.score).sum();
                    prop_assert!((total - 1.0).abs() <= 1e-9);
                    for e in &g.edges {
                        // no chains: sources never receive, sinks never send
                        prop_assert_eq!(g.in_degree(e.src), 0);
                        prop_assert_eq!(g.out_degree(e.dst), 0);
                        prop_assert!(g.score(e.src).unwrap() <= g.score(e.dst).unwrap());
                    }
                }
                Err(Error::EmptyAfterThreshold { .. }) => {
                    prop_assert!(weights.iter().all(|(s, w)| w < 0.1 || s == Subject::Other));
                }
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }
    }
}
