use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::GraphError;
use crate::numcore::Tensor;

pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.tsv";
pub const LABELS_FILE: &str = "labels.tsv";
pub const SPLITS_FILE: &str = "splits.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Node ids of the three disjoint splits.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    /// Optional explicit class count; inferred from labels when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
}

/// Undirected attributed graph with node labels and a transductive split.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphDataset {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    features: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
    train: Vec<bool>,
    val: Vec<bool>,
    test: Vec<bool>,
}

fn normalize_edges(
    n: usize,
    raw: impl IntoIterator<Item = (usize, usize)>,
) -> Result<Vec<(usize, usize)>, GraphError> {
    let mut edges = Vec::new();
    for (u, v) in raw {
        if u >= n || v >= n {
            return Err(GraphError::NodeOutOfRange { node: u.max(v), n });
        }
        if u == v {
            return Err(GraphError::SelfLoop { node: u });
        }
        edges.push((u.min(v), u.max(v)));
    }
    edges.sort_unstable();
    edges.dedup();
    Ok(edges)
}

fn masks_from_ids(n: usize, ids: &[usize]) -> Result<Vec<bool>, GraphError> {
    let mut mask = vec![false; n];
    for &i in ids {
        if i >= n {
            return Err(GraphError::NodeOutOfRange { node: i, n });
        }
        mask[i] = true;
    }
    Ok(mask)
}

impl GraphDataset {
    /// Validates and normalizes a dataset. Edges may repeat or appear in both
    /// orientations; self-loops are rejected.
    pub fn new(
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
        masks: [Vec<bool>; 3],
    ) -> Result<Self, GraphError> {
        let n = labels.len();
        if features.ndim() != 2 || features.shape()[0] != n {
            return Err(GraphError::SizeMismatch {
                what: "feature rows",
                expected: n,
                got: features.shape().first().copied().unwrap_or(0),
            });
        }
        let edges = normalize_edges(n, edges)?;
        if let Some((node, &label)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(GraphError::LabelOutOfRange {
                node,
                label,
                num_classes,
            });
        }
        let [train, val, test] = masks;
        for m in [&train, &val, &test] {
            if m.len() != n {
                return Err(GraphError::SizeMismatch {
                    what: "mask length",
                    expected: n,
                    got: m.len(),
                });
            }
        }
        for v in 0..n {
            if [train[v], val[v], test[v]].iter().filter(|&&b| b).count() > 1 {
                return Err(GraphError::OverlappingMasks { node: v });
            }
        }
        if !train.iter().any(|&b| b) {
            return Err(GraphError::EmptyTrainMask);
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in &edges {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            n,
            edges,
            adjacency,
            features,
            labels,
            num_classes,
            train,
            val,
            test,
        })
    }

    /// Like [`GraphDataset::new`] with splits given as node-id lists.
    pub fn from_split_ids(
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
        splits: &SplitIds,
    ) -> Result<Self, GraphError> {
        let n = labels.len();
        let masks = [
            masks_from_ids(n, &splits.train)?,
            masks_from_ids(n, &splits.val)?,
            masks_from_ids(n, &splits.test)?,
        ];
        for (name, ids) in [
            ("train", &splits.train),
            ("val", &splits.val),
            ("test", &splits.test),
        ] {
            let mut sorted = ids.clone();
            sorted.sort_unstable();
            if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
                return Err(GraphError::Parse {
                    file: SPLITS_FILE.into(),
                    line: 0,
                    message: format!("duplicate node {} in {name} split", w[0]),
                });
            }
        }
        Self::new(edges, features, labels, num_classes, masks)
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    /// Normalized undirected edges `(u, v)` with `u < v`, ascending.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn num_features(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn mask(&self, split: Split) -> &[bool] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn split_ids(&self, split: Split) -> Vec<usize> {
        self.mask(split)
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn splits(&self) -> SplitIds {
        SplitIds {
            train: self.split_ids(Split::Train),
            val: self.split_ids(Split::Val),
            test: self.split_ids(Split::Test),
            num_classes: Some(self.num_classes),
        }
    }

    /// Same graph and labels with a replacement feature matrix.
    pub fn with_features(&self, features: Tensor) -> Result<Self, GraphError> {
        if features.shape() != self.features.shape() {
            return Err(GraphError::SizeMismatch {
                what: "feature matrix elements",
                expected: self.features.numel(),
                got: features.numel(),
            });
        }
        Ok(Self {
            features,
            ..self.clone()
        })
    }

    /// Same nodes and attributes with a replacement edge set.
    pub fn with_edges(
        &self,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        Self::new(
            edges,
            self.features.clone(),
            self.labels.clone(),
            self.num_classes,
            [self.train.clone(), self.val.clone(), self.test.clone()],
        )
    }

    /// Reads the four-file directory format.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, GraphError> {
        let dir = dir.as_ref();
        let read = |name: &str| -> Result<(PathBuf, String), GraphError> {
            let path = dir.join(name);
            if !path.is_file() {
                return Err(GraphError::MissingFile(path));
            }
            let text = fs::read_to_string(&path).map_err(|source| GraphError::Io {
                path: path.clone(),
                source,
            })?;
            Ok((path, text))
        };
        let (_, edges_text) = read(EDGES_FILE)?;
        let (_, features_text) = read(FEATURES_FILE)?;
        let (_, labels_text) = read(LABELS_FILE)?;
        let (_, splits_text) = read(SPLITS_FILE)?;

        let labels = parse_labels(&labels_text)?;
        let n = labels.len();
        let features = parse_features(&features_text, n)?;
        let edges = parse_edges(&edges_text)?;
        let splits: SplitIds =
            serde_json::from_str(&splits_text).map_err(|e| GraphError::Parse {
                file: SPLITS_FILE.into(),
                line: e.line(),
                message: e.to_string(),
            })?;
        let num_classes = splits
            .num_classes
            .unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
        Self::from_split_ids(edges, features, labels, num_classes, &splits)
    }

    /// Writes the canonical form of the directory format.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), GraphError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|source| GraphError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let write = |name: &str, text: String| -> Result<(), GraphError> {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|source| GraphError::Io { path, source })
        };
        let mut edges = String::new();
        for &(u, v) in &self.edges {
            edges.push_str(&format!("{u}\t{v}\n"));
        }
        write(EDGES_FILE, edges)?;
        let mut feats = String::new();
        for i in 0..self.n {
            let row: Vec<String> = self
                .features
                .row(i)
                .iter()
                .map(|x| format!("{x}"))
                .collect();
            feats.push_str(&row.join("\t"));
            feats.push('\n');
        }
        write(FEATURES_FILE, feats)?;
        let labels: String = self.labels.iter().map(|y| format!("{y}\n")).collect();
        write(LABELS_FILE, labels)?;
        let splits = serde_json::to_string(&self.splits()).expect("split ids serialize");
        write(SPLITS_FILE, splits + "\n")
    }
}

fn parse_err(file: &str, line: usize, message: impl Into<String>) -> GraphError {
    GraphError::Parse {
        file: file.into(),
        line,
        message: message.into(),
    }
}

fn parse_edges(text: &str) -> Result<Vec<(usize, usize)>, GraphError> {
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(EDGES_FILE, i + 1, "expected `u<TAB>v`"));
        };
        let u = a
            .trim()
            .parse()
            .map_err(|e| parse_err(EDGES_FILE, i + 1, format!("{e}")))?;
        let v = b
            .trim()
            .parse()
            .map_err(|e| parse_err(EDGES_FILE, i + 1, format!("{e}")))?;
        edges.push((u, v));
    }
    Ok(edges)
}

fn parse_labels(text: &str) -> Result<Vec<usize>, GraphError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|e| parse_err(LABELS_FILE, i + 1, format!("{e}")))
        })
        .collect()
}

fn parse_features(text: &str, n: usize) -> Result<Tensor, GraphError> {
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split('\t')
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| parse_err(FEATURES_FILE, i + 1, format!("{e}")))?;
        if let Some(&bad) = row.iter().find(|x| !x.is_finite()) {
            return Err(parse_err(
                FEATURES_FILE,
                i + 1,
                format!("non-finite value {bad}"),
            ));
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(GraphError::RaggedFeatures {
                    line: i + 1,
                    expected: w,
                    got: row.len(),
                })
            }
            _ => {}
        }
        data.extend(row);
        rows += 1;
    }
    if rows != n {
        return Err(GraphError::SizeMismatch {
            what: "feature rows",
            expected: n,
            got: rows,
        });
    }
    Tensor::new(vec![n, width.unwrap_or(0)], data)
        .map_err(|e| parse_err(FEATURES_FILE, 0, e.to_string()))
}
