//! Synthetic labeled molecules with ground-truth atom sets, JSONL I/O and
//! seeded dataset splits.
//!
//! Molecules are assembled from a fixed building-block vocabulary (rings,
//! linkers, terminal groups) joined by single bonds. The label and the
//! ground truth always come from running the task detector on the
//! re-parsed output SMILES, so both refer to the atom order a reader sees.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::molgraph::{is_halogen, matched_atom_sets, parse_smiles, write_smiles, BondOrder, MolError, MolecularGraph};

/// Bumped whenever the building blocks or the sampling scheme change.
pub const VOCABULARY_VERSION: u32 = 1;

pub const INDOLE_SMILES: &str = "c1ccc2[nH]ccc2c1";

const MAX_ATTEMPTS_PER_RECORD: usize = 2_000;
const MAX_ATOMS: usize = 45;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("could not realize a {label} example for task {task} after {attempts} attempts")]
    VocabularyExhausted {
        task: SyntheticTask,
        label: &'static str,
        attempts: usize,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Molecule(#[from] MolError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SyntheticTask {
    /// Any halogen atom.
    #[serde(rename = "X")]
    Halogen,
    /// Any phosphorus atom.
    #[serde(rename = "P")]
    Phosphorus,
    /// Any boron atom.
    #[serde(rename = "B")]
    Boron,
    #[serde(rename = "indole")]
    Indole,
    /// At least `ring_threshold` rings.
    #[serde(rename = "rings-count")]
    RingsCount,
}

impl SyntheticTask {
    pub const ALL: [SyntheticTask; 5] = [
        SyntheticTask::Halogen,
        SyntheticTask::Phosphorus,
        SyntheticTask::Boron,
        SyntheticTask::Indole,
        SyntheticTask::RingsCount,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SyntheticTask::Halogen => "X",
            SyntheticTask::Phosphorus => "P",
            SyntheticTask::Boron => "B",
            SyntheticTask::Indole => "indole",
            SyntheticTask::RingsCount => "rings-count",
        }
    }
}

impl fmt::Display for SyntheticTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SyntheticTask {
    type Err = DatagenError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SyntheticTask::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| DatagenError::InvalidArgument(format!("unknown task {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRecord {
    pub smiles: String,
    pub label: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_atoms: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenOptions {
    pub ring_threshold: usize,
}

impl Default for GenOptions {
    fn default() -> Self {
        Self { ring_threshold: 3 }
    }
}

fn indole_pattern() -> &'static MolecularGraph {
    static PATTERN: OnceLock<MolecularGraph> = OnceLock::new();
    PATTERN.get_or_init(|| parse_smiles(INDOLE_SMILES).expect("valid indole SMILES"))
}

/// Ground-truth atoms if the molecule is a positive for `task`, else `None`.
/// Expects a graph with perceived rings.
pub fn detect(task: SyntheticTask, graph: &MolecularGraph, opts: &GenOptions) -> Option<Vec<usize>> {
    let by_element = |pred: &dyn Fn(&str) -> bool| -> Vec<usize> {
        (0..graph.n_atoms()).filter(|&i| pred(&graph.atom(i).element)).collect()
    };
    let atoms = match task {
        SyntheticTask::Halogen => by_element(&is_halogen),
        SyntheticTask::Phosphorus => by_element(&|e| e == "P"),
        SyntheticTask::Boron => by_element(&|e| e == "B"),
        SyntheticTask::Indole => {
            let sets = matched_atom_sets(graph, indole_pattern()).expect("pattern within size limit");
            let mut all: Vec<usize> = sets.into_iter().flatten().collect();
            all.sort_unstable();
            all.dedup();
            all
        }
        SyntheticTask::RingsCount => {
            if graph.ring_count() < opts.ring_threshold {
                Vec::new()
            } else {
                (0..graph.n_atoms()).filter(|&i| graph.atom(i).in_ring).collect()
            }
        }
    };
    (!atoms.is_empty()).then_some(atoms)
}

/// Labels a SMILES string with the task detector.
pub fn annotate(task: SyntheticTask, smiles: &str, opts: &GenOptions) -> Result<DataRecord, MolError> {
    let graph = MolecularGraph::from_smiles(smiles)?;
    let gt = detect(task, &graph, opts);
    Ok(DataRecord {
        smiles: smiles.to_string(),
        label: if gt.is_some() { 1.0 } else { 0.0 },
        gt_atoms: gt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Key {
    None,
    Halogen,
    Phosphorus,
    Boron,
    Indole,
}

struct Block {
    smiles: &'static str,
    /// Attachment atoms; an atom listed twice accepts two substituents.
    sites: &'static [usize],
    key: Key,
    rings: usize,
    /// Relative sampling weight.
    weight: u32,
}

const fn block(smiles: &'static str, sites: &'static [usize], key: Key, rings: usize, weight: u32) -> Block {
    Block {
        smiles,
        sites,
        key,
        rings,
        weight,
    }
}

const RINGS: [Block; 8] = [
    block("c1ccccc1", &[0, 1, 2, 3, 4, 5], Key::None, 1, 4),
    block("c1ccncc1", &[0, 1, 2, 4, 5], Key::None, 1, 2),
    block("C1CCCCC1", &[0, 1, 2, 3, 4, 5], Key::None, 1, 2),
    block("C1CCCC1", &[0, 1, 2, 3, 4], Key::None, 1, 2),
    block("c1ccsc1", &[0, 1, 2, 4], Key::None, 1, 1),
    block("c1ccoc1", &[0, 1, 2, 4], Key::None, 1, 1),
    block(INDOLE_SMILES, &[0, 1, 2, 5, 6, 8], Key::Indole, 2, 1),
    block("C1CCNCC1", &[0, 1, 2, 4, 5], Key::None, 1, 2),
];

const LINKERS: [Block; 7] = [
    block("C", &[0, 0], Key::None, 0, 2),
    block("CC", &[0, 1], Key::None, 0, 2),
    block("CCC", &[0, 2], Key::None, 0, 1),
    block("O", &[0, 0], Key::None, 0, 1),
    block("N", &[0, 0], Key::None, 0, 1),
    block("C(=O)N", &[0, 2], Key::None, 0, 1),
    block("CCOCC", &[0, 4], Key::None, 0, 1),
];

const TERMINALS: [Block; 18] = [
    block("C", &[0], Key::None, 0, 3),
    block("CC", &[0], Key::None, 0, 2),
    block("O", &[0], Key::None, 0, 2),
    block("N", &[0], Key::None, 0, 2),
    block("C(=O)O", &[0], Key::None, 0, 1),
    block("C#N", &[0], Key::None, 0, 1),
    block("OC", &[0], Key::None, 0, 1),
    block("F", &[0], Key::Halogen, 0, 2),
    block("Cl", &[0], Key::Halogen, 0, 2),
    block("Br", &[0], Key::Halogen, 0, 1),
    block("I", &[0], Key::Halogen, 0, 1),
    block("C(F)(F)F", &[0], Key::Halogen, 0, 1),
    block("P(=O)(O)O", &[0], Key::Phosphorus, 0, 1),
    block("B(O)O", &[0], Key::Boron, 0, 1),
    block("[B-](O)(O)O", &[0], Key::Boron, 0, 4),
    block("S", &[0], Key::None, 0, 1),
    block("S(=O)(=O)C", &[0], Key::None, 0, 1),
    block("[N+](=O)[O-]", &[0], Key::None, 0, 1),
];

fn is_alkyl_chain(b: &Block) -> bool {
    b.smiles.len() >= 2 && b.smiles.bytes().all(|c| c == b'C')
}

fn task_key(task: SyntheticTask) -> Key {
    match task {
        SyntheticTask::Halogen => Key::Halogen,
        SyntheticTask::Phosphorus => Key::Phosphorus,
        SyntheticTask::Boron => Key::Boron,
        SyntheticTask::Indole => Key::Indole,
        SyntheticTask::RingsCount => Key::None,
    }
}

fn pick<'a>(rng: &mut impl Rng, pool: &[&'a Block]) -> &'a Block {
    pool.choose_weighted(rng, |b| b.weight).expect("nonempty pool with positive weights")
}

#[derive(Default)]
struct Assembly {
    graph: MolecularGraph,
    open: Vec<usize>,
}

impl Assembly {
    /// Adds a block. When the molecule is nonempty the block is bonded to
    /// `anchor` (or a random open site). Returns the block's unused sites.
    fn attach(&mut self, b: &Block, anchor: Option<usize>, rng: &mut impl Rng) -> Option<Vec<usize>> {
        let part = parse_smiles(b.smiles).expect("valid block SMILES");
        let offset = self.graph.n_atoms();
        let target = if offset == 0 {
            None
        } else {
            let pos = match anchor {
                Some(a) => self.open.iter().position(|&s| s == a)?,
                None if self.open.is_empty() => return None,
                None => rng.gen_range(0..self.open.len()),
            };
            Some(self.open.swap_remove(pos))
        };
        for atom in part.atoms() {
            self.graph.add_atom(&atom.element, atom.aromatic);
        }
        for bond in part.bonds() {
            self.graph
                .add_bond(bond.a + offset, bond.b + offset, bond.order)
                .expect("block bonds are valid");
        }
        let mut sites: Vec<usize> = b.sites.iter().map(|s| s + offset).collect();
        if let Some(t) = target {
            let own = sites.swap_remove(rng.gen_range(0..sites.len()));
            self.graph.add_bond(t, own, BondOrder::Single).ok()?;
        }
        self.open.extend_from_slice(&sites);
        Some(sites)
    }
}

fn sample_molecule(
    task: SyntheticTask,
    positive: bool,
    opts: &GenOptions,
    rng: &mut impl Rng,
) -> Option<MolecularGraph> {
    let key = task_key(task);
    let allowed = |b: &&Block| positive || key == Key::None || b.key != key;
    let rings: Vec<&Block> = RINGS.iter().filter(allowed).collect();
    // all-carbon chains look like carbocycles to the network once inter-fragment
    // messages are suppressed, so ring counting uses hetero linkers only
    let keep_chain = |b: &&Block| task != SyntheticTask::RingsCount || !is_alkyl_chain(b);
    let terminals: Vec<&Block> = TERMINALS.iter().filter(allowed).filter(keep_chain).collect();
    let linkers: Vec<&Block> = LINKERS.iter().filter(keep_chain).collect();

    let mut ring_blocks: Vec<&Block> = Vec::new();
    match task {
        SyntheticTask::RingsCount => {
            let t = opts.ring_threshold;
            let target = if positive {
                rng.gen_range(t..=t + 1)
            } else {
                rng.gen_range(0..t.max(1))
            };
            let mut count = 0;
            while count < target {
                let b = pick(rng, &rings);
                count += b.rings;
                ring_blocks.push(b);
            }
        }
        _ => {
            let k = *[1usize, 1, 2, 2, 3].choose(rng).expect("nonempty");
            for _ in 0..k {
                ring_blocks.push(pick(rng, &rings));
            }
            if positive && key == Key::Indole && !ring_blocks.iter().any(|b| b.key == Key::Indole) {
                let i = rng.gen_range(0..ring_blocks.len());
                ring_blocks[i] = &RINGS[6];
            }
        }
    }

    let mut extra: Vec<&Block> = Vec::new();
    if positive && matches!(key, Key::Halogen | Key::Phosphorus | Key::Boron) {
        let pool: Vec<&Block> = TERMINALS.iter().filter(|b| b.key == key).collect();
        let n_key = if key == Key::Halogen { rng.gen_range(1..=2) } else { 1 };
        for _ in 0..n_key {
            extra.push(pick(rng, &pool));
        }
    }
    for _ in 0..rng.gen_range(0..=3) {
        extra.push(pick(rng, &terminals));
    }
    extra.shuffle(rng);

    let mut asm = Assembly::default();
    let core = if ring_blocks.is_empty() {
        pick(rng, &linkers)
    } else {
        ring_blocks.remove(0)
    };
    asm.attach(core, None, rng)?;
    for ring in ring_blocks {
        if rng.gen_bool(0.5) {
            let sites = asm.attach(pick(rng, &linkers), None, rng)?;
            let anchor = *sites.choose(rng)?;
            asm.attach(ring, Some(anchor), rng)?;
        } else {
            asm.attach(ring, None, rng)?;
        }
    }
    if rng.gen_bool(0.3) {
        asm.attach(pick(rng, &linkers), None, rng)?;
    }
    for t in extra {
        asm.attach(t, None, rng)?;
    }
    (asm.graph.n_atoms() <= MAX_ATOMS).then_some(asm.graph)
}

/// Seeded synthetic dataset with exactly `round(n · positive_fraction)`
/// positives in shuffled order. Duplicate SMILES are rejected.
pub fn generate_dataset(
    task: SyntheticTask,
    n: usize,
    positive_fraction: f64,
    seed: u64,
) -> Result<Vec<DataRecord>, DatagenError> {
    generate_dataset_with(task, n, positive_fraction, seed, &GenOptions::default())
}

pub fn generate_dataset_with(
    task: SyntheticTask,
    n: usize,
    positive_fraction: f64,
    seed: u64,
    opts: &GenOptions,
) -> Result<Vec<DataRecord>, DatagenError> {
    if n < 10 {
        return Err(DatagenError::InvalidArgument(format!("n must be at least 10, got {n}")));
    }
    if !(positive_fraction > 0.0 && positive_fraction < 1.0) {
        return Err(DatagenError::InvalidArgument(format!(
            "positive fraction {positive_fraction} outside (0, 1)"
        )));
    }
    if task == SyntheticTask::RingsCount && opts.ring_threshold == 0 {
        return Err(DatagenError::InvalidArgument("ring threshold must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_pos = (n as f64 * positive_fraction).round() as usize;
    let mut wanted: Vec<bool> = (0..n).map(|i| i < n_pos).collect();
    wanted.shuffle(&mut rng);

    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    for positive in wanted {
        let mut record = None;
        for _ in 0..MAX_ATTEMPTS_PER_RECORD {
            let Some(graph) = sample_molecule(task, positive, opts, &mut rng) else {
                continue;
            };
            let smiles = write_smiles(&graph);
            if seen.contains(&smiles) {
                continue;
            }
            let r = annotate(task, &smiles, opts)?;
            if (r.label == 1.0) == positive {
                seen.insert(smiles);
                record = Some(r);
                break;
            }
        }
        match record {
            Some(r) => out.push(r),
            None => {
                return Err(DatagenError::VocabularyExhausted {
                    task,
                    label: if positive { "positive" } else { "negative" },
                    attempts: MAX_ATTEMPTS_PER_RECORD,
                })
            }
        }
    }
    Ok(out)
}

const KNOWN_FIELDS: [&str; 3] = ["smiles", "label", "gt_atoms"];

/// Parses JSONL records. Blank lines are skipped; unknown fields are
/// logged and ignored.
pub fn parse_jsonl(text: &str) -> Result<Vec<DataRecord>, DatagenError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| DatagenError::Parse {
            line: line_no,
            message,
        };
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        if let Some(obj) = value.as_object() {
            for k in obj.keys().filter(|k| !KNOWN_FIELDS.contains(&k.as_str())) {
                log::warn!("line {line_no}: ignoring unknown field {k:?}");
            }
        }
        let record: DataRecord = serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
        out.push(record);
    }
    Ok(out)
}

pub fn load_jsonl(path: &Path) -> Result<Vec<DataRecord>, DatagenError> {
    parse_jsonl(&std::fs::read_to_string(path)?)
}

pub fn to_jsonl(records: &[DataRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl(path: &Path, records: &[DataRecord]) -> Result<(), DatagenError> {
    std::fs::write(path, to_jsonl(records))?;
    Ok(())
}

fn is_binary(records: &[DataRecord]) -> bool {
    records.iter().all(|r| r.label == 0.0 || r.label == 1.0)
}

/// Seeded k-fold split, returning held-out indices per fold. Binary labels
/// are stratified: shuffled positives then shuffled negatives are dealt
/// round-robin, so fold sizes and per-fold positive counts differ by at
/// most one.
pub fn split_folds(records: &[DataRecord], n_folds: usize, seed: u64) -> Result<Vec<Vec<usize>>, DatagenError> {
    if n_folds < 2 || n_folds > records.len() {
        return Err(DatagenError::InvalidArgument(format!(
            "{n_folds} folds for {} records",
            records.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = if is_binary(records) {
        let (mut pos, mut neg): (Vec<usize>, Vec<usize>) = (0..records.len()).partition(|&i| records[i].label == 1.0);
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        pos.into_iter().chain(neg).collect()
    } else {
        let mut all: Vec<usize> = (0..records.len()).collect();
        all.shuffle(&mut rng);
        all
    };
    let mut folds = vec![Vec::new(); n_folds];
    for (i, idx) in order.into_iter().enumerate() {
        folds[i % n_folds].push(idx);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Seeded train/test split, stratified for binary labels. Returns
/// ascending `(train, test)` indices.
pub fn split_test(records: &[DataRecord], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), DatagenError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DatagenError::InvalidArgument(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: Vec<Vec<usize>> = if is_binary(records) {
        let (pos, neg): (Vec<usize>, Vec<usize>) = (0..records.len()).partition(|&i| records[i].label == 1.0);
        vec![pos, neg]
    } else {
        vec![(0..records.len()).collect()]
    };
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for mut g in groups {
        g.shuffle(&mut rng);
        let k = (g.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&g[..k]);
        train.extend_from_slice(&g[k..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(DatagenError::InvalidArgument(format!(
            "test fraction {test_fraction} leaves an empty split for {} records",
            records.len()
        )));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
