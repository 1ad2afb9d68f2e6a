//! Restricted SMILES reader and writer.
//!
//! Supported: the organic subset, bracket atoms (isotope, chirality,
//! hydrogen count, charge and atom class are accepted and discarded),
//! branches, ring closures (`1`-`9` and `%nn`), bond symbols `- = # :` and
//! the directional `/` `\` (read as single bonds), and `.` separators.

use std::collections::BTreeMap;

use super::{BondOrder, MolError, MolecularGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BondSymbol {
    Single,
    Double,
    Triple,
    Aromatic,
}

struct RingOpening {
    atom: usize,
    bond: Option<BondSymbol>,
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    graph: MolecularGraph,
    prev: Option<usize>,
    pending: Option<BondSymbol>,
    branches: Vec<(Option<usize>, usize)>,
    open_rings: BTreeMap<u32, RingOpening>,
}

pub fn parse_smiles(text: &str) -> Result<MolecularGraph, MolError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(MolError::EmptyInput);
    }
    if let Some((position, ch)) = text.char_indices().find(|(_, c)| !c.is_ascii()) {
        return Err(MolError::UnknownToken {
            position,
            token: ch.to_string(),
        });
    }
    Parser {
        bytes: text.as_bytes(),
        pos: 0,
        graph: MolecularGraph::new(),
        prev: None,
        pending: None,
        branches: Vec::new(),
        open_rings: BTreeMap::new(),
    }
    .run()
}

impl<'a> Parser<'a> {
    fn unknown(&self, start: usize) -> MolError {
        let end = (start + 1).min(self.bytes.len());
        MolError::UnknownToken {
            position: start,
            token: String::from_utf8_lossy(&self.bytes[start..end]).into_owned(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn run(mut self) -> Result<MolecularGraph, MolError> {
        while let Some(c) = self.peek() {
            let start = self.pos;
            match c {
                b'(' => {
                    if self.prev.is_none() {
                        return Err(MolError::UnbalancedParenthesis(start));
                    }
                    self.branches.push((self.prev, start));
                    self.pos += 1;
                }
                b')' => {
                    let (atom, _) = self
                        .branches
                        .pop()
                        .ok_or(MolError::UnbalancedParenthesis(start))?;
                    if self.pending.is_some() {
                        return Err(self.unknown(start));
                    }
                    self.prev = atom;
                    self.pos += 1;
                }
                b'-' | b'/' | b'\\' => self.set_bond(BondSymbol::Single, start)?,
                b'=' => self.set_bond(BondSymbol::Double, start)?,
                b'#' => self.set_bond(BondSymbol::Triple, start)?,
                b':' => self.set_bond(BondSymbol::Aromatic, start)?,
                b'.' => {
                    if self.pending.is_some() {
                        return Err(self.unknown(start));
                    }
                    self.prev = None;
                    self.pos += 1;
                }
                b'0'..=b'9' => {
                    self.pos += 1;
                    self.ring_closure(u32::from(c - b'0'), start)?;
                }
                b'%' => {
                    let digits = self
                        .bytes
                        .get(start + 1..start + 3)
                        .filter(|d| d.iter().all(u8::is_ascii_digit))
                        .ok_or_else(|| self.unknown(start))?;
                    let n = u32::from(digits[0] - b'0') * 10 + u32::from(digits[1] - b'0');
                    self.pos += 3;
                    self.ring_closure(n, start)?;
                }
                b'[' => {
                    let (element, aromatic) = self.bracket_atom()?;
                    self.atom(&element, aromatic)?;
                }
                _ => {
                    let (element, aromatic, len) = organic_atom(&self.bytes[start..])
                        .ok_or_else(|| self.unknown(start))?;
                    self.pos += len;
                    self.atom(element, aromatic)?;
                }
            }
        }
        if let Some(&(_, pos)) = self.branches.last() {
            return Err(MolError::UnbalancedParenthesis(pos));
        }
        if let Some((&n, _)) = self.open_rings.iter().next() {
            return Err(MolError::UnclosedRing(n));
        }
        if self.pending.is_some() {
            return Err(self.unknown(self.bytes.len() - 1));
        }
        if self.graph.n_atoms() == 0 {
            return Err(MolError::EmptyInput);
        }
        Ok(self.graph)
    }

    fn set_bond(&mut self, sym: BondSymbol, start: usize) -> Result<(), MolError> {
        if self.pending.is_some() || self.prev.is_none() {
            return Err(self.unknown(start));
        }
        self.pending = Some(sym);
        self.pos += 1;
        Ok(())
    }

    fn atom(&mut self, element: &str, aromatic: bool) -> Result<(), MolError> {
        let idx = self.graph.add_atom(element, aromatic);
        if let Some(prev) = self.prev {
            let sym = self.pending.take();
            self.connect(prev, idx, sym)?;
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn connect(&mut self, a: usize, b: usize, sym: Option<BondSymbol>) -> Result<(), MolError> {
        let both_aromatic = self.graph.atom(a).aromatic && self.graph.atom(b).aromatic;
        let order = match sym {
            None if both_aromatic => BondOrder::Aromatic,
            None | Some(BondSymbol::Single) => BondOrder::Single,
            Some(BondSymbol::Double) => BondOrder::Double,
            Some(BondSymbol::Triple) => BondOrder::Triple,
            Some(BondSymbol::Aromatic) => BondOrder::Aromatic,
        };
        self.graph.add_bond(a, b, order).map(|_| ())
    }

    fn ring_closure(&mut self, n: u32, start: usize) -> Result<(), MolError> {
        let atom = self.prev.ok_or_else(|| self.unknown(start))?;
        let sym = self.pending.take();
        match self.open_rings.remove(&n) {
            Some(open) => {
                let bond = match (open.bond, sym) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(MolError::InvalidBond {
                            a: open.atom,
                            b: atom,
                            reason: "conflicting ring-closure bond symbols",
                        })
                    }
                    (a, b) => a.or(b),
                };
                self.connect(open.atom, atom, bond)
            }
            None => {
                self.open_rings.insert(n, RingOpening { atom, bond: sym });
                Ok(())
            }
        }
    }

    fn bracket_atom(&mut self) -> Result<(String, bool), MolError> {
        let open = self.pos;
        self.pos += 1;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        let sym_start = self.pos;
        let c = self.peek().ok_or_else(|| self.unknown(open))?;
        let (element, aromatic) = if c == b'*' {
            self.pos += 1;
            ("*".to_string(), false)
        } else if c.is_ascii_uppercase() {
            self.pos += 1;
            let mut sym = String::from(c as char);
            if let Some(l) = self.peek().filter(u8::is_ascii_lowercase) {
                sym.push(l as char);
                self.pos += 1;
            }
            (sym, false)
        } else if c.is_ascii_lowercase() {
            let two = self.bytes.get(self.pos..self.pos + 2);
            let sym = match two {
                Some(b"se") | Some(b"as") | Some(b"te") => {
                    let s = std::str::from_utf8(two.unwrap()).unwrap_or_default();
                    self.pos += 2;
                    capitalize(s)
                }
                _ if b"bcnops".contains(&c) => {
                    self.pos += 1;
                    (c as char).to_ascii_uppercase().to_string()
                }
                _ => return Err(self.unknown(sym_start)),
            };
            (sym, true)
        } else {
            return Err(self.unknown(sym_start));
        };
        // chirality, hydrogen count, charge, class: accepted and ignored
        while let Some(c) = self.peek() {
            match c {
                b']' => {
                    self.pos += 1;
                    return Ok((element, aromatic));
                }
                b'@' | b'H' | b'+' | b'-' | b':' | b'0'..=b'9' => self.pos += 1,
                _ => return Err(self.unknown(self.pos)),
            }
        }
        Err(self.unknown(open))
    }
}

fn capitalize(s: &str) -> String {
    let mut out = s[..1].to_ascii_uppercase();
    out.push_str(&s[1..]);
    out
}

fn organic_atom(rest: &[u8]) -> Option<(&'static str, bool, usize)> {
    Some(match rest {
        [b'C', b'l', ..] => ("Cl", false, 2),
        [b'B', b'r', ..] => ("Br", false, 2),
        [b'B', ..] => ("B", false, 1),
        [b'C', ..] => ("C", false, 1),
        [b'N', ..] => ("N", false, 1),
        [b'O', ..] => ("O", false, 1),
        [b'P', ..] => ("P", false, 1),
        [b'S', ..] => ("S", false, 1),
        [b'F', ..] => ("F", false, 1),
        [b'I', ..] => ("I", false, 1),
        [b'b', ..] => ("B", true, 1),
        [b'c', ..] => ("C", true, 1),
        [b'n', ..] => ("N", true, 1),
        [b'o', ..] => ("O", true, 1),
        [b'p', ..] => ("P", true, 1),
        [b's', ..] => ("S", true, 1),
        _ => return None,
    })
}

const ORGANIC_SUBSET: [&str; 10] = ["B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"];
const AROMATIC_ORGANIC: [&str; 6] = ["B", "C", "N", "O", "P", "S"];

fn atom_token(element: &str, aromatic: bool) -> String {
    if aromatic {
        let lower = element.to_lowercase();
        if AROMATIC_ORGANIC.contains(&element) {
            lower
        } else {
            format!("[{lower}]")
        }
    } else if ORGANIC_SUBSET.contains(&element) {
        element.to_string()
    } else {
        format!("[{element}]")
    }
}

fn bond_token(graph: &MolecularGraph, bond: usize) -> &'static str {
    let b = graph.bond(bond);
    match b.order {
        BondOrder::Single if graph.atom(b.a).aromatic && graph.atom(b.b).aromatic => "-",
        BondOrder::Single | BondOrder::Aromatic => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
    }
}

fn ring_label(n: u32) -> String {
    if n < 10 {
        n.to_string()
    } else {
        format!("%{n:02}")
    }
}

/// Writes a SMILES string by depth-first traversal from the lowest atom
/// index of each connected component. Aromatic flags and bond orders are
/// preserved, so reparsing yields an isomorphic graph.
pub fn write_smiles(graph: &MolecularGraph) -> String {
    let n = graph.n_atoms();
    let mut order = vec![usize::MAX; n];
    let mut children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut tree_bond = vec![false; graph.n_bonds()];
    let mut counter = 0;
    let mut roots = Vec::new();

    for root in 0..n {
        if order[root] != usize::MAX {
            continue;
        }
        roots.push(root);
        let mut stack = vec![(root, usize::MAX)];
        while let Some((atom, via)) = stack.pop() {
            if order[atom] != usize::MAX {
                continue;
            }
            order[atom] = counter;
            counter += 1;
            if via != usize::MAX {
                tree_bond[via] = true;
                let parent = graph.bond(via).other(atom);
                children[parent].push((atom, via));
            }
            let mut next: Vec<(usize, usize)> = graph
                .incident(atom)
                .iter()
                .copied()
                .filter(|&(nb, _)| order[nb] == usize::MAX)
                .collect();
            next.sort_unstable();
            for item in next.into_iter().rev() {
                stack.push(item);
            }
        }
    }

    // closures at each atom, sorted by the partner's visit order
    let mut closures: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (idx, b) in graph.bonds().iter().enumerate() {
        if !tree_bond[idx] {
            closures[b.a].push((b.b, idx));
            closures[b.b].push((b.a, idx));
        }
    }
    for list in &mut closures {
        list.sort_by_key(|&(nb, _)| order[nb]);
    }

    struct Emitter<'g> {
        graph: &'g MolecularGraph,
        order: Vec<usize>,
        children: Vec<Vec<(usize, usize)>>,
        closures: Vec<Vec<(usize, usize)>>,
        labels: BTreeMap<usize, u32>,
        free: Vec<bool>,
        out: String,
    }

    impl Emitter<'_> {
        fn take_label(&mut self) -> u32 {
            let n = (1..self.free.len())
                .find(|&i| self.free[i])
                .unwrap_or_else(|| {
                    self.free.push(true);
                    self.free.len() - 1
                });
            self.free[n] = false;
            n as u32
        }

        fn emit(&mut self, atom: usize) {
            let a = self.graph.atom(atom);
            self.out.push_str(&atom_token(&a.element, a.aromatic));
            for (partner, bond) in self.closures[atom].clone() {
                if self.order[partner] < self.order[atom] {
                    let label = self.labels.remove(&bond).expect("closure opened earlier");
                    self.free[label as usize] = true;
                    self.out.push_str(bond_token(self.graph, bond));
                    self.out.push_str(&ring_label(label));
                } else {
                    let label = self.take_label();
                    self.labels.insert(bond, label);
                    self.out.push_str(bond_token(self.graph, bond));
                    self.out.push_str(&ring_label(label));
                }
            }
            let kids = self.children[atom].clone();
            for (i, &(child, bond)) in kids.iter().enumerate() {
                let last = i + 1 == kids.len();
                if !last {
                    self.out.push('(');
                }
                self.out.push_str(bond_token(self.graph, bond));
                self.emit(child);
                if !last {
                    self.out.push(')');
                }
            }
        }
    }

    let mut em = Emitter {
        graph,
        order,
        children,
        closures,
        labels: BTreeMap::new(),
        free: vec![false],
        out: String::new(),
    };
    for (i, &root) in roots.iter().enumerate() {
        if i > 0 {
            em.out.push('.');
        }
        em.emit(root);
    }
    em.out
}
