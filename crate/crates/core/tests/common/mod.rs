#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seal_core::autograd::{Matrix, Tape, Var};
use seal_core::datagen::{generate_dataset, SyntheticTask};
use seal_core::fragmenter::fragment;
use seal_core::molgraph::{perceive_rings, BondOrder, MolecularGraph};
use seal_core::sealnet::{PreparedGraph, SealConfig, SealModel, Task};

/// Hand-derived fragmentations: (smiles, expected `fragment_of`).
pub const GOLDEN: &[(&str, &[usize])] = &[
    // the five named cases
    ("Cc1ccccc1", &[0, 1, 1, 1, 1, 1, 1]),
    ("c1ccccc1-c2ccccc2", &[0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1]),
    ("CC(C)(C)C", &[0, 1, 2, 3, 4]),
    ("Clc1ccccc1", &[0, 1, 1, 1, 1, 1, 1]),
    ("c1ccccc1", &[0, 0, 0, 0, 0, 0]),
    // twenty more
    ("C", &[0]),
    ("CCO", &[0, 0, 0]),
    ("CCCl", &[0, 0, 1]),
    ("FC(F)(F)F", &[0, 1, 2, 3, 4]),
    ("C1CCC2CCCCC2C1", &[0; 10]),
    ("C1CCC2(CC1)CCCC2", &[0; 10]),
    ("OCc1ccccc1", &[0, 0, 1, 1, 1, 1, 1, 1]),
    ("c1ccccc1CCc1ccccc1", &[0, 0, 0, 0, 0, 0, 1, 1, 2, 2, 2, 2, 2, 2]),
    ("CC(=O)Nc1ccccc1", &[0, 0, 0, 0, 1, 1, 1, 1, 1, 1]),
    ("Brc1ccc(I)cc1", &[0, 1, 1, 1, 1, 2, 1, 1]),
    ("CC(C)(C)c1ccccc1", &[0, 1, 2, 3, 4, 4, 4, 4, 4, 4]),
    ("OP(=O)(O)O", &[0, 1, 2, 3, 4]),
    ("C1CC1C1CC1", &[0, 0, 0, 1, 1, 1]),
    ("c1ccoc1", &[0, 0, 0, 0, 0]),
    ("c1ccc2[nH]ccc2c1", &[0; 9]),
    ("NCCc1c[nH]c2ccccc12", &[0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1]),
    (
        "CC(C)Cc1ccc(cc1)C(C)C(=O)O",
        &[0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2],
    ),
    ("ClC(Cl)Cl", &[0, 1, 2, 3]),
    ("C(F)(F)(F)c1ccccc1", &[0, 1, 2, 3, 4, 4, 4, 4, 4, 4]),
    ("O=C1CCCCC1", &[0, 1, 1, 1, 1, 1, 1]),
];

/// A varied pool of molecules drawn from every synthetic task.
pub fn molecule_pool(per_task: usize, seed: u64) -> Vec<String> {
    SyntheticTask::ALL
        .iter()
        .enumerate()
        .flat_map(|(i, &t)| {
            generate_dataset(t, per_task.max(10), 0.5, seed + i as u64)
                .unwrap()
                .into_iter()
                .take(per_task)
                .map(|r| r.smiles)
        })
        .collect()
}

/// Random connected graph: a random tree over `n` atoms plus, sometimes,
/// one extra bond closing a ring. Halogens only appear on leaves.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> MolecularGraph {
    const CORE: [&str; 6] = ["C", "C", "N", "O", "S", "P"];
    const LEAF: [&str; 4] = ["F", "Cl", "Br", "I"];
    let mut parent = vec![usize::MAX; n];
    for (i, p) in parent.iter_mut().enumerate().skip(1) {
        *p = rng.gen_range(0..i);
    }
    let mut is_leaf = vec![true; n];
    for &p in parent.iter().skip(1) {
        is_leaf[p] = false;
    }
    let mut g = MolecularGraph::new();
    for &leaf in &is_leaf {
        let el = if leaf && rng.gen_bool(0.3) {
            *LEAF.choose(rng).unwrap()
        } else {
            *CORE.choose(rng).unwrap()
        };
        g.add_atom(el, false);
    }
    for (i, &p) in parent.iter().enumerate().skip(1) {
        g.add_bond(p, i, BondOrder::Single).unwrap();
    }
    if n >= 3 && rng.gen_bool(0.5) {
        let core: Vec<usize> = (0..n).filter(|&i| !is_halogen_atom(&g, i)).collect();
        for _ in 0..10 {
            let a = *core.choose(rng).unwrap();
            let b = *core.choose(rng).unwrap();
            if a != b && g.bond_between(a, b).is_none() {
                g.add_bond(a, b, BondOrder::Single).unwrap();
                break;
            }
        }
    }
    perceive_rings(g)
}

fn is_halogen_atom(g: &MolecularGraph, i: usize) -> bool {
    seal_core::molgraph::is_halogen(&g.atom(i).element)
}

pub fn prepare(graph: &MolecularGraph) -> PreparedGraph {
    PreparedGraph::new(graph, &fragment(graph).unwrap())
}

pub fn prepare_smiles(smiles: &str) -> PreparedGraph {
    PreparedGraph::from_smiles(smiles).unwrap().2
}

/// Freshly initialized model with a random global bias.
pub fn init_model(task: Task, hidden: usize, layers: usize, seed: u64) -> SealModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = SealModel::new(SealConfig::new(task, hidden, layers), &mut rng).unwrap();
    model.set_bias(rng.gen_range(-1.0..1.0));
    model
}

/// Like [`init_model`], with layer-norm gain and shift also randomized.
pub fn random_model(task: Task, hidden: usize, layers: usize, seed: u64) -> SealModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = SealModel::new(SealConfig::new(task, hidden, layers), &mut rng).unwrap();
    model.set_bias(rng.gen_range(-1.0..1.0));
    // move the layer-norm affine parameters off their identity init
    for v in model.ln_gain.as_mut_slice() {
        *v = rng.gen_range(0.5..1.5);
    }
    for v in model.ln_shift.as_mut_slice() {
        *v = rng.gen_range(-0.5..0.5);
    }
    model
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Relative error with an absolute floor for gradients near zero.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Worst relative error between tape gradients and central differences
/// of a scalar function of `inputs`.
pub fn gradient_check(inputs: &[Matrix], f: impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
    let out = f(&mut tape, &vars);
    tape.backward(out).unwrap();
    let analytic: Vec<Matrix> = vars.iter().map(|&v| tape.grad(v)).collect();

    let eval = |inputs: &[Matrix]| {
        let mut t = Tape::new();
        let vs: Vec<Var> = inputs.iter().map(|m| t.leaf(m.clone())).collect();
        let o = f(&mut t, &vs);
        t.scalar_value(o)
    };
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut work = inputs.to_vec();
    for (k, m) in inputs.iter().enumerate() {
        for j in 0..m.len() {
            let x0 = m.as_slice()[j];
            work[k].as_mut_slice()[j] = x0 + h;
            let up = eval(&work);
            work[k].as_mut_slice()[j] = x0 - h;
            let down = eval(&work);
            work[k].as_mut_slice()[j] = x0;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(rel_err(analytic[k].as_slice()[j], numeric));
        }
    }
    worst
}

/// AUROC by counting every (positive, negative) pair; ties count one half.
pub fn auroc_pairwise(scores: &[f64], labels: &[f64]) -> f64 {
    let (mut doubled, mut pairs) = (0u64, 0u64);
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] < 0.5 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] >= 0.5 {
                continue;
            }
            pairs += 1;
            doubled += match si.partial_cmp(&sj).unwrap() {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    (doubled as f64 / 2.0) / pairs as f64
}

/// Outlier fraction for integer scores, computed in exact integer
/// arithmetic. Quartiles interpolate linearly at position (n − 1)·q;
/// everything is scaled by 8 so the fences stay integral.
pub fn iqr_fraction_exact(scores: &[i64]) -> f64 {
    let mut s = scores.to_vec();
    s.sort_unstable();
    let n = s.len() as i64;
    // 4·Q for q = k/4
    let quartile4 = |k: i64| {
        let pos4 = (n - 1) * k;
        let (lo, rem) = ((pos4 / 4) as usize, pos4 % 4);
        let hi = if rem == 0 { lo } else { lo + 1 };
        4 * s[lo] + rem * (s[hi] - s[lo])
    };
    let (q1, q3) = (quartile4(1), quartile4(3));
    let iqr = q3 - q1;
    // 8·fence = 2·(4Q) ∓ 3·(4·IQR)
    let (lo8, hi8) = (2 * q1 - 3 * iqr, 2 * q3 + 3 * iqr);
    let outliers = s.iter().filter(|&&x| 8 * x < lo8 || 8 * x > hi8).count();
    outliers as f64 / s.len() as f64
}

/// Signed-rank p-value by enumerating all sign assignments. Ranks are
/// kept doubled so that tied (half-integer) ranks stay integral.
pub fn wilcoxon_enumerated(a: &[f64], b: &[f64], alternative: seal_core::training::Alternative) -> f64 {
    use seal_core::training::Alternative;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let m = d.len();
    if m == 0 {
        return 1.0;
    }
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let rank2: Vec<u64> = abs
        .iter()
        .map(|&x| {
            let below = abs.iter().filter(|&&y| y < x).count() as u64;
            let equal = abs.iter().filter(|&&y| y == x).count() as u64;
            // doubled average of ranks below+1 ..= below+equal
            2 * below + equal + 1
        })
        .collect();
    let total: u64 = rank2.iter().sum();
    let w_plus: u64 = rank2.iter().zip(&d).filter(|(_, &x)| x > 0.0).map(|(r, _)| r).sum();
    let w_minus = total - w_plus;
    let mut count_le = 0u64;
    let mut count_ge = 0u64;
    let mut count_le_min = 0u64;
    let w_min = w_plus.min(w_minus);
    for mask in 0u64..(1 << m) {
        let w: u64 = (0..m).filter(|&i| mask >> i & 1 == 1).map(|i| rank2[i]).sum();
        count_le += u64::from(w <= w_plus);
        count_ge += u64::from(w >= w_plus);
        count_le_min += u64::from(w <= w_min);
    }
    let all = (1u64 << m) as f64;
    match alternative {
        Alternative::Greater => count_ge as f64 / all,
        Alternative::Less => count_le as f64 / all,
        Alternative::TwoSided => (2.0 * count_le_min as f64 / all).min(1.0),
    }
}
