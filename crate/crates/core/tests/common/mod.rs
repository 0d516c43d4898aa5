#![allow(dead_code)]

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use riskchain::{
    build_refined, mstable_hull, two_by_two, Claim, Error, MarketModel, Partition, RiskSet,
    ScenarioModel, StageLabel,
};

pub fn labels(s: &[&str]) -> Vec<StageLabel> {
    s.iter().map(|l| l.parse().unwrap()).collect()
}

pub fn names(n: usize) -> Vec<String> {
    (0..n).map(|w| format!("w{w}")).collect()
}

/// Groups the atoms of `p` into at most `groups` random blocks.
pub fn coarsen(rng: &mut impl Rng, p: &Partition, groups: usize) -> Partition {
    let g = groups.clamp(1, p.len());
    let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); g];
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.shuffle(rng);
    // every block receives at least one atom
    for (k, &a) in order.iter().enumerate() {
        let b = if k < g { k } else { rng.gen_range(0..g) };
        blocks[b].extend_from_slice(&p.atoms()[a]);
    }
    Partition::new(p.n(), blocks).unwrap()
}

/// Finest partition coarser than both.
pub fn join_coarse(p: &Partition, q: &Partition) -> Partition {
    let n = p.n();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        parent[x] = r;
        r
    }
    for part in [p, q] {
        for atom in part.atoms() {
            for w in &atom[1..] {
                let (a, b) = (find(&mut parent, atom[0]), find(&mut parent, *w));
                parent[a] = b;
            }
        }
    }
    let mut blocks: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for w in 0..n {
        let r = find(&mut parent, w);
        blocks.entry(r).or_default().push(w);
    }
    Partition::new(n, blocks.into_values().collect()).unwrap()
}

/// Refining chain of `stages` partitions: trivial first, discrete last.
pub fn partition_chain(rng: &mut impl Rng, n: usize, stages: usize) -> Vec<Partition> {
    let mut out = vec![Partition::discrete(n)];
    for k in (1..stages - 1).rev() {
        let finer = out.last().unwrap();
        let target = 1 + rng
            .gen_range(0..finer.len().max(1))
            .max(k.min(finer.len() - 1));
        out.push(coarsen(rng, finer, target.min(finer.len())));
    }
    if stages > 1 {
        out.push(Partition::trivial(n));
    }
    out.reverse();
    out
}

pub fn random_measure(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0f64)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

pub fn random_model(rng: &mut impl Rng, n: usize, grid: &[&str]) -> Arc<ScenarioModel> {
    let parts = partition_chain(rng, n, grid.len());
    Arc::new(
        ScenarioModel::from_partitions(names(n), labels(grid), parts, random_measure(rng, n))
            .unwrap(),
    )
}

/// A whole-time model together with a random financial filtration, refined
/// with half-steps.
pub fn random_market(rng: &mut impl Rng, n: usize, horizon: usize) -> MarketModel {
    let grid: Vec<String> = (0..=horizon).map(|t| t.to_string()).collect();
    let grid: Vec<&str> = grid.iter().map(|s| s.as_str()).collect();
    let plain = random_model(rng, n, &grid);
    let g: Vec<Partition> = plain.stages().map(|s| plain.partition(s).clone()).collect();
    let mut f = vec![Partition::trivial(n); horizon + 1];
    let top = g[horizon].len();
    let k = rng.gen_range(1..=top);
    f[horizon] = coarsen(rng, &g[horizon], k);
    for t in (1..horizon).rev() {
        let base = join_coarse(&g[t], &f[t + 1]);
        let k = rng.gen_range(1..=base.len());
        f[t] = coarsen(rng, &base, k);
    }
    build_refined(&plain, f).unwrap()
}

pub fn random_set(rng: &mut impl Rng, model: &Arc<ScenarioModel>, k: usize) -> RiskSet {
    let verts = (0..k).map(|_| random_measure(rng, model.n())).collect();
    RiskSet::from_vertices(model.clone(), verts).unwrap()
}

pub fn random_claim(rng: &mut impl Rng, n: usize) -> Claim {
    Claim::new((0..n).map(|_| rng.gen_range(-1.0..1.0f64)).collect())
}

/// Rounded to a coarse grid so ties and zeros occur.
pub fn lumpy_claim(rng: &mut impl Rng, n: usize) -> Claim {
    Claim::new(
        (0..n)
            .map(|_| rng.gen_range(-4i32..=4) as f64 * 0.5)
            .collect(),
    )
}

/// Draws random sets until the m-stable hull fits the size bound.
pub fn random_set_with_hull(
    rng: &mut impl Rng,
    model: &Arc<ScenarioModel>,
    max_vertices: usize,
) -> (RiskSet, RiskSet) {
    for _ in 0..1000 {
        let k = rng.gen_range(2..=max_vertices);
        let rs = random_set(rng, model, k);
        match mstable_hull(&rs) {
            Ok(h) => return (rs, h),
            Err(Error::TooLarge { .. }) => continue,
            Err(e) => panic!("hull failed: {e}"),
        }
    }
    panic!("no random set with a small hull");
}

pub fn six(eps: f64) -> RiskSet {
    RiskSet::from_vertices(two_by_two::model(), two_by_two::extreme_points(eps)).unwrap()
}

/// Two measures on a two-period binary tree whose pasting is strictly
/// larger than their hull.
pub fn crossed() -> RiskSet {
    let m = Arc::new(
        ScenarioModel::new(
            names(4),
            labels(&["0", "1", "2"]),
            vec![
                vec![vec![0, 1, 2, 3]],
                vec![vec![0, 1], vec![2, 3]],
                (0..4).map(|w| vec![w]).collect(),
            ],
            vec![0.25; 4],
        )
        .unwrap(),
    );
    RiskSet::from_vertices(m, vec![vec![0.4, 0.1, 0.4, 0.1], vec![0.1, 0.4, 0.1, 0.4]]).unwrap()
}

pub fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}
