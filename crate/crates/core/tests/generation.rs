use std::path::Path;

use hsbm_motif::graph::{block_density, induced_subgraph, largest_connected_component};
use hsbm_motif::hsbm::{example, sample_hsbm, validate_affinity, HsbmNode, HsbmSpec, SizeMode};
use hsbm_motif::rng::SeedStream;
use hsbm_motif::{Error, VertexPartition};

fn shipped_spec() -> HsbmSpec {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("specs/eight_subgraphs.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn shipped_spec_matches_builtin_example() {
    assert_eq!(shipped_spec(), example::spec());
}

#[test]
fn eight_subgraph_sample_structure() {
    let (g, latent) = sample_hsbm(&shipped_spec(), &mut SeedStream::new(1).rng()).unwrap();
    assert_eq!(g.n_vertices(), 4100);
    let top = latent.labels_at_depth(1);
    assert_eq!(top.sizes(), example::SIZES.to_vec());
    assert_eq!(latent.block_partition().n_clusters(), 24);

    let (lcc, _) = largest_connected_component(&g).unwrap();
    assert!(lcc.n_vertices() as f64 >= 0.99 * 4100.0);
}

/// Every realised block density lies within four binomial standard
/// deviations of its probability.
#[test]
fn block_densities_concentrate() {
    let spec = example::spec();
    let (g, latent) = sample_hsbm(&spec, &mut SeedStream::new(2).rng()).unwrap();
    let blocks = VertexPartition::new(latent.block_label.clone(), latent.blocks.len()).unwrap();
    let p_hat = block_density(&g, &blocks).unwrap();
    let gram = latent.block_gram();
    let sizes = blocks.sizes();
    for a in 0..sizes.len() {
        for b in 0..sizes.len() {
            let p = gram[(a, b)];
            let pairs = if a == b { sizes[a] * (sizes[a] - 1) / 2 } else { sizes[a] * sizes[b] } as f64;
            let sd = (p * (1.0 - p) / pairs).sqrt();
            let got = p_hat.get(a, b).unwrap();
            assert!((got - p).abs() <= 4.0 * sd + 1e-12, "block ({a},{b}): {got} vs {p}");
            assert!((got - p).abs() <= 0.02);
        }
    }

    // The first subgraph restricted to itself reproduces its own matrix.
    let first: Vec<usize> = (0..latent.n()).filter(|&v| latent.subgraph_path(v)[0] == 0).collect();
    let sub = induced_subgraph(&g, &first).unwrap();
    let local: Vec<usize> = first.iter().map(|&v| latent.blocks[latent.block_label[v]].local).collect();
    let d = block_density(&sub, &VertexPartition::new(local, 3).unwrap()).unwrap();
    let b2 = example::b2();
    for i in 0..3 {
        for j in 0..3 {
            assert!((d.get(i, j).unwrap() - b2[i][j]).abs() < 0.02);
        }
    }
}

#[test]
fn edge_count_concentrates() {
    let spec = HsbmSpec {
        n: 400,
        rho: 0.5,
        size_mode: SizeMode::Multinomial,
        root: HsbmNode::internal(
            vec![
                HsbmNode::leaf(vec![vec![0.6, 0.3], vec![0.3, 0.5]], vec![0.4, 0.6]),
                HsbmNode::leaf(vec![vec![0.7]], vec![1.0]),
            ],
            vec![0.5, 0.5],
            0.05,
        ),
    };
    for seed in 0..20 {
        let (g, latent) = sample_hsbm(&spec, &mut SeedStream::new(seed).rng()).unwrap();
        let (mut mean, mut var) = (0.0, 0.0);
        for i in 0..latent.n() {
            for j in i + 1..latent.n() {
                let p = spec.rho * latent.x.row(i).dot(&latent.x.row(j));
                mean += p;
                var += p * (1.0 - p);
            }
        }
        let dev = (g.n_edges() as f64 - mean).abs();
        assert!(dev <= 4.0 * var.sqrt(), "seed {seed}: {} edges, expected {mean}", g.n_edges());
    }
}

#[test]
fn sampling_is_reproducible() {
    let spec = example::spec();
    let (a, la) = sample_hsbm(&spec, &mut SeedStream::new(9).rng()).unwrap();
    let (b, lb) = sample_hsbm(&spec, &mut SeedStream::new(9).rng()).unwrap();
    assert!(a.edges().eq(b.edges()));
    assert_eq!(la.x, lb.x);
    let (c, _) = sample_hsbm(&spec, &mut SeedStream::new(10).rng()).unwrap();
    assert!(!a.edges().eq(c.edges()));
}

#[test]
fn affinity_report_and_violation() {
    let levels = validate_affinity(&example::spec()).unwrap();
    assert_eq!(levels.len(), 1);
    assert!((levels[0].q - 0.2).abs() < 1e-12 && (levels[0].p - 0.01).abs() < 1e-12);

    let leaf = || HsbmNode::leaf(example::b3(), vec![1.0 / 3.0; 3]);
    let strong = HsbmSpec {
        n: 100,
        rho: 1.0,
        size_mode: SizeMode::Fixed,
        root: HsbmNode::internal(vec![leaf(), leaf()], vec![0.5, 0.5], 0.5),
    };
    let flagged = match validate_affinity(&strong) {
        Ok(levels) => levels.iter().any(|l| !l.satisfied),
        Err(Error::AffinityViolated { p, q, .. }) => p > q,
        Err(e) => panic!("unexpected error {e}"),
    };
    assert!(flagged);
    assert!(sample_hsbm(&strong, &mut SeedStream::new(0).rng()).is_err());
}
