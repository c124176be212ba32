use std::collections::HashSet;

use hsbm_motif::cluster::misclustering_rate;
use hsbm_motif::graph::largest_connected_component;
use hsbm_motif::hsbm::{sample_hsbm, HsbmNode, HsbmSpec, LatentPositions, SizeMode};
use hsbm_motif::motif::{MotifCut, MotifSource, MotifTestConfig};
use hsbm_motif::pipeline::{
    compare_blocks, detect_hierarchy, estimate_block_matrix, Choice, HierarchyNode, NodeStatus, PipelineConfig,
};
use hsbm_motif::report::hierarchy_report;
use hsbm_motif::rng::SeedStream;
use hsbm_motif::{SparseGraph, VertexPartition};

/// Four 500-vertex subgraphs, the first and third sharing one motif and
/// the second and fourth another.
fn four_subgraphs() -> HsbmSpec {
    let a = || HsbmNode::leaf(vec![vec![0.6, 0.2], vec![0.2, 0.5]], vec![0.5, 0.5]);
    let b = || HsbmNode::leaf(vec![vec![0.25, 0.1], vec![0.1, 0.65]], vec![0.5, 0.5]);
    HsbmSpec {
        n: 2000,
        rho: 1.0,
        size_mode: SizeMode::Fixed,
        root: HsbmNode::internal(vec![a(), b(), a(), b()], vec![0.25; 4], 0.01),
    }
}

fn config() -> PipelineConfig {
    PipelineConfig {
        top_dim: Choice::Fixed(8),
        d: Choice::Fixed(2),
        n_subgraphs: Choice::Fixed(4),
        max_depth: 1,
        motif_cut: Some(MotifCut::Count(2)),
        seed: 11,
        ..PipelineConfig::default()
    }
}

fn sample(seed: u64) -> (SparseGraph, LatentPositions) {
    sample_hsbm(&four_subgraphs(), &mut SeedStream::new(seed).rng()).unwrap()
}

fn report_json(root: &HierarchyNode, g: &SparseGraph, cfg: &PipelineConfig) -> String {
    serde_json::to_string(&hierarchy_report(root, g, cfg, "vertices.tsv")).unwrap()
}

#[test]
fn detection_recovers_subgraphs_and_motifs() {
    let (g, latent) = sample(1);
    let root = detect_hierarchy(&g, &config()).unwrap();
    assert_eq!(root.status, NodeStatus::Split);
    let children = root.child_partition().unwrap();
    let truth = VertexPartition::new(root.vertices.iter().map(|&v| latent.subgraph_path(v)[0]).collect(), 4).unwrap();
    assert_eq!(misclustering_rate(&children, &truth).unwrap(), 0);

    // Children sharing a motif must come from subgraphs of the same parity.
    for a in 0..4 {
        for b in 0..4 {
            let ta = latent.subgraph_path(root.children[a].vertices[0])[0];
            let tb = latent.subgraph_path(root.children[b].vertices[0])[0];
            assert_eq!(root.motif_of_child(a) == root.motif_of_child(b), ta % 2 == tb % 2);
        }
    }
    assert_eq!(root.representatives.len(), 2);
    for (c, child) in root.children.iter().enumerate() {
        if root.representatives.contains(&c) {
            assert_eq!(child.status, NodeStatus::MaxDepth);
        } else {
            assert!(matches!(child.status, NodeStatus::Represented { by } if root.representatives.contains(&by)));
        }
    }
}

#[test]
fn children_partition_their_parent() {
    let (g, _) = sample(2);
    let cfg = PipelineConfig {
        max_depth: 2,
        min_cluster_size: Some(100),
        ..config()
    };
    let root = detect_hierarchy(&g, &cfg).unwrap();
    assert_eq!(root.vertices.len(), g.n_vertices());
    for node in root.walk() {
        if node.children.is_empty() {
            continue;
        }
        let mut seen = HashSet::new();
        for child in &node.children {
            assert_eq!(child.depth, node.depth + 1);
            assert!(!child.vertices.is_empty());
            for &v in &child.vertices {
                assert!(seen.insert(v), "vertex {v} in two children");
            }
        }
        let parent: HashSet<usize> = node.vertices.iter().copied().collect();
        assert_eq!(seen, parent);
    }
}

#[test]
fn detection_is_deterministic_across_thread_counts() {
    let (g, _) = sample(3);
    let cfg = PipelineConfig {
        top_dim: Choice::Auto,
        n_subgraphs: Choice::Auto,
        motif_test: MotifTestConfig {
            bootstrap: 49,
            ..MotifTestConfig::default()
        },
        motif_source: MotifSource::PValue,
        motif_cut: None,
        ..config()
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| report_json(&detect_hierarchy(&g, &cfg).unwrap(), &g, &cfg))
    };
    let single = run(1);
    assert_eq!(single, run(3));
    assert_eq!(single, run(1));
}

#[test]
fn block_estimates_concentrate() {
    let spec = HsbmSpec {
        n: 900,
        rho: 1.0,
        size_mode: SizeMode::Fixed,
        root: HsbmNode::leaf(
            vec![vec![0.5, 0.1, 0.2], vec![0.1, 0.4, 0.05], vec![0.2, 0.05, 0.3]],
            vec![0.2, 0.3, 0.5],
        ),
    };
    let (g, latent) = sample_hsbm(&spec, &mut SeedStream::new(4).rng()).unwrap();
    let part = latent.block_partition();
    let est = estimate_block_matrix(&g, &part).unwrap();
    let sizes = part.sizes();
    assert_eq!(sizes, vec![180, 270, 450]);
    for a in 0..3 {
        assert!((est.pi_hat[a] - spec_pi(a)).abs() < 1e-12);
        for b in 0..3 {
            let p = spec_b(a, b);
            let pairs = if a == b { sizes[a] * (sizes[a] - 1) / 2 } else { sizes[a] * sizes[b] } as f64;
            let sd = (p * (1.0 - p) / pairs).sqrt();
            let got = est.p_hat.get(a, b).unwrap();
            assert!((got - p).abs() <= 3.0 * sd, "({a},{b}): {got} vs {p}");
        }
    }
    let (dp, dpi) = compare_blocks(&est, &est);
    assert_eq!((dp, dpi), (0.0, 0.0));
}

fn spec_b(a: usize, b: usize) -> f64 {
    [[0.5, 0.1, 0.2], [0.1, 0.4, 0.05], [0.2, 0.05, 0.3]][a][b]
}

fn spec_pi(a: usize) -> f64 {
    [0.2, 0.3, 0.5][a]
}

#[test]
fn small_graphs_are_not_split() {
    let (g, _) = sample(5);
    let (lcc, _) = largest_connected_component(&g).unwrap();
    let cfg = PipelineConfig {
        min_cluster_size: Some(lcc.n_vertices()),
        ..config()
    };
    let root = detect_hierarchy(&lcc, &cfg).unwrap();
    assert_eq!(root.status, NodeStatus::Small);
    assert!(root.children.is_empty());
}

#[test]
fn invalid_configs_are_rejected() {
    let (g, _) = sample(6);
    let needs_bootstrap = PipelineConfig {
        motif_source: MotifSource::PValue,
        ..config()
    };
    assert!(detect_hierarchy(&g, &needs_bootstrap).is_err());
    let tiny_min = PipelineConfig {
        min_cluster_size: Some(3),
        ..config()
    };
    assert!(detect_hierarchy(&g, &tiny_min).is_err());

    let parsed: PipelineConfig = serde_json::from_str(r#"{"D": "auto", "d": 3, "R": 8}"#).unwrap();
    assert_eq!((parsed.top_dim, parsed.d, parsed.n_subgraphs), (Choice::Auto, Choice::Fixed(3), Choice::Fixed(8)));
    assert!(serde_json::from_str::<PipelineConfig>(r#"{"R": 0}"#).is_err());
}
