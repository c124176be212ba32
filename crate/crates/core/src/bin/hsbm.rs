use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use hsbm_motif::cluster::{estimate_num_subgraphs, seeded_subspace_cluster};
use hsbm_motif::elbow::ElbowChoice;
use hsbm_motif::embed::{ase, choose_dimension, project_to_sphere, scree};
use hsbm_motif::graph::{largest_connected_component, load_edge_list, SparseGraph};
use hsbm_motif::hsbm::{sample_hsbm, HsbmSpec};
use hsbm_motif::io;
use hsbm_motif::motif::{align_point_clouds, bootstrap_pvalue, mmd_linear, mmd_statistic, Bandwidth, KernelConfig, Linkage, MotifCut, MotifSource, TestMode};
use hsbm_motif::pipeline::{detect_hierarchy, Choice, HierarchyNode, NodeStatus, PipelineConfig};
use hsbm_motif::report::{self, digest_file, RunManifest};
use hsbm_motif::rng::SeedStream;
use hsbm_motif::{Error, Result};

#[derive(Parser)]
#[command(name = "hsbm", version, about = "Hierarchical blockmodel generation, subgraph recovery and motif detection")]
struct Cli {
    /// Run seed; every random stage derives its own stream from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (falls back to HSBM_MOTIF_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a graph from a model specification.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Spectral embedding of a graph.
    Embed {
        #[arg(long)]
        graph: PathBuf,
        /// Dimension or "auto".
        #[arg(long = "d", default_value = "auto")]
        d: Choice,
        /// Scree length for automatic selection.
        #[arg(long, default_value_t = 30)]
        max_dim: usize,
        #[arg(long, value_enum, default_value_t = ElbowArg::First)]
        elbow: ElbowArg,
        #[arg(long)]
        sphere: bool,
        /// Keep only the largest connected component.
        #[arg(long)]
        lcc: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded subspace clustering of an embedding.
    Cluster {
        #[arg(long)]
        embedding: PathBuf,
        /// Number of clusters or "auto".
        #[arg(long = "R", default_value = "auto")]
        r: Choice,
        #[arg(long, default_value_t = 5)]
        n_mc: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Two-sample test between two embeddings.
    Test {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[command(flatten)]
        test: TestArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full recursive hierarchy detection.
    Detect {
        #[arg(long)]
        graph: PathBuf,
        /// JSON pipeline configuration; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "D")]
        top_dim: Option<Choice>,
        #[arg(long = "d")]
        d: Option<Choice>,
        #[arg(long = "R")]
        r: Option<Choice>,
        /// Number of motifs per split (default: automatic cut).
        #[arg(long = "M")]
        motifs: Option<usize>,
        #[arg(long)]
        sigma: Option<String>,
        #[arg(long)]
        bootstrap: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        min_cluster_size: Option<usize>,
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long)]
        sphere: bool,
        /// Cluster motifs on 1 - p instead of the statistic.
        #[arg(long)]
        pvalue_motifs: bool,
        #[arg(long, value_enum)]
        linkage: Option<LinkageArg>,
        /// Keep the whole graph instead of its largest connected component.
        #[arg(long)]
        keep_all: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Static HTML summary of a detect run.
    Report {
        #[arg(long)]
        hierarchy: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TestArgs {
    /// Kernel bandwidth or "median".
    #[arg(long, default_value = "median")]
    sigma: String,
    #[arg(long, default_value_t = 200)]
    bootstrap: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    mode: ModeArg,
    /// Skip the rotation of the second embedding onto the first.
    #[arg(long)]
    no_align: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Linear,
}

impl From<ModeArg> for TestMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Exact => TestMode::Exact,
            ModeArg::Linear => TestMode::Linear,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ElbowArg {
    First,
    Second,
}

#[derive(Clone, Copy, ValueEnum)]
enum LinkageArg {
    Average,
    Complete,
    Single,
}

fn parse_sigma(s: &str) -> Result<KernelConfig> {
    if s.eq_ignore_ascii_case("median") {
        return Ok(KernelConfig { bandwidth: Bandwidth::Median });
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(KernelConfig::fixed(v)),
        _ => Err(Error::invalid(format!("--sigma expects a positive number or \"median\", got {s:?}"))),
    }
}

struct Run {
    manifest: RunManifest,
    out: PathBuf,
    started: Instant,
}

impl Run {
    fn new(command: &str, seed: u64, out: &Path, config: serde_json::Value) -> Result<Self> {
        fs::create_dir_all(out)?;
        Ok(Run {
            manifest: RunManifest {
                command: command.to_string(),
                config,
                seed,
                ..Default::default()
            },
            out: out.to_path_buf(),
            started: Instant::now(),
        })
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.inputs.push(digest_file(path)?);
        Ok(())
    }

    fn sub_seed(&mut self, name: &str, s: SeedStream) -> SeedStream {
        self.manifest.sub_seeds.insert(name.to_string(), s.seed());
        s
    }

    fn stage(&mut self, name: &str) {
        let now = Instant::now();
        self.manifest
            .stage_seconds
            .insert(name.to_string(), now.duration_since(self.started).as_secs_f64());
        self.started = now;
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn writer(&self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    fn finish(mut self) -> Result<()> {
        let mut names: Vec<PathBuf> = fs::read_dir(&self.out)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.file_name().is_some_and(|n| n != "manifest.json"))
            .collect();
        names.sort();
        for p in names {
            self.manifest.outputs.push(digest_file(&p)?);
        }
        let f = File::create(self.out.join("manifest.json"))?;
        serde_json::to_writer_pretty(f, &self.manifest)?;
        Ok(())
    }
}

fn load_graph(path: &Path) -> Result<SparseGraph> {
    let f = File::open(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    let (g, summary) = load_edge_list(BufReader::new(f))?;
    if summary.self_loops_dropped > 0 || summary.duplicate_edges > 0 {
        info!(
            "dropped {} self-loops and {} duplicate edges",
            summary.self_loops_dropped, summary.duplicate_edges
        );
    }
    Ok(g)
}

fn cmd_generate(seed: u64, spec_path: &Path, out: &Path) -> Result<()> {
    let spec: HsbmSpec = serde_json::from_reader(BufReader::new(File::open(spec_path)?))?;
    let mut run = Run::new("generate", seed, out, serde_json::to_value(&spec)?)?;
    run.input(spec_path)?;
    let stream = run.sub_seed("sample", SeedStream::new(seed).derive("sample"));
    let (g, latent) = sample_hsbm(&spec, &mut stream.rng())?;
    run.stage("sample");
    g.write_edge_list(run.writer("graph.edges")?)?;
    io::write_truth(run.writer("truth.csv")?, g.vertex_ids(), &latent)?;
    run.stage("write");
    info!("{} vertices, {} edges", g.n_vertices(), g.n_edges());
    run.finish()
}

#[allow(clippy::too_many_arguments)]
fn cmd_embed(seed: u64, graph: &Path, d: Choice, max_dim: usize, elbow: ElbowArg, sphere: bool, lcc: bool, out: &Path) -> Result<()> {
    let config = serde_json::json!({ "d": d.to_string(), "max_dim": max_dim, "sphere": sphere, "lcc": lcc });
    let mut run = Run::new("embed", seed, out, config)?;
    run.input(graph)?;
    let mut g = load_graph(graph)?;
    if lcc {
        g = largest_connected_component(&g)?.0;
    }
    run.stage("load");
    let m = max_dim.min(g.n_vertices().saturating_sub(1));
    let magnitudes = scree(&g, m)?;
    let dim = match d {
        Choice::Fixed(d) => d,
        Choice::Auto => {
            let which = match elbow {
                ElbowArg::First => ElbowChoice::First,
                ElbowArg::Second => ElbowChoice::Second,
            };
            choose_dimension(magnitudes.clone(), which).dim
        }
    };
    let mut e = ase(&g, dim)?;
    if sphere {
        let (p, zero) = project_to_sphere(&e);
        if zero > 0 {
            run.manifest.warnings.push(format!("{zero} zero rows left off the sphere"));
        }
        e = p;
    }
    if e.negative_count() > 0 {
        run.manifest
            .warnings
            .push(format!("{} selected eigenvalues are negative", e.negative_count()));
    }
    run.stage("embed");
    io::write_embedding(run.writer("embedding.csv")?, &e, g.vertex_ids())?;
    io::write_scree(run.writer("scree.csv")?, &magnitudes)?;
    info!("embedded {} vertices into {dim} dimensions", g.n_vertices());
    run.finish()
}

fn cmd_cluster(seed: u64, embedding: &Path, r: Choice, n_mc: usize, out: &Path) -> Result<()> {
    let config = serde_json::json!({ "R": r.to_string(), "n_mc": n_mc });
    let mut run = Run::new("cluster", seed, out, config)?;
    run.input(embedding)?;
    let (ids, e) = io::read_embedding(BufReader::new(File::open(embedding)?))?;
    let root = SeedStream::new(seed);
    let r = match r {
        Choice::Fixed(r) => r,
        Choice::Auto => {
            let phi_seed = run.sub_seed("phi", root.derive("phi"));
            let est = estimate_num_subgraphs(&e.x_hat, e.dim(), n_mc, &mut phi_seed.rng())?;
            io::write_phi(run.writer("phi.csv")?, &est)?;
            run.stage("phi");
            est.r_hat
        }
    };
    let cluster_seed = run.sub_seed("cluster", root.derive("cluster"));
    let (part, seeds) = seeded_subspace_cluster(&e.x_hat, r, &mut cluster_seed.rng())?;
    run.stage("cluster");
    io::write_partition(run.writer("partition.csv")?, &ids, &part)?;
    let seed_ids: Vec<&str> = seeds.source_rows.iter().map(|&i| ids[i].as_str()).collect();
    serde_json::to_writer_pretty(
        run.writer("seeds.json")?,
        &serde_json::json!({ "seed_vertices": seed_ids, "max_pair_dot": seeds.max_pair_dot }),
    )?;
    info!("{} clusters with sizes {:?}", r, part.sizes());
    run.finish()
}

fn cmd_test(seed: u64, a: &Path, b: &Path, args: &TestArgs, out: &Path) -> Result<()> {
    let kernel = parse_sigma(&args.sigma)?;
    let mode: TestMode = args.mode.into();
    let config = serde_json::json!({
        "sigma": args.sigma, "bootstrap": args.bootstrap, "mode": mode, "align": !args.no_align
    });
    let mut run = Run::new("test", seed, out, config)?;
    run.input(a)?;
    run.input(b)?;
    let (_, x) = io::read_embedding(BufReader::new(File::open(a)?))?;
    let (_, y) = io::read_embedding(BufReader::new(File::open(b)?))?;
    let mut y = y.x_hat;
    if !args.no_align {
        let w = align_point_clouds(&x.x_hat, &y)?;
        y = &y * w;
    }
    let x = x.x_hat;
    let sigma = kernel.resolve(&x, &y)?;
    let fixed = KernelConfig::fixed(sigma);
    let root = SeedStream::new(seed);
    let statistic = match mode {
        TestMode::Exact => mmd_statistic(&x, &y, &fixed)?,
        TestMode::Linear => mmd_linear(&x, &y, &fixed, &mut run.sub_seed("statistic", root.derive("statistic")).rng())?,
    };
    let p_value = if args.bootstrap > 0 {
        let s = run.sub_seed("permutation", root.derive("permutation"));
        Some(bootstrap_pvalue(&x, &y, &fixed, mode, args.bootstrap, &mut s.rng())?.p_value)
    } else {
        None
    };
    run.stage("test");
    let result = serde_json::json!({
        "statistic": statistic, "p_value": p_value, "sigma": sigma,
        "n": x.nrows(), "m": y.nrows(), "replicates": args.bootstrap
    });
    serde_json::to_writer_pretty(run.writer("test.json")?, &result)?;
    println!("T = {statistic:.6e}, p = {}", p_value.map_or("n/a".into(), |p| format!("{p:.4}")));
    run.finish()
}

fn write_node_artifacts(run: &Run, node: &HierarchyNode, g: &SparseGraph) -> Result<()> {
    let tag = if node.path.0.is_empty() {
        "root".to_string()
    } else {
        format!("root_{}", node.path.0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("_"))
    };
    if let Some(part) = node.child_partition() {
        let ids: Vec<String> = node.vertices.iter().map(|&v| g.vertex_id(v).to_string()).collect();
        io::write_partition(run.writer(&format!("{tag}_partition.csv"))?, &ids, &part)?;
    }
    if let Some(phi) = &node.phi {
        io::write_phi(run.writer(&format!("{tag}_phi.csv"))?, phi)?;
    }
    if !node.scree.is_empty() {
        io::write_scree(run.writer(&format!("{tag}_scree.csv"))?, &node.scree)?;
    }
    if let Some(dm) = &node.dissimilarity {
        io::write_matrix(run.writer(&format!("{tag}_s_hat.csv"))?, &dm.s_hat)?;
        if let Some(p) = &dm.p_values {
            io::write_matrix(run.writer(&format!("{tag}_p_values.csv"))?, p)?;
        }
    }
    if let Some(m) = &node.motifs {
        serde_json::to_writer_pretty(run.writer(&format!("{tag}_dendrogram.json"))?, &m.dendrogram)?;
    }
    for c in &node.children {
        write_node_artifacts(run, c, g)?;
    }
    Ok(())
}

fn cmd_detect(seed: u64, cmd: Command) -> Result<()> {
    let Command::Detect {
        graph,
        config,
        top_dim,
        d,
        r,
        motifs,
        sigma,
        bootstrap,
        mode,
        min_cluster_size,
        max_depth,
        sphere,
        pvalue_motifs,
        linkage,
        keep_all,
        out,
    } = cmd
    else {
        unreachable!()
    };
    let mut cfg: PipelineConfig = match &config {
        Some(p) => serde_json::from_reader(BufReader::new(File::open(p)?))?,
        None => PipelineConfig::default(),
    };
    cfg.seed = seed;
    if let Some(v) = top_dim {
        cfg.top_dim = v;
    }
    if let Some(v) = d {
        cfg.d = v;
    }
    if let Some(v) = r {
        cfg.n_subgraphs = v;
    }
    if let Some(m) = motifs {
        cfg.motif_cut = Some(MotifCut::Count(m));
    }
    if let Some(s) = sigma {
        cfg.motif_test.kernel = parse_sigma(&s)?;
    }
    if let Some(b) = bootstrap {
        cfg.motif_test.bootstrap = b;
    }
    if let Some(m) = mode {
        cfg.motif_test.mode = m.into();
    }
    if min_cluster_size.is_some() {
        cfg.min_cluster_size = min_cluster_size;
    }
    if let Some(m) = max_depth {
        cfg.max_depth = m;
    }
    cfg.sphere |= sphere;
    if pvalue_motifs {
        cfg.motif_source = MotifSource::PValue;
    }
    if let Some(l) = linkage {
        cfg.linkage = match l {
            LinkageArg::Average => Linkage::Average,
            LinkageArg::Complete => Linkage::Complete,
            LinkageArg::Single => Linkage::Single,
        };
    }
    cfg.validate()?;

    let mut run = Run::new("detect", seed, &out, serde_json::to_value(&cfg)?)?;
    run.input(&graph)?;
    if let Some(p) = &config {
        run.input(p)?;
    }
    let mut g = load_graph(&graph)?;
    if !keep_all {
        let before = g.n_vertices();
        g = largest_connected_component(&g)?.0;
        if g.n_vertices() < before {
            run.manifest.warnings.push(format!(
                "kept the largest connected component ({} of {before} vertices)",
                g.n_vertices()
            ));
        }
    }
    run.stage("load");
    run.sub_seed("pipeline", SeedStream::new(seed));
    let tree = detect_hierarchy(&g, &cfg)?;
    run.stage("detect");
    for node in tree.walk() {
        if let NodeStatus::Degenerate { message } = &node.status {
            warn!("node {}: {message}", node.path);
            run.manifest.warnings.push(format!("node {}: {message}", node.path));
        }
    }
    let rep = report::hierarchy_report(&tree, &g, &cfg, "vertices.csv");
    serde_json::to_writer_pretty(run.writer("hierarchy.json")?, &rep)?;
    report::write_vertex_sidecar(run.writer("vertices.csv")?, &tree, &g)?;
    write_node_artifacts(&run, &tree, &g)?;
    run.stage("write");
    info!(
        "hierarchy of height {} with {} nodes",
        tree.height(),
        tree.walk().len()
    );
    run.finish()
}

fn cmd_report(hierarchy: &Path, out: &Path) -> Result<()> {
    let rep: report::HierarchyReport = serde_json::from_reader(BufReader::new(File::open(hierarchy)?))?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(out, report::render_html(&rep))?;
    Ok(())
}

fn configure_threads(threads: Option<usize>) -> Result<()> {
    let n = match threads {
        Some(n) => Some(n),
        None => match std::env::var("HSBM_MOTIF_THREADS") {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
                Error::invalid(format!("HSBM_MOTIF_THREADS must be a positive integer, got {v:?}"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::invalid("thread count must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::invalid(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads(cli.threads)?;
    let seed = cli.seed;
    match cli.command {
        Command::Generate { spec, out } => cmd_generate(seed, &spec, &out),
        Command::Embed {
            graph,
            d,
            max_dim,
            elbow,
            sphere,
            lcc,
            out,
        } => cmd_embed(seed, &graph, d, max_dim, elbow, sphere, lcc, &out),
        Command::Cluster { embedding, r, n_mc, out } => cmd_cluster(seed, &embedding, r, n_mc, &out),
        Command::Test { a, b, test, out } => cmd_test(seed, &a, &b, &test, &out),
        cmd @ Command::Detect { .. } => cmd_detect(seed, cmd),
        Command::Report { hierarchy, out } => cmd_report(&hierarchy, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
