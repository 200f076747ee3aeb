use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use saegraph_core::annotations::Annotations;
use saegraph_core::community::{annotate_intra_layer_cosine, detect, extract_communities, modularity, Partition};
use saegraph_core::graph::{build_graph, export_graph, GraphConfig, GraphDocument, NodeRule};
use saegraph_core::motifs::{
    ablation_bins, calibrate_threshold, classify_features, disappearance_projection, find_gates, load_ablation_records,
    neighbor_threshold_curve, AblationRecord, ClassificationReport, GateOptions, Judge, ProbePair, ProjectionOptions,
    ScriptedJudge, TerminalJudge,
};
use saegraph_core::sae::{decoder_cosine, read_residuals, SaeWeights};
use saegraph_core::sim::{
    compare_matrices, compute_similarities, similarity_histogram, MeasureKind, SimConfig, SimilarityMatrix,
};
use saegraph_core::store::synth::{synth_generate, SynthSpec};
use saegraph_core::store::{scan_max, BinarizationRule, Binarizer, Dataset, MaxActivationTable};

use crate::config::RunConfig;
use crate::manifest::Run;
use crate::{CliError, Command, SimsInput};

/// Copies subcommand flags into the configuration.
pub(crate) fn apply_flags(command: &Command, cfg: &mut RunConfig) {
    fn set<T: Clone>(slot: &mut T, flag: &Option<T>) {
        if let Some(v) = flag {
            *slot = v.clone();
        }
    }
    match command {
        Command::Synth(a) => {
            let s = &mut cfg.synth;
            set(&mut s.n_layers, &a.layers);
            set(&mut s.n_features, &a.features);
            set(&mut s.n_tokens, &a.tokens);
            set(&mut s.chains, &a.chains);
            set(&mut s.and_gates, &a.and_gates);
            set(&mut s.or_gates, &a.or_gates);
            set(&mut s.blocks, &a.blocks);
            set(&mut s.background_rate, &a.background);
            set(&mut s.chain_sigma, &a.sigma);
            set(&mut s.seed, &a.seed);
        }
        Command::ScanMax(a) => set(&mut cfg.data.dataset, &a.dataset.clone().map(Some)),
        Command::ComputeSims(a) => {
            set(&mut cfg.data.dataset, &a.data.dataset.clone().map(Some));
            set(&mut cfg.data.max_activations, &a.max.clone().map(Some));
            set(&mut cfg.data.theta, &a.theta);
            set(&mut cfg.sims.measures, &a.measures);
            set(&mut cfg.sims.min_co, &a.min_co);
            if a.no_min_co {
                cfg.sims.disable_min_co = true;
            }
            set(&mut cfg.sims.floor, &a.floor);
            set(&mut cfg.sims.tile_edge, &a.tile_edge);
            set(&mut cfg.sims.memory_budget_mb, &a.memory_budget_mb.map(Some));
            set(&mut cfg.sims.layers, &a.layers.clone().map(Some));
        }
        Command::BuildGraph(a) => {
            set(&mut cfg.graph.measure, &a.measure);
            set(&mut cfg.graph.threshold, &a.threshold);
            if a.unweighted {
                cfg.graph.weighted = false;
            }
            if a.all_nodes {
                cfg.graph.nodes = NodeRule::All;
            }
            set(&mut cfg.data.annotations, &a.annotations.clone().map(Some));
        }
        Command::Communities(a) => {
            let c = &mut cfg.community;
            set(&mut c.algorithm, &a.algorithm);
            set(&mut c.quality.resolution, &a.resolution);
            set(&mut c.quality.seed, &a.seed);
            set(&mut c.filter.min_size, &a.min_size.map(Some));
            set(&mut c.filter.max_size, &a.max_size.map(Some));
            set(&mut c.filter.min_layers, &a.min_layers.map(Some));
        }
        Command::Classify(a) => {
            set(&mut cfg.motifs.classify_measure, &a.measure);
            set(&mut cfg.motifs.classify_threshold, &a.threshold);
        }
        Command::Curve(a) => {
            set(&mut cfg.motifs.classify_measure, &a.measure);
            set(&mut cfg.motifs.curve_thresholds, &a.thresholds);
        }
        Command::Gates(a) => {
            set(&mut cfg.motifs.gate_min_sim, &a.min_sim);
            set(&mut cfg.motifs.gate_arity, &a.arity);
            let max = a.max_arity.or(a.arity.map(|n| n.max(cfg.motifs.gate_max_arity)));
            set(&mut cfg.motifs.gate_max_arity, &max);
            if a.arity.is_some() && a.max_arity.is_none() {
                cfg.motifs.gate_max_arity = cfg.motifs.gate_arity;
            }
        }
        Command::ProjectErrors(a) => {
            set(&mut cfg.data.dataset, &a.data.dataset.clone().map(Some));
            set(&mut cfg.data.max_activations, &a.max.clone().map(Some));
            set(&mut cfg.motifs.necessity_max, &a.necessity_max);
            set(&mut cfg.motifs.act_min_frac, &a.act_min_frac);
            set(&mut cfg.motifs.fire_frac, &a.fire_frac);
        }
        Command::AblationBins(a) => set(&mut cfg.motifs.ablation_bins, &a.bins),
        Command::Calibrate(a) => {
            set(&mut cfg.data.annotations, &a.annotations.clone().map(Some));
            set(&mut cfg.calibrate.start, &a.start);
            set(&mut cfg.calibrate.target_width, &a.width);
            set(&mut cfg.calibrate.max_probes, &a.max_probes);
        }
        Command::CompareMatrices(a) => set(&mut cfg.sims.histogram_bins, &a.bins),
        Command::Histogram(a) => set(&mut cfg.sims.histogram_bins, &a.bins),
        Command::Serve(_) => {}
    }
}

pub(crate) fn dispatch(command: &Command, cfg: &RunConfig) -> Result<(), CliError> {
    let mut run = Run::new(command.name(), cfg);
    match command {
        Command::Synth(a) => synth(&mut run, cfg, a.spec.as_deref(), a.data_dir.as_deref())?,
        Command::ScanMax(_) => scan(&mut run, cfg)?,
        Command::ComputeSims(a) => sims(&mut run, cfg, &a.sae)?,
        Command::BuildGraph(a) => graph(&mut run, cfg, &a.sims, a.classification.as_deref())?,
        Command::Communities(a) => communities(&mut run, cfg, a.graph.as_deref(), &a.sae)?,
        Command::Classify(a) => classify(&mut run, cfg, &a.sims)?,
        Command::Curve(a) => curve(&mut run, cfg, &a.sims)?,
        Command::Gates(a) => gates(&mut run, cfg, &a.sims, a.measures.as_deref(), a.allow_any_measure)?,
        Command::ProjectErrors(a) => project(&mut run, cfg, a)?,
        Command::AblationBins(a) => ablation(&mut run, cfg, &a.records)?,
        Command::Calibrate(a) => calibrate(&mut run, cfg, a)?,
        Command::CompareMatrices(a) => compare(&mut run, cfg, &a.first, &a.second, &a.name)?,
        Command::Histogram(a) => histogram(&mut run, cfg, &a.sims)?,
        Command::Serve(a) => return serve(run, &a.serve_config, a.bind.as_deref()),
    }
    let manifest = run.finish()?;
    log::info!("manifest written to {}", manifest.display());
    Ok(())
}

fn read_spec(path: &Path) -> Result<SynthSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::from_io(path, e))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn synth(run: &mut Run, cfg: &RunConfig, spec: Option<&Path>, data_dir: Option<&Path>) -> Result<(), CliError> {
    let spec = match spec {
        Some(p) => read_spec(&run.input(p)?)?,
        None => cfg.synth.build()?,
    };
    run.seed("synth", spec.seed);
    let dir = match data_dir {
        Some(d) => d.to_path_buf(),
        None => cfg.out_dir.join("data"),
    };
    let out = synth_generate(&spec, &dir)?;
    let rel = dir
        .strip_prefix(&cfg.out_dir)
        .map(Path::to_path_buf)
        .unwrap_or(dir.clone());
    run.output(&rel)?;
    run.write_json(rel.join("spec.json"), &spec)?;
    log::info!(
        "wrote {} tokens in {} shards with {} motifs to {}",
        out.manifest.n_tokens,
        out.manifest.shards.len(),
        spec.motifs.len(),
        dir.display()
    );
    Ok(())
}

fn open_dataset(run: &mut Run, cfg: &RunConfig) -> Result<Dataset, CliError> {
    let manifest = run.input(cfg.dataset_manifest())?;
    let dataset = Dataset::open(&manifest)?;
    for shard in dataset.shard_paths() {
        run.input(shard)?;
    }
    Ok(dataset)
}

fn scan(run: &mut Run, cfg: &RunConfig) -> Result<(), CliError> {
    let dataset = open_dataset(run, cfg)?;
    let table = scan_max(&dataset, effective_workers(cfg.workers))?;
    let path = run.output("max.json")?;
    table.save(&path)?;
    log::info!(
        "scanned {} tokens",
        saegraph_core::store::FrameSource::n_tokens(&dataset)
    );
    Ok(())
}

fn effective_workers(w: usize) -> usize {
    if w == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        w
    }
}

fn load_binarizer(run: &mut Run, cfg: &RunConfig) -> Result<(MaxActivationTable, Binarizer), CliError> {
    let table = MaxActivationTable::load(run.input(cfg.max_path())?)?;
    let rule = BinarizationRule::new(cfg.data.theta)?;
    let binarizer = Binarizer::new(&table, rule);
    Ok((table, binarizer))
}

fn load_saes(run: &mut Run, paths: &[PathBuf]) -> Result<BTreeMap<u32, SaeWeights>, CliError> {
    let mut out = BTreeMap::new();
    for p in paths {
        let w = SaeWeights::load(run.input(p)?)?;
        if out.insert(w.layer(), w).is_some() {
            return Err(CliError::Config(format!(
                "two SAE files for one layer ({})",
                p.display()
            )));
        }
    }
    Ok(out)
}

fn sims(run: &mut Run, cfg: &RunConfig, sae_paths: &[PathBuf]) -> Result<(), CliError> {
    let dataset = open_dataset(run, cfg)?;
    let (_, binarizer) = load_binarizer(run, cfg)?;
    let streamed: Vec<MeasureKind> = cfg.sims.measures.iter().copied().filter(|m| m.is_streamed()).collect();
    let mut matrices = Vec::new();
    if !streamed.is_empty() {
        let sim_cfg = SimConfig {
            measures: streamed,
            min_co: cfg.sims.min_co(),
            floor: cfg.sims.floor(),
            tile_edge: cfg.sims.tile_edge,
            memory_budget: cfg.sims.memory_budget_mb.map(|mb| mb << 20),
            workers: cfg.workers,
            layers: cfg.sims.layers.clone(),
            never_threshold: cfg.sims.never_threshold,
        };
        let result = compute_similarities(&dataset, &binarizer, &sim_cfg)?;
        log::info!(
            "{} tokens, {} passes, {} workers, peak pair state {} MiB",
            result.n_tokens,
            result.passes,
            result.workers,
            result.peak_pair_bytes >> 20
        );
        run.write_json("coactivation.json", &result.coactivation)?;
        matrices = result.matrices;
    }
    if cfg.sims.measures.contains(&MeasureKind::DecoderCosine) {
        let saes = load_saes(run, sae_paths)?;
        if saes.len() < 2 {
            return Err(CliError::Missing(
                "decoder_cosine needs --sae files for adjacent layers".into(),
            ));
        }
        for (l, up) in &saes {
            if let Some(down) = saes.get(&(l + 1)) {
                if cfg.sims.layers.as_ref().is_none_or(|ls| ls.contains(l)) {
                    matrices.push(decoder_cosine(up, down, cfg.sims.floor())?);
                }
            }
        }
    }
    for m in &matrices {
        let path = run.output(Path::new("sims").join(SimilarityMatrix::file_name(m.measure, m.upstream_layer)))?;
        m.write(&path)?;
        log::debug!("{}: {} entries, {} absent", path.display(), m.len(), m.n_absent());
    }
    Ok(())
}

fn sims_dir(cfg: &RunConfig, input: &SimsInput) -> PathBuf {
    input.sims.clone().unwrap_or_else(|| cfg.sims_dir())
}

/// Every matrix of `measure` in `dir`, ordered by layer.
fn load_measure(run: &mut Run, dir: &Path, measure: MeasureKind) -> Result<Vec<SimilarityMatrix>, CliError> {
    let dir = run.input(dir)?;
    let mut out = Vec::new();
    for path in matrix_files(&dir)? {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let prefix = format!("{measure}_L");
        if !name.starts_with(&prefix) {
            continue;
        }
        let m = SimilarityMatrix::read(&path)?;
        if m.measure == measure {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(CliError::Missing(format!("no {measure} matrices in {}", dir.display())));
    }
    out.sort_by_key(|m| m.upstream_layer);
    Ok(out)
}

fn matrix_files(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| CliError::from_io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "saem"))
        .collect();
    files.sort();
    Ok(files)
}

fn annotations(run: &mut Run, cfg: &RunConfig) -> Result<Annotations, CliError> {
    match &cfg.data.annotations {
        Some(p) => Ok(Annotations::load(run.input(p)?)?),
        None => Ok(Annotations::new()),
    }
}

fn graph(run: &mut Run, cfg: &RunConfig, input: &SimsInput, classification: Option<&Path>) -> Result<(), CliError> {
    let matrices = load_measure(run, &sims_dir(cfg, input), cfg.graph.measure)?;
    let refs: Vec<&SimilarityMatrix> = matrices.iter().collect();
    let gcfg = GraphConfig {
        measure: cfg.graph.measure,
        threshold: cfg.graph.threshold,
        weighted: cfg.graph.weighted,
        nodes: cfg.graph.nodes.clone(),
    };
    let g = build_graph(&refs, &gcfg)?;
    let mut doc = export_graph(&g, &annotations(run, cfg)?);
    if let Some(p) = classification {
        let report: ClassificationReport = read_json(&run.input(p)?)?;
        doc = doc.with_classes(&report.classes());
    }
    let rel = Path::new("graphs").join(format!("{}.json", cfg.graph_stem()));
    let path = run.output(&rel)?;
    doc.save(&path)?;
    log::info!("graph {}: {} nodes, {} edges", rel.display(), g.n_nodes(), g.n_edges());
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::from_io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn communities(run: &mut Run, cfg: &RunConfig, graph: Option<&Path>, sae_paths: &[PathBuf]) -> Result<(), CliError> {
    let path = graph.map_or_else(|| cfg.graph_path(), Path::to_path_buf);
    let doc = GraphDocument::load(run.input(&path)?)?;
    let g = doc.to_graph()?;
    let c = &cfg.community;
    run.seed("community", c.quality.seed);
    let partition: Partition = detect(&g, c.algorithm, &c.quality)?;
    let q = modularity(&g, &partition, c.quality.resolution, c.quality.weighted)?;
    let mut records = extract_communities(&partition, &g, &c.filter)?;
    let saes = load_saes(run, sae_paths)?;
    if !saes.is_empty() {
        records = records
            .iter()
            .map(|r| annotate_intra_layer_cosine(r, &saes))
            .collect::<Result<_, _>>()?;
    }
    let stem = format!(
        "{}_{}_threshold_{}",
        g.config().measure,
        c.algorithm,
        g.config().threshold
    );
    let part_path = run.output(Path::new("communities").join(format!("{stem}.partition.json")))?;
    partition.save(&part_path)?;
    run.write_json(Path::new("communities").join(format!("{stem}.records.json")), &records)?;
    run.write_json(
        Path::new("graphs").join(format!("{stem}.json")),
        &doc.clone().with_communities(&partition.assignment),
    )?;
    log::info!(
        "{}: {} communities, modularity {:.4}, {} records kept",
        stem,
        partition.n_communities,
        q,
        records.len()
    );
    Ok(())
}

fn classify(run: &mut Run, cfg: &RunConfig, input: &SimsInput) -> Result<(), CliError> {
    let measure = cfg.motifs.classify_measure;
    let t = cfg.motifs.classify_threshold;
    let matrices = load_measure(run, &sims_dir(cfg, input), measure)?;
    let refs: Vec<&SimilarityMatrix> = matrices.iter().collect();
    let report = classify_features(&refs, t)?;
    let stem = format!("classify/{measure}_threshold_{t}");
    run.write_json(format!("{stem}.json"), &report)?;
    let table = report.counts_table();
    run.write_text(format!("{stem}.csv"), &table)?;
    print!("{table}");
    Ok(())
}

fn curve(run: &mut Run, cfg: &RunConfig, input: &SimsInput) -> Result<(), CliError> {
    let measure = cfg.motifs.classify_measure;
    let matrices = load_measure(run, &sims_dir(cfg, input), measure)?;
    let curves: BTreeMap<u32, _> = matrices
        .iter()
        .map(|m| {
            (
                m.upstream_layer,
                neighbor_threshold_curve(m, &cfg.motifs.curve_thresholds),
            )
        })
        .collect();
    run.write_json(format!("curves/{measure}.json"), &curves)?;
    Ok(())
}

fn gates(
    run: &mut Run,
    cfg: &RunConfig,
    input: &SimsInput,
    measures: Option<&[MeasureKind]>,
    allow_any: bool,
) -> Result<(), CliError> {
    let measures = measures.unwrap_or(&[MeasureKind::Necessity, MeasureKind::Sufficiency]);
    let opts = GateOptions {
        min_sim: cfg.motifs.gate_min_sim,
        min_arity: cfg.motifs.gate_arity,
        max_arity: cfg.motifs.gate_max_arity,
        allow_any_measure: allow_any,
    };
    let dir = sims_dir(cfg, input);
    let mut found = Vec::new();
    for &measure in measures {
        for m in load_measure(run, &dir, measure)? {
            found.extend(find_gates(&m, &opts)?);
        }
    }
    log::info!("{} gate candidates", found.len());
    run.write_json("gates.json", &found)?;
    Ok(())
}

fn project(run: &mut Run, cfg: &RunConfig, a: &crate::ProjectArgs) -> Result<(), CliError> {
    let dataset = open_dataset(run, cfg)?;
    let (table, _) = load_binarizer(run, cfg)?;
    let sae = SaeWeights::load(run.input(&a.sae)?)?;
    let next = SaeWeights::load(run.input(&a.next_sae)?)?;
    let residuals = read_residuals(run.input(&a.residuals)?)?;
    let necessity = load_measure(run, &sims_dir(cfg, &a.sims), MeasureKind::Necessity)?
        .into_iter()
        .find(|m| m.upstream_layer == sae.layer())
        .ok_or_else(|| CliError::Missing(format!("no necessity matrix for layer {}", sae.layer())))?;
    let opts = ProjectionOptions {
        necessity_max: cfg.motifs.necessity_max,
        act_min_frac: cfg.motifs.act_min_frac,
        fire_frac: cfg.motifs.fire_frac,
        mode: a.mode.into(),
        features: a.features.clone(),
    };
    let report = disappearance_projection(&dataset, &table, &residuals, &sae, &next, &necessity, &opts)?;
    log::info!("{} features, {} samples", report.selected.len(), report.samples.len());
    run.write_json(format!("projection_L{:02}.json", sae.layer()), &report)?;
    Ok(())
}

fn ablation(run: &mut Run, cfg: &RunConfig, records: &Path) -> Result<(), CliError> {
    let all = load_ablation_records(run.input(records)?)?;
    if all.is_empty() {
        return Err(CliError::Missing(format!("{} holds no records", records.display())));
    }
    let mut by_measure: BTreeMap<MeasureKind, Vec<AblationRecord>> = BTreeMap::new();
    for r in all {
        by_measure.entry(r.measure).or_default().push(r);
    }
    for (measure, recs) in by_measure {
        let summary = ablation_bins(&recs, cfg.motifs.ablation_bins)?;
        run.write_json(format!("ablation/{measure}.json"), &summary)?;
    }
    Ok(())
}

fn calibrate(run: &mut Run, cfg: &RunConfig, a: &crate::CalibrateArgs) -> Result<(), CliError> {
    let matrix = SimilarityMatrix::read(run.input(&a.matrix)?)?;
    let ann = annotations(run, cfg)?;
    let mut judge: Box<dyn Judge> = match (&a.oracle_cutoff, &a.answers) {
        (Some(cut), _) => {
            let cut = *cut;
            Box::new(ScriptedJudge(move |p: &ProbePair| p.similarity >= cut))
        }
        (None, Some(path)) => {
            let file = std::fs::File::open(run.input(path)?).map_err(|e| CliError::from_io(path, e))?;
            Box::new(TerminalJudge::new(BufReader::new(file), std::io::sink()))
        }
        (None, None) => Box::new(TerminalJudge::new(std::io::stdin().lock(), std::io::stderr())),
    };
    let result = calibrate_threshold(&matrix, &ann, judge.as_mut(), &cfg.calibrate)?;
    log::info!(
        "interval [{}, {}] after {} probes{}",
        result.interval.0,
        result.interval.1,
        result.probes.len(),
        if result.converged { "" } else { " (not converged)" }
    );
    run.write_json(
        format!("calibration/{}_L{:02}.json", matrix.measure, matrix.upstream_layer),
        &result,
    )?;
    Ok(())
}

fn paired_files(first: &Path, second: &Path) -> Result<Vec<(PathBuf, PathBuf)>, CliError> {
    if first.is_dir() != second.is_dir() {
        return Err(CliError::Config("compare two files or two directories".into()));
    }
    if !first.is_dir() {
        return Ok(vec![(first.to_path_buf(), second.to_path_buf())]);
    }
    let pairs: Vec<_> = matrix_files(first)?
        .into_iter()
        .filter_map(|a| {
            let b = second.join(a.file_name()?);
            b.exists().then_some((a, b))
        })
        .collect();
    if pairs.is_empty() {
        return Err(CliError::Missing("the directories share no matrix files".into()));
    }
    Ok(pairs)
}

fn compare(run: &mut Run, cfg: &RunConfig, first: &Path, second: &Path, name: &str) -> Result<(), CliError> {
    let (first, second) = (run.input(first)?, run.input(second)?);
    let mut out = BTreeMap::new();
    for (a, b) in paired_files(&first, &second)? {
        let ma = SimilarityMatrix::read(&a)?;
        let mb = SimilarityMatrix::read(&b)?;
        let c = compare_matrices(&ma, &mb, cfg.sims.histogram_bins)?;
        log::info!(
            "{}: absent overlap {:.4}, agreement {:.4}, mean |diff| {:?}",
            a.display(),
            c.absent_overlap,
            c.agreement,
            c.mean_abs_diff
        );
        let key = a
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        out.insert(key, c);
    }
    run.write_json(name, &out)?;
    Ok(())
}

fn histogram(run: &mut Run, cfg: &RunConfig, input: &SimsInput) -> Result<(), CliError> {
    let dir = run.input(sims_dir(cfg, input))?;
    let mut out = BTreeMap::new();
    for path in matrix_files(&dir)? {
        let m = SimilarityMatrix::read(&path)?;
        let key = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        out.insert(key, similarity_histogram(&m, cfg.sims.histogram_bins)?);
    }
    run.write_json("histograms.json", &out)?;
    Ok(())
}

fn serve(mut run: Run, config: &Path, bind: Option<&str>) -> Result<(), CliError> {
    use saegraph_serve::{resolve_bind, AppState, ServeConfig, BIND_ENV};
    let sc = ServeConfig::load(run.input(config)?)?;
    let env = std::env::var(BIND_ENV).ok();
    let addr = resolve_bind(bind, env.as_deref(), sc.bind.as_deref());
    let state = AppState::load(&sc)?;
    for p in sc.artifact_paths() {
        run.input(p)?;
    }
    run.finish()?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    rt.block_on(saegraph_serve::serve(state, &addr))?;
    Ok(())
}
