use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use aigm_core::audio::{load_wav, resample, to_mono};
use aigm_core::beats::{analyze_track, segment_bars, segment_count, write_boundaries_csv, BARS_PER_SEGMENT};
use aigm_core::detect::{
    extractor_preset, load_detector, load_embeddings, predict as decide, self_similarity, track_to_sequence, AnyDetector,
    Arch, AudioCat, AudioCatConfig, Detector, EmbeddingSequence, FeatureExtractor, FeatureKind, Features, FxSegConfig,
    FxSegment, SegTrConfig, SegmentTransformer, VectorEmbedder,
};
use aigm_core::nn::{save_checkpoint, AttentionConfig, Checkpoint};
use aigm_core::train::{
    analyze_tracks, build_stage1_set, build_stage2_set, evaluate, evaluate_tracks, featurize_tracks, load_tracks,
    read_manifest, split_dataset, synth_dataset, train as fit, write_manifest, AudioSet, Dataset, EvalReport, FeatureSet,
    Manifest, Split, SynthSpec, Track, TrainConfig, METRIC_HEADER,
};
use aigm_core::{AudioBuffer, ANALYSIS_RATE};

use crate::error::{usage, CliError, CliResult};
use crate::{Mode, RunConfig, Units};

fn load_mono(path: &Path) -> CliResult<AudioBuffer> {
    let buf = load_wav(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(resample(&to_mono(&buf), ANALYSIS_RATE)?)
}

fn load_model(path: &Path) -> CliResult<(AnyDetector, Checkpoint)> {
    load_detector(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn meta_str<'a>(ck: &'a Checkpoint, key: &str) -> CliResult<&'a str> {
    ck.meta(key)
        .ok_or_else(|| CliError::Io(format!("checkpoint lacks {key:?} metadata")))
}

fn extractor_of(ck: &Checkpoint) -> CliResult<Box<dyn FeatureExtractor>> {
    Ok(extractor_preset(meta_str(ck, "extractor")?)?)
}

pub fn beats(audio: &Path, out: Option<&Path>) -> CliResult<()> {
    let track = load_mono(audio)?;
    let a = analyze_track(&track)?;
    let g = &a.grid;
    println!(
        "bpm={:.2} bar_period_s={:.4} residual_rms_s={:.4} start_s={:.4} bars={} segments={}",
        a.bpm,
        g.period,
        g.residual_rms,
        g.start,
        g.count.saturating_sub(1),
        segment_count(track.duration_s(), g, BARS_PER_SEGMENT)
    );
    if let Some(path) = out {
        write_boundaries_csv(path, &g.bars())?;
    }
    Ok(())
}

/// Manifest with a split on every entry; unsplit manifests get a seeded 8:1:1 split.
fn split_manifest(path: &Path, seed: u64) -> CliResult<Manifest> {
    let m = read_manifest(path)?;
    let assigned = m.entries.iter().filter(|e| e.split.is_some()).count();
    if assigned == m.len() {
        Ok(m)
    } else if assigned == 0 {
        Ok(split_dataset(&m, [8, 1, 1], seed)?)
    } else {
        Err(CliError::Io(format!(
            "{}: split column is set on {assigned} of {} rows",
            path.display(),
            m.len()
        )))
    }
}

pub struct TrainArgs {
    pub stage: u8,
    pub arch: String,
    pub manifest: PathBuf,
    pub preset: Option<String>,
    pub out: PathBuf,
    pub stage1: Option<PathBuf>,
    pub extractor: Option<String>,
    pub units: Option<Units>,
    pub d_model: Option<usize>,
    pub heads: Option<usize>,
    pub ffn: Option<usize>,
    pub history: Option<PathBuf>,
    pub sets: Vec<String>,
}

fn train_config(args: &TrainArgs, rc: &mut RunConfig) -> CliResult<TrainConfig> {
    let file_preset: Option<String> = rc.take("preset")?;
    let default = if args.stage == 1 { "paper-s1-bce" } else { "paper-s2" };
    let preset = args.preset.clone().or(file_preset).unwrap_or_else(|| default.to_string());
    let mut cfg = TrainConfig::preset(&preset)?;
    cfg.seed = rc.seed;
    let keys = ["epochs", "batch_size", "lr", "weight_decay", "patience", "max_seq", "dropout", "loss", "augment"];
    for key in keys {
        if let Some(v) = rc.file.remove(key) {
            cfg.set(key, &v)?;
        }
    }
    for kv in &args.sets {
        let (k, v) = kv.split_once('=').ok_or_else(|| usage(format!("--set {kv:?}: expected KEY=VALUE")))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn attention(args: &TrainArgs, rc: &mut RunConfig, inherited: Option<AttentionConfig>) -> CliResult<AttentionConfig> {
    let base = inherited.unwrap_or(AttentionConfig::new(128, 4, 256));
    let d = args.d_model.or(rc.take("d_model")?).unwrap_or(base.model_dim);
    let h = args.heads.or(rc.take("heads")?).unwrap_or(base.heads);
    let f = args.ffn.or(rc.take("ffn")?).unwrap_or(base.ffn_dim);
    let cfg = AttentionConfig::new(d, h, f);
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    if d % 2 == 1 {
        return Err(usage(format!("d_model must be even, got {d}")));
    }
    Ok(cfg)
}

fn kv(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn in_split<'a>(tracks: &'a [Track], split: Split) -> impl Iterator<Item = &'a Track> {
    tracks.iter().filter(move |t| t.split == split)
}

/// Stage-1 examples of one split: each track's 4-bar segments, or each clip.
fn stage1_audio(tracks: &[Track], split: Split, units: Units) -> CliResult<(Vec<AudioBuffer>, Vec<u8>)> {
    let (mut audio, mut labels) = (Vec::new(), Vec::new());
    for t in in_split(tracks, split) {
        match units {
            Units::Clips => {
                audio.push(t.audio.clone());
                labels.push(t.label);
            }
            Units::Segments => {
                let segs = analyze_track(&t.audio).and_then(|a| segment_bars(&t.audio, &a.grid, BARS_PER_SEGMENT));
                match segs {
                    Ok(s) => {
                        labels.extend(std::iter::repeat(t.label).take(s.len()));
                        audio.extend(s.segments);
                    }
                    Err(e) => eprintln!("aigm: skipping {}: {e}", t.key),
                }
            }
        }
    }
    Ok((audio, labels))
}

fn clip_features(
    tracks: &[Track],
    split: Split,
    extractor: &dyn FeatureExtractor,
) -> CliResult<FeatureSet> {
    let mut set = FeatureSet::default();
    for t in in_split(tracks, split) {
        set.push(extractor.extract(&t.audio, &t.key)?, t.label);
    }
    Ok(set)
}

/// Precomputed stage-1 features, or `None` when augmentation needs raw audio.
fn stage1_features(
    tracks: &[Track],
    split: Split,
    units: Units,
    extractor: &dyn FeatureExtractor,
    jobs: usize,
) -> CliResult<FeatureSet> {
    match units {
        Units::Clips => clip_features(tracks, split, extractor),
        Units::Segments => {
            let chosen: Vec<Track> = in_split(tracks, split).cloned().collect();
            let grids = analyze_tracks(&chosen, jobs);
            for (t, g) in chosen.iter().zip(&grids) {
                if g.is_none() {
                    eprintln!("aigm: skipping {}: no beat grid", t.key);
                }
            }
            let feats = featurize_tracks(&chosen, &grids, extractor, jobs)?;
            Ok(build_stage1_set(&feats, split))
        }
    }
}

fn report_history(outcome: &aigm_core::train::TrainOutcome) {
    for e in &outcome.history.epochs {
        eprintln!(
            "epoch {:>3} train_loss={:.6} val_loss={:.6} val_acc={:.4}",
            e.epoch, e.train_loss, e.val_loss, e.val_accuracy
        );
    }
}

pub fn train(args: TrainArgs, rc: &mut RunConfig) -> CliResult<()> {
    let arch: Arch = args.arch.parse().map_err(|_| usage(format!("unknown arch {:?}", args.arch)))?;
    if arch.stage() != args.stage {
        return Err(usage(format!("{arch} is a stage-{} model", arch.stage())));
    }
    let cfg = train_config(&args, rc)?;
    let manifest = split_manifest(&args.manifest, rc.seed)?;
    let tracks = load_tracks(&manifest)?;
    let mut meta = vec![
        kv("stage", args.stage),
        kv("seed", rc.seed),
        kv("preset", args.preset.as_deref().unwrap_or("")),
    ];

    let extractor: Box<dyn FeatureExtractor>;
    let (mut model, train_set, val_set): (AnyDetector, Box<dyn Dataset + '_>, Box<dyn Dataset + '_>);
    if args.stage == 1 {
        if args.stage1.is_some() {
            return Err(usage("--stage1 applies to stage-2 training only"));
        }
        let file_ex: Option<String> = rc.take("extractor")?;
        let default_ex = if arch == Arch::FxSeg { "vec-2048" } else { "win-128" };
        let ex_name = args.extractor.clone().or(file_ex).unwrap_or_else(|| default_ex.into());
        extractor = extractor_preset(&ex_name)?;
        if arch == Arch::AudioCat && extractor.kind() != FeatureKind::Sequence {
            return Err(usage(format!("audiocat needs a sequence extractor, {ex_name} yields vectors")));
        }
        let file_units: Option<String> = rc.take("units")?;
        let units = match (args.units, file_units.as_deref()) {
            (Some(u), _) => u,
            (None, None | Some("segments")) => Units::Segments,
            (None, Some("clips")) => Units::Clips,
            (None, Some(other)) => return Err(usage(format!("config: unknown units {other:?}"))),
        };
        let attn = attention(&args, rc, None)?;
        model = match arch {
            Arch::AudioCat => {
                let mut c = AudioCatConfig::new(extractor.dim());
                c.attn = attn;
                AnyDetector::AudioCat(AudioCat::new(c, rc.seed)?)
            }
            _ => {
                let mut c = FxSegConfig::new(extractor.dim());
                c.attn = attn;
                AnyDetector::FxSeg(FxSegment::new(c, rc.seed)?)
            }
        };
        meta.push(kv("extractor", &ex_name));
        meta.push(kv("units", units.name()));
        let augmenting = extractor.trainable()
            && cfg.augment.enabled_when_extractor_trainable
            && cfg.augment.probability > 0.0;
        if augmenting {
            let (segments, labels) = stage1_audio(&tracks, Split::Train, units)?;
            train_set = Box::new(AudioSet {
                segments,
                labels,
                extractor: extractor.as_ref(),
                policy: cfg.augment.clone(),
            });
        } else {
            train_set = Box::new(stage1_features(&tracks, Split::Train, units, extractor.as_ref(), rc.jobs)?);
        }
        val_set = Box::new(stage1_features(&tracks, Split::Val, units, extractor.as_ref(), rc.jobs)?);
    } else {
        let s1_path = args.stage1.as_deref().ok_or_else(|| usage("stage-2 training needs --stage1 <checkpoint>"))?;
        if args.extractor.is_some() || args.units.is_some() {
            return Err(usage("--extractor and --units come from the stage-1 checkpoint"));
        }
        let (stage1, s1_ck) = load_model(s1_path)?;
        if stage1.arch().stage() != 1 {
            return Err(usage(format!("{} is not a stage-1 checkpoint", s1_path.display())));
        }
        extractor = extractor_of(&s1_ck)?;
        let grids = analyze_tracks(&tracks, rc.jobs);
        let feats = featurize_tracks(&tracks, &grids, extractor.as_ref(), rc.jobs)?;
        let d_in = stage1.forward(&first_features(&feats)?)?.pooled.len();
        let attn = attention(&args, rc, None)?;
        let mut c = SegTrConfig::new(d_in);
        c.attn = attn;
        c.max_seq = cfg.max_seq;
        model = AnyDetector::SegTr(SegmentTransformer::new(c, rc.seed.wrapping_add(100))?);
        train_set = Box::new(build_stage2_set(&stage1, &feats, Split::Train, cfg.max_seq, rc.jobs)?);
        val_set = Box::new(build_stage2_set(&stage1, &feats, Split::Val, cfg.max_seq, rc.jobs)?);
        meta.push(kv("extractor", extractor.name()));
    }
    if let Some(k) = rc.file.keys().next() {
        return Err(usage(format!("config: unknown key {k:?}")));
    }
    eprintln!(
        "aigm: training {arch} on {} examples ({} validation), {} epochs, batch {}",
        train_set.len(),
        val_set.len(),
        cfg.epochs,
        cfg.batch_size
    );
    let outcome = fit(&mut model, train_set.as_ref(), val_set.as_ref(), &cfg)?;
    report_history(&outcome);
    meta.push(kv("best_epoch", outcome.best_epoch));
    let mut all = model.meta();
    all.extend(meta);
    save_checkpoint(&args.out, model.params(), &all)?;
    let history = args.history.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".history.csv");
        PathBuf::from(p)
    });
    outcome.history.save_csv(&history)?;
    let best = &outcome.history.epochs[outcome.best_epoch.saturating_sub(1).min(outcome.history.epochs.len() - 1)];
    println!(
        "epochs={} best_epoch={} val_loss={:.6} val_acc={:.4} checkpoint={}",
        outcome.history.epochs.len(),
        outcome.best_epoch,
        best.val_loss,
        best.val_accuracy,
        args.out.display()
    );
    Ok(())
}

fn first_features(feats: &[aigm_core::train::TrackFeatures]) -> CliResult<Features> {
    feats
        .iter()
        .find_map(|t| t.segments.as_ref().and_then(|s| s.first().cloned()))
        .ok_or_else(|| CliError::Content("no track could be segmented".into()))
}

fn parse_split(s: &str) -> CliResult<Option<Split>> {
    if s == "all" {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| usage(format!("unknown split {s:?}")))
}

fn print_report(report: &EvalReport, out: Option<&Path>) -> CliResult<()> {
    let text = format!("{METRIC_HEADER}\n{}\n", report.csv_row());
    print!("{text}");
    for m in &report.undefined {
        eprintln!("aigm: {m} is undefined for this split (reported as 0)");
    }
    if let Some(path) = out {
        fs::write(path, text)?;
    }
    Ok(())
}

pub fn eval(
    ckpt: &Path,
    manifest: &Path,
    split: &str,
    stage1: Option<&Path>,
    threshold: f64,
    out: Option<&Path>,
    rc: &RunConfig,
) -> CliResult<()> {
    let wanted = parse_split(split)?;
    let (model, ck) = load_model(ckpt)?;
    let mut m = split_manifest(manifest, rc.seed)?;
    if let Some(s) = wanted {
        m.entries.retain(|e| e.split == Some(s));
    }
    // tag everything as test so the library helpers see one split
    for e in &mut m.entries {
        e.split = Some(Split::Test);
    }
    if m.is_empty() {
        return Err(CliError::Training(format!("split {split} is empty")));
    }
    let tracks = load_tracks(&m)?;
    let report = match model {
        AnyDetector::SegTr(stage2) => {
            let s1_path = stage1.ok_or_else(|| usage("stage-2 checkpoints need --stage1 <checkpoint>"))?;
            let (s1, s1_ck) = load_model(s1_path)?;
            let extractor = extractor_of(&s1_ck)?;
            let grids = analyze_tracks(&tracks, rc.jobs);
            let feats = featurize_tracks(&tracks, &grids, extractor.as_ref(), rc.jobs)?;
            let (outcomes, _) = evaluate_tracks(&s1, &stage2, &feats, Split::Test, rc.jobs)?;
            let scores: Vec<f64> = outcomes.iter().map(|o| o.probability.unwrap_or(0.5)).collect();
            let labels: Vec<u8> = outcomes.iter().map(|o| o.label).collect();
            EvalReport::from_scores(&scores, &labels, threshold)?
        }
        stage1_model => {
            let extractor = extractor_of(&ck)?;
            let units = match ck.meta("units") {
                Some("clips") => Units::Clips,
                _ => Units::Segments,
            };
            let set = stage1_features(&tracks, Split::Test, units, extractor.as_ref(), rc.jobs)?;
            if set.is_empty() {
                return Err(CliError::Content("no examples could be extracted".into()));
            }
            let (scores, _, _) = evaluate(&stage1_model, &set, aigm_core::train::LossKind::Bce)?;
            EvalReport::from_scores(&scores, &set.labels, threshold)?
        }
    };
    print_report(&report, out)
}

pub fn predict(ckpt: &Path, audio: &Path, mode: Mode, stage1: Option<&Path>, threshold: f64) -> CliResult<()> {
    let (model, ck) = load_model(ckpt)?;
    let track = load_mono(audio)?;
    let out = match mode {
        Mode::Segment => {
            if model.arch().stage() != 1 {
                return Err(usage("segment mode needs a stage-1 checkpoint"));
            }
            let extractor = extractor_of(&ck)?;
            model.forward(&extractor.extract(&track, "clip")?)?
        }
        Mode::Full => {
            let AnyDetector::SegTr(stage2) = &model else {
                return Err(usage("full mode needs a stage-2 checkpoint as --ckpt"));
            };
            let s1_path = stage1.ok_or_else(|| usage("full mode needs --stage1 <checkpoint>"))?;
            let (s1, s1_ck) = load_model(s1_path)?;
            let extractor = extractor_of(&s1_ck)?;
            let analysis = analyze_track(&track)?;
            let seq = track_to_sequence(&track, &analysis.grid, &s1, extractor.as_ref(), "track", stage2.cfg.max_seq)?;
            eprintln!("aigm: {} segments at {:.2} BPM", seq.valid_count(), analysis.bpm);
            stage2.forward(&seq)?
        }
    };
    println!("probability={:.6} label={}", out.probability, decide(&out, threshold));
    Ok(())
}

fn write_ssm(seq: &EmbeddingSequence, out: &Path) -> CliResult<()> {
    let ssm = self_similarity(seq);
    let with_ext = |ext: &str| {
        let mut p = out.as_os_str().to_owned();
        p.push(ext);
        PathBuf::from(p)
    };
    ssm.save_csv(&with_ext(".csv"))?;
    ssm.save_pgm(&with_ext(".pgm"))?;
    println!("n={} valid={}", ssm.len(), ssm.mask.iter().filter(|&&m| m).count());
    Ok(())
}

pub fn ssm(input: &Path, out: &Path, stage1: Option<&Path>) -> CliResult<()> {
    let is_emb = input.extension().is_some_and(|e| e == "emb");
    let seq = if is_emb {
        if stage1.is_some() {
            return Err(usage("--stage1 applies to audio input only"));
        }
        load_embeddings(input).map_err(|e| CliError::Io(format!("{}: {e}", input.display())))?
    } else {
        let track = load_mono(input)?;
        let grid = analyze_track(&track)?.grid;
        match stage1 {
            Some(p) => {
                let (s1, ck) = load_model(p)?;
                let n = segment_count(track.duration_s(), &grid, BARS_PER_SEGMENT);
                track_to_sequence(&track, &grid, &s1, extractor_of(&ck)?.as_ref(), "track", n.max(1))?
            }
            None => {
                let embed = VectorEmbedder::new(2048);
                let segs = segment_bars(&track, &grid, BARS_PER_SEGMENT)?;
                let mut rows = Vec::new();
                for (i, s) in segs.segments.iter().enumerate() {
                    match embed.extract(s, &format!("track#{i}"))? {
                        Features::Vector(v) => rows.extend(v),
                        Features::Sequence(_) => unreachable!("vector extractor"),
                    }
                }
                let vectors = ndarray::Array2::from_shape_vec((segs.len(), 2048), rows).expect("row sizes");
                EmbeddingSequence::new(vectors, (0..segs.len()).map(|i| format!("track#{i}")).collect())
            }
        }
    };
    write_ssm(&seq, out)
}

pub fn synth(out: &Path, per_class: usize, duration: f64, with_split: bool, rc: &RunConfig) -> CliResult<()> {
    if !(duration > 0.0) {
        return Err(usage("--duration must be positive"));
    }
    fs::create_dir_all(out)?;
    let spec = SynthSpec {
        duration_s: duration,
        ..SynthSpec::default()
    };
    let mut m = synth_dataset(per_class, out, rc.seed, &spec)?;
    if with_split {
        m = split_dataset(&m, [8, 1, 1], rc.seed)?;
    }
    let path = out.join("manifest.csv");
    write_manifest(&m, &path)?;
    println!("tracks={} manifest={}", m.len(), path.display());
    Ok(())
}

pub fn split(manifest: &Path, out: &Path, ratios: &str, rc: &RunConfig) -> CliResult<()> {
    let parts: Vec<usize> = ratios
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("bad ratios {ratios:?}")))?;
    let r: [usize; 3] = parts
        .try_into()
        .map_err(|_| usage(format!("need three ratios, got {ratios:?}")))?;
    let m = split_dataset(&read_manifest(manifest)?, r, rc.seed)?;
    write_manifest(&m, out)?;
    let mut line = String::new();
    for s in [Split::Train, Split::Val, Split::Test] {
        let part = m.split(s);
        let pos = part.iter().filter(|e| e.label == 1).count();
        line.push_str(&format!("{s}={} ({pos} ai) ", part.len()));
    }
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{}", line.trim_end())?;
    Ok(())
}
