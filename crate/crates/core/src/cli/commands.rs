use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AnalyzeArgs, Cli, Command, ConfigAction, Outcome, RunConfig};
use crate::analyzer::{
    analysis_records, emit_csv, emit_svg, latent_dispersion, linearity, mean_curve, rollout_curve, saliency_viz, to_pgm,
    AnalysisRecord, Plot,
};
use crate::error::{Error, Result};
use crate::gradfab::Scalar;
use crate::jepacore::JepaModel;
use crate::maskfab::{
    build_mask_with_scores, cell_scores, motion_energy, pool_saliency, zero_motion_region, MaskStrategy, Region,
    SaliencyMode,
};
use crate::probefab::{build_qa_set, read_jsonl, train_probe, write_jsonl, ProbeData, ProbeKind, ProbeMetrics, Vocab};
use crate::selfcheck;
use crate::trainfab::{
    extract_features, load_checkpoint, read_featurebank, run_staged_pipeline, save_checkpoint, write_featurebank, Checkpoint,
    FeatureBank, Precision, TrainSet, Variant,
};
use crate::worldsim::gen_dataset;

const DATASET_INFO: &str = "dataset.json";
const QA_FILE: &str = "qa.jsonl";
const CHECKPOINT: &str = "checkpoint.iajc";
const FEATURES: &str = "features.iajf";

#[derive(Debug, Serialize, Deserialize)]
struct DatasetInfo {
    config_digest: String,
    data_digest: String,
    clips: usize,
    questions: usize,
}

#[derive(Serialize)]
struct LossRow<'a> {
    stage: &'a str,
    strategy: MaskStrategy,
    step: usize,
    loss: f64,
    config_digest: &'a str,
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_digest: &'a str,
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize)]
struct LinearityRow<'a> {
    clip_id: u32,
    motion_energy: f64,
    dispersion: f64,
    mask_strategy: Option<MaskStrategy>,
    mask_recall: Option<f64>,
    config_digest: &'a str,
}

#[derive(Serialize)]
struct DispersionRow<'a> {
    clip_id: u32,
    dispersion: f64,
    config_digest: &'a str,
}

#[derive(Serialize)]
struct CurveRow<'a> {
    step: usize,
    similarity: f64,
    config_digest: &'a str,
}

struct Ctx {
    cfg: RunConfig,
    digest: String,
    out: PathBuf,
    workers: usize,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_json<T: Serialize>(&self, name: &str, body: T) -> Result<()> {
        let doc = Stamped {
            config_digest: &self.digest,
            body,
        };
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        fs::write(self.path(name), text)?;
        Ok(())
    }

    fn bank_digest(&self, backbone: &str) -> String {
        format!("{}|{backbone}", self.digest)
    }

    fn read_bank(&self, path: &Path) -> Result<FeatureBank> {
        let bank = read_featurebank(path)?;
        match bank.digest.split_once('|') {
            Some((d, _)) if d == self.digest => Ok(bank),
            Some((d, _)) => Err(Error::DigestMismatch {
                expected: self.digest.clone(),
                actual: d.into(),
            }),
            None => Err(Error::DigestMismatch {
                expected: self.digest.clone(),
                actual: bank.digest.clone(),
            }),
        }
    }

    fn load_data(&self, dir: &Path) -> Result<TrainSet> {
        let info: DatasetInfo = serde_json::from_slice(&fs::read(dir.join(DATASET_INFO))?)?;
        let want = self.cfg.data_digest();
        if info.data_digest != want {
            return Err(Error::DigestMismatch {
                expected: want,
                actual: info.data_digest,
            });
        }
        TrainSet::from_dir(dir, &self.cfg.world, &self.cfg.model.grid, &self.cfg.norm, self.workers)
    }

    fn check_checkpoint<T: Scalar>(&self, ck: &Checkpoint<T>) -> Result<()> {
        if ck.config_digest != self.digest {
            return Err(Error::DigestMismatch {
                expected: self.digest.clone(),
                actual: ck.config_digest.clone(),
            });
        }
        Ok(())
    }
}

/// Positions in `data` of the bank's clips.
fn data_positions(bank: &FeatureBank, data: &TrainSet) -> Result<Vec<usize>> {
    bank.ids
        .iter()
        .map(|id| {
            data.ids()
                .iter()
                .position(|x| x == id)
                .ok_or_else(|| Error::Contract(format!("clip {id} of the bank is not in the dataset")))
        })
        .collect()
}

pub(super) fn dispatch(cli: &Cli) -> Result<Outcome> {
    if let Command::Config { action: ConfigAction::Init } = cli.command {
        println!("{}", RunConfig::default().to_json()?);
        return Ok(Outcome::Done);
    }
    let cfg = cli.global.run_config()?;
    let ctx = Ctx {
        digest: cfg.digest(),
        cfg,
        out: cli.global.out.clone(),
        workers: cli.global.workers(),
    };
    if let Command::Selfcheck { cases, tolerance } = cli.command {
        return selfcheck_cmd(cases, tolerance);
    }
    fs::create_dir_all(&ctx.out)?;
    match &cli.command {
        Command::GenData => gen_data(&ctx),
        Command::Pretrain { variant, data } => match ctx.cfg.stage.precision {
            Precision::F32 => pretrain::<f32>(&ctx, *variant, data),
            Precision::F64 => pretrain::<f64>(&ctx, *variant, data),
        },
        Command::Extract { checkpoint, data } => match ctx.cfg.stage.precision {
            Precision::F32 => extract::<f32>(&ctx, checkpoint, data),
            Precision::F64 => extract::<f64>(&ctx, checkpoint, data),
        },
        Command::Probe { task, bank, data } => probe(&ctx, *task, bank, data),
        Command::Analyze(args) => match ctx.cfg.stage.precision {
            Precision::F32 => analyze::<f32>(&ctx, args),
            Precision::F64 => analyze::<f64>(&ctx, args),
        },
        Command::VizMask {
            data,
            clip,
            strategy,
            zero_region,
        } => viz_mask(&ctx, data, *clip, *strategy, *zero_region),
        Command::Config { .. } | Command::Selfcheck { .. } => unreachable!("handled above"),
    }?;
    Ok(Outcome::Done)
}

fn gen_data(ctx: &Ctx) -> Result<()> {
    let c = &ctx.cfg;
    let manifest = gen_dataset(&c.world, &c.model.grid, c.data.clips, c.data.master_seed, &ctx.out, ctx.workers)?;
    let vocab = Vocab::for_world(&c.world);
    let scenes: Vec<(u32, u64)> = manifest.entries.iter().enumerate().map(|(i, e)| (i as u32, e.seed)).collect();
    let items = build_qa_set(&c.world, &vocab, &scenes, c.data.qa_seed, ctx.workers)?;
    write_jsonl(&ctx.path(QA_FILE), &items, &vocab)?;
    let info = DatasetInfo {
        config_digest: ctx.digest.clone(),
        data_digest: c.data_digest(),
        clips: manifest.entries.len(),
        questions: items.len(),
    };
    fs::write(ctx.path(DATASET_INFO), serde_json::to_string_pretty(&info)? + "\n")?;
    let counts = manifest.class_counts();
    println!("wrote {} clips and {} questions to {}", info.clips, info.questions, ctx.out.display());
    for (class, n) in counts {
        println!("  {:<17} {n}", class.name());
    }
    Ok(())
}

fn pretrain<T: Scalar>(ctx: &Ctx, variant: Variant, dir: &Path) -> Result<()> {
    let data = ctx.load_data(dir)?;
    let c = &ctx.cfg;
    let model = JepaModel::<T>::init(&c.model, c.stage.seed)?;
    let mut state = Checkpoint::new(model, &c.norm, ctx.digest.clone());
    let stages = variant.stages(&c.stage);
    let mut rows = Vec::new();
    let logs = run_staged_pipeline(&stages, 0, &mut state, &data, |ck, log| {
        save_checkpoint(&ctx.path(&format!("{}.iajc", log.stage)), ck)?;
        println!(
            "{}: {} steps, last loss {:.6}",
            log.stage,
            log.losses.len(),
            log.losses.last().copied().unwrap_or(f64::NAN)
        );
        rows.push(log.clone());
        Ok(())
    })?;
    save_checkpoint(&ctx.path(CHECKPOINT), &state)?;
    let flat: Vec<LossRow<'_>> = logs
        .iter()
        .flat_map(|l| {
            l.losses.iter().enumerate().map(|(k, &loss)| LossRow {
                stage: &l.stage,
                strategy: l.strategy,
                step: l.first_step + k,
                loss,
                config_digest: &ctx.digest,
            })
        })
        .collect();
    emit_csv(&flat, &ctx.path("losses.csv"))?;
    ctx.write_json(
        "pretrain.json",
        serde_json::json!({
            "variant": variant.name(),
            "stages": logs.iter().map(|l| l.stage.clone()).collect::<Vec<_>>(),
            "global_step": state.global_step,
            "backbone_digest": state.model.backbone_digest(),
        }),
    )?;
    Ok(())
}

fn extract<T: Scalar>(ctx: &Ctx, checkpoint: &Path, dir: &Path) -> Result<()> {
    let ck = load_checkpoint::<T>(checkpoint)?;
    ctx.check_checkpoint(&ck)?;
    let data = ctx.load_data(dir)?;
    let mut bank = extract_features(&ck, &data, ctx.workers)?;
    bank.digest = ctx.bank_digest(&bank.digest);
    write_featurebank(&ctx.path(FEATURES), &bank)?;
    println!("extracted {} clips of {:?} features", bank.len(), bank.dims);
    Ok(())
}

fn probe(ctx: &Ctx, task: ProbeKind, bank: &Path, dir: &Path) -> Result<()> {
    let bank = ctx.read_bank(bank)?;
    let data = ctx.load_data(dir)?;
    let pos = data_positions(&bank, &data)?;
    let labels: Vec<_> = pos.iter().map(|&p| data.labels(p).clone()).collect();
    let vocab = Vocab::for_world(&ctx.cfg.world);
    let items = if task == ProbeKind::Reasoner {
        read_jsonl(&dir.join(QA_FILE), &vocab)?
    } else {
        Vec::new()
    };
    let input = ProbeData {
        bank: &bank,
        labels: &labels,
        items: &items,
        vocab_size: vocab.len(),
        n_answers: ctx.cfg.n_answers(),
    };
    let metrics: ProbeMetrics = train_probe(task, &input, &ctx.cfg.probe)?;
    println!(
        "{task}: accuracy {:.4} (chance {:.4}) on {} held-out clips",
        metrics.accuracy, metrics.chance, metrics.test_clips
    );
    ctx.write_json(&format!("probe-{}.json", task.name()), &metrics)
}

fn analyze<T: Scalar>(ctx: &Ctx, args: &AnalyzeArgs) -> Result<()> {
    if !(args.linearity || args.rollout || args.dispersion || args.saliency.is_some()) {
        return Err(Error::Contract("choose at least one of --linearity, --rollout, --dispersion, --saliency".into()));
    }
    let bank = ctx.read_bank(&args.bank)?;
    let data = match &args.data {
        Some(d) => Some(ctx.load_data(d)?),
        None => None,
    };
    let need_data = || data.as_ref().ok_or_else(|| Error::Contract("this analysis needs --data".into()));

    if args.dispersion {
        let d: Vec<f64> = (0..bank.len()).map(|p| latent_dispersion(bank.slab(p))).collect();
        let mean = d.iter().sum::<f64>() / d.len().max(1) as f64;
        let std = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d.len().max(1) as f64).sqrt();
        let rows: Vec<DispersionRow<'_>> = bank
            .ids
            .iter()
            .zip(&d)
            .map(|(&clip_id, &dispersion)| DispersionRow {
                clip_id,
                dispersion,
                config_digest: &ctx.digest,
            })
            .collect();
        emit_csv(&rows, &ctx.path("dispersion.csv"))?;
        ctx.write_json("dispersion.json", serde_json::json!({ "clips": d.len(), "mean": mean, "std": std }))?;
        println!("dispersion: mean {mean:.6} over {} clips", d.len());
    }

    if args.linearity {
        let data = need_data()?;
        let recall = ctx
            .cfg
            .analysis
            .recall_strategy
            .map(|s| (s, ctx.cfg.stage.ratio, ctx.cfg.analysis.mask_seed));
        let records: Vec<AnalysisRecord> = analysis_records(&bank, data, recall, ctx.workers)?;
        let fit = linearity(&records)?;
        let rows: Vec<LinearityRow<'_>> = records
            .iter()
            .map(|r| LinearityRow {
                clip_id: r.clip_id,
                motion_energy: r.motion_energy,
                dispersion: r.dispersion,
                mask_strategy: r.mask_strategy,
                mask_recall: r.mask_recall,
                config_digest: &ctx.digest,
            })
            .collect();
        emit_csv(&rows, &ctx.path("linearity.csv"))?;
        let x: Vec<f64> = records.iter().map(|r| r.motion_energy).collect();
        let y: Vec<f64> = records.iter().map(|r| r.dispersion).collect();
        emit_svg(
            &Plot::Scatter {
                x: &x,
                y: &y,
                fit: Some(fit),
                x_label: "motion energy",
                y_label: "latent dispersion",
            },
            "motion energy vs latent dispersion",
            &ctx.digest,
            &ctx.path("linearity.svg"),
        )?;
        ctx.write_json("linearity.json", fit)?;
        println!("linearity: slope {} intercept {} R2 {}", fit.slope, fit.intercept, fit.r2);
    }

    if args.rollout {
        let data = need_data()?;
        let path = args
            .checkpoint
            .as_ref()
            .ok_or_else(|| Error::Contract("--rollout needs --checkpoint".into()))?;
        let ck = load_checkpoint::<T>(path)?;
        ctx.check_checkpoint(&ck)?;
        let k0 = ctx.cfg.analysis.rollout_context;
        let n = ctx.cfg.analysis.rollout_clips.min(data.len());
        let curves = (0..n)
            .map(|i| rollout_curve(&ck.model, &data.tokens::<T>(i)?, k0))
            .collect::<Result<Vec<_>>>()?;
        let mean = mean_curve(&curves)?;
        let rows: Vec<CurveRow<'_>> = mean
            .iter()
            .enumerate()
            .map(|(j, &similarity)| CurveRow {
                step: k0 + j + 1,
                similarity,
                config_digest: &ctx.digest,
            })
            .collect();
        emit_csv(&rows, &ctx.path("rollout.csv"))?;
        emit_svg(
            &Plot::Curve {
                series: &[("mean over clips", &mean)],
                x0: k0 + 1,
                x_label: "predicted slice",
                y_label: "cosine to previous slice",
            },
            "latent rollout",
            &ctx.digest,
            &ctx.path("rollout.svg"),
        )?;
        println!("rollout: {} steps over {n} clips", mean.len());
    }

    if let Some(id) = args.saliency {
        let p = bank
            .position(id)
            .ok_or_else(|| Error::Contract(format!("clip {id} is not in the bank")))?;
        let map = saliency_viz(bank.slab(p), bank.dims, None)?;
        let cols = ctx.cfg.model.grid.cols();
        let rows = bank.dims[1] / cols;
        emit_svg(
            &Plot::Heatmap {
                values: &map,
                rows,
                cols,
            },
            &format!("feature saliency, clip {id}"),
            &ctx.digest,
            &ctx.path("saliency.svg"),
        )?;
        fs::write(ctx.path("saliency.pgm"), stamp_pgm(to_pgm(&map, cols, rows)?, &ctx.digest))?;
        println!("saliency: {} of {} cells kept", map.iter().filter(|&&v| v > 0.0).count(), map.len());
    }
    Ok(())
}

/// Inserts a `# config_digest=` comment after the PGM magic.
fn stamp_pgm(pgm: Vec<u8>, digest: &str) -> Vec<u8> {
    let mut out = b"P5\n".to_vec();
    out.extend_from_slice(format!("# config_digest={digest}\n").as_bytes());
    out.extend_from_slice(&pgm[3..]);
    out
}

fn viz_mask(ctx: &Ctx, dir: &Path, clip: u32, strategy: MaskStrategy, region: Option<Region>) -> Result<()> {
    let data = ctx.load_data(dir)?;
    let i = data
        .ids()
        .iter()
        .position(|&x| x == clip)
        .ok_or_else(|| Error::Contract(format!("clip {clip} is not in the dataset")))?;
    let grid = ctx.cfg.model.grid;
    let mode = if strategy == MaskStrategy::IaTube {
        SaliencyMode::Spatial
    } else {
        SaliencyMode::Spatiotemporal
    };
    let mut g = motion_energy(&data.clip(i)?, &grid, mode)?;
    if let Some(r) = region {
        g = zero_motion_region(&g, r)?;
    }
    let pooled = pool_saliency(&g, &grid)?;
    let scores = if strategy == MaskStrategy::IaTube {
        cell_scores(&pooled, &grid)
    } else {
        pooled
    };
    let seed = ctx.cfg.analysis.mask_seed.wrapping_add(clip as u64);
    let mask = build_mask_with_scores(
        strategy,
        &scores,
        &data.labels(i).object_occupancy,
        &grid,
        ctx.cfg.stage.ratio,
        seed,
    )?;
    fs::write(ctx.path("saliency.pgm"), stamp_pgm(g.to_pgm(), &ctx.digest))?;
    let marks: Vec<f64> = (0..grid.n_tokens()).map(|t| mask.is_masked(t) as u8 as f64).collect();
    emit_svg(
        &Plot::Heatmap {
            values: &marks,
            rows: grid.slices() * grid.rows(),
            cols: grid.cols(),
        },
        &format!("{strategy} mask, clip {clip}, slices top to bottom"),
        &ctx.digest,
        &ctx.path("mask.svg"),
    )?;
    ctx.write_json(
        "mask.json",
        serde_json::json!({ "clip": clip, "zero_region": region, "mask": mask }),
    )?;
    let recall = crate::maskfab::interaction_recall(&mask, &data.labels(i).interaction_tokens);
    println!(
        "{strategy}: {} of {} tokens masked, interaction recall {}",
        mask.masked.len(),
        grid.n_tokens(),
        recall.map_or("n/a".to_string(), |r| format!("{r:.3}"))
    );
    Ok(())
}

fn selfcheck_cmd(cases: usize, tolerance: f64) -> Result<Outcome> {
    let cases = cases.max(1);
    let mut worst = 0.0f64;
    for (kind, err) in selfcheck::primitive_gradient_errors(cases, 1, 1e-5)? {
        println!("fd {kind:?}: {err:.3e}");
        worst = worst.max(err);
    }
    let jepa = selfcheck::jepa_gradient_error(cases, 2, 1e-5, Some(40))?;
    println!("fd latent loss: {jepa:.3e}");
    let reasoner = selfcheck::reasoner_gradient_error(cases, 3, 1e-5, Some(40))?;
    println!("fd reasoner loss: {reasoner:.3e}");
    worst = worst.max(jepa).max(reasoner);
    let ema = selfcheck::ema_law_error(500, 4)?;
    let masks = selfcheck::mask_oracle_failures(cases, 5)?;
    let (energy, momentum) = selfcheck::physics_error(cases, 6)?;
    println!("ema law: {ema:.3e}");
    println!("mask oracle failures: {masks}");
    println!("energy drift: {energy:.3e}, momentum drift: {momentum:.3e}");
    println!("max finite-difference error: {worst:.3e}");
    let ok = worst <= tolerance && ema < 1e-6 && masks == 0 && energy < 1e-9 && momentum < 1e-9;
    println!("selfcheck {}", if ok { "passed" } else { "FAILED" });
    Ok(if ok { Outcome::Done } else { Outcome::SelfcheckFailed })
}
