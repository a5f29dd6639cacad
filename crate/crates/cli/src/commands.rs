//! Subcommand implementations. Each returns an [`Outcome`] or an error;
//! `main` maps them to exit codes.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use aroi_core::dataprep::{consensus_ground_truth, extract_training_set, write_training_set};
use aroi_core::rvol::{load_mask, load_volume, save_mask, save_volume};
use aroi_core::{
    generate_phantom, overlap, segment_from_stage1, stage1_walk, AroiConfig, ConsensusConfig, FinalResult, HuWindow,
    Mask3D, PhantomSpec, PipelineConfig, Roi2D, View, Volume3D,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::args::{EvalArgs, PhantomArgs, PipelineArgs, PrepArgs, SegmentArgs, SweepArgs};
use crate::backend::Backends;
use crate::report::{ConfigEcho, RunReport, SliceEntry, Stage1Report, Timing};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// The seed slice segmented to nothing.
    EmptySeed,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn pipeline_config(p: &PipelineArgs, rt: f64) -> Result<PipelineConfig> {
    let aroi = AroiConfig {
        rt,
        max_steps: p.max_steps,
        prob_threshold: p.prob_threshold,
        window: HuWindow::new(p.hu_lo, p.hu_hi)?,
    };
    aroi.validate()?;
    Ok(PipelineConfig {
        aroi,
        consensus: ConsensusConfig::new(p.cr)?,
        voi_padding: p.voi_padding,
    })
}

fn open_backends(p: &PipelineArgs) -> Result<Backends> {
    if !(p.handshake_timeout > 0.0 && p.handshake_timeout.is_finite()) {
        bail!("--handshake-timeout must be positive");
    }
    Backends::open(&p.backend, Duration::from_secs_f64(p.handshake_timeout), p.strict)
}

fn seed_roi(p: &PipelineArgs, vol: &Volume3D) -> Result<Roi2D> {
    let roi = Roi2D::square(p.seed_roi.x, p.seed_roi.y, p.seed_roi.side, p.seed_slice);
    roi.check_in(vol.shape()).context("seed ROI")?;
    Ok(roi)
}

struct Run {
    result: FinalResult,
    report: RunReport,
}

fn run_pipeline(
    p: &PipelineArgs,
    rt: f64,
    vol: &Volume3D,
    reference: Option<&Mask3D>,
    backends: &mut Backends,
) -> Result<Run> {
    let cfg = pipeline_config(p, rt)?;
    let seed = seed_roi(p, vol)?;
    let t0 = Instant::now();
    let views = backends.views();
    let stage1 = stage1_walk(vol, &seed, views.axial, &cfg.aroi)?;
    let t1 = Instant::now();
    let result = segment_from_stage1(vol, stage1, views.coronal, views.sagittal, &cfg)?;
    let t2 = Instant::now();

    let (views, final_metrics) = match reference {
        Some(r) => {
            let mut per_view = std::collections::BTreeMap::new();
            for v in View::ALL {
                let on_grid = result.view_on_grid(v).unwrap_or_else(|| Mask3D::like(vol));
                per_view.insert(v, overlap(&on_grid, r)?);
            }
            (Some(per_view), Some(overlap(&result.mask, r)?))
        }
        None => (None, None),
    };
    let s1 = &result.stage1;
    let report = RunReport {
        config: ConfigEcho {
            rt,
            cr: cfg.consensus.cr,
            prob_threshold: cfg.aroi.prob_threshold,
            hu_window: [cfg.aroi.window.lo, cfg.aroi.window.hi],
            max_steps: cfg.aroi.max_steps,
            voi_padding: cfg.voi_padding,
            backend: p.backend.to_string(),
            segmenters: backends.names(),
        },
        seed_roi: seed,
        status: if result.is_empty() { "empty_seed" } else { "ok" },
        stage1: Stage1Report {
            seed_z: s1.seed_z,
            stop_up: s1.stop_up,
            stop_down: s1.stop_down,
            slices_visited: s1.slices_visited,
            slices: s1
                .rois
                .iter()
                .map(|(&z, &roi)| SliceEntry {
                    z,
                    roi,
                    area: s1.areas.get(&z).copied().unwrap_or(0),
                })
                .collect(),
        },
        voi: result.voi,
        slices_covered: s1.slices_covered(),
        final_voxels: result.mask.count(),
        views,
        final_metrics,
        protocol: backends.protocol_stats(),
        timing_ms: Timing {
            stage1: ms(t1 - t0),
            stage2: ms(t2 - t1),
            total: ms(t2 - t0),
        },
    };
    Ok(Run { result, report })
}

fn load_reference(path: &Path, vol: &Volume3D) -> Result<Mask3D> {
    let m = load_mask(path).with_context(|| format!("loading {}", path.display()))?;
    if m.shape() != vol.shape() {
        bail!(
            "reference shape {:?} does not match volume shape {:?}",
            m.shape(),
            vol.shape()
        );
    }
    Ok(m)
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

pub fn cmd_segment(args: &SegmentArgs) -> Result<Outcome> {
    let p = &args.pipeline;
    let vol = load_volume(&p.volume).with_context(|| format!("loading {}", p.volume.display()))?;
    let reference = args.reference.as_deref().map(|r| load_reference(r, &vol)).transpose()?;
    let mut backends = open_backends(p)?;
    let run = run_pipeline(p, args.rt, &vol, reference.as_ref(), &mut backends);
    backends.close()?;
    let run = run?;
    save_mask(&run.result.mask, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    write_json(&run.report, args.report.as_deref())?;
    if run.result.is_empty() {
        log::warn!("seed slice {} segmented to nothing", p.seed_slice);
        return Ok(Outcome::EmptySeed);
    }
    Ok(Outcome::Done)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<Outcome> {
    let pred = load_mask(&args.pred).with_context(|| format!("loading {}", args.pred.display()))?;
    let reference = load_mask(&args.reference).with_context(|| format!("loading {}", args.reference.display()))?;
    let report = overlap(&pred, &reference)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(Outcome::Done)
}

#[derive(Serialize)]
struct PhantomSummary {
    shape_zyx: [usize; 3],
    gt_voxels: usize,
}

pub fn cmd_phantom(args: &PhantomArgs) -> Result<Outcome> {
    let text = fs::read_to_string(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    let spec: PhantomSpec = serde_json::from_str(&text).context("parsing phantom spec")?;
    let (vol, gt) = generate_phantom(&spec)?;
    save_volume(&vol, &args.out_vol)?;
    save_mask(&gt, &args.out_gt)?;
    println!(
        "{}",
        serde_json::to_string(&PhantomSummary {
            shape_zyx: spec.shape_zyx,
            gt_voxels: gt.count(),
        })?
    );
    Ok(Outcome::Done)
}

#[derive(Serialize)]
struct PrepSummary {
    samples: usize,
    positive: usize,
    negative: usize,
}

pub fn cmd_prep(args: &PrepArgs) -> Result<Outcome> {
    let vol = load_volume(&args.volume).with_context(|| format!("loading {}", args.volume.display()))?;
    let gt = match &args.gt {
        Some(path) => load_mask(path).with_context(|| format!("loading {}", path.display()))?,
        None => {
            let masks = args
                .annotators
                .iter()
                .map(|p| load_mask(p).with_context(|| format!("loading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            consensus_ground_truth(&masks, args.cr)?
        }
    };
    if gt.is_empty() {
        bail!("ground truth is empty");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let samples = extract_training_set(&vol, &gt, args.rt, &mut rng, args.empty_per_side)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    write_training_set(&samples, vol.spacing(), &args.out_dir)?;
    let positive = samples.iter().filter(|s| s.meta.nodule_present).count();
    println!(
        "{}",
        serde_json::to_string(&PrepSummary {
            samples: samples.len(),
            positive,
            negative: samples.len() - positive,
        })?
    );
    Ok(Outcome::Done)
}

pub const SWEEP_HEADER: &str = "rt,dsc,sen,ppv,slices_covered";

pub fn cmd_sweep_rt(args: &SweepArgs) -> Result<Outcome> {
    let p = &args.pipeline;
    let vol = load_volume(&p.volume).with_context(|| format!("loading {}", p.volume.display()))?;
    let gt = load_reference(&args.gt, &vol)?;
    let mut backends = open_backends(p)?;
    let mut rows = vec![SWEEP_HEADER.to_string()];
    let mut failure = None;
    for &rt in &args.rt_list.0 {
        match run_pipeline(p, rt, &vol, Some(&gt), &mut backends) {
            Ok(run) => {
                let m = run.report.final_metrics.expect("reference supplied");
                rows.push(format!(
                    "{rt},{},{},{},{}",
                    m.dsc, m.sen, m.ppv, run.report.slices_covered
                ));
            }
            Err(e) => {
                failure = Some(e.context(format!("rt = {rt}")));
                break;
            }
        }
    }
    backends.close()?;
    if let Some(e) = failure {
        return Err(e);
    }
    let mut text = rows.join("\n");
    text.push('\n');
    match &args.out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(Outcome::Done)
}
