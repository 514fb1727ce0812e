use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ssrgan::checkpoint::{load_checkpoint, save_checkpoint};
use ssrgan::metrics::{aas_baseline, inps, MetricsReport};
use ssrgan::pipeline::{denoise, fit, score};
use ssrgan::signal::{bandpass, read_recording, resample, segment, stitch, write_recording, Recording, WindowedDataset};
use ssrgan::synth::{make_datasets, DatasetManifest};
use ssrgan::{Side, SsrganModel, Tensor};

use crate::config::{Baseline, FeatureSide, RunConfig};
use crate::error::{CliError, Context};

pub const A_FILE: &str = "a.csv";
pub const B_FILE: &str = "b.csv";
pub const EVAL_CONTAMINATED_FILE: &str = "eval_contaminated.csv";
pub const EVAL_CLEAN_FILE: &str = "eval_clean.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Output directory with the config echo written and a summary buffer.
struct Run {
    dir: PathBuf,
    summary: String,
}

impl Run {
    fn start(cfg: &RunConfig, command: &str) -> Result<Self, CliError> {
        let dir = cfg.out_dir()?.to_path_buf();
        fs::create_dir_all(&dir).during("cli")?;
        fs::write(dir.join("config.json"), cfg.to_json()).during("cli")?;
        Ok(Self {
            dir,
            summary: format!("command: {command}\n"),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn note(&mut self, line: impl AsRef<str>) {
        self.summary.push_str(line.as_ref());
        self.summary.push('\n');
    }

    fn report(&mut self, label: &str, r: &MetricsReport) {
        let corr = r
            .clean_correlation
            .map(|c| format!(", clean correlation {c:.4}"))
            .unwrap_or_default();
        self.note(format!("{label}: INPS {:.3} dB, PTPR {:.3}{corr}", r.inps_db, r.ptpr));
    }

    fn write_metrics(&self, r: &MetricsReport) -> Result<(), CliError> {
        fs::write(self.path("metrics.json"), r.to_json().during("metrics")?).during("metrics")?;
        for c in 0..r.n {
            fs::write(self.path(&format!("psd_ch{c}.csv")), r.psd_csv(c).during("metrics")?).during("metrics")?;
        }
        Ok(())
    }

    fn finish(self) -> Result<(), CliError> {
        fs::write(self.dir.join("summary.txt"), self.summary).during("cli")
    }
}

fn require<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    p.as_deref()
        .ok_or_else(|| CliError::Config(format!("paths.{key}: required (--{key} PATH)")))
}

fn read(path: &Path) -> Result<Recording, CliError> {
    read_recording(path).map_err(|source| CliError::Runtime {
        module: "signal",
        source: ssrgan::Error::Format(format!("{}: {source}", path.display())),
    })
}

fn load_model(cfg: &RunConfig) -> Result<SsrganModel<f32>, CliError> {
    load_checkpoint(require(&cfg.paths.checkpoint, "checkpoint")?).during("checkpoint")
}

/// Training and evaluation windows, either read from a `synth` directory or
/// generated from the config.
struct Data {
    a: WindowedDataset,
    b: WindowedDataset,
    eval: Option<(WindowedDataset, WindowedDataset)>,
}

fn load_data(cfg: &RunConfig) -> Result<Data, CliError> {
    let Some(dir) = cfg.paths.data.as_deref() else {
        let d = make_datasets(&cfg.synth, cfg.n_train_a, cfg.n_train_b, cfg.n_eval).during("synth")?;
        return Ok(Data {
            a: d.a,
            b: d.b,
            eval: Some((d.eval_contaminated, d.eval_clean)),
        });
    };
    let manifest: Option<DatasetManifest> = match fs::read_to_string(dir.join(MANIFEST_FILE)) {
        Ok(text) => Some(serde_json::from_str(&text).map_err(|e| CliError::Runtime {
            module: "synth",
            source: e.into(),
        })?),
        Err(_) => None,
    };
    let scale = manifest.map(|m| m.scale);
    let a = segment(&read(&dir.join(A_FILE))?, 1.0, scale).during("signal")?;
    let seg = |name: &str| -> Result<WindowedDataset, CliError> {
        segment(&read(&dir.join(name))?, 1.0, Some(a.scale)).during("signal")
    };
    let b = seg(B_FILE)?;
    let eval = if dir.join(EVAL_CONTAMINATED_FILE).exists() && dir.join(EVAL_CLEAN_FILE).exists() {
        Some((seg(EVAL_CONTAMINATED_FILE)?, seg(EVAL_CLEAN_FILE)?))
    } else {
        None
    };
    Ok(Data { a, b, eval })
}

pub fn synth(cfg: &RunConfig) -> Result<(), CliError> {
    let mut run = Run::start(cfg, "synth")?;
    let d = make_datasets(&cfg.synth, cfg.n_train_a, cfg.n_train_b, cfg.n_eval).during("synth")?;
    let contaminated = stitch(&d.eval_contaminated).during("signal")?;
    let clean = stitch(&d.eval_clean).during("signal")?;
    for (name, rec) in [
        (A_FILE, stitch(&d.a).during("signal")?),
        (B_FILE, stitch(&d.b).during("signal")?),
        (EVAL_CONTAMINATED_FILE, contaminated.clone()),
        (EVAL_CLEAN_FILE, clean.clone()),
    ] {
        write_recording(&rec, run.path(name)).during("signal")?;
    }
    let manifest = serde_json::to_string_pretty(&d.manifest).map_err(|e| CliError::Runtime {
        module: "synth",
        source: e.into(),
    })?;
    fs::write(run.path(MANIFEST_FILE), manifest).during("synth")?;
    run.note(format!(
        "windows: A {}, B {}, eval {}",
        d.a.len(),
        d.b.len(),
        d.eval_contaminated.len()
    ));
    run.note(format!("normalization scale: {}", d.manifest.scale));
    let headroom = inps(&contaminated, &clean).during("metrics")?;
    run.note(format!("eval headroom (contaminated vs clean): INPS {headroom:.3} dB"));
    run.finish()
}

pub fn preprocess(cfg: &RunConfig) -> Result<(), CliError> {
    let input = require(&cfg.paths.input, "input")?;
    let mut run = Run::start(cfg, "preprocess")?;
    let rec = read(input)?;
    let p = &cfg.preprocess;
    let filtered = bandpass(&rec, p.lo_hz, p.hi_hz).during("signal")?;
    let out = resample(&filtered, p.target_hz).during("signal")?;
    let name = output_name("preprocessed", input);
    write_recording(&out, run.path(&name)).during("signal")?;
    run.note(format!(
        "{} channels, {} Hz -> {} Hz, band {}..{} Hz, {} samples",
        rec.n_channels(),
        rec.sample_rate_hz,
        out.sample_rate_hz,
        p.lo_hz,
        p.hi_hz,
        out.len()
    ));
    run.note(format!("output: {name}"));
    run.finish()
}

fn output_name(stem: &str, like: &Path) -> String {
    match like.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}.{ext}"),
        None => format!("{stem}.csv"),
    }
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let mut run = Run::start(cfg, "train")?;
    let data = load_data(cfg)?;
    let total = cfg.train.iterations;
    let every = (total / 10).max(1);
    let (model, history) = fit(&cfg.model, &cfg.train, &data.a, &data.b, |r| {
        if (r.iter + 1) % every == 0 {
            eprintln!("iter {}/{total}: cycle {:.4} gan_g {:.4} gan_d {:.4}", r.iter + 1, r.cycle, r.gan_g, r.gan_d);
        }
    })
    .during("trainer")?;
    save_checkpoint(&model, run.path("checkpoint.ssrg")).during("checkpoint")?;
    let mut csv = Vec::new();
    history.write_csv(&mut csv).during("trainer")?;
    fs::write(run.path("history.csv"), csv).during("trainer")?;

    if let Some(p) = cfg.preset {
        run.note(format!("preset: {}", p.name()));
    }
    run.note(format!(
        "iterations: {}, generator updates {}, discriminator updates {}",
        history.len(),
        history.g_updates(),
        history.d_updates()
    ));
    if let Some(c) = history.final_cycle() {
        run.note(format!("final cycle loss: {c:.6}"));
    }
    if let Some((contaminated, clean)) = &data.eval {
        let (denoised, report) = score(&model, contaminated, clean).during("metrics")?;
        write_recording(&denoised, run.path("denoised_eval.csv")).during("signal")?;
        run.write_metrics(&report)?;
        run.report("eval", &report);
    }
    run.finish()
}

pub fn denoise_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let input = require(&cfg.paths.input, "input")?;
    let model = load_model(cfg)?;
    let mut run = Run::start(cfg, "denoise")?;
    let rec = read(input)?;
    let out = denoise(&model, &rec).during("pipeline")?;
    let name = output_name("denoised", input);
    write_recording(&out, run.path(&name)).during("signal")?;
    run.note(format!(
        "{} channels, {} samples denoised, {} trailing samples dropped",
        out.n_channels(),
        out.len(),
        rec.len() - out.len()
    ));
    run.note(format!("output: {name}"));
    run.finish()
}

fn truncate_to(rec: &Recording, len: usize) -> Result<Recording, CliError> {
    Recording::new(rec.sample_rate_hz, rec.channels.iter().map(|c| c[..len].to_vec()).collect()).during("signal")
}

pub fn eval(cfg: &RunConfig) -> Result<(), CliError> {
    let data_file = |name: &str| cfg.paths.data.as_ref().map(|d| d.join(name));
    let before_path = cfg
        .paths
        .before
        .clone()
        .or_else(|| data_file(EVAL_CONTAMINATED_FILE))
        .ok_or_else(|| CliError::Config("paths.before: required (--before PATH or --data DIR)".into()))?;
    let clean_path = cfg.paths.clean.clone().or_else(|| data_file(EVAL_CLEAN_FILE));
    let model = match (&cfg.eval.baseline, &cfg.paths.after) {
        (None, None) => Some(load_model(cfg)?),
        _ => None,
    };
    let mut run = Run::start(cfg, "eval")?;

    let before = read(&before_path)?;
    let (after, label) = match (cfg.eval.baseline, model) {
        (Some(Baseline::Aas), _) => (aas_baseline(&before, &cfg.eval.aas).during("metrics")?, "aas"),
        (None, Some(m)) => (denoise(&m, &before).during("pipeline")?, "ssrgan"),
        (None, None) => (read(require(&cfg.paths.after, "after")?)?, "after"),
    };
    if cfg.paths.after.is_none() {
        write_recording(&after, run.path("after.csv")).during("signal")?;
    }
    let n = after.len();
    let before = truncate_to(&before, n)?;
    let clean = clean_path.map(|p| read(&p)).transpose()?.map(|c| truncate_to(&c, n)).transpose()?;
    let report = MetricsReport::compute(&before, &after, clean.as_ref()).during("metrics")?;
    run.write_metrics(&report)?;
    run.report(label, &report);
    run.finish()
}

pub fn gradcheck(cfg: &RunConfig) -> Result<(), CliError> {
    let mut run = Run::start(cfg, "gradcheck")?;
    let report = ssrgan::verify::gradcheck(&cfg.gradcheck.seeds).during("verify")?;
    fs::write(run.path("report.txt"), format!("{report}\n")).during("verify")?;
    let failed = report.failures().count();
    run.note(format!(
        "seeds {:?}: {} checks, {failed} failed",
        cfg.gradcheck.seeds,
        report.entries.len()
    ));
    run.finish()?;
    if failed > 0 {
        return Err(CliError::Failed(format!("verify: {failed} gradient or adjoint checks failed")));
    }
    Ok(())
}

const FEATURE_CHUNK: usize = 64;

fn feature_csv(model: &SsrganModel<f32>, ds: &WindowedDataset, side: Side) -> Result<String, CliError> {
    let mut out = String::new();
    for start in (0..ds.len()).step_by(FEATURE_CHUNK) {
        let rows: Vec<usize> = (start..(start + FEATURE_CHUNK).min(ds.len())).collect();
        let x: Tensor<f32> = ds.windows.gather(&rows).during("tensor")?.cast();
        let phi = model.middle_content(&x, side).during("model")?;
        let [_, maps, len] = phi.shape();
        if out.is_empty() {
            out.push_str("window,channel,offset,map");
            (0..len).for_each(|t| write!(out, ",t{t}").expect("writing to a String"));
            out.push('\n');
        }
        for (k, &w) in rows.iter().enumerate() {
            let origin = ds.provenance[w];
            for m in 0..maps {
                write!(out, "{w},{},{},{m}", origin.channel, origin.offset).expect("writing to a String");
                let base = (k * maps + m) * len;
                for v in &phi.data()[base..base + len] {
                    write!(out, ",{v}").expect("writing to a String");
                }
                out.push('\n');
            }
        }
    }
    Ok(out)
}

pub fn features(cfg: &RunConfig) -> Result<(), CliError> {
    let input = require(&cfg.paths.input, "input")?;
    let model = load_model(cfg)?;
    let mut run = Run::start(cfg, "features")?;
    let ds = segment(&read(input)?, 1.0, Some(model.norm_scale)).during("signal")?;
    let sides: &[(Side, &str)] = match cfg.features.side {
        FeatureSide::A => &[(Side::A, "phi1.csv")],
        FeatureSide::B => &[(Side::B, "phi2.csv")],
        FeatureSide::Both => &[(Side::A, "phi1.csv"), (Side::B, "phi2.csv")],
    };
    for &(side, name) in sides {
        fs::write(run.path(name), feature_csv(&model, &ds, side)?).during("cli")?;
        run.note(format!("{name}: {} windows", ds.len()));
    }
    let (maps, len) = model.config.middle_shape().during("model")?;
    run.note(format!("feature map shape: {maps} x {len}"));
    run.finish()
}
