use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use flame_core::dataset::layout::{self, stems};
use flame_core::dataset::{
    augment, derive_seed, letterbox, load_split, parse_labels, read_ppm, split_dataset, validate_dataset,
    write_labels, write_ppm, AugmentKind, AugmentOp, DatasetConfig, Image, Split,
};
use flame_core::graph::{build_model, cost_report, init_weights, CostReport, Model, Variant};
use flame_core::losses::{ce_loss, dfl_loss, iou_variant, BBox, IouKind};
use flame_core::metrics::{self, GroundTruth};
use flame_core::postprocess::{decode, nms};
use flame_core::weights::{load_weights, save_weights, WeightStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::args::*;
use crate::report::{print_config, usage, write_file, Failure, Kv};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Analyze(a) => analyze(cli, a),
        Command::Init(a) => init(cli, a),
        Command::Infer(a) => infer(cli, a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(cli, a),
        Command::Dataset(DatasetCommand::Split(a)) => split(cli, a),
        Command::Dataset(DatasetCommand::Augment(a)) => augment_cmd(cli, a),
        Command::Dataset(DatasetCommand::Validate(a)) => validate(a),
        Command::Loss(a) => loss(a),
    }
}

fn base_config(cli: &Cli, command: &str) -> Kv {
    let mut kv = Kv::new();
    kv.push("command", command).push("seed", cli.seed).push("imgsz", cli.imgsz);
    kv
}

fn totals(kv: &mut Kv, r: &CostReport) {
    kv.push("params", r.params)
        .push("mparams", format!("{:.2}", r.mparams()))
        .push("macs", r.macs)
        .push("flops", r.flops())
        .push("gflops", format!("{:.2}", r.gflops()))
        .push("mem_access", r.mem_access);
}

fn pct_change(new: u64, base: u64) -> f64 {
    (new as f64 - base as f64) / base as f64 * 100.0
}

fn analyze(cli: &Cli, a: &AnalyzeArgs) -> Result<()> {
    let variant: Variant = a.model.into();
    let mut cfg = base_config(cli, "analyze");
    cfg.push("model", variant).push("nc", a.nc);
    if let Some(p) = &a.report {
        cfg.push("report", p.display());
    }
    print_config(&cfg);

    let graph = build_model(variant, a.nc, cli.imgsz)?;
    let r = cost_report(&graph, cli.imgsz)?;
    println!(
        "{:<12} {:<14} {:>16} {:>10} {:>14} {:>14}",
        "layer", "kind", "output", "params", "macs", "mem_access"
    );
    for row in &r.rows {
        let [c, h, w] = row.out_shape;
        println!(
            "{:<12} {:<14} {:>16} {:>10} {:>14} {:>14}",
            row.name,
            row.kind,
            format!("{c}x{h}x{w}"),
            row.params,
            row.macs,
            row.mem_access
        );
    }

    let mut kv = Kv::new();
    kv.push("model", variant).push("nc", a.nc).push("imgsz", cli.imgsz);
    totals(&mut kv, &r);
    if variant == Variant::Light {
        let base = cost_report(&build_model(Variant::V8s, a.nc, cli.imgsz)?, cli.imgsz)?;
        kv.push("baseline", Variant::V8s)
            .push("reduction.params", format!("{:+.2}%", pct_change(r.params, base.params)))
            .push("reduction.flops", format!("{:+.2}%", pct_change(r.macs, base.macs)))
            .push("reduction.mem_access", format!("{:+.2}%", pct_change(r.mem_access, base.mem_access)));
    }
    let text = kv.render();
    print!("{text}");
    if let Some(path) = &a.report {
        let mut full = text;
        for row in &r.rows {
            let [c, h, w] = row.out_shape;
            full.push_str(&format!(
                "layer.{n}.kind: {}\nlayer.{n}.output: {c}x{h}x{w}\nlayer.{n}.params: {}\nlayer.{n}.macs: {}\nlayer.{n}.mem_access: {}\n",
                row.kind,
                row.params,
                row.macs,
                row.mem_access,
                n = row.name
            ));
        }
        write_file(path, &full)?;
    }
    Ok(())
}

fn init(cli: &Cli, a: &InitArgs) -> Result<()> {
    let variant: Variant = a.model.into();
    let mut cfg = base_config(cli, "init");
    cfg.push("model", variant).push("nc", a.nc).push("out", a.out.display());
    print_config(&cfg);
    let graph = build_model(variant, a.nc, cli.imgsz)?;
    let store = init_weights(&graph, cli.seed);
    save_weights(&store, &a.out)?;
    let mut kv = Kv::new();
    kv.push("tensors", store.len())
        .push("values", store.iter().map(|(_, t)| t.data().len()).sum::<usize>());
    print!("{}", kv.render());
    Ok(())
}

/// Class count recorded in the head's classification bias.
fn nc_from_weights(store: &WeightStore) -> Result<usize> {
    store
        .get("head.cls.0.2.bias")
        .map(|t| t.data().len())
        .ok_or_else(|| flame_core::Error::Load("missing tensor `head.cls.0.2.bias`".into()).into())
}

fn load_model(variant: Variant, weights: &Path, imgsz: usize) -> Result<Model> {
    let store = load_weights(weights)?;
    let nc = nc_from_weights(&store)?;
    let graph = build_model(variant, nc, imgsz)?;
    Model::new(graph, &store, true).with_context(|| format!("binding {}", weights.display()))
}

fn infer(cli: &Cli, a: &InferArgs) -> Result<()> {
    let variant: Variant = a.model.into();
    let mut cfg = base_config(cli, "infer");
    cfg.push("model", variant)
        .push("weights", a.weights.display())
        .push("image", a.image.display())
        .push("conf", a.conf)
        .push("iou", a.iou);
    if let Some(p) = &a.out {
        cfg.push("out", p.display());
    }
    if let Some(p) = &a.draw {
        cfg.push("draw", p.display());
    }
    print_config(&cfg);

    let model = load_model(variant, &a.weights, cli.imgsz)?;
    let image = read_ppm(&a.image)?;
    if image.width() == 0 || image.height() == 0 {
        return Err(flame_core::Error::Format(format!("{}: empty image", a.image.display())).into());
    }
    let (input, tf) = letterbox(&image, cli.imgsz);
    let raw = model.forward(&input)?;
    let mut dets = nms(&decode(&raw, a.conf)?, a.iou);
    for d in &mut dets {
        d.bbox = tf.inverse_box(&d.bbox);
    }
    let text = metrics::write_predictions(&dets);
    let mut kv = Kv::new();
    kv.push("image_size", format!("{}x{}", image.width(), image.height()))
        .push("scale", format!("{:.6}", tf.scale))
        .push("pad_x", tf.pad_x)
        .push("pad_y", tf.pad_y)
        .push("detections", dets.len());
    print!("{}", kv.render());
    match &a.out {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    if let Some(p) = &a.draw {
        let mut canvas = image.clone();
        for d in &dets {
            canvas.draw_box(&d.bbox, flame_core::dataset::image::RED, 2);
        }
        write_ppm(&canvas, p)?;
    }
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let split: Split = a.split.parse().map_err(|_| usage(format!("unknown split `{}`", a.split)))?;
    let mut cfg = Kv::new();
    cfg.push("command", "eval")
        .push("pred", a.pred.display())
        .push("gt", a.gt.display())
        .push("split", split)
        .push("iou", a.iou);
    print_config(&cfg);

    let samples = load_split(&a.gt, split)?;
    let mut preds = Vec::with_capacity(samples.len());
    let mut gts = Vec::with_capacity(samples.len());
    for s in &samples {
        let img = read_ppm(&s.image)?;
        let (w, h) = (img.width() as f64, img.height() as f64);
        gts.push(
            s.annotations
                .iter()
                .map(|an| GroundTruth {
                    bbox: an.to_xyxy(w, h),
                    class_id: an.class_id,
                })
                .collect::<Vec<_>>(),
        );
        let p = a.pred.join(format!("{}.txt", s.stem));
        let dets = if p.exists() {
            let text = fs::read_to_string(&p).map_err(|e| flame_core::Error::Io { path: p.clone(), source: e })?;
            metrics::parse_predictions(&text).with_context(|| p.display().to_string())?
        } else {
            Vec::new()
        };
        preds.push(dets);
    }
    let r = metrics::evaluate(&preds, &gts, a.iou);
    let text = format!("images: {}\n{}", samples.len(), r.to_kv());
    print!("{text}");
    if let Some(p) = &a.report {
        write_file(p, &text)?;
    }
    Ok(())
}

fn bench(cli: &Cli, a: &BenchArgs) -> Result<()> {
    let variant: Variant = a.model.into();
    if a.runs == 0 {
        return Err(usage("--runs must be at least 1"));
    }
    let mut cfg = base_config(cli, "bench");
    cfg.push("model", variant)
        .push("weights", a.weights.display())
        .push("runs", a.runs)
        .push("warmup", a.warmup)
        .push("image", a.image.as_ref().map_or("synthetic".into(), |p| p.display().to_string()));
    print_config(&cfg);

    let model = load_model(variant, &a.weights, cli.imgsz)?;
    let image = match &a.image {
        Some(p) => read_ppm(p)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            Image::from_fn(cli.imgsz, cli.imgsz, |_, _| [rng.random(), rng.random(), rng.random()])
        }
    };
    let r = metrics::fps_bench(&model, &image, a.runs, a.warmup)?;
    let cost = cost_report(model.graph(), cli.imgsz)?;
    let mut kv = Kv::new();
    kv.push("model", variant).push("macs", cost.macs).push("gflops", format!("{:.2}", cost.gflops()));
    let text = format!("{}{}", kv.render(), r.to_kv());
    print!("{text}");
    if let Some(p) = &a.report {
        write_file(p, &text)?;
    }
    Ok(())
}

fn parse_ratio(s: &str) -> Result<(u32, u32, u32)> {
    let parts: Vec<u32> = s
        .split(':')
        .map(|p| p.trim().parse::<u32>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("ratio `{s}` is not train:val:test")))?;
    match parts[..] {
        [a, b, c] if a > 0 && b > 0 && c > 0 => Ok((a, b, c)),
        _ => Err(usage(format!("ratio `{s}` needs three positive integers"))),
    }
}

fn copy(from: &Path, to: &Path) -> Result<()> {
    fs::copy(from, to).map_err(|e| flame_core::Error::Io {
        path: from.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| flame_core::Error::Io {
        path: p.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn split(cli: &Cli, a: &SplitArgs) -> Result<()> {
    let ratio = parse_ratio(&a.ratio)?;
    let mut cfg = Kv::new();
    cfg.push("command", "dataset split")
        .push("seed", cli.seed)
        .push("images", a.images.display())
        .push("labels", a.labels.display())
        .push("out", a.out.display())
        .push("ratio", format!("{}:{}:{}", ratio.0, ratio.1, ratio.2))
        .push("dry_run", a.dry_run);
    print_config(&cfg);

    let images = stems(&a.images, layout::IMAGE_EXT)?;
    let names: Vec<&String> = images.keys().collect();
    let manifest = split_dataset(&names, ratio, cli.seed)?;
    if !a.dry_run {
        for sp in Split::ALL {
            create_dir(&layout::images_dir(&a.out, sp))?;
            create_dir(&layout::labels_dir(&a.out, sp))?;
        }
        for (stem, sp) in &manifest.assignments {
            let label = a.labels.join(format!("{stem}.{}", layout::LABEL_EXT));
            copy(&images[stem], &layout::images_dir(&a.out, *sp).join(format!("{stem}.{}", layout::IMAGE_EXT)))?;
            copy(&label, &layout::labels_dir(&a.out, *sp).join(format!("{stem}.{}", layout::LABEL_EXT)))?;
        }
        write_file(&a.out.join("split.txt"), &manifest.to_text())?;
    }
    let mut kv = Kv::new();
    kv.push("files", manifest.assignments.len());
    for sp in Split::ALL {
        kv.push(sp.as_str(), manifest.count(sp));
    }
    print!("{}", kv.render());
    Ok(())
}

fn augment_cmd(cli: &Cli, a: &AugmentArgs) -> Result<()> {
    let ops: Vec<AugmentKind> = a.ops.iter().map(|&o| o.into()).collect();
    let mut cfg = Kv::new();
    cfg.push("command", "dataset augment")
        .push("seed", cli.seed)
        .push("images", a.images.display())
        .push("labels", a.labels.display())
        .push("out", a.out.display())
        .push("ops", ops.iter().map(|o| o.as_str()).collect::<Vec<_>>().join(","));
    print_config(&cfg);

    let (img_out, lab_out) = (a.out.join("images"), a.out.join("labels"));
    create_dir(&img_out)?;
    create_dir(&lab_out)?;
    let (mut written, mut boxes_in, mut boxes_out) = (0usize, 0usize, 0usize);
    for (stem, path) in stems(&a.images, layout::IMAGE_EXT)? {
        let image = read_ppm(&path)?;
        let lpath = a.labels.join(format!("{stem}.{}", layout::LABEL_EXT));
        let text = fs::read_to_string(&lpath).map_err(|e| flame_core::Error::Io {
            path: lpath.clone(),
            source: e,
        })?;
        let anns = parse_labels(&text).with_context(|| lpath.display().to_string())?;
        for &kind in &ops {
            let name = format!("{stem}_{kind}");
            let op = AugmentOp::new(kind, derive_seed(cli.seed, &name));
            let (img, labels) = augment(&image, &anns, &op);
            write_ppm(&img, img_out.join(format!("{name}.{}", layout::IMAGE_EXT)))?;
            write_file(&lab_out.join(format!("{name}.{}", layout::LABEL_EXT)), &write_labels(&labels))?;
            written += 1;
            boxes_in += anns.len();
            boxes_out += labels.len();
        }
    }
    let mut kv = Kv::new();
    kv.push("written", written).push("boxes_in", boxes_in).push("boxes_out", boxes_out);
    print!("{}", kv.render());
    Ok(())
}

fn validate(a: &ValidateArgs) -> Result<()> {
    let root: PathBuf = match (&a.root, &a.config) {
        (Some(r), _) => r.clone(),
        (None, Some(c)) => {
            let text = fs::read_to_string(c).map_err(|e| flame_core::Error::Io {
                path: c.clone(),
                source: e,
            })?;
            let conf = DatasetConfig::parse(&text).with_context(|| c.display().to_string())?;
            if conf.root.is_relative() {
                c.parent().unwrap_or(Path::new(".")).join(&conf.root)
            } else {
                conf.root
            }
        }
        (None, None) => return Err(usage("pass --root or --config")),
    };
    let mut cfg = Kv::new();
    cfg.push("command", "dataset validate").push("root", root.display());
    print_config(&cfg);

    let r = validate_dataset(&root);
    let text = r.to_kv();
    print!("{text}");
    if let Some(p) = &a.report {
        write_file(p, &text)?;
    }
    for v in &r.violations {
        eprintln!("{v}");
    }
    if !r.is_ok() {
        return Err(Failure::Validation(format!("{} violation(s)", r.violations.len())).into());
    }
    Ok(())
}

fn parse_box(flag: &str, s: Option<&String>) -> Result<BBox> {
    let s = s.ok_or_else(|| usage(format!("--{flag} is required for this loss")))?;
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("--{flag} `{s}` is not x1,y1,x2,y2")))?;
    match v[..] {
        [x1, y1, x2, y2] if x2 >= x1 && y2 >= y1 => Ok(BBox::new(x1, y1, x2, y2)),
        _ => Err(usage(format!("--{flag} `{s}` is not a valid x1,y1,x2,y2 box"))),
    }
}

fn loss(a: &LossArgs) -> Result<()> {
    let mut cfg = Kv::new();
    cfg.push("command", "loss").push("kind", format!("{:?}", a.kind).to_lowercase());
    print_config(&cfg);
    let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| usage(format!("--{flag} is required for this loss")));
    let mut kv = Kv::new();
    match a.kind {
        LossKind::Ce => {
            let y = need(a.y, "y")?;
            let y_hat = need(a.y_hat, "y-hat")?;
            if !(0.0..=1.0).contains(&y) || !(0.0..=1.0).contains(&y_hat) {
                return Err(usage("--y and --y-hat must lie in [0, 1]"));
            }
            kv.push("ce", format!("{:.6}", ce_loss(y, y_hat)));
        }
        LossKind::Dfl => {
            let s = a.dist.as_ref().ok_or_else(|| usage("--dist is required for this loss"))?;
            let dist: Vec<f64> = s
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| usage(format!("--dist `{s}` is not a comma-separated list")))?;
            kv.push("dfl", format!("{:.6}", dfl_loss(&dist, need(a.target, "target")?)?));
        }
        k => {
            let kind = match k {
                LossKind::Iou => IouKind::Iou,
                LossKind::Giou => IouKind::Giou,
                LossKind::Diou => IouKind::Diou,
                LossKind::Ciou => IouKind::Ciou,
                _ => IouKind::Eiou,
            };
            let pred = parse_box("pred", a.pred.as_ref())?;
            let gt = parse_box("gt", a.gt.as_ref())?;
            let v = iou_variant(kind, &pred, &gt);
            kv.push(kind.as_str(), format!("{v:.6}")).push("loss", format!("{:.6}", 1.0 - v));
        }
    }
    print!("{}", kv.render());
    Ok(())
}
