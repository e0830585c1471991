use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anchor_emo_core::config::{parse_anchor_spec, parse_search_space};
use anchor_emo_core::dataset::{bucket_stats, compare_layouts, jitter_experiment, parse_annotations, plane_for};
use anchor_emo_core::emo::{emo_table, emo_table_monte_carlo};
use anchor_emo_core::matching::{assign, translate_all, MatchConfig};
use anchor_emo_core::optimizer::optimize;
use anchor_emo_core::report::{self, Format, ImageMatch, Table};
use anchor_emo_core::rng::derive_seed;
use anchor_emo_core::{AnchorLayout, AnchorSpec, EmoQuery, FaceRecord, RectBox, ShiftCount};

use crate::args::{Command, EmoArgs, FormatArg, GridArgs, MatchArgs, OptimizeArgs, SpecArgs, StatsArgs};
use crate::error::{CliError, CliResult};

/// Input files by path, read once so digests and parsing see the same bytes.
#[derive(Debug, Default)]
pub struct Inputs(BTreeMap<PathBuf, Vec<u8>>);

impl Inputs {
    pub fn load(paths: &[PathBuf]) -> CliResult<Self> {
        let mut files = BTreeMap::new();
        for p in paths {
            let bytes = std::fs::read(p).map_err(|e| CliError::io(p, e))?;
            files.insert(p.clone(), bytes);
        }
        Ok(Inputs(files))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PathBuf, &Vec<u8>)> {
        self.0.iter()
    }

    fn text(&self, path: &Path) -> CliResult<&str> {
        let bytes = self
            .0
            .get(path)
            .unwrap_or_else(|| panic!("input {} was not loaded", path.display()));
        std::str::from_utf8(bytes).map_err(|_| CliError::Invalid(format!("{}: not UTF-8 text", path.display())))
    }
}

/// Files a command reads, in flag order.
pub fn input_paths(cmd: &Command) -> Vec<PathBuf> {
    let mut paths = Vec::new();
    match cmd {
        Command::Emo(_) | Command::Replay(_) => {}
        Command::Grid(a) => paths.extend(a.spec.spec.iter().cloned()),
        Command::Stats(a) => {
            paths.push(a.annotations.clone());
            paths.extend(a.spec.spec.iter().cloned());
        }
        Command::Match(a) => {
            paths.push(a.annotations.clone());
            paths.extend(a.spec.spec.iter().cloned());
        }
        Command::Optimize(a) => {
            paths.push(a.annotations.clone());
            paths.push(a.space.clone());
        }
    }
    paths
}

/// Rewrites every input path of `cmd` to its canonical absolute form.
pub fn canonicalize_inputs(cmd: &mut Command) -> CliResult<()> {
    fn canon(p: &mut PathBuf) -> CliResult<()> {
        *p = std::fs::canonicalize(&*p).map_err(|e| CliError::io(&*p, e))?;
        Ok(())
    }
    match cmd {
        Command::Emo(_) | Command::Replay(_) => Ok(()),
        Command::Grid(a) => a.spec.spec.iter_mut().try_for_each(canon),
        Command::Stats(a) => {
            canon(&mut a.annotations)?;
            a.spec.spec.iter_mut().try_for_each(canon)
        }
        Command::Match(a) => {
            canon(&mut a.annotations)?;
            a.spec.spec.iter_mut().try_for_each(canon)
        }
        Command::Optimize(a) => {
            canon(&mut a.annotations)?;
            canon(&mut a.space)
        }
    }
}

/// The rendered main output plus any side files.
#[derive(Debug, Default)]
pub struct Artifact {
    pub main: String,
    pub side: Vec<(PathBuf, String)>,
}

pub fn execute(cmd: &Command, inputs: &Inputs) -> CliResult<Artifact> {
    match cmd {
        Command::Emo(a) => emo(a),
        Command::Grid(a) => grid(a, inputs),
        Command::Stats(a) => stats(a, inputs),
        Command::Match(a) => run_match(a, inputs),
        Command::Optimize(a) => run_optimize(a, inputs),
        Command::Replay(_) => unreachable!("replay is resolved before execution"),
    }
}

fn format(f: FormatArg) -> Format {
    match f {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
    }
}

fn single(table: Table, f: FormatArg) -> Artifact {
    Artifact {
        main: table.render(format(f)),
        side: Vec::new(),
    }
}

fn emo(a: &EmoArgs) -> CliResult<Artifact> {
    let defaults = EmoQuery::new(1.0, 1.0)
        .with_cells(a.cells)
        .with_samples(a.samples, a.seed);
    let rows = if a.mc {
        emo_table_monte_carlo(&a.scales, &a.strides, &defaults)
    } else {
        emo_table(&a.scales, &a.strides, &defaults)
    };
    if let Some(bad) = rows.iter().find(|r| r.reason.is_some()) {
        let reason = bad.reason.as_deref().unwrap_or_default();
        let hint = if a.mc { "" } else { " (stride/2 must be below the face side; --mc handles any pair)" };
        return Err(CliError::Invalid(format!(
            "scale {} stride {}: {reason}{hint}",
            bad.scale, bad.stride
        )));
    }
    Ok(single(report::emo_table(&rows), a.output.format))
}

fn inline_spec(s: &SpecArgs) -> CliResult<AnchorSpec> {
    let base = AnchorSpec::wider_face_baseline();
    let scales = if s.scales.is_empty() { base.scales().to_vec() } else { s.scales.clone() };
    let ratios = if s.ratios.is_empty() { vec![1.0] } else { s.ratios.clone() };
    let mut spec = AnchorSpec::new(
        scales,
        ratios,
        s.base_stride.unwrap_or(base.base_stride()),
        s.divisor.unwrap_or(1),
    )?;
    for &(scale, n) in &s.shifts {
        spec = spec.with_shift(scale, ShiftCount::from_count(n)?)?;
    }
    Ok(spec)
}

fn specs(s: &SpecArgs, inputs: &Inputs) -> CliResult<Vec<AnchorSpec>> {
    if s.spec.is_empty() {
        return Ok(vec![inline_spec(s)?]);
    }
    s.spec
        .iter()
        .map(|p| {
            parse_anchor_spec(inputs.text(p)?)
                .map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))
        })
        .collect()
}

fn one_spec(s: &SpecArgs, inputs: &Inputs) -> CliResult<AnchorSpec> {
    let mut all = specs(s, inputs)?;
    if all.len() != 1 {
        return Err(CliError::Invalid("this subcommand takes a single --spec".into()));
    }
    Ok(all.remove(0))
}

fn grid(a: &GridArgs, inputs: &Inputs) -> CliResult<Artifact> {
    let spec = one_spec(&a.spec, inputs)?;
    let layout = AnchorLayout::build(&spec, a.plane.0, a.plane.1)?;
    Ok(single(report::layout_table(&layout), a.output.format))
}

fn load_faces(path: &Path, inputs: &Inputs) -> CliResult<Vec<FaceRecord>> {
    let ann = parse_annotations(inputs.text(path)?)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    if ann.skipped() > 0 {
        eprintln!(
            "note: {}: skipped {} degenerate boxes (first at line {})",
            path.display(),
            ann.skipped(),
            ann.skipped_lines[0]
        );
    }
    if ann.records.is_empty() {
        return Err(CliError::Invalid(format!("{}: no faces", path.display())));
    }
    Ok(ann.records)
}

/// Jittered faces move by less than half the finest anchor stride; the plane
/// grows by that much so they keep a full anchor neighborhood.
fn jitter_pad(spec: &AnchorSpec, jitter: bool) -> f64 {
    if jitter {
        (spec.min_effective_stride() / 2.0).floor()
    } else {
        0.0
    }
}

fn stats(a: &StatsArgs, inputs: &Inputs) -> CliResult<Artifact> {
    let faces = load_faces(&a.annotations, inputs)?;
    let specs = specs(&a.spec, inputs)?;
    let (w, h) = plane_for(&faces);
    let table = if a.jitter {
        if specs.len() != 1 {
            return Err(CliError::Invalid("--jitter takes a single --spec".into()));
        }
        let pad = jitter_pad(&specs[0], true);
        let layout = AnchorLayout::build(&specs[0], w + pad, h + pad)?;
        let cfg = MatchConfig {
            t_high: a.tau,
            t_low: a.tau.min(MatchConfig::default().t_low),
            ..MatchConfig::default()
        };
        let rep = jitter_experiment(&faces, &layout, &a.buckets, &cfg, a.trials, a.seed)?;
        report::jitter_table(&rep)
    } else if specs.len() == 1 {
        let layout = AnchorLayout::build(&specs[0], w, h)?;
        report::bucket_table(&bucket_stats(&faces, &layout, &a.buckets, a.tau)?)
    } else {
        report::comparison_table(&compare_layouts(&faces, &specs, &a.buckets, a.tau)?)
    };
    Ok(single(table, a.output.format))
}

fn run_match(a: &MatchArgs, inputs: &Inputs) -> CliResult<Artifact> {
    let records = load_faces(&a.annotations, inputs)?;
    let spec = one_spec(&a.spec, inputs)?;
    let cfg = MatchConfig {
        t_high: a.th,
        t_low: a.tl,
        hc_n: a.hc,
        jitter: a.jitter,
        jitter_seed: a.seed,
    };
    cfg.validate()?;

    // images in first-appearance order
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<FaceRecord>> = BTreeMap::new();
    for r in &records {
        let g = groups.entry(r.image_id.as_str()).or_default();
        if g.is_empty() {
            order.push(r.image_id.as_str());
        }
        g.push(r.clone());
    }
    let pad = jitter_pad(&spec, a.jitter);
    let mut results = Vec::with_capacity(order.len());
    for (i, id) in order.iter().enumerate() {
        let image = &groups[id];
        let faces: Vec<RectBox> = image.iter().map(|r| r.bbox).collect();
        let (w, h) = plane_for(image);
        let layout = AnchorLayout::build(&spec, w + pad, h + pad)?;
        let image_cfg = MatchConfig {
            jitter_seed: derive_seed(a.seed, i as u64),
            ..cfg.clone()
        };
        let result = assign(&faces, &layout, &image_cfg)?;
        let shifted = translate_all(&faces, result.jitter.0, result.jitter.1);
        results.push((*id, shifted, result));
    }
    let images: Vec<ImageMatch<'_>> = results
        .iter()
        .map(|(id, faces, result)| ImageMatch { image_id: id, faces, result })
        .collect();
    let f = format(a.output.format);
    let mut art = Artifact {
        main: report::match_face_table(&images, cfg.t_high).render(f),
        side: Vec::new(),
    };
    if let Some(path) = &a.anchors_out {
        art.side.push((path.clone(), report::match_anchor_table(&images).render(f)));
    }
    Ok(art)
}

fn run_optimize(a: &OptimizeArgs, inputs: &Inputs) -> CliResult<Artifact> {
    let faces = load_faces(&a.annotations, inputs)?;
    let space = parse_search_space(inputs.text(&a.space)?)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", a.space.display())))?;
    let ranked = optimize(&space, &faces, a.tau)?;
    Ok(single(report::ranking_table(&ranked), a.output.format))
}
