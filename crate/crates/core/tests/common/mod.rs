//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use plate_kit::synth::{write_ppm, RasterImage};

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_plate-kit"))
}

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn run<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    let out = Command::new(bin()).args(args).output().expect("binary runs");
    Output {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Every file under `root`, keyed by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

pub fn write_blank_image(path: &Path, width: u32, height: u32) {
    fs::write(path, write_ppm(&RasterImage::filled(width, height, [90, 90, 90]))).unwrap();
}

/// Pixel corner box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

pub fn rect_iou(a: &Rect, b: &Rect) -> f64 {
    let w = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
    let h = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
    let inter = w * h;
    let area = |r: &Rect| (r.x1 - r.x0) * (r.y1 - r.y0);
    let union = area(a) + area(b) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// A parsed annotation line: category, normalized center box, confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ann {
    pub category: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub conf: Option<f64>,
}

impl Ann {
    pub fn rect(&self, width: u32, height: u32) -> Rect {
        let (fw, fh) = (f64::from(width), f64::from(height));
        Rect {
            x0: ((self.cx - self.w / 2.0) * fw).clamp(0.0, fw),
            y0: ((self.cy - self.h / 2.0) * fh).clamp(0.0, fh),
            x1: ((self.cx + self.w / 2.0) * fw).clamp(0.0, fw),
            y1: ((self.cy + self.h / 2.0) * fh).clamp(0.0, fh),
        }
    }

    pub fn line(&self) -> String {
        let mut s = format!("{} {:.6} {:.6} {:.6} {:.6}", self.category, self.cx, self.cy, self.w, self.h);
        if let Some(c) = self.conf {
            s += &format!(" {c:.6}");
        }
        s
    }
}

pub fn parse_anns(text: &str) -> Vec<Ann> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            let n = |i: usize| f[i].parse::<f64>().unwrap();
            Ann {
                category: f[0].parse().unwrap(),
                cx: n(1),
                cy: n(2),
                w: n(3),
                h: n(4),
                conf: (f.len() == 6).then(|| n(5)),
            }
        })
        .collect()
}

pub fn write_anns(path: &Path, anns: &[Ann]) {
    let text: String = anns.iter().map(|a| a.line() + "\n").collect();
    fs::write(path, text).unwrap();
}

pub struct PseudoImage {
    pub id: String,
    pub width: u32,
    pub height: u32,
    /// `None` when the detection file is absent.
    pub detections: Option<Vec<Ann>>,
    pub human: Option<Vec<Ann>>,
}

/// Randomized pseudo-labeling inputs under `root`: `images/`, `dets/` and
/// `labels/`. Boxes are clustered so suppression and human overlap happen.
pub fn pseudo_dataset(root: &Path, images: usize, seed: u64) -> Vec<PseudoImage> {
    let mut rng = StdRng::seed_from_u64(seed);
    for d in ["images", "dets", "labels"] {
        fs::create_dir_all(root.join(d)).unwrap();
    }
    let micro = |v: f64| (v * 1e6).round() / 1e6;
    let mut out = Vec::new();
    for i in 0..images {
        let id = format!("img_{i:03}");
        let (width, height) = (rng.gen_range(60..200), rng.gen_range(40..160));
        write_blank_image(&root.join("images").join(format!("{id}.ppm")), width, height);

        let anchors: Vec<(f64, f64, f64, f64)> = (0..rng.gen_range(1..5))
            .map(|_| {
                let w = rng.gen_range(0.05..0.4);
                let h = rng.gen_range(0.05..0.4);
                (rng.gen_range(w / 2.0..1.0 - w / 2.0), rng.gen_range(h / 2.0..1.0 - h / 2.0), w, h)
            })
            .collect();
        let jittered = |rng: &mut StdRng, conf: Option<f64>| {
            let (cx, cy, w, h) = anchors[rng.gen_range(0..anchors.len())];
            let j = |rng: &mut StdRng, v: f64, s: f64| micro((v + rng.gen_range(-s..s)).clamp(0.02, 0.98));
            let w = j(rng, w, 0.05);
            let h = j(rng, h, 0.05);
            Ann {
                category: rng.gen_range(0..3),
                cx: micro(j(rng, cx, 0.05).clamp(w / 2.0, 1.0 - w / 2.0)),
                cy: micro(j(rng, cy, 0.05).clamp(h / 2.0, 1.0 - h / 2.0)),
                w,
                h,
                conf,
            }
        };

        let human = rng.gen_bool(0.4).then(|| {
            let n = rng.gen_range(0..4);
            (0..n).map(|_| jittered(&mut rng, None)).collect::<Vec<_>>()
        });
        let detections = (!rng.gen_bool(0.1)).then(|| {
            let n = rng.gen_range(0..14);
            (0..n)
                .map(|_| {
                    // Coarse confidences so ties occur.
                    let c = f64::from(rng.gen_range(0..=20u32)) / 20.0;
                    jittered(&mut rng, Some(c))
                })
                .collect::<Vec<_>>()
        });
        if let Some(h) = &human {
            write_anns(&root.join("labels").join(format!("{id}.txt")), h);
        }
        if let Some(d) = &detections {
            write_anns(&root.join("dets").join(format!("{id}.txt")), d);
        }
        out.push(PseudoImage {
            id,
            width,
            height,
            detections,
            human,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Recount {
    pub input: usize,
    pub low_confidence: usize,
    pub suppressed: usize,
    pub over_limit: usize,
    pub human_overlap: usize,
    pub retained: usize,
}

/// Straight re-derivation of the filter and merge rules for one image.
pub fn recount(
    img: &PseudoImage,
    min_conf: f64,
    suppression: f64,
    cap: Option<usize>,
    precedence: f64,
) -> (Recount, Vec<Ann>) {
    let dets = img.detections.clone().unwrap_or_default();
    let human = img.human.clone().unwrap_or_default();
    let mut r = Recount {
        input: dets.len(),
        ..Recount::default()
    };
    let mut candidates: Vec<(usize, Ann)> = Vec::new();
    for (i, d) in dets.iter().enumerate() {
        if d.conf.unwrap() < min_conf {
            r.low_confidence += 1;
        } else {
            candidates.push((i, *d));
        }
    }
    // Selection by repeated maximum: highest confidence, earliest in file.
    let mut kept: Vec<Ann> = Vec::new();
    while !candidates.is_empty() {
        let mut best = 0;
        for k in 1..candidates.len() {
            let (c, b) = (candidates[k].1.conf.unwrap(), candidates[best].1.conf.unwrap());
            if c > b || (c == b && candidates[k].0 < candidates[best].0) {
                best = k;
            }
        }
        let (_, d) = candidates.remove(best);
        let rd = d.rect(img.width, img.height);
        if kept
            .iter()
            .any(|k| k.category == d.category && rect_iou(&k.rect(img.width, img.height), &rd) >= suppression)
        {
            r.suppressed += 1;
        } else {
            kept.push(d);
        }
    }
    if let Some(cap) = cap {
        while kept.len() > cap {
            kept.pop();
            r.over_limit += 1;
        }
    }
    let mut merged = human.clone();
    for p in kept {
        let rp = p.rect(img.width, img.height);
        if human
            .iter()
            .any(|h| h.category == p.category && rect_iou(&h.rect(img.width, img.height), &rp) >= precedence)
        {
            r.human_overlap += 1;
        } else {
            r.retained += 1;
            merged.push(Ann { conf: None, ..p });
        }
    }
    (r, merged)
}
