//! Minimal PNG renderer for the CSV outputs: scatter, polar and line plots
//! on a white canvas, no axes text.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use image::{Rgb, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    /// x-z scatter of `workspace_errors*.csv`, colored by error.
    Workspace,
    /// Polar scatter of `rotation_errors.csv`: angle α, radius error.
    Rotation,
    /// Desired (gray) and achieved (red) x-y positions from a tracking CSV.
    Tracking,
    /// Success rate and tolerance against timestep from `train_log.csv`.
    Training,
}

struct Table {
    columns: HashMap<String, Vec<f64>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).with_context(|| format!("file not found: {}", path.display()))?;
        let headers: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
        let mut columns: HashMap<String, Vec<f64>> = headers.iter().map(|h| (h.clone(), Vec::new())).collect();
        for rec in rdr.records() {
            let rec = rec?;
            for (h, v) in headers.iter().zip(rec.iter()) {
                let x = match v {
                    "true" => 1.0,
                    "false" => 0.0,
                    _ => v.parse().unwrap_or(f64::NAN),
                };
                columns.get_mut(h).expect("header present").push(x);
            }
        }
        Ok(Self { columns })
    }

    fn col(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .with_context(|| format!("column {name:?} missing"))
    }
}

/// Maps data ranges onto the canvas with a margin.
struct Frame {
    size: u32,
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(size: u32, xs: &[f64], ys: &[f64], equal: bool) -> Self {
        let range = |v: &[f64]| {
            let (lo, hi) = v
                .iter()
                .filter(|x| x.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
            if lo.is_finite() && hi > lo {
                (lo, hi)
            } else if lo.is_finite() {
                (lo - 1.0, lo + 1.0)
            } else {
                (0.0, 1.0)
            }
        };
        let (mut x, mut y) = (range(xs), range(ys));
        if equal {
            let half = (x.1 - x.0).max(y.1 - y.0) / 2.0;
            let (cx, cy) = ((x.0 + x.1) / 2.0, (y.0 + y.1) / 2.0);
            x = (cx - half, cx + half);
            y = (cy - half, cy + half);
        }
        Self { size, x, y }
    }

    fn pixel(&self, x: f64, y: f64) -> Option<(i64, i64)> {
        if !x.is_finite() || !y.is_finite() {
            return None;
        }
        let m = self.size as f64 * 0.05;
        let span = self.size as f64 - 2.0 * m;
        let px = m + (x - self.x.0) / (self.x.1 - self.x.0) * span;
        let py = self.size as f64 - m - (y - self.y.0) / (self.y.1 - self.y.0) * span;
        Some((px.round() as i64, py.round() as i64))
    }
}

fn dot(img: &mut RgbImage, (x, y): (i64, i64), r: i64, color: Rgb<u8>) {
    for dy in -r..=r {
        for dx in -r..=r {
            let (px, py) = (x + dx, y + dy);
            if px >= 0 && py >= 0 && (px as u32) < img.width() && (py as u32) < img.height() {
                img.put_pixel(px as u32, py as u32, color);
            }
        }
    }
}

fn line(img: &mut RgbImage, a: (i64, i64), b: (i64, i64), color: Rgb<u8>) {
    let n = (b.0 - a.0).abs().max((b.1 - a.1).abs()).max(1);
    for k in 0..=n {
        let t = k as f64 / n as f64;
        let p = (
            (a.0 as f64 + t * (b.0 - a.0) as f64).round() as i64,
            (a.1 as f64 + t * (b.1 - a.1) as f64).round() as i64,
        );
        dot(img, p, 0, color);
    }
}

/// Blue at 0 through red at `max`.
fn heat(v: f64, max: f64) -> Rgb<u8> {
    let t = (v / max).clamp(0.0, 1.0);
    Rgb([(255.0 * t) as u8, (80.0 * (1.0 - t)) as u8, (255.0 * (1.0 - t)) as u8])
}

const GRAY: Rgb<u8> = Rgb([150, 150, 150]);
const RED: Rgb<u8> = Rgb([220, 30, 30]);
const TUBE_COLORS: [Rgb<u8>; 3] = [Rgb([30, 90, 220]), Rgb([30, 170, 60]), Rgb([220, 120, 20])];

pub fn run(csv: &Path, kind: PlotKind, output: &Path, size: u32) -> Result<()> {
    if size < 50 {
        bail!("--size must be at least 50 pixels");
    }
    let t = Table::read(csv)?;
    let mut img = RgbImage::from_pixel(size, size, Rgb([255, 255, 255]));
    match kind {
        PlotKind::Workspace => {
            let (x, z, e) = (t.col("x")?, t.col("z")?, t.col("error")?);
            let f = Frame::fit(size, x, z, true);
            let max = e.iter().cloned().fold(2.0, f64::max);
            for i in 0..x.len() {
                if let Some(p) = f.pixel(x[i], z[i]) {
                    dot(&mut img, p, 2, heat(e[i], max));
                }
            }
        }
        PlotKind::Rotation => {
            let (tube, a, e) = (t.col("tube")?, t.col("alpha")?, t.col("error")?);
            let r = e.iter().cloned().fold(1e-9, f64::max);
            let f = Frame::fit(size, &[-r, r], &[-r, r], true);
            let ring: Vec<_> = (0..=360).filter_map(|d| {
                let th = (d as f64).to_radians();
                f.pixel(r * th.cos(), r * th.sin())
            }).collect();
            for w in ring.windows(2) {
                line(&mut img, w[0], w[1], GRAY);
            }
            for i in 0..a.len() {
                let color = TUBE_COLORS[(tube[i] as usize).saturating_sub(1) % 3];
                if let Some(p) = f.pixel(e[i] * a[i].cos(), e[i] * a[i].sin()) {
                    dot(&mut img, p, 2, color);
                }
            }
        }
        PlotKind::Tracking => {
            let (dx, dy) = (t.col("desired_x")?, t.col("desired_y")?);
            let (ax, ay) = (t.col("achieved_x")?, t.col("achieved_y")?);
            let all_x: Vec<f64> = dx.iter().chain(ax).cloned().collect();
            let all_y: Vec<f64> = dy.iter().chain(ay).cloned().collect();
            let f = Frame::fit(size, &all_x, &all_y, true);
            for i in 0..dx.len() {
                if let Some(p) = f.pixel(dx[i], dy[i]) {
                    dot(&mut img, p, 3, GRAY);
                }
                if let Some(p) = f.pixel(ax[i], ay[i]) {
                    dot(&mut img, p, 1, RED);
                }
            }
        }
        PlotKind::Training => {
            let (ts, s, tol) = (t.col("timestep")?, t.col("success_rate")?, t.col("tolerance")?);
            let tmax = tol.iter().cloned().fold(1e-9, f64::max);
            let scaled: Vec<f64> = tol.iter().map(|v| v / tmax).collect();
            let f = Frame::fit(size, ts, &[0.0, 1.0], false);
            for (series, color) in [(s, RED), (scaled.as_slice(), GRAY)] {
                let pts: Vec<_> = ts.iter().zip(series).filter_map(|(x, y)| f.pixel(*x, *y)).collect();
                for w in pts.windows(2) {
                    line(&mut img, w[0], w[1], color);
                }
            }
        }
    }
    img.save(output).with_context(|| format!("writing {}", output.display()))?;
    Ok(())
}
