//! Test-only reference implementations. These follow the textbook formulas
//! directly and share no code with the library kernels they check.
#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use veilkit_core::frame::Frame;
use veilkit_core::saliency::{DescriptorGrid, SaliencyMap};
use veilkit_core::template_lib::{SelectedTemplates, Template};
use veilkit_core::PatchGeometry;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn random_frame(rng: &mut StdRng, h: usize, w: usize, c: usize) -> Frame {
    Frame::new(
        h,
        w,
        c,
        (0..h * w * c).map(|_| rng.random::<f32>()).collect(),
    )
    .unwrap()
}

pub fn random_vector(rng: &mut StdRng, d: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..d).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        if v.iter().map(|x| x * x).sum::<f32>() > 1e-3 {
            return v;
        }
    }
}

pub fn random_grid(rng: &mut StdRng, gh: usize, gw: usize, d: usize) -> DescriptorGrid {
    let vectors: Vec<f32> = (0..gh * gw).flat_map(|_| random_vector(rng, d)).collect();
    DescriptorGrid::new(vectors, d, PatchGeometry::new(1, 1).unwrap(), gh, gw).unwrap()
}

pub fn random_selection(rng: &mut StdRng, count: usize, d: usize) -> SelectedTemplates {
    let ts = (0..count)
        .map(|i| {
            let n = rng.random_range(1..=3);
            let ds = (0..n).map(|_| random_vector(rng, d)).collect();
            Template::from_descriptors(format!("t{i}"), ds).unwrap()
        })
        .collect();
    SelectedTemplates::new(ts).unwrap()
}

/// Clipped cosine averaged within and then across templates, as two plain
/// nested loops over patches and templates.
pub fn naive_patch_saliency(grid: &DescriptorGrid, selected: &SelectedTemplates) -> Vec<f32> {
    let mut out = Vec::with_capacity(grid.grid_height * grid.grid_width);
    for r in 0..grid.grid_height {
        for c in 0..grid.grid_width {
            let key = grid.vector(r, c);
            let mut total = 0.0f64;
            for t in selected.groups() {
                let mut sum = 0.0f64;
                for tau in &t.descriptors {
                    let mut dot = 0.0f64;
                    let mut nt = 0.0f64;
                    let mut nk = 0.0f64;
                    for i in 0..key.len() {
                        dot += tau[i] as f64 * key[i] as f64;
                        nt += tau[i] as f64 * tau[i] as f64;
                        nk += key[i] as f64 * key[i] as f64;
                    }
                    let cos = dot / (nt.sqrt() * nk.sqrt());
                    sum += if cos > 0.0 { cos } else { 0.0 };
                }
                total += sum / t.descriptors.len() as f64;
            }
            out.push((total / selected.len() as f64) as f32);
        }
    }
    out
}

/// Nearest-center upsampling by exhaustive search over all cells.
pub fn naive_nearest_reassemble(
    values: &[f32],
    gh: usize,
    gw: usize,
    g: PatchGeometry,
    h: usize,
    w: usize,
) -> Vec<f32> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let (yc, xc) = (y as f32 + 0.5, x as f32 + 0.5);
            let mut best = (f32::INFINITY, 0usize);
            for r in 0..gh {
                let d = (yc - g.center(r)).abs();
                if d <= best.0 {
                    best = (d, r);
                }
            }
            let r = best.1;
            let mut best = (f32::INFINITY, 0usize);
            for c in 0..gw {
                let d = (xc - g.center(c)).abs();
                if d <= best.0 {
                    best = (d, c);
                }
            }
            out[y * w + x] = values[r * gw + best.1];
        }
    }
    out
}

/// `N_1` shifted by `(sx, sy)` pixels: `out(x, y) = src(x + sx, y + sy)`
/// with coordinates clamped to the frame.
pub fn shifted(src: &Frame, sx: i64, sy: i64) -> Frame {
    let mut out = src.clone();
    for y in 0..src.height {
        for x in 0..src.width {
            let xx = (x as i64 + sx).clamp(0, src.width as i64 - 1) as usize;
            let yy = (y as i64 + sy).clamp(0, src.height as i64 - 1) as usize;
            for c in 0..src.channels {
                out.set(y, x, c, src.get(yy, xx, c));
            }
        }
    }
    out
}

/// Direct 2-D convolution with an explicit outer-product kernel and mirror
/// padding computed by repeated reflection.
pub fn naive_blur(src: &Frame, kernel_1d: &[f64]) -> Frame {
    let k = kernel_1d.len() as i64;
    let r = k / 2;
    let mirror = |mut i: i64, n: i64| -> usize {
        if n == 1 {
            return 0;
        }
        loop {
            if i < 0 {
                i = -i;
            } else if i >= n {
                i = 2 * (n - 1) - i;
            } else {
                return i as usize;
            }
        }
    };
    let mut out = src.clone();
    for y in 0..src.height as i64 {
        for x in 0..src.width as i64 {
            for c in 0..src.channels {
                let mut acc = 0.0f64;
                for ky in 0..k {
                    for kx in 0..k {
                        let yy = mirror(y + ky - r, src.height as i64);
                        let xx = mirror(x + kx - r, src.width as i64);
                        acc += kernel_1d[ky as usize]
                            * kernel_1d[kx as usize]
                            * src.get(yy, xx, c) as f64;
                    }
                }
                out.set(y as usize, x as usize, c, acc as f32);
            }
        }
    }
    out
}

/// Two-pass mean and population standard deviation per channel.
pub fn two_pass_stats(frames: &[Frame]) -> ([f64; 3], [f64; 3]) {
    let mut mean = [0.0f64; 3];
    let mut n = 0usize;
    for f in frames {
        for px in f.data.chunks_exact(3) {
            for c in 0..3 {
                mean[c] += px[c] as f64;
            }
            n += 1;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = [0.0f64; 3];
    for f in frames {
        for px in f.data.chunks_exact(3) {
            for c in 0..3 {
                var[c] += (px[c] as f64 - mean[c]).powi(2);
            }
        }
    }
    (mean, var.map(|v| (v / n as f64).sqrt()))
}

pub fn map(h: usize, w: usize, values: Vec<f32>) -> SaliencyMap {
    SaliencyMap {
        height: h,
        width: w,
        values,
        frame_index: 0,
    }
}

pub fn pearson(a: &[f32], b: &[f32]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().map(|&x| x as f64).sum::<f64>() / n;
    let mb = b.iter().map(|&x| x as f64).sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x as f64 - ma, y as f64 - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    sab / (saa.sqrt() * sbb.sqrt())
}
