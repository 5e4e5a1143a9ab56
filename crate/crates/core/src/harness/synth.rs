//! Synthetic misaligned RGB / infrared pairs.
//!
//! Every RGB image holds one object of each shape class in random colours on
//! a textured background. The infrared image is a thermal rendering of the
//! same objects in which exactly one object is hot; the label is the shape
//! class of that object. Colour carries no information about temperature,
//! so the label needs both modalities. The infrared geometry is translated
//! by a per-pair shift `(dy, dx)`: the object drawn at `(r, c)` in RGB
//! appears at `(r + dy, c + dx)` in infrared.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::backbone::checkpoint;
use crate::error::{Error, Result};
use crate::harness::config::KvConfig;
use crate::tensor::{Shape, Tensor};

pub const SHAPE_CLASSES: usize = 3;
pub const SHAPE_NAMES: [&str; SHAPE_CLASSES] = ["square", "disc", "cross"];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthPairSpec {
    pub seed: u64,
    pub count: usize,
    pub size: usize,
    /// Standard deviation of the RGB texture noise.
    pub noise: f32,
    /// 0 renders infrared as soft blobs, 1 as crisp outlines.
    pub sharpness: f32,
    /// Shifts are drawn from `[-shift_range, shift_range]` per axis.
    pub shift_range: f32,
    /// Fractional shifts instead of integers.
    pub fractional: bool,
}

impl Default for SynthPairSpec {
    fn default() -> Self {
        SynthPairSpec {
            seed: 0,
            count: 256,
            size: 32,
            noise: 0.08,
            sharpness: 0.5,
            shift_range: 2.0,
            fractional: false,
        }
    }
}

pub const SYNTH_KEYS: &[&str] = &[
    "seed",
    "count",
    "size",
    "noise",
    "sharpness",
    "shift_range",
    "fractional",
];

impl SynthPairSpec {
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        kv.only(SYNTH_KEYS)?;
        let d = SynthPairSpec::default();
        let s = SynthPairSpec {
            seed: kv.get_or("seed", d.seed)?,
            count: kv.get_or("count", d.count)?,
            size: kv.get_or("size", d.size)?,
            noise: kv.get_or("noise", d.noise)?,
            sharpness: kv.get_or("sharpness", d.sharpness)?,
            shift_range: kv.get_or("shift_range", d.shift_range)?,
            fractional: kv.get_or("fractional", d.fractional)?,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::config("synthetic count must be positive"));
        }
        if !(0.0..=1.0).contains(&self.sharpness) || self.noise < 0.0 || self.shift_range < 0.0 {
            return Err(Error::config(
                "noise and shift_range must be >= 0 and sharpness in [0, 1]",
            ));
        }
        let need = 24 + 2 * self.shift_range.ceil() as usize;
        if self.size < need {
            return Err(Error::config(format!(
                "canvas {} too small for three objects with shift range {}",
                self.size, self.shift_range
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairDataset {
    pub rgb: Tensor<f32>,
    pub ir: Tensor<f32>,
    pub labels: Vec<usize>,
    /// `(dy, dx)` per pair.
    pub shifts: Vec<(f32, f32)>,
    pub num_classes: usize,
}

#[derive(Clone, Copy, Debug)]
struct Object {
    class: usize,
    cy: f32,
    cx: f32,
    r: f32,
}

impl Object {
    fn covers(&self, y: f32, x: f32) -> bool {
        let (dy, dx) = ((y - self.cy).abs(), (x - self.cx).abs());
        match self.class {
            0 => dy <= self.r && dx <= self.r,
            1 => dy * dy + dx * dx <= self.r * self.r,
            _ => (dy <= self.r && dx <= self.r / 3.0) || (dx <= self.r && dy <= self.r / 3.0),
        }
    }
}

pub(crate) fn gaussian_blur(map: &[f32], h: usize, w: usize, sigma: f32) -> Vec<f32> {
    if sigma <= 0.0 {
        return map.to_vec();
    }
    let rad = (3.0 * sigma).ceil() as isize;
    let k: Vec<f32> = (-rad..=rad)
        .map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f32 = k.iter().sum();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0f32; h * w];
    for r in 0..h {
        for c in 0..w {
            tmp[r * w + c] = (-rad..=rad)
                .map(|i| k[(i + rad) as usize] * map[r * w + clamp(c as isize + i, w)])
                .sum::<f32>()
                / norm;
        }
    }
    let mut out = vec![0f32; h * w];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = (-rad..=rad)
                .map(|i| k[(i + rad) as usize] * tmp[clamp(r as isize + i, h) * w + c])
                .sum::<f32>()
                / norm;
        }
    }
    out
}

fn place_objects(rng: &mut ChaCha8Rng, size: usize, margin: f32) -> Result<Vec<Object>> {
    let mut classes: Vec<usize> = (0..SHAPE_CLASSES).collect();
    // random drawing order so occlusion carries no class information
    for i in (1..classes.len()).rev() {
        classes.swap(i, rng.random_range(0..=i));
    }
    for _ in 0..10_000 {
        let objs: Vec<Object> = classes
            .iter()
            .map(|&class| {
                let r = rng.random_range(3.0f32..4.5);
                let lo = margin + r;
                let hi = size as f32 - 1.0 - margin - r;
                Object {
                    class,
                    cy: rng.random_range(lo..hi),
                    cx: rng.random_range(lo..hi),
                    r,
                }
            })
            .collect();
        let apart = objs.iter().enumerate().all(|(i, a)| {
            objs[i + 1..].iter().all(|b| {
                let d = ((a.cy - b.cy).powi(2) + (a.cx - b.cx).powi(2)).sqrt();
                d > (a.r + b.r) * std::f32::consts::SQRT_2 + 1.0
            })
        });
        if apart {
            return Ok(objs);
        }
    }
    Err(Error::config(format!(
        "cannot place objects on a {size}px canvas"
    )))
}

pub fn synth_multispectral(spec: &SynthPairSpec) -> Result<PairDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let s = spec.size;
    let mut rgb = Tensor::zeros(Shape::new(spec.count, 3, s, s));
    let mut ir = Tensor::zeros(Shape::new(spec.count, 1, s, s));
    let mut labels = Vec::with_capacity(spec.count);
    let mut shifts = Vec::with_capacity(spec.count);
    let margin = spec.shift_range.ceil() + 1.0;
    let blur = 0.6 + 1.4 * (1.0 - spec.sharpness);
    for n in 0..spec.count {
        let objs = place_objects(&mut rng, s, margin)?;
        let hot = rng.random_range(0..objs.len());
        labels.push(objs[hot].class);
        let draw = |rng: &mut ChaCha8Rng| {
            if spec.fractional {
                rng.random_range(-spec.shift_range..=spec.shift_range)
            } else {
                let r = spec.shift_range.floor() as i32;
                rng.random_range(-r..=r) as f32
            }
        };
        let (dy, dx) = (draw(&mut rng), draw(&mut rng));
        shifts.push((dy, dx));

        let background: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.3f32..0.7));
        let colours: Vec<[f32; 3]> = objs
            .iter()
            .map(|_| std::array::from_fn(|_| rng.random_range(0.0f32..1.0)))
            .collect();
        for r in 0..s {
            for c in 0..s {
                let (y, x) = (r as f32, c as f32);
                let owner = objs.iter().rposition(|o| o.covers(y, x));
                for ch in 0..3 {
                    let base = owner.map_or(background[ch], |i| colours[i][ch]);
                    let tex: f32 = StandardNormal.sample(&mut rng);
                    *rgb.at_mut(n, ch, r, c) = (base + spec.noise * tex).clamp(0.0, 1.0);
                }
            }
        }

        let mut temp = vec![0f32; s * s];
        for r in 0..s {
            for c in 0..s {
                let (y, x) = (r as f32 - dy, c as f32 - dx);
                if let Some(i) = objs.iter().rposition(|o| o.covers(y, x)) {
                    temp[r * s + c] = if i == hot { 1.0 } else { 0.25 };
                }
            }
        }
        let soft = gaussian_blur(&temp, s, s, blur);
        let plane = ir.plane_mut(n, 0);
        for r in 0..s {
            for c in 0..s {
                let gy = soft[(r + 1).min(s - 1) * s + c] - soft[r.saturating_sub(1) * s + c];
                let gx = soft[r * s + (c + 1).min(s - 1)] - soft[r * s + c.saturating_sub(1)];
                let edge = (gy * gy + gx * gx).sqrt();
                plane[r * s + c] = (0.8 * soft[r * s + c] + spec.sharpness * edge).min(1.0);
            }
        }
        for v in plane.iter_mut() {
            let e: f32 = StandardNormal.sample(&mut rng);
            *v = (*v + 0.02 * e).clamp(0.0, 1.0);
        }
    }
    Ok(PairDataset {
        rgb,
        ir,
        labels,
        shifts,
        num_classes: SHAPE_CLASSES,
    })
}

/// Integer shift `(dy, dx)` within `range` maximising the correlation between
/// RGB object saliency and infrared intensity of pair `n`.
pub fn estimate_shift(d: &PairDataset, n: usize, range: i32) -> (i32, i32) {
    let s = d.rgb.shape();
    let (h, w) = (s.h, s.w);
    // saliency: distance from the per-channel median colour
    let mut sal = vec![0f32; h * w];
    for ch in 0..3 {
        let plane = d.rgb.plane(n, ch);
        let mut sorted = plane.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let med = sorted[sorted.len() / 2];
        for (o, &v) in sal.iter_mut().zip(plane) {
            *o += (v - med).abs();
        }
    }
    let centre = |v: &mut [f32]| {
        let m = v.iter().sum::<f32>() / v.len() as f32;
        v.iter_mut().for_each(|x| *x -= m);
    };
    centre(&mut sal);
    let mut irp = d.ir.plane(n, 0).to_vec();
    centre(&mut irp);
    let mut best = (f32::MIN, (0, 0));
    for dy in -range..=range {
        for dx in -range..=range {
            let mut acc = 0f32;
            for r in 0..h as i32 {
                let rr = r + dy;
                if rr < 0 || rr >= h as i32 {
                    continue;
                }
                for c in 0..w as i32 {
                    let cc = c + dx;
                    if cc < 0 || cc >= w as i32 {
                        continue;
                    }
                    acc += sal[(r * w as i32 + c) as usize] * irp[(rr * w as i32 + cc) as usize];
                }
            }
            if acc > best.0 {
                best = (acc, (dy, dx));
            }
        }
    }
    best.1
}

impl PairDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> PairDataset {
        PairDataset {
            rgb: self.rgb.gather(idx),
            ir: self.ir.gather(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            shifts: idx.iter().map(|&i| self.shifts[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Writes `pairs.wcck` (tensors `rgb`, `ir`, `labels`, `shifts`) and a
    /// readable `pairs.csv`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let n = self.len();
        let labels = Tensor::from_vec(
            Shape::new(n, 1, 1, 1),
            self.labels.iter().map(|&l| l as f32).collect(),
        )?;
        let shifts = Tensor::from_vec(
            Shape::new(n, 2, 1, 1),
            self.shifts.iter().flat_map(|&(a, b)| [a, b]).collect(),
        )?;
        let bytes = checkpoint::encode(&[
            ("rgb", &self.rgb),
            ("ir", &self.ir),
            ("labels", &labels),
            ("shifts", &shifts),
        ]);
        fs::write(dir.join("pairs.wcck"), bytes)?;
        let mut csv = String::from("index,label,shape,dy,dx\n");
        for (i, (&l, &(dy, dx))) in self.labels.iter().zip(&self.shifts).enumerate() {
            csv.push_str(&format!("{i},{l},{},{dy},{dx}\n", SHAPE_NAMES[l]));
        }
        fs::write(dir.join("pairs.csv"), csv)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<PairDataset> {
        let entries = checkpoint::decode(&fs::read(dir.join("pairs.wcck"))?)?;
        let get = |name: &str| {
            entries
                .iter()
                .find(|e| e.name == name)
                .map(|e| e.tensor::<f32>())
                .ok_or_else(|| Error::Format(format!("pair file lacks `{name}`")))
        };
        let (rgb, ir, labels, shifts) = (get("rgb")?, get("ir")?, get("labels")?, get("shifts")?);
        let n = rgb.shape().n;
        if ir.shape().n != n || labels.len() != n || shifts.len() != 2 * n {
            return Err(Error::Format("pair file tensors disagree on count".into()));
        }
        Ok(PairDataset {
            rgb,
            ir,
            labels: labels.data().iter().map(|&l| l as usize).collect(),
            shifts: shifts.data().chunks(2).map(|c| (c[0], c[1])).collect(),
            num_classes: SHAPE_CLASSES,
        })
    }
}
