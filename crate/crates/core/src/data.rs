//! Datasets and episode sampling: a PNG directory loader in the Omniglot
//! layout, a seeded synthetic glyph generator, and the N-way K-shot sampler.

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fewshot::Episode;
use crate::sampler::Image;

/// Labeled image classes, all images the same size and single channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDataset {
    /// `(class id, images)` in a fixed order.
    pub classes: Vec<(String, Vec<Image>)>,
    pub source: String,
    pub height: usize,
    pub width: usize,
}

impl ClassDataset {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn num_images(&self) -> usize {
        self.classes.iter().map(|(_, v)| v.len()).sum()
    }

    pub fn image(&self, class: usize, instance: usize) -> &Image {
        &self.classes[class].1[instance]
    }

    /// Smallest class size.
    pub fn min_class_size(&self) -> usize {
        self.classes.iter().map(|(_, v)| v.len()).min().unwrap_or(0)
    }

    pub fn check_min_class_size(&self, min: usize) -> Result<()> {
        match self.classes.iter().find(|(_, v)| v.len() < min) {
            Some((id, v)) => Err(Error::config(
                "min_images_per_class",
                format!("class `{id}` has {} images, need at least {min}", v.len()),
            )),
            None => Ok(()),
        }
    }

    /// Each class `c` becomes four classes `4c..4c+3`, rotated by 0°, 90°,
    /// 180° and 270°. Only square images can be rotated in place.
    pub fn with_rotated_classes(&self) -> Result<ClassDataset> {
        if self.height != self.width {
            return Err(Error::config("rotate_classes", "class rotation needs square images"));
        }
        let mut classes = Vec::with_capacity(self.classes.len() * 4);
        for (id, images) in &self.classes {
            for quarter in 0..4 {
                let rotated = images.iter().map(|img| rotate_quarter(img, quarter)).collect();
                classes.push((format!("{id}@rot{}", quarter * 90), rotated));
            }
        }
        Ok(ClassDataset {
            classes,
            source: format!("{} (rotated x4)", self.source),
            height: self.height,
            width: self.width,
        })
    }
}

/// Counter-clockwise rotation by `quarter · 90°` of a square image.
fn rotate_quarter(img: &Image, quarter: usize) -> Image {
    let n = img.width;
    Image::from_fn(n, n, |i, j| match quarter % 4 {
        0 => img.get(0, i, j),
        1 => img.get(0, j, n - 1 - i),
        2 => img.get(0, n - 1 - i, n - 1 - j),
        _ => img.get(0, n - 1 - j, i),
    })
}

/// Disjoint train / validation / test class partitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl SplitSpec {
    /// Consecutive blocks of class indices in dataset order.
    pub fn sequential(n_train: usize, n_val: usize, n_test: usize) -> Self {
        Self {
            train: (0..n_train).collect(),
            val: (n_train..n_train + n_val).collect(),
            test: (n_train + n_val..n_train + n_val + n_test).collect(),
            seed: 0,
        }
    }

    /// A seeded random partition of `0..n_classes`.
    pub fn random(n_classes: usize, n_train: usize, n_val: usize, n_test: usize, seed: u64) -> Result<Self> {
        if n_train + n_val + n_test > n_classes {
            return Err(Error::config(
                "split",
                format!("{n_train}+{n_val}+{n_test} classes requested from {n_classes}"),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let order = sample(&mut rng, n_classes, n_train + n_val + n_test).into_vec();
        Ok(Self {
            train: order[..n_train].to_vec(),
            val: order[n_train..n_train + n_val].to_vec(),
            test: order[n_train + n_val..].to_vec(),
            seed,
        })
    }

    /// Maps every class `c` to its four rotated copies `4c..4c+3`.
    pub fn with_rotated_classes(&self) -> Self {
        let expand = |v: &[usize]| v.iter().flat_map(|&c| (0..4).map(move |r| 4 * c + r)).collect();
        Self {
            train: expand(&self.train),
            val: expand(&self.val),
            test: expand(&self.test),
            seed: self.seed,
        }
    }

    pub fn validate(&self, n_classes: usize) -> Result<()> {
        let mut seen = vec![false; n_classes];
        for &c in self.train.iter().chain(&self.val).chain(&self.test) {
            match seen.get_mut(c) {
                None => {
                    return Err(Error::Contract(format!(
                        "split class {c} out of range ({n_classes} classes)"
                    )))
                }
                Some(true) => return Err(Error::Contract(format!("class {c} appears in two splits"))),
                Some(s) => *s = true,
            }
        }
        Ok(())
    }
}

/// Loads `<root>/**/<class>/<image>.png`: every directory that directly
/// holds PNG files is one class, identified by its path relative to `root`.
/// Images are resized bilinearly to `height × width`, scaled to `[0, 1]`,
/// and inverted (`1 − v`) when `invert` is set.
pub fn load_image_directory(
    root: &Path,
    height: usize,
    width: usize,
    invert: bool,
    min_per_class: usize,
) -> Result<ClassDataset> {
    if !root.is_dir() {
        return Err(Error::read(root, "not a directory"));
    }
    let mut class_dirs = Vec::new();
    collect_class_dirs(root, &mut class_dirs)?;
    class_dirs.sort();
    if class_dirs.is_empty() {
        return Err(Error::read(root, "no directories containing .png files"));
    }
    let mut classes = Vec::with_capacity(class_dirs.len());
    for dir in class_dirs {
        let mut files = png_files(&dir)?;
        files.sort();
        let images = files
            .iter()
            .map(|f| {
                let img = read_png_gray(f)?;
                let mut img = resize_bilinear(&img, height, width);
                if invert {
                    img.data.iter_mut().for_each(|v| *v = 1.0 - *v);
                }
                Ok(img)
            })
            .collect::<Result<Vec<_>>>()?;
        let id = dir
            .strip_prefix(root)
            .unwrap_or(&dir)
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        classes.push((id, images));
    }
    let ds = ClassDataset {
        classes,
        source: root.display().to_string(),
        height,
        width,
    };
    ds.check_min_class_size(min_per_class.max(1))?;
    Ok(ds)
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::read(dir, e))? {
        out.push(entry.map_err(|e| Error::read(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

fn is_png(p: &Path) -> bool {
    p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(read_dir_sorted(dir)?.into_iter().filter(|p| is_png(p)).collect())
}

fn collect_class_dirs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = read_dir_sorted(dir)?;
    if entries.iter().any(|p| is_png(p)) {
        out.push(dir.to_path_buf());
    }
    for p in entries {
        if p.is_dir() {
            collect_class_dirs(&p, out)?;
        }
    }
    Ok(())
}

/// Decodes any PNG to one channel in `[0, 1]` (colour is averaged, alpha dropped).
pub fn read_png_gray(path: &Path) -> Result<Image> {
    let file = fs::File::open(path).map_err(|e| Error::read(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(|e| Error::read(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::read(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::read(path, e))?;
    let (h, w) = (info.height as usize, info.width as usize);
    let (color, alpha) = match info.color_type {
        png::ColorType::Grayscale => (1, 0),
        png::ColorType::GrayscaleAlpha => (1, 1),
        png::ColorType::Rgb => (3, 0),
        png::ColorType::Rgba => (3, 1),
        png::ColorType::Indexed => return Err(Error::read(path, "unexpanded palette image")),
    };
    let stride = color + alpha;
    let mut data = Vec::with_capacity(h * w);
    for i in 0..h {
        let row = &buf[i * info.line_size..];
        for j in 0..w {
            let px = &row[j * stride..j * stride + color];
            data.push(px.iter().map(|&b| b as f64).sum::<f64>() / (255.0 * color as f64));
        }
    }
    Image::new(h, w, 1, data).map_err(|e| Error::read(path, e))
}

/// Writes a single-channel image as 8-bit grayscale.
pub fn write_png_gray(path: &Path, img: &Image) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let bytes: Vec<u8> = img.data[..img.height * img.width]
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let mut writer = enc.write_header().map_err(|e| Error::read(path, e))?;
    writer.write_image_data(&bytes).map_err(|e| Error::read(path, e))?;
    writer.finish().map_err(|e| Error::read(path, e))?;
    Ok(())
}

/// Bilinear resampling with pixel-center alignment and clamped edges.
pub fn resize_bilinear(img: &Image, height: usize, width: usize) -> Image {
    if img.height == height && img.width == width {
        return Image::from_fn(height, width, |i, j| img.get(0, i, j));
    }
    let sy = img.height as f64 / height as f64;
    let sx = img.width as f64 / width as f64;
    let src = |pos: f64, scale: f64, n: usize| {
        let p = ((pos + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = (p.floor() as usize).min(n - 1);
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, p - i0 as f64)
    };
    Image::from_fn(height, width, |i, j| {
        let (y0, y1, fy) = src(i as f64, sy, img.height);
        let (x0, x1, fx) = src(j as f64, sx, img.width);
        let top = img.get(0, y0, x0) * (1.0 - fx) + img.get(0, y0, x1) * fx;
        let bottom = img.get(0, y1, x0) * (1.0 - fx) + img.get(0, y1, x1) * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// Writes `<root>/<class id>/<nnnn>.png`; synthetic ids already carry an
/// alphabet-style prefix, so the result loads back with
/// [`load_image_directory`].
pub fn export_png(ds: &ClassDataset, root: &Path) -> Result<()> {
    for (id, images) in &ds.classes {
        let dir = root.join(id);
        fs::create_dir_all(&dir)?;
        for (k, img) in images.iter().enumerate() {
            write_png_gray(&dir.join(format!("{k:04}.png")), img)?;
        }
    }
    Ok(())
}

/// Classes per synthetic "alphabet" directory on export.
const SYNTH_ALPHABET: usize = 10;

fn mix(parts: &[u64]) -> u64 {
    // splitmix64 finalizer folded over the parts
    parts.iter().fold(0x243f_6a88_85a3_08d3u64, |h, &p| {
        let mut z = (h ^ p).wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    })
}

/// Lattice points per side for glyph vertices.
const LATTICE: usize = 7;

/// A class's stroke program: 4 to 7 lattice vertices, i.e. 3 to 6 connected
/// segments, in unit coordinates.
fn stroke_program(seed: u64, class: usize) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, class as u64, 0]));
    let segments = rng.gen_range(3..=6);
    let mut cur = (rng.gen_range(0..LATTICE), rng.gen_range(0..LATTICE));
    let mut pts = vec![cur];
    for _ in 0..segments {
        let next = loop {
            let cand = (rng.gen_range(0..LATTICE), rng.gen_range(0..LATTICE));
            if cand != cur {
                break cand;
            }
        };
        pts.push(next);
        cur = next;
    }
    pts.iter()
        .map(|&(a, b)| {
            let t = |k: usize| 0.2 + 0.6 * k as f64 / (LATTICE - 1) as f64;
            [t(a), t(b)]
        })
        .collect()
}

/// Renders one glyph instance: vertices jittered by up to one pixel, whole
/// glyph rotated by up to ±10°, strokes anti-aliased.
fn render_instance(program: &[[f64; 2]], size: usize, seed: u64, class: usize, instance: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, class as u64, instance as u64 + 1]));
    let n = size as f64;
    let angle = rng.gen_range(-10.0f64..=10.0).to_radians();
    let (sin, cos) = angle.sin_cos();
    let c = (n - 1.0) / 2.0;
    let pts: Vec<[f64; 2]> = program
        .iter()
        .map(|p| {
            let x = p[0] * (n - 1.0) + rng.gen_range(-1.0..=1.0);
            let y = p[1] * (n - 1.0) + rng.gen_range(-1.0..=1.0);
            let (dx, dy) = (x - c, y - c);
            [c + cos * dx - sin * dy, c + sin * dx + cos * dy]
        })
        .collect();
    let half_width = 0.75 * (n / 28.0).max(0.5);
    Image::from_fn(size, size, |i, j| {
        let q = [j as f64, i as f64];
        let d = pts
            .windows(2)
            .map(|s| segment_distance(q, s[0], s[1]))
            .fold(f64::INFINITY, f64::min);
        (1.0 - (d - half_width)).clamp(0.0, 1.0)
    })
}

fn segment_distance(q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (abx, aby) = (b[0] - a[0], b[1] - a[1]);
    let len2 = abx * abx + aby * aby;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((q[0] - a[0]) * abx + (q[1] - a[1]) * aby) / len2).clamp(0.0, 1.0)
    };
    let (px, py) = (a[0] + t * abx - q[0], a[1] + t * aby - q[1]);
    (px * px + py * py).sqrt()
}

/// Seeded stroke-glyph classes, `size × size`, strokes bright on a dark
/// background. Every image depends only on `(seed, class, instance)`.
pub fn make_synthetic(n_classes: usize, images_per_class: usize, size: usize, seed: u64) -> Result<ClassDataset> {
    if n_classes < 2 {
        return Err(Error::config("n_classes", "synthetic data needs at least 2 classes"));
    }
    if size < 8 {
        return Err(Error::config("image_size", "synthetic glyphs need at least 8x8 pixels"));
    }
    let classes = (0..n_classes)
        .map(|c| {
            let program = stroke_program(seed, c);
            let images = (0..images_per_class)
                .map(|k| render_instance(&program, size, seed, c, k))
                .collect();
            (format!("alphabet_{:02}/character_{c:04}", c / SYNTH_ALPHABET), images)
        })
        .collect();
    Ok(ClassDataset {
        classes,
        source: format!("synthetic(classes={n_classes}, per_class={images_per_class}, size={size}, seed={seed})"),
        height: size,
        width: size,
    })
}

/// Draws `n_way` classes from `split` and `k_shot + q_query` distinct
/// images per class; the first `k_shot` go to the support set. Labels are
/// `0..n_way` in draw order.
pub fn sample_episode(
    ds: &ClassDataset,
    split: &[usize],
    n_way: usize,
    k_shot: usize,
    q_query: usize,
    rng: &mut impl Rng,
) -> Result<Episode> {
    if n_way == 0 || k_shot == 0 || q_query == 0 {
        return Err(Error::Contract(format!(
            "degenerate episode {n_way}-way {k_shot}-shot {q_query}-query"
        )));
    }
    if split.len() < n_way {
        return Err(Error::Contract(format!(
            "{} classes available for a {n_way}-way episode",
            split.len()
        )));
    }
    let per_class = k_shot + q_query;
    let classes = sample(rng, split.len(), n_way).into_vec();
    let mut ep = Episode {
        n_way,
        k_shot,
        q_query,
        support: Vec::with_capacity(n_way * k_shot),
        query: Vec::with_capacity(n_way * q_query),
        support_refs: Vec::with_capacity(n_way * k_shot),
        query_refs: Vec::with_capacity(n_way * q_query),
    };
    for (label, &pos) in classes.iter().enumerate() {
        let class = split[pos];
        let images = &ds
            .classes
            .get(class)
            .ok_or_else(|| Error::Contract(format!("class {class} not in dataset")))?
            .1;
        if images.len() < per_class {
            return Err(Error::Contract(format!(
                "class {class} has {} images, episode needs {per_class}",
                images.len()
            )));
        }
        for (k, idx) in sample(rng, images.len(), per_class).into_iter().enumerate() {
            let item = (images[idx].clone(), label);
            if k < k_shot {
                ep.support.push(item);
                ep.support_refs.push((class, idx));
            } else {
                ep.query.push(item);
                ep.query_refs.push((class, idx));
            }
        }
    }
    Ok(ep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nn_accuracy(ds: &ClassDataset, split: &[usize], episodes: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut correct = 0usize;
        let mut total = 0usize;
        for _ in 0..episodes {
            let ep = sample_episode(ds, split, 5, 1, 1, &mut rng).unwrap();
            for (q, label) in &ep.query {
                let best = ep
                    .support
                    .iter()
                    .map(|(s, l)| {
                        (
                            s.data.iter().zip(&q.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
                            *l,
                        )
                    })
                    .min_by(|a, b| a.0.total_cmp(&b.0))
                    .unwrap()
                    .1;
                correct += (best == *label) as usize;
                total += 1;
            }
        }
        correct as f64 / total as f64
    }

    #[test]
    fn synthetic_is_deterministic_and_sized() {
        let a = make_synthetic(50, 20, 20, 3).unwrap();
        let b = make_synthetic(50, 20, 20, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_images(), 1000);
        assert_ne!(a, make_synthetic(50, 20, 20, 4).unwrap());
        for (_, imgs) in &a.classes {
            for img in imgs {
                assert!(img.data.iter().all(|v| (0.0..=1.0).contains(v)));
                assert!(img.data.iter().any(|&v| v > 0.9));
            }
        }
    }

    #[test]
    fn synthetic_task_is_learnable_but_not_trivial() {
        let ds = make_synthetic(70, 20, 28, 0).unwrap();
        let acc = nn_accuracy(&ds, &(0..70).collect::<Vec<_>>(), 200, 1);
        assert!(acc >= 0.8, "nearest-neighbour accuracy {acc}");
        // instances of one class are not copies of each other
        assert!(ds.image(0, 0).max_abs_diff(ds.image(0, 1)) > 0.1);
    }

    #[test]
    fn episode_shapes_and_disjointness() {
        let ds = make_synthetic(10, 8, 12, 1).unwrap();
        let split: Vec<usize> = (0..10).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ep = sample_episode(&ds, &split, 5, 1, 5, &mut rng).unwrap();
        assert_eq!((ep.support.len(), ep.query.len()), (5, 25));
        for _ in 0..1000 {
            let ep = sample_episode(&ds, &split, 5, 2, 3, &mut rng).unwrap();
            ep.validate().unwrap();
        }
    }

    #[test]
    fn class_selection_is_uniform() {
        let ds = make_synthetic(20, 2, 8, 1).unwrap();
        let split: Vec<usize> = (0..20).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = [0usize; 20];
        for _ in 0..10_000 {
            for r in sample_episode(&ds, &split, 5, 1, 1, &mut rng).unwrap().support_refs {
                counts[r.0] += 1;
            }
        }
        for c in counts {
            let f = c as f64 / 1e4;
            assert!((f - 0.25).abs() <= 0.02, "{f}");
        }
    }

    #[test]
    fn episode_errors() {
        let ds = make_synthetic(4, 3, 8, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_episode(&ds, &[0, 1, 2], 5, 1, 1, &mut rng).is_err());
        assert!(sample_episode(&ds, &[0, 1, 2], 2, 2, 2, &mut rng).is_err());
    }

    #[test]
    fn splits() {
        let s = SplitSpec::random(90, 50, 20, 20, 7).unwrap();
        s.validate(90).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (50, 20, 20));
        assert_eq!(s, SplitSpec::random(90, 50, 20, 20, 7).unwrap());
        let bad = SplitSpec {
            train: vec![0, 1],
            val: vec![1],
            test: vec![],
            seed: 0,
        };
        assert!(bad.validate(3).is_err());
        let r = SplitSpec::sequential(1, 1, 1).with_rotated_classes();
        assert_eq!(r.val, vec![4, 5, 6, 7]);
        r.validate(12).unwrap();
    }

    #[test]
    fn rotated_classes() {
        let ds = make_synthetic(2, 2, 9, 0).unwrap();
        let r = ds.with_rotated_classes().unwrap();
        assert_eq!(r.num_classes(), 8);
        let img = ds.image(1, 0);
        let full = (0..4).fold(img.clone(), |acc, _| rotate_quarter(&acc, 1));
        assert_eq!(&full, img);
        assert_eq!(r.image(5, 1), &rotate_quarter(ds.image(1, 1), 1));
    }

    #[test]
    fn resize_preserves_constants_and_identity() {
        let img = Image::filled(105, 105, 0.4);
        let small = resize_bilinear(&img, 28, 28);
        assert!(small.data.iter().all(|v| (v - 0.4).abs() < 1e-12));
        let ramp = Image::from_fn(4, 6, |i, j| (i * 6 + j) as f64);
        assert_eq!(resize_bilinear(&ramp, 4, 6), ramp);
        // 2x upsampling of a 2-pixel ramp interpolates between the centers
        let two = Image::new(2, 2, 1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let up = resize_bilinear(&two, 2, 4);
        assert_eq!(up.data[..4], [0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn png_round_trip_and_loader() {
        let dir = tempfile::tempdir().unwrap();
        let ds = make_synthetic(2, 20, 16, 9).unwrap();
        export_png(&ds, dir.path()).unwrap();
        let loaded = load_image_directory(dir.path(), 16, 16, false, 1).unwrap();
        assert_eq!(loaded.num_classes(), 2);
        assert!(loaded.classes.iter().all(|(_, v)| v.len() == 20));
        assert_eq!(loaded.classes[0].0, "alphabet_00/character_0000");
        for (a, b) in ds.classes[1].1.iter().zip(&loaded.classes[1].1) {
            assert!(a.max_abs_diff(b) <= 0.5 / 255.0 + 1e-12);
        }
        assert_eq!(loaded, load_image_directory(dir.path(), 16, 16, false, 1).unwrap());
        let err = load_image_directory(dir.path(), 16, 16, false, 21).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn white_image_inverts_to_zero() {
        let dir = tempfile::tempdir().unwrap();
        let class = dir.path().join("a/b");
        fs::create_dir_all(&class).unwrap();
        write_png_gray(&class.join("x.png"), &Image::filled(30, 30, 1.0)).unwrap();
        let ds = load_image_directory(dir.path(), 28, 28, true, 1).unwrap();
        assert!(ds.image(0, 0).data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unreadable_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let class = dir.path().join("c");
        fs::create_dir_all(&class).unwrap();
        fs::write(class.join("broken.png"), b"not a png").unwrap();
        let err = load_image_directory(dir.path(), 8, 8, false, 1).unwrap_err();
        assert!(err.to_string().contains("broken.png"), "{err}");
    }
}
