//! Synthetic multi-domain real/spoof data with controllable domain shift,
//! depth labels and an on-disk dataset format.
//!
//! Every domain shares the liveness cue (a high-frequency grid artifact on
//! spoof images) while nuisances (color shift, background texture, noise,
//! illumination, spoof display tint) differ per domain. The held-out domain
//! gets nuisance parameters outside the range spanned by training domains.

use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};
use crate::wire::{Reader, Writer};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

const BLOB_MAGIC: &[u8; 8] = b"FPADDS01";
const SCHEMA_VERSION: u32 = 1;

/// One labeled example: h x w x 6 image (RGB then HSV, all in [0,1]),
/// binary label, dh x dw depth target (all-zero iff spoof).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Tensor,
    pub label: u8,
    pub depth: Tensor,
}

/// The private dataset of one simulated data center.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub domain_id: u64,
    pub samples: Vec<Sample>,
    /// Provenance string describing how the data was generated.
    pub recipe: String,
}

impl DomainDataset {
    pub fn validate(&self) -> Result<()> {
        let mut reals = 0usize;
        for (i, s) in self.samples.iter().enumerate() {
            if s.label > 1 {
                return Err(Error::Schema(format!("sample {i}: label {}", s.label)));
            }
            let max_depth = s.depth.data().iter().cloned().fold(0.0f64, f64::max);
            if (s.label == 0) != (max_depth == 0.0) {
                return Err(Error::Schema(format!(
                    "sample {i}: label {} inconsistent with depth max {max_depth}",
                    s.label
                )));
            }
            reals += s.label as usize;
        }
        if reals == 0 || reals == self.samples.len() {
            return Err(Error::Schema(
                "dataset must contain both labels".to_string(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Per-domain nuisance parameters. The real/spoof signal is shared; these
/// control everything that varies across domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainRecipe {
    pub color_shift: [f64; 3],
    pub texture_freq: [f64; 2],
    pub texture_phase: f64,
    pub texture_amp: f64,
    pub noise_std: f64,
    pub illumination: f64,
    pub spoof_tint: [f64; 3],
}

/// Knobs for a whole generated family of domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FamilyConfig {
    pub image_h: usize,
    pub image_w: usize,
    /// Amplitude of the shared spoof grid artifact.
    pub grid_amp: f64,
    /// Magnitude of the per-domain spoof display tint.
    pub tint_amp: f64,
    pub texture_amp: f64,
    pub noise_lo: f64,
    pub noise_hi: f64,
    pub illum_lo: f64,
    pub illum_hi: f64,
    pub shift_amp: f64,
    /// Held-out nuisances sit outside the training ranges.
    pub heldout_noise: f64,
    pub heldout_illum: f64,
    pub heldout_shift_amp: f64,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig {
            image_h: 12,
            image_w: 12,
            grid_amp: 0.08,
            tint_amp: 0.1,
            texture_amp: 0.06,
            noise_lo: 0.01,
            noise_hi: 0.03,
            illum_lo: 0.85,
            illum_hi: 1.15,
            shift_amp: 0.06,
            heldout_noise: 0.04,
            heldout_illum: 0.78,
            heldout_shift_amp: 0.08,
        }
    }
}

impl FamilyConfig {
    pub fn depth_h(&self) -> usize {
        self.image_h / 4
    }

    pub fn depth_w(&self) -> usize {
        self.image_w / 4
    }
}

/// Standard RGB -> HSV with all components scaled to [0,1].
pub fn rgb_to_hsv(rgb: &Tensor) -> Result<Tensor> {
    let shape = rgb.shape();
    if shape.len() != 3 || shape[2] != 3 {
        return Err(Error::Dimension {
            op: "rgb_to_hsv".into(),
            lhs: shape.to_vec(),
            rhs: vec![0, 0, 3],
        });
    }
    let mut out = Vec::with_capacity(rgb.len());
    for px in rgb.data().chunks_exact(3) {
        let (r, g, b) = (px[0], px[1], px[2]);
        for v in [r, g, b] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Range {
                    what: "rgb".into(),
                    value: v,
                });
            }
        }
        let max = r.max(g).max(b);
        let min = r.min(g).min(b);
        let delta = max - min;
        let h = if delta == 0.0 {
            0.0
        } else if max == r {
            (((g - b) / delta).rem_euclid(6.0)) / 6.0
        } else if max == g {
            ((b - r) / delta + 2.0) / 6.0
        } else {
            ((r - g) / delta + 4.0) / 6.0
        };
        let s = if max == 0.0 { 0.0 } else { delta / max };
        out.extend_from_slice(&[h, s, max]);
    }
    Tensor::new(shape.to_vec(), out)
}

/// Inverse of [`rgb_to_hsv`]; used by round-trip tests.
pub fn hsv_to_rgb(hsv: &Tensor) -> Result<Tensor> {
    let shape = hsv.shape();
    if shape.len() != 3 || shape[2] != 3 {
        return Err(Error::Dimension {
            op: "hsv_to_rgb".into(),
            lhs: shape.to_vec(),
            rhs: vec![0, 0, 3],
        });
    }
    let mut out = Vec::with_capacity(hsv.len());
    for px in hsv.data().chunks_exact(3) {
        let (h, s, v) = (px[0] * 6.0, px[1], px[2]);
        let c = v * s;
        let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
        let (r1, g1, b1) = match h {
            h if h < 1.0 => (c, x, 0.0),
            h if h < 2.0 => (x, c, 0.0),
            h if h < 3.0 => (0.0, c, x),
            h if h < 4.0 => (0.0, x, c),
            h if h < 5.0 => (x, 0.0, c),
            _ => (c, 0.0, x),
        };
        let m = v - c;
        out.extend_from_slice(&[r1 + m, g1 + m, b1 + m]);
    }
    Tensor::new(shape.to_vec(), out)
}

/// Smooth radial bump in [0,1] on an h x w grid.
fn bump(h: usize, w: usize, cy: f64, cx: f64, sigma: f64, y: usize, x: usize) -> f64 {
    let dy = (y as f64 - cy) / (sigma * h as f64);
    let dx = (x as f64 - cx) / (sigma * w as f64);
    (-(dy * dy + dx * dx) / 2.0).exp()
}

/// The fixed nonzero depth template for real samples, max value 1.
pub fn depth_template(dh: usize, dw: usize) -> Tensor {
    let cy = (dh as f64 - 1.0) / 2.0;
    let cx = (dw as f64 - 1.0) / 2.0;
    let mut data = Vec::with_capacity(dh * dw);
    for y in 0..dh {
        for x in 0..dw {
            data.push(bump(dh, dw, cy, cx, 0.5, y, x));
        }
    }
    Tensor::new(vec![dh, dw], data).expect("finite template")
}

fn generate_sample(
    cfg: &FamilyConfig,
    recipe: &DomainRecipe,
    label: u8,
    rng: &mut Rng,
) -> Result<Sample> {
    let (h, w) = (cfg.image_h, cfg.image_w);
    // Per-sample variation: jittered face center and two low-frequency waves.
    let cy = (h as f64 - 1.0) / 2.0 + (rng.next_f64() - 0.5) * 2.0;
    let cx = (w as f64 - 1.0) / 2.0 + (rng.next_f64() - 0.5) * 2.0;
    let wave = |rng: &mut Rng| {
        (
            0.5 + 1.5 * rng.next_f64(),
            0.5 + 1.5 * rng.next_f64(),
            std::f64::consts::TAU * rng.next_f64(),
        )
    };
    let (f1y, f1x, p1) = wave(rng);
    let (f2y, f2x, p2) = wave(rng);
    let channel_weights = [1.0, 0.85, 0.75];
    let mut rgb = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            let face = bump(h, w, cy, cx, 0.35, y, x);
            let tau = std::f64::consts::TAU;
            let variation = 0.04
                * ((tau * (f1y * y as f64 / h as f64 + f1x * x as f64 / w as f64) + p1).sin()
                    + (tau * (f2y * y as f64 / h as f64 + f2x * x as f64 / w as f64) + p2).sin());
            let texture = recipe.texture_amp
                * (tau
                    * (recipe.texture_freq[0] * y as f64 / h as f64
                        + recipe.texture_freq[1] * x as f64 / w as f64)
                    + recipe.texture_phase)
                    .sin();
            let mut lum = 0.4 + 0.24 * face + variation + texture;
            if label == 0 {
                // Shared spoof artifact: alternating-pixel grid.
                lum += cfg.grid_amp * if (y + x) % 2 == 0 { 1.0 } else { -1.0 };
            }
            for (c, &cw) in channel_weights.iter().enumerate() {
                let mut v = recipe.illumination * (cw * lum) + recipe.color_shift[c];
                if label == 0 {
                    v += recipe.spoof_tint[c];
                }
                v += recipe.noise_std * rng.next_normal();
                rgb.push(v.clamp(0.0, 1.0));
            }
        }
    }
    let rgb = Tensor::new(vec![h, w, 3], rgb)?;
    let hsv = rgb_to_hsv(&rgb)?;
    let mut image = Vec::with_capacity(h * w * 6);
    for (rp, hp) in rgb.data().chunks_exact(3).zip(hsv.data().chunks_exact(3)) {
        image.extend_from_slice(rp);
        image.extend_from_slice(hp);
    }
    let image = Tensor::new(vec![h, w, 6], image)?;
    let (dh, dw) = (cfg.depth_h(), cfg.depth_w());
    let depth = if label == 1 {
        let lambda = 0.8 + 0.4 * rng.next_f64();
        depth_template(dh, dw).scale(lambda)?
    } else {
        Tensor::zeros(&[dh, dw])
    };
    Ok(Sample {
        image,
        label,
        depth,
    })
}

// Orthonormal basis of the zero-sum color plane (no brightness component).
const TINT_E1: [f64; 3] = [std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2, 0.0];
const TINT_E2: [f64; 3] = [0.408_248_290_463_863, 0.408_248_290_463_863, -0.816_496_580_927_726];

fn tint_at_angle(amp: f64, theta: f64) -> [f64; 3] {
    let (s, c) = theta.sin_cos();
    [
        amp * (c * TINT_E1[0] + s * TINT_E2[0]),
        amp * (c * TINT_E1[1] + s * TINT_E2[1]),
        amp * (c * TINT_E1[2] + s * TINT_E2[2]),
    ]
}

fn training_recipe(cfg: &FamilyConfig, k: usize, n_domains: usize, rng: &mut Rng) -> DomainRecipe {
    // Every domain gets a strong within-domain spoof shortcut: mostly a
    // brightness offset (sign/size varying by domain) plus a chromatic
    // rotation. Both components sum to zero across the K domains, so pooled
    // training data carries no consistent tint cue.
    let theta = std::f64::consts::TAU * k as f64 / n_domains as f64;
    let phase = if n_domains % 2 == 0 {
        std::f64::consts::PI / (2.0 * n_domains as f64)
    } else {
        std::f64::consts::PI / n_domains as f64
    };
    let bright = (theta + phase).cos() * cfg.tint_amp;
    let chroma = tint_at_angle(0.25 * cfg.tint_amp, theta);
    let tint = [
        bright + chroma[0],
        bright + chroma[1],
        bright + chroma[2],
    ];
    let frac = if n_domains > 1 {
        k as f64 / (n_domains - 1) as f64
    } else {
        0.5
    };
    DomainRecipe {
        color_shift: [
            cfg.shift_amp * (2.0 * rng.next_f64() - 1.0),
            cfg.shift_amp * (2.0 * rng.next_f64() - 1.0),
            cfg.shift_amp * (2.0 * rng.next_f64() - 1.0),
        ],
        texture_freq: [1.0 + 3.0 * rng.next_f64(), 1.0 + 3.0 * rng.next_f64()],
        texture_phase: std::f64::consts::TAU * rng.next_f64(),
        texture_amp: cfg.texture_amp,
        noise_std: cfg.noise_lo + (cfg.noise_hi - cfg.noise_lo) * rng.next_f64(),
        illumination: cfg.illum_lo + (cfg.illum_hi - cfg.illum_lo) * frac,
        spoof_tint: tint,
    }
}

fn heldout_recipe(cfg: &FamilyConfig, n_domains: usize, rng: &mut Rng) -> DomainRecipe {
    // No spoof tint at all: a display characteristic no training domain
    // has, so trained tint detectors transfer as noise rather than signal.
    let _ = n_domains;
    let tint = [0.0; 3];
    DomainRecipe {
        color_shift: [
            cfg.heldout_shift_amp,
            -cfg.heldout_shift_amp,
            0.5 * cfg.heldout_shift_amp,
        ],
        texture_freq: [4.2 + 0.5 * rng.next_f64(), 4.2 + 0.5 * rng.next_f64()],
        texture_phase: std::f64::consts::TAU * rng.next_f64(),
        texture_amp: cfg.texture_amp,
        noise_std: cfg.heldout_noise,
        illumination: cfg.heldout_illum,
        spoof_tint: tint,
    }
}

fn generate_domain(
    cfg: &FamilyConfig,
    domain_id: u64,
    recipe: &DomainRecipe,
    per_domain: usize,
    rng: &mut Rng,
) -> Result<DomainDataset> {
    let mut samples = Vec::with_capacity(per_domain);
    for i in 0..per_domain {
        let label = (i % 2) as u8;
        samples.push(generate_sample(cfg, recipe, label, rng)?);
    }
    let ds = DomainDataset {
        domain_id,
        samples,
        recipe: format!("synthetic:{}", toml::to_string(recipe).unwrap_or_default())
            .replace('\n', ";"),
    };
    ds.validate()?;
    Ok(ds)
}

/// K training domains plus one held-out user domain whose nuisances sit
/// outside the training family's range.
pub fn generate_family(
    n_domains: usize,
    per_domain: usize,
    cfg: &FamilyConfig,
    rng: &Rng,
) -> Result<(Vec<DomainDataset>, DomainDataset)> {
    if n_domains < 1 {
        return Err(Error::Parameter("need at least one domain".into()));
    }
    if per_domain < 4 {
        return Err(Error::Parameter("need at least 4 samples per domain".into()));
    }
    let mut training = Vec::with_capacity(n_domains);
    for k in 0..n_domains {
        let mut dom_rng = rng.substream(0xD0 + k as u64);
        let recipe = training_recipe(cfg, k, n_domains, &mut dom_rng);
        training.push(generate_domain(cfg, k as u64, &recipe, per_domain, &mut dom_rng)?);
    }
    let mut held_rng = rng.substream(0x4845_4C44); // held-out stream tag
    let recipe = heldout_recipe(cfg, n_domains, &mut held_rng);
    let heldout = generate_domain(cfg, n_domains as u64, &recipe, per_domain, &mut held_rng)?;
    Ok((training, heldout))
}

/// One directory per domain: `schema.txt` plus `samples.bin`.
pub fn save_dataset(ds: &DomainDataset, dir: &Path) -> Result<()> {
    ds.validate()?;
    std::fs::create_dir_all(dir)?;
    let first = &ds.samples[0];
    let ishape = first.image.shape();
    let dshape = first.depth.shape();
    let mut schema = String::new();
    writeln!(schema, "version={SCHEMA_VERSION}").unwrap();
    writeln!(schema, "domain_id={}", ds.domain_id).unwrap();
    writeln!(schema, "n_samples={}", ds.samples.len()).unwrap();
    writeln!(schema, "image_shape={},{},{}", ishape[0], ishape[1], ishape[2]).unwrap();
    writeln!(schema, "depth_shape={},{}", dshape[0], dshape[1]).unwrap();
    writeln!(schema, "recipe={}", ds.recipe).unwrap();
    std::fs::write(dir.join("schema.txt"), schema)?;
    let mut w = Writer::new();
    w.bytes(BLOB_MAGIC);
    for s in &ds.samples {
        if s.image.shape() != ishape || s.depth.shape() != dshape {
            return Err(Error::Schema("inconsistent sample shapes".to_string()));
        }
        w.u8(s.label);
        for &v in s.image.data() {
            w.f64(v);
        }
        for &v in s.depth.data() {
            w.f64(v);
        }
    }
    std::fs::write(dir.join("samples.bin"), w.finish())?;
    Ok(())
}

fn schema_field<'a>(fields: &'a [(String, String)], key: &str) -> Result<&'a str> {
    fields
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Schema(format!("missing key {key}")))
}

fn parse_usizes(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|e| Error::Schema(format!("bad number {p}: {e}")))
        })
        .collect()
}

pub fn load_dataset(dir: &Path) -> Result<DomainDataset> {
    let schema_path = dir.join("schema.txt");
    if !schema_path.exists() {
        return Err(Error::Schema(format!(
            "{} has no schema.txt",
            dir.display()
        )));
    }
    let schema = std::fs::read_to_string(&schema_path)?;
    let fields: Vec<(String, String)> = schema
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (k, v) = l.split_once('=').ok_or_else(|| {
                Error::Schema(format!("malformed schema line: {l}"))
            })?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect::<Result<_>>()?;
    let version: u32 = schema_field(&fields, "version")?
        .parse()
        .map_err(|e| Error::Schema(format!("bad version: {e}")))?;
    if version != SCHEMA_VERSION {
        return Err(Error::Version(format!("dataset schema version {version}")));
    }
    let domain_id: u64 = schema_field(&fields, "domain_id")?
        .parse()
        .map_err(|e| Error::Schema(format!("bad domain_id: {e}")))?;
    let n_samples: usize = schema_field(&fields, "n_samples")?
        .parse()
        .map_err(|e| Error::Schema(format!("bad n_samples: {e}")))?;
    let ishape = parse_usizes(schema_field(&fields, "image_shape")?)?;
    let dshape = parse_usizes(schema_field(&fields, "depth_shape")?)?;
    if ishape.len() != 3 || dshape.len() != 2 {
        return Err(Error::Schema("bad shape ranks".to_string()));
    }
    let recipe = schema_field(&fields, "recipe").unwrap_or_default().to_string();

    let blob = std::fs::read(dir.join("samples.bin"))?;
    let mut r = Reader::new_checked(&blob)?;
    let magic = r.bytes(8, "magic")?;
    if magic != BLOB_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            msg: "bad magic".into(),
        });
    }
    let ilen: usize = ishape.iter().product();
    let dlen: usize = dshape.iter().product();
    let mut samples = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let label = r.u8(&format!("sample {i} label"))?;
        if label > 1 {
            return Err(Error::Schema(format!("sample {i}: label {label}")));
        }
        let image = Tensor::new(ishape.clone(), r.f64_vec(ilen, "image")?)?;
        let depth = Tensor::new(dshape.clone(), r.f64_vec(dlen, "depth")?)?;
        samples.push(Sample {
            image,
            label,
            depth,
        });
    }
    if !r.done() {
        return Err(Error::Parse {
            offset: r.pos(),
            msg: "trailing bytes after samples".into(),
        });
    }
    let ds = DomainDataset {
        domain_id,
        samples,
        recipe,
    };
    ds.validate()?;
    Ok(ds)
}
