//! Seeded synthetic corpus: rendered car rears with 7-character plates,
//! written in the same XML + frame layout as a real dataset.

pub mod font;
pub mod render;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use image::RgbImage;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    extract_plate_patch, serialize_ground_truth, Corpus, FrameSource, PatchSource, SetId,
    VehicleAnnotation,
};
use crate::error::{Error, Result};
use crate::eval::slot_mismatches;
use crate::imgops::Rect;
use crate::ocr::alphabet::class_of;
use crate::ocr::labels::{format_labels, CharLabel};
use crate::ocr::reading::{LETTER_SLOTS, PLATE_SLOTS};
use crate::ocr::OcrSample;
use crate::scalar::Scalar;

use render::{char_box, draw_car, plate_texture, Canvas, ShapeParams, PLATE_TEX_H, PLATE_TEX_W};

pub const MIN_FRAMES: u32 = 5;
pub const MAX_FRAMES: u32 = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    /// Vehicles appearing in each camera.
    pub vehicles_per_camera: usize,
    /// Fraction of camera-1 vehicles that camera 2 also sees.
    pub covisible_fraction: f64,
    pub min_frames: u32,
    pub max_frames: u32,
    /// Vehicle pairs sharing every shape parameter but not the plate.
    pub clone_pairs: usize,
    /// Vehicle pairs whose plates differ in exactly one slot.
    pub hamming_pairs: usize,
    /// Fraction of vehicles whose plate is unreadable.
    pub illegible_fraction: f64,
    /// Uniform pixel noise amplitude on the 0..255 scale.
    pub noise: f64,
    /// Per-frame relative brightness jitter.
    pub brightness_jitter: f64,
    pub frame_width: u32,
    pub frame_height: u32,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            vehicles_per_camera: 50,
            covisible_fraction: 0.85,
            min_frames: 5,
            max_frames: 8,
            clone_pairs: 0,
            hamming_pairs: 0,
            illegible_fraction: 0.0,
            noise: 6.0,
            brightness_jitter: 0.08,
            frame_width: 480,
            frame_height: 360,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(0.0..=1.0).contains(&self.covisible_fraction)
            || !(0.0..=1.0).contains(&self.illegible_fraction)
        {
            return bad("fractions must lie in [0, 1]".into());
        }
        if self.min_frames < MIN_FRAMES
            || self.max_frames > MAX_FRAMES
            || self.min_frames > self.max_frames
        {
            return bad(format!(
                "frames per vehicle must satisfy {MIN_FRAMES} <= min <= max <= {MAX_FRAMES}, got {}..{}",
                self.min_frames, self.max_frames
            ));
        }
        if self.noise < 0.0 || !(0.0..1.0).contains(&self.brightness_jitter) {
            return bad("noise and brightness jitter must be nonnegative (jitter < 1)".into());
        }
        if self.frame_width < 400 || self.frame_height < 300 {
            return bad("frames must be at least 400x300".into());
        }
        Ok(())
    }

    pub fn covisible(&self) -> usize {
        (self.covisible_fraction * self.vehicles_per_camera as f64).round() as usize
    }

    pub fn identities(&self) -> usize {
        2 * self.vehicles_per_camera - self.covisible()
    }
}

/// Placement of one vehicle in one camera's video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Appearance {
    pub video: String,
    pub first_frame: u32,
    pub frames: u32,
    pub scale: f64,
    pub start: (i64, i64),
    pub drift: (i64, i64),
    pub gain: f64,
}

impl Appearance {
    fn plate_size(&self) -> (usize, usize) {
        (
            (PLATE_TEX_W as f64 * self.scale).round() as usize,
            (PLATE_TEX_H as f64 * self.scale).round() as usize,
        )
    }

    /// Plate box at the `k`-th occurrence.
    pub fn plate_box(&self, k: u32) -> Rect {
        let (w, h) = self.plate_size();
        let x = self.start.0 + self.drift.0 * k as i64;
        let y = self.start.1 + self.drift.1 * k as i64;
        Rect::new(x as f64, y as f64, w as f64, h as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthVehicle {
    pub id: String,
    pub set_id: SetId,
    pub plate: String,
    pub legible: bool,
    pub shape: ShapeParams,
    pub texture_seed: u64,
    /// Index 0: camera 1, index 1: camera 2.
    pub appearances: [Option<Appearance>; 2],
}

/// A generated corpus. Frames are rendered on demand from the seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthCorpus {
    pub spec: SynthSpec,
    pub vehicles: Vec<SynthVehicle>,
    pub clone_pairs: Vec<(String, String)>,
    pub hamming_pairs: Vec<(String, String)>,
    #[serde(skip)]
    frame_index: HashMap<String, Vec<(u32, u32, usize)>>,
}

fn mix(seed: u64, a: u64, b: u64, c: u64) -> u64 {
    let mut z = seed
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ c.wrapping_mul(0x1656_67B1_9E37_79F9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const LETTERS: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ";
const DIGITS: &[u8] = b"0123456789";

fn random_plate<R: Rng>(rng: &mut R) -> String {
    (0..PLATE_SLOTS)
        .map(|k| {
            let pool = if k < LETTER_SLOTS { LETTERS } else { DIGITS };
            pool[rng.gen_range(0..pool.len())] as char
        })
        .collect()
}

/// Changes one random slot to another symbol of the same class.
fn hamming_neighbor<R: Rng>(plate: &str, rng: &mut R) -> String {
    let mut chars: Vec<char> = plate.chars().collect();
    let k = rng.gen_range(0..PLATE_SLOTS);
    let pool = if k < LETTER_SLOTS { LETTERS } else { DIGITS };
    loop {
        let c = pool[rng.gen_range(0..pool.len())] as char;
        if c != chars[k] {
            chars[k] = c;
            return chars.into_iter().collect();
        }
    }
}

fn far_from_all(candidate: &str, taken: &[String]) -> bool {
    taken.iter().all(|p| slot_mismatches(candidate, p) >= 2)
}

pub fn video_name(camera: u8, set_id: SetId) -> String {
    format!("cam{camera}_{set_id}")
}

/// Builds a corpus from `spec`. The same spec always yields the same corpus.
pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.vehicles_per_camera;
    let n_cov = spec.covisible();
    let total = spec.identities();

    // cameras seen: co-visible ids first, then camera-1 only, then camera-2 only
    let seen = |i: usize| -> [bool; 2] {
        if i < n_cov {
            [true, true]
        } else if i < n {
            [true, false]
        } else {
            [false, true]
        }
    };
    // round-robin over sets within each group keeps sets balanced
    let set_of = |i: usize| -> SetId {
        let k = if i < n_cov {
            i
        } else if i < n {
            i - n_cov
        } else {
            i - n
        };
        SetId((k % 5) as u8 + 1)
    };

    let mut shapes: Vec<ShapeParams> = (0..total).map(|_| ShapeParams::sample(&mut rng)).collect();
    let mut plates: Vec<Option<String>> = vec![None; total];
    let mut taken: Vec<String> = Vec::new();

    // confusable pairs come from co-visible vehicles of the same set
    let mut free: BTreeMap<SetId, Vec<usize>> = BTreeMap::new();
    for i in 0..n_cov {
        free.entry(set_of(i)).or_default().push(i);
    }
    for list in free.values_mut() {
        list.reverse();
    }
    let mut take_pair = |j: usize, what: &str| -> Result<(usize, usize)> {
        let set = SetId((j % 5) as u8 + 1);
        let list = free.get_mut(&set).filter(|l| l.len() >= 2).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "not enough co-visible vehicles in set {set} for the requested {what} pairs"
            ))
        })?;
        Ok((list.pop().expect("len >= 2"), list.pop().expect("len >= 2")))
    };
    let mut clone_idx = Vec::new();
    for j in 0..spec.clone_pairs {
        let (a, b) = take_pair(j, "clone")?;
        shapes[b] = shapes[a].clone();
        clone_idx.push((a, b));
    }
    let mut hamming_idx = Vec::new();
    for j in 0..spec.hamming_pairs {
        let (a, b) = take_pair(j + spec.clone_pairs, "near-miss plate")?;
        let (pa, pb) = loop {
            let pa = random_plate(&mut rng);
            let pb = hamming_neighbor(&pa, &mut rng);
            if far_from_all(&pa, &taken) && far_from_all(&pb, &taken) {
                break (pa, pb);
            }
        };
        taken.push(pa.clone());
        taken.push(pb.clone());
        plates[a] = Some(pa);
        plates[b] = Some(pb);
        hamming_idx.push((a, b));
    }
    let confusable: std::collections::HashSet<usize> = clone_idx
        .iter()
        .chain(&hamming_idx)
        .flat_map(|&(a, b)| [a, b])
        .collect();
    for p in plates.iter_mut().filter(|p| p.is_none()) {
        let s = loop {
            let s = random_plate(&mut rng);
            if far_from_all(&s, &taken) {
                break s;
            }
        };
        taken.push(s.clone());
        *p = Some(s);
    }
    let legible: Vec<bool> = (0..total)
        .map(|i| confusable.contains(&i) || rng.gen::<f64>() >= spec.illegible_fraction)
        .collect();

    let mut vehicles: Vec<SynthVehicle> = (0..total)
        .map(|i| SynthVehicle {
            id: format!("v{i:04}"),
            set_id: set_of(i),
            plate: plates[i].clone().expect("assigned"),
            legible: legible[i],
            shape: shapes[i].clone(),
            texture_seed: rng.gen(),
            appearances: [None, None],
        })
        .collect();

    // lay out each video: vehicles in random order, consecutive frame ranges
    let (fw, fh) = (spec.frame_width as i64, spec.frame_height as i64);
    for camera in [1u8, 2] {
        let cam_gain = if camera == 1 { 1.0 } else { 0.82 };
        for set_id in SetId::ALL {
            let mut members: Vec<usize> = (0..total)
                .filter(|&i| seen(i)[camera as usize - 1] && set_of(i) == set_id)
                .collect();
            members.shuffle(&mut rng);
            let video = video_name(camera, set_id);
            let mut next_frame = 1u32;
            for i in members {
                let frames = rng.gen_range(spec.min_frames..=spec.max_frames);
                let scale = if camera == 1 {
                    rng.gen_range(0.95..1.1)
                } else {
                    rng.gen_range(0.82..0.98)
                };
                let (pw, ph) = (
                    (PLATE_TEX_W as f64 * scale).round() as i64,
                    (PLATE_TEX_H as f64 * scale).round() as i64,
                );
                let span = (frames - 1) as i64;
                let dy_max = ((fh - 40 - ph - fh / 2) / span.max(1)).clamp(0, 5);
                let drift = (rng.gen_range(-3..=3), rng.gen_range(0..=dy_max));
                let y_hi = (fh - 20 - ph - drift.1 * span).max(fh / 2);
                let y0 = rng.gen_range(fh / 2..=y_hi);
                let x_lo = fw / 2 - pw / 2 - 40 + 3 * span;
                let x_hi = fw / 2 - pw / 2 + 40 - 3 * span;
                let x0 = if x_lo < x_hi {
                    rng.gen_range(x_lo..=x_hi)
                } else {
                    fw / 2 - pw / 2
                };
                vehicles[i].appearances[camera as usize - 1] = Some(Appearance {
                    video: video.clone(),
                    first_frame: next_frame,
                    frames,
                    scale,
                    start: (x0, y0),
                    drift,
                    gain: cam_gain * rng.gen_range(0.95..1.05),
                });
                next_frame += frames + 3;
            }
        }
    }

    let id = |i: usize| vehicles[i].id.clone();
    let clone_pairs = clone_idx.iter().map(|&(a, b)| (id(a), id(b))).collect();
    let hamming_pairs = hamming_idx.iter().map(|&(a, b)| (id(a), id(b))).collect();
    let mut corpus = SynthCorpus {
        spec: spec.clone(),
        vehicles,
        clone_pairs,
        hamming_pairs,
        frame_index: HashMap::new(),
    };
    corpus.rebuild_index();
    Ok(corpus)
}

impl SynthCorpus {
    fn rebuild_index(&mut self) {
        self.frame_index.clear();
        for (vi, v) in self.vehicles.iter().enumerate() {
            for a in v.appearances.iter().flatten() {
                self.frame_index.entry(a.video.clone()).or_default().push((
                    a.first_frame,
                    a.first_frame + a.frames,
                    vi,
                ));
            }
        }
    }

    /// Ground truth as `(file name, XML document)`, one per video.
    pub fn ground_truth(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for camera in [1u8, 2] {
            for set_id in SetId::ALL {
                let video = video_name(camera, set_id);
                let mut anns: Vec<(u32, VehicleAnnotation)> = self
                    .vehicles
                    .iter()
                    .filter_map(|v| {
                        let a = v.appearances[camera as usize - 1].as_ref()?;
                        (a.video == video).then(|| (a.first_frame, self.annotation(v, camera, a)))
                    })
                    .collect();
                anns.sort_by_key(|(f, _)| *f);
                let anns: Vec<VehicleAnnotation> = anns.into_iter().map(|(_, a)| a).collect();
                out.push((
                    format!("{video}.xml"),
                    serialize_ground_truth(camera, &video, set_id, &anns),
                ));
            }
        }
        out
    }

    fn annotation(&self, v: &SynthVehicle, camera: u8, a: &Appearance) -> VehicleAnnotation {
        let occurrences: Vec<u32> = (0..a.frames).map(|k| a.first_frame + k).collect();
        let boxes = (1..a.frames)
            .map(|k| (a.first_frame + k, a.plate_box(k)))
            .collect();
        VehicleAnnotation {
            vehicle_id: v.id.clone(),
            camera_id: camera,
            video: a.video.clone(),
            set_id: v.set_id,
            frame_index: a.first_frame,
            plate_string: if v.legible {
                v.plate.clone()
            } else {
                String::new()
            },
            legible: v.legible,
            plate_box: a.plate_box(0),
            make: "synthetic".into(),
            model: format!("style-{}", v.shape.light_style),
            color: v.shape.color_name().into(),
            year: String::new(),
            occurrences,
            boxes,
        }
    }

    /// Parses the generated ground truth back, as a real dataset would be.
    pub fn corpus(&self) -> Result<Corpus> {
        let mut c = Corpus::default();
        for (_, xml) in self.ground_truth() {
            c.add_document(&xml)?;
        }
        Ok(c)
    }

    pub fn vehicle(&self, id: &str) -> Option<&SynthVehicle> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    /// Whether both ids belong to the same clone pair (or are the same
    /// clone vehicle).
    pub fn in_clone_group(&self, a: &str, b: &str) -> bool {
        self.clone_pairs
            .iter()
            .any(|(x, y)| (a == x || a == y) && (b == x || b == y))
    }

    pub fn render(&self, video: &str, frame: u32) -> Result<RgbImage> {
        let vi = self
            .frame_index
            .get(video)
            .and_then(|list| list.iter().find(|(lo, hi, _)| (*lo..*hi).contains(&frame)))
            .map(|&(_, _, vi)| vi)
            .ok_or_else(|| Error::Missing(format!("frame {frame} of video {video}")))?;
        let v = &self.vehicles[vi];
        let camera = if video.starts_with("cam1") { 0 } else { 1 };
        let a = v.appearances[camera].as_ref().expect("indexed appearance");
        let k = frame - a.first_frame;
        let mut rng =
            ChaCha8Rng::seed_from_u64(mix(self.spec.seed, vi as u64, camera as u64, frame as u64));

        let (w, h) = (
            self.spec.frame_width as usize,
            self.spec.frame_height as usize,
        );
        let road = if camera == 0 {
            [98.0, 98.0, 104.0]
        } else {
            [86.0, 92.0, 96.0]
        };
        let mut canvas = Canvas::new(w, h, road);
        for y in 0..h {
            let f = 0.8 + 0.3 * y as f32 / h as f32;
            canvas.rect(0.0, y as f64, w as f64, y as f64 + 1.0, road.map(|c| c * f));
        }
        let pb = a.plate_box(k);
        let (pcx, pcy) = pb.center();
        draw_car(&mut canvas, &v.shape, pcx, pcy, a.scale);
        let text = if v.legible { v.plate.as_str() } else { "" };
        let texture = plate_texture(text, &mut ChaCha8Rng::seed_from_u64(v.texture_seed));
        canvas.paste_resized(
            &texture,
            pb.x as i64,
            pb.y as i64,
            pb.width as usize,
            pb.height as usize,
        );

        let gain = a.gain
            * (1.0 + rng.gen_range(-self.spec.brightness_jitter..=self.spec.brightness_jitter));
        Ok(canvas.finish(gain as f32, self.spec.noise as f32, &mut rng))
    }

    /// Character boxes of a vehicle's plate, normalized to the plate box.
    /// Empty for illegible plates.
    pub fn plate_labels(&self, vehicle: &SynthVehicle) -> Vec<CharLabel> {
        if !vehicle.legible {
            return Vec::new();
        }
        vehicle
            .plate
            .chars()
            .enumerate()
            .map(|(i, c)| {
                let (x, y, w, h) = char_box(i);
                CharLabel {
                    class: class_of(c).expect("plate symbols are valid"),
                    cx: (x + w / 2.0) / PLATE_TEX_W as f64,
                    cy: (y + h / 2.0) / PLATE_TEX_H as f64,
                    w: w / PLATE_TEX_W as f64,
                    h: h / PLATE_TEX_H as f64,
                }
            })
            .collect()
    }

    /// Detector training samples from the legible plates of `sets`, using
    /// at most `max_frames` occurrences per vehicle and camera.
    pub fn ocr_samples<T: Scalar>(
        &self,
        sets: &[SetId],
        max_frames: usize,
    ) -> Result<Vec<OcrSample<T>>> {
        let mut out = Vec::new();
        for v in self
            .vehicles
            .iter()
            .filter(|v| v.legible && sets.contains(&v.set_id))
        {
            let labels = self.plate_labels(v);
            for (cam, a) in v.appearances.iter().enumerate() {
                let Some(a) = a else { continue };
                for k in 0..a.frames.min(max_frames as u32) {
                    let frame = self.render(&a.video, a.first_frame + k)?;
                    let src = PatchSource {
                        vehicle_id: v.id.clone(),
                        camera_id: cam as u8 + 1,
                        frame_index: a.first_frame + k,
                    };
                    let patch = extract_plate_patch(&frame, a.plate_box(k), src)?;
                    out.push(OcrSample {
                        pixels: patch.pixels,
                        labels: labels.clone(),
                    });
                }
            }
        }
        Ok(out)
    }

    /// Writes `<video>.xml` files, `frames/<video>/<frame>.png`,
    /// `labels/<video>/<frame>.txt` and `synth.json` under `dir`.
    pub fn write(&self, dir: &Path, with_frames: bool) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, xml) in self.ground_truth() {
            let p = dir.join(name);
            std::fs::write(&p, xml).map_err(|e| Error::io(&p, e))?;
        }
        let meta = dir.join("synth.json");
        std::fs::write(&meta, serde_json::to_string_pretty(self)?)
            .map_err(|e| Error::io(&meta, e))?;
        if !with_frames {
            return Ok(());
        }
        for v in &self.vehicles {
            let labels = format_labels(&self.plate_labels(v));
            for a in v.appearances.iter().flatten() {
                let fdir = dir.join("frames").join(&a.video);
                let ldir = dir.join("labels").join(&a.video);
                std::fs::create_dir_all(&fdir).map_err(|e| Error::io(&fdir, e))?;
                std::fs::create_dir_all(&ldir).map_err(|e| Error::io(&ldir, e))?;
                for k in 0..a.frames {
                    let f = a.first_frame + k;
                    self.render(&a.video, f)?
                        .save(fdir.join(format!("{f}.png")))?;
                    if v.legible {
                        let lp = ldir.join(format!("{f}.txt"));
                        std::fs::write(&lp, &labels).map_err(|e| Error::io(&lp, e))?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Reloads the metadata written by [`SynthCorpus::write`].
    pub fn load(dir: &Path) -> Result<Self> {
        let p = dir.join("synth.json");
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let mut c: SynthCorpus = serde_json::from_str(&text)?;
        c.rebuild_index();
        Ok(c)
    }
}

impl FrameSource for SynthCorpus {
    fn frame(&self, video: &str, frame: u32) -> Result<RgbImage> {
        self.render(video, frame)
    }
}
