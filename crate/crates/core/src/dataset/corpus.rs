//! A loaded dataset: ground-truth documents plus access to their frames.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgops::load_rgb8;
use crate::scalar::Scalar;

use super::annotation::{parse_ground_truth, SetId, VehicleAnnotation};
use super::patch::{
    extract_plate_patch, extract_shape_patch, PatchSource, PlatePatch, ShapeExpansion, ShapePatch,
};

/// Something that can produce the frame `frame` of video `video`.
pub trait FrameSource: Sync {
    fn frame(&self, video: &str, frame: u32) -> Result<RgbImage>;
}

/// Frames stored as `<root>/<video>/<frame>.png`.
#[derive(Debug, Clone)]
pub struct DirFrames {
    pub root: PathBuf,
}

impl DirFrames {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, video: &str, frame: u32) -> PathBuf {
        self.root.join(video).join(format!("{frame}.png"))
    }
}

impl FrameSource for DirFrames {
    fn frame(&self, video: &str, frame: u32) -> Result<RgbImage> {
        load_rgb8(&self.path(video, frame))
    }
}

/// Annotations of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub name: String,
    pub camera: u8,
    pub set_id: SetId,
    pub vehicles: Vec<VehicleAnnotation>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub videos: Vec<Video>,
}

/// Per-set counts in the layout of the dataset summary table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetStats {
    pub set_id: SetId,
    pub cam1_vehicles: usize,
    pub cam1_plates: usize,
    pub cam2_vehicles: usize,
    pub cam2_plates: usize,
    /// Vehicle ids seen by both cameras.
    pub matchings: usize,
}

impl Corpus {
    /// Loads every `*.xml` file directly under `dir`, in file-name order.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "xml"))
            .collect();
        paths.sort();
        let mut corpus = Corpus::default();
        for p in paths {
            let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            corpus.add_document(&text)?;
        }
        Ok(corpus)
    }

    pub fn add_document(&mut self, xml: &str) -> Result<()> {
        let vehicles = parse_ground_truth(xml)?;
        let Some(first) = vehicles.first() else {
            return Ok(());
        };
        self.videos.push(Video {
            name: first.video.clone(),
            camera: first.camera_id,
            set_id: first.set_id,
            vehicles,
        });
        Ok(())
    }

    /// Vehicles of one camera within one set, across all of its videos.
    pub fn vehicles(&self, set_id: SetId, camera: u8) -> Vec<&VehicleAnnotation> {
        self.videos
            .iter()
            .filter(|v| v.set_id == set_id && v.camera == camera)
            .flat_map(|v| &v.vehicles)
            .collect()
    }

    pub fn has_set(&self, set_id: SetId) -> bool {
        self.videos.iter().any(|v| v.set_id == set_id)
    }

    pub fn stats(&self) -> Vec<SetStats> {
        SetId::ALL
            .iter()
            .filter(|s| self.has_set(**s))
            .map(|&set_id| {
                let c1 = self.vehicles(set_id, 1);
                let c2 = self.vehicles(set_id, 2);
                let ids2: std::collections::HashSet<&str> =
                    c2.iter().map(|v| v.vehicle_id.as_str()).collect();
                SetStats {
                    set_id,
                    cam1_vehicles: c1.len(),
                    cam1_plates: c1.iter().filter(|v| v.legible).count(),
                    cam2_vehicles: c2.len(),
                    cam2_plates: c2.iter().filter(|v| v.legible).count(),
                    matchings: c1
                        .iter()
                        .filter(|v| ids2.contains(v.vehicle_id.as_str()))
                        .count(),
                }
            })
            .collect()
    }
}

/// Shape and plate patch of one vehicle occurrence. Illegible plates give a
/// blank plate patch.
pub fn extract_occurrence<T: Scalar>(
    frame: &RgbImage,
    annotation: &VehicleAnnotation,
    frame_index: u32,
    expand: &ShapeExpansion,
) -> Result<(ShapePatch<T>, PlatePatch<T>)> {
    let shape = extract_shape_patch(frame, annotation, frame_index, expand)?;
    let plate = if annotation.legible {
        extract_plate_patch(frame, annotation.box_at(frame_index), shape.source.clone())?
    } else {
        PlatePatch::blank(shape.source.clone())
    };
    Ok((shape, plate))
}

/// Patches of one occurrence, shared between every pair that uses it.
#[derive(Debug, Clone)]
pub struct Occurrence<T> {
    pub shape: Arc<ShapePatch<T>>,
    pub plate: Arc<PlatePatch<T>>,
}

/// Extracted patches keyed by `(vehicle, camera, frame)`.
#[derive(Debug, Clone)]
pub struct PatchBank<T> {
    patches: HashMap<PatchSource, Occurrence<T>>,
}

impl<T: Scalar> Default for PatchBank<T> {
    fn default() -> Self {
        Self {
            patches: HashMap::new(),
        }
    }
}

impl<T: Scalar> PatchBank<T> {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn get(&self, source: &PatchSource) -> Result<&Occurrence<T>> {
        self.patches
            .get(source)
            .ok_or_else(|| Error::Missing(format!("no patch for {source:?}")))
    }

    pub fn insert(&mut self, shape: ShapePatch<T>, plate: PlatePatch<T>) {
        self.patches.insert(
            shape.source.clone(),
            Occurrence {
                shape: Arc::new(shape),
                plate: Arc::new(plate),
            },
        );
    }

    /// Extracts the listed occurrences of `set_id` that are not yet present.
    pub fn fill(
        &mut self,
        corpus: &Corpus,
        set_id: SetId,
        wanted: &[PatchSource],
        frames: &dyn FrameSource,
        expand: &ShapeExpansion,
    ) -> Result<()> {
        let mut index: BTreeMap<(u8, &str), (&str, &VehicleAnnotation)> = BTreeMap::new();
        for video in corpus.videos.iter().filter(|v| v.set_id == set_id) {
            for a in &video.vehicles {
                index.insert(
                    (video.camera, a.vehicle_id.as_str()),
                    (video.name.as_str(), a),
                );
            }
        }
        for src in wanted {
            if self.patches.contains_key(src) {
                continue;
            }
            let (video, ann) = index
                .get(&(src.camera_id, src.vehicle_id.as_str()))
                .ok_or_else(|| {
                    Error::Missing(format!(
                        "vehicle {} not in set {set_id} camera {}",
                        src.vehicle_id, src.camera_id
                    ))
                })?;
            let frame = frames.frame(video, src.frame_index)?;
            let (shape, plate) = extract_occurrence(&frame, ann, src.frame_index, expand)?;
            self.insert(shape, plate);
        }
        Ok(())
    }

    pub fn values(&self) -> impl Iterator<Item = &Occurrence<T>> {
        self.patches.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC1: &str = r#"<dataset camera="1" video="cam1_01">
  <vehicle id="a"><plate string="ABC1234" frame="1" x="10" y="40" w="20" h="8"/><occurrences frames="1,2"/></vehicle>
  <vehicle id="b"><plate string="" legible="false" frame="3" x="10" y="40" w="20" h="8"/><occurrences frames="3"/></vehicle>
</dataset>"#;
    const DOC2: &str = r#"<dataset camera="2" video="cam2_01">
  <vehicle id="a"><plate string="ABC1234" frame="5" x="10" y="40" w="20" h="8"/><occurrences frames="5"/></vehicle>
</dataset>"#;

    struct Flat;
    impl FrameSource for Flat {
        fn frame(&self, _: &str, _: u32) -> Result<RgbImage> {
            Ok(RgbImage::from_pixel(64, 64, image::Rgb([128, 64, 32])))
        }
    }

    #[test]
    fn stats_count_plates_and_matchings() {
        let mut c = Corpus::default();
        c.add_document(DOC1).unwrap();
        c.add_document(DOC2).unwrap();
        let s = c.stats();
        assert_eq!(s.len(), 1);
        assert_eq!(
            s[0],
            SetStats {
                set_id: SetId(1),
                cam1_vehicles: 2,
                cam1_plates: 1,
                cam2_vehicles: 1,
                cam2_plates: 1,
                matchings: 1
            }
        );
    }

    #[test]
    fn bank_extracts_and_blanks_illegible() {
        let mut c = Corpus::default();
        c.add_document(DOC1).unwrap();
        let mut bank = PatchBank::<f32>::default();
        let src = |v: &str, f| PatchSource {
            vehicle_id: v.into(),
            camera_id: 1,
            frame_index: f,
        };
        bank.fill(
            &c,
            SetId(1),
            &[src("a", 2), src("b", 3)],
            &Flat,
            &ShapeExpansion::default(),
        )
        .unwrap();
        assert_eq!(bank.len(), 2);
        assert!(bank.get(&src("a", 2)).unwrap().plate.legible);
        let b = bank.get(&src("b", 3)).unwrap();
        assert!(!b.plate.legible);
        assert!(b.plate.pixels.data().iter().all(|&v| v == 0.0));
        assert!(bank
            .fill(
                &c,
                SetId(1),
                &[src("zz", 1)],
                &Flat,
                &ShapeExpansion::default()
            )
            .is_err());
    }
}
