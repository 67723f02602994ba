//! Cross-camera pair generation and the cross-validation split plan.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Corpus, PatchBank, PatchSource, PlatePatch, SetId, ShapePatch};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Occurrence frames of one vehicle in one camera, first occurrence first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VehicleFrames {
    pub vehicle_id: String,
    pub frames: Vec<u32>,
}

impl VehicleFrames {
    pub fn new(vehicle_id: impl Into<String>, frames: Vec<u32>) -> Self {
        Self {
            vehicle_id: vehicle_id.into(),
            frames,
        }
    }
}

/// One row of a pair manifest.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PairRecord {
    pub set_id: SetId,
    pub matching: bool,
    pub veh1: String,
    pub frame1: u32,
    pub veh2: String,
    pub frame2: u32,
}

impl PairRecord {
    pub fn source1(&self) -> PatchSource {
        PatchSource {
            vehicle_id: self.veh1.clone(),
            camera_id: 1,
            frame_index: self.frame1,
        }
    }

    pub fn source2(&self) -> PatchSource {
        PatchSource {
            vehicle_id: self.veh2.clone(),
            camera_id: 2,
            frame_index: self.frame2,
        }
    }
}

fn index_by_id(list: &[VehicleFrames], camera: u8) -> Result<HashMap<&str, &VehicleFrames>> {
    let mut map = HashMap::with_capacity(list.len());
    for v in list {
        if v.frames.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "vehicle {} has no occurrences in camera {camera}",
                v.vehicle_id
            )));
        }
        if map.insert(v.vehicle_id.as_str(), v).is_some() {
            return Err(Error::DuplicateVehicle {
                vehicle: v.vehicle_id.clone(),
                camera,
            });
        }
    }
    Ok(map)
}

/// Every cross-camera pair of one set. Distinct vehicles are paired once,
/// through their first occurrences; a vehicle seen by both cameras yields
/// all `m1 x m2` combinations of its frames.
pub fn build_pairs(
    set_id: SetId,
    cam1: &[VehicleFrames],
    cam2: &[VehicleFrames],
) -> Result<Vec<PairRecord>> {
    index_by_id(cam1, 1)?;
    index_by_id(cam2, 2)?;
    let mut out = Vec::new();
    for a in cam1 {
        for b in cam2 {
            if a.vehicle_id == b.vehicle_id {
                for &f1 in &a.frames {
                    for &f2 in &b.frames {
                        out.push(PairRecord {
                            set_id,
                            matching: true,
                            veh1: a.vehicle_id.clone(),
                            frame1: f1,
                            veh2: b.vehicle_id.clone(),
                            frame2: f2,
                        });
                    }
                }
            } else {
                out.push(PairRecord {
                    set_id,
                    matching: false,
                    veh1: a.vehicle_id.clone(),
                    frame1: a.frames[0],
                    veh2: b.vehicle_id.clone(),
                    frame2: b.frames[0],
                });
            }
        }
    }
    Ok(out)
}

/// Occurrence lists of one camera of a set, optionally keeping only the
/// first `max_frames` occurrences of each vehicle.
pub fn vehicle_frames(
    corpus: &Corpus,
    set_id: SetId,
    camera: u8,
    max_frames: Option<usize>,
) -> Vec<VehicleFrames> {
    corpus
        .vehicles(set_id, camera)
        .into_iter()
        .map(|a| {
            let mut frames = a.occurrences.clone();
            if let Some(k) = max_frames {
                frames.truncate(k.max(1));
            }
            VehicleFrames::new(a.vehicle_id.clone(), frames)
        })
        .collect()
}

pub fn pairs_for_set(
    corpus: &Corpus,
    set_id: SetId,
    max_frames: Option<usize>,
) -> Result<Vec<PairRecord>> {
    if !corpus.has_set(set_id) {
        return Err(Error::Missing(format!("set {set_id}")));
    }
    build_pairs(
        set_id,
        &vehicle_frames(corpus, set_id, 1, max_frames),
        &vehicle_frames(corpus, set_id, 2, max_frames),
    )
}

/// Keeps every matching pair and a random subset of at most
/// `ratio x matching` non-matching pairs, preserving order.
pub fn subsample_negatives<R: Rng>(
    pairs: &[PairRecord],
    ratio: f64,
    rng: &mut R,
) -> Vec<PairRecord> {
    let negatives: Vec<usize> = (0..pairs.len()).filter(|&i| !pairs[i].matching).collect();
    let positives = pairs.len() - negatives.len();
    let cap = ((positives as f64) * ratio).floor() as usize;
    if cap >= negatives.len() {
        return pairs.to_vec();
    }
    let keep: HashSet<usize> = sample(rng, negatives.len(), cap)
        .into_iter()
        .map(|k| negatives[k])
        .collect();
    pairs
        .iter()
        .enumerate()
        .filter(|(i, p)| p.matching || keep.contains(i))
        .map(|(_, p)| p.clone())
        .collect()
}

pub fn write_manifest<W: Write>(out: W, pairs: &[PairRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["set_id", "label", "veh1", "frame1", "veh2", "frame2"])?;
    for p in pairs {
        w.write_record([
            p.set_id.to_string(),
            u8::from(p.matching).to_string(),
            p.veh1.clone(),
            p.frame1.to_string(),
            p.veh2.clone(),
            p.frame2.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("pair manifest", e))?;
    Ok(())
}

pub fn read_manifest<R: Read>(input: R) -> Result<Vec<PairRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad =
            |what: &str| Error::InvalidArgument(format!("manifest row {}: bad {what}", i + 1));
        if rec.len() != 6 {
            return Err(bad("field count"));
        }
        out.push(PairRecord {
            set_id: SetId::parse(&rec[0]).ok_or_else(|| bad("set_id"))?,
            matching: match &rec[1] {
                "1" => true,
                "0" => false,
                _ => return Err(bad("label")),
            },
            veh1: rec[2].to_string(),
            frame1: rec[3].parse().map_err(|_| bad("frame1"))?,
            veh2: rec[4].to_string(),
            frame2: rec[5].parse().map_err(|_| bad("frame2"))?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRound {
    pub train: [SetId; 2],
    pub validation: SetId,
    pub test: [SetId; 2],
}

impl SplitRound {
    pub fn all_sets(&self) -> [SetId; 5] {
        [
            self.train[0],
            self.train[1],
            self.validation,
            self.test[0],
            self.test[1],
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub rounds: Vec<SplitRound>,
}

/// Round 1 trains on 01 and 02, validates on 03 and tests on 04 and 05;
/// each later round shifts every set by one, wrapping 05 to 01.
pub fn make_split_plan() -> SplitPlan {
    let set = |k: usize| SetId((k % 5) as u8 + 1);
    SplitPlan {
        rounds: (0..5)
            .map(|r| SplitRound {
                train: [set(r), set(r + 1)],
                validation: set(r + 2),
                test: [set(r + 3), set(r + 4)],
            })
            .collect(),
    }
}

/// A labeled pair of camera-1 and camera-2 occurrences.
#[derive(Debug, Clone)]
pub struct PairSample<T> {
    pub shape_a: Arc<ShapePatch<T>>,
    pub shape_b: Arc<ShapePatch<T>>,
    pub plate_a: Arc<PlatePatch<T>>,
    pub plate_b: Arc<PlatePatch<T>>,
    pub matching: bool,
    pub set_id: SetId,
}

impl<T: Scalar> PairSample<T> {
    pub fn from_record(record: &PairRecord, bank: &PatchBank<T>) -> Result<Self> {
        let a = bank.get(&record.source1())?;
        let b = bank.get(&record.source2())?;
        Ok(Self {
            shape_a: a.shape.clone(),
            shape_b: b.shape.clone(),
            plate_a: a.plate.clone(),
            plate_b: b.plate.clone(),
            matching: record.matching,
            set_id: record.set_id,
        })
    }
}

/// Patch sources referenced by `records`, deduplicated.
pub fn referenced_sources(records: &[PairRecord]) -> Vec<PatchSource> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for r in records {
        for s in [r.source1(), r.source2()] {
            if seen.insert(s.clone()) {
                out.push(s);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vf(id: &str, frames: &[u32]) -> VehicleFrames {
        VehicleFrames::new(id, frames.to_vec())
    }

    #[test]
    fn three_by_three_all_covisible() {
        let c1 = [vf("a", &[1]), vf("b", &[2]), vf("c", &[3])];
        let c2 = [vf("a", &[7]), vf("b", &[8]), vf("c", &[9])];
        let p = build_pairs(SetId(1), &c1, &c2).unwrap();
        assert_eq!(p.len(), 9);
        assert_eq!(p.iter().filter(|r| r.matching).count(), 3);
        assert!(p.iter().all(|r| r.matching == (r.veh1 == r.veh2)));
    }

    #[test]
    fn all_frame_combinations_for_a_match() {
        let p = build_pairs(
            SetId(2),
            &[vf("a", &[1, 2, 3, 4])],
            &[vf("a", &[5, 6, 7, 8])],
        )
        .unwrap();
        assert_eq!(p.len(), 16);
        assert!(p.iter().all(|r| r.matching));
    }

    #[test]
    fn no_covisible() {
        let p = build_pairs(SetId(1), &[vf("a", &[1]), vf("b", &[2])], &[vf("c", &[3])]).unwrap();
        assert_eq!(p.len(), 2);
        assert!(p.iter().all(|r| !r.matching));
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let err = build_pairs(SetId(1), &[vf("a", &[1]), vf("a", &[2])], &[]).unwrap_err();
        assert!(matches!(err, Error::DuplicateVehicle { camera: 1, .. }));
        assert!(build_pairs(SetId(1), &[], &[vf("a", &[])]).is_err());
    }

    #[test]
    fn split_plan_rotation() {
        let plan = make_split_plan();
        assert_eq!(plan.rounds.len(), 5);
        assert_eq!(
            plan.rounds[0],
            SplitRound {
                train: [SetId(1), SetId(2)],
                validation: SetId(3),
                test: [SetId(4), SetId(5)]
            }
        );
        assert_eq!(
            plan.rounds[1],
            SplitRound {
                train: [SetId(2), SetId(3)],
                validation: SetId(4),
                test: [SetId(5), SetId(1)]
            }
        );
        for r in &plan.rounds {
            let mut s = r.all_sets().to_vec();
            s.sort();
            assert_eq!(s, SetId::ALL.to_vec());
        }
    }

    #[test]
    fn manifest_round_trip() {
        let p = build_pairs(
            SetId(3),
            &[vf("a", &[1, 2]), vf("x,y", &[4])],
            &[vf("a", &[5])],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_manifest(&mut buf, &p).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("set_id,label,veh1,frame1,veh2,frame2\n03,1,a,1,a,5\n"));
        assert_eq!(read_manifest(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn negative_subsampling_caps_ratio() {
        let c1: Vec<_> = (0..10).map(|i| vf(&i.to_string(), &[i])).collect();
        let c2: Vec<_> = (0..10).map(|i| vf(&i.to_string(), &[i])).collect();
        let p = build_pairs(SetId(1), &c1, &c2).unwrap();
        let s = subsample_negatives(&p, 2.0, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(s.iter().filter(|r| r.matching).count(), 10);
        assert_eq!(s.iter().filter(|r| !r.matching).count(), 20);
        assert_eq!(
            subsample_negatives(&p, 100.0, &mut ChaCha8Rng::seed_from_u64(0)),
            p
        );
    }
}
