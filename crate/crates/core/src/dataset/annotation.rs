//! Ground-truth XML: one `<dataset>` document per video.
//!
//! ```xml
//! <dataset camera="1" video="01" set="01">
//!   <vehicle id="17" make="VW" model="Gol" color="white" year="2012">
//!     <plate string="ATC1189" legible="true" frame="42" x="100" y="200" w="80" h="30"/>
//!     <occurrences frames="42,43,44">
//!       <box frame="43" x="102" y="198" w="80" h="30"/>
//!     </occurrences>
//!   </vehicle>
//! </dataset>
//! ```
//!
//! `set` is optional and defaults to the trailing two digits of `video`.
//! `<box>` children give per-frame plate boxes for occurrences after the
//! first; frames without one reuse the `<plate>` box.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use roxmltree::{Document, Node};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgops::Rect;
use crate::ocr::alphabet;

/// Dataset partition identifier, 1..=5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SetId(pub u8);

impl SetId {
    pub const ALL: [SetId; 5] = [SetId(1), SetId(2), SetId(3), SetId(4), SetId(5)];

    pub fn parse(s: &str) -> Option<SetId> {
        let n: u8 = s.trim().parse().ok()?;
        (1..=5).contains(&n).then_some(SetId(n))
    }
}

impl std::fmt::Display for SetId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:02}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleAnnotation {
    pub vehicle_id: String,
    pub camera_id: u8,
    pub video: String,
    pub set_id: SetId,
    /// First frame in which the plate is annotated.
    pub frame_index: u32,
    /// Uppercase, over A-Z/0-9; possibly shorter than 7 or empty.
    pub plate_string: String,
    pub legible: bool,
    pub plate_box: Rect,
    pub make: String,
    pub model: String,
    pub color: String,
    pub year: String,
    /// All frames the vehicle occurs in, ascending, first one included.
    pub occurrences: Vec<u32>,
    /// Plate boxes for occurrences whose box differs from `plate_box`.
    pub boxes: BTreeMap<u32, Rect>,
}

impl VehicleAnnotation {
    /// Plate box at `frame`, falling back to the first-occurrence box.
    pub fn box_at(&self, frame: u32) -> Rect {
        self.boxes.get(&frame).copied().unwrap_or(self.plate_box)
    }
}

fn line_of(doc: &Document, node: Node) -> u32 {
    doc.text_pos_at(node.range().start).row
}

fn attr<'a>(doc: &Document, node: Node<'a, 'a>, name: &str) -> Result<&'a str> {
    node.attribute(name).ok_or_else(|| Error::Xml {
        line: line_of(doc, node),
        message: format!("<{}> is missing attribute `{name}`", node.tag_name().name()),
    })
}

fn num_attr<N: std::str::FromStr>(doc: &Document, node: Node, name: &str) -> Result<N> {
    let raw = attr(doc, node, name)?;
    raw.trim().parse().map_err(|_| Error::Xml {
        line: line_of(doc, node),
        message: format!("attribute `{name}` is not a number: {raw:?}"),
    })
}

fn rect_attrs(doc: &Document, node: Node) -> Result<Rect> {
    Ok(Rect::new(
        num_attr(doc, node, "x")?,
        num_attr(doc, node, "y")?,
        num_attr(doc, node, "w")?,
        num_attr(doc, node, "h")?,
    ))
}

fn set_from_video(video: &str) -> Option<SetId> {
    let digits: String = video
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect();
    let digits: String = digits.chars().rev().collect();
    if digits.is_empty() {
        return None;
    }
    let n: u32 = digits.parse().ok()?;
    // Two-digit suffix, e.g. "cam1_03" -> 03.
    SetId::parse(&(n % 100).to_string())
}

/// Parses one ground-truth document.
pub fn parse_ground_truth(xml: &str) -> Result<Vec<VehicleAnnotation>> {
    let doc = Document::parse(xml).map_err(|e| Error::Xml {
        line: e.pos().row,
        message: e.to_string(),
    })?;
    let root = doc.root_element();
    if root.tag_name().name() != "dataset" {
        return Err(Error::Xml {
            line: line_of(&doc, root),
            message: format!(
                "root element must be <dataset>, found <{}>",
                root.tag_name().name()
            ),
        });
    }
    let camera: u8 = num_attr(&doc, root, "camera")?;
    if !(camera == 1 || camera == 2) {
        return Err(Error::Xml {
            line: line_of(&doc, root),
            message: format!("camera must be 1 or 2, got {camera}"),
        });
    }
    let video = attr(&doc, root, "video")?.to_string();
    let set_id = match root.attribute("set") {
        Some(s) => SetId::parse(s),
        None => set_from_video(&video),
    }
    .ok_or_else(|| Error::Xml {
        line: line_of(&doc, root),
        message: format!("cannot determine set id (01-05) for video {video:?}"),
    })?;

    let mut out = Vec::new();
    let mut seen_ids = BTreeSet::new();
    for veh in root.children().filter(|n| n.has_tag_name("vehicle")) {
        let vehicle_id = attr(&doc, veh, "id")?.to_string();
        let invalid = |message: String| Error::Annotation {
            entry: vehicle_id.clone(),
            message,
        };
        if !seen_ids.insert(vehicle_id.clone()) {
            return Err(invalid(format!("duplicate vehicle id in video {video}")));
        }
        let plate = veh
            .children()
            .find(|n| n.has_tag_name("plate"))
            .ok_or_else(|| invalid("missing <plate> element".into()))?;
        let plate_string = plate
            .attribute("string")
            .unwrap_or("")
            .trim()
            .to_ascii_uppercase();
        if let Some(bad) = plate_string.chars().find(|c| !alphabet::is_symbol(*c)) {
            return Err(invalid(format!(
                "plate {plate_string:?} contains {bad:?}, outside A-Z/0-9"
            )));
        }
        let legible = match plate.attribute("legible") {
            Some("true") | Some("1") => true,
            Some("false") | Some("0") => false,
            Some(other) => {
                return Err(invalid(format!(
                    "legible must be true/false, got {other:?}"
                )))
            }
            None => !plate_string.is_empty(),
        };
        if legible && plate_string.is_empty() {
            return Err(invalid("legible plate with empty string".into()));
        }
        let frame_index: u32 = num_attr(&doc, plate, "frame")?;
        let plate_box = rect_attrs(&doc, plate)?;
        if plate_box.is_degenerate() || plate_box.x < 0.0 || plate_box.y < 0.0 {
            return Err(invalid(format!("invalid plate box {plate_box:?}")));
        }

        let mut occurrences = vec![frame_index];
        let mut boxes = BTreeMap::new();
        if let Some(occ) = veh.children().find(|n| n.has_tag_name("occurrences")) {
            if let Some(frames) = occ.attribute("frames") {
                for tok in frames.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                    let f: u32 = tok
                        .parse()
                        .map_err(|_| invalid(format!("bad occurrence frame {tok:?}")))?;
                    if f != frame_index {
                        occurrences.push(f);
                    }
                }
            }
            for b in occ.children().filter(|n| n.has_tag_name("box")) {
                let f: u32 = num_attr(&doc, b, "frame")?;
                let r = rect_attrs(&doc, b)?;
                if r.is_degenerate() {
                    return Err(invalid(format!("degenerate box at frame {f}")));
                }
                boxes.insert(f, r);
            }
        }
        let n = occurrences.len();
        occurrences.sort_unstable();
        occurrences.dedup();
        if occurrences.len() != n {
            return Err(invalid("repeated frame index in occurrence list".into()));
        }
        if let Some(f) = boxes.keys().find(|f| occurrences.binary_search(f).is_err()) {
            return Err(invalid(format!(
                "box for frame {f}, which is not an occurrence"
            )));
        }
        boxes.retain(|_, r| *r != plate_box);

        out.push(VehicleAnnotation {
            camera_id: camera,
            video: video.clone(),
            set_id,
            frame_index,
            plate_string,
            legible,
            plate_box,
            make: veh.attribute("make").unwrap_or("").to_string(),
            model: veh.attribute("model").unwrap_or("").to_string(),
            color: veh.attribute("color").unwrap_or("").to_string(),
            year: veh.attribute("year").unwrap_or("").to_string(),
            occurrences,
            boxes,
            vehicle_id,
        });
    }
    Ok(out)
}

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn rect_xml(r: &Rect) -> String {
    format!(
        r#"x="{}" y="{}" w="{}" h="{}""#,
        r.x, r.y, r.width, r.height
    )
}

/// Writes annotations of one video back to the XML schema. All entries
/// must share camera, video and set.
pub fn serialize_ground_truth(
    camera: u8,
    video: &str,
    set_id: SetId,
    vehicles: &[VehicleAnnotation],
) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<dataset camera="{camera}" video="{}" set="{set_id}">"#,
        esc(video)
    );
    for v in vehicles {
        let _ = writeln!(
            s,
            r#"  <vehicle id="{}" make="{}" model="{}" color="{}" year="{}">"#,
            esc(&v.vehicle_id),
            esc(&v.make),
            esc(&v.model),
            esc(&v.color),
            esc(&v.year)
        );
        let _ = writeln!(
            s,
            r#"    <plate string="{}" legible="{}" frame="{}" {}/>"#,
            esc(&v.plate_string),
            v.legible,
            v.frame_index,
            rect_xml(&v.plate_box)
        );
        let frames: Vec<String> = v.occurrences.iter().map(u32::to_string).collect();
        if v.boxes.is_empty() {
            let _ = writeln!(s, r#"    <occurrences frames="{}"/>"#, frames.join(","));
        } else {
            let _ = writeln!(s, r#"    <occurrences frames="{}">"#, frames.join(","));
            for (f, r) in &v.boxes {
                let _ = writeln!(s, r#"      <box frame="{f}" {}/>"#, rect_xml(r));
            }
            let _ = writeln!(s, "    </occurrences>");
        }
        let _ = writeln!(s, "  </vehicle>");
    }
    s.push_str("</dataset>\n");
    s
}
