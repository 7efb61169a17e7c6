use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EgoScore, InteractionMap, ObjectScore, PseudoLabelSet, VideoLabels};
use crate::error::{Error, Result};
use crate::format::{self, ArrayEntry, SCHEMA_VERSION};

pub const LABELS_MANIFEST: &str = "labels_manifest.json";
const KIND: &str = "pseudo_labels";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelsManifest {
    pub schema_version: u32,
    pub kind: String,
    pub grid_shape: [usize; 3],
    pub num_object_classes: usize,
    pub entries: Vec<LabelEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelEntry {
    pub video_id: String,
    pub ego: ArrayEntry,
    pub obj: ArrayEntry,
    pub hand_map: ArrayEntry,
    pub object_map: ArrayEntry,
}

pub fn write_labels(set: &PseudoLabelSet, dir: &Path) -> Result<()> {
    let mut entries = Vec::with_capacity(set.entries.len());
    for (id, l) in &set.entries {
        let file = |field: &str| format!("labels/{id}.{field}.f32");
        entries.push(LabelEntry {
            video_id: id.clone(),
            ego: format::write_f32_array(dir, &file("ego"), &l.ego.probs)?,
            obj: format::write_f32_array(dir, &file("obj"), &l.object.probs)?,
            hand_map: format::write_f32_array(dir, &file("hand_map"), &l.interaction.hand_map)?,
            object_map: format::write_f32_array(
                dir,
                &file("object_map"),
                &l.interaction.object_map,
            )?,
        });
    }
    let manifest = LabelsManifest {
        schema_version: SCHEMA_VERSION,
        kind: KIND.into(),
        grid_shape: set.grid_shape,
        num_object_classes: set.num_object_classes,
        entries,
    };
    format::write_manifest(&dir.join(LABELS_MANIFEST), &manifest)
}

pub fn read_labels(dir: &Path) -> Result<PseudoLabelSet> {
    let path = dir.join(LABELS_MANIFEST);
    let m: LabelsManifest = format::read_manifest(&path)?;
    if m.kind != KIND {
        return Err(Error::Malformed {
            path,
            reason: format!("kind {:?} is not {KIND}", m.kind),
        });
    }
    let cells: usize = m.grid_shape.iter().product();
    let mut entries = BTreeMap::new();
    for e in m.entries {
        let check = |what: &str, got: usize, want: usize| -> Result<()> {
            if got == want {
                Ok(())
            } else {
                Err(Error::Malformed {
                    path: path.clone(),
                    reason: format!("{}: {what} has {got} values, expected {want}", e.video_id),
                })
            }
        };
        check("ego", e.ego.len, 2)?;
        check("obj", e.obj.len, m.num_object_classes)?;
        check("hand_map", e.hand_map.len, cells)?;
        check("object_map", e.object_map.len, cells)?;
        let ego = format::read_f32_array(dir, &e.ego)?;
        let labels = VideoLabels {
            ego: EgoScore {
                probs: [ego[0], ego[1]],
            },
            object: ObjectScore {
                probs: format::read_f32_array(dir, &e.obj)?,
            },
            interaction: InteractionMap {
                grid_shape: m.grid_shape,
                hand_map: format::read_f32_array(dir, &e.hand_map)?,
                object_map: format::read_f32_array(dir, &e.object_map)?,
            },
        };
        entries.insert(e.video_id, labels);
    }
    Ok(PseudoLabelSet {
        grid_shape: m.grid_shape,
        num_object_classes: m.num_object_classes,
        entries,
    })
}
