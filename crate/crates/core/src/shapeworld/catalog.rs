use serde::{Deserialize, Serialize};

pub const CATALOG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassKind {
    Stuff,
    Thing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub id: u16,
    pub name: String,
    pub kind: ClassKind,
    /// Base color in [0,1].
    pub color: [f32; 3],
    /// Half-width of the uniform per-pixel texture noise.
    pub noise: f32,
}

/// The fixed set of classes scenes are drawn from. Class ids are dense,
/// starting at 0, and index the one-hot layout channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassCatalog {
    pub version: u32,
    pub classes: Vec<ClassInfo>,
}

impl Default for ClassCatalog {
    fn default() -> Self {
        let class = |id, name: &str, kind, color, noise| ClassInfo { id, name: name.to_string(), kind, color, noise };
        use ClassKind::{Stuff, Thing};
        Self {
            version: CATALOG_VERSION,
            classes: vec![
                class(0, "sky", Stuff, [0.45, 0.70, 0.95], 0.02),
                class(1, "ground", Stuff, [0.55, 0.45, 0.15], 0.04),
                class(2, "water", Stuff, [0.10, 0.30, 0.60], 0.03),
                class(3, "grass", Stuff, [0.20, 0.70, 0.20], 0.04),
                class(4, "disc", Thing, [0.90, 0.15, 0.15], 0.03),
                class(5, "box", Thing, [0.95, 0.85, 0.15], 0.03),
                class(6, "triangle", Thing, [0.65, 0.25, 0.80], 0.03),
            ],
        }
    }
}

impl ClassCatalog {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn get(&self, id: u16) -> Option<&ClassInfo> {
        self.classes.get(id as usize).filter(|c| c.id == id)
    }

    pub fn is_thing(&self, id: u16) -> bool {
        self.get(id).is_some_and(|c| c.kind == ClassKind::Thing)
    }

    pub fn ids_of(&self, kind: ClassKind) -> Vec<u16> {
        self.classes.iter().filter(|c| c.kind == kind).map(|c| c.id).collect()
    }

    pub fn by_name(&self, name: &str) -> Option<&ClassInfo> {
        self.classes.iter().find(|c| c.name == name)
    }

    /// Smallest Euclidean distance between two base colors.
    pub fn min_palette_distance(&self) -> f32 {
        let mut best = f32::INFINITY;
        for (i, a) in self.classes.iter().enumerate() {
            for b in &self.classes[i + 1..] {
                let d: f32 = a.color.iter().zip(&b.color).map(|(x, y)| (x - y) * (x - y)).sum();
                best = best.min(d.sqrt());
            }
        }
        best
    }
}
