//! Procedural labeled scenes: stuff bands overlaid with disc, box and
//! triangle instances, each region drawn with its own color offset.

mod catalog;
mod edges;
mod io;
pub mod pngio;
mod scene;

pub use catalog::{ClassCatalog, ClassInfo, ClassKind, CATALOG_VERSION};
pub use edges::compute_edge_map;
pub use io::{read_scene, write_scene, CorpusManifest};
pub use scene::{generate_scene, generate_scene_with, min_instance_pixels, LabeledScene, RenderOptions, SUPPORTED_RESOLUTIONS};
