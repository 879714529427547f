//! Gradient-weighted class-activation maps per electrode and per frequency.

mod export;
mod gradcam;

pub use export::{
    decode_map, encode_map, export_maps, heatmap_ppm, hot_color, map_csv, parse_map_csv, parse_ppm,
    topo_csv, MAP_MAGIC,
};
pub use gradcam::{
    classwise_average, explain_sample, gradcam_channel, gradcam_freq, weighted_map,
    ClasswiseAverage, ExplanationMap, MapAxis, ScoreTarget,
};
