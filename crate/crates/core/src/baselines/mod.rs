//! Comparison clustering methods.

pub mod gower;
pub mod kmeans;

pub use gower::{
    agglomerate, assign_to_clusters, cut_tree, gower_distance_matrix, gower_hclust, GowerScale, Linkage, Merge,
};
pub use kmeans::{kmeans, standardize, KMeansFit, KMeansOptions, Standardizer};
