//! Retinoblastoma imaging pipeline: impulse denoising, multi-view patch CNN
//! segmentation with Bayesian label fusion, pixelwise evaluation, and
//! rule-based group/stage/treatment grading.

pub mod aggregation;
pub mod config;
pub mod grading;
pub mod imaging;
pub mod lpdmf;
pub mod metrics;
pub mod micronet;
pub mod patcher;
pub mod phantom;
pub mod pipeline;
