//! Machine-readable error reports for the error stream.
use reifcal_core::Error as CoreError;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostic {
    pub error: DiagnosticBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticBody {
    /// Stable snake_case category, e.g. `resolution_too_coarse`.
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub details: Value,
}

impl Diagnostic {
    pub fn new(kind: &str, message: String, details: Value) -> Self {
        Diagnostic {
            error: DiagnosticBody {
                kind: kind.into(),
                message,
                details,
            },
        }
    }

    pub fn from_error(err: &anyhow::Error) -> Self {
        let message = format!("{err:#}");
        for cause in err.chain() {
            if let Some(e) = cause.downcast_ref::<CoreError>() {
                let (kind, details) = core_details(e);
                return Diagnostic::new(kind, message, details);
            }
            if cause.downcast_ref::<serde_json::Error>().is_some() || cause.downcast_ref::<csv::Error>().is_some() {
                return Diagnostic::new("parse", message, Value::Null);
            }
            if let Some(e) = cause.downcast_ref::<std::io::Error>() {
                return Diagnostic::new("io", message, json!({ "io_kind": format!("{:?}", e.kind()) }));
            }
        }
        Diagnostic::new("invalid_input", message, Value::Null)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("diagnostics serialize")
    }
}

fn core_details(e: &CoreError) -> (&'static str, Value) {
    match e {
        CoreError::DimensionMismatch { expected, found, context } => (
            "dimension_mismatch",
            json!({ "expected": expected, "found": found, "context": context }),
        ),
        CoreError::InvalidParameter(msg) => ("invalid_parameter", json!({ "reason": msg })),
        CoreError::EmptySet => ("empty_set", Value::Null),
        CoreError::DegenerateFit { points, needed, .. } => ("degenerate_fit", json!({ "points": points, "needed": needed })),
        CoreError::ResolutionTooCoarse { scale, floor, resolution } => (
            "resolution_too_coarse",
            json!({ "scale": scale, "floor": floor, "resolution": resolution }),
        ),
        CoreError::BallEscapesDomain { radius } => ("ball_escapes_domain", json!({ "radius": radius })),
        CoreError::UnderResolved { cells, needed } => ("under_resolved", json!({ "cells": cells, "needed": needed })),
        CoreError::GluePrecondition { ball, center, distance } => (
            "glue_precondition",
            json!({ "ball": ball, "center": center, "distance": distance }),
        ),
        CoreError::PerturbationTooLarge { measured, epsilon } => (
            "perturbation_too_large",
            json!({ "measured": measured, "epsilon": epsilon }),
        ),
    }
}
