//! Field files, report envelopes and run configuration.

mod config;
mod field;
mod report;

pub use config::{
    config_from_str, default_n, load_config, parse_config, AlphaSpec, GridConfig, MassSpec, OutputConfig, OutputFormat, Override, Problem,
    RunConfig, SweepSection, DEFAULT_L,
};

pub use field::{decode_field, encode_field, read_field, read_field_with_meta, write_field, FieldHeader, FieldMeta, FIELD_FORMAT, FIELD_VERSION};
pub use report::{canonical_json, config_hash, ensure_finite, write_report, write_timing, ReportEnvelope, TOOL_NAME};
