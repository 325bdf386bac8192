//! A YANG-inspired schema language, instance data trees, path-based
//! selection, and a deterministic digital-twin synchronization simulator
//! for comparing filtered and full-tree IIoT data collection.

pub mod datatree;
pub mod ingest;
pub mod pathsel;
pub mod schema;
pub mod twinsync;
pub mod value;

pub use datatree::{diff, DataError, DataNode, DataTree, LeafPath, LeafRef, Timestamp, UpdateOutcome};
pub use pathsel::{
    bind, evaluate, kpi_airquality, parse_path, parse_selection, project, BoundPath,
    BoundSelection, PathExpr, SelectionSet,
};
pub use schema::{is_identifier, parse_schema, print_schema, SchemaError, SchemaModule, SchemaNode};
pub use value::{Decimal, LeafType, Value, ValueKind};
