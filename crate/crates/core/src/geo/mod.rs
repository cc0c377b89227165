//! Area registry, point-in-polygon, the trajectory store and the reference
//! query executor.

pub mod exec;
pub mod polygon;
pub mod registry;
pub mod schema;
pub mod store;
pub mod value;

pub use exec::{execute, execute_plan, ExecError, ResultTable};
pub use polygon::{locate_in_ring, BBox, LonLat, Polygon, RingLocation};
pub use registry::{point_in_area, AreaRecord, AreaRegistry, RegistryError};
pub use schema::{table_schema, ColumnType, GeometryBinding, TableSchema, TRAJ_DATA, TRAJ_LABELS};
pub use store::{import_plt, StoreError, TrajLabel, TrajPoint, TrajStore};
pub use value::Value;
