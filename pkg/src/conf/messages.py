EMPTY_SAMPLE = "empty sample"
UNBOUNDED_COST = "unbounded cost"
COST_SHAPE_MISMATCH = "cost table shape {actual} does not match support {expected}"
UNKNOWN_COST = "unknown cost '{name}'"
NON_POSITIVE_EPSILON = "epsilon must be positive"
RAGGED_ROWS = "ragged rows at record {index}"
NON_NUMERIC_CELL = "non-numeric cell at record {index}"
UNSUPPORTED_FORMAT = "unsupported sample format '{fmt}'"
UNDECODABLE_FILE = "cannot decode '{path}' as UTF-8"
MALFORMED_CSV = "malformed CSV in '{path}': {detail}"
MIXED_DIMENSIONS = "all points must share one dimension"
WEIGHTS_NOT_NORMALIZED = "weights must be nonnegative and sum to 1"
ATOMS_WEIGHTS_MISMATCH = "atoms and weights must have equal length"
UNKNOWN_GENERATOR = "unknown generator '{name}'"
INVALID_SAMPLE_SIZE = "sample size must be at least 1"

NUMERIC_FAILURE = "numeric failure"
NON_POSITIVE_TOLERANCE = "tol must be positive"
NON_OPTIMAL_POTENTIALS = "non-optimal potentials"
SUPPORT_MISMATCH = "measure supports do not match cost table dimensions"
NON_FINITE_ETA = "evaluation function must be finite everywhere"
MAP_REQUIRES_COORDINATES = "map requires coordinate data"

RHS_NOT_CENTERED = "rhs not centered"
SINGULAR_SYSTEM = "singular operator system"
INVALID_SIDE = "side must be 'P' or 'Q'"
INVALID_N_MODE = "N must be a nonnegative integer, 'auto' or 'direct'"

INVALID_LEVEL = "level must lie in (0, 1)"
NEGATIVE_VARIANCE = "variance must be nonnegative"
UNSORTED_THRESHOLDS = "thresholds must be finite and sorted ascending"
INVALID_ETA_SPEC = "invalid eta spec '{spec}'"
ETA_SHAPE_MISMATCH = "eta table shape {actual} does not match support {expected}"
UNKNOWN_KERNEL_MAP = "unknown kernel map '{name}'"

INVALID_POPULATION = "population weights must be strictly positive and lambda in (0, 1)"
UNKNOWN_TARGET = "unknown target '{name}'"
UNKNOWN_FIXTURE = "unknown fixture '{name}'"
CSV_ETA_IN_SIMULATION = "eta tables from CSV files cannot be used with resampled supports"
CONFIG_SCHEMA_VIOLATION = "config schema violation: {keys}"
MISSING_TARGET_OPTION = "target '{target}' requires --{option}"
INVALID_NUMBER_LIST = "expected comma-separated numbers, got '{text}'"

SERVICE_HEALTHY = "Entropic inference service is up"
RATE_LIMIT_EXCEEDED = "Rate limit exceeded. Try again later."
