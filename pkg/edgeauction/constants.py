
__version__ = '0.3.0'

PKGNAME = 'edgeauction'

SCHEMA_VERSION = 'edgeauction-scenario/1'

# Cloudlet tiers, in hierarchy order
FIELD, SHALLOW, DEEP = 'field', 'shallow', 'deep'
TIERS = (FIELD, SHALLOW, DEEP)

# Link kinds
LAST_MILE, AGGREGATION, BACKHAUL = 'lastmile', 'aggregation', 'backhaul'

# Energy prices are per kWh while frame lengths are in seconds
SECONDS_PER_HOUR = 3600

# Money grid: bid prices are quantized to 1/MONEY_SCALE currency units
MONEY_SCALE = 10**6

# Largest instance the exhaustive solver accepts (total number of bids)
EXHAUSTIVE_MAX_BIDS = 12

# Environment variable with the default output directory
OUTDIR_ENV = 'EDGEAUCTION_OUTDIR'

# Process exit codes
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVALID_SCENARIO = 2
EXIT_BUDGET_EXHAUSTED = 3
EXIT_IO_ERROR = 4
