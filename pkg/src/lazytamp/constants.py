"""Default geometry for the built-in 2D tabletop domain. Everything here can
be overridden through GeometryConfig / ProblemSpec fields."""

# block extents (blockers are the taller kind; not distinguished logically)
BLOCK_WIDTH = 1.0
BLOCK_HEIGHT = 1.0
BLOCKER_WIDTH = 1.0
BLOCKER_HEIGHT = 3.0

# grasping: a grasp on a block fails while a strictly taller object sits
# within this clearance of either side
REACH_CLEARANCE = 0.6
GRASP_FRACTION = 0.8  # grasps sample within this fraction of the half-width

# placement sampling
PLACEMENT_MARGIN = 0.05  # inset from table edges
SEPARATION = 0.1  # minimum gap between neighbouring objects
PLACEMENT_TRIES = 16  # rejection-sampling attempts per call

# robot
REACH_MIN = -1000.0
REACH_MAX = 1000.0
CARRY_HEIGHT = 10.0  # transit height; objects at least this tall obstruct

# scene generation
TABLE_GAP = 2.0
MIN_TABLE_WIDTH = 10.0
TABLE_WIDTH_PER_OBJECT = 3.0
POISSON_RADIUS = 1.6  # clutter: minimum pairwise centre distance
