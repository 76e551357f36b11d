"""Grid-world MAPF engine with a hybrid cooperative / heat-map / escape policy."""
from .core import Action, AgentState, Conflict, EpisodeState, GridMap, apply_action, detect_conflicts, is_success, resolve_step, valid_moves
from .dhm import INF, DhmCache, DistanceHeatMap, compute_dhm
from .policies import FovSpec, PolicyDecision, ScenarioClass, Source, classify, coop_baseline, dhm_greedy, escape_action, is_deadlocked, others_in_fov
from .rde import EpisodeResult, RdeConfig, rde_joint_action, run_episode
from .scenarios import Instance, MapKind, MapSpec, agent_density, generate_instance, generate_warehouse_map, read_instance, read_map, write_instance, write_map

__version__ = "0.1.0"
